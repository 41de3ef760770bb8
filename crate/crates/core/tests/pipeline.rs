use ampbench::channels::{build_channel, random_operation, ChannelSpec, NlaConfig};
use ampbench::ensemble::{
    estimate_from_samples, msd_estimate, read_samples, sample_errors, simulate_records, write_samples, GaussianChain,
    IntegrationGrid, Prior, Task,
};
use ampbench::epr::{distillation_certificate, gaussian_threshold, SIGNIFICANCE_SIGMAS};
use ampbench::nla::nla_msd;
use ampbench::Error;
use proptest::prelude::*;

fn certify(records: &[ampbench::ensemble::SampleRecord], lambda: f64) -> serde_json::Value {
    let task = Task::symmetric(1.0 + lambda, false).unwrap();
    let summary = estimate_from_samples(records, &task, lambda).unwrap();
    let errors = sample_errors(records, &task).unwrap();
    distillation_certificate(&summary).unwrap().to_json(Some(&errors))
}

#[test]
fn identity_samples_sit_on_the_gaussian_threshold() {
    let lambda = 0.4;
    let prior = Prior::new(lambda).unwrap();
    let records = simulate_records(&GaussianChain(vec![]), &prior, 100_000, 17).unwrap();
    let cert = certify(&records, lambda);
    let z = cert["significance"]["gaussian_z"].as_f64().unwrap();
    assert!(z.abs() < 4.0, "identity data {z} standard errors from the threshold");
    assert_eq!(cert["significance"]["beats_gaussian"], false);
    let m = 0.5 * (cert["vbar_x_prob"].as_f64().unwrap() + cert["vbar_p_prob"].as_f64().unwrap());
    assert!((m - gaussian_threshold(lambda)).abs() < 0.02);
}

#[test]
fn nla_samples_beat_the_gaussian_threshold() {
    let lambda = 3.0;
    let cfg = NlaConfig::saturating(1.2, 4).unwrap();
    let channel = build_channel(&ChannelSpec::Nla(cfg), 5).unwrap();
    let prior = Prior::new(lambda).unwrap();
    let records = simulate_records(&channel, &prior, 60_000, 23).unwrap();
    let cert = certify(&records, lambda);
    assert_eq!(cert["significance"]["beats_gaussian"], true, "{cert:#}");

    let exact = nla_msd(&cfg, lambda, 1.0 + lambda).unwrap();
    let p_s = cert["p_s"].as_f64().unwrap();
    let se = cert["standard_errors"]["p_s"].as_f64().unwrap();
    assert!((p_s - exact.p_s).abs() < 4.0 * se, "P_s {p_s} vs {}", exact.p_s);
    let vx = cert["vbar_x_prob"].as_f64().unwrap();
    assert!((vx - exact.vbar_prob).abs() < 0.05);
}

#[test]
fn sampled_estimate_matches_ensemble_integral() {
    let lambda = 0.7;
    let chain = GaussianChain::from_spec(&ChannelSpec::GaussianAmp { gain: 1.6 }).unwrap().unwrap();
    let prior = Prior::new(lambda).unwrap();
    let task = Task::new(1.5, 1.8, false).unwrap();
    let records = simulate_records(&chain, &prior, 80_000, 5).unwrap();
    let est = estimate_from_samples(&records, &task, lambda).unwrap();
    let err = sample_errors(&records, &task).unwrap();
    let exact = msd_estimate(&chain, &task, &prior, &IntegrationGrid::default()).unwrap();
    assert!((est.vbar_x - exact.vbar_x).abs() < 4.0 * err.vbar_x);
    assert!((est.vbar_p - exact.vbar_p).abs() < 4.0 * err.vbar_p);
    assert_eq!(err.p_s, 0.0);
}

#[test]
fn sample_csv_round_trips_and_reports_lines() {
    let prior = Prior::new(1.0).unwrap();
    let records = simulate_records(&GaussianChain(vec![]), &prior, 50, 1).unwrap();
    let mut buf = Vec::new();
    write_samples(&mut buf, &records).unwrap();
    assert_eq!(read_samples(buf.as_slice()).unwrap(), records);

    let mut text = String::from_utf8(buf).unwrap();
    text.push_str("50,0.1,0.2,q,0.3,1\n");
    match read_samples(text.as_bytes()) {
        Err(Error::Parse { line, .. }) => assert_eq!(line, 52),
        other => panic!("expected a parse error, got {other:?}"),
    }
}

#[test]
fn simulation_is_reproducible() {
    let prior = Prior::new(0.5).unwrap();
    let ch = random_operation(6, 2, true, 9).unwrap();
    let a = simulate_records(&ch, &prior, 300, 42).unwrap();
    let b = simulate_records(&ch, &prior, 300, 42).unwrap();
    assert_eq!(a, b);
    assert_ne!(a, simulate_records(&ch, &prior, 300, 43).unwrap());
}

#[test]
fn certificate_needs_heralded_data() {
    let task = Task::symmetric(1.4, false).unwrap();
    assert!(matches!(estimate_from_samples(&[], &task, 0.4), Err(Error::InsufficientData(_))));
}

#[test]
fn grid_refinement_is_stable() {
    let ch = random_operation(14, 3, true, 77).unwrap();
    let prior = Prior::new(0.4).unwrap();
    let task = Task::symmetric(1.4, true).unwrap();
    let coarse = msd_estimate(&ch, &task, &prior, &IntegrationGrid::GaussHermite { order: 48 }).unwrap();
    let fine = msd_estimate(&ch, &task, &prior, &IntegrationGrid::GaussHermite { order: 96 }).unwrap();
    assert!((coarse.vbar_x - fine.vbar_x).abs() < 1e-8);
    assert!((coarse.vbar_p - fine.vbar_p).abs() < 1e-8);
    assert!((coarse.p_s - fine.p_s).abs() < 1e-10);

    let mc = msd_estimate(&ch, &task, &prior, &IntegrationGrid::MonteCarlo { samples: 200_000, seed: 3 }).unwrap();
    assert!((mc.vbar_x - fine.vbar_x).abs() < 0.05 * fine.vbar_x);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn theorem1_holds_for_random_operations(
        seed in any::<u64>(),
        kraus in 1usize..4,
        decreasing in any::<bool>(),
        lambda in 0.2f64..2.0,
        eta_x in 0.3f64..3.0,
        eta_p in 0.3f64..3.0,
        conj in any::<bool>(),
    ) {
        let ch = random_operation(8, kraus, decreasing, seed).unwrap();
        let prior = Prior::new(lambda).unwrap();
        let task = Task::new(eta_x, eta_p, conj).unwrap();
        let s = msd_estimate(&ch, &task, &prior, &IntegrationGrid::default()).unwrap();
        let report = ampbench::bounds::theorem1_margin(&s);
        prop_assert!(report.margin >= -1e-9, "{report:?}");
        prop_assert!(s.p_s <= 1.0 + 1e-10);
    }

    #[test]
    fn significance_never_exceeds_raw_verdict(seed in 0u64..50) {
        let prior = Prior::new(0.4).unwrap();
        let records = simulate_records(&GaussianChain(vec![]), &prior, 400, seed).unwrap();
        let cert = certify(&records, 0.4);
        let raw = cert["verdicts"]["beats_gaussian"].as_bool().unwrap();
        let sig = cert["significance"]["beats_gaussian"].as_bool().unwrap();
        prop_assert!(!sig || raw);
        prop_assert_eq!(cert["significance"]["sigmas"].as_f64().unwrap(), SIGNIFICANCE_SIGMAS);
    }
}
