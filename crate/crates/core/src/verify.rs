//! Self-checking suites that cross-validate backends, closed forms and bounds.
//!
//! Every check carries a signed margin that is nonnegative exactly when the
//! check passes, so a report can be scanned for the worst offender.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::bounds::{aup_symmetric_msd, fidelity_margin, gaussian_min_msd, theorem1_margin, MARGIN_TOL};
use crate::channels::{build_channel, measure_prepare_apply, random_operation, ChannelSpec, KrausChannel, NlaConfig};
use crate::ensemble::{
    ensemble_integrals, fidelity_estimate, fock_channel_for_grid, gaussian_amp_msd_closed, msd_estimate,
    GaussianChain, IntegrationGrid, Prior, Task,
};
use crate::epr::{choi_msd_identity, distillation_certificate, epr_tmss, epr_uncertainty_pure, gaussian_threshold};
use crate::error::{invalid, Result};
use crate::fock::{self, Quadrature, C64};
use crate::gaussian::{apply_gaussian_channel, GaussianChannelSpec, GaussianState};
use crate::nla::{nla_msd, nla_optimal_gain};

/// Gauss-Hermite order for channels whose output moments are polynomial in
/// `α`; the rule is exact there and keeps the Fock dimension small.
pub const POLY_GRID: IntegrationGrid = IntegrationGrid::GaussHermite { order: 12 };
/// Tolerance for saturation and cross-backend agreement.
pub const AGREEMENT_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Suite {
    All,
    Theorem1,
    Gaussian,
    Nla,
    Epr,
    Backends,
}

impl Suite {
    pub const INDIVIDUAL: [Suite; 5] = [Suite::Theorem1, Suite::Gaussian, Suite::Nla, Suite::Epr, Suite::Backends];

    pub fn name(self) -> &'static str {
        match self {
            Suite::All => "all",
            Suite::Theorem1 => "theorem1",
            Suite::Gaussian => "gaussian",
            Suite::Nla => "nla",
            Suite::Epr => "epr",
            Suite::Backends => "backends",
        }
    }
}

impl fmt::Display for Suite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Suite {
    type Err = crate::Error;

    fn from_str(s: &str) -> Result<Self> {
        [Suite::All]
            .into_iter()
            .chain(Suite::INDIVIDUAL)
            .find(|suite| suite.name() == s)
            .ok_or_else(|| invalid(format!("unknown suite '{s}'")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    /// Nonnegative iff the check passes.
    pub margin: f64,
    pub passed: bool,
    pub detail: Value,
}

impl Check {
    fn new(name: impl Into<String>, value: f64, margin: f64, detail: Value) -> Self {
        Check {
            name: name.into(),
            value,
            margin,
            passed: margin >= 0.0 && margin.is_finite(),
            detail,
        }
    }

    /// `|value − expected| ≤ tol`.
    pub fn within(name: impl Into<String>, value: f64, expected: f64, tol: f64, detail: Value) -> Self {
        let mut detail = detail;
        detail["expected"] = json!(expected);
        detail["tolerance"] = json!(tol);
        Check::new(name, value, tol - (value - expected).abs(), detail)
    }

    /// `value ≥ floor − slack`.
    pub fn at_least(name: impl Into<String>, value: f64, floor: f64, slack: f64, detail: Value) -> Self {
        let mut detail = detail;
        detail["floor"] = json!(floor);
        Check::new(name, value, value - floor + slack, detail)
    }

    /// `value ≤ ceiling + slack`.
    pub fn at_most(name: impl Into<String>, value: f64, ceiling: f64, slack: f64, detail: Value) -> Self {
        let mut detail = detail;
        detail["ceiling"] = json!(ceiling);
        Check::new(name, value, ceiling - value + slack, detail)
    }

    pub fn truth(name: impl Into<String>, ok: bool, detail: Value) -> Self {
        Check::new(name, if ok { 1.0 } else { 0.0 }, if ok { 0.0 } else { -1.0 }, detail)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteReport {
    pub suite: Suite,
    pub passed: bool,
    pub checks: Vec<Check>,
}

impl SuiteReport {
    fn new(suite: Suite, checks: Vec<Check>) -> Self {
        SuiteReport {
            suite,
            passed: checks.iter().all(|c| c.passed),
            checks,
        }
    }

    pub fn failures(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| !c.passed)
    }

    pub fn worst_margin(&self) -> f64 {
        self.checks.iter().map(|c| c.margin).fold(f64::INFINITY, f64::min)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub seed: u64,
    pub passed: bool,
    pub suites: Vec<SuiteReport>,
}

pub fn run(suite: Suite, seed: u64) -> Result<VerifyReport> {
    let suites = match suite {
        Suite::All => Suite::INDIVIDUAL.iter().map(|&s| run_suite(s, seed)).collect::<Result<Vec<_>>>()?,
        one => vec![run_suite(one, seed)?],
    };
    Ok(VerifyReport {
        seed,
        passed: suites.iter().all(|s| s.passed),
        suites,
    })
}

pub fn run_suite(suite: Suite, seed: u64) -> Result<SuiteReport> {
    let checks = match suite {
        Suite::All => return Err(invalid("'all' is not a single suite")),
        Suite::Theorem1 => theorem1_suite(seed)?,
        Suite::Gaussian => gaussian_suite()?,
        Suite::Nla => nla_suite(seed)?,
        Suite::Epr => epr_suite(seed)?,
        Suite::Backends => backends_suite()?,
    };
    Ok(SuiteReport::new(suite, checks))
}

pub const THEOREM1_CHANNELS: usize = 200;
pub const THEOREM1_DIM: usize = 14;
pub const THEOREM1_LAMBDAS: [f64; 2] = [0.4, 1.0];
pub const THEOREM1_ETAS: [f64; 3] = [0.8, 1.4, 2.5];

/// Parameters of the `i`-th random channel drawn from `seed`.
pub fn random_channel_params(seed: u64, count: usize) -> Vec<(usize, bool, u64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| (rng.random_range(1..=4), rng.random_bool(0.5), rng.random::<u64>()))
        .collect()
}

/// Theorem-1 margins (normal and conjugate at every gain), `F ≤ P_s` and the
/// fidelity limit for one channel at one `λ`.
pub fn theorem1_channel_checks(channel: &KrausChannel, lambda: f64, grid: &IntegrationGrid) -> Result<Vec<Check>> {
    let prior = Prior::new(lambda)?;
    let ints = ensemble_integrals(channel, &prior, grid)?;
    let label = serde_json::to_value(channel.label())?;
    let mut checks = Vec::new();
    for eta in THEOREM1_ETAS {
        for conj in [false, true] {
            let task = Task::symmetric(eta, conj)?;
            let mut summary = ints.summary(&task);
            let report = theorem1_margin(&summary);
            let detail = json!({"channel": label, "lambda": lambda, "eta": eta, "conjugate": conj});
            checks.push(Check::at_least(
                format!("theorem1 λ={lambda} η={eta} conj={conj}"),
                report.margin,
                0.0,
                MARGIN_TOL,
                detail.clone(),
            ));
            summary.fidelity = Some(fidelity_estimate(channel, &task, &prior, grid)?);
            let fid = fidelity_margin(&summary)?;
            checks.push(Check::at_most(
                format!("fidelity ≤ P_s λ={lambda} η={eta} conj={conj}"),
                summary.fidelity.unwrap_or_default(),
                summary.p_s,
                MARGIN_TOL,
                json!({"channel": label, "lambda": lambda, "eta": eta, "conjugate": conj}),
            ));
            checks.push(Check::at_least(
                format!("fidelity bound λ={lambda} η={eta} conj={conj}"),
                fid.margin,
                0.0,
                MARGIN_TOL,
                json!({"channel": label, "ratio": fid.rhs, "bound": fid.lhs}),
            ));
        }
    }
    Ok(checks)
}

fn theorem1_suite(seed: u64) -> Result<Vec<Check>> {
    let grid = IntegrationGrid::default();
    let params = random_channel_params(seed, THEOREM1_CHANNELS);
    let per_channel: Vec<Vec<Check>> = params
        .par_iter()
        .map(|&(kraus, decreasing, ch_seed)| {
            let channel = random_operation(THEOREM1_DIM, kraus, decreasing, ch_seed)?;
            let mut out = Vec::new();
            for lambda in THEOREM1_LAMBDAS {
                out.extend(theorem1_channel_checks(&channel, lambda, &grid)?);
            }
            Ok(out)
        })
        .collect::<Result<_>>()?;
    Ok(per_channel.into_iter().flatten().collect())
}

/// Gain pairs at which the Gaussian amplifier, optionally sandwiched by a
/// squeezer, meets Theorem 1 with equality at `λ = 0.4`.
pub fn saturation_cases() -> Vec<(ChannelSpec, Task)> {
    const R: f64 = 0.3;
    let mut cases = Vec::new();
    for eta in [0.5, 0.8, 2.0, 2.5] {
        let gain = if eta < 1.0 { eta } else { eta / 1.96 };
        let amp = ChannelSpec::GaussianAmp { gain };
        cases.push((amp.clone(), Task::symmetric(eta, false).expect("positive gain")));
        let squeezed = ChannelSpec::SqueezerConjugated {
            inner: Box::new(amp),
            r: R,
        };
        let task = Task::new(eta * (-2.0 * R).exp(), eta * (2.0 * R).exp(), false).expect("positive gains");
        cases.push((squeezed, task));
    }
    cases
}

pub const SATURATION_LAMBDA: f64 = 0.4;

pub fn saturation_check(spec: &ChannelSpec, task: &Task) -> Result<Check> {
    let prior = Prior::new(SATURATION_LAMBDA)?;
    let channel = fock_channel_for_grid(spec, &prior, &POLY_GRID)?;
    let summary = msd_estimate(&channel, task, &prior, &POLY_GRID)?;
    let report = theorem1_margin(&summary);
    let slack = (AGREEMENT_TOL - report.margin).min(report.margin + MARGIN_TOL);
    Ok(Check::new(
        format!("saturation {spec:?} η=({}, {})", task.eta_x, task.eta_p),
        report.margin,
        slack,
        json!({"dim": channel.dim(), "lhs": report.lhs, "rhs": report.rhs, "task": task}),
    ))
}

fn gaussian_suite() -> Result<Vec<Check>> {
    let mut checks: Vec<Check> = saturation_cases()
        .par_iter()
        .map(|(spec, task)| saturation_check(spec, task))
        .collect::<Result<_>>()?;

    // moment backend against the closed form
    let grid = IntegrationGrid::default();
    for gain in [0.5, 1.0, 1.7, 2.5] {
        for lambda in [0.2, 0.4, 1.0] {
            let prior = Prior::new(lambda)?;
            let ints = ensemble_integrals(&GaussianChannelSpec::quantum_limited(gain)?, &prior, &grid)?;
            for eta in [0.8, 1.4, 2.5] {
                let task = Task::symmetric(eta, false)?;
                let closed = gaussian_amp_msd_closed(gain, eta, lambda);
                for q in [Quadrature::X, Quadrature::P] {
                    checks.push(Check::within(
                        format!("closed form G={gain} λ={lambda} η={eta} {q:?}"),
                        ints.vbar(&task, q),
                        closed,
                        1e-9 * closed.max(1.0),
                        json!({}),
                    ));
                }
            }
        }
    }

    // λ → 0: conditional MSDs at G = η approach the added-noise values
    let prior = Prior::new(1e-6)?;
    for gain in [0.6, 1.5, 2.5] {
        let task = Task::symmetric(gain, false)?;
        let s = msd_estimate(&GaussianChannelSpec::quantum_limited(gain)?, &task, &prior, &grid)?;
        checks.push(Check::within(
            format!("AUP limit normal G={gain}"),
            s.vbar_x,
            aup_symmetric_msd(gain, false),
            1e-3,
            json!({}),
        ));
        let task = Task::symmetric(gain, true)?;
        let s = msd_estimate(&GaussianChannelSpec::mp_conjugator(gain)?, &task, &prior, &grid)?;
        checks.push(Check::within(
            format!("AUP limit conjugate G={gain}"),
            s.vbar_p,
            aup_symmetric_msd(gain, true),
            1e-3,
            json!({}),
        ));
    }

    checks.push(mp_conjugation_fidelity_check()?);
    Ok(checks)
}

/// Phase-conjugation fidelity of measure-and-prepare at `η = 1` on a nearly
/// flat ensemble.
pub fn mp_conjugation_fidelity_check() -> Result<Check> {
    let (eta, lambda) = (1.0, 1e-6);
    let gain = eta / (1.0f64 + lambda).powi(2);
    let channel = GaussianChannelSpec::mp_conjugator(gain)?;
    let task = Task::symmetric(eta, true)?;
    let prior = Prior::new(lambda)?;
    let f = fidelity_estimate(&channel, &task, &prior, &IntegrationGrid::default())?;
    Ok(Check::within(
        "measure-and-prepare conjugation fidelity",
        f,
        0.5,
        1e-3,
        json!({"eta": eta, "lambda": lambda, "gain": gain}),
    ))
}

fn nla_suite(seed: u64) -> Result<Vec<Check>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut cases: Vec<(NlaConfig, f64, f64)> = (0..12)
        .map(|_| {
            let g = rng.random_range(1.0..1.5);
            let n = rng.random_range(1..=12usize);
            let lambda = rng.random_range(0.2..1.5);
            let eta = rng.random_range(0.5..2.5);
            Ok((NlaConfig::saturating(g, n)?, lambda, eta))
        })
        .collect::<Result<_>>()?;
    cases.push((NlaConfig::saturating(1.2f64.sqrt(), 12)?, 0.4, 1.2));
    cases.push((NlaConfig::saturating(1.4 / 1.7f64.sqrt(), 12)?, 0.4, 1.7));

    let mut checks: Vec<Check> = cases
        .par_iter()
        .map(|(cfg, lambda, eta)| nla_fock_checks(cfg, *lambda, *eta))
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .flatten()
        .collect();

    for (eta, expected) in [(1.2f64, 0.5), (1.7, 0.714286)] {
        let g = nla_optimal_gain(eta, 0.4)?;
        let p = nla_msd(&NlaConfig::saturating(g, 60)?, 0.4, eta)?;
        checks.push(Check::within(
            format!("NLA N=60 η={eta}"),
            p.vbar_prob,
            expected,
            1e-3,
            json!({"g": g}),
        ));
        checks.push(Check::at_most(
            format!("NLA limit beats Gaussian η={eta}"),
            expected,
            gaussian_min_msd(eta, 0.4),
            -1e-3,
            json!({}),
        ));
    }
    Ok(checks)
}

/// Closed-form NLA performance against the Fock simulation of the filter.
pub fn nla_fock_checks(cfg: &NlaConfig, lambda: f64, eta: f64) -> Result<Vec<Check>> {
    let closed = nla_msd(cfg, lambda, eta)?;
    let prior = Prior::new(lambda)?;
    let channel = build_channel(&ChannelSpec::Nla(*cfg), cfg.cutoff + 1)?;
    let task = Task::symmetric(eta, false)?;
    let s = msd_estimate(&channel, &task, &prior, &IntegrationGrid::default())?;
    let (vx, vp) = s.conditional();
    let detail = json!({"g": cfg.g, "N": cfg.cutoff, "lambda": lambda, "eta": eta});
    let tag = format!("g={:.4} N={} λ={:.3} η={:.3}", cfg.g, cfg.cutoff, lambda, eta);
    Ok(vec![
        Check::within(format!("NLA p_s {tag}"), s.p_s, closed.p_s, AGREEMENT_TOL, detail.clone()),
        Check::within(format!("NLA vbar_x {tag}"), vx, closed.vbar_prob, AGREEMENT_TOL, detail.clone()),
        Check::within(format!("NLA vbar_p {tag}"), vp, closed.vbar_prob, AGREEMENT_TOL, detail),
    ])
}

pub const CHOI_DIM: usize = 12;
pub const CHOI_XI: f64 = 0.5;
pub const CHOI_RANDOM: usize = 20;

fn epr_suite(seed: u64) -> Result<Vec<Check>> {
    let grid = IntegrationGrid::default();
    let mut channels = vec![build_channel(&ChannelSpec::Identity, CHOI_DIM)?];
    for (kraus, decreasing, ch_seed) in random_channel_params(seed ^ 0x5eed, CHOI_RANDOM) {
        channels.push(random_operation(CHOI_DIM, kraus, decreasing, ch_seed)?);
    }
    let mut checks: Vec<Check> = channels
        .par_iter()
        .map(|ch| -> Result<Vec<Check>> {
            let label = serde_json::to_value(ch.label())?;
            let mut out = Vec::new();
            for (gx, gp) in [(1.0, 1.0), (1.0, -1.0)] {
                let c = choi_msd_identity(ch, CHOI_XI, gx, gp, &grid)?;
                out.push(Check::at_most(
                    format!("Choi identity g=({gx}, {gp})"),
                    c.max_abs_diff,
                    AGREEMENT_TOL,
                    0.0,
                    json!({"channel": label, "lhs": c.lhs, "rhs": c.rhs}),
                ));
                out.push(Check::at_least(
                    format!("bipartite uncertainty g=({gx}, {gp})"),
                    c.uncertainty_margin(gx, gp),
                    0.0,
                    MARGIN_TOL,
                    json!({"channel": label}),
                ));
            }
            Ok(out)
        })
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .flatten()
        .collect();

    checks.extend(identity_pipeline_checks(0.4)?);
    checks.extend(nla_filtered_checks()?);

    // no Gaussian amplifier beats the Gaussian threshold
    let lambda = 0.4;
    let prior = Prior::new(lambda)?;
    let task = Task::symmetric(1.0 + lambda, false)?;
    for gain in [0.8, 1.0, 1.2, 1.4, 1.7, 2.0] {
        let s = msd_estimate(&GaussianChannelSpec::quantum_limited(gain)?, &task, &prior, &grid)?;
        let cert = distillation_certificate(&s)?;
        checks.push(Check::at_least(
            format!("Gaussian amplifier G={gain} stays above the Gaussian threshold"),
            cert.margins.gaussian,
            0.0,
            MARGIN_TOL,
            json!({"verdicts": cert.verdicts}),
        ));
    }
    Ok(checks)
}

/// Identity channel at the matched gain: equality with the Gaussian threshold
/// and the EPR value of the squeezed state with `ξ² = 1/(1+λ)`.
pub fn identity_pipeline_checks(lambda: f64) -> Result<Vec<Check>> {
    let prior = Prior::new(lambda)?;
    let channel = fock_channel_for_grid(&ChannelSpec::Identity, &prior, &POLY_GRID)?;
    let task = Task::symmetric(1.0 + lambda, false)?;
    let s = msd_estimate(&channel, &task, &prior, &POLY_GRID)?;
    let cert = distillation_certificate(&s)?;
    let xi = (1.0 / (1.0 + lambda)).sqrt();
    Ok(vec![
        Check::within(
            "identity pipeline average MSD at the Gaussian threshold",
            cert.average_msd(),
            gaussian_threshold(lambda),
            AGREEMENT_TOL,
            json!({"lambda": lambda, "dim": channel.dim()}),
        ),
        Check::within(
            "identity pipeline EPR value",
            cert.delta.raw,
            epr_tmss(xi)?,
            AGREEMENT_TOL,
            json!({"xi": xi}),
        ),
        Check::truth("identity pipeline does not beat Gaussian", !cert.verdicts.beats_gaussian, json!(cert.verdicts)),
    ])
}

pub const FILTER_GAIN: f64 = 1.2;
pub const FILTER_XI: f64 = 0.5;
pub const FILTER_CUTOFF: usize = 40;

/// The NLA filter on half of a two-mode squeezed state raises its squeezing
/// from `ξ` to `gξ`, and the ensemble route certifies the same gain.
pub fn nla_filtered_checks() -> Result<Vec<Check>> {
    let cfg = NlaConfig::saturating(FILTER_GAIN, FILTER_CUTOFF)?;
    let dim = FILTER_CUTOFF + 1;
    let channel = build_channel(&ChannelSpec::Nla(cfg), dim)?;
    let psi = fock::two_mode_squeezed_state(FILTER_XI, dim)?;
    let out = channel.apply_bipartite_pure(&psi)?.normalized()?;
    let epr = epr_uncertainty_pure(&out)?;
    let boosted = epr_tmss(FILTER_GAIN * FILTER_XI)?;
    let input = epr_tmss(FILTER_XI)?;

    let lambda = (1.0 - FILTER_XI * FILTER_XI) / (FILTER_XI * FILTER_XI);
    let prior = Prior::new(lambda)?;
    let task = Task::symmetric(1.0 + lambda, false)?;
    let cert = distillation_certificate(&msd_estimate(&channel, &task, &prior, &IntegrationGrid::default())?)?;
    Ok(vec![
        Check::within("NLA-filtered EPR value", epr.raw, boosted, AGREEMENT_TOL, json!({"g": FILTER_GAIN, "xi": FILTER_XI})),
        Check::at_most("NLA filter improves EPR correlations", epr.raw, input, -1e-3, json!({})),
        Check::within(
            "NLA ensemble route matches filtered state",
            cert.delta.raw,
            epr.raw,
            AGREEMENT_TOL,
            json!({"lambda": lambda}),
        ),
        Check::truth("NLA filter beats Gaussian", cert.verdicts.beats_gaussian, json!(cert.to_json(None))),
    ])
}

/// Fock and moment backends on the same ensemble and grid.
pub fn backend_agreement(spec: &ChannelSpec, gaussian: &GaussianChain, lambda: f64) -> Result<Vec<Check>> {
    let prior = Prior::new(lambda)?;
    let fock_ch = fock_channel_for_grid(spec, &prior, &POLY_GRID)?;
    let a = ensemble_integrals(&fock_ch, &prior, &POLY_GRID)?;
    let b = ensemble_integrals(gaussian, &prior, &POLY_GRID)?;
    let mut checks = vec![Check::within(
        format!("backends p_s {spec:?} λ={lambda}"),
        a.p_s,
        b.p_s,
        AGREEMENT_TOL,
        json!({}),
    )];
    for eta in THEOREM1_ETAS {
        for conj in [false, true] {
            let task = Task::symmetric(eta, conj)?;
            for q in [Quadrature::X, Quadrature::P] {
                checks.push(Check::within(
                    format!("backends {spec:?} λ={lambda} η={eta} conj={conj} {q:?}"),
                    a.vbar(&task, q),
                    b.vbar(&task, q),
                    AGREEMENT_TOL,
                    json!({"dim": fock_ch.dim()}),
                ));
            }
        }
    }
    Ok(checks)
}

fn backends_suite() -> Result<Vec<Check>> {
    let cases: Vec<(ChannelSpec, GaussianChain)> = vec![
        (ChannelSpec::Identity, GaussianChain(vec![])),
        (
            ChannelSpec::GaussianAmp { gain: 1.7 },
            GaussianChain(vec![GaussianChannelSpec::quantum_limited(1.7)?]),
        ),
        (
            ChannelSpec::GaussianAttenuator { gain: 0.5 },
            GaussianChain(vec![GaussianChannelSpec::quantum_limited(0.5)?]),
        ),
        (
            ChannelSpec::SqueezerConjugated {
                inner: Box::new(ChannelSpec::GaussianAmp { gain: 1.3 }),
                r: 0.2,
            },
            GaussianChain(vec![
                GaussianChannelSpec::quantum_limited(1.3)?,
                GaussianChannelSpec::squeezer(0.2)?,
            ]),
        ),
    ];
    let mut jobs = Vec::new();
    for (spec, chain) in &cases {
        for lambda in [0.4, 1.0] {
            jobs.push((spec, chain, lambda));
        }
    }
    let mut checks: Vec<Check> = jobs
        .par_iter()
        .map(|(spec, chain, lambda)| backend_agreement(spec, chain, *lambda))
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .flatten()
        .collect();
    checks.extend(measure_prepare_agreement()?);
    Ok(checks)
}

/// Fock measure-and-prepare output against its Gaussian description.
fn measure_prepare_agreement() -> Result<Vec<Check>> {
    let dim = 60;
    let gain = 0.8;
    let mut checks = Vec::new();
    for alpha in [C64::new(0.0, 0.0), C64::new(0.7, -0.4), C64::new(-1.1, 0.9)] {
        let rho = fock::coherent_state(alpha, dim)?.to_density();
        let out = measure_prepare_apply(&rho, gain)?;
        let g = apply_gaussian_channel(&GaussianState::coherent(alpha)?, &GaussianChannelSpec::mp_conjugator(gain)?)?;
        let m = &g.moments()[0];
        for (q, mean, var) in [(Quadrature::X, m.mean_x, m.var_x), (Quadrature::P, m.mean_p, m.var_p)] {
            let first = out.expect(&fock::quadrature_matrix(q, dim))?.re;
            let second = out.expect(&fock::quadrature_squared_matrix(q, dim))?.re;
            checks.push(Check::within(
                format!("measure-and-prepare mean α={alpha} {q:?}"),
                first,
                mean,
                AGREEMENT_TOL,
                json!({}),
            ));
            checks.push(Check::within(
                format!("measure-and-prepare second moment α={alpha} {q:?}"),
                second,
                var + mean * mean,
                AGREEMENT_TOL,
                json!({}),
            ));
        }
    }
    Ok(checks)
}

/// Compact JSON for a report: every check with its margin.
pub fn report_json(report: &VerifyReport) -> Value {
    serde_json::to_value(report).expect("report serializes")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn suite_names_round_trip() {
        for s in [Suite::All].into_iter().chain(Suite::INDIVIDUAL) {
            assert_eq!(s.name().parse::<Suite>().unwrap(), s);
        }
        assert!("bogus".parse::<Suite>().is_err());
    }

    #[test]
    fn check_margins() {
        assert!(Check::within("a", 1.0, 1.0 + 1e-7, 1e-6, json!({})).passed);
        assert!(!Check::within("a", 1.0, 1.1, 1e-6, json!({})).passed);
        assert!(Check::at_least("b", -1e-10, 0.0, 1e-9, json!({})).passed);
        assert!(!Check::at_most("c", 2.0, 1.0, 0.0, json!({})).passed);
        assert!(!Check::new("nan", f64::NAN, f64::NAN, json!({})).passed);
    }

    #[test]
    fn channel_params_are_seeded() {
        assert_eq!(random_channel_params(3, 5), random_channel_params(3, 5));
        assert_ne!(random_channel_params(3, 5), random_channel_params(4, 5));
    }

    #[test]
    fn measure_prepare_backends_agree() {
        for c in measure_prepare_agreement().unwrap() {
            assert!(c.passed, "{c:?}");
        }
    }

    #[test]
    fn small_nla_case_agrees() {
        for c in nla_fock_checks(&NlaConfig::saturating(1.3, 5).unwrap(), 0.6, 1.5).unwrap() {
            assert!(c.passed, "{c:?}");
        }
    }
}
