//! EPR uncertainty, the bridge between ensemble MSDs and bipartite
//! correlations, and entanglement-distillation certificates.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::channels::KrausChannel;
use crate::ensemble::{integrate, IntegrationGrid, MomentSummary, Prior, SampleErrors, Task};
use crate::error::{invalid, Error, Result};
use crate::fock::{self, DensityMatrix, Quadrature, StateVector, C64};
use crate::gaussian::GaussianState;

/// Slack on threshold comparisons.
pub const THRESHOLD_TOL: f64 = 1e-9;
/// Allowed deviation of a state's trace from one.
pub const NORMALIZATION_TOL: f64 = 1e-9;
/// Discarded two-mode squeezed weight `ξ^{2D}` above which a truncation warning is raised.
pub const TMSS_TAIL_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EprValue {
    /// `½[Δ²(x_A − x_B) + Δ²(p_A + p_B)]`, unclamped.
    pub raw: f64,
    /// `min(1, raw)`, further clamped at 0 for estimator-derived values.
    pub delta: f64,
}

impl EprValue {
    fn from_raw(raw: f64) -> Self {
        Self {
            raw,
            delta: raw.clamp(0.0, 1.0),
        }
    }
}

/// `(1 − ξ)² / (1 − ξ²)`.
pub fn epr_tmss(xi: f64) -> Result<f64> {
    if !(0.0..1.0).contains(&xi) {
        return Err(invalid(format!("two-mode squeezing ξ must lie in [0, 1), got {xi}")));
    }
    Ok((1.0 - xi).powi(2) / (1.0 - xi * xi))
}

struct TwoModeMoments {
    xa: f64,
    xb: f64,
    pa: f64,
    pb: f64,
    xa2: f64,
    xb2: f64,
    pa2: f64,
    pb2: f64,
    xaxb: f64,
    papb: f64,
}

impl TwoModeMoments {
    fn collect(dim: usize, expect: impl Fn(&DMatrix<C64>, &DMatrix<C64>) -> Result<f64>) -> Result<Self> {
        let id = DMatrix::<C64>::identity(dim, dim);
        let x = fock::quadrature_matrix(Quadrature::X, dim);
        let p = fock::quadrature_matrix(Quadrature::P, dim);
        let x2 = fock::quadrature_squared_matrix(Quadrature::X, dim);
        let p2 = fock::quadrature_squared_matrix(Quadrature::P, dim);
        Ok(Self {
            xa: expect(&x, &id)?,
            xb: expect(&id, &x)?,
            pa: expect(&p, &id)?,
            pb: expect(&id, &p)?,
            xa2: expect(&x2, &id)?,
            xb2: expect(&id, &x2)?,
            pa2: expect(&p2, &id)?,
            pb2: expect(&id, &p2)?,
            xaxb: expect(&x, &x)?,
            papb: expect(&p, &p)?,
        })
    }

    /// `⟨(x_A − g_x x_B)²⟩` and `⟨(p_A + g_p p_B)²⟩`.
    fn second_moments(&self, gx: f64, gp: f64) -> [f64; 2] {
        [
            self.xa2 + gx * gx * self.xb2 - 2.0 * gx * self.xaxb,
            self.pa2 + gp * gp * self.pb2 + 2.0 * gp * self.papb,
        ]
    }

    fn epr_raw(&self) -> f64 {
        let [sx, sp] = self.second_moments(1.0, 1.0);
        let vx = sx - (self.xa - self.xb).powi(2);
        let vp = sp - (self.pa + self.pb).powi(2);
        0.5 * (vx + vp)
    }
}

fn check_normalized(trace: f64) -> Result<()> {
    if (trace - 1.0).abs() > NORMALIZATION_TOL {
        return Err(invalid(format!(
            "state has trace {trace}; normalize it (and track the weight) before computing EPR uncertainty"
        )));
    }
    Ok(())
}

fn density_moments(j: &DensityMatrix) -> Result<TwoModeMoments> {
    TwoModeMoments::collect(j.dim(), |a, b| Ok(j.expect_product(a, b)?.re))
}

fn vector_moments(psi: &StateVector) -> Result<TwoModeMoments> {
    let d = psi.dim();
    // ⟨ψ|A⊗B|ψ⟩ = tr(Ψ† A Ψ Bᵀ) with Ψ[a, b] = ψ[a·D + b]
    let m = DMatrix::from_fn(d, d, |a, b| psi.amplitudes()[a * d + b]);
    TwoModeMoments::collect(d, |a, b| Ok((m.adjoint() * a * &m * b.transpose()).trace().re))
}

/// EPR uncertainty of a normalized two-mode density matrix.
pub fn epr_uncertainty(j: &DensityMatrix) -> Result<EprValue> {
    if j.modes() != 2 {
        return Err(invalid("EPR uncertainty needs a two-mode state"));
    }
    check_normalized(j.trace())?;
    Ok(EprValue::from_raw(density_moments(j)?.epr_raw()))
}

/// EPR uncertainty of a normalized two-mode pure state.
pub fn epr_uncertainty_pure(psi: &StateVector) -> Result<EprValue> {
    if psi.modes() != 2 {
        return Err(invalid("EPR uncertainty needs a two-mode state"));
    }
    check_normalized(psi.norm_squared())?;
    Ok(EprValue::from_raw(vector_moments(psi)?.epr_raw()))
}

pub fn epr_uncertainty_gaussian(state: &GaussianState) -> Result<EprValue> {
    Ok(EprValue::from_raw(state.epr_variance_sum()?))
}

fn check_matched_gain(summary: &MomentSummary) -> Result<()> {
    let target = 1.0 + summary.lambda;
    let close = |v: f64| (v - target).abs() <= 1e-9 * target;
    if summary.task.conjugate || !close(summary.task.eta_x) || !close(summary.task.eta_p) {
        return Err(Error::Precondition(format!(
            "the MSD-EPR correspondence needs a normal task with η_x = η_p = 1 + λ = {target}; got {:?}",
            summary.task
        )));
    }
    Ok(())
}

/// `Δ = (V̄_x/P_s + V̄_p/P_s)/2 − 1/2` at the matched gain `η = 1 + λ`.
pub fn delta_from_msd(summary: &MomentSummary) -> Result<EprValue> {
    check_matched_gain(summary)?;
    let (vx, vp) = summary.conditional();
    Ok(EprValue::from_raw(0.5 * (vx + vp) - 0.5))
}

/// Average-MSD threshold reachable by Gaussian operations:
/// `(√(1+λ) − 1)²/λ + 1/2`.
pub fn gaussian_threshold(lambda: f64) -> f64 {
    ((1.0 + lambda).sqrt() - 1.0).powi(2) / lambda + 0.5
}

/// Standard errors by which sampled data must clear a threshold for the
/// `significance` verdicts.
pub const SIGNIFICANCE_SIGMAS: f64 = 3.0;

/// Physical floor on the average MSD.
pub const PHYSICAL_THRESHOLD: f64 = 0.5;
/// Average MSD below which an operation cannot be entanglement breaking.
pub const EB_THRESHOLD: f64 = 1.5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Thresholds {
    pub physical: f64,
    pub gaussian: f64,
    pub eb: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Verdicts {
    pub physical: bool,
    pub beats_gaussian: bool,
    pub beats_eb: bool,
}

/// Signed distances of the average MSD `M` from the thresholds: `2M − 1`
/// (≥ 0 when physical), `M − T_G` and `2M − 3` (< 0 when the respective
/// threshold is beaten).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Margins {
    pub physical: f64,
    pub gaussian: f64,
    pub eb: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Certificate {
    pub summary: MomentSummary,
    pub delta: EprValue,
    pub thresholds: Thresholds,
    pub verdicts: Verdicts,
    pub margins: Margins,
}

impl Certificate {
    /// Average conditional MSD `(V̄_x + V̄_p)/(2P_s)`.
    pub fn average_msd(&self) -> f64 {
        let (vx, vp) = self.summary.conditional();
        0.5 * (vx + vp)
    }

    /// JSON form with keys `p_s, vbar_x_prob, vbar_p_prob, delta_raw, delta,
    /// thresholds, verdicts, lambda`, plus `margins`. With sample errors it
    /// also carries `standard_errors` and verdicts that require the margin to
    /// exceed [`SIGNIFICANCE_SIGMAS`] standard errors.
    pub fn to_json(&self, errors: Option<&SampleErrors>) -> serde_json::Value {
        let (vx, vp) = self.summary.conditional();
        let mut v = json!({
            "p_s": self.summary.p_s,
            "vbar_x_prob": vx,
            "vbar_p_prob": vp,
            "delta_raw": self.delta.raw,
            "delta": self.delta.delta,
            "thresholds": self.thresholds,
            "verdicts": self.verdicts,
            "margins": self.margins,
            "lambda": self.summary.lambda,
        });
        if let Some(e) = errors {
            v["standard_errors"] = json!(e);
            let se = e.average_msd;
            // margins of M in units of its standard error; 2M − 3 has twice the error of M
            v["significance"] = json!({
                "sigmas": SIGNIFICANCE_SIGMAS,
                "gaussian_z": self.margins.gaussian / se,
                "eb_z": self.margins.eb / (2.0 * se),
                "beats_gaussian": self.verdicts.beats_gaussian && self.margins.gaussian < -SIGNIFICANCE_SIGMAS * se,
                "beats_eb": self.verdicts.beats_eb && self.margins.eb < -2.0 * SIGNIFICANCE_SIGMAS * se,
            });
        }
        v
    }
}

/// Distillation certificate at the matched gain `η = 1 + λ`.
///
/// Beating the Gaussian or entanglement-breaking thresholds is only claimed
/// for data that also clear the physical floor.
pub fn distillation_certificate(summary: &MomentSummary) -> Result<Certificate> {
    let delta = delta_from_msd(summary)?;
    let (vx, vp) = summary.conditional();
    let m = 0.5 * (vx + vp);
    let thresholds = Thresholds {
        physical: PHYSICAL_THRESHOLD,
        gaussian: gaussian_threshold(summary.lambda),
        eb: EB_THRESHOLD,
    };
    let margins = Margins {
        physical: 2.0 * m - 1.0,
        gaussian: m - thresholds.gaussian,
        eb: 2.0 * m - 3.0,
    };
    let physical = margins.physical >= -THRESHOLD_TOL;
    let verdicts = Verdicts {
        physical,
        beats_gaussian: physical && margins.gaussian < -THRESHOLD_TOL,
        beats_eb: physical && margins.eb < 0.0,
    };
    Ok(Certificate {
        summary: *summary,
        delta,
        thresholds,
        verdicts,
        margins,
    })
}

/// Outcome of comparing bipartite second moments of `(𝓔 ⊗ I)(ψ_ξ)/P_s` with
/// the ensemble MSD expression they equal.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChoiCheck {
    /// `(tr[(x_A − g_x x_B)² J], tr[(p_A + g_p p_B)² J])`.
    pub lhs: [f64; 2],
    /// `V̄_z/P_s − η_z/(2(1+λ))` on the ensemble with `η_z = (1+λ)g_z²`.
    pub rhs: [f64; 2],
    pub max_abs_diff: f64,
    pub p_s: f64,
    pub lambda: f64,
    /// `ξ^{2D}`, the weight of the squeezed state beyond the truncation.
    pub tail_weight: f64,
    pub truncation_warning: bool,
}

impl ChoiCheck {
    /// `lhs_x · lhs_p − ¼(1 − g_x g_p)²`, nonnegative for every state.
    pub fn uncertainty_margin(&self, gx: f64, gp: f64) -> f64 {
        self.lhs[0] * self.lhs[1] - 0.25 * (1.0 - gx * gp).powi(2)
    }
}

/// Evaluates both sides of the identity linking bipartite quadrature
/// correlations to ensemble MSDs, with `λ = (1 − ξ²)/ξ²`. Conjugation
/// corresponds to `g_p < 0`.
pub fn choi_msd_identity(channel: &KrausChannel, xi: f64, gx: f64, gp: f64, grid: &IntegrationGrid) -> Result<ChoiCheck> {
    if !(xi > 0.0 && xi < 1.0) {
        return Err(invalid(format!("ξ must lie in (0, 1), got {xi}")));
    }
    if gx < 0.0 || !gx.is_finite() || !gp.is_finite() {
        return Err(invalid("g_x must be nonnegative and both gains finite"));
    }
    let d = channel.dim();
    let tail_weight = xi.powi(2 * d as i32);
    let psi = fock::two_mode_squeezed_state(xi, d)?.to_density();
    let (j, p_s) = channel.apply_bipartite(&psi)?;
    if !(p_s > 0.0) {
        return Err(Error::Integration("the operation annihilates the squeezed state".into()));
    }
    let moments = density_moments(&j)?;
    let lhs = moments.second_moments(gx, gp).map(|v| v / p_s);

    let lambda = (1.0 - xi * xi) / (xi * xi);
    let prior = Prior::new(lambda)?;
    let task = Task {
        eta_x: (1.0 + lambda) * gx * gx,
        eta_p: (1.0 + lambda) * gp * gp,
        conjugate: gp < 0.0,
    };
    let ints = integrate(channel, &prior, grid, false)?;
    let rhs = [Quadrature::X, Quadrature::P]
        .map(|q| ints.vbar(&task, q) / ints.p_s - task.gain(q) / (2.0 * (1.0 + lambda)));
    let max_abs_diff = (lhs[0] - rhs[0]).abs().max((lhs[1] - rhs[1]).abs());
    Ok(ChoiCheck {
        lhs,
        rhs,
        max_abs_diff,
        p_s,
        lambda,
        tail_weight,
        truncation_warning: tail_weight > TMSS_TAIL_TOL,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channels::{build_channel, random_operation, ChannelSpec, NlaConfig};
    use crate::gaussian::{apply_to_mode, GaussianChannelSpec};
    use crate::fock::Subsystem;
    use approx::assert_abs_diff_eq;

    fn summary(vx: f64, vp: f64, lambda: f64) -> MomentSummary {
        MomentSummary {
            p_s: 1.0,
            vbar_x: vx,
            vbar_p: vp,
            fidelity: None,
            task: Task::symmetric(1.0 + lambda, false).unwrap(),
            lambda,
        }
    }

    #[test]
    fn tmss_formula() {
        assert_eq!(epr_tmss(0.0).unwrap(), 1.0);
        assert_abs_diff_eq!(epr_tmss(0.5).unwrap(), 1.0 / 3.0, epsilon = 1e-15);
        assert_abs_diff_eq!(epr_tmss(0.99).unwrap(), 0.005025, epsilon = 1e-6);
        assert!(epr_tmss(1.0).is_err());
    }

    #[test]
    fn vacuum_and_tmss_states() {
        let d = 40;
        let vac = fock::tensor(
            &fock::fock_state(0, d).unwrap().to_density(),
            &fock::fock_state(0, d).unwrap().to_density(),
        )
        .unwrap();
        let e = epr_uncertainty(&vac).unwrap();
        assert_abs_diff_eq!(e.raw, 1.0, epsilon = 1e-14);
        assert_eq!(e.delta, 1.0);

        let psi = fock::two_mode_squeezed_state(0.5, d).unwrap();
        let v = epr_uncertainty_pure(&psi).unwrap();
        assert_abs_diff_eq!(v.delta, 1.0 / 3.0, epsilon = 1e-10);
        let dm = epr_uncertainty(&fock::two_mode_squeezed_state(0.5, 20).unwrap().to_density()).unwrap();
        assert_abs_diff_eq!(dm.raw, 1.0 / 3.0, epsilon = 1e-10);
    }

    #[test]
    fn unnormalized_state_rejected() {
        let psi = fock::two_mode_squeezed_state(0.9, 6).unwrap();
        assert!(matches!(epr_uncertainty_pure(&psi), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn filtered_tmss_matches_stronger_squeezing() {
        let (g, xi, n) = (1.2, 0.5, 40);
        let ch = build_channel(&ChannelSpec::Nla(NlaConfig::saturating(g, n).unwrap()), n + 1).unwrap();
        let out = ch
            .apply_bipartite_pure(&fock::two_mode_squeezed_state(xi, n + 1).unwrap())
            .unwrap();
        let norm = out.norm_squared().sqrt();
        let psi = StateVector::new(n + 1, 2, out.amplitudes() / C64::new(norm, 0.0)).unwrap();
        let e = epr_uncertainty_pure(&psi).unwrap();
        assert_abs_diff_eq!(e.delta, 0.25, epsilon = 1e-6);
        assert_abs_diff_eq!(epr_tmss(g * xi).unwrap(), 0.25, epsilon = 1e-15);
    }

    #[test]
    fn bridge_examples() {
        let s = summary(0.5, 0.5, 0.4);
        assert_eq!(delta_from_msd(&s).unwrap().raw, 0.0);
        let s = summary(1.5, 1.5, 0.4);
        let e = delta_from_msd(&s).unwrap();
        assert_abs_diff_eq!(e.raw, 1.0, epsilon = 1e-15);
        assert_eq!(e.delta, 1.0);
        let mut bad = summary(0.5, 0.5, 0.4);
        bad.task = Task::symmetric(1.3, false).unwrap();
        assert!(matches!(delta_from_msd(&bad), Err(Error::Precondition(_))));
        bad.task = Task::symmetric(1.4, true).unwrap();
        assert!(matches!(delta_from_msd(&bad), Err(Error::Precondition(_))));
    }

    #[test]
    fn identity_certificate() {
        let lambda: f64 = 0.4;
        let m = gaussian_threshold(lambda);
        assert_abs_diff_eq!(m, 0.583920, epsilon = 1e-6);
        let c = distillation_certificate(&summary(m, m, lambda)).unwrap();
        assert!(c.verdicts.physical);
        assert!(!c.verdicts.beats_gaussian);
        assert!(c.verdicts.beats_eb);
        assert_abs_diff_eq!(c.delta.raw, epr_tmss((1.0 / 1.4f64).sqrt()).unwrap(), epsilon = 1e-12);
        let v = c.to_json(None);
        for key in ["p_s", "vbar_x_prob", "vbar_p_prob", "delta_raw", "delta", "thresholds", "verdicts", "lambda"] {
            assert!(v.get(key).is_some(), "{key}");
        }
        assert_eq!(v["verdicts"]["beats_eb"], true);
    }

    #[test]
    fn unphysical_data_flagged() {
        let c = distillation_certificate(&summary(0.4, 0.4, 0.4)).unwrap();
        assert!(!c.verdicts.physical);
        assert!(!c.verdicts.beats_gaussian && !c.verdicts.beats_eb);
    }

    #[test]
    fn thresholds_ordered() {
        for i in 1..200 {
            let lambda = 0.05 * i as f64;
            let t = gaussian_threshold(lambda);
            assert!((PHYSICAL_THRESHOLD..=EB_THRESHOLD).contains(&t));
        }
    }

    #[test]
    fn choi_identity_on_identity_and_random() {
        let grid = IntegrationGrid::default();
        let id = build_channel(&ChannelSpec::Identity, 14).unwrap();
        let c = choi_msd_identity(&id, 0.6, 1.0, 1.0, &grid).unwrap();
        assert!(c.max_abs_diff < 1e-6, "{c:?}");
        let rnd = random_operation(12, 3, true, 7).unwrap();
        let c = choi_msd_identity(&rnd, 0.5, 1.0, 1.0, &grid).unwrap();
        assert!(c.max_abs_diff < 1e-6, "{c:?}");
        assert!(c.uncertainty_margin(1.0, 1.0) >= -1e-9);
        let c = choi_msd_identity(&rnd, 0.5, 0.8, -1.3, &grid).unwrap();
        assert!(c.max_abs_diff < 1e-6, "{c:?}");
        assert!(c.uncertainty_margin(0.8, -1.3) >= -1e-9);
        assert!(choi_msd_identity(&rnd, 0.99, 1.0, 1.0, &grid).unwrap().truncation_warning);
    }

    #[test]
    fn gaussian_operations_do_not_distill() {
        for xi in [0.3, 0.5, 0.7] {
            let tmss = GaussianState::two_mode_squeezed(xi).unwrap();
            let base = epr_tmss(xi).unwrap();
            for g in [0.5, 1.0, 2.0] {
                let spec = GaussianChannelSpec::quantum_limited(g).unwrap();
                let out = apply_to_mode(&tmss, &spec, Subsystem::A).unwrap();
                assert!(epr_uncertainty_gaussian(&out).unwrap().delta >= base - 1e-7);
            }
            assert_abs_diff_eq!(epr_uncertainty_gaussian(&tmss).unwrap().raw, base, epsilon = 1e-12);
        }
    }
}
