//! Moment-level calculus for Gaussian states and channels.
//!
//! Quadrature ordering is `(x₁, p₁, x₂, p₂)`; the vacuum covariance is `I/2`.
//! Every single-mode channel here acts as `mean → T·mean`,
//! `cov → T·cov·Tᵀ + N` for a 2×2 pair `(T, N)`.

use nalgebra::{DMatrix, DVector, Matrix2};
use serde::{Deserialize, Serialize};

use crate::error::{ensure_finite, invalid, Error, Result};
use crate::fock::{Subsystem, C64};

pub const SYMMETRY_TOL: f64 = 1e-12;
pub const PHYSICALITY_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct GaussianState {
    modes: usize,
    mean: DVector<f64>,
    cov: DMatrix<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModeMoments {
    pub mean_x: f64,
    pub mean_p: f64,
    pub var_x: f64,
    pub var_p: f64,
}

impl GaussianState {
    pub fn new(mean: DVector<f64>, cov: DMatrix<f64>) -> Result<Self> {
        let n = mean.len();
        if n != 2 && n != 4 {
            return Err(invalid(format!("mean vector must have length 2 or 4, got {n}")));
        }
        if cov.nrows() != n || cov.ncols() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: cov.nrows(),
            });
        }
        if mean.iter().chain(cov.iter()).any(|v| !v.is_finite()) {
            return Err(invalid("Gaussian moments must be finite"));
        }
        let asym = (&cov - cov.transpose()).amax();
        if asym > SYMMETRY_TOL {
            return Err(invalid(format!("covariance not symmetric (defect {asym:e})")));
        }
        let state = Self {
            modes: n / 2,
            mean,
            cov,
        };
        let lowest = state.uncertainty_eigenvalue();
        if lowest < -PHYSICALITY_TOL {
            return Err(invalid(format!(
                "covariance violates the uncertainty principle (eigenvalue {lowest:e})"
            )));
        }
        Ok(state)
    }

    pub fn vacuum() -> Self {
        Self {
            modes: 1,
            mean: DVector::zeros(2),
            cov: DMatrix::identity(2, 2) * 0.5,
        }
    }

    pub fn coherent(alpha: C64) -> Result<Self> {
        ensure_finite("Re α", alpha.re)?;
        ensure_finite("Im α", alpha.im)?;
        let s = std::f64::consts::SQRT_2;
        Ok(Self {
            modes: 1,
            mean: DVector::from_vec(vec![s * alpha.re, s * alpha.im]),
            cov: DMatrix::identity(2, 2) * 0.5,
        })
    }

    pub fn squeezed_vacuum(r: f64) -> Result<Self> {
        apply_gaussian_channel(&Self::vacuum(), &GaussianChannelSpec::squeezer(r)?)
    }

    /// Two-mode squeezed vacuum `√(1−ξ²) Σ ξⁿ|n⟩|n⟩`.
    pub fn two_mode_squeezed(xi: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&xi) {
            return Err(invalid(format!("ξ must lie in [0, 1), got {xi}")));
        }
        let denom = 1.0 - xi * xi;
        let c = 0.5 * (1.0 + xi * xi) / denom;
        let s = xi / denom;
        #[rustfmt::skip]
        let cov = DMatrix::from_row_slice(4, 4, &[
            c, 0.0, s, 0.0,
            0.0, c, 0.0, -s,
            s, 0.0, c, 0.0,
            0.0, -s, 0.0, c,
        ]);
        Ok(Self {
            modes: 2,
            mean: DVector::zeros(4),
            cov,
        })
    }

    pub fn modes(&self) -> usize {
        self.modes
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn cov(&self) -> &DMatrix<f64> {
        &self.cov
    }

    /// Smallest eigenvalue of the Hermitian matrix `cov + (i/2)Ω`.
    pub fn uncertainty_eigenvalue(&self) -> f64 {
        let n = 2 * self.modes;
        let mut h = DMatrix::<C64>::from_fn(n, n, |i, j| C64::new(self.cov[(i, j)], 0.0));
        for m in 0..self.modes {
            let (x, p) = (2 * m, 2 * m + 1);
            h[(x, p)] += C64::new(0.0, 0.5);
            h[(p, x)] -= C64::new(0.0, 0.5);
        }
        h.symmetric_eigenvalues().iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn is_physical(&self) -> bool {
        self.uncertainty_eigenvalue() >= -PHYSICALITY_TOL
    }

    /// Per-mode `(⟨x⟩, ⟨p⟩, Var x, Var p)`.
    pub fn moments(&self) -> Vec<ModeMoments> {
        (0..self.modes)
            .map(|m| ModeMoments {
                mean_x: self.mean[2 * m],
                mean_p: self.mean[2 * m + 1],
                var_x: self.cov[(2 * m, 2 * m)],
                var_p: self.cov[(2 * m + 1, 2 * m + 1)],
            })
            .collect()
    }

    /// `⟨β|ρ|β⟩` for a single-mode state:
    /// `exp(−½ dᵀ(V + I/2)⁻¹d) / √det(V + I/2)` with `d` the mean offset.
    pub fn coherent_overlap(&self, beta: C64) -> Result<f64> {
        if self.modes != 1 {
            return Err(invalid("coherent overlap needs a single-mode state"));
        }
        let s = std::f64::consts::SQRT_2;
        let d = nalgebra::Vector2::new(self.mean[0] - s * beta.re, self.mean[1] - s * beta.im);
        let sigma = Matrix2::new(
            self.cov[(0, 0)] + 0.5,
            self.cov[(0, 1)],
            self.cov[(1, 0)],
            self.cov[(1, 1)] + 0.5,
        );
        let det = sigma.determinant();
        let inv = sigma
            .try_inverse()
            .ok_or_else(|| invalid("singular overlap kernel"))?;
        Ok((-0.5 * d.dot(&(inv * d))).exp() / det.sqrt())
    }

    /// Half the summed variances of `x_A − x_B` and `p_A + p_B`.
    pub fn epr_variance_sum(&self) -> Result<f64> {
        if self.modes != 2 {
            return Err(invalid("EPR variance needs a two-mode state"));
        }
        let c = &self.cov;
        let vx = c[(0, 0)] + c[(2, 2)] - 2.0 * c[(0, 2)];
        let vp = c[(1, 1)] + c[(3, 3)] + 2.0 * c[(1, 3)];
        Ok(0.5 * (vx + vp))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GaussianChannelSpec {
    Identity,
    Amplifier { gain: f64 },
    Attenuator { gain: f64 },
    Squeezer { r: f64 },
    MpConjugator { gain: f64 },
}

impl GaussianChannelSpec {
    pub fn amplifier(gain: f64) -> Result<Self> {
        if !(gain >= 1.0) || !gain.is_finite() {
            return Err(invalid(format!("amplifier gain must be ≥ 1, got {gain}")));
        }
        Ok(Self::Amplifier { gain })
    }

    pub fn attenuator(gain: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&gain) {
            return Err(invalid(format!("attenuator gain must lie in [0, 1], got {gain}")));
        }
        Ok(Self::Attenuator { gain })
    }

    /// Quantum-limited phase-insensitive channel of gain `G ≥ 0`: an attenuator
    /// below unit gain, an amplifier above.
    pub fn quantum_limited(gain: f64) -> Result<Self> {
        if gain < 1.0 {
            Self::attenuator(gain)
        } else {
            Self::amplifier(gain)
        }
    }

    pub fn squeezer(r: f64) -> Result<Self> {
        ensure_finite("squeezing r", r)?;
        Ok(Self::Squeezer { r })
    }

    pub fn mp_conjugator(gain: f64) -> Result<Self> {
        if !(gain >= 0.0) || !gain.is_finite() {
            return Err(invalid(format!("measure-and-prepare gain must be ≥ 0, got {gain}")));
        }
        Ok(Self::MpConjugator { gain })
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            Self::Identity => Ok(()),
            Self::Amplifier { gain } => Self::amplifier(gain).map(|_| ()),
            Self::Attenuator { gain } => Self::attenuator(gain).map(|_| ()),
            Self::Squeezer { r } => Self::squeezer(r).map(|_| ()),
            Self::MpConjugator { gain } => Self::mp_conjugator(gain).map(|_| ()),
        }
    }

    /// `(T, N)` with `mean → T·mean`, `cov → T·cov·Tᵀ + N`.
    pub fn transfer(&self) -> (Matrix2<f64>, Matrix2<f64>) {
        let id = Matrix2::identity();
        match *self {
            Self::Identity => (id, Matrix2::zeros()),
            Self::Amplifier { gain } => (id * gain.sqrt(), id * (0.5 * (gain - 1.0))),
            Self::Attenuator { gain } => (id * gain.sqrt(), id * (0.5 * (1.0 - gain))),
            Self::Squeezer { r } => (Matrix2::new((-r).exp(), 0.0, 0.0, r.exp()), Matrix2::zeros()),
            // heterodyne adds I/2 to the input, the conjugation flips p, and
            // the prepared coherent state contributes another I/2
            Self::MpConjugator { gain } => (
                Matrix2::new(gain.sqrt(), 0.0, 0.0, -gain.sqrt()),
                id * (0.5 * (gain + 1.0)),
            ),
        }
    }
}

pub fn apply_gaussian_channel(state: &GaussianState, spec: &GaussianChannelSpec) -> Result<GaussianState> {
    if state.modes != 1 {
        return Err(invalid("single-mode channel applied to a two-mode state; use apply_to_mode"));
    }
    apply_to_mode(state, spec, Subsystem::A)
}

/// Applies a single-mode channel to one mode of a (one- or two-mode) state.
pub fn apply_to_mode(state: &GaussianState, spec: &GaussianChannelSpec, on: Subsystem) -> Result<GaussianState> {
    spec.validate()?;
    if !state.is_physical() {
        return Err(invalid("input covariance is unphysical"));
    }
    let offset = match on {
        Subsystem::A => 0,
        Subsystem::B if state.modes == 2 => 2,
        Subsystem::B => return Err(invalid("mode B requested on a single-mode state")),
    };
    let n = 2 * state.modes;
    let (t, noise) = spec.transfer();
    let mut full_t = DMatrix::<f64>::identity(n, n);
    let mut full_n = DMatrix::<f64>::zeros(n, n);
    for i in 0..2 {
        for j in 0..2 {
            full_t[(offset + i, offset + j)] = t[(i, j)];
            full_n[(offset + i, offset + j)] = noise[(i, j)];
        }
    }
    let mean = &full_t * &state.mean;
    let cov = &full_t * &state.cov * full_t.transpose() + full_n;
    let cov = (&cov + cov.transpose()) * 0.5;
    Ok(GaussianState {
        modes: state.modes,
        mean,
        cov,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn amplifier_moments() {
        let s = GaussianState::coherent(C64::new(1.0, 0.0)).unwrap();
        assert_abs_diff_eq!(s.mean()[0], 2f64.sqrt(), epsilon = 1e-15);
        let out = apply_gaussian_channel(&s, &GaussianChannelSpec::amplifier(2.0).unwrap()).unwrap();
        let m = out.moments()[0];
        assert_abs_diff_eq!(m.mean_x, 2.0, epsilon = 1e-14);
        assert_abs_diff_eq!(m.mean_p, 0.0, epsilon = 1e-14);
        assert_abs_diff_eq!(m.var_x, 1.5, epsilon = 1e-14);
        assert_abs_diff_eq!(m.var_p, 1.5, epsilon = 1e-14);
    }

    #[test]
    fn identity_leaves_state_unchanged() {
        let s = GaussianState::coherent(C64::new(0.3, -1.2)).unwrap();
        let out = apply_gaussian_channel(&s, &GaussianChannelSpec::Identity).unwrap();
        assert_eq!(out, s);
    }

    #[test]
    fn mp_conjugator_moments() {
        // mean (1, 1) in quadrature units
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let st = GaussianState::coherent(C64::new(s, s)).unwrap();
        let out = apply_gaussian_channel(&st, &GaussianChannelSpec::mp_conjugator(1.0).unwrap()).unwrap();
        let m = out.moments()[0];
        assert_abs_diff_eq!(m.mean_x, 1.0, epsilon = 1e-14);
        assert_abs_diff_eq!(m.mean_p, -1.0, epsilon = 1e-14);
        assert_abs_diff_eq!(m.var_x, 1.5, epsilon = 1e-14);
        assert_abs_diff_eq!(m.var_p, 1.5, epsilon = 1e-14);
    }

    #[test]
    fn extracted_moments() {
        let v = GaussianState::vacuum().moments()[0];
        assert_eq!((v.mean_x, v.mean_p, v.var_x, v.var_p), (0.0, 0.0, 0.5, 0.5));
        let c = GaussianState::coherent(C64::new(1.0, 0.0)).unwrap().moments()[0];
        assert_abs_diff_eq!(c.mean_x, 2f64.sqrt(), epsilon = 1e-15);
        assert_eq!((c.var_x, c.var_p), (0.5, 0.5));
        let sq = GaussianState::squeezed_vacuum(0.2).unwrap().moments()[0];
        assert_abs_diff_eq!(sq.var_x, (-0.4f64).exp() / 2.0, epsilon = 1e-15);
        assert_abs_diff_eq!(sq.var_p, 0.4f64.exp() / 2.0, epsilon = 1e-15);
    }

    #[test]
    fn amplifiers_compose() {
        let st = GaussianState::coherent(C64::new(0.7, -0.4)).unwrap();
        let a1 = GaussianChannelSpec::amplifier(1.3).unwrap();
        let a2 = GaussianChannelSpec::amplifier(2.1).unwrap();
        let two = apply_gaussian_channel(&apply_gaussian_channel(&st, &a2).unwrap(), &a1).unwrap();
        let one = apply_gaussian_channel(&st, &GaussianChannelSpec::amplifier(1.3 * 2.1).unwrap()).unwrap();
        assert!((two.mean() - one.mean()).amax() < 1e-12);
        assert!((two.cov() - one.cov()).amax() < 1e-12);
    }

    #[test]
    fn rejects_unphysical_input() {
        let cov = DMatrix::identity(2, 2) * 0.2;
        assert!(GaussianState::new(DVector::zeros(2), cov).is_err());
        assert!(GaussianChannelSpec::amplifier(0.5).is_err());
        assert!(GaussianChannelSpec::attenuator(1.5).is_err());
    }

    #[test]
    fn coherent_overlaps() {
        let a = GaussianState::coherent(C64::new(0.3, 0.4)).unwrap();
        assert_abs_diff_eq!(a.coherent_overlap(C64::new(0.3, 0.4)).unwrap(), 1.0, epsilon = 1e-14);
        let ov = a.coherent_overlap(C64::new(1.0, -0.2)).unwrap();
        let expected = (-(C64::new(0.3, 0.4) - C64::new(1.0, -0.2)).norm_sqr()).exp();
        assert_abs_diff_eq!(ov, expected, epsilon = 1e-14);
        // thermal state with n̄ = 1 has vacuum population 1/2
        let th = apply_gaussian_channel(&GaussianState::vacuum(), &GaussianChannelSpec::amplifier(2.0).unwrap()).unwrap();
        assert_abs_diff_eq!(th.coherent_overlap(C64::new(0.0, 0.0)).unwrap(), 0.5, epsilon = 1e-14);
    }

    #[test]
    fn tmss_is_physical_with_known_epr_variance() {
        let t = GaussianState::two_mode_squeezed(0.5).unwrap();
        assert!(t.is_physical());
        assert_abs_diff_eq!(t.epr_variance_sum().unwrap(), 1.0 / 3.0, epsilon = 1e-14);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn spec_strategy() -> impl Strategy<Value = GaussianChannelSpec> {
            prop_oneof![
                Just(GaussianChannelSpec::Identity),
                (1.0f64..5.0).prop_map(|g| GaussianChannelSpec::Amplifier { gain: g }),
                (0.0f64..1.0).prop_map(|g| GaussianChannelSpec::Attenuator { gain: g }),
                (-1.5f64..1.5).prop_map(|r| GaussianChannelSpec::Squeezer { r }),
                (0.0f64..4.0).prop_map(|g| GaussianChannelSpec::MpConjugator { gain: g }),
            ]
        }

        proptest! {
            #[test]
            fn channels_preserve_physicality(
                spec in spec_strategy(),
                xi in 0.0f64..0.95,
                r in -1.0f64..1.0,
            ) {
                let single = GaussianState::squeezed_vacuum(r).unwrap();
                prop_assert!(apply_gaussian_channel(&single, &spec).unwrap().is_physical());
                let tmss = GaussianState::two_mode_squeezed(xi).unwrap();
                prop_assert!(apply_to_mode(&tmss, &spec, Subsystem::A).unwrap().is_physical());
            }
        }
    }
}
