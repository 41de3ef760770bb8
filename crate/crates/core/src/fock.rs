//! Truncated Fock-space numerics.
//!
//! Conventions: `[x, p] = i`, `x = (a + a†)/√2`, `p = (a − a†)/(i√2)`, so every
//! coherent state has variance 1/2 in both quadratures. Two-mode objects use the
//! basis index `n_a * dim + n_b` (mode A major).
//!
//! Quadrature-squared operators are the truncation of the exact `x²`, `p²`
//! rather than the square of the truncated `x`, `p`. For any state supported on
//! the first `dim` levels the expectation values are then exact.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{ensure_finite, invalid, Error, Result};

pub type C64 = Complex64;

pub const NORM_TOL: f64 = 1e-12;
pub const HERMITIAN_TOL: f64 = 1e-12;
pub const PSD_TOL: f64 = 1e-10;
/// Default bound on the squeezing parameter accepted by [`squeeze_operator`].
pub const DEFAULT_R_MAX: f64 = 2.0;
/// Largest population allowed in the top band of levels after a checked squeeze.
pub const DEFAULT_LEAKAGE_TOL: f64 = 1e-10;

/// Truncation dimension `ceil(m² + 10m + 20)` for a largest amplitude `m`.
pub fn policy_dim(max_amplitude: f64) -> usize {
    let m = max_amplitude.abs();
    (m * m + 10.0 * m + 20.0).ceil() as usize
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Quadrature {
    X,
    P,
}

impl Quadrature {
    pub const BOTH: [Quadrature; 2] = [Quadrature::X, Quadrature::P];

    /// Mean quadrature of the coherent state `|α⟩`.
    pub fn of_amplitude(self, alpha: C64) -> f64 {
        match self {
            Quadrature::X => std::f64::consts::SQRT_2 * alpha.re,
            Quadrature::P => std::f64::consts::SQRT_2 * alpha.im,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Subsystem {
    A,
    B,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OperatorTag {
    Identity,
    Annihilation,
    Number,
    X,
    P,
    X2,
    P2,
    Squeezer(f64),
    Custom,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StateVector {
    dim: usize,
    modes: usize,
    amplitudes: DVector<C64>,
}

impl StateVector {
    pub fn new(dim: usize, modes: usize, amplitudes: DVector<C64>) -> Result<Self> {
        check_dim(dim)?;
        check_modes(modes)?;
        let expected = dim.pow(modes as u32);
        if amplitudes.len() != expected {
            return Err(Error::DimensionMismatch {
                expected,
                found: amplitudes.len(),
            });
        }
        if amplitudes.iter().any(|c| !c.re.is_finite() || !c.im.is_finite()) {
            return Err(invalid("state amplitudes must be finite"));
        }
        let norm = amplitudes.norm_squared();
        if norm > 1.0 + NORM_TOL {
            return Err(invalid(format!("state is super-normalized: |ψ|² = {norm}")));
        }
        Ok(Self {
            dim,
            modes,
            amplitudes,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn modes(&self) -> usize {
        self.modes
    }

    pub fn amplitudes(&self) -> &DVector<C64> {
        &self.amplitudes
    }

    pub fn norm_squared(&self) -> f64 {
        self.amplitudes.norm_squared()
    }

    pub fn normalized(&self) -> Result<Self> {
        let n = self.norm_squared();
        if !(n > 0.0) {
            return Err(invalid("cannot normalize the zero vector"));
        }
        Ok(Self {
            dim: self.dim,
            modes: self.modes,
            amplitudes: self.amplitudes.unscale(n.sqrt()),
        })
    }

    pub fn to_density(&self) -> DensityMatrix {
        let v = &self.amplitudes;
        DensityMatrix {
            dim: self.dim,
            modes: self.modes,
            entries: v * v.adjoint(),
        }
    }

    /// `⟨ψ|O|ψ⟩` for a single-mode operator.
    pub fn expect(&self, op: &DMatrix<C64>) -> Result<C64> {
        if self.modes != 1 {
            return Err(invalid("expectation of a single-mode operator needs a single-mode state"));
        }
        check_square(op, self.dim)?;
        Ok(self.amplitudes.dotc(&(op * &self.amplitudes)))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix {
    dim: usize,
    modes: usize,
    entries: DMatrix<C64>,
}

impl DensityMatrix {
    /// Validates Hermiticity and the trace bound. Positivity is checked on demand
    /// by [`DensityMatrix::min_eigenvalue`], it needs a full eigendecomposition.
    pub fn new(dim: usize, modes: usize, entries: DMatrix<C64>) -> Result<Self> {
        check_dim(dim)?;
        check_modes(modes)?;
        check_square(&entries, dim.pow(modes as u32))?;
        let rho = Self {
            dim,
            modes,
            entries,
        };
        let defect = rho.hermiticity_defect();
        if !(defect <= HERMITIAN_TOL) {
            return Err(invalid(format!("density matrix not Hermitian (defect {defect:e})")));
        }
        let tr = rho.trace();
        if !(tr <= 1.0 + NORM_TOL) {
            return Err(invalid(format!("density matrix trace {tr} exceeds 1")));
        }
        Ok(rho)
    }

    /// Hermitian part of `entries`, skipping validation. Used for channel
    /// outputs where round-off can break exact Hermiticity.
    pub(crate) fn from_raw(dim: usize, modes: usize, entries: DMatrix<C64>) -> Self {
        let herm = (&entries + entries.adjoint()) * C64::new(0.5, 0.0);
        Self {
            dim,
            modes,
            entries: herm,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn modes(&self) -> usize {
        self.modes
    }

    pub fn entries(&self) -> &DMatrix<C64> {
        &self.entries
    }

    pub fn trace(&self) -> f64 {
        self.entries.diagonal().iter().map(|c| c.re).sum()
    }

    pub fn hermiticity_defect(&self) -> f64 {
        let diff = &self.entries - self.entries.adjoint();
        diff.iter().map(|c| c.norm()).fold(0.0, f64::max)
    }

    pub fn eigenvalues(&self) -> Vec<f64> {
        let mut ev: Vec<f64> = self
            .entries
            .clone()
            .symmetric_eigenvalues()
            .iter()
            .copied()
            .collect();
        ev.sort_by(|a, b| b.total_cmp(a));
        ev
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.eigenvalues().last().copied().unwrap_or(0.0)
    }

    pub fn is_physical(&self) -> bool {
        self.hermiticity_defect() <= HERMITIAN_TOL
            && self.trace() <= 1.0 + NORM_TOL
            && self.min_eigenvalue() >= -PSD_TOL
    }

    pub fn normalized(&self) -> Result<Self> {
        let tr = self.trace();
        if !(tr > 0.0) {
            return Err(invalid("cannot normalize a state with zero trace"));
        }
        Ok(Self {
            dim: self.dim,
            modes: self.modes,
            entries: &self.entries / C64::new(tr, 0.0),
        })
    }

    /// `tr[O ρ]` for a single-mode operator.
    pub fn expect(&self, op: &DMatrix<C64>) -> Result<C64> {
        if self.modes != 1 {
            return Err(invalid("single-mode expectation on a two-mode state"));
        }
        check_square(op, self.dim)?;
        Ok(trace_product(op, &self.entries))
    }

    /// `tr[(A ⊗ B) ρ]` for a two-mode state, skipping zero entries of `A` and `B`.
    pub fn expect_product(&self, op_a: &DMatrix<C64>, op_b: &DMatrix<C64>) -> Result<C64> {
        if self.modes != 2 {
            return Err(invalid("product expectation needs a two-mode state"));
        }
        check_square(op_a, self.dim)?;
        check_square(op_b, self.dim)?;
        let d = self.dim;
        let nz_a = nonzeros(op_a);
        let nz_b = nonzeros(op_b);
        let mut acc = C64::new(0.0, 0.0);
        for &(a, ap, va) in &nz_a {
            for &(b, bp, vb) in &nz_b {
                acc += va * vb * self.entries[(ap * d + bp, a * d + b)];
            }
        }
        Ok(acc)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OperatorMatrix {
    dim: usize,
    entries: DMatrix<C64>,
    tag: OperatorTag,
    unitarity_defect: Option<f64>,
}

impl OperatorMatrix {
    pub fn new(dim: usize, entries: DMatrix<C64>, tag: OperatorTag) -> Result<Self> {
        check_dim(dim)?;
        check_square(&entries, dim)?;
        Ok(Self {
            dim,
            entries,
            tag,
            unitarity_defect: None,
        })
    }

    pub fn identity(dim: usize) -> Result<Self> {
        Self::new(dim, DMatrix::identity(dim, dim), OperatorTag::Identity)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn entries(&self) -> &DMatrix<C64> {
        &self.entries
    }

    pub fn into_entries(self) -> DMatrix<C64> {
        self.entries
    }

    pub fn tag(&self) -> OperatorTag {
        self.tag
    }

    /// `‖S†S − I‖_max`, recorded for squeezers.
    pub fn unitarity_defect(&self) -> Option<f64> {
        self.unitarity_defect
    }

    pub fn apply(&self, state: &StateVector) -> Result<StateVector> {
        if state.modes != 1 || state.dim != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                found: state.dim,
            });
        }
        Ok(StateVector {
            dim: self.dim,
            modes: 1,
            amplitudes: &self.entries * &state.amplitudes,
        })
    }

    /// Applies the operator and rejects results whose population in the top
    /// eighth of the levels exceeds `leakage_tol`.
    pub fn apply_checked(&self, state: &StateVector, leakage_tol: f64) -> Result<StateVector> {
        let out = self.apply(state)?;
        let leak = edge_population(&out);
        if leak > leakage_tol {
            let band = edge_band(self.dim);
            return Err(Error::Truncation {
                context: format!("operator output has population {leak:e} in the top {band} levels"),
                required: self.dim + band,
                actual: self.dim,
            });
        }
        Ok(out)
    }
}

fn edge_band(dim: usize) -> usize {
    // at least two levels so that parity-restricted states are seen
    (dim / 8).max(2).min(dim)
}

/// Population in the top eighth of the Fock levels of a single-mode state.
pub fn edge_population(state: &StateVector) -> f64 {
    let band = edge_band(state.dim);
    state.amplitudes.as_slice()[state.dim - band..]
        .iter()
        .map(|c| c.norm_sqr())
        .sum()
}

fn check_dim(dim: usize) -> Result<()> {
    if dim < 2 {
        return Err(invalid(format!("truncation dimension must be at least 2, got {dim}")));
    }
    Ok(())
}

fn check_modes(modes: usize) -> Result<()> {
    if !(1..=2).contains(&modes) {
        return Err(invalid(format!("only 1 or 2 modes are supported, got {modes}")));
    }
    Ok(())
}

fn check_square(m: &DMatrix<C64>, n: usize) -> Result<()> {
    if m.nrows() != n || m.ncols() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: m.nrows().max(m.ncols()),
        });
    }
    Ok(())
}

fn nonzeros(m: &DMatrix<C64>) -> Vec<(usize, usize, C64)> {
    let mut out = Vec::new();
    for j in 0..m.ncols() {
        for i in 0..m.nrows() {
            let v = m[(i, j)];
            if v.re != 0.0 || v.im != 0.0 {
                out.push((i, j, v));
            }
        }
    }
    out
}

/// `tr[A B]` without forming the product.
pub(crate) fn trace_product(a: &DMatrix<C64>, b: &DMatrix<C64>) -> C64 {
    let n = a.nrows();
    let mut acc = C64::new(0.0, 0.0);
    for i in 0..n {
        for k in 0..n {
            acc += a[(i, k)] * b[(k, i)];
        }
    }
    acc
}

pub fn kron(a: &DMatrix<C64>, b: &DMatrix<C64>) -> DMatrix<C64> {
    a.kronecker(b)
}

/// Truncated `|α⟩` with amplitudes `e^{−|α|²/2} αⁿ/√n!`. Not renormalized: the
/// norm deficit is the Poisson tail beyond `dim`.
pub fn coherent_state(alpha: C64, dim: usize) -> Result<StateVector> {
    check_dim(dim)?;
    ensure_finite("Re α", alpha.re)?;
    ensure_finite("Im α", alpha.im)?;
    Ok(StateVector {
        dim,
        modes: 1,
        amplitudes: coherent_amplitudes(alpha, dim),
    })
}

pub(crate) fn coherent_amplitudes(alpha: C64, dim: usize) -> DVector<C64> {
    let mut amps = DVector::zeros(dim);
    let mut c = C64::new((-0.5 * alpha.norm_sqr()).exp(), 0.0);
    amps[0] = c;
    for n in 1..dim {
        c = c * alpha / (n as f64).sqrt();
        amps[n] = c;
    }
    amps
}

pub fn fock_state(n: usize, dim: usize) -> Result<StateVector> {
    check_dim(dim)?;
    if n >= dim {
        return Err(invalid(format!("Fock level {n} outside dimension {dim}")));
    }
    let mut amps = DVector::zeros(dim);
    amps[n] = C64::new(1.0, 0.0);
    Ok(StateVector {
        dim,
        modes: 1,
        amplitudes: amps,
    })
}

pub fn thermal_state(mean_photons: f64, dim: usize) -> Result<DensityMatrix> {
    check_dim(dim)?;
    if !(mean_photons >= 0.0) || !mean_photons.is_finite() {
        return Err(invalid("mean photon number must be finite and nonnegative"));
    }
    let q = mean_photons / (1.0 + mean_photons);
    let mut entries = DMatrix::zeros(dim, dim);
    let mut p = 1.0 - q;
    for n in 0..dim {
        entries[(n, n)] = C64::new(p, 0.0);
        p *= q;
    }
    Ok(DensityMatrix {
        dim,
        modes: 1,
        entries,
    })
}

pub fn annihilation(dim: usize) -> Result<OperatorMatrix> {
    check_dim(dim)?;
    Ok(OperatorMatrix {
        dim,
        entries: annihilation_matrix(dim),
        tag: OperatorTag::Annihilation,
        unitarity_defect: None,
    })
}

pub(crate) fn annihilation_matrix(dim: usize) -> DMatrix<C64> {
    let mut a = DMatrix::zeros(dim, dim);
    for n in 1..dim {
        a[(n - 1, n)] = C64::new((n as f64).sqrt(), 0.0);
    }
    a
}

pub fn number_operator(dim: usize) -> Result<OperatorMatrix> {
    check_dim(dim)?;
    let entries = DMatrix::from_diagonal(&DVector::from_fn(dim, |n, _| C64::new(n as f64, 0.0)));
    OperatorMatrix::new(dim, entries, OperatorTag::Number)
}

pub fn quadrature_operator(which: Quadrature, dim: usize) -> Result<OperatorMatrix> {
    check_dim(dim)?;
    let tag = match which {
        Quadrature::X => OperatorTag::X,
        Quadrature::P => OperatorTag::P,
    };
    Ok(OperatorMatrix {
        dim,
        entries: quadrature_matrix(which, dim),
        tag,
        unitarity_defect: None,
    })
}

pub(crate) fn quadrature_matrix(which: Quadrature, dim: usize) -> DMatrix<C64> {
    let a = annihilation_matrix(dim);
    let ad = a.adjoint();
    let s = std::f64::consts::FRAC_1_SQRT_2;
    match which {
        Quadrature::X => (&a + &ad) * C64::new(s, 0.0),
        // (a − a†)/(i√2) = −i(a − a†)/√2
        Quadrature::P => (&a - &ad) * C64::new(0.0, -s),
    }
}

/// Truncation of the exact `x²` (or `p²`): `(±(a² + a†²) + 2n + 1)/2`.
pub fn quadrature_squared(which: Quadrature, dim: usize) -> Result<OperatorMatrix> {
    check_dim(dim)?;
    let tag = match which {
        Quadrature::X => OperatorTag::X2,
        Quadrature::P => OperatorTag::P2,
    };
    Ok(OperatorMatrix {
        dim,
        entries: quadrature_squared_matrix(which, dim),
        tag,
        unitarity_defect: None,
    })
}

pub(crate) fn quadrature_squared_matrix(which: Quadrature, dim: usize) -> DMatrix<C64> {
    let sign = match which {
        Quadrature::X => 1.0,
        Quadrature::P => -1.0,
    };
    let mut m = DMatrix::zeros(dim, dim);
    for n in 0..dim {
        m[(n, n)] = C64::new(n as f64 + 0.5, 0.0);
        if n + 2 < dim {
            let v = 0.5 * sign * (((n + 1) * (n + 2)) as f64).sqrt();
            m[(n, n + 2)] = C64::new(v, 0.0);
            m[(n + 2, n)] = C64::new(v, 0.0);
        }
    }
    m
}

/// `S(r) = exp(r(a² − a†²)/2)` by exponentiating the truncated generator.
///
/// The truncated generator is anti-Hermitian, so the result is unitary on the
/// truncated space; its action differs from the exact squeezer only near the
/// top levels. Use [`OperatorMatrix::apply_checked`] to detect that.
pub fn squeeze_operator(r: f64, dim: usize) -> Result<OperatorMatrix> {
    squeeze_operator_with_limit(r, dim, DEFAULT_R_MAX)
}

pub fn squeeze_operator_with_limit(r: f64, dim: usize, r_max: f64) -> Result<OperatorMatrix> {
    check_dim(dim)?;
    ensure_finite("squeezing r", r)?;
    if r.abs() > r_max {
        return Err(invalid(format!("|r| = {} exceeds r_max = {r_max}", r.abs())));
    }
    let a = annihilation_matrix(dim);
    let a2 = &a * &a;
    let generator = (&a2 - a2.adjoint()) * C64::new(0.5 * r, 0.0);
    let s = if r == 0.0 {
        DMatrix::identity(dim, dim)
    } else {
        generator.exp()
    };
    let defect = max_abs(&(s.adjoint() * &s - DMatrix::<C64>::identity(dim, dim)));
    Ok(OperatorMatrix {
        dim,
        entries: s,
        tag: OperatorTag::Squeezer(r),
        unitarity_defect: Some(defect),
    })
}

pub(crate) fn max_abs(m: &DMatrix<C64>) -> f64 {
    m.iter().map(|c| c.norm()).fold(0.0, f64::max)
}

/// `√(1−ξ²) Σ_{n<dim} ξⁿ |n⟩|n⟩`, truncated without renormalization.
pub fn two_mode_squeezed_state(xi: f64, dim: usize) -> Result<StateVector> {
    check_dim(dim)?;
    if !(0.0..1.0).contains(&xi) {
        return Err(invalid(format!("two-mode squeezing ξ must lie in [0, 1), got {xi}")));
    }
    let mut amps = DVector::zeros(dim * dim);
    let mut c = (1.0 - xi * xi).sqrt();
    for n in 0..dim {
        amps[n * dim + n] = C64::new(c, 0.0);
        c *= xi;
    }
    Ok(StateVector {
        dim,
        modes: 2,
        amplitudes: amps,
    })
}

/// Product state `ρ_A ⊗ ρ_B`.
pub fn tensor(rho_a: &DensityMatrix, rho_b: &DensityMatrix) -> Result<DensityMatrix> {
    if rho_a.modes != 1 || rho_b.modes != 1 {
        return Err(invalid("tensor product expects single-mode factors"));
    }
    if rho_a.dim != rho_b.dim {
        return Err(Error::DimensionMismatch {
            expected: rho_a.dim,
            found: rho_b.dim,
        });
    }
    Ok(DensityMatrix {
        dim: rho_a.dim,
        modes: 2,
        entries: kron(&rho_a.entries, &rho_b.entries),
    })
}

pub fn partial_trace(rho: &DensityMatrix, keep: Subsystem) -> Result<DensityMatrix> {
    if rho.modes != 2 {
        return Err(invalid("partial trace needs a two-mode state"));
    }
    let d = rho.dim;
    let e = &rho.entries;
    let out = DMatrix::from_fn(d, d, |i, j| {
        let mut acc = C64::new(0.0, 0.0);
        for k in 0..d {
            acc += match keep {
                Subsystem::A => e[(i * d + k, j * d + k)],
                Subsystem::B => e[(k * d + i, k * d + j)],
            };
        }
        acc
    });
    Ok(DensityMatrix {
        dim: d,
        modes: 1,
        entries: out,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    #[test]
    fn vacuum_coherent_state() {
        let s = coherent_state(c(0.0, 0.0), 8).unwrap();
        assert_eq!(s.amplitudes()[0], c(1.0, 0.0));
        assert!(s.amplitudes().iter().skip(1).all(|a| a.norm() == 0.0));
    }

    #[test]
    fn coherent_state_leading_amplitude() {
        let s = coherent_state(c(1.0, 0.0), 32).unwrap();
        assert_abs_diff_eq!(s.amplitudes()[0].re, 0.6065306597126334, epsilon = 1e-15);
    }

    #[test]
    fn coherent_state_norm_deficit_is_poisson_tail() {
        let s = coherent_state(c(2.0, 0.0), 64).unwrap();
        assert!((1.0 - s.norm_squared()).abs() < 1e-12);
        // Small D: deficit equals the Poisson tail computed independently.
        let d = 6;
        let s = coherent_state(c(1.5, 0.0), d).unwrap();
        let lambda: f64 = 2.25;
        let head: f64 = (0..d)
            .map(|n| (-lambda).exp() * lambda.powi(n as i32) / (1..=n).map(|k| k as f64).product::<f64>())
            .sum();
        assert_abs_diff_eq!(1.0 - s.norm_squared(), 1.0 - head, epsilon = 1e-14);
    }

    #[test]
    fn coherent_state_rejects_nan() {
        assert!(coherent_state(c(f64::NAN, 0.0), 8).is_err());
        assert!(coherent_state(c(0.0, 0.0), 1).is_err());
    }

    #[test]
    fn quadrature_entries_and_commutator() {
        let x = quadrature_operator(Quadrature::X, 4).unwrap();
        assert_abs_diff_eq!(x.entries()[(0, 1)].re, std::f64::consts::FRAC_1_SQRT_2, epsilon = 1e-15);
        let vac = fock_state(0, 4).unwrap();
        assert_eq!(vac.expect(x.entries()).unwrap().norm(), 0.0);

        let d = 10;
        let x = quadrature_matrix(Quadrature::X, d);
        let p = quadrature_matrix(Quadrature::P, d);
        let comm = &x * &p - &p * &x;
        for i in 0..d - 1 {
            for j in 0..d - 1 {
                let expected = if i == j { c(0.0, 1.0) } else { c(0.0, 0.0) };
                assert!((comm[(i, j)] - expected).norm() < 1e-12);
            }
        }
        assert!((&x - x.adjoint()).iter().all(|v| v.norm() < 1e-12));
        assert!((&p - p.adjoint()).iter().all(|v| v.norm() < 1e-12));
    }

    #[test]
    fn coherent_quadrature_moments() {
        let d = 96;
        let x = quadrature_matrix(Quadrature::X, d);
        let x2 = quadrature_squared_matrix(Quadrature::X, d);
        let p = quadrature_matrix(Quadrature::P, d);
        let p2 = quadrature_squared_matrix(Quadrature::P, d);
        for alpha in [c(0.3, -0.2), c(2.0, 1.0), c(-3.0, 2.5), c(0.0, 4.0)] {
            assert!(alpha.norm_sqr() + 6.0 * alpha.norm() + 10.0 < d as f64);
            let s = coherent_state(alpha, d).unwrap();
            let xa = Quadrature::X.of_amplitude(alpha);
            let pa = Quadrature::P.of_amplitude(alpha);
            assert!((s.expect(&x).unwrap().re - xa).abs() < 1e-9);
            assert!((s.expect(&x2).unwrap().re - (xa * xa + 0.5)).abs() < 1e-8);
            assert!((s.expect(&p).unwrap().re - pa).abs() < 1e-9);
            assert!((s.expect(&p2).unwrap().re - (pa * pa + 0.5)).abs() < 1e-8);
        }
    }

    #[test]
    fn expectations_stable_under_doubling_dimension() {
        for alpha in [c(0.5, 0.5), c(1.5, -1.0)] {
            for which in Quadrature::BOTH {
                let e = |d: usize| {
                    coherent_state(alpha, d)
                        .unwrap()
                        .expect(&quadrature_squared_matrix(which, d))
                        .unwrap()
                        .re
                };
                assert!((e(40) - e(80)).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn squeezer_zero_is_identity() {
        let s = squeeze_operator(0.0, 12).unwrap();
        assert_eq!(s.entries(), &DMatrix::<C64>::identity(12, 12));
        assert!(squeeze_operator(2.5, 12).is_err());
    }

    #[test]
    fn squeezer_unitary_on_leading_block() {
        let s40 = squeeze_operator(0.3, 40).unwrap();
        assert!(s40.unitarity_defect().unwrap() < 1e-10);
        let s80 = squeeze_operator(0.3, 80).unwrap();
        let block40 = s40.entries().view((0, 0), (8, 8)).into_owned();
        let block80 = s80.entries().view((0, 0), (8, 8)).into_owned();
        assert!(max_abs(&(block40 - block80)) < 1e-10);
    }

    #[test]
    fn squeezed_vacuum_variance() {
        let r = 0.2;
        let d = 40;
        let s = squeeze_operator(r, d).unwrap();
        let vac = fock_state(0, d).unwrap();
        let sq = s.apply_checked(&vac, DEFAULT_LEAKAGE_TOL).unwrap();
        let vx = sq.expect(&quadrature_squared_matrix(Quadrature::X, d)).unwrap().re;
        let vp = sq.expect(&quadrature_squared_matrix(Quadrature::P, d)).unwrap().re;
        assert_abs_diff_eq!(vx, (-2.0 * r).exp() / 2.0, epsilon = 1e-8);
        assert_abs_diff_eq!(vp, (2.0 * r).exp() / 2.0, epsilon = 1e-8);
    }

    #[test]
    fn strong_squeeze_in_small_space_is_flagged() {
        let s = squeeze_operator(1.5, 10).unwrap();
        let vac = fock_state(0, 10).unwrap();
        assert!(matches!(
            s.apply_checked(&vac, DEFAULT_LEAKAGE_TOL),
            Err(Error::Truncation { .. })
        ));
    }

    #[test]
    fn tmss_amplitudes_and_norm() {
        let v = two_mode_squeezed_state(0.0, 6).unwrap();
        assert_eq!(v.amplitudes()[0], c(1.0, 0.0));
        let v = two_mode_squeezed_state(0.5, 32).unwrap();
        assert_abs_diff_eq!(v.amplitudes()[32 + 1].re, 0.75f64.sqrt() * 0.5, epsilon = 1e-15);
        let v = two_mode_squeezed_state(0.9, 256).unwrap();
        assert!((1.0 - v.norm_squared()).abs() < 1e-10);
        assert!(two_mode_squeezed_state(1.0, 8).is_err());
    }

    #[test]
    fn partial_trace_of_tmss_is_thermal() {
        let xi: f64 = 0.5;
        let d = 48;
        let rho = two_mode_squeezed_state(xi, d).unwrap().to_density();
        let red = partial_trace(&rho, Subsystem::A).unwrap();
        let n = number_operator(d).unwrap();
        assert_abs_diff_eq!(red.expect(n.entries()).unwrap().re, 1.0 / 3.0, epsilon = 1e-12);
        let ev = red.eigenvalues();
        for (k, lam) in ev.iter().take(10).enumerate() {
            let expected = (1.0 - xi * xi) * xi.powi(2 * k as i32);
            assert!((lam - expected).abs() < 1e-10);
        }
    }

    #[test]
    fn partial_trace_of_product_state() {
        let d = 5;
        let a = coherent_state(c(0.4, 0.1), d).unwrap().to_density();
        let b = thermal_state(0.3, d).unwrap();
        let prod = tensor(&a, &b).unwrap();
        let red = partial_trace(&prod, Subsystem::A).unwrap();
        let expected = a.entries() * C64::new(b.trace(), 0.0);
        assert!(max_abs(&(red.entries() - expected)) < 1e-14);
        assert!(partial_trace(&a, Subsystem::A).is_err());
    }

    #[test]
    fn density_matrix_validation() {
        let bad = DMatrix::from_row_slice(2, 2, &[c(0.5, 0.0), c(0.1, 0.0), c(0.0, 0.0), c(0.5, 0.0)]);
        assert!(DensityMatrix::new(2, 1, bad).is_err());
        let super_norm = DMatrix::from_diagonal_element(2, 2, c(0.6, 0.0));
        assert!(DensityMatrix::new(2, 1, super_norm).is_err());
        let ok = DMatrix::from_diagonal_element(2, 2, c(0.5, 0.0));
        assert!(DensityMatrix::new(2, 1, ok).unwrap().is_physical());
    }

    #[test]
    fn product_expectation_matches_dense_kronecker() {
        let d = 4;
        let psi = two_mode_squeezed_state(0.4, d).unwrap().to_density();
        let x = quadrature_matrix(Quadrature::X, d);
        let p = quadrature_matrix(Quadrature::P, d);
        let dense = trace_product(&kron(&x, &p), psi.entries());
        let fast = psi.expect_product(&x, &p).unwrap();
        assert!((dense - fast).norm() < 1e-14);
    }

    #[test]
    fn policy_dimension() {
        assert_eq!(policy_dim(0.0), 20);
        assert_eq!(policy_dim(2.0), 44);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn partial_trace_preserves_trace(seed in 0u64..1000) {
                use rand::{Rng, SeedableRng};
                let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
                let d = 3;
                let n = d * d;
                let g = DMatrix::from_fn(n, n, |_, _| c(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5));
                let mut m = &g * g.adjoint();
                let tr: f64 = m.diagonal().iter().map(|v| v.re).sum();
                m /= C64::new(tr, 0.0);
                let rho = DensityMatrix::new(d, 2, DensityMatrix::from_raw(d, 2, m).entries().clone()).unwrap();
                for keep in [Subsystem::A, Subsystem::B] {
                    let red = partial_trace(&rho, keep).unwrap();
                    prop_assert!((red.trace() - rho.trace()).abs() < 1e-12);
                    prop_assert!(red.min_eigenvalue() > -1e-10);
                }
            }
        }
    }
}
