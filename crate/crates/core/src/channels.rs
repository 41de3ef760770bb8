//! Quantum operations in Kraus form on the truncated Fock space.
//!
//! Kraus operators are stored sparsely: the ladder-type families of the
//! Gaussian amplifier and attenuator have at most one entry per column, and a
//! dense `D × D` copy of each would cost `D³` memory. A squeezer applied after
//! the channel is kept as a separate unitary so the operators stay sparse.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::fock::{self, DensityMatrix, OperatorMatrix, OperatorTag, StateVector, C64};
use crate::numeric::ln_factorial;

/// Slack on `Σ K†K ⪯ I`.
pub const TRACE_TOL: f64 = 1e-10;
/// Kraus entries below this magnitude are dropped at construction.
const ENTRY_CUTOFF: f64 = 1e-17;

/// Configuration of the noiseless linear amplifier `Q_N = 𝒩^{1/2} Σ_{n≤N} gⁿ|n⟩⟨n|`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NlaConfig {
    pub g: f64,
    #[serde(rename = "N")]
    pub cutoff: usize,
    pub normalization: f64,
}

impl NlaConfig {
    pub fn new(g: f64, cutoff: usize, normalization: f64) -> Result<Self> {
        let cfg = Self {
            g,
            cutoff,
            normalization,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// `𝒩 = g^{−2N}`, the largest normalization that keeps `Q_N² ⪯ I`.
    pub fn saturating(g: f64, cutoff: usize) -> Result<Self> {
        Self::new(g, cutoff, g.powi(-2 * cutoff as i32))
    }

    pub fn max_normalization(&self) -> f64 {
        self.g.powi(-2 * self.cutoff as i32)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.g >= 1.0) || !self.g.is_finite() {
            return Err(invalid(format!("NLA gain must be ≥ 1, got {}", self.g)));
        }
        if !(self.normalization > 0.0) {
            return Err(invalid("NLA normalization must be positive"));
        }
        let max = self.max_normalization();
        if self.normalization > max * (1.0 + 1e-12) {
            return Err(invalid(format!(
                "NLA normalization {} exceeds g^(-2N) = {max}; the operation would increase trace",
                self.normalization
            )));
        }
        Ok(())
    }
}

/// Descriptor of a channel, also used as the provenance label of a built
/// [`KrausChannel`] and as the JSON channel format of the CLI.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ChannelSpec {
    Identity,
    /// Quantum-limited phase-insensitive channel of gain `G ≥ 0`.
    GaussianAmp { gain: f64 },
    GaussianAttenuator { gain: f64 },
    Nla(NlaConfig),
    SqueezerConjugated { inner: Box<ChannelSpec>, r: f64 },
    Random {
        kraus: usize,
        trace_decreasing: bool,
        seed: u64,
    },
}

impl ChannelSpec {
    /// Factor by which the channel can scale input amplitudes.
    fn amplitude_scale(&self) -> f64 {
        match self {
            ChannelSpec::Identity | ChannelSpec::GaussianAttenuator { .. } => 1.0,
            ChannelSpec::GaussianAmp { gain } => gain.sqrt().max(1.0),
            ChannelSpec::Nla(cfg) => cfg.g,
            ChannelSpec::SqueezerConjugated { inner, r } => r.abs().exp() * inner.amplitude_scale(),
            ChannelSpec::Random { .. } => 1.0,
        }
    }

    /// Truncation dimension needed for the channel to act faithfully on
    /// coherent inputs with `|α| ≤ alpha_max`. `None` means any dimension is
    /// faithful (the operation is defined on the truncated space itself).
    pub fn required_dim(&self, alpha_max: f64) -> Option<usize> {
        match self {
            ChannelSpec::Random { .. } => None,
            // Q_N only reads levels n ≤ N, so inputs truncated above N are exact
            ChannelSpec::Nla(cfg) => Some(cfg.cutoff + 1),
            other => Some(fock::policy_dim(other.amplitude_scale() * alpha_max)),
        }
    }
}

/// Sparse Kraus operator: `(row, col, value)` triplets.
#[derive(Debug, Clone, PartialEq)]
pub struct KrausOperator {
    dim: usize,
    entries: Vec<(usize, usize, C64)>,
}

impl KrausOperator {
    pub fn from_dense(m: &DMatrix<C64>) -> Self {
        let mut entries = Vec::new();
        for j in 0..m.ncols() {
            for i in 0..m.nrows() {
                let v = m[(i, j)];
                if v.norm() > 0.0 {
                    entries.push((i, j, v));
                }
            }
        }
        Self {
            dim: m.nrows(),
            entries,
        }
    }

    pub fn to_dense(&self) -> DMatrix<C64> {
        let mut m = DMatrix::zeros(self.dim, self.dim);
        for &(i, j, v) in &self.entries {
            m[(i, j)] += v;
        }
        m
    }

    pub fn nnz(&self) -> usize {
        self.entries.len()
    }

    pub fn apply_vec(&self, v: &DVector<C64>) -> DVector<C64> {
        let mut out = DVector::zeros(self.dim);
        for &(i, j, val) in &self.entries {
            out[i] += val * v[j];
        }
        out
    }

    /// Adds `K† M K` into `acc`.
    fn accumulate_heisenberg(&self, m: &DMatrix<C64>, acc: &mut DMatrix<C64>) {
        for &(r1, c1, v1) in &self.entries {
            let left = v1.conj();
            for &(r2, c2, v2) in &self.entries {
                acc[(c1, c2)] += left * m[(r1, r2)] * v2;
            }
        }
    }

    /// Adds `K ρ K†` into `acc`.
    fn accumulate_schrodinger(&self, rho: &DMatrix<C64>, acc: &mut DMatrix<C64>) {
        for &(r1, c1, v1) in &self.entries {
            for &(r2, c2, v2) in &self.entries {
                acc[(r1, r2)] += v1 * rho[(c1, c2)] * v2.conj();
            }
        }
    }
}

/// Trace-non-increasing operation `ρ ↦ U (Σ K ρ K†) U†` with an optional
/// trailing unitary `U`.
#[derive(Debug, Clone)]
pub struct KrausChannel {
    dim: usize,
    ops: Vec<KrausOperator>,
    post: Option<DMatrix<C64>>,
    label: ChannelSpec,
}

impl KrausChannel {
    /// Builds a channel from explicit Kraus operators, checking `Σ K†K ⪯ I`.
    pub fn from_operators(ops: &[OperatorMatrix], label: ChannelSpec) -> Result<Self> {
        let dim = ops
            .first()
            .map(|o| o.dim())
            .ok_or_else(|| invalid("a channel needs at least one Kraus operator"))?;
        if let Some(bad) = ops.iter().find(|o| o.dim() != dim) {
            return Err(Error::DimensionMismatch {
                expected: dim,
                found: bad.dim(),
            });
        }
        let ch = Self {
            dim,
            ops: ops.iter().map(|o| KrausOperator::from_dense(o.entries())).collect(),
            post: None,
            label,
        };
        ch.check_trace_non_increasing()?;
        Ok(ch)
    }

    fn from_sparse(dim: usize, ops: Vec<KrausOperator>, label: ChannelSpec) -> Result<Self> {
        let ch = Self {
            dim,
            ops,
            post: None,
            label,
        };
        ch.check_trace_non_increasing()?;
        Ok(ch)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn label(&self) -> &ChannelSpec {
        &self.label
    }

    pub fn num_kraus(&self) -> usize {
        self.ops.len()
    }

    pub fn sparse_operators(&self) -> &[KrausOperator] {
        &self.ops
    }

    /// Dense Kraus operators, with the trailing unitary folded in.
    pub fn kraus_operators(&self) -> Vec<OperatorMatrix> {
        self.ops
            .iter()
            .map(|k| {
                let dense = match &self.post {
                    Some(u) => u * k.to_dense(),
                    None => k.to_dense(),
                };
                OperatorMatrix::new(self.dim, dense, OperatorTag::Custom).expect("dimension checked at construction")
            })
            .collect()
    }

    /// `Σ K†K` (including the trailing unitary).
    pub fn completeness(&self) -> DMatrix<C64> {
        match &self.post {
            Some(u) => {
                let uu = u.adjoint() * u;
                self.heisenberg_inner(&uu)
            }
            None => self.heisenberg_inner(&DMatrix::identity(self.dim, self.dim)),
        }
    }

    /// Largest eigenvalue of `Σ K†K`.
    pub fn max_completeness_eigenvalue(&self) -> f64 {
        let c = self.completeness();
        let c = (&c + c.adjoint()) * C64::new(0.5, 0.0);
        c.symmetric_eigenvalues().iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn check_trace_non_increasing(&self) -> Result<()> {
        let top = self.max_completeness_eigenvalue();
        if top > 1.0 + TRACE_TOL {
            return Err(Error::Construction(format!(
                "Σ K†K has eigenvalue {top}, exceeding 1 + {TRACE_TOL:e}"
            )));
        }
        Ok(())
    }

    fn heisenberg_inner(&self, m: &DMatrix<C64>) -> DMatrix<C64> {
        let mut acc = DMatrix::zeros(self.dim, self.dim);
        for k in &self.ops {
            k.accumulate_heisenberg(m, &mut acc);
        }
        acc
    }

    /// Dual map `𝓔†(M)`, so that `tr[M 𝓔(ρ)] = tr[𝓔†(M) ρ]`.
    pub fn heisenberg(&self, m: &DMatrix<C64>) -> Result<DMatrix<C64>> {
        if m.nrows() != self.dim || m.ncols() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                found: m.nrows(),
            });
        }
        Ok(match &self.post {
            Some(u) => self.heisenberg_inner(&(u.adjoint() * m * u)),
            None => self.heisenberg_inner(m),
        })
    }

    /// `(Σ K ρ K†, tr)`: the unnormalized output and its weight.
    pub fn apply(&self, rho: &DensityMatrix) -> Result<(DensityMatrix, f64)> {
        if rho.modes() != 1 || rho.dim() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                found: rho.dim(),
            });
        }
        let mut acc = DMatrix::zeros(self.dim, self.dim);
        for k in &self.ops {
            k.accumulate_schrodinger(rho.entries(), &mut acc);
        }
        if let Some(u) = &self.post {
            acc = u * acc * u.adjoint();
        }
        let out = DensityMatrix::from_raw(self.dim, 1, acc);
        let weight = out.trace();
        Ok((out, weight))
    }

    /// `(𝓔 ⊗ I)(J)` acting on mode A, with its weight.
    pub fn apply_bipartite(&self, j: &DensityMatrix) -> Result<(DensityMatrix, f64)> {
        if j.modes() != 2 || j.dim() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                found: j.dim(),
            });
        }
        let d = self.dim;
        let src = j.entries();
        let mut acc = DMatrix::zeros(d * d, d * d);
        for k in &self.ops {
            for &(r1, c1, v1) in &k.entries {
                for &(r2, c2, v2) in &k.entries {
                    let coeff = v1 * v2.conj();
                    for b1 in 0..d {
                        for b2 in 0..d {
                            acc[(r1 * d + b1, r2 * d + b2)] += coeff * src[(c1 * d + b1, c2 * d + b2)];
                        }
                    }
                }
            }
        }
        if let Some(u) = &self.post {
            let full = fock::kron(u, &DMatrix::identity(d, d));
            acc = &full * acc * full.adjoint();
        }
        let out = DensityMatrix::from_raw(d, 2, acc);
        let weight = out.trace();
        Ok((out, weight))
    }

    /// `(𝓔 ⊗ I)(|ψ⟩⟨ψ|)` for a single-Kraus channel, returned as a vector.
    pub fn apply_bipartite_pure(&self, psi: &StateVector) -> Result<StateVector> {
        if self.ops.len() != 1 {
            return Err(invalid("pure bipartite application needs a single Kraus operator"));
        }
        if psi.modes() != 2 || psi.dim() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                found: psi.dim(),
            });
        }
        let d = self.dim;
        let mut k = self.ops[0].to_dense();
        if let Some(u) = &self.post {
            k = u * k;
        }
        // reshape ψ as a D×D matrix Ψ[a, b]; (K ⊗ I)ψ ↔ K Ψ
        let psi_m = DMatrix::from_fn(d, d, |a, b| psi.amplitudes()[a * d + b]);
        let out = k * psi_m;
        let amps = DVector::from_fn(d * d, |i, _| out[(i / d, i % d)]);
        StateVector::new(d, 2, amps)
    }

    /// `⟨β|𝓔(|ψ⟩⟨ψ|)|β⟩ = Σ_k |⟨β|U K|ψ⟩|²`.
    pub fn pure_overlap(&self, input: &DVector<C64>, target: &DVector<C64>) -> f64 {
        let t = match &self.post {
            Some(u) => u.adjoint() * target,
            None => target.clone(),
        };
        self.ops
            .iter()
            .map(|k| t.dotc(&k.apply_vec(input)).norm_sqr())
            .sum()
    }
}

pub fn build_channel(spec: &ChannelSpec, dim: usize) -> Result<KrausChannel> {
    if dim < 2 {
        return Err(invalid(format!("truncation dimension must be at least 2, got {dim}")));
    }
    match spec {
        ChannelSpec::Identity => {
            let op = KrausOperator::from_dense(&DMatrix::identity(dim, dim));
            KrausChannel::from_sparse(dim, vec![op], spec.clone())
        }
        ChannelSpec::GaussianAmp { gain } => {
            let g = *gain;
            if !(g >= 0.0) || !g.is_finite() {
                return Err(invalid(format!("Gaussian gain must be ≥ 0, got {g}")));
            }
            let ops = if g < 1.0 {
                attenuator_kraus(g, dim)
            } else {
                amplifier_kraus(g, dim)
            };
            KrausChannel::from_sparse(dim, ops, spec.clone())
        }
        ChannelSpec::GaussianAttenuator { gain } => {
            if !(0.0..=1.0).contains(gain) {
                return Err(invalid(format!("attenuator gain must lie in [0, 1], got {gain}")));
            }
            KrausChannel::from_sparse(dim, attenuator_kraus(*gain, dim), spec.clone())
        }
        ChannelSpec::Nla(cfg) => {
            cfg.validate()?;
            if cfg.cutoff >= dim {
                return Err(Error::Truncation {
                    context: format!("NLA with cutoff N = {}", cfg.cutoff),
                    required: cfg.cutoff + 1,
                    actual: dim,
                });
            }
            let amp = cfg.normalization.sqrt();
            let entries = (0..=cfg.cutoff)
                .map(|n| (n, n, C64::new(amp * cfg.g.powi(n as i32), 0.0)))
                .collect();
            KrausChannel::from_sparse(dim, vec![KrausOperator { dim, entries }], spec.clone())
        }
        ChannelSpec::SqueezerConjugated { inner, r } => {
            let mut ch = build_channel(inner, dim)?;
            let s = fock::squeeze_operator(*r, dim)?.into_entries();
            ch.post = Some(match ch.post.take() {
                Some(u) => s * u,
                None => s,
            });
            ch.label = spec.clone();
            ch.check_trace_non_increasing()?;
            Ok(ch)
        }
        ChannelSpec::Random {
            kraus,
            trace_decreasing,
            seed,
        } => random_operation(dim, *kraus, *trace_decreasing, *seed),
    }
}

/// Closed-form Kraus family of the quantum-limited amplifier (`G ≥ 1`):
/// `B_k|n⟩ = √C(n+k, k) · ((G−1)/G)^{k/2} · G^{−(n+1)/2} |n+k⟩`.
fn amplifier_kraus(gain: f64, dim: usize) -> Vec<KrausOperator> {
    if gain == 1.0 {
        return vec![KrausOperator::from_dense(&DMatrix::identity(dim, dim))];
    }
    let ln_t = ((gain - 1.0) / gain).ln();
    let ln_g = gain.ln();
    let lnf: Vec<f64> = (0..dim).map(ln_factorial).collect();
    (0..dim)
        .map(|k| {
            let entries = (0..dim - k)
                .filter_map(|n| {
                    let ln_binom = lnf[n + k] - lnf[n] - lnf[k];
                    let v = (0.5 * (ln_binom + k as f64 * ln_t - (n + 1) as f64 * ln_g)).exp();
                    (v > ENTRY_CUTOFF).then_some((n + k, n, C64::new(v, 0.0)))
                })
                .collect();
            KrausOperator { dim, entries }
        })
        .filter(|k| k.nnz() > 0)
        .collect()
}

/// Kraus family of the pure-loss channel obtained from a beam splitter of
/// transmissivity `T` with a vacuum environment, tracing out the environment
/// in the Fock basis: `A_k|n⟩ = √C(n, k) · (1−T)^{k/2} · T^{(n−k)/2} |n−k⟩`.
fn attenuator_kraus(transmissivity: f64, dim: usize) -> Vec<KrausOperator> {
    let t = transmissivity;
    if t == 1.0 {
        return vec![KrausOperator::from_dense(&DMatrix::identity(dim, dim))];
    }
    let lnf: Vec<f64> = (0..dim).map(ln_factorial).collect();
    let ln_loss = (1.0 - t).ln();
    (0..dim)
        .map(|k| {
            let entries = (k..dim)
                .filter_map(|n| {
                    let v = if t == 0.0 {
                        if n == k {
                            1.0
                        } else {
                            0.0
                        }
                    } else {
                        let ln_binom = lnf[n] - lnf[k] - lnf[n - k];
                        (0.5 * (ln_binom + k as f64 * ln_loss + (n - k) as f64 * t.ln())).exp()
                    };
                    (v > ENTRY_CUTOFF).then_some((n - k, n, C64::new(v, 0.0)))
                })
                .collect();
            KrausOperator { dim, entries }
        })
        .filter(|k| k.nnz() > 0)
        .collect()
}

/// Random operation whose Kraus operators are the `D × D` blocks of a random
/// isometry (orthonormalized complex Gaussian `kD × D` matrix). With
/// `trace_decreasing`, every operator is followed by a random contraction with
/// singular values in `[0.2, 0.95]`, so `Σ K†K ≺ I` strictly.
pub fn random_operation(dim: usize, kraus: usize, trace_decreasing: bool, seed: u64) -> Result<KrausChannel> {
    if kraus == 0 {
        return Err(invalid("a random operation needs at least one Kraus operator"));
    }
    if dim < 2 {
        return Err(invalid(format!("truncation dimension must be at least 2, got {dim}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rows = kraus * dim;
    let gauss = DMatrix::from_fn(rows, dim, |_, _| {
        C64::new(rng.sample(StandardNormal), rng.sample(StandardNormal))
    });
    let q = gauss.qr().q();
    let contraction = if trace_decreasing {
        let w = DMatrix::from_fn(dim, dim, |_, _| C64::new(rng.sample(StandardNormal), rng.sample(StandardNormal)))
            .qr()
            .q();
        let s = DVector::from_fn(dim, |_, _| C64::new(rng.random_range(0.2..0.95), 0.0));
        Some(&w * DMatrix::from_diagonal(&s) * w.adjoint())
    } else {
        None
    };
    let ops = (0..kraus)
        .map(|b| {
            let block = q.rows(b * dim, dim).into_owned();
            let k = match &contraction {
                Some(c) => block * c,
                None => block,
            };
            KrausOperator::from_dense(&k)
        })
        .collect();
    KrausChannel::from_sparse(
        dim,
        ops,
        ChannelSpec::Random {
            kraus,
            trace_decreasing,
            seed,
        },
    )
}

/// Measure-and-prepare phase conjugator in Fock form,
/// `ρ ↦ π⁻¹ ∫ d²β ⟨β|ρ|β⟩ |√G β*⟩⟨√G β*|`.
///
/// Only terms with `n + m = n' + m'` survive the angular integral, and the
/// radial one is `k!/(1+G)^{k+1}`, giving
/// `out[m,m'] = Σ ρ[n,n'] G^{(m+m')/2} (n+m)! / ((1+G)^{n+m+1} √(n! n'! m! m'!))`.
pub fn measure_prepare_apply(rho: &DensityMatrix, gain: f64) -> Result<DensityMatrix> {
    if rho.modes() != 1 {
        return Err(invalid("measure-and-prepare acts on single-mode states"));
    }
    if !(gain >= 0.0) || !gain.is_finite() {
        return Err(invalid(format!("measure-and-prepare gain must be ≥ 0, got {gain}")));
    }
    let d = rho.dim();
    let lnf: Vec<f64> = (0..2 * d).map(ln_factorial).collect();
    let ln_g = gain.ln();
    let ln_1g = (1.0 + gain).ln();
    let src = rho.entries();
    let mut acc = DMatrix::<C64>::zeros(d, d);
    for m in 0..d {
        for mp in 0..d {
            let mut sum = C64::new(0.0, 0.0);
            for n in 0..d {
                // n' = n + m − m'
                let np = n as isize + m as isize - mp as isize;
                if np < 0 || np >= d as isize {
                    continue;
                }
                let np = np as usize;
                let k = n + m;
                let gain_part = if m + mp == 0 { 0.0 } else { 0.5 * (m + mp) as f64 * ln_g };
                let ln_c = gain_part + lnf[k] - (k + 1) as f64 * ln_1g
                    - 0.5 * (lnf[n] + lnf[np] + lnf[m] + lnf[mp]);
                sum += src[(n, np)] * ln_c.exp();
            }
            acc[(m, mp)] = sum;
        }
    }
    Ok(DensityMatrix::from_raw(d, 1, acc))
}
