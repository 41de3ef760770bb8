//! Gaussian ensemble of coherent states and ensemble-averaged observables.
//!
//! The ensemble is `p_λ(α) = (λ/π) e^{−λ|α|²}`. Channel moments are reduced
//! per input amplitude to a [`PointMoments`] record; the η-independent
//! integrals of those records ([`EnsembleIntegrals`]) then give the mean
//! square deviations of any task without re-integrating.

use std::io::{Read, Write};
use std::path::Path;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channels::{build_channel, ChannelSpec, KrausChannel};
use crate::error::{invalid, Error, Result};
use crate::fock::{self, coherent_amplitudes, DensityMatrix, Quadrature, C64};
use crate::gaussian::{apply_gaussian_channel, GaussianChannelSpec, GaussianState};
use crate::numeric::{gauss_hermite_rule, ln_factorial, CompensatedSum};

pub const DEFAULT_GH_ORDER: usize = 48;
/// Tensor nodes whose weight falls below this fraction of the largest are dropped.
pub const GH_PRUNE_REL: f64 = 1e-16;
/// Slack on `P_s ≤ 1` and `F ≤ P_s`.
pub const WEIGHT_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prior {
    pub lambda: f64,
}

impl Prior {
    pub fn new(lambda: f64) -> Result<Self> {
        if !(lambda > 0.0) || !lambda.is_finite() {
            return Err(invalid(format!("prior inverse width λ must be positive, got {lambda}")));
        }
        Ok(Self { lambda })
    }

    pub fn density(&self, alpha: C64) -> f64 {
        self.lambda / std::f64::consts::PI * (-self.lambda * alpha.norm_sqr()).exp()
    }

    /// Draws `α` with independent `N(0, 1/(2λ))` real and imaginary parts.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> C64 {
        let normal = Normal::new(0.0, (0.5 / self.lambda).sqrt()).expect("positive width");
        C64::new(normal.sample(rng), normal.sample(rng))
    }
}

/// Gain pair of an amplification (or, with `conjugate`, phase-conjugation) task.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Task {
    pub eta_x: f64,
    pub eta_p: f64,
    pub conjugate: bool,
}

impl Task {
    pub fn new(eta_x: f64, eta_p: f64, conjugate: bool) -> Result<Self> {
        for (name, v) in [("η_x", eta_x), ("η_p", eta_p)] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(invalid(format!("task gain {name} must be positive, got {v}")));
            }
        }
        Ok(Self {
            eta_x,
            eta_p,
            conjugate,
        })
    }

    pub fn symmetric(eta: f64, conjugate: bool) -> Result<Self> {
        Self::new(eta, eta, conjugate)
    }

    pub fn validate(&self) -> Result<()> {
        Self::new(self.eta_x, self.eta_p, self.conjugate).map(|_| ())
    }

    /// `√(η_x η_p)`.
    pub fn eta(&self) -> f64 {
        (self.eta_x * self.eta_p).sqrt()
    }

    pub fn gain(&self, which: Quadrature) -> f64 {
        match which {
            Quadrature::X => self.eta_x,
            Quadrature::P => self.eta_p,
        }
    }

    /// Sign of the target mean: −1 for `p` under conjugation.
    pub fn sign(&self, which: Quadrature) -> f64 {
        if self.conjugate && which == Quadrature::P {
            -1.0
        } else {
            1.0
        }
    }

    /// Target quadrature mean `±√η_z z_α`.
    pub fn target_mean(&self, which: Quadrature, alpha: C64) -> f64 {
        self.sign(which) * self.gain(which).sqrt() * which.of_amplitude(alpha)
    }

    /// Fidelity target amplitude `√η α` (or `√η α*`).
    pub fn target_amplitude(&self, alpha: C64) -> C64 {
        let a = if self.conjugate { alpha.conj() } else { alpha };
        a * self.eta().sqrt()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "scheme", rename_all = "snake_case")]
pub enum IntegrationGrid {
    GaussHermite { order: usize },
    MonteCarlo { samples: usize, seed: u64 },
}

impl Default for IntegrationGrid {
    fn default() -> Self {
        IntegrationGrid::GaussHermite {
            order: DEFAULT_GH_ORDER,
        }
    }
}

impl IntegrationGrid {
    pub fn validate(&self) -> Result<()> {
        match *self {
            IntegrationGrid::GaussHermite { order } if order < 8 => {
                Err(invalid(format!("Gauss-Hermite order must be at least 8, got {order}")))
            }
            IntegrationGrid::MonteCarlo { samples, .. } if samples < 10_000 => Err(invalid(format!(
                "Monte Carlo needs at least 10⁴ samples, got {samples}"
            ))),
            _ => Ok(()),
        }
    }

    /// Nodes `(α, w)` with `Σ w f(α) ≈ ∫ p_λ(α) f(α) d²α`.
    pub fn nodes(&self, prior: &Prior) -> Result<Vec<(C64, f64)>> {
        self.nodes_damped(prior, false)
    }

    /// With `damped`, Gauss-Hermite nodes follow `p_λ(α) e^{−|α|²}` and the
    /// weights carry `e^{|α|²}`, which integrates `e^{−|α|²} × polynomial`
    /// exactly once the order exceeds the polynomial degree.
    pub fn nodes_damped(&self, prior: &Prior, damped: bool) -> Result<Vec<(C64, f64)>> {
        self.validate()?;
        match *self {
            IntegrationGrid::GaussHermite { order } => {
                let rule = gauss_hermite_rule(order)?;
                let width = if damped { 1.0 + prior.lambda } else { prior.lambda };
                let factor = prior.lambda / width;
                let scale = 1.0 / width.sqrt();
                let w_max = rule.iter().map(|r| r.1).fold(0.0, f64::max);
                // finite-support integrands have no truncation limit, so keep every node
                let cut = if damped { 0.0 } else { GH_PRUNE_REL * w_max * w_max };
                let mut nodes = Vec::new();
                for &(u, wu) in &rule {
                    for &(v, wv) in &rule {
                        let w = wu * wv;
                        if w >= cut {
                            let alpha = C64::new(u * scale, v * scale);
                            let boost = if damped { alpha.norm_sqr().exp() } else { 1.0 };
                            nodes.push((alpha, factor * boost * w / std::f64::consts::PI));
                        }
                    }
                }
                Ok(nodes)
            }
            IntegrationGrid::MonteCarlo { samples, seed } => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let w = 1.0 / samples as f64;
                Ok((0..samples).map(|_| (prior.sample(&mut rng), w)).collect())
            }
        }
    }
}

/// Per-input moments of the unnormalized output: `tr 𝓔(ρ_α)`, `tr[z 𝓔(ρ_α)]`,
/// `tr[z² 𝓔(ρ_α)]`, indexed `[x, p]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PointMoments {
    pub weight: f64,
    pub first: [f64; 2],
    pub second: [f64; 2],
}

/// Per-input evaluation of a prepared channel.
pub trait PointEvaluator: Sync {
    fn moments(&self, alpha: C64) -> PointMoments;
    /// `⟨β|𝓔(|α⟩⟨α|)|β⟩`.
    fn overlap(&self, alpha: C64, target: C64) -> f64;
}

/// A channel that can be averaged over the coherent-state ensemble.
pub trait EnsembleChannel: Sync {
    fn describe(&self) -> String;
    /// Fails when the channel cannot represent inputs with `|α| ≤ alpha_max`.
    fn check_support(&self, alpha_max: f64) -> Result<()>;
    /// True when the channel reads only finitely many Fock levels, so that
    /// per-input moments are `e^{−|α|²}` times a polynomial in `α, ᾱ`.
    fn finite_support(&self) -> bool {
        false
    }
    fn evaluator(&self) -> Result<Box<dyn PointEvaluator + '_>>;
}

struct FockEvaluator<'a> {
    channel: &'a KrausChannel,
    dim: usize,
    // 𝓔†(I), 𝓔†(x), 𝓔†(x²), 𝓔†(p), 𝓔†(p²)
    duals: [DMatrix<C64>; 5],
}

fn quadratic_form(m: &DMatrix<C64>, v: &nalgebra::DVector<C64>) -> f64 {
    v.dotc(&(m * v)).re
}

impl PointEvaluator for FockEvaluator<'_> {
    fn moments(&self, alpha: C64) -> PointMoments {
        let v = coherent_amplitudes(alpha, self.dim);
        let q: Vec<f64> = self.duals.iter().map(|m| quadratic_form(m, &v)).collect();
        PointMoments {
            weight: q[0],
            first: [q[1], q[3]],
            second: [q[2], q[4]],
        }
    }

    fn overlap(&self, alpha: C64, target: C64) -> f64 {
        let v = coherent_amplitudes(alpha, self.dim);
        let t = coherent_amplitudes(target, self.dim);
        self.channel.pure_overlap(&v, &t)
    }
}

impl EnsembleChannel for KrausChannel {
    fn describe(&self) -> String {
        format!("{:?} (Fock, D = {})", self.label(), self.dim())
    }

    fn finite_support(&self) -> bool {
        matches!(self.label(), ChannelSpec::Nla(_) | ChannelSpec::Random { .. })
    }

    fn check_support(&self, alpha_max: f64) -> Result<()> {
        match self.label().required_dim(alpha_max) {
            Some(required) if required > self.dim() => Err(Error::Truncation {
                context: format!("{:?} on inputs with |α| ≤ {alpha_max:.3}", self.label()),
                required,
                actual: self.dim(),
            }),
            _ => Ok(()),
        }
    }

    fn evaluator(&self) -> Result<Box<dyn PointEvaluator + '_>> {
        let d = self.dim();
        let ops = [
            DMatrix::identity(d, d),
            fock::quadrature_matrix(Quadrature::X, d),
            fock::quadrature_squared_matrix(Quadrature::X, d),
            fock::quadrature_matrix(Quadrature::P, d),
            fock::quadrature_squared_matrix(Quadrature::P, d),
        ];
        let duals: Vec<DMatrix<C64>> = ops
            .par_iter()
            .map(|m| self.heisenberg(m))
            .collect::<Result<_>>()?;
        let duals: [DMatrix<C64>; 5] = duals.try_into().expect("five duals");
        Ok(Box::new(FockEvaluator {
            channel: self,
            dim: d,
            duals,
        }))
    }
}

/// Sequence of Gaussian channels applied left to right.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianChain(pub Vec<GaussianChannelSpec>);

impl GaussianChain {
    pub fn output(&self, alpha: C64) -> Result<GaussianState> {
        let mut state = GaussianState::coherent(alpha)?;
        for spec in &self.0 {
            state = apply_gaussian_channel(&state, spec)?;
        }
        Ok(state)
    }
}

impl GaussianChain {
    /// Moment-backend equivalent of a channel descriptor, when it has one.
    pub fn from_spec(spec: &ChannelSpec) -> Result<Option<Self>> {
        Ok(match spec {
            ChannelSpec::Identity => Some(GaussianChain(vec![])),
            ChannelSpec::GaussianAmp { gain } | ChannelSpec::GaussianAttenuator { gain } => {
                Some(GaussianChain(vec![GaussianChannelSpec::quantum_limited(*gain)?]))
            }
            ChannelSpec::SqueezerConjugated { inner, r } => GaussianChain::from_spec(inner)?.map(|mut chain| {
                chain.0.push(GaussianChannelSpec::Squeezer { r: *r });
                chain
            }),
            ChannelSpec::Nla(_) | ChannelSpec::Random { .. } => None,
        })
    }
}

impl From<GaussianChannelSpec> for GaussianChain {
    fn from(spec: GaussianChannelSpec) -> Self {
        GaussianChain(vec![spec])
    }
}

impl PointEvaluator for GaussianChain {
    fn moments(&self, alpha: C64) -> PointMoments {
        let state = self.output(alpha).expect("validated chain");
        let m = &state.moments()[0];
        PointMoments {
            weight: 1.0,
            first: [m.mean_x, m.mean_p],
            second: [m.var_x + m.mean_x * m.mean_x, m.var_p + m.mean_p * m.mean_p],
        }
    }

    fn overlap(&self, alpha: C64, target: C64) -> f64 {
        self.output(alpha)
            .and_then(|s| s.coherent_overlap(target))
            .expect("validated chain")
    }
}

impl EnsembleChannel for GaussianChain {
    fn describe(&self) -> String {
        format!("{:?} (Gaussian moments)", self.0)
    }

    fn check_support(&self, _alpha_max: f64) -> Result<()> {
        Ok(())
    }

    fn evaluator(&self) -> Result<Box<dyn PointEvaluator + '_>> {
        for spec in &self.0 {
            spec.validate()?;
        }
        Ok(Box::new(self.clone()))
    }
}

impl EnsembleChannel for GaussianChannelSpec {
    fn describe(&self) -> String {
        format!("{self:?} (Gaussian moments)")
    }

    fn check_support(&self, _alpha_max: f64) -> Result<()> {
        Ok(())
    }

    fn evaluator(&self) -> Result<Box<dyn PointEvaluator + '_>> {
        self.validate()?;
        Ok(Box::new(GaussianChain(vec![*self])))
    }
}

/// Ensemble integrals that do not depend on the task gains, indexed `[x, p]`:
/// `second = ∫p tr[z²𝓔]`, `cross = ∫p z_α tr[z𝓔]`, `target = ∫p z_α² tr𝓔`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnsembleIntegrals {
    pub lambda: f64,
    pub p_s: f64,
    pub second: [f64; 2],
    pub cross: [f64; 2],
    pub target: [f64; 2],
}

impl EnsembleIntegrals {
    /// `V̄_z = second − 2(±√η_z) cross + η_z target`.
    pub fn vbar(&self, task: &Task, which: Quadrature) -> f64 {
        let i = which as usize;
        let c = task.sign(which) * task.gain(which).sqrt();
        let v = self.second[i] - 2.0 * c * self.cross[i] + c * c * self.target[i];
        v.max(0.0)
    }

    pub fn summary(&self, task: &Task) -> MomentSummary {
        MomentSummary {
            p_s: self.p_s,
            vbar_x: self.vbar(task, Quadrature::X),
            vbar_p: self.vbar(task, Quadrature::P),
            fidelity: None,
            task: *task,
            lambda: self.lambda,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MomentSummary {
    pub p_s: f64,
    pub vbar_x: f64,
    pub vbar_p: f64,
    pub fidelity: Option<f64>,
    pub task: Task,
    pub lambda: f64,
}

impl MomentSummary {
    pub fn vbar(&self, which: Quadrature) -> f64 {
        match which {
            Quadrature::X => self.vbar_x,
            Quadrature::P => self.vbar_p,
        }
    }

    /// Conditional MSDs `V̄_z / P_s`.
    pub fn conditional(&self) -> (f64, f64) {
        (self.vbar_x / self.p_s, self.vbar_p / self.p_s)
    }
}

fn max_amplitude(nodes: &[(C64, f64)]) -> f64 {
    nodes.iter().map(|(a, _)| a.norm()).fold(0.0, f64::max)
}

fn ordered_sum(values: &[f64]) -> f64 {
    values.iter().copied().collect::<CompensatedSum>().value()
}

/// `∫ p_λ(α) e^{−|α|²} |α|^{2k} d²α = λ k! / (1+λ)^{k+1}`.
pub fn prior_moment(lambda: f64, k: usize) -> f64 {
    (lambda.ln() + ln_factorial(k) - (k + 1) as f64 * (1.0 + lambda).ln()).exp()
}

/// `(√G − √η)²/λ + (G + |G − 1|)/2` for the quantum-limited channel of gain `G`.
pub fn gaussian_amp_msd_closed(gain: f64, eta: f64, lambda: f64) -> f64 {
    (gain.sqrt() - eta.sqrt()).powi(2) / lambda + 0.5 * (gain + (gain - 1.0).abs())
}

/// Fock realization of `spec` at the dimension required by the largest
/// input amplitude on `grid`.
pub fn fock_channel_for_grid(spec: &ChannelSpec, prior: &Prior, grid: &IntegrationGrid) -> Result<KrausChannel> {
    let alpha_max = max_amplitude(&grid.nodes(prior)?);
    let dim = spec.required_dim(alpha_max).ok_or_else(|| {
        invalid("random operations have no natural dimension; build them with an explicit one")
    })?;
    build_channel(spec, dim)
}

pub fn ensemble_integrals(
    channel: &dyn EnsembleChannel,
    prior: &Prior,
    grid: &IntegrationGrid,
) -> Result<EnsembleIntegrals> {
    integrate(channel, prior, grid, true)
}

/// With `check_support = false` the inputs are the truncated coherent
/// vectors as they are, which is what the bipartite (Choi) picture sees.
pub(crate) fn integrate(
    channel: &dyn EnsembleChannel,
    prior: &Prior,
    grid: &IntegrationGrid,
    check_support: bool,
) -> Result<EnsembleIntegrals> {
    let nodes = grid.nodes_damped(prior, !check_support || channel.finite_support())?;
    if check_support {
        channel.check_support(max_amplitude(&nodes))?;
    }
    let eval = channel.evaluator()?;
    let per_node: Vec<[f64; 7]> = nodes
        .par_iter()
        .map(|&(alpha, w)| {
            let m = eval.moments(alpha);
            let (xa, pa) = (Quadrature::X.of_amplitude(alpha), Quadrature::P.of_amplitude(alpha));
            [
                w * m.weight,
                w * m.second[0],
                w * m.second[1],
                w * xa * m.first[0],
                w * pa * m.first[1],
                w * xa * xa * m.weight,
                w * pa * pa * m.weight,
            ]
        })
        .collect();
    let column = |j: usize| ordered_sum(&per_node.iter().map(|r| r[j]).collect::<Vec<_>>());
    let p_s = column(0);
    if !(p_s > 0.0) || !p_s.is_finite() {
        return Err(Error::Integration(format!(
            "success probability integrated to {p_s}; quadrature weights underflowed"
        )));
    }
    if p_s > 1.0 + WEIGHT_TOL {
        return Err(Error::Integration(format!("success probability {p_s} exceeds 1")));
    }
    Ok(EnsembleIntegrals {
        lambda: prior.lambda,
        p_s: p_s.min(1.0),
        second: [column(1), column(2)],
        cross: [column(3), column(4)],
        target: [column(5), column(6)],
    })
}

pub fn msd_estimate(
    channel: &dyn EnsembleChannel,
    task: &Task,
    prior: &Prior,
    grid: &IntegrationGrid,
) -> Result<MomentSummary> {
    task.validate()?;
    Ok(ensemble_integrals(channel, prior, grid)?.summary(task))
}

/// `F = ∫ p_λ ⟨√η α|𝓔(ρ_α)|√η α⟩ d²α`, with target `√η α*` for conjugation.
pub fn fidelity_estimate(
    channel: &dyn EnsembleChannel,
    task: &Task,
    prior: &Prior,
    grid: &IntegrationGrid,
) -> Result<f64> {
    task.validate()?;
    let nodes = grid.nodes_damped(prior, channel.finite_support())?;
    channel.check_support(max_amplitude(&nodes).max(task.eta().sqrt() * max_amplitude(&nodes)))?;
    let eval = channel.evaluator()?;
    let terms: Vec<f64> = nodes
        .par_iter()
        .map(|&(alpha, w)| w * eval.overlap(alpha, task.target_amplitude(alpha)))
        .collect();
    let f = ordered_sum(&terms);
    if !f.is_finite() {
        return Err(Error::Integration(format!("fidelity integrated to {f}")));
    }
    Ok(f.clamp(0.0, 1.0))
}

/// [`msd_estimate`] together with the fidelity.
pub fn full_summary(
    channel: &dyn EnsembleChannel,
    task: &Task,
    prior: &Prior,
    grid: &IntegrationGrid,
) -> Result<MomentSummary> {
    let mut summary = msd_estimate(channel, task, prior, grid)?;
    summary.fidelity = Some(fidelity_estimate(channel, task, prior, grid)?);
    Ok(summary)
}

/// One homodyne shot.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SampleRecord {
    pub shot_id: u64,
    pub alpha_re: f64,
    pub alpha_im: f64,
    pub quad: Quadrature,
    pub value: f64,
    pub herald: u8,
}

impl SampleRecord {
    pub fn alpha(&self) -> C64 {
        C64::new(self.alpha_re, self.alpha_im)
    }

    pub fn heralded(&self) -> bool {
        self.herald == 1
    }

    fn validate(&self) -> Result<()> {
        if self.herald > 1 {
            return Err(invalid(format!("shot {}: herald must be 0 or 1", self.shot_id)));
        }
        for (name, v) in [("alpha_re", self.alpha_re), ("alpha_im", self.alpha_im), ("value", self.value)] {
            if !v.is_finite() {
                return Err(invalid(format!("shot {}: {name} is not finite", self.shot_id)));
            }
        }
        Ok(())
    }
}

pub fn read_samples<R: Read>(reader: R) -> Result<Vec<SampleRecord>> {
    let mut rdr = csv::Reader::from_reader(reader);
    let mut out = Vec::new();
    for (i, row) in rdr.deserialize::<SampleRecord>().enumerate() {
        let line = i as u64 + 2;
        let rec = row.map_err(|e| Error::Parse {
            line,
            message: e.to_string(),
        })?;
        rec.validate().map_err(|e| Error::Parse {
            line,
            message: e.to_string(),
        })?;
        out.push(rec);
    }
    Ok(out)
}

pub fn read_samples_file(path: &Path) -> Result<Vec<SampleRecord>> {
    read_samples(std::fs::File::open(path)?)
}

/// Writes records with round-trip float precision.
pub fn write_samples<W: Write>(writer: W, records: &[SampleRecord]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["shot_id", "alpha_re", "alpha_im", "quad", "value", "herald"])?;
    for r in records {
        let quad = match r.quad {
            Quadrature::X => "x",
            Quadrature::P => "p",
        };
        w.write_record([
            r.shot_id.to_string(),
            crate::numeric::fmt_f64(r.alpha_re),
            crate::numeric::fmt_f64(r.alpha_im),
            quad.to_string(),
            crate::numeric::fmt_f64(r.value),
            r.herald.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Jackknife standard errors of a sample estimate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SampleErrors {
    pub p_s: f64,
    pub vbar_x: f64,
    pub vbar_p: f64,
    /// Of the average conditional MSD `(V̄_x + V̄_p)/(2P_s)`.
    pub average_msd: f64,
}

struct Tally {
    n: f64,
    heralded: f64,
    count: [f64; 2],
    sq_dev: [f64; 2],
}

impl Tally {
    fn estimate(&self) -> Option<[f64; 3]> {
        if self.count[0] <= 0.0 || self.count[1] <= 0.0 || self.n <= 0.0 {
            return None;
        }
        let p_s = self.heralded / self.n;
        Some([
            p_s,
            p_s * self.sq_dev[0] / self.count[0],
            p_s * self.sq_dev[1] / self.count[1],
        ])
    }
}

fn tally(records: &[SampleRecord], task: &Task) -> (Tally, Vec<f64>) {
    let mut t = Tally {
        n: records.len() as f64,
        heralded: 0.0,
        count: [0.0; 2],
        sq_dev: [0.0; 2],
    };
    let mut sums = [CompensatedSum::new(), CompensatedSum::new()];
    let devs: Vec<f64> = records
        .iter()
        .map(|r| {
            let d = (r.value - task.target_mean(r.quad, r.alpha())).powi(2);
            if r.heralded() {
                t.heralded += 1.0;
                t.count[r.quad as usize] += 1.0;
                sums[r.quad as usize].add(d);
            }
            d
        })
        .collect();
    t.sq_dev = [sums[0].value(), sums[1].value()];
    (t, devs)
}

/// Moment estimate from homodyne shots: `P_s` is the heralded fraction and
/// `V̄_z = P_s ·` mean heralded squared deviation from `±√η_z z_α`.
pub fn estimate_from_samples(records: &[SampleRecord], task: &Task, prior_lambda: f64) -> Result<MomentSummary> {
    task.validate()?;
    Prior::new(prior_lambda)?;
    let (t, _) = tally(records, task);
    for q in Quadrature::BOTH {
        if t.count[q as usize] == 0.0 {
            return Err(Error::InsufficientData(format!(
                "no heralded shots for quadrature {q:?}"
            )));
        }
    }
    let [p_s, vbar_x, vbar_p] = t.estimate().expect("counts checked");
    Ok(MomentSummary {
        p_s,
        vbar_x,
        vbar_p,
        fidelity: None,
        task: *task,
        lambda: prior_lambda,
    })
}

/// Delete-one jackknife standard errors of [`estimate_from_samples`].
pub fn sample_errors(records: &[SampleRecord], task: &Task) -> Result<SampleErrors> {
    task.validate()?;
    let (t, devs) = tally(records, task);
    let n = records.len();
    if n < 2 {
        return Err(Error::InsufficientData("jackknife needs at least two shots".into()));
    }
    let mut leave_out = Vec::with_capacity(n);
    for (r, d) in records.iter().zip(&devs) {
        let mut u = Tally {
            n: t.n - 1.0,
            heralded: t.heralded,
            count: t.count,
            sq_dev: t.sq_dev,
        };
        if r.heralded() {
            u.heralded -= 1.0;
            u.count[r.quad as usize] -= 1.0;
            u.sq_dev[r.quad as usize] -= d;
        }
        let [p, vx, vp] = u.estimate().ok_or_else(|| {
            Error::InsufficientData("a quadrature has a single heralded shot; jackknife undefined".into())
        })?;
        leave_out.push([p, vx, vp, 0.5 * (vx + vp) / p]);
    }
    let nf = n as f64;
    let se = |j: usize| {
        let mean = leave_out.iter().map(|e| e[j]).sum::<f64>() / nf;
        let ss: f64 = leave_out.iter().map(|e| (e[j] - mean).powi(2)).sum();
        ((nf - 1.0) / nf * ss).sqrt()
    };
    Ok(SampleErrors {
        p_s: se(0),
        vbar_x: se(1),
        vbar_p: se(2),
        average_msd: se(3),
    })
}

/// Source of synthetic homodyne shots.
pub trait ShotSampler: Sync {
    /// Outcome of measuring `which` on the output for input `α`, or `None`
    /// when the operation does not herald success.
    fn shot(&self, alpha: C64, which: Quadrature, rng: &mut ChaCha8Rng) -> Result<Option<f64>>;
}

impl ShotSampler for GaussianChain {
    fn shot(&self, alpha: C64, which: Quadrature, rng: &mut ChaCha8Rng) -> Result<Option<f64>> {
        let m = self.output(alpha)?.moments()[0];
        let (mean, var) = match which {
            Quadrature::X => (m.mean_x, m.var_x),
            Quadrature::P => (m.mean_p, m.var_p),
        };
        let normal = Normal::new(mean, var.sqrt()).map_err(|e| invalid(e.to_string()))?;
        Ok(Some(normal.sample(rng)))
    }
}

const DENSITY_POINTS: usize = 601;

/// Tabulated cumulative distribution of one quadrature of a state.
#[derive(Debug, Clone)]
pub struct QuadratureTable {
    lo: f64,
    step: f64,
    cdf: Vec<f64>,
}

impl QuadratureTable {
    /// Tabulates the Hermite-function density of `ρ` (normalized internally)
    /// over twelve standard deviations around the mean.
    pub fn new(rho: &DensityMatrix, which: Quadrature) -> Result<Self> {
        let d = rho.dim();
        let z1 = rho.expect(&fock::quadrature_matrix(which, d))?.re;
        let z2 = rho.expect(&fock::quadrature_squared_matrix(which, d))?.re;
        let tr = rho.trace();
        let mean = z1 / tr;
        let sd = (z2 / tr - mean * mean).max(1e-6).sqrt();
        let half = 12.0 * sd + 1.0;
        let lo = mean - half;
        let step = 2.0 * half / (DENSITY_POINTS - 1) as f64;
        // ⟨p|n⟩ = (−i)ⁿ ψ_n(p); with real ψ only the real part of the
        // phase-folded Hermitian matrix contributes
        let phase = |n: usize| match which {
            Quadrature::X => C64::new(1.0, 0.0),
            Quadrature::P => C64::new(0.0, -1.0).powu(n as u32),
        };
        let m = DMatrix::from_fn(d, d, |i, j| (rho.entries()[(i, j)] * phase(i) * phase(j).conj()).re);
        let mut psi = nalgebra::DVector::zeros(d);
        let dens: Vec<f64> = (0..DENSITY_POINTS)
            .map(|k| {
                hermite_functions(lo + k as f64 * step, psi.as_mut_slice());
                psi.dot(&(&m * &psi)).max(0.0)
            })
            .collect();
        let mut cdf = vec![0.0; DENSITY_POINTS];
        for k in 1..DENSITY_POINTS {
            cdf[k] = cdf[k - 1] + 0.5 * step * (dens[k] + dens[k - 1]);
        }
        if !(cdf[DENSITY_POINTS - 1] > 0.0) {
            return Err(Error::Integration("quadrature density vanished".into()));
        }
        Ok(Self { lo, step, cdf })
    }

    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let n = self.cdf.len();
        let u = rng.random::<f64>() * self.cdf[n - 1];
        let k = self.cdf.partition_point(|&c| c < u).clamp(1, n - 1);
        let span = self.cdf[k] - self.cdf[k - 1];
        let frac = if span > 0.0 { (u - self.cdf[k - 1]) / span } else { 0.5 };
        self.lo + (k as f64 - 1.0 + frac) * self.step
    }
}

/// Draws one quadrature outcome from `ρ`.
pub fn sample_quadrature(rho: &DensityMatrix, which: Quadrature, rng: &mut ChaCha8Rng) -> Result<f64> {
    Ok(QuadratureTable::new(rho, which)?.draw(rng))
}

/// Hermite functions `ψ_n(z)` by the stable three-term recurrence.
fn hermite_functions(z: f64, out: &mut [f64]) {
    let d = out.len();
    out[0] = std::f64::consts::PI.powf(-0.25) * (-0.5 * z * z).exp();
    if d > 1 {
        out[1] = std::f64::consts::SQRT_2 * z * out[0];
    }
    for n in 2..d {
        let nf = n as f64;
        out[n] = (2.0 / nf).sqrt() * z * out[n - 1] - ((nf - 1.0) / nf).sqrt() * out[n - 2];
    }
}

impl ShotSampler for KrausChannel {
    fn shot(&self, alpha: C64, which: Quadrature, rng: &mut ChaCha8Rng) -> Result<Option<f64>> {
        self.check_support(alpha.norm())?;
        let rho = fock::coherent_state(alpha, self.dim())?.to_density();
        let (out, w) = self.apply(&rho)?;
        if rng.random::<f64>() >= w {
            return Ok(None);
        }
        sample_quadrature(&out, which, rng).map(Some)
    }
}

/// Synthetic shot record: `α` from the prior, quadratures alternating
/// `x, p` by shot index, and outcome `0` on non-heralded shots.
pub fn simulate_records(sampler: &dyn ShotSampler, prior: &Prior, shots: usize, seed: u64) -> Result<Vec<SampleRecord>> {
    (0..shots as u64)
        .into_par_iter()
        .map(|id| {
            // one stream per shot keeps the record independent of thread count
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(id);
            let alpha = prior.sample(&mut rng);
            let quad = if id % 2 == 0 { Quadrature::X } else { Quadrature::P };
            let value = sampler.shot(alpha, quad, &mut rng)?;
            Ok(SampleRecord {
                shot_id: id,
                alpha_re: alpha.re,
                alpha_im: alpha.im,
                quad,
                value: value.unwrap_or(0.0),
                herald: value.is_some() as u8,
            })
        })
        .collect()
}
