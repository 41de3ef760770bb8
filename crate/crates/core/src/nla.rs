//! Closed-form ensemble performance of the noiseless linear amplifier.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bounds::{gaussian_min_msd, symmetric_msd_bound};
use crate::channels::NlaConfig;
use crate::error::{invalid, Error, Result};
use crate::numeric::{fmt_f64, CompensatedSum};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NlaPerformance {
    /// Unnormalized symmetric MSD.
    pub vbar: f64,
    pub p_s: f64,
    /// `vbar / p_s`.
    pub vbar_prob: f64,
    pub config: NlaConfig,
    pub lambda: f64,
    pub eta: f64,
}

/// Symmetric MSD and success probability of `Q_N` on the ensemble:
///
/// `V̄ = c [(g−√η)² Σ_{n<N} g^{2n}(n+1)/(1+λ)^{n+1} + η g^{2N}(N+1)/(1+λ)^{N+1}
///        + ½ Σ_{n≤N} g^{2n}/(1+λ)^n]`,
/// `P_s = c Σ_{n≤N} (g²/(1+λ))^n`, with `c = 𝒩λ/(1+λ)`.
///
/// Every term is formed as the exponential of its logarithm so that large
/// `g^{2n}` never overflow on their own.
pub fn nla_msd(config: &NlaConfig, lambda: f64, eta: f64) -> Result<NlaPerformance> {
    config.validate()?;
    if !(lambda > 0.0) || !lambda.is_finite() {
        return Err(invalid(format!("λ must be positive, got {lambda}")));
    }
    if !(eta > 0.0) || !eta.is_finite() {
        return Err(invalid(format!("η must be positive, got {eta}")));
    }
    let n_max = config.cutoff;
    let ln_c = config.normalization.ln() + lambda.ln() - (1.0 + lambda).ln();
    let ln_g2 = 2.0 * config.g.ln();
    let ln_1l = (1.0 + lambda).ln();
    let term = |ln: f64| (ln_c + ln).exp();

    let mut drift = CompensatedSum::new();
    let mut vacuum = CompensatedSum::new();
    let mut weight = CompensatedSum::new();
    for n in 0..=n_max {
        let nf = n as f64;
        let geo = nf * ln_g2 - nf * ln_1l;
        weight.add(term(geo));
        vacuum.add(term(geo));
        if n < n_max {
            drift.add(term(geo + (nf + 1.0).ln() - ln_1l));
        }
    }
    let nf = n_max as f64;
    let tail = eta * term(nf * ln_g2 + (nf + 1.0).ln() - (nf + 1.0) * ln_1l);
    let offset = (config.g - eta.sqrt()).powi(2);
    let vbar = offset * drift.value() + tail + 0.5 * vacuum.value();
    let p_s = weight.value();
    if !vbar.is_finite() || !(p_s > 0.0) || !p_s.is_finite() {
        return Err(Error::Integration(format!(
            "NLA series out of range (vbar = {vbar}, p_s = {p_s})"
        )));
    }
    Ok(NlaPerformance {
        vbar,
        p_s,
        vbar_prob: vbar / p_s,
        config: *config,
        lambda,
        eta,
    })
}

/// NLA gain that drives the conditional MSD to the limit as `N → ∞`:
/// `√η` up to `η = 1+λ`, `(1+λ)/√η` beyond.
pub fn nla_optimal_gain(eta: f64, lambda: f64) -> Result<f64> {
    let upper = (1.0 + lambda).powi(2);
    if !(eta > 1.0 && eta < upper) {
        return Err(Error::OutOfDomain(format!(
            "η = {eta} is outside (1, (1+λ)²) = (1, {upper})"
        )));
    }
    Ok(if eta <= 1.0 + lambda {
        eta.sqrt()
    } else {
        (1.0 + lambda) / eta.sqrt()
    })
}

/// Large-`N` limit of the conditional MSD at the optimal gain.
pub fn nla_asymptote(eta: f64, lambda: f64) -> f64 {
    symmetric_msd_bound(eta, lambda, false)
}

/// Row of an NLA sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NlaSweepRow {
    pub performance: NlaPerformance,
    pub asymptote: f64,
    pub gaussian_min: f64,
}

/// Closed-form performance over the grid `gains × cutoffs × lambdas × etas`,
/// each with the saturating normalization.
pub fn nla_sweep(gains: &[f64], cutoffs: &[usize], lambdas: &[f64], etas: &[f64]) -> Result<Vec<NlaSweepRow>> {
    let mut grid = Vec::new();
    for &g in gains {
        for &n in cutoffs {
            for &l in lambdas {
                for &e in etas {
                    grid.push((g, n, l, e));
                }
            }
        }
    }
    grid.par_iter()
        .map(|&(g, n, l, e)| {
            let cfg = NlaConfig::saturating(g, n)?;
            Ok(NlaSweepRow {
                performance: nla_msd(&cfg, l, e)?,
                asymptote: nla_asymptote(e, l),
                gaussian_min: gaussian_min_msd(e, l),
            })
        })
        .collect()
}

pub const SWEEP_HEADER: [&str; 9] = ["g", "N", "lambda", "eta", "p_s", "vbar", "vbar_prob", "asymptote", "gaussian_min"];

pub fn write_sweep_csv<W: Write>(writer: W, rows: &[NlaSweepRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(SWEEP_HEADER)?;
    for r in rows {
        let p = &r.performance;
        w.write_record([
            fmt_f64(p.config.g),
            p.config.cutoff.to_string(),
            fmt_f64(p.lambda),
            fmt_f64(p.eta),
            fmt_f64(p.p_s),
            fmt_f64(p.vbar),
            fmt_f64(p.vbar_prob),
            fmt_f64(r.asymptote),
            fmt_f64(r.gaussian_min),
        ])?;
    }
    w.flush()?;
    Ok(())
}
