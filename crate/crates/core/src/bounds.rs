//! Closed-form amplification limits and margin reports.
//!
//! Throughout, `η′ = η/(1+λ)` is the effective gain of a task with symmetric
//! gain `η = √(η_x η_p)` on the ensemble of inverse width `λ`, and the upper
//! sign in `∓` belongs to normal amplification, the lower to conjugation.

use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::ensemble::{MomentSummary, Task};
use crate::error::{invalid, Result};

/// Absolute slack on bound margins.
pub const MARGIN_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub bound_name: String,
    pub lhs: f64,
    pub rhs: f64,
    /// `lhs − rhs`; nonnegative when the bound holds.
    pub margin: f64,
    pub satisfied: bool,
    pub inputs: serde_json::Value,
}

impl BoundReport {
    fn new(name: &str, lhs: f64, rhs: f64, inputs: serde_json::Value) -> Self {
        Self::with_margin(name, lhs, rhs, lhs - rhs, inputs)
    }

    fn with_margin(name: &str, lhs: f64, rhs: f64, margin: f64, inputs: serde_json::Value) -> Self {
        Self {
            bound_name: name.to_string(),
            lhs,
            rhs,
            margin,
            satisfied: margin >= -MARGIN_TOL,
            inputs,
        }
    }
}

fn pm_one(conjugate: bool) -> f64 {
    if conjugate {
        1.0
    } else {
        -1.0
    }
}

/// `¼ |√(η_x η_p)/(1+λ) ∓ 1|²`.
pub fn theorem1_rhs(task: &Task, lambda: f64) -> f64 {
    0.25 * (task.eta() / (1.0 + lambda) + pm_one(task.conjugate)).powi(2)
}

/// The brackets `V̄_z/P_s − η_z/(2(1+λ))`, indexed `[x, p]`.
pub fn theorem1_brackets(summary: &MomentSummary) -> [f64; 2] {
    let (vx, vp) = summary.conditional();
    let scale = 2.0 * (1.0 + summary.lambda);
    [vx - summary.task.eta_x / scale, vp - summary.task.eta_p / scale]
}

/// Uncertainty-product limit valid for every trace-non-increasing operation:
/// `∏_z [V̄_z/P_s − η_z/(2(1+λ))] ≥ ¼ |η′ ∓ 1|²`.
///
/// The margin is `lhs − rhs` when both brackets are nonnegative; a negative
/// bracket is itself a violation and becomes the margin.
pub fn theorem1_margin(summary: &MomentSummary) -> BoundReport {
    let b = theorem1_brackets(summary);
    let lhs = b[0] * b[1];
    let rhs = theorem1_rhs(&summary.task, summary.lambda);
    let physical = b[0] >= -MARGIN_TOL && b[1] >= -MARGIN_TOL;
    let margin = if physical { lhs - rhs } else { b[0].min(b[1]) };
    BoundReport::with_margin(
        "theorem1",
        lhs,
        rhs,
        margin,
        json!({
            "task": summary.task,
            "lambda": summary.lambda,
            "p_s": summary.p_s,
            "vbar_x": summary.vbar_x,
            "vbar_p": summary.vbar_p,
            "brackets": b,
            "brackets_nonnegative": physical,
        }),
    )
}

/// Minimum of `V̄_x V̄_p` over gain splits at fixed `η`: `¼(η′ + |η′ ∓ 1|)²`.
pub fn fixed_gain_product_bound(eta: f64, lambda: f64, conjugate: bool) -> f64 {
    let e = eta / (1.0 + lambda);
    0.25 * (e + (e + pm_one(conjugate)).abs()).powi(2)
}

/// Point of the fixed-gain boundary: `½(η′ + |η′ ∓ 1|)(e^R, e^{−R})`.
pub fn boundary_point(eta: f64, lambda: f64, conjugate: bool, r: f64) -> (f64, f64) {
    let e = eta / (1.0 + lambda);
    let a = 0.5 * (e + (e + pm_one(conjugate)).abs());
    (a * r.exp(), a * (-r).exp())
}

/// Boundary of the uncertainty-product limit for a given gain pair, with the
/// conditional MSDs `½|η′ ∓ 1|(e^R, e^{−R}) + (η_x, η_p)/(2(1+λ))`.
pub fn task_boundary_point(task: &Task, lambda: f64, r: f64) -> (f64, f64) {
    let a = 0.5 * (task.eta() / (1.0 + lambda) + pm_one(task.conjugate)).abs();
    let s = 2.0 * (1.0 + lambda);
    (a * r.exp() + task.eta_x / s, a * (-r).exp() + task.eta_p / s)
}

/// Lower limit on `V̄ = V̄_x = V̄_p` for the symmetric task of gain `η`.
pub fn symmetric_msd_bound(eta: f64, lambda: f64, conjugate: bool) -> f64 {
    let e = eta / (1.0 + lambda);
    if conjugate {
        e + 0.5
    } else if eta <= 1.0 + lambda {
        0.5
    } else {
        e - 0.5
    }
}

/// Smallest symmetric MSD reachable with quantum-limited Gaussian channels.
pub fn gaussian_min_msd(eta: f64, lambda: f64) -> f64 {
    if eta <= 1.0 {
        0.5
    } else if eta < (1.0 + lambda).powi(2) {
        (eta.sqrt() - 1.0).powi(2) / lambda + 0.5
    } else {
        eta / (1.0 + lambda) - 0.5
    }
}

/// Fidelity limit on `F/P_s`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FidelityBound {
    /// `½((1+λ)/η + 1 + |(1+λ)/η − 1|)`, which equals `max(1, (1+λ)/η)`.
    pub as_written: f64,
    /// `min(1, (1+λ)/η)`, the form used for certification.
    pub effective: f64,
}

pub fn fidelity_bound(eta: f64, lambda: f64, conjugate: bool) -> FidelityBound {
    if conjugate {
        let f = (1.0 + lambda) / (1.0 + eta + lambda);
        FidelityBound {
            as_written: f,
            effective: f,
        }
    } else {
        let q = (1.0 + lambda) / eta;
        FidelityBound {
            as_written: 0.5 * (q + 1.0 + (q - 1.0).abs()),
            effective: q.min(1.0),
        }
    }
}

/// Compares `F/P_s` of a summary with the effective fidelity limit; the
/// margin is `limit − F/P_s`.
pub fn fidelity_margin(summary: &MomentSummary) -> Result<BoundReport> {
    let f = summary
        .fidelity
        .ok_or_else(|| invalid("summary carries no fidelity"))?;
    let bound = fidelity_bound(summary.task.eta(), summary.lambda, summary.task.conjugate);
    let ratio = f / summary.p_s;
    Ok(BoundReport::new(
        "fidelity",
        bound.effective,
        ratio,
        json!({
            "task": summary.task,
            "lambda": summary.lambda,
            "fidelity": f,
            "p_s": summary.p_s,
            "as_written": bound.as_written,
        }),
    ))
}

/// Linear gains and added noises of a phase-insensitive (or conjugating) map.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AupInput {
    pub gain_x: f64,
    pub gain_p: f64,
    pub noise_x: f64,
    pub noise_p: f64,
    pub conjugate: bool,
}

impl AupInput {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("G_x", self.gain_x),
            ("G_p", self.gain_p),
            ("N_x", self.noise_x),
            ("N_p", self.noise_p),
        ] {
            if !v.is_finite() {
                return Err(invalid(format!("{name} must be finite")));
            }
        }
        if self.gain_x < 0.0 || self.gain_p < 0.0 {
            return Err(invalid("AUP gains must be nonnegative"));
        }
        Ok(())
    }
}

/// `¼|√(G_x G_p) ∓ 1|²`.
pub fn aup_rhs(gain_x: f64, gain_p: f64, conjugate: bool) -> f64 {
    0.25 * ((gain_x * gain_p).sqrt() + pm_one(conjugate)).powi(2)
}

/// Amplifier uncertainty principle `N_x N_p ≥ ¼|√(G_x G_p) ∓ 1|²` for
/// trace-preserving linear maps.
pub fn aup_evaluate(input: &AupInput) -> Result<BoundReport> {
    input.validate()?;
    let lhs = input.noise_x * input.noise_p;
    let rhs = aup_rhs(input.gain_x, input.gain_p, input.conjugate);
    let added = |n: f64, g: f64| (g > 0.0).then(|| n / g);
    // the same right-hand side as the ensemble limit with λ = 0 and η_z = G_z
    let lambda0 = if input.gain_x > 0.0 && input.gain_p > 0.0 {
        let task = Task::new(input.gain_x, input.gain_p, input.conjugate)?;
        Some(theorem1_rhs(&task, 0.0))
    } else {
        None
    };
    Ok(BoundReport::new(
        "aup",
        lhs,
        rhs,
        json!({
            "input": input,
            "added_noise_x": added(input.noise_x, input.gain_x),
            "added_noise_p": added(input.noise_p, input.gain_p),
            "lambda0_rhs": lambda0,
            "lambda0_matches": lambda0.map(|v| (v - rhs).abs() <= 1e-12),
        }),
    ))
}

/// Symmetric AUP limit on `V̄` at gain `G`: `½(G + |G − 1|)`, or `G + ½`
/// for conjugation.
pub fn aup_symmetric_msd(gain: f64, conjugate: bool) -> f64 {
    if conjugate {
        gain + 0.5
    } else {
        0.5 * (gain + (gain - 1.0).abs())
    }
}
