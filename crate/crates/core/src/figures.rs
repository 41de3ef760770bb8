//! Data series for the uncertainty-product plane and the symmetric-MSD
//! versus gain plot, and the tabulated bounds for one parameter point.

use std::io::Write;

use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::bounds::{
    aup_rhs, aup_symmetric_msd, boundary_point, fidelity_bound, fixed_gain_product_bound, gaussian_min_msd,
    symmetric_msd_bound, task_boundary_point, theorem1_rhs,
};
use crate::ensemble::Task;
use crate::epr::{gaussian_threshold, EB_THRESHOLD};
use crate::error::{invalid, Result};
use crate::nla::{nla_asymptote, nla_optimal_gain};
use crate::numeric::fmt_f64;

/// Curve labels of the uncertainty-product plane, in output order.
pub const FIG1A_CURVES: [&str; 6] = [
    "boundary_normal",
    "boundary_conj",
    "ratio1_normal",
    "ratio2_normal",
    "ratio1_conj",
    "ratio2_conj",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Fig1aRow {
    pub curve: String,
    #[serde(rename = "R")]
    pub r: f64,
    pub vbar_x: f64,
    pub vbar_p: f64,
}

/// Boundary curves at fixed effective gain `η′` plus the uncertainty-product
/// limit for gain pairs with `η_x/η_p ∈ {1, 2}`, each over `R ∈ [−r_max, r_max]`.
pub fn fig1a(eta_prime: f64, lambda: f64, r_max: f64, steps: usize) -> Result<Vec<Fig1aRow>> {
    if !(eta_prime > 0.0) || !(lambda > 0.0) {
        return Err(invalid("η′ and λ must be positive"));
    }
    if steps < 2 || !(r_max > 0.0) {
        return Err(invalid("need at least two R steps over a positive range"));
    }
    let eta = eta_prime * (1.0 + lambda);
    let rs: Vec<f64> = (0..steps)
        .map(|i| -r_max + 2.0 * r_max * i as f64 / (steps - 1) as f64)
        .collect();
    let mut rows = Vec::with_capacity(6 * steps);
    for (curve, conj, ratio) in [
        ("boundary_normal", false, None),
        ("boundary_conj", true, None),
        ("ratio1_normal", false, Some(1.0f64)),
        ("ratio2_normal", false, Some(2.0)),
        ("ratio1_conj", true, Some(1.0)),
        ("ratio2_conj", true, Some(2.0)),
    ] {
        for &r in &rs {
            let (vx, vp) = match ratio {
                None => boundary_point(eta, lambda, conj, r),
                Some(q) => {
                    let task = Task::new(eta * q.sqrt(), eta / q.sqrt(), conj)?;
                    task_boundary_point(&task, lambda, r)
                }
            };
            rows.push(Fig1aRow {
                curve: curve.to_string(),
                r,
                vbar_x: vx,
                vbar_p: vp,
            });
        }
    }
    Ok(rows)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Fig1bRow {
    pub eta: f64,
    pub bound_normal: f64,
    pub bound_conj: f64,
    pub gaussian_min: f64,
    pub aup_normal: f64,
    pub aup_conj: f64,
}

pub fn fig1b(lambda: f64, eta_min: f64, eta_max: f64, steps: usize) -> Result<Vec<Fig1bRow>> {
    if !(lambda > 0.0) {
        return Err(invalid("λ must be positive"));
    }
    if !(eta_min >= 0.0) || !(eta_max > eta_min) || steps < 2 {
        return Err(invalid("need 0 ≤ eta_min < eta_max and at least two steps"));
    }
    Ok((0..steps)
        .map(|i| {
            let eta = eta_min + (eta_max - eta_min) * i as f64 / (steps - 1) as f64;
            Fig1bRow {
                eta,
                bound_normal: symmetric_msd_bound(eta, lambda, false),
                bound_conj: symmetric_msd_bound(eta, lambda, true),
                gaussian_min: gaussian_min_msd(eta, lambda),
                aup_normal: aup_symmetric_msd(eta, false),
                aup_conj: aup_symmetric_msd(eta, true),
            }
        })
        .collect())
}

pub fn write_fig1a_csv<W: Write>(writer: W, rows: &[Fig1aRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["curve", "R", "vbar_x", "vbar_p"])?;
    for r in rows {
        w.write_record([r.curve.clone(), fmt_f64(r.r), fmt_f64(r.vbar_x), fmt_f64(r.vbar_p)])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_fig1b_csv<W: Write>(writer: W, rows: &[Fig1bRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["eta", "bound_normal", "bound_conj", "gaussian_min", "aup_normal", "aup_conj"])?;
    for r in rows {
        w.write_record(
            [r.eta, r.bound_normal, r.bound_conj, r.gaussian_min, r.aup_normal, r.aup_conj].map(fmt_f64),
        )?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_fig1a_csv<R: std::io::Read>(reader: R) -> Result<Vec<Fig1aRow>> {
    let mut rdr = csv::Reader::from_reader(reader);
    Ok(rdr.deserialize().collect::<std::result::Result<_, _>>()?)
}

pub fn read_fig1b_csv<R: std::io::Read>(reader: R) -> Result<Vec<Fig1bRow>> {
    let mut rdr = csv::Reader::from_reader(reader);
    Ok(rdr.deserialize().collect::<std::result::Result<_, _>>()?)
}

/// Every closed-form limit at one `(η, λ)` point.
pub fn bounds_table(eta: f64, lambda: f64) -> Result<serde_json::Value> {
    if !(eta > 0.0) || !(lambda > 0.0) {
        return Err(invalid("η and λ must be positive"));
    }
    let normal = Task::symmetric(eta, false)?;
    let conj = Task::symmetric(eta, true)?;
    let fid_n = fidelity_bound(eta, lambda, false);
    let fid_c = fidelity_bound(eta, lambda, true);
    let nla_gain = nla_optimal_gain(eta, lambda).ok();
    Ok(json!({
        "eta": eta,
        "lambda": lambda,
        "effective_gain": eta / (1.0 + lambda),
        "theorem1_rhs": {"normal": theorem1_rhs(&normal, lambda), "conj": theorem1_rhs(&conj, lambda)},
        "fixed_gain_product_bound": {
            "normal": fixed_gain_product_bound(eta, lambda, false),
            "conj": fixed_gain_product_bound(eta, lambda, true),
        },
        "symmetric_msd_bound": {
            "normal": symmetric_msd_bound(eta, lambda, false),
            "conj": symmetric_msd_bound(eta, lambda, true),
        },
        "gaussian_min": gaussian_min_msd(eta, lambda),
        "fidelity_bound": {
            "normal": {"as_written": fid_n.as_written, "effective": fid_n.effective},
            "conj": {"as_written": fid_c.as_written, "effective": fid_c.effective},
        },
        "aup_rhs": {"normal": aup_rhs(eta, eta, false), "conj": aup_rhs(eta, eta, true)},
        "aup_symmetric_msd": {"normal": aup_symmetric_msd(eta, false), "conj": aup_symmetric_msd(eta, true)},
        "theorem2_rhs": gaussian_threshold(lambda),
        "eb_line": EB_THRESHOLD,
        "nla_optimal_gain": nla_gain,
        "nla_asymptote": nla_gain.map(|_| nla_asymptote(eta, lambda)),
    }))
}
