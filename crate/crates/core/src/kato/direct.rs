//! Direct evaluation of sup_x ∫_0^t ∫ p(s,x,y) ϖ(dy) ds on a kernel field.

use serde::{Deserialize, Serialize};

use super::measure::MeasureSpec;
use super::ClassVerdict;
use crate::error::KatoError;
use crate::parametrix::KernelField;
use crate::stats::linear_slope;

/// Head exponents b of F(s) ~ s^{-b} at or above this value make
/// ∫_0 F ds diverge on the ladder.
pub const HEAD_DIVERGENCE: f64 = 0.95;
/// Smallest log-log slope of the integral in t that counts as vanishing.
pub const VANISHING_SLOPE: f64 = 0.1;
/// The ladder must start at or below this time.
pub const MAX_FIRST_TIME: f64 = 1e-2;

/// Double integrals of the kernel against ϖ.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DirectReport {
    pub times: Vec<f64>,
    /// Sample points snapped to grid nodes.
    pub x_nodes: Vec<Vec<f64>>,
    /// F(s, x) = ∫ p(s,x,y) ϖ(dy), indexed [x][s].
    pub inner: Vec<Vec<f64>>,
    /// sup_x ∫_0^t F(s, x) ds per ladder time.
    pub sup_integrals: Vec<f64>,
    /// sup_x ∫_{s}^{t_max} F ds per ladder time s, the cutoff trend.
    pub cutoff_integrals: Vec<f64>,
    /// Largest fitted exponent b of F(s) ~ s^{-b} below the ladder.
    pub head_exponent: f64,
    /// Log-log slope of sup_integrals against t over the first decade.
    pub slope: f64,
    pub verdict: ClassVerdict,
}

/// Weights of ϖ on grid nodes: atoms by linear interpolation weights of
/// the kernel, density by exact cell masses.
fn node_weights(p: &KernelField, measure: &MeasureSpec) -> Vec<(usize, f64)> {
    let grid = p.grid();
    let mut out = Vec::new();
    if measure.dim == 1 {
        let h = grid.spacing();
        for z in 0..grid.len() {
            let c = grid.point(z)[0];
            let w = measure.interval_mass(c - 0.5 * h, c + 0.5 * h);
            if w > 0.0 {
                out.push((z, w));
            }
        }
    }
    out
}

/// F(s_i, x) at a grid node x.
fn inner_integral(p: &KernelField, measure: &MeasureSpec, cells: &[(usize, f64)], ti: usize, x: usize) -> f64 {
    let xp = p.grid().point(x);
    let atoms: f64 = measure.atoms.iter().map(|a| a.mass * p.value_at_point(ti, &xp, &a.location)).sum();
    atoms + cells.iter().map(|&(z, w)| w * p.value(ti, x, z)).sum::<f64>()
}

/// Direct Kato/Dynkin test on the ladder `t_ladder` (a subset of the field
/// times) over the sample points.
pub fn direct_class_check(
    p: &KernelField,
    measure: &MeasureSpec,
    t_ladder: &[f64],
    x_samples: &[Vec<f64>],
) -> Result<DirectReport, KatoError> {
    if measure.dim != p.grid().dim() {
        return Err(KatoError::InvalidMeasure("measure and kernel dimensions differ".into()));
    }
    let mut times = t_ladder.to_vec();
    times.sort_by(f64::total_cmp);
    let indices: Vec<usize> = times
        .iter()
        .map(|&t| p.time_index(t).ok_or_else(|| KatoError::KernelRange(format!("t = {t} is not a kernel time"))))
        .collect::<Result<_, _>>()?;
    if times.len() < 3 || times[0] > MAX_FIRST_TIME || times[times.len() - 1] < 10.0 * times[0] {
        return Err(KatoError::KernelRange(format!(
            "need at least 3 times starting at or below {MAX_FIRST_TIME} and spanning a decade, got {times:?}"
        )));
    }
    let grid = p.grid();
    let mut nodes: Vec<usize> = x_samples.iter().map(|x| grid.nearest_index(x)).collect();
    nodes.sort_unstable();
    nodes.dedup();
    let cells = node_weights(p, measure);
    let inner: Vec<Vec<f64>> = nodes
        .iter()
        .map(|&x| indices.iter().map(|&ti| inner_integral(p, measure, &cells, ti, x).max(0.0)).collect())
        .collect();

    let mut head_exponent = f64::NEG_INFINITY;
    let mut per_x = Vec::with_capacity(nodes.len());
    let mut cutoff_per_x = Vec::with_capacity(nodes.len());
    for f in &inner {
        let b = if f[0] > 0.0 && f[1] > 0.0 { -(f[1] / f[0]).ln() / (times[1] / times[0]).ln() } else { f64::NEG_INFINITY };
        head_exponent = head_exponent.max(b);
        let head = if f[0] == 0.0 {
            0.0
        } else if b < 1.0 {
            f[0] * times[0] / (1.0 - b)
        } else {
            f64::INFINITY
        };
        // trapezoid in ln s on F(s) s
        let mut cumulative = vec![head];
        for i in 1..times.len() {
            let step = (times[i] / times[i - 1]).ln();
            let piece = 0.5 * step * (f[i] * times[i] + f[i - 1] * times[i - 1]);
            cumulative.push(cumulative[i - 1] + piece);
        }
        let total_from_first = cumulative[times.len() - 1] - head;
        cutoff_per_x.push(cumulative.iter().map(|c| total_from_first - (c - head)).collect::<Vec<f64>>());
        per_x.push(cumulative);
    }
    let sup_over_x = |rows: &[Vec<f64>], i: usize| rows.iter().map(|r| r[i]).fold(0.0, f64::max);
    let sup_integrals: Vec<f64> = (0..times.len()).map(|i| sup_over_x(&per_x, i)).collect();
    let cutoff_integrals: Vec<f64> = (0..times.len()).map(|i| sup_over_x(&cutoff_per_x, i)).collect();

    let decade: Vec<(f64, f64)> = times
        .iter()
        .zip(&sup_integrals)
        .filter(|(t, v)| **t <= 10.0 * times[0] * (1.0 + 1e-12) && **v > 0.0 && v.is_finite())
        .map(|(t, v)| (t.ln(), v.ln()))
        .collect();
    let slope = if decade.len() >= 2 { linear_slope(&decade) } else { f64::NAN };

    let verdict = if sup_integrals.iter().all(|&v| v == 0.0) {
        ClassVerdict::InSk
    } else if head_exponent >= HEAD_DIVERGENCE || sup_integrals.iter().any(|v| !v.is_finite()) {
        ClassVerdict::Out
    } else if slope.is_nan() {
        ClassVerdict::Inconclusive
    } else if slope >= VANISHING_SLOPE {
        ClassVerdict::InSk
    } else {
        ClassVerdict::InSdOnly
    };
    let x_nodes = nodes.iter().map(|&i| grid.point(i)).collect();
    Ok(DirectReport {
        times,
        x_nodes,
        inner,
        sup_integrals,
        cutoff_integrals,
        head_exponent,
        slope,
        verdict,
    })
}
