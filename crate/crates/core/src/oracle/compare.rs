//! Terminal positions against a kernel row p(t, x₀, ·) on the torus.

use serde::{Deserialize, Serialize};

use super::simulate::PathEnsemble;
use crate::error::OracleError;
use crate::parametrix::KernelField;

/// Bulk histogram bins span this many grid cells.
const BIN_CELLS: usize = 4;

/// Monte Carlo against kernel comparison.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalReport {
    pub t: f64,
    /// Grid node used as x₀.
    pub x0_node: Vec<f64>,
    pub n_paths: usize,
    /// Kolmogorov–Smirnov distance along the first axis (marginal in 2D).
    pub ks: f64,
    /// 1.63/√n, the 99% critical value.
    pub ks_critical_99: f64,
    /// sup |histogram − kernel| / sup kernel over |z − x₀| ≤ R/2.
    pub bulk_sup_error: f64,
    /// Radius beyond which tail masses are compared (R/4).
    pub tail_radius: f64,
    pub tail_mass_empirical: f64,
    pub tail_mass_kernel: f64,
    /// ∫ p(t, x₀, z) dz before normalization.
    pub kernel_mass: f64,
}

/// Compare the ensemble at time `t` with z ↦ p(t, x₀, z). Positions are
/// wrapped onto the grid box, the kernel row is normalized to unit mass.
pub fn empirical_vs_kernel(
    ensemble: &PathEnsemble,
    p: &KernelField,
    t: f64,
    x0: &[f64],
) -> Result<EmpiricalReport, OracleError> {
    let grid = p.grid();
    let dim = grid.dim();
    if ensemble.dim != dim || x0.len() != dim {
        return Err(OracleError::Invalid("ensemble, kernel and x0 dimensions differ".into()));
    }
    let ti = p.time_index(t).ok_or_else(|| OracleError::Invalid(format!("t = {t} is not a kernel time")))?;
    let ei = ensemble.time_index(t).ok_or_else(|| OracleError::Invalid(format!("t = {t} was not simulated")))?;
    let x_node = grid.nearest_index(x0);
    let x0_node = grid.point(x_node);
    let row = p.row(ti, x_node);
    let n = grid.nodes();
    let h = grid.spacing();
    let r = grid.half_width();

    // first-axis marginal density of the kernel at the axis nodes
    let mut marginal = vec![0.0; n];
    for (z, v) in row.iter().enumerate() {
        marginal[grid.unflatten(z)[0]] += v * h.powi(dim as i32 - 1);
    }
    let kernel_mass = h * marginal.iter().sum::<f64>();
    if !(kernel_mass > 0.0) {
        return Err(OracleError::Invalid("kernel row has no positive mass".into()));
    }
    for v in &mut marginal {
        *v /= kernel_mass;
    }
    // piecewise-linear periodic density on [−R, R): CDF at nodes
    let mut cdf_nodes = vec![0.0; n + 1];
    for k in 0..n {
        cdf_nodes[k + 1] = cdf_nodes[k] + 0.5 * h * (marginal[k] + marginal[(k + 1) % n]);
    }
    let cdf = |x: f64| -> f64 {
        let s = ((x + r) / h).clamp(0.0, n as f64 - 1e-12);
        let k = s.floor() as usize;
        let f = s - k as f64;
        let (a, b) = (marginal[k], marginal[(k + 1) % n]);
        cdf_nodes[k] + h * (a * f + 0.5 * (b - a) * f * f)
    };

    let positions = ensemble.positions_at(ei);
    let npaths = ensemble.n_paths;
    let mut first: Vec<f64> = (0..npaths).map(|i| grid.wrap(positions[i * dim])).collect();
    first.sort_by(f64::total_cmp);
    let nf = npaths as f64;
    let ks = first
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (((i + 1) as f64 / nf) - f).max(f - i as f64 / nf)
        })
        .fold(0.0, f64::max);

    // bulk histogram on bins of BIN_CELLS cells centred at nodes
    let bin = BIN_CELLS as f64 * h;
    let x0c = x0_node[0];
    let bins = (0.5 * r / bin).floor() as i64;
    let mut counts = vec![0usize; (2 * bins + 1) as usize];
    for &x in &first {
        let k = (grid.wrap(x - x0c) / bin).round() as i64;
        if k.abs() <= bins {
            counts[(k + bins) as usize] += 1;
        }
    }
    let peak = marginal.iter().copied().fold(0.0, f64::max);
    let mut bulk = 0.0f64;
    for (j, &c) in counts.iter().enumerate() {
        let centre = x0c + (j as i64 - bins) as f64 * bin;
        let mass = cdf_interval(&cdf, grid.wrap(centre - 0.5 * bin), bin, r);
        bulk = bulk.max((c as f64 / nf - mass).abs() / bin);
    }

    let tail_radius = 0.25 * r;
    let tail_mass_empirical = (0..npaths)
        .filter(|&i| {
            let d: f64 = (0..dim).map(|a| grid.wrap(positions[i * dim + a] - x0_node[a]).powi(2)).sum();
            d.sqrt() > tail_radius
        })
        .count() as f64
        / nf;
    let cell = h.powi(dim as i32);
    let tail_mass_kernel = row
        .iter()
        .enumerate()
        .filter(|(z, _)| grid.torus_distance(&grid.point(*z), &x0_node) > tail_radius)
        .map(|(_, v)| v * cell)
        .sum::<f64>()
        / kernel_mass;

    Ok(EmpiricalReport {
        t,
        x0_node,
        n_paths: npaths,
        ks,
        ks_critical_99: 1.63 / nf.sqrt(),
        bulk_sup_error: bulk / peak,
        tail_radius,
        tail_mass_empirical,
        tail_mass_kernel,
        kernel_mass,
    })
}

/// Mass of [a, a + w) on the circle [−R, R).
fn cdf_interval(cdf: &impl Fn(f64) -> f64, a: f64, w: f64, r: f64) -> f64 {
    let b = a + w;
    if b <= r {
        cdf(b) - cdf(a)
    } else {
        (1.0 - cdf(a)) + cdf(b - 2.0 * r)
    }
}
