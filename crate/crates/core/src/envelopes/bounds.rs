//! Upper compound kernel envelope, lower bound and the lattice fit of
//! their constants against a computed kernel.

use serde::{Deserialize, Serialize};

use crate::error::EnvelopeError;
use crate::frozen::SpatialGrid;
use crate::model::norm;
use crate::parametrix::KernelField;

use super::{from_spectrum, to_spectrum, CompoundScale, GridMeasure, Hierarchy, MeasureTag};

/// Constants of f_lower(x) = a₁(1 - a₂|x|)₊ and f_upper(x) = a₃e^{-a₄|x|}
/// together with the truncation depths used to evaluate the envelope.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnvelopeParams {
    pub a1: f64,
    pub a2: f64,
    pub a3: f64,
    pub a4: f64,
    /// Series weight A of Π.
    pub series_weight: f64,
    pub k_poisson: usize,
    pub k_pi: usize,
    /// Truncation M of Σ_m Q^{*m}/m!.
    pub series_terms: usize,
}

/// Σ_{m≤M} Q^{*m}/m! and the first omitted term Q(ℝⁿ)^{M+1}/(M+1)!.
pub fn compound_exponential(q: &GridMeasure, terms: usize) -> (GridMeasure, f64) {
    let grid = q.grid();
    let spec = q.spectrum();
    let mut acc = vec![num_complex::Complex64::new(1.0, 0.0); spec.len()];
    let mut term = acc.clone();
    for m in 1..=terms {
        for (tm, s) in term.iter_mut().zip(&spec) {
            *tm *= s / m as f64;
        }
        acc.iter_mut().zip(&term).for_each(|(a, b)| *a += b);
    }
    let mass = q.total_mass();
    let tail = (1..=terms + 1).fold(1.0, |acc, m| acc * mass / m as f64);
    (GridMeasure::from_spectrum(grid, MeasureTag::CompoundQ, q.time(), acc), tail)
}

/// ρⁿ e^{-a₄ρ‖u‖} at every displacement node.
fn upper_profile_unit(grid: &SpatialGrid, rho: f64, a4: f64) -> Vec<f64> {
    let scale = rho.powi(grid.dim() as i32);
    (0..grid.len()).map(|i| scale * (-a4 * rho * norm(&grid.point(i))).exp()).collect()
}

/// Σ_m (1/m!) ∫ ρⁿ f_upper((u - z)ρ) Q^{*m}(dz) at every displacement node u.
pub fn upper_envelope_profile(scale: &CompoundScale, params: &EnvelopeParams) -> Vec<f64> {
    let (compound, _) = compound_exponential(&scale.q, params.series_terms);
    let grid = scale.q.grid();
    let profile = upper_profile_unit(grid, scale.rho, params.a4);
    convolve_with_measure(grid, &profile, &compound).into_iter().map(|v| params.a3 * v).collect()
}

/// (f * M)(u) = Σ_z f(u - z) M{z} for a node function f.
fn convolve_with_measure(grid: &SpatialGrid, f: &[f64], measure: &GridMeasure) -> Vec<f64> {
    let a = to_spectrum(grid, f);
    let b = measure.spectrum();
    from_spectrum(grid, a.iter().zip(&b).map(|(x, y)| x * y).collect())
}

/// Upper envelope at a single displacement x.
pub fn eval_upper_envelope(x: &[f64], scale: &CompoundScale, params: &EnvelopeParams) -> f64 {
    let (compound, _) = compound_exponential(&scale.q, params.series_terms);
    let grid = scale.q.grid();
    let n = grid.dim() as i32;
    let mut acc = 0.0;
    for (i, w) in compound.weights().iter().enumerate() {
        if *w == 0.0 {
            continue;
        }
        let z = grid.point(i);
        let d = grid.torus_distance(x, &z);
        acc += w * (-params.a4 * scale.rho * d).exp();
    }
    params.a3 * scale.rho.powi(n) * acc
}

/// ρⁿ f_lower(xρ) = a₁ρⁿ(1 - a₂ρ‖x‖)₊.
pub fn eval_lower_bound(x: &[f64], rho: f64, params: &EnvelopeParams) -> f64 {
    params.a1 * rho.powi(x.len() as i32) * (1.0 - params.a2 * rho * norm(x)).max(0.0)
}

/// Lower bound at every displacement node.
pub fn lower_bound_profile(grid: &SpatialGrid, rho: f64, params: &EnvelopeParams) -> Vec<f64> {
    (0..grid.len()).map(|i| eval_lower_bound(&grid.point(i), rho, params)).collect()
}

/// Which ladder positions fit the constants and which verify them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitSplit {
    pub fit_times: Vec<f64>,
    pub heldout_times: Vec<f64>,
}

impl FitSplit {
    /// Even ladder positions fit, odd positions are held out.
    pub fn alternate(times: &[f64]) -> Self {
        let fit_times = times.iter().step_by(2).cloned().collect();
        let heldout_times = times.iter().skip(1).step_by(2).cloned().collect();
        Self { fit_times, heldout_times }
    }
}

/// Parameter lattice and evaluation controls for the fit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FitConfig {
    /// Points per axis of each logarithmic lattice.
    pub lattice: usize,
    pub a1_range: (f64, f64),
    pub a2_range: (f64, f64),
    pub a3_range: (f64, f64),
    pub a4_range: (f64, f64),
    pub series_terms: usize,
    /// Upper bound checked on ‖x - y‖ ≤ bulk_fraction · R.
    pub bulk_fraction: f64,
    pub series_weight: f64,
    pub k_poisson: usize,
    pub k_pi: usize,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            lattice: 32,
            a1_range: (1e-3, 10.0),
            a2_range: (1e-2, 1e2),
            a3_range: (1e-2, 1e2),
            a4_range: (1e-2, 1e1),
            series_terms: 30,
            bulk_fraction: 0.5,
            series_weight: 0.0,
            k_poisson: 20,
            k_pi: 0,
        }
    }
}

impl FitConfig {
    /// Copy the series weight and truncation depths of a hierarchy.
    pub fn with_hierarchy(mut self, hierarchy: &Hierarchy, k_poisson: usize) -> Self {
        self.series_weight = hierarchy.series_weight;
        self.k_pi = hierarchy.k_pi;
        self.k_poisson = k_poisson;
        self
    }
}

fn lattice(range: (f64, f64), count: usize) -> Vec<f64> {
    let (lo, hi) = range;
    (0..count).map(|i| lo * (hi / lo).powf(i as f64 / (count - 1) as f64)).collect()
}

/// Fitted constants with the verification ratios.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvelopeFit {
    pub params: EnvelopeParams,
    pub split: FitSplit,
    /// max p / upper envelope on the fitting times.
    pub upper_ratio_fit: f64,
    /// max lower bound / p on the fitting times.
    pub lower_ratio_fit: f64,
    /// max p / upper envelope on the held-out times.
    pub upper_ratio_heldout: f64,
    /// max lower bound / p on the held-out times.
    pub lower_ratio_heldout: f64,
    /// Largest first omitted term of the Q series, times ρⁿa₃.
    pub series_tail: f64,
    pub holds_heldout: bool,
}

/// Extremes of p over the (x, column) pairs sharing a displacement node.
struct DisplacementExtremes {
    rho: f64,
    compound: GridMeasure,
    tail: f64,
    /// max p per displacement within the bulk, -∞ outside.
    upper: Vec<f64>,
    /// min p per displacement, +∞ where no pair lands.
    lower: Vec<f64>,
}

fn displacement_extremes(
    p: &KernelField,
    ti: usize,
    scale: &CompoundScale,
    config: &FitConfig,
) -> DisplacementExtremes {
    let grid = p.grid();
    let len = grid.len();
    let origin = grid.unflatten(grid.origin_index());
    let bulk = config.bulk_fraction * grid.half_width();
    let mut upper = vec![f64::NEG_INFINITY; len];
    let mut lower = vec![f64::INFINITY; len];
    let within: Vec<bool> = (0..len).map(|d| norm(&grid.point(d)) <= bulk).collect();
    for (ci, &y) in p.columns().iter().enumerate() {
        let col = p.column(ti, ci);
        let yi = grid.unflatten(y);
        let shift = [origin[0] as i64 - yi[0] as i64, origin[1] as i64 - yi[1] as i64];
        for (x, &v) in col.iter().enumerate() {
            let d = grid.shifted(x, shift);
            if within[d] && v > upper[d] {
                upper[d] = v;
            }
            if v < lower[d] {
                lower[d] = v;
            }
        }
    }
    let (compound, tail) = compound_exponential(&scale.q, config.series_terms);
    DisplacementExtremes { rho: scale.rho, compound, tail, upper, lower }
}

/// Smallest lattice a₃, a₄ and largest lattice a₁, a₂ such that both bounds
/// hold on the fitting times, verified on the held-out times.
pub fn fit_envelope_constants(
    p: &KernelField,
    scales: &[CompoundScale],
    split: &FitSplit,
    config: &FitConfig,
) -> Result<EnvelopeFit, EnvelopeError> {
    if p.times().len() < 4 {
        return Err(EnvelopeError::Invalid(format!("fit needs at least 4 ladder times, got {}", p.times().len())));
    }
    let grid = p.grid().clone();
    let prepare = |times: &[f64]| -> Result<Vec<DisplacementExtremes>, EnvelopeError> {
        times
            .iter()
            .map(|&t| {
                let ti = p.time_index(t).ok_or_else(|| EnvelopeError::Invalid(format!("time {t} not in the kernel")))?;
                let scale = scales
                    .iter()
                    .find(|s| (s.t - t).abs() <= 1e-9 * t)
                    .ok_or_else(|| EnvelopeError::Invalid(format!("no envelope scale at t = {t}")))?;
                Ok(displacement_extremes(p, ti, scale, config))
            })
            .collect()
    };
    let fit = prepare(&split.fit_times)?;
    let held = prepare(&split.heldout_times)?;
    let vol = grid.cell_volume();

    // upper: for each a₄ the smallest lattice a₃, ranked by envelope mass
    let a3_lattice = lattice(config.a3_range, config.lattice);
    let mut best_upper: Option<(f64, f64, f64)> = None;
    for a4 in lattice(config.a4_range, config.lattice) {
        let mut need: f64 = 0.0;
        let mut mass = 0.0;
        for e in &fit {
            let env = unit_envelope(&grid, e, a4);
            need = need.max(upper_ratio(&e.upper, &env));
            mass += vol * env.iter().sum::<f64>();
        }
        let Some(&a3) = a3_lattice.iter().find(|&&a| a >= need) else { continue };
        if best_upper.map_or(true, |(_, _, m)| a3 * mass < m) {
            best_upper = Some((a3, a4, a3 * mass));
        }
    }
    let (a3, a4, _) = best_upper.ok_or_else(|| {
        EnvelopeError::NoFeasibleParams("no lattice (a3, a4) dominates the kernel on the fitting times".into())
    })?;

    // lower: for each a₂ the largest lattice a₁, ranked by a₁/a₂ⁿ
    let a1_lattice = lattice(config.a1_range, config.lattice);
    let n = grid.dim() as i32;
    let mut best_lower: Option<(f64, f64, f64)> = None;
    for a2 in lattice(config.a2_range, config.lattice) {
        let allowed = fit.iter().map(|e| lower_allowance(&grid, e, a2)).fold(f64::INFINITY, f64::min);
        let Some(&a1) = a1_lattice.iter().rev().find(|&&a| a <= allowed) else { continue };
        let score = a1 / a2.powi(n);
        if best_lower.map_or(true, |(_, _, s)| score > s) {
            best_lower = Some((a1, a2, score));
        }
    }
    let (a1, a2, _) = best_lower.ok_or_else(|| {
        EnvelopeError::NoFeasibleParams("no lattice (a1, a2) stays below the kernel on the fitting times".into())
    })?;

    let params = EnvelopeParams {
        a1,
        a2,
        a3,
        a4,
        series_weight: config.series_weight,
        k_poisson: config.k_poisson,
        k_pi: config.k_pi,
        series_terms: config.series_terms,
    };
    let ratios = |set: &[DisplacementExtremes]| {
        let mut up: f64 = 0.0;
        let mut low: f64 = 0.0;
        for e in set {
            let env: Vec<f64> = unit_envelope(&grid, e, a4).into_iter().map(|v| a3 * v).collect();
            up = up.max(upper_ratio(&e.upper, &env));
            low = low.max(a1 / lower_allowance(&grid, e, a2));
        }
        (up, low)
    };
    let (upper_ratio_fit, lower_ratio_fit) = ratios(&fit);
    let (upper_ratio_heldout, lower_ratio_heldout) = ratios(&held);
    let series_tail = fit
        .iter()
        .chain(&held)
        .map(|e| e.tail * e.rho.powi(n) * a3)
        .fold(0.0, f64::max);
    Ok(EnvelopeFit {
        params,
        split: split.clone(),
        upper_ratio_fit,
        lower_ratio_fit,
        upper_ratio_heldout,
        lower_ratio_heldout,
        series_tail,
        holds_heldout: upper_ratio_heldout <= 1.0 && lower_ratio_heldout <= 1.0,
    })
}

/// Upper envelope with a₃ = 1.
fn unit_envelope(grid: &SpatialGrid, e: &DisplacementExtremes, a4: f64) -> Vec<f64> {
    let profile = upper_profile_unit(grid, e.rho, a4);
    convolve_with_measure(grid, &profile, &e.compound)
}

fn upper_ratio(pmax: &[f64], env: &[f64]) -> f64 {
    pmax.iter()
        .zip(env)
        .filter(|(p, _)| p.is_finite())
        .map(|(p, v)| if *v > 0.0 { p / v } else if *p > 0.0 { f64::INFINITY } else { 0.0 })
        .fold(0.0, f64::max)
}

/// Largest a₁ with a₁ρⁿ(1 - a₂ρ‖u‖)₊ ≤ p at every displacement.
fn lower_allowance(grid: &SpatialGrid, e: &DisplacementExtremes, a2: f64) -> f64 {
    let n = grid.dim() as i32;
    let mut allowed = f64::INFINITY;
    for (d, &pmin) in e.lower.iter().enumerate() {
        let shape = e.rho.powi(n) * (1.0 - a2 * e.rho * norm(&grid.point(d)));
        if shape <= 0.0 || !pmin.is_finite() {
            continue;
        }
        allowed = allowed.min(pmin.max(0.0) / shape);
    }
    allowed
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::parametrix::FieldRole;
    use approx::assert_relative_eq;

    fn params() -> EnvelopeParams {
        EnvelopeParams {
            a1: 0.3,
            a2: 0.5,
            a3: 2.0,
            a4: 1.5,
            series_weight: 0.1,
            k_poisson: 20,
            k_pi: 13,
            series_terms: 20,
        }
    }

    #[test]
    fn zero_q_gives_scaled_profile() {
        let grid = SpatialGrid::new(1, 8.0, 256).unwrap();
        let scale = CompoundScale { t: 0.5, rho: 2.0, q: GridMeasure::zero(&grid, MeasureTag::Q, 0.5) };
        let p = params();
        assert_relative_eq!(eval_upper_envelope(&[0.0], &scale, &p), p.a3 * 2.0, epsilon = 1e-12);
        let x = 0.75;
        assert_relative_eq!(eval_upper_envelope(&[x], &scale, &p), 2.0 * p.a3 * (-p.a4 * 2.0 * x).exp(), epsilon = 1e-12);
        let profile = upper_envelope_profile(&scale, &p);
        let i = grid.nearest_index(&[x]);
        assert_relative_eq!(profile[i], eval_upper_envelope(&[x], &scale, &p), max_relative = 1e-10);
    }

    #[test]
    fn envelope_decreases_along_rays_without_jumps() {
        let grid = SpatialGrid::new(1, 8.0, 256).unwrap();
        let scale = CompoundScale { t: 0.5, rho: 2.0, q: GridMeasure::zero(&grid, MeasureTag::Q, 0.5) };
        let vals: Vec<f64> = (0..20).map(|k| eval_upper_envelope(&[0.1 * k as f64], &scale, &params())).collect();
        assert!(vals.windows(2).all(|w| w[1] < w[0]));
    }

    #[test]
    fn jumps_lift_the_tail() {
        let grid = SpatialGrid::new(1, 8.0, 256).unwrap();
        let mut weights = vec![0.0; grid.len()];
        weights[grid.nearest_index(&[3.0])] = 0.5;
        let q = GridMeasure::from_weights(&grid, MeasureTag::Q, 0.5, weights).unwrap();
        let with = CompoundScale { t: 0.5, rho: 2.0, q };
        let without = CompoundScale { t: 0.5, rho: 2.0, q: GridMeasure::zero(&grid, MeasureTag::Q, 0.5) };
        let p = params();
        let a = eval_upper_envelope(&[3.0], &with, &p);
        let b = eval_upper_envelope(&[3.0], &without, &p);
        assert!(a > 100.0 * b);
        let (compound, tail) = compound_exponential(&with.q, 20);
        assert_relative_eq!(compound.total_mass(), 0.5f64.exp(), max_relative = 1e-12);
        assert!(tail < 1e-20);
    }

    #[test]
    fn lower_bound_cutoff_and_peak() {
        let p = params();
        let rho = 4.0;
        assert_eq!(eval_lower_bound(&[1.0 / (p.a2 * rho)], rho, &p), 0.0);
        assert_eq!(eval_lower_bound(&[2.0], rho, &p), 0.0);
        assert_relative_eq!(eval_lower_bound(&[0.0], rho, &p), p.a1 * rho);
    }

    /// Heat kernel columns e^{-|x-y|²/4t}/√(4πt) with ρ_t = t^{-1/2}.
    fn gaussian_field(grid: &SpatialGrid, times: &[f64]) -> KernelField {
        let mut f = KernelField::zeros(FieldRole::P, grid, times, 8).unwrap();
        let cols = f.columns().to_vec();
        for (ti, &t) in times.iter().enumerate() {
            for (ci, &y) in cols.iter().enumerate() {
                let yp = grid.point(y);
                let col = f.column_mut(ti, ci);
                for (x, v) in col.iter_mut().enumerate() {
                    let d = grid.torus_distance(&grid.point(x), &yp);
                    *v = (-d * d / (4.0 * t)).exp() / (4.0 * std::f64::consts::PI * t).sqrt();
                }
            }
        }
        f
    }

    #[test]
    fn gaussian_kernel_is_enveloped_without_jumps() {
        let grid = SpatialGrid::new(1, 16.0, 512).unwrap();
        let times = [0.1, 0.2, 0.4, 0.6, 0.8, 1.0];
        let field = gaussian_field(&grid, &times);
        let scales: Vec<CompoundScale> = times
            .iter()
            .map(|&t| CompoundScale { t, rho: t.powf(-0.5), q: GridMeasure::zero(&grid, MeasureTag::Q, t) })
            .collect();
        let split = FitSplit::alternate(&times);
        let fit = fit_envelope_constants(&field, &scales, &split, &FitConfig::default()).unwrap();
        assert!(fit.upper_ratio_fit <= 1.0 && fit.lower_ratio_fit <= 1.0);
        assert!(fit.holds_heldout, "{fit:?}");
        assert!(fit.params.a1 > 0.0 && fit.params.a3 > 0.0);
    }

    #[test]
    fn infeasible_lattice_is_reported() {
        let grid = SpatialGrid::new(1, 16.0, 512).unwrap();
        let times = [0.1, 0.2, 0.4, 0.8];
        let field = gaussian_field(&grid, &times);
        let scales: Vec<CompoundScale> = times
            .iter()
            .map(|&t| CompoundScale { t, rho: t.powf(-0.5), q: GridMeasure::zero(&grid, MeasureTag::Q, t) })
            .collect();
        let config = FitConfig { a3_range: (1e-4, 1e-3), ..Default::default() };
        let err = fit_envelope_constants(&field, &scales, &FitSplit::alternate(&times), &config).unwrap_err();
        assert_eq!(err.code(), "NO_FEASIBLE_PARAMS");
    }
}
