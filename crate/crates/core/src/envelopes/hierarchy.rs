//! Time families of measures on a geometric master grid and the hierarchy
//! G_{t,λ}, G^{(k)}, Π_{t,λ}, Q_{t,λ}.
//!
//! A family F_s is stored as the spectra of s^{-e} F_s on the master grid,
//! with e its declared small-time exponent; between master nodes the
//! spectra are interpolated linearly in ln s. Time convolutions
//! (F ⋆ G)_t = ∫_0^t F_{t-s} * G_s ds split at t/2 and use Gauss–Jacobi
//! rules for the power weight at each endpoint.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::gamma;

use crate::error::EnvelopeError;
use crate::frozen::SpatialGrid;
use crate::model::{fit_exponents, LevyTypeModel, ProfileConfig, ScaleProfile};
use crate::parametrix::{series_threshold, singularity_exponent};
use crate::quadrature::power_weighted_rule;
use crate::stats::loglog_slope;

use super::{from_spectrum, lambda_measure_with, poisson_exponential, tilt_measure, GridMeasure, MeasureTag};

/// Controls for the hierarchy construction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HierarchyConfig {
    /// Poisson series truncation K_poisson.
    pub k_poisson: usize,
    /// Π series truncation; k₀ + 8 when unset.
    pub k_pi: Option<usize>,
    /// Ratio of the geometric master grid.
    pub master_ratio: f64,
    /// The master grid starts at this fraction of the smallest ladder time.
    pub floor_fraction: f64,
    /// Gauss–Jacobi nodes per half interval of a time convolution.
    pub nodes: usize,
    /// Series weight A; chosen from the Γ-bound constant when unset.
    pub series_weight: Option<f64>,
    /// Overrides the fitted σ.
    pub sigma: Option<f64>,
    /// Relative slack allowed in the Γ-bound check for quadrature error.
    pub gamma_tol: f64,
}

impl Default for HierarchyConfig {
    fn default() -> Self {
        Self {
            k_poisson: 20,
            k_pi: None,
            master_ratio: 1.1,
            floor_fraction: 0.01,
            nodes: 12,
            series_weight: None,
            sigma: None,
            gamma_tol: 1e-3,
        }
    }
}

/// Spectra of a time family of measures on a master grid.
#[derive(Debug, Clone)]
pub struct SpectralFamily {
    times: Vec<f64>,
    exponent: f64,
    tilde: Vec<Vec<Complex64>>,
}

impl SpectralFamily {
    /// Tabulate F_s from `value(j, s_j)` at every master time.
    pub fn tabulate<F>(times: &[f64], exponent: f64, mut value: F) -> Self
    where
        F: FnMut(usize, f64) -> Vec<Complex64>,
    {
        let tilde = times
            .iter()
            .enumerate()
            .map(|(j, &s)| {
                let scale = s.powf(-exponent);
                value(j, s).into_iter().map(|v| v * scale).collect()
            })
            .collect();
        Self { times: times.to_vec(), exponent, tilde }
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn exponent(&self) -> f64 {
        self.exponent
    }

    /// F at master index j.
    pub fn value(&self, j: usize) -> Vec<Complex64> {
        let scale = self.times[j].powf(self.exponent);
        self.tilde[j].iter().map(|v| v * scale).collect()
    }

    /// Total mass of F at master index j.
    pub fn mass(&self, j: usize) -> f64 {
        self.tilde[j][0].re * self.times[j].powf(self.exponent)
    }

    fn tilde_at(&self, s: f64) -> Vec<Complex64> {
        let n = self.times.len();
        if s <= self.times[0] {
            return self.tilde[0].clone();
        }
        if s >= self.times[n - 1] {
            return self.tilde[n - 1].clone();
        }
        let j = self.times.partition_point(|&u| u <= s) - 1;
        let (a, b) = (self.times[j], self.times[j + 1]);
        let w = (s / a).ln() / (b / a).ln();
        self.tilde[j].iter().zip(&self.tilde[j + 1]).map(|(x, y)| x * (1.0 - w) + y * w).collect()
    }

    /// F_s at an arbitrary s > 0.
    pub fn at(&self, s: f64) -> Vec<Complex64> {
        let scale = s.powf(self.exponent);
        self.tilde_at(s).into_iter().map(|v| v * scale).collect()
    }

    /// (self ⋆ other)_t at a single time t.
    pub fn star_at(&self, other: &SpectralFamily, t: f64, nodes: usize) -> Vec<Complex64> {
        let half = 0.5 * t;
        let mut acc = vec![Complex64::new(0.0, 0.0); self.tilde[0].len()];
        for (s, w) in power_weighted_rule(half, other.exponent, nodes) {
            let a = self.at(t - s);
            let b = other.tilde_at(s);
            acc.iter_mut().zip(a.iter().zip(&b)).for_each(|(c, (x, y))| *c += w * x * y);
        }
        for (u, w) in power_weighted_rule(half, self.exponent, nodes) {
            let a = self.tilde_at(u);
            let b = other.at(t - u);
            acc.iter_mut().zip(a.iter().zip(&b)).for_each(|(c, (x, y))| *c += w * x * y);
        }
        acc
    }

    /// (self ⋆ other) on the master grid of `self`, declared with exponent `exponent`.
    pub fn star(&self, other: &SpectralFamily, exponent: f64, nodes: usize) -> SpectralFamily {
        SpectralFamily::tabulate(&self.times, exponent, |_, t| self.star_at(other, t, nodes))
    }

    /// Keep only the zero-frequency bin (total masses).
    pub fn masses_only(&self) -> SpectralFamily {
        SpectralFamily {
            times: self.times.clone(),
            exponent: self.exponent,
            tilde: self.tilde.iter().map(|v| vec![v[0]]).collect(),
        }
    }
}

/// Γ-bound G^{⋆k}(ℝⁿ) ≤ c^k Γ^k(1-δ)/Γ(k(1-δ)) t^{k-1-kδ}.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GammaBound {
    /// sup_s s^δ G_s(ℝⁿ) over the master grid.
    pub c: f64,
    /// Largest ratio of G^{⋆k} mass to its bound, per k.
    pub worst_ratio_by_k: Vec<f64>,
    pub tolerance: f64,
    pub holds: bool,
}

/// Per-time inputs of the upper envelope: the scale ρ_t and the jump measure Q_t.
#[derive(Debug, Clone)]
pub struct CompoundScale {
    pub t: f64,
    pub rho: f64,
    pub q: GridMeasure,
}

/// All hierarchy measures at the ladder times plus the mass ledger.
#[derive(Debug, Clone)]
pub struct Hierarchy {
    pub times: Vec<f64>,
    pub rho: Vec<f64>,
    pub sigma: f64,
    pub delta: f64,
    pub lambda_exponent: f64,
    pub k0: usize,
    pub k_pi: usize,
    pub series_weight: f64,
    pub lambda: Vec<GridMeasure>,
    pub poisson: Vec<GridMeasure>,
    pub poisson_tail: Vec<f64>,
    pub g: Vec<GridMeasure>,
    pub pi: Vec<GridMeasure>,
    pub q: Vec<GridMeasure>,
    /// G^{⋆k}(ℝⁿ), indexed [k - 1][ladder index].
    pub g_power_masses: Vec<Vec<f64>>,
    /// G^{(k)}(ℝⁿ), indexed [k - 1][ladder index].
    pub g_hierarchy_masses: Vec<Vec<f64>>,
    /// (P ⋆ Π)_t(ℝⁿ) per ladder time.
    pub p_star_pi_masses: Vec<f64>,
    /// min over nodes of Σ_m Q^{*m}/m! against P_t + (P ⋆ Π)_t.
    pub q_domination: Vec<f64>,
    pub gamma: GammaBound,
}

/// Serializable summary of the hierarchy masses.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MassLedger {
    pub times: Vec<f64>,
    pub rho: Vec<f64>,
    pub sigma: f64,
    pub delta: f64,
    pub k0: usize,
    pub k_pi: usize,
    pub series_weight: f64,
    pub lambda_mass: Vec<f64>,
    pub poisson_mass: Vec<f64>,
    pub poisson_tail: Vec<f64>,
    pub g_mass: Vec<f64>,
    pub pi_mass: Vec<f64>,
    pub p_star_pi_mass: Vec<f64>,
    pub q_mass: Vec<f64>,
    pub g_power_masses: Vec<Vec<f64>>,
    pub g_hierarchy_masses: Vec<Vec<f64>>,
    pub g_slope: f64,
    pub pi_slope: f64,
    pub p_star_pi_slope: f64,
    pub q_domination: Vec<f64>,
    pub gamma: GammaBound,
}

impl Hierarchy {
    pub fn scales(&self) -> Vec<CompoundScale> {
        self.times
            .iter()
            .zip(&self.rho)
            .zip(&self.q)
            .map(|((&t, &rho), q)| CompoundScale { t, rho, q: q.clone() })
            .collect()
    }

    pub fn pi_masses(&self) -> Vec<f64> {
        self.pi.iter().map(GridMeasure::total_mass).collect()
    }

    /// Log-log slope of Π_t(ℝⁿ) over the ladder; -δ in theory.
    pub fn pi_slope(&self) -> f64 {
        loglog_slope(&self.times, &self.pi_masses())
    }

    /// Log-log slope of G_t(ℝⁿ) over the ladder; -δ in theory.
    pub fn g_slope(&self) -> f64 {
        let m: Vec<f64> = self.g.iter().map(GridMeasure::total_mass).collect();
        loglog_slope(&self.times, &m)
    }

    /// Log-log slope of (P ⋆ Π)_t(ℝⁿ); 1 - δ in theory.
    pub fn p_star_pi_slope(&self) -> f64 {
        loglog_slope(&self.times, &self.p_star_pi_masses)
    }

    pub fn ledger(&self) -> MassLedger {
        let mass = |v: &[GridMeasure]| v.iter().map(GridMeasure::total_mass).collect::<Vec<_>>();
        MassLedger {
            times: self.times.clone(),
            rho: self.rho.clone(),
            sigma: self.sigma,
            delta: self.delta,
            k0: self.k0,
            k_pi: self.k_pi,
            series_weight: self.series_weight,
            lambda_mass: mass(&self.lambda),
            poisson_mass: mass(&self.poisson),
            poisson_tail: self.poisson_tail.clone(),
            g_mass: mass(&self.g),
            pi_mass: mass(&self.pi),
            p_star_pi_mass: self.p_star_pi_masses.clone(),
            q_mass: mass(&self.q),
            g_power_masses: self.g_power_masses.clone(),
            g_hierarchy_masses: self.g_hierarchy_masses.clone(),
            g_slope: self.g_slope(),
            pi_slope: self.pi_slope(),
            p_star_pi_slope: self.p_star_pi_slope(),
            q_domination: self.q_domination.clone(),
            gamma: self.gamma.clone(),
        }
    }
}

/// Geometric master grid from `floor` to `top` merged with the ladder;
/// geometric nodes too close to a ladder time are dropped.
fn master_grid(ladder: &[f64], floor: f64, ratio: f64) -> Vec<f64> {
    let top = ladder.iter().cloned().fold(0.0, f64::max);
    let mut times: Vec<f64> = ladder.to_vec();
    let mut s = floor;
    while s < top * (1.0 - 1e-12) {
        let near = ladder.iter().any(|&t| (s - t).abs() < 0.3 * (ratio - 1.0) * t);
        if !near {
            times.push(s);
        }
        s *= ratio;
    }
    times.sort_by(f64::total_cmp);
    times.dedup_by(|a, b| (*a - *b).abs() <= 1e-12 * b.abs());
    times
}

/// Build the hierarchy at the ladder times for the exponent λ.
pub fn g_hierarchy(
    model: &LevyTypeModel,
    ladder: &[f64],
    grid: &SpatialGrid,
    lambda: f64,
    config: HierarchyConfig,
) -> Result<Hierarchy, EnvelopeError> {
    if ladder.is_empty() || ladder.iter().any(|&t| !(t > 0.0 && t <= 1.0)) {
        return Err(EnvelopeError::Invalid("ladder times must lie in (0, 1]".into()));
    }
    if model.dim() != grid.dim() {
        return Err(EnvelopeError::Invalid("model and grid dimensions differ".into()));
    }
    let alpha = model.alpha();
    if !(lambda > 0.0 && lambda < alpha) {
        return Err(EnvelopeError::Invalid(format!("λ = {lambda} must lie in (0, α = {alpha})")));
    }
    let mut ladder = ladder.to_vec();
    ladder.sort_by(f64::total_cmp);
    ladder.dedup();
    let profile = ScaleProfile::build(model, ProfileConfig::default())?;
    let sigma = config.sigma.unwrap_or_else(|| fit_exponents(&profile).sigma);
    let delta = singularity_exponent(lambda, sigma)?;
    let k0 = series_threshold(sigma, alpha, lambda);
    let k_pi = config.k_pi.unwrap_or(k0 + 8);
    let master = master_grid(&ladder, config.floor_fraction * ladder[0], config.master_ratio);
    let ladder_idx: Vec<usize> = ladder
        .iter()
        .map(|t| master.iter().position(|s| (s - t).abs() <= 1e-12 * t).expect("ladder time on master grid"))
        .collect();

    let mut rho = Vec::with_capacity(master.len());
    let mut lam_spec = Vec::with_capacity(master.len());
    let mut g_spec = Vec::with_capacity(master.len());
    let mut p_spec = Vec::with_capacity(master.len());
    let mut at_ladder = Vec::new();
    for (j, &s) in master.iter().enumerate() {
        let r = profile.rho(s)?;
        let lam = lambda_measure_with(&profile, s, grid)?;
        let (p, tail) = poisson_exponential(&lam, config.k_poisson);
        let tilted = tilt_measure(&p, lambda, r);
        let ls = lam.spectrum();
        let ts = tilted.spectrum();
        let factor = s.powf(lambda / sigma - 1.0);
        let gs: Vec<Complex64> = ts.iter().zip(&ls).map(|(a, b)| a * (1.0 + b) * factor).collect();
        p_spec.push(p.spectrum());
        if ladder_idx.contains(&j) {
            let g = GridMeasure::from_spectrum(grid, MeasureTag::G, s, gs.clone());
            at_ladder.push((lam, p, tail, g));
        }
        rho.push(r);
        lam_spec.push(ls);
        g_spec.push(gs);
    }
    let lam_family = SpectralFamily::tabulate(&master, 0.0, |j, _| lam_spec[j].clone());
    drop(lam_spec);
    let g_family = SpectralFamily::tabulate(&master, -delta, |j, _| g_spec[j].clone());
    drop(g_spec);

    // Γ-bound constant from the single-step masses over the whole master grid
    let c = (0..master.len()).map(|j| g_family.mass(j) * master[j].powf(delta)).fold(0.0, f64::max);
    let g1 = gamma(1.0 - delta);
    let series_weight = config.series_weight.unwrap_or(1.0 / (20.0 * c * g1));
    if !(series_weight > 0.0 && series_weight.is_finite()) {
        return Err(EnvelopeError::Invalid(format!("series weight A = {series_weight} is not positive")));
    }

    // scalar chain G^{⋆k} for the Γ-bound
    let g_mass_family = g_family.masses_only();
    let mut power = g_mass_family.clone();
    let mut g_power_masses = Vec::with_capacity(k_pi);
    let mut worst_ratio_by_k = Vec::with_capacity(k_pi);
    for k in 1..=k_pi {
        if k > 1 {
            power = power.star(&g_mass_family, k as f64 * (1.0 - delta) - 1.0, config.nodes);
        }
        let masses: Vec<f64> = ladder_idx.iter().map(|&j| power.mass(j)).collect();
        let kf = k as f64;
        let worst = ladder
            .iter()
            .zip(&masses)
            .map(|(&t, &m)| {
                let bound = (c * g1).powf(kf) / gamma(kf * (1.0 - delta)) * t.powf(kf - 1.0 - kf * delta);
                m / bound
            })
            .fold(0.0, f64::max);
        worst_ratio_by_k.push(worst);
        g_power_masses.push(masses);
    }
    let holds = worst_ratio_by_k.iter().all(|&r| r <= 1.0 + config.gamma_tol);
    let gamma_bound = GammaBound { c, worst_ratio_by_k, tolerance: config.gamma_tol, holds };

    // spectral chain G^{(k)} and Π = Σ A^k G^{(k)}
    let mut pi_values: Vec<Vec<Complex64>> = (0..master.len())
        .map(|j| g_family.value(j).into_iter().map(|v| v * series_weight).collect())
        .collect();
    let mut g_hierarchy_masses = vec![ladder_idx.iter().map(|&j| g_family.mass(j)).collect::<Vec<_>>()];
    let mut current = g_family.clone();
    for k in 2..=k_pi {
        current = if k <= k0 {
            current.star(&g_family, k as f64 * (1.0 - delta) - 1.0, config.nodes)
        } else if k == k0 + 1 {
            let e = current.exponent() - 1.0 / alpha;
            let scaled = SpectralFamily::tabulate(&master, e, |j, _| {
                current.value(j).into_iter().map(|v| v * rho[j]).collect()
            });
            scaled.star(&g_family, e + 1.0 - delta, config.nodes)
        } else {
            current.star(&g_family, current.exponent() + 1.0 - delta, config.nodes)
        };
        let weight = series_weight.powi(k as i32);
        for (j, acc) in pi_values.iter_mut().enumerate() {
            acc.iter_mut().zip(current.value(j)).for_each(|(a, v)| *a += weight * v);
        }
        g_hierarchy_masses.push(ladder_idx.iter().map(|&j| current.mass(j)).collect());
    }
    let pi_family = SpectralFamily::tabulate(&master, -delta, |j, _| pi_values[j].clone());
    drop(pi_values);

    let lam_pi = lam_family.star(&pi_family, 1.0 - delta, config.nodes);
    let p_family = SpectralFamily::tabulate(&master, 0.0, |j, _| p_spec[j].clone());
    drop(p_spec);

    let mut hierarchy = Hierarchy {
        times: ladder.clone(),
        rho: ladder_idx.iter().map(|&j| rho[j]).collect(),
        sigma,
        delta,
        lambda_exponent: lambda,
        k0,
        k_pi,
        series_weight,
        lambda: Vec::new(),
        poisson: Vec::new(),
        poisson_tail: Vec::new(),
        g: Vec::new(),
        pi: Vec::new(),
        q: Vec::new(),
        g_power_masses,
        g_hierarchy_masses,
        p_star_pi_masses: Vec::new(),
        q_domination: Vec::new(),
        gamma: gamma_bound,
    };
    for ((&j, &t), (lam, p, tail, g)) in ladder_idx.iter().zip(&ladder).zip(at_ladder) {
        let pi = GridMeasure::from_spectrum(grid, MeasureTag::Pi, t, pi_family.value(j));
        let ls = lam.spectrum();
        let q_spec: Vec<Complex64> = ls.iter().zip(lam_pi.value(j)).map(|(a, b)| a + b).collect();
        let q = GridMeasure::from_spectrum(grid, MeasureTag::Q, t, q_spec.clone());
        let p_pi = p_family.star_at(&pi_family, t, config.nodes);
        hierarchy.p_star_pi_masses.push(p_pi[0].re);
        hierarchy.q_domination.push(q_domination(grid, &q_spec, &p, p_pi));
        hierarchy.lambda.push(lam);
        hierarchy.poisson.push(p);
        hierarchy.poisson_tail.push(tail);
        hierarchy.g.push(g);
        hierarchy.pi.push(pi);
        hierarchy.q.push(q);
    }
    Ok(hierarchy)
}

/// min_w [Σ_m Q^{*m}/m!](w) / [P_t + (P ⋆ Π)_t](w) over nodes where the
/// right side is above 10⁻¹² of its maximum.
fn q_domination(grid: &SpatialGrid, q_spec: &[Complex64], p: &GridMeasure, p_pi: Vec<Complex64>) -> f64 {
    let lhs = from_spectrum(grid, q_spec.iter().map(|v| v.exp()).collect());
    let rhs_spec: Vec<Complex64> = p.spectrum().iter().zip(&p_pi).map(|(a, b)| a + b).collect();
    let rhs = from_spectrum(grid, rhs_spec);
    let top = rhs.iter().cloned().fold(0.0, f64::max);
    lhs.iter()
        .zip(&rhs)
        .filter(|(_, r)| **r > 1e-12 * top)
        .map(|(l, r)| l / r)
        .fold(f64::INFINITY, f64::min)
}
