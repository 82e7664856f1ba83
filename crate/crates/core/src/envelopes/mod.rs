//! Measure hierarchy Λ_t, P_t, P_{t,γ}, G_{t,λ}, G^{(k)}, Π_{t,λ}, Q_{t,λ} on
//! the spatial grid and the two-sided compound kernel envelopes.
//!
//! Measures are atoms on grid nodes read as displacements: node i carries
//! the displacement `grid.point(i)`, so the origin node is the zero jump and
//! spatial convolution is a periodic convolution of weight arrays.

mod bounds;
mod hierarchy;

pub use bounds::{
    compound_exponential, eval_lower_bound, eval_upper_envelope, fit_envelope_constants, lower_bound_profile,
    upper_envelope_profile, EnvelopeFit, EnvelopeParams, FitConfig, FitSplit,
};
pub use hierarchy::{g_hierarchy, CompoundScale, GammaBound, Hierarchy, HierarchyConfig, MassLedger, SpectralFamily};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::EnvelopeError;
use crate::frozen::SpatialGrid;
use crate::model::{norm, JumpWeight, LevyTypeModel, ProfileConfig, ScaleProfile};

/// Which member of the hierarchy a measure is.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "order", rename_all = "snake_case")]
pub enum MeasureTag {
    Lambda,
    Poisson,
    Tilted,
    G,
    GPower(usize),
    Pi,
    Q,
    /// Σ_m Q^{*m}/m!, the jump part of the upper envelope.
    CompoundQ,
    Other,
}

/// Nonnegative atoms on the grid nodes at a fixed time.
#[derive(Debug, Clone, PartialEq)]
pub struct GridMeasure {
    grid: SpatialGrid,
    tag: MeasureTag,
    t: f64,
    weights: Vec<f64>,
}

impl GridMeasure {
    pub fn zero(grid: &SpatialGrid, tag: MeasureTag, t: f64) -> Self {
        Self { grid: grid.clone(), tag, t, weights: vec![0.0; grid.len()] }
    }

    /// Unit atom at the zero displacement.
    pub fn unit(grid: &SpatialGrid, tag: MeasureTag, t: f64) -> Self {
        let mut m = Self::zero(grid, tag, t);
        m.weights[grid.origin_index()] = 1.0;
        m
    }

    pub fn from_weights(grid: &SpatialGrid, tag: MeasureTag, t: f64, weights: Vec<f64>) -> Result<Self, EnvelopeError> {
        if weights.len() != grid.len() {
            return Err(EnvelopeError::Invalid(format!("{} weights for {} nodes", weights.len(), grid.len())));
        }
        if let Some(w) = weights.iter().find(|w| !(**w >= 0.0) || !w.is_finite()) {
            return Err(EnvelopeError::Invalid(format!("measure weight {w} is not a finite nonnegative number")));
        }
        Ok(Self { grid: grid.clone(), tag, t, weights })
    }

    pub fn grid(&self) -> &SpatialGrid {
        &self.grid
    }

    pub fn tag(&self) -> MeasureTag {
        self.tag
    }

    pub fn time(&self) -> f64 {
        self.t
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn total_mass(&self) -> f64 {
        self.weights.iter().sum()
    }

    pub fn with_tag(mut self, tag: MeasureTag) -> Self {
        self.tag = tag;
        self
    }

    /// Largest ‖u‖ over nodes with positive weight.
    pub fn support_radius(&self) -> f64 {
        self.weights
            .iter()
            .enumerate()
            .filter(|(_, w)| **w > 0.0)
            .map(|(i, _)| norm(&self.grid.point(i)))
            .fold(0.0, f64::max)
    }

    /// Smallest ‖u‖ over nodes with positive weight (∞ for the zero measure).
    pub fn inner_radius(&self) -> f64 {
        self.weights
            .iter()
            .enumerate()
            .filter(|(_, w)| **w > 0.0)
            .map(|(i, _)| norm(&self.grid.point(i)))
            .fold(f64::INFINITY, f64::min)
    }

    /// Σ_i w_i e^{-iξ_k·u_i} in FFT order.
    pub fn spectrum(&self) -> Vec<Complex64> {
        to_spectrum(&self.grid, &self.weights)
    }

    /// Measure from a spectrum; round-off negatives are clipped to zero.
    pub fn from_spectrum(grid: &SpatialGrid, tag: MeasureTag, t: f64, spectrum: Vec<Complex64>) -> Self {
        let weights = from_spectrum(grid, spectrum).into_iter().map(|w| w.max(0.0)).collect();
        Self { grid: grid.clone(), tag, t, weights }
    }

    /// Spatial convolution (self * other)(du).
    pub fn convolve(&self, other: &GridMeasure) -> Self {
        let a = self.spectrum();
        let b = other.spectrum();
        let prod = a.iter().zip(&b).map(|(x, y)| x * y).collect();
        Self::from_spectrum(&self.grid, MeasureTag::Other, self.t, prod)
    }

    /// Weight at the node nearest to `u`.
    pub fn weight_at(&self, u: &[f64]) -> f64 {
        self.weights[self.grid.nearest_index(u)]
    }
}

/// Rotate the node array so that the origin node sits at index 0.
fn origin_first(grid: &SpatialGrid, f: &[f64]) -> Vec<f64> {
    let o = grid.unflatten(grid.origin_index());
    let mut out = vec![0.0; f.len()];
    for (i, v) in f.iter().enumerate() {
        let j = grid.shifted(i, [-(o[0] as i64), -(o[1] as i64)]);
        out[j] = *v;
    }
    out
}

pub(crate) fn to_spectrum(grid: &SpatialGrid, weights: &[f64]) -> Vec<Complex64> {
    grid.fft_real(&origin_first(grid, weights))
}

pub(crate) fn from_spectrum(grid: &SpatialGrid, spectrum: Vec<Complex64>) -> Vec<f64> {
    let rolled = grid.ifft_real(spectrum);
    let o = grid.unflatten(grid.origin_index());
    (0..grid.len()).map(|i| rolled[grid.shifted(i, [-(o[0] as i64), -(o[1] as i64)])]).collect()
}

/// Λ_t(du) = t μ(du) 𝟙{ρ_t‖u‖ > 1} built from a prepared scale profile.
///
/// Cell masses are assigned to their node; a cell straddling the cutoff
/// sends its outer part to the first node beyond the cutoff along the ray,
/// and mass beyond the box goes to the boundary nodes.
pub fn lambda_measure_with(profile: &ScaleProfile, t: f64, grid: &SpatialGrid) -> Result<GridMeasure, EnvelopeError> {
    let rho = profile.rho(t)?;
    let base = profile.base();
    if base.dim() != grid.dim() {
        return Err(EnvelopeError::Invalid("model and grid dimensions differ".into()));
    }
    let cutoff = if rho > 0.0 { 1.0 / rho } else { f64::INFINITY };
    let mut weights = vec![0.0; grid.len()];
    if grid.dim() == 1 {
        lambda_density_1d(profile, cutoff, grid, &mut weights);
    } else {
        lambda_density_2d(profile, cutoff, grid, &mut weights);
    }
    for atom in base.atoms() {
        let r = norm(&atom.location);
        if r <= cutoff {
            continue;
        }
        let mut i = grid.nearest_index(&atom.location);
        if norm(&grid.point(i)) <= cutoff {
            let push: Vec<f64> = atom.location.iter().map(|c| c * (cutoff + grid.spacing()) / r).collect();
            i = grid.nearest_index(&push);
        }
        weights[i] += atom.mass;
    }
    weights.iter_mut().for_each(|w| *w *= t);
    let m = GridMeasure::from_weights(grid, MeasureTag::Lambda, t, weights)?;
    if m.total_mass() > 1.0 + 1e-9 {
        return Err(EnvelopeError::Invalid(format!("Λ_t mass {} exceeds t q*(ρ_t) = 1", m.total_mass())));
    }
    Ok(m)
}

/// Λ_t for a model; builds the scale profile internally.
pub fn lambda_measure(model: &LevyTypeModel, t: f64, grid: &SpatialGrid) -> Result<GridMeasure, EnvelopeError> {
    let profile = ScaleProfile::build(model, ProfileConfig::default())?;
    lambda_measure_with(&profile, t, grid)
}

fn lambda_density_1d(profile: &ScaleProfile, cutoff: f64, grid: &SpatialGrid, weights: &mut [f64]) {
    let base = profile.base();
    let h = grid.spacing();
    let half = grid.nodes() as i64 / 2;
    let origin = grid.origin_index() as i64;
    let first_outside = (cutoff / h).floor() as i64 + 1;
    if first_outside >= half {
        // everything beyond the cutoff lands on the boundary node
        let edge = (origin - half).rem_euclid(grid.nodes() as i64) as usize;
        weights[edge] += base.mass_beyond(cutoff.max(0.0), JumpWeight::Unit);
        return;
    }
    for sign in [1i8, -1] {
        for k in 0..half {
            let (a, b) = ((k as f64 - 0.5).max(0.0) * h, (k as f64 + 0.5) * h);
            let lo = a.max(cutoff);
            if b <= lo {
                continue;
            }
            let node = k.max(first_outside);
            let idx = (origin + sign as i64 * node).rem_euclid(grid.nodes() as i64) as usize;
            weights[idx] += base.annulus_mass(lo, b, sign, JumpWeight::Unit);
        }
        // the tail past the last interior cell folds onto the node at ±R
        let edge = (origin - half).rem_euclid(grid.nodes() as i64) as usize;
        let from = ((half as f64 - 0.5) * h).max(cutoff);
        weights[edge] += base.annulus_mass(from, f64::INFINITY, sign, JumpWeight::Unit);
    }
}

const SUBCELLS_2D: usize = 4;

fn lambda_density_2d(profile: &ScaleProfile, cutoff: f64, grid: &SpatialGrid, weights: &mut [f64]) {
    let base = profile.base();
    let h = grid.spacing();
    let radius = grid.half_width() - 0.5 * h;
    let sub = h / SUBCELLS_2D as f64;
    let sub_area = sub * sub;
    for i in 0..grid.len() {
        let p = grid.point(i);
        let r = norm(&p);
        if r > radius + h {
            continue;
        }
        let mut cell = 0.0;
        for a in 0..SUBCELLS_2D {
            for b in 0..SUBCELLS_2D {
                let u = [p[0] - 0.5 * h + (a as f64 + 0.5) * sub, p[1] - 0.5 * h + (b as f64 + 0.5) * sub];
                let ru = norm(&u);
                if ru > cutoff && ru <= radius {
                    cell += base.density_at(&u) * sub_area;
                }
            }
        }
        if cell == 0.0 {
            continue;
        }
        let target = if r > cutoff {
            i
        } else {
            let scale = (cutoff + h) / r.max(1e-300);
            grid.nearest_index(&[p[0] * scale, p[1] * scale])
        };
        weights[target] += cell;
    }
    // mass beyond the inscribed disk spreads evenly over the outer ring
    let tail = base.mass_beyond(radius.max(cutoff), JumpWeight::Unit)
        - base.atoms().iter().filter(|a| norm(&a.location) > radius.max(cutoff)).map(|a| a.mass).sum::<f64>();
    let ring: Vec<usize> = (0..grid.len())
        .filter(|&i| {
            let r = norm(&grid.point(i));
            r > radius - h && r <= radius && r > cutoff
        })
        .collect();
    if !ring.is_empty() && tail > 0.0 {
        let share = tail / ring.len() as f64;
        ring.iter().for_each(|&i| weights[i] += share);
    }
}

/// P_t = e^{-Λ(ℝⁿ)} Σ_{k≤K} Λ^{*k}/k! and the truncation tail Λ(ℝⁿ)^{K+1}/(K+1)!.
pub fn poisson_exponential(lambda: &GridMeasure, k_max: usize) -> (GridMeasure, f64) {
    let grid = lambda.grid();
    let mass = lambda.total_mass();
    let spec = lambda.spectrum();
    let mut acc = vec![Complex64::new(1.0, 0.0); spec.len()];
    let mut term = acc.clone();
    for k in 1..=k_max {
        for (tm, s) in term.iter_mut().zip(&spec) {
            *tm *= s / k as f64;
        }
        acc.iter_mut().zip(&term).for_each(|(a, b)| *a += b);
    }
    let norm_factor = (-mass).exp();
    acc.iter_mut().for_each(|a| *a *= norm_factor);
    let mut tail = norm_factor;
    for k in 1..=k_max + 1 {
        tail *= mass / k as f64;
    }
    (GridMeasure::from_spectrum(grid, MeasureTag::Poisson, lambda.time(), acc), tail)
}

/// P_{t,γ}(dw) = (1 + ρ_t^γ (‖w‖^γ ∧ 1)) P_t(dw).
pub fn tilt_measure(p: &GridMeasure, gamma: f64, rho: f64) -> GridMeasure {
    let grid = p.grid();
    let weights = p
        .weights()
        .iter()
        .enumerate()
        .map(|(i, w)| w * (1.0 + rho.powf(gamma) * norm(&grid.point(i)).powf(gamma).min(1.0)))
        .collect();
    GridMeasure { grid: grid.clone(), tag: MeasureTag::Tilted, t: p.time(), weights }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn cauchy() -> LevyTypeModel {
        LevyTypeModel::stable(1, 1.0, 1.0).unwrap()
    }

    #[test]
    fn lambda_mass_for_cauchy_at_quarter() {
        let grid = SpatialGrid::new(1, 64.0, 4096).unwrap();
        let lam = lambda_measure(&cauchy(), 0.25, &grid).unwrap();
        assert_relative_eq!(lam.total_mass(), 0.5, max_relative = 1e-9);
        assert!(lam.inner_radius() > 1.0);
        assert_eq!(lam.tag(), MeasureTag::Lambda);
    }

    #[test]
    fn lambda_mass_never_exceeds_one() {
        let grid = SpatialGrid::new(1, 16.0, 512).unwrap();
        let model = cauchy();
        let profile = ScaleProfile::build(&model, ProfileConfig::default()).unwrap();
        for t in [1e-3, 0.01, 0.1, 0.5, 1.0] {
            let lam = lambda_measure_with(&profile, t, &grid).unwrap();
            assert!(lam.total_mass() <= 1.0);
            assert!(lam.inner_radius() * profile.rho(t).unwrap() > 1.0);
        }
    }

    #[test]
    fn truncated_measure_below_resolution_gives_zero() {
        use crate::model::{DensitySpec, LevyBaseMeasure, QuadratureSpec};
        let base = LevyBaseMeasure::new(
            1,
            DensitySpec::TruncatedPowerLaw { alpha: 1.0, scale: 1.0, cutoff: 0.5, skew: 0.0 },
            vec![],
            QuadratureSpec::default(),
        )
        .unwrap();
        let profile = ScaleProfile::from_base(base, 1.0, ProfileConfig::default()).unwrap();
        let grid = SpatialGrid::new(1, 8.0, 256).unwrap();
        // at t = 1 the scale ρ_t is below 2, so every jump has ρ_t |u| ≤ 1
        assert!(profile.rho(1.0).unwrap() < 2.0);
        let lam = lambda_measure_with(&profile, 1.0, &grid).unwrap();
        assert_eq!(lam.total_mass(), 0.0);
    }

    #[test]
    fn poisson_of_zero_is_unit_atom() {
        let grid = SpatialGrid::new(1, 4.0, 64).unwrap();
        let (p, tail) = poisson_exponential(&GridMeasure::zero(&grid, MeasureTag::Lambda, 0.1), 20);
        assert_eq!(tail, 0.0);
        assert_relative_eq!(p.weights()[grid.origin_index()], 1.0, epsilon = 1e-14);
        assert_relative_eq!(p.total_mass(), 1.0, epsilon = 1e-14);
    }

    #[test]
    fn poisson_of_single_atom_is_scalar_poisson_law() {
        let grid = SpatialGrid::new(1, 32.0, 256).unwrap();
        let mut lam = GridMeasure::zero(&grid, MeasureTag::Lambda, 0.1);
        let one = grid.nearest_index(&[1.0]);
        lam.weights[one] = 0.5;
        let (p, _) = poisson_exponential(&lam, 20);
        let mut fact = 1.0;
        for k in 0..8usize {
            if k > 0 {
                fact *= k as f64;
            }
            let expect = (-0.5f64).exp() * 0.5f64.powi(k as i32) / fact;
            assert_relative_eq!(p.weight_at(&[k as f64]), expect, epsilon = 1e-13);
        }
    }

    #[test]
    fn poisson_mass_is_one_with_twenty_terms() {
        let grid = SpatialGrid::new(1, 64.0, 4096).unwrap();
        let lam = lambda_measure(&cauchy(), 0.5, &grid).unwrap();
        let (p, tail) = poisson_exponential(&lam, 20);
        assert!(tail < 1e-20);
        assert!((p.total_mass() - 1.0).abs() < 1e-10);
        assert!(p.weights().iter().all(|w| *w >= 0.0));
    }

    #[test]
    fn tilt_leaves_origin_and_grows_with_gamma() {
        let grid = SpatialGrid::new(1, 16.0, 512).unwrap();
        let lam = lambda_measure(&cauchy(), 0.05, &grid).unwrap();
        let (p, _) = poisson_exponential(&lam, 20);
        let rho = 5.0;
        let o = grid.origin_index();
        let a = tilt_measure(&p, 0.3, rho);
        let b = tilt_measure(&p, 0.6, rho);
        assert_eq!(a.weights()[o], p.weights()[o]);
        assert!(a.total_mass() >= p.total_mass());
        // ρ^γ‖w‖^γ grows with γ only where ρ‖w‖ ≥ 1
        for i in 0..grid.len() {
            let r = norm(&grid.point(i));
            if r <= 1.0 && rho * r >= 1.0 {
                assert!(b.weights()[i] >= a.weights()[i]);
            }
        }
    }

    #[test]
    fn tilted_mass_obeys_moment_bound_on_stable_model() {
        // ρ^γ ∫ (‖u‖^γ ∧ 1) P_t(du) stays bounded uniformly in t
        let grid = SpatialGrid::new(1, 64.0, 4096).unwrap();
        let profile = ScaleProfile::build(&cauchy(), ProfileConfig::default()).unwrap();
        let mut moments = Vec::new();
        for t in [0.01, 0.03, 0.1, 0.3, 1.0] {
            let lam = lambda_measure_with(&profile, t, &grid).unwrap();
            let (p, _) = poisson_exponential(&lam, 20);
            let tilted = tilt_measure(&p, 0.5, profile.rho(t).unwrap());
            moments.push(tilted.total_mass() - p.total_mass());
        }
        let hi = moments.iter().cloned().fold(0.0, f64::max);
        let lo = moments.iter().cloned().fold(f64::INFINITY, f64::min);
        assert!(hi < std::f64::consts::E * 2.0 && lo > 0.0, "{moments:?}");
    }

    #[test]
    fn convolution_adds_displacements_in_two_dimensions() {
        let grid = SpatialGrid::new(2, 4.0, 32).unwrap();
        let mut a = GridMeasure::zero(&grid, MeasureTag::Other, 0.0);
        let mut b = a.clone();
        a.weights[grid.nearest_index(&[1.0, 0.0])] = 2.0;
        b.weights[grid.nearest_index(&[0.0, -0.5])] = 0.25;
        let c = a.convolve(&b);
        assert_relative_eq!(c.weight_at(&[1.0, -0.5]), 0.5, epsilon = 1e-12);
        assert_relative_eq!(c.total_mass(), 0.5, epsilon = 1e-12);
    }

    #[test]
    fn lambda_in_two_dimensions_respects_cutoff() {
        let model = LevyTypeModel::stable(2, 1.0, 1.0).unwrap();
        let grid = SpatialGrid::new(2, 8.0, 64).unwrap();
        let profile = ScaleProfile::build(&model, ProfileConfig::default()).unwrap();
        let t = 0.2;
        let lam = lambda_measure_with(&profile, t, &grid).unwrap();
        let rho = profile.rho(t).unwrap();
        assert!(lam.inner_radius() * rho > 1.0);
        assert!(lam.total_mass() <= 1.0);
        // the density part carries t μ{‖u‖ > 1/ρ_t} up to cell quadrature error
        let expect = t * model.base().mass_beyond(1.0 / rho, JumpWeight::Unit);
        assert_relative_eq!(lam.total_mass(), expect, max_relative = 0.05);
    }
}
