//! Real-space generator L(x,D) on periodic grid functions.
//!
//! Jumps with ‖u‖ < 2h are replaced by their Taylor expansion with moments
//! of the jump measure; larger jumps are integrated on panels of width h
//! with cubic Lagrange interpolation of f at the jump targets, and the
//! resulting weights are folded onto torus offsets once per stencil.

use std::f64::consts::PI;

use num_complex::Complex64;

use super::grid::SpatialGrid;
use crate::error::ModelError;
use crate::model::{norm, JumpWeight, LevyBaseMeasure, LevyTypeModel, SymbolTerm};
use crate::quadrature::legendre;

/// Jump sizes inner ≤ ‖u‖ < outer.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RadialBand {
    pub inner: f64,
    pub outer: f64,
}

impl RadialBand {
    pub const ALL: RadialBand = RadialBand { inner: 0.0, outer: f64::INFINITY };

    fn clip(&self, a: f64, b: f64) -> Option<(f64, f64)> {
        let lo = a.max(self.inner);
        let hi = b.min(self.outer);
        (hi > lo).then_some((lo, hi))
    }

    fn contains(&self, s: f64) -> bool {
        s >= self.inner && s < self.outer
    }
}

/// Periods of the torus covered by explicit jump panels in 1D; the
/// remaining far tail is spread uniformly over the torus.
const FOLD_PERIODS_1D: f64 = 4.0;
const FOLD_PERIODS_2D: f64 = 1.0;
const MASS_TOL: f64 = 1e-8;

/// Folded jump operator f ↦ ∫_band (f(x+u) - f(x) - u·∇f(x) 𝟙{‖u‖≤1}) h(u) μ(du).
#[derive(Debug, Clone)]
pub struct JumpStencil {
    weights: Vec<f64>,
    spectrum: Vec<Complex64>,
    total: f64,
    /// Coefficient of f'' (1D) or Δf (2D).
    taylor2: f64,
    /// Coefficient of f''' (1D only).
    taylor3: f64,
    /// Coefficient of f'''' (1D) or Δ²f (2D).
    taylor4: f64,
    /// Coefficient of ∂_d f.
    gradient: Vec<f64>,
}

fn lagrange_cubic(theta: f64) -> [f64; 4] {
    let t = theta;
    [
        -t * (t - 1.0) * (t - 2.0) / 6.0,
        (t + 1.0) * (t - 1.0) * (t - 2.0) / 2.0,
        -(t + 1.0) * t * (t - 2.0) / 2.0,
        (t + 1.0) * t * (t - 1.0) / 6.0,
    ]
}

fn scatter(grid: &SpatialGrid, weights: &mut [f64], u: &[f64], w: f64) {
    let h = grid.spacing();
    let n = grid.nodes() as i64;
    let axis = |x: f64| {
        let v = x / h;
        let k = v.floor();
        (k as i64 - 1, lagrange_cubic(v - k))
    };
    let (k0, l0) = axis(u[0]);
    if grid.dim() == 1 {
        for (a, la) in l0.iter().enumerate() {
            weights[(k0 + a as i64).rem_euclid(n) as usize] += w * la;
        }
    } else {
        let (k1, l1) = axis(u[1]);
        for (b, lb) in l1.iter().enumerate() {
            let row = (k1 + b as i64).rem_euclid(n) as usize * grid.nodes();
            for (a, la) in l0.iter().enumerate() {
                weights[row + (k0 + a as i64).rem_euclid(n) as usize] += w * la * lb;
            }
        }
    }
}

fn panel_edges(start: f64, end: f64, width: f64, breaks: &[f64]) -> Vec<f64> {
    let mut edges = Vec::new();
    let mut s = start;
    while s < end {
        edges.push(s);
        s = start + edges.len() as f64 * width;
    }
    edges.push(end);
    edges.extend(breaks.iter().copied().filter(|b| *b > start && *b < end));
    edges.sort_by(|a, b| a.total_cmp(b));
    edges.dedup_by(|a, b| (*a - *b).abs() <= 1e-12 * b.abs().max(1.0));
    edges
}

impl JumpStencil {
    pub fn build(
        base: &LevyBaseMeasure,
        weight: JumpWeight,
        grid: &SpatialGrid,
        band: RadialBand,
    ) -> Result<Self, ModelError> {
        let dim = grid.dim();
        let h = grid.spacing();
        let mut weights = vec![0.0; grid.len()];
        let mut gradient = vec![0.0; dim];
        let (mut taylor2, mut taylor3, mut taylor4) = (0.0, 0.0, 0.0);
        let taylor_radius = 2.0 * h;

        if let Some((lo, hi)) = band.clip(0.0, taylor_radius) {
            let (m2, _) = base.radial_moment(2.0, lo, hi, weight);
            let (_, m3) = base.radial_moment(3.0, lo, hi, weight);
            let (m4, _) = base.radial_moment(4.0, lo, hi, weight);
            if dim == 1 {
                taylor2 += 0.5 * m2;
                taylor3 += m3 / 6.0;
                taylor4 += m4 / 24.0;
            } else {
                taylor2 += 0.25 * m2;
                taylor4 += m4 / 64.0;
            }
            if hi > 1.0 {
                let (_, m1) = base.radial_moment(1.0, lo.max(1.0), hi, weight);
                if dim == 1 {
                    gradient[0] += m1;
                }
            }
        }

        let periods = if dim == 1 { FOLD_PERIODS_1D } else { FOLD_PERIODS_2D };
        let far = periods * 2.0 * grid.half_width();
        let profile = base.profile(weight);
        if let (Some(p), Some((lo, hi))) = (profile, band.clip(taylor_radius, far.min(profile.map_or(far, |p| p.end())))) {
            let mut breaks = vec![1.0];
            if let Some(k) = p.cutoff {
                breaks.push(k);
            }
            let edges = panel_edges(lo, hi, h, &breaks);
            let rule = legendre(8);
            let mut folded = 0.0;
            for win in edges.windows(2) {
                let (a, width) = (win[0], win[1] - win[0]);
                for (v, wv) in rule.nodes.iter().zip(&rule.weights) {
                    let s = a + width * v;
                    let ws = wv * width;
                    if dim == 1 {
                        for sign in [1.0, -1.0] {
                            let u = [sign * s];
                            let w = ws * base.density_weighted(&u, weight);
                            folded += w;
                            scatter(grid, &mut weights, &u, w);
                            if s <= 1.0 {
                                gradient[0] -= w * u[0];
                            }
                        }
                    } else {
                        let count = ((4.0 * PI * s / h).ceil() as usize).max(16);
                        let dth = 2.0 * PI / count as f64;
                        for j in 0..count {
                            let th = (j as f64 + 0.5) * dth;
                            let u = [s * th.cos(), s * th.sin()];
                            let w = ws * s * dth * base.density_weighted(&u, weight);
                            folded += w;
                            scatter(grid, &mut weights, &u, w);
                            if s <= 1.0 {
                                gradient[0] -= w * u[0];
                                gradient[1] -= w * u[1];
                            }
                        }
                    }
                }
            }
            let (exact, _) = base.radial_moment(0.0, lo, hi, weight);
            if (folded - exact).abs() > MASS_TOL * exact.max(1e-300) {
                return Err(ModelError::QuadratureUnresolved {
                    context: format!("folded jump mass on [{lo:e}, {hi:e}]"),
                    coarse: folded,
                    fine: exact,
                });
            }
            if let Some((a, b)) = band.clip(far.max(taylor_radius), f64::INFINITY) {
                let (tail, _) = base.radial_moment(0.0, a, b, weight);
                if tail > 0.0 {
                    let share = tail / grid.len() as f64;
                    weights.iter_mut().for_each(|w| *w += share);
                }
            }
        }

        for atom in base.atoms() {
            let s = norm(&atom.location);
            if !band.contains(s) {
                continue;
            }
            let w = atom.mass * weight.value(s);
            scatter(grid, &mut weights, &atom.location, w);
            if s <= 1.0 {
                for d in 0..dim {
                    gradient[d] -= w * atom.location[d];
                }
            }
        }

        let total = weights.iter().sum();
        let spectrum = grid.fft_real(&weights).into_iter().map(|v| v.conj()).collect();
        Ok(Self { weights, spectrum, total, taylor2, taylor3, taylor4, gradient })
    }

    /// Folded weights indexed by torus offset.
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Total folded jump mass outside the Taylor region.
    pub fn total_mass(&self) -> f64 {
        self.total
    }

    fn local_terms(&self, grid: &SpatialGrid, f: &[f64], i: usize) -> f64 {
        let mut v = 0.0;
        if grid.dim() == 1 {
            if self.taylor2 != 0.0 {
                v += self.taylor2 * derivative_at(grid, f, i, 0, 2);
            }
            if self.taylor3 != 0.0 {
                v += self.taylor3 * derivative_at(grid, f, i, 0, 3);
            }
            if self.taylor4 != 0.0 {
                v += self.taylor4 * derivative_at(grid, f, i, 0, 4);
            }
        } else {
            if self.taylor2 != 0.0 {
                v += self.taylor2 * (derivative_at(grid, f, i, 0, 2) + derivative_at(grid, f, i, 1, 2));
            }
            if self.taylor4 != 0.0 {
                let mixed = mixed_fourth_at(grid, f, i);
                v += self.taylor4
                    * (derivative_at(grid, f, i, 0, 4) + 2.0 * mixed + derivative_at(grid, f, i, 1, 4));
            }
        }
        for (d, c) in self.gradient.iter().enumerate() {
            if *c != 0.0 {
                v += c * derivative_at(grid, f, i, d, 1);
            }
        }
        v
    }

    /// Value at one node by direct summation.
    pub fn apply_at(&self, grid: &SpatialGrid, f: &[f64], i: usize) -> f64 {
        let mut acc = 0.0;
        if grid.dim() == 1 {
            let n = grid.nodes();
            for (o, w) in self.weights.iter().enumerate() {
                acc += w * f[(i + o) % n];
            }
        } else {
            for (o, w) in self.weights.iter().enumerate() {
                let off = grid.unflatten(o);
                acc += w * f[grid.shifted(i, [off[0] as i64, off[1] as i64])];
            }
        }
        acc - self.total * f[i] + self.local_terms(grid, f, i)
    }

    /// Values at all nodes given the forward transform of f.
    pub fn apply_transformed(&self, grid: &SpatialGrid, f: &[f64], transformed: &[Complex64]) -> Vec<f64> {
        let prod: Vec<Complex64> = transformed.iter().zip(&self.spectrum).map(|(a, b)| a * b).collect();
        let far = grid.ifft_real(prod);
        (0..grid.len()).map(|i| far[i] - self.total * f[i] + self.local_terms(grid, f, i)).collect()
    }

    /// Values at all nodes.
    pub fn apply(&self, grid: &SpatialGrid, f: &[f64]) -> Vec<f64> {
        self.apply_transformed(grid, f, &grid.fft_real(f))
    }
}

fn neighbor(grid: &SpatialGrid, i: usize, axis: usize, k: i64) -> usize {
    let mut off = [0i64; 2];
    off[axis] = k;
    grid.shifted(i, off)
}

/// Centered finite difference of order 1..4 along an axis at node i
/// (fourth-order accurate for orders 1, 2 and 4; second-order for 3).
pub fn derivative_at(grid: &SpatialGrid, f: &[f64], i: usize, axis: usize, order: usize) -> f64 {
    let h = grid.spacing();
    let v = |k: i64| f[neighbor(grid, i, axis, k)];
    match order {
        1 => (-v(2) + 8.0 * v(1) - 8.0 * v(-1) + v(-2)) / (12.0 * h),
        2 => (-v(2) + 16.0 * v(1) - 30.0 * v(0) + 16.0 * v(-1) - v(-2)) / (12.0 * h * h),
        3 => (v(2) - 2.0 * v(1) + 2.0 * v(-1) - v(-2)) / (2.0 * h.powi(3)),
        4 => (v(2) - 4.0 * v(1) + 6.0 * v(0) - 4.0 * v(-1) + v(-2)) / h.powi(4),
        _ => panic!("derivative order {order} unsupported"),
    }
}

fn mixed_fourth_at(grid: &SpatialGrid, f: &[f64], i: usize) -> f64 {
    let h = grid.spacing();
    let c = [1.0, -2.0, 1.0];
    let mut acc = 0.0;
    for (a, ca) in c.iter().enumerate() {
        for (b, cb) in c.iter().enumerate() {
            acc += ca * cb * f[grid.shifted(i, [a as i64 - 1, b as i64 - 1])];
        }
    }
    acc / h.powi(4)
}

/// Finite-difference derivative of a grid function along an axis.
pub fn derivative(grid: &SpatialGrid, f: &[f64], axis: usize, order: usize) -> Vec<f64> {
    (0..grid.len()).map(|i| derivative_at(grid, f, i, axis, order)).collect()
}

/// L(x,D) = a(x)·∇ + Σ_j g_j(x) (jump operator with weight h_j) on a grid.
#[derive(Debug, Clone)]
pub struct Generator {
    grid: SpatialGrid,
    /// (coefficient at every node, index into `stencils`).
    jump_terms: Vec<(Vec<f64>, usize)>,
    stencils: Vec<(JumpWeight, JumpStencil)>,
    /// Drift components at every node.
    drift: Option<Vec<Vec<f64>>>,
}

impl Generator {
    pub fn new(model: &LevyTypeModel, grid: &SpatialGrid) -> Result<Self, ModelError> {
        Self::with_band(model, grid, RadialBand::ALL)
    }

    /// Generator restricted to jumps in a radial band (drift included).
    pub fn with_band(model: &LevyTypeModel, grid: &SpatialGrid, band: RadialBand) -> Result<Self, ModelError> {
        if model.dim() != grid.dim() {
            return Err(ModelError::Invalid("model and grid dimensions differ".into()));
        }
        let mut stencils: Vec<(JumpWeight, JumpStencil)> = Vec::new();
        let mut jump_terms = Vec::new();
        for term in model.symbol_terms() {
            if let SymbolTerm::Jump { weight, .. } = term {
                let idx = match stencils.iter().position(|(w, _)| *w == weight) {
                    Some(k) => k,
                    None => {
                        stencils.push((weight, JumpStencil::build(model.base(), weight, grid, band)?));
                        stencils.len() - 1
                    }
                };
                let coeff = (0..grid.len()).map(|i| term.coefficient(&grid.point(i))).collect();
                jump_terms.push((coeff, idx));
            }
        }
        let drift = (!model.drift().is_zero()).then(|| {
            let values: Vec<Vec<f64>> = (0..grid.len()).map(|i| model.drift().value(&grid.point(i))).collect();
            (0..grid.dim()).map(|d| values.iter().map(|v| v[d]).collect()).collect()
        });
        Ok(Self { grid: grid.clone(), jump_terms, stencils, drift })
    }

    pub fn grid(&self) -> &SpatialGrid {
        &self.grid
    }

    /// (Lf)(x_i) by direct summation.
    pub fn apply_at(&self, f: &[f64], i: usize) -> f64 {
        let mut v = 0.0;
        let per: Vec<f64> = self.stencils.iter().map(|(_, s)| s.apply_at(&self.grid, f, i)).collect();
        for (coeff, k) in &self.jump_terms {
            v += coeff[i] * per[*k];
        }
        if let Some(a) = &self.drift {
            for (d, ad) in a.iter().enumerate() {
                v += ad[i] * derivative_at(&self.grid, f, i, d, 1);
            }
        }
        v
    }

    /// Lf at every node.
    pub fn apply(&self, f: &[f64]) -> Vec<f64> {
        let transformed = self.grid.fft_real(f);
        let per: Vec<Vec<f64>> =
            self.stencils.iter().map(|(_, s)| s.apply_transformed(&self.grid, f, &transformed)).collect();
        let mut out = vec![0.0; self.grid.len()];
        for (coeff, k) in &self.jump_terms {
            out.iter_mut().zip(coeff).zip(&per[*k]).for_each(|((o, c), p)| *o += c * p);
        }
        if let Some(a) = &self.drift {
            for (d, ad) in a.iter().enumerate() {
                let df = derivative(&self.grid, f, d, 1);
                out.iter_mut().zip(ad).zip(&df).for_each(|((o, c), p)| *o += c * p);
            }
        }
        out
    }
}

/// (L(x,D) f)(x_i) for a grid function f.
pub fn apply_generator(model: &LevyTypeModel, f: &[f64], grid: &SpatialGrid, index: usize) -> Result<f64, ModelError> {
    Ok(Generator::new(model, grid)?.apply_at(f, index))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{
        AssumptionConstants, DensitySpec, DriftField, ModelSpec, ModulationField, ModulationTerm, QuadratureSpec,
        StateFactor,
    };

    fn periodic_grid(dim: usize) -> SpatialGrid {
        // half-width 8π so that ξ₀ = 1 lies on the dual grid
        SpatialGrid::new(dim, 8.0 * PI, if dim == 1 { 1024 } else { 128 }).unwrap()
    }

    fn skewed_drifted() -> LevyTypeModel {
        LevyTypeModel::from_spec(ModelSpec {
            dimension: 1,
            density: DensitySpec::PowerLaw { alpha: 1.5, scale: 1.0, skew: 0.4 },
            atoms: vec![crate::model::Atom { location: vec![0.7], mass: 0.3 }],
            modulation: ModulationField::constant(1.0),
            drift: DriftField::Constant { value: vec![0.3] },
            constants: AssumptionConstants { beta: 1.35, lambda: 0.5, b1: 1.0, b2: 1.0, b3: 0.0 },
            symmetric: false,
            quadrature: QuadratureSpec::default(),
        })
        .unwrap()
    }

    #[test]
    fn constant_function_is_annihilated() {
        let m = LevyTypeModel::stable(1, 1.0, 1.0).unwrap();
        let g = periodic_grid(1);
        let gen = Generator::new(&m, &g).unwrap();
        let f = vec![2.5; g.len()];
        assert!(gen.apply(&f).iter().all(|v| v.abs() < 1e-10));
        assert!(apply_generator(&m, &f, &g, 17).unwrap().abs() < 1e-10);
    }

    #[test]
    fn fourier_eigenrelation() {
        for m in [LevyTypeModel::stable(1, 1.0, 1.0).unwrap(), skewed_drifted()] {
            let g = periodic_grid(1);
            let q = m.q_exponent(&[0.0], &[1.0]).unwrap();
            let f: Vec<f64> = (0..g.len()).map(|i| g.point(i)[0].cos()).collect();
            let gen = Generator::new(&m, &g).unwrap();
            let lf = gen.apply(&f);
            for i in (0..g.len()).step_by(37) {
                let x = g.point(i)[0];
                let expect = -q.re * x.cos() + q.im * x.sin();
                assert!((lf[i] - expect).abs() < 1e-4 * q.norm(), "{} vs {expect}", lf[i]);
                assert!((gen.apply_at(&f, i) - lf[i]).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn fourier_eigenrelation_2d() {
        let m = LevyTypeModel::stable(2, 1.0, 1.0).unwrap();
        let g = periodic_grid(2);
        let q = m.q_exponent(&[0.0, 0.0], &[1.0, 0.0]).unwrap();
        let f: Vec<f64> = (0..g.len()).map(|i| g.point(i)[0].cos()).collect();
        let lf = Generator::new(&m, &g).unwrap().apply(&f);
        for i in (0..g.len()).step_by(331) {
            let expect = -q.re * g.point(i)[0].cos();
            assert!((lf[i] - expect).abs() < 2e-3 * q.re, "{} vs {expect}", lf[i]);
        }
    }

    #[test]
    fn linearity() {
        let m = skewed_drifted();
        let g = periodic_grid(1);
        let gen = Generator::new(&m, &g).unwrap();
        let f: Vec<f64> = (0..g.len()).map(|i| (-g.point(i)[0].powi(2)).exp()).collect();
        let k: Vec<f64> = (0..g.len()).map(|i| (0.5 * g.point(i)[0]).sin()).collect();
        let comb: Vec<f64> = f.iter().zip(&k).map(|(a, b)| 2.0 * a - 3.0 * b).collect();
        let (lf, lk, lc) = (gen.apply(&f), gen.apply(&k), gen.apply(&comb));
        for i in 0..g.len() {
            assert!((lc[i] - (2.0 * lf[i] - 3.0 * lk[i])).abs() < 1e-10);
        }
    }

    #[test]
    fn bands_partition_the_generator() {
        let m = skewed_drifted();
        let g = periodic_grid(1);
        let f: Vec<f64> = (0..g.len()).map(|i| (-g.point(i)[0].powi(2)).exp()).collect();
        let full = JumpStencil::build(m.base(), JumpWeight::Unit, &g, RadialBand::ALL).unwrap().apply(&g, &f);
        for split in [0.05, 0.5, 3.0] {
            let inner = JumpStencil::build(m.base(), JumpWeight::Unit, &g, RadialBand { inner: 0.0, outer: split })
                .unwrap()
                .apply(&g, &f);
            let outer =
                JumpStencil::build(m.base(), JumpWeight::Unit, &g, RadialBand { inner: split, outer: f64::INFINITY })
                    .unwrap()
                    .apply(&g, &f);
            for i in 0..g.len() {
                let d = (inner[i] + outer[i] - full[i]).abs();
                assert!(d < 1e-7 * (1.0 + full[i].abs()), "split {split}: {d:e}");
            }
        }
    }

    #[test]
    fn state_dependent_coefficient_multiplies_jump_part() {
        let spec = ModelSpec {
            dimension: 1,
            density: DensitySpec::PowerLaw { alpha: 1.0, scale: 1.0, skew: 0.0 },
            atoms: vec![],
            modulation: ModulationField {
                terms: vec![
                    ModulationTerm { state: StateFactor::Constant { value: 1.0 }, weight: JumpWeight::Unit },
                    ModulationTerm {
                        state: StateFactor::Saturating { amplitude: 0.4, exponent: 1.0 },
                        weight: JumpWeight::Unit,
                    },
                ],
            },
            drift: DriftField::Zero,
            constants: AssumptionConstants { beta: 2.0, lambda: 0.5, b1: 1.0, b2: 1.4, b3: 0.4 },
            symmetric: true,
            quadrature: QuadratureSpec::default(),
        };
        let m = LevyTypeModel::from_spec(spec).unwrap();
        let g = periodic_grid(1);
        let f: Vec<f64> = (0..g.len()).map(|i| g.point(i)[0].cos()).collect();
        let lf = Generator::new(&m, &g).unwrap().apply(&f);
        for i in (0..g.len()).step_by(41) {
            let x = g.point(i)[0];
            let expect = -PI * (1.0 + 0.4 * x.abs().min(1.0)) * x.cos();
            assert!((lf[i] - expect).abs() < 1e-3, "{} {expect}", lf[i]);
        }
    }
}
