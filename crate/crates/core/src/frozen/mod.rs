//! Frozen-coefficient kernels Z(t,x,y) = p_{t,y}(x - y) by Fourier
//! inversion on a periodic grid, and the generator L(x,D) on grid functions.

mod generator;
mod grid;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{GridError, ModelError};
use crate::model::{LevyTypeModel, ProfileConfig, ScaleProfile, SymbolTerm};

pub use generator::{apply_generator, derivative, derivative_at, Generator, JumpStencil, RadialBand};
pub use grid::{GridSpec, SpatialGrid};

/// Resolution tolerances checked before every inversion.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResolutionPolicy {
    /// Bound on e^{-t Re q(y, ξ_max)} at the Nyquist frequency.
    pub nyquist_tol: f64,
    /// Bound on e^{-a₄ ρ_t R} for the periodization error.
    pub periodization_tol: f64,
    /// Prior decay rate a₄ used before envelope constants are fitted.
    pub decay_rate: f64,
}

impl Default for ResolutionPolicy {
    fn default() -> Self {
        Self { nyquist_tol: 1e-12, periodization_tol: 1e-8, decay_rate: 5.0 }
    }
}

/// The symbol terms Q_j tabulated on the dual grid.
#[derive(Debug, Clone)]
pub struct SymbolTable {
    terms: Vec<SymbolTerm>,
    multipliers: Vec<Vec<Complex64>>,
}

impl SymbolTable {
    pub fn new(model: &LevyTypeModel, grid: &SpatialGrid) -> Self {
        let xis = grid.frequencies();
        let terms = model.symbol_terms();
        let multipliers = terms.iter().map(|t| t.multipliers(model.base(), &xis)).collect();
        Self { terms, multipliers }
    }

    pub fn terms(&self) -> &[SymbolTerm] {
        &self.terms
    }

    /// Q_j on the dual grid.
    pub fn multiplier(&self, j: usize) -> &[Complex64] {
        &self.multipliers[j]
    }

    /// Term coefficients g_j(y).
    pub fn coefficients(&self, y: &[f64]) -> Vec<f64> {
        self.terms.iter().map(|t| t.coefficient(y)).collect()
    }

    /// q(y, ·) on the dual grid.
    pub fn exponent(&self, y: &[f64]) -> Vec<Complex64> {
        self.exponent_with(&self.coefficients(y))
    }

    /// Σ_j c_j Q_j for explicit coefficients.
    pub fn exponent_with(&self, coeffs: &[f64]) -> Vec<Complex64> {
        let len = self.multipliers.first().map_or(0, Vec::len);
        let mut q = vec![Complex64::new(0.0, 0.0); len];
        for (c, m) in coeffs.iter().zip(&self.multipliers) {
            if *c != 0.0 {
                q.iter_mut().zip(m).for_each(|(a, b)| *a += c * b);
            }
        }
        q
    }
}

/// One frozen kernel (or derivative) slice x ↦ ∂^k p_{t,y}(x).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensitySlice {
    pub t: f64,
    pub y: Vec<f64>,
    /// Derivative multi-index; all zeros for the density itself.
    pub order: Vec<usize>,
    pub values: Vec<f64>,
}

impl DensitySlice {
    pub fn mass(&self, grid: &SpatialGrid) -> f64 {
        grid.integrate(&self.values)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0, |a, v| a.max(v.abs()))
    }
}

/// Frozen-kernel evaluator bound to one model and grid.
#[derive(Debug, Clone)]
pub struct FrozenKernel {
    grid: SpatialGrid,
    table: SymbolTable,
    profile: Option<ScaleProfile>,
    policy: ResolutionPolicy,
}

impl FrozenKernel {
    pub fn new(model: &LevyTypeModel, grid: &SpatialGrid) -> Result<Self, ModelError> {
        Self::with_policy(model, grid, ResolutionPolicy::default())
    }

    pub fn with_policy(model: &LevyTypeModel, grid: &SpatialGrid, policy: ResolutionPolicy) -> Result<Self, ModelError> {
        if model.dim() != grid.dim() {
            return Err(ModelError::Invalid(format!("model dimension {} vs grid {}", model.dim(), grid.dim())));
        }
        let cfg = ProfileConfig { t_min: 0.5, t_max: 1.0, count: 2, ..ProfileConfig::default() };
        let profile = match ScaleProfile::build(model, cfg) {
            Ok(p) => Some(p),
            Err(ModelError::RhoUndefined { .. }) => None,
            Err(e) => return Err(e),
        };
        Ok(Self { grid: grid.clone(), table: SymbolTable::new(model, grid), profile, policy })
    }

    pub fn grid(&self) -> &SpatialGrid {
        &self.grid
    }

    pub fn table(&self) -> &SymbolTable {
        &self.table
    }

    pub fn policy(&self) -> ResolutionPolicy {
        self.policy
    }

    /// Bins on the boundary of the dual box.
    fn boundary_bins(&self) -> Vec<usize> {
        let half = self.grid.nodes() / 2;
        (0..self.grid.len())
            .filter(|&k| {
                let idx = self.grid.unflatten(k);
                (0..self.grid.dim()).any(|d| idx[d] == half)
            })
            .collect()
    }

    /// Largest e^{-t Re q(y, ξ)} over boundary bins and the given points.
    pub fn nyquist_residual(&self, t: f64, ys: &[Vec<f64>]) -> f64 {
        let bins = self.boundary_bins();
        let mut worst = 0.0f64;
        for y in ys {
            let c = self.table.coefficients(y);
            for &k in &bins {
                let re: f64 = c.iter().enumerate().map(|(j, cj)| cj * self.table.multiplier(j)[k].re).sum();
                worst = worst.max((-t * re).exp());
            }
        }
        worst
    }

    pub fn check_nyquist(&self, t_min: f64, ys: &[Vec<f64>]) -> Result<f64, GridError> {
        let measured = self.nyquist_residual(t_min, ys);
        if measured >= self.policy.nyquist_tol {
            return Err(GridError::Underresolved { check: "nyquist", measured, limit: self.policy.nyquist_tol });
        }
        Ok(measured)
    }

    /// e^{-a₄ ρ_t R}, or 0 when ρ is undefined for the base measure.
    pub fn periodization_residual(&self, t_max: f64) -> f64 {
        match &self.profile {
            Some(p) => match p.rho(t_max) {
                Ok(rho) => (-self.policy.decay_rate * rho * self.grid.half_width()).exp(),
                Err(_) => 1.0,
            },
            None => 0.0,
        }
    }

    pub fn check_periodization(&self, t_max: f64) -> Result<f64, GridError> {
        let measured = self.periodization_residual(t_max);
        if measured >= self.policy.periodization_tol {
            return Err(GridError::Underresolved {
                check: "periodization",
                measured,
                limit: self.policy.periodization_tol,
            });
        }
        Ok(measured)
    }

    fn check(&self, t: f64, y: &[f64]) -> Result<(), GridError> {
        if !(t > 0.0) {
            return Err(GridError::Invalid(format!("time {t} must be positive")));
        }
        if y.len() != self.grid.dim() {
            return Err(GridError::Mismatch(format!("point of length {} on a {}-d grid", y.len(), self.grid.dim())));
        }
        self.check_nyquist(t, &[y.to_vec()])?;
        self.check_periodization(t)?;
        Ok(())
    }

    /// e^{-t q(y, ξ)} on the dual grid.
    pub fn transform(&self, t: f64, y: &[f64]) -> Vec<Complex64> {
        self.table.exponent(y).into_iter().map(|q| (-t * q).exp()).collect()
    }

    /// p_{t,y} on the grid.
    pub fn density(&self, t: f64, y: &[f64]) -> Result<DensitySlice, GridError> {
        self.gradient(t, y, &vec![0; self.grid.dim()])
    }

    /// ∂^k p_{t,y} on the grid, |k| ≤ 2.
    pub fn gradient(&self, t: f64, y: &[f64], order: &[usize]) -> Result<DensitySlice, GridError> {
        if order.len() != self.grid.dim() || order.iter().sum::<usize>() > 2 {
            return Err(GridError::Invalid(format!("derivative order {order:?} unsupported")));
        }
        self.check(t, y)?;
        let xis = self.grid.frequencies();
        let dim = self.grid.dim();
        let mut data = self.transform(t, y);
        for (k, v) in data.iter_mut().enumerate() {
            let idx = self.grid.unflatten(k);
            let mut factor = Complex64::new(1.0, 0.0);
            let mut parity = 0i64;
            for d in 0..dim {
                parity += self.grid.signed_bin(idx[d]);
                for _ in 0..order[d] {
                    factor *= Complex64::new(0.0, -xis[k * dim + d]);
                }
            }
            if parity.rem_euclid(2) == 1 {
                factor = -factor;
            }
            *v *= factor;
        }
        self.grid.fft(&mut data);
        let scale = (2.0 * self.grid.half_width()).powi(-(dim as i32));
        Ok(DensitySlice {
            t,
            y: y.to_vec(),
            order: order.to_vec(),
            values: data.into_iter().map(|v| v.re * scale).collect(),
        })
    }

    /// Column x ↦ Z(t, x, y_j) = p_{t,y_j}(y_j - x) at grid node `j`.
    pub fn column(&self, t: f64, j: usize) -> Result<Vec<f64>, GridError> {
        let y = self.grid.point(j);
        self.check(t, &y)?;
        Ok(self.column_unchecked(t, j, &self.table.coefficients(&y)))
    }

    /// Column of the frozen kernel for explicit coefficients, no checks.
    pub fn column_unchecked(&self, t: f64, j: usize, coeffs: &[f64]) -> Vec<f64> {
        let q = self.table.exponent_with(coeffs);
        let mut delta = vec![Complex64::new(0.0, 0.0); self.grid.len()];
        delta[j] = Complex64::new(1.0 / self.grid.cell_volume(), 0.0);
        self.grid.fft(&mut delta);
        delta.iter_mut().zip(&q).for_each(|(d, q)| *d *= (-t * q).exp());
        self.grid.ifft_real(delta)
    }
}

/// p_{t,y} on the grid after both resolution checks.
pub fn frozen_density(model: &LevyTypeModel, t: f64, y: &[f64], grid: &SpatialGrid) -> Result<DensitySlice, GridError> {
    let kernel = FrozenKernel::new(model, grid).map_err(|e| GridError::Invalid(e.to_string()))?;
    kernel.density(t, y)
}

/// ∂^k p_{t,y} on the grid after both resolution checks.
pub fn frozen_gradient(
    model: &LevyTypeModel,
    t: f64,
    y: &[f64],
    grid: &SpatialGrid,
    order: &[usize],
) -> Result<DensitySlice, GridError> {
    let kernel = FrozenKernel::new(model, grid).map_err(|e| GridError::Invalid(e.to_string()))?;
    kernel.gradient(t, y, order)
}
