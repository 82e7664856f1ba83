//! Parametrix series Φ = Σ_m (LZ)_m, the fundamental solution
//! p = Z + Z⋆Φ and its consistency checks.

mod checks;
mod convolution;
mod field;
mod lz;
mod solver;

use serde::{Deserialize, Serialize};

use crate::error::ParametrixError;
use crate::quadrature::power_weighted_rule;

pub use checks::{chapman_kolmogorov_defect, residual_check, ResidualReport};
pub use convolution::{space_convolution, spacetime_convolution, spacetime_convolution_at, SpaceKernel};
pub use field::{FieldRole, KernelField};
pub use lz::{lz1, lz1_parts, Lz1Parts};
pub use solver::{
    fundamental_solution, phi_series, series_threshold, ParametrixSolver, PhiSeries, SeriesConfig, Solution,
    SolverConfig,
};

/// Ordered evaluation times with the singular exponent δ of the series terms.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeLadder {
    times: Vec<f64>,
    delta: f64,
}

/// δ = 1 - λ/σ; requires 0 < λ < σ.
pub fn singularity_exponent(lambda: f64, sigma: f64) -> Result<f64, ParametrixError> {
    let delta = 1.0 - lambda / sigma;
    if !(delta > 0.0 && delta < 1.0) {
        return Err(ParametrixError::Ladder(format!("delta = 1 - {lambda}/{sigma} = {delta} not in (0, 1)")));
    }
    Ok(delta)
}

impl TimeLadder {
    pub fn new(mut times: Vec<f64>, delta: f64) -> Result<Self, ParametrixError> {
        if !(delta > 0.0 && delta < 1.0) {
            return Err(ParametrixError::Ladder(format!("delta {delta} not in (0, 1)")));
        }
        times.sort_by(|a, b| a.total_cmp(b));
        times.dedup();
        if times.is_empty() || !(times[0] > 0.0) || *times.last().unwrap() > 1.0 {
            return Err(ParametrixError::Ladder("times must lie in (0, 1]".into()));
        }
        Ok(Self { times, delta })
    }

    /// `count` geometric times from t_min to t_max merged with `extra`.
    pub fn geometric(t_min: f64, t_max: f64, count: usize, extra: &[f64], delta: f64) -> Result<Self, ParametrixError> {
        if count < 2 || !(t_min < t_max) {
            return Err(ParametrixError::Ladder("geometric ladder needs count >= 2 and t_min < t_max".into()));
        }
        let ratio = (t_max / t_min).powf(1.0 / (count - 1) as f64);
        let mut times: Vec<f64> = (0..count).map(|j| t_min * ratio.powi(j as i32)).collect();
        times[count - 1] = t_max;
        times.extend_from_slice(extra);
        Self::new(times, delta)
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Index of a time on the ladder (relative tolerance 1e-9).
    pub fn index_of(&self, t: f64) -> Option<usize> {
        self.times.iter().position(|&s| (s - t).abs() <= 1e-9 * t.max(s))
    }

    /// Nodes and weights for ∫_0^t s^{-δ} F(s) ds with F smooth.
    pub fn singular_rule(&self, t: f64, nodes: usize) -> Vec<(f64, f64)> {
        power_weighted_rule(t, -self.delta, nodes)
    }
}
