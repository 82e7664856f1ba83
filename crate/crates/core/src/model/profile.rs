//! Scale function ρ_t = inf{r : q*(r) = 1/t} and its growth exponents.

use serde::{Deserialize, Serialize};

use crate::stats::linear_slope;

use super::{LevyBaseMeasure, LevyTypeModel, ModelError};

/// Table and tolerance settings for the scale profile.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProfileConfig {
    pub t_min: f64,
    pub t_max: f64,
    pub count: usize,
    pub bisection_tol: f64,
    /// Spacing of the candidate σ ladder.
    pub sigma_step: f64,
    /// Largest admissible small-time slope of log(ρ_t t^{1/σ}).
    pub slope_tol: f64,
}

impl Default for ProfileConfig {
    fn default() -> Self {
        Self { t_min: 1e-4, t_max: 1.0, count: 41, bisection_tol: 1e-10, sigma_step: 0.05, slope_tol: 5e-3 }
    }
}

/// q* evaluator with a tabulated ρ_t over a geometric t-ladder.
#[derive(Debug, Clone)]
pub struct ScaleProfile {
    base: LevyBaseMeasure,
    alpha: f64,
    config: ProfileConfig,
    table: Vec<(f64, f64)>,
}

impl ScaleProfile {
    pub fn build(model: &LevyTypeModel, config: ProfileConfig) -> Result<Self, ModelError> {
        Self::from_base(model.base().clone(), model.alpha(), config)
    }

    pub fn from_base(base: LevyBaseMeasure, alpha: f64, config: ProfileConfig) -> Result<Self, ModelError> {
        if !(config.t_min > 0.0 && config.t_max <= 1.0 && config.t_min < config.t_max && config.count >= 2) {
            return Err(ModelError::Invalid("profile ladder must satisfy 0 < t_min < t_max <= 1".into()));
        }
        let mut profile = Self { base, alpha, config, table: Vec::new() };
        let n = config.count;
        let ratio = (config.t_max / config.t_min).powf(1.0 / (n - 1) as f64);
        let mut table = Vec::with_capacity(n);
        for i in 0..n {
            let t = config.t_min * ratio.powi(i as i32);
            table.push((t, profile.rho(t)?));
        }
        profile.table = table;
        Ok(profile)
    }

    pub fn base(&self) -> &LevyBaseMeasure {
        &self.base
    }

    pub fn dim(&self) -> usize {
        self.base.dim()
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn config(&self) -> ProfileConfig {
        self.config
    }

    /// (t, ρ_t) pairs of the ladder.
    pub fn table(&self) -> &[(f64, f64)] {
        &self.table
    }

    pub fn q_star(&self, r: f64) -> f64 {
        self.base.q_star(r)
    }

    /// Generalized inverse of q* at level 1/t by bracketed bisection.
    pub fn rho(&self, t: f64) -> Result<f64, ModelError> {
        if !(t > 0.0) {
            return Err(ModelError::Invalid(format!("rho needs t > 0, got {t}")));
        }
        let target = 1.0 / t;
        let init = t.powf(-1.0 / self.alpha.max(0.1));
        let (mut lo, mut hi) = (init, init);
        let mut steps = 0;
        while self.q_star(hi) < target {
            lo = hi;
            hi *= 2.0;
            steps += 1;
            if steps > 200 {
                return Err(ModelError::RhoUndefined { t, sup: self.q_star(hi) });
            }
        }
        steps = 0;
        while self.q_star(lo) >= target {
            hi = lo;
            lo *= 0.5;
            steps += 1;
            if steps > 200 {
                return Ok(0.0);
            }
        }
        while hi / lo - 1.0 > 0.25 * self.config.bisection_tol {
            let mid = 0.5 * (lo + hi);
            if self.q_star(mid) >= target {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        Ok(0.5 * (lo + hi))
    }
}

/// Fitted exponents and constants of the scale function.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExponentFit {
    pub alpha: f64,
    pub sigma: f64,
    /// Tightest c₁ with ρ_t t^{1/α} ≤ c₁ on the ladder.
    pub c1: f64,
    /// Tightest c₂ with ρ_t t^{1/σ} ≥ c₂ on the ladder.
    pub c2: f64,
    /// -1 / (log-log slope of ρ_t) over the smallest decade.
    pub alpha_local: f64,
    /// True when the σ scan ran off the end of its ladder.
    pub sigma_at_boundary: bool,
}

/// Fit α, σ and the constants c₁, c₂ from the ρ_t table.
pub fn fit_exponents(profile: &ScaleProfile) -> ExponentFit {
    let table = profile.table();
    let alpha = profile.alpha();
    let t0 = table[0].0;
    let small: Vec<(f64, f64)> = table
        .iter()
        .filter(|p| p.0 <= 10.0 * t0 * (1.0 + 1e-12))
        .map(|p| (p.0.ln(), p.1.ln()))
        .collect();
    let small = if small.len() >= 2 { small } else { table.iter().take(2).map(|p| (p.0.ln(), p.1.ln())).collect() };
    let rho_slope = linear_slope(&small);
    let cfg = profile.config();
    let mut sigma = None;
    let mut cand = alpha;
    while cand < 2.0 - 1e-12 {
        if rho_slope + 1.0 / cand <= cfg.slope_tol {
            sigma = Some(cand);
            break;
        }
        cand += cfg.sigma_step;
    }
    let sigma_at_boundary = sigma.is_none();
    let sigma = sigma.unwrap_or(2.0 - cfg.sigma_step);
    let c1 = table.iter().map(|(t, r)| r * t.powf(1.0 / alpha)).fold(0.0, f64::max);
    let c2 = table.iter().map(|(t, r)| r * t.powf(1.0 / sigma)).fold(f64::INFINITY, f64::min);
    ExponentFit { alpha, sigma, c1, c2, alpha_local: -1.0 / rho_slope, sigma_at_boundary }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Atom, DensitySpec, QuadratureSpec};

    #[test]
    fn one_stable_rho_is_quarter_over_t() {
        let m = LevyTypeModel::stable(1, 1.0, 1.0).unwrap();
        let p = ScaleProfile::build(&m, ProfileConfig::default()).unwrap();
        for &(t, r) in p.table() {
            assert!((r * 4.0 * t - 1.0).abs() < 1e-9);
            assert!((t * p.q_star(r) - 1.0).abs() < 1e-9);
        }
        assert!((p.rho(0.25).unwrap() - 1.0).abs() < 1e-9);
        let fit = fit_exponents(&p);
        assert_eq!(fit.sigma, 1.0);
        assert!((fit.c1 - 0.25).abs() < 1e-9 && (fit.c2 - 0.25).abs() < 1e-9);
    }

    #[test]
    fn stable_family_sigma_equals_alpha() {
        for &alpha in &[0.6, 1.5] {
            let m = LevyTypeModel::stable(1, alpha, 1.0).unwrap();
            let fit = fit_exponents(&ScaleProfile::build(&m, ProfileConfig::default()).unwrap());
            assert!((fit.sigma - alpha).abs() < 1e-12);
            assert!((fit.alpha_local - alpha).abs() < 1e-6);
        }
    }

    #[test]
    fn truncated_support_keeps_small_time_exponent() {
        let base = LevyBaseMeasure::new(
            1,
            DensitySpec::TruncatedPowerLaw { alpha: 1.0, scale: 1.0, cutoff: 1.0, skew: 0.0 },
            vec![],
            QuadratureSpec::default(),
        )
        .unwrap();
        let p = ScaleProfile::from_base(base, 1.0, ProfileConfig::default()).unwrap();
        // q*(r) = 4r - 2 for r ≥ 1
        assert!((p.q_star(3.0) - 10.0).abs() < 1e-12);
        let fit = fit_exponents(&p);
        assert!((fit.alpha_local - 1.0).abs() < 2e-3, "{}", fit.alpha_local);
        assert_eq!(fit.sigma, 1.0);
    }

    #[test]
    fn atomic_measure_has_undefined_rho() {
        let base = LevyBaseMeasure::new(
            1,
            DensitySpec::None,
            vec![Atom { location: vec![1.0], mass: 1.0 }, Atom { location: vec![-1.0], mass: 1.0 }],
            QuadratureSpec::default(),
        )
        .unwrap();
        let p = ScaleProfile { base, alpha: 1.0, config: ProfileConfig::default(), table: vec![] };
        assert!(matches!(p.rho(0.1), Err(ModelError::RhoUndefined { .. })));
    }
}
