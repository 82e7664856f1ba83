//! Sampled checks of the structural assumptions on a model.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{norm, LevyTypeModel};

/// Which assumption failed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum FailureCode {
    FailsA1,
    FailsA2,
    FailsA3,
    FailsSymmetry,
    FailsIntegrability,
}

impl FailureCode {
    pub fn code(self) -> &'static str {
        match self {
            FailureCode::FailsA1 => "FAILS_A1",
            FailureCode::FailsA2 => "FAILS_A2",
            FailureCode::FailsA3 => "FAILS_A3",
            FailureCode::FailsSymmetry => "FAILS_SYMMETRY",
            FailureCode::FailsIntegrability => "FAILS_INTEGRABILITY",
        }
    }
}

/// Sample locations for the assumption checks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplePlan {
    /// Geometric r-grid for the comparability check, starting at r ≥ 1.
    pub r_min: f64,
    pub r_max: f64,
    pub r_count: usize,
    /// Sample points x (flat, `dim` entries each).
    pub x_samples: Vec<f64>,
    /// Jump sizes u (flat, `dim` entries each).
    pub u_samples: Vec<f64>,
}

impl SamplePlan {
    pub fn default_for(dim: usize) -> Self {
        let line: Vec<f64> = (-40..=40).map(|i| i as f64 * 0.125).collect();
        let radii = [1e-3, 0.05, 0.3, 0.9, 1.0, 1.7, 4.0, 25.0];
        let (x_samples, u_samples) = if dim == 1 {
            let u: Vec<f64> = radii.iter().flat_map(|r| [*r, -r]).collect();
            (line, u)
        } else {
            let coarse: Vec<f64> = (-8..=8).map(|i| i as f64 * 0.5).collect();
            let x = coarse.iter().flat_map(|a| coarse.iter().flat_map(move |b| [*a, *b])).collect();
            let u = radii.iter().flat_map(|r| [*r, 0.0, 0.0, -r, 0.6 * r, 0.8 * r]).collect();
            (x, u)
        };
        Self { r_min: 1.0, r_max: 1e6, r_count: 25, x_samples, u_samples }
    }

    pub fn r_grid(&self) -> Vec<f64> {
        let n = self.r_count.max(2);
        let ratio = (self.r_max / self.r_min).powf(1.0 / (n - 1) as f64);
        (0..n).map(|i| self.r_min * ratio.powi(i as i32)).collect()
    }
}

/// Outcome of the assumption checks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub dimension: usize,
    pub declared_beta: f64,
    /// Empirical comparability constant over the upper half of the r-grid.
    pub beta_hat: f64,
    /// (r, sup_l q^U(rl) / inf_l q^L(rl)).
    pub ratio_profile: Vec<(f64, f64)>,
    /// sup_x ∫ (1 ∧ ‖u‖²) m(x,u) μ(du) over the x samples.
    pub integrability_constant: f64,
    pub measured_b1: f64,
    pub measured_b2: f64,
    pub measured_b3: f64,
    pub a1: bool,
    pub a2: bool,
    pub a3: bool,
    pub symmetry: bool,
    pub integrability: bool,
    pub failures: Vec<FailureCode>,
}

/// Validation failure carrying the full report.
#[derive(Debug, Clone, Error)]
#[error("model fails {}: beta_hat = {:.4}", .code.code(), .report.beta_hat)]
pub struct ValidationError {
    pub code: FailureCode,
    pub report: Box<ValidationReport>,
}

const REL_TOL: f64 = 1e-9;

/// Check the comparability, boundedness, Hölder and symmetry assumptions on
/// the samples of `plan`; errors with the first failing assumption.
pub fn validate_model(model: &LevyTypeModel, plan: &SamplePlan) -> Result<ValidationReport, ValidationError> {
    let report = build_report(model, plan);
    match report.failures.first() {
        Some(&code) => Err(ValidationError { code, report: Box::new(report) }),
        None => Ok(report),
    }
}

fn build_report(model: &LevyTypeModel, plan: &SamplePlan) -> ValidationReport {
    let dim = model.dim();
    let base = model.base();
    let c = model.constants();
    let dirs = base.directions();

    let ratio_profile: Vec<(f64, f64)> = plan
        .r_grid()
        .into_iter()
        .map(|r| {
            let (mut sup_u, mut inf_l) = (0.0f64, f64::INFINITY);
            for l in &dirs {
                let xi: Vec<f64> = l.iter().map(|v| v * r).collect();
                let (u, lo) = base.upper_lower(&xi);
                sup_u = sup_u.max(u);
                inf_l = inf_l.min(lo);
            }
            let ratio = if inf_l > 0.0 { sup_u / inf_l } else { f64::INFINITY };
            (r, ratio)
        })
        .collect();
    let half = ratio_profile.len() / 2;
    let beta_hat = ratio_profile[half..].iter().map(|p| p.1).fold(0.0, f64::max);
    let quartile = &ratio_profile[(3 * ratio_profile.len()) / 4..];
    let a1 = beta_hat.is_finite() && !quartile.iter().all(|p| !(p.1 <= c.beta * (1.0 + 1e-6)));

    let xs: Vec<&[f64]> = plan.x_samples.chunks(dim).collect();
    let us: Vec<&[f64]> = plan.u_samples.chunks(dim).collect();
    let modulation = model.modulation();
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for x in &xs {
        for u in &us {
            let v = modulation.value(x, u);
            lo = lo.min(v);
            hi = hi.max(v);
        }
    }
    let a2 = lo >= c.b1 * (1.0 - REL_TOL) && hi <= c.b2 * (1.0 + REL_TOL);

    let drift = model.drift();
    let mut b3 = 0.0f64;
    for (i, x) in xs.iter().enumerate() {
        let ax = drift.value(x);
        for y in xs.iter().skip(i + 1) {
            let d: Vec<f64> = x.iter().zip(y.iter()).map(|(a, b)| a - b).collect();
            let scale = norm(&d).powf(c.lambda).min(1.0);
            let ay = drift.value(y);
            let dd: Vec<f64> = ax.iter().zip(&ay).map(|(a, b)| a - b).collect();
            for u in &us {
                let diff = (modulation.value(x, u) - modulation.value(y, u)).abs() + norm(&dd);
                b3 = b3.max(diff / scale);
            }
        }
    }
    let a3 = b3 <= c.b3 * (1.0 + REL_TOL) + 1e-14;

    let symmetry = if model.alpha() <= 1.0 {
        base.is_symmetric() && drift.is_zero()
    } else {
        true
    };

    let integrability_constant = xs
        .iter()
        .map(|x| {
            modulation
                .terms
                .iter()
                .map(|t| t.state.value(x) * base.levy_integral_weighted(t.weight))
                .sum::<f64>()
        })
        .fold(0.0, f64::max);
    let integrability = integrability_constant.is_finite();

    let mut failures = Vec::new();
    if !integrability {
        failures.push(FailureCode::FailsIntegrability);
    }
    if !a1 {
        failures.push(FailureCode::FailsA1);
    }
    if !a2 {
        failures.push(FailureCode::FailsA2);
    }
    if !a3 {
        failures.push(FailureCode::FailsA3);
    }
    if !symmetry {
        failures.push(FailureCode::FailsSymmetry);
    }
    ValidationReport {
        dimension: dim,
        declared_beta: c.beta,
        beta_hat,
        ratio_profile,
        integrability_constant,
        measured_b1: lo,
        measured_b2: hi,
        measured_b3: b3,
        a1,
        a2,
        a3,
        symmetry,
        integrability,
        failures,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{
        AssumptionConstants, Atom, DensitySpec, DriftField, JumpWeight, ModelSpec, ModulationField, ModulationTerm,
        QuadratureSpec, StateFactor,
    };

    fn spec_with(density: DensitySpec, atoms: Vec<Atom>, beta: f64) -> ModelSpec {
        ModelSpec {
            dimension: 1,
            density,
            atoms,
            modulation: ModulationField::constant(1.0),
            drift: DriftField::Zero,
            constants: AssumptionConstants { beta, lambda: 0.5, b1: 1.0, b2: 1.0, b3: 0.0 },
            symmetric: true,
            quadrature: QuadratureSpec::default(),
        }
    }

    #[test]
    fn stable_model_passes_with_exact_beta() {
        for &alpha in &[0.7, 1.0, 1.5] {
            let m = LevyTypeModel::stable(1, alpha, 1.0).unwrap();
            let r = validate_model(&m, &SamplePlan::default_for(1)).unwrap();
            assert!((r.beta_hat - 2.0 / alpha).abs() < 1e-10, "{}", r.beta_hat);
            assert!(r.integrability_constant.is_finite());
        }
    }

    #[test]
    fn pure_atoms_fail_comparability() {
        let atoms = vec![Atom { location: vec![1.0], mass: 1.0 }, Atom { location: vec![-1.0], mass: 1.0 }];
        let m = LevyTypeModel::from_spec(spec_with(DensitySpec::None, atoms, 2.0)).unwrap();
        let err = validate_model(&m, &SamplePlan::default_for(1)).unwrap_err();
        assert_eq!(err.code, FailureCode::FailsA1);
        assert!(err.report.beta_hat.is_infinite());
    }

    #[test]
    fn modulation_bounds_and_holder_constant() {
        let mut spec = spec_with(DensitySpec::PowerLaw { alpha: 1.0, scale: 1.0, skew: 0.0 }, vec![], 2.0);
        spec.modulation = ModulationField {
            terms: vec![
                ModulationTerm { state: StateFactor::Constant { value: 1.0 }, weight: JumpWeight::Unit },
                ModulationTerm { state: StateFactor::Saturating { amplitude: 0.4, exponent: 1.0 }, weight: JumpWeight::Unit },
            ],
        };
        spec.constants = AssumptionConstants { beta: 2.0, lambda: 1.0, b1: 1.0, b2: 1.4, b3: 0.4 };
        let m = LevyTypeModel::from_spec(spec.clone()).unwrap();
        let r = validate_model(&m, &SamplePlan::default_for(1)).unwrap();
        assert!(r.a2 && r.a3);
        assert!((r.measured_b2 - 1.4).abs() < 1e-12);
        spec.constants.b2 = 1.3;
        let m = LevyTypeModel::from_spec(spec).unwrap();
        assert_eq!(validate_model(&m, &SamplePlan::default_for(1)).unwrap_err().code, FailureCode::FailsA2);
    }

    #[test]
    fn asymmetric_small_alpha_fails_symmetry() {
        let mut spec = spec_with(DensitySpec::PowerLaw { alpha: 0.8, scale: 1.0, skew: 0.3 }, vec![], 2.5);
        spec.symmetric = true;
        let m = LevyTypeModel::from_spec(spec).unwrap();
        let err = validate_model(&m, &SamplePlan::default_for(1)).unwrap_err();
        assert_eq!(err.code, FailureCode::FailsSymmetry);
    }

    #[test]
    fn declared_beta_too_small_fails() {
        let m = LevyTypeModel::from_spec(spec_with(DensitySpec::PowerLaw { alpha: 1.0, scale: 1.0, skew: 0.0 }, vec![], 1.5))
            .unwrap();
        assert_eq!(validate_model(&m, &SamplePlan::default_for(1)).unwrap_err().code, FailureCode::FailsA1);
    }
}
