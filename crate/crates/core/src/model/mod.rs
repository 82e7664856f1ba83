//! Lévy-type models (a, μ, m): definitions, symbols, assumption checks
//! and the scale function.

mod measure;
mod profile;
mod symbol;
mod validate;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::ModelError;

pub use measure::{norm, norm_sq, Atom, DensitySpec, JumpWeight, LevyBaseMeasure, QuadratureSpec, RadialProfile};
pub use profile::{fit_exponents, ExponentFit, ProfileConfig, ScaleProfile};
pub use symbol::{SymbolTerm, VaryingCoefficient};
pub use validate::{validate_model, FailureCode, SamplePlan, ValidationError, ValidationReport};

/// State-dependent factor g(x) of a modulation term.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum StateFactor {
    Constant { value: f64 },
    /// amplitude · (1 ∧ ‖x‖^exponent)
    Saturating {
        amplitude: f64,
        #[serde(default = "one")]
        exponent: f64,
    },
    /// amplitude · cos(frequency · x₁)
    Cosine { amplitude: f64, frequency: f64 },
}

fn one() -> f64 {
    1.0
}

impl StateFactor {
    pub fn value(&self, x: &[f64]) -> f64 {
        match *self {
            StateFactor::Constant { value } => value,
            StateFactor::Saturating { amplitude, exponent } => amplitude * norm(x).powf(exponent).min(1.0),
            StateFactor::Cosine { amplitude, frequency } => amplitude * (frequency * x[0]).cos(),
        }
    }

    pub fn is_constant(&self) -> bool {
        match *self {
            StateFactor::Constant { .. } => true,
            StateFactor::Saturating { amplitude, .. } | StateFactor::Cosine { amplitude, .. } => amplitude == 0.0,
        }
    }
}

/// One separable term g(x) h(u) of the modulation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModulationTerm {
    pub state: StateFactor,
    #[serde(default)]
    pub weight: JumpWeight,
}

/// m(x,u) = Σ_j g_j(x) h_j(u) with its declared bounds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModulationField {
    pub terms: Vec<ModulationTerm>,
}

impl ModulationField {
    pub fn constant(value: f64) -> Self {
        Self { terms: vec![ModulationTerm { state: StateFactor::Constant { value }, weight: JumpWeight::Unit }] }
    }

    pub fn value(&self, x: &[f64], u: &[f64]) -> f64 {
        let s = norm(u);
        self.terms.iter().map(|t| t.state.value(x) * t.weight.value(s)).sum()
    }

    pub fn is_constant(&self) -> bool {
        self.terms.iter().all(|t| t.state.is_constant())
    }
}

/// Drift field a(x).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DriftField {
    #[default]
    Zero,
    Constant { value: Vec<f64> },
    /// amplitude · sin(frequency · x₁)
    Sine { amplitude: Vec<f64>, frequency: f64 },
}

impl DriftField {
    pub fn value(&self, x: &[f64]) -> Vec<f64> {
        match self {
            DriftField::Zero => vec![0.0; x.len()],
            DriftField::Constant { value } => value.clone(),
            DriftField::Sine { amplitude, frequency } => {
                let s = (frequency * x[0]).sin();
                amplitude.iter().map(|a| a * s).collect()
            }
        }
    }

    pub fn is_zero(&self) -> bool {
        match self {
            DriftField::Zero => true,
            DriftField::Constant { value } => value.iter().all(|v| *v == 0.0),
            DriftField::Sine { amplitude, .. } => amplitude.iter().all(|v| *v == 0.0),
        }
    }

    pub fn is_constant(&self) -> bool {
        !matches!(self, DriftField::Sine { .. }) || self.is_zero()
    }
}

/// Declared assumption constants.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AssumptionConstants {
    /// Comparability constant between q^U and q^L.
    pub beta: f64,
    /// Hölder exponent of the coefficients.
    pub lambda: f64,
    pub b1: f64,
    pub b2: f64,
    pub b3: f64,
}

/// Serializable model description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub dimension: usize,
    pub density: DensitySpec,
    #[serde(default)]
    pub atoms: Vec<Atom>,
    pub modulation: ModulationField,
    #[serde(default)]
    pub drift: DriftField,
    pub constants: AssumptionConstants,
    #[serde(default)]
    pub symmetric: bool,
    #[serde(default)]
    pub quadrature: QuadratureSpec,
}

/// A validated-by-construction Lévy-type model.
#[derive(Debug, Clone, PartialEq)]
pub struct LevyTypeModel {
    spec: ModelSpec,
    base: LevyBaseMeasure,
}

impl LevyTypeModel {
    pub fn from_spec(spec: ModelSpec) -> Result<Self, ModelError> {
        let c = spec.constants;
        if !(c.beta > 1.0) {
            return Err(ModelError::Invalid(format!("beta = {} must exceed 1", c.beta)));
        }
        if !(c.lambda > 0.0 && c.lambda <= 2.0 / c.beta + 1e-12) {
            return Err(ModelError::Invalid(format!("lambda = {} not in (0, 2/beta]", c.lambda)));
        }
        if !(c.b1 > 0.0 && c.b2 >= c.b1 && c.b3 >= 0.0) {
            return Err(ModelError::Invalid("need 0 < b1 <= b2 and b3 >= 0".into()));
        }
        if spec.modulation.terms.is_empty() {
            return Err(ModelError::Invalid("modulation needs at least one term".into()));
        }
        if 2.0 / c.beta <= 1.0 && (!spec.symmetric || !spec.drift.is_zero()) {
            return Err(ModelError::Invalid("2/beta <= 1 requires a symmetric model without drift".into()));
        }
        let drift_len = match &spec.drift {
            DriftField::Zero => spec.dimension,
            DriftField::Constant { value } => value.len(),
            DriftField::Sine { amplitude, .. } => amplitude.len(),
        };
        if drift_len != spec.dimension {
            return Err(ModelError::Invalid("drift dimension mismatch".into()));
        }
        let base = LevyBaseMeasure::new(spec.dimension, spec.density.clone(), spec.atoms.clone(), spec.quadrature)?;
        Ok(Self { spec, base })
    }

    pub fn from_json(text: &str) -> Result<Self, ModelError> {
        let spec: ModelSpec = serde_json::from_str(text).map_err(|e| ModelError::Invalid(e.to_string()))?;
        Self::from_spec(spec)
    }

    /// Symmetric α-stable-like model with unit modulation.
    pub fn stable(dim: usize, alpha: f64, scale: f64) -> Result<Self, ModelError> {
        Self::from_spec(ModelSpec {
            dimension: dim,
            density: DensitySpec::PowerLaw { alpha, scale, skew: 0.0 },
            atoms: vec![],
            modulation: ModulationField::constant(1.0),
            drift: DriftField::Zero,
            constants: AssumptionConstants { beta: 2.0 / alpha, lambda: alpha.min(1.0) * 0.5, b1: 1.0, b2: 1.0, b3: 0.0 },
            symmetric: true,
            quadrature: QuadratureSpec::default(),
        })
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn base(&self) -> &LevyBaseMeasure {
        &self.base
    }

    pub fn dim(&self) -> usize {
        self.spec.dimension
    }

    pub fn constants(&self) -> AssumptionConstants {
        self.spec.constants
    }

    pub fn modulation(&self) -> &ModulationField {
        &self.spec.modulation
    }

    pub fn drift(&self) -> &DriftField {
        &self.spec.drift
    }

    /// α = 2/β from the declared comparability constant.
    pub fn alpha(&self) -> f64 {
        2.0 / self.spec.constants.beta
    }

    pub fn lambda(&self) -> f64 {
        self.spec.constants.lambda
    }

    /// True when neither the modulation nor the drift depend on x.
    pub fn has_constant_coefficients(&self) -> bool {
        self.spec.modulation.is_constant() && self.spec.drift.is_constant()
    }

    /// Stable content hash of the serialized model definition.
    pub fn hash(&self) -> String {
        let text = serde_json::to_string(&self.spec).expect("model spec serializes");
        let digest = Sha256::digest(text.as_bytes());
        digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
    }
}
