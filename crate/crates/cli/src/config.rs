//! Scenario configuration: model, grid, ladder, stage sections, seed and
//! tolerances, plus the bundled scenarios.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use levy_parametrix::envelopes::{FitConfig, HierarchyConfig};
use levy_parametrix::frozen::GridSpec;
use levy_parametrix::kato::{ClassVerdict, Finiteness, MeasureSpec};
use levy_parametrix::model::{LevyTypeModel, ModelSpec, ProfileConfig};
use levy_parametrix::parametrix::SolverConfig;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::CliError;

/// Pipeline stages in execution order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Validate,
    Profile,
    Solve,
    Envelope,
    Kato,
    Oracle,
}

impl Stage {
    pub const ALL: [Stage; 6] = [Stage::Validate, Stage::Profile, Stage::Solve, Stage::Envelope, Stage::Kato, Stage::Oracle];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Validate => "validate",
            Stage::Profile => "profile",
            Stage::Solve => "solve",
            Stage::Envelope => "envelope",
            Stage::Kato => "kato",
            Stage::Oracle => "oracle",
        }
    }

    pub fn parse(name: &str) -> Result<Self, CliError> {
        Stage::ALL
            .into_iter()
            .find(|s| s.name() == name.trim())
            .ok_or_else(|| CliError::ConfigInvalid(format!("unknown stage '{name}'")))
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Acceptance thresholds; every field can be replaced with `--tol-override key=value`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Tolerances {
    /// |∫ p dy − 1| at every ladder time.
    pub mass: f64,
    /// p ≥ −positivity · max p.
    pub positivity: f64,
    /// Chapman–Kolmogorov defect relative to sup p.
    pub chapman_kolmogorov: f64,
    /// Backward-equation residual relative to sup |∂_t p| in the bulk.
    pub residual: f64,
    /// Relative sup-norm error against the closed-form kernel on |x − y| ≤ R/2.
    pub closed_form: f64,
    /// sup |Φ| for constant coefficients.
    pub phi_zero: f64,
    /// Relative error of ρ_t against its closed form.
    pub rho_exact: f64,
    /// |t q*(ρ_t) − 1|.
    pub rho_inverse: f64,
    /// Allowed deviation of the correction slope from 1 − δ.
    pub correction_slope: f64,
    /// max / min of p(t,x,x)/ρ_tⁿ.
    pub diagonal_band: f64,
    /// |P_t(ℝⁿ) − 1|.
    pub poisson_mass: f64,
    /// Allowed deviation of the Π slope from −δ.
    pub pi_slope: f64,
    /// KS distance between simulated positions and the kernel.
    pub ks: f64,
    /// Smallest KS distance the wrong-α control must reach.
    pub ks_control: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            mass: 1e-3,
            positivity: 1e-6,
            chapman_kolmogorov: 1e-2,
            residual: 1e-2,
            closed_form: 1e-3,
            phi_zero: 1e-9,
            rho_exact: 1e-8,
            rho_inverse: 1e-9,
            correction_slope: 0.15,
            diagonal_band: 4.0,
            poisson_mass: 1e-10,
            pi_slope: 0.1,
            ks: 0.01,
            ks_control: 0.05,
        }
    }
}

impl Tolerances {
    /// Replace one named threshold.
    pub fn set(&mut self, key: &str, value: f64) -> Result<(), CliError> {
        let mut map = match serde_json::to_value(*self) {
            Ok(serde_json::Value::Object(map)) => map,
            _ => unreachable!("tolerances serialize to an object"),
        };
        if !map.contains_key(key) {
            let known: Vec<&String> = map.keys().collect();
            return Err(CliError::ConfigInvalid(format!("unknown tolerance '{key}', expected one of {known:?}")));
        }
        map.insert(key.to_string(), value.into());
        *self = serde_json::from_value(serde_json::Value::Object(map))
            .map_err(|e| CliError::ConfigInvalid(format!("tolerance '{key}': {e}")))?;
        Ok(())
    }

    /// Apply `key=value` overrides.
    pub fn apply_overrides(&mut self, overrides: &[String]) -> Result<(), CliError> {
        for item in overrides {
            let (key, value) = item
                .split_once('=')
                .ok_or_else(|| CliError::ConfigInvalid(format!("tolerance override '{item}' is not key=value")))?;
            let value: f64 = value
                .trim()
                .parse()
                .map_err(|_| CliError::ConfigInvalid(format!("tolerance override '{item}' has a non-numeric value")))?;
            self.set(key.trim(), value)?;
        }
        Ok(())
    }
}

/// Settings of the scale-profile stage.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProfileSection {
    pub config: ProfileConfig,
    /// Ladder [from, to] of the closed-form ρ_t comparison.
    pub check_from: f64,
    pub check_to: f64,
    pub check_count: usize,
}

impl Default for ProfileSection {
    fn default() -> Self {
        Self { config: ProfileConfig::default(), check_from: 0.01, check_to: 1.0, check_count: 21 }
    }
}

/// Fine grid and small-time ladder of the measure-hierarchy mass ledger.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LedgerSection {
    pub grid: GridSpec,
    pub times: Vec<f64>,
}

/// Settings of the envelope stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvelopeSection {
    /// Ladder times used for the hierarchy and the fit (a subset of the
    /// solve ladder).
    pub times: Vec<f64>,
    /// Hölder exponent λ of the hierarchy; the model's λ when absent.
    #[serde(default)]
    pub lambda: Option<f64>,
    #[serde(default)]
    pub hierarchy: HierarchyConfig,
    #[serde(default)]
    pub fit: FitConfig,
    #[serde(default)]
    pub ledger: Option<LedgerSection>,
}

/// Expected criterion outcome for one stable index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Expectation {
    pub alpha: f64,
    #[serde(default)]
    pub verdict: Option<ClassVerdict>,
    #[serde(default)]
    pub finiteness: Option<Finiteness>,
    /// Expected Dynkin value with its absolute tolerance.
    #[serde(default)]
    pub dynkin_value: Option<(f64, f64)>,
}

/// A measure of the Kato suite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasureEntry {
    pub label: String,
    pub measure: MeasureSpec,
    #[serde(default)]
    pub expect: Vec<Expectation>,
    /// Expected ball-mass dimension with its absolute tolerance.
    #[serde(default)]
    pub expect_dimension: Option<(f64, f64)>,
}

/// Settings of the Kato stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KatoSection {
    /// Stable indices of unit-scale rotation-invariant reference models;
    /// empty means the scenario model and its solved kernel.
    #[serde(default)]
    pub alphas: Vec<f64>,
    /// Grid of the reference kernels; the scenario grid when absent.
    #[serde(default)]
    pub grid: Option<GridSpec>,
    #[serde(default)]
    pub y_stride: Option<usize>,
    /// Ladder of the direct check.
    pub times: Vec<f64>,
    pub measures: Vec<MeasureEntry>,
}

/// Settings of the Monte Carlo stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleSection {
    pub times: Vec<f64>,
    pub x0: Vec<Vec<f64>>,
    pub n_paths: usize,
    pub epsilon: f64,
    #[serde(default)]
    pub dt: Option<f64>,
    /// Stable index of a deliberately wrong reference kernel.
    #[serde(default)]
    pub control_alpha: Option<f64>,
}

/// One scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub name: String,
    #[serde(default)]
    pub description: String,
    #[serde(default)]
    pub model: Option<ModelSpec>,
    /// Model file relative to the configuration file.
    #[serde(default)]
    pub model_file: Option<PathBuf>,
    #[serde(default)]
    pub grid: Option<GridSpec>,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub ladder: Vec<f64>,
    #[serde(default)]
    pub stages: Vec<Stage>,
    #[serde(default)]
    pub profile: ProfileSection,
    #[serde(default)]
    pub envelope: Option<EnvelopeSection>,
    #[serde(default)]
    pub kato: Option<KatoSection>,
    #[serde(default)]
    pub oracle: Option<OracleSection>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub tolerances: Tolerances,
    /// Nodes per axis written to kernel CSV exports.
    #[serde(default = "default_csv_points")]
    pub csv_points_per_axis: usize,
}

fn default_csv_points() -> usize {
    64
}

/// Bundled scenarios by name.
pub const BUNDLED: [(&str, &str); 5] = [
    ("stable-1d-const", include_str!("../scenarios/stable-1d-const.json")),
    ("modulated-stable-1d", include_str!("../scenarios/modulated-stable-1d.json")),
    ("truncated-stable-1d", include_str!("../scenarios/truncated-stable-1d.json")),
    ("stable-2d-const", include_str!("../scenarios/stable-2d-const.json")),
    ("kato-suite", include_str!("../scenarios/kato-suite.json")),
];

impl ScenarioConfig {
    pub fn from_json(text: &str, base_dir: Option<&Path>) -> Result<Self, CliError> {
        let mut config: ScenarioConfig =
            serde_json::from_str(text).map_err(|e| CliError::ConfigInvalid(format!("parse error: {e}")))?;
        config.resolve_model(base_dir)?;
        Ok(config)
    }

    /// A bundled scenario name or a path to a JSON file.
    pub fn load(source: &str) -> Result<Self, CliError> {
        if let Some((_, text)) = BUNDLED.iter().find(|(name, _)| *name == source) {
            return Self::from_json(text, None);
        }
        let path = Path::new(source);
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::ConfigInvalid(format!("cannot read config '{source}': {e}")))?;
        Self::from_json(&text, path.parent())
    }

    /// Read `model_file` into `model`.
    fn resolve_model(&mut self, base_dir: Option<&Path>) -> Result<(), CliError> {
        let Some(file) = self.model_file.take() else { return Ok(()) };
        if self.model.is_some() {
            return Err(CliError::ConfigInvalid("give either model or model_file, not both".into()));
        }
        let path = match base_dir {
            Some(dir) if file.is_relative() => dir.join(&file),
            _ => file.clone(),
        };
        let text = std::fs::read_to_string(&path)
            .map_err(|e| CliError::ConfigInvalid(format!("model file {}: {e}", path.display())))?;
        let spec: ModelSpec =
            serde_json::from_str(&text).map_err(|e| CliError::ConfigInvalid(format!("model file {}: {e}", path.display())))?;
        self.model = Some(spec);
        Ok(())
    }

    pub fn build_model(&self) -> Result<LevyTypeModel, CliError> {
        let spec = self.model.clone().ok_or_else(|| CliError::ConfigInvalid("no model or model_file given".into()))?;
        LevyTypeModel::from_spec(spec).map_err(|e| CliError::ConfigInvalid(format!("model: {e}")))
    }

    /// Requested stages in execution order; the configured list when `requested` is empty.
    pub fn stage_plan(&self, requested: &[Stage]) -> Vec<Stage> {
        let mut stages = if requested.is_empty() { self.stages.clone() } else { requested.to_vec() };
        stages.sort();
        stages.dedup();
        stages
    }

    /// Check that every requested stage has its inputs.
    pub fn check_stages(&self, stages: &[Stage]) -> Result<(), CliError> {
        let missing = |what: &str, stage: Stage| CliError::ConfigInvalid(format!("stage {stage} needs {what}"));
        for &stage in stages {
            let needs_model = match stage {
                Stage::Kato => self.kato.as_ref().is_some_and(|k| k.alphas.is_empty()),
                _ => true,
            };
            if needs_model && self.model.is_none() {
                return Err(missing("a model or model_file", stage));
            }
            let needs_kernel = match stage {
                Stage::Solve | Stage::Envelope | Stage::Oracle => true,
                Stage::Kato => self.kato.as_ref().is_some_and(|k| k.alphas.is_empty()),
                _ => false,
            };
            if needs_kernel && (self.grid.is_none() || self.ladder.is_empty()) {
                return Err(missing("a grid and a ladder", stage));
            }
            match stage {
                Stage::Envelope if self.envelope.is_none() => return Err(missing("an envelope section", stage)),
                Stage::Kato if self.kato.is_none() => return Err(missing("a kato section", stage)),
                Stage::Oracle if self.oracle.is_none() => return Err(missing("an oracle section", stage)),
                _ => {}
            }
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON of the effective configuration.
    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("config serializes");
        hex_digest(&bytes)
    }
}

/// Lower-case hex SHA-256.
pub fn hex_digest(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Names of the bundled scenarios.
pub fn bundled_names() -> Vec<&'static str> {
    BUNDLED.iter().map(|(n, _)| *n).collect()
}

/// Versions recorded in the manifest.
pub fn versions() -> BTreeMap<&'static str, &'static str> {
    BTreeMap::from([("levy-parametrix-cli", env!("CARGO_PKG_VERSION"))])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bundled_scenarios_parse() {
        for (name, text) in BUNDLED {
            let config = ScenarioConfig::from_json(text, None).unwrap_or_else(|e| panic!("{name}: {e}"));
            assert_eq!(config.name, name);
            config.check_stages(&config.stage_plan(&[])).unwrap();
        }
    }

    #[test]
    fn overrides_replace_known_keys_only() {
        let mut tol = Tolerances::default();
        tol.apply_overrides(&["ks=0.02".into(), " mass = 5e-4".into()]).unwrap();
        assert_eq!(tol.ks, 0.02);
        assert_eq!(tol.mass, 5e-4);
        assert_eq!(tol.apply_overrides(&["bogus=1".into()]).unwrap_err().code(), "CONFIG_INVALID");
        assert_eq!(tol.apply_overrides(&["ks".into()]).unwrap_err().code(), "CONFIG_INVALID");
    }

    #[test]
    fn solve_without_model_is_invalid() {
        let config = ScenarioConfig::from_json(r#"{"name": "x", "grid": {"dimension": 1, "half_width": 8, "nodes": 64}, "ladder": [0.5]}"#, None).unwrap();
        let err = config.check_stages(&[Stage::Solve]).unwrap_err();
        assert_eq!(err.code(), "CONFIG_INVALID");
    }

    #[test]
    fn hash_tracks_content() {
        let a = ScenarioConfig::load("stable-1d-const").unwrap();
        let mut b = a.clone();
        assert_eq!(a.hash(), b.hash());
        b.seed += 1;
        assert_ne!(a.hash(), b.hash());
    }
}
