//! Stage execution, acceptance checks and artifact bookkeeping for one run
//! directory.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use levy_parametrix::envelopes::{fit_envelope_constants, g_hierarchy, FitSplit, Hierarchy};
use levy_parametrix::frozen::SpatialGrid;
use levy_parametrix::io::{read_tensor, write_csv, write_json, write_kernel_csv, write_tensor};
use levy_parametrix::kato::{assess_measure, default_x_samples, direct_class_check, KatoReport, UPotential};
use levy_parametrix::model::{
    fit_exponents, validate_model, DensitySpec, LevyTypeModel, SamplePlan, ScaleProfile, StateFactor,
};
use levy_parametrix::oracle::{
    empirical_vs_kernel, simulate_paths, stable_symbol_constant, wrapped_cauchy, PathEnsemble, SimulationConfig,
};
use levy_parametrix::parametrix::{
    chapman_kolmogorov_defect, residual_check, KernelField, ParametrixSolver, Solution, SolverConfig,
};
use levy_parametrix::stats::loglog_slope;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::config::{hex_digest, versions, KatoSection, ScenarioConfig, Stage};
use crate::error::CliError;

/// Files the manifest does not list.
const UNLISTED: [&str; 2] = ["manifest.json", "timings.json"];
/// Kernel tensor of the solve stage, reused by later stages.
pub const KERNEL_FILE: &str = "p.bin";

/// One acceptance check with its admissible interval.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub id: String,
    pub value: f64,
    pub lower: Option<f64>,
    pub upper: Option<f64>,
    pub pass: bool,
}

impl Check {
    fn at_most(id: impl Into<String>, value: f64, upper: f64) -> Self {
        Self { id: id.into(), value, lower: None, upper: Some(upper), pass: value <= upper }
    }

    fn at_least(id: impl Into<String>, value: f64, lower: f64) -> Self {
        Self { id: id.into(), value, lower: Some(lower), upper: None, pass: value >= lower }
    }

    fn within(id: impl Into<String>, value: f64, center: f64, tol: f64) -> Self {
        let (lo, hi) = (center - tol, center + tol);
        Self { id: id.into(), value, lower: Some(lo), upper: Some(hi), pass: value >= lo && value <= hi }
    }

    /// A yes/no outcome recorded as 1 or 0.
    fn flag(id: impl Into<String>, pass: bool) -> Self {
        Self { id: id.into(), value: if pass { 1.0 } else { 0.0 }, lower: Some(1.0), upper: None, pass }
    }
}

/// Top-level run summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub scenario: String,
    pub config_hash: String,
    pub stages: Vec<Stage>,
    pub checks: Vec<Check>,
    pub all_pass: bool,
}

/// Manifest entry of one artifact.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArtifactEntry {
    pub file: String,
    pub bytes: u64,
    pub sha256: String,
}

/// Run manifest; wall-clock timings live in timings.json.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub scenario: String,
    pub config_hash: String,
    pub model_hash: Option<String>,
    pub seed: u64,
    pub versions: BTreeMap<String, String>,
    pub stages: Vec<Stage>,
    pub artifacts: Vec<ArtifactEntry>,
}

/// State shared by the stages of one run.
struct RunContext<'a> {
    config: &'a ScenarioConfig,
    out: PathBuf,
    model: Option<LevyTypeModel>,
    kernel: Option<KernelField>,
    checks: Vec<Check>,
}

impl RunContext<'_> {
    fn path(&self, file: &str) -> PathBuf {
        self.out.join(file)
    }

    fn model(&self) -> Result<&LevyTypeModel, CliError> {
        self.model.as_ref().ok_or_else(|| CliError::ConfigInvalid("no model configured".into()))
    }

    fn grid(&self) -> Result<SpatialGrid, CliError> {
        let spec = self.config.grid.ok_or_else(|| CliError::ConfigInvalid("no grid configured".into()))?;
        SpatialGrid::from_spec(spec).map_err(|e| CliError::ConfigInvalid(format!("grid: {e}")))
    }

    /// The solved kernel, from this run or from the cached tensor.
    fn kernel(&mut self, stage: Stage) -> Result<KernelField, CliError> {
        if let Some(p) = &self.kernel {
            return Ok(p.clone());
        }
        let path = self.path(KERNEL_FILE);
        if !path.exists() {
            return Err(CliError::ConfigInvalid(format!("stage {stage} needs the solve stage or a cached {KERNEL_FILE}")));
        }
        let (header, p) = read_tensor(&path)?;
        let model_hash = self.model()?.hash();
        if header.model_hash != model_hash || Some(header.grid) != self.config.grid {
            return Err(CliError::ConfigInvalid(format!("cached {KERNEL_FILE} belongs to a different model or grid")));
        }
        self.kernel = Some(p.clone());
        Ok(p)
    }
}

/// Outcome of [`run`].
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub out: PathBuf,
    pub summary: Summary,
    pub timings: BTreeMap<String, f64>,
}

/// Add the solve stage when a later stage needs the kernel and none is cached.
pub fn with_dependencies(config: &ScenarioConfig, stages: &[Stage], out: &Path) -> Vec<Stage> {
    let mut plan = stages.to_vec();
    let kato_needs_kernel = config.kato.as_ref().is_some_and(|k| k.alphas.is_empty());
    let needs_kernel = plan
        .iter()
        .any(|s| matches!(s, Stage::Envelope | Stage::Oracle) || (*s == Stage::Kato && kato_needs_kernel));
    if needs_kernel && !plan.contains(&Stage::Solve) && !out.join(KERNEL_FILE).exists() {
        plan.push(Stage::Solve);
    }
    plan.sort();
    plan.dedup();
    plan
}

/// Execute `stages` of the scenario into `out`.
pub fn run(config: &ScenarioConfig, stages: &[Stage], out: &Path) -> Result<RunOutcome, CliError> {
    let stages = with_dependencies(config, &config.stage_plan(stages), out);
    if stages.is_empty() {
        return Err(CliError::ConfigInvalid("no stages requested".into()));
    }
    config.check_stages(&stages)?;
    std::fs::create_dir_all(out)?;
    let model = match &config.model {
        Some(_) => Some(config.build_model()?),
        None => None,
    };
    let mut ctx = RunContext { config, out: out.to_path_buf(), model, kernel: None, checks: Vec::new() };
    let mut timings = BTreeMap::new();
    for &stage in &stages {
        let start = Instant::now();
        match stage {
            Stage::Validate => validate_stage(&mut ctx)?,
            Stage::Profile => profile_stage(&mut ctx)?,
            Stage::Solve => solve_stage(&mut ctx)?,
            Stage::Envelope => envelope_stage(&mut ctx)?,
            Stage::Kato => kato_stage(&mut ctx)?,
            Stage::Oracle => oracle_stage(&mut ctx)?,
        }
        timings.insert(stage.name().to_string(), start.elapsed().as_secs_f64());
    }
    let summary = Summary {
        scenario: config.name.clone(),
        config_hash: config.hash(),
        stages: stages.clone(),
        all_pass: ctx.checks.iter().all(|c| c.pass),
        checks: ctx.checks,
    };
    write_json(&out.join("summary.json"), &summary)?;
    let manifest = Manifest {
        scenario: config.name.clone(),
        config_hash: summary.config_hash.clone(),
        model_hash: ctx.model.as_ref().map(LevyTypeModel::hash),
        seed: config.seed,
        versions: versions().into_iter().map(|(k, v)| (k.to_string(), v.to_string())).collect(),
        stages,
        artifacts: list_artifacts(out)?,
    };
    write_json(&out.join("manifest.json"), &manifest)?;
    write_json(&out.join("timings.json"), &timings)?;
    Ok(RunOutcome { out: out.to_path_buf(), summary, timings })
}

/// Every file of the run directory except the manifest and timings, by name.
pub fn list_artifacts(out: &Path) -> Result<Vec<ArtifactEntry>, CliError> {
    let mut entries = Vec::new();
    for entry in std::fs::read_dir(out)? {
        let entry = entry?;
        let name = entry.file_name().to_string_lossy().into_owned();
        if !entry.file_type()?.is_file() || UNLISTED.contains(&name.as_str()) {
            continue;
        }
        let bytes = std::fs::read(entry.path())?;
        entries.push(ArtifactEntry { file: name, bytes: bytes.len() as u64, sha256: hex_digest(&bytes) });
    }
    entries.sort_by(|a, b| a.file.cmp(&b.file));
    Ok(entries)
}

fn stage_error(stage: Stage, code: &str, err: impl std::fmt::Display) -> CliError {
    CliError::stage(stage.name(), code, err)
}

fn validate_stage(ctx: &mut RunContext) -> Result<(), CliError> {
    let model = ctx.model()?;
    let plan = SamplePlan::default_for(model.dim());
    match validate_model(model, &plan) {
        Ok(report) => {
            write_json(&ctx.path("validation.json"), &report)?;
            ctx.checks.push(Check::flag("validate.assumptions", true));
            Ok(())
        }
        Err(err) => {
            write_json(&ctx.path("validation.json"), &err.report)?;
            Err(stage_error(Stage::Validate, err.code.code(), &err))
        }
    }
}

/// Closed-form ρ_t of an untruncated power-law density in 1D.
fn rho_closed_form(model: &LevyTypeModel) -> Option<impl Fn(f64) -> f64> {
    let DensitySpec::PowerLaw { alpha, .. } = *model.base().density_spec() else { return None };
    if model.dim() != 1 || !model.base().atoms().is_empty() {
        return None;
    }
    let (pos, neg) = model.base().scales();
    // q*(r) = (c₊ + c₋)(1/(2−α) + 1/α) r^α
    let k = (pos + neg) * (1.0 / (2.0 - alpha) + 1.0 / alpha);
    Some(move |t: f64| (t * k).powf(-1.0 / alpha))
}

fn profile_stage(ctx: &mut RunContext) -> Result<(), CliError> {
    let model = ctx.model()?.clone();
    let section = ctx.config.profile;
    let profile =
        ScaleProfile::build(&model, section.config).map_err(|e| stage_error(Stage::Profile, e.code(), &e))?;
    let fit = fit_exponents(&profile);
    let n = section.check_count.max(2);
    let ratio = (section.check_to / section.check_from).powf(1.0 / (n - 1) as f64);
    let mut rows = Vec::with_capacity(n);
    let exact = rho_closed_form(&model);
    for i in 0..n {
        let t = section.check_from * ratio.powi(i as i32);
        let rho = profile.rho(t).map_err(|e| stage_error(Stage::Profile, e.code(), &e))?;
        let reference = exact.as_ref().map_or(f64::NAN, |f| f(t));
        rows.push([t, rho, t * profile.q_star(rho), reference]);
    }
    write_csv(&ctx.path("profile.csv"), &["t", "rho", "t_qstar_rho", "rho_closed_form"], &rows)?;
    write_json(&ctx.path("profile.json"), &json!({ "fit": fit, "table": profile.table() }))?;
    let inverse = rows.iter().map(|r| (r[2] - 1.0).abs()).fold(0.0, f64::max);
    ctx.checks.push(Check::at_most("profile.rho_inverse", inverse, ctx.config.tolerances.rho_inverse));
    if exact.is_some() {
        let rel = rows.iter().map(|r| ((r[1] - r[3]) / r[3]).abs()).fold(0.0, f64::max);
        ctx.checks.push(Check::at_most("profile.rho_closed_form", rel, ctx.config.tolerances.rho_exact));
    }
    Ok(())
}

/// Constant scale c of a rotation-invariant Cauchy model in 1D, whose
/// kernel is the Cauchy density with γ = π c t.
fn cauchy_scale(model: &LevyTypeModel) -> Option<f64> {
    let DensitySpec::PowerLaw { alpha, scale, skew } = *model.base().density_spec() else { return None };
    if alpha != 1.0 || skew != 0.0 || model.dim() != 1 || !model.base().atoms().is_empty() || !model.drift().is_zero() {
        return None;
    }
    let mut m = 0.0;
    for term in &model.modulation().terms {
        match (term.state.clone(), term.weight) {
            (StateFactor::Constant { value }, levy_parametrix::model::JumpWeight::Unit) => m += value,
            (state, _) if state.is_constant() => {}
            _ => return None,
        }
    }
    Some(scale * m)
}

fn csv_steps(field: &KernelField, per_axis: usize) -> (usize, usize) {
    let n = field.grid().nodes();
    let x_step = (n / per_axis.max(1)).max(1);
    let columns_per_axis = n / field.stride();
    let c_step = (columns_per_axis / per_axis.max(1)).max(1);
    (x_step, if field.grid().dim() == 1 { c_step } else { c_step * c_step })
}

fn solve_stage(ctx: &mut RunContext) -> Result<(), CliError> {
    let model = ctx.model()?.clone();
    let grid = ctx.grid()?;
    let tol = ctx.config.tolerances;
    let fail = |e: levy_parametrix::error::ParametrixError| stage_error(Stage::Solve, e.code(), &e);
    let solver = ParametrixSolver::new(&model, &grid, ctx.config.solver).map_err(fail)?;
    let ladder = solver.ladder(ctx.config.ladder.clone()).map_err(fail)?;
    let solution = solver.solve(&ladder).map_err(fail)?;
    let Solution { p, correction, series, .. } = &solution;
    let diagnostics = json!({
        "term_norms": series.term_norms,
        "ratios": series.ratios(),
        "terms_used": series.terms_used,
        "converged": series.converged,
        "k0": series.k0,
        "delta": series.delta,
        "sigma": series.sigma,
    });
    write_tensor(&ctx.path(KERNEL_FILE), p, &model.hash(), diagnostics.clone())?;
    let (x_step, c_step) = csv_steps(p, ctx.config.csv_points_per_axis);
    write_kernel_csv(&ctx.path("p.csv"), p, x_step, c_step)?;
    write_json(&ctx.path("series.json"), &diagnostics)?;

    let times = p.times().to_vec();
    let max = p.max();
    ctx.checks.push(Check::at_least("solve.positivity", p.min() / max, -tol.positivity));
    let mut mass_error: f64 = 0.0;
    let mut mass_rows = Vec::new();
    for (ti, &t) in times.iter().enumerate() {
        // full interpolated rows started from the column nodes
        let worst = p
            .columns()
            .iter()
            .map(|&x| (grid.integrate(&p.row(ti, x)) - 1.0).abs())
            .fold(0.0, f64::max);
        mass_rows.push([t, worst]);
        mass_error = mass_error.max(worst);
    }
    write_csv(&ctx.path("mass.csv"), &["t", "max_row_mass_error"], &mass_rows)?;
    ctx.checks.push(Check::at_most("solve.mass", mass_error, tol.mass));

    let mut metrics = BTreeMap::new();
    if grid.dim() == 1 && p.time_index(0.25).is_some() && p.time_index(0.5).is_some() {
        let defect = chapman_kolmogorov_defect(p, 0.25, 0.25, &grid).map_err(fail)?;
        let rel = defect / p.sup_norm_at(p.time_index(0.5).expect("checked above"));
        metrics.insert("chapman_kolmogorov", rel);
        ctx.checks.push(Check::at_most("solve.chapman_kolmogorov", rel, tol.chapman_kolmogorov));
    }
    let around_half = [0.49, 0.5, 0.51].iter().all(|&t| p.time_index(t).is_some());
    if around_half {
        let report = residual_check(p, &model, &grid).map_err(fail)?;
        let r = report.at(0.5).unwrap_or(f64::NAN);
        metrics.insert("residual_at_half", r);
        ctx.checks.push(Check::at_most("solve.residual", r, tol.residual));
    }
    if model.has_constant_coefficients() {
        let phi = series.phi.sup_norm();
        metrics.insert("phi_sup", phi);
        ctx.checks.push(Check::at_most("solve.phi_zero", phi, tol.phi_zero));
    } else {
        let k0 = series.k0;
        let beyond = series.ratios().into_iter().skip(k0).fold(f64::NAN, f64::max);
        metrics.insert("series_ratio_beyond_k0", beyond);
        ctx.checks.push(Check::at_most("solve.series_ratio", beyond, 1.0));
        let profile = ScaleProfile::build(&model, ctx.config.profile.config)
            .map_err(|e| stage_error(Stage::Solve, e.code(), &e))?;
        let n = grid.dim() as i32;
        let mut scaled = Vec::with_capacity(times.len());
        for (ti, &t) in times.iter().enumerate() {
            let rho = profile.rho(t).map_err(|e| stage_error(Stage::Solve, e.code(), &e))?;
            scaled.push(correction.sup_norm_at(ti) / rho.powi(n));
        }
        let slope = loglog_slope(&times, &scaled);
        metrics.insert("correction_slope", slope);
        metrics.insert("correction_slope_target", 1.0 - series.delta);
        ctx.checks.push(Check::within("solve.correction_slope", slope, 1.0 - series.delta, tol.correction_slope));
    }
    if let Some(c) = cauchy_scale(&model) {
        let err = closed_form_error(p, c);
        metrics.insert("closed_form_error", err);
        ctx.checks.push(Check::at_most("solve.closed_form", err, tol.closed_form));
    }
    write_json(&ctx.path("solve.json"), &metrics)?;
    ctx.kernel = Some(p.clone());
    Ok(())
}

/// max over ladder times of sup |p − wrapped Cauchy| / sup wrapped Cauchy on |x − y| ≤ R/2.
pub fn closed_form_error(p: &KernelField, scale: f64) -> f64 {
    let grid = p.grid();
    let r = grid.half_width();
    let mut worst: f64 = 0.0;
    for (ti, &t) in p.times().iter().enumerate() {
        let (mut diff, mut peak) = (0.0f64, 0.0f64);
        for (ci, &y) in p.columns().iter().enumerate() {
            let yv = grid.point(y)[0];
            for (x, v) in p.column(ti, ci).iter().enumerate() {
                let d = grid.wrap(grid.point(x)[0] - yv);
                if d.abs() > 0.5 * r {
                    continue;
                }
                let reference = wrapped_cauchy(scale, t, d, r);
                diff = diff.max((v - reference).abs());
                peak = peak.max(reference);
            }
        }
        worst = worst.max(diff / peak);
    }
    worst
}

/// max / min of p(t,x,x)/ρ_tⁿ over the ladder and the column nodes.
fn diagonal_band(p: &KernelField, hierarchy_profile: &ScaleProfile) -> Result<(f64, Vec<[f64; 3]>), CliError> {
    let n = p.grid().dim() as i32;
    let mut rows = Vec::new();
    let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
    for (ti, &t) in p.times().iter().enumerate() {
        let rho = hierarchy_profile.rho(t).map_err(|e| stage_error(Stage::Envelope, e.code(), &e))?;
        for (ci, &y) in p.columns().iter().enumerate() {
            let ratio = p.column(ti, ci)[y] / rho.powi(n);
            lo = lo.min(ratio);
            hi = hi.max(ratio);
            rows.push([t, p.grid().point(y)[0], ratio]);
        }
    }
    Ok((hi / lo, rows))
}

fn envelope_stage(ctx: &mut RunContext) -> Result<(), CliError> {
    let model = ctx.model()?.clone();
    let grid = ctx.grid()?;
    let p = ctx.kernel(Stage::Envelope)?;
    let section = ctx.config.envelope.clone().expect("checked by check_stages");
    let tol = ctx.config.tolerances;
    let fail = |e: levy_parametrix::error::EnvelopeError| stage_error(Stage::Envelope, e.code(), &e);
    let lambda = section.lambda.unwrap_or_else(|| model.lambda());
    let hierarchy = g_hierarchy(&model, &section.times, &grid, lambda, section.hierarchy).map_err(fail)?;
    let indices = section
        .times
        .iter()
        .map(|&t| {
            p.time_index(t)
                .ok_or_else(|| CliError::ConfigInvalid(format!("envelope time {t} is not on the solve ladder")))
        })
        .collect::<Result<Vec<_>, _>>()?;
    let selected = p.select_times(&indices);
    let split = FitSplit::alternate(&hierarchy.times);
    let fit_config = section.fit.with_hierarchy(&hierarchy, section.hierarchy.k_poisson);
    let fit = fit_envelope_constants(&selected, &hierarchy.scales(), &split, &fit_config).map_err(fail)?;
    write_json(&ctx.path("envelope_fit.json"), &fit)?;
    write_json(&ctx.path("hierarchy_ledger.json"), &hierarchy.ledger())?;
    write_grid_measure(&ctx.path("lambda_measure.csv"), &hierarchy, 0)?;
    ctx.checks.push(Check::at_most("envelope.upper_heldout", fit.upper_ratio_heldout, 1.0));
    ctx.checks.push(Check::at_most("envelope.lower_heldout", fit.lower_ratio_heldout, 1.0));

    let profile = ScaleProfile::build(&model, ctx.config.profile.config)
        .map_err(|e| stage_error(Stage::Envelope, e.code(), &e))?;
    let (band, rows) = diagonal_band(&p, &profile)?;
    write_csv(&ctx.path("diagonal.csv"), &["t", "x", "p_over_rho_n"], &rows)?;
    ctx.checks.push(Check::at_most("envelope.diagonal_band", band, tol.diagonal_band));

    if let Some(ledger) = &section.ledger {
        let fine = SpatialGrid::from_spec(ledger.grid).map_err(|e| CliError::ConfigInvalid(format!("ledger grid: {e}")))?;
        let h = g_hierarchy(&model, &ledger.times, &fine, lambda, section.hierarchy).map_err(fail)?;
        let masses = h.ledger();
        write_json(&ctx.path("mass_ledger.json"), &masses)?;
        let lambda_max = masses.lambda_mass.iter().cloned().fold(0.0, f64::max);
        ctx.checks.push(Check::at_most("ledger.lambda_mass", lambda_max, 1.0));
        let poisson = masses.poisson_mass.iter().map(|m| (m - 1.0).abs()).fold(0.0, f64::max);
        ctx.checks.push(Check::at_most("ledger.poisson_mass", poisson, tol.poisson_mass));
        ctx.checks.push(Check::within("ledger.pi_slope", masses.pi_slope, -masses.delta, tol.pi_slope));
        let worst = masses.gamma.worst_ratio_by_k.iter().cloned().fold(0.0, f64::max);
        let mut gamma = Check::at_most("ledger.gamma_bound", worst, 1.0 + masses.gamma.tolerance);
        gamma.pass = masses.gamma.holds;
        ctx.checks.push(gamma);
    }
    Ok(())
}

/// CSV (node coordinates, weight) of Λ at ladder position `ti`.
fn write_grid_measure(path: &Path, hierarchy: &Hierarchy, ti: usize) -> Result<(), CliError> {
    let measure = &hierarchy.lambda[ti];
    let grid = measure.grid();
    let header: Vec<&str> = if grid.dim() == 1 { vec!["u", "weight"] } else { vec!["u1", "u2", "weight"] };
    let rows = measure.weights().iter().enumerate().filter(|(_, w)| **w != 0.0).map(|(i, w)| {
        let mut row = grid.point(i);
        row.push(*w);
        row
    });
    write_csv(path, &header, rows)?;
    Ok(())
}

fn alpha_label(alpha: f64) -> String {
    format!("a{alpha}")
}

/// Reference kernels of the Kato stage, one per α (or the scenario kernel).
fn kato_kernels(ctx: &mut RunContext, section: &KatoSection) -> Result<Vec<(LevyTypeModel, KernelField)>, CliError> {
    if section.alphas.is_empty() {
        let model = ctx.model()?.clone();
        let p = ctx.kernel(Stage::Kato)?;
        return Ok(vec![(model, p)]);
    }
    let grid_spec = section
        .grid
        .or(ctx.config.grid)
        .ok_or_else(|| CliError::ConfigInvalid("kato section needs a grid".into()))?;
    let grid = SpatialGrid::from_spec(grid_spec).map_err(|e| CliError::ConfigInvalid(format!("kato grid: {e}")))?;
    let fail = |e: levy_parametrix::error::ParametrixError| stage_error(Stage::Kato, e.code(), &e);
    let mut kernels = Vec::new();
    for &alpha in &section.alphas {
        let model = LevyTypeModel::stable(grid.dim(), alpha, 1.0)
            .map_err(|e| CliError::ConfigInvalid(format!("kato alpha {alpha}: {e}")))?;
        let config = SolverConfig { y_stride: section.y_stride.unwrap_or(ctx.config.solver.y_stride), ..ctx.config.solver };
        let solver = ParametrixSolver::new(&model, &grid, config).map_err(fail)?;
        let ladder = solver.ladder(section.times.clone()).map_err(fail)?;
        let field = solver.frozen_field(&ladder).map_err(fail)?;
        kernels.push((model, field));
    }
    Ok(kernels)
}

fn kato_stage(ctx: &mut RunContext) -> Result<(), CliError> {
    let section = ctx.config.kato.clone().expect("checked by check_stages");
    let kernels = kato_kernels(ctx, &section)?;
    let fail = |e: levy_parametrix::error::KatoError| stage_error(Stage::Kato, e.code(), &e);
    let mut reports: Vec<KatoReport> = Vec::new();
    for entry in &section.measures {
        entry.measure.validate().map_err(fail)?;
        let samples = default_x_samples(&entry.measure);
        for (model, field) in &kernels {
            let profile = ScaleProfile::build(model, ctx.config.profile.config)
                .map_err(|e| stage_error(Stage::Kato, e.code(), &e))?;
            let potential = UPotential::new(&profile);
            let times: Vec<f64> = section.times.iter().copied().filter(|&t| field.time_index(t).is_some()).collect();
            let direct = direct_class_check(field, &entry.measure, &times, &samples).map_err(fail)?;
            let report = assess_measure(&entry.label, &profile, &potential, &entry.measure, &samples, Some(direct));
            let stem = format!("kato_{}_{}", entry.label, alpha_label(report.alpha));
            write_json(&ctx.path(&format!("{stem}.json")), &report)?;
            write_csv(&ctx.path(&format!("{stem}_delta.csv")), &["delta", "kato_value", "potential_value"], report.delta_rows())?;
            write_csv(&ctx.path(&format!("{stem}_time.csv")), &["t", "sup_integral", "cutoff_integral"], report.time_rows())?;
            let id = format!("kato.{}.{}", entry.label, alpha_label(report.alpha));
            ctx.checks.push(Check::flag(format!("{id}.agree"), report.agree));
            for expect in entry.expect.iter().filter(|e| (e.alpha - report.alpha).abs() < 1e-12) {
                if let Some(v) = expect.verdict {
                    ctx.checks.push(Check::flag(format!("{id}.verdict_{}", v.label()), report.criterion_verdict == v));
                }
                if let Some(f) = expect.finiteness {
                    ctx.checks.push(Check::flag(format!("{id}.finiteness"), report.dynkin.verdict == f));
                }
                if let Some((value, tol)) = expect.dynkin_value {
                    ctx.checks.push(Check::within(format!("{id}.dynkin_value"), report.dynkin.value, value, tol));
                }
            }
            reports.push(report);
        }
        if let (Some((value, tol)), Some(first)) = (entry.expect_dimension, reports.last()) {
            ctx.checks.push(Check::within(format!("kato.{}.dimension", entry.label), first.sufficient.d_hat, value, tol));
        }
    }
    let summary: Vec<_> = reports
        .iter()
        .map(|r| {
            json!({
                "label": r.label,
                "alpha": r.alpha,
                "criterion_verdict": r.criterion_verdict,
                "direct_verdict": r.direct.as_ref().map(|d| d.verdict),
                "dynkin_value": r.dynkin.value,
                "d_hat": r.sufficient.d_hat,
                "agree": r.agree,
            })
        })
        .collect();
    write_json(&ctx.path("kato_summary.json"), &summary)?;
    Ok(())
}

/// KS distance of unwrapped positions against the whole-line Cauchy law.
fn cauchy_ks(ensemble: &PathEnsemble, ti: usize, scale: f64) -> f64 {
    let gamma = std::f64::consts::PI * scale * ensemble.times[ti];
    let x0 = ensemble.x0[0];
    let mut xs = ensemble.positions_at(ti).to_vec();
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    xs.iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = 0.5 + ((x - x0) / gamma).atan() / std::f64::consts::PI;
            ((i + 1) as f64 / n - f).max(f - i as f64 / n)
        })
        .fold(0.0, f64::max)
}

fn oracle_stage(ctx: &mut RunContext) -> Result<(), CliError> {
    let model = ctx.model()?.clone();
    let p = ctx.kernel(Stage::Oracle)?;
    let section = ctx.config.oracle.clone().expect("checked by check_stages");
    let tol = ctx.config.tolerances;
    let fail = |e: levy_parametrix::error::OracleError| stage_error(Stage::Oracle, e.code(), &e);
    let control = match section.control_alpha {
        Some(alpha) => {
            let wrong = LevyTypeModel::stable(model.dim(), alpha, 1.0)
                .map_err(|e| CliError::ConfigInvalid(format!("control alpha {alpha}: {e}")))?;
            let stride = p.grid().nodes() / 16;
            let solver = ParametrixSolver::new(&wrong, p.grid(), SolverConfig { y_stride: stride, ..SolverConfig::default() })
                .map_err(|e| stage_error(Stage::Oracle, e.code(), &e))?;
            let ladder = solver.ladder(section.times.clone()).map_err(|e| stage_error(Stage::Oracle, e.code(), &e))?;
            Some(solver.frozen_field(&ladder).map_err(|e| stage_error(Stage::Oracle, e.code(), &e))?)
        }
        None => None,
    };
    let cauchy = cauchy_scale(&model);
    for (i, x0) in section.x0.iter().enumerate() {
        let config = SimulationConfig {
            epsilon: section.epsilon,
            dt: section.dt,
            seed: ctx.config.seed.wrapping_add(i as u64),
            threads: None,
        };
        let ensemble = simulate_paths(&model, &section.times, x0, section.n_paths, config).map_err(fail)?;
        let dim = ensemble.dim;
        let header: Vec<&str> = if dim == 1 { vec!["t", "x"] } else { vec!["t", "x1", "x2"] };
        let rows = ensemble.times.iter().enumerate().flat_map(|(ti, &t)| {
            ensemble.positions_at(ti).chunks(dim).map(move |c| {
                let mut row = vec![t];
                row.extend_from_slice(c);
                row
            })
        });
        write_csv(&ctx.path(&format!("ensemble_{i}.csv")), &header, rows)?;
        let mut reports = Vec::new();
        for (ti, &t) in ensemble.times.iter().enumerate() {
            let report = empirical_vs_kernel(&ensemble, &p, t, x0).map_err(fail)?;
            let id = format!("oracle.x{i}.t{t}");
            ctx.checks.push(Check::at_most(format!("{id}.ks"), report.ks, tol.ks));
            let mut extra = serde_json::Map::new();
            if let Some(wrong) = &control {
                let c = empirical_vs_kernel(&ensemble, wrong, t, x0).map_err(fail)?;
                ctx.checks.push(Check::at_least(format!("{id}.ks_control"), c.ks, tol.ks_control));
                extra.insert("control_ks".into(), c.ks.into());
            }
            if let Some(scale) = cauchy {
                let ks = cauchy_ks(&ensemble, ti, scale);
                ctx.checks.push(Check::at_most(format!("{id}.ks_closed_form"), ks, report.ks_critical_99));
                extra.insert("closed_form_ks".into(), ks.into());
            }
            reports.push(json!({ "report": report, "extra": extra }));
        }
        let meta = json!({
            "n_paths": ensemble.n_paths,
            "x0": ensemble.x0,
            "epsilon": ensemble.epsilon,
            "dt": ensemble.dt,
            "steps": ensemble.steps,
            "seed": ensemble.seed,
            "proposal_rate": ensemble.proposal_rate,
            "symbol_constant": stable_symbol_constant(dim, model.alpha()),
            "comparisons": reports,
        });
        write_json(&ctx.path(&format!("oracle_{i}.json")), &meta)?;
    }
    Ok(())
}
