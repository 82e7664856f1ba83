//! Side-by-side comparison of two run directories.

use std::collections::BTreeMap;
use std::path::Path;

use levy_parametrix::io::{read_csv, read_json, read_tensor};
use levy_parametrix::parametrix::KernelField;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::CliError;
use crate::runner::{Manifest, KERNEL_FILE};

/// Relative kernel difference above which two runs are flagged as different.
pub const KERNEL_RELATIVE_FLAG: f64 = 1e-3;

/// Kernel difference on the shared times, columns and nodes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelDiff {
    pub common_times: Vec<f64>,
    pub common_columns: usize,
    pub compared_values: usize,
    pub sup_diff: f64,
    pub relative_diff: f64,
    pub max_column_mass_diff: f64,
    pub flagged: bool,
}

/// Per-artifact outcome.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileDiff {
    pub file: String,
    pub identical: bool,
    /// Largest numeric difference for JSON and CSV files with matching shape.
    pub max_numeric_diff: Option<f64>,
    pub note: Option<String>,
}

/// Contents of compare.json.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareReport {
    pub run_a: String,
    pub run_b: String,
    pub config_hash_equal: bool,
    pub model_hash_equal: bool,
    pub kernel: Option<KernelDiff>,
    pub files: Vec<FileDiff>,
    pub only_in_a: Vec<String>,
    pub only_in_b: Vec<String>,
    pub identical_files: usize,
    pub differing_files: usize,
}

impl CompareReport {
    /// No differing or missing artifact and no flagged kernel difference.
    pub fn equivalent(&self) -> bool {
        self.differing_files == 0
            && self.only_in_a.is_empty()
            && self.only_in_b.is_empty()
            && !self.kernel.as_ref().is_some_and(|k| k.flagged)
    }
}

fn read_manifest(dir: &Path) -> Result<Manifest, CliError> {
    let path = dir.join("manifest.json");
    if !path.exists() {
        return Err(CliError::ConfigInvalid(format!("{} has no manifest.json", dir.display())));
    }
    Ok(read_json(&path)?)
}

/// Compare runs `a` and `b`.
pub fn compare_runs(a: &Path, b: &Path) -> Result<CompareReport, CliError> {
    let ma = read_manifest(a)?;
    let mb = read_manifest(b)?;
    let kernel = match (a.join(KERNEL_FILE).exists(), b.join(KERNEL_FILE).exists()) {
        (true, true) => {
            let (_, pa) = read_tensor(&a.join(KERNEL_FILE))?;
            let (_, pb) = read_tensor(&b.join(KERNEL_FILE))?;
            Some(kernel_diff(&pa, &pb)?)
        }
        _ => None,
    };
    let in_b: BTreeMap<_, _> = mb.artifacts.iter().map(|e| (e.file.as_str(), e)).collect();
    let in_a: BTreeMap<_, _> = ma.artifacts.iter().map(|e| (e.file.as_str(), e)).collect();
    let mut files = Vec::new();
    for entry in &ma.artifacts {
        let Some(other) = in_b.get(entry.file.as_str()) else { continue };
        let identical = entry.sha256 == other.sha256;
        let (max_numeric_diff, note) = if identical {
            (Some(0.0), None)
        } else {
            numeric_diff(&a.join(&entry.file), &b.join(&entry.file))
        };
        files.push(FileDiff { file: entry.file.clone(), identical, max_numeric_diff, note });
    }
    let only_in_a = ma.artifacts.iter().filter(|e| !in_b.contains_key(e.file.as_str())).map(|e| e.file.clone()).collect();
    let only_in_b = mb.artifacts.iter().filter(|e| !in_a.contains_key(e.file.as_str())).map(|e| e.file.clone()).collect();
    let identical_files = files.iter().filter(|f| f.identical).count();
    Ok(CompareReport {
        run_a: a.display().to_string(),
        run_b: b.display().to_string(),
        config_hash_equal: ma.config_hash == mb.config_hash,
        model_hash_equal: ma.model_hash.is_some() && ma.model_hash == mb.model_hash,
        kernel,
        differing_files: files.len() - identical_files,
        identical_files,
        files,
        only_in_a,
        only_in_b,
    })
}

/// Difference of two kernels on a shared torus. Node counts may differ by
/// a power of two; values are compared where both grids have a node and
/// both fields have a column.
pub fn kernel_diff(a: &KernelField, b: &KernelField) -> Result<KernelDiff, CliError> {
    let (ga, gb) = (a.grid(), b.grid());
    if ga.dim() != gb.dim() || (ga.half_width() - gb.half_width()).abs() > 1e-12 * ga.half_width() {
        return Err(CliError::GridMismatch(format!(
            "dimension {} vs {}, half-width {} vs {}",
            ga.dim(),
            gb.dim(),
            ga.half_width(),
            gb.half_width()
        )));
    }
    let (fine, coarse) = if ga.nodes() >= gb.nodes() { (a, b) } else { (b, a) };
    let ratio = fine.grid().nodes() / coarse.grid().nodes();
    if fine.grid().nodes() % coarse.grid().nodes() != 0 || !ratio.is_power_of_two() {
        return Err(CliError::GridMismatch(format!("node counts {} and {} are not related by a power of two", ga.nodes(), gb.nodes())));
    }
    let dim = ga.dim();
    let to_fine = |node: usize| -> usize {
        let idx = coarse.grid().unflatten(node);
        let mut f = [0usize; 2];
        for d in 0..dim {
            f[d] = idx[d] * ratio;
        }
        fine.grid().flatten(f)
    };
    let mut common_times = Vec::new();
    let mut time_pairs = Vec::new();
    for (ci, &t) in coarse.times().iter().enumerate() {
        if let Some(fi) = fine.time_index(t) {
            common_times.push(t);
            time_pairs.push((ci, fi));
        }
    }
    let column_pairs: Vec<(usize, usize)> = coarse
        .columns()
        .iter()
        .enumerate()
        .filter_map(|(cc, &node)| fine.column_of(to_fine(node)).map(|fc| (cc, fc)))
        .collect();
    let x_pairs: Vec<(usize, usize)> = (0..coarse.grid().len()).map(|x| (x, to_fine(x))).collect();
    let (mut sup_diff, mut peak, mut mass_diff, mut compared) = (0.0f64, 0.0f64, 0.0f64, 0usize);
    for &(ct, ft) in &time_pairs {
        for &(cc, fc) in &column_pairs {
            let (col_c, col_f) = (coarse.column(ct, cc), fine.column(ft, fc));
            for &(xc, xf) in &x_pairs {
                sup_diff = sup_diff.max((col_c[xc] - col_f[xf]).abs());
                peak = peak.max(col_c[xc].abs()).max(col_f[xf].abs());
            }
            compared += x_pairs.len();
            let mass_c = coarse.grid().integrate(col_c);
            let mass_f = fine.grid().integrate(col_f);
            mass_diff = mass_diff.max((mass_c - mass_f).abs());
        }
    }
    if compared == 0 {
        return Err(CliError::GridMismatch("the runs share no time, column and node".into()));
    }
    let relative_diff = if peak > 0.0 { sup_diff / peak } else { 0.0 };
    Ok(KernelDiff {
        common_times,
        common_columns: column_pairs.len(),
        compared_values: compared,
        sup_diff,
        relative_diff,
        max_column_mass_diff: mass_diff,
        flagged: relative_diff > KERNEL_RELATIVE_FLAG,
    })
}

/// Largest numeric difference of two JSON or CSV files of the same shape.
fn numeric_diff(a: &Path, b: &Path) -> (Option<f64>, Option<String>) {
    let ext = a.extension().and_then(|e| e.to_str()).unwrap_or_default();
    match ext {
        "json" => match (read_json::<Value>(a), read_json::<Value>(b)) {
            (Ok(va), Ok(vb)) => {
                let (fa, fb) = (flatten_numbers(&va), flatten_numbers(&vb));
                if fa.len() != fb.len() {
                    return (None, Some("different number of numeric fields".into()));
                }
                (Some(max_abs_diff(&fa, &fb)), None)
            }
            _ => (None, Some("unreadable JSON".into())),
        },
        "csv" => match (read_csv(a), read_csv(b)) {
            (Ok((ha, ra)), Ok((hb, rb))) => {
                if ha != hb || ra.len() != rb.len() || ra.iter().zip(&rb).any(|(x, y)| x.len() != y.len()) {
                    return (None, Some("different CSV shape".into()));
                }
                let fa: Vec<f64> = ra.into_iter().flatten().collect();
                let fb: Vec<f64> = rb.into_iter().flatten().collect();
                (Some(max_abs_diff(&fa, &fb)), None)
            }
            _ => (None, Some("unreadable CSV".into())),
        },
        _ => (None, Some("binary content differs".into())),
    }
}

fn flatten_numbers(v: &Value) -> Vec<f64> {
    let mut out = Vec::new();
    fn walk(v: &Value, out: &mut Vec<f64>) {
        match v {
            Value::Number(n) => out.push(n.as_f64().unwrap_or(f64::NAN)),
            Value::Array(items) => items.iter().for_each(|x| walk(x, out)),
            Value::Object(map) => map.values().for_each(|x| walk(x, out)),
            _ => {}
        }
    }
    walk(v, &mut out);
    out
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| if x == y || (x.is_nan() && y.is_nan()) { 0.0 } else { (x - y).abs() })
        .fold(0.0, |m, d| if d.is_nan() { f64::INFINITY } else { m.max(d) })
}
