//! Acceptance run over the bundled scenarios: one PASS/FAIL line per
//! criterion, exit status 1 when any criterion fails.

use std::path::{Path, PathBuf};

use levy_parametrix_cli::config::ScenarioConfig;
use levy_parametrix_cli::runner::{list_artifacts, run, Check, RunOutcome};

struct Verdict {
    id: usize,
    title: &'static str,
    pass: bool,
    detail: String,
}

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("levy-acceptance-{}-{name}", std::process::id()));
    let _ = std::fs::remove_dir_all(&dir);
    dir
}

fn run_scenario(name: &str, dir: &Path) -> Result<RunOutcome, String> {
    let config = ScenarioConfig::load(name).map_err(|e| e.to_string())?;
    run(&config, &[], dir).map_err(|e| format!("{name}: {} {e}", e.code()))
}

/// Checks whose id starts with one of `prefixes`; fails when none match.
fn judge(outcome: &RunOutcome, prefixes: &[&str]) -> (bool, Vec<String>) {
    let selected: Vec<&Check> =
        outcome.summary.checks.iter().filter(|c| prefixes.iter().any(|p| c.id.starts_with(p))).collect();
    let notes = selected.iter().map(|c| format!("{}={:.4e}{}", c.id, c.value, if c.pass { "" } else { " (FAIL)" })).collect();
    (!selected.is_empty() && selected.iter().all(|c| c.pass), notes)
}

fn timed(outcome: &RunOutcome, stage: &str, limit: f64) -> (bool, String) {
    let secs = outcome.timings.get(stage).copied().unwrap_or(f64::INFINITY);
    (secs < limit, format!("{stage} {secs:.1}s < {limit}s"))
}

fn criterion(
    id: usize,
    title: &'static str,
    outcome: &Result<RunOutcome, String>,
    prefixes: &[&str],
    timing: Option<(&str, f64)>,
) -> Verdict {
    match outcome {
        Ok(o) => {
            let (mut pass, mut notes) = judge(o, prefixes);
            if let Some((stage, limit)) = timing {
                let (ok, note) = timed(o, stage, limit);
                pass &= ok;
                notes.push(note);
            }
            Verdict { id, title, pass, detail: notes.join(", ") }
        }
        Err(e) => Verdict { id, title, pass: false, detail: e.clone() },
    }
}

fn main() {
    let const_dir = scratch("stable-1d-const");
    let modulated_dir = scratch("modulated-stable-1d");
    let kato_dir = scratch("kato-suite");
    let repeat_dir = scratch("stable-1d-const-repeat");

    let constant = run_scenario("stable-1d-const", &const_dir);
    let modulated = run_scenario("modulated-stable-1d", &modulated_dir);
    let kato = run_scenario("kato-suite", &kato_dir);
    let repeat = run_scenario("stable-1d-const", &repeat_dir);

    let mut verdicts = vec![
        criterion(1, "oracle equivalence", &constant, &["solve.closed_form", "solve.phi_zero"], Some(("solve", 60.0))),
        criterion(2, "scale-function exactness", &constant, &["profile.rho_closed_form", "profile.rho_inverse"], None),
        criterion(3, "series behavior", &modulated, &["solve.series_ratio", "solve.correction_slope"], None),
        {
            let mut a = criterion(
                4,
                "stochastic-kernel properties",
                &modulated,
                &["solve.positivity", "solve.mass", "solve.chapman_kolmogorov", "solve.residual"],
                None,
            );
            let b = criterion(4, "", &constant, &["solve.positivity", "solve.mass", "solve.chapman_kolmogorov", "solve.residual"], None);
            a.pass &= b.pass;
            a.detail = format!("modulated: {}; constant: {}", a.detail, b.detail);
            a
        },
        criterion(5, "two-sided intrinsic bounds", &modulated, &["envelope."], None),
        criterion(6, "measure-hierarchy ledger", &modulated, &["ledger."], None),
        criterion(7, "Kato/Dynkin suite", &kato, &["kato."], None),
        {
            let mut a = criterion(8, "Monte Carlo cross-check", &constant, &["oracle."], Some(("oracle", 180.0)));
            let b = criterion(8, "", &modulated, &["oracle."], Some(("oracle", 180.0)));
            a.pass &= b.pass;
            a.detail = format!("constant: {}; modulated: {}", a.detail, b.detail);
            a
        },
    ];

    let determinism = match (&constant, &repeat) {
        (Ok(a), Ok(b)) => match (list_artifacts(&a.out), list_artifacts(&b.out)) {
            (Ok(x), Ok(y)) => {
                let differing: Vec<_> =
                    x.iter().zip(&y).filter(|(p, q)| p != q).map(|(p, _)| p.file.clone()).collect();
                let pass = x.len() == y.len() && differing.is_empty();
                Verdict {
                    id: 9,
                    title: "determinism",
                    pass,
                    detail: format!("{} artifacts compared, differing: {differing:?}", x.len()),
                }
            }
            (Err(e), _) | (_, Err(e)) => Verdict { id: 9, title: "determinism", pass: false, detail: e.to_string() },
        },
        (Err(e), _) | (_, Err(e)) => Verdict { id: 9, title: "determinism", pass: false, detail: e.clone() },
    };
    verdicts.push(determinism);

    let mut all = true;
    for v in &verdicts {
        all &= v.pass;
        println!("criterion {} {} [{}]: {}", v.id, if v.pass { "PASS" } else { "FAIL" }, v.title, v.detail);
    }
    for dir in [&const_dir, &modulated_dir, &kato_dir, &repeat_dir] {
        let _ = std::fs::remove_dir_all(dir);
    }
    if !all {
        std::process::exit(1);
    }
}
