//! `levy-parametrix`: run scenario stages and compare run directories.
//!
//! Exit status: 0 when every check passes, 1 when a check fails, 2 on an
//! error (the error code is printed on stderr).

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use levy_parametrix::io::write_json;
use levy_parametrix_cli::compare::compare_runs;
use levy_parametrix_cli::config::{bundled_names, ScenarioConfig, Stage};
use levy_parametrix_cli::error::CliError;
use levy_parametrix_cli::runner::{run, RunOutcome};

#[derive(Parser)]
#[command(name = "levy-parametrix", version, about = "Transition kernels of Lévy-type operators by the parametrix method")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check the model assumptions.
    Validate(RunArgs),
    /// Tabulate the scale function ρ_t.
    Profile(RunArgs),
    /// Build the kernel p on the time ladder.
    Solve(RunArgs),
    /// Fit the two-sided envelope and the mass ledger.
    Envelope(RunArgs),
    /// Classify measures in the Kato class.
    Kato(RunArgs),
    /// Compare simulated paths with the kernel.
    Oracle(RunArgs),
    /// Run the configured stages, or those given by --stages.
    Run(RunArgs),
    /// Compare two run directories.
    Compare {
        run_a: PathBuf,
        run_b: PathBuf,
        /// Where to write compare.json (default: the first run directory).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// List the bundled scenarios.
    Scenarios,
}

#[derive(Args)]
struct RunArgs {
    /// Bundled scenario name or path to a JSON configuration.
    #[arg(long)]
    config: String,
    /// Run directory (default: runs/<scenario>).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Replace the configured seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Comma-separated stages added to the command's own stage.
    #[arg(long, value_delimiter = ',')]
    stages: Vec<String>,
    /// Tolerance override `key=value`; repeatable.
    #[arg(long = "tol-override")]
    tol_override: Vec<String>,
}

fn execute(args: RunArgs, stage: Option<Stage>) -> Result<RunOutcome, CliError> {
    let mut config = ScenarioConfig::load(&args.config)?;
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    config.tolerances.apply_overrides(&args.tol_override)?;
    let mut stages = args.stages.iter().map(|s| Stage::parse(s)).collect::<Result<Vec<_>, _>>()?;
    stages.extend(stage);
    let out = args.out.unwrap_or_else(|| PathBuf::from("runs").join(&config.name));
    run(&config, &stages, &out)
}

fn report(outcome: &RunOutcome) -> ExitCode {
    for check in &outcome.summary.checks {
        let bound = match (check.lower, check.upper) {
            (Some(lo), Some(hi)) => format!("in [{lo:.6e}, {hi:.6e}]"),
            (None, Some(hi)) => format!("<= {hi:.6e}"),
            (Some(lo), None) => format!(">= {lo:.6e}"),
            (None, None) => String::new(),
        };
        let verdict = if check.pass { "PASS" } else { "FAIL" };
        println!("{verdict} {} = {:.6e} {bound}", check.id, check.value);
    }
    let stages: Vec<_> = outcome.summary.stages.iter().map(|s| s.name()).collect();
    println!("stages: {}", stages.join(","));
    println!("artifacts: {}", outcome.out.display());
    if outcome.summary.all_pass {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Validate(a) => execute(a, Some(Stage::Validate)).map(|o| report(&o)),
        Command::Profile(a) => execute(a, Some(Stage::Profile)).map(|o| report(&o)),
        Command::Solve(a) => execute(a, Some(Stage::Solve)).map(|o| report(&o)),
        Command::Envelope(a) => execute(a, Some(Stage::Envelope)).map(|o| report(&o)),
        Command::Kato(a) => execute(a, Some(Stage::Kato)).map(|o| report(&o)),
        Command::Oracle(a) => execute(a, Some(Stage::Oracle)).map(|o| report(&o)),
        Command::Run(a) => execute(a, None).map(|o| report(&o)),
        Command::Compare { run_a, run_b, out } => compare_runs(&run_a, &run_b).and_then(|r| {
            let path = out.unwrap_or_else(|| run_a.clone()).join("compare.json");
            write_json(&path, &r)?;
            if let Some(k) = &r.kernel {
                println!("kernel: sup diff {:.6e}, relative {:.6e}, flagged {}", k.sup_diff, k.relative_diff, k.flagged);
            }
            println!(
                "files: {} identical, {} differing, {} only in a, {} only in b",
                r.identical_files,
                r.differing_files,
                r.only_in_a.len(),
                r.only_in_b.len()
            );
            println!("report: {}", path.display());
            Ok(if r.equivalent() { ExitCode::SUCCESS } else { ExitCode::from(1) })
        }),
        Command::Scenarios => {
            for name in bundled_names() {
                println!("{name}");
            }
            Ok(ExitCode::SUCCESS)
        }
    };
    result.unwrap_or_else(|e| {
        eprintln!("error {}: {e}", e.code());
        ExitCode::from(2)
    })
}
