use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use gevml::config::{parse_config, Config, ConfigInvalid};
use gevml::report::{print_summary, write_outcome, ExperimentOutcome, SCHEMA_VERSION};
use gevml::{experiments, selftest, CliError};
use serde_json::json;

#[derive(Parser)]
#[command(name = "gevml", version, about = "Run Gevrey semiclassical experiments and h-sweeps")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// TOML config; missing sections fall back to built-in defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Directory for JSON reports and CSV sweeps.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Composition remainder slopes.
    Compose,
    /// WKB residual slopes and least-term truncation.
    Wkb,
    /// Conjugation ladder for the transport levels.
    Egorov,
    /// FBI heatmaps, peaks, wavefront region and the FBI conjugation check.
    Fbi,
    /// Fit a decay law to listed residuals.
    Sweep,
    /// Run the closed-form example suite.
    Selftest,
}

fn load(path: Option<&Path>) -> Result<Config, CliError> {
    match path {
        None => Ok(Config::default()),
        Some(p) => {
            let src = std::fs::read_to_string(p)?;
            Ok(parse_config(&src)?)
        }
    }
}

fn init_workers() -> Result<(), CliError> {
    let Ok(v) = std::env::var("GEVML_WORKERS") else {
        return Ok(());
    };
    let n: usize = v.trim().parse().ok().filter(|&n| n > 0).ok_or_else(|| {
        CliError::Config(ConfigInvalid { line: None, field: "GEVML_WORKERS".into(), message: format!("expected a positive integer, got `{v}`") })
    })?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Config(ConfigInvalid { line: None, field: "GEVML_WORKERS".into(), message: e.to_string() }))
}

fn run(cli: &Cli) -> Result<bool, CliError> {
    init_workers()?;
    let cfg = load(cli.config.as_deref())?;
    let outcome: ExperimentOutcome = match cli.command {
        Command::Compose => experiments::run_compose(&cfg.compose.unwrap_or_default())?,
        Command::Wkb => experiments::run_wkb(&cfg.wkb.unwrap_or_default())?,
        Command::Egorov => experiments::run_egorov(&cfg.egorov.unwrap_or_default())?,
        Command::Fbi => experiments::run_fbi(&cfg.fbi.unwrap_or_default(), Some(&cli.out))?,
        Command::Sweep => {
            let s = cfg.sweep.ok_or_else(|| ConfigInvalid { line: None, field: "sweep".into(), message: "the sweep subcommand needs a [sweep] table".into() })?;
            experiments::run_sweep(&s)?
        }
        Command::Selftest => {
            let checks = selftest::run();
            let mut failed = 0;
            for c in &checks {
                println!("[{}] {} ({:.0} ms): {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.runtime_ms, c.detail);
                failed += usize::from(!c.passed);
            }
            println!("{} checks, {failed} failed", checks.len());
            std::fs::create_dir_all(&cli.out)?;
            let report = json!({ "schema_version": SCHEMA_VERSION, "experiment": "selftest", "passed": failed == 0, "checks": checks });
            std::fs::write(cli.out.join("selftest.json"), serde_json::to_string_pretty(&report).map_err(std::io::Error::from)? + "\n")?;
            return Ok(failed == 0);
        }
    };
    print_summary(&outcome);
    for p in write_outcome(&cli.out, &outcome)? {
        println!("wrote {}", p.display());
    }
    Ok(outcome.passed())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
