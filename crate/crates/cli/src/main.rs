use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use volterra_cli::suite::{budget, CriterionResult};
use volterra_cli::{output_dir, run, CliError, Command, ExperimentConfig};

/// Simulates Volterra-driven processes and stochastic convolutions and
/// checks them against independent oracles.
///
/// Exit status: 0 all verdicts pass, 2 validation error, 3 numeric
/// failure, 4 criterion failure, 1 I/O error.
#[derive(Debug, Parser)]
#[command(name = "volterra", version)]
struct Cli {
    /// Experiment to run; defaults to the configuration's `command`.
    #[arg(value_enum)]
    command: Option<Command>,
    /// JSON configuration; omitted fields take their defaults.
    #[arg(long, short)]
    config: Option<PathBuf>,
    /// Override one leaf by dotted path, e.g. `--set driver.hurst=0.6`.
    #[arg(long = "set", value_name = "PATH=VALUE")]
    overrides: Vec<String>,
    /// Output directory; falls back to the configured one, then
    /// `$VOLTERRA_OUT_DIR`, then `volterra-out`.
    #[arg(long, short)]
    out: Option<PathBuf>,
    /// Print the resolved configuration and exit.
    #[arg(long)]
    print_config: bool,
}

fn report_error(e: &CliError, dir: Option<&std::path::Path>) -> ExitCode {
    let body = e.to_json();
    eprintln!("{body}");
    if let Some(dir) = dir {
        if std::fs::create_dir_all(dir).is_ok() {
            let _ = std::fs::write(dir.join("error.json"), format!("{body:#}\n"));
        }
    }
    ExitCode::from(e.exit_code() as u8)
}

fn progress(r: &CriterionResult, seconds: f64) {
    let within = budget(r.id).is_none_or(|b| seconds <= b);
    eprintln!(
        "criterion {:>2} {:<40} {} ({seconds:.1} s{})",
        r.id,
        r.title,
        if r.pass { "PASS" } else { "FAIL" },
        if within { "" } else { ", over budget" }
    );
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let cfg = match ExperimentConfig::load(cli.config.as_deref(), cli.command, &cli.overrides) {
        Ok(cfg) => cfg,
        Err(e) => return report_error(&e, cli.out.as_deref()),
    };
    if cli.print_config {
        println!("{}", cfg.to_json());
        return ExitCode::SUCCESS;
    }
    let dir = output_dir(cli.out.as_deref(), &cfg);
    match run(&cfg, &dir, &mut progress) {
        Ok(outcome) => {
            let m = &outcome.manifest;
            let failed = m.verdicts.iter().filter(|c| !c.pass).count();
            println!(
                "{}: {:?}, {} of {} verdicts pass, manifest {}",
                m.command,
                m.status,
                m.verdicts.len() - failed,
                m.verdicts.len(),
                dir.join(volterra_cli::report::MANIFEST).display()
            );
            for c in m.verdicts.iter().filter(|c| !c.pass) {
                println!(
                    "  FAIL {}: measured {}, target {}, tolerance {}",
                    c.name, c.measured, c.target, c.tolerance
                );
            }
            if let Some(f) = &m.failure {
                eprintln!("{f}");
            }
            ExitCode::from(outcome.exit_code as u8)
        }
        Err(e) => report_error(&e, Some(&dir)),
    }
}
