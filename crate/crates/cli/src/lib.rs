//! Batch driver: runs one configured experiment or the full acceptance
//! suite and records every verdict in a manifest.

// `!(x > 0.0)` guards reject NaN along with the out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod commands;
pub mod config;
pub mod error;
pub mod report;
pub mod suite;

use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

pub use config::{Command, ExperimentConfig};
pub use error::{CliError, Result};
pub use report::{Check, Manifest, Status};

use crate::error::{EXIT_CRITERION, EXIT_PASS};
use crate::report::{Artifacts, Versions, WallClock};
use crate::suite::{CriterionResult, Timings};

/// Environment variable naming the default output directory.
pub const OUT_DIR_ENV: &str = "VOLTERRA_OUT_DIR";

/// `--out`, then the configured directory, then `$VOLTERRA_OUT_DIR`, then
/// `volterra-out`.
pub fn output_dir(cli_out: Option<&Path>, cfg: &ExperimentConfig) -> PathBuf {
    cli_out
        .map(Path::to_path_buf)
        .or_else(|| cfg.output.directory.clone())
        .or_else(|| std::env::var_os(OUT_DIR_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("volterra-out"))
}

#[derive(Debug)]
pub struct RunOutcome {
    pub manifest: Manifest,
    pub exit_code: i32,
}

fn suite_checks(criteria: &[CriterionResult]) -> Vec<Check> {
    criteria
        .iter()
        .flat_map(|c| {
            let prefix = format!("criterion {} ({})", c.id, c.title);
            let mut checks: Vec<Check> = c
                .checks
                .iter()
                .map(|k| Check {
                    name: format!("{prefix}: {}", k.name),
                    ..k.clone()
                })
                .collect();
            if c.error.is_some() {
                checks.push(Check::holds(format!("{prefix}: evaluated without error"), false));
            }
            checks
        })
        .collect()
}

fn full_suite(
    cfg: &ExperimentConfig,
    art: &mut Artifacts,
    progress: &mut dyn FnMut(&CriterionResult, f64),
) -> Result<(Vec<Check>, Timings)> {
    let (report, timings) = suite::full_suite(cfg.mc.seed, &cfg.mutations, progress);
    art.csv(
        "criteria.csv",
        &["criterion", "pass", "checks", "failed_checks"],
        report.criteria.iter().map(|c| {
            vec![
                c.id as f64,
                if c.pass { 1.0 } else { 0.0 },
                c.checks.len() as f64,
                c.checks.iter().filter(|k| !k.pass).count() as f64,
            ]
        }),
    )?;
    art.json("suite.json", &report)?;
    Ok((suite_checks(&report.criteria), timings))
}

/// Validates `cfg`, runs it into `dir` and writes `manifest.json`.
/// Validation and I/O errors return `Err` before any manifest exists; other
/// failures are recorded in the manifest with the artifacts written so far.
pub fn run(cfg: &ExperimentConfig, dir: &Path, progress: &mut dyn FnMut(&CriterionResult, f64)) -> Result<RunOutcome> {
    cfg.validate()?;
    let started = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map_or(0, |d| d.as_millis());
    let clock = Instant::now();
    let mut art = Artifacts::new(dir, &cfg.output.formats)?;
    let outcome = match cfg.command {
        Command::Simulate => commands::simulate(cfg, &mut art).map(|c| (c, Vec::new())),
        Command::Isometry => commands::isometry(cfg, &mut art).map(|c| (c, Vec::new())),
        Command::Chaos => commands::chaos(cfg, &mut art).map(|c| (c, Vec::new())),
        Command::GammaDecay => commands::gamma_decay(cfg, &mut art).map(|c| (c, Vec::new())),
        Command::Solve => commands::solve(cfg, &mut art).map(|c| (c, Vec::new())),
        Command::Factorize => commands::factorize(cfg, &mut art).map(|c| (c, Vec::new())),
        Command::Regularity => commands::regularity(cfg, &mut art).map(|c| (c, Vec::new())),
        Command::FullSuite => full_suite(cfg, &mut art, progress),
    };
    let (verdicts, sections, failure, status, exit_code) = match outcome {
        Ok((verdicts, sections)) => {
            let pass = verdicts.iter().all(|c| c.pass);
            let (status, code) = if pass {
                (Status::Pass, EXIT_PASS)
            } else {
                (Status::CriterionFailure, EXIT_CRITERION)
            };
            (verdicts, sections, None, status, code)
        }
        Err(e @ CliError::Io(_)) => return Err(e),
        Err(e) => {
            let status = if e.kind() == "numeric" {
                Status::NumericFailure
            } else {
                Status::ValidationFailure
            };
            (Vec::new(), Vec::new(), Some(e.to_json()), status, e.exit_code())
        }
    };
    let manifest = Manifest {
        command: cfg.command.name().to_string(),
        config_hash: cfg.hash(),
        seed: cfg.mc.seed,
        versions: Versions::default(),
        config: cfg.clone(),
        status,
        pass: status == Status::Pass,
        verdicts,
        failure,
        artifacts: art.written().to_vec(),
        wall_clock: WallClock {
            started_unix_ms: started,
            elapsed_seconds: clock.elapsed().as_secs_f64(),
            sections,
        },
    };
    manifest.write(dir)?;
    Ok(RunOutcome { manifest, exit_code })
}
