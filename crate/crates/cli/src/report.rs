//! Verdicts, artifact files and the run manifest.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use volterra::stats::McEstimate;

use crate::config::{ExperimentConfig, Format};
use crate::error::Result;

/// One pass/fail comparison of a measured value against its target.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub measured: f64,
    pub target: f64,
    /// Allowed distance, or the bound for one-sided checks.
    pub tolerance: f64,
    pub pass: bool,
}

impl Check {
    /// `|est - target| <= max(k SE, rel |target|)`.
    pub fn estimate(name: impl Into<String>, est: McEstimate, target: f64, k: f64, rel: f64) -> Self {
        let tolerance = (k * est.se).max(rel * target.abs());
        Self {
            name: name.into(),
            measured: est.value,
            target,
            tolerance,
            pass: (est.value - target).abs() <= tolerance,
        }
    }

    /// `|measured - target| <= tolerance`.
    pub fn close(name: impl Into<String>, measured: f64, target: f64, tolerance: f64) -> Self {
        Self {
            name: name.into(),
            measured,
            target,
            tolerance,
            pass: (measured - target).abs() <= tolerance,
        }
    }

    /// `|measured / target - 1| <= rel`, or exact agreement when `target = 0`.
    pub fn relative(name: impl Into<String>, measured: f64, target: f64, rel: f64) -> Self {
        let tolerance = rel * target.abs();
        Self {
            name: name.into(),
            measured,
            target,
            tolerance,
            pass: (measured - target).abs() <= tolerance,
        }
    }

    /// `measured <= limit`.
    pub fn at_most(name: impl Into<String>, measured: f64, limit: f64) -> Self {
        Self {
            name: name.into(),
            measured,
            target: limit,
            tolerance: 0.0,
            pass: measured <= limit,
        }
    }

    /// `measured >= limit`.
    pub fn at_least(name: impl Into<String>, measured: f64, limit: f64) -> Self {
        Self {
            name: name.into(),
            measured,
            target: limit,
            tolerance: 0.0,
            pass: measured >= limit,
        }
    }

    /// A boolean outcome recorded as 1 or 0 against target 1.
    pub fn holds(name: impl Into<String>, pass: bool) -> Self {
        Self {
            name: name.into(),
            measured: if pass { 1.0 } else { 0.0 },
            target: 1.0,
            tolerance: 0.0,
            pass,
        }
    }
}

/// 17 significant digits.
pub fn num(x: f64) -> String {
    format!("{x:.16e}")
}

/// Writes the files of one run and remembers their names.
#[derive(Debug)]
pub struct Artifacts {
    dir: PathBuf,
    formats: Vec<Format>,
    written: Vec<String>,
}

impl Artifacts {
    pub fn new(dir: &Path, formats: &[Format]) -> Result<Self> {
        std::fs::create_dir_all(dir)?;
        Ok(Self {
            dir: dir.to_path_buf(),
            formats: formats.to_vec(),
            written: Vec::new(),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn written(&self) -> &[String] {
        &self.written
    }

    pub fn wants(&self, f: Format) -> bool {
        self.formats.contains(&f)
    }

    fn create(&mut self, name: &str) -> Result<BufWriter<File>> {
        self.written.push(name.to_string());
        Ok(BufWriter::new(File::create(self.dir.join(name))?))
    }

    pub fn json<T: Serialize + ?Sized>(&mut self, name: &str, value: &T) -> Result<()> {
        if self.wants(Format::Json) {
            let mut w = self.create(name)?;
            serde_json::to_writer_pretty(&mut w, value).map_err(std::io::Error::from)?;
            writeln!(w)?;
            w.flush()?;
        }
        Ok(())
    }

    /// Rows of numbers under `header`, 17 significant digits each.
    pub fn csv(&mut self, name: &str, header: &[&str], rows: impl IntoIterator<Item = Vec<f64>>) -> Result<()> {
        if self.wants(Format::Csv) {
            let mut w = self.create(name)?;
            writeln!(w, "{}", header.join(","))?;
            for row in rows {
                let cells: Vec<String> = row.into_iter().map(num).collect();
                writeln!(w, "{}", cells.join(","))?;
            }
            w.flush()?;
        }
        Ok(())
    }

    /// Hands a writer to `f` when `format` is enabled.
    pub fn with_writer(
        &mut self,
        format: Format,
        name: &str,
        f: impl FnOnce(&mut BufWriter<File>) -> volterra::Result<()>,
    ) -> Result<()> {
        if self.wants(format) {
            let mut w = self.create(name)?;
            f(&mut w)?;
            w.flush()?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Status {
    Pass,
    CriterionFailure,
    NumericFailure,
    /// An input rejected after the run started, such as a grid the
    /// estimator cannot use.
    ValidationFailure,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Versions {
    pub cli: String,
    pub core: String,
}

impl Default for Versions {
    fn default() -> Self {
        Self {
            cli: env!("CARGO_PKG_VERSION").to_string(),
            core: volterra::VERSION.to_string(),
        }
    }
}

/// Everything that varies between identical runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct WallClock {
    pub started_unix_ms: u128,
    pub elapsed_seconds: f64,
    /// Named sections and their durations in seconds.
    pub sections: Vec<(String, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub command: String,
    pub config_hash: String,
    pub seed: u64,
    pub versions: Versions,
    pub config: ExperimentConfig,
    pub status: Status,
    pub pass: bool,
    pub verdicts: Vec<Check>,
    /// Error JSON of a numeric failure; artifacts written before it are kept.
    pub failure: Option<serde_json::Value>,
    pub artifacts: Vec<String>,
    pub wall_clock: WallClock,
}

pub const MANIFEST: &str = "manifest.json";

impl Manifest {
    pub fn write(&self, dir: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(dir.join(MANIFEST))?);
        serde_json::to_writer_pretty(&mut w, self).map_err(std::io::Error::from)?;
        writeln!(w)?;
        w.flush()?;
        Ok(())
    }

    /// Serialization without the wall-clock section, for comparing runs.
    pub fn deterministic_bytes(&self) -> Vec<u8> {
        let mut v = serde_json::to_value(self).expect("manifest serializes");
        if let Some(map) = v.as_object_mut() {
            map.remove("wall_clock");
        }
        serde_json::to_vec_pretty(&v).expect("manifest serializes")
    }
}
