//! Experiment configuration: JSON text, dotted-path overrides and
//! validation of every admissibility condition before a run starts.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use volterra::processes::{DriverSpec, RosenblattConfig, TimeGrid};
use volterra::regularity::{MIN_LAGS, MIN_REPLICAS};
use volterra::spde::{build_model, log_grid, HolderParameters, NoiseOperator, SpectralModel};
use volterra::FbmKernel64;

use crate::error::{CliError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    #[default]
    Simulate,
    Isometry,
    Chaos,
    GammaDecay,
    Solve,
    Factorize,
    Regularity,
    FullSuite,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Simulate => "simulate",
            Command::Isometry => "isometry",
            Command::Chaos => "chaos",
            Command::GammaDecay => "gamma-decay",
            Command::Solve => "solve",
            Command::Factorize => "factorize",
            Command::Regularity => "regularity",
            Command::FullSuite => "full-suite",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DriverFamily {
    #[default]
    Fbm,
    Rosenblatt,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DriverConfig {
    pub family: DriverFamily,
    pub hurst: f64,
    /// Rosenblatt left truncation as a multiple of the horizon.
    pub truncation: f64,
    /// Rosenblatt noise cells on `[0, T]`.
    pub inner: Option<usize>,
}

impl Default for DriverConfig {
    fn default() -> Self {
        let r = RosenblattConfig::default();
        Self {
            family: DriverFamily::Fbm,
            hurst: 0.75,
            truncation: r.truncation,
            inner: r.inner,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub length: f64,
    /// `m` in `A = -(-Δ)^m`.
    pub order: u32,
    pub modes: usize,
    pub nodes: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            length: std::f64::consts::PI,
            order: 1,
            modes: 64,
            nodes: 256,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseConfig {
    pub operator: NoiseOperator,
    /// Lebesgue exponent of the state space.
    pub p: f64,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        Self {
            operator: NoiseOperator::white(),
            p: 2.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct McConfig {
    pub replicas: usize,
    pub seed: u64,
}

impl Default for McConfig {
    fn default() -> Self {
        Self {
            replicas: 1000,
            seed: 7,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DecayGrid {
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
}

impl Default for DecayGrid {
    fn default() -> Self {
        Self {
            lo: 1e-4,
            hi: 1e-2,
            count: 9,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridConfig {
    pub horizon: f64,
    pub steps: usize,
    /// Recorded times of `solve` and covariance points of `simulate`.
    pub points: Vec<f64>,
    /// Sub-steps per driver step in the pathwise convolutions.
    pub refinement: usize,
    /// Base time of the variogram.
    pub start: f64,
    /// Variogram lags; `start + lag` must be grid points.
    pub lags: Vec<f64>,
    /// Semigroup times of the decay fit.
    pub decay: DecayGrid,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self {
            horizon: 1.0,
            steps: 512,
            points: vec![0.25, 0.5, 0.75, 1.0],
            refinement: volterra::spde::DEFAULT_REFINEMENT,
            start: 0.5,
            lags: [4.0, 8.0, 16.0, 32.0, 64.0].iter().map(|k| k / 512.0).collect(),
            decay: DecayGrid::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChaosConfig {
    pub order: usize,
    pub p: f64,
    pub q: f64,
    pub dims: Vec<usize>,
    pub trials: usize,
    /// Replicas per trial.
    pub replicas: usize,
    pub terms: Option<usize>,
    pub space_exponent: f64,
}

impl Default for ChaosConfig {
    fn default() -> Self {
        Self {
            order: 2,
            p: 2.0,
            q: 4.0,
            dims: vec![2, 8, 64],
            trials: 30,
            replicas: 4000,
            terms: Some(8),
            space_exponent: 2.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Integrand {
    #[default]
    Random,
    /// `φ ≡ 0`.
    Zero,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IsometryConfig {
    pub integrand: Integrand,
    pub functions: usize,
    /// Pieces of each random step function.
    pub pieces: usize,
}

impl Default for IsometryConfig {
    fn default() -> Self {
        Self {
            integrand: Integrand::Random,
            functions: 20,
            pieces: 8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChecksConfig {
    /// 1-based modes whose variances `solve` checks.
    pub modes: Vec<usize>,
}

impl Default for ChecksConfig {
    fn default() -> Self {
        Self { modes: vec![1, 4, 16] }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Format {
    Csv,
    Json,
    Binary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    /// Used when neither `--out` nor `VOLTERRA_OUT_DIR` is given.
    pub directory: Option<PathBuf>,
    pub formats: Vec<Format>,
    /// Replicas written to CSV; binary files hold all of them.
    pub csv_replicas: usize,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            directory: None,
            formats: vec![Format::Csv, Format::Json],
            csv_replicas: 16,
        }
    }
}

impl OutputConfig {
    pub fn wants(&self, format: Format) -> bool {
        self.formats.contains(&format)
    }
}

/// Deliberately wrong builds for the mutation checks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Mutations {
    /// Factor applied to the calibrated `C_H`.
    pub c_h_factor: f64,
    /// Keep the `i = j` terms of the Rosenblatt double sum.
    pub rosenblatt_diagonal: bool,
}

impl Default for Mutations {
    fn default() -> Self {
        Self {
            c_h_factor: 1.0,
            rosenblatt_diagonal: false,
        }
    }
}

impl Mutations {
    pub fn is_none(&self) -> bool {
        *self == Self::default()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub command: Command,
    pub driver: DriverConfig,
    pub model: ModelConfig,
    pub noise: NoiseConfig,
    pub mc: McConfig,
    pub grids: GridConfig,
    pub params: HolderParameters,
    pub chaos: ChaosConfig,
    pub isometry: IsometryConfig,
    pub checks: ChecksConfig,
    pub output: OutputConfig,
    pub mutations: Mutations,
}

/// Sets the leaf at a dotted path, creating missing objects. The value is
/// read as JSON and falls back to a plain string.
pub fn apply_override(root: &mut Value, assignment: &str) -> Result<()> {
    let (path, raw) = assignment
        .split_once('=')
        .ok_or_else(|| CliError::Config(format!("override `{assignment}` is not of the form path=value")))?;
    let keys: Vec<&str> = path.trim().split('.').collect();
    if keys.iter().any(|k| k.is_empty()) {
        return Err(CliError::Config(format!("empty key in override path `{path}`")));
    }
    let value = serde_json::from_str(raw.trim()).unwrap_or_else(|_| Value::String(raw.trim().to_string()));
    let mut node = root;
    for key in &keys[..keys.len() - 1] {
        let map = node
            .as_object_mut()
            .ok_or_else(|| CliError::Config(format!("`{path}` descends into a non-object at `{key}`")))?;
        node = map
            .entry(key.to_string())
            .or_insert_with(|| Value::Object(Default::default()));
    }
    let map = node
        .as_object_mut()
        .ok_or_else(|| CliError::Config(format!("`{path}` descends into a non-object")))?;
    map.insert(keys[keys.len() - 1].to_string(), value);
    Ok(())
}

impl ExperimentConfig {
    pub fn from_value(value: Value) -> Result<Self> {
        serde_json::from_value(value).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn parse(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("configuration serializes")
    }

    /// File (or defaults), then `command` when given, then each override in
    /// order.
    pub fn load(file: Option<&Path>, command: Option<Command>, overrides: &[String]) -> Result<Self> {
        let mut value = match file {
            Some(path) => {
                let text = std::fs::read_to_string(path)?;
                serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?
            }
            None => Value::Object(Default::default()),
        };
        if !value.is_object() {
            return Err(CliError::Config("configuration must be a JSON object".into()));
        }
        if let Some(c) = command {
            apply_override(&mut value, &format!("command=\"{}\"", c.name()))?;
        }
        for o in overrides {
            apply_override(&mut value, o)?;
        }
        Self::from_value(value)
    }

    /// SHA-256 of the compact serialization.
    pub fn hash(&self) -> String {
        use sha2::{Digest, Sha256};
        let bytes = serde_json::to_vec(self).expect("configuration serializes");
        hex::encode(Sha256::digest(&bytes))
    }

    pub fn time_grid(&self) -> Result<TimeGrid<f64>> {
        Ok(TimeGrid::uniform(self.grids.horizon, self.grids.steps)?)
    }

    pub fn driver_spec(&self) -> DriverSpec {
        match self.driver.family {
            DriverFamily::Fbm => DriverSpec::Fbm {
                hurst: self.driver.hurst,
            },
            DriverFamily::Rosenblatt => DriverSpec::Rosenblatt(RosenblattConfig {
                hurst: self.driver.hurst,
                truncation: self.driver.truncation,
                inner: self.driver.inner,
                include_diagonal: self.mutations.rosenblatt_diagonal,
                ..RosenblattConfig::default()
            }),
        }
    }

    /// The fBm kernel with any `C_H` mutation applied.
    pub fn kernel(&self) -> Result<FbmKernel64> {
        Ok(FbmKernel64::new(self.driver.hurst, None)?.rescaled(self.mutations.c_h_factor))
    }

    pub fn spectral_model(&self) -> Result<SpectralModel> {
        let m = &self.model;
        Ok(build_model(m.length, m.order, m.modes, m.nodes)?)
    }

    pub fn decay_times(&self) -> Vec<f64> {
        let d = &self.grids.decay;
        log_grid(d.lo, d.hi, d.count)
    }

    /// Grid index of `t`, or a validation error naming `what`.
    pub fn grid_index(&self, grid: &TimeGrid<f64>, t: f64, what: &str) -> Result<usize> {
        let h = self.grids.horizon / self.grids.steps as f64;
        let j = (t / h).round();
        if !(t >= 0.0 && t <= self.grids.horizon * (1.0 + 1e-12)) || (j * h - t).abs() > 1e-9 * h.max(t) {
            return Err(CliError::validation(
                format!("{what} is a grid point in [0, T]"),
                format!("{what} = {t}, step {h}, T = {}", self.grids.horizon),
            ));
        }
        let j = j as usize;
        debug_assert!(j < grid.points().len());
        Ok(j)
    }

    /// Grid indices of the variogram base and lag times.
    pub fn variogram_record(&self, grid: &TimeGrid<f64>) -> Result<Vec<usize>> {
        let g = &self.grids;
        let mut record = vec![self.grid_index(grid, g.start, "start")?];
        for &lag in &g.lags {
            record.push(self.grid_index(grid, g.start + lag, "start + lag")?);
        }
        Ok(record)
    }

    pub fn points_record(&self, grid: &TimeGrid<f64>) -> Result<Vec<usize>> {
        self.grids
            .points
            .iter()
            .map(|&t| self.grid_index(grid, t, "time point"))
            .collect()
    }

    /// Checks every condition the configured command relies on.
    pub fn validate(&self) -> Result<()> {
        let fail = |inequality: &str, detail: String| Err(CliError::validation(inequality, detail));
        let d = &self.driver;
        if !(d.hurst > 0.5 && d.hurst < 1.0) {
            return fail("1/2 < H < 1", format!("H = {}", d.hurst));
        }
        if (self.params.alpha - (d.hurst - 0.5)).abs() > 1e-12 {
            return fail(
                "α = H - 1/2",
                format!("params.alpha = {}, driver.hurst = {}", self.params.alpha, d.hurst),
            );
        }
        if d.family == DriverFamily::Rosenblatt {
            if !(d.truncation > 0.0) {
                return fail("truncation > 0", format!("truncation = {}", d.truncation));
            }
            if d.inner == Some(0) {
                return fail("inner >= 1", "inner = 0".into());
            }
        }
        let m = &self.mutations;
        if !(m.c_h_factor > 0.0 && m.c_h_factor.is_finite()) {
            return fail("c_h_factor > 0", format!("c_h_factor = {}", m.c_h_factor));
        }
        let mc = &self.mc;
        if mc.replicas < 2 {
            return fail("replicas >= 2", format!("replicas = {}", mc.replicas));
        }
        let g = &self.grids;
        if !(g.horizon > 0.0 && g.horizon.is_finite()) {
            return fail("T > 0", format!("T = {}", g.horizon));
        }
        if g.steps == 0 {
            return fail("steps >= 1", "steps = 0".into());
        }
        if g.refinement == 0 {
            return fail("refinement >= 1", "refinement = 0".into());
        }
        if !(self.noise.p >= 1.0) {
            return fail("p >= 1", format!("p = {}", self.noise.p));
        }
        let grid = self.time_grid()?;
        match self.command {
            Command::Simulate => {
                self.points_record(&grid)?;
            }
            Command::Isometry => {
                let iso = &self.isometry;
                if iso.functions == 0 || iso.pieces == 0 {
                    return fail(
                        "functions >= 1 and pieces >= 1",
                        format!("functions = {}, pieces = {}", iso.functions, iso.pieces),
                    );
                }
                if iso.pieces > g.steps {
                    return fail(
                        "pieces <= steps",
                        format!("pieces = {}, steps = {}", iso.pieces, g.steps),
                    );
                }
            }
            Command::Chaos => {
                let c = &self.chaos;
                if !(c.p > 0.0 && c.q > c.p) {
                    return fail("0 < p < q", format!("p = {}, q = {}", c.p, c.q));
                }
                if c.dims.is_empty() || c.dims.contains(&0) {
                    return fail("dims non-empty and >= 1", format!("dims = {:?}", c.dims));
                }
                if c.trials < 30 {
                    return fail("trials >= 30", format!("trials = {}", c.trials));
                }
                if c.replicas < 2 || !(c.space_exponent >= 1.0) || c.terms == Some(0) {
                    return fail(
                        "replicas >= 2, space exponent >= 1, terms >= 1",
                        format!(
                            "replicas = {}, space exponent = {}, terms = {:?}",
                            c.replicas, c.space_exponent, c.terms
                        ),
                    );
                }
            }
            Command::GammaDecay => {
                let model = self.spectral_model()?;
                self.noise.operator.validate(&model)?;
                self.check_decay_grid()?;
            }
            Command::Solve | Command::Factorize | Command::Regularity => {
                let model = self.spectral_model()?;
                self.noise.operator.validate(&model)?;
                if self.command == Command::Solve {
                    self.points_record(&grid)?;
                    if let Some(k) = self.checks.modes.iter().find(|&&k| k == 0 || k > model.modes()) {
                        return fail(
                            "1 <= check mode <= modes",
                            format!("mode {k}, modes = {}", model.modes()),
                        );
                    }
                }
                if self.command == Command::Factorize {
                    self.points_record(&grid)?;
                    self.params.check_factorization()?;
                }
                if self.command == Command::Regularity {
                    if mc.replicas < MIN_REPLICAS {
                        return fail(
                            "replicas >= 1000",
                            format!("replicas = {} < {MIN_REPLICAS}", mc.replicas),
                        );
                    }
                    if g.lags.len() < MIN_LAGS {
                        return fail("at least 4 lags", format!("{} lags", g.lags.len()));
                    }
                    if g.lags.windows(2).any(|w| !(w[1] > w[0])) || g.lags.first().is_some_and(|l| !(*l > 0.0)) {
                        return fail("0 < lag_1 < lag_2 < ...", format!("lags = {:?}", g.lags));
                    }
                    self.variogram_record(&grid)?;
                    if !(self.params.delta >= 0.0) {
                        return fail("δ >= 0", format!("δ = {}", self.params.delta));
                    }
                    if matches!(self.noise.operator, NoiseOperator::Pointwise { .. }) {
                        self.check_decay_grid()?;
                    }
                }
            }
            Command::FullSuite => {}
        }
        Ok(())
    }

    fn check_decay_grid(&self) -> Result<()> {
        let d = &self.grids.decay;
        if !(d.lo > 0.0 && d.hi >= 100.0 * d.lo && d.count >= 3) {
            return Err(CliError::validation(
                "0 < lo, hi >= 100 lo, count >= 3",
                format!("lo = {}, hi = {}, count = {}", d.lo, d.hi, d.count),
            ));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn overrides_reach_nested_leaves() {
        let mut v = serde_json::to_value(ExperimentConfig::default()).unwrap();
        apply_override(&mut v, "driver.hurst=0.6").unwrap();
        apply_override(&mut v, "params.alpha=0.1").unwrap();
        apply_override(&mut v, "noise.operator={\"kind\":\"pointwise\",\"location\":1.5}").unwrap();
        apply_override(&mut v, "driver.family=rosenblatt").unwrap();
        let cfg = ExperimentConfig::from_value(v).unwrap();
        assert_eq!(cfg.driver.hurst, 0.6);
        assert_eq!(cfg.driver.family, DriverFamily::Rosenblatt);
        assert_eq!(cfg.noise.operator, NoiseOperator::Pointwise { location: 1.5 });
        assert!(cfg.validate().is_ok());
    }

    #[test]
    fn unknown_leaves_are_rejected() {
        let err = ExperimentConfig::load(None, None, &["driver.hurts=0.6".into()]).unwrap_err();
        assert_eq!(err.kind(), "validation");
        assert!(apply_override(&mut Value::Null, "a=1").is_err());
        assert!(apply_override(&mut Value::Object(Default::default()), "a..b=1").is_err());
        assert!(apply_override(&mut Value::Object(Default::default()), "novalue").is_err());
    }

    #[test]
    fn validation_names_the_inequality() {
        let cfg = ExperimentConfig::load(None, None, &["driver.hurst=0.4".into()]).unwrap();
        match cfg.validate().unwrap_err() {
            CliError::Validation { inequality, .. } => assert_eq!(inequality, "1/2 < H < 1"),
            e => panic!("{e:?}"),
        }
        let cfg = ExperimentConfig::load(None, Some(Command::Factorize), &["params.beta=0.8".into()]).unwrap();
        let err = cfg.validate().unwrap_err();
        assert!(err.to_string().contains("β + δ < α + 1/2"), "{err}");
        let cfg = ExperimentConfig::load(None, Some(Command::Solve), &["grids.points=[0.3333]".into()]).unwrap();
        assert_eq!(cfg.validate().unwrap_err().exit_code(), crate::error::EXIT_VALIDATION);
    }
}
