//! Rosenblatt paths from a discretized double Wiener–Itô integral.
//!
//! White noise on `[-M, T]` is replaced by independent cell increments.
//! Cells are uniform on `[0, T]` and grow geometrically into the past, and
//! the kernel `(u - y)_+^{-κ}` is replaced by its cell average, which has a
//! closed form. Then
//!
//! `Z_t = C Σ_{i≠j} Ā_ij(t) ξ_i ξ_j`, `Ā_ij(t) = ∫_0^t F_i(u) F_j(u) du`,
//!
//! is evaluated as `C ∫_0^t (g(u)^2 - Σ_i F_i(u)^2 ξ_i^2) du` with
//! `g = Σ_i F_i ξ_i`, so each replica costs one matrix-vector product.
//!
//! Cell averaging drops the small-scale part of the kernel, a share of the
//! variance that decays only like `cells^{1-2H'}`. By default that share is
//! restored by an independent Gaussian process whose covariance is
//! `R^{H'}` minus the covariance of the discretized chaos, both exact, so
//! second moments are exact at any resolution and the third moment is that
//! of the chaos part.

use ndarray::{s, Array1, Array2, Axis};
use serde::{Deserialize, Serialize};
use statrs::function::beta::ln_beta;

use super::{assemble_blocks, PathEnsemble, ProcessFamily, TimeGrid};
use crate::error::{Error, Result};
use crate::kernels::fbm_covariance_closed_form;
use crate::linalg::Cholesky;
use crate::quadrature::gauss_legendre;
use crate::rng::{normal, stream, substream};

/// Discretization parameters of the Rosenblatt sampler.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RosenblattConfig {
    pub hurst: f64,
    /// Left truncation `M` as a multiple of the horizon.
    pub truncation: f64,
    /// Uniform noise cells on `[0, T]`, merged with the time grid;
    /// `None` uses the time grid alone.
    pub inner: Option<usize>,
    /// Width ratio of consecutive cells on `[-M, 0]`.
    pub growth: f64,
    /// Gauss nodes per sub-interval of the `u`-quadrature.
    pub nodes: usize,
    /// Keep the `i = j` terms. Only meaningful as a deliberately wrong build.
    pub include_diagonal: bool,
    /// Use the exact constant and add an independent Gaussian process
    /// carrying the covariance the discretized chaos misses; otherwise
    /// calibrate the constant on the discrete kernel.
    pub completion: bool,
    /// Reject the scheme when doubling `M` or the resolution moves
    /// `Var Z_T` by more than this fraction.
    pub drift_limit: f64,
}

impl Default for RosenblattConfig {
    fn default() -> Self {
        Self {
            hurst: 0.75,
            truncation: 1e10,
            inner: Some(1024),
            growth: 1.25,
            nodes: 2,
            include_diagonal: false,
            completion: true,
            drift_limit: 0.02,
        }
    }
}

impl RosenblattConfig {
    pub fn with_hurst(hurst: f64) -> Self {
        Self {
            hurst,
            ..Self::default()
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.hurst > 0.5 && self.hurst < 1.0) {
            return Err(Error::ParameterDomain {
                name: "H'",
                value: self.hurst,
                constraint: "1/2 < H' < 1",
            });
        }
        if !(self.truncation > 0.0) {
            return Err(Error::ParameterDomain {
                name: "truncation",
                value: self.truncation,
                constraint: "M > 0",
            });
        }
        if !(self.growth >= 1.0 && self.growth <= 4.0) {
            return Err(Error::ParameterDomain {
                name: "growth",
                value: self.growth,
                constraint: "1 <= growth <= 4",
            });
        }
        if self.nodes == 0 || self.nodes > 16 {
            return Err(Error::ParameterDomain {
                name: "nodes",
                value: self.nodes as f64,
                constraint: "1 <= nodes <= 16",
            });
        }
        if self.inner == Some(0) {
            return Err(Error::Invalid("inner resolution must be positive".into()));
        }
        Ok(())
    }
}

/// Relative drifts of the second-chaos part at `T` (constant held fixed)
/// when the truncation or the resolution is doubled.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceCertificate {
    /// Drift of the chaos-part variance.
    pub truncation_drift: f64,
    pub resolution_drift: f64,
    /// Drift of `E Z_T^3`.
    pub third_moment_truncation_drift: f64,
    pub third_moment_resolution_drift: f64,
    /// Share of `Var Z_T` carried by the chaos part.
    pub chaos_fraction: f64,
    pub limit: f64,
}

impl ConvergenceCertificate {
    pub fn max_drift(&self) -> f64 {
        self.truncation_drift.max(self.resolution_drift)
    }

    pub fn third_moment_drift(&self) -> f64 {
        self.third_moment_truncation_drift
            .max(self.third_moment_resolution_drift)
    }
}

/// Discretized kernel and quadrature; everything except the noise.
#[derive(Debug, Clone)]
struct Discretization {
    /// Cell widths, past cells first.
    widths: Array1<f64>,
    /// `F_i(u)` at the quadrature nodes (nodes x cells).
    kernel: Array2<f64>,
    weights: Vec<f64>,
    /// Grid step containing each node.
    step_of_node: Vec<usize>,
    /// `Σ_{nodes in step} w F_i^2` (steps x cells).
    diagonal: Array2<f64>,
}

fn merged_breakpoints(grid: &[f64], inner: Option<usize>) -> Vec<f64> {
    let horizon = *grid.last().expect("non-empty grid");
    let mut pts: Vec<f64> = grid.to_vec();
    if let Some(n) = inner {
        pts.extend((1..n).map(|i| horizon * i as f64 / n as f64));
        pts.sort_by(|a, b| a.partial_cmp(b).expect("finite grid"));
        let tol = 1e-12 * horizon;
        pts.dedup_by(|a, b| (*a - *b).abs() <= tol);
        // Keep the exact grid values where a merged point coincides.
        for g in grid {
            let i = pts.partition_point(|p| *p < g - tol);
            pts[i] = *g;
        }
    }
    pts
}

impl Discretization {
    fn new(cfg: &RosenblattConfig, grid: &[f64], truncation_factor: f64, inner_factor: usize) -> Self {
        let horizon = *grid.last().expect("non-empty grid");
        let inner = match cfg.inner {
            Some(n) => Some(n * inner_factor),
            None if inner_factor > 1 => Some((grid.len() - 1) * inner_factor),
            None => None,
        };
        let present = merged_breakpoints(grid, inner);
        let smallest = present.windows(2).map(|w| w[1] - w[0]).fold(f64::INFINITY, f64::min);
        let reach = cfg.truncation * truncation_factor * horizon;

        // Past cells, from 0 backwards.
        let mut past = vec![0.0];
        let mut width = smallest;
        while *past.last().expect("seeded") > -reach {
            let next = (past.last().expect("seeded") - width).max(-reach);
            past.push(next);
            width *= cfg.growth;
        }
        past.reverse();
        let mut edges = past;
        edges.extend_from_slice(&present[1..]);
        let cells = edges.len() - 1;
        let widths = Array1::from_iter(edges.windows(2).map(|w| w[1] - w[0]));

        let exponent = cfg.hurst / 2.0;
        let antideriv = |x: f64| if x > 0.0 { x.powf(exponent) / exponent } else { 0.0 };
        let rule = gauss_legendre(cfg.nodes);
        let mut nodes = Vec::new();
        let mut weights = Vec::new();
        let mut step_of_node = Vec::new();
        let mut step = 0;
        for w in present.windows(2) {
            let (lo, hi) = (w[0], w[1]);
            while grid[step + 1] < hi - 1e-12 * horizon {
                step += 1;
            }
            for &(x, wt) in rule {
                nodes.push(0.5 * (lo + hi) + 0.5 * (hi - lo) * x);
                weights.push(0.5 * (hi - lo) * wt);
                step_of_node.push(step);
            }
        }
        let mut kernel = Array2::<f64>::zeros((nodes.len(), cells));
        for (k, &u) in nodes.iter().enumerate() {
            let mut row = kernel.row_mut(k);
            for i in 0..cells {
                let (a, b) = (edges[i], edges[i + 1]);
                if a >= u {
                    break;
                }
                row[i] = (antideriv(u - a) - antideriv(u - b)) / (b - a);
            }
        }
        let steps = grid.len() - 1;
        let mut diagonal = Array2::<f64>::zeros((steps, cells));
        for (k, row) in kernel.rows().into_iter().enumerate() {
            let mut d = diagonal.row_mut(step_of_node[k]);
            d.zip_mut_with(&row, |acc, f| *acc += weights[k] * f * f);
        }
        Self {
            widths,
            kernel,
            weights,
            step_of_node,
            diagonal,
        }
    }

    /// `Ā(t_k) = Σ_{nodes before t_k} w F F^T`, scaled by cell standard
    /// deviations on both sides, with the diagonal removed.
    fn scaled_matrix(&self, upto_step: usize) -> Array2<f64> {
        let rows = self.step_of_node.partition_point(|&s| s < upto_step);
        let sd = self.widths.mapv(f64::sqrt);
        let mut weighted = self.kernel.slice(s![..rows, ..]).to_owned();
        for (k, mut row) in weighted.rows_mut().into_iter().enumerate() {
            let w = self.weights[k].sqrt();
            row.zip_mut_with(&sd, |f, d| *f *= w * d);
        }
        let mut m = weighted.t().dot(&weighted);
        m.diag_mut().fill(0.0);
        m
    }

    /// `Σ_{i≠j} Ā_ij(T)^2 Δ_i Δ_j`, so `Var Z_T = 2 C^2` times this.
    fn off_diagonal_energy(&self) -> f64 {
        let m = self.scaled_matrix(self.diagonal.nrows());
        m.iter().map(|v| v * v).sum()
    }
}

/// A prepared Rosenblatt sampler on a fixed time grid.
#[derive(Debug, Clone)]
pub struct RosenblattScheme {
    config: RosenblattConfig,
    grid: TimeGrid<f64>,
    disc: Discretization,
    constant: f64,
    /// Transposed Cholesky factor of the completion covariance on `t_1..t_N`.
    completion: Option<Array2<f64>>,
    certificate: ConvergenceCertificate,
}

/// `C = sqrt(H'(2H'-1)/2) / B(H'/2, 1-H')`, the constant giving
/// `E Z_1^2 = 1` for the exact kernel.
pub fn analytic_rosenblatt_constant(hurst: f64) -> f64 {
    (hurst * (2.0 * hurst - 1.0) / 2.0).sqrt() / ln_beta(hurst / 2.0, 1.0 - hurst).exp()
}

/// Cumulative second moments `E Y_a Y_b` of the chaos part at grid points
/// `t_1..t_N`, for unit constant.
fn chaos_covariance(disc: &Discretization, steps: usize) -> Array2<f64> {
    let nodes = disc.weights.len();
    let mut scaled = disc.kernel.clone();
    let sd = disc.widths.mapv(f64::sqrt);
    for mut row in scaled.rows_mut() {
        row.zip_mut_with(&sd, |f, d| *f *= d);
    }
    let gram = scaled.dot(&scaled.t());
    let mut per_step = Array2::<f64>::zeros((steps, steps));
    for u in 0..nodes {
        let (su, wu) = (disc.step_of_node[u], disc.weights[u]);
        for v in 0..nodes {
            per_step[[su, disc.step_of_node[v]]] += wu * disc.weights[v] * gram[[u, v]].powi(2);
        }
    }
    let diag = &disc.diagonal * &disc.widths;
    per_step -= &diag.dot(&diag.t());
    per_step *= 2.0;
    // Partial sums over both step indices.
    for a in 0..steps {
        for b in 1..steps {
            per_step[[a, b]] += per_step[[a, b - 1]];
        }
    }
    for a in 1..steps {
        for b in 0..steps {
            per_step[[a, b]] += per_step[[a - 1, b]];
        }
    }
    per_step
}

impl RosenblattScheme {
    /// Builds the scheme and certifies it against doubled truncation and
    /// doubled resolution.
    pub fn new(cfg: &RosenblattConfig, grid: &TimeGrid<f64>) -> Result<Self> {
        let scheme = Self::uncertified(cfg, grid)?;
        let steps = grid.steps();
        let summary = |disc: &Discretization| {
            let b = disc.scaled_matrix(steps) * scheme.constant;
            let var = 2.0 * b.iter().map(|v| v * v).sum::<f64>();
            let third = 8.0 * (&b.dot(&b) * &b).sum();
            (var, third)
        };
        let (base_var, base_third) = summary(&scheme.disc);
        let (long_var, long_third) = summary(&Discretization::new(cfg, grid.points(), 2.0, 1));
        let (fine_var, fine_third) = summary(&Discretization::new(cfg, grid.points(), 1.0, 2));
        let rel = |a: f64, b: f64| (a / b - 1.0).abs();
        let certificate = ConvergenceCertificate {
            truncation_drift: rel(long_var, base_var),
            resolution_drift: rel(fine_var, base_var),
            third_moment_truncation_drift: rel(long_third, base_third),
            third_moment_resolution_drift: rel(fine_third, base_third),
            chaos_fraction: base_var / grid.horizon().powf(2.0 * cfg.hurst),
            limit: cfg.drift_limit,
        };
        let governing = if cfg.completion {
            certificate.third_moment_drift()
        } else {
            certificate.max_drift()
        };
        if governing > cfg.drift_limit {
            return Err(Error::Convergence {
                what: if cfg.completion {
                    "Rosenblatt third moment under doubling of truncation or resolution"
                } else {
                    "Rosenblatt variance under doubling of truncation or resolution"
                },
                drift: governing,
                limit: cfg.drift_limit,
            });
        }
        Ok(Self { certificate, ..scheme })
    }

    /// Same as [`RosenblattScheme::new`] without the doubling check.
    pub fn uncertified(cfg: &RosenblattConfig, grid: &TimeGrid<f64>) -> Result<Self> {
        cfg.validate()?;
        let disc = Discretization::new(cfg, grid.points(), 1.0, 1);
        let energy = disc.off_diagonal_energy();
        if !(energy > 0.0 && energy.is_finite()) {
            return Err(Error::Numeric {
                what: "Rosenblatt calibration",
                achieved: energy,
                target: 1.0,
            });
        }
        let hurst = cfg.hurst;
        let (constant, completion) = if cfg.completion {
            let c = analytic_rosenblatt_constant(hurst);
            let steps = grid.steps();
            let chaos = chaos_covariance(&disc, steps) * (c * c);
            let ts = &grid.points()[1..];
            let mut cov = vec![0.0; steps * steps];
            for a in 0..steps {
                for b in 0..steps {
                    cov[a * steps + b] = fbm_covariance_closed_form(hurst, ts[a], ts[b]) - chaos[[a, b]];
                }
            }
            let chol = Cholesky::factor(&cov, steps)?;
            let lower = Array2::from_shape_vec((steps, steps), chol.lower().to_vec()).expect("square factor");
            (c, Some(lower.reversed_axes().as_standard_layout().to_owned()))
        } else {
            let target = grid.horizon().powf(2.0 * hurst);
            ((target / (2.0 * energy)).sqrt(), None)
        };
        Ok(Self {
            config: cfg.clone(),
            grid: grid.clone(),
            disc,
            constant,
            completion,
            certificate: ConvergenceCertificate {
                truncation_drift: f64::NAN,
                resolution_drift: f64::NAN,
                third_moment_truncation_drift: f64::NAN,
                third_moment_resolution_drift: f64::NAN,
                chaos_fraction: f64::NAN,
                limit: cfg.drift_limit,
            },
        })
    }

    pub fn config(&self) -> &RosenblattConfig {
        &self.config
    }

    pub fn grid(&self) -> &TimeGrid<f64> {
        &self.grid
    }

    pub fn constant(&self) -> f64 {
        self.constant
    }

    pub fn certificate(&self) -> ConvergenceCertificate {
        self.certificate
    }

    /// Number of noise cells.
    pub fn cells(&self) -> usize {
        self.disc.widths.len()
    }

    /// `E Z_{t_k}^3 = 8 tr(B^3)` for the symmetric zero-diagonal form
    /// `Z = η^T B η` in standard normals `η`; the Gaussian completion is
    /// independent and contributes nothing.
    pub fn third_moment(&self, step: usize) -> f64 {
        let b = self.disc.scaled_matrix(step) * self.constant;
        let b2 = b.dot(&b);
        8.0 * (&b2 * &b).sum()
    }

    /// `Var` of the second-chaos part at `t_k`.
    pub fn chaos_variance(&self, step: usize) -> f64 {
        let b = self.disc.scaled_matrix(step) * self.constant;
        2.0 * b.iter().map(|v| v * v).sum::<f64>()
    }

    /// `Var Z_{t_k}` of the sampled process.
    pub fn variance(&self, step: usize) -> f64 {
        let tail = match (&self.completion, step) {
            (_, 0) | (None, _) => 0.0,
            (Some(f), k) => f.column(k - 1).iter().map(|v| v * v).sum(),
        };
        self.chaos_variance(step) + tail
    }

    /// Paths of replicas `first..first + count` of a stream.
    pub fn sample_block(&self, seed: u64, stream_id: u64, first: usize, count: usize) -> Array2<f64> {
        let cells = self.cells();
        let steps = self.grid.steps();
        let sd = self.disc.widths.mapv(f64::sqrt);
        let mut xi = Array2::<f64>::zeros((cells, count));
        let mut eta = Array2::<f64>::zeros((count, steps));
        for r in 0..count {
            let mut rng = substream(seed, stream_id, (first + r) as u64);
            for i in 0..cells {
                xi[[i, r]] = sd[i] * normal::<f64, _>(&mut rng);
            }
            if self.completion.is_some() {
                eta.row_mut(r).iter_mut().for_each(|v| *v = normal(&mut rng));
            }
        }
        let g = self.disc.kernel.dot(&xi);
        let mut incr = Array2::<f64>::zeros((steps, count));
        for (k, row) in g.axis_iter(Axis(0)).enumerate() {
            let w = self.disc.weights[k];
            let mut acc = incr.row_mut(self.disc.step_of_node[k]);
            acc.zip_mut_with(&row, |a, v| *a += w * v * v);
        }
        if !self.config.include_diagonal {
            incr -= &self.disc.diagonal.dot(&xi.mapv(|v| v * v));
        }
        let mut out = Array2::<f64>::zeros((count, steps + 1));
        for r in 0..count {
            let mut z = 0.0;
            for k in 0..steps {
                z += self.constant * incr[[k, r]];
                out[[r, k + 1]] = z;
            }
        }
        if let Some(factor) = &self.completion {
            let mut tail = out.slice_mut(s![.., 1..]);
            tail += &eta.dot(factor);
        }
        out
    }

    pub fn sample(&self, replicas: usize, seed: u64, stream_id: u64) -> Result<PathEnsemble<f64>> {
        if replicas == 0 {
            return Err(Error::Invalid("replicas must be >= 1".into()));
        }
        let values = assemble_blocks(replicas, self.grid.steps() + 1, |first, count| {
            self.sample_block(seed, stream_id, first, count)
        });
        Ok(PathEnsemble {
            grid: self.grid.clone(),
            values,
            family: ProcessFamily::Rosenblatt(self.config.clone()),
            seed,
        })
    }
}

/// Certified Rosenblatt paths normalized to `E Z_T^2 = T^{2H'}`.
pub fn simulate_rosenblatt(
    cfg: &RosenblattConfig,
    grid: &TimeGrid<f64>,
    replicas: usize,
    seed: u64,
) -> Result<PathEnsemble<f64>> {
    RosenblattScheme::new(cfg, grid)?.sample(replicas, seed, stream::ROSENBLATT)
}

/// `E Z_t^3` of the scheme on a uniform grid of `inner` cells over `[0, t]`.
pub fn third_moment_oracle(cfg: &RosenblattConfig, t: f64, inner: usize) -> Result<f64> {
    if t == 0.0 {
        return Ok(0.0);
    }
    let grid = TimeGrid::uniform(t, inner)?;
    let scheme = RosenblattScheme::uncertified(cfg, &grid)?;
    Ok(scheme.third_moment(grid.steps()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_time_is_zero_and_calibration_holds() {
        let grid = TimeGrid::uniform(1.0, 16).unwrap();
        let s = RosenblattScheme::uncertified(&RosenblattConfig::default(), &grid).unwrap();
        assert!((s.variance(16) - 1.0).abs() < 1e-10);
        let plain = RosenblattConfig {
            completion: false,
            ..RosenblattConfig::default()
        };
        let p = RosenblattScheme::uncertified(&plain, &grid).unwrap();
        assert!((p.variance(16) - 1.0).abs() < 1e-12);
        assert_eq!(s.variance(0), 0.0);
        let paths = s.sample(8, 1, 0).unwrap();
        assert!(paths.values.column(0).iter().all(|&v| v == 0.0));
        assert_eq!(third_moment_oracle(&RosenblattConfig::default(), 0.0, 16).unwrap(), 0.0);
    }

    #[test]
    fn rejects_bad_parameters() {
        let grid = TimeGrid::uniform(1.0, 4).unwrap();
        let cfg = RosenblattConfig::with_hurst(0.4);
        assert!(matches!(
            RosenblattScheme::new(&cfg, &grid),
            Err(Error::ParameterDomain { .. })
        ));
    }

    #[test]
    fn kernel_average_is_positive_and_decreasing_in_the_past() {
        let grid = [0.0, 0.5, 1.0];
        let d = Discretization::new(&RosenblattConfig::default(), &grid, 1.0, 1);
        assert!(d.kernel.iter().all(|v| *v >= 0.0));
        assert!(d.widths.iter().all(|w| *w > 0.0));
        let total: f64 = d.widths.sum();
        assert!((total - (1.0 + 1e10)).abs() < 1e-3 * total);
    }
}
