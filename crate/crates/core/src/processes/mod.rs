//! Sample paths of scalar Volterra processes on a time grid and their
//! assembly into cylindrical processes with independent coordinates.

mod io;
mod rosenblatt;

use ndarray::{s, Array2, ArrayView1};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::fbm_covariance_closed_form;
use crate::linalg::Cholesky;
use crate::rng::{normal, stream, substream};
use crate::scalar::Real;

pub use io::{read_binary, BinaryHeader};
pub use rosenblatt::{
    analytic_rosenblatt_constant, simulate_rosenblatt, third_moment_oracle, ConvergenceCertificate, RosenblattConfig,
    RosenblattScheme,
};

/// Replicas per dense block; fixed so results do not depend on scheduling.
pub(crate) const BLOCK: usize = 256;

/// Strictly increasing times `0 = t_0 < ... < t_N = T`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid<T> {
    points: Vec<T>,
    uniform: bool,
}

impl<T: Real> TimeGrid<T> {
    pub fn uniform(horizon: T, steps: usize) -> Result<Self> {
        if steps == 0 || !(horizon > T::zero()) {
            return Err(Error::Invalid("uniform grid needs T > 0 and at least one step".into()));
        }
        let n = T::from_count(steps);
        let points = (0..=steps).map(|i| horizon * T::from_count(i) / n).collect();
        Ok(Self { points, uniform: true })
    }

    pub fn from_points(points: Vec<T>) -> Result<Self> {
        if points.len() < 2 || points[0] != T::zero() {
            return Err(Error::Invalid(
                "grid must start at 0 and have at least two points".into(),
            ));
        }
        if points.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Invalid("grid points must be strictly increasing".into()));
        }
        Ok(Self { points, uniform: false })
    }

    pub fn horizon(&self) -> T {
        *self.points.last().expect("non-empty grid")
    }

    pub fn points(&self) -> &[T] {
        &self.points
    }

    /// Number of intervals `N`.
    pub fn steps(&self) -> usize {
        self.points.len() - 1
    }

    pub fn is_uniform(&self) -> bool {
        self.uniform
    }

    /// Index of the grid point equal to `t` up to `1e-9 T`.
    pub fn index_of(&self, t: T) -> Option<usize> {
        let tol = T::lit(1e-9) * self.horizon();
        let i = self.points.partition_point(|&p| p < t - tol);
        (i < self.points.len() && (self.points[i] - t).abs() <= tol).then_some(i)
    }

    pub fn to_f64(&self) -> TimeGrid<f64> {
        TimeGrid {
            points: self.points.iter().map(|p| p.as_f64()).collect(),
            uniform: self.uniform,
        }
    }
}

/// Process family and parameters recorded with an ensemble.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case")]
pub enum ProcessFamily {
    Fbm { hurst: f64 },
    Rosenblatt(RosenblattConfig),
    Custom { label: String },
}

impl ProcessFamily {
    pub fn hurst(&self) -> Option<f64> {
        match self {
            ProcessFamily::Fbm { hurst } => Some(*hurst),
            ProcessFamily::Rosenblatt(c) => Some(c.hurst),
            ProcessFamily::Custom { .. } => None,
        }
    }
}

/// Replicated paths; `values[[i, j]]` is replica `i` at time `t_j`.
#[derive(Debug, Clone, PartialEq)]
pub struct PathEnsemble<T> {
    pub grid: TimeGrid<T>,
    pub values: Array2<T>,
    pub family: ProcessFamily,
    pub seed: u64,
}

impl<T: Real> PathEnsemble<T> {
    pub fn replicas(&self) -> usize {
        self.values.nrows()
    }

    pub fn path(&self, replica: usize) -> ArrayView1<'_, T> {
        self.values.row(replica)
    }

    /// All replicas at grid index `j`, as `f64`.
    pub fn at(&self, j: usize) -> Vec<f64> {
        self.values.column(j).iter().map(|v| v.as_f64()).collect()
    }
}

/// Exact Gaussian sampler: a Cholesky factor of `[R^H(t_i, t_j)]`, `i, j >= 1`.
#[derive(Debug, Clone)]
pub struct FbmSampler<T> {
    hurst: T,
    grid: TimeGrid<T>,
    /// Transposed lower factor, so a block of normals times it gives paths.
    factor_t: Array2<T>,
    pub jitter: T,
}

impl<T: Real> FbmSampler<T> {
    pub fn new(hurst: T, grid: &TimeGrid<T>) -> Result<Self> {
        if !(hurst > T::half() && hurst < T::one()) {
            return Err(Error::ParameterDomain {
                name: "H",
                value: hurst.as_f64(),
                constraint: "1/2 < H < 1",
            });
        }
        let ts = &grid.points()[1..];
        let n = ts.len();
        let mut cov = vec![T::zero(); n * n];
        for i in 0..n {
            for j in 0..=i {
                let c = fbm_covariance_closed_form(hurst, ts[i], ts[j]);
                cov[i * n + j] = c;
                cov[j * n + i] = c;
            }
        }
        let chol = Cholesky::factor(&cov, n)?;
        let lower = Array2::from_shape_vec((n, n), chol.lower().to_vec()).expect("square factor");
        Ok(Self {
            hurst,
            grid: grid.clone(),
            factor_t: lower.reversed_axes().as_standard_layout().to_owned(),
            jitter: chol.jitter,
        })
    }

    pub fn hurst(&self) -> T {
        self.hurst
    }

    pub fn grid(&self) -> &TimeGrid<T> {
        &self.grid
    }

    /// Paths of replicas `first..first + count` of the given stream.
    pub fn sample_block(&self, seed: u64, stream_id: u64, first: usize, count: usize) -> Array2<T> {
        let n = self.grid.steps();
        let mut z = Array2::<T>::zeros((count, n));
        for (r, mut row) in z.rows_mut().into_iter().enumerate() {
            let mut rng = substream(seed, stream_id, (first + r) as u64);
            row.iter_mut().for_each(|v| *v = normal(&mut rng));
        }
        let mut out = Array2::<T>::zeros((count, n + 1));
        out.slice_mut(s![.., 1..]).assign(&z.dot(&self.factor_t));
        out
    }

    pub fn sample(&self, replicas: usize, seed: u64, stream_id: u64) -> Result<PathEnsemble<T>> {
        if replicas == 0 {
            return Err(Error::Invalid("replicas must be >= 1".into()));
        }
        let values = assemble_blocks(replicas, self.grid.steps() + 1, |first, count| {
            self.sample_block(seed, stream_id, first, count)
        });
        Ok(PathEnsemble {
            grid: self.grid.clone(),
            values,
            family: ProcessFamily::Fbm {
                hurst: self.hurst.as_f64(),
            },
            seed,
        })
    }
}

/// Fills a `replicas x width` array block by block in parallel.
pub(crate) fn assemble_blocks<T: Real>(
    replicas: usize,
    width: usize,
    block: impl Fn(usize, usize) -> Array2<T> + Sync,
) -> Array2<T> {
    let starts: Vec<usize> = (0..replicas).step_by(BLOCK).collect();
    let blocks: Vec<Array2<T>> = starts
        .par_iter()
        .map(|&first| block(first, BLOCK.min(replicas - first)))
        .collect();
    let mut values = Array2::<T>::zeros((replicas, width));
    for (first, b) in starts.iter().zip(blocks) {
        values.slice_mut(s![*first..*first + b.nrows(), ..]).assign(&b);
    }
    values
}

/// Exact fBm paths via the Cholesky factor of the closed-form covariance.
pub fn simulate_fbm<T: Real>(hurst: T, grid: &TimeGrid<T>, replicas: usize, seed: u64) -> Result<PathEnsemble<T>> {
    FbmSampler::new(hurst, grid)?.sample(replicas, seed, stream::FBM)
}

/// Scalar driver specification shared by the cylindrical and SPDE layers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case")]
pub enum DriverSpec {
    Fbm { hurst: f64 },
    Rosenblatt(RosenblattConfig),
}

impl DriverSpec {
    pub fn hurst(&self) -> f64 {
        match self {
            DriverSpec::Fbm { hurst } => *hurst,
            DriverSpec::Rosenblatt(c) => c.hurst,
        }
    }

    fn stream_base(&self) -> u64 {
        match self {
            DriverSpec::Fbm { .. } => stream::FBM,
            DriverSpec::Rosenblatt(_) => stream::ROSENBLATT,
        }
    }
}

/// A prepared sampler for either driver family, reusable across modes.
#[derive(Debug, Clone)]
pub enum DriverSampler {
    Fbm(FbmSampler<f64>),
    Rosenblatt(Box<RosenblattScheme>),
}

impl DriverSampler {
    pub fn new(spec: &DriverSpec, grid: &TimeGrid<f64>) -> Result<Self> {
        Ok(match spec {
            DriverSpec::Fbm { hurst } => DriverSampler::Fbm(FbmSampler::new(*hurst, grid)?),
            DriverSpec::Rosenblatt(cfg) => DriverSampler::Rosenblatt(Box::new(RosenblattScheme::new(cfg, grid)?)),
        })
    }

    pub fn spec(&self) -> DriverSpec {
        match self {
            DriverSampler::Fbm(s) => DriverSpec::Fbm { hurst: s.hurst },
            DriverSampler::Rosenblatt(s) => DriverSpec::Rosenblatt(s.config().clone()),
        }
    }

    pub fn grid(&self) -> &TimeGrid<f64> {
        match self {
            DriverSampler::Fbm(s) => s.grid(),
            DriverSampler::Rosenblatt(s) => s.grid(),
        }
    }

    /// Replicas `first..first + count` of coordinate `mode`.
    pub fn sample_block(&self, seed: u64, mode: usize, first: usize, count: usize) -> Array2<f64> {
        let stream_id = self.spec().stream_base() + mode as u64;
        match self {
            DriverSampler::Fbm(s) => s.sample_block(seed, stream_id, first, count),
            DriverSampler::Rosenblatt(s) => s.sample_block(seed, stream_id, first, count),
        }
    }

    pub fn sample(&self, replicas: usize, seed: u64, mode: usize) -> Result<PathEnsemble<f64>> {
        if replicas == 0 {
            return Err(Error::Invalid("replicas must be >= 1".into()));
        }
        let values = assemble_blocks(replicas, self.grid().steps() + 1, |first, count| {
            self.sample_block(seed, mode, first, count)
        });
        let family = match self.spec() {
            DriverSpec::Fbm { hurst } => ProcessFamily::Fbm { hurst },
            DriverSpec::Rosenblatt(c) => ProcessFamily::Rosenblatt(c),
        };
        Ok(PathEnsemble {
            grid: self.grid().clone(),
            values,
            family,
            seed,
        })
    }
}

/// Independent scalar coordinates `b^{(n)}` of a cylindrical process.
#[derive(Debug, Clone, PartialEq)]
pub struct CylindricalEnsemble {
    pub coordinates: Vec<PathEnsemble<f64>>,
}

impl CylindricalEnsemble {
    pub fn modes(&self) -> usize {
        self.coordinates.len()
    }
}

/// Coordinate `n` is drawn from stream offset `n`, so a single mode
/// reproduces the scalar simulator exactly.
pub fn simulate_cylindrical(
    base: &DriverSpec,
    modes: usize,
    grid: &TimeGrid<f64>,
    replicas: usize,
    seed: u64,
) -> Result<CylindricalEnsemble> {
    if modes == 0 {
        return Err(Error::Invalid("modes must be >= 1".into()));
    }
    let sampler = DriverSampler::new(base, grid)?;
    let coordinates = (0..modes)
        .map(|m| sampler.sample(replicas, seed, m))
        .collect::<Result<Vec<_>>>()?;
    Ok(CylindricalEnsemble { coordinates })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_validation() {
        assert!(TimeGrid::<f64>::from_points(vec![0.0, 0.5, 0.5, 1.0]).is_err());
        assert!(TimeGrid::<f64>::from_points(vec![0.1, 1.0]).is_err());
        let g = TimeGrid::uniform(2.0f64, 8).unwrap();
        assert_eq!(g.steps(), 8);
        assert_eq!(g.horizon(), 2.0);
        assert_eq!(g.index_of(0.5), Some(2));
        assert_eq!(g.index_of(0.3), None);
    }

    #[test]
    fn fbm_starts_at_zero_and_is_reproducible() {
        let g = TimeGrid::uniform(1.0f64, 16).unwrap();
        let a = simulate_fbm(0.7, &g, 300, 5).unwrap();
        let b = simulate_fbm(0.7, &g, 300, 5).unwrap();
        assert_eq!(a, b);
        assert!(a.values.column(0).iter().all(|&v| v == 0.0));
        let c = simulate_fbm(0.7, &g, 100, 5).unwrap();
        assert_eq!(c.values, a.values.slice(s![..100, ..]));
    }

    #[test]
    fn single_precision_paths() {
        let g = TimeGrid::uniform(1.0f32, 8).unwrap();
        let e = simulate_fbm(0.75f32, &g, 10, 1).unwrap();
        assert!(e.values.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn single_mode_matches_scalar_simulator() {
        let g = TimeGrid::uniform(1.0f64, 8).unwrap();
        let cyl = simulate_cylindrical(&DriverSpec::Fbm { hurst: 0.75 }, 1, &g, 50, 9).unwrap();
        let scalar = simulate_fbm(0.75, &g, 50, 9).unwrap();
        assert_eq!(cyl.coordinates[0].values, scalar.values);
    }
}
