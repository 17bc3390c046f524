//! Hermite polynomials (normalized so that `E H_n(g)^2 = 1/n!`), finite-chaos
//! random vectors and empirical moment-equivalence checks.

use ndarray::Array2;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{normal, stream, substream};
use crate::scalar::Real;
use crate::stats::{linear_fit, McEstimate};

/// `H_n(x)` via `H_{n+1} = (x H_n - H_{n-1}) / (n + 1)`.
pub fn hermite<T: Real>(n: usize, x: T) -> T {
    let (mut prev, mut cur) = (T::one(), x);
    if n == 0 {
        return prev;
    }
    for k in 1..n {
        let next = (x * cur - prev) / T::from_count(k + 1);
        prev = cur;
        cur = next;
    }
    cur
}

/// How the scalar chaos variables `ξ_j` are formed from Gaussians.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mixing {
    /// `ξ_j = H_n(g_j)` with independent standard `g_j`.
    Independent,
    /// `ξ_j = H_n(<a_j, g>)` for unit vectors `a_j` and one Gaussian vector `g`.
    Shared { directions: Vec<Vec<f64>> },
}

/// `Σ_j ξ_j x_j` with `x_j` in `R^dim` normed by `ℓ^space_exponent`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChaosVariableSpec {
    pub order: usize,
    pub coefficients: Vec<Vec<f64>>,
    pub space_exponent: f64,
    pub mixing: Mixing,
}

impl ChaosVariableSpec {
    pub fn dim(&self) -> usize {
        self.coefficients.first().map_or(0, Vec::len)
    }

    fn validate(&self) -> Result<()> {
        let dim = self.dim();
        if self.coefficients.is_empty() || dim == 0 {
            return Err(Error::Invalid(
                "chaos variable needs at least one coefficient vector".into(),
            ));
        }
        if self.coefficients.iter().any(|x| x.len() != dim) {
            return Err(Error::Invalid("coefficient vectors differ in dimension".into()));
        }
        if !(self.space_exponent >= 1.0) {
            return Err(Error::ParameterDomain {
                name: "space exponent",
                value: self.space_exponent,
                constraint: "p >= 1",
            });
        }
        if let Mixing::Shared { directions } = &self.mixing {
            let latent = directions.first().map_or(0, Vec::len);
            if directions.len() != self.coefficients.len()
                || latent == 0
                || directions.iter().any(|a| a.len() != latent)
            {
                return Err(Error::Invalid(
                    "one direction of common length per coefficient vector required".into(),
                ));
            }
            for a in directions {
                let norm: f64 = a.iter().map(|v| v * v).sum::<f64>().sqrt();
                if (norm - 1.0).abs() > 1e-9 {
                    return Err(Error::Invalid("mixing directions must be unit vectors".into()));
                }
            }
        }
        Ok(())
    }

    fn draw_into<R: Rng + ?Sized>(&self, rng: &mut R, latent: &mut Vec<f64>, out: &mut [f64]) {
        out.fill(0.0);
        match &self.mixing {
            Mixing::Independent => {
                for x in &self.coefficients {
                    let xi = hermite(self.order, normal::<f64, _>(rng));
                    out.iter_mut().zip(x).for_each(|(o, c)| *o += xi * c);
                }
            }
            Mixing::Shared { directions } => {
                latent.clear();
                latent.extend((0..directions[0].len()).map(|_| normal::<f64, _>(rng)));
                for (x, a) in self.coefficients.iter().zip(directions) {
                    let proj: f64 = a.iter().zip(latent.iter()).map(|(u, v)| u * v).sum();
                    let xi = hermite(self.order, proj);
                    out.iter_mut().zip(x).for_each(|(o, c)| *o += xi * c);
                }
            }
        }
    }
}

/// Replicas of a chaos vector: one row per replica.
#[derive(Debug, Clone, PartialEq)]
pub struct ChaosEnsemble {
    pub values: Array2<f64>,
    pub space_exponent: f64,
}

impl ChaosEnsemble {
    /// `ℓ^p` norm of each replica.
    pub fn norms(&self) -> Vec<f64> {
        let p = self.space_exponent;
        self.values
            .rows()
            .into_iter()
            .map(|row| {
                if p == 2.0 {
                    row.iter().map(|v| v * v).sum::<f64>().sqrt()
                } else {
                    row.iter().map(|v| v.abs().powf(p)).sum::<f64>().powf(p.recip())
                }
            })
            .collect()
    }

    /// Multiplies every replica by `c`.
    pub fn scaled(&self, c: f64) -> Self {
        Self {
            values: &self.values * c,
            space_exponent: self.space_exponent,
        }
    }
}

const CHUNK: usize = 512;

/// I.i.d. replicas of `Σ_j ξ_j x_j`; replica `i` uses its own substream.
pub fn sample_linear_combination(spec: &ChaosVariableSpec, replicas: usize, seed: u64) -> Result<ChaosEnsemble> {
    spec.validate()?;
    if replicas == 0 {
        return Err(Error::Invalid("replicas must be >= 1".into()));
    }
    let dim = spec.dim();
    let mut values = Array2::<f64>::zeros((replicas, dim));
    values
        .as_slice_mut()
        .expect("standard layout")
        .par_chunks_mut(CHUNK * dim)
        .enumerate()
        .for_each(|(c, block)| {
            let mut latent = Vec::new();
            for (j, row) in block.chunks_mut(dim).enumerate() {
                let mut rng = substream(seed, stream::CHAOS, (c * CHUNK + j) as u64);
                spec.draw_into(&mut rng, &mut latent, row);
            }
        });
    Ok(ChaosEnsemble {
        values,
        space_exponent: spec.space_exponent,
    })
}

/// `(E‖X‖^q)^{1/q} / (E‖X‖^p)^{1/p}` with a delta-method standard error.
pub fn moment_ratio(ensemble: &ChaosEnsemble, q: f64, p: f64) -> Result<McEstimate> {
    for (name, e) in [("q", q), ("p", p)] {
        if !(e >= 1.0 && e.is_finite()) {
            return Err(Error::ParameterDomain {
                name,
                value: e,
                constraint: "exponent in [1, inf)",
            });
        }
    }
    let norms = ensemble.norms();
    if norms.is_empty() {
        return Err(Error::InsufficientData("empty ensemble".into()));
    }
    let n = norms.len() as f64;
    let nq: Vec<f64> = norms.iter().map(|v| v.powf(q)).collect();
    let np: Vec<f64> = norms.iter().map(|v| v.powf(p)).collect();
    let a = nq.iter().sum::<f64>() / n;
    let b = np.iter().sum::<f64>() / n;
    if !(b > 0.0) {
        return Err(Error::UndefinedRatio);
    }
    let value = a.powf(q.recip()) / b.powf(p.recip());
    // log ratio = log(A)/q - log(B)/p; linearize in the sample means.
    let infl: Vec<f64> = nq.iter().zip(&np).map(|(x, y)| x / (q * a) - y / (p * b)).collect();
    let m = infl.iter().sum::<f64>() / n;
    let var = infl.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
    Ok(McEstimate {
        value,
        se: value * (var / n).sqrt(),
    })
}

/// Parameters of [`hypercontractivity_sweep`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    pub order: usize,
    pub p: f64,
    pub q: f64,
    pub dims: Vec<usize>,
    pub trials: usize,
    /// Replicas per trial.
    pub replicas: usize,
    /// Number of chaos terms per random design; `None` uses the dimension.
    pub terms: Option<usize>,
    pub space_exponent: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DimensionSummary {
    pub dim: usize,
    pub sup_ratio: f64,
    pub sup_se: f64,
    pub mean_ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub per_dim: Vec<DimensionSummary>,
    /// Overall empirical moment-equivalence constant.
    pub empirical_constant: f64,
    /// Slope of trial ratios against `log2(dim)` and its SE.
    pub trend_slope: f64,
    pub trend_se: f64,
    pub monotone: bool,
    pub pass: bool,
}

fn unit_vector<R: Rng + ?Sized>(rng: &mut R, len: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..len).map(|_| normal::<f64, _>(rng)).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-12 {
            return v.into_iter().map(|x| x / norm).collect();
        }
    }
}

/// Random design for one trial: Gaussian coefficient vectors, and shared
/// random directions on even trials, independent variables on odd ones.
pub fn random_design(
    order: usize,
    dim: usize,
    terms: usize,
    space_exponent: f64,
    seed: u64,
    trial: u64,
) -> ChaosVariableSpec {
    let mut rng = substream(seed, stream::CHAOS_DESIGN, trial);
    let coefficients = (0..terms)
        .map(|_| (0..dim).map(|_| normal::<f64, _>(&mut rng)).collect())
        .collect();
    let mixing = if trial.is_multiple_of(2) {
        Mixing::Shared {
            directions: (0..terms).map(|_| unit_vector(&mut rng, terms)).collect(),
        }
    } else {
        Mixing::Independent
    };
    ChaosVariableSpec {
        order,
        coefficients,
        space_exponent,
        mixing,
    }
}

/// Sup of the moment ratio over random designs, per coefficient dimension.
///
/// Passes iff the sup never grows by more than 5% from one dimension to the
/// next and the regression of trial ratios on `log2(dim)` shows no
/// significant positive slope (one-sided 95%).
pub fn hypercontractivity_sweep(cfg: &SweepConfig) -> Result<SweepReport> {
    if cfg.trials < 30 {
        return Err(Error::ParameterDomain {
            name: "trials",
            value: cfg.trials as f64,
            constraint: "trials >= 30",
        });
    }
    if cfg.dims.is_empty() {
        return Err(Error::Invalid("no dimensions to sweep".into()));
    }
    let mut per_dim = Vec::with_capacity(cfg.dims.len());
    let (mut xs, mut ys) = (Vec::new(), Vec::new());
    for (di, &dim) in cfg.dims.iter().enumerate() {
        let terms = cfg.terms.unwrap_or(dim).max(1);
        let mut sup = McEstimate { value: 0.0, se: 0.0 };
        let mut total = 0.0;
        for trial in 0..cfg.trials {
            let tag = ((di as u64) << 20) | trial as u64;
            let spec = random_design(cfg.order, dim, terms, cfg.space_exponent, cfg.seed, tag);
            let ens = sample_linear_combination(&spec, cfg.replicas, cfg.seed ^ tag.rotate_left(40))?;
            let r = moment_ratio(&ens, cfg.q, cfg.p)?;
            if r.value > sup.value {
                sup = r;
            }
            total += r.value;
            xs.push((dim as f64).log2());
            ys.push(r.value);
        }
        per_dim.push(DimensionSummary {
            dim,
            sup_ratio: sup.value,
            sup_se: sup.se,
            mean_ratio: total / cfg.trials as f64,
        });
    }
    let monotone = per_dim.windows(2).all(|w| w[1].sup_ratio <= w[0].sup_ratio * 1.05);
    let (trend_slope, trend_se) = if cfg.dims.len() >= 2 {
        let fit = linear_fit(&xs, &ys);
        (fit.slope, fit.slope_se)
    } else {
        (0.0, 0.0)
    };
    let no_growth = trend_slope <= 1.645 * trend_se || trend_slope.abs() < 1e-12;
    let empirical_constant = per_dim.iter().map(|d| d.sup_ratio).fold(0.0, f64::max);
    Ok(SweepReport {
        per_dim,
        empirical_constant,
        trend_slope,
        trend_se,
        monotone,
        pass: monotone && no_growth,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn low_order_values() {
        assert_eq!(hermite(0, 7.3f64), 1.0);
        assert_eq!(hermite(1, 3.2f64), 3.2);
        assert!((hermite(2, 2.0f64) - 1.5).abs() < 1e-15);
        // H_3 = (x^3 - 3x) / 6
        assert!((hermite(3, 1.5f64) - (1.5f64.powi(3) - 4.5) / 6.0).abs() < 1e-15);
    }

    #[test]
    fn constant_chaos_is_deterministic() {
        let spec = ChaosVariableSpec {
            order: 0,
            coefficients: vec![vec![1.0, 0.0]],
            space_exponent: 2.0,
            mixing: Mixing::Independent,
        };
        let ens = sample_linear_combination(&spec, 100, 3).unwrap();
        assert!(ens.values.rows().into_iter().all(|r| r[0] == 1.0 && r[1] == 0.0));
        let r = moment_ratio(&ens, 4.0, 2.0).unwrap();
        assert!((r.value - 1.0).abs() < 1e-15);
        assert!(r.se < 1e-12);
    }

    #[test]
    fn degenerate_ensemble_has_no_ratio() {
        let ens = ChaosEnsemble {
            values: Array2::zeros((10, 3)),
            space_exponent: 2.0,
        };
        assert_eq!(moment_ratio(&ens, 4.0, 2.0), Err(Error::UndefinedRatio));
    }

    #[test]
    fn rejects_non_unit_directions() {
        let spec = ChaosVariableSpec {
            order: 1,
            coefficients: vec![vec![1.0]],
            space_exponent: 2.0,
            mixing: Mixing::Shared {
                directions: vec![vec![2.0, 0.0]],
            },
        };
        assert!(sample_linear_combination(&spec, 10, 0).is_err());
    }

    #[test]
    fn sweep_needs_thirty_trials() {
        let cfg = SweepConfig {
            order: 1,
            p: 2.0,
            q: 4.0,
            dims: vec![2],
            trials: 10,
            replicas: 100,
            terms: None,
            space_exponent: 2.0,
            seed: 1,
        };
        assert!(hypercontractivity_sweep(&cfg).is_err());
    }
}
