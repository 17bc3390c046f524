//! Wiener-type integrals of deterministic integrands: step functions, the
//! `K*_T` operator, the isometry, the fBm inner product and pathwise
//! Riemann–Stieltjes sums.

use ndarray::ArrayView1;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::gamma;

use crate::error::{Error, Result};
use crate::kernels::{origin_exponent, with_error_slot, VolterraKernel};
use crate::processes::{PathEnsemble, TimeGrid};
use crate::quadrature::{adaptive_singular, Endpoint, Estimate, Tolerance};
use crate::rng::normal;
use crate::scalar::Real;

/// `φ = Σ φ_i 1_{[t_i, t_{i+1})}` on `[0, T]`, the last interval closed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepFunction<T> {
    breakpoints: Vec<T>,
    values: Vec<T>,
}

impl<T: Real> StepFunction<T> {
    /// `breakpoints` must start at 0, increase strictly and have one more
    /// entry than `values`.
    pub fn new(breakpoints: Vec<T>, values: Vec<T>) -> Result<Self> {
        if values.is_empty() || breakpoints.len() != values.len() + 1 {
            return Err(Error::Invalid(format!(
                "{} breakpoints for {} values",
                breakpoints.len(),
                values.len()
            )));
        }
        if breakpoints[0] != T::zero() {
            return Err(Error::Invalid("first breakpoint must be 0".into()));
        }
        if breakpoints.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Invalid("breakpoints must increase strictly".into()));
        }
        Ok(Self { breakpoints, values })
    }

    pub fn constant(c: T, horizon: T) -> Result<Self> {
        Self::new(vec![T::zero(), horizon], vec![c])
    }

    /// `1_{[0, t]}` on `[0, T]`.
    pub fn indicator(t: T, horizon: T) -> Result<Self> {
        if t >= horizon {
            Self::constant(T::one(), horizon)
        } else {
            Self::new(vec![T::zero(), t, horizon], vec![T::one(), T::zero()])
        }
    }

    /// Random breakpoints on grid points and standard normal values.
    pub fn random_on_grid<R: Rng + ?Sized>(grid: &TimeGrid<T>, pieces: usize, rng: &mut R) -> Result<Self> {
        let n = grid.steps();
        if pieces == 0 || pieces > n {
            return Err(Error::Invalid(format!("{pieces} pieces on a grid of {n} steps")));
        }
        let mut cut = rand::seq::index::sample(rng, n - 1, pieces - 1).into_vec();
        cut.sort_unstable();
        let pts = grid.points();
        let mut breakpoints = vec![T::zero()];
        breakpoints.extend(cut.iter().map(|&i| pts[i + 1]));
        breakpoints.push(grid.horizon());
        let values = (0..pieces).map(|_| normal(rng)).collect();
        Self::new(breakpoints, values)
    }

    pub fn breakpoints(&self) -> &[T] {
        &self.breakpoints
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn horizon(&self) -> T {
        *self.breakpoints.last().expect("non-empty breakpoints")
    }

    /// Pieces as `(start, end, value)`.
    pub fn pieces(&self) -> impl Iterator<Item = (T, T, T)> + '_ {
        self.breakpoints
            .windows(2)
            .zip(&self.values)
            .map(|(w, &v)| (w[0], w[1], v))
    }

    pub fn eval(&self, u: T) -> T {
        if u < T::zero() || u > self.horizon() {
            return T::zero();
        }
        let i = self.breakpoints.partition_point(|&b| b <= u);
        self.values[(i.max(1) - 1).min(self.values.len() - 1)]
    }

    pub fn is_zero(&self) -> bool {
        self.values.iter().all(|v| *v == T::zero())
    }

    /// `∫_0^T |φ|^r`.
    pub fn power_integral(&self, r: T) -> T {
        self.pieces().map(|(a, b, v)| v.abs().powf(r) * (b - a)).sum()
    }
}

/// `(K*_T φ)(r) = Σ φ_i [K(max(t_{i+1}, r), r) - K(max(t_i, r), r)]`.
pub fn apply_kstar<T: Real, K: VolterraKernel<T> + ?Sized>(phi: &StepFunction<T>, kernel: &K, r: T) -> Result<T> {
    let mut acc = T::zero();
    for (a, b, v) in phi.pieces() {
        if b <= r || v == T::zero() {
            continue;
        }
        acc += v * (kernel.eval(b, r)? - kernel.eval(a.max(r), r)?);
    }
    Ok(acc)
}

/// `‖K*_T φ‖²_{L²(0,T)}`, the second moment of the Wiener integral of `φ`.
///
/// Integrated piece by piece; the cusps of `K(t_i, ·)` sit at the piece
/// ends and the origin singularity in the first piece.
pub fn integral_variance<T: Real, K: VolterraKernel<T> + ?Sized>(
    phi: &StepFunction<T>,
    kernel: &K,
) -> Result<Estimate<T>> {
    let mut total = Estimate {
        value: T::zero(),
        error: T::zero(),
    };
    if phi.is_zero() {
        return Ok(total);
    }
    let tol = Tolerance {
        abs: 1e-9,
        rel: 1e-9,
        max_intervals: 4000,
    };
    for (i, (a, b, _)) in phi.pieces().enumerate() {
        let q = if i == 0 {
            origin_exponent(kernel.alpha())
        } else {
            T::two()
        };
        let part = with_error_slot(|catch| {
            adaptive_singular(
                |r: T| catch(apply_kstar(phi, kernel, r)).pow2(),
                a,
                b,
                q,
                Endpoint::Both,
                tol,
            )
        })?;
        total.value += part.value;
        total.error += part.error;
    }
    if total.error.as_f64() > 1e-5 {
        return Err(Error::Numeric {
            what: "integral variance",
            achieved: total.error.as_f64(),
            target: 1e-5,
        });
    }
    Ok(total)
}

/// `H(2H-1) ∫_a^b ∫_c^d |u-v|^{2H-2} dv du`, via the antiderivative
/// `|w|^{2H} / (2H(2H-1))`.
pub fn fbm_rectangle<T: Real>(hurst: T, a: T, b: T, c: T, d: T) -> T {
    let p = |w: T| w.abs().powf(T::two() * hurst);
    T::half() * (p(b - c) + p(a - d) - p(b - d) - p(a - c))
}

/// `H(2H-1) ∫∫ f(u) g(v) |u-v|^{2H-2} du dv`, exact for step functions.
pub fn fbm_inner_product<T: Real>(f: &StepFunction<T>, g: &StepFunction<T>, hurst: T) -> T {
    let mut acc = T::zero();
    for (a, b, fv) in f.pieces() {
        if fv == T::zero() {
            continue;
        }
        for (c, d, gv) in g.pieces() {
            if gv != T::zero() {
                acc += fv * gv * fbm_rectangle(hurst, a, b, c, d);
            }
        }
    }
    acc
}

/// `H(2H-1) ∫∫ f(u) f(v) |u-v|^{2H-2}` for `f = Σ w_i 1_{[t_i, t_{i+1})}`
/// on a uniform grid with step `h`, using the stationary increment
/// covariance.
pub fn uniform_grid_energy(weights: &[f64], step: f64, hurst: f64) -> f64 {
    let n = weights.len();
    let two_h = 2.0 * hurst;
    let lag_cov: Vec<f64> = (0..n)
        .map(|k| {
            let k = k as f64;
            0.5 * ((k + 1.0).powf(two_h) + (k - 1.0).abs().powf(two_h) - 2.0 * k.powf(two_h)) * step.powf(two_h)
        })
        .collect();
    let mut acc = 0.0;
    for i in 0..n {
        if weights[i] == 0.0 {
            continue;
        }
        let mut row = lag_cov[0] * weights[i];
        for j in i + 1..n {
            row += 2.0 * lag_cov[j - i] * weights[j];
        }
        acc += weights[i] * row;
    }
    acc
}

/// `Σ φ_i (b_{t_{i+1}} - b_{t_i})` for a path on `grid`.
pub fn elementary_integral<T: Real>(phi: &StepFunction<T>, grid: &TimeGrid<T>, path: ArrayView1<'_, T>) -> Result<T> {
    let idx = aligned_indices(phi, grid)?;
    Ok(idx
        .windows(2)
        .zip(phi.values())
        .map(|(w, &v)| v * (path[w[1]] - path[w[0]]))
        .sum())
}

/// [`elementary_integral`] for every replica of an ensemble.
pub fn elementary_integrals<T: Real>(phi: &StepFunction<T>, ensemble: &PathEnsemble<T>) -> Result<Vec<T>> {
    let idx = aligned_indices(phi, &ensemble.grid)?;
    Ok(ensemble
        .values
        .rows()
        .into_iter()
        .map(|path| {
            idx.windows(2)
                .zip(phi.values())
                .map(|(w, &v)| v * (path[w[1]] - path[w[0]]))
                .sum()
        })
        .collect())
}

fn aligned_indices<T: Real>(phi: &StepFunction<T>, grid: &TimeGrid<T>) -> Result<Vec<usize>> {
    phi.breakpoints()
        .iter()
        .map(|&b| grid.index_of(b).ok_or(Error::Alignment(b.as_f64())))
        .collect()
}

/// A pathwise integral with its refinement-doubling drift.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PathwiseIntegral<T> {
    pub value: T,
    /// `|S_m - S_{2m}|` relative to `Σ |ḡ_i| |Δb_i|`.
    pub change: T,
}

/// Largest admissible refinement-doubling drift of a pathwise integral.
pub const PATHWISE_LIMIT: f64 = 0.01;

/// Left-point sum `∫_0^{t_n} g db` on the grid refined `refinement` times,
/// with the path linearly interpolated between its grid values.
///
/// Fails with a convergence error when doubling the refinement moves the
/// sum by more than 1% of `Σ |ḡ_i| |Δb_i|`.
pub fn riemann_stieltjes<T: Real, G: Fn(T) -> T>(
    g: G,
    grid: &TimeGrid<T>,
    path: ArrayView1<'_, T>,
    upto: usize,
    refinement: usize,
) -> Result<PathwiseIntegral<T>> {
    if refinement == 0 || upto > grid.steps() || path.len() != grid.steps() + 1 {
        return Err(Error::Invalid("refinement, end index or path length".into()));
    }
    let pts = grid.points();
    let left_average = |i: usize, m: usize| -> T {
        let h = (pts[i + 1] - pts[i]) / T::from_count(m);
        (0..m).map(|l| g(pts[i] + h * T::from_count(l))).sum::<T>() / T::from_count(m)
    };
    let (mut coarse, mut fine, mut scale) = (T::zero(), T::zero(), T::zero());
    for i in 0..upto {
        let db = path[i + 1] - path[i];
        let gm = left_average(i, refinement);
        let g2m = left_average(i, 2 * refinement);
        coarse += gm * db;
        fine += g2m * db;
        scale += (g2m * db).abs();
    }
    finish_pathwise(coarse, fine, scale)
}

pub(crate) fn finish_pathwise<T: Real>(coarse: T, fine: T, scale: T) -> Result<PathwiseIntegral<T>> {
    let change = if scale > T::zero() {
        (coarse - fine).abs() / scale
    } else {
        T::zero()
    };
    if change.as_f64() > PATHWISE_LIMIT {
        return Err(Error::Convergence {
            what: "Riemann-Stieltjes refinement",
            drift: change.as_f64(),
            limit: PATHWISE_LIMIT,
        });
    }
    Ok(PathwiseIntegral { value: coarse, change })
}

/// Sharp Hardy–Littlewood–Sobolev constant on the line:
/// `∫∫ f(u) f(v) |u-v|^{-λ} <= C ‖f‖²_{2/(2-λ)}`, `0 < λ < 1`.
pub fn hls_constant(lambda: f64) -> f64 {
    std::f64::consts::PI.powf(lambda - 0.5) * gamma((1.0 - lambda) / 2.0) / gamma(1.0 - lambda / 2.0)
}

/// Constant of `‖K*φ‖² <= C ‖φ‖²_{L^{2/(1+2α)}}` for the fractional kernel.
pub fn fbm_embedding_constant(hurst: f64) -> f64 {
    hurst * (2.0 * hurst - 1.0) * hls_constant(2.0 - 2.0 * hurst)
}

/// Outcome of [`embedding_bound_check`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingReport {
    /// The constant the bound is checked against.
    pub constant: f64,
    /// `‖K*φ‖² / (∫|φ|^r)^{2/r}` per function; zero functions give 0.
    pub ratios: Vec<f64>,
    pub empirical_constant: f64,
    pub pass: bool,
}

/// Checks `integral_variance(φ) <= C (∫|φ|^{2/(1+2α)})^{1+2α}` over the
/// given functions with one constant: the sharp fractional constant when
/// the kernel has a Hurst index, else the largest observed ratio.
pub fn embedding_bound_check<T: Real, K: VolterraKernel<T> + ?Sized>(
    kernel: &K,
    functions: &[StepFunction<T>],
) -> Result<EmbeddingReport> {
    let alpha = kernel.alpha().as_f64();
    let r = 2.0 / (1.0 + 2.0 * alpha);
    let ratios = functions
        .par_iter()
        .map(|phi| {
            if phi.is_zero() {
                return Ok(0.0);
            }
            let lhs = integral_variance(phi, kernel)?.value.as_f64();
            let rhs = phi.power_integral(T::lit(r)).as_f64().powf(2.0 / r);
            Ok(lhs / rhs)
        })
        .collect::<Result<Vec<f64>>>()?;
    let empirical_constant = ratios.iter().cloned().fold(0.0, f64::max);
    let constant = kernel
        .hurst()
        .map(|h| fbm_embedding_constant(h.as_f64()))
        .unwrap_or(empirical_constant);
    let pass = ratios.iter().all(|q| q.is_finite() && *q <= constant * (1.0 + 1e-6));
    Ok(EmbeddingReport {
        constant,
        ratios,
        empirical_constant,
        pass,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::FbmKernel;
    use crate::processes::simulate_fbm;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn step_function_validation_and_eval() {
        assert!(StepFunction::new(vec![0.0, 1.0], vec![1.0, 2.0]).is_err());
        assert!(StepFunction::new(vec![0.1, 1.0], vec![1.0]).is_err());
        assert!(StepFunction::new(vec![0.0, 0.5, 0.5, 1.0], vec![1.0, 2.0, 3.0]).is_err());
        let phi = StepFunction::new(vec![0.0, 0.5, 1.0], vec![1.0, -1.0]).unwrap();
        assert_eq!(phi.eval(0.0), 1.0);
        assert_eq!(phi.eval(0.5), -1.0);
        assert_eq!(phi.eval(1.0), -1.0);
        assert_eq!(phi.eval(1.5), 0.0);
    }

    #[test]
    fn kstar_of_constant_telescopes() {
        let k = FbmKernel::new(0.7, None).unwrap();
        let one = StepFunction::constant(1.0, 1.0).unwrap();
        for r in [0.1, 0.4, 0.9] {
            assert_eq!(apply_kstar(&one, &k, r).unwrap(), k.eval(1.0, r).unwrap());
        }
        assert_eq!(apply_kstar(&one, &k, 1.0).unwrap(), 0.0);
    }

    #[test]
    fn indicator_rectangle_is_exact() {
        let f = StepFunction::indicator(0.6f64, 1.0).unwrap();
        assert!((fbm_inner_product(&f, &f, 0.8) - 0.6f64.powf(1.6)).abs() < 1e-15);
    }

    #[test]
    fn uniform_energy_matches_rectangles() {
        let w = [0.3, -1.0, 2.0, 0.5];
        let grid = TimeGrid::uniform(1.0, 4).unwrap();
        let f = StepFunction::new(grid.points().to_vec(), w.to_vec()).unwrap();
        let a = uniform_grid_energy(&w, 0.25, 0.7);
        assert!((a - fbm_inner_product(&f, &f, 0.7)).abs() < 1e-14);
    }

    #[test]
    fn elementary_integral_requires_alignment() {
        let grid = TimeGrid::uniform(1.0, 4).unwrap();
        let e = simulate_fbm(0.7, &grid, 2, 1).unwrap();
        let off = StepFunction::indicator(0.3, 1.0).unwrap();
        assert!(matches!(
            elementary_integral(&off, &grid, e.path(0)),
            Err(Error::Alignment(_))
        ));
        let c = StepFunction::constant(2.5f64, 1.0).unwrap();
        let v = elementary_integral(&c, &grid, e.path(1)).unwrap();
        assert!((v - 2.5 * e.values[[1, 4]]).abs() < 1e-14);
    }

    #[test]
    fn riemann_stieltjes_of_constant_is_increment() {
        let grid = TimeGrid::uniform(1.0f64, 16).unwrap();
        let e = simulate_fbm(0.75, &grid, 1, 5).unwrap();
        let rs = riemann_stieltjes(|_| 3.0, &grid, e.path(0), 10, 4).unwrap();
        assert!((rs.value - 3.0 * e.values[[0, 10]]).abs() < 1e-13);
        assert_eq!(rs.change, 0.0);
    }

    #[test]
    fn random_steps_sit_on_grid() {
        let grid = TimeGrid::uniform(1.0, 32).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let phi = StepFunction::random_on_grid(&grid, 8, &mut rng).unwrap();
        assert_eq!(phi.values().len(), 8);
        assert!(phi.breakpoints().iter().all(|&b| grid.index_of(b).is_some()));
    }

    #[test]
    fn hls_constant_dominates_the_unit_indicator() {
        // ∫∫_{[0,1]²} |u-v|^{-λ} = 2 / ((1-λ)(2-λ)).
        for lambda in [0.2, 0.5, 0.8] {
            assert!(2.0 / ((1.0 - lambda) * (2.0 - lambda)) <= hls_constant(lambda));
        }
    }
}
