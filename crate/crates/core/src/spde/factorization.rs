//! Factorized reconstruction of the stochastic convolution:
//! `X_k(t) = Λ ∫_0^t (t-u)^{β-1} e^{-λ_k(t-u)} λ_k^{-δ} Y_k(u) du` with
//! `Y_k(u) = c_k λ_k^δ ∫_0^u (u-r)^{-β} e^{-λ_k(u-r)} db_r`, `Λ = sin(πβ)/π`.
//!
//! `Y_k` is exact at grid points for the linearly interpolated driver and
//! piecewise linear in between; both maps are linear in the increments, so
//! they are composed once per mode into a single weight vector.

use ndarray::{s, Array3};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::{gamma, gamma_lr};

use super::mild::{Driver, HolderParameters, MildProblem, MildSolutionField};
use crate::error::{Error, Result};
use crate::processes::BLOCK;
use crate::quadrature::{adaptive, adaptive_singular, Endpoint, Estimate, Tolerance};

/// `∫_r^t (t-u)^{β-1} (u-r)^{-β} du`, equal to `π / sin(πβ)`.
pub fn factorization_constant(beta: f64, r: f64, t: f64) -> Result<Estimate<f64>> {
    if !(beta > 0.0 && beta < 1.0) || !(r < t) {
        return Err(Error::Invalid(format!("β = {beta}, r = {r}, t = {t}")));
    }
    let q = (1.0 / beta).max(1.0 / (1.0 - beta));
    adaptive_singular(
        |u: f64| (t - u).powf(beta - 1.0) * (u - r).powf(-beta),
        r,
        t,
        q,
        Endpoint::Both,
        Tolerance {
            abs: 1e-12,
            rel: 1e-12,
            max_intervals: 4000,
        },
    )
}

fn lower_gamma_regularized(a: f64, x: f64) -> f64 {
    if x <= 0.0 {
        0.0
    } else if x.is_infinite() {
        1.0
    } else {
        gamma_lr(a, x)
    }
}

/// `(1/h) ∫_{jh}^{(j+1)h} s^{-β} e^{-λs} ds` for `j = 0..n`.
fn singular_cell_averages(lambda: f64, beta: f64, h: f64, n: usize) -> Vec<f64> {
    let a = 1.0 - beta;
    let scale = lambda.powf(-a) * gamma(a) / h;
    let cdf: Vec<f64> = (0..=n)
        .map(|j| lower_gamma_regularized(a, lambda * j as f64 * h))
        .collect();
    cdf.windows(2).map(|w| scale * (w[1] - w[0])).collect()
}

/// `∫ s^{β-1} e^{-λs} φ_j(s) ds` for the hat functions `φ_j` centred at
/// `jh`, `j = 0..n`; `φ_0` is the half hat on `[0, h]`.
fn product_weights(lambda: f64, beta: f64, h: f64, n: usize) -> Result<Vec<f64>> {
    let tol = Tolerance {
        abs: 1e-15,
        rel: 1e-11,
        max_intervals: 2000,
    };
    let f = |s: f64| s.powf(beta - 1.0) * (-lambda * s).exp();
    let mut out = vec![0.0; n + 1];
    for c in 0..n {
        let (lo, hi) = (c as f64 * h, (c + 1) as f64 * h);
        let falling = |s: f64| f(s) * (hi - s) / h;
        let rising = |s: f64| f(s) * (s - lo) / h;
        let (down, up) = if c == 0 {
            (
                adaptive_singular(falling, lo, hi, 1.0 / beta, Endpoint::Left, tol)?,
                adaptive_singular(rising, lo, hi, 1.0 / beta, Endpoint::Left, tol)?,
            )
        } else {
            (adaptive(falling, lo, hi, tol)?, adaptive(rising, lo, hi, tol)?)
        };
        out[c] += down.value;
        out[c + 1] += up.value;
    }
    Ok(out)
}

/// Reconstructs the convolution through `Y^δ` and `R_{β,T}`; the
/// deterministic part `e^{-λ_k t} x0_k` is added unchanged.
pub fn factorization_reconstruct(
    problem: &MildProblem<'_>,
    driver: Driver<'_>,
    params: &HolderParameters,
) -> Result<MildSolutionField> {
    let grid = driver.grid().clone();
    problem.validate(&grid)?;
    if !grid.is_uniform() {
        return Err(Error::Invalid("factorization needs a uniform grid".into()));
    }
    let hurst = driver.hurst()?;
    let checked = HolderParameters {
        alpha: hurst - 0.5,
        ..*params
    };
    checked.check_factorization()?;
    let (beta, delta) = (checked.beta, checked.delta);
    let model = problem.model;
    let modes = model.modes();
    let noise = &problem.noise;
    driver.check(noise.drivers(modes))?;
    let coeff = noise.coefficients(model);
    let lambdas = model.eigenvalues();
    let n = grid.steps();
    let h = grid.horizon() / n as f64;
    let big_lambda = (std::f64::consts::PI * beta).sin() / std::f64::consts::PI;

    // composite[k][d] weights the increment d cells before the output time.
    let composite = lambdas
        .par_iter()
        .zip(&coeff)
        .map(|(&l, &c)| {
            if c == 0.0 {
                return Ok(vec![0.0; n]);
            }
            let w = singular_cell_averages(l, beta, h, n);
            let a = product_weights(l, beta, h, n)?;
            let inner = c * l.powf(delta);
            let outer = big_lambda * l.powf(-delta);
            Ok((0..n)
                .map(|d| outer * inner * (0..=d).map(|j| a[j] * w[d - j]).sum::<f64>())
                .collect())
        })
        .collect::<Result<Vec<Vec<f64>>>>()?;

    let record = &problem.record;
    let times: Vec<f64> = record.iter().map(|&j| grid.points()[j]).collect();
    let replicas = driver.replicas();
    let starts: Vec<usize> = (0..replicas).step_by(BLOCK).collect();
    let blocks: Vec<Array3<f64>> = starts
        .par_iter()
        .map(|&first| {
            let count = BLOCK.min(replicas - first);
            let mut out = Array3::<f64>::zeros((count, modes, record.len()));
            for d in 0..noise.drivers(modes) {
                let users: Vec<usize> = (0..modes)
                    .filter(|&k| noise.driver_of(k) == d && coeff[k] != 0.0)
                    .collect();
                if users.is_empty() {
                    continue;
                }
                let paths = driver.block(d, first, count);
                for &k in &users {
                    let v = &composite[k];
                    for r in 0..count {
                        let path = paths.row(r);
                        for (slot, &idx) in record.iter().enumerate() {
                            out[[r, k, slot]] = (0..idx).map(|i| v[idx - 1 - i] * (path[i + 1] - path[i])).sum();
                        }
                    }
                }
            }
            for k in 0..modes {
                let x0 = problem.initial(k);
                if x0 != 0.0 {
                    for (j, &t) in times.iter().enumerate() {
                        let det = (-lambdas[k] * t).exp() * x0;
                        out.slice_mut(s![.., k, j]).mapv_inplace(|v| v + det);
                    }
                }
            }
            out
        })
        .collect();
    let mut values = Array3::<f64>::zeros((replicas, modes, record.len()));
    for (first, b) in starts.iter().zip(blocks) {
        values.slice_mut(s![*first..*first + b.shape()[0], .., ..]).assign(&b);
    }
    Ok(MildSolutionField {
        model: model.clone(),
        times,
        time_indices: record.clone(),
        values,
        driver: driver.spec(),
        hurst,
        seed: driver.seed(),
        refinement_drift: 0.0,
        truncation_drift: 0.0,
    })
}

/// Relative `L²(Ω × D)` distance between two fields at one recorded time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RoundTrip {
    pub relative_error: f64,
    /// Largest per-replica relative `L²(D)` error.
    pub worst_replica: f64,
}

pub fn round_trip_error(direct: &MildSolutionField, other: &MildSolutionField, j: usize) -> Result<RoundTrip> {
    if direct.values.shape() != other.values.shape() || j >= direct.times.len() {
        return Err(Error::Invalid("fields differ in shape or time index".into()));
    }
    let (mut num, mut den, mut worst) = (0.0, 0.0, 0.0f64);
    for r in 0..direct.replicas() {
        let a = direct.values.slice(s![r, .., j]);
        let b = other.values.slice(s![r, .., j]);
        let diff: f64 = a.iter().zip(b.iter()).map(|(x, y)| (x - y).powi(2)).sum();
        let norm: f64 = a.iter().map(|x| x * x).sum();
        num += diff;
        den += norm;
        if norm > 0.0 {
            worst = worst.max((diff / norm).sqrt());
        }
    }
    Ok(RoundTrip {
        relative_error: if den > 0.0 { (num / den).sqrt() } else { num.sqrt() },
        worst_replica: worst,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn half_order_constant_is_pi() {
        let est = factorization_constant(0.5, 0.2, 0.9).unwrap();
        assert!((est.value - std::f64::consts::PI).abs() < 1e-9);
    }

    #[test]
    fn cell_averages_integrate_the_kernel() {
        let (lambda, beta, h) = (3.0, 0.3, 0.05);
        let w = singular_cell_averages(lambda, beta, h, 20);
        let total: f64 = w.iter().sum::<f64>() * h;
        let direct = adaptive_singular(
            |s: f64| s.powf(-beta) * (-lambda * s).exp(),
            0.0,
            1.0,
            1.0 / (1.0 - beta),
            Endpoint::Left,
            Tolerance::default(),
        )
        .unwrap();
        assert!((total - direct.value).abs() < 1e-9);
    }

    #[test]
    fn hat_weights_sum_to_the_weight_integral() {
        let (lambda, beta, h) = (2.0, 0.2, 0.1);
        let a = product_weights(lambda, beta, h, 10).unwrap();
        let direct = adaptive_singular(
            |s: f64| s.powf(beta - 1.0) * (-lambda * s).exp(),
            0.0,
            1.0,
            1.0 / beta,
            Endpoint::Left,
            Tolerance::default(),
        )
        .unwrap();
        // The hats, halved at both ends, partition unity on [0, 1].
        assert!((a.iter().sum::<f64>() - direct.value).abs() < 1e-9);
    }
}
