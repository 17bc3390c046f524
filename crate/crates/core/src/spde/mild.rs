//! Per-mode stochastic convolutions and the exact second-moment oracle.

use std::io::Write;

use ndarray::{s, Array1, Array2, Array3};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{NoiseOperator, SpectralModel};
use crate::error::{Error, Result};
use crate::processes::{CylindricalEnsemble, DriverSampler, DriverSpec, TimeGrid, BLOCK};
use crate::quadrature::{adaptive_singular, Endpoint, Tolerance};
use crate::wiener_integral::PATHWISE_LIMIT;

/// Refinement factor of the pathwise convolutions unless configured.
pub const DEFAULT_REFINEMENT: usize = 1024;

/// Largest admissible drift of `E‖X_T‖²_{L²}` when the modes are doubled.
pub const FIELD_TRUNCATION_LIMIT: f64 = 0.02;

/// Exponents of the regularity statements.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HolderParameters {
    /// Driver regularity `H - 1/2`.
    pub alpha: f64,
    /// Semigroup decay exponent of `‖S(u)Φ‖_γ`.
    pub gamma: f64,
    /// Fractional-power order.
    pub delta: f64,
    /// Factorization exponent.
    pub beta: f64,
    /// Lebesgue exponent.
    pub p: f64,
    /// Candidate Hölder order.
    pub nu: f64,
}

impl Default for HolderParameters {
    fn default() -> Self {
        Self {
            alpha: 0.25,
            gamma: 0.25,
            delta: 0.0,
            beta: 0.1,
            p: 2.0,
            nu: 0.0,
        }
    }
}

impl HolderParameters {
    /// `0 < β` and `β + δ < α + 1/2`.
    pub fn check_factorization(&self) -> Result<()> {
        if !(self.beta > 0.0 && self.beta < 1.0) || self.delta < 0.0 {
            return Err(Error::Admissibility {
                inequality: "0 < β < 1, δ >= 0",
                detail: format!("β = {}, δ = {}", self.beta, self.delta),
            });
        }
        if !(self.beta + self.delta < self.alpha + 0.5) {
            return Err(Error::Admissibility {
                inequality: "β + δ < α + 1/2",
                detail: format!("β + δ = {}, α + 1/2 = {}", self.beta + self.delta, self.alpha + 0.5),
            });
        }
        Ok(())
    }

    /// `γ ∈ [0, α + 1/2)`.
    pub fn check_decay(&self) -> Result<()> {
        if !(self.gamma >= 0.0 && self.gamma < self.alpha + 0.5) {
            return Err(Error::Admissibility {
                inequality: "0 <= γ < α + 1/2",
                detail: format!("γ = {}, α + 1/2 = {}", self.gamma, self.alpha + 0.5),
            });
        }
        Ok(())
    }
}

/// Source of driver paths: a sampler regenerated on demand or stored
/// coordinates.
#[derive(Debug, Clone, Copy)]
pub enum Driver<'a> {
    Sampled {
        sampler: &'a DriverSampler,
        seed: u64,
        replicas: usize,
    },
    Paths(&'a CylindricalEnsemble),
}

impl Driver<'_> {
    pub fn grid(&self) -> &TimeGrid<f64> {
        match self {
            Driver::Sampled { sampler, .. } => sampler.grid(),
            Driver::Paths(c) => &c.coordinates[0].grid,
        }
    }

    pub fn replicas(&self) -> usize {
        match self {
            Driver::Sampled { replicas, .. } => *replicas,
            Driver::Paths(c) => c.coordinates[0].replicas(),
        }
    }

    pub fn seed(&self) -> u64 {
        match self {
            Driver::Sampled { seed, .. } => *seed,
            Driver::Paths(c) => c.coordinates[0].seed,
        }
    }

    /// Available coordinates; `None` when unbounded.
    pub fn coordinates(&self) -> Option<usize> {
        match self {
            Driver::Sampled { .. } => None,
            Driver::Paths(c) => Some(c.modes()),
        }
    }

    pub fn hurst(&self) -> Result<f64> {
        match self {
            Driver::Sampled { sampler, .. } => Ok(sampler.spec().hurst()),
            Driver::Paths(c) => c.coordinates[0]
                .family
                .hurst()
                .ok_or_else(|| Error::Invalid("driver paths carry no Hurst index".into())),
        }
    }

    pub fn spec(&self) -> Option<DriverSpec> {
        match self {
            Driver::Sampled { sampler, .. } => Some(sampler.spec()),
            Driver::Paths(_) => None,
        }
    }

    /// Paths of coordinate `coord`, replicas `first..first + count`.
    pub fn block(&self, coord: usize, first: usize, count: usize) -> Array2<f64> {
        match self {
            Driver::Sampled { sampler, seed, .. } => sampler.sample_block(*seed, coord, first, count),
            Driver::Paths(c) => c.coordinates[coord]
                .values
                .slice(s![first..first + count, ..])
                .to_owned(),
        }
    }

    pub(crate) fn check(&self, needed: usize) -> Result<()> {
        if self.replicas() == 0 {
            return Err(Error::Invalid("driver without replicas".into()));
        }
        if let Some(have) = self.coordinates() {
            if have < needed {
                return Err(Error::Invalid(format!(
                    "{needed} driver coordinates needed, {have} given"
                )));
            }
        }
        Ok(())
    }
}

/// Inputs of [`solve_mild`].
#[derive(Debug, Clone)]
pub struct MildProblem<'a> {
    pub model: &'a SpectralModel,
    pub noise: NoiseOperator,
    /// Initial coefficients; empty means zero.
    pub x0: Vec<f64>,
    pub refinement: usize,
    /// Grid indices at which coefficients are stored.
    pub record: Vec<usize>,
    /// Largest accepted truncation drift; `None` reports it without failing.
    pub truncation_limit: Option<f64>,
}

impl MildProblem<'_> {
    pub(crate) fn validate(&self, grid: &TimeGrid<f64>) -> Result<()> {
        self.noise.validate(self.model)?;
        if !self.x0.is_empty() && self.x0.len() != self.model.modes() {
            return Err(Error::Invalid(format!(
                "{} initial coefficients for {} modes",
                self.x0.len(),
                self.model.modes()
            )));
        }
        if self.refinement == 0 {
            return Err(Error::Invalid("refinement must be >= 1".into()));
        }
        if self.record.is_empty() || self.record.iter().any(|&j| j > grid.steps()) {
            return Err(Error::Invalid("record indices must be non-empty grid indices".into()));
        }
        Ok(())
    }

    pub(crate) fn initial(&self, k: usize) -> f64 {
        self.x0.get(k).copied().unwrap_or(0.0)
    }
}

/// Mode coefficients `X_k(t)` at the recorded times.
#[derive(Debug, Clone, PartialEq)]
pub struct MildSolutionField {
    pub model: SpectralModel,
    pub times: Vec<f64>,
    pub time_indices: Vec<usize>,
    /// `replicas x modes x recorded times`.
    pub values: Array3<f64>,
    pub driver: Option<DriverSpec>,
    pub hurst: f64,
    pub seed: u64,
    /// Largest refinement-doubling drift of the convolution weights.
    pub refinement_drift: f64,
    /// Drift of `E‖X_T‖²_{L²}` under mode doubling.
    pub truncation_drift: f64,
}

impl MildSolutionField {
    pub fn replicas(&self) -> usize {
        self.values.shape()[0]
    }

    pub fn modes(&self) -> usize {
        self.values.shape()[1]
    }

    /// Coefficients of replica `r` at recorded time `j`.
    pub fn coefficients(&self, r: usize, j: usize) -> Array1<f64> {
        self.values.slice(s![r, .., j]).to_owned()
    }

    /// Node values of replica `r` at recorded time `j`.
    pub fn field(&self, r: usize, j: usize) -> Array1<f64> {
        self.model.synthesize(self.values.slice(s![r, .., j]))
    }

    /// Rows `replica,time,node,value` for the first `replicas` replicas.
    pub fn write_csv<W: Write>(&self, mut out: W, replicas: usize) -> Result<()> {
        writeln!(out, "replica,time,node,value")?;
        for r in 0..replicas.min(self.replicas()) {
            for (j, t) in self.times.iter().enumerate() {
                let f = self.field(r, j);
                for (x, v) in self.model.points().iter().zip(f.iter()) {
                    writeln!(out, "{r},{t:.16e},{x:.16e},{v:.16e}")?;
                }
            }
        }
        Ok(())
    }

    /// One JSON header line, then the coefficient block as little-endian
    /// `f64` in `replica, mode, time` order.
    pub fn write_binary<W: Write>(&self, mut out: W) -> Result<()> {
        let header = serde_json::json!({
            "shape": self.values.shape(),
            "order": ["replica", "mode", "time"],
            "times": self.times,
            "eigenvalues": self.model.eigenvalues(),
            "driver": self.driver,
            "hurst": self.hurst,
            "seed": self.seed,
            "dtype": "<f8",
        });
        serde_json::to_writer(&mut out, &header)?;
        out.write_all(b"\n")?;
        for v in self.values.iter() {
            out.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }
}

/// Mean of `e^{-x(1 - l/m)}`, `l = 0..m`: the refined left-point weight of
/// `e^{-λ(t_{n+1} - r)}` over one cell, `x = λh`.
pub(crate) fn refined_weight(x: f64, m: usize) -> f64 {
    if x == 0.0 {
        return 1.0;
    }
    let m = m as f64;
    -(-x).exp_m1() / (m * (x / m).exp_m1())
}

/// `H(2H-1) ∫_0^s ∫_0^t e^{-λ(s-u)} e^{-λ(t-v)} |u-v|^{2H-2} du dv`, the
/// covariance of `∫_0^s e^{-λ(s-r)} db_r` and `∫_0^t e^{-λ(t-r)} db_r`.
///
/// With `v = u + w` the `u`-integral is elementary, leaving a single
/// integral in `w` with the singular weight `|w|^{2H-2}`.
pub fn mode_covariance(lambda: f64, hurst: f64, s: f64, t: f64) -> Result<f64> {
    if !(hurst > 0.5 && hurst < 1.0) || lambda < 0.0 || s < 0.0 || t < 0.0 {
        return Err(Error::Invalid(format!("λ = {lambda}, H = {hurst}, s = {s}, t = {t}")));
    }
    if s == 0.0 || t == 0.0 {
        return Ok(0.0);
    }
    let inner = |w: f64| -> f64 {
        let lo = (-w).max(0.0);
        let hi = s.min(t - w);
        if hi <= lo {
            return 0.0;
        }
        if lambda == 0.0 {
            return hi - lo;
        }
        let e = s + t - w - 2.0 * hi;
        (-lambda * e).exp() * -(-2.0 * lambda * (hi - lo)).exp_m1() / (2.0 * lambda)
    };
    let beta = 2.0 * hurst - 2.0;
    let q = 1.0 / (2.0 * hurst - 1.0);
    let tol = Tolerance {
        abs: 1e-300,
        rel: 1e-10,
        max_intervals: 4000,
    };
    let f = |w: f64| w.abs().powf(beta) * inner(w);
    // The upper limit of the u-integral switches at w = t - s.
    let mut cuts = vec![-s, 0.0, t];
    if t - s > -s && t - s < t && t != s {
        cuts.push(t - s);
    }
    cuts.sort_by(f64::total_cmp);
    let mut total = 0.0;
    for w in cuts.windows(2) {
        let (a, b) = (w[0], w[1]);
        let est = if b == 0.0 {
            adaptive_singular(f, a, b, q, Endpoint::Right, tol)?
        } else if a == 0.0 {
            adaptive_singular(f, a, b, q, Endpoint::Left, tol)?
        } else {
            adaptive_singular(f, a, b, 2.0, Endpoint::Both, tol)?
        };
        total += est.value;
    }
    Ok(hurst * (2.0 * hurst - 1.0) * total)
}

/// `E‖X_t‖²_{L²} = Σ_k (e^{-λ_k t} x0_k)² + c_k² Var(∫_0^t e^{-λ_k(t-r)} db_r)`.
pub fn field_energy_oracle(
    model: &SpectralModel,
    noise: &NoiseOperator,
    hurst: f64,
    t: f64,
    x0: &[f64],
) -> Result<f64> {
    let c = noise.coefficients(model);
    model
        .eigenvalues()
        .par_iter()
        .enumerate()
        .map(|(k, &l)| {
            let det = (-l * t).exp() * x0.get(k).copied().unwrap_or(0.0);
            let stoch = if c[k] == 0.0 {
                0.0
            } else {
                c[k] * c[k] * mode_covariance(l, hurst, t, t)?
            };
            Ok(det * det + stoch)
        })
        .collect::<Result<Vec<f64>>>()
        .map(|v| v.iter().sum())
}

/// Decay factors and refined weights per mode and step.
struct ConvolutionWeights {
    decay: Array2<f64>,
    weight: Array2<f64>,
    drift: f64,
}

fn convolution_weights(eigenvalues: &[f64], grid: &TimeGrid<f64>, refinement: usize) -> Result<ConvolutionWeights> {
    let steps: Vec<f64> = grid.points().windows(2).map(|w| w[1] - w[0]).collect();
    let modes = eigenvalues.len();
    let mut decay = Array2::zeros((modes, steps.len()));
    let mut weight = Array2::zeros((modes, steps.len()));
    let mut drift = 0.0f64;
    for (k, &l) in eigenvalues.iter().enumerate() {
        for (n, &h) in steps.iter().enumerate() {
            let x = l * h;
            let coarse = refined_weight(x, refinement);
            let fine = refined_weight(x, 2 * refinement);
            drift = drift.max((coarse / fine - 1.0).abs());
            decay[[k, n]] = (-x).exp();
            weight[[k, n]] = coarse;
        }
    }
    if drift > PATHWISE_LIMIT {
        return Err(Error::Convergence {
            what: "Riemann-Stieltjes refinement",
            drift,
            limit: PATHWISE_LIMIT,
        });
    }
    Ok(ConvolutionWeights { decay, weight, drift })
}

/// Spectral mild solution: per mode and replica
/// `X_k(t) = e^{-λ_k t} x0_k + c_k ∫_0^t e^{-λ_k(t-r)} db_r`, the integral
/// a refined left-point sum against the linearly interpolated driver.
pub fn solve_mild(problem: &MildProblem<'_>, driver: Driver<'_>) -> Result<MildSolutionField> {
    let grid = driver.grid().clone();
    problem.validate(&grid)?;
    let model = problem.model;
    let modes = model.modes();
    let noise = &problem.noise;
    driver.check(noise.drivers(modes))?;
    let hurst = driver.hurst()?;
    let lambdas = model.eigenvalues();
    let coeff = noise.coefficients(model);
    let weights = convolution_weights(lambdas, &grid, problem.refinement)?;

    let horizon = grid.horizon();
    let truncation_drift = if noise.is_zero(model) {
        0.0
    } else {
        let coarse = field_energy_oracle(model, noise, hurst, horizon, &problem.x0)?;
        let fine = field_energy_oracle(&model.refined()?, noise, hurst, horizon, &problem.x0)?;
        let drift = (coarse / fine - 1.0).abs();
        if let Some(limit) = problem.truncation_limit {
            if drift > limit {
                return Err(Error::Convergence {
                    what: "mild solution mode truncation",
                    drift,
                    limit,
                });
            }
        }
        drift
    };

    let record = &problem.record;
    let times: Vec<f64> = record.iter().map(|&j| grid.points()[j]).collect();
    let mut order: Vec<usize> = (0..record.len()).collect();
    order.sort_by_key(|&j| record[j]);
    let replicas = driver.replicas();
    let steps = grid.steps();
    let starts: Vec<usize> = (0..replicas).step_by(BLOCK).collect();
    let blocks: Vec<Array3<f64>> = starts
        .par_iter()
        .map(|&first| {
            let count = BLOCK.min(replicas - first);
            let mut out = Array3::<f64>::zeros((count, modes, record.len()));
            for d in 0..noise.drivers(modes) {
                let paths = if (0..modes).any(|k| noise.driver_of(k) == d && coeff[k] != 0.0) {
                    driver.block(d, first, count)
                } else {
                    continue;
                };
                for k in (0..modes).filter(|&k| noise.driver_of(k) == d && coeff[k] != 0.0) {
                    let dec = weights.decay.row(k);
                    let w = weights.weight.row(k);
                    for r in 0..count {
                        let path = paths.row(r);
                        let mut acc = 0.0;
                        let mut next = 0;
                        for n in 0..=steps {
                            while next < order.len() && record[order[next]] == n {
                                out[[r, k, order[next]]] = coeff[k] * acc;
                                next += 1;
                            }
                            if n < steps {
                                acc = dec[n] * acc + w[n] * (path[n + 1] - path[n]);
                            }
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
        refinement_drift: weights.drift,
        truncation_drift,
    })
}

/// `‖Σ_k λ_k^δ X_k(t) e_k‖_{L^p}` per replica at recorded time `j`.
pub fn fractional_power_norm(field: &MildSolutionField, delta: f64, p: f64, j: usize) -> Result<Vec<f64>> {
    if delta < 0.0 {
        return Err(Error::ParameterDomain {
            name: "δ",
            value: delta,
            constraint: "δ >= 0",
        });
    }
    if j >= field.times.len() {
        return Err(Error::Invalid(format!("recorded time index {j}")));
    }
    let scale: Array1<f64> = field.model.eigenvalues().iter().map(|l| l.powf(delta)).collect();
    Ok((0..field.replicas())
        .into_par_iter()
        .map(|r| {
            let c = &field.values.slice(s![r, .., j]) * &scale;
            field.model.lp_norm(field.model.synthesize(c.view()).view(), p)
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::processes::simulate_fbm;
    use crate::spde::build_model;
    use crate::wiener_integral::riemann_stieltjes;

    #[test]
    fn refined_weight_is_the_left_point_average() {
        for (x, m) in [(0.3, 4), (5.0, 16), (1e-9, 2)] {
            let direct: f64 = (0..m).map(|l| (-x * (1.0 - l as f64 / m as f64)).exp()).sum::<f64>() / m as f64;
            assert!((refined_weight(x, m) - direct).abs() < 1e-12);
        }
    }

    #[test]
    fn recursion_equals_generic_pathwise_sum() {
        let grid = TimeGrid::uniform(1.0, 32).unwrap();
        let e = simulate_fbm(0.7, &grid, 1, 4).unwrap();
        let model = build_model(std::f64::consts::PI, 1, 3, 12).unwrap();
        let cyl = CylindricalEnsemble {
            coordinates: vec![e.clone(), e.clone(), e.clone()],
        };
        let problem = MildProblem {
            model: &model,
            noise: NoiseOperator::white(),
            x0: vec![],
            refinement: 8,
            record: vec![20, 32],
            truncation_limit: None,
        };
        let field = solve_mild(&problem, Driver::Paths(&cyl)).unwrap();
        for k in 0..3 {
            let lambda = model.eigenvalues()[k];
            for (j, &idx) in [20usize, 32].iter().enumerate() {
                let t = grid.points()[idx];
                let rs = riemann_stieltjes(|r| (-lambda * (t - r)).exp(), &grid, e.path(0), idx, 8).unwrap();
                assert!((field.values[[0, k, j]] - rs.value).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn unsorted_record_indices() {
        let grid = TimeGrid::uniform(1.0, 16).unwrap();
        let e = simulate_fbm(0.7, &grid, 2, 4).unwrap();
        let model = build_model(std::f64::consts::PI, 1, 1, 4).unwrap();
        let cyl = CylindricalEnsemble { coordinates: vec![e] };
        let mut problem = MildProblem {
            model: &model,
            noise: NoiseOperator::white(),
            x0: vec![],
            refinement: 4,
            record: vec![16, 4, 8],
            truncation_limit: None,
        };
        let a = solve_mild(&problem, Driver::Paths(&cyl)).unwrap();
        problem.record = vec![4, 8, 16];
        let b = solve_mild(&problem, Driver::Paths(&cyl)).unwrap();
        for r in 0..2 {
            assert_eq!(a.values[[r, 0, 0]], b.values[[r, 0, 2]]);
            assert_eq!(a.values[[r, 0, 1]], b.values[[r, 0, 0]]);
            assert_eq!(a.values[[r, 0, 2]], b.values[[r, 0, 1]]);
        }
    }

    #[test]
    fn zero_mode_covariance_is_the_fbm_covariance() {
        for (s, t) in [(0.3, 0.8), (0.8, 0.3), (0.5, 0.5)] {
            let c = mode_covariance(0.0, 0.75, s, t).unwrap();
            let r = 0.5 * (s.powf(1.5) + t.powf(1.5) - (t - s).abs().powf(1.5));
            assert!((c - r).abs() < 1e-8, "{s} {t}: {c} {r}");
        }
    }

    #[test]
    fn factorization_parameters() {
        let mut p = HolderParameters {
            beta: 0.2,
            delta: 0.2,
            ..Default::default()
        };
        assert!(p.check_factorization().is_ok());
        p.delta = 0.6;
        assert!(matches!(p.check_factorization(), Err(Error::Admissibility { .. })));
        p.gamma = 0.8;
        assert!(p.check_decay().is_err());
    }
}
