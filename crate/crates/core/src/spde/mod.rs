//! Spectral-Galerkin mild solutions of `dX = AX dt + Φ dB` on `(0, L)`
//! with Dirichlet conditions.
//!
//! `A` has eigenpairs `λ_k = (kπ/L)^{2m}`, `e_k(x) = √(2/L) sin(kπx/L)`;
//! `m > 1` is a spectral surrogate for an order-`2m` operator. Spatial
//! integrals use the trapezoid rule on `nodes` equal cells, which is exact
//! for products of the retained sines.

mod elementary;
mod factorization;
mod mild;

use ndarray::{Array1, Array2, ArrayView1};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stats::linear_fit;

pub use elementary::{
    elementary_operator_check, gaussian_moment, ElementaryOperator, ElementaryReport, OperatorResult,
};
pub use factorization::{factorization_constant, factorization_reconstruct, round_trip_error, RoundTrip};
pub use mild::{
    field_energy_oracle, fractional_power_norm, mode_covariance, solve_mild, Driver, HolderParameters, MildProblem,
    MildSolutionField, DEFAULT_REFINEMENT, FIELD_TRUNCATION_LIMIT,
};

/// Largest admissible drift of a γ-norm when the modes are doubled.
pub const GAMMA_TRUNCATION_LIMIT: f64 = 0.01;

#[derive(Debug, Clone, PartialEq)]
pub struct SpectralModel {
    length: f64,
    order: u32,
    eigenvalues: Vec<f64>,
    /// Interior nodes `jL/nodes`, `j = 1..nodes`.
    points: Vec<f64>,
    cell: f64,
    /// `basis[[k, j]] = e_{k+1}(x_j)`.
    basis: Array2<f64>,
    gram_error: f64,
}

/// `λ_k = (kπ/L)^{2m}`, `k = 1..=modes`.
pub fn dirichlet_spectrum(length: f64, order: u32, modes: usize) -> Vec<f64> {
    (1..=modes)
        .map(|k| (k as f64 * std::f64::consts::PI / length).powi(2 * order as i32))
        .collect()
}

fn sine_mode(length: f64, k: usize, x: f64) -> f64 {
    (2.0 / length).sqrt() * (k as f64 * std::f64::consts::PI * x / length).sin()
}

/// Builds and validates the model; `nodes >= 4 modes`.
pub fn build_model(length: f64, order: u32, modes: usize, nodes: usize) -> Result<SpectralModel> {
    if !(length > 0.0) || order == 0 || modes == 0 {
        return Err(Error::Invalid(format!("length {length}, order {order}, modes {modes}")));
    }
    if nodes < 4 * modes {
        return Err(Error::Admissibility {
            inequality: "nodes >= 4 modes",
            detail: format!("nodes = {nodes}, modes = {modes}"),
        });
    }
    let cell = length / nodes as f64;
    let points: Vec<f64> = (1..nodes).map(|j| j as f64 * cell).collect();
    let eigenvalues = dirichlet_spectrum(length, order, modes);
    let norm = (2.0 / length).sqrt();
    let basis = Array2::from_shape_fn((modes, points.len()), |(k, j)| {
        norm * ((k + 1) as f64 * std::f64::consts::PI * points[j] / length).sin()
    });
    let gram = basis.dot(&basis.t()) * cell;
    let gram_error = gram
        .indexed_iter()
        .map(|((i, j), g)| (g - if i == j { 1.0 } else { 0.0 }).abs())
        .fold(0.0, f64::max);
    if gram_error > 1e-6 {
        return Err(Error::Numeric {
            what: "eigenfunction orthonormality",
            achieved: gram_error,
            target: 1e-6,
        });
    }
    Ok(SpectralModel {
        length,
        order,
        eigenvalues,
        points,
        cell,
        basis,
        gram_error,
    })
}

impl SpectralModel {
    pub fn length(&self) -> f64 {
        self.length
    }

    pub fn order(&self) -> u32 {
        self.order
    }

    pub fn modes(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn nodes(&self) -> usize {
        self.points.len() + 1
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    /// Trapezoid weight shared by every interior node.
    pub fn weight(&self) -> f64 {
        self.cell
    }

    pub fn basis(&self) -> &Array2<f64> {
        &self.basis
    }

    pub fn gram_error(&self) -> f64 {
        self.gram_error
    }

    /// `e_k(x)` for `k >= 1`.
    pub fn eigenfunction(&self, k: usize, x: f64) -> f64 {
        sine_mode(self.length, k, x)
    }

    /// Twice the modes and nodes.
    pub fn refined(&self) -> Result<Self> {
        build_model(self.length, self.order, 2 * self.modes(), 2 * self.nodes())
    }

    /// Node values of `Σ_k c_k e_k`.
    pub fn synthesize(&self, coefficients: ArrayView1<'_, f64>) -> Array1<f64> {
        coefficients.dot(&self.basis)
    }

    /// `(∫ |f|^p)^{1/p}` of node values.
    pub fn lp_norm(&self, values: ArrayView1<'_, f64>, p: f64) -> f64 {
        (values.iter().map(|v| v.abs().powf(p)).sum::<f64>() * self.cell).powf(1.0 / p)
    }
}

/// Mode coefficients `φ_k` of a diagonal noise operator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "kebab-case")]
pub enum CoefficientRule {
    Constant {
        value: f64,
    },
    /// `φ_k = e^{-λ_k}`.
    Smoothed,
    /// Listed coefficients; modes beyond the list get 0.
    Explicit {
        values: Vec<f64>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum NoiseOperator {
    /// `Φ = δ_z` driven by one scalar process.
    Pointwise { location: f64 },
    /// `Φ e_k = φ_k e_k`, one driver per mode.
    Diagonal(CoefficientRule),
}

impl NoiseOperator {
    pub fn white() -> Self {
        NoiseOperator::Diagonal(CoefficientRule::Constant { value: 1.0 })
    }

    pub fn zero() -> Self {
        NoiseOperator::Diagonal(CoefficientRule::Constant { value: 0.0 })
    }

    pub fn validate(&self, model: &SpectralModel) -> Result<()> {
        if let NoiseOperator::Pointwise { location } = self {
            if !(*location > 0.0 && *location < model.length) {
                return Err(Error::ParameterDomain {
                    name: "z",
                    value: *location,
                    constraint: "0 < z < L",
                });
            }
        }
        Ok(())
    }

    /// `c_k`: `e_k(z)` for pointwise noise, `φ_k` for diagonal noise.
    pub fn coefficients(&self, model: &SpectralModel) -> Vec<f64> {
        self.coefficients_on(model.length, model.eigenvalues())
    }

    /// Coefficients for the spectrum `eigenvalues` on `(0, length)`,
    /// without building a spatial basis.
    pub fn coefficients_on(&self, length: f64, eigenvalues: &[f64]) -> Vec<f64> {
        let modes = eigenvalues.len();
        match self {
            NoiseOperator::Pointwise { location } => (1..=modes).map(|k| sine_mode(length, k, *location)).collect(),
            NoiseOperator::Diagonal(CoefficientRule::Constant { value }) => vec![*value; modes],
            NoiseOperator::Diagonal(CoefficientRule::Smoothed) => eigenvalues.iter().map(|l| (-l).exp()).collect(),
            NoiseOperator::Diagonal(CoefficientRule::Explicit { values }) => {
                (0..modes).map(|k| values.get(k).copied().unwrap_or(0.0)).collect()
            }
        }
    }

    /// Driver coordinate feeding mode index `k`.
    pub fn driver_of(&self, k: usize) -> usize {
        match self {
            NoiseOperator::Pointwise { .. } => 0,
            NoiseOperator::Diagonal(_) => k,
        }
    }

    pub fn drivers(&self, modes: usize) -> usize {
        match self {
            NoiseOperator::Pointwise { .. } => 1,
            NoiseOperator::Diagonal(_) => modes,
        }
    }

    pub fn is_zero(&self, model: &SpectralModel) -> bool {
        self.coefficients(model).iter().all(|c| *c == 0.0)
    }
}

/// `‖S(u)Φ‖_{γ(U, L^p)}` on a fixed model, through the square function.
fn gamma_norm_on(model: &SpectralModel, noise: &NoiseOperator, u: f64, p: f64) -> f64 {
    let c = noise.coefficients(model);
    let damped: Array1<f64> = model
        .eigenvalues()
        .iter()
        .zip(&c)
        .map(|(l, c)| (-l * u).exp() * c)
        .collect();
    match noise {
        NoiseOperator::Pointwise { .. } => model.lp_norm(model.synthesize(damped.view()).view(), p),
        NoiseOperator::Diagonal(_) => {
            let sq = damped.mapv(|v| v * v);
            let pointwise = sq.dot(&model.basis().mapv(|e| e * e)).mapv(f64::sqrt);
            model.lp_norm(pointwise.view(), p)
        }
    }
}

/// A γ-radonifying norm with its mode-doubling drift.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GammaNorm {
    pub value: f64,
    pub truncation_drift: f64,
}

fn check_gamma_inputs(u: f64, p: f64) -> Result<()> {
    if !(u > 0.0) {
        return Err(Error::ParameterDomain {
            name: "u",
            value: u,
            constraint: "u > 0",
        });
    }
    if !(p >= 1.0) {
        return Err(Error::ParameterDomain {
            name: "p",
            value: p,
            constraint: "p >= 1",
        });
    }
    Ok(())
}

fn gamma_norm_pair(
    model: &SpectralModel,
    refined: &SpectralModel,
    noise: &NoiseOperator,
    u: f64,
    p: f64,
) -> Result<GammaNorm> {
    let coarse = gamma_norm_on(model, noise, u, p);
    let fine = gamma_norm_on(refined, noise, u, p);
    let truncation_drift = if fine > 0.0 { (coarse / fine - 1.0).abs() } else { 0.0 };
    if truncation_drift > GAMMA_TRUNCATION_LIMIT {
        return Err(Error::Convergence {
            what: "gamma norm mode truncation",
            drift: truncation_drift,
            limit: GAMMA_TRUNCATION_LIMIT,
        });
    }
    Ok(GammaNorm {
        value: coarse,
        truncation_drift,
    })
}

/// `(∫_0^L ‖r_u(x)‖_U^p dx)^{1/p}` with `r_u` the kernel of `S(u)Φ`,
/// certified against a model with twice the modes.
pub fn gamma_radonifying_norm(model: &SpectralModel, noise: &NoiseOperator, u: f64, p: f64) -> Result<GammaNorm> {
    check_gamma_inputs(u, p)?;
    noise.validate(model)?;
    gamma_norm_pair(model, &model.refined()?, noise, u, p)
}

/// Least-squares decay exponent of `‖S(u)Φ‖_γ ≲ u^{-γ}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GammaDecay {
    pub gamma: f64,
    pub se: f64,
    pub r_squared: f64,
    /// `R² < 0.99`.
    pub poor_fit: bool,
    /// `γ̂ < α + 1/2 - 0.02`.
    pub admissible: bool,
    pub times: Vec<f64>,
    pub norms: Vec<GammaNorm>,
}

/// Fits `-log ‖S(u)Φ‖_γ` against `log u` over `u_grid` (at least two
/// decades) and tests admissibility for a driver of regularity `alpha`.
pub fn estimate_gamma_decay(
    model: &SpectralModel,
    noise: &NoiseOperator,
    p: f64,
    u_grid: &[f64],
    alpha: f64,
) -> Result<GammaDecay> {
    if u_grid.len() < 3 {
        return Err(Error::InsufficientData(format!("{} decay times", u_grid.len())));
    }
    let (lo, hi) = u_grid
        .iter()
        .fold((f64::INFINITY, 0.0f64), |(a, b), &u| (a.min(u), b.max(u)));
    if !(hi / lo >= 100.0 * (1.0 - 1e-12)) {
        return Err(Error::Admissibility {
            inequality: "u grid spans >= 2 decades",
            detail: format!("[{lo:e}, {hi:e}]"),
        });
    }
    for &u in u_grid {
        check_gamma_inputs(u, p)?;
    }
    noise.validate(model)?;
    let refined = model.refined()?;
    let norms = u_grid
        .par_iter()
        .map(|&u| gamma_norm_pair(model, &refined, noise, u, p))
        .collect::<Result<Vec<_>>>()?;
    let xs: Vec<f64> = u_grid.iter().map(|u| u.ln()).collect();
    let ys: Vec<f64> = norms.iter().map(|n| -n.value.ln()).collect();
    if ys.iter().any(|y| !y.is_finite()) {
        return Err(Error::UndefinedRatio);
    }
    let fit = linear_fit(&xs, &ys);
    let gamma = fit.slope;
    Ok(GammaDecay {
        gamma,
        se: fit.slope_se,
        r_squared: fit.r_squared,
        poor_fit: fit.r_squared < 0.99,
        admissible: gamma < alpha + 0.5 - 0.02,
        times: u_grid.to_vec(),
        norms,
    })
}

/// `n` log-spaced times from `lo` to `hi`.
pub fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    let (a, b) = (lo.ln(), hi.ln());
    (0..n)
        .map(|i| (a + (b - a) * i as f64 / (n - 1).max(1) as f64).exp())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spectra_of_both_orders() {
        let pi = std::f64::consts::PI;
        let m1 = build_model(pi, 1, 4, 16).unwrap();
        assert_eq!(m1.eigenvalues().len(), 4);
        for (k, l) in m1.eigenvalues().iter().enumerate() {
            assert!((l - ((k + 1) as f64).powi(2)).abs() < 1e-12);
        }
        let m2 = build_model(pi, 2, 4, 16).unwrap();
        assert!((m2.eigenvalues()[2] - 81.0).abs() < 1e-10);
        assert!(build_model(pi, 1, 8, 31).is_err());
    }

    #[test]
    fn white_noise_norm_collapses_to_a_sum() {
        let model = build_model(std::f64::consts::PI, 1, 64, 256).unwrap();
        let u = 0.01;
        let direct = gamma_norm_on(&model, &NoiseOperator::white(), u, 2.0);
        let sum: f64 = model.eigenvalues().iter().map(|l| (-2.0 * l * u).exp()).sum();
        assert!((direct - sum.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn pointwise_location_is_validated() {
        let model = build_model(1.0, 1, 4, 16).unwrap();
        let bad = NoiseOperator::Pointwise { location: 1.0 };
        assert!(gamma_radonifying_norm(&model, &bad, 0.1, 2.0).is_err());
        assert!(gamma_radonifying_norm(&model, &NoiseOperator::white(), 0.0, 2.0).is_err());
    }

    #[test]
    fn truncation_failure_is_reported() {
        let model = build_model(std::f64::consts::PI, 1, 8, 32).unwrap();
        let err = gamma_radonifying_norm(&model, &NoiseOperator::white(), 1e-4, 2.0).unwrap_err();
        assert!(matches!(err, Error::Convergence { .. }));
    }
}
