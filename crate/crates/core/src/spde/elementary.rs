//! Both sides of the norm equivalence for elementary operators
//! `G = Σ_k g_k ⟨·, e_k⟩ f_k` and the `L^{2/(1+2α)}`-in-time bound.

use ndarray::Array1;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::gamma;

use super::SpectralModel;
use crate::error::{Error, Result};
use crate::kernels::VolterraKernel;
use crate::processes::{CylindricalEnsemble, TimeGrid};
use crate::rng::normal;
use crate::stats::{mean_se, McEstimate};
use crate::wiener_integral::{elementary_integrals, fbm_embedding_constant, integral_variance, StepFunction};

/// Terms `(g_k, f_k)`; `f_k` holds values at the model's nodes and term
/// `k` is driven by coordinate `k`.
#[derive(Debug, Clone, PartialEq)]
pub struct ElementaryOperator {
    pub terms: Vec<(StepFunction<f64>, Array1<f64>)>,
}

impl ElementaryOperator {
    /// Random steps on `grid` and spatial factors mixing the first
    /// `spatial_modes` eigenfunctions with standard normal weights.
    pub fn random<R: Rng + ?Sized>(
        model: &SpectralModel,
        grid: &TimeGrid<f64>,
        terms: usize,
        pieces: usize,
        spatial_modes: usize,
        rng: &mut R,
    ) -> Result<Self> {
        let used = spatial_modes.min(model.modes());
        let terms = (0..terms)
            .map(|_| {
                let g = StepFunction::random_on_grid(grid, pieces, rng)?;
                let mut c = Array1::<f64>::zeros(model.modes());
                for v in c.iter_mut().take(used) {
                    *v = normal(rng);
                }
                Ok((g, model.synthesize(c.view())))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { terms })
    }
}

/// `(E|Z|^p)^{1/p}` for a standard normal `Z`.
pub fn gaussian_moment(p: f64) -> f64 {
    (2f64.powf(p / 2.0) * gamma((p + 1.0) / 2.0) / std::f64::consts::PI.sqrt()).powf(1.0 / p)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OperatorResult {
    /// `‖I_T(G)‖_{L^q(Ω; L^p)}`.
    pub stochastic_norm: McEstimate,
    /// `(∫_D (Σ_k ‖g_k‖²_𝒟 f_k²)^{p/2})^{1/p}`.
    pub square_function: f64,
    /// `‖G‖_{L^{2/(1+2α)}(0,T; γ(U, L^p))}` with the square-function norm.
    pub time_norm: f64,
    /// `stochastic_norm / square_function`.
    pub ratio: McEstimate,
    /// `stochastic_norm / time_norm`.
    pub bound_ratio: McEstimate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ElementaryReport {
    pub p: f64,
    pub q: f64,
    pub results: Vec<OperatorResult>,
    /// Mean equivalence ratio over the non-zero operators.
    pub mean_ratio: f64,
    /// `max |ratio / mean - 1|`.
    pub max_deviation: f64,
    /// `(E|Z|^{max(p,q)})^{1/max(p,q)} √C_emb` for fractional kernels.
    pub bound_constant: Option<f64>,
    pub max_bound_ratio: f64,
    pub stable: bool,
    pub bound_holds: bool,
}

/// Allowed spread of the equivalence ratio across operators.
pub const RATIO_STABILITY: f64 = 0.10;

fn operator_result<K: VolterraKernel<f64> + ?Sized>(
    model: &SpectralModel,
    kernel: &K,
    op: &ElementaryOperator,
    driver: &CylindricalEnsemble,
    p: f64,
    q: f64,
) -> Result<OperatorResult> {
    let replicas = driver.coordinates[0].replicas();
    let nodes = model.points().len();
    let mut fields = vec![Array1::<f64>::zeros(nodes); replicas];
    let mut norms_d = Vec::with_capacity(op.terms.len());
    for (k, (g, f)) in op.terms.iter().enumerate() {
        if f.len() != nodes {
            return Err(Error::Invalid(format!(
                "spatial factor with {} of {nodes} nodes",
                f.len()
            )));
        }
        let z = elementary_integrals(g, &driver.coordinates[k])?;
        for (field, zk) in fields.iter_mut().zip(&z) {
            field.scaled_add(*zk, f);
        }
        norms_d.push(integral_variance(g, kernel)?.value);
    }
    let powers: Vec<f64> = fields.iter().map(|f| model.lp_norm(f.view(), p).powf(q)).collect();
    let moment = mean_se(&powers);
    let stochastic_norm = if moment.value > 0.0 {
        let v = moment.value.powf(1.0 / q);
        McEstimate {
            value: v,
            se: v / (q * moment.value) * moment.se,
        }
    } else {
        McEstimate { value: 0.0, se: 0.0 }
    };

    let mut density = Array1::<f64>::zeros(nodes);
    for ((_, f), nd) in op.terms.iter().zip(&norms_d) {
        density.scaled_add(*nd, &f.mapv(|v| v * v));
    }
    let square_function = model.lp_norm(density.mapv(f64::sqrt).view(), p);

    let r = 2.0 / (1.0 + 2.0 * kernel.alpha());
    let mut cuts: Vec<f64> = op.terms.iter().flat_map(|(g, _)| g.breakpoints().to_vec()).collect();
    cuts.sort_by(f64::total_cmp);
    cuts.dedup();
    let mut integral = 0.0;
    for w in cuts.windows(2) {
        let mid = 0.5 * (w[0] + w[1]);
        let mut dens = Array1::<f64>::zeros(nodes);
        for (g, f) in &op.terms {
            let gv = g.eval(mid);
            if gv != 0.0 {
                dens.scaled_add(gv * gv, &f.mapv(|v| v * v));
            }
        }
        integral += (w[1] - w[0]) * model.lp_norm(dens.mapv(f64::sqrt).view(), p).powf(r);
    }
    let time_norm = integral.powf(1.0 / r);

    let over = |den: f64| {
        if den > 0.0 {
            McEstimate {
                value: stochastic_norm.value / den,
                se: stochastic_norm.se / den,
            }
        } else {
            McEstimate { value: 0.0, se: 0.0 }
        }
    };
    Ok(OperatorResult {
        stochastic_norm,
        square_function,
        time_norm,
        ratio: over(square_function),
        bound_ratio: over(time_norm),
    })
}

/// Evaluates both sides of the equivalence for each operator, the ratio
/// spread, and the time-norm bound with one constant.
pub fn elementary_operator_check<K: VolterraKernel<f64> + ?Sized>(
    model: &SpectralModel,
    kernel: &K,
    operators: &[ElementaryOperator],
    driver: &CylindricalEnsemble,
    p: f64,
    q: f64,
) -> Result<ElementaryReport> {
    if !(p >= 1.0 && q >= 1.0) {
        return Err(Error::Invalid(format!("p = {p}, q = {q}")));
    }
    let needed = operators.iter().map(|o| o.terms.len()).max().unwrap_or(0);
    if driver.modes() < needed {
        return Err(Error::Invalid(format!(
            "{needed} driver coordinates needed, {} given",
            driver.modes()
        )));
    }
    let results = operators
        .par_iter()
        .map(|op| operator_result(model, kernel, op, driver, p, q))
        .collect::<Result<Vec<_>>>()?;
    let live: Vec<f64> = results
        .iter()
        .filter(|r| r.square_function > 0.0)
        .map(|r| r.ratio.value)
        .collect();
    let mean_ratio = if live.is_empty() {
        0.0
    } else {
        live.iter().sum::<f64>() / live.len() as f64
    };
    let max_deviation = live.iter().map(|r| (r / mean_ratio - 1.0).abs()).fold(0.0, f64::max);
    let bound_constant = kernel
        .hurst()
        .map(|h| gaussian_moment(p.max(q)) * fbm_embedding_constant(h).sqrt());
    let max_bound_ratio = results.iter().map(|r| r.bound_ratio.value).fold(0.0, f64::max);
    let bound_holds = match bound_constant {
        Some(c) => results
            .iter()
            .all(|r| r.bound_ratio.value <= c + 3.0 * r.bound_ratio.se),
        None => max_bound_ratio.is_finite(),
    };
    Ok(ElementaryReport {
        p,
        q,
        results,
        mean_ratio,
        max_deviation,
        bound_constant,
        max_bound_ratio,
        stable: max_deviation <= RATIO_STABILITY,
        bound_holds,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gaussian_moments() {
        assert!((gaussian_moment(2.0) - 1.0).abs() < 1e-12);
        assert!((gaussian_moment(4.0) - 3f64.powf(0.25)).abs() < 1e-12);
        assert!((gaussian_moment(1.0) - (2.0 / std::f64::consts::PI).sqrt()).abs() < 1e-12);
    }
}
