//! Monte Carlo summaries and least-squares fits. Reductions run in slice
//! order so results never depend on how the samples were produced.

use serde::{Deserialize, Serialize};

/// A Monte Carlo estimate with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    pub value: f64,
    pub se: f64,
}

impl McEstimate {
    /// `|value - target| <= k * se`.
    pub fn within_se(&self, target: f64, k: f64) -> bool {
        (self.value - target).abs() <= k * self.se
    }

    /// `|value - target| <= max(k * se, rel * |target|)`.
    pub fn within(&self, target: f64, k: f64, rel: f64) -> bool {
        (self.value - target).abs() <= (k * self.se).max(rel * target.abs())
    }
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Mean with standard error `sd / sqrt(n)`.
pub fn mean_se(xs: &[f64]) -> McEstimate {
    let n = xs.len() as f64;
    let m = mean(xs);
    let var = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
    McEstimate {
        value: m,
        se: (var / n).sqrt(),
    }
}

/// Unbiased sample variance with the SE `sqrt((m4 - s^4) / n)`.
pub fn variance_se(xs: &[f64]) -> McEstimate {
    let n = xs.len() as f64;
    let m = mean(xs);
    let m2 = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / n;
    let m4 = xs.iter().map(|x| (x - m).powi(4)).sum::<f64>() / n;
    McEstimate {
        value: m2 * n / (n - 1.0).max(1.0),
        se: ((m4 - m2 * m2).max(0.0) / n).sqrt(),
    }
}

/// Raw product moment `E[xy]` with SE.
pub fn product_moment_se(x: &[f64], y: &[f64]) -> McEstimate {
    let prods: Vec<f64> = x.iter().zip(y).map(|(a, b)| a * b).collect();
    mean_se(&prods)
}

/// Sample skewness and excess kurtosis with their large-sample SEs under
/// normality (`sqrt(6/n)`, `sqrt(24/n)`).
pub fn shape_moments(xs: &[f64]) -> (McEstimate, McEstimate) {
    let n = xs.len() as f64;
    let m = mean(xs);
    let m2 = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / n;
    let m3 = xs.iter().map(|x| (x - m).powi(3)).sum::<f64>() / n;
    let m4 = xs.iter().map(|x| (x - m).powi(4)).sum::<f64>() / n;
    (
        McEstimate {
            value: m3 / m2.powf(1.5),
            se: (6.0 / n).sqrt(),
        },
        McEstimate {
            value: m4 / (m2 * m2) - 3.0,
            se: (24.0 / n).sqrt(),
        },
    )
}

/// Ordinary least-squares line.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub slope_se: f64,
    pub r_squared: f64,
}

pub fn linear_fit(xs: &[f64], ys: &[f64]) -> LinearFit {
    let n = xs.len() as f64;
    let mx = mean(xs);
    let my = mean(ys);
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_res: f64 = xs
        .iter()
        .zip(ys)
        .map(|(x, y)| (y - intercept - slope * x).powi(2))
        .sum();
    let slope_se = if n > 2.0 {
        (ss_res / (n - 2.0) / sxx).sqrt()
    } else {
        0.0
    };
    let r_squared = if syy > 0.0 { 1.0 - ss_res / syy } else { 1.0 };
    LinearFit {
        slope,
        intercept,
        slope_se,
        r_squared,
    }
}

/// Regression contrast `c` with `slope = c . y` for fixed abscissae.
pub fn slope_contrast(xs: &[f64]) -> Vec<f64> {
    let mx = mean(xs);
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    xs.iter().map(|x| (x - mx) / sxx).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_line_has_zero_residual() {
        let xs = [0.0, 1.0, 2.0, 3.0];
        let ys: Vec<f64> = xs.iter().map(|x| 2.0 * x - 1.0).collect();
        let f = linear_fit(&xs, &ys);
        assert!((f.slope - 2.0).abs() < 1e-14);
        assert!((f.intercept + 1.0).abs() < 1e-14);
        assert!(f.slope_se < 1e-12);
        assert!((f.r_squared - 1.0).abs() < 1e-14);
        let c = slope_contrast(&xs);
        let s: f64 = c.iter().zip(&ys).map(|(a, b)| a * b).sum();
        assert!((s - 2.0).abs() < 1e-14);
    }

    #[test]
    fn moments_of_small_sample() {
        let xs = [1.0, 2.0, 3.0, 4.0];
        let m = mean_se(&xs);
        assert_eq!(m.value, 2.5);
        let v = variance_se(&xs);
        assert!((v.value - 5.0 / 3.0).abs() < 1e-14);
        assert!(m.within(2.6, 3.0, 0.0));
    }
}
