//! Quadrature rules: fixed Gauss–Legendre, adaptive Gauss–Kronrod and
//! power substitutions for algebraic endpoint singularities.

use std::sync::OnceLock;

use crate::error::{Error, Result};
use crate::scalar::Real;

const MAX_GL_ORDER: usize = 64;

/// Nodes and weights of an `n`-point Gauss–Legendre rule on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> &'static [(f64, f64)] {
    static RULES: OnceLock<Vec<Vec<(f64, f64)>>> = OnceLock::new();
    assert!((1..=MAX_GL_ORDER).contains(&n), "Gauss-Legendre order {n} unsupported");
    &RULES.get_or_init(|| (0..=MAX_GL_ORDER).map(legendre_rule).collect())[n]
}

fn legendre_rule(n: usize) -> Vec<(f64, f64)> {
    if n == 0 {
        return Vec::new();
    }
    let mut rule = Vec::with_capacity(n);
    for i in 0..n {
        // Tricomi initial guess, then Newton on P_n.
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 1.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let kf = k as f64;
                let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
                p0 = p1;
                p1 = p2;
            }
            let p = if n == 1 { x } else { p1 };
            let pm1 = if n == 1 { 1.0 } else { p0 };
            dp = n as f64 * (x * p - pm1) / (x * x - 1.0);
            let dx = p / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        rule.push((x, w));
    }
    rule.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    rule
}

/// Fixed-order Gauss–Legendre quadrature of `f` over `[a, b]`.
pub fn gauss<T: Real, F: Fn(T) -> T>(f: F, a: T, b: T, order: usize) -> T {
    let half = (b - a) * T::half();
    let mid = (a + b) * T::half();
    let mut acc = T::zero();
    for &(x, w) in gauss_legendre(order) {
        acc += T::lit(w) * f(mid + half * T::lit(x));
    }
    acc * half
}

/// Composite Gauss rule with `panels` equal panels of `order` points.
pub fn composite_gauss<T: Real, F: Fn(T) -> T>(f: F, a: T, b: T, panels: usize, order: usize) -> T {
    let h = (b - a) / T::from_count(panels);
    (0..panels)
        .map(|i| {
            let lo = a + h * T::from_count(i);
            gauss(&f, lo, lo + h, order)
        })
        .sum()
}

/// Value and absolute error estimate of an adaptive integration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate<T> {
    pub value: T,
    pub error: T,
}

/// Tolerances for [`adaptive`].
#[derive(Debug, Clone, Copy)]
pub struct Tolerance {
    pub abs: f64,
    pub rel: f64,
    pub max_intervals: usize,
}

impl Tolerance {
    pub const fn absolute(abs: f64) -> Self {
        Self {
            abs,
            rel: 0.0,
            max_intervals: 2000,
        }
    }
}

impl Default for Tolerance {
    fn default() -> Self {
        Self {
            abs: 1e-10,
            rel: 1e-10,
            max_intervals: 2000,
        }
    }
}

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_5,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_48,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_224,
    0.063_092_092_629_978_56,
    0.104_790_010_322_250_19,
    0.140_653_259_715_525_92,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_42,
    0.204_432_940_075_298_89,
    0.209_482_141_084_727_82,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_64,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

fn kronrod15<T: Real, F: Fn(T) -> T>(f: &F, a: T, b: T) -> (T, T) {
    let half = (b - a) * T::half();
    let mid = (a + b) * T::half();
    let fc = f(mid);
    let mut kron = fc * T::lit(WGK[7]);
    let mut gss = fc * T::lit(WG[3]);
    for j in 0..7 {
        let dx = half * T::lit(XGK[j]);
        let pair = f(mid - dx) + f(mid + dx);
        kron += T::lit(WGK[j]) * pair;
        if j % 2 == 1 {
            gss += T::lit(WG[j / 2]) * pair;
        }
    }
    let value = kron * half;
    let error = ((kron - gss) * half).abs();
    (value, error)
}

/// Globally adaptive Gauss–Kronrod (7/15) quadrature.
///
/// Bisects the interval with the largest local error until the summed
/// error estimate meets `max(abs, rel * |value|)`.
pub fn adaptive<T: Real, F: Fn(T) -> T>(f: F, a: T, b: T, tol: Tolerance) -> Result<Estimate<T>> {
    if a == b {
        return Ok(Estimate {
            value: T::zero(),
            error: T::zero(),
        });
    }
    let (v, e) = kronrod15(&f, a, b);
    let mut intervals = vec![(a, b, v, e)];
    loop {
        let value: T = intervals.iter().map(|iv| iv.2).sum();
        let error: T = intervals.iter().map(|iv| iv.3).sum();
        let target = tol.abs.max(tol.rel * value.as_f64().abs());
        if error.as_f64() <= target {
            return Ok(Estimate { value, error });
        }
        if !value.is_finite() || intervals.len() >= tol.max_intervals {
            return Err(Error::Numeric {
                what: "adaptive quadrature",
                achieved: error.as_f64(),
                target,
            });
        }
        let (idx, _) =
            intervals.iter().enumerate().fold(
                (0, T::neg_infinity()),
                |best, (i, iv)| if iv.3 > best.1 { (i, iv.3) } else { best },
            );
        let (lo, hi, _, _) = intervals.swap_remove(idx);
        let mid = (lo + hi) * T::half();
        if mid <= lo || mid >= hi {
            return Err(Error::Numeric {
                what: "adaptive quadrature (interval underflow)",
                achieved: error.as_f64(),
                target,
            });
        }
        let (v1, e1) = kronrod15(&f, lo, mid);
        let (v2, e2) = kronrod15(&f, mid, hi);
        intervals.push((lo, mid, v1, e1));
        intervals.push((mid, hi, v2, e2));
    }
}

/// Which end of the interval carries the algebraic singularity.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Endpoint {
    Left,
    Right,
    Both,
}

/// Adaptive integration after the substitution `x - a = (b - a) s^q`
/// (left), `b - x = (b - a) s^q` (right) or both, split at the midpoint.
///
/// With `q = 1 / (1 + gamma)` a factor `|x - endpoint|^gamma`, `gamma > -1`,
/// becomes bounded.
pub fn adaptive_singular<T: Real, F: Fn(T) -> T>(
    f: F,
    a: T,
    b: T,
    q: T,
    end: Endpoint,
    tol: Tolerance,
) -> Result<Estimate<T>> {
    if a >= b {
        return Ok(Estimate {
            value: T::zero(),
            error: T::zero(),
        });
    }
    match end {
        Endpoint::Left => one_sided(&f, a, b, q, true, tol),
        Endpoint::Right => one_sided(&f, a, b, q, false, tol),
        Endpoint::Both => {
            let mid = (a + b) * T::half();
            let half_tol = Tolerance {
                abs: tol.abs * 0.5,
                ..tol
            };
            let l = one_sided(&f, a, mid, q, true, half_tol)?;
            let r = one_sided(&f, mid, b, q, false, half_tol)?;
            Ok(Estimate {
                value: l.value + r.value,
                error: l.error + r.error,
            })
        }
    }
}

fn one_sided<T: Real, F: Fn(T) -> T>(f: &F, a: T, b: T, q: T, left: bool, tol: Tolerance) -> Result<Estimate<T>> {
    let len = b - a;
    adaptive(
        |s: T| {
            if s <= T::zero() {
                return T::zero();
            }
            let sq = s.powf(q);
            let x = if left { a + len * sq } else { b - len * sq };
            f(x) * len * q * sq / s
        },
        T::zero(),
        T::one(),
        tol,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn legendre_rules_integrate_polynomials_exactly() {
        for n in [1usize, 2, 5, 16, 64] {
            let w: f64 = gauss_legendre(n).iter().map(|p| p.1).sum();
            assert!((w - 2.0).abs() < 1e-13, "n={n}");
            let deg = 2 * n - 1;
            let v = gauss(|x: f64| x.powi(deg as i32) + x.powi((deg - 1) as i32), -1.0, 1.0, n);
            let exact = 2.0 / deg as f64;
            assert!((v - exact).abs() < 1e-12, "n={n} v={v}");
        }
    }

    #[test]
    fn adaptive_handles_smooth_and_kinked() {
        let e = adaptive(|x: f64| x.exp(), 0.0, 2.0, Tolerance::default()).unwrap();
        assert!((e.value - (2f64.exp() - 1.0)).abs() < 1e-12);
        let k = adaptive(|x: f64| (x - 0.3).abs(), 0.0, 1.0, Tolerance::default()).unwrap();
        assert!((k.value - (0.045 + 0.245)).abs() < 1e-10);
    }

    #[test]
    fn singular_substitution_removes_endpoint_blowup() {
        // int_0^1 x^{-0.7} dx = 1/0.3
        let q = 1.0 / 0.3;
        let v = adaptive_singular(|x: f64| x.powf(-0.7), 0.0, 1.0, q, Endpoint::Left, Tolerance::default()).unwrap();
        assert!((v.value - 1.0 / 0.3).abs() < 1e-9);
        // int_0^1 x^{-1/2}(1-x)^{-1/2} dx = pi
        let b = adaptive_singular(
            |x: f64| x.powf(-0.5) * (1.0 - x).powf(-0.5),
            0.0,
            1.0,
            2.0,
            Endpoint::Both,
            Tolerance::default(),
        )
        .unwrap();
        assert!((b.value - std::f64::consts::PI).abs() < 1e-9);
    }

    #[test]
    fn works_in_single_precision() {
        let v = gauss(|x: f32| x * x, 0.0f32, 1.0, 4);
        assert!((v - 1.0 / 3.0).abs() < 1e-6);
    }

    #[test]
    fn reports_failure_when_budget_exhausted() {
        let tol = Tolerance {
            abs: 1e-14,
            rel: 0.0,
            max_intervals: 3,
        };
        let r = adaptive(|x: f64| x.powf(-0.9), 0.0, 1.0, tol);
        assert!(matches!(r, Err(Error::Numeric { .. })));
    }
}
