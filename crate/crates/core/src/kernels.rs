//! Volterra kernels `K(t, r)`: the generic interface, the fractional kernel
//! `K^H`, covariance integrals and a numerical regularity probe.

use std::cell::Cell;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quadrature::{adaptive, adaptive_singular, Endpoint, Estimate, Tolerance};
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum KernelFamily {
    FbmType,
    Custom,
}

/// An α-regular Volterra kernel.
///
/// Implementations must satisfy `eval(t, r) = 0` for `r >= t` and expose the
/// derivative in the first argument in closed form.
pub trait VolterraKernel<T: Real>: Send + Sync {
    /// Regularity index in `(0, 1/2)`.
    fn alpha(&self) -> T;
    fn eval(&self, t: T, r: T) -> Result<T>;
    /// `dK/du (u, r)`, zero for `u <= r`.
    fn deriv(&self, u: T, r: T) -> T;
    fn family(&self) -> KernelFamily;
    /// Hurst index for kernels of fractional type.
    fn hurst(&self) -> Option<T> {
        None
    }
}

fn check_hurst<T: Real>(h: T) -> Result<()> {
    if h > T::half() && h < T::one() {
        Ok(())
    } else {
        Err(Error::ParameterDomain {
            name: "H",
            value: h.as_f64(),
            constraint: "1/2 < H < 1",
        })
    }
}

/// `K^H(t, r) = C_H ∫_r^t (u/r)^{H-1/2} (u-r)^{H-3/2} du`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FbmKernel<T> {
    hurst: T,
    c_h: T,
}

impl<T: Real> FbmKernel<T> {
    /// Builds the kernel; `c_h = None` calibrates the constant so that
    /// `∫_0^1 K(1, r)^2 dr = 1`.
    pub fn new(hurst: T, c_h: Option<T>) -> Result<Self> {
        check_hurst(hurst)?;
        let c_h = match c_h {
            Some(c) if c > T::zero() && c.is_finite() => c,
            Some(c) => {
                return Err(Error::ParameterDomain {
                    name: "C_H",
                    value: c.as_f64(),
                    constraint: "C_H > 0",
                })
            }
            None => calibrate_c_h(hurst)?,
        };
        Ok(Self { hurst, c_h })
    }

    pub fn c_h(&self) -> T {
        self.c_h
    }

    /// Same kernel with the constant multiplied by `factor`.
    pub fn rescaled(&self, factor: T) -> Self {
        Self {
            hurst: self.hurst,
            c_h: self.c_h * factor,
        }
    }

    /// The kernel integral without the constant.
    ///
    /// With `u - r = s^q`, `q = 1/(H - 1/2)`, the integrand becomes
    /// `q (1 + s^q / r)^{H-1/2}`, bounded on `[0, (t - r)^{H-1/2}]`.
    fn unit_eval(&self, t: T, r: T) -> Result<T> {
        if !(t > r) {
            return Ok(T::zero());
        }
        let a = self.hurst - T::half();
        if r <= T::zero() {
            // K(t, 0+) diverges like r^{-a}; the kernel is only used under integrals.
            return Ok(T::infinity());
        }
        let q = T::one() / a;
        let upper = (t - r).powf(a);
        let est = adaptive(
            |s: T| q * (T::one() + s.powf(q) / r).powf(a),
            T::zero(),
            upper,
            Tolerance {
                abs: 1e-13,
                rel: 1e-12,
                max_intervals: 4000,
            },
        )?;
        Ok(est.value)
    }
}

impl<T: Real> VolterraKernel<T> for FbmKernel<T> {
    fn alpha(&self) -> T {
        self.hurst - T::half()
    }

    fn eval(&self, t: T, r: T) -> Result<T> {
        Ok(self.c_h * self.unit_eval(t, r)?)
    }

    fn deriv(&self, u: T, r: T) -> T {
        if !(u > r) || r <= T::zero() {
            return T::zero();
        }
        let a = self.alpha();
        self.c_h * (u / r).powf(a) * (u - r).powf(a - T::one())
    }

    fn family(&self) -> KernelFamily {
        KernelFamily::FbmType
    }

    fn hurst(&self) -> Option<T> {
        Some(self.hurst)
    }
}

type KernelFn<T> = Box<dyn Fn(T, T) -> T + Send + Sync>;

/// Kernel given by closures, mainly for probing the regularity checks.
pub struct CustomKernel<T> {
    alpha: T,
    eval: KernelFn<T>,
    deriv: KernelFn<T>,
}

impl<T: Real> CustomKernel<T> {
    pub fn new(
        alpha: T,
        eval: impl Fn(T, T) -> T + Send + Sync + 'static,
        deriv: impl Fn(T, T) -> T + Send + Sync + 'static,
    ) -> Result<Self> {
        if !(alpha > T::zero() && alpha < T::half()) {
            return Err(Error::ParameterDomain {
                name: "alpha",
                value: alpha.as_f64(),
                constraint: "0 < alpha < 1/2",
            });
        }
        Ok(Self {
            alpha,
            eval: Box::new(eval),
            deriv: Box::new(deriv),
        })
    }
}

impl<T: Real> fmt::Debug for CustomKernel<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CustomKernel").field("alpha", &self.alpha).finish()
    }
}

impl<T: Real> VolterraKernel<T> for CustomKernel<T> {
    fn alpha(&self) -> T {
        self.alpha
    }

    fn eval(&self, t: T, r: T) -> Result<T> {
        if !(t > r) {
            return Ok(T::zero());
        }
        Ok((self.eval)(t, r))
    }

    fn deriv(&self, u: T, r: T) -> T {
        if !(u > r) {
            return T::zero();
        }
        (self.deriv)(u, r)
    }

    fn family(&self) -> KernelFamily {
        KernelFamily::Custom
    }
}

/// Builds `K^H`, calibrating `C_H` when it is not supplied.
pub fn make_fbm_kernel<T: Real>(hurst: T, c_h: Option<T>) -> Result<FbmKernel<T>> {
    FbmKernel::new(hurst, c_h)
}

/// The constant `C_H` with `∫_0^1 K^H(1, r)^2 dr = 1` (so `Var b_1 = 1`).
///
/// The kernel is linear in `C_H`, so the constant is `I^{-1/2}` where `I`
/// is the integral computed with `C_H = 1`; the result is then checked by an
/// independent covariance quadrature.
pub fn calibrate_c_h<T: Real>(hurst: T) -> Result<T> {
    check_hurst(hurst)?;
    let unit = FbmKernel { hurst, c_h: T::one() };
    let integral = covariance_quadrature(&unit, T::one(), T::one())?.value;
    if !(integral > T::zero() && integral.is_finite()) {
        return Err(Error::Numeric {
            what: "C_H calibration",
            achieved: integral.as_f64(),
            target: 1.0,
        });
    }
    let c = integral.sqrt().recip();
    let residual = calibration_residual(&unit.rescaled(c))?;
    if residual.as_f64() > 1e-3 {
        return Err(Error::Numeric {
            what: "C_H calibration",
            achieved: residual.as_f64(),
            target: 1e-3,
        });
    }
    Ok(c)
}

/// `|∫_0^1 K(1, r)^2 dr - 1|` for a kernel.
pub fn calibration_residual<T: Real, K: VolterraKernel<T> + ?Sized>(kernel: &K) -> Result<T> {
    Ok((covariance_quadrature(kernel, T::one(), T::one())?.value - T::one()).abs())
}

/// Substitution exponent that tames `r^{-2α}` at the origin.
pub(crate) fn origin_exponent<T: Real>(alpha: T) -> T {
    (T::one() - T::two() * alpha).recip().max(T::two())
}

/// Runs `f` with a slot that records the first kernel error raised inside a
/// quadrature closure.
pub(crate) fn with_error_slot<T, R>(f: impl FnOnce(&dyn Fn(Result<T>) -> T) -> Result<R>) -> Result<R>
where
    T: Real,
{
    let slot: Cell<Option<Error>> = Cell::new(None);
    let catch = |r: Result<T>| match r {
        Ok(v) => v,
        Err(e) => {
            let prev = slot.take();
            slot.set(Some(prev.unwrap_or(e)));
            T::zero()
        }
    };
    let out = f(&catch);
    match slot.take() {
        Some(e) => Err(e),
        None => out,
    }
}

/// `∫_0^{s∧t} K(s, r) K(t, r) dr` with absolute error estimate `<= 1e-6`.
pub fn covariance_quadrature<T: Real, K: VolterraKernel<T> + ?Sized>(kernel: &K, s: T, t: T) -> Result<Estimate<T>> {
    if s < T::zero() || t < T::zero() {
        return Err(Error::ParameterDomain {
            name: "time",
            value: s.min(t).as_f64(),
            constraint: "s, t >= 0",
        });
    }
    let upper = s.min(t);
    if upper <= T::zero() {
        return Ok(Estimate {
            value: T::zero(),
            error: T::zero(),
        });
    }
    let q = origin_exponent(kernel.alpha());
    let est = with_error_slot(|catch| {
        adaptive_singular(
            |r: T| catch(kernel.eval(s, r)) * catch(kernel.eval(t, r)),
            T::zero(),
            upper,
            q,
            Endpoint::Both,
            Tolerance {
                abs: 1e-9,
                rel: 1e-10,
                max_intervals: 4000,
            },
        )
    })?;
    if est.error.as_f64() > 1e-6 {
        return Err(Error::Numeric {
            what: "covariance quadrature",
            achieved: est.error.as_f64(),
            target: 1e-6,
        });
    }
    Ok(est)
}

/// `R^H(s, t) = (|s|^{2H} + |t|^{2H} - |t - s|^{2H}) / 2`.
pub fn fbm_covariance_closed_form<T: Real>(hurst: T, s: T, t: T) -> T {
    let two_h = T::two() * hurst;
    T::half() * (s.abs().powf(two_h) + t.abs().powf(two_h) - (t - s).abs().powf(two_h))
}

/// Outcome of [`check_alpha_regularity`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegularityCheck {
    /// Supremum of `|dK/du| / ((u-r)^{α-1} (u/r)^α)` on the refined grid.
    pub max_ratio: f64,
    pub coarse_ratio: f64,
    /// Relative growth of the supremum when the grid is doubled.
    pub growth: f64,
    pub pass: bool,
}

fn sup_ratio<T: Real, K: VolterraKernel<T> + ?Sized>(kernel: &K, horizon: T, level: u32) -> f64 {
    let a = kernel.alpha();
    let cells = 1usize << level;
    let mut sup = 0.0f64;
    for i in 1..cells {
        let r = horizon * T::from_count(i) / T::from_count(cells);
        for j in 1..=level {
            let gap = horizon / T::lit(2f64.powi(j as i32));
            let u = r + gap;
            if u > horizon {
                continue;
            }
            let bound = gap.powf(a - T::one()) * (u / r).powf(a);
            let ratio = (kernel.deriv(u, r) / bound).abs().as_f64();
            sup = if ratio.is_nan() { f64::INFINITY } else { sup.max(ratio) };
        }
    }
    sup
}

/// Probes condition (iv): the derivative ratio must stay bounded when the
/// sample grid (pairs `0 < r < u <= T` with dyadic gaps down to
/// `T 2^{-level}`) is doubled. Passes iff the supremum is finite and grows
/// by less than 5%.
pub fn check_alpha_regularity<T: Real, K: VolterraKernel<T> + ?Sized>(
    kernel: &K,
    horizon: T,
    level: u32,
) -> Result<RegularityCheck> {
    if !(horizon > T::zero()) || level < 2 {
        return Err(Error::Invalid("regularity grid needs T > 0 and level >= 2".into()));
    }
    let coarse = sup_ratio(kernel, horizon, level);
    let fine = sup_ratio(kernel, horizon, level + 1);
    let growth = if coarse > 0.0 {
        (fine - coarse) / coarse
    } else if fine > 0.0 {
        f64::INFINITY
    } else {
        0.0
    };
    Ok(RegularityCheck {
        max_ratio: fine,
        coarse_ratio: coarse,
        growth,
        pass: fine.is_finite() && growth < 0.05,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn vanishes_off_support() {
        let k = make_fbm_kernel(0.75f64, None).unwrap();
        assert_eq!(k.eval(1.0, 1.0).unwrap(), 0.0);
        assert_eq!(k.eval(0.5, 0.8).unwrap(), 0.0);
        assert_eq!(k.eval(0.0, 0.0).unwrap(), 0.0);
        assert_eq!(k.deriv(0.5, 0.8), 0.0);
    }

    #[test]
    fn tends_to_zero_on_diagonal() {
        let k = make_fbm_kernel(0.75f64, None).unwrap();
        let r = 0.3;
        let vals: Vec<f64> = (2..20).map(|j| k.eval(r + 2f64.powi(-j), r).unwrap()).collect();
        assert!(vals.windows(2).all(|w| w[1] < w[0]));
        // K(r + h, r) ~ C_H h^α / α, so 18 halvings shrink it by roughly 2^{-4.5}.
        assert!(*vals.last().unwrap() < vals[0] / 10.0);
    }

    #[test]
    fn rejects_out_of_range_hurst() {
        assert!(matches!(
            make_fbm_kernel(0.5f64, None),
            Err(Error::ParameterDomain { .. })
        ));
        assert!(make_fbm_kernel(1.0f64, None).is_err());
        assert!(make_fbm_kernel(0.7f64, Some(-1.0)).is_err());
    }

    #[test]
    fn covariance_zero_at_origin_and_symmetric() {
        let k = make_fbm_kernel(0.7f64, None).unwrap();
        assert_eq!(covariance_quadrature(&k, 0.0, 0.8).unwrap().value, 0.0);
        let a = covariance_quadrature(&k, 0.3, 0.9).unwrap().value;
        let b = covariance_quadrature(&k, 0.9, 0.3).unwrap().value;
        assert!((a - b).abs() < 1e-10);
    }

    #[test]
    fn closed_form_values() {
        assert_eq!(fbm_covariance_closed_form(0.75f64, 1.0, 1.0), 1.0);
        assert_eq!(fbm_covariance_closed_form(0.6f64, 0.0, 0.7), 0.0);
        let v = fbm_covariance_closed_form(0.7f64, 1.0, 2.0);
        assert!((v - 2f64.powf(1.4) / 2.0).abs() < 1e-14);
    }

    #[test]
    fn regularity_probe_classifies_kernels() {
        let k = make_fbm_kernel(0.75f64, None).unwrap();
        let rep = check_alpha_regularity(&k, 1.0, 6).unwrap();
        assert!(rep.pass);
        assert!((rep.max_ratio - k.c_h()).abs() < 1e-9 * k.c_h());

        let zero = CustomKernel::new(0.25f64, |_, _| 0.0, |_, _| 0.0).unwrap();
        let rep = check_alpha_regularity(&zero, 1.0, 6).unwrap();
        assert!(rep.pass);
        assert_eq!(rep.max_ratio, 0.0);

        let bad = CustomKernel::new(0.25f64, |_, _| 0.0, |u: f64, r: f64| (u - r).powf(0.25 - 1.5)).unwrap();
        let rep = check_alpha_regularity(&bad, 1.0, 6).unwrap();
        assert!(!rep.pass);
        assert!(rep.growth > 0.3);
    }

    #[test]
    fn single_precision_kernel() {
        let k = FbmKernel::new(0.75f32, Some(1.0)).unwrap();
        let v = k.eval(1.0, 0.5).unwrap();
        let d = FbmKernel::new(0.75f64, Some(1.0)).unwrap().eval(1.0, 0.5).unwrap();
        assert!((v as f64 - d).abs() < 1e-4);
    }
}
