use crate::error::{Error, Result};
use crate::scalar::Real;

/// Dense lower Cholesky factor, row-major.
#[derive(Debug, Clone)]
pub struct Cholesky<T> {
    n: usize,
    lower: Vec<T>,
    /// Diagonal jitter that had to be added, zero if none.
    pub jitter: T,
}

impl<T: Real> Cholesky<T> {
    /// Factors a symmetric matrix; retries once with jitter
    /// `1e-12 * trace / n` on the diagonal.
    pub fn factor(matrix: &[T], n: usize) -> Result<Self> {
        if matrix.len() != n * n {
            return Err(Error::Invalid(format!("expected {n}x{n} matrix")));
        }
        if let Some(lower) = factor_raw(matrix, n, T::zero()) {
            return Ok(Self {
                n,
                lower,
                jitter: T::zero(),
            });
        }
        let trace: T = (0..n).map(|i| matrix[i * n + i]).sum();
        let jitter = T::lit(1e-12) * trace / T::from_count(n.max(1));
        factor_raw(matrix, n, jitter)
            .map(|lower| Self { n, lower, jitter })
            .ok_or(Error::Numeric {
                what: "Cholesky factorization (matrix not positive definite after jitter)",
                achieved: jitter.as_f64(),
                target: 0.0,
            })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn lower(&self) -> &[T] {
        &self.lower
    }

    /// `out = L z`.
    pub fn mul_lower(&self, z: &[T], out: &mut [T]) {
        let n = self.n;
        for i in 0..n {
            let row = &self.lower[i * n..i * n + i + 1];
            out[i] = row.iter().zip(&z[..=i]).map(|(a, b)| *a * *b).sum();
        }
    }
}

fn factor_raw<T: Real>(a: &[T], n: usize, jitter: T) -> Option<Vec<T>> {
    let mut l = vec![T::zero(); n * n];
    for j in 0..n {
        let mut d = a[j * n + j] + jitter;
        for k in 0..j {
            d -= l[j * n + k].pow2();
        }
        if !(d > T::zero()) {
            return None;
        }
        let djj = d.sqrt();
        l[j * n + j] = djj;
        for i in j + 1..n {
            let mut s = a[i * n + j];
            for k in 0..j {
                s -= l[i * n + k] * l[j * n + k];
            }
            l[i * n + j] = s / djj;
        }
    }
    Some(l)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reconstructs_matrix() {
        let a = [4.0, 2.0, 0.6, 2.0, 5.0, 1.0, 0.6, 1.0, 3.0];
        let c = Cholesky::factor(&a, 3).unwrap();
        let l = c.lower();
        for i in 0..3 {
            for j in 0..3 {
                let s: f64 = (0..3).map(|k| l[i * 3 + k] * l[j * 3 + k]).sum();
                assert!((s - a[i * 3 + j]).abs() < 1e-12);
            }
        }
        assert_eq!(c.jitter, 0.0);
    }

    #[test]
    fn singular_psd_needs_jitter_and_indefinite_fails() {
        let psd = [1.0, 1.0, 1.0, 1.0];
        let c = Cholesky::factor(&psd, 2).unwrap();
        assert!(c.jitter > 0.0);
        let indefinite = [1.0, 2.0, 2.0, 1.0];
        assert!(Cholesky::factor(&indefinite, 2).is_err());
    }
}
