//! O(B) solvers for tridiagonal systems.

use crate::error::{Error, Result};

/// Solves `A x = rhs` for tridiagonal `A` by Thomas elimination.
///
/// `sub[i] = A[i+1][i]`, `sup[i] = A[i][i+1]`.
pub fn tridiag_solve(sub: &[f64], diag: &[f64], sup: &[f64], rhs: &[f64]) -> Result<Vec<f64>> {
    let n = diag.len();
    if n == 0 {
        return Ok(Vec::new());
    }
    if sub.len() + 1 != n {
        return Err(Error::LengthMismatch { expected: n - 1, got: sub.len() });
    }
    if sup.len() + 1 != n {
        return Err(Error::LengthMismatch { expected: n - 1, got: sup.len() });
    }
    if rhs.len() != n {
        return Err(Error::LengthMismatch { expected: n, got: rhs.len() });
    }
    let mut c = vec![0.0; n];
    let mut x = vec![0.0; n];
    let mut pivot = diag[0];
    if pivot == 0.0 || !pivot.is_finite() {
        return Err(Error::ZeroPivot(0));
    }
    x[0] = rhs[0] / pivot;
    for i in 1..n {
        c[i - 1] = sup[i - 1] / pivot;
        pivot = diag[i] - sub[i - 1] * c[i - 1];
        if pivot == 0.0 || !pivot.is_finite() {
            return Err(Error::ZeroPivot(i));
        }
        x[i] = (rhs[i] - sub[i - 1] * x[i - 1]) / pivot;
    }
    for i in (0..n - 1).rev() {
        x[i] -= c[i] * x[i + 1];
    }
    Ok(x)
}

/// `L D L^T` factorization of a symmetric positive definite tridiagonal
/// matrix. `L` is unit lower bidiagonal with subdiagonal `l`.
#[derive(Debug, Clone)]
pub struct SymTridiagFactor {
    d: Vec<f64>,
    l: Vec<f64>,
}

impl SymTridiagFactor {
    pub fn new(diag: &[f64], off: &[f64]) -> Result<Self> {
        let n = diag.len();
        if n == 0 {
            return Err(Error::InvalidArgument("empty matrix".into()));
        }
        if off.len() + 1 != n {
            return Err(Error::LengthMismatch { expected: n - 1, got: off.len() });
        }
        let mut d = Vec::with_capacity(n);
        let mut l = Vec::with_capacity(n - 1);
        d.push(diag[0]);
        for i in 0..n {
            if !(d[i] > 0.0) || !d[i].is_finite() {
                return Err(Error::ZeroPivot(i));
            }
            if i + 1 < n {
                let li = off[i] / d[i];
                l.push(li);
                d.push(diag[i + 1] - li * off[i]);
            }
        }
        Ok(Self { d, l })
    }

    pub fn len(&self) -> usize {
        self.d.len()
    }

    pub fn is_empty(&self) -> bool {
        self.d.is_empty()
    }

    pub fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        let n = self.d.len();
        let mut x = rhs.to_vec();
        for i in 1..n {
            x[i] -= self.l[i - 1] * x[i - 1];
        }
        for i in 0..n {
            x[i] /= self.d[i];
        }
        for i in (0..n - 1).rev() {
            x[i] -= self.l[i] * x[i + 1];
        }
        x
    }

    pub fn log_det(&self) -> f64 {
        self.d.iter().map(|v| v.ln()).sum()
    }

    /// Diagonal of the inverse via the backward recursion
    /// `S[i][i] = 1/d[i] + l[i]^2 S[i+1][i+1]`.
    pub fn diag_inverse(&self) -> Vec<f64> {
        let n = self.d.len();
        let mut s = vec![0.0; n];
        s[n - 1] = 1.0 / self.d[n - 1];
        for i in (0..n - 1).rev() {
            s[i] = 1.0 / self.d[i] + self.l[i] * self.l[i] * s[i + 1];
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn second_difference_system() {
        let x = tridiag_solve(&[-1.0, -1.0], &[2.0, 2.0, 2.0], &[-1.0, -1.0], &[1.0, 0.0, 1.0]).unwrap();
        for v in x {
            assert!((v - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn identity_system() {
        let rhs = [3.0, -1.0, 0.5, 7.0];
        let x = tridiag_solve(&[0.0; 3], &[1.0; 4], &[0.0; 3], &rhs).unwrap();
        assert_eq!(x, rhs.to_vec());
    }

    #[test]
    fn zero_pivot_detected() {
        assert_eq!(tridiag_solve(&[1.0], &[0.0, 1.0], &[1.0], &[1.0, 1.0]), Err(Error::ZeroPivot(0)));
        assert_eq!(tridiag_solve(&[1.0], &[1.0, 1.0], &[1.0], &[1.0, 1.0]), Err(Error::ZeroPivot(1)));
        assert!(SymTridiagFactor::new(&[1.0, 1.0], &[-1.0]).is_err());
    }

    #[test]
    fn factor_small_case() {
        let f = SymTridiagFactor::new(&[2.0, 2.0, 2.0], &[-1.0, -1.0]).unwrap();
        let x = f.solve(&[1.0, 0.0, 1.0]);
        for v in &x {
            assert!((v - 1.0).abs() < 1e-14);
        }
        assert!((f.log_det() - 4f64.ln()).abs() < 1e-14);
        // inverse of the 3x3 second-difference matrix has diagonal [3/4, 1, 3/4]
        let s = f.diag_inverse();
        assert!((s[0] - 0.75).abs() < 1e-14 && (s[1] - 1.0).abs() < 1e-14 && (s[2] - 0.75).abs() < 1e-14);
    }
}
