use crate::error::{Error, Result};
use crate::linalg::Mat;
use crate::scalar::Scalar;

/// Lower-triangular Cholesky factor of a symmetric positive-definite matrix.
///
/// Every SPD operation in the crate funnels through this type; a
/// factorization failure is reported, never papered over.
#[derive(Clone, Debug)]
pub struct Cholesky<T> {
    l: Mat<T>,
}

impl<T: Scalar> Cholesky<T> {
    pub fn new(a: &Mat<T>) -> Result<Self> {
        assert!(a.is_square(), "Cholesky needs a square matrix");
        let n = a.rows();
        let mut l = Mat::zeros(n, n);
        for j in 0..n {
            let mut d = a[(j, j)];
            for k in 0..j {
                d -= l[(j, k)] * l[(j, k)];
            }
            if d <= T::zero() || !d.is_finite() {
                return Err(Error::NotPositiveDefinite { pivot: j });
            }
            let dj = d.sqrt();
            l[(j, j)] = dj;
            for i in (j + 1)..n {
                let mut s = a[(i, j)];
                for k in 0..j {
                    s -= l[(i, k)] * l[(j, k)];
                }
                l[(i, j)] = s / dj;
            }
        }
        Ok(Cholesky { l })
    }

    pub fn lower(&self) -> &Mat<T> {
        &self.l
    }

    pub fn dim(&self) -> usize {
        self.l.rows()
    }

    /// Solves `L y = b`.
    pub fn forward_sub(&self, b: &[T]) -> Vec<T> {
        let n = self.dim();
        debug_assert_eq!(b.len(), n);
        let mut y = b.to_vec();
        for i in 0..n {
            for k in 0..i {
                let t = self.l[(i, k)] * y[k];
                y[i] -= t;
            }
            y[i] /= self.l[(i, i)];
        }
        y
    }

    /// Solves `Lᵀ x = y`.
    pub fn backward_sub(&self, y: &[T]) -> Vec<T> {
        let n = self.dim();
        debug_assert_eq!(y.len(), n);
        let mut x = y.to_vec();
        for i in (0..n).rev() {
            for k in (i + 1)..n {
                let t = self.l[(k, i)] * x[k];
                x[i] -= t;
            }
            x[i] /= self.l[(i, i)];
        }
        x
    }

    /// Solves `A x = b` with `A = L Lᵀ`, in one buffer.
    pub fn solve_vec(&self, b: &[T]) -> Vec<T> {
        let n = self.dim();
        debug_assert_eq!(b.len(), n);
        let mut y = b.to_vec();
        for i in 0..n {
            for k in 0..i {
                let t = self.l[(i, k)] * y[k];
                y[i] -= t;
            }
            y[i] /= self.l[(i, i)];
        }
        for i in (0..n).rev() {
            for k in (i + 1)..n {
                let t = self.l[(k, i)] * y[k];
                y[i] -= t;
            }
            y[i] /= self.l[(i, i)];
        }
        y
    }

    /// Solves `A X = B` column by column.
    pub fn solve_mat(&self, b: &Mat<T>) -> Mat<T> {
        let n = self.dim();
        assert_eq!(b.rows(), n, "solve_mat shape mismatch");
        let mut out = Mat::zeros(n, b.cols());
        for j in 0..b.cols() {
            let col = self.solve_vec(&b.col(j));
            for i in 0..n {
                out[(i, j)] = col[i];
            }
        }
        out
    }

    pub fn inverse(&self) -> Mat<T> {
        self.solve_mat(&Mat::identity(self.dim()))
    }

    /// `log |A|`.
    pub fn log_det(&self) -> T {
        let two = T::one() + T::one();
        (0..self.dim())
            .map(|i| self.l[(i, i)].ln())
            .fold(T::zero(), |a, b| a + b)
            * two
    }

    /// Quadratic form `vᵀ A⁻¹ v` via one forward substitution.
    pub fn inv_quad_form(&self, v: &[T]) -> T {
        let y = self.forward_sub(v);
        y.iter().map(|&x| x * x).sum()
    }
}

/// General square inverse by Gauss-Jordan elimination with partial pivoting.
///
/// Reserved for non-SPD matrices (test oracles, arbitrary invertible
/// transforms); model code paths use [`Cholesky`].
pub fn gauss_jordan_inverse<T: Scalar>(a: &Mat<T>) -> Result<Mat<T>> {
    assert!(a.is_square());
    let n = a.rows();
    let mut work = a.clone();
    let mut inv = Mat::identity(n);
    for col in 0..n {
        let mut pivot = col;
        let mut best = work[(col, col)].abs();
        for r in (col + 1)..n {
            let v = work[(r, col)].abs();
            if v > best {
                best = v;
                pivot = r;
            }
        }
        if best == T::zero() || !best.is_finite() {
            return Err(Error::Singular {
                context: "gauss_jordan_inverse",
            });
        }
        if pivot != col {
            for j in 0..n {
                let t = work[(col, j)];
                work[(col, j)] = work[(pivot, j)];
                work[(pivot, j)] = t;
                let t = inv[(col, j)];
                inv[(col, j)] = inv[(pivot, j)];
                inv[(pivot, j)] = t;
            }
        }
        let d = work[(col, col)];
        for j in 0..n {
            work[(col, j)] /= d;
            inv[(col, j)] /= d;
        }
        for r in 0..n {
            if r == col {
                continue;
            }
            let f = work[(r, col)];
            if f == T::zero() {
                continue;
            }
            for j in 0..n {
                let wt = work[(col, j)] * f;
                work[(r, j)] -= wt;
                let it = inv[(col, j)] * f;
                inv[(r, j)] -= it;
            }
        }
    }
    Ok(inv)
}

/// `log |det A|` via LU with partial pivoting; test-oracle and transform use.
pub fn log_abs_det<T: Scalar>(a: &Mat<T>) -> Result<T> {
    assert!(a.is_square());
    let n = a.rows();
    let mut work = a.clone();
    let mut acc = T::zero();
    for col in 0..n {
        let mut pivot = col;
        let mut best = work[(col, col)].abs();
        for r in (col + 1)..n {
            let v = work[(r, col)].abs();
            if v > best {
                best = v;
                pivot = r;
            }
        }
        if best == T::zero() || !best.is_finite() {
            return Err(Error::Singular {
                context: "log_abs_det",
            });
        }
        if pivot != col {
            for j in 0..n {
                let t = work[(col, j)];
                work[(col, j)] = work[(pivot, j)];
                work[(pivot, j)] = t;
            }
        }
        acc += work[(col, col)].abs().ln();
        for r in (col + 1)..n {
            let f = work[(r, col)] / work[(col, col)];
            if f == T::zero() {
                continue;
            }
            for j in col..n {
                let t = work[(col, j)] * f;
                work[(r, j)] -= t;
            }
        }
    }
    Ok(acc)
}
