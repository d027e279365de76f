use crate::linalg::Mat;
use crate::scalar::{c, Scalar};

/// Eigendecomposition `A = V diag(values) Vᵀ` of a symmetric matrix.
///
/// Values are sorted in descending order; each eigenvector's sign is fixed
/// so its largest-magnitude entry is positive, which keeps downstream
/// canonical forms deterministic.
#[derive(Clone, Debug)]
pub struct SymEigen<T> {
    pub values: Vec<T>,
    pub vectors: Mat<T>,
}

/// Cyclic Jacobi rotations; unconditionally convergent for symmetric input.
pub fn sym_eigen<T: Scalar>(a: &Mat<T>) -> SymEigen<T> {
    assert!(a.is_square(), "sym_eigen needs a square matrix");
    let n = a.rows();
    let mut m = a.symmetrized();
    let mut v = Mat::identity(n);
    if n <= 1 {
        return finish(m, v);
    }

    let tol = c::<T>(1e-14);
    let max_sweeps = 64;
    for _ in 0..max_sweeps {
        let mut off = T::zero();
        for i in 0..n {
            for j in (i + 1)..n {
                off += m[(i, j)] * m[(i, j)];
            }
        }
        let scale = m.frobenius_norm();
        if off.sqrt() <= tol * scale.max(T::one()) {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = m[(p, q)];
                if apq == T::zero() {
                    continue;
                }
                let app = m[(p, p)];
                let aqq = m[(q, q)];
                let theta = (aqq - app) / (c::<T>(2.0) * apq);
                // Stable tangent of the rotation angle.
                let t = {
                    let abs_theta = theta.abs();
                    let sign = if theta >= T::zero() { T::one() } else { -T::one() };
                    sign / (abs_theta + (T::one() + abs_theta * abs_theta).sqrt())
                };
                let cth = T::one() / (T::one() + t * t).sqrt();
                let sth = t * cth;

                for k in 0..n {
                    let mkp = m[(k, p)];
                    let mkq = m[(k, q)];
                    m[(k, p)] = cth * mkp - sth * mkq;
                    m[(k, q)] = sth * mkp + cth * mkq;
                }
                for k in 0..n {
                    let mpk = m[(p, k)];
                    let mqk = m[(q, k)];
                    m[(p, k)] = cth * mpk - sth * mqk;
                    m[(q, k)] = sth * mpk + cth * mqk;
                }
                for k in 0..n {
                    let vkp = v[(k, p)];
                    let vkq = v[(k, q)];
                    v[(k, p)] = cth * vkp - sth * vkq;
                    v[(k, q)] = sth * vkp + cth * vkq;
                }
            }
        }
    }
    finish(m, v)
}

fn finish<T: Scalar>(m: Mat<T>, v: Mat<T>) -> SymEigen<T> {
    let n = m.rows();
    let mut order: Vec<usize> = (0..n).collect();
    let values_raw: Vec<T> = (0..n).map(|i| m[(i, i)]).collect();
    order.sort_by(|&a, &b| values_raw[b].partial_cmp(&values_raw[a]).unwrap());

    let mut values = Vec::with_capacity(n);
    let mut vectors = Mat::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        values.push(values_raw[src]);
        let col = v.col(src);
        // Sign convention: largest-magnitude entry positive.
        let mut best = 0;
        for k in 1..n {
            if col[k].abs() > col[best].abs() {
                best = k;
            }
        }
        let flip = if n > 0 && col[best] < T::zero() { -T::one() } else { T::one() };
        for k in 0..n {
            vectors[(k, dst)] = col[k] * flip;
        }
    }
    SymEigen { values, vectors }
}

impl<T: Scalar> SymEigen<T> {
    /// Reassembles `V f(Λ) Vᵀ` for an elementwise eigenvalue map.
    pub fn map_rebuild(&self, f: impl Fn(T) -> T) -> Mat<T> {
        let n = self.values.len();
        let mut out = Mat::zeros(n, n);
        for k in 0..n {
            let lk = f(self.values[k]);
            if lk == T::zero() {
                continue;
            }
            for i in 0..n {
                let vik = self.vectors[(i, k)];
                for j in 0..n {
                    out[(i, j)] += lk * vik * self.vectors[(j, k)];
                }
            }
        }
        out
    }

    /// Symmetric square root; tiny negative eigenvalues are clamped to zero.
    pub fn sqrt(&self) -> Mat<T> {
        self.map_rebuild(|l| if l > T::zero() { l.sqrt() } else { T::zero() })
    }

    /// Moore-Penrose pseudo-inverse. Returns the inverse and the number of
    /// eigenvalues treated as zero under `rcond` relative to the largest.
    pub fn pseudo_inverse(&self, rcond: T) -> (Mat<T>, usize) {
        let lmax = self
            .values
            .iter()
            .fold(T::zero(), |a, &b| a.max(b.abs()));
        let cut = rcond * lmax;
        let dropped = self.values.iter().filter(|&&l| l.abs() <= cut).count();
        let inv = self.map_rebuild(|l| if l.abs() > cut { T::one() / l } else { T::zero() });
        (inv, dropped)
    }

    pub fn min_value(&self) -> T {
        self.values
            .iter()
            .fold(T::infinity(), |a, &b| a.min(b))
    }
}

/// Symmetric positive-semidefinite square root, with closed forms for the
/// 1x1 and 2x2 cases that dominate the fitters' inner loops.
pub fn sym_sqrt<T: Scalar>(m: &Mat<T>) -> Mat<T> {
    match m.rows() {
        0 => m.clone(),
        1 => {
            let v = m[(0, 0)].max(T::zero()).sqrt();
            Mat::from_row_major(1, 1, vec![v])
        }
        2 => {
            let tr = m[(0, 0)] + m[(1, 1)];
            let det = (m[(0, 0)] * m[(1, 1)] - m[(0, 1)] * m[(1, 0)]).max(T::zero());
            let s = det.sqrt();
            let t2 = tr + s + s;
            if t2 <= T::zero() {
                return Mat::zeros(2, 2);
            }
            let t = t2.sqrt();
            let mut out = m.clone();
            out[(0, 0)] += s;
            out[(1, 1)] += s;
            out.scale(T::one() / t)
        }
        _ => sym_eigen(m).sqrt(),
    }
}

/// Smallest eigenvalue of a symmetric matrix; closed forms for the small
/// cases.
pub fn sym_min_eigenvalue<T: Scalar>(m: &Mat<T>) -> T {
    match m.rows() {
        0 => T::zero(),
        1 => m[(0, 0)],
        2 => {
            let half = T::one() / (T::one() + T::one());
            let tr = m[(0, 0)] + m[(1, 1)];
            let det = m[(0, 0)] * m[(1, 1)] - m[(0, 1)] * m[(1, 0)];
            let disc = (tr * tr - c::<T>(4.0) * det).max(T::zero()).sqrt();
            (tr - disc) * half
        }
        _ => sym_eigen(m).min_value(),
    }
}
