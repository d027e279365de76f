//! Domain types and covariance-function primitives shared by all fitters.
//!
//! The covariance model is `Sigma_x = Psi + sum_k B_k x xᵀ B_kᵀ` with a
//! linear mean `mu = A w`; the mean regressor `w` may differ from the
//! covariance regressor `x` and defaults to it.

use crate::error::{dim_err, Error, Result};
use crate::linalg::{dot, outer, sub_vec, sym_eigen, Cholesky, Mat};
use crate::scalar::{c, Scalar};

/// Observed data: responses `Y` (n x p), covariance regressors `X` (n x q)
/// and mean regressors `W` (n x q_m).
#[derive(Clone, Debug)]
pub struct Dataset<T> {
    y: Mat<T>,
    x: Mat<T>,
    w: Mat<T>,
}

impl<T: Scalar> Dataset<T> {
    /// Builds a dataset; `w = None` aliases the mean design to `x`.
    ///
    /// Requires at least one row and fully finite entries. Full column
    /// rank of the designs is a fit-time check, not a construction check.
    pub fn new(y: Mat<T>, x: Mat<T>, w: Option<Mat<T>>) -> Result<Self> {
        if y.rows() == 0 {
            return Err(Error::InsufficientData {
                required: 1,
                actual: 0,
            });
        }
        let w = w.unwrap_or_else(|| x.clone());
        if x.rows() != y.rows() || w.rows() != y.rows() {
            return Err(dim_err(
                "Dataset rows",
                format!("{} rows in all of Y, X, W", y.rows()),
                format!("Y {}, X {}, W {}", y.rows(), x.rows(), w.rows()),
            ));
        }
        if !y.is_finite() || !x.is_finite() || !w.is_finite() {
            return Err(Error::NonFinite { context: "Dataset" });
        }
        Ok(Dataset { y, x, w })
    }

    /// A dataset with no rows, for prior and prior-predictive sampling
    /// where the likelihood contributes nothing.
    pub fn empty(p: usize, q: usize, q_m: usize) -> Self {
        Dataset {
            y: Mat::zeros(0, p),
            x: Mat::zeros(0, q),
            w: Mat::zeros(0, q_m),
        }
    }

    pub fn n(&self) -> usize {
        self.y.rows()
    }

    pub fn p(&self) -> usize {
        self.y.cols()
    }

    pub fn q(&self) -> usize {
        self.x.cols()
    }

    pub fn q_m(&self) -> usize {
        self.w.cols()
    }

    pub fn y(&self) -> &Mat<T> {
        &self.y
    }

    pub fn x(&self) -> &Mat<T> {
        &self.x
    }

    pub fn w(&self) -> &Mat<T> {
        &self.w
    }

    pub fn y_row(&self, i: usize) -> &[T] {
        self.y.row(i)
    }

    pub fn x_row(&self, i: usize) -> &[T] {
        self.x.row(i)
    }

    pub fn w_row(&self, i: usize) -> &[T] {
        self.w.row(i)
    }
}

/// Model parameters: mean coefficients `A`, rank components `B_1..B_r`
/// and the baseline covariance `Psi`.
#[derive(Clone, Debug)]
pub struct Params<T> {
    a: Mat<T>,
    bs: Vec<Mat<T>>,
    psi: Mat<T>,
}

impl<T: Scalar> Params<T> {
    /// Validates dimensions, the symmetry of `Psi` and its positive
    /// definiteness (via Cholesky; never silently regularized).
    pub fn new(a: Mat<T>, bs: Vec<Mat<T>>, psi: Mat<T>) -> Result<Self> {
        if bs.is_empty() {
            return Err(Error::InvalidConfig(
                "at least one rank component is required".into(),
            ));
        }
        let p = psi.rows();
        if !psi.is_square() {
            return Err(dim_err(
                "Psi",
                "square matrix".into(),
                format!("{}x{}", psi.rows(), psi.cols()),
            ));
        }
        let sym_tol = c::<T>(1e-8) * psi.max_abs().max(T::one());
        if !psi.is_symmetric(sym_tol) {
            return Err(Error::InvalidConfig("Psi must be symmetric".into()));
        }
        if a.rows() != p {
            return Err(dim_err(
                "A rows",
                format!("{p}"),
                format!("{}", a.rows()),
            ));
        }
        let q = bs[0].cols();
        for b in &bs {
            if b.rows() != p || b.cols() != q {
                return Err(dim_err(
                    "rank component",
                    format!("{p}x{q}"),
                    format!("{}x{}", b.rows(), b.cols()),
                ));
            }
        }
        let psi = psi.symmetrized();
        Cholesky::new(&psi)?;
        Ok(Params { a, bs, psi })
    }

    pub fn a(&self) -> &Mat<T> {
        &self.a
    }

    pub fn bs(&self) -> &[Mat<T>] {
        &self.bs
    }

    pub fn b(&self, k: usize) -> &Mat<T> {
        &self.bs[k]
    }

    pub fn psi(&self) -> &Mat<T> {
        &self.psi
    }

    pub fn rank(&self) -> usize {
        self.bs.len()
    }

    pub fn p(&self) -> usize {
        self.psi.rows()
    }

    pub fn q(&self) -> usize {
        self.bs[0].cols()
    }

    pub fn q_m(&self) -> usize {
        self.a.cols()
    }

    pub fn psi_cholesky(&self) -> Cholesky<T> {
        Cholesky::new(&self.psi).expect("Psi positive definite by construction")
    }

    /// Mean vector `A w`.
    pub fn mean_at(&self, w: &[T]) -> Result<Vec<T>> {
        if w.len() != self.q_m() {
            return Err(dim_err(
                "mean_at regressor",
                format!("{}", self.q_m()),
                format!("{}", w.len()),
            ));
        }
        Ok(self.a.mul_vec(w))
    }

    /// Covariance matrix `Psi + sum_k B_k x xᵀ B_kᵀ` at a regressor value.
    pub fn sigma_at(&self, x: &[T]) -> Result<Mat<T>> {
        if x.len() != self.q() {
            return Err(dim_err(
                "sigma_at regressor",
                format!("{}", self.q()),
                format!("{}", x.len()),
            ));
        }
        let mut sigma = self.psi.clone();
        for b in &self.bs {
            let l = b.mul_vec(x);
            for i in 0..self.p() {
                for j in 0..self.p() {
                    sigma[(i, j)] += l[i] * l[j];
                }
            }
        }
        Ok(sigma)
    }

    /// The `p x r` matrix whose columns are `B_k x`.
    pub(crate) fn loadings_at(&self, x: &[T]) -> Mat<T> {
        let p = self.p();
        let r = self.rank();
        let mut l = Mat::zeros(p, r);
        for (k, b) in self.bs.iter().enumerate() {
            let col = b.mul_vec(x);
            for i in 0..p {
                l[(i, k)] = col[i];
            }
        }
        l
    }

    /// Observed-data log-likelihood, additive constant included, so values
    /// are comparable across models and against generic density oracles.
    pub fn log_likelihood(&self, data: &Dataset<T>) -> Result<T> {
        if data.p() != self.p() || data.q() != self.q() || data.q_m() != self.q_m() {
            return Err(dim_err(
                "log_likelihood data",
                format!("p={} q={} q_m={}", self.p(), self.q(), self.q_m()),
                format!("p={} q={} q_m={}", data.p(), data.q(), data.q_m()),
            ));
        }
        let n = data.n();
        let p = self.p();
        let half = c::<T>(0.5);
        let ln_2pi = c::<T>(2.0) * T::PI();
        let mut ll = -c::<T>((n * p) as f64) * half * ln_2pi.ln();
        for i in 0..n {
            let sigma = self.sigma_at(data.x_row(i))?;
            let chol = Cholesky::new(&sigma)?;
            let mu = self.mean_at(data.w_row(i))?;
            let e = sub_vec(data.y_row(i), &mu);
            ll = ll - half * chol.log_det() - half * chol.inv_quad_form(&e);
        }
        Ok(ll)
    }

    /// Posterior law of the rank-1 latent scale for one observation.
    pub fn gamma_posterior(&self, y: &[T], x: &[T], w: &[T]) -> Result<GammaPosterior<T>> {
        if self.rank() != 1 {
            return Err(Error::InvalidConfig(
                "gamma_posterior is the rank-1 form; use the E-step moments for rank > 1".into(),
            ));
        }
        if y.len() != self.p() || x.len() != self.q() || w.len() != self.q_m() {
            return Err(dim_err(
                "gamma_posterior inputs",
                format!("p={} q={} q_m={}", self.p(), self.q(), self.q_m()),
                format!("p={} q={} q_m={}", y.len(), x.len(), w.len()),
            ));
        }
        let chol = self.psi_cholesky();
        let bx = self.bs[0].mul_vec(x);
        let v = T::one() / (T::one() + chol.inv_quad_form(&bx));
        let mu = self.mean_at(w)?;
        let e = sub_vec(y, &mu);
        let psi_inv_bx = chol.solve_vec(&bx);
        let m = v * dot(&e, &psi_inv_bx);
        Ok(GammaPosterior { m, v, s: v.sqrt() })
    }

    /// Deterministic resolution of the sign (rank 1) and rotation
    /// (rank > 1) nonidentifiability. `Sigma_x` is unchanged for all x.
    pub fn canonicalized(&self) -> Params<T> {
        let mut out = self.clone();
        let r = out.rank();
        if r > 1 && out.q() > 0 {
            let p = out.p();
            // Rotate so the matrix of first columns has orthogonal columns.
            let mut b1 = Mat::zeros(p, r);
            for (k, b) in out.bs.iter().enumerate() {
                for i in 0..p {
                    b1[(i, k)] = b[(i, 0)];
                }
            }
            let h = sym_eigen(&b1.tr_matmul(&b1)).vectors;
            let mut new_bs = vec![Mat::zeros(p, out.q()); r];
            for j in 0..out.q() {
                // p x r slab of column j across components, times H.
                for i in 0..p {
                    for k in 0..r {
                        let mut acc = T::zero();
                        for l in 0..r {
                            acc += out.bs[l][(i, j)] * h[(l, k)];
                        }
                        new_bs[k][(i, j)] = acc;
                    }
                }
            }
            out.bs = new_bs;
        }
        for b in &mut out.bs {
            flip_to_positive_leader(b);
        }
        out
    }

    /// Left-minus-right gaps of the rank-1 maximum-likelihood stationarity
    /// equations, plus the mean-coefficient score. All three are near zero
    /// at an MLE.
    pub fn score_residual(&self, data: &Dataset<T>) -> Result<ScoreResidual<T>> {
        if self.rank() != 1 {
            return Err(Error::InvalidConfig(
                "score_residual is defined for the rank-1 model".into(),
            ));
        }
        if data.p() != self.p() || data.q() != self.q() || data.q_m() != self.q_m() {
            return Err(dim_err(
                "score_residual data",
                format!("p={} q={} q_m={}", self.p(), self.q(), self.q_m()),
                format!("p={} q={} q_m={}", data.p(), data.q(), data.q_m()),
            ));
        }
        let p = self.p();
        let b = &self.bs[0];
        let mut a_gap = Mat::zeros(p, self.q_m());
        let mut psi_gap = Mat::zeros(p, p);
        let mut b_gap = Mat::zeros(p, self.q());
        for i in 0..data.n() {
            let x = data.x_row(i);
            let sigma = self.sigma_at(x)?;
            let chol = Cholesky::new(&sigma)?;
            let mu = self.mean_at(data.w_row(i))?;
            let e = sub_vec(data.y_row(i), &mu);
            let u = chol.solve_vec(&e); // Sigma^{-1} e
            let bx = b.mul_vec(x);
            let g = chol.solve_vec(&bx); // Sigma^{-1} B x
            let sigma_inv = chol.inverse();

            a_gap.add_block(0, 0, &outer(&u, data.w_row(i)));
            psi_gap.add_block(0, 0, &(&sigma_inv - &outer(&u, &u)));
            let scale = dot(&u, &bx);
            let term = &outer(&g, x) - &outer(&u, x).scale(scale);
            b_gap.add_block(0, 0, &term);
        }
        Ok(ScoreResidual {
            a_gap,
            psi_gap,
            b_gap,
        })
    }
}

/// Flips the sign of all entries so the largest-magnitude entry (first one
/// in row-major order on ties) is positive.
fn flip_to_positive_leader<T: Scalar>(b: &mut Mat<T>) {
    let mut best = T::zero();
    let mut best_val = T::zero();
    for i in 0..b.rows() {
        for j in 0..b.cols() {
            let v = b[(i, j)];
            if v.abs() > best {
                best = v.abs();
                best_val = v;
            }
        }
    }
    if best_val < T::zero() {
        for i in 0..b.rows() {
            for j in 0..b.cols() {
                b[(i, j)] = -b[(i, j)];
            }
        }
    }
}

/// Conditional normal law of the rank-1 latent scale: mean, variance and
/// its square root.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GammaPosterior<T> {
    pub m: T,
    pub v: T,
    pub s: T,
}

/// Stationarity gaps returned by [`Params::score_residual`].
#[derive(Clone, Debug)]
pub struct ScoreResidual<T> {
    /// Mean-coefficient score `sum_i Sigma_i^{-1} e_i w_iᵀ`.
    pub a_gap: Mat<T>,
    /// Gap of `sum_i Sigma_i^{-1} = sum_i Sigma_i^{-1} e_i e_iᵀ Sigma_i^{-1}`.
    pub psi_gap: Mat<T>,
    /// Gap of `sum_i Sigma_i^{-1} B x_i x_iᵀ = sum_i Sigma_i^{-1} e_i e_iᵀ Sigma_i^{-1} B x_i x_iᵀ`.
    pub b_gap: Mat<T>,
}

/// Converged fit with its likelihood trace.
#[derive(Clone, Debug)]
pub struct FitResult<T> {
    pub params: Params<T>,
    pub loglik_trace: Vec<T>,
    pub iterations: usize,
    pub converged: bool,
    pub final_loglik: T,
    pub warnings: Vec<String>,
}

/// Ordinary least squares for the mean design plus the maximum-likelihood
/// residual covariance (divisor n).
pub fn ols_mean_fit<T: Scalar>(data: &Dataset<T>) -> Result<(Mat<T>, Mat<T>)> {
    let n = data.n();
    let p = data.p();
    let q_m = data.q_m();
    if n == 0 {
        return Err(Error::InsufficientData {
            required: 1,
            actual: 0,
        });
    }
    let a = if q_m == 0 {
        Mat::zeros(p, 0)
    } else {
        let wtw = data.w().tr_matmul(data.w());
        let chol = Cholesky::new(&wtw).map_err(|_| Error::RankDeficient {
            block: "mean design W",
        })?;
        let wty = data.w().tr_matmul(data.y()); // q_m x p
        chol.solve_mat(&wty).transpose() // p x q_m
    };
    let resid = if q_m == 0 {
        data.y().clone()
    } else {
        data.y() - &data.w().matmul(&a.transpose())
    };
    let cov = resid.tr_matmul(&resid).scale(T::one() / c::<T>(n as f64));
    Ok((a, cov.symmetrized()))
}
