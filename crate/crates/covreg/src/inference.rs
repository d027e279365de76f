//! Expected Fisher information, Wald intervals and the likelihood-ratio
//! test of homoscedasticity, for the rank-1 model.
//!
//! The stacked parameter vector is `(vec A, vec B, vech Psi)` with
//! column-major `vec` and lower-triangle-by-column `vech`. The
//! mean-by-covariance cross blocks are odd moments of a centered normal
//! and vanish identically, so they are set to exact zeros rather than
//! accumulated.

use crate::error::{Error, Result};
use crate::linalg::{outer, sym_eigen, Cholesky, Mat};
use crate::model::{ols_mean_fit, Dataset, Params};
use crate::scalar::{c, RandScalar, Scalar};
use crate::special::{chi2_sf, normal_two_sided_quantile};

/// Duplication matrix G with `vec M = G vech M` for symmetric p x p M.
pub fn duplication_matrix<T: Scalar>(p: usize) -> Mat<T> {
    assert!(p >= 1);
    let mut g = Mat::zeros(p * p, p * (p + 1) / 2);
    let mut k = 0;
    for j in 0..p {
        for i in j..p {
            g[(j * p + i, k)] = T::one();
            if i != j {
                g[(i * p + j, k)] = T::one();
            }
            k += 1;
        }
    }
    g
}

/// Commutation matrix K with `K vec M = vec Mᵀ` for p x p M.
pub fn commutation_matrix<T: Scalar>(p: usize) -> Mat<T> {
    assert!(p >= 1);
    let mut k = Mat::zeros(p * p, p * p);
    for r in 0..p {
        for col in 0..p {
            k[(col * p + r, r * p + col)] = T::one();
        }
    }
    k
}

/// One Wald interval at a stated two-sided level.
#[derive(Clone, Copy, Debug)]
pub struct WaldInterval<T> {
    pub lower: T,
    pub upper: T,
    pub level: T,
}

/// Expected information over `(vec A, vec B, vech Psi)` with the derived
/// standard errors and Wald intervals.
#[derive(Clone, Debug)]
pub struct InformationReport<T> {
    pub info: Mat<T>,
    pub estimate: Vec<T>,
    pub se: Vec<T>,
    pub wald: Vec<WaldInterval<T>>,
    /// Set when the information was singular and a pseudo-inverse was used.
    pub pseudo_inverse_used: bool,
    /// Number of non-identified directions dropped by the pseudo-inverse.
    pub null_directions: usize,
    p: usize,
    q: usize,
    q_m: usize,
}

impl<T: Scalar> InformationReport<T> {
    /// Stacked index of `A[i, j]`.
    pub fn a_index(&self, i: usize, j: usize) -> usize {
        debug_assert!(i < self.p && j < self.q_m);
        j * self.p + i
    }

    /// Stacked index of `B[i, j]`.
    pub fn b_index(&self, i: usize, j: usize) -> usize {
        debug_assert!(i < self.p && j < self.q);
        self.p * self.q_m + j * self.p + i
    }

    /// Stacked index of `Psi[i, j]` with `i >= j` (vech by column).
    pub fn psi_index(&self, i: usize, j: usize) -> usize {
        debug_assert!(j <= i && i < self.p);
        let base = self.p * self.q_m + self.p * self.q;
        let mut off = 0;
        for col in 0..j {
            off += self.p - col;
        }
        base + off + (i - j)
    }

    pub fn dim(&self) -> usize {
        self.info.rows()
    }
}

/// Assembles the expected information summed over the design rows and the
/// Wald intervals at the requested two-sided level.
pub fn expected_information<T: Scalar>(
    params: &Params<T>,
    data: &Dataset<T>,
    level: T,
) -> Result<InformationReport<T>> {
    if params.rank() != 1 {
        return Err(Error::InvalidConfig(
            "expected information is derived for the rank-1 model".into(),
        ));
    }
    if !(level > T::zero() && level < T::one()) {
        return Err(Error::InvalidConfig(
            "interval level must lie strictly inside (0, 1)".into(),
        ));
    }
    let p = params.p();
    let q = params.q();
    let q_m = params.q_m();
    let na = p * q_m;
    let nb = p * q;
    let ns = p * (p + 1) / 2;
    let dim = na + nb + ns;

    let g = duplication_matrix::<T>(p);
    let kpp = commutation_matrix::<T>(p);
    let eye_p = Mat::identity(p);
    let mut i_plus_k = Mat::identity(p * p);
    i_plus_k.add_block(0, 0, &kpp);

    let b = params.b(0);
    let mut i_aa = Mat::zeros(na, na);
    let mut i_bb = Mat::zeros(nb, nb);
    let mut i_bpsi = Mat::zeros(nb, ns);
    let mut i_psipsi = Mat::zeros(ns, ns);
    let half = c::<T>(0.5);

    for i in 0..data.n() {
        let x = data.x_row(i);
        let w = data.w_row(i);
        let sigma = params.sigma_at(x)?;
        let sigma_inv = Cholesky::new(&sigma)?.inverse().symmetrized();
        let s2 = sigma_inv.kron(&sigma_inv);

        if na > 0 {
            i_aa.add_block(0, 0, &outer(w, w).kron(&sigma_inv));
        }

        let bx = b.mul_vec(x);
        let bxxt = outer(&bx, x); // p x q
        let right = bxxt.kron(&eye_p); // p² x pq
        let left = right.transpose(); // pq x p², equals (x xᵀ Bᵀ ⊗ I_p)
        let ls2 = left.matmul(&s2);
        i_bb.add_block(0, 0, &ls2.matmul(&i_plus_k).matmul(&right));
        i_bpsi.add_block(0, 0, &ls2.matmul(&g));
        i_psipsi.add_block(0, 0, &g.tr_matmul(&s2).matmul(&g).scale(half));
    }

    let mut info = Mat::zeros(dim, dim);
    info.set_block(0, 0, &i_aa);
    info.set_block(na, na, &i_bb.symmetrized());
    info.set_block(na, na + nb, &i_bpsi);
    info.set_block(na + nb, na, &i_bpsi.transpose());
    info.set_block(na + nb, na + nb, &i_psipsi.symmetrized());

    let (cov, pseudo_inverse_used, null_directions) = match Cholesky::new(&info) {
        Ok(chol) => (chol.inverse(), false, 0),
        Err(_) => {
            let eig = sym_eigen(&info);
            let (pinv, dropped) = eig.pseudo_inverse(c(1e-12));
            (pinv, true, dropped)
        }
    };

    let mut estimate = Vec::with_capacity(dim);
    estimate.extend(params.a().vec_cm());
    estimate.extend(b.vec_cm());
    estimate.extend(params.psi().vech());

    let z = normal_two_sided_quantile(level);
    let mut se = Vec::with_capacity(dim);
    let mut wald = Vec::with_capacity(dim);
    for j in 0..dim {
        let var = cov[(j, j)].max(T::zero());
        let s = var.sqrt();
        se.push(s);
        wald.push(WaldInterval {
            lower: estimate[j] - z * s,
            upper: estimate[j] + z * s,
            level,
        });
    }

    Ok(InformationReport {
        info,
        estimate,
        se,
        wald,
        pseudo_inverse_used,
        null_directions,
        p,
        q,
        q_m,
    })
}

/// Outcome of the likelihood-ratio test.
#[derive(Clone, Copy, Debug)]
pub struct LrTestResult<T> {
    pub statistic: T,
    pub df: usize,
    pub p_value: T,
    pub reject: bool,
    pub alpha: T,
    pub loglik_null: T,
    pub loglik_alt: T,
}

/// Builds a test result from two maximized log-likelihoods; the statistic
/// is clamped at zero (it can only dip below through numerical noise).
pub fn lr_test_from_logliks<T: Scalar>(
    loglik_null: T,
    loglik_alt: T,
    df: usize,
    alpha: T,
) -> LrTestResult<T> {
    let raw = (T::one() + T::one()) * (loglik_alt - loglik_null);
    let statistic = raw.max(T::zero());
    let p_value = chi2_sf(statistic, df);
    LrTestResult {
        statistic,
        df,
        p_value,
        reject: p_value < alpha,
        alpha,
        loglik_null,
        loglik_alt,
    }
}

/// Homoscedastic maximum-likelihood fit: OLS mean coefficients and the
/// residual covariance with divisor n, packaged with `B = 0`.
pub fn homoscedastic_fit<T: Scalar>(data: &Dataset<T>) -> Result<(Params<T>, T)> {
    let (a, cov) = ols_mean_fit(data)?;
    let params = Params::new(a, vec![Mat::zeros(data.p(), data.q())], cov)?;
    let ll = params.log_likelihood(data)?;
    Ok((params, ll))
}

/// Likelihood-ratio test of constant covariance against the rank-1
/// alternative, on p·q degrees of freedom.
pub fn lr_test<T: RandScalar>(
    data: &Dataset<T>,
    config: &crate::em::EmConfig<T>,
    alpha: T,
) -> Result<LrTestResult<T>> {
    let (_, ll_null) = homoscedastic_fit(data)?;
    let alt = crate::em::fit_em(data, 1, config)?;
    Ok(lr_test_from_logliks(
        ll_null,
        alt.final_loglik,
        data.p() * data.q(),
        alpha,
    ))
}

/// Result of the test-then-select procedure for the mean coefficients.
#[derive(Clone, Debug)]
pub struct ModelSelection<T> {
    /// Covariance-regression parameters when the test rejects, the
    /// homoscedastic parameters otherwise.
    pub params: Params<T>,
    pub used_cvr: bool,
    pub test: LrTestResult<T>,
}

/// Runs the homoscedasticity test and returns the estimator the test
/// selects.
pub fn model_selected_fit<T: RandScalar>(
    data: &Dataset<T>,
    config: &crate::em::EmConfig<T>,
    alpha: T,
) -> Result<ModelSelection<T>> {
    let (null_params, ll_null) = homoscedastic_fit(data)?;
    let alt = crate::em::fit_em(data, 1, config)?;
    let test = lr_test_from_logliks(ll_null, alt.final_loglik, data.p() * data.q(), alpha);
    let (params, used_cvr) = if test.reject {
        (alt.params, true)
    } else {
        (null_params, false)
    };
    Ok(ModelSelection {
        params,
        used_cvr,
        test,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::em::EmConfig;
    use crate::linalg::gauss_jordan_inverse;
    use crate::scalar::RandScalar;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn assert_close(a: f64, b: f64, tol: f64) {
        assert!((a - b).abs() <= tol, "expected {b}, got {a} (tol {tol})");
    }

    fn random_sym(rng: &mut ChaCha8Rng, p: usize) -> Mat<f64> {
        Mat::from_fn(p, p, |_, _| f64::standard_normal(rng)).symmetrized()
    }

    #[test]
    fn duplication_matrix_small_cases() {
        let g1 = duplication_matrix::<f64>(1);
        assert_eq!(g1.shape(), (1, 1));
        assert_eq!(g1[(0, 0)], 1.0);

        // p = 2 maps (m11, m21, m22) to (m11, m21, m21, m22).
        let g2 = duplication_matrix::<f64>(2);
        assert_eq!(g2.shape(), (4, 3));
        let v = g2.mul_vec(&[5.0, 7.0, 9.0]);
        assert_eq!(v, vec![5.0, 7.0, 7.0, 9.0]);
    }

    #[test]
    fn duplication_identity_on_random_symmetric() {
        let mut rng = ChaCha8Rng::seed_from_u64(40);
        for p in 1..=6 {
            let g = duplication_matrix::<f64>(p);
            for _ in 0..10 {
                let m = random_sym(&mut rng, p);
                let lhs = m.vec_cm();
                let rhs = g.mul_vec(&m.vech());
                assert_eq!(lhs, rhs, "vec M must equal G vech M exactly");
            }
        }
    }

    #[test]
    fn commutation_matrix_properties() {
        let k1 = commutation_matrix::<f64>(1);
        assert_eq!(k1[(0, 0)], 1.0);

        let k2 = commutation_matrix::<f64>(2);
        // Permutation swapping the middle entries of vec.
        let v = k2.mul_vec(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(v, vec![1.0, 3.0, 2.0, 4.0]);

        let mut rng = ChaCha8Rng::seed_from_u64(41);
        for p in 1..=6 {
            let k = commutation_matrix::<f64>(p);
            let k2 = k.matmul(&k);
            assert!((&k2 - &Mat::identity(p * p)).max_abs() == 0.0, "K² = I");
            let m = Mat::from_fn(p, p, |_, _| f64::standard_normal(&mut rng));
            let lhs = k.mul_vec(&m.vec_cm());
            let rhs = m.transpose().vec_cm();
            assert_eq!(lhs, rhs);
        }
    }

    fn test_params(rng: &mut ChaCha8Rng) -> Params<f64> {
        let a = Mat::from_fn(2, 2, |_, _| 0.8 * f64::standard_normal(rng));
        let b = Mat::from_fn(2, 2, |_, _| 0.6 * f64::standard_normal(rng));
        let g = Mat::from_fn(2, 2, |_, _| 0.5 * f64::standard_normal(rng));
        let mut psi = g.tr_matmul(&g);
        for i in 0..2 {
            psi[(i, i)] += 0.8;
        }
        Params::new(a, vec![b], psi).unwrap()
    }

    #[test]
    fn cross_blocks_with_mean_are_exactly_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let params = test_params(&mut rng);
        let x = Mat::from_fn(4, 2, |_, j| if j == 0 { 1.0 } else { f64::uniform_pm1(&mut rng) });
        let y = Mat::zeros(4, 2);
        let data = Dataset::new(y, x, None).unwrap();
        let rep = expected_information(&params, &data, 0.95).unwrap();
        // a-b and a-psi blocks: rows 0..4, cols 4..11.
        for i in 0..4 {
            for j in 4..rep.dim() {
                assert_eq!(rep.info[(i, j)], 0.0);
                assert_eq!(rep.info[(j, i)], 0.0);
            }
        }
    }

    #[test]
    fn information_matches_score_covariance_oracle() {
        // Empirical covariance of independently implemented score vectors.
        let mut rng = ChaCha8Rng::seed_from_u64(43);
        let params = test_params(&mut rng);
        let x = [1.0, 0.6];
        let data_x = Mat::from_rows(&[x.to_vec()]);
        let data = Dataset::new(Mat::zeros(1, 2), data_x, None).unwrap();
        let rep = expected_information(&params, &data, 0.95).unwrap();

        let sigma = params.sigma_at(&x).unwrap();
        let sigma_inv = gauss_jordan_inverse(&sigma).unwrap();
        let sig_chol = Cholesky::new(&sigma).unwrap();
        let g = duplication_matrix::<f64>(2);
        let b = params.b(0);
        let mu = params.mean_at(&x).unwrap();

        let draws = 60_000;
        let dim = rep.dim();
        let mut acc = Mat::zeros(dim, dim);
        for _ in 0..draws {
            let z: Vec<f64> = (0..2).map(|_| f64::standard_normal(&mut rng)).collect();
            let noise = sig_chol.lower().mul_vec(&z);
            let y: Vec<f64> = (0..2).map(|j| mu[j] + noise[j]).collect();
            let e: Vec<f64> = (0..2).map(|j| y[j] - mu[j]).collect();
            let u = sigma_inv.mul_vec(&e);
            // H = Sigma⁻¹ e eᵀ Sigma⁻¹ - Sigma⁻¹.
            let h = &outer(&u, &u) - &sigma_inv;
            let la = outer(&u, &x).vec_cm();
            let bx = b.mul_vec(&x);
            let lb = h.matmul(&outer(&bx, &x)).vec_cm();
            let lpsi: Vec<f64> = g.tr_mul_vec(&h.vec_cm()).iter().map(|v| v / 2.0).collect();
            let mut score = Vec::with_capacity(dim);
            score.extend(la);
            score.extend(lb);
            score.extend(lpsi);
            for i in 0..dim {
                for j in 0..dim {
                    acc[(i, j)] += score[i] * score[j];
                }
            }
        }
        let emp = acc.scale(1.0 / draws as f64);
        let diff = (&emp - &rep.info).frobenius_norm() / rep.info.frobenius_norm();
        assert!(diff < 0.08, "relative Frobenius error {diff}");
    }

    #[test]
    fn information_is_invariant_to_sign_of_b() {
        let mut rng = ChaCha8Rng::seed_from_u64(44);
        let params = test_params(&mut rng);
        let flipped = Params::new(
            params.a().clone(),
            vec![params.b(0).scale(-1.0)],
            params.psi().clone(),
        )
        .unwrap();
        let x = Mat::from_fn(5, 2, |_, j| if j == 0 { 1.0 } else { f64::uniform_pm1(&mut rng) });
        let data = Dataset::new(Mat::zeros(5, 2), x, None).unwrap();
        let r1 = expected_information(&params, &data, 0.95).unwrap();
        let r2 = expected_information(&flipped, &data, 0.95).unwrap();

        let (na, nb) = (4, 4);
        let dim = r1.dim();
        for i in 0..dim {
            for j in 0..dim {
                let in_b_row = i >= na && i < na + nb;
                let in_b_col = j >= na && j < na + nb;
                let expect_flip = in_b_row ^ in_b_col;
                let sign = if expect_flip { -1.0 } else { 1.0 };
                assert_close(r2.info[(i, j)], sign * r1.info[(i, j)], 1e-10);
            }
        }
        for j in 0..dim {
            assert_close(r2.se[j], r1.se[j], 1e-10);
        }
    }

    #[test]
    fn wald_widths_shrink_like_root_n() {
        let mut rng = ChaCha8Rng::seed_from_u64(45);
        let params = test_params(&mut rng);
        let base = Mat::from_fn(30, 2, |_, j| if j == 0 { 1.0 } else { f64::uniform_pm1(&mut rng) });
        let doubled = Mat::vstack(&[&base, &base]);
        let d1 = Dataset::new(Mat::zeros(30, 2), base, None).unwrap();
        let d2 = Dataset::new(Mat::zeros(60, 2), doubled, None).unwrap();
        let r1 = expected_information(&params, &d1, 0.95).unwrap();
        let r2 = expected_information(&params, &d2, 0.95).unwrap();
        let root2 = 2.0f64.sqrt();
        for j in 0..r1.dim() {
            let ratio = r1.se[j] / r2.se[j];
            assert!(
                (ratio - root2).abs() < 0.01 * root2,
                "se ratio {ratio} at {j}"
            );
        }
    }

    #[test]
    fn zero_b_yields_flagged_pseudo_inverse() {
        let params = Params::new(
            Mat::zeros(2, 2),
            vec![Mat::zeros(2, 2)],
            Mat::identity(2),
        )
        .unwrap();
        let x = Mat::from_fn(6, 2, |i, j| if j == 0 { 1.0 } else { (i as f64) / 3.0 - 1.0 });
        let data = Dataset::new(Mat::zeros(6, 2), x, None).unwrap();
        let rep = expected_information(&params, &data, 0.95).unwrap();
        assert!(rep.pseudo_inverse_used);
        assert_eq!(rep.null_directions, 4, "all B directions are flat");
        // Identified coordinates still carry finite standard errors.
        assert!(rep.se[rep.a_index(0, 0)] > 0.0);
        assert!(rep.se[rep.psi_index(1, 1)] > 0.0);
    }

    #[test]
    fn index_helpers_address_the_stacked_vector() {
        let mut rng = ChaCha8Rng::seed_from_u64(46);
        let params = test_params(&mut rng);
        let x = Mat::from_fn(3, 2, |_, _| f64::standard_normal(&mut rng));
        let data = Dataset::new(Mat::zeros(3, 2), x, None).unwrap();
        let rep = expected_information(&params, &data, 0.95).unwrap();
        assert_eq!(rep.estimate[rep.a_index(1, 0)], params.a()[(1, 0)]);
        assert_eq!(rep.estimate[rep.b_index(0, 1)], params.b(0)[(0, 1)]);
        assert_eq!(rep.estimate[rep.psi_index(1, 0)], params.psi()[(1, 0)]);
        assert_eq!(rep.estimate[rep.psi_index(1, 1)], params.psi()[(1, 1)]);
        assert_eq!(rep.dim(), 11);
    }

    fn simulate_null(rng: &mut ChaCha8Rng, n: usize) -> Dataset<f64> {
        // Homoscedastic data: y ~ N(A x, Psi).
        let a = Mat::from_rows(&[vec![1.0, -1.0], vec![-1.0, 1.0]]);
        let psi = Mat::from_rows(&[vec![4.0 / 3.0, -2.0 / 3.0], vec![-2.0 / 3.0, 4.0 / 3.0]]);
        let chol = Cholesky::new(&psi).unwrap();
        let x = Mat::from_fn(n, 2, |_, j| if j == 0 { 1.0 } else { f64::uniform_pm1(rng) });
        let mut y = Mat::zeros(n, 2);
        for i in 0..n {
            let mu = a.mul_vec(x.row(i));
            let z: Vec<f64> = (0..2).map(|_| f64::standard_normal(rng)).collect();
            let e = chol.lower().mul_vec(&z);
            for j in 0..2 {
                y[(i, j)] = mu[j] + e[j];
            }
        }
        Dataset::new(y, x, None).unwrap()
    }

    #[test]
    fn lr_statistic_is_twice_the_loglik_gap() {
        let mut rng = ChaCha8Rng::seed_from_u64(47);
        let data = simulate_null(&mut rng, 80);
        let config = EmConfig {
            max_iters: 300,
            ..EmConfig::with_seed(3)
        };
        let result = lr_test(&data, &config, 0.05).unwrap();
        assert_eq!(result.df, 4);
        assert!(result.statistic >= 0.0);
        let expect = 2.0 * (result.loglik_alt - result.loglik_null);
        assert_close(result.statistic, expect.max(0.0), 1e-12);
        assert!(result.p_value >= 0.0 && result.p_value <= 1.0);
    }

    #[test]
    fn lr_statistic_vanishes_when_alt_stays_at_null() {
        let mut rng = ChaCha8Rng::seed_from_u64(48);
        let data = simulate_null(&mut rng, 60);
        // A perturbation of the zero start this small never escapes the
        // saddle within the iteration budget, emulating a fit pinned at
        // the homoscedastic ridge.
        let config = EmConfig {
            max_iters: 40,
            init_scale: 1e-12,
            n_restarts: 1,
            ..EmConfig::with_seed(9)
        };
        let result = lr_test(&data, &config, 0.05).unwrap();
        assert!(result.statistic < 1e-6);
        assert!(result.p_value > 0.999);
        assert!(!result.reject);
    }

    #[test]
    fn model_selection_returns_the_tested_estimator() {
        let mut rng = ChaCha8Rng::seed_from_u64(49);
        let data = simulate_null(&mut rng, 70);
        let config = EmConfig {
            max_iters: 250,
            ..EmConfig::with_seed(11)
        };
        let selection = model_selected_fit(&data, &config, 0.05).unwrap();
        if selection.used_cvr {
            assert!(selection.test.reject);
            let alt = crate::em::fit_em(&data, 1, &config).unwrap();
            assert!((selection.params.a() - alt.params.a()).max_abs() == 0.0);
        } else {
            assert!(!selection.test.reject);
            let (null_params, _) = homoscedastic_fit(&data).unwrap();
            assert!((selection.params.a() - null_params.a()).max_abs() == 0.0);
            assert_eq!(selection.params.b(0).max_abs(), 0.0);
        }
    }
}
