//! Maximum-likelihood estimation via the EM algorithm.
//!
//! The latent-scale representation `y = A w + sum_k gamma_k B_k x + eps`
//! makes both steps closed-form: the E-step is a conditional normal for
//! the latent vector, and the M-step is a single multivariate least
//! squares solve on an augmented design whose pseudo-rows carry the
//! posterior spread of the latent scales.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::linalg::{dot, sub_vec, sym_min_eigenvalue, sym_sqrt, Cholesky, Mat};
use crate::model::{ols_mean_fit, Dataset, FitResult, Params};
use crate::scalar::{c, RandScalar, Scalar};

/// EM driver configuration.
///
/// Convergence is declared on the relative change of the observed-data
/// log-likelihood, not on parameter movement: for ranks above one the
/// rotation nonidentifiability lets parameters wander at constant
/// likelihood.
#[derive(Clone, Debug)]
pub struct EmConfig<T> {
    pub max_iters: usize,
    pub rel_tol: T,
    pub init_seed: u64,
    pub init_scale: T,
    pub n_restarts: usize,
}

impl<T: Scalar> Default for EmConfig<T> {
    fn default() -> Self {
        EmConfig {
            max_iters: 5000,
            rel_tol: c(1e-8),
            init_seed: 0,
            init_scale: c(0.1),
            n_restarts: 3,
        }
    }
}

impl<T: Scalar> EmConfig<T> {
    pub fn with_seed(seed: u64) -> Self {
        EmConfig {
            init_seed: seed,
            ..Self::default()
        }
    }

    fn validate(&self) -> Result<()> {
        if self.max_iters < 1 {
            return Err(Error::InvalidConfig("max_iters must be at least 1".into()));
        }
        if self.rel_tol <= T::zero() || self.rel_tol.is_nan() {
            return Err(Error::InvalidConfig("rel_tol must be positive".into()));
        }
        if self.init_scale <= T::zero() || self.init_scale.is_nan() {
            return Err(Error::InvalidConfig("init_scale must be positive".into()));
        }
        if self.n_restarts < 1 {
            return Err(Error::InvalidConfig("n_restarts must be at least 1".into()));
        }
        Ok(())
    }
}

/// Per-observation posterior moments of the latent scales.
#[derive(Clone, Debug)]
pub struct PosteriorMoments<T> {
    /// Posterior means, one length-r row per observation.
    pub means: Mat<T>,
    /// Posterior covariances, one r x r SPD matrix per observation.
    pub covs: Vec<Mat<T>>,
}

impl<T: Scalar> PosteriorMoments<T> {
    pub fn rank(&self) -> usize {
        self.means.cols()
    }
}

/// Augmented least-squares system for the M-step.
///
/// The first n rows regress the observed responses on
/// `(w_iᵀ, m_{i,1} x_iᵀ, ..., m_{i,r} x_iᵀ)`; the following n·r pseudo-rows
/// have zero response and carry `S_i`-weighted copies of `x_i` per latent
/// component, where `S_i` is the symmetric square root of the posterior
/// covariance, so the solve reproduces `E[gamma gammaᵀ]` exactly. For
/// rank 1 this is the 2n-row system with `s_i = v_i^{1/2}`.
#[derive(Clone, Debug)]
pub struct AugmentedDesign<T> {
    pub xt: Mat<T>,
    pub yt: Mat<T>,
}

impl<T: Scalar> AugmentedDesign<T> {
    pub fn new(data: &Dataset<T>, moments: &PosteriorMoments<T>) -> Self {
        let n = data.n();
        let p = data.p();
        let q = data.q();
        let q_m = data.q_m();
        let r = moments.rank();
        let cols = q_m + r * q;

        let mut xt = Mat::zeros(n * (1 + r), cols);
        let mut yt = Mat::zeros(n * (1 + r), p);
        for i in 0..n {
            let x = data.x_row(i);
            {
                let row = xt.row_mut(i);
                row[..q_m].copy_from_slice(data.w_row(i));
                for k in 0..r {
                    let m = moments.means[(i, k)];
                    for (dst, &xv) in row[q_m + k * q..q_m + (k + 1) * q].iter_mut().zip(x) {
                        *dst = m * xv;
                    }
                }
            }
            yt.row_mut(i).copy_from_slice(data.y_row(i));

            let s = sym_sqrt(&moments.covs[i]);
            for k in 0..r {
                let row = xt.row_mut(n + i * r + k);
                for l in 0..r {
                    let w = s[(k, l)];
                    for (dst, &xv) in row[q_m + l * q..q_m + (l + 1) * q].iter_mut().zip(x) {
                        *dst = w * xv;
                    }
                }
            }
        }
        AugmentedDesign { xt, yt }
    }
}

/// E-step: posterior moments of the latent scale vector per observation.
///
/// With `L_i = [B_1 x_i | ... | B_r x_i]`,
/// `V_i = (I_r + L_iᵀ Psi⁻¹ L_i)⁻¹` and
/// `m_i = V_i L_iᵀ Psi⁻¹ (y_i - A w_i)`; the rank-1 case reduces to
/// [`Params::gamma_posterior`].
pub fn e_step<T: Scalar>(params: &Params<T>, data: &Dataset<T>) -> Result<PosteriorMoments<T>> {
    let n = data.n();
    let r = params.rank();
    let psi_chol = params.psi_cholesky();
    let mut means = Mat::zeros(n, r);
    let mut covs = Vec::with_capacity(n);
    if r == 1 {
        let b = params.b(0);
        for i in 0..n {
            let bx = b.mul_vec(data.x_row(i));
            let psi_inv_bx = psi_chol.solve_vec(&bx);
            let v = T::one() / (T::one() + dot(&bx, &psi_inv_bx));
            let mu = params.mean_at(data.w_row(i))?;
            let e = sub_vec(data.y_row(i), &mu);
            means[(i, 0)] = v * dot(&e, &psi_inv_bx);
            covs.push(Mat::from_row_major(1, 1, vec![v]));
        }
        return Ok(PosteriorMoments { means, covs });
    }
    for i in 0..n {
        let l = params.loadings_at(data.x_row(i));
        let psi_inv_l = psi_chol.solve_mat(&l); // p x r
        let mut g = l.tr_matmul(&psi_inv_l); // r x r
        for k in 0..r {
            g[(k, k)] += T::one();
        }
        let g = g.symmetrized();
        let g_chol = Cholesky::new(&g)?;
        let v = g_chol.inverse().symmetrized();

        let mu = params.mean_at(data.w_row(i))?;
        let e = sub_vec(data.y_row(i), &mu);
        let t = psi_inv_l.tr_mul_vec(&e); // Lᵀ Psi⁻¹ e
        let m = g_chol.solve_vec(&t);
        for k in 0..r {
            means[(i, k)] = m[k];
        }
        covs.push(v);
    }
    Ok(PosteriorMoments { means, covs })
}

/// M-step: weighted multivariate least squares on the augmented design.
/// The covariance divisor is n, the number of actual observations.
pub fn m_step<T: Scalar>(
    moments: &PosteriorMoments<T>,
    data: &Dataset<T>,
) -> Result<Params<T>> {
    m_step_full(moments, data).map(|(params, _)| params)
}

pub(crate) fn m_step_full<T: Scalar>(
    moments: &PosteriorMoments<T>,
    data: &Dataset<T>,
) -> Result<(Params<T>, bool)> {
    let n = data.n();
    let p = data.p();
    let q = data.q();
    let q_m = data.q_m();
    let r = moments.rank();

    let design = AugmentedDesign::new(data, moments);
    let gram = design.xt.tr_matmul(&design.xt);
    let gram_chol = Cholesky::new(&gram).map_err(|_| rank_deficiency_block(data))?;
    let xty = design.xt.tr_matmul(&design.yt); // cols x p
    let c_t = gram_chol.solve_mat(&xty); // cols x p, equals Cᵀ
    let c_mat = c_t.transpose(); // p x cols

    let resid = &design.yt - &design.xt.matmul(&c_t);
    let mut psi = resid
        .tr_matmul(&resid)
        .scale(T::one() / c::<T>(n as f64))
        .symmetrized();

    // Guard degenerate n ~ p cases: lift the spectrum by a trace-scaled
    // jitter when the smallest eigenvalue collapses.
    let mut jittered = false;
    let eig_min = sym_min_eigenvalue(&psi);
    let floor = c::<T>(1e-10) * psi.trace() / c::<T>(p as f64);
    if eig_min < floor {
        for i in 0..p {
            psi[(i, i)] += floor;
        }
        jittered = true;
    }

    let a = c_mat.block(0, 0, p, q_m);
    let bs: Vec<Mat<T>> = (0..r)
        .map(|k| c_mat.block(0, q_m + k * q, p, q))
        .collect();
    Ok((Params::new(a, bs, psi)?, jittered))
}

fn rank_deficiency_block<T: Scalar>(data: &Dataset<T>) -> Error {
    if data.q_m() > 0 {
        let wtw = data.w().tr_matmul(data.w());
        if Cholesky::new(&wtw).is_err() {
            return Error::RankDeficient {
                block: "mean design W",
            };
        }
    }
    let xtx = data.x().tr_matmul(data.x());
    if Cholesky::new(&xtx).is_err() {
        return Error::RankDeficient {
            block: "covariance design X",
        };
    }
    Error::RankDeficient {
        block: "augmented design",
    }
}

/// One full E+M sweep from the given parameters.
pub fn em_step<T: Scalar>(params: &Params<T>, data: &Dataset<T>) -> Result<Params<T>> {
    let moments = e_step(params, data)?;
    m_step(&moments, data)
}

/// Runs EM from an explicit starting point, without restarts. The returned
/// parameters are canonicalized; the likelihood trace is not affected by
/// canonicalization.
pub fn fit_em_from_init<T: Scalar>(
    data: &Dataset<T>,
    init: Params<T>,
    config: &EmConfig<T>,
) -> Result<FitResult<T>> {
    config.validate()?;
    let mut warnings = Vec::new();
    let mut params = init;
    let mut ll = params.log_likelihood(data)?;
    let mut trace = vec![ll];
    let mut converged = false;
    let mut iterations = 0;
    for _ in 0..config.max_iters {
        let moments = e_step(&params, data)?;
        let (next, jittered) = m_step_full(&moments, data)?;
        if jittered && warnings.is_empty() {
            warnings.push("baseline covariance jittered to restore positive definiteness".into());
        }
        params = next;
        let next_ll = params.log_likelihood(data)?;
        trace.push(next_ll);
        iterations += 1;
        let change = (next_ll - ll).abs();
        ll = next_ll;
        if change <= config.rel_tol * (T::one() + ll.abs()) {
            converged = true;
            break;
        }
    }
    Ok(FitResult {
        params: params.canonicalized(),
        final_loglik: *trace.last().expect("trace never empty"),
        loglik_trace: trace,
        iterations,
        converged,
        warnings,
    })
}

/// Maximum-likelihood fit of the rank-`rank` model.
///
/// Initialization: `A` from OLS, `Psi` from the OLS residual covariance,
/// and each `B_k` filled with independent normal draws scaled per-row by
/// `init_scale * sqrt(Psi_jj)`. A zero start is useless: `B = 0` is an
/// exact fixed point of the EM map. The best of `n_restarts` seeded
/// restarts by final log-likelihood is returned (earliest restart on
/// ties), so the result is deterministic given the seed.
pub fn fit_em<T: RandScalar>(
    data: &Dataset<T>,
    rank: usize,
    config: &EmConfig<T>,
) -> Result<FitResult<T>> {
    config.validate()?;
    if rank < 1 {
        return Err(Error::InvalidConfig("rank must be at least 1".into()));
    }
    let needed = data.q_m() + rank * data.q() + 1;
    if data.n() < needed {
        return Err(Error::InsufficientData {
            required: needed,
            actual: data.n(),
        });
    }
    if data.q_m() > 0 {
        Cholesky::new(&data.w().tr_matmul(data.w())).map_err(|_| Error::RankDeficient {
            block: "mean design W",
        })?;
    }
    if data.q() > 0 {
        Cholesky::new(&data.x().tr_matmul(data.x())).map_err(|_| Error::RankDeficient {
            block: "covariance design X",
        })?;
    }

    let (a0, mut psi0) = ols_mean_fit(data)?;
    let p = data.p();
    let eig_min = sym_min_eigenvalue(&psi0);
    let floor = c::<T>(1e-10) * psi0.trace().max(T::one()) / c::<T>(p as f64);
    let mut init_warning = None;
    if eig_min < floor {
        for i in 0..p {
            psi0[(i, i)] += floor;
        }
        init_warning = Some("initial residual covariance jittered".to_string());
    }
    let row_scales: Vec<T> = (0..p)
        .map(|j| config.init_scale * psi0[(j, j)].sqrt())
        .collect();

    let mut best: Option<FitResult<T>> = None;
    for restart in 0..config.n_restarts {
        let mut rng = ChaCha8Rng::seed_from_u64(config.init_seed);
        rng.set_stream(restart as u64 + 1);
        let bs: Vec<Mat<T>> = (0..rank)
            .map(|_| {
                Mat::from_fn(p, data.q(), |j, _| {
                    row_scales[j] * T::standard_normal(&mut rng)
                })
            })
            .collect();
        let init = Params::new(a0.clone(), bs, psi0.clone())?;
        let mut fit = fit_em_from_init(data, init, config)?;
        if let Some(w) = &init_warning {
            fit.warnings.push(w.clone());
        }
        let better = match &best {
            None => true,
            Some(b) => fit.final_loglik > b.final_loglik,
        };
        if better {
            best = Some(fit);
        }
    }
    Ok(best.expect("at least one restart"))
}
