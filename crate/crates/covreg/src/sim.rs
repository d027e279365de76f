//! Data generators and seeded study drivers for the simulation designs:
//! mean-coefficient MSE comparisons, test level and power, Wald coverage,
//! and the additive multi-regressor study scored by a Stein-type
//! discrepancy.
//!
//! The single-regressor population takes `x = (1, u)` with `u` uniform on
//! (-1, 1) and splits the covariance between a baseline and a
//! regressor-driven factor:
//!
//! `Sigma_x = Psi0 / (w + 1) + (w / (w + 1)) B0 x xᵀ B0ᵀ`
//!
//! so the share `w/(w+1)` of variance rides on the factor and, since
//! `E[B0 x xᵀ B0ᵀ] = Psi0` under the uniform design, the design-averaged
//! covariance equals `Psi0` for every `w`.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::em::{fit_em, EmConfig};
use crate::error::{Error, Result};
use crate::inference::{expected_information, homoscedastic_fit, lr_test_from_logliks};
use crate::linalg::{Cholesky, Mat};
use crate::model::{Dataset, Params};
use crate::scalar::{c, derive_seed, RandScalar, Scalar};

/// Which population the scenario draws from.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SimDesign {
    /// Single scalar regressor with intercept, `x = (1, u)`.
    SingleX,
    /// One continuous and two binary regressors, `x = (1, u, x2, x3)`,
    /// four groups over the binary pair; `n` is the per-group size.
    AdditiveThreeRegressor,
}

/// A study configuration; all outputs are deterministic given `seed`.
#[derive(Clone, Debug)]
pub struct SimScenario<T> {
    pub w: T,
    pub n: usize,
    pub design: SimDesign,
    pub reps: usize,
    pub seed: u64,
    pub alpha: T,
}

impl<T: Scalar> SimScenario<T> {
    pub fn single_x(w: T, n: usize, reps: usize, seed: u64) -> Self {
        SimScenario {
            w,
            n,
            design: SimDesign::SingleX,
            reps,
            seed,
            alpha: c(0.05),
        }
    }

    pub fn additive(w: T, n_per_group: usize, reps: usize, seed: u64) -> Self {
        SimScenario {
            w,
            n: n_per_group,
            design: SimDesign::AdditiveThreeRegressor,
            reps,
            seed,
            alpha: c(0.05),
        }
    }

    fn validate(&self) -> Result<()> {
        if self.reps < 1 {
            return Err(Error::InvalidConfig("reps must be at least 1".into()));
        }
        if !self.w.is_finite() || self.w < T::zero() {
            return Err(Error::InvalidConfig(
                "heteroscedasticity magnitude w must be finite and nonnegative".into(),
            ));
        }
        if !(self.alpha > T::zero() && self.alpha < T::one()) {
            return Err(Error::InvalidConfig("alpha must lie in (0, 1)".into()));
        }
        Ok(())
    }
}

/// Aggregated study outputs; fields are filled per study kind.
#[derive(Clone, Debug)]
pub struct StudyReport<T> {
    /// MSE of the OLS mean estimate over MSE of the covariance-regression
    /// estimate.
    pub relative_mse_ols_vs_cvr: Option<T>,
    /// Rejection rate of the homoscedasticity test (level when w = 0).
    pub power_or_level: Option<T>,
    /// MSE of OLS over MSE of the model-selected estimator.
    pub relative_mse_ms: Option<T>,
    /// Per-parameter Wald coverage, keyed b11..b22, psi11, psi12, psi22.
    pub coverage_per_param: Option<BTreeMap<String, T>>,
    /// Fraction of replications where the fitted model beat the baseline
    /// estimator on the discrepancy grid.
    pub g_win_fraction: Option<T>,
    pub mean_g_fit: Option<T>,
    pub mean_g_baseline: Option<T>,
    /// Replications dropped for non-convergence.
    pub excluded_reps: usize,
    pub reps_used: usize,
}

impl<T> Default for StudyReport<T> {
    fn default() -> Self {
        StudyReport {
            relative_mse_ols_vs_cvr: None,
            power_or_level: None,
            relative_mse_ms: None,
            coverage_per_param: None,
            g_win_fraction: None,
            mean_g_fit: None,
            mean_g_baseline: None,
            excluded_reps: 0,
            reps_used: 0,
        }
    }
}

/// `B0` of the single-regressor population.
pub fn b0_matrix<T: Scalar>() -> Mat<T> {
    Mat::from_rows(&[
        vec![T::one(), T::one()],
        vec![-T::one(), T::one()],
    ])
}

/// `Psi0 = B0 diag(1, 1/3) B0ᵀ`.
pub fn psi0_matrix<T: Scalar>() -> Mat<T> {
    let b0 = b0_matrix::<T>();
    let d = Mat::diag(&[T::one(), T::one() / c::<T>(3.0)]);
    b0.matmul(&d).matmul(&b0.transpose())
}

fn mean_coefficients<T: Scalar>() -> Mat<T> {
    Mat::from_rows(&[
        vec![T::one(), -T::one()],
        vec![-T::one(), T::one()],
    ])
}

fn factor_share<T: Scalar>(w: T) -> T {
    w / (w + T::one())
}

/// True parameters of the single-regressor population at magnitude `w`.
pub fn single_x_params<T: Scalar>(w: T) -> Params<T> {
    let share = factor_share(w);
    let b = b0_matrix::<T>().scale(share.sqrt());
    let psi = psi0_matrix::<T>().scale(T::one() - share);
    Params::new(mean_coefficients(), vec![b], psi).expect("population parameters are valid")
}

/// True parameters of the additive three-regressor population. The mean
/// design is `(1, u)`; the covariance design is `(1, u, x2, x3)`.
pub fn additive_params<T: Scalar>(w: T) -> Params<T> {
    let share = factor_share(w);
    let half = c::<T>(0.5);
    let b = Mat::from_rows(&[
        vec![T::one(), T::one(), half, T::one()],
        vec![-T::one(), T::one(), -half, -T::one()],
    ])
    .scale(share.sqrt());
    let psi = psi0_matrix::<T>().scale(T::one() - share);
    Params::new(mean_coefficients(), vec![b], psi).expect("population parameters are valid")
}

/// One response vector from explicit latent draws:
/// `y = A w + sum_k gamma_k B_k x + Psi^{1/2} z`, with the lower Cholesky
/// factor as the square root.
pub fn generate_row_with<T: Scalar>(
    params: &Params<T>,
    x: &[T],
    w_x: &[T],
    gammas: &[T],
    z: &[T],
) -> Result<Vec<T>> {
    assert_eq!(gammas.len(), params.rank());
    assert_eq!(z.len(), params.p());
    let mut y = params.mean_at(w_x)?;
    for (k, b) in params.bs().iter().enumerate() {
        let bx = b.mul_vec(x);
        for j in 0..y.len() {
            y[j] += gammas[k] * bx[j];
        }
    }
    let noise = params.psi_cholesky().lower().mul_vec(z);
    for j in 0..y.len() {
        y[j] += noise[j];
    }
    Ok(y)
}

/// One response vector with standard normal latent scales and errors.
pub fn generate_row<T: RandScalar, R: Rng + ?Sized>(
    params: &Params<T>,
    x: &[T],
    w_x: &[T],
    rng: &mut R,
) -> Result<Vec<T>> {
    let gammas: Vec<T> = (0..params.rank())
        .map(|_| T::standard_normal(rng))
        .collect();
    let z: Vec<T> = (0..params.p()).map(|_| T::standard_normal(rng)).collect();
    generate_row_with(params, x, w_x, &gammas, &z)
}

/// Single-regressor dataset: `x = (1, u)`, `u` uniform on (-1, 1), mean
/// design aliased to the covariance design.
pub fn generate_single_x_dataset<T: RandScalar, R: Rng + ?Sized>(
    params: &Params<T>,
    n: usize,
    rng: &mut R,
) -> Result<Dataset<T>> {
    let p = params.p();
    let mut x = Mat::zeros(n, 2);
    let mut y = Mat::zeros(n, p);
    for i in 0..n {
        x[(i, 0)] = T::one();
        x[(i, 1)] = T::uniform_pm1(rng);
        let row = generate_row(params, x.row(i), x.row(i), rng)?;
        y.row_mut(i).copy_from_slice(&row);
    }
    Dataset::new(y, x, None)
}

/// Additive-design dataset: `n_per_group` rows for each binary pair
/// `(x2, x3)`, covariance design `(1, u, x2, x3)`, mean design `(1, u)`.
pub fn generate_additive_dataset<T: RandScalar, R: Rng + ?Sized>(
    params: &Params<T>,
    n_per_group: usize,
    rng: &mut R,
) -> Result<Dataset<T>> {
    let p = params.p();
    let n = 4 * n_per_group;
    let mut x = Mat::zeros(n, 4);
    let mut w = Mat::zeros(n, 2);
    let mut y = Mat::zeros(n, p);
    let mut row = 0;
    for x2 in 0..2 {
        for x3 in 0..2 {
            for _ in 0..n_per_group {
                let u = T::uniform_pm1(rng);
                x[(row, 0)] = T::one();
                x[(row, 1)] = u;
                x[(row, 2)] = c::<T>(x2 as f64);
                x[(row, 3)] = c::<T>(x3 as f64);
                w[(row, 0)] = T::one();
                w[(row, 1)] = u;
                let yrow = generate_row(params, x.row(row), w.row(row), rng)?;
                y.row_mut(row).copy_from_slice(&yrow);
                row += 1;
            }
        }
    }
    Dataset::new(y, x, Some(w))
}

fn study_em_config<T: Scalar>(seed: u64) -> EmConfig<T> {
    // Flat likelihood ridges occasionally need thousands of sweeps, and a
    // spurious boundary basin (baseline covariance collapsing) captures
    // the odd restart; three restarts with best-likelihood selection keep
    // the per-replication fits on the interior optimum.
    EmConfig {
        max_iters: 6000,
        ..EmConfig::with_seed(seed)
    }
}

fn data_rng(seed: u64, rep: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(rep as u64);
    rng
}

fn check_exclusions(excluded: usize, reps: usize) -> Result<()> {
    if excluded * 20 > reps {
        return Err(Error::InvalidConfig(format!(
            "{excluded} of {reps} replications failed to converge"
        )));
    }
    Ok(())
}

/// Mean-coefficient MSE study with the homoscedasticity test: per
/// replication the OLS, covariance-regression and model-selected
/// estimators are scored against the true mean coefficients.
pub fn run_mse_study<T: RandScalar>(scenario: &SimScenario<T>) -> Result<StudyReport<T>> {
    scenario.validate()?;
    if scenario.design != SimDesign::SingleX {
        return Err(Error::InvalidConfig(
            "the MSE study uses the single-regressor design".into(),
        ));
    }
    let truth = single_x_params(scenario.w);
    let a_true = truth.a().clone();
    let df = truth.p() * truth.q();

    let mut sse_ols = T::zero();
    let mut sse_cvr = T::zero();
    let mut sse_ms = T::zero();
    let mut rejections = 0usize;
    let mut used = 0usize;
    let mut excluded = 0usize;

    for rep in 0..scenario.reps {
        let mut rng = data_rng(scenario.seed, rep);
        let data = generate_single_x_dataset(&truth, scenario.n, &mut rng)?;
        let config = study_em_config(derive_seed(scenario.seed, 1_000_000 + rep as u64));
        let (null_params, ll_null) = homoscedastic_fit(&data)?;
        let fit = match fit_em(&data, 1, &config) {
            Ok(f) if f.converged => f,
            Ok(_) => {
                excluded += 1;
                continue;
            }
            Err(e) => return Err(e),
        };
        let test = lr_test_from_logliks(ll_null, fit.final_loglik, df, scenario.alpha);
        let a_ms = if test.reject {
            fit.params.a()
        } else {
            null_params.a()
        };
        let err = |a: &Mat<T>| {
            let d = a - &a_true;
            d.frobenius_norm() * d.frobenius_norm()
        };
        sse_ols += err(null_params.a());
        sse_cvr += err(fit.params.a());
        sse_ms += err(a_ms);
        if test.reject {
            rejections += 1;
        }
        used += 1;
    }
    check_exclusions(excluded, scenario.reps)?;

    let usedf = c::<T>(used as f64);
    Ok(StudyReport {
        relative_mse_ols_vs_cvr: Some(sse_ols / sse_cvr),
        power_or_level: Some(c::<T>(rejections as f64) / usedf),
        relative_mse_ms: Some(sse_ols / sse_ms),
        excluded_reps: excluded,
        reps_used: used,
        ..StudyReport::default()
    })
}

/// Wald coverage study at `level = 1 - alpha`. Before intervals are read
/// off, each fitted `B` is flipped to the sign closer to the truth, which
/// is the only way the per-entry comparison is meaningful under the sign
/// nonidentifiability.
pub fn run_coverage_study<T: RandScalar>(scenario: &SimScenario<T>) -> Result<StudyReport<T>> {
    scenario.validate()?;
    if scenario.design != SimDesign::SingleX {
        return Err(Error::InvalidConfig(
            "the coverage study uses the single-regressor design".into(),
        ));
    }
    if scenario.w <= T::zero() || scenario.w.is_nan() {
        return Err(Error::InvalidConfig(
            "coverage of B entries needs w > 0".into(),
        ));
    }
    let truth = single_x_params(scenario.w);
    let b_true = truth.b(0).clone();
    let level = T::one() - scenario.alpha;
    // Interval calibration is sensitive to the rare replication where every
    // restart falls into the degenerate baseline-collapse basin; extra
    // restarts make that event negligible at modest cost.
    let extra_restarts = 5;

    let labels = ["b11", "b12", "b21", "b22", "psi11", "psi12", "psi22"];
    let mut hits = [0usize; 7];
    let mut used = 0usize;
    let mut excluded = 0usize;

    for rep in 0..scenario.reps {
        let mut rng = data_rng(scenario.seed, rep);
        let data = generate_single_x_dataset(&truth, scenario.n, &mut rng)?;
        let config = EmConfig {
            n_restarts: extra_restarts,
            ..study_em_config(derive_seed(scenario.seed, 2_000_000 + rep as u64))
        };
        let fit = match fit_em(&data, 1, &config) {
            Ok(f) if f.converged => f,
            Ok(_) => {
                excluded += 1;
                continue;
            }
            Err(e) => return Err(e),
        };

        // Orient the fitted B toward the truth.
        let b_hat = fit.params.b(0);
        let d_plus = (b_hat - &b_true).frobenius_norm();
        let d_minus = (&b_hat.scale(-T::one()) - &b_true).frobenius_norm();
        let oriented = if d_minus < d_plus {
            Params::new(
                fit.params.a().clone(),
                vec![b_hat.scale(-T::one())],
                fit.params.psi().clone(),
            )?
        } else {
            fit.params.clone()
        };

        let report = expected_information(&oriented, &data, level)?;
        let targets = [
            (report.b_index(0, 0), b_true[(0, 0)]),
            (report.b_index(0, 1), b_true[(0, 1)]),
            (report.b_index(1, 0), b_true[(1, 0)]),
            (report.b_index(1, 1), b_true[(1, 1)]),
            (report.psi_index(0, 0), truth.psi()[(0, 0)]),
            (report.psi_index(1, 0), truth.psi()[(1, 0)]),
            (report.psi_index(1, 1), truth.psi()[(1, 1)]),
        ];
        for (slot, (idx, value)) in targets.iter().enumerate() {
            let ci = report.wald[*idx];
            if ci.lower <= *value && *value <= ci.upper {
                hits[slot] += 1;
            }
        }
        used += 1;
    }
    check_exclusions(excluded, scenario.reps)?;

    let usedf = c::<T>(used as f64);
    let coverage: BTreeMap<String, T> = labels
        .iter()
        .zip(hits.iter())
        .map(|(l, &h)| (l.to_string(), c::<T>(h as f64) / usedf))
        .collect();
    Ok(StudyReport {
        coverage_per_param: Some(coverage),
        excluded_reps: excluded,
        reps_used: used,
        ..StudyReport::default()
    })
}

/// A covariance function evaluable on regressor vectors.
pub trait CovarianceFn<T> {
    fn sigma(&self, x: &[T]) -> Result<Mat<T>>;
}

impl<T: Scalar> CovarianceFn<T> for Params<T> {
    fn sigma(&self, x: &[T]) -> Result<Mat<T>> {
        self.sigma_at(x)
    }
}

/// A covariance function constant in the regressor.
pub struct ConstantCovariance<T>(pub Mat<T>);

impl<T: Scalar> CovarianceFn<T> for ConstantCovariance<T> {
    fn sigma(&self, _x: &[T]) -> Result<Mat<T>> {
        Ok(self.0.clone())
    }
}

/// Stein-type discrepancy summed over a grid:
/// `sum_x log|estimate(x)| + tr(estimate(x)^{-1} truth(x))`;
/// minimized when the estimate matches the truth on the grid.
pub fn discrepancy_g<T: Scalar>(
    estimate: &dyn CovarianceFn<T>,
    truth: &dyn CovarianceFn<T>,
    grid: &[Vec<T>],
) -> Result<T> {
    let mut acc = T::zero();
    for x in grid {
        let est = estimate.sigma(x)?;
        let tru = truth.sigma(x)?;
        let chol = Cholesky::new(&est)?;
        acc = acc + chol.log_det() + chol.solve_mat(&tru).trace();
    }
    Ok(acc)
}

/// Evaluation grid of the additive study: ten equally spaced `u` values
/// on [-1, 1] crossed with the four binary groups.
pub fn additive_grid<T: Scalar>() -> Vec<Vec<T>> {
    let mut grid = Vec::with_capacity(40);
    for i in 0..10 {
        let u = -T::one() + c::<T>(2.0 * i as f64 / 9.0);
        for x2 in 0..2 {
            for x3 in 0..2 {
                grid.push(vec![T::one(), u, c::<T>(x2 as f64), c::<T>(x3 as f64)]);
            }
        }
    }
    grid
}

/// An estimator that maps a dataset to a covariance function; the slot for
/// scoring external baselines with the same discrepancy.
pub trait PlugInEstimator<T> {
    fn fit(&self, data: &Dataset<T>) -> Result<Box<dyn CovarianceFn<T>>>;
}

/// Constant-covariance baseline: OLS residual covariance.
pub struct HomoscedasticEstimator;

impl<T: Scalar> PlugInEstimator<T> for HomoscedasticEstimator {
    fn fit(&self, data: &Dataset<T>) -> Result<Box<dyn CovarianceFn<T>>> {
        let (_, cov) = crate::model::ols_mean_fit(data)?;
        Ok(Box::new(ConstantCovariance(cov)))
    }
}

/// Covariance-regression estimator behind the plug-in interface.
pub struct CvrEstimator<T> {
    pub rank: usize,
    pub config: EmConfig<T>,
}

impl<T: RandScalar> PlugInEstimator<T> for CvrEstimator<T> {
    fn fit(&self, data: &Dataset<T>) -> Result<Box<dyn CovarianceFn<T>>> {
        let fit = fit_em(data, self.rank, &self.config)?;
        Ok(Box::new(fit.params))
    }
}

/// Additive-design study scored against the constant-covariance baseline.
pub fn run_additive_study<T: RandScalar>(scenario: &SimScenario<T>) -> Result<StudyReport<T>> {
    run_additive_study_with_baseline(scenario, &HomoscedasticEstimator)
}

/// Additive-design study with a caller-supplied baseline estimator.
pub fn run_additive_study_with_baseline<T: RandScalar>(
    scenario: &SimScenario<T>,
    baseline: &dyn PlugInEstimator<T>,
) -> Result<StudyReport<T>> {
    scenario.validate()?;
    if scenario.design != SimDesign::AdditiveThreeRegressor {
        return Err(Error::InvalidConfig(
            "the additive study uses the additive three-regressor design".into(),
        ));
    }
    let truth = additive_params(scenario.w);
    let grid = additive_grid::<T>();

    let mut g_fit_sum = T::zero();
    let mut g_base_sum = T::zero();
    let mut wins = 0usize;
    let mut used = 0usize;
    let mut excluded = 0usize;

    for rep in 0..scenario.reps {
        let mut rng = data_rng(scenario.seed, rep);
        let data = generate_additive_dataset(&truth, scenario.n, &mut rng)?;
        let config = study_em_config(derive_seed(scenario.seed, 3_000_000 + rep as u64));
        let fit = match fit_em(&data, 1, &config) {
            Ok(f) if f.converged => f,
            Ok(_) => {
                excluded += 1;
                continue;
            }
            Err(e) => return Err(e),
        };
        let g_fit = discrepancy_g(&fit.params, &truth, &grid)?;
        let base = baseline.fit(&data)?;
        let g_base = discrepancy_g(base.as_ref(), &truth, &grid)?;
        g_fit_sum += g_fit;
        g_base_sum += g_base;
        if g_fit < g_base {
            wins += 1;
        }
        used += 1;
    }
    check_exclusions(excluded, scenario.reps)?;

    let usedf = c::<T>(used as f64);
    Ok(StudyReport {
        g_win_fraction: Some(c::<T>(wins as f64) / usedf),
        mean_g_fit: Some(g_fit_sum / usedf),
        mean_g_baseline: Some(g_base_sum / usedf),
        excluded_reps: excluded,
        reps_used: used,
        ..StudyReport::default()
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::outer;

    fn assert_close(a: f64, b: f64, tol: f64) {
        assert!((a - b).abs() <= tol, "expected {b}, got {a} (tol {tol})");
    }

    #[test]
    fn psi0_matches_its_closed_form() {
        let psi0 = psi0_matrix::<f64>();
        let expect = Mat::from_rows(&[
            vec![4.0 / 3.0, -2.0 / 3.0],
            vec![-2.0 / 3.0, 4.0 / 3.0],
        ]);
        assert!((&psi0 - &expect).max_abs() < 1e-15);
    }

    #[test]
    fn design_average_is_constant_in_w() {
        // E[x xᵀ] = diag(1, 1/3) under the uniform design, so
        // E[B0 x xᵀ B0ᵀ] = Psi0 and the averaged covariance is Psi0 for
        // every w.
        let exx = Mat::diag(&[1.0, 1.0 / 3.0]);
        let b0 = b0_matrix::<f64>();
        assert!(
            (&b0.matmul(&exx).matmul(&b0.transpose()) - &psi0_matrix::<f64>()).max_abs() < 1e-15
        );
        for &w in &[0.0, 1.0 / 3.0, 1.0, 3.0] {
            let params = single_x_params::<f64>(w);
            let avg = {
                let bexxbt = params.b(0).matmul(&exx).matmul(&params.b(0).transpose());
                params.psi() + &bexxbt
            };
            assert!(
                (&avg - &psi0_matrix::<f64>()).max_abs() < 1e-12,
                "w = {w}"
            );
        }
    }

    #[test]
    fn generate_row_is_exact_with_zero_latents() {
        let params = single_x_params::<f64>(1.0);
        let x = [1.0, 0.25];
        let y = generate_row_with(&params, &x, &x, &[0.0], &[0.0, 0.0]).unwrap();
        let mu = params.mean_at(&x).unwrap();
        assert_eq!(y, mu);
    }

    #[test]
    fn homoscedastic_population_moment_oracle() {
        // w = 0: B = 0, marginal covariance is Psi0.
        let params = single_x_params::<f64>(0.0);
        assert_eq!(params.b(0).max_abs(), 0.0);
        let mut rng = ChaCha8Rng::seed_from_u64(60);
        let reps = 100_000;
        let mut acc = Mat::zeros(2, 2);
        for _ in 0..reps {
            let u = f64::uniform_pm1(&mut rng);
            let x = [1.0, u];
            let y = generate_row(&params, &x, &x, &mut rng).unwrap();
            let mu = params.mean_at(&x).unwrap();
            let e = [y[0] - mu[0], y[1] - mu[1]];
            acc = &acc + &outer(&e, &e);
        }
        let emp = acc.scale(1.0 / reps as f64);
        let rel = (&emp - &psi0_matrix::<f64>()).frobenius_norm()
            / psi0_matrix::<f64>().frobenius_norm();
        assert!(rel < 0.02, "relative error {rel}");
    }

    #[test]
    fn fixed_x_population_moment_oracle() {
        // w = 1 at x = (1, 1): Sigma = Psi0/2 + B0 x xᵀ B0ᵀ / 2.
        let w = 1.0;
        let params = single_x_params::<f64>(w);
        let x = [1.0, 1.0];
        let b0 = b0_matrix::<f64>();
        let b0x = b0.mul_vec(&x);
        let expect = &psi0_matrix::<f64>().scale(0.5) + &outer(&b0x, &b0x).scale(0.5);
        assert!((&params.sigma_at(&x).unwrap() - &expect).max_abs() < 1e-12);

        let mut rng = ChaCha8Rng::seed_from_u64(61);
        let reps = 100_000;
        let mut acc = Mat::zeros(2, 2);
        for _ in 0..reps {
            let y = generate_row(&params, &x, &x, &mut rng).unwrap();
            let mu = params.mean_at(&x).unwrap();
            let e = [y[0] - mu[0], y[1] - mu[1]];
            acc = &acc + &outer(&e, &e);
        }
        let emp = acc.scale(1.0 / reps as f64);
        let rel = (&emp - &expect).frobenius_norm() / expect.frobenius_norm();
        assert!(rel < 0.02, "relative error {rel}");
    }

    #[test]
    fn discrepancy_at_truth_and_spot_value() {
        let params = single_x_params::<f64>(1.0);
        let grid: Vec<Vec<f64>> = (0..5).map(|i| vec![1.0, -1.0 + 0.5 * i as f64]).collect();
        let g_self = discrepancy_g(&params, &params, &grid).unwrap();
        let mut expect = 0.0;
        for x in &grid {
            let s = params.sigma_at(x).unwrap();
            expect += Cholesky::new(&s).unwrap().log_det() + 2.0;
        }
        assert_close(g_self, expect, 1e-12);

        // Scalar spot value: estimate 2, truth 1 at one point.
        let est = ConstantCovariance(Mat::from_rows(&[vec![2.0]]));
        let tru = ConstantCovariance(Mat::from_rows(&[vec![1.0]]));
        let g = discrepancy_g(&est, &tru, &[vec![0.0]]).unwrap();
        assert_close(g, 2.0f64.ln() + 0.5, 1e-12);
    }

    #[test]
    fn discrepancy_is_minimized_at_the_truth() {
        let mut rng = ChaCha8Rng::seed_from_u64(62);
        let truth = additive_params::<f64>(1.0 / 3.0);
        let grid = additive_grid::<f64>();
        let g_truth = discrepancy_g(&truth, &truth, &grid).unwrap();
        for _ in 0..100 {
            let scale = 0.05 + 0.4 * f64::uniform_01(&mut rng);
            let perturbed = Params::new(
                truth.a().clone(),
                vec![Mat::from_fn(2, 4, |i, j| {
                    truth.b(0)[(i, j)] + scale * f64::standard_normal(&mut rng)
                })],
                {
                    let mut psi = truth.psi().clone();
                    for d in 0..2 {
                        psi[(d, d)] += scale * f64::uniform_01(&mut rng);
                    }
                    psi
                },
            )
            .unwrap();
            let g = discrepancy_g(&perturbed, &truth, &grid).unwrap();
            assert!(g >= g_truth - 1e-10, "perturbed {g} below truth {g_truth}");
        }
    }

    #[test]
    fn additive_variance_curves_nest_across_groups() {
        // The (1,1) group's variances dominate the (0,0) group's at every
        // grid value of the continuous regressor, for both coordinates.
        let params = additive_params::<f64>(1.0 / 3.0);
        for i in 0..10 {
            let u = -1.0 + 2.0 * i as f64 / 9.0;
            let s00 = params.sigma_at(&[1.0, u, 0.0, 0.0]).unwrap();
            let s11 = params.sigma_at(&[1.0, u, 1.0, 1.0]).unwrap();
            for j in 0..2 {
                assert!(
                    s11[(j, j)] >= s00[(j, j)],
                    "u={u} coordinate {j}: {} < {}",
                    s11[(j, j)],
                    s00[(j, j)]
                );
            }
        }
    }

    #[test]
    fn additive_grid_has_forty_points() {
        let grid = additive_grid::<f64>();
        assert_eq!(grid.len(), 40);
        assert_eq!(grid[0], vec![1.0, -1.0, 0.0, 0.0]);
        assert_eq!(grid[39], vec![1.0, 1.0, 1.0, 1.0]);
    }

    #[test]
    fn studies_are_deterministic_given_seed() {
        let scenario = SimScenario::single_x(1.0, 60, 3, 7);
        let r1 = run_mse_study(&scenario).unwrap();
        let r2 = run_mse_study(&scenario).unwrap();
        assert_eq!(
            r1.relative_mse_ols_vs_cvr.unwrap(),
            r2.relative_mse_ols_vs_cvr.unwrap()
        );
        assert_eq!(r1.power_or_level.unwrap(), r2.power_or_level.unwrap());
        assert_eq!(r1.reps_used, 3);
    }

    #[test]
    fn additive_study_beats_constant_baseline_at_high_w() {
        let scenario = SimScenario::additive(3.0, 50, 4, 11);
        let report = run_additive_study(&scenario).unwrap();
        let wins = report.g_win_fraction.unwrap();
        assert!(wins >= 0.75, "win fraction {wins}");
        assert!(report.mean_g_fit.unwrap() < report.mean_g_baseline.unwrap());
    }

    #[test]
    fn additive_fit_discrepancy_shrinks_with_group_size() {
        let small = SimScenario::additive(1.0, 50, 4, 13);
        let large = SimScenario::additive(1.0, 200, 4, 13);
        let g_small = run_additive_study(&small).unwrap().mean_g_fit.unwrap();
        let g_large = run_additive_study(&large).unwrap().mean_g_fit.unwrap();
        assert!(
            g_large < g_small,
            "discrepancy should shrink: {g_small} -> {g_large}"
        );
    }
}
