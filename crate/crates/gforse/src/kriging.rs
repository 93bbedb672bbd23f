//! Ordinary-Kriging likelihood, maximum-likelihood fitting, BLUE prediction,
//! predictive variance and expected improvement.
//!
//! The concentrated log-likelihood substitutes the closed-form optima for the
//! constant mean and the process variance, leaving only theta (and optionally
//! p) for the optimizer:
//!
//! ```text
//! mu_hat    = (1' Psi^-1 y) / (1' Psi^-1 1)
//! sigma2_hat = (y - 1 mu)' Psi^-1 (y - 1 mu) / n
//! logL      = -(n/2) ln sigma2_hat - (1/2) ln |Psi|
//! ```

use serde::{Deserialize, Serialize};

use crate::kernel::{self, KernelParams, DEFAULT_THETA_HI, DEFAULT_THETA_LO};
use crate::linalg::{self, CholeskyFactor, Matrix};
use crate::optim::{self, Bounds, EvalSchedule};
use crate::{c, Error, Result, Scalar};

/// Which optimizer drives the theta search.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Optimizer {
    DifferentialEvolution,
    BoundedQuasiNewton,
    /// DE first, then quasi-Newton refinement of the DE best point.
    Both,
}

/// Fitting configuration. Theta bounds span six decades by default, so the
/// search runs in log10 space.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FitConfig {
    pub optimizer: Optimizer,
    pub theta_bounds: (f64, f64),
    pub nugget: f64,
    pub nugget_max: f64,
    /// DE population; defaults to 10 * k when `None`.
    pub de_population: Option<usize>,
    pub de_iterations: usize,
    pub qn_restarts: usize,
    pub seed: u64,
    pub optimize_p: bool,
    /// Evaluate DE population members in parallel.
    pub parallel: bool,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            optimizer: Optimizer::Both,
            theta_bounds: (DEFAULT_THETA_LO, DEFAULT_THETA_HI),
            nugget: 1e-10,
            nugget_max: 1e-4,
            de_population: None,
            de_iterations: 200,
            qn_restarts: 5,
            seed: 0,
            optimize_p: false,
            parallel: false,
        }
    }
}

impl FitConfig {
    fn validate(&self) -> Result<()> {
        let (lo, hi) = self.theta_bounds;
        if !(lo > 0.0 && lo < hi) {
            return Err(Error::InvalidConfig(format!(
                "theta bounds must satisfy 0 < lo < hi, got ({lo}, {hi})"
            )));
        }
        if !(self.nugget >= 0.0 && self.nugget <= self.nugget_max) {
            return Err(Error::InvalidConfig(format!(
                "nugget must lie in [0, {}], got {}",
                self.nugget_max, self.nugget
            )));
        }
        Ok(())
    }
}

// exponent search range when optimize_p is on
const P_LO: f64 = 0.1;
const P_HI: f64 = 2.0;

/// A fitted Ordinary-Kriging surrogate. Immutable; safe to share across
/// concurrent prediction calls.
#[derive(Debug, Clone)]
pub struct KrigingModel<F> {
    x: Matrix<F>,
    y: Vec<F>,
    params: KernelParams<F>,
    mu_hat: F,
    sigma2_hat: F,
    chol: CholeskyFactor<F>,
    /// Psi^-1 (y - 1 mu), cached for prediction.
    alpha: Vec<F>,
    /// Psi^-1 1, cached for the variance formula.
    psi_inv_ones: Vec<F>,
    nugget: F,
    log_likelihood: F,
    theta_bounds: (F, F),
}

/// Result of one concentrated-likelihood evaluation.
pub struct Concentrated<F> {
    pub log_likelihood: F,
    pub mu_hat: F,
    pub sigma2_hat: F,
    pub chol: CholeskyFactor<F>,
}

/// Evaluates the concentrated log-likelihood at fixed kernel parameters from
/// a single Cholesky factorization of the correlation matrix.
pub fn concentrated_log_likelihood<F: Scalar>(
    x: &Matrix<F>,
    y: &[F],
    params: &KernelParams<F>,
    nugget: F,
) -> Result<Concentrated<F>> {
    let n = x.nrows();
    if n < 2 {
        return Err(Error::TooFewPoints(n));
    }
    if y.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: y.len(),
        });
    }
    check_degenerate(y)?;

    let psi = kernel::build_matrix(x, params, nugget)?;
    let chol = linalg::cholesky(psi.matrix())?;
    let psi_inv_y = linalg::solve_chol(&chol, y)?;
    let ones = vec![F::one(); n];
    let psi_inv_1 = linalg::solve_chol(&chol, &ones)?;

    let ones_quad = psi_inv_1.iter().fold(F::zero(), |a, &v| a + v);
    let mu = psi_inv_y.iter().fold(F::zero(), |a, &v| a + v) / ones_quad;

    let mut quad = F::zero();
    for i in 0..n {
        let r = y[i] - mu;
        quad = quad + r * (psi_inv_y[i] - mu * psi_inv_1[i]);
    }
    let nf = c::<F>(n as f64);
    let sigma2 = quad / nf;
    if !(sigma2 > F::zero()) {
        return Err(Error::DegenerateResponse);
    }
    let half = c::<F>(0.5);
    let log_l = -half * nf * sigma2.ln() - half * linalg::log_det(&chol);

    Ok(Concentrated {
        log_likelihood: log_l,
        mu_hat: mu,
        sigma2_hat: sigma2,
        chol,
    })
}

fn check_degenerate<F: Scalar>(y: &[F]) -> Result<()> {
    if y.is_empty() {
        return Err(Error::EmptyInput);
    }
    let first = y[0];
    if y.iter().all(|&v| v == first) {
        return Err(Error::DegenerateResponse);
    }
    Ok(())
}

/// Likelihood evaluation with the nugget escalation ladder: on a failed
/// factorization the nugget is multiplied by 10 until `nugget_max`, after
/// which the failure propagates. Returns the nugget actually used.
pub fn likelihood_with_ladder<F: Scalar>(
    x: &Matrix<F>,
    y: &[F],
    params: &KernelParams<F>,
    nugget: F,
    nugget_max: F,
) -> Result<(Concentrated<F>, F)> {
    let mut nug = if nugget > F::zero() {
        nugget
    } else {
        F::zero()
    };
    loop {
        match concentrated_log_likelihood(x, y, params, nug) {
            Ok(conc) => return Ok((conc, nug)),
            Err(Error::NotPositiveDefinite { pivot }) => {
                let next = if nug == F::zero() { c(1e-12) } else { nug * c(10.0) };
                if next > nugget_max {
                    return Err(Error::NotPositiveDefinite { pivot });
                }
                nug = next;
            }
            Err(e) => return Err(e),
        }
    }
}

impl<F: Scalar> KrigingModel<F> {
    /// Builds a model at fixed kernel parameters (no search). Used by `fit`
    /// and when reconstructing a model from a serialized artifact.
    pub fn from_params(
        x: Matrix<F>,
        y: Vec<F>,
        params: KernelParams<F>,
        nugget: F,
        nugget_max: F,
        theta_bounds: (F, F),
    ) -> Result<Self> {
        let (conc, used_nugget) = likelihood_with_ladder(&x, &y, &params, nugget, nugget_max)?;
        let n = x.nrows();
        let ones = vec![F::one(); n];
        let psi_inv_ones = linalg::solve_chol(&conc.chol, &ones)?;
        let resid: Vec<F> = y.iter().map(|&v| v - conc.mu_hat).collect();
        let alpha = linalg::solve_chol(&conc.chol, &resid)?;
        Ok(Self {
            x,
            y,
            params,
            mu_hat: conc.mu_hat,
            sigma2_hat: conc.sigma2_hat,
            chol: conc.chol,
            alpha,
            psi_inv_ones,
            nugget: used_nugget,
            log_likelihood: conc.log_likelihood,
            theta_bounds,
        })
    }

    pub fn x(&self) -> &Matrix<F> {
        &self.x
    }

    pub fn y(&self) -> &[F] {
        &self.y
    }

    pub fn params(&self) -> &KernelParams<F> {
        &self.params
    }

    pub fn mu_hat(&self) -> F {
        self.mu_hat
    }

    pub fn sigma2_hat(&self) -> F {
        self.sigma2_hat
    }

    pub fn nugget(&self) -> F {
        self.nugget
    }

    pub fn log_likelihood(&self) -> F {
        self.log_likelihood
    }

    pub fn theta_bounds(&self) -> (F, F) {
        self.theta_bounds
    }

    pub fn dim(&self) -> usize {
        self.params.dim()
    }

    fn check_xstar(&self, xstar: &[F]) -> Result<()> {
        if xstar.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: xstar.len(),
            });
        }
        Ok(())
    }

    /// BLUE mean prediction `mu_hat + psi(x*)' alpha`.
    pub fn predict_mean(&self, xstar: &[F]) -> Result<F> {
        self.check_xstar(xstar)?;
        let psi = kernel::build_vector(&self.x, xstar, &self.params)?;
        Ok(self.mu_hat + linalg::dot(&psi, &self.alpha))
    }

    /// Ordinary-Kriging mean squared prediction error
    /// `s^2 = sigma2 [1 - psi' Psi^-1 psi + (1 - 1' Psi^-1 psi)^2 / (1' Psi^-1 1)]`,
    /// clamped at zero.
    pub fn predict_variance(&self, xstar: &[F]) -> Result<F> {
        self.check_xstar(xstar)?;
        let psi = kernel::build_vector(&self.x, xstar, &self.params)?;
        let psi_inv_psi = linalg::solve_chol(&self.chol, &psi)?;
        let quad = linalg::dot(&psi, &psi_inv_psi);
        let ones_psi = self.psi_inv_ones.iter().zip(&psi).fold(F::zero(), |a, (&u, &v)| a + u * v);
        let ones_quad = self.psi_inv_ones.iter().fold(F::zero(), |a, &v| a + v);
        let corr = {
            let t = F::one() - ones_psi;
            t * t / ones_quad
        };
        let s2 = self.sigma2_hat * (F::one() - quad + corr);
        Ok(if s2 > F::zero() { s2 } else { F::zero() })
    }

    /// Expected improvement below `y_best` under the predictive Gaussian.
    pub fn expected_improvement(&self, xstar: &[F], y_best: F) -> Result<F> {
        let mean = self.predict_mean(xstar)?;
        let s = self.predict_variance(xstar)?.sqrt();
        let diff = y_best - mean;
        if s <= F::zero() {
            return Ok(if diff > F::zero() { diff } else { F::zero() });
        }
        let u = diff / s;
        let ei = diff * norm_cdf(u) + s * norm_pdf(u);
        Ok(if ei > F::zero() { ei } else { F::zero() })
    }
}

fn norm_pdf<F: Scalar>(u: F) -> F {
    let u = u.to_f64().unwrap();
    c((-0.5 * u * u).exp() / (2.0 * std::f64::consts::PI).sqrt())
}

/// Standard normal CDF via the Abramowitz-Stegun 26.2.17 rational
/// approximation, absolute error below 7.5e-8.
fn norm_cdf<F: Scalar>(u: F) -> F {
    let x = u.to_f64().unwrap();
    let z = x.abs();
    let t = 1.0 / (1.0 + 0.2316419 * z);
    let poly = t
        * (0.319381530
            + t * (-0.356563782 + t * (1.781477937 + t * (-1.821255978 + t * 1.330274429))));
    let pdf = (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt();
    let tail = pdf * poly;
    c(if x >= 0.0 { 1.0 - tail } else { tail })
}

/// Fits theta (and optionally p) by maximizing the concentrated
/// log-likelihood over `config.theta_bounds`, searched in log10 space.
pub fn fit<F: Scalar>(x: Matrix<F>, y: Vec<F>, config: &FitConfig) -> Result<KrigingModel<F>> {
    config.validate()?;
    let n = x.nrows();
    let k = x.ncols();
    if n < 2 {
        return Err(Error::TooFewPoints(n));
    }
    if k == 0 {
        return Err(Error::EmptyInput);
    }
    if y.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: y.len(),
        });
    }
    if x.data().iter().any(|v| !v.is_finite()) || y.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFiniteInput);
    }
    check_degenerate(&y)?;

    let (theta_lo, theta_hi) = config.theta_bounds;
    let log_lo = theta_lo.log10();
    let log_hi = theta_hi.log10();
    let d = if config.optimize_p { 2 * k } else { k };
    let mut lo = vec![c::<F>(log_lo); k];
    let mut hi = vec![c::<F>(log_hi); k];
    if config.optimize_p {
        lo.extend(std::iter::repeat(c::<F>(P_LO)).take(k));
        hi.extend(std::iter::repeat(c::<F>(P_HI)).take(k));
    }
    let bounds = Bounds::new(lo, hi)?;

    let nugget = c::<F>(config.nugget);
    let nugget_max = c::<F>(config.nugget_max);
    let decode = |z: &[F]| -> KernelParams<F> {
        let ten = c::<F>(10.0);
        let theta: Vec<F> = z[..k].iter().map(|&v| ten.powf(v)).collect();
        if config.optimize_p {
            KernelParams::with_p(theta, z[k..].to_vec()).expect("matched lengths")
        } else {
            KernelParams::new(theta)
        }
    };
    let objective = |z: &[F]| -> F {
        let params = decode(z);
        match likelihood_with_ladder(&x, &y, &params, nugget, nugget_max) {
            Ok((conc, _)) => conc.log_likelihood,
            Err(_) => F::neg_infinity(),
        }
    };

    let population = config.de_population.unwrap_or(10 * k).max(4);
    let schedule = if config.parallel {
        EvalSchedule::Parallel
    } else {
        EvalSchedule::Sequential
    };

    let run_qn = |x0: &[F]| -> Result<optim::OptimResult<F>> {
        let h = c::<F>(1e-5);
        let grad = |z: &[F]| optim::finite_diff_grad(&objective, z, h, Some(&bounds));
        optim::bounded_quasi_newton(&objective, &grad, &bounds, x0, 200)
    };

    let best = match config.optimizer {
        Optimizer::DifferentialEvolution => optim::differential_evolution(
            &objective,
            &bounds,
            population,
            config.de_iterations,
            config.seed,
            schedule,
        )?,
        Optimizer::BoundedQuasiNewton => {
            // restart from the best of seeded uniform draws
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(config.seed);
            let mut best: Option<optim::OptimResult<F>> = None;
            for _ in 0..config.qn_restarts.max(1) {
                let x0: Vec<F> = (0..d)
                    .map(|j| {
                        bounds.lo()[j]
                            + c::<F>(rng.gen::<f64>()) * (bounds.hi()[j] - bounds.lo()[j])
                    })
                    .collect();
                let r = run_qn(&x0)?;
                if best.as_ref().map_or(true, |b| r.f_best > b.f_best) {
                    best = Some(r);
                }
            }
            best.expect("at least one restart")
        }
        Optimizer::Both => {
            let de = optim::differential_evolution(
                &objective,
                &bounds,
                population,
                config.de_iterations,
                config.seed,
                schedule,
            )?;
            let qn = run_qn(&de.x_best)?;
            // prefer the quasi-Newton point on a near-tie
            if qn.f_best >= de.f_best - c(1e-9) {
                qn
            } else {
                de
            }
        }
    };

    if !best.f_best.is_finite() {
        // every candidate failed to factorize even at the max nugget
        let params = decode(&best.x_best);
        return match likelihood_with_ladder(&x, &y, &params, nugget, nugget_max) {
            Ok(_) => Err(Error::InvalidConfig("optimizer returned non-finite objective".into())),
            Err(e) => Err(e),
        };
    }

    let params = decode(&best.x_best);
    let mut model = KrigingModel::from_params(
        x,
        y,
        params,
        nugget,
        nugget_max,
        (c(theta_lo), c(theta_hi)),
    )?;
    // report the optimizer's objective value for the stored parameters
    model.log_likelihood = best.f_best;
    Ok(model)
}
