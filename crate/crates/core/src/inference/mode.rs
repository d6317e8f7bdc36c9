use crate::error::{Error, Result};
use crate::inference::{LatentLikelihood, ModelSpec};
use crate::prior::{rw1_log_prior, rw1_precision_apply, rw1_precision_bands, rw1_quadform, Hyperparams};
use crate::tridiag::SymTridiagFactor;

pub const NEWTON_MAX_ITER: usize = 100;
/// Convergence threshold on `max |step|`.
pub const NEWTON_TOL: f64 = 1e-8;
const MAX_HALVINGS: usize = 30;
const OBJECTIVE_SLACK: f64 = 1e-12;

/// Gaussian approximation of `p(gamma | theta, data)` at its mode.
#[derive(Debug, Clone)]
pub struct LaplaceFit {
    pub mode: Vec<f64>,
    /// Negated likelihood Hessian diagonal at the mode.
    pub cond_prec_diag: Vec<f64>,
    /// Factor of the posterior precision `tau Q + D` at the mode.
    pub factor: SymTridiagFactor,
    pub iterations: usize,
    /// Euclidean norm of the log-posterior gradient at exit.
    pub grad_norm: f64,
    /// Log-likelihood plus RW1 log prior at the mode.
    pub log_joint: f64,
    /// `log_joint + (B/2) log 2pi - log det(tau Q + D) / 2`.
    pub log_evidence: f64,
}

impl LaplaceFit {
    pub fn marginal_sd(&self) -> Vec<f64> {
        self.factor.diag_inverse().into_iter().map(f64::sqrt).collect()
    }
}

fn objective(lik: &dyn LatentLikelihood, tau: f64, gamma: &[f64]) -> f64 {
    let q = rw1_quadform(gamma).unwrap_or(f64::NAN);
    let v = lik.loglik(gamma) - 0.5 * tau * q;
    if v.is_nan() {
        f64::NEG_INFINITY
    } else {
        v
    }
}

struct NewtonSystem {
    grad: Vec<f64>,
    lik_prec: Vec<f64>,
    factor: SymTridiagFactor,
}

fn newton_system(lik: &dyn LatentLikelihood, tau: f64, gamma: &[f64]) -> Result<NewtonSystem> {
    let b = gamma.len();
    let mut grad = vec![0.0; b];
    let mut hess = vec![0.0; b];
    lik.accumulate(gamma, &mut grad, &mut hess);
    let prior = rw1_precision_apply(tau, gamma)?;
    for j in 0..b {
        grad[j] -= prior[j];
    }
    let lik_prec: Vec<f64> = hess.iter().map(|h| (-h).max(0.0)).collect();
    let (mut diag, off) = rw1_precision_bands(tau, b);
    for j in 0..b {
        diag[j] += lik_prec[j];
    }
    if grad.iter().chain(&diag).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("Newton system"));
    }
    let factor = SymTridiagFactor::new(&diag, &off).map_err(|_| {
        Error::Degenerate("posterior precision is singular; the data carry no information about gamma".into())
    })?;
    Ok(NewtonSystem { grad, lik_prec, factor })
}

/// Damped Newton-Raphson on `loglik(gamma) - (tau/2) gamma' Q gamma`.
pub fn laplace_fit_with(lik: &dyn LatentLikelihood, tau: f64, init: &[f64]) -> Result<LaplaceFit> {
    let b = init.len();
    if b < 2 {
        return Err(Error::InvalidArgument("need at least 2 cells".into()));
    }
    if !(tau > 0.0) || !tau.is_finite() {
        return Err(Error::InvalidArgument(format!("tau must be positive and finite, got {tau}")));
    }
    let mut gamma = init.to_vec();
    let mut value = objective(lik, tau, &gamma);
    if !value.is_finite() {
        return Err(Error::NonFinite("log posterior at the initial point"));
    }

    // `iterations` counts steps larger than the tolerance; the final solve
    // that confirms convergence is not counted.
    let mut iterations = 0;
    let mut converged = false;
    let mut last_grad_norm = f64::NAN;
    while iterations <= NEWTON_MAX_ITER {
        let sys = newton_system(lik, tau, &gamma)?;
        last_grad_norm = norm(&sys.grad);
        let delta = sys.factor.solve(&sys.grad);
        let max_step = delta.iter().fold(0.0f64, |m, d| m.max(d.abs()));
        if max_step >= NEWTON_TOL {
            if iterations == NEWTON_MAX_ITER {
                break;
            }
            iterations += 1;
        }

        let mut scale = 1.0;
        let mut candidate: Vec<f64> = gamma.iter().zip(&delta).map(|(g, d)| g + d).collect();
        let mut cand_value = objective(lik, tau, &candidate);
        let mut halvings = 0;
        // rounding noise in the objective must not trigger damping near the mode
        let floor = value - OBJECTIVE_SLACK * (1.0 + value.abs());
        while !(cand_value >= floor) && halvings < MAX_HALVINGS {
            scale *= 0.5;
            halvings += 1;
            for j in 0..b {
                candidate[j] = gamma[j] + scale * delta[j];
            }
            cand_value = objective(lik, tau, &candidate);
        }
        if cand_value.is_finite() {
            gamma = candidate;
            value = cand_value.max(value);
        }
        if max_step < NEWTON_TOL {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::NoConvergence { iterations, grad_norm: last_grad_norm });
    }

    let sys = newton_system(lik, tau, &gamma)?;
    let log_joint = lik.loglik(&gamma) + rw1_log_prior(tau, &gamma)?;
    let log_evidence =
        log_joint + 0.5 * b as f64 * (2.0 * std::f64::consts::PI).ln() - 0.5 * sys.factor.log_det();
    Ok(LaplaceFit {
        grad_norm: norm(&sys.grad),
        mode: gamma,
        cond_prec_diag: sys.lik_prec,
        factor: sys.factor,
        iterations,
        log_joint,
        log_evidence,
    })
}

pub fn laplace_fit(model: &ModelSpec, hp: &Hyperparams, init: &[f64]) -> Result<LaplaceFit> {
    model.check_hyperparams(hp)?;
    if init.len() != model.data.cells() {
        return Err(Error::LengthMismatch { expected: model.data.cells(), got: init.len() });
    }
    laplace_fit_with(&model.likelihood(hp), hp.tau, init)
}

/// Posterior mode of `gamma` given `theta` and the number of Newton iterations.
pub fn find_mode(model: &ModelSpec, hp: &Hyperparams, gamma_init: &[f64]) -> Result<(Vec<f64>, usize)> {
    let fit = laplace_fit(model, hp, gamma_init)?;
    Ok((fit.mode, fit.iterations))
}

pub fn find_mode_with(lik: &dyn LatentLikelihood, tau: f64, init: &[f64]) -> Result<(Vec<f64>, usize)> {
    let fit = laplace_fit_with(lik, tau, init)?;
    Ok((fit.mode, fit.iterations))
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}
