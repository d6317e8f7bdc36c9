//! Intrinsic first-order random-walk prior on `gamma` and the hyperpriors
//! on its precision and the sampling parameters.

use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::sampling::SamplingParams;

pub const TAU_SHAPE: f64 = 0.01;
pub const TAU_RATE: f64 = 0.01;
pub const BETA_PRIOR_VARIANCE: f64 = 1000.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Hyperparams {
    pub tau: f64,
    /// Present only for the preferential-sampling model.
    pub samp: Option<SamplingParams>,
}

impl Hyperparams {
    pub fn conditional(tau: f64) -> Self {
        Self { tau, samp: None }
    }

    pub fn preferential(tau: f64, beta0: f64, beta1: f64) -> Self {
        Self { tau, samp: Some(SamplingParams { beta0, beta1 }) }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tau > 0.0) || !self.tau.is_finite() {
            return Err(Error::InvalidArgument(format!("tau must be positive and finite, got {}", self.tau)));
        }
        if let Some(s) = &self.samp {
            s.validate()?;
        }
        Ok(())
    }
}

/// `sum_k (gamma[k+1] - gamma[k])^2`.
pub fn rw1_quadform(gamma: &[f64]) -> Result<f64> {
    if gamma.len() < 2 {
        return Err(Error::InvalidArgument("random-walk prior needs at least 2 cells".into()));
    }
    Ok(gamma.windows(2).map(|w| (w[1] - w[0]).powi(2)).sum())
}

/// `tau * Q * v` for the RW1 structure matrix `Q`.
pub fn rw1_precision_apply(tau: f64, v: &[f64]) -> Result<Vec<f64>> {
    if v.len() < 2 {
        return Err(Error::InvalidArgument("random-walk prior needs at least 2 cells".into()));
    }
    if !(tau > 0.0) {
        return Err(Error::InvalidArgument(format!("tau must be positive, got {tau}")));
    }
    let b = v.len();
    let mut out = vec![0.0; b];
    for k in 0..b - 1 {
        let diff = v[k] - v[k + 1];
        out[k] += tau * diff;
        out[k + 1] -= tau * diff;
    }
    Ok(out)
}

/// Diagonal and off-diagonal of `tau * Q`.
pub fn rw1_precision_bands(tau: f64, b: usize) -> (Vec<f64>, Vec<f64>) {
    let mut diag = vec![2.0 * tau; b];
    diag[0] = tau;
    diag[b - 1] = tau;
    (diag, vec![-tau; b - 1])
}

/// `((B-1)/2) log tau - (tau/2) * quadform`, dropping the `2 pi` constant.
pub fn rw1_log_prior(tau: f64, gamma: &[f64]) -> Result<f64> {
    let q = rw1_quadform(gamma)?;
    Ok(0.5 * (gamma.len() - 1) as f64 * tau.ln() - 0.5 * tau * q)
}

pub fn log_gamma_density(x: f64, shape: f64, rate: f64) -> f64 {
    shape * rate.ln() - ln_gamma(shape) + (shape - 1.0) * x.ln() - rate * x
}

pub fn log_normal_density(x: f64, mean: f64, variance: f64) -> f64 {
    -0.5 * (2.0 * std::f64::consts::PI * variance).ln() - (x - mean).powi(2) / (2.0 * variance)
}

/// Hyperprior log-density on the natural scale of `(tau, beta0, beta1)`.
pub fn log_hyperprior(hp: &Hyperparams) -> Result<f64> {
    if !(hp.tau > 0.0) {
        return Err(Error::InvalidArgument(format!("tau must be positive, got {}", hp.tau)));
    }
    let mut total = log_gamma_density(hp.tau, TAU_SHAPE, TAU_RATE);
    if let Some(s) = &hp.samp {
        if !(s.beta0 > 0.0) {
            return Err(Error::InvalidArgument(format!("beta0 must be positive, got {}", s.beta0)));
        }
        total += log_normal_density(s.beta0, 0.0, BETA_PRIOR_VARIANCE);
        total += log_normal_density(s.beta1, 0.0, BETA_PRIOR_VARIANCE);
    }
    Ok(total)
}
