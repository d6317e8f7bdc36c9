//! Inhomogeneous Poisson log-likelihood of sampling times with intensity
//! `beta0 * N(t)^beta1` on the window `[0, s0]`.
//!
//! Samples are bucketed into grid cells, and the base-measure constant is
//! dropped.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::genealogy::IntervalData;
use crate::grid::LogPopTrajectory;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SamplingParams {
    pub beta0: f64,
    pub beta1: f64,
}

impl SamplingParams {
    pub fn new(beta0: f64, beta1: f64) -> Result<Self> {
        let p = Self { beta0, beta1 };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.beta0.is_finite() || !self.beta1.is_finite() {
            return Err(Error::NonFinite("sampling parameters"));
        }
        if self.beta0 <= 0.0 {
            return Err(Error::InvalidArgument(format!("beta0 must be positive, got {}", self.beta0)));
        }
        Ok(())
    }
}

fn check(data: &IntervalData, traj: &LogPopTrajectory, par: &SamplingParams) -> Result<()> {
    par.validate()?;
    if &data.grid != traj.grid() {
        return Err(Error::GridMismatch);
    }
    Ok(())
}

pub fn samp_loglik(data: &IntervalData, traj: &LogPopTrajectory, par: &SamplingParams) -> Result<f64> {
    check(data, traj, par)?;
    Ok(samp_loglik_raw(data, traj.gamma(), par))
}

pub fn samp_grad_hess(
    data: &IntervalData,
    traj: &LogPopTrajectory,
    par: &SamplingParams,
) -> Result<(Vec<f64>, Vec<f64>)> {
    check(data, traj, par)?;
    let b = data.cells();
    let (mut grad, mut hess) = (vec![0.0; b], vec![0.0; b]);
    samp_accumulate(data, traj.gamma(), par, &mut grad, &mut hess);
    Ok((grad, hess))
}

pub(crate) fn samp_loglik_raw(data: &IntervalData, gamma: &[f64], par: &SamplingParams) -> f64 {
    let n: f64 = data.c.iter().sum();
    let mut total = n * par.beta0.ln();
    for j in 0..gamma.len() {
        total += par.beta1 * data.c[j] * gamma[j];
        if data.w_samp[j] > 0.0 {
            total -= par.beta0 * data.w_samp[j] * (par.beta1 * gamma[j]).exp();
        }
    }
    total
}

pub(crate) fn samp_accumulate(
    data: &IntervalData,
    gamma: &[f64],
    par: &SamplingParams,
    grad: &mut [f64],
    hess: &mut [f64],
) {
    if par.beta1 == 0.0 {
        return;
    }
    for j in 0..gamma.len() {
        let mass = if data.w_samp[j] > 0.0 {
            par.beta0 * data.w_samp[j] * (par.beta1 * gamma[j]).exp()
        } else {
            0.0
        };
        grad[j] += par.beta1 * data.c[j] - par.beta1 * mass;
        hess[j] -= par.beta1 * par.beta1 * mass;
    }
}
