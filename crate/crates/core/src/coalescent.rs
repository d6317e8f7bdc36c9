//! Discretized coalescent log-likelihood and its derivatives in `gamma`.
//!
//! The combinatorial factors `prod C_{0,k}` do not depend on `gamma` and are
//! dropped, so absolute values differ from the full density by a constant.

use crate::error::{Error, Result};
use crate::genealogy::IntervalData;
use crate::grid::LogPopTrajectory;

fn check(data: &IntervalData, traj: &LogPopTrajectory) -> Result<()> {
    if &data.grid != traj.grid() {
        return Err(Error::GridMismatch);
    }
    Ok(())
}

pub fn coal_loglik(data: &IntervalData, traj: &LogPopTrajectory) -> Result<f64> {
    check(data, traj)?;
    Ok(coal_loglik_raw(data, traj.gamma()))
}

pub fn coal_grad_hess(data: &IntervalData, traj: &LogPopTrajectory) -> Result<(Vec<f64>, Vec<f64>)> {
    check(data, traj)?;
    let b = data.cells();
    let (mut grad, mut hess) = (vec![0.0; b], vec![0.0; b]);
    coal_accumulate(data, traj.gamma(), &mut grad, &mut hess);
    Ok((grad, hess))
}

pub(crate) fn coal_loglik_raw(data: &IntervalData, gamma: &[f64]) -> f64 {
    gamma
        .iter()
        .zip(data.d.iter().zip(&data.e))
        .map(|(&g, (&d, &e))| {
            let pressure = if e == 0.0 { 0.0 } else { e * (-g).exp() };
            -d * g - pressure
        })
        .sum()
}

pub(crate) fn coal_accumulate(data: &IntervalData, gamma: &[f64], grad: &mut [f64], hess: &mut [f64]) {
    for j in 0..gamma.len() {
        let pressure = if data.e[j] == 0.0 { 0.0 } else { data.e[j] * (-gamma[j]).exp() };
        grad[j] += -data.d[j] + pressure;
        hess[j] -= pressure;
    }
}
