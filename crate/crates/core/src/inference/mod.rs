//! Laplace-approximation inference for the two population-size models.
//!
//! For fixed hyperparameters `theta` the latent field `gamma` has a
//! concave log posterior whose Hessian is `-(tau Q + D)` with `D` diagonal,
//! so every linear algebra step runs on a symmetric tridiagonal matrix.
//! Hyperparameters are integrated on a standardized grid around the
//! maximum of the Laplace-approximate marginal, and latent marginals are
//! Gaussian mixtures over that grid.

mod explore;
mod mode;
mod summary;

use serde::{Deserialize, Serialize};

use crate::coalescent::{coal_accumulate, coal_loglik_raw};
use crate::error::{Error, Result};
use crate::genealogy::IntervalData;
use crate::grid::Grid;
use crate::prior::{log_hyperprior, Hyperparams};
use crate::sampling::{samp_accumulate, samp_loglik_raw, SamplingParams};

pub use explore::{
    explore_hyperparams, explore_objective, ExploreOptions, GridObjective, GridPoint, ObjectiveGrid, ThetaGrid, ThetaPoint,
};
pub use mode::{find_mode, find_mode_with, laplace_fit, laplace_fit_with, LaplaceFit, NEWTON_MAX_ITER, NEWTON_TOL};
pub use summary::{marginal_summaries, mixture_cdf, mixture_quantile, infer, PosteriorSummary, Quantiles};

/// Log-likelihood in `gamma` with a diagonal Hessian.
pub trait LatentLikelihood: Sync {
    fn loglik(&self, gamma: &[f64]) -> f64;
    /// Adds the gradient to `grad` and the Hessian diagonal to `hess`.
    fn accumulate(&self, gamma: &[f64], grad: &mut [f64], hess: &mut [f64]);
}

/// Independent Gaussian observations `y_j ~ N(gamma_j, 1/precision_j)`,
/// including their normalizing constants. Used to check that the Laplace
/// machinery is exact on quadratic log-likelihoods.
#[derive(Debug, Clone)]
pub struct GaussianLikelihood {
    pub mean: Vec<f64>,
    pub precision: Vec<f64>,
}

impl LatentLikelihood for GaussianLikelihood {
    fn loglik(&self, gamma: &[f64]) -> f64 {
        gamma
            .iter()
            .zip(self.mean.iter().zip(&self.precision))
            .map(|(g, (m, p))| 0.5 * (p / (2.0 * std::f64::consts::PI)).ln() - 0.5 * p * (g - m).powi(2))
            .sum()
    }

    fn accumulate(&self, gamma: &[f64], grad: &mut [f64], hess: &mut [f64]) {
        for j in 0..gamma.len() {
            grad[j] += self.precision[j] * (self.mean[j] - gamma[j]);
            hess[j] -= self.precision[j];
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelKind {
    /// Coalescent likelihood only; sampling times are conditioned on.
    Bnpr,
    /// Coalescent plus preferential-sampling likelihood.
    BnprPs,
}

impl ModelKind {
    pub fn name(&self) -> &'static str {
        match self {
            ModelKind::Bnpr => "bnpr",
            ModelKind::BnprPs => "bnpr-ps",
        }
    }
}

impl std::str::FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "bnpr" => Ok(ModelKind::Bnpr),
            "bnpr-ps" | "bnpr_ps" | "bnprps" => Ok(ModelKind::BnprPs),
            other => Err(Error::InvalidArgument(format!("unknown model '{other}'"))),
        }
    }
}

impl std::fmt::Display for ModelKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone)]
pub struct ModelSpec {
    pub kind: ModelKind,
    pub data: IntervalData,
    /// Holds `(beta0, beta1)` fixed for the preferential model, leaving only
    /// `tau` to integrate over.
    pub frozen_sampling: Option<SamplingParams>,
}

/// Bounds on the search coordinates `(log tau, log beta0, beta1)`.
pub const LOG_TAU_BOUNDS: (f64, f64) = (-12.0, 12.0);
pub const LOG_BETA0_BOUNDS: (f64, f64) = (-60.0, 60.0);
pub const BETA1_BOUNDS: (f64, f64) = (-20.0, 20.0);

impl ModelSpec {
    pub fn new(kind: ModelKind, data: IntervalData) -> Result<Self> {
        if kind == ModelKind::BnprPs {
            let window: f64 = data.w_samp.iter().sum();
            if !(window > 0.0) {
                return Err(Error::InvalidArgument("preferential model needs a sampling window of positive length".into()));
            }
            if data.c.iter().sum::<f64>() <= 0.0 {
                return Err(Error::InvalidArgument("preferential model needs sampling counts".into()));
            }
        }
        Ok(Self { kind, data, frozen_sampling: None })
    }

    pub fn with_frozen_sampling(mut self, par: SamplingParams) -> Result<Self> {
        if self.kind != ModelKind::BnprPs {
            return Err(Error::InvalidArgument("only the preferential model has sampling parameters".into()));
        }
        par.validate()?;
        self.frozen_sampling = Some(par);
        Ok(self)
    }

    pub fn grid(&self) -> &Grid {
        &self.data.grid
    }

    /// Number of free hyperparameters.
    pub fn hyper_dim(&self) -> usize {
        match (self.kind, self.frozen_sampling) {
            (ModelKind::BnprPs, None) => 3,
            _ => 1,
        }
    }

    /// Maps search coordinates `(log tau[, log beta0, beta1])` to hyperparameters.
    pub fn hyperparams_at(&self, z: &[f64]) -> Hyperparams {
        let tau = z[0].exp();
        match (self.kind, self.frozen_sampling) {
            (ModelKind::Bnpr, _) => Hyperparams::conditional(tau),
            (ModelKind::BnprPs, Some(par)) => Hyperparams { tau, samp: Some(par) },
            (ModelKind::BnprPs, None) => Hyperparams::preferential(tau, z[1].exp(), z[2]),
        }
    }

    pub(crate) fn in_bounds(&self, z: &[f64]) -> bool {
        let within = |v: f64, (lo, hi): (f64, f64)| v >= lo && v <= hi;
        within(z[0], LOG_TAU_BOUNDS)
            && (z.len() < 3 || (within(z[1], LOG_BETA0_BOUNDS) && within(z[2], BETA1_BOUNDS)))
    }

    /// Constant start `log(sum E / max(1, sum d))`, the exact mode of the
    /// pooled single-cell coalescent problem.
    pub fn initial_gamma(&self) -> Vec<f64> {
        vec![self.initial_level(); self.data.cells()]
    }

    pub(crate) fn initial_level(&self) -> f64 {
        let e = self.data.total_pressure();
        let d = self.data.total_coal().max(1.0);
        if e > 0.0 {
            (e / d).ln()
        } else {
            0.0
        }
    }

    pub(crate) fn likelihood(&self, hp: &Hyperparams) -> ModelLikelihood<'_> {
        let samp = match self.kind {
            ModelKind::Bnpr => None,
            ModelKind::BnprPs => hp.samp.or(self.frozen_sampling),
        };
        ModelLikelihood { data: &self.data, samp }
    }

    pub(crate) fn check_hyperparams(&self, hp: &Hyperparams) -> Result<()> {
        hp.validate()?;
        if self.kind == ModelKind::BnprPs && hp.samp.is_none() && self.frozen_sampling.is_none() {
            return Err(Error::InvalidArgument("preferential model requires sampling parameters".into()));
        }
        Ok(())
    }
}

pub(crate) struct ModelLikelihood<'a> {
    data: &'a IntervalData,
    samp: Option<SamplingParams>,
}

impl LatentLikelihood for ModelLikelihood<'_> {
    fn loglik(&self, gamma: &[f64]) -> f64 {
        let mut v = coal_loglik_raw(self.data, gamma);
        if let Some(par) = &self.samp {
            v += samp_loglik_raw(self.data, gamma, par);
        }
        v
    }

    fn accumulate(&self, gamma: &[f64], grad: &mut [f64], hess: &mut [f64]) {
        coal_accumulate(self.data, gamma, grad, hess);
        if let Some(par) = &self.samp {
            samp_accumulate(self.data, gamma, par, grad, hess);
        }
    }
}

/// Laplace approximation of `log p(theta | data)` up to a theta-free
/// constant, with the hyperprior on the natural scale.
pub fn log_marginal_theta(model: &ModelSpec, hp: &Hyperparams) -> Result<f64> {
    let fit = laplace_fit(model, hp, &model.initial_gamma())?;
    Ok(fit.log_evidence + log_hyperprior(hp)?)
}
