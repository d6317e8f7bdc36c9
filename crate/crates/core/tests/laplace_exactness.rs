mod common;

use std::f64::consts::PI;

use common::rel_err;
use nalgebra::{DMatrix, DVector};
use psdyn::inference::{laplace_fit_with, GaussianLikelihood};
use psdyn::prior::rw1_log_prior;
use psdyn::simulator::replicate_rng;
use rand::Rng;

/// Posterior of `gamma` under `y ~ N(gamma, P^-1)` and the RW1 prior,
/// computed densely: mean, marginal sds, and the log normalizing constant.
fn analytic(lik: &GaussianLikelihood, tau: f64) -> (Vec<f64>, Vec<f64>, f64) {
    let b = lik.mean.len();
    let mut h = DMatrix::zeros(b, b);
    for k in 0..b - 1 {
        h[(k, k)] += tau;
        h[(k + 1, k + 1)] += tau;
        h[(k, k + 1)] -= tau;
        h[(k + 1, k)] -= tau;
    }
    for j in 0..b {
        h[(j, j)] += lik.precision[j];
    }
    let py = DVector::from_iterator(b, (0..b).map(|j| lik.precision[j] * lik.mean[j]));
    let chol = h.cholesky().unwrap();
    let mu = chol.solve(&py);
    let inv = chol.inverse();
    let sd = (0..b).map(|j| inv[(j, j)].sqrt()).collect();
    let logdet = 2.0 * chol.l().diagonal().iter().map(|v| v.ln()).sum::<f64>();

    // complete the square: log of the integral of exp(loglik + log prior)
    let y = DVector::from_vec(lik.mean.clone());
    let p = DVector::from_vec(lik.precision.clone());
    let norm: f64 = lik.precision.iter().map(|pj| 0.5 * (pj / (2.0 * PI)).ln()).sum();
    let yy = y.component_mul(&y).dot(&p);
    let quad = yy - py.dot(&mu);
    let prior_norm = 0.5 * (b - 1) as f64 * tau.ln();
    let evidence = norm + prior_norm - 0.5 * quad + 0.5 * b as f64 * (2.0 * PI).ln() - 0.5 * logdet;
    (mu.as_slice().to_vec(), sd, evidence)
}

#[test]
fn gaussian_likelihood_is_exact() {
    let mut rng = replicate_rng(301, 0, 0);
    for _ in 0..30 {
        let b = rng.random_range(2..200);
        let lik = GaussianLikelihood {
            mean: (0..b).map(|_| rng.random_range(-3.0..3.0)).collect(),
            precision: (0..b).map(|_| rng.random_range(0.1..20.0)).collect(),
        };
        let tau = rng.random_range(0.05..50.0);
        let fit = laplace_fit_with(&lik, tau, &vec![0.0; b]).unwrap();
        let (mu, sd, evidence) = analytic(&lik, tau);
        for j in 0..b {
            assert!((fit.mode[j] - mu[j]).abs() < 1e-8 * (1.0 + mu[j].abs()), "mean[{j}]");
        }
        for (a, e) in fit.marginal_sd().iter().zip(&sd) {
            assert!(rel_err(*a, *e) < 1e-8);
        }
        assert!((fit.log_evidence - evidence).abs() < 1e-8 * (1.0 + evidence.abs()), "{} vs {evidence}", fit.log_evidence);
        // the evidence identity: log joint at the mode is what the fit reports
        let lj = psdyn::inference::LatentLikelihood::loglik(&lik, &fit.mode) + rw1_log_prior(tau, &fit.mode).unwrap();
        assert!((lj - fit.log_joint).abs() < 1e-9 * (1.0 + lj.abs()));
        assert!(fit.iterations <= 1);
    }
}
