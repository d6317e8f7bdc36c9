use serde::Serialize;
use serde_json::{json, Value};
use statrs::function::erf::erfc;

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::inference::{explore_hyperparams, ExploreOptions, ModelKind, ModelSpec, ThetaGrid, ThetaPoint};
use crate::output::{fmt_sig, round_sig};
use crate::sampling::SamplingParams;

const MIN_WEIGHT: f64 = 1e-12;
const QUANTILE_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Quantiles {
    pub median: f64,
    pub lower: f64,
    pub upper: f64,
}

impl Quantiles {
    fn map(self, f: impl Fn(f64) -> f64) -> Self {
        Self { median: f(self.median), lower: f(self.lower), upper: f(self.upper) }
    }

    fn to_json(self) -> Value {
        json!({ "median": round_sig(self.median), "lower": round_sig(self.lower), "upper": round_sig(self.upper) })
    }
}

fn normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

/// CDF at `x` of `sum_k w_k N(mean_k, sd_k^2)`; weights need not be normalized.
pub fn mixture_cdf(weights: &[f64], means: &[f64], sds: &[f64], x: f64) -> f64 {
    let mut total = 0.0;
    let mut acc = 0.0;
    for ((w, m), s) in weights.iter().zip(means).zip(sds) {
        total += w;
        acc += w * if *s > 0.0 {
            normal_cdf((x - m) / s)
        } else if x >= *m {
            1.0
        } else {
            0.0
        };
    }
    acc / total
}

/// Quantile of a Gaussian mixture by bisection on its CDF.
pub fn mixture_quantile(weights: &[f64], means: &[f64], sds: &[f64], q: f64) -> Result<f64> {
    if weights.is_empty() || weights.len() != means.len() || weights.len() != sds.len() {
        return Err(Error::InvalidArgument("mixture components must be nonempty and of equal length".into()));
    }
    if !(q > 0.0 && q < 1.0) {
        return Err(Error::InvalidArgument(format!("quantile level must lie in (0, 1), got {q}")));
    }
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for ((w, m), s) in weights.iter().zip(means).zip(sds) {
        if *w > 0.0 {
            lo = lo.min(m - 40.0 * s);
            hi = hi.max(m + 40.0 * s);
        }
    }
    if !(lo.is_finite() && hi.is_finite()) {
        return Err(Error::NonFinite("mixture components"));
    }
    for _ in 0..400 {
        let mid = 0.5 * (lo + hi);
        if hi - lo <= QUANTILE_TOL * (1.0 + mid.abs()) {
            break;
        }
        if mixture_cdf(weights, means, sds, mid) < q {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

fn mixture_quantiles(weights: &[f64], means: &[f64], sds: &[f64]) -> Result<Quantiles> {
    Ok(Quantiles {
        median: mixture_quantile(weights, means, sds, 0.5)?,
        lower: mixture_quantile(weights, means, sds, 0.025)?,
        upper: mixture_quantile(weights, means, sds, 0.975)?,
    })
}

#[derive(Debug, Clone)]
pub struct PosteriorSummary {
    pub model: ModelKind,
    pub grid: Grid,
    pub ne_median: Vec<f64>,
    pub ne_q025: Vec<f64>,
    pub ne_q975: Vec<f64>,
    pub theta_points: Vec<ThetaPoint>,
    pub tau_summary: Quantiles,
    /// Natural-scale `beta0`; absent for BNPR or frozen sampling parameters.
    pub beta0_summary: Option<Quantiles>,
    pub beta1_summary: Option<Quantiles>,
    pub beta1_ci: Option<(f64, f64)>,
    pub frozen_sampling: Option<SamplingParams>,
    pub newton_max_iterations: usize,
    pub newton_max_grad_norm: f64,
}

impl PosteriorSummary {
    /// Hyperparameter summaries and the weighted theta grid.
    pub fn to_json(&self) -> Value {
        let points: Vec<Value> = self
            .theta_points
            .iter()
            .map(|p| {
                let mut v = json!({
                    "tau": round_sig(p.hp.tau),
                    "log_marginal": round_sig(p.log_marginal),
                    "weight": round_sig(p.log_weight.exp()),
                });
                if let Some(s) = &p.hp.samp {
                    v["beta0"] = json!(round_sig(s.beta0));
                    v["beta1"] = json!(round_sig(s.beta1));
                }
                v
            })
            .collect();
        json!({
            "model": self.model.name(),
            "grid": { "t_min": round_sig(self.grid.t_min()), "t_max": round_sig(self.grid.t_max()), "cells": self.grid.len() },
            "tau": self.tau_summary.to_json(),
            "beta0": self.beta0_summary.map(Quantiles::to_json),
            "beta1": self.beta1_summary.map(Quantiles::to_json),
            "beta1_ci": self.beta1_ci.map(|(l, u)| json!([round_sig(l), round_sig(u)])),
            "frozen_sampling": self.frozen_sampling.map(|s| json!({ "beta0": s.beta0, "beta1": s.beta1 })),
            "newton": {
                "max_iterations": self.newton_max_iterations,
                "max_grad_norm": round_sig(self.newton_max_grad_norm),
            },
            "theta_points": points,
        })
    }

    /// Per-cell `time,median,q025,q975` with times at cell midpoints.
    pub fn trajectory_csv(&self) -> String {
        let mut out = String::from("time,median,q025,q975\n");
        for j in 0..self.grid.len() {
            out.push_str(&format!(
                "{},{},{},{}\n",
                fmt_sig(self.grid.midpoint(j)),
                fmt_sig(self.ne_median[j]),
                fmt_sig(self.ne_q025[j]),
                fmt_sig(self.ne_q975[j])
            ));
        }
        out
    }
}

/// Latent and hyperparameter marginals as mixtures over the theta grid.
pub fn marginal_summaries(model: &ModelSpec, thetas: &ThetaGrid) -> Result<PosteriorSummary> {
    let pts: Vec<&ThetaPoint> = thetas.points.iter().filter(|p| p.log_weight.exp() > MIN_WEIGHT).collect();
    if pts.is_empty() {
        return Err(Error::InvalidArgument("empty theta set".into()));
    }
    let weights: Vec<f64> = pts.iter().map(|p| p.log_weight.exp()).collect();
    let b = model.data.cells();
    let (mut ne_median, mut ne_q025, mut ne_q975) = (vec![0.0; b], vec![0.0; b], vec![0.0; b]);
    let mut means = vec![0.0; pts.len()];
    let mut sds = vec![0.0; pts.len()];
    for j in 0..b {
        for (k, p) in pts.iter().enumerate() {
            means[k] = p.mode[j];
            sds[k] = p.marginal_sd[j];
        }
        let q = mixture_quantiles(&weights, &means, &sds)?;
        ne_median[j] = q.median.exp();
        ne_q025[j] = q.lower.exp();
        ne_q975[j] = q.upper.exp();
    }

    let axis = |c: usize| -> Result<Quantiles> {
        let means: Vec<f64> = pts.iter().map(|p| p.z[c]).collect();
        let sds = vec![thetas.kernel_sd[c]; pts.len()];
        mixture_quantiles(&weights, &means, &sds)
    };
    let tau_summary = axis(0)?.map(f64::exp);
    let (beta0_summary, beta1_summary) = if pts[0].z.len() == 3 {
        (Some(axis(1)?.map(f64::exp)), Some(axis(2)?))
    } else {
        (None, None)
    };
    Ok(PosteriorSummary {
        model: model.kind,
        grid: model.grid().clone(),
        ne_median,
        ne_q025,
        ne_q975,
        theta_points: thetas.points.clone(),
        tau_summary,
        beta0_summary,
        beta1_ci: beta1_summary.map(|q| (q.lower, q.upper)),
        beta1_summary,
        frozen_sampling: model.frozen_sampling,
        newton_max_iterations: thetas.max_iterations,
        newton_max_grad_norm: thetas.max_grad_norm,
    })
}

pub fn infer(model: &ModelSpec, opts: &ExploreOptions) -> Result<PosteriorSummary> {
    let thetas = explore_hyperparams(model, opts)?;
    marginal_summaries(model, &thetas)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::genealogy::IntervalData;
    use crate::prior::Hyperparams;

    fn dummy_model(cells: usize) -> ModelSpec {
        let grid = Grid::new(0.0, 1.0, cells).unwrap();
        let data = IntervalData {
            grid,
            e: vec![1.0; cells],
            d: vec![1.0; cells],
            c: vec![0.0; cells],
            w_samp: vec![0.0; cells],
            n_tips: cells + 1,
            s0: 0.0,
        };
        ModelSpec::new(ModelKind::Bnpr, data).unwrap()
    }

    fn point(log_weight: f64, mean: f64, sd: f64, cells: usize) -> ThetaPoint {
        ThetaPoint {
            hp: Hyperparams::conditional(1.0),
            z: vec![0.0],
            log_marginal: 0.0,
            log_weight,
            mode: vec![mean; cells],
            cond_prec_diag: vec![1.0; cells],
            marginal_sd: vec![sd; cells],
            iterations: 1,
            grad_norm: 0.0,
        }
    }

    fn theta_grid(points: Vec<ThetaPoint>) -> ThetaGrid {
        ThetaGrid {
            points,
            kernel_sd: vec![0.1],
            optimum: vec![0.0],
            evaluations: 0,
            max_iterations: 1,
            max_grad_norm: 0.0,
        }
    }

    #[test]
    fn standard_normal_quantiles() {
        let q = mixture_quantiles(&[1.0], &[0.0], &[1.0]).unwrap();
        assert!(q.median.abs() < 1e-9);
        assert!((q.lower + 1.959964).abs() < 1e-6);
    }

    #[test]
    fn lognormal_cell_quantiles() {
        let model = dummy_model(2);
        let s = marginal_summaries(&model, &theta_grid(vec![point(0.0, 0.5, 0.2, 2)])).unwrap();
        assert!((s.ne_median[0] - 1.648721).abs() < 1e-6);
        let z975 = 1.959963984540054;
        assert!((s.ne_q975[1] - (0.5 + z975 * 0.2f64).exp()).abs() < 1e-6);
        assert!((s.ne_q975[1] - 2.439987).abs() < 1e-6);
    }

    #[test]
    fn zero_weight_component_is_ignored() {
        let model = dummy_model(2);
        let single = marginal_summaries(&model, &theta_grid(vec![point(0.0, 0.5, 0.2, 2)])).unwrap();
        let pair = marginal_summaries(
            &model,
            &theta_grid(vec![point(0.0, 0.5, 0.2, 2), point(f64::NEG_INFINITY, 3.0, 1.0, 2)]),
        )
        .unwrap();
        assert_eq!(single.ne_median, pair.ne_median);
        assert_eq!(single.ne_q025, pair.ne_q025);
    }

    #[test]
    fn quantiles_invert_cdf() {
        let w = [0.2, 0.5, 0.3];
        let m = [-1.0, 0.4, 2.5];
        let s = [0.3, 1.2, 0.05];
        for q in [0.01, 0.025, 0.3, 0.5, 0.9, 0.975] {
            let x = mixture_quantile(&w, &m, &s, q).unwrap();
            assert!((mixture_cdf(&w, &m, &s, x) - q).abs() < 1e-7);
        }
    }

    #[test]
    fn empty_theta_set_is_rejected() {
        assert!(marginal_summaries(&dummy_model(2), &theta_grid(vec![])).is_err());
    }
}
