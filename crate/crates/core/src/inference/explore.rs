use nalgebra::{DMatrix, SymmetricEigen};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::inference::{laplace_fit, LaplaceFit, ModelKind, ModelSpec};
use crate::prior::{log_hyperprior, Hyperparams};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExploreOptions {
    /// Grid spacing in standardized units.
    pub step: f64,
    /// Grid points run from `-half_width` to `half_width` steps per axis.
    pub half_width: usize,
    /// Points more than this far below the best log marginal are dropped.
    pub prune: f64,
    pub nm_tol: f64,
    pub max_evals: usize,
    /// Evaluate grid points on the rayon pool.
    pub parallel: bool,
}

impl Default for ExploreOptions {
    fn default() -> Self {
        Self { step: 0.75, half_width: 3, prune: 10.0, nm_tol: 1e-4, max_evals: 500, parallel: true }
    }
}

/// A log density over `R^dim` to be integrated on a grid.
pub trait GridObjective: Sync {
    type Output: Send;
    fn dim(&self) -> usize;
    /// `None` marks points outside the support or failed evaluations.
    fn evaluate(&self, x: &[f64]) -> Option<(f64, Self::Output)>;

    fn value(&self, x: &[f64]) -> f64 {
        match self.evaluate(x) {
            Some((v, _)) if !v.is_nan() => v,
            _ => f64::NEG_INFINITY,
        }
    }
}

#[derive(Debug, Clone)]
pub struct GridPoint<T> {
    /// Standardized offsets from the optimum.
    pub offset: Vec<f64>,
    pub x: Vec<f64>,
    pub log_value: f64,
    pub log_weight: f64,
    pub output: T,
}

#[derive(Debug, Clone)]
pub struct ObjectiveGrid<T> {
    pub optimum: Vec<f64>,
    /// Maps standardized offsets to `x - optimum`; row-major `dim x dim`.
    pub transform: Vec<Vec<f64>>,
    pub points: Vec<GridPoint<T>>,
    pub evaluations: usize,
}

impl<T> ObjectiveGrid<T> {
    /// Standard deviation of a uniform spread over one grid cell, mapped to
    /// coordinate `c`.
    pub fn kernel_sd(&self, step: f64) -> Vec<f64> {
        self.transform
            .iter()
            .map(|row| (step * step / 12.0 * row.iter().map(|v| v * v).sum::<f64>()).sqrt())
            .collect()
    }
}

const HESSIAN_STEP: f64 = 1e-2;
const MIN_CURVATURE: f64 = 1e-2;

/// Maximizes `obj` from `start`, then lays a regular grid in coordinates
/// standardized by the curvature at the optimum and normalizes weights.
pub fn explore_objective<O: GridObjective>(
    obj: &O,
    start: &[f64],
    init_step: &[f64],
    opts: &ExploreOptions,
) -> Result<ObjectiveGrid<O::Output>> {
    let dim = obj.dim();
    if start.len() != dim || init_step.len() != dim {
        return Err(Error::LengthMismatch { expected: dim, got: start.len() });
    }
    let (optimum, evaluations) = nelder_mead(|x| -obj.value(x), start, init_step, opts.nm_tol, opts.max_evals)?;
    let transform = standardizing_transform(obj, &optimum);

    let h = opts.half_width as i64;
    let per_axis = (2 * h + 1) as usize;
    let total = per_axis.pow(dim as u32);
    let offsets: Vec<Vec<f64>> = (0..total)
        .map(|mut idx| {
            let mut off = vec![0.0; dim];
            for o in off.iter_mut() {
                *o = ((idx % per_axis) as i64 - h) as f64 * opts.step;
                idx /= per_axis;
            }
            off
        })
        .collect();
    let eval_point = |off: &Vec<f64>| {
        let x: Vec<f64> = (0..dim)
            .map(|r| optimum[r] + (0..dim).map(|c| transform[r][c] * off[c]).sum::<f64>())
            .collect();
        obj.evaluate(&x).and_then(|(v, out)| {
            (v.is_finite()).then(|| GridPoint { offset: off.clone(), x, log_value: v, log_weight: 0.0, output: out })
        })
    };
    let evaluated: Vec<Option<GridPoint<O::Output>>> = if opts.parallel {
        offsets.par_iter().map(eval_point).collect()
    } else {
        offsets.iter().map(eval_point).collect()
    };
    let mut points: Vec<GridPoint<O::Output>> = evaluated.into_iter().flatten().collect();
    let best = points.iter().map(|p| p.log_value).fold(f64::NEG_INFINITY, f64::max);
    if !best.is_finite() {
        return Err(Error::Degenerate("no finite point on the hyperparameter grid".into()));
    }
    points.retain(|p| p.log_value >= best - opts.prune);
    let log_norm = best + points.iter().map(|p| (p.log_value - best).exp()).sum::<f64>().ln();
    for p in &mut points {
        p.log_weight = p.log_value - log_norm;
    }
    Ok(ObjectiveGrid { optimum, transform, points, evaluations: evaluations + total })
}

/// `V diag(lambda)^{-1/2}` from the eigendecomposition of the negated
/// finite-difference Hessian at `x0`.
fn standardizing_transform<O: GridObjective>(obj: &O, x0: &[f64]) -> Vec<Vec<f64>> {
    let dim = x0.len();
    let h = HESSIAN_STEP;
    let f = |dx: &[(usize, f64)]| {
        let mut x = x0.to_vec();
        for &(i, d) in dx {
            x[i] += d;
        }
        obj.value(&x)
    };
    let f0 = f(&[]);
    let mut neg_hess = DMatrix::<f64>::zeros(dim, dim);
    for i in 0..dim {
        let v = -(f(&[(i, h)]) - 2.0 * f0 + f(&[(i, -h)])) / (h * h);
        neg_hess[(i, i)] = v;
        for j in 0..i {
            let v = -(f(&[(i, h), (j, h)]) - f(&[(i, h), (j, -h)]) - f(&[(i, -h), (j, h)])
                + f(&[(i, -h), (j, -h)]))
                / (4.0 * h * h);
            neg_hess[(i, j)] = v;
            neg_hess[(j, i)] = v;
        }
    }
    if neg_hess.iter().any(|v| !v.is_finite()) {
        neg_hess = DMatrix::identity(dim, dim);
    }
    let eig = SymmetricEigen::new(neg_hess);
    let mut t = vec![vec![0.0; dim]; dim];
    for c in 0..dim {
        let scale = eig.eigenvalues[c].max(MIN_CURVATURE).sqrt().recip();
        for r in 0..dim {
            t[r][c] = eig.eigenvectors[(r, c)] * scale;
        }
    }
    t
}

/// Minimizes `f` by the Nelder-Mead simplex method. Stops once every vertex
/// lies within `tol` of the best one in each coordinate.
fn nelder_mead<F: Fn(&[f64]) -> f64>(
    f: F,
    start: &[f64],
    init_step: &[f64],
    tol: f64,
    max_evals: usize,
) -> Result<(Vec<f64>, usize)> {
    let n = start.len();
    let evals = std::cell::Cell::new(0usize);
    let eval = |x: &[f64]| {
        evals.set(evals.get() + 1);
        let v = f(x);
        if v.is_nan() {
            f64::INFINITY
        } else {
            v
        }
    };
    let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(n + 1);
    let f0 = eval(start);
    if !f0.is_finite() {
        return Err(Error::NonFinite("objective at the optimizer start"));
    }
    simplex.push((start.to_vec(), f0));
    for i in 0..n {
        let mut x = start.to_vec();
        x[i] += init_step[i];
        let v = eval(&x);
        simplex.push((x, v));
    }

    loop {
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        let spread = simplex[1..]
            .iter()
            .flat_map(|(x, _)| x.iter().zip(&simplex[0].0).map(|(a, b)| (a - b).abs()))
            .fold(0.0f64, f64::max);
        if spread < tol {
            return Ok((simplex[0].0.clone(), evals.get()));
        }
        if evals.get() >= max_evals {
            return Err(Error::OptimizerNoConvergence(evals.get()));
        }
        let mut centroid = vec![0.0; n];
        for (x, _) in &simplex[..n] {
            for (c, v) in centroid.iter_mut().zip(x) {
                *c += v / n as f64;
            }
        }
        let worst = simplex[n].clone();
        let along = |t: f64| -> Vec<f64> { centroid.iter().zip(&worst.0).map(|(c, w)| c + t * (w - c)).collect() };

        let xr = along(-1.0);
        let fr = eval(&xr);
        if fr < simplex[0].1 {
            let xe = along(-2.0);
            let fe = eval(&xe);
            simplex[n] = if fe < fr { (xe, fe) } else { (xr, fr) };
            continue;
        }
        if fr < simplex[n - 1].1 {
            simplex[n] = (xr, fr);
            continue;
        }
        let (xc, fc, accept) = if fr < worst.1 {
            let xc = along(-0.5);
            let fc = eval(&xc);
            (xc, fc, fc <= fr)
        } else {
            let xc = along(0.5);
            let fc = eval(&xc);
            (xc, fc, fc < worst.1)
        };
        if accept {
            simplex[n] = (xc, fc);
            continue;
        }
        let best = simplex[0].0.clone();
        for vertex in simplex.iter_mut().skip(1) {
            let x: Vec<f64> = best.iter().zip(&vertex.0).map(|(b, v)| b + 0.5 * (v - b)).collect();
            let v = eval(&x);
            *vertex = (x, v);
        }
    }
}

/// One hyperparameter configuration with its Gaussian approximation.
#[derive(Debug, Clone)]
pub struct ThetaPoint {
    pub hp: Hyperparams,
    /// `(log tau[, log beta0, beta1])`.
    pub z: Vec<f64>,
    pub log_marginal: f64,
    pub log_weight: f64,
    pub mode: Vec<f64>,
    pub cond_prec_diag: Vec<f64>,
    pub marginal_sd: Vec<f64>,
    pub iterations: usize,
    pub grad_norm: f64,
}

#[derive(Debug, Clone)]
pub struct ThetaGrid {
    pub points: Vec<ThetaPoint>,
    /// Smoothing spread per coordinate of `z` for hyperparameter marginals.
    pub kernel_sd: Vec<f64>,
    pub optimum: Vec<f64>,
    pub evaluations: usize,
    pub max_iterations: usize,
    pub max_grad_norm: f64,
}

/// Search coordinates `u = (log tau, log beta0 + beta1 * c, beta1)`, where
/// `c` is the initial log level; this removes most of the correlation
/// between `log beta0` and `beta1`. The linear map to `z` has unit
/// Jacobian. Objective values are log marginals with respect to `z`.
struct ModelObjective<'a> {
    model: &'a ModelSpec,
    level: f64,
    init: Vec<f64>,
}

impl ModelObjective<'_> {
    fn to_z(&self, u: &[f64]) -> Vec<f64> {
        match u.len() {
            3 => vec![u[0], u[1] - u[2] * self.level, u[2]],
            _ => u.to_vec(),
        }
    }

    fn u_to_z_matrix(&self, dim: usize) -> DMatrix<f64> {
        let mut m = DMatrix::identity(dim, dim);
        if dim == 3 {
            m[(1, 2)] = -self.level;
        }
        m
    }
}

impl GridObjective for ModelObjective<'_> {
    type Output = (Hyperparams, LaplaceFit);

    fn dim(&self) -> usize {
        self.model.hyper_dim()
    }

    fn evaluate(&self, u: &[f64]) -> Option<(f64, Self::Output)> {
        let z = self.to_z(u);
        if z.iter().any(|v| !v.is_finite()) || !self.model.in_bounds(&z) {
            return None;
        }
        let hp = self.model.hyperparams_at(&z);
        let fit = laplace_fit(self.model, &hp, &self.init).ok()?;
        let jacobian: f64 = if z.len() == 3 { z[0] + z[1] } else { z[0] };
        let v = fit.log_evidence + log_hyperprior(&hp).ok()? + jacobian;
        v.is_finite().then_some((v, (hp, fit)))
    }
}

pub fn explore_hyperparams(model: &ModelSpec, opts: &ExploreOptions) -> Result<ThetaGrid> {
    let level = model.initial_level();
    let obj = ModelObjective { model, level, init: model.initial_gamma() };
    let dim = obj.dim();
    let (start, init_step) = if dim == 3 {
        let window: f64 = model.data.w_samp.iter().sum();
        let n: f64 = model.data.c.iter().sum();
        (vec![0.0, (n / window).ln(), 0.0], vec![1.0, 0.5, 0.5])
    } else {
        (vec![0.0], vec![1.0])
    };
    debug_assert!(model.kind == ModelKind::BnprPs || dim == 1);

    let grid = explore_objective(&obj, &start, &init_step, opts)?;
    let m = obj.u_to_z_matrix(dim);
    let t = DMatrix::from_fn(dim, dim, |r, c| grid.transform[r][c]);
    let tz = &m * t;
    let kernel_sd = (0..dim)
        .map(|r| (opts.step * opts.step / 12.0 * (0..dim).map(|c| tz[(r, c)].powi(2)).sum::<f64>()).sqrt())
        .collect();

    let mut max_iterations = 0;
    let mut max_grad_norm = 0.0f64;
    let points = grid
        .points
        .into_iter()
        .map(|p| {
            let (hp, fit) = p.output;
            max_iterations = max_iterations.max(fit.iterations);
            max_grad_norm = max_grad_norm.max(fit.grad_norm);
            ThetaPoint {
                hp,
                z: obj.to_z(&p.x),
                log_marginal: p.log_value,
                log_weight: p.log_weight,
                marginal_sd: fit.marginal_sd(),
                mode: fit.mode,
                cond_prec_diag: fit.cond_prec_diag,
                iterations: fit.iterations,
                grad_norm: fit.grad_norm,
            }
        })
        .collect();
    Ok(ThetaGrid {
        points,
        kernel_sd,
        optimum: obj.to_z(&grid.optimum),
        evaluations: grid.evaluations,
        max_iterations,
        max_grad_norm,
    })
}
