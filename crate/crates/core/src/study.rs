//! Monte Carlo harness: simulate sampling times and genealogies under a
//! seasonal trajectory, reconstruct with each model, and summarize.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::genealogy::{decompose_intervals, Genealogy};
use crate::grid::{Grid, LogPopTrajectory};
use crate::inference::{infer, ExploreOptions, ModelKind, ModelSpec, PosteriorSummary, Quantiles};
use crate::metrics::{eval_grid, interval_stats, pointwise_stats, Bands, PointwiseStats, StudyResult, TableRow};
use crate::simulator::{
    negative_control_intensity, replicate_rng, sample_times, seasonal_trajectory, simulate_tree, IntensityFn,
    IntensityKind, NegControlKind, SimulatedTree, NEGCTL_SEGMENTS,
};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum Schedule {
    /// Exactly `n` uniform times on the window.
    Uniform,
    /// Poisson process with intensity proportional to `N(t)^beta1`.
    Proportional { beta1: f64 },
    NegControl(NegControlKind),
}

impl Schedule {
    pub fn name(&self) -> String {
        match self {
            Schedule::Uniform => "uniform".into(),
            Schedule::Proportional { beta1 } if *beta1 == 1.0 => "proportional".into(),
            Schedule::Proportional { beta1 } => format!("proportional:{beta1}"),
            Schedule::NegControl(NegControlKind::PiecewiseConstant) => "piecewise".into(),
            Schedule::NegControl(NegControlKind::Brownian) => "brownian".into(),
        }
    }

    /// True `beta1` when the schedule is preferential.
    pub fn beta1(&self) -> Option<f64> {
        match self {
            Schedule::Proportional { beta1 } => Some(*beta1),
            _ => None,
        }
    }
}

impl std::str::FromStr for Schedule {
    type Err = Error;

    /// `uniform`, `proportional`, `proportional:<beta1>`, `piecewise`, `brownian`.
    fn from_str(s: &str) -> Result<Self> {
        match s.split_once(':') {
            Some(("proportional", b)) => {
                let beta1: f64 =
                    b.parse().map_err(|_| Error::InvalidArgument(format!("bad beta1 in schedule '{s}'")))?;
                if !beta1.is_finite() {
                    return Err(Error::InvalidArgument(format!("bad beta1 in schedule '{s}'")));
                }
                Ok(Schedule::Proportional { beta1 })
            }
            None if s == "uniform" => Ok(Schedule::Uniform),
            None if s == "proportional" => Ok(Schedule::Proportional { beta1: 1.0 }),
            None if s == "hyperproportional" => Ok(Schedule::Proportional { beta1: 2.0 }),
            _ => s.parse::<NegControlKind>().map(Schedule::NegControl).map_err(|_| {
                Error::InvalidArgument(format!("unknown schedule '{s}'"))
            }),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct StudyConfig {
    pub replicates: usize,
    pub n: usize,
    pub cells: usize,
    pub a: f64,
    pub o: f64,
    pub window: (f64, f64),
    /// Sampling-window end for the preferential likelihood; defaults to the
    /// window end.
    pub s0: Option<f64>,
    /// Evaluation grid has `k + 1` points over the window.
    pub k: usize,
    pub intervals: Vec<(f64, f64)>,
    pub schedules: Vec<Schedule>,
    pub models: Vec<ModelKind>,
    pub seed: u64,
    /// Cell width of the true trajectory used for simulation.
    pub truth_width: f64,
    /// Extent of the true trajectory past the window end.
    pub truth_extra: f64,
    #[serde(skip)]
    pub explore: ExploreOptions,
}

impl Default for StudyConfig {
    fn default() -> Self {
        Self {
            replicates: 50,
            n: 200,
            cells: 100,
            a: 2.0,
            o: 0.0,
            window: (0.0, 48.0),
            s0: None,
            k: 300,
            intervals: vec![(0.0, 6.0), (6.0, 48.0)],
            schedules: vec![Schedule::Uniform, Schedule::Proportional { beta1: 1.0 }],
            models: vec![ModelKind::Bnpr, ModelKind::BnprPs],
            seed: 7,
            truth_width: 0.02,
            truth_extra: 2000.0,
            explore: ExploreOptions { parallel: false, ..ExploreOptions::default() },
        }
    }
}

impl StudyConfig {
    pub fn truth(&self) -> Result<LogPopTrajectory> {
        seasonal_trajectory(self.a, self.o, self.window.1 + self.truth_extra, self.truth_width)
    }

    pub fn s0(&self) -> f64 {
        self.s0.unwrap_or(self.window.1)
    }

    fn validate(&self) -> Result<()> {
        if self.window.0 < 0.0 || !(self.window.0 < self.window.1) {
            return Err(Error::InvalidArgument("window must satisfy 0 <= start < end".into()));
        }
        if self.n < 2 || self.cells < 2 || self.k < 1 {
            return Err(Error::InvalidArgument("need n >= 2, cells >= 2 and k >= 1".into()));
        }
        if self.s0() < self.window.1 {
            return Err(Error::InvalidArgument("s0 must not precede the window end".into()));
        }
        Ok(())
    }
}

/// Sampling intensity of `schedule` on the window, scaled to `n` expected samples.
pub fn schedule_intensity(
    cfg: &StudyConfig,
    schedule: Schedule,
    truth: &LogPopTrajectory,
    replicate: usize,
    stream: u64,
) -> Result<IntensityFn> {
    let n = cfg.n as f64;
    match schedule {
        Schedule::Uniform => {
            IntensityFn::new(IntensityKind::ConstantRate { rate: 1.0, fixed_count: true }, cfg.window)
        }
        Schedule::Proportional { beta1 } => {
            IntensityFn::new(IntensityKind::PowerOfNe { beta0: 1.0, beta1, traj: truth.clone() }, cfg.window)?
                .rescaled(n)
        }
        Schedule::NegControl(kind) => {
            let mut rng = replicate_rng(cfg.seed, replicate as u64, stream + 2);
            negative_control_intensity(kind, NEGCTL_SEGMENTS, cfg.window, n, &mut rng)
        }
    }
}

/// Simulated data of one replicate.
pub fn simulate_replicate(
    cfg: &StudyConfig,
    schedule_index: usize,
    truth: &LogPopTrajectory,
    replicate: usize,
) -> Result<SimulatedTree> {
    let schedule = cfg.schedules[schedule_index];
    let stream = 4 * schedule_index as u64;
    let intensity = schedule_intensity(cfg, schedule, truth, replicate, stream)?;
    let mut rng = replicate_rng(cfg.seed, replicate as u64, stream);
    let samples = sample_times(&intensity, Some(cfg.n as f64), &mut rng)?;
    let mut rng = replicate_rng(cfg.seed, replicate as u64, stream + 1);
    let mut sim = simulate_tree(&samples, truth, &mut rng)?;
    sim.genealogy = sim.genealogy.with_s0(cfg.s0())?;
    Ok(sim)
}

/// Both the conditional and the preferential model on one genealogy, on
/// the grid `[0, max(root, s0)]`.
pub fn fit_models(
    gen: &Genealogy,
    cells: usize,
    models: &[ModelKind],
    opts: &ExploreOptions,
) -> Vec<Result<PosteriorSummary>> {
    let data = Grid::new(0.0, gen.horizon(), cells).and_then(|g| decompose_intervals(gen, &g));
    models
        .iter()
        .map(|&kind| {
            let data = data.clone()?;
            infer(&ModelSpec::new(kind, data)?, opts)
        })
        .collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct CellResult {
    pub schedule: String,
    pub model: ModelKind,
    pub result: StudyResult,
    /// `beta1` marginal per successful replicate (preferential model only).
    pub beta1: Vec<Quantiles>,
    pub failures: Vec<(usize, String)>,
    pub max_newton_iterations: usize,
    pub max_grad_norm: f64,
}

impl CellResult {
    /// Fraction of replicates whose 95% interval covers `beta1`.
    pub fn beta1_coverage(&self, beta1: f64) -> Option<f64> {
        (!self.beta1.is_empty()).then(|| {
            self.beta1.iter().filter(|q| q.lower <= beta1 && beta1 <= q.upper).count() as f64
                / self.beta1.len() as f64
        })
    }

    /// Median over replicates of the posterior medians of `beta1`.
    pub fn beta1_median(&self) -> Option<f64> {
        let mut m: Vec<f64> = self.beta1.iter().map(|q| q.median).collect();
        if m.is_empty() {
            return None;
        }
        m.sort_by(f64::total_cmp);
        let h = m.len() / 2;
        Some(if m.len() % 2 == 1 { m[h] } else { 0.5 * (m[h - 1] + m[h]) })
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct StudyOutput {
    pub cells: Vec<CellResult>,
    pub table: Vec<TableRow>,
    pub pointwise: Vec<(String, String, Vec<f64>, PointwiseStats)>,
}

impl StudyOutput {
    pub fn cell(&self, schedule: &str, model: ModelKind) -> Option<&CellResult> {
        self.cells.iter().find(|c| c.schedule == schedule && c.model == model)
    }

    pub fn stats(&self, schedule: &str, model: ModelKind, interval: (f64, f64)) -> Option<&TableRow> {
        self.table
            .iter()
            .find(|r| r.schedule == schedule && r.model == model.name() && r.interval == interval)
    }
}

struct ReplicateFits {
    schedule_index: usize,
    replicate: usize,
    fits: Vec<Result<PosteriorSummary>>,
}

/// Runs every schedule and replicate on the current rayon pool.
pub fn run_study(cfg: &StudyConfig) -> Result<StudyOutput> {
    cfg.validate()?;
    let truth = cfg.truth()?;
    let times = eval_grid(cfg.window.0, cfg.window.1, cfg.k);
    let tasks: Vec<(usize, usize)> =
        (0..cfg.schedules.len()).flat_map(|s| (0..cfg.replicates).map(move |r| (s, r))).collect();
    let mut runs: Vec<ReplicateFits> = tasks
        .par_iter()
        .map(|&(s, r)| {
            let fits = match simulate_replicate(cfg, s, &truth, r) {
                Ok(sim) => fit_models(&sim.genealogy, cfg.cells, &cfg.models, &cfg.explore),
                Err(e) => cfg.models.iter().map(|_| Err(e.clone())).collect(),
            };
            ReplicateFits { schedule_index: s, replicate: r, fits }
        })
        .collect();
    runs.sort_by_key(|f| (f.schedule_index, f.replicate));

    let mut cells = Vec::new();
    for (s, schedule) in cfg.schedules.iter().enumerate() {
        for (m, &model) in cfg.models.iter().enumerate() {
            let mut cell = CellResult {
                schedule: schedule.name(),
                model,
                result: StudyResult::new(times.clone()),
                beta1: Vec::new(),
                failures: Vec::new(),
                max_newton_iterations: 0,
                max_grad_norm: 0.0,
            };
            for run in runs.iter().filter(|f| f.schedule_index == s) {
                match &run.fits[m] {
                    Ok(summary) => {
                        cell.result.push(&truth, summary);
                        if let Some(q) = summary.beta1_summary {
                            cell.beta1.push(q);
                        }
                        cell.max_newton_iterations = cell.max_newton_iterations.max(summary.newton_max_iterations);
                        cell.max_grad_norm = cell.max_grad_norm.max(summary.newton_max_grad_norm);
                    }
                    Err(e) => cell.failures.push((run.replicate, e.to_string())),
                }
            }
            cells.push(cell);
        }
    }

    let mut table = Vec::new();
    let mut pointwise = Vec::new();
    for cell in &cells {
        if cell.result.replicates.is_empty() {
            continue;
        }
        for &(a, b) in &cfg.intervals {
            table.push(TableRow {
                schedule: cell.schedule.clone(),
                model: cell.model.name().into(),
                interval: (a, b),
                stats: interval_stats(&cell.result, a, b)?,
            });
        }
        pointwise.push((
            cell.schedule.clone(),
            cell.model.name().to_string(),
            times.clone(),
            pointwise_stats(&cell.result)?,
        ));
    }
    Ok(StudyOutput { cells, table, pointwise })
}

/// Posterior bands of each summary on `times`.
pub fn bands_on(summaries: &[PosteriorSummary], times: &[f64]) -> Vec<Bands> {
    summaries.iter().map(|s| Bands::from_summary(s, times)).collect()
}
