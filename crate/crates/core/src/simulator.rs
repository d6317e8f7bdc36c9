//! Seasonal trajectories, sampling-time point processes and exact
//! heterochronous coalescent simulation.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1, Normal, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::genealogy::{Genealogy, SamplingEvent, DEFAULT_TOL};
use crate::grid::{Grid, LogPopTrajectory};
use crate::newick::{Node, Tree};

/// Seasonal effective population size with smoothness `a` and offset `o`
/// (period 12, between 10 and 100).
pub fn seasonal_ne(a: f64, o: f64, t: f64) -> f64 {
    let x = (t + o).rem_euclid(12.0);
    if x <= 6.0 {
        10.0 + 90.0 / (1.0 + (a * (3.0 - x)).exp())
    } else {
        10.0 + 90.0 / (1.0 + (a * (3.0 + x - 12.0)).exp())
    }
}

/// Step approximation of [`seasonal_ne`] on `[0, horizon)` with cells of
/// width at most `max_width`.
pub fn seasonal_trajectory(a: f64, o: f64, horizon: f64, max_width: f64) -> Result<LogPopTrajectory> {
    let cells = ((horizon / max_width).ceil() as usize).max(2);
    LogPopTrajectory::from_fn(Grid::new(0.0, horizon, cells)?, |t| seasonal_ne(a, o, t))
}

/// Deterministic generator for `(master seed, replicate, stream)`.
pub fn replicate_rng(master: u64, replicate: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    rng.set_stream(replicate.wrapping_mul(1 << 8).wrapping_add(stream));
    rng
}

/// A constant-rate piece `[lo, hi)` of an intensity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Segment {
    pub lo: f64,
    pub hi: f64,
    pub rate: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum IntensityKind {
    /// With `fixed_count`, [`sample_times`] draws exactly the target number
    /// of uniform times instead of a Poisson number.
    ConstantRate { rate: f64, fixed_count: bool },
    PowerOfNe { beta0: f64, beta1: f64, traj: LogPopTrajectory },
    /// `levels[k]` holds on `[breaks[k], breaks[k+1])`; `breaks` spans the window.
    PiecewiseConstant { breaks: Vec<f64>, levels: Vec<f64> },
    /// Intensity `exp(traj)`.
    BMTrajectory { traj: LogPopTrajectory },
}

#[derive(Debug, Clone, PartialEq)]
pub struct IntensityFn {
    pub kind: IntensityKind,
    pub window: (f64, f64),
}

impl IntensityFn {
    pub fn new(kind: IntensityKind, window: (f64, f64)) -> Result<Self> {
        let (lo, hi) = window;
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(Error::InvalidArgument(format!("invalid window [{lo}, {hi}]")));
        }
        match &kind {
            IntensityKind::ConstantRate { rate, .. } if !(*rate >= 0.0) || !rate.is_finite() => {
                return Err(Error::InvalidArgument("rate must be non-negative".into()))
            }
            IntensityKind::PowerOfNe { beta0, beta1, traj } => {
                if !(*beta0 >= 0.0) || !beta0.is_finite() || !beta1.is_finite() {
                    return Err(Error::InvalidArgument("invalid power-of-Ne parameters".into()));
                }
                if lo < traj.grid().t_min() {
                    return Err(Error::InvalidArgument("window starts before the trajectory".into()));
                }
            }
            IntensityKind::PiecewiseConstant { breaks, levels } => {
                if breaks.len() != levels.len() + 1 || levels.is_empty() {
                    return Err(Error::InvalidArgument("need one more breakpoint than levels".into()));
                }
                if breaks.windows(2).any(|w| !(w[1] >= w[0])) || breaks[0] != lo || *breaks.last().unwrap() != hi {
                    return Err(Error::InvalidArgument("breakpoints must ascend across the window".into()));
                }
                if levels.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
                    return Err(Error::InvalidArgument("levels must be non-negative".into()));
                }
            }
            IntensityKind::BMTrajectory { traj } => {
                if lo < traj.grid().t_min() {
                    return Err(Error::InvalidArgument("window starts before the trajectory".into()));
                }
            }
            _ => {}
        }
        Ok(Self { kind, window })
    }

    /// Exact piecewise-constant representation over the window.
    pub fn segments(&self) -> Vec<Segment> {
        let (a, b) = self.window;
        match &self.kind {
            IntensityKind::ConstantRate { rate, .. } => vec![Segment { lo: a, hi: b, rate: *rate }],
            IntensityKind::PiecewiseConstant { breaks, levels } => breaks
                .windows(2)
                .zip(levels)
                .filter(|(w, _)| w[1] > w[0])
                .map(|(w, &rate)| Segment { lo: w[0], hi: w[1], rate })
                .collect(),
            IntensityKind::PowerOfNe { beta0, beta1, traj } => {
                traj_segments(traj, a, b, |g| beta0 * (beta1 * g).exp())
            }
            IntensityKind::BMTrajectory { traj } => traj_segments(traj, a, b, f64::exp),
        }
    }

    pub fn total(&self) -> f64 {
        self.segments().iter().map(|s| s.rate * (s.hi - s.lo)).sum()
    }

    pub fn rate_at(&self, t: f64) -> f64 {
        let segs = self.segments();
        rate_in(&segs, t)
    }

    /// Copy scaled by `factor > 0`.
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        let kind = match &self.kind {
            IntensityKind::ConstantRate { rate, fixed_count } => {
                IntensityKind::ConstantRate { rate: rate * factor, fixed_count: *fixed_count }
            }
            IntensityKind::PowerOfNe { beta0, beta1, traj } => {
                IntensityKind::PowerOfNe { beta0: beta0 * factor, beta1: *beta1, traj: traj.clone() }
            }
            IntensityKind::PiecewiseConstant { breaks, levels } => IntensityKind::PiecewiseConstant {
                breaks: breaks.clone(),
                levels: levels.iter().map(|v| v * factor).collect(),
            },
            IntensityKind::BMTrajectory { traj } => {
                let shift = factor.ln();
                let gamma = traj.gamma().iter().map(|g| g + shift).collect();
                IntensityKind::BMTrajectory { traj: LogPopTrajectory::new(traj.grid().clone(), gamma)? }
            }
        };
        Self::new(kind, self.window)
    }

    /// Copy scaled so the integral over the window equals `target`.
    pub fn rescaled(&self, target: f64) -> Result<Self> {
        let total = self.total();
        if !(total > 0.0) || !total.is_finite() {
            return Err(Error::Degenerate("intensity integrates to zero over the window".into()));
        }
        self.scaled(target / total)
    }
}

fn traj_segments(traj: &LogPopTrajectory, a: f64, b: f64, rate: impl Fn(f64) -> f64) -> Vec<Segment> {
    let grid = traj.grid();
    let mut out = Vec::new();
    let mut lo = a;
    let mut j = grid.cell_of(a);
    while lo < b {
        let hi = if j + 1 == grid.len() { b } else { grid.upper(j).min(b) };
        if hi > lo {
            out.push(Segment { lo, hi, rate: rate(traj.gamma()[j]) });
        }
        lo = hi;
        j += 1;
    }
    out
}

fn rate_in(segs: &[Segment], t: f64) -> f64 {
    let k = segs.partition_point(|s| s.hi <= t);
    segs.get(k).filter(|s| s.lo <= t).map_or(0.0, |s| s.rate)
}

/// Width of the blocks over which thinning takes the maximum rate.
const ENVELOPE_BLOCK: f64 = 1.0;

/// Sorts times and merges those within `tol` of the first in a run.
pub fn merge_times(mut times: Vec<f64>, tol: f64) -> Vec<SamplingEvent> {
    times.sort_by(f64::total_cmp);
    let mut out: Vec<SamplingEvent> = Vec::new();
    for t in times {
        match out.last_mut() {
            Some(last) if t - last.time <= tol => last.count += 1,
            _ => out.push(SamplingEvent { time: t, count: 1 }),
        }
    }
    out
}

fn prepare(intensity: &IntensityFn, target_n: Option<f64>) -> Result<Option<IntensityFn>> {
    match target_n {
        None => Ok(Some(intensity.clone())),
        Some(n) if !(n >= 0.0) || !n.is_finite() => {
            Err(Error::InvalidArgument(format!("target count must be non-negative, got {n}")))
        }
        Some(n) if n == 0.0 => Ok(None),
        Some(n) => intensity.rescaled(n).map(Some),
    }
}

/// Sampling times on the window by thinning.
///
/// With `target_n`, the intensity is first rescaled to integrate to it; a
/// fixed-count constant rate draws exactly `target_n` uniform times.
pub fn sample_times<R: Rng + ?Sized>(
    intensity: &IntensityFn,
    target_n: Option<f64>,
    rng: &mut R,
) -> Result<Vec<SamplingEvent>> {
    let (a, b) = intensity.window;
    if let (IntensityKind::ConstantRate { fixed_count: true, .. }, Some(n)) = (&intensity.kind, target_n) {
        let times = (0..n.round() as usize).map(|_| rng.random_range(a..b)).collect();
        return Ok(merge_times(times, DEFAULT_TOL));
    }
    let Some(intensity) = prepare(intensity, target_n)? else {
        return Ok(Vec::new());
    };
    let segs = intensity.segments();
    let mut times = Vec::new();
    let mut lo = a;
    let mut k = 0;
    while lo < b {
        let hi = (lo + ENVELOPE_BLOCK).min(b);
        while k < segs.len() && segs[k].hi <= lo {
            k += 1;
        }
        let bound = segs[k..].iter().take_while(|s| s.lo < hi).map(|s| s.rate).fold(0.0, f64::max);
        if bound > 0.0 {
            for _ in 0..poisson(bound * (hi - lo), rng) {
                let t = rng.random_range(lo..hi);
                if rng.random::<f64>() * bound < rate_in(&segs, t) {
                    times.push(t);
                }
            }
        }
        lo = hi;
    }
    Ok(merge_times(times, DEFAULT_TOL))
}

/// Same process as [`sample_times`] by mapping unit-rate arrivals through
/// the inverse cumulative intensity.
pub fn sample_times_rescaling<R: Rng + ?Sized>(
    intensity: &IntensityFn,
    target_n: Option<f64>,
    rng: &mut R,
) -> Result<Vec<SamplingEvent>> {
    let Some(intensity) = prepare(intensity, target_n)? else {
        return Ok(Vec::new());
    };
    let segs: Vec<Segment> = intensity.segments().into_iter().filter(|s| s.rate > 0.0).collect();
    let mut times = Vec::new();
    let mut k = 0;
    let mut used = 0.0;
    let mut arrival: f64 = Exp1.sample(rng);
    while k < segs.len() {
        let mass = segs[k].rate * (segs[k].hi - segs[k].lo);
        if arrival - used < mass {
            times.push(segs[k].lo + (arrival - used) / segs[k].rate);
            let e: f64 = Exp1.sample(rng);
            arrival += e;
        } else {
            used += mass;
            k += 1;
        }
    }
    Ok(merge_times(times, DEFAULT_TOL))
}

fn poisson<R: Rng + ?Sized>(mean: f64, rng: &mut R) -> u64 {
    if mean <= 0.0 {
        return 0;
    }
    Poisson::new(mean).map(|d| d.sample(rng) as u64).unwrap_or(0)
}

/// Coalescent times for the given samples under `traj`.
pub fn simulate_coalescent<R: Rng + ?Sized>(
    samples: &[SamplingEvent],
    traj: &LogPopTrajectory,
    rng: &mut R,
) -> Result<Genealogy> {
    Ok(simulate_tree(samples, traj, rng)?.genealogy)
}

#[derive(Debug, Clone)]
pub struct SimulatedTree {
    pub tree: Tree,
    pub genealogy: Genealogy,
    /// Tip label and sampling time.
    pub dates: Vec<(String, f64)>,
}

/// Simulates the genealogy backward in time, drawing each waiting time by
/// inverting the cumulative hazard `C(A) / N(t)` of the step trajectory.
pub fn simulate_tree<R: Rng + ?Sized>(
    samples: &[SamplingEvent],
    traj: &LogPopTrajectory,
    rng: &mut R,
) -> Result<SimulatedTree> {
    let n: usize = samples.iter().map(|s| s.count).sum();
    if n < 2 {
        return Err(Error::InvalidArgument(format!("need at least 2 tips, got {n}")));
    }
    if samples.windows(2).any(|w| !(w[1].time > w[0].time)) {
        return Err(Error::InvalidArgument("sampling times must be strictly increasing".into()));
    }
    if samples[0].time < traj.grid().t_min() {
        return Err(Error::InvalidArgument("samples precede the trajectory".into()));
    }

    // node times; tips first
    let mut times: Vec<f64> = Vec::with_capacity(2 * n - 1);
    let mut children: Vec<Option<(usize, usize)>> = Vec::with_capacity(2 * n - 1);
    let mut active: Vec<usize> = Vec::new();
    let add_tips = |ev: &SamplingEvent, times: &mut Vec<f64>, children: &mut Vec<_>, active: &mut Vec<usize>| {
        for _ in 0..ev.count {
            active.push(times.len());
            times.push(ev.time);
            children.push(None);
        }
    };

    let mut coal_times = Vec::with_capacity(n - 1);
    let mut t = samples[0].time;
    add_tips(&samples[0], &mut times, &mut children, &mut active);
    let mut next = 1;
    loop {
        let a = active.len();
        if a < 2 {
            match samples.get(next) {
                Some(ev) => {
                    t = ev.time;
                    add_tips(ev, &mut times, &mut children, &mut active);
                    next += 1;
                    continue;
                }
                None => break,
            }
        }
        let pairs = (a * (a - 1) / 2) as f64;
        let e: f64 = Exp1.sample(rng);
        let tc = traj.invert_integral(-1.0, t, e / pairs);
        if let Some(ev) = samples.get(next) {
            if tc >= ev.time {
                t = ev.time;
                add_tips(ev, &mut times, &mut children, &mut active);
                next += 1;
                continue;
            }
        }
        let i = rng.random_range(0..a);
        let left = active.swap_remove(i);
        let j = rng.random_range(0..a - 1);
        let right = active.swap_remove(j);
        active.push(times.len());
        times.push(tc);
        children.push(Some((left, right)));
        coal_times.push(tc);
        t = tc;
    }

    let root = times.len() - 1;
    let mut dates = Vec::with_capacity(n);
    let mut nodes: Vec<Node> = (0..times.len())
        .map(|i| Node {
            label: children[i].is_none().then(|| {
                let label = format!("s{}", dates.len() + 1);
                dates.push((label.clone(), times[i]));
                label
            }),
            parent: None,
            children: children[i].map(|(l, r)| vec![l, r]).unwrap_or_default(),
            branch_length: 0.0,
            depth: 0.0,
        })
        .collect();
    for i in 0..times.len() {
        if let Some((l, r)) = children[i] {
            for c in [l, r] {
                nodes[c].parent = Some(i);
                nodes[c].branch_length = times[i] - times[c];
            }
        }
    }
    let tree = Tree::from_nodes(nodes, root)?;
    let genealogy = Genealogy::new(samples.to_vec(), coal_times, None)?;
    Ok(SimulatedTree { tree, genealogy, dates })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NegControlKind {
    PiecewiseConstant,
    Brownian,
}

impl std::str::FromStr for NegControlKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "piecewise" | "piecewise-constant" => Ok(Self::PiecewiseConstant),
            "bm" | "brownian" => Ok(Self::Brownian),
            other => Err(Error::InvalidArgument(format!("unknown negative control '{other}'"))),
        }
    }
}

pub const NEGCTL_SEGMENTS: usize = 10;
pub const NEGCTL_LOG_LEVEL_RANGE: f64 = 2.0;
pub const NEGCTL_BM_VARIANCE: f64 = 1.0;
pub const NEGCTL_BM_CELLS: usize = 100;

/// Random intensity independent of any population trajectory, scaled so
/// its integral over `window` equals `target_n`.
pub fn negative_control_intensity<R: Rng + ?Sized>(
    kind: NegControlKind,
    segments: usize,
    window: (f64, f64),
    target_n: f64,
    rng: &mut R,
) -> Result<IntensityFn> {
    let (a, b) = window;
    let raw = match kind {
        NegControlKind::PiecewiseConstant => {
            if segments == 0 {
                return Err(Error::InvalidArgument("need at least one segment".into()));
            }
            let mut breaks: Vec<f64> = (1..segments).map(|_| rng.random_range(a..b)).collect();
            breaks.sort_by(f64::total_cmp);
            breaks.insert(0, a);
            breaks.push(b);
            let levels = (0..segments)
                .map(|_| rng.random_range(-NEGCTL_LOG_LEVEL_RANGE..NEGCTL_LOG_LEVEL_RANGE).exp())
                .collect();
            IntensityFn::new(IntensityKind::PiecewiseConstant { breaks, levels }, window)?
        }
        NegControlKind::Brownian => {
            let grid = Grid::new(a, b, NEGCTL_BM_CELLS)?;
            let step = Normal::new(0.0, (NEGCTL_BM_VARIANCE * grid.width()).sqrt())
                .map_err(|e| Error::InvalidArgument(e.to_string()))?;
            let mut level = 0.0;
            let gamma = (0..NEGCTL_BM_CELLS)
                .map(|j| {
                    if j > 0 {
                        level += step.sample(rng);
                    }
                    level
                })
                .collect();
            IntensityFn::new(IntensityKind::BMTrajectory { traj: LogPopTrajectory::new(grid, gamma)? }, window)?
        }
    };
    raw.rescaled(target_n)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seasonal_values() {
        assert!((seasonal_ne(2.0, 0.0, 3.0) - 55.0).abs() < 1e-12);
        assert!((seasonal_ne(2.0, 0.0, 0.0) - (10.0 + 90.0 / (1.0 + 6f64.exp()))).abs() < 1e-12);
        assert!((seasonal_ne(2.0, 0.0, 0.0) - 10.222536).abs() < 1e-6);
        assert!((seasonal_ne(2.0, 0.0, 6.0) - 99.777464).abs() < 1e-6);
        for t in [0.3, 4.0, 7.5, 11.9] {
            assert!((seasonal_ne(2.0, 1.0, t) - seasonal_ne(2.0, 1.0, t + 36.0)).abs() < 1e-9);
        }
        // the two branches meet at x = 6 and x = 12
        assert!((seasonal_ne(2.0, 0.0, 6.0) - seasonal_ne(2.0, 0.0, 6.0 + 1e-12)).abs() < 1e-6);
        assert!((seasonal_ne(2.0, 0.0, 12.0 - 1e-12) - seasonal_ne(2.0, 0.0, 0.0)).abs() < 1e-6);
    }

    #[test]
    fn zero_intensity_gives_no_samples() {
        let f = IntensityFn::new(IntensityKind::ConstantRate { rate: 0.0, fixed_count: false }, (0.0, 3.0)).unwrap();
        let mut rng = replicate_rng(1, 0, 0);
        assert!(sample_times(&f, None, &mut rng).unwrap().is_empty());
        assert!(sample_times(&f, Some(0.0), &mut rng).unwrap().is_empty());
        assert!(sample_times(&f, Some(5.0), &mut rng).is_err());
    }

    #[test]
    fn fixed_count_draws_exact_number() {
        let f = IntensityFn::new(IntensityKind::ConstantRate { rate: 1.0, fixed_count: true }, (0.0, 48.0)).unwrap();
        let ev = sample_times(&f, Some(200.0), &mut replicate_rng(3, 0, 0)).unwrap();
        assert_eq!(ev.iter().map(|e| e.count).sum::<usize>(), 200);
        assert!(ev.windows(2).all(|w| w[1].time > w[0].time));
    }

    #[test]
    fn power_of_ne_rescaling() {
        let traj = seasonal_trajectory(2.0, 0.0, 60.0, 0.02).unwrap();
        let f = IntensityFn::new(IntensityKind::PowerOfNe { beta0: 1.0, beta1: 1.0, traj }, (0.0, 48.0)).unwrap();
        let g = f.rescaled(200.0).unwrap();
        assert!((g.total() - 200.0).abs() < 1e-9 * 200.0);
    }

    #[test]
    fn piecewise_single_segment_is_constant() {
        let f = negative_control_intensity(NegControlKind::PiecewiseConstant, 1, (0.0, 48.0), 200.0, &mut replicate_rng(5, 0, 0))
            .unwrap();
        let segs = f.segments();
        assert_eq!(segs.len(), 1);
        assert!((segs[0].rate - 200.0 / 48.0).abs() < 1e-12);
    }

    #[test]
    fn simulated_tree_is_consistent() {
        let traj = seasonal_trajectory(2.0, 0.0, 500.0, 0.05).unwrap();
        let samples = vec![
            SamplingEvent { time: 0.5, count: 3 },
            SamplingEvent { time: 2.0, count: 1 },
            SamplingEvent { time: 30.0, count: 4 },
        ];
        let sim = simulate_tree(&samples, &traj, &mut replicate_rng(11, 2, 1)).unwrap();
        assert_eq!(sim.genealogy.coal_times().len(), 7);
        assert_eq!(sim.tree.tip_count(), 8);
        assert_eq!(sim.dates.len(), 8);
        assert!(sim.genealogy.root_time() > 30.0);
        // dates agree with tip labels and tree geometry
        let dates: std::collections::HashMap<String, f64> = sim.dates.iter().cloned().collect();
        let root_depth = sim.genealogy.root_time();
        for tip in sim.tree.tips() {
            let date = dates[tip.label.as_ref().unwrap()];
            assert!((root_depth - tip.depth - date).abs() < 1e-9);
        }
    }

    #[test]
    fn deterministic_given_seed() {
        let traj = LogPopTrajectory::constant(Grid::new(0.0, 10.0, 10).unwrap(), 1.0).unwrap();
        let samples = vec![SamplingEvent { time: 0.0, count: 5 }];
        let a = simulate_coalescent(&samples, &traj, &mut replicate_rng(9, 4, 0)).unwrap();
        let b = simulate_coalescent(&samples, &traj, &mut replicate_rng(9, 4, 0)).unwrap();
        let c = simulate_coalescent(&samples, &traj, &mut replicate_rng(9, 5, 0)).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }
}
