//! Accuracy, width and coverage statistics of reconstructed trajectories.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::LogPopTrajectory;
use crate::inference::PosteriorSummary;
use crate::output::fmt_sig;

/// `k + 1` equally spaced points on `[a, b]`.
pub fn eval_grid(a: f64, b: f64, k: usize) -> Vec<f64> {
    (0..=k).map(|i| a + (b - a) * i as f64 / k as f64).collect()
}

/// Posterior bands of one reconstruction on the evaluation grid.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Bands {
    pub median: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl Bands {
    /// Nearest-cell lookup of a summary at each evaluation time.
    pub fn from_summary(summary: &PosteriorSummary, times: &[f64]) -> Self {
        let cell = |t: f64| summary.grid.cell_of(t);
        Self {
            median: times.iter().map(|&t| summary.ne_median[cell(t)]).collect(),
            lower: times.iter().map(|&t| summary.ne_q025[cell(t)]).collect(),
            upper: times.iter().map(|&t| summary.ne_q975[cell(t)]).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AlignedReplicate {
    pub truth: Vec<f64>,
    pub bands: Bands,
}

/// Replicate reconstructions aligned to a shared evaluation grid.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StudyResult {
    pub eval_grid: Vec<f64>,
    pub replicates: Vec<AlignedReplicate>,
}

impl StudyResult {
    pub fn new(eval_grid: Vec<f64>) -> Self {
        Self { eval_grid, replicates: Vec::new() }
    }

    pub fn push(&mut self, truth: &LogPopTrajectory, summary: &PosteriorSummary) {
        let truth = self.eval_grid.iter().map(|&t| truth.ne_at(t)).collect();
        let bands = Bands::from_summary(summary, &self.eval_grid);
        self.replicates.push(AlignedReplicate { truth, bands });
    }

    pub fn push_aligned(&mut self, rep: AlignedReplicate) -> Result<()> {
        let k = self.eval_grid.len();
        if rep.truth.len() != k || rep.bands.median.len() != k || rep.bands.lower.len() != k || rep.bands.upper.len() != k
        {
            return Err(Error::LengthMismatch { expected: k, got: rep.truth.len() });
        }
        self.replicates.push(rep);
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct IntervalStats {
    pub mrd: f64,
    pub mrw: f64,
    pub me: f64,
}

fn window_indices(times: &[f64], a: f64, b: f64) -> Result<Vec<usize>> {
    if !(a < b) {
        return Err(Error::InvalidArgument(format!("interval ({a}, {b}) is empty")));
    }
    let idx: Vec<usize> = (0..times.len()).filter(|&i| times[i] >= a && times[i] <= b).collect();
    if idx.is_empty() {
        return Err(Error::InvalidArgument(format!("no evaluation points in [{a}, {b}]")));
    }
    Ok(idx)
}

/// Trapezoid average of `f` over the included points, normalized by their
/// span; a single point returns its value.
fn trapezoid_mean(times: &[f64], idx: &[usize], f: impl Fn(usize) -> f64) -> f64 {
    if idx.len() == 1 {
        return f(idx[0]);
    }
    let mut total = 0.0;
    for w in idx.windows(2) {
        total += 0.5 * (f(w[0]) + f(w[1])) * (times[w[1]] - times[w[0]]);
    }
    total / (times[idx[idx.len() - 1]] - times[idx[0]])
}

pub fn interval_stats(res: &StudyResult, a: f64, b: f64) -> Result<IntervalStats> {
    if res.replicates.is_empty() {
        return Err(Error::InvalidArgument("no replicates".into()));
    }
    let t = &res.eval_grid;
    let idx = window_indices(t, a, b)?;
    let r = res.replicates.len() as f64;
    let mut mrd = 0.0;
    let mut mrw = 0.0;
    let mut hits = 0usize;
    for rep in &res.replicates {
        let (n, m) = (&rep.truth, &rep.bands);
        mrd += trapezoid_mean(t, &idx, |i| (m.median[i] - n[i]).abs() / n[i]);
        mrw += trapezoid_mean(t, &idx, |i| (m.upper[i] - m.lower[i]) / n[i]);
        hits += idx.iter().filter(|&&i| m.lower[i] <= n[i] && n[i] <= m.upper[i]).count();
    }
    Ok(IntervalStats { mrd: mrd / r, mrw: mrw / r, me: hits as f64 / (r * idx.len() as f64) })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PointwiseStats {
    pub mpmedian: Vec<f64>,
    pub mre: Vec<f64>,
    pub mrw: Vec<f64>,
}

pub fn pointwise_stats(res: &StudyResult) -> Result<PointwiseStats> {
    if res.replicates.is_empty() {
        return Err(Error::InvalidArgument("no replicates".into()));
    }
    let k = res.eval_grid.len();
    let r = res.replicates.len() as f64;
    let mut out = PointwiseStats { mpmedian: vec![0.0; k], mre: vec![0.0; k], mrw: vec![0.0; k] };
    for rep in &res.replicates {
        for i in 0..k {
            let n = rep.truth[i];
            out.mpmedian[i] += rep.bands.median[i] / r;
            out.mre[i] += (rep.bands.median[i] - n) / n / r;
            out.mrw[i] += (rep.bands.upper[i] - rep.bands.lower[i]) / n / r;
        }
    }
    Ok(out)
}

/// Mean relative width with the posterior median standing in for the truth.
pub fn emrw(bands: &[Bands], times: &[f64], a: f64, b: f64) -> Result<f64> {
    if bands.is_empty() {
        return Err(Error::InvalidArgument("no summaries".into()));
    }
    let idx = window_indices(times, a, b)?;
    let total: f64 = bands
        .iter()
        .map(|m| trapezoid_mean(times, &idx, |i| (m.upper[i] - m.lower[i]) / m.median[i]))
        .sum();
    Ok(total / bands.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TableRow {
    pub schedule: String,
    pub model: String,
    pub interval: (f64, f64),
    pub stats: IntervalStats,
}

pub fn table_csv(rows: &[TableRow]) -> String {
    let mut out = String::from("schedule,model,interval,MRD,MRW,ME\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{}:{},{},{},{}\n",
            r.schedule,
            r.model,
            fmt_sig(r.interval.0),
            fmt_sig(r.interval.1),
            fmt_sig(r.stats.mrd),
            fmt_sig(r.stats.mrw),
            fmt_sig(r.stats.me)
        ));
    }
    out
}

pub fn pointwise_csv(rows: &[(String, String, Vec<f64>, PointwiseStats)]) -> String {
    let mut out = String::from("schedule,model,t,mpmedian,mre,mrw\n");
    for (schedule, model, times, p) in rows {
        for i in 0..times.len() {
            out.push_str(&format!(
                "{schedule},{model},{},{},{},{}\n",
                fmt_sig(times[i]),
                fmt_sig(p.mpmedian[i]),
                fmt_sig(p.mre[i]),
                fmt_sig(p.mrw[i])
            ));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn constant(k: usize, truth: f64, med: f64, lo: f64, hi: f64) -> AlignedReplicate {
        AlignedReplicate {
            truth: vec![truth; k],
            bands: Bands { median: vec![med; k], lower: vec![lo; k], upper: vec![hi; k] },
        }
    }

    #[test]
    fn constant_functions() {
        let mut res = StudyResult::new(eval_grid(0.0, 1.0, 10));
        res.push_aligned(constant(11, 1.0, 1.5, 1.0, 3.0)).unwrap();
        let s = interval_stats(&res, 0.0, 1.0).unwrap();
        assert!((s.mrd - 0.5).abs() < 1e-12 && (s.mrw - 2.0).abs() < 1e-12 && s.me == 1.0);
    }

    #[test]
    fn perfect_estimate() {
        let mut res = StudyResult::new(eval_grid(0.0, 1.0, 10));
        res.push_aligned(constant(11, 2.0, 2.0, 2.0, 2.0)).unwrap();
        let s = interval_stats(&res, 0.0, 1.0).unwrap();
        assert_eq!((s.mrd, s.mrw, s.me), (0.0, 0.0, 1.0));
    }

    #[test]
    fn pointwise_symmetric_errors_cancel() {
        let mut res = StudyResult::new(vec![0.0]);
        res.push_aligned(constant(1, 2.0, 1.0, 1.0, 1.0)).unwrap();
        res.push_aligned(constant(1, 2.0, 3.0, 3.0, 3.0)).unwrap();
        let p = pointwise_stats(&res).unwrap();
        assert_eq!(p.mpmedian, vec![2.0]);
        assert_eq!(p.mre, vec![0.0]);
    }

    #[test]
    fn emrw_examples() {
        let t = eval_grid(0.0, 1.0, 4);
        let b = Bands { median: vec![2.0; 5], lower: vec![1.0; 5], upper: vec![3.0; 5] };
        assert!((emrw(&[b], &t, 0.0, 1.0).unwrap() - 1.0).abs() < 1e-12);
        let z = Bands { median: vec![2.0; 5], lower: vec![2.0; 5], upper: vec![2.0; 5] };
        assert_eq!(emrw(&[z], &t, 0.0, 1.0).unwrap(), 0.0);
    }

    #[test]
    fn errors() {
        let res = StudyResult::new(eval_grid(0.0, 1.0, 4));
        assert!(interval_stats(&res, 0.0, 1.0).is_err());
        let mut res = res;
        res.push_aligned(constant(5, 1.0, 1.0, 1.0, 1.0)).unwrap();
        assert!(interval_stats(&res, 0.3, 0.4).is_err());
        assert!(StudyResult::new(vec![0.0, 1.0]).push_aligned(constant(3, 1.0, 1.0, 1.0, 1.0)).is_err());
    }

    fn random_rep(k: usize) -> impl Strategy<Value = AlignedReplicate> {
        (
            prop::collection::vec(0.1f64..10.0, k),
            prop::collection::vec(0.1f64..10.0, k),
            prop::collection::vec(0.0f64..2.0, k),
            prop::collection::vec(0.0f64..2.0, k),
        )
            .prop_map(|(truth, med, dl, du)| {
                let lower = med.iter().zip(&dl).map(|(m, d)| m / (1.0 + d)).collect();
                let upper = med.iter().zip(&du).map(|(m, d)| m * (1.0 + d)).collect();
                AlignedReplicate { truth, bands: Bands { median: med, lower, upper } }
            })
    }

    proptest! {
        #[test]
        fn scale_invariance(rep in random_rep(21), c in 0.01f64..100.0) {
            let t = eval_grid(0.0, 2.0, 20);
            let mut a = StudyResult::new(t.clone());
            a.push_aligned(rep.clone()).unwrap();
            let scale = |v: &Vec<f64>| v.iter().map(|x| x * c).collect::<Vec<_>>();
            let mut b = StudyResult::new(t);
            b.push_aligned(AlignedReplicate {
                truth: scale(&rep.truth),
                bands: Bands { median: scale(&rep.bands.median), lower: scale(&rep.bands.lower), upper: scale(&rep.bands.upper) },
            }).unwrap();
            let (sa, sb) = (interval_stats(&a, 0.0, 2.0).unwrap(), interval_stats(&b, 0.0, 2.0).unwrap());
            prop_assert!((sa.mrd - sb.mrd).abs() <= 1e-10 * sa.mrd.max(1.0));
            prop_assert!((sa.mrw - sb.mrw).abs() <= 1e-10 * sa.mrw.max(1.0));
            prop_assert_eq!(sa.me, sb.me);
            prop_assert!(sa.me >= 0.0 && sa.me <= 1.0 && sa.mrd >= 0.0 && sa.mrw >= 0.0);
        }

        #[test]
        fn interval_additivity(rep in random_rep(21), split in 1usize..20) {
            let t = eval_grid(0.0, 2.0, 20);
            let c = t[split];
            let mut res = StudyResult::new(t);
            res.push_aligned(rep).unwrap();
            let whole = interval_stats(&res, 0.0, 2.0).unwrap();
            let left = interval_stats(&res, 0.0, c).unwrap();
            let right = interval_stats(&res, c, 2.0).unwrap();
            let mix = |l: f64, r: f64| (l * c + r * (2.0 - c)) / 2.0;
            prop_assert!((whole.mrd - mix(left.mrd, right.mrd)).abs() < 1e-10);
            prop_assert!((whole.mrw - mix(left.mrw, right.mrw)).abs() < 1e-10);
        }
    }
}
