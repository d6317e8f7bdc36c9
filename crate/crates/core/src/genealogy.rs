//! Dated genealogies, their sufficient statistics, and the per-cell
//! decomposition consumed by both likelihoods.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::newick::Tree;
use crate::output::fmt_sig;

/// Default tolerance for merging tip times and detecting coalescent ties.
pub const DEFAULT_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SamplingEvent {
    pub time: f64,
    pub count: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EventKind {
    Sampling(usize),
    Coalescent,
}

/// Sampling events and coalescent times of a dated genealogy, all sorted
/// ascending (present to past).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Genealogy {
    samp_events: Vec<SamplingEvent>,
    coal_times: Vec<f64>,
    s0: f64,
}

impl Genealogy {
    /// Validates the lineage-count invariants. The sampling window end
    /// `s0` defaults to the oldest sampling time when `None`.
    pub fn new(samp_events: Vec<SamplingEvent>, coal_times: Vec<f64>, s0: Option<f64>) -> Result<Self> {
        if samp_events.is_empty() {
            return Err(Error::InvalidGenealogy("no sampling events".into()));
        }
        for w in samp_events.windows(2) {
            if !(w[1].time > w[0].time) {
                return Err(Error::InvalidGenealogy("sampling times must be strictly increasing".into()));
            }
        }
        for ev in &samp_events {
            if !ev.time.is_finite() || ev.time < 0.0 {
                return Err(Error::InvalidGenealogy(format!("invalid sampling time {}", ev.time)));
            }
            if ev.count == 0 {
                return Err(Error::InvalidGenealogy("sampling event with zero multiplicity".into()));
            }
        }
        for w in coal_times.windows(2) {
            if !(w[1] > w[0]) {
                return Err(Error::InvalidGenealogy("coalescent times must be strictly increasing".into()));
            }
        }
        if coal_times.iter().any(|t| !t.is_finite() || *t < 0.0) {
            return Err(Error::InvalidGenealogy("invalid coalescent time".into()));
        }
        let n: usize = samp_events.iter().map(|e| e.count).sum();
        if n < 2 {
            return Err(Error::InvalidGenealogy("need at least 2 tips".into()));
        }
        if coal_times.len() != n - 1 {
            return Err(Error::InvalidGenealogy(format!(
                "{} tips require {} coalescent events, found {}",
                n,
                n - 1,
                coal_times.len()
            )));
        }
        let last_sample = samp_events.last().map(|e| e.time).unwrap_or(0.0);
        let s0 = s0.unwrap_or(last_sample);
        if !s0.is_finite() || s0 < last_sample {
            return Err(Error::InvalidGenealogy(format!(
                "sampling window end {s0} precedes last sampling time {last_sample}"
            )));
        }
        let g = Self { samp_events, coal_times, s0 };
        let mut active = 0usize;
        for (t, kind) in g.events() {
            match kind {
                EventKind::Sampling(k) => active += k,
                EventKind::Coalescent => {
                    if active < 2 {
                        return Err(Error::InvalidGenealogy(format!(
                            "coalescent event at {t} with {active} active lineage(s)"
                        )));
                    }
                    active -= 1;
                }
            }
        }
        if active != 1 {
            return Err(Error::InvalidGenealogy(format!("{active} lineages remain after the root")));
        }
        Ok(g)
    }

    pub fn sampling_events(&self) -> &[SamplingEvent] {
        &self.samp_events
    }

    pub fn coal_times(&self) -> &[f64] {
        &self.coal_times
    }

    pub fn s0(&self) -> f64 {
        self.s0
    }

    pub fn with_s0(mut self, s0: f64) -> Result<Self> {
        let last = self.last_sample_time();
        if !s0.is_finite() || s0 < last {
            return Err(Error::InvalidArgument(format!("s0 = {s0} precedes last sampling time {last}")));
        }
        self.s0 = s0;
        Ok(self)
    }

    pub fn n_tips(&self) -> usize {
        self.samp_events.iter().map(|e| e.count).sum()
    }

    pub fn root_time(&self) -> f64 {
        *self.coal_times.last().expect("validated genealogy has a root")
    }

    pub fn last_sample_time(&self) -> f64 {
        self.samp_events.last().map(|e| e.time).unwrap_or(0.0)
    }

    /// Latest time the genealogy or its sampling window reaches.
    pub fn horizon(&self) -> f64 {
        self.root_time().max(self.s0)
    }

    /// Flattened sampling times, one entry per tip.
    pub fn tip_times(&self) -> Vec<f64> {
        self.samp_events.iter().flat_map(|e| std::iter::repeat_n(e.time, e.count)).collect()
    }

    /// All events merged in time order; sampling precedes coalescence on ties.
    pub fn events(&self) -> Vec<(f64, EventKind)> {
        let mut out = Vec::with_capacity(self.samp_events.len() + self.coal_times.len());
        let (mut i, mut k) = (0, 0);
        while i < self.samp_events.len() || k < self.coal_times.len() {
            let take_sample = match (self.samp_events.get(i), self.coal_times.get(k)) {
                (Some(s), Some(&c)) => s.time <= c,
                (Some(_), None) => true,
                _ => false,
            };
            if take_sample {
                let s = self.samp_events[i];
                out.push((s.time, EventKind::Sampling(s.count)));
                i += 1;
            } else {
                out.push((self.coal_times[k], EventKind::Coalescent));
                k += 1;
            }
        }
        out
    }

    /// Grid over `[0, horizon]` with `cells` cells.
    pub fn default_grid(&self, cells: usize) -> Result<Grid> {
        Grid::new(0.0, self.horizon(), cells)
    }
}

/// Sampling and coalescent times read off tree geometry, with time zero at
/// the deepest tip.
pub fn extract_events(tree: &Tree, tol: f64) -> Result<Genealogy> {
    extract_events_dated(tree, tol, None)
}

/// As [`extract_events`], optionally re-anchoring times with tip dates
/// (`label -> time`). Dates must agree with the geometry up to a common
/// offset within `tol`.
pub fn extract_events_dated(tree: &Tree, tol: f64, dates: Option<&HashMap<String, f64>>) -> Result<Genealogy> {
    if !(tol >= 0.0) {
        return Err(Error::InvalidArgument("tolerance must be non-negative".into()));
    }
    let ntips = tree.tip_count();
    if ntips < 2 {
        return Err(Error::InvalidTree(format!("tree has {ntips} tip(s); need at least 2")));
    }
    let max_depth = tree.max_tip_depth();
    let geom = |depth: f64| (max_depth - depth).max(0.0);

    let offset = match dates {
        None => 0.0,
        Some(dates) => {
            let mut offset = None;
            let mut pairs = Vec::with_capacity(ntips);
            for tip in tree.tips() {
                let label = tip
                    .label
                    .as_ref()
                    .ok_or_else(|| Error::InvalidTree("unlabelled tip with sidecar dates".into()))?;
                let date = *dates
                    .get(label)
                    .ok_or_else(|| Error::InvalidTree(format!("no date for tip '{label}'")))?;
                let g = geom(tip.depth);
                if g == 0.0 && offset.is_none() {
                    offset = Some(date);
                }
                pairs.push((label, g, date));
            }
            let offset = offset.unwrap_or(0.0);
            for (label, g, date) in pairs {
                if (date - (g + offset)).abs() > tol {
                    return Err(Error::InvalidTree(format!(
                        "date {date} of tip '{label}' disagrees with tree geometry ({})",
                        g + offset
                    )));
                }
            }
            if offset < -tol {
                return Err(Error::InvalidTree("tip dates imply negative times".into()));
            }
            offset.max(0.0)
        }
    };

    let mut tip_times: Vec<f64> = tree.tips().map(|n| geom(n.depth) + offset).collect();
    tip_times.sort_by(f64::total_cmp);
    let mut samp_events: Vec<SamplingEvent> = Vec::new();
    for t in tip_times {
        match samp_events.last_mut() {
            Some(last) if t - last.time <= tol => last.count += 1,
            _ => samp_events.push(SamplingEvent { time: t, count: 1 }),
        }
    }

    let mut coal_times: Vec<f64> =
        tree.nodes().iter().filter(|n| !n.is_tip()).map(|n| geom(n.depth) + offset).collect();
    coal_times.sort_by(f64::total_cmp);
    for w in coal_times.windows(2) {
        if w[1] - w[0] <= tol {
            return Err(Error::InvalidGenealogy(format!(
                "coalescent times {} and {} coincide within tolerance",
                w[0], w[1]
            )));
        }
    }
    Genealogy::new(samp_events, coal_times, None)
}

/// Parses a `label<TAB>time` sidecar. Blank lines and `#` comments are skipped.
pub fn parse_sidecar(text: &str) -> Result<HashMap<String, f64>> {
    let mut out = HashMap::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let mut parts = line.split('\t');
        let (Some(label), Some(time), None) = (parts.next(), parts.next(), parts.next()) else {
            return Err(Error::InvalidArgument(format!("sidecar line {}: expected label<TAB>time", lineno + 1)));
        };
        let time: f64 = time.trim().parse().map_err(|_| {
            Error::InvalidArgument(format!("sidecar line {}: bad time '{time}'", lineno + 1))
        })?;
        if !time.is_finite() {
            return Err(Error::InvalidArgument(format!("sidecar line {}: non-finite time", lineno + 1)));
        }
        if out.insert(label.to_string(), time).is_some() {
            return Err(Error::InvalidArgument(format!("sidecar line {}: duplicate label '{label}'", lineno + 1)));
        }
    }
    Ok(out)
}

pub fn write_sidecar(dates: &[(String, f64)]) -> String {
    let mut out = String::new();
    for (label, t) in dates {
        out.push_str(&format!("{label}\t{t}\n"));
    }
    out
}

/// Per-cell sufficient statistics of a genealogy on a grid.
///
/// `d` and `c` hold integer counts stored as floats.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntervalData {
    pub grid: Grid,
    /// Coalescent pressure: sum over segments of `C(A) * overlap`.
    pub e: Vec<f64>,
    /// Coalescent events per cell.
    pub d: Vec<f64>,
    /// Sampled tips per cell.
    pub c: Vec<f64>,
    /// Overlap of the sampling window `[0, s0]` with each cell.
    pub w_samp: Vec<f64>,
    pub n_tips: usize,
    pub s0: f64,
}

impl IntervalData {
    pub fn cells(&self) -> usize {
        self.grid.len()
    }

    pub fn total_coal(&self) -> f64 {
        self.d.iter().sum()
    }

    pub fn total_pressure(&self) -> f64 {
        self.e.iter().sum()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("cell_index,lower,upper,pressure,coal_events,samples,window_overlap\n");
        for j in 0..self.cells() {
            out.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                j + 1,
                fmt_sig(self.grid.lower(j)),
                fmt_sig(self.grid.upper(j)),
                fmt_sig(self.e[j]),
                self.d[j],
                self.c[j],
                fmt_sig(self.w_samp[j])
            ));
        }
        out
    }
}

pub fn decompose_intervals(gen: &Genealogy, grid: &Grid) -> Result<IntervalData> {
    if grid.t_min() > 0.0 {
        return Err(Error::InvalidGrid(format!("grid starts at {} but must cover 0", grid.t_min())));
    }
    let b = grid.len();
    let mut e = vec![0.0; b];
    let mut d = vec![0.0; b];
    let mut c = vec![0.0; b];
    let mut w_samp = vec![0.0; b];

    let mut active = 0usize;
    let mut prev = 0.0;
    for (t, kind) in gen.events() {
        if t > prev && active >= 2 {
            let pressure = (active * (active - 1)) as f64 / 2.0;
            grid.for_each_overlap(prev, t, |j, len| e[j] += pressure * len);
        }
        match kind {
            EventKind::Sampling(k) => {
                active += k;
                c[grid.cell_of(t)] += k as f64;
            }
            EventKind::Coalescent => {
                if active < 2 {
                    return Err(Error::InvalidGenealogy(format!("coalescence at {t} with {active} lineage(s)")));
                }
                active -= 1;
                d[grid.cell_of(t)] += 1.0;
            }
        }
        prev = t;
    }
    grid.for_each_overlap(0.0, gen.s0(), |j, len| w_samp[j] += len);
    Ok(IntervalData { grid: grid.clone(), e, d, c, w_samp, n_tips: gen.n_tips(), s0: gen.s0() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::newick::parse_newick;

    fn isochronous(n: usize, coal: Vec<f64>) -> Genealogy {
        Genealogy::new(vec![SamplingEvent { time: 0.0, count: n }], coal, None).unwrap()
    }

    #[test]
    fn three_tip_events() {
        let t = parse_newick("((A:1.2,B:1.2):0.3,C:0.6);").unwrap();
        let g = extract_events(&t, DEFAULT_TOL).unwrap();
        assert_eq!(g.sampling_events().len(), 2);
        assert_eq!(g.sampling_events()[0], SamplingEvent { time: 0.0, count: 2 });
        assert!((g.sampling_events()[1].time - 0.9).abs() < 1e-12);
        assert_eq!(g.sampling_events()[1].count, 1);
        assert!((g.coal_times()[0] - 1.2).abs() < 1e-12);
        assert!((g.coal_times()[1] - 1.5).abs() < 1e-12);
        assert!((g.s0() - 0.9).abs() < 1e-12);
    }

    #[test]
    fn cherry_events() {
        let t = parse_newick("(A:1.0,B:1.0);").unwrap();
        let g = extract_events(&t, DEFAULT_TOL).unwrap();
        assert_eq!(g.sampling_events(), &[SamplingEvent { time: 0.0, count: 2 }]);
        assert_eq!(g.coal_times(), &[1.0]);
    }

    #[test]
    fn near_coincident_tips_merge() {
        let tol = 1e-6;
        let text = format!("(A:1.0,B:{});", 1.0 - tol / 2.0);
        let g = extract_events(&parse_newick(&text).unwrap(), tol).unwrap();
        assert_eq!(g.sampling_events().len(), 1);
        assert_eq!(g.sampling_events()[0].count, 2);
    }

    #[test]
    fn coalescent_ties_rejected() {
        let t = parse_newick("((A:1,B:1):1,(C:1,D:1):1);").unwrap();
        assert!(matches!(extract_events(&t, DEFAULT_TOL), Err(Error::InvalidGenealogy(_))));
    }

    #[test]
    fn sidecar_offsets_times() {
        let t = parse_newick("((A:1.2,B:1.2):0.3,C:0.6);").unwrap();
        let dates = parse_sidecar("A\t2.0\nB\t2.0\n# comment\nC\t2.9\n").unwrap();
        let g = extract_events_dated(&t, DEFAULT_TOL, Some(&dates)).unwrap();
        assert_eq!(g.sampling_events()[0].time, 2.0);
        assert!((g.coal_times()[1] - 3.5).abs() < 1e-12);

        let bad = parse_sidecar("A\t2.0\nB\t2.0\nC\t3.5\n").unwrap();
        assert!(extract_events_dated(&t, DEFAULT_TOL, Some(&bad)).is_err());
        let missing = parse_sidecar("A\t2.0\nB\t2.0\n").unwrap();
        assert!(extract_events_dated(&t, DEFAULT_TOL, Some(&missing)).is_err());
    }

    #[test]
    fn sidecar_parse_errors() {
        assert!(parse_sidecar("A 1.0\n").is_err());
        assert!(parse_sidecar("A\tx\n").is_err());
        assert!(parse_sidecar("A\t1\nA\t2\n").is_err());
    }

    #[test]
    fn genealogy_validation() {
        assert!(Genealogy::new(vec![SamplingEvent { time: 0.0, count: 1 }], vec![], None).is_err());
        assert!(Genealogy::new(vec![SamplingEvent { time: 0.0, count: 2 }], vec![], None).is_err());
        // coalescence before the second lineage exists
        assert!(Genealogy::new(
            vec![SamplingEvent { time: 0.0, count: 1 }, SamplingEvent { time: 2.0, count: 1 }],
            vec![1.0],
            None
        )
        .is_err());
        // sample arriving after the root
        assert!(Genealogy::new(
            vec![SamplingEvent { time: 0.0, count: 2 }, SamplingEvent { time: 3.0, count: 1 }],
            vec![1.0, 2.0],
            None
        )
        .is_err());
        assert!(Genealogy::new(vec![SamplingEvent { time: 0.0, count: 2 }], vec![1.0], Some(-1.0)).is_err());
    }

    #[test]
    fn two_tip_decomposition() {
        let g = isochronous(2, vec![2.0]);
        let grid = Grid::new(0.0, 2.0, 2).unwrap();
        let data = decompose_intervals(&g, &grid).unwrap();
        assert_eq!(data.e, vec![1.0, 1.0]);
        assert_eq!(data.d, vec![0.0, 1.0]);
        assert_eq!(data.c, vec![2.0, 0.0]);
    }

    #[test]
    fn three_tip_decomposition() {
        let g = isochronous(3, vec![1.0, 3.0]);
        let grid = Grid::new(0.0, 3.0, 3).unwrap();
        let data = decompose_intervals(&g, &grid).unwrap();
        assert_eq!(data.e, vec![3.0, 1.0, 1.0]);
        assert_eq!(data.d, vec![0.0, 1.0, 1.0]);
        assert_eq!(data.c, vec![3.0, 0.0, 0.0]);
        assert_eq!(data.total_coal(), 2.0);
        assert_eq!(data.c.iter().sum::<f64>(), 3.0);
    }

    #[test]
    fn window_overlap_sums_to_s0() {
        let g = Genealogy::new(
            vec![SamplingEvent { time: 0.0, count: 2 }, SamplingEvent { time: 0.7, count: 1 }],
            vec![0.5, 2.0],
            Some(1.3),
        )
        .unwrap();
        let data = decompose_intervals(&g, &g.default_grid(7).unwrap()).unwrap();
        assert!((data.w_samp.iter().sum::<f64>() - 1.3).abs() < 1e-12);
        // one lineage between 0.5 and 0.7 adds no pressure
        let direct = 1.0 * 0.5 + 1.0 * (2.0 - 0.7);
        assert!((data.total_pressure() - direct).abs() < 1e-12);
    }
}
