use std::fs;
use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use psdyn::genealogy::{extract_events_dated, parse_sidecar, write_sidecar};
use psdyn::grid::Grid;
use psdyn::inference::ExploreOptions;
use psdyn::metrics::{emrw, eval_grid, interval_stats, AlignedReplicate, Bands, StudyResult};
use psdyn::output::{fmt_sig, round_sig};
use psdyn::simulator::{seasonal_ne, NegControlKind};
use psdyn::study::{run_study, schedule_intensity, simulate_replicate, Schedule, StudyConfig, StudyOutput};
use psdyn::{decompose_intervals, infer as fit, parse_newick, LogPopTrajectory, ModelKind, ModelSpec, SamplingParams};
use serde::Serialize;
use serde_json::{json, Value};

use crate::args::{InferArgs, MetricsArgs, NegctlArgs, SimulateArgs, StudyArgs, StudyCommon, TruthArgs};

/// Cell width of the simulation truth and of `truth.csv`.
const TRUTH_WIDTH: f64 = 0.02;

fn parse_pair(s: &str) -> Result<(f64, f64)> {
    let (a, b) = s.split_once(':').ok_or_else(|| anyhow!("expected a:b, got '{s}'"))?;
    let a: f64 = a.trim().parse().with_context(|| format!("bad number in '{s}'"))?;
    let b: f64 = b.trim().parse().with_context(|| format!("bad number in '{s}'"))?;
    if !(a.is_finite() && b.is_finite() && a < b) {
        bail!("interval '{s}' must satisfy a < b");
    }
    Ok((a, b))
}

fn parse_list<T>(s: &str) -> Result<Vec<T>>
where
    T: std::str::FromStr,
    T::Err: std::error::Error + Send + Sync + 'static,
{
    let items: Vec<T> = s
        .split(',')
        .map(str::trim)
        .filter(|x| !x.is_empty())
        .map(|x| x.parse::<T>().with_context(|| format!("bad list item '{x}'")))
        .collect::<Result<_>>()?;
    if items.is_empty() {
        bail!("empty list '{s}'");
    }
    Ok(items)
}

fn parse_intervals(s: &str) -> Result<Vec<(f64, f64)>> {
    s.split(',').map(str::trim).filter(|x| !x.is_empty()).map(parse_pair).collect()
}

enum Truth {
    Seasonal { a: f64, o: f64 },
    Constant(f64),
}

impl Truth {
    fn from_args(t: &TruthArgs) -> Result<Self> {
        match t.ne.split_once(':') {
            None if t.ne == "seasonal" => Ok(Truth::Seasonal { a: t.a, o: t.o }),
            Some(("constant", v)) => {
                let v: f64 = v.parse().with_context(|| format!("bad constant in --ne '{}'", t.ne))?;
                if !(v > 0.0 && v.is_finite()) {
                    bail!("constant population size must be positive");
                }
                Ok(Truth::Constant(v))
            }
            _ => bail!("--ne must be 'seasonal' or 'constant:<N>', got '{}'", t.ne),
        }
    }

    fn ne(&self, t: f64) -> f64 {
        match *self {
            Truth::Seasonal { a, o } => seasonal_ne(a, o, t),
            Truth::Constant(v) => v,
        }
    }

    fn trajectory(&self, horizon: f64) -> Result<LogPopTrajectory> {
        let cells = match self {
            Truth::Constant(_) => 1,
            Truth::Seasonal { .. } => (horizon / TRUTH_WIDTH).ceil().max(1.0) as usize,
        };
        Ok(LogPopTrajectory::from_fn(Grid::new(0.0, horizon, cells)?, |t| self.ne(t))?)
    }
}

fn write(dir: &Path, name: &str, contents: impl AsRef<[u8]>) -> Result<()> {
    let path = dir.join(name);
    fs::write(&path, contents).with_context(|| format!("writing {}", path.display()))
}

fn write_manifest(dir: &Path, command: &str, params: &impl Serialize, extra: Value) -> Result<()> {
    let manifest = json!({
        "command": command,
        "version": env!("CARGO_PKG_VERSION"),
        "parameters": params,
        "derived": extra,
    });
    write(dir, "manifest.json", serde_json::to_string_pretty(&manifest)? + "\n")
}

fn prepare_out(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

pub fn simulate(args: &SimulateArgs) -> Result<()> {
    let truth = Truth::from_args(&args.truth)?;
    let schedule: Schedule = args.schedule.parse()?;
    let cfg = StudyConfig {
        replicates: 1,
        n: args.n,
        a: args.truth.a,
        o: args.truth.o,
        window: parse_pair(&args.window)?,
        s0: args.s0,
        schedules: vec![schedule],
        seed: args.seed,
        ..StudyConfig::default()
    };
    if cfg.window.0 < 0.0 {
        bail!("window must start at or after 0");
    }
    if cfg.n < 2 {
        bail!("--n must be at least 2");
    }
    if let Some(s0) = cfg.s0 {
        if s0 < cfg.window.1 {
            bail!("--s0 must not precede the window end");
        }
    }
    let sim_truth = truth.trajectory(cfg.window.1 + cfg.truth_extra)?;
    let sim = simulate_replicate(&cfg, 0, &sim_truth, args.replicate)?;
    prepare_out(&args.out)?;
    write(&args.out, "tree.nwk", sim.tree.to_newick() + "\n")?;
    write(&args.out, "tree.dates.tsv", write_sidecar(&sim.dates))?;
    write(&args.out, "truth.csv", truth.trajectory(sim.genealogy.horizon())?.to_csv())?;
    write_manifest(
        &args.out,
        "simulate",
        args,
        json!({
            "schedule": schedule.name(),
            "tips": sim.genealogy.n_tips(),
            "root_time": round_sig(sim.genealogy.root_time()),
            "s0": sim.genealogy.s0(),
            "streams": { "sampling": 0, "coalescent": 1, "intensity": 2 },
        }),
    )
}

pub fn infer(args: &InferArgs) -> Result<()> {
    let models: Vec<ModelKind> = parse_list(&args.model)?;
    if args.grid < 2 {
        bail!("--grid must be at least 2");
    }
    if args.k < 1 {
        bail!("--k must be at least 1");
    }
    let text = fs::read_to_string(&args.tree).with_context(|| format!("reading {}", args.tree.display()))?;
    let tree = parse_newick(&text)?;
    let dates = match &args.dates {
        Some(p) => {
            let t = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            Some(parse_sidecar(&t)?)
        }
        None => None,
    };
    let default_gen = extract_events_dated(&tree, args.tol, dates.as_ref())?;
    let gen = match args.s0 {
        Some(s0) => default_gen.clone().with_s0(s0)?,
        None => default_gen.clone(),
    };
    let grid = Grid::new(0.0, gen.horizon(), args.grid)?;
    let data = decompose_intervals(&gen, &grid)?;
    let frozen = match (args.beta0, args.beta1) {
        (Some(b0), Some(b1)) => Some(SamplingParams::new(b0, b1)?),
        _ => None,
    };

    // EMRW over the sampling window, or the whole tree when isochronous
    let span = if gen.s0() > 0.0 { (0.0, gen.s0()) } else { (0.0, gen.root_time()) };
    let times = eval_grid(span.0, span.1, args.k);
    prepare_out(&args.out)?;
    let mut widths = serde_json::Map::new();
    let mut emrws = Vec::new();
    let mut sensitivity = None;
    for &kind in &models {
        let mut spec = ModelSpec::new(kind, data.clone())?;
        if let (ModelKind::BnprPs, Some(par)) = (kind, frozen) {
            spec = spec.with_frozen_sampling(par)?;
        }
        let summary = fit(&spec, &ExploreOptions::default()).with_context(|| format!("fitting {kind}"))?;
        write(&args.out, &format!("{kind}.summary.json"), serde_json::to_string_pretty(&summary.to_json())? + "\n")?;
        write(&args.out, &format!("{kind}.trajectory.csv"), summary.trajectory_csv())?;
        if let (ModelKind::BnprPs, None, Some((lo, hi))) = (kind, frozen, summary.beta1_ci) {
            if gen.s0() != default_gen.s0() {
                sensitivity = Some(s0_sensitivity(&default_gen, args.grid, (lo, hi))?);
            }
        }
        let e = emrw(&[Bands::from_summary(&summary, &times)], &times, span.0, span.1)?;
        widths.insert(kind.name().into(), json!(round_sig(e)));
        emrws.push((kind, e));
    }
    let get = |k: ModelKind| emrws.iter().find(|(m, _)| *m == k).map(|(_, e)| *e);
    let direction = match (get(ModelKind::Bnpr), get(ModelKind::BnprPs)) {
        (Some(b), Some(p)) => json!(if p <= b { "bnpr-ps <= bnpr" } else { "bnpr-ps > bnpr" }),
        _ => Value::Null,
    };
    let comparison = json!({
        "interval": [span.0, round_sig(span.1)],
        "emrw": widths,
        "direction": direction,
        "s0_sensitivity": sensitivity,
    });
    write(&args.out, "comparison.json", serde_json::to_string_pretty(&comparison)? + "\n")?;
    write_manifest(
        &args.out,
        "infer",
        args,
        json!({
            "tips": gen.n_tips(),
            "sampling_events": gen.sampling_events().len(),
            "s0": round_sig(gen.s0()),
            "grid": { "t_min": 0.0, "t_max": round_sig(grid.t_max()), "cells": grid.len() },
        }),
    )
}

/// Refits the preferential model at the default `s0` (the oldest sample)
/// and flags a change of more than 10% in either `beta1` interval endpoint.
fn s0_sensitivity(default_gen: &psdyn::Genealogy, cells: usize, ci: (f64, f64)) -> Result<Value> {
    let grid = Grid::new(0.0, default_gen.horizon(), cells)?;
    let spec = ModelSpec::new(ModelKind::BnprPs, decompose_intervals(default_gen, &grid)?)?;
    let alt = fit(&spec, &ExploreOptions::default()).context("refitting at the default s0")?;
    let (alo, ahi) = alt.beta1_ci.ok_or_else(|| anyhow!("no beta1 interval at the default s0"))?;
    let change = |a: f64, b: f64| (a - b).abs() / b.abs().max(1e-12);
    let flagged = change(ci.0, alo) > 0.1 || change(ci.1, ahi) > 0.1;
    if flagged {
        eprintln!(
            "warning: beta1 interval [{}, {}] moves by more than 10% against [{}, {}] at the default s0 = {}",
            fmt_sig(ci.0),
            fmt_sig(ci.1),
            fmt_sig(alo),
            fmt_sig(ahi),
            fmt_sig(default_gen.s0())
        );
    }
    Ok(json!({
        "default_s0": round_sig(default_gen.s0()),
        "beta1_ci_default_s0": [round_sig(alo), round_sig(ahi)],
        "flagged": flagged,
    }))
}

fn study_config(c: &StudyCommon, schedules: Vec<Schedule>) -> Result<StudyConfig> {
    Ok(StudyConfig {
        replicates: c.replicates,
        n: c.n,
        cells: c.grid,
        a: c.a,
        o: c.o,
        window: parse_pair(&c.window)?,
        s0: c.s0,
        k: c.k,
        intervals: parse_intervals(&c.intervals)?,
        schedules,
        models: parse_list(&c.models)?,
        seed: c.seed,
        ..StudyConfig::default()
    })
}

fn run_with_jobs(cfg: &StudyConfig, jobs: Option<usize>) -> Result<StudyOutput> {
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(j) = jobs {
        if j == 0 {
            bail!("--jobs must be positive");
        }
        pool = pool.num_threads(j);
    }
    let pool = pool.build()?;
    Ok(pool.install(|| run_study(cfg))?)
}

fn diagnostics_csv(out: &StudyOutput, schedules: &[Schedule]) -> String {
    let mut s = String::from(
        "schedule,model,replicates,failures,max_newton_iterations,max_grad_norm,beta1_median,beta1_coverage\n",
    );
    for c in &out.cells {
        let truth_b1 = schedules.iter().find(|x| x.name() == c.schedule).and_then(Schedule::beta1);
        let opt = |v: Option<f64>| v.map(fmt_sig).unwrap_or_default();
        s.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            c.schedule,
            c.model,
            c.result.replicates.len(),
            c.failures.len(),
            c.max_newton_iterations,
            fmt_sig(c.max_grad_norm),
            opt(c.beta1_median()),
            opt(truth_b1.and_then(|b| c.beta1_coverage(b))),
        ));
    }
    s
}

fn beta1_csv(out: &StudyOutput) -> String {
    let mut s = String::from("schedule,model,index,median,q025,q975\n");
    for c in &out.cells {
        for (i, q) in c.beta1.iter().enumerate() {
            s.push_str(&format!(
                "{},{},{i},{},{},{}\n",
                c.schedule,
                c.model,
                fmt_sig(q.median),
                fmt_sig(q.lower),
                fmt_sig(q.upper)
            ));
        }
    }
    s
}

fn failures_json(out: &StudyOutput) -> Value {
    out.cells
        .iter()
        .flat_map(|c| {
            c.failures
                .iter()
                .map(move |(r, e)| json!({ "schedule": c.schedule, "model": c.model.name(), "replicate": r, "error": e }))
        })
        .collect()
}

fn write_study(dir: &Path, cfg: &StudyConfig, out: &StudyOutput) -> Result<()> {
    prepare_out(dir)?;
    write(dir, "study.csv", psdyn::metrics::table_csv(&out.table))?;
    write(dir, "pointwise.csv", psdyn::metrics::pointwise_csv(&out.pointwise))?;
    write(dir, "diagnostics.csv", diagnostics_csv(out, &cfg.schedules))?;
    write(dir, "beta1.csv", beta1_csv(out))?;
    Ok(())
}

fn study_manifest_extra(cfg: &StudyConfig, out: &StudyOutput) -> Value {
    json!({
        "config": cfg,
        "replicate_streams": "replicate * 256 + 4 * schedule_index + {0: sampling, 1: coalescent, 2: intensity}",
        "failures": failures_json(out),
    })
}

pub fn study(args: &StudyArgs) -> Result<()> {
    let cfg = study_config(&args.common, parse_list(&args.schedules)?)?;
    let out = run_with_jobs(&cfg, args.common.jobs)?;
    write_study(&args.common.out, &cfg, &out)?;
    write_manifest(&args.common.out, "study", args, study_manifest_extra(&cfg, &out))
}

pub fn negctl(args: &NegctlArgs) -> Result<()> {
    let kinds: Vec<NegControlKind> = parse_list(&args.kinds)?;
    let schedules: Vec<Schedule> = kinds.into_iter().map(Schedule::NegControl).collect();
    let cfg = study_config(&args.common, schedules)?;
    let out = run_with_jobs(&cfg, args.common.jobs)?;
    write_study(&args.common.out, &cfg, &out)?;

    let truth = cfg.truth()?;
    let times = eval_grid(cfg.window.0, cfg.window.1, cfg.k);
    let mut csv = String::from("schedule,replicate,t,rate\n");
    for (s, schedule) in cfg.schedules.iter().enumerate() {
        for r in 0..cfg.replicates {
            let f = schedule_intensity(&cfg, *schedule, &truth, r, 4 * s as u64)?;
            for &t in &times {
                csv.push_str(&format!("{},{r},{},{}\n", schedule.name(), fmt_sig(t), fmt_sig(f.rate_at(t))));
            }
        }
    }
    write(&args.common.out, "intensities.csv", csv)?;
    write_manifest(&args.common.out, "negctl", args, study_manifest_extra(&cfg, &out))
}

/// Rows of a `time,median,q025,q975` trajectory file.
fn read_trajectory(path: &Path) -> Result<Vec<[f64; 4]>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| anyhow!("{} is empty", path.display()))?;
    if header.trim() != "time,median,q025,q975" {
        bail!("{}: expected header time,median,q025,q975", path.display());
    }
    let mut rows = Vec::new();
    for (i, line) in lines.enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let vals: Vec<f64> = line
            .split(',')
            .map(|x| x.trim().parse::<f64>())
            .collect::<Result<_, _>>()
            .with_context(|| format!("{} line {}", path.display(), i + 2))?;
        let [t, m, lo, hi] = vals[..] else {
            bail!("{} line {}: expected 4 columns", path.display(), i + 2);
        };
        if ![t, m, lo, hi].iter().all(|v| v.is_finite()) {
            bail!("{} line {}: non-finite value", path.display(), i + 2);
        }
        rows.push([t, m, lo, hi]);
    }
    if rows.is_empty() {
        bail!("{} has no rows", path.display());
    }
    if rows.windows(2).any(|w| !(w[1][0] > w[0][0])) {
        bail!("{}: times must be strictly increasing", path.display());
    }
    Ok(rows)
}

/// Bands at `times` by nearest row time.
fn nearest_bands(rows: &[[f64; 4]], times: &[f64]) -> Bands {
    let pick = |t: f64| {
        let i = rows.partition_point(|r| r[0] < t);
        match i {
            0 => &rows[0],
            i if i == rows.len() => &rows[i - 1],
            i if t - rows[i - 1][0] <= rows[i][0] - t => &rows[i - 1],
            i => &rows[i],
        }
    };
    Bands {
        median: times.iter().map(|&t| pick(t)[1]).collect(),
        lower: times.iter().map(|&t| pick(t)[2]).collect(),
        upper: times.iter().map(|&t| pick(t)[3]).collect(),
    }
}

pub fn metrics(args: &MetricsArgs) -> Result<()> {
    let truth = Truth::from_args(&args.truth)?;
    let window = parse_pair(&args.window)?;
    let intervals = parse_intervals(&args.intervals)?;
    if args.k < 1 {
        bail!("--k must be at least 1");
    }
    let times = eval_grid(window.0, window.1, args.k);
    let truth_vals: Vec<f64> = times.iter().map(|&t| truth.ne(t)).collect();
    let mut csv = String::from("trajectory,interval,MRD,MRW,ME,EMRW\n");
    for path in args.trajectories.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        let bands = nearest_bands(&read_trajectory(Path::new(path))?, &times);
        let mut res = StudyResult::new(times.clone());
        res.push_aligned(AlignedReplicate { truth: truth_vals.clone(), bands: bands.clone() })?;
        for &(a, b) in &intervals {
            let s = interval_stats(&res, a, b)?;
            let e = emrw(std::slice::from_ref(&bands), &times, a, b)?;
            csv.push_str(&format!(
                "{path},{}:{},{},{},{},{}\n",
                fmt_sig(a),
                fmt_sig(b),
                fmt_sig(s.mrd),
                fmt_sig(s.mrw),
                fmt_sig(s.me),
                fmt_sig(e)
            ));
        }
    }
    prepare_out(&args.out)?;
    write(&args.out, "metrics.csv", csv)?;
    write_manifest(&args.out, "metrics", args, Value::Null)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pairs_and_lists() {
        assert_eq!(parse_pair("0:6").unwrap(), (0.0, 6.0));
        assert!(parse_pair("6:0").is_err());
        assert!(parse_pair("6").is_err());
        assert_eq!(parse_intervals("0:6,6:48").unwrap(), vec![(0.0, 6.0), (6.0, 48.0)]);
        let m: Vec<ModelKind> = parse_list("bnpr, bnpr-ps").unwrap();
        assert_eq!(m, vec![ModelKind::Bnpr, ModelKind::BnprPs]);
        assert!(parse_list::<ModelKind>("").is_err());
    }

    #[test]
    fn nearest_row_lookup() {
        let rows = [[0.5, 1.0, 0.5, 2.0], [1.5, 3.0, 2.0, 4.0]];
        let b = nearest_bands(&rows, &[0.0, 0.9, 1.1, 5.0]);
        assert_eq!(b.median, vec![1.0, 1.0, 3.0, 3.0]);
    }

    #[test]
    fn truth_spec_parsing() {
        let t = |ne: &str| Truth::from_args(&TruthArgs { ne: ne.into(), a: 2.0, o: 0.0 });
        assert!(matches!(t("seasonal").unwrap(), Truth::Seasonal { .. }));
        assert_eq!(t("constant:5").unwrap().ne(3.0), 5.0);
        assert!(t("constant:-1").is_err());
        assert!(t("logistic").is_err());
    }
}
