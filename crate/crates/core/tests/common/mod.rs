#![allow(dead_code)]

use psdyn::grid::{Grid, LogPopTrajectory};
use psdyn::simulator::simulate_coalescent;
use psdyn::{Genealogy, SamplingEvent};
use rand::Rng;

/// Genealogy with `n` tips spread over up to `n` sampling events, simulated
/// under constant population size `ne`.
pub fn random_genealogy<R: Rng>(rng: &mut R, n: usize, ne: f64, spread: f64) -> Genealogy {
    let mut events = vec![SamplingEvent { time: 0.0, count: 1 }];
    let mut t = 0.0;
    for _ in 1..n {
        if rng.random_bool(0.5) {
            events.last_mut().unwrap().count += 1;
        } else {
            t += rng.random_range(0.01..1.0) * spread;
            events.push(SamplingEvent { time: t, count: 1 });
        }
    }
    let traj = LogPopTrajectory::constant(Grid::new(0.0, 1.0, 2).unwrap(), ne.ln()).unwrap();
    simulate_coalescent(&events, &traj, rng).unwrap()
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-300)
}
