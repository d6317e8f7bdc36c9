mod common;

use common::{random_genealogy, rel_err};
use psdyn::coalescent::{coal_grad_hess, coal_loglik};
use psdyn::genealogy::EventKind;
use psdyn::grid::{Grid, LogPopTrajectory};
use psdyn::prior::{rw1_log_prior, rw1_precision_apply};
use psdyn::sampling::{samp_grad_hess, samp_loglik};
use psdyn::simulator::replicate_rng;
use psdyn::{decompose_intervals, Genealogy, SamplingParams};
use rand::Rng;

/// Density of the coalescent times of a serial sample under constant `ne`:
/// the rate `C(A)/ne` at every coalescence times survival over every
/// inter-event span.
fn product_density(gen: &Genealogy, ne: f64) -> f64 {
    let mut density = 1.0;
    let mut active = 0usize;
    let mut last = 0.0;
    for (t, kind) in gen.events() {
        let pairs = (active * active.saturating_sub(1) / 2) as f64;
        density *= (-pairs * (t - last) / ne).exp();
        match kind {
            EventKind::Sampling(count) => active += count,
            EventKind::Coalescent => {
                density *= pairs / ne;
                active -= 1;
            }
        }
        last = t;
    }
    density
}

/// Product over coalescences of `C(A)`, the factor the discretized
/// likelihood omits.
fn pair_factor(gen: &Genealogy) -> f64 {
    let mut active = 0usize;
    let mut f = 1.0;
    for (_, kind) in gen.events() {
        match kind {
            EventKind::Sampling(count) => active += count,
            EventKind::Coalescent => {
                f *= (active * (active - 1) / 2) as f64;
                active -= 1;
            }
        }
    }
    f
}

#[test]
fn coalescent_matches_product_formula() {
    let mut rng = replicate_rng(101, 0, 0);
    for _ in 0..100 {
        let n = rng.random_range(2..=6);
        let ne = rng.random_range(0.2..5.0);
        let gen = random_genealogy(&mut rng, n, ne, 1.0);
        let cells = rng.random_range(2..=40);
        let grid = Grid::new(0.0, gen.horizon() * rng.random_range(0.5..1.5), cells).unwrap();
        let data = decompose_intervals(&gen, &grid).unwrap();
        let traj = LogPopTrajectory::constant(grid, ne.ln()).unwrap();
        let ll = coal_loglik(&data, &traj).unwrap();
        let full = ll.exp() * pair_factor(&gen);
        let oracle = product_density(&gen, ne);
        assert!(rel_err(full, oracle) < 1e-10, "n={n} cells={cells}: {full} vs {oracle}");
    }
}

#[test]
fn sampling_homogeneous_closed_form() {
    let mut rng = replicate_rng(102, 0, 0);
    for _ in 0..50 {
        let n = rng.random_range(2..40);
        let gen = random_genealogy(&mut rng, n, 1.0, 2.0);
        let s0 = gen.last_sample_time() + rng.random_range(0.0..3.0);
        let gen = gen.with_s0(s0).unwrap();
        let grid = Grid::new(0.0, gen.horizon(), rng.random_range(2..60)).unwrap();
        let data = decompose_intervals(&gen, &grid).unwrap();
        let gamma: Vec<f64> = (0..grid.len()).map(|_| rng.random_range(-3.0..3.0)).collect();
        let traj = LogPopTrajectory::new(grid, gamma).unwrap();
        let beta0 = rng.random_range(0.1..20.0);
        let ll = samp_loglik(&data, &traj, &SamplingParams::new(beta0, 0.0).unwrap()).unwrap();
        let closed = n as f64 * beta0.ln() - beta0 * s0;
        assert!(rel_err(ll, closed) < 1e-12, "{ll} vs {closed}");
    }
}

fn fd_check(f: &dyn Fn(&[f64]) -> f64, g: &dyn Fn(&[f64]) -> Vec<f64>, x: &[f64], grad: &[f64], hess: Option<&[f64]>) {
    let h = 1e-6;
    for j in 0..x.len() {
        let mut xp = x.to_vec();
        let mut xm = x.to_vec();
        xp[j] += h;
        xm[j] -= h;
        let fd = (f(&xp) - f(&xm)) / (2.0 * h);
        let scale = grad[j].abs().max(1.0);
        assert!((fd - grad[j]).abs() / scale < 1e-5, "grad[{j}]: fd {fd} vs {}", grad[j]);
        if let Some(hess) = hess {
            let fd2 = (g(&xp)[j] - g(&xm)[j]) / (2.0 * h);
            let scale = hess[j].abs().max(1.0);
            assert!((fd2 - hess[j]).abs() / scale < 1e-5, "hess[{j}]: fd {fd2} vs {}", hess[j]);
        }
    }
}

#[test]
fn derivatives_match_finite_differences() {
    let mut rng = replicate_rng(103, 0, 0);
    for _ in 0..100 {
        let n = rng.random_range(2..30);
        let ne = rng.random_range(0.5..5.0);
        let gen = random_genealogy(&mut rng, n, ne, 1.0);
        let grid = Grid::new(0.0, gen.horizon(), rng.random_range(2..30)).unwrap();
        let data = decompose_intervals(&gen, &grid).unwrap();
        let gamma: Vec<f64> = (0..grid.len()).map(|_| rng.random_range(-1.0..2.0)).collect();
        let par = SamplingParams::new(rng.random_range(0.1..5.0), rng.random_range(-2.0..2.0)).unwrap();
        let tau = rng.random_range(0.1..10.0);
        let traj = |g: &[f64]| LogPopTrajectory::new(grid.clone(), g.to_vec()).unwrap();

        let (cg, ch) = coal_grad_hess(&data, &traj(&gamma)).unwrap();
        fd_check(
            &|g| coal_loglik(&data, &traj(g)).unwrap(),
            &|g| coal_grad_hess(&data, &traj(g)).unwrap().0,
            &gamma,
            &cg,
            Some(&ch),
        );
        let (sg, sh) = samp_grad_hess(&data, &traj(&gamma), &par).unwrap();
        fd_check(
            &|g| samp_loglik(&data, &traj(g), &par).unwrap(),
            &|g| samp_grad_hess(&data, &traj(g), &par).unwrap().0,
            &gamma,
            &sg,
            Some(&sh),
        );
        let pg: Vec<f64> = rw1_precision_apply(tau, &gamma).unwrap().iter().map(|v| -v).collect();
        fd_check(&|g| rw1_log_prior(tau, g).unwrap(), &|_| vec![], &gamma, &pg, None);
    }
}

#[test]
fn coalescent_is_concave() {
    let mut rng = replicate_rng(104, 0, 0);
    for _ in 0..20 {
        let gen = random_genealogy(&mut rng, 20, 2.0, 1.0);
        let grid = Grid::new(0.0, gen.horizon(), 25).unwrap();
        let data = decompose_intervals(&gen, &grid).unwrap();
        let gamma: Vec<f64> = (0..25).map(|_| rng.random_range(-4.0..4.0)).collect();
        let (_, h) = coal_grad_hess(&data, &LogPopTrajectory::new(grid, gamma).unwrap()).unwrap();
        assert!(h.iter().all(|v| *v <= 0.0));
    }
}
