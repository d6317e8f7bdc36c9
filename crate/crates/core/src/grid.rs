//! Regular time grids and piecewise-constant log population trajectories.
//!
//! Time runs backwards from the most recent sample: `0` is the present and
//! larger values lie further in the past. Cells are half-open `[lo, hi)`
//! except the last one, which also absorbs every time at or beyond `t_max`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::output::fmt_sig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    t_min: f64,
    t_max: f64,
    cells: usize,
}

impl Grid {
    pub fn new(t_min: f64, t_max: f64, cells: usize) -> Result<Self> {
        if !t_min.is_finite() || !t_max.is_finite() {
            return Err(Error::InvalidGrid("bounds must be finite".into()));
        }
        if t_min >= t_max {
            return Err(Error::InvalidGrid(format!(
                "t_min ({t_min}) must be below t_max ({t_max})"
            )));
        }
        if cells < 2 {
            return Err(Error::InvalidGrid(format!("need at least 2 cells, got {cells}")));
        }
        Ok(Self { t_min, t_max, cells })
    }

    pub fn t_min(&self) -> f64 {
        self.t_min
    }

    pub fn t_max(&self) -> f64 {
        self.t_max
    }

    pub fn len(&self) -> usize {
        self.cells
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn width(&self) -> f64 {
        (self.t_max - self.t_min) / self.cells as f64
    }

    /// Lower boundary of cell `j` (0-based). `lower(len())` is `t_max`.
    pub fn lower(&self, j: usize) -> f64 {
        if j >= self.cells {
            self.t_max
        } else {
            self.t_min + j as f64 * self.width()
        }
    }

    pub fn upper(&self, j: usize) -> f64 {
        self.lower(j + 1)
    }

    pub fn midpoint(&self, j: usize) -> f64 {
        self.t_min + (j as f64 + 0.5) * self.width()
    }

    pub fn midpoints(&self) -> Vec<f64> {
        (0..self.cells).map(|j| self.midpoint(j)).collect()
    }

    /// Index of the cell containing `t`. Times past either end clamp to the
    /// boundary cell.
    pub fn cell_of(&self, t: f64) -> usize {
        if t >= self.t_max {
            return self.cells - 1;
        }
        if t <= self.t_min {
            return 0;
        }
        let mut j = (((t - self.t_min) / self.width()).floor() as usize).min(self.cells - 1);
        while j > 0 && t < self.lower(j) {
            j -= 1;
        }
        while j + 1 < self.cells && t >= self.lower(j + 1) {
            j += 1;
        }
        j
    }

    /// Calls `f(cell, overlap)` for every cell intersecting `[a, b]`,
    /// with the last cell extended to infinity.
    pub fn for_each_overlap(&self, a: f64, b: f64, mut f: impl FnMut(usize, f64)) {
        if !(b > a) {
            return;
        }
        let mut lo = a;
        let mut j = self.cell_of(a);
        loop {
            let hi = if j + 1 == self.cells { f64::INFINITY } else { self.upper(j) };
            let end = b.min(hi);
            if end > lo {
                f(j, end - lo);
            }
            if b <= hi {
                break;
            }
            lo = hi;
            j += 1;
        }
    }
}

/// `gamma[j]` is the log effective population size on cell `j`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogPopTrajectory {
    grid: Grid,
    gamma: Vec<f64>,
}

impl LogPopTrajectory {
    pub fn new(grid: Grid, gamma: Vec<f64>) -> Result<Self> {
        if gamma.len() != grid.len() {
            return Err(Error::LengthMismatch { expected: grid.len(), got: gamma.len() });
        }
        if gamma.iter().any(|g| !g.is_finite()) {
            return Err(Error::NonFinite("trajectory"));
        }
        Ok(Self { grid, gamma })
    }

    /// Trajectory whose cell values are `log(ne(midpoint))`.
    pub fn from_fn(grid: Grid, ne: impl Fn(f64) -> f64) -> Result<Self> {
        let gamma = grid.midpoints().into_iter().map(|x| ne(x).ln()).collect();
        Self::new(grid, gamma)
    }

    pub fn constant(grid: Grid, gamma: f64) -> Result<Self> {
        let g = vec![gamma; grid.len()];
        Self::new(grid, g)
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn gamma(&self) -> &[f64] {
        &self.gamma
    }

    pub fn gamma_at(&self, t: f64) -> f64 {
        self.gamma[self.grid.cell_of(t)]
    }

    pub fn ne_at(&self, t: f64) -> f64 {
        self.gamma_at(t).exp()
    }

    /// Exact integral of `exp(p * gamma(t))` over `[a, b]`.
    pub fn integrate_exp(&self, p: f64, a: f64, b: f64) -> Result<f64> {
        if !p.is_finite() {
            return Err(Error::NonFinite("exponent"));
        }
        if !a.is_finite() || !b.is_finite() {
            return Err(Error::NonFinite("integration bounds"));
        }
        if a > b {
            return Err(Error::InvalidArgument(format!("integration bounds reversed: {a} > {b}")));
        }
        if a < self.grid.t_min() {
            return Err(Error::InvalidArgument(format!(
                "lower bound {a} precedes grid start {}",
                self.grid.t_min()
            )));
        }
        if p == 0.0 {
            return Ok(b - a);
        }
        let mut total = 0.0;
        self.grid.for_each_overlap(a, b, |j, len| total += (p * self.gamma[j]).exp() * len);
        Ok(total)
    }

    /// Smallest `b >= a` with `integral_a^b exp(p * gamma) = target`.
    ///
    /// The last cell extends to infinity, so a solution always exists for
    /// finite non-negative `target`.
    pub fn invert_integral(&self, p: f64, a: f64, target: f64) -> f64 {
        debug_assert!(target >= 0.0);
        let cells = self.grid.len();
        let mut remaining = target;
        let mut lo = a;
        let mut j = self.grid.cell_of(a);
        loop {
            let rate = (p * self.gamma[j]).exp();
            if j + 1 == cells {
                return lo + remaining / rate;
            }
            let hi = self.grid.upper(j);
            let mass = rate * (hi - lo).max(0.0);
            if mass >= remaining {
                return (lo + remaining / rate).min(hi);
            }
            remaining -= mass;
            lo = hi;
            j += 1;
        }
    }

    /// CSV with columns `cell_index,midpoint_time,gamma,ne` (1-based cells).
    pub fn to_csv(&self) -> String {
        let mut out = String::from("cell_index,midpoint_time,gamma,ne\n");
        for (j, g) in self.gamma.iter().enumerate() {
            out.push_str(&format!(
                "{},{},{},{}\n",
                j + 1,
                fmt_sig(self.grid.midpoint(j)),
                fmt_sig(*g),
                fmt_sig(g.exp())
            ));
        }
        out
    }
}
