//! Effective population size reconstruction from dated genealogies, with
//! and without a preferential-sampling likelihood.

pub mod coalescent;
pub mod error;
pub mod genealogy;
pub mod grid;
pub mod inference;
pub mod metrics;
pub mod newick;
pub mod output;
pub mod prior;
pub mod sampling;
pub mod simulator;
pub mod study;
pub mod tridiag;

pub use error::{Error, Result};
pub use genealogy::{decompose_intervals, extract_events, Genealogy, IntervalData, SamplingEvent};
pub use grid::{Grid, LogPopTrajectory};
pub use inference::{infer, ExploreOptions, ModelKind, ModelSpec, PosteriorSummary, Quantiles};
pub use newick::{parse_newick, Tree};
pub use prior::Hyperparams;
pub use sampling::SamplingParams;
