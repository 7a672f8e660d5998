//! Synthetic environments and Monte Carlo validation.

mod coverage;
mod env;
mod sweep;

pub use coverage::{
    run_coverage, run_expectation_check, BoundKind, CoverageSetup, CoverageStats, EtaPolicy,
    ExpectationStats, SlackKind, CHECK_GRID_POINTS, VIOLATION_TOL,
};
pub use env::*;
pub use sweep::{tightness_sweep, SweepRow};
