//! Experiment driver for the estimation protocols: configuration grids,
//! parallel sweeps with per-trial CSV output, and the verification suites.

pub mod config;
pub mod record;
pub mod sweep;
pub mod verify;

pub use config::{Axis, Constants, Experiment, ExperimentConfig, GridConfig};
pub use record::TrialRecord;
pub use sweep::{run_point, run_sweep, PointSummary, SweepOutput};
pub use verify::{verify, Check, Report};
