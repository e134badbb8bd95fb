//! Monte-Carlo sweeps, the analytic cost model and the command-line front end.

pub mod cli;
pub mod cost;
pub mod sweep;

pub use cost::{latency_report, resource_report, CostReport, Variant};
pub use sweep::{run_sweep, SweepRow, SweepSpec};
