//! Experiment manifests and the runner behind the `spinspec` binary:
//! declarative experiment descriptions, artifact files, decoded-vs-expected
//! comparison, and the all-tables battery.

pub mod manifest;
pub mod report;
pub mod runner;

pub use manifest::{Dimension, ExperimentCase, ExperimentKind, Manifest};
pub use report::{compare_readout, CompareReport};
pub use runner::{run_battery, run_case, run_manifest, BatteryOptions, CaseOutcome};
