//! Experiment harness for the beamforming solvers: spec-driven sweeps,
//! per-run reports and trajectories, and aggregate CSVs for replotting.

pub mod runner;
pub mod spec;
pub mod units;
