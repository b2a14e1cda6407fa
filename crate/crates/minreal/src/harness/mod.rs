//! Experiment harness: configuration, run persistence, the `gen`/`fit`/
//! `sweep`/`spectrum` commands, and a small SVG chart writer.
//!
//! The harness never recomputes ground truth from data files; the manifest
//! written by `gen` is the single source of truth a fit reads back.

pub mod commands;
pub mod config;
pub mod io;
pub mod svg;

pub use commands::{
    cmd_fit, cmd_gen, cmd_spectrum, cmd_sweep, load_dataset, run_fit, run_sweep, Dataset,
    FitOutcome, MethodOutcome, RunOverrides, SweepPoint, SweepTable,
};
pub use config::{ExperimentConfig, ParamSpec, ReportFormat, SolverSpec, SweepAxis};
