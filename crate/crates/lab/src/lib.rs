//! Experiment harness around `qcbnn-core`: dataset and checkpoint formats,
//! text configs, seeded sweeps with CSV artifacts, and SVG reports.

pub mod config;
pub mod error;
pub mod formats;
pub mod harness;
pub mod report;
pub mod svg;

pub use config::RunConfig;
pub use error::{LabError, Result};

/// Environment variable that overrides the output root.
pub const OUT_ENV: &str = "QBNN_OUT";
