//! Experiment runner for the optoelectronic spiking-network toolkit.
//!
//! A run reads an [`ExperimentConfig`], dispatches to one recipe, writes
//! CSV/JSON/SVG artifacts into the output directory and finishes with a
//! `manifest.json` recording the config hash, seed, versions and the hash of
//! every artifact.

pub mod config;
pub mod error;
pub mod manifest;
pub mod mnist;
pub mod recipes;
pub mod svg;

use std::time::Instant;

pub use config::{Experiment, ExperimentConfig};
pub use error::{ErrorKind, HarnessError, Result};
pub use manifest::Manifest;

/// Validate `cfg`, run its recipe and write the manifest.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Manifest> {
    cfg.validate()?;
    let cfg = &cfg.effective();
    let t0 = Instant::now();
    let mut out = manifest::Outputs::new(&cfg.output_dir)?;
    let summary = recipes::run_recipe(cfg, &mut out)
        .map_err(|e| e.context(format!("experiment `{}`", cfg.experiment)))?;
    out.finish(cfg, summary, t0.elapsed().as_secs_f64())
}
