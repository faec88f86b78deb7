//! Simulation and training toolkit for Izhikevich-inspired optoelectronic
//! spiking neurons and the photonic spiking networks built from them.
//!
//! Modules:
//! - [`neuron`]: reference Izhikevich model, optoelectronic behavioural model,
//!   presets, time scaling and threshold calibration.
//! - [`codec`]: spike trains, grouped test patterns, Poisson rate coding and
//!   rate decoding.
//! - [`network`]: signed feedforward and winner-take-all topologies and the
//!   clock-driven network simulator.
//! - [`learning`]: trace STDP, rectifier ANN training, ANN-to-SNN conversion
//!   and evaluation.
//! - [`energy`]: device energy/power accounting.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod codec;
pub mod energy;
pub mod error;
pub mod learning;
pub mod matrix;
pub mod network;
pub mod neuron;
pub mod rng;
pub mod weights;

pub use error::{Error, Result};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
