//! Single-neuron dynamics.
//!
//! Two models live here: the reference Izhikevich model (quadratic membrane,
//! instantaneous reset) and the optoelectronic behavioural model, where a
//! membrane RC stage driven by a balanced photodetector pair feeds a VCSEL
//! output stage and a refractory RC stage that drains the membrane through a
//! third transistor.

pub mod calibrate;
pub mod izhikevich;
pub mod opto;
pub mod presets;
pub mod simulate;

pub use calibrate::{calibrate_three_spike_threshold, CalibrationGoal, SearchSpace};
pub use izhikevich::{IzhikevichParams, IzhikevichState};
pub use opto::{DriveInput, Integrator, OptoNeuronParams, OptoNeuronState};
pub use presets::{preset, Preset, PresetName};
pub use simulate::{simulate_neuron, NeuronTrace, StimulusConfig};
