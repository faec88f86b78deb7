//! Committed parameter sets for the four spiking regimes.
//!
//! Every fixture lives in `presets/<name>.toml` next to this crate and is
//! embedded at build time. Each file records the search that produced it.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::calibrate::{calibrate_three_spike_threshold, Calibrated, CalibrationGoal, SearchSpace};
use super::opto::OptoNeuronParams;
use super::simulate::StimulusConfig;
use crate::codec::GroupPattern;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PresetName {
    Regular,
    Low,
    Burst,
    Fast,
}

impl PresetName {
    pub const ALL: [PresetName; 4] = [
        PresetName::Regular,
        PresetName::Low,
        PresetName::Burst,
        PresetName::Fast,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            PresetName::Regular => "regular",
            PresetName::Low => "low",
            PresetName::Burst => "burst",
            PresetName::Fast => "fast",
        }
    }
}

impl fmt::Display for PresetName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PresetName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        PresetName::ALL
            .into_iter()
            .find(|p| p.as_str() == s)
            .ok_or_else(|| Error::UnknownPreset(s.to_string()))
    }
}

/// A neuron parameter set together with the input pulse shape it was tuned
/// for. Times are native to `regime_rate_hz`; other rates are reached with
/// [`Preset::params_for_rate`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Preset {
    pub name: PresetName,
    pub provenance: String,
    pub regime_rate_hz: f64,
    pub pulse_amplitude_amps: f64,
    pub pulse_width_s: f64,
    pub dt_s: f64,
    pub params: OptoNeuronParams,
    /// Search that produced `params`.
    pub calibration: CalibrationRecipe,
}

/// A complete, replayable calibration run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationRecipe {
    pub seed: u64,
    pub budget: usize,
    pub goal: CalibrationGoal,
    pub space: SearchSpace,
}

impl CalibrationRecipe {
    pub fn run(&self) -> Result<Calibrated> {
        calibrate_three_spike_threshold(&self.goal, &self.space, self.budget, self.seed)
    }
}

impl Preset {
    pub fn from_toml(text: &str) -> Result<Self> {
        let p: Preset = toml::from_str(text)
            .map_err(|e| Error::InvalidParams(format!("preset fixture: {e}")))?;
        p.params.validate()?;
        Ok(p)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("preset serializes")
    }

    /// Time-scale factor taking the native regime to `rate_hz`.
    pub fn time_factor(&self, rate_hz: f64) -> f64 {
        self.regime_rate_hz / rate_hz
    }

    pub fn params_for_rate(&self, rate_hz: f64) -> Result<OptoNeuronParams> {
        self.params.scale_time(self.time_factor(rate_hz))
    }

    /// Native stimulus grid for a simulation of `duration` seconds.
    pub fn stimulus(&self, duration: f64) -> StimulusConfig {
        StimulusConfig {
            dt: self.dt_s,
            duration,
            pulse_amplitude: self.pulse_amplitude_amps,
            pulse_width: self.pulse_width_s,
            detection_current: None,
            integrator: Default::default(),
        }
    }

    /// Stimulus matched to a grouped pattern's rate and pulse width.
    pub fn stimulus_for(&self, pattern: &GroupPattern, duration: f64) -> StimulusConfig {
        let k = self.time_factor(pattern.intra_group_rate);
        StimulusConfig {
            dt: self.dt_s * k,
            duration,
            pulse_amplitude: self.pulse_amplitude_amps,
            pulse_width: pattern.spike_width,
            detection_current: None,
            integrator: Default::default(),
        }
    }
}

const REGULAR: &str = include_str!("../../presets/regular.toml");
const LOW: &str = include_str!("../../presets/low.toml");
const BURST: &str = include_str!("../../presets/burst.toml");
const FAST: &str = include_str!("../../presets/fast.toml");

pub fn preset_fixture(name: PresetName) -> Result<Preset> {
    let text = match name {
        PresetName::Regular => REGULAR,
        PresetName::Low => LOW,
        PresetName::Burst => BURST,
        PresetName::Fast => FAST,
    };
    Preset::from_toml(text)
}

/// Parameters of a named preset at its native regime.
pub fn preset(name: &str) -> Result<OptoNeuronParams> {
    Ok(preset_fixture(name.parse()?)?.params)
}
