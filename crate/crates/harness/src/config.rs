//! Experiment configuration files.
//!
//! A config is a TOML document with a handful of top-level keys and one
//! optional table per module. Every quantity carries its unit in the key
//! name. Missing tables and keys take the documented defaults.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use oesnn_core::codec::GroupPattern;
use oesnn_core::energy::{DeviceEnergyParams, MeshEnergyParams, TaskEnergySpec};
use oesnn_core::learning::{AnnTrainConfig, ConversionConfig, StdpConfig};
use oesnn_core::neuron::{Integrator, OptoNeuronParams, SearchSpace};
use serde::{Deserialize, Serialize};

use crate::error::{HarnessError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    SimulateNeuron,
    Fig3Presets,
    Fig5,
    Fig6,
    TrainStdp,
    TrainAnn,
    ConvertAnn,
    Infer,
    EnergyReport,
    BenchmarkPoints,
    Calibrate,
}

impl Experiment {
    pub const ALL: [Experiment; 11] = [
        Experiment::SimulateNeuron,
        Experiment::Fig3Presets,
        Experiment::Fig5,
        Experiment::Fig6,
        Experiment::TrainStdp,
        Experiment::TrainAnn,
        Experiment::ConvertAnn,
        Experiment::Infer,
        Experiment::EnergyReport,
        Experiment::BenchmarkPoints,
        Experiment::Calibrate,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Experiment::SimulateNeuron => "simulate-neuron",
            Experiment::Fig3Presets => "fig3-presets",
            Experiment::Fig5 => "fig5",
            Experiment::Fig6 => "fig6",
            Experiment::TrainStdp => "train-stdp",
            Experiment::TrainAnn => "train-ann",
            Experiment::ConvertAnn => "convert-ann",
            Experiment::Infer => "infer",
            Experiment::EnergyReport => "energy-report",
            Experiment::BenchmarkPoints => "benchmark-points",
            Experiment::Calibrate => "calibrate",
        }
    }

    /// Recipes whose results depend on random draws.
    pub fn is_stochastic(self) -> bool {
        matches!(
            self,
            Experiment::TrainStdp
                | Experiment::TrainAnn
                | Experiment::ConvertAnn
                | Experiment::Infer
                | Experiment::Calibrate
        )
    }

    pub fn uses_mnist(self) -> bool {
        matches!(
            self,
            Experiment::TrainStdp
                | Experiment::TrainAnn
                | Experiment::ConvertAnn
                | Experiment::Infer
        )
    }
}

impl fmt::Display for Experiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Experiment {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self> {
        let alias = match s {
            "energy-foundry" | "energy-nano" => Some(Experiment::EnergyReport),
            _ => None,
        };
        alias
            .or_else(|| Experiment::ALL.into_iter().find(|e| e.as_str() == s))
            .ok_or_else(|| HarnessError::config(format!("unknown experiment `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
    Svg,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

fn default_formats() -> Vec<Format> {
    vec![Format::Csv, Format::Json, Format::Svg]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: Experiment,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default = "default_formats")]
    pub formats: Vec<Format>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub neuron: Option<NeuronBlock>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stimulus: Option<StimulusBlock>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mnist: Option<MnistBlock>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ann: Option<AnnBlock>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub conversion: Option<ConversionConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stdp: Option<StdpBlock>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub infer: Option<InferBlock>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub energy: Option<EnergyBlock>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub calibration: Option<CalibrationBlock>,
}

/// Neuron selection: a named preset, optionally replaced by explicit
/// parameters, optionally rescaled to another input rate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NeuronBlock {
    #[serde(default = "default_preset")]
    pub preset: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub params: Option<OptoNeuronParams>,
    /// TOML file holding a `[params]` table, e.g. the output of `calibrate`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub params_file: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rate_hz: Option<f64>,
}

fn default_preset() -> String {
    "regular".into()
}

impl Default for NeuronBlock {
    fn default() -> Self {
        Self {
            preset: default_preset(),
            params: None,
            params_file: None,
            rate_hz: None,
        }
    }
}

/// Input and grid for single-neuron recipes. Explicit spike times replace
/// the grouped pattern.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StimulusBlock {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pattern: Option<GroupPattern>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub exc_times_s: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub inh_times_s: Option<Vec<f64>>,
    /// Output events (1-based) the inhibitory pattern should cancel.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub suppress_events: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dt_s: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub duration_s: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pulse_amplitude_amps: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pulse_width_s: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detection_current_amps: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub integrator: Option<Integrator>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MnistBlock {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dir: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub train_samples: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub test_samples: Option<usize>,
}

fn default_layers() -> Vec<usize> {
    vec![784, 300, 100, 10]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnnBlock {
    #[serde(default = "default_layers")]
    pub layers: Vec<usize>,
    #[serde(default)]
    pub train: AnnTrainConfig,
    /// Trained model to convert; when absent `convert-ann` trains one first.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model_path: Option<PathBuf>,
}

impl Default for AnnBlock {
    fn default() -> Self {
        Self {
            layers: default_layers(),
            train: AnnTrainConfig::default(),
            model_path: None,
        }
    }
}

fn default_n_exc() -> usize {
    100
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StdpBlock {
    #[serde(default = "default_n_exc")]
    pub n_exc: usize,
    #[serde(default)]
    pub rule: StdpConfig,
}

impl Default for StdpBlock {
    fn default() -> Self {
        Self {
            n_exc: default_n_exc(),
            rule: StdpConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelKind {
    Converted,
    Stdp,
}

/// A network saved by `convert-ann` or `train-stdp`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InferBlock {
    pub kind: ModelKind,
    /// The `model.json` written by the training recipe.
    pub model_path: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DeviceChoice {
    Foundry,
    Nano,
    Both,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnergyBlock {
    #[serde(default = "default_device")]
    pub device: DeviceChoice,
    /// Replaces the built-in sheets when present.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sheets: Option<Vec<DeviceEnergyParams>>,
    /// Workload per sheet, in sheet order; default is each sheet's
    /// published task figures back-solved to activity and duration.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tasks: Option<Vec<TaskEnergySpec>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub meshes: Option<Vec<MeshEnergyParams>>,
}

fn default_device() -> DeviceChoice {
    DeviceChoice::Both
}

impl Default for EnergyBlock {
    fn default() -> Self {
        Self {
            device: DeviceChoice::Both,
            sheets: None,
            tasks: None,
            meshes: None,
        }
    }
}

impl EnergyBlock {
    pub fn sheets(&self) -> Vec<DeviceEnergyParams> {
        if let Some(s) = &self.sheets {
            return s.clone();
        }
        match self.device {
            DeviceChoice::Foundry => vec![DeviceEnergyParams::foundry()],
            DeviceChoice::Nano => vec![DeviceEnergyParams::nano()],
            DeviceChoice::Both => vec![DeviceEnergyParams::foundry(), DeviceEnergyParams::nano()],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CalibrationBlock {
    /// Start from the recipe stored with this preset.
    #[serde(default = "default_preset")]
    pub preset: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spikes_to_fire: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub budget: Option<usize>,
    /// Drop the grouped-pattern target and keep only the N versus N-1 check.
    #[serde(default)]
    pub threshold_only: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub space: Option<SearchSpace>,
}

impl Default for CalibrationBlock {
    fn default() -> Self {
        Self {
            preset: default_preset(),
            spikes_to_fire: None,
            budget: None,
            threshold_only: false,
            space: None,
        }
    }
}

impl ExperimentConfig {
    /// Config with every block at its default for `experiment`.
    pub fn new(experiment: Experiment) -> Self {
        Self {
            experiment,
            seed: experiment.is_stochastic().then_some(1),
            output_dir: default_output_dir().join(experiment.as_str()),
            formats: default_formats(),
            neuron: None,
            stimulus: None,
            mnist: None,
            ann: None,
            conversion: None,
            stdp: None,
            infer: None,
            energy: None,
            calibration: None,
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self =
            toml::from_str(text).map_err(|e| HarnessError::config(format!("config: {e}")))?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| HarnessError::config(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn wants(&self, f: Format) -> bool {
        self.formats.contains(&f)
    }

    /// The single seed all randomness derives from.
    pub fn seed(&self) -> u64 {
        self.seed.unwrap_or(0)
    }

    /// Copy with the top-level seed written into every block that carries
    /// one, so the recorded config states the seeds actually used.
    pub fn effective(&self) -> Self {
        let mut c = self.clone();
        let seed = self.seed();
        if let Some(a) = c.ann.as_mut() {
            a.train.seed = seed;
        }
        if let Some(cc) = c.conversion.as_mut() {
            cc.seed = seed;
        }
        if let Some(s) = c.stdp.as_mut() {
            s.rule.seed = seed;
        }
        c
    }

    /// Check presence of the seed and of every referenced file.
    pub fn validate(&self) -> Result<()> {
        if self.experiment.is_stochastic() && self.seed.is_none() {
            return Err(HarnessError::config(format!(
                "experiment `{}` is stochastic and needs `seed`",
                self.experiment
            )));
        }
        if self.formats.is_empty() {
            return Err(HarnessError::config(
                "`formats` must name at least one of csv, json, svg",
            ));
        }
        let mut files: Vec<&Path> = Vec::new();
        if let Some(p) = self.neuron.as_ref().and_then(|n| n.params_file.as_deref()) {
            files.push(p);
        }
        if let Some(p) = self.ann.as_ref().and_then(|a| a.model_path.as_deref()) {
            if self.experiment == Experiment::ConvertAnn {
                files.push(p);
            }
        }
        if let Some(i) = &self.infer {
            files.push(&i.model_path);
        }
        if let Some(d) = self.mnist.as_ref().and_then(|m| m.dir.as_deref()) {
            if !d.is_dir() {
                return Err(HarnessError::config(format!(
                    "MNIST directory {} does not exist",
                    d.display()
                )));
            }
        }
        for f in files {
            if !f.is_file() {
                return Err(HarnessError::config(format!(
                    "referenced file {} does not exist",
                    f.display()
                )));
            }
        }
        if self.experiment == Experiment::Infer && self.infer.is_none() {
            return Err(HarnessError::config(
                "`infer` needs an [infer] table with kind and model_path",
            ));
        }
        Ok(())
    }
}
