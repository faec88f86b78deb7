//! Feedforward and winner-take-all topologies of optoelectronic neurons and
//! their clock-driven simulation.
//!
//! Layer 0 is always the input layer: its neurons are spike sources driven
//! by the input trains. Every later layer is a population of optoelectronic
//! neurons fed by nonnegative excitatory and inhibitory matrices from the
//! layer before it.

mod sim;

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

pub use sim::{
    run, LayerTrace, NetworkRun, NetworkState, RecordFlags, RunStats, SimConfig, Simulator,
    StepSpikes,
};

use crate::matrix::Matrix;
use crate::neuron::OptoNeuronParams;
use crate::{weights, Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub size: usize,
    pub params: OptoNeuronParams,
    /// Per-neuron overrides of `params`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub per_neuron: Option<Vec<OptoNeuronParams>>,
    /// Constant signed drive current per neuron (A); positive enters the
    /// excitatory input, negative the inhibitory one.
    #[serde(rename = "bias_amps", default, skip_serializing_if = "Option::is_none")]
    pub bias: Option<Vec<f64>>,
    /// Per-neuron firing threshold offset (V), applied as a hyperpolarizing
    /// current `theta / r1` so the rate curve shifts right by that current.
    #[serde(
        rename = "threshold_offset_volts",
        default,
        skip_serializing_if = "Option::is_none"
    )]
    pub threshold_offset: Option<Vec<f64>>,
}

impl LayerSpec {
    pub fn new(size: usize, params: OptoNeuronParams) -> Self {
        Self {
            size,
            params,
            per_neuron: None,
            bias: None,
            threshold_offset: None,
        }
    }

    /// Effective parameters of neuron `i`.
    pub fn neuron_params(&self, i: usize) -> OptoNeuronParams {
        match &self.per_neuron {
            Some(v) => v[i],
            None => self.params,
        }
    }

    /// Hyperpolarizing current equivalent to the threshold offset of neuron `i`.
    pub fn threshold_current(&self, i: usize) -> f64 {
        match &self.threshold_offset {
            Some(theta) => theta[i] / self.neuron_params(i).r1,
            None => 0.0,
        }
    }

    fn validate(&self, index: usize) -> Result<()> {
        if self.size == 0 {
            return Err(Error::InvalidParams(format!("layer {index} has size 0")));
        }
        let len_ok = |n: Option<usize>| n.is_none_or(|n| n == self.size);
        if !len_ok(self.per_neuron.as_ref().map(Vec::len))
            || !len_ok(self.bias.as_ref().map(Vec::len))
            || !len_ok(self.threshold_offset.as_ref().map(Vec::len))
        {
            return Err(Error::ShapeMismatch(format!(
                "layer {index}: per-neuron vectors must have {} entries",
                self.size
            )));
        }
        if index > 0 {
            for i in 0..self.size {
                self.neuron_params(i).validate()?;
            }
        }
        Ok(())
    }
}

/// Nonnegative weights between two adjacent layers, shape post x pre.
#[derive(Debug, Clone, PartialEq)]
pub struct Connection {
    pub w_exc: Matrix,
    pub w_inh: Matrix,
}

impl Connection {
    /// Split a signed matrix into excitatory and inhibitory magnitudes.
    pub fn from_signed(w: &Matrix) -> Self {
        Self {
            w_exc: w.map(|x| if x > 0.0 { x } else { 0.0 }),
            w_inh: w.map(|x| if x < 0.0 { -x } else { 0.0 }),
        }
    }

    pub fn signed(&self) -> Matrix {
        let data = self
            .w_exc
            .as_slice()
            .iter()
            .zip(self.w_inh.as_slice())
            .map(|(e, i)| e - i)
            .collect();
        Matrix::from_vec(self.w_exc.rows(), self.w_exc.cols(), data).expect("matching shapes")
    }
}

/// Lateral inhibition attached to the last layer: excitatory neuron `i`
/// drives inhibitory neuron `i`, which inhibits every excitatory neuron but `i`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WtaLinks {
    /// Weight of each exc -> inh one-to-one link.
    pub exc_to_inh: f64,
    /// Weight of each inh -> exc fan-back link.
    pub inh_strength: f64,
    pub inh_params: OptoNeuronParams,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Feedforward,
    Wta,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Topology {
    pub layers: Vec<LayerSpec>,
    /// `connections[l]` feeds layer `l + 1` from layer `l`.
    pub connections: Vec<Connection>,
    pub wta: Option<WtaLinks>,
}

/// Signed-weight feedforward network. `weights[l]` has shape
/// `sizes[l + 1] x sizes[l]`.
pub fn build_feedforward(
    sizes: &[usize],
    weights: &[Matrix],
    params: &OptoNeuronParams,
) -> Result<Topology> {
    if sizes.len() < 2 || weights.len() != sizes.len() - 1 {
        return Err(Error::ShapeMismatch(format!(
            "{} layer sizes need {} weight matrices, got {}",
            sizes.len(),
            sizes.len().saturating_sub(1),
            weights.len()
        )));
    }
    for (l, w) in weights.iter().enumerate() {
        if w.shape() != (sizes[l + 1], sizes[l]) {
            return Err(Error::ShapeMismatch(format!(
                "weights {l} are {:?}, expected {:?}",
                w.shape(),
                (sizes[l + 1], sizes[l])
            )));
        }
    }
    let topo = Topology {
        layers: sizes.iter().map(|&n| LayerSpec::new(n, *params)).collect(),
        connections: weights.iter().map(Connection::from_signed).collect(),
        wta: None,
    };
    topo.validate()?;
    Ok(topo)
}

/// Input layer densely connected to `n_exc` excitatory neurons with
/// one-to-one inhibitory partners.
pub fn build_wta(
    n_input: usize,
    n_exc: usize,
    input_weights: Matrix,
    params: &OptoNeuronParams,
    exc_to_inh: f64,
    inh_strength: f64,
) -> Result<Topology> {
    if n_exc < 2 {
        return Err(Error::InvalidParams(format!(
            "winner-take-all needs at least 2 excitatory neurons, got {n_exc}"
        )));
    }
    if input_weights.shape() != (n_exc, n_input) {
        return Err(Error::ShapeMismatch(format!(
            "input weights are {:?}, expected {:?}",
            input_weights.shape(),
            (n_exc, n_input)
        )));
    }
    let topo = Topology {
        layers: vec![
            LayerSpec::new(n_input, *params),
            LayerSpec::new(n_exc, *params),
        ],
        connections: vec![Connection {
            w_inh: Matrix::zeros(n_exc, n_input),
            w_exc: input_weights,
        }],
        wta: Some(WtaLinks {
            exc_to_inh,
            inh_strength,
            inh_params: *params,
        }),
    };
    topo.validate()?;
    Ok(topo)
}

impl Topology {
    pub fn mode(&self) -> Mode {
        if self.wta.is_some() {
            Mode::Wta
        } else {
            Mode::Feedforward
        }
    }

    pub fn input_size(&self) -> usize {
        self.layers[0].size
    }

    pub fn output_size(&self) -> usize {
        self.layers.last().map_or(0, |l| l.size)
    }

    /// `(one-to-one exc -> inh links, inh -> exc fan-back links)`.
    pub fn lateral_link_counts(&self) -> (usize, usize) {
        match &self.wta {
            Some(_) => {
                let n = self.output_size();
                (n, n * (n - 1))
            }
            None => (0, 0),
        }
    }

    pub fn sizes(&self) -> Vec<usize> {
        self.layers.iter().map(|l| l.size).collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.layers.len() < 2 {
            return Err(Error::ShapeMismatch(
                "a topology needs at least two layers".into(),
            ));
        }
        if self.connections.len() != self.layers.len() - 1 {
            return Err(Error::ShapeMismatch(format!(
                "{} layers need {} connections, got {}",
                self.layers.len(),
                self.layers.len() - 1,
                self.connections.len()
            )));
        }
        for (i, l) in self.layers.iter().enumerate() {
            l.validate(i)?;
        }
        for (l, c) in self.connections.iter().enumerate() {
            let want = (self.layers[l + 1].size, self.layers[l].size);
            if c.w_exc.shape() != want || c.w_inh.shape() != want {
                return Err(Error::ShapeMismatch(format!(
                    "connection {l} matrices must be {want:?}"
                )));
            }
            let ok = |m: &Matrix| m.as_slice().iter().all(|&w| w >= 0.0 && w.is_finite());
            if !ok(&c.w_exc) || !ok(&c.w_inh) {
                return Err(Error::InvalidParams(format!(
                    "connection {l} weights must be finite and nonnegative"
                )));
            }
        }
        if let Some(w) = &self.wta {
            if self.output_size() < 2 {
                return Err(Error::InvalidParams(
                    "winner-take-all needs at least 2 excitatory neurons".into(),
                ));
            }
            if !(w.exc_to_inh >= 0.0 && w.inh_strength >= 0.0) {
                return Err(Error::InvalidParams("lateral weights must be >= 0".into()));
            }
            w.inh_params.validate()?;
        }
        Ok(())
    }

    /// All matrices in sidecar order: per connection, excitatory then inhibitory.
    pub fn flat_weights(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for c in &self.connections {
            out.extend_from_slice(c.w_exc.as_slice());
            out.extend_from_slice(c.w_inh.as_slice());
        }
        out
    }

    /// Write `<path>` (JSON) and its weights sidecar next to it.
    pub fn save(&self, path: &Path) -> Result<PathBuf> {
        let side = sidecar_path(path);
        let file = TopologyFile {
            format: TOPOLOGY_FORMAT.into(),
            version: 1,
            mode: self.mode(),
            layers: self.layers.clone(),
            connections: self
                .connections
                .iter()
                .map(|c| ConnectionShape {
                    rows: c.w_exc.rows(),
                    cols: c.w_exc.cols(),
                })
                .collect(),
            wta: self.wta.clone(),
            weights_file: side
                .file_name()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_default(),
            weights_count: self.flat_weights().len(),
        };
        std::fs::write(path, serde_json::to_string_pretty(&file)?)?;
        weights::save(&side, &self.flat_weights())?;
        Ok(side)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file: TopologyFile = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        if file.format != TOPOLOGY_FORMAT {
            return Err(Error::WeightsFormat(format!(
                "unknown topology format `{}`",
                file.format
            )));
        }
        let side = path.with_file_name(&file.weights_file);
        let values = weights::load(&side)?;
        if values.len() != file.weights_count {
            return Err(Error::WeightsFormat(format!(
                "sidecar holds {} values, topology declares {}",
                values.len(),
                file.weights_count
            )));
        }
        let mut at = 0;
        let mut take = |rows: usize, cols: usize| -> Result<Matrix> {
            let n = rows * cols;
            let slice = values.get(at..at + n).ok_or_else(|| {
                Error::WeightsFormat("sidecar shorter than the declared shapes".into())
            })?;
            at += n;
            Matrix::from_vec(rows, cols, slice.to_vec())
        };
        let mut connections = Vec::new();
        for s in &file.connections {
            let w_exc = take(s.rows, s.cols)?;
            let w_inh = take(s.rows, s.cols)?;
            connections.push(Connection { w_exc, w_inh });
        }
        if at != values.len() {
            return Err(Error::WeightsFormat(
                "sidecar longer than the declared shapes".into(),
            ));
        }
        let topo = Topology {
            layers: file.layers,
            connections,
            wta: file.wta,
        };
        topo.validate()?;
        Ok(topo)
    }
}

const TOPOLOGY_FORMAT: &str = "oesnn-topology";

pub fn sidecar_path(json: &Path) -> PathBuf {
    json.with_extension("weights.bin")
}

#[derive(Serialize, Deserialize)]
struct ConnectionShape {
    rows: usize,
    cols: usize,
}

#[derive(Serialize, Deserialize)]
struct TopologyFile {
    format: String,
    version: u32,
    mode: Mode,
    layers: Vec<LayerSpec>,
    connections: Vec<ConnectionShape>,
    #[serde(default)]
    wta: Option<WtaLinks>,
    weights_file: String,
    weights_count: usize,
}
