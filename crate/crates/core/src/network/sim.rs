use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::Topology;
use crate::codec::{RasterEvent, SpikeTrain};
use crate::neuron::opto::{self, check_dt};
use crate::neuron::simulate::pulse_cells;
use crate::neuron::{DriveInput, Integrator, OptoNeuronParams, OptoNeuronState};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RecordFlags {
    /// Keep per-neuron `v`, `u` and VCSEL current series for every simulated layer.
    #[serde(default)]
    pub traces: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    #[serde(rename = "dt_s")]
    pub dt: f64,
    #[serde(rename = "duration_s")]
    pub duration: f64,
    #[serde(default)]
    pub seed: u64,
    /// Photocurrent of one spike pulse at unit weight.
    #[serde(rename = "pulse_amplitude_amps")]
    pub pulse_amplitude: f64,
    #[serde(rename = "pulse_width_s")]
    pub pulse_width: f64,
    #[serde(
        rename = "detection_current_amps",
        default,
        skip_serializing_if = "Option::is_none"
    )]
    pub detection_current: Option<f64>,
    #[serde(default)]
    pub integrator: Integrator,
    #[serde(default)]
    pub record: RecordFlags,
}

impl SimConfig {
    pub fn steps(&self) -> usize {
        (self.duration / self.dt).round() as usize
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0) || !(self.duration >= self.dt) {
            return Err(Error::InvalidParams(
                "need dt > 0 and duration >= dt".into(),
            ));
        }
        if !(self.pulse_width > 0.0) || !(self.pulse_amplitude >= 0.0) {
            return Err(Error::InvalidParams(
                "need pulse width > 0 and amplitude >= 0".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LayerTrace {
    pub layer: usize,
    /// `v[neuron][step]`.
    pub v: Vec<Vec<f64>>,
    pub u: Vec<Vec<f64>>,
    pub i_vcsel: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct RunStats {
    pub steps: usize,
    pub spikes: usize,
    pub wall_seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkRun {
    /// Spike rasters per layer; layer 0 holds the input spikes.
    pub rasters: Vec<Vec<RasterEvent>>,
    /// Spikes of the lateral inhibitory population (empty without WTA links).
    pub inh_raster: Vec<RasterEvent>,
    pub counts: Vec<Vec<u32>>,
    pub traces: Vec<LayerTrace>,
    pub stats: RunStats,
}

impl NetworkRun {
    pub fn output_counts(&self) -> &[u32] {
        self.counts.last().map(Vec::as_slice).unwrap_or(&[])
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct PulseEdge {
    pop: u32,
    idx: u32,
    delta: i32,
}

/// Mutable simulation state: neuron states, pending pulse edges and the
/// step counter. Population `layers.len()` is the lateral inhibitory one.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkState {
    pub neurons: Vec<Vec<OptoNeuronState>>,
    pub inh: Vec<OptoNeuronState>,
    prev_i: Vec<Vec<f64>>,
    inh_prev_i: Vec<f64>,
    counts: Vec<Vec<u32>>,
    inh_counts: Vec<u32>,
    ring: Vec<Vec<PulseEdge>>,
    step: usize,
}

impl NetworkState {
    fn fresh(topo: &Topology, ring_len: usize) -> Self {
        let sizes = topo.sizes();
        let n_inh = if topo.wta.is_some() {
            topo.output_size()
        } else {
            0
        };
        Self {
            neurons: sizes
                .iter()
                .map(|&n| vec![OptoNeuronState::REST; n])
                .collect(),
            inh: vec![OptoNeuronState::REST; n_inh],
            prev_i: sizes.iter().map(|&n| vec![0.0; n]).collect(),
            inh_prev_i: vec![0.0; n_inh],
            counts: sizes.iter().map(|&n| vec![0; n]).collect(),
            inh_counts: vec![0; n_inh],
            ring: vec![Vec::new(); ring_len],
            step: 0,
        }
    }

    /// True when every neuron is at rest and no pulse is in flight.
    pub fn is_quiescent(&self) -> bool {
        self.neurons
            .iter()
            .flatten()
            .chain(&self.inh)
            .all(|s| *s == OptoNeuronState::REST)
            && self
                .counts
                .iter()
                .flatten()
                .chain(&self.inh_counts)
                .all(|&c| c == 0)
            && self.ring.iter().all(Vec::is_empty)
    }
}

/// Spikes emitted during the last step.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct StepSpikes {
    /// Per layer; layer 0 lists input channels whose pulse started this step.
    pub layers: Vec<Vec<usize>>,
    pub inh: Vec<usize>,
}

/// Reusable stepping context over one topology.
#[derive(Debug, Clone)]
pub struct Simulator {
    cfg: SimConfig,
    len: usize,
    params: Vec<Vec<OptoNeuronParams>>,
    detect: Vec<Vec<f64>>,
    theta_current: Vec<Vec<f64>>,
    inh_params: Option<OptoNeuronParams>,
    inh_detect: f64,
    state: NetworkState,
    /// Transposed (pre x post) copies of each connection's matrices.
    wt_exc: Vec<Vec<f64>>,
    wt_inh: Vec<Vec<f64>>,
    /// Running `sum(w * count)` per postsynaptic neuron, indexed by layer.
    acc_exc: Vec<Vec<f64>>,
    acc_inh: Vec<Vec<f64>>,
    drives: Vec<Vec<DriveInput>>,
    inh_drives: Vec<DriveInput>,
    inputs: Vec<(usize, u32)>,
    cursor: usize,
    spikes: StepSpikes,
}

impl Simulator {
    pub fn new(topo: &Topology, cfg: &SimConfig) -> Result<Self> {
        topo.validate()?;
        cfg.validate()?;
        let len = pulse_cells(0.0, cfg.dt, cfg.pulse_width).1;
        let mut sim = Self {
            cfg: *cfg,
            len,
            params: Vec::new(),
            detect: Vec::new(),
            theta_current: Vec::new(),
            inh_params: None,
            inh_detect: 0.0,
            state: NetworkState::fresh(topo, len + 2),
            wt_exc: Vec::new(),
            wt_inh: Vec::new(),
            acc_exc: topo.sizes().iter().map(|&n| vec![0.0; n]).collect(),
            acc_inh: topo.sizes().iter().map(|&n| vec![0.0; n]).collect(),
            drives: topo
                .sizes()
                .iter()
                .map(|&n| vec![DriveInput::default(); n])
                .collect(),
            inh_drives: vec![
                DriveInput::default();
                topo.wta.as_ref().map_or(0, |_| topo.output_size())
            ],
            inputs: Vec::new(),
            cursor: 0,
            spikes: StepSpikes {
                layers: vec![Vec::new(); topo.layers.len()],
                inh: Vec::new(),
            },
        };
        sim.refresh_params(topo)?;
        sim.refresh_weights(topo);
        Ok(sim)
    }

    /// Re-read connection weights; call after changing them between steps.
    pub fn refresh_weights(&mut self, topo: &Topology) {
        self.wt_exc = topo
            .connections
            .iter()
            .map(|c| c.w_exc.transpose().as_slice().to_vec())
            .collect();
        self.wt_inh = topo
            .connections
            .iter()
            .map(|c| c.w_inh.transpose().as_slice().to_vec())
            .collect();
        for l in 1..topo.layers.len() {
            let n_post = topo.layers[l].size;
            let (we, wi) = (&self.wt_exc[l - 1], &self.wt_inh[l - 1]);
            let (ae, ai) = (&mut self.acc_exc[l], &mut self.acc_inh[l]);
            ae.fill(0.0);
            ai.fill(0.0);
            for (i, &c) in self.state.counts[l - 1].iter().enumerate() {
                if c == 0 {
                    continue;
                }
                let c = c as f64;
                let row = i * n_post..(i + 1) * n_post;
                for ((a, &w), (b, &v)) in ae
                    .iter_mut()
                    .zip(&we[row.clone()])
                    .zip(ai.iter_mut().zip(&wi[row]))
                {
                    *a += w * c;
                    *b += v * c;
                }
            }
        }
    }

    /// Re-read the incoming weights of neuron `j` in layer `l` only.
    pub fn refresh_post(&mut self, topo: &Topology, l: usize, j: usize) {
        let conn = &topo.connections[l - 1];
        let n_post = topo.layers[l].size;
        let (mut e, mut i) = (0.0, 0.0);
        for (p, &c) in self.state.counts[l - 1].iter().enumerate() {
            let we = conn.w_exc.get(j, p);
            let wi = conn.w_inh.get(j, p);
            self.wt_exc[l - 1][p * n_post + j] = we;
            self.wt_inh[l - 1][p * n_post + j] = wi;
            if c > 0 {
                e += we * c as f64;
                i += wi * c as f64;
            }
        }
        self.acc_exc[l][j] = e;
        self.acc_inh[l][j] = i;
    }

    /// Change the pulse count of a neuron and propagate it to the running sums.
    fn apply_edge(&mut self, pop: usize, idx: usize, delta: i32) {
        if pop == self.state.counts.len() {
            let c = &mut self.state.inh_counts[idx];
            *c = (*c as i64 + delta as i64) as u32;
            return;
        }
        let c = &mut self.state.counts[pop][idx];
        *c = (*c as i64 + delta as i64) as u32;
        if pop + 1 < self.state.counts.len() {
            let n_post = self.acc_exc[pop + 1].len();
            let row = idx * n_post..(idx + 1) * n_post;
            let d = delta as f64;
            let (ae, ai) = (&mut self.acc_exc[pop + 1], &mut self.acc_inh[pop + 1]);
            for (a, &w) in ae.iter_mut().zip(&self.wt_exc[pop][row.clone()]) {
                *a += w * d;
            }
            for (a, &w) in ai.iter_mut().zip(&self.wt_inh[pop][row]) {
                *a += w * d;
            }
        }
    }

    /// Re-read per-neuron parameters (e.g. after threshold offsets changed).
    pub fn refresh_params(&mut self, topo: &Topology) -> Result<()> {
        let mut params = vec![Vec::new()];
        let mut detect = vec![Vec::new()];
        for layer in &topo.layers[1..] {
            let ps: Vec<_> = (0..layer.size).map(|i| layer.neuron_params(i)).collect();
            for p in &ps {
                p.validate()?;
                check_dt(self.cfg.dt, p)?;
            }
            detect.push(
                ps.iter()
                    .map(|p| {
                        self.cfg
                            .detection_current
                            .unwrap_or_else(|| p.default_detection_current())
                    })
                    .collect(),
            );
            params.push(ps);
        }
        if let Some(w) = &topo.wta {
            check_dt(self.cfg.dt, &w.inh_params)?;
            self.inh_params = Some(w.inh_params);
            self.inh_detect = self
                .cfg
                .detection_current
                .unwrap_or_else(|| w.inh_params.default_detection_current());
        }
        self.params = params;
        self.detect = detect;
        self.theta_current = topo
            .layers
            .iter()
            .map(|layer| match layer.threshold_offset {
                Some(_) => (0..layer.size)
                    .map(|i| layer.threshold_current(i))
                    .collect(),
                None => Vec::new(),
            })
            .collect();
        Ok(())
    }

    pub fn config(&self) -> &SimConfig {
        &self.cfg
    }

    /// Return every neuron to rest and drop in-flight pulses.
    pub fn reset(&mut self) {
        let ring_len = self.state.ring.len();
        for v in self.state.neurons.iter_mut() {
            v.fill(OptoNeuronState::REST);
        }
        self.state.inh.fill(OptoNeuronState::REST);
        for v in self.state.prev_i.iter_mut() {
            v.fill(0.0);
        }
        self.state.inh_prev_i.fill(0.0);
        for v in self.state.counts.iter_mut() {
            v.fill(0);
        }
        self.state.inh_counts.fill(0);
        for v in self.acc_exc.iter_mut().chain(self.acc_inh.iter_mut()) {
            v.fill(0.0);
        }
        self.state.ring = vec![Vec::new(); ring_len];
        self.state.step = 0;
        self.inputs.clear();
        self.cursor = 0;
    }

    pub fn state(&self) -> &NetworkState {
        &self.state
    }

    pub fn clone_state(&self) -> NetworkState {
        self.state.clone()
    }

    pub fn set_state(&mut self, topo: &Topology, state: NetworkState) -> Result<()> {
        if state.neurons.len() != self.state.neurons.len()
            || state.ring.len() != self.state.ring.len()
        {
            return Err(Error::ShapeMismatch(
                "state belongs to another topology".into(),
            ));
        }
        self.state = state;
        self.refresh_weights(topo);
        Ok(())
    }

    /// Drive assembled for layer `l` during the last step.
    pub fn drives(&self, l: usize) -> &[DriveInput] {
        &self.drives[l]
    }

    /// Schedule input trains relative to the current step.
    pub fn load_inputs(
        &mut self,
        topo: &Topology,
        inputs: &[SpikeTrain],
        duration: f64,
    ) -> Result<()> {
        if inputs.len() != topo.input_size() {
            return Err(Error::ShapeMismatch(format!(
                "{} input trains for an input layer of {}",
                inputs.len(),
                topo.input_size()
            )));
        }
        let base = self.state.step;
        let mut events = Vec::new();
        for (c, train) in inputs.iter().enumerate() {
            if train.times().last().is_some_and(|&t| t > duration) {
                return Err(Error::InvalidParams(format!(
                    "input train {c} extends past the simulated duration"
                )));
            }
            for &t in train.times() {
                let (start, _) = pulse_cells(t, self.cfg.dt, self.cfg.pulse_width);
                events.push((base + start, c as u32));
            }
        }
        events.sort_unstable();
        self.inputs = events;
        self.cursor = 0;
        Ok(())
    }

    /// Advance every population by one step.
    pub fn step(&mut self, topo: &Topology) -> &StepSpikes {
        let k = self.state.step;
        let ring_len = self.state.ring.len();
        let n_layers = topo.layers.len();
        let inh_pop = n_layers as u32;

        let edges = std::mem::take(&mut self.state.ring[k % ring_len]);
        for e in &edges {
            self.apply_edge(e.pop as usize, e.idx as usize, e.delta);
        }
        let mut recycled = edges;
        recycled.clear();
        self.state.ring[k % ring_len] = recycled;

        for s in self.spikes.layers.iter_mut() {
            s.clear();
        }
        self.spikes.inh.clear();
        let end = (k + self.len) % ring_len;
        while self.cursor < self.inputs.len() && self.inputs[self.cursor].0 <= k {
            let (at, c) = self.inputs[self.cursor];
            self.cursor += 1;
            if at < k {
                continue;
            }
            self.apply_edge(0, c as usize, 1);
            self.state.ring[end].push(PulseEdge {
                pop: 0,
                idx: c,
                delta: -1,
            });
            self.spikes.layers[0].push(c as usize);
        }

        let amp = self.cfg.pulse_amplitude;
        let inh_total: u64 = self.state.inh_counts.iter().map(|&c| c as u64).sum();
        for l in 1..n_layers {
            let bias = topo.layers[l].bias.as_deref();
            let lateral = if l == n_layers - 1 {
                topo.wta.as_ref()
            } else {
                None
            };
            let (ae, ai) = (&self.acc_exc[l], &self.acc_inh[l]);
            for (j, d) in self.drives[l].iter_mut().enumerate() {
                let mut i_exc = amp * ae[j].max(0.0);
                let mut i_inh = amp * ai[j].max(0.0);
                if let Some(w) = lateral {
                    let others = inh_total - self.state.inh_counts[j] as u64;
                    i_inh += amp * (w.inh_strength * others as f64);
                }
                if let Some(b) = bias {
                    if b[j] > 0.0 {
                        i_exc += b[j];
                    } else {
                        i_inh -= b[j];
                    }
                }
                if let Some(&t) = self.theta_current[l].get(j) {
                    if t > 0.0 {
                        i_inh += t;
                    } else {
                        i_exc -= t;
                    }
                }
                *d = DriveInput { i_exc, i_inh };
            }
        }
        if let Some(w) = &topo.wta {
            let exc_counts = &self.state.counts[n_layers - 1];
            for (d, &c) in self.inh_drives.iter_mut().zip(exc_counts) {
                *d = DriveInput::excitatory(amp * (w.exc_to_inh * c as f64));
            }
        }

        let start = (k + 1) % ring_len;
        let stop = (k + 1 + self.len) % ring_len;
        let integrator = self.cfg.integrator;
        let dt = self.cfg.dt;
        for l in 1..n_layers {
            for j in 0..topo.layers[l].size {
                let p = &self.params[l][j];
                let s = opto::advance(
                    self.state.neurons[l][j],
                    self.drives[l][j],
                    dt,
                    p,
                    integrator,
                );
                self.state.neurons[l][j] = s;
                let i = opto::vcsel_current(s.v, p);
                if self.state.prev_i[l][j] < self.detect[l][j] && i >= self.detect[l][j] {
                    self.spikes.layers[l].push(j);
                    self.state.ring[start].push(PulseEdge {
                        pop: l as u32,
                        idx: j as u32,
                        delta: 1,
                    });
                    self.state.ring[stop].push(PulseEdge {
                        pop: l as u32,
                        idx: j as u32,
                        delta: -1,
                    });
                }
                self.state.prev_i[l][j] = i;
            }
        }
        if let Some(p) = &self.inh_params {
            for j in 0..self.state.inh.len() {
                let s = opto::advance(self.state.inh[j], self.inh_drives[j], dt, p, integrator);
                self.state.inh[j] = s;
                let i = opto::vcsel_current(s.v, p);
                if self.state.inh_prev_i[j] < self.inh_detect && i >= self.inh_detect {
                    self.spikes.inh.push(j);
                    self.state.ring[start].push(PulseEdge {
                        pop: inh_pop,
                        idx: j as u32,
                        delta: 1,
                    });
                    self.state.ring[stop].push(PulseEdge {
                        pop: inh_pop,
                        idx: j as u32,
                        delta: -1,
                    });
                }
                self.state.inh_prev_i[j] = i;
            }
        }
        self.state.step += 1;
        &self.spikes
    }

    pub fn last_spikes(&self) -> &StepSpikes {
        &self.spikes
    }

    /// Run `cfg.duration` from the current state.
    pub fn run(&mut self, topo: &Topology, inputs: &[SpikeTrain]) -> Result<NetworkRun> {
        let clock = Instant::now();
        let duration = self.cfg.duration;
        self.load_inputs(topo, inputs, duration)?;
        let steps = self.cfg.steps();
        let dt = self.cfg.dt;
        let n_layers = topo.layers.len();
        let mut rasters: Vec<Vec<RasterEvent>> = vec![Vec::new(); n_layers];
        for (c, train) in inputs.iter().enumerate() {
            rasters[0].extend(train.times().iter().map(|&t| RasterEvent {
                channel_id: c as u32,
                time_s: t,
            }));
        }
        rasters[0].sort_by(|a, b| {
            a.time_s
                .total_cmp(&b.time_s)
                .then(a.channel_id.cmp(&b.channel_id))
        });
        let mut inh_raster = Vec::new();
        let mut counts: Vec<Vec<u32>> = topo.sizes().iter().map(|&n| vec![0; n]).collect();
        for e in &rasters[0] {
            counts[0][e.channel_id as usize] += 1;
        }
        let mut traces: Vec<LayerTrace> = if self.cfg.record.traces {
            (1..n_layers)
                .map(|l| {
                    let n = topo.layers[l].size;
                    LayerTrace {
                        layer: l,
                        v: vec![Vec::with_capacity(steps); n],
                        u: vec![Vec::with_capacity(steps); n],
                        i_vcsel: vec![Vec::with_capacity(steps); n],
                    }
                })
                .collect()
        } else {
            Vec::new()
        };
        let mut spikes_total = 0;
        for k in 0..steps {
            self.step(topo);
            let t = (k + 1) as f64 * dt;
            for l in 1..n_layers {
                for &j in &self.spikes.layers[l] {
                    rasters[l].push(RasterEvent {
                        channel_id: j as u32,
                        time_s: t,
                    });
                    counts[l][j] += 1;
                    spikes_total += 1;
                }
            }
            for &j in &self.spikes.inh {
                inh_raster.push(RasterEvent {
                    channel_id: j as u32,
                    time_s: t,
                });
                spikes_total += 1;
            }
            for tr in traces.iter_mut() {
                let l = tr.layer;
                for j in 0..topo.layers[l].size {
                    let s = self.state.neurons[l][j];
                    tr.v[j].push(s.v);
                    tr.u[j].push(s.u);
                    tr.i_vcsel[j].push(opto::vcsel_current(s.v, &self.params[l][j]));
                }
            }
        }
        if self
            .state
            .neurons
            .iter()
            .flatten()
            .chain(&self.state.inh)
            .any(|s| !(s.v.is_finite() && s.u.is_finite()))
        {
            return Err(Error::NonFinite("network state"));
        }
        Ok(NetworkRun {
            rasters,
            inh_raster,
            counts,
            traces,
            stats: RunStats {
                steps,
                spikes: spikes_total,
                wall_seconds: clock.elapsed().as_secs_f64(),
            },
        })
    }
}

/// Simulate `topo` from rest for `cfg.duration`.
pub fn run(topo: &Topology, inputs: &[SpikeTrain], cfg: &SimConfig) -> Result<NetworkRun> {
    Simulator::new(topo, cfg)?.run(topo, inputs)
}
