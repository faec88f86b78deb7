//! Unsupervised learning in the winner-take-all network with a
//! postsynaptic trace rule, adaptive thresholds and divisive normalization.

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::convert::rate_coding_neuron;
use super::Dataset;
use crate::codec::{poisson_encode, rate_decode, EncodingConfig};
use crate::matrix::Matrix;
use crate::network::{build_wta, SimConfig, Simulator, Topology};
use crate::neuron::{Integrator, OptoNeuronParams};
use crate::{rng, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StdpConfig {
    pub eta_post: f64,
    pub x_tar: f64,
    #[serde(rename = "tau_trace_s")]
    pub tau_trace: f64,
    pub w_max: f64,
    /// Threshold increment per output spike (V).
    #[serde(rename = "theta_plus_volts")]
    pub theta_plus: f64,
    /// Decay time constant, counted in presentation time.
    #[serde(rename = "tau_theta_s")]
    pub tau_theta: f64,
    /// Ceiling on the threshold offset (V).
    #[serde(rename = "theta_max_volts")]
    pub theta_max: f64,
    /// Incoming weight sum of every excitatory neuron after normalization.
    pub norm_target: f64,
    /// Upper bound of the uniform initial weights.
    pub init_max: f64,
    #[serde(rename = "presentation_s")]
    pub presentation: f64,
    #[serde(rename = "dt_s")]
    pub dt: f64,
    #[serde(rename = "input_max_rate_hz")]
    pub input_max_rate: f64,
    #[serde(rename = "pulse_amplitude_amps")]
    pub pulse_amplitude: f64,
    #[serde(rename = "pulse_width_s")]
    pub pulse_width: f64,
    pub exc_to_inh: f64,
    pub inh_strength: f64,
    /// Presentations with fewer excitatory spikes are repeated at higher intensity.
    pub min_spikes: u32,
    pub max_retries: u32,
    /// Intensity added per repeat, as a fraction of the base rate.
    pub retry_boost: f64,
    /// Training images used for the label assignment pass.
    pub label_samples: usize,
    pub seed: u64,
}

impl Default for StdpConfig {
    fn default() -> Self {
        Self {
            eta_post: 0.01,
            x_tar: 0.4,
            tau_trace: 0.02,
            w_max: 1.0,
            theta_plus: 0.02,
            tau_theta: 200.0,
            theta_max: 20.0,
            norm_target: 78.0,
            init_max: 0.3,
            presentation: 0.35,
            dt: 5e-5,
            input_max_rate: 63.75,
            pulse_amplitude: 5e-6,
            pulse_width: 5e-4,
            exc_to_inh: 20.0,
            inh_strength: 50.0,
            min_spikes: 5,
            max_retries: 4,
            retry_boost: 0.5,
            label_samples: 5000,
            seed: 1,
        }
    }
}

impl StdpConfig {
    pub fn validate(&self, n_input: usize) -> Result<()> {
        let pos = [
            self.tau_trace,
            self.w_max,
            self.tau_theta,
            self.norm_target,
            self.presentation,
            self.dt,
            self.input_max_rate,
            self.pulse_amplitude,
            self.pulse_width,
        ];
        if pos.iter().any(|x| !(*x > 0.0)) {
            return Err(Error::InvalidParams(
                "STDP time constants, rates and w_max must be > 0".into(),
            ));
        }
        if self.eta_post < 0.0 || self.x_tar < 0.0 || self.theta_plus < 0.0 || self.theta_max < 0.0
        {
            return Err(Error::InvalidParams(
                "eta, x_tar and theta settings must be >= 0".into(),
            ));
        }
        if self.norm_target > n_input as f64 * self.w_max {
            return Err(Error::InvalidParams(format!(
                "norm target {} unreachable with {n_input} inputs capped at {}",
                self.norm_target, self.w_max
            )));
        }
        Ok(())
    }

    pub fn sim_config(&self) -> SimConfig {
        SimConfig {
            dt: self.dt,
            duration: self.presentation,
            seed: self.seed,
            pulse_amplitude: self.pulse_amplitude,
            pulse_width: self.pulse_width,
            detection_current: None,
            integrator: Integrator::Euler,
            record: Default::default(),
        }
    }
}

/// Weight after one postsynaptic spike.
#[inline]
pub fn stdp_update(w: f64, x_pre: f64, cfg: &StdpConfig) -> f64 {
    (w + cfg.eta_post * (x_pre - cfg.x_tar)).clamp(0.0, cfg.w_max)
}

/// Scale `row` so it sums to `target`, capping entries at `w_max` and
/// redistributing the excess over the uncapped ones.
pub fn normalize_row(row: &mut [f64], target: f64, w_max: f64) {
    let mut capped = vec![false; row.len()];
    for _ in 0..=row.len() {
        let fixed: f64 = capped.iter().filter(|&&c| c).count() as f64 * w_max;
        let free: f64 = row
            .iter()
            .zip(&capped)
            .filter(|(_, &c)| !c)
            .map(|(w, _)| w)
            .sum();
        if !(free > 0.0) {
            return;
        }
        let scale = (target - fixed) / free;
        let mut newly = false;
        for (w, c) in row.iter_mut().zip(capped.iter_mut()) {
            if *c {
                continue;
            }
            *w *= scale;
            if *w > w_max {
                *w = w_max;
                *c = true;
                newly = true;
            }
        }
        if !newly {
            return;
        }
    }
}

/// Exc-neuron to class map with the responses it was built from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelAssignment {
    pub labels: Vec<usize>,
    /// Mean spike count of each neuron per class, `[neuron][class]`.
    pub mean_response: Vec<Vec<f64>>,
}

impl LabelAssignment {
    pub fn from_responses(
        counts: &[Vec<u32>],
        classes: &[usize],
        n_classes: usize,
    ) -> Result<Self> {
        if counts.is_empty() {
            return Err(Error::EmptyDataset);
        }
        let n = counts[0].len();
        let mut sum = vec![vec![0.0; n_classes]; n];
        let mut per_class = vec![0usize; n_classes];
        for (c, &cls) in counts.iter().zip(classes) {
            per_class[cls] += 1;
            for (j, &k) in c.iter().enumerate() {
                sum[j][cls] += k as f64;
            }
        }
        let mean_response: Vec<Vec<f64>> = sum
            .into_iter()
            .map(|row| {
                row.iter()
                    .zip(&per_class)
                    .map(|(s, &n)| if n > 0 { s / n as f64 } else { 0.0 })
                    .collect()
            })
            .collect();
        let labels = mean_response
            .iter()
            .map(|row| {
                let mut best = 0;
                for (k, &v) in row.iter().enumerate() {
                    if v > row[best] {
                        best = k;
                    }
                }
                best
            })
            .collect();
        Ok(Self {
            labels,
            mean_response,
        })
    }

    pub fn classify(&self, counts: &[u32]) -> Result<usize> {
        rate_decode(counts, &self.labels)
    }
}

#[derive(Debug, Clone)]
pub struct StdpTrained {
    pub topology: Topology,
    pub labels: LabelAssignment,
    pub config: StdpConfig,
    /// Excitatory spikes per training presentation (after repeats).
    pub train_spikes: Vec<u32>,
}

impl StdpTrained {
    pub fn classify(&self, image: &[f64], sample: u64) -> Result<(usize, Vec<u32>)> {
        let mut sim = Simulator::new(&self.topology, &self.config.sim_config())?;
        let counts = present(&mut sim, &self.topology, image, &self.config, sample, None)?;
        Ok((self.labels.classify(&counts)?, counts))
    }

    pub fn simulator(&self) -> Result<Simulator> {
        Simulator::new(&self.topology, &self.config.sim_config())
    }

    pub fn classify_with(
        &self,
        sim: &mut Simulator,
        image: &[f64],
        sample: u64,
    ) -> Result<(usize, Vec<u32>)> {
        let counts = present(sim, &self.topology, image, &self.config, sample, None)?;
        Ok((self.labels.classify(&counts)?, counts))
    }
}

/// Online learning state for one presentation.
struct Learner<'a> {
    cfg: &'a StdpConfig,
    trace: Vec<f64>,
    last: Vec<usize>,
    decay_per_step: f64,
}

impl Learner<'_> {
    fn trace_at(&self, i: usize, step: usize) -> f64 {
        self.trace[i] * self.decay_per_step.powi((step - self.last[i]) as i32)
    }
}

/// Present one image, repeating at higher intensity while the excitatory
/// layer stays below `min_spikes`. Returns the counts of the last attempt.
fn present(
    sim: &mut Simulator,
    topo: &Topology,
    image: &[f64],
    cfg: &StdpConfig,
    sample: u64,
    mut learn: Option<(&mut Topology, &mut Vec<f64>)>,
) -> Result<Vec<u32>> {
    let steps = (cfg.presentation / cfg.dt).round() as usize;
    let n_in = image.len();
    let mut counts = Vec::new();
    for attempt in 0..=cfg.max_retries {
        sim.reset();
        let enc = EncodingConfig {
            max_rate: cfg.input_max_rate,
            duration: cfg.presentation,
            seed: rng::derive_seed(
                cfg.seed,
                sample.wrapping_mul(16).wrapping_add(attempt as u64),
            ),
            intensity_scale: 1.0 + cfg.retry_boost * attempt as f64,
        };
        let trains = poisson_encode(image, &enc)?;
        let current: &Topology = match &learn {
            Some((t, _)) => t,
            None => topo,
        };
        sim.load_inputs(current, &trains, cfg.presentation)?;
        let mut learner = Learner {
            cfg,
            trace: vec![0.0; n_in],
            last: vec![0; n_in],
            decay_per_step: (-cfg.dt / cfg.tau_trace).exp(),
        };
        counts = vec![0u32; current.output_size()];
        for k in 0..steps {
            let spikes = match &learn {
                Some((t, _)) => sim.step(t),
                None => sim.step(topo),
            };
            let pre = spikes.layers[0].clone();
            let post = spikes.layers[1].clone();
            for &j in &post {
                counts[j] += 1;
            }
            if let Some((t, theta)) = learn.as_mut() {
                for &i in &pre {
                    learner.trace[i] = learner.trace_at(i, k) + 1.0;
                    learner.last[i] = k;
                }
                for &j in &post {
                    let row = t.connections[0].w_exc.row_mut(j);
                    for (i, w) in row.iter_mut().enumerate() {
                        *w = stdp_update(*w, learner.trace_at(i, k), learner.cfg);
                    }
                    sim.refresh_post(t, 1, j);
                    theta[j] += cfg.theta_plus;
                }
            }
        }
        if counts.iter().sum::<u32>() >= cfg.min_spikes {
            break;
        }
    }
    Ok(counts)
}

/// Build a WTA network for `data`, train its input weights, then assign
/// labels from a frozen pass over the first `cfg.label_samples` images.
pub fn train_stdp(
    data: &Dataset,
    n_train: usize,
    n_exc: usize,
    cfg: &StdpConfig,
) -> Result<StdpTrained> {
    train_stdp_with(data, n_train, n_exc, cfg, &rate_coding_neuron()?, |_, _| {})
}

/// As [`train_stdp`] with explicit neuron parameters and a progress callback
/// receiving `(samples done, phase)`.
pub fn train_stdp_with(
    data: &Dataset,
    n_train: usize,
    n_exc: usize,
    cfg: &StdpConfig,
    neuron: &OptoNeuronParams,
    mut progress: impl FnMut(usize, &str),
) -> Result<StdpTrained> {
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let n_in = data.dim();
    cfg.validate(n_in)?;
    let mut init_rng = rng::substream(cfg.seed, 0);
    let mut w = Matrix::from_fn(n_exc, n_in, |_, _| init_rng.random_range(0.0..cfg.init_max));
    for j in 0..n_exc {
        normalize_row(w.row_mut(j), cfg.norm_target, cfg.w_max);
    }
    let mut topo = build_wta(n_in, n_exc, w, neuron, cfg.exc_to_inh, cfg.inh_strength)?;
    let mut theta = vec![0.0; n_exc];
    topo.layers[1].threshold_offset = Some(theta.clone());
    let mut sim = Simulator::new(&topo, &cfg.sim_config())?;
    let theta_decay = (-cfg.presentation / cfg.tau_theta).exp();
    let n_train = n_train.min(data.len());
    let mut train_spikes = Vec::with_capacity(n_train);
    let frozen = topo.clone();
    for s in 0..n_train {
        let counts = present(
            &mut sim,
            &frozen,
            &data.image(s),
            cfg,
            s as u64,
            Some((&mut topo, &mut theta)),
        )?;
        train_spikes.push(counts.iter().sum());
        for (j, th) in theta.iter_mut().enumerate() {
            normalize_row(
                topo.connections[0].w_exc.row_mut(j),
                cfg.norm_target,
                cfg.w_max,
            );
            *th = (*th * theta_decay).min(cfg.theta_max);
        }
        topo.layers[1].threshold_offset = Some(theta.clone());
        sim.refresh_params(&topo)?;
        sim.refresh_weights(&topo);
        progress(s + 1, "train");
    }
    let n_label = cfg.label_samples.min(data.len());
    let mut responses = Vec::with_capacity(n_label);
    let mut classes = Vec::with_capacity(n_label);
    for s in 0..n_label {
        responses.push(present(
            &mut sim,
            &topo,
            &data.image(s),
            cfg,
            (1 << 40) + s as u64,
            None,
        )?);
        classes.push(data.label(s));
        progress(s + 1, "label");
    }
    let labels = LabelAssignment::from_responses(&responses, &classes, data.n_classes().max(1))?;
    Ok(StdpTrained {
        topology: topo,
        labels,
        config: *cfg,
        train_spikes,
    })
}
