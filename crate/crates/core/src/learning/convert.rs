//! Rate-based ANN-to-SNN conversion.
//!
//! Activations are normalized per layer by their maximum over a calibration
//! batch, so every normalized activation lies in `[0, 1]` and maps to a
//! firing rate `a * rate_max`. The neuron's measured rate curve supplies the
//! current-to-rate gain: each neuron sits on a constant bias at the foot of
//! its linear regime, and weights are scaled so that mean pulse current
//! reproduces the normalized ANN pre-activation. ANN biases become constant
//! signed drive on top of that bias.

use serde::{Deserialize, Serialize};

use super::ann::{batch_matrix, max_activations, AnnModel};
use super::Dataset;
use crate::codec::{argmax_count, poisson_encode, EncodingConfig};
use crate::matrix::Matrix;
use crate::network::{build_feedforward, SimConfig, Simulator, Topology};
use crate::neuron::opto::{self, check_dt};
use crate::neuron::{preset, DriveInput, Integrator, OptoNeuronParams, OptoNeuronState};
use crate::{rng, Error, Result};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NormalizationMode {
    /// Divide by the largest activation seen on the calibration batch.
    #[default]
    MaxActivation,
    /// Use the trained weights unscaled.
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ConversionConfig {
    pub normalization: NormalizationMode,
    pub calibration_samples: usize,
    /// Calibration images simulated per balancing round (0 disables balancing).
    pub balance_samples: usize,
    pub balance_rounds: usize,
    #[serde(rename = "duration_s")]
    pub duration: f64,
    #[serde(rename = "dt_s")]
    pub dt: f64,
    /// Input rate of a saturated pixel.
    #[serde(rename = "input_max_rate_hz")]
    pub input_max_rate: f64,
    /// Firing rate that represents a normalized activation of 1.
    #[serde(rename = "rate_max_hz")]
    pub rate_max: f64,
    #[serde(rename = "pulse_amplitude_amps")]
    pub pulse_amplitude: f64,
    #[serde(rename = "pulse_width_s")]
    pub pulse_width: f64,
    pub seed: u64,
}

impl Default for ConversionConfig {
    fn default() -> Self {
        Self {
            normalization: NormalizationMode::MaxActivation,
            calibration_samples: 1000,
            balance_samples: 20,
            balance_rounds: 2,
            duration: 1.0,
            dt: 1e-4,
            input_max_rate: 1500.0,
            rate_max: 100.0,
            pulse_amplitude: 1e-5,
            pulse_width: 5e-3,
            seed: 1,
        }
    }
}

impl ConversionConfig {
    pub fn validate(&self) -> Result<()> {
        let pos = [
            self.duration,
            self.dt,
            self.input_max_rate,
            self.rate_max,
            self.pulse_amplitude,
            self.pulse_width,
        ];
        if pos.iter().any(|x| !(*x > 0.0)) {
            return Err(Error::InvalidParams(
                "conversion durations, rates and pulse settings must be > 0".into(),
            ));
        }
        if self.calibration_samples == 0 {
            return Err(Error::InvalidParams(
                "calibration batch must be non-empty".into(),
            ));
        }
        Ok(())
    }

    pub fn sim_config(&self) -> SimConfig {
        SimConfig {
            dt: self.dt,
            duration: self.duration,
            seed: self.seed,
            pulse_amplitude: self.pulse_amplitude,
            pulse_width: self.pulse_width,
            detection_current: None,
            integrator: Integrator::Euler,
            record: Default::default(),
        }
    }

    pub fn encoding(&self, sample: u64) -> EncodingConfig {
        EncodingConfig {
            max_rate: self.input_max_rate,
            duration: self.duration,
            seed: rng::derive_seed(self.seed, sample),
            intensity_scale: 1.0,
        }
    }
}

/// Tonic-firing variant of the regular preset used for rate coding.
///
/// The calibrated presets detect coincidences of a few strong pulses and
/// stay silent under the near-constant drive produced by many weak ones.
/// Weakening the membrane leak, moving the refractory onset above the
/// detection level and making the refractory variable fast and strong turns
/// the neuron into a relaxation oscillator whose rate grows with current.
pub fn rate_coding_neuron() -> Result<OptoNeuronParams> {
    let mut p = preset("regular")?;
    p.r1 *= 10.0;
    p.vth3 = 1.2;
    p.k3 *= 1000.0;
    p.k1 *= 10.0;
    p.c2 *= 0.1;
    p.validate()?;
    Ok(p)
}

/// Steady firing rate (Hz) under each constant drive current, counted over
/// `window` after a settling period of equal length.
pub fn rate_curve(
    p: &OptoNeuronParams,
    currents: &[f64],
    dt: f64,
    window: f64,
) -> Result<Vec<f64>> {
    check_dt(dt, p)?;
    let settle = (window / dt).round() as usize;
    let detect = p.default_detection_current();
    Ok(currents
        .iter()
        .map(|&i| {
            let drive = if i >= 0.0 {
                DriveInput::excitatory(i)
            } else {
                DriveInput::new(0.0, -i)
            };
            let mut s = OptoNeuronState::REST;
            let mut prev = 0.0;
            let mut n = 0usize;
            for k in 0..2 * settle {
                s = opto::advance(s, drive, dt, p, Integrator::Euler);
                let cur = opto::vcsel_current(s.v, p);
                if k >= settle && prev < detect && cur >= detect {
                    n += 1;
                }
                prev = cur;
            }
            n as f64 / window
        })
        .collect())
}

/// Linear fit `rate = gain * (I - offset)` of the rate curve between the
/// rheobase and the current giving `rate_max`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateFit {
    #[serde(rename = "offset_amps")]
    pub offset: f64,
    #[serde(rename = "gain_hz_per_amp")]
    pub gain: f64,
    #[serde(rename = "rheobase_amps")]
    pub rheobase: f64,
}

pub fn fit_rate_curve(p: &OptoNeuronParams, rate_max: f64, dt: f64) -> Result<RateFit> {
    const WINDOW: f64 = 1.0;
    let rate = |i: f64| -> Result<f64> { Ok(rate_curve(p, &[i], dt, WINDOW)?[0]) };
    let ceiling = 1e3 * p.vd / p.r1.min(p.r2);
    let mut hi = p.vd / p.r1;
    while rate(hi)? < rate_max {
        hi *= 2.0;
        if hi > ceiling {
            return Err(Error::InvalidParams(format!(
                "neuron cannot reach {rate_max} Hz under constant drive"
            )));
        }
    }
    let bisect = |target: f64, mut lo: f64, mut hi: f64| -> Result<f64> {
        for _ in 0..30 {
            let mid = 0.5 * (lo + hi);
            if rate(mid)? >= target {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        Ok(hi)
    };
    let top = bisect(rate_max, 0.0, hi)?;
    let rheobase = bisect(1.0 / WINDOW, 0.0, top)?;
    let currents: Vec<f64> = (0..=16)
        .map(|k| rheobase + (top - rheobase) * k as f64 / 16.0)
        .collect();
    let rates = rate_curve(p, &currents, dt, WINDOW)?;
    let n = currents.len() as f64;
    let mx = currents.iter().sum::<f64>() / n;
    let my = rates.iter().sum::<f64>() / n;
    let sxy: f64 = currents
        .iter()
        .zip(&rates)
        .map(|(x, y)| (x - mx) * (y - my))
        .sum();
    let sxx: f64 = currents.iter().map(|x| (x - mx) * (x - mx)).sum();
    let gain = sxy / sxx;
    if !(gain > 0.0) {
        return Err(Error::InvalidParams(
            "rate curve has no increasing regime".into(),
        ));
    }
    Ok(RateFit {
        offset: mx - my / gain,
        gain,
        rheobase,
    })
}

#[derive(Debug, Clone)]
pub struct Converted {
    pub topology: Topology,
    pub config: ConversionConfig,
    /// Per-layer normalization factors.
    pub scales: Vec<f64>,
    pub fit: RateFit,
}

impl Converted {
    /// Classify one image by output spike counts, lowest index on ties.
    pub fn classify(&self, image: &[f64], sample: u64) -> Result<(usize, Vec<u32>)> {
        let mut sim = Simulator::new(&self.topology, &self.config.sim_config())?;
        self.classify_with(&mut sim, image, sample)
    }

    /// As [`Converted::classify`] reusing a simulator built for this topology.
    pub fn classify_with(
        &self,
        sim: &mut Simulator,
        image: &[f64],
        sample: u64,
    ) -> Result<(usize, Vec<u32>)> {
        sim.reset();
        let trains = poisson_encode(image, &self.config.encoding(sample))?;
        let run = sim.run(&self.topology, &trains)?;
        let counts = run.output_counts().to_vec();
        Ok((argmax_count(&counts), counts))
    }
}

/// Map a trained rectifier network onto optoelectronic neurons.
pub fn convert_ann_to_snn(
    model: &AnnModel,
    calibration: &Dataset,
    neuron: &OptoNeuronParams,
    cc: &ConversionConfig,
) -> Result<Converted> {
    cc.validate()?;
    neuron.validate()?;
    check_dt(cc.dt, neuron)?;
    if model.sizes[0] != calibration.dim() {
        return Err(Error::ShapeMismatch(format!(
            "model input {} does not match data dimension {}",
            model.sizes[0],
            calibration.dim()
        )));
    }
    let scales = match cc.normalization {
        NormalizationMode::MaxActivation => {
            if calibration.is_empty() {
                return Err(Error::EmptyDataset);
            }
            let maxima = max_activations(model, calibration, cc.calibration_samples);
            for (l, &m) in maxima.iter().enumerate() {
                if !(m > 0.0) {
                    return Err(Error::Normalization { layer: l + 1 });
                }
            }
            maxima
        }
        NormalizationMode::None => vec![1.0; model.n_layers()],
    };
    let fit = fit_rate_curve(neuron, cc.rate_max, cc.dt)?;
    // Mean current of a unit-weight pulse train per Hz.
    let charge = cc.pulse_amplitude * cc.pulse_width;
    let mut weights = Vec::new();
    let mut biases = Vec::new();
    for l in 0..model.n_layers() {
        let lam_prev = if l == 0 { 1.0 } else { scales[l - 1] };
        let lam = scales[l];
        let rate_prev = if l == 0 {
            cc.input_max_rate
        } else {
            cc.rate_max
        };
        let k = cc.rate_max / (fit.gain * charge * rate_prev) * lam_prev / lam;
        let w = &model.weights[l];
        weights.push(Matrix::from_fn(w.nrows(), w.ncols(), |r, c| w[[r, c]] * k));
        biases.push(
            model.biases[l]
                .iter()
                .map(|&b| fit.offset + b / lam * cc.rate_max / fit.gain)
                .collect::<Vec<f64>>(),
        );
    }
    let mut topology = build_feedforward(&model.sizes, &weights, neuron)?;
    for (l, b) in biases.into_iter().enumerate() {
        topology.layers[l + 1].bias = Some(b);
    }
    topology.validate()?;
    let mut converted = Converted {
        topology,
        config: *cc,
        scales,
        fit,
    };
    if cc.balance_samples > 0 && !calibration.is_empty() {
        balance(&mut converted, model, calibration)?;
    }
    Ok(converted)
}

/// Layer by layer, fit `observed = alpha * expected + beta` between simulated
/// spike counts and the counts implied by the normalized ANN activations,
/// then rescale the layer's weights and shift its bias to undo the fit.
fn balance(c: &mut Converted, model: &AnnModel, calibration: &Dataset) -> Result<()> {
    let cc = c.config;
    let n = cc.balance_samples.min(calibration.len());
    let idx: Vec<usize> = (0..n).collect();
    let zs = model.forward(batch_matrix(calibration, &idx).view());
    for l in 1..c.topology.layers.len() {
        for _ in 0..cc.balance_rounds {
            let mut sim = Simulator::new(&c.topology, &cc.sim_config())?;
            let (mut sx, mut sy, mut sxx, mut sxy, mut m) = (0.0, 0.0, 0.0, 0.0, 0.0);
            for (row, &i) in idx.iter().enumerate() {
                sim.reset();
                let trains =
                    poisson_encode(&calibration.image(i), &cc.encoding(u64::MAX - i as u64))?;
                let run = sim.run(&c.topology, &trains)?;
                for (j, &got) in run.counts[l].iter().enumerate() {
                    let expected =
                        zs[l - 1][[row, j]].max(0.0) / c.scales[l - 1] * cc.rate_max * cc.duration;
                    if expected > 0.0 {
                        let got = got as f64;
                        sx += expected;
                        sy += got;
                        sxx += expected * expected;
                        sxy += expected * got;
                        m += 1.0;
                    }
                }
            }
            let var = sxx - sx * sx / m;
            if m < 2.0 || !(var > 0.0) {
                break;
            }
            let alpha = (sxy - sx * sy / m) / var;
            let beta = (sy - alpha * sx) / m;
            if !(alpha > 0.0) || !alpha.is_finite() {
                return Err(Error::Normalization { layer: l });
            }
            // beta is in counts per presentation; convert to current.
            let shift = beta / cc.duration / c.fit.gain;
            let conn = &mut c.topology.connections[l - 1];
            conn.w_exc = conn.w_exc.map(|w| w / alpha);
            conn.w_inh = conn.w_inh.map(|w| w / alpha);
            let off = c.fit.offset;
            if let Some(b) = c.topology.layers[l].bias.as_mut() {
                for v in b.iter_mut() {
                    *v = off + (*v - off) / alpha - shift / alpha;
                }
            }
        }
    }
    Ok(())
}
