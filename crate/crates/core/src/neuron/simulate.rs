//! Driving a single optoelectronic neuron with input spike trains.
//!
//! Each input spike is rendered as a rectangular photocurrent pulse on a
//! fixed time grid; overlapping pulses add. Output spikes are rising-edge
//! crossings of the VCSEL current above a detection level.

use std::io::Write;

use serde::{Deserialize, Serialize};

use super::opto::{self, DriveInput, Integrator, OptoNeuronParams, OptoNeuronState};
use crate::codec::SpikeTrain;
use crate::{Error, Result};

/// Grid and pulse settings for a single-neuron simulation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StimulusConfig {
    #[serde(rename = "dt_s")]
    pub dt: f64,
    #[serde(rename = "duration_s")]
    pub duration: f64,
    /// Photocurrent of one input pulse.
    #[serde(rename = "pulse_amplitude_amps")]
    pub pulse_amplitude: f64,
    #[serde(rename = "pulse_width_s")]
    pub pulse_width: f64,
    /// Output spike detection level; `None` uses 10% of the peak VCSEL current.
    #[serde(
        rename = "detection_current_amps",
        default,
        skip_serializing_if = "Option::is_none"
    )]
    pub detection_current: Option<f64>,
    #[serde(default)]
    pub integrator: Integrator,
}

impl StimulusConfig {
    pub fn steps(&self) -> usize {
        (self.duration / self.dt).round() as usize
    }

    /// Same stimulus with every time quantity multiplied by `factor`.
    pub fn scale_time(&self, factor: f64) -> Self {
        Self {
            dt: self.dt * factor,
            duration: self.duration * factor,
            pulse_width: self.pulse_width * factor,
            ..*self
        }
    }

    pub fn detection_for(&self, p: &OptoNeuronParams) -> f64 {
        self.detection_current
            .unwrap_or_else(|| p.default_detection_current())
    }
}

/// Grid cells `[start, start + len)` covered by a pulse starting at `t`.
#[inline]
pub fn pulse_cells(t: f64, dt: f64, width: f64) -> (usize, usize) {
    let start = (t / dt).round() as usize;
    let len = ((width / dt).round() as usize).max(1);
    (start, len)
}

/// Number of overlapping pulses active in each of `steps` grid cells.
pub fn render_pulse_counts(train: &SpikeTrain, dt: f64, width: f64, steps: usize) -> Vec<u32> {
    let mut diff = vec![0i64; steps + 1];
    for &t in train.times() {
        let (start, len) = pulse_cells(t, dt, width);
        if start >= steps {
            continue;
        }
        diff[start] += 1;
        diff[(start + len).min(steps)] -= 1;
    }
    let mut acc = 0i64;
    diff[..steps]
        .iter()
        .map(|d| {
            acc += d;
            acc as u32
        })
        .collect()
}

/// Full time series of one simulated neuron. Sample `k` is the state after
/// step `k`, at time `(k + 1) dt`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NeuronTrace {
    pub dt: f64,
    pub v_series: Vec<f64>,
    pub u_series: Vec<f64>,
    pub i_vcsel_series: Vec<f64>,
    pub output_spikes: Vec<f64>,
}

impl NeuronTrace {
    pub fn len(&self) -> usize {
        self.v_series.len()
    }

    pub fn is_empty(&self) -> bool {
        self.v_series.is_empty()
    }

    pub fn time(&self, k: usize) -> f64 {
        (k + 1) as f64 * self.dt
    }

    /// Output spikes falling in each half-open window `[start, end)`.
    pub fn counts_in_windows(&self, windows: &[(f64, f64)]) -> Vec<usize> {
        windows
            .iter()
            .map(|&(a, b)| {
                self.output_spikes
                    .iter()
                    .filter(|&&t| t >= a && t < b)
                    .count()
            })
            .collect()
    }

    /// Duration of each interval with the VCSEL current at or above `detect`.
    pub fn output_widths(&self, detect: f64) -> Vec<f64> {
        let mut widths = Vec::new();
        let mut run = 0usize;
        for &i in &self.i_vcsel_series {
            if i >= detect && detect > 0.0 {
                run += 1;
            } else if run > 0 {
                widths.push(run as f64 * self.dt);
                run = 0;
            }
        }
        if run > 0 {
            widths.push(run as f64 * self.dt);
        }
        widths
    }

    /// CSV with header `time_s,v_V,u_V,i_vcsel_A`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "time_s,v_V,u_V,i_vcsel_A")?;
        for k in 0..self.len() {
            writeln!(
                w,
                "{:e},{:e},{:e},{:e}",
                self.time(k),
                self.v_series[k],
                self.u_series[k],
                self.i_vcsel_series[k]
            )?;
        }
        Ok(())
    }
}

/// Simulate one neuron from rest under excitatory and inhibitory spike trains.
pub fn simulate_neuron(
    exc: &SpikeTrain,
    inh: &SpikeTrain,
    p: &OptoNeuronParams,
    cfg: &StimulusConfig,
) -> Result<NeuronTrace> {
    p.validate()?;
    opto::check_dt(cfg.dt, p)?;
    if !(cfg.duration >= cfg.dt) || !(cfg.pulse_width > 0.0) || !(cfg.pulse_amplitude >= 0.0) {
        return Err(Error::InvalidParams(
            "stimulus needs duration >= dt, pulse width > 0, amplitude >= 0".into(),
        ));
    }
    for train in [exc, inh] {
        if train.times().last().is_some_and(|&t| t > cfg.duration) {
            return Err(Error::InvalidParams(format!(
                "spike train {} extends past the simulated duration",
                train.channel_id
            )));
        }
    }
    let steps = cfg.steps();
    let exc_counts = render_pulse_counts(exc, cfg.dt, cfg.pulse_width, steps);
    let inh_counts = render_pulse_counts(inh, cfg.dt, cfg.pulse_width, steps);
    let detect = cfg.detection_for(p);

    let mut trace = NeuronTrace {
        dt: cfg.dt,
        v_series: Vec::with_capacity(steps),
        u_series: Vec::with_capacity(steps),
        i_vcsel_series: Vec::with_capacity(steps),
        output_spikes: Vec::new(),
    };
    let mut s = OptoNeuronState::REST;
    let mut prev_i = 0.0;
    for k in 0..steps {
        let drive = DriveInput {
            i_exc: exc_counts[k] as f64 * cfg.pulse_amplitude,
            i_inh: inh_counts[k] as f64 * cfg.pulse_amplitude,
        };
        s = opto::advance(s, drive, cfg.dt, p, cfg.integrator);
        let i = opto::vcsel_current(s.v, p);
        if prev_i < detect && i >= detect {
            trace.output_spikes.push(trace.time(k));
        }
        prev_i = i;
        trace.v_series.push(s.v);
        trace.u_series.push(s.u);
        trace.i_vcsel_series.push(i);
    }
    Ok(trace)
}
