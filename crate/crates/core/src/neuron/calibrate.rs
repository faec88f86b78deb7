//! Parameter search for a neuron that needs exactly N consecutive input
//! spikes to fire.
//!
//! Candidates are drawn log-uniformly from the search ranges by a seeded
//! generator and checked in draw order (the unmodified base parameters go
//! first); the first candidate meeting every goal is returned.

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::opto::OptoNeuronParams;
use super::simulate::{simulate_neuron, StimulusConfig};
use crate::codec::{build_group_pattern, GroupPattern, SpikeTrain};
use crate::{rng, Error, Result};

/// Which parameter a search range applies to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ParamKey {
    R1,
    C1,
    R2,
    C2,
    K1,
    K2,
    K3,
    Vth1,
    Vth2,
    Vth3,
}

impl ParamKey {
    fn slot(self, p: &mut OptoNeuronParams) -> &mut f64 {
        match self {
            ParamKey::R1 => &mut p.r1,
            ParamKey::C1 => &mut p.c1,
            ParamKey::R2 => &mut p.r2,
            ParamKey::C2 => &mut p.c2,
            ParamKey::K1 => &mut p.k1,
            ParamKey::K2 => &mut p.k2,
            ParamKey::K3 => &mut p.k3,
            ParamKey::Vth1 => &mut p.vth1,
            ParamKey::Vth2 => &mut p.vth2,
            ParamKey::Vth3 => &mut p.vth3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParamRange {
    pub key: ParamKey,
    pub min: f64,
    pub max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchSpace {
    /// Values for every parameter not covered by a range.
    pub base: OptoNeuronParams,
    pub ranges: Vec<ParamRange>,
}

impl SearchSpace {
    pub fn validate(&self) -> Result<()> {
        self.base.validate()?;
        for r in &self.ranges {
            if !(r.min > 0.0 && r.max > r.min && r.max.is_finite()) {
                return Err(Error::InvalidParams(format!(
                    "degenerate search range for {:?}",
                    r.key
                )));
            }
        }
        Ok(())
    }

    fn sample(&self, rng: &mut rng::Rng) -> OptoNeuronParams {
        let mut p = self.base;
        for r in &self.ranges {
            let x: f64 = rng.random();
            *r.key.slot(&mut p) = (r.min.ln() + x * (r.max.ln() - r.min.ln())).exp();
        }
        p
    }
}

/// Expected output for a grouped pattern: exact per-group counts and/or
/// bounds on the total.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupTarget {
    pub pattern: GroupPattern,
    #[serde(default)]
    pub counts: Option<Vec<usize>>,
    #[serde(default)]
    pub min_total: Option<usize>,
    #[serde(default)]
    pub max_total: Option<usize>,
}

/// Require clustered (bursting) output under a long regular input train.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BurstTarget {
    /// Length of the sustained input train.
    pub input_spikes: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationGoal {
    /// Consecutive input spikes needed for the first output spike.
    pub spikes_to_fire: usize,
    #[serde(rename = "input_rate_hz")]
    pub input_rate: f64,
    /// Grid and pulse shape used for every trial; its duration is ignored.
    pub stimulus: StimulusConfig,
    #[serde(default)]
    pub group_target: Option<GroupTarget>,
    #[serde(default)]
    pub burst_target: Option<BurstTarget>,
    /// Longest admissible VCSEL-on interval per output spike.
    #[serde(rename = "max_output_width_s", default)]
    pub max_output_width: Option<f64>,
    /// Level the membrane must fall below within two input periods of each
    /// output spike.
    #[serde(rename = "reset_level_volts", default)]
    pub reset_level: Option<f64>,
    /// Relative pulse-amplitude perturbation every check must survive.
    #[serde(default)]
    pub amplitude_tolerance: f64,
}

/// Outcome of checking one candidate.
#[derive(Debug, Clone, PartialEq)]
pub struct Assessment {
    /// 0 when every goal is met.
    pub score: f64,
    pub fires_on_n: bool,
    pub fires_on_n_minus_1: bool,
    pub group_counts: Option<Vec<usize>>,
}

impl Assessment {
    pub fn feasible(&self) -> bool {
        self.score == 0.0
    }
}

/// Output spike times for `n` consecutive input spikes from rest.
pub fn burst_response(
    p: &OptoNeuronParams,
    n: usize,
    rate: f64,
    stim: &StimulusConfig,
) -> Result<Vec<f64>> {
    let period = 1.0 / rate;
    let times: Vec<f64> = (0..n).map(|i| i as f64 * period).collect();
    let settle = 10.0 * period + 3.0 * p.tau_membrane().max(p.tau_refractory());
    let cfg = StimulusConfig {
        duration: n as f64 * period + settle,
        ..*stim
    };
    let trace = simulate_neuron(&SpikeTrain::new(0, times)?, &SpikeTrain::empty(1), p, &cfg)?;
    Ok(trace.output_spikes)
}

/// Output spike times under `n` regularly spaced input spikes.
pub fn sustained_response(
    p: &OptoNeuronParams,
    n: usize,
    rate: f64,
    stim: &StimulusConfig,
) -> Result<Vec<f64>> {
    let period = 1.0 / rate;
    let times: Vec<f64> = (0..n).map(|i| i as f64 * period).collect();
    let cfg = StimulusConfig {
        duration: (n + 1) as f64 * period,
        ..*stim
    };
    let trace = simulate_neuron(&SpikeTrain::new(0, times)?, &SpikeTrain::empty(1), p, &cfg)?;
    Ok(trace.output_spikes)
}

/// Split spike times into clusters at intervals longer than twice the
/// shortest interval.
pub fn clusters(spikes: &[f64]) -> Vec<Vec<f64>> {
    if spikes.len() < 2 {
        return vec![spikes.to_vec()]
            .into_iter()
            .filter(|c| !c.is_empty())
            .collect();
    }
    let min_isi = spikes
        .windows(2)
        .map(|w| w[1] - w[0])
        .fold(f64::INFINITY, f64::min);
    let mut out = vec![vec![spikes[0]]];
    for w in spikes.windows(2) {
        if w[1] - w[0] > 2.0 * min_isi {
            out.push(Vec::new());
        }
        out.last_mut().unwrap().push(w[1]);
    }
    out
}

/// At least two clusters, every cluster holds two or more spikes, and every
/// gap between clusters is at least three times the longest intra-cluster
/// interval.
pub fn is_bursting(spikes: &[f64]) -> bool {
    let cl = clusters(spikes);
    if cl.len() < 2 || cl.iter().any(|c| c.len() < 2) {
        return false;
    }
    let intra = cl
        .iter()
        .flat_map(|c| c.windows(2).map(|w| w[1] - w[0]))
        .fold(0.0, f64::max);
    cl.windows(2)
        .all(|pair| pair[1][0] - pair[0].last().unwrap() >= 3.0 * intra)
}

/// Output counts per group for a grouped excitatory pattern.
pub fn group_response(
    p: &OptoNeuronParams,
    pattern: &GroupPattern,
    stim: &StimulusConfig,
) -> Result<Vec<usize>> {
    let exc = build_group_pattern(pattern)?;
    let end = pattern.end_time() + pattern.guard_time;
    let cfg = StimulusConfig {
        duration: end,
        ..*stim
    };
    let trace = simulate_neuron(&exc, &SpikeTrain::empty(1), p, &cfg)?;
    Ok(trace.counts_in_windows(&pattern.group_windows(end)))
}

pub fn assess(p: &OptoNeuronParams, goal: &CalibrationGoal) -> Result<Assessment> {
    let tol = goal.amplitude_tolerance;
    let mut total = Assessment {
        score: 0.0,
        fires_on_n: true,
        fires_on_n_minus_1: false,
        group_counts: None,
    };
    let scales: &[f64] = if tol > 0.0 {
        &[1.0, 1.0 - tol, 1.0 + tol]
    } else {
        &[1.0]
    };
    for (i, &scale) in scales.iter().enumerate() {
        let stim = StimulusConfig {
            pulse_amplitude: goal.stimulus.pulse_amplitude * scale,
            ..goal.stimulus
        };
        let a = assess_at(p, goal, &stim)?;
        total.score += a.score;
        total.fires_on_n &= a.fires_on_n;
        total.fires_on_n_minus_1 |= a.fires_on_n_minus_1;
        if i == 0 {
            total.group_counts = a.group_counts;
        }
        if total.score > 0.0 {
            break;
        }
    }
    Ok(total)
}

fn assess_at(
    p: &OptoNeuronParams,
    goal: &CalibrationGoal,
    stim: &StimulusConfig,
) -> Result<Assessment> {
    let n = goal.spikes_to_fire;
    let period = 1.0 / goal.input_rate;
    let out_n = burst_response(p, n, goal.input_rate, stim)?;
    // the first output must come from the n-th input, not an earlier one
    let fires_on_n = !out_n.is_empty() && out_n[0] >= (n - 1) as f64 * period;
    let fires_on_n_minus_1 = if n > 1 {
        !burst_response(p, n - 1, goal.input_rate, stim)?.is_empty()
    } else {
        false
    };
    let mut score = (!fires_on_n) as u8 as f64 + fires_on_n_minus_1 as u8 as f64;
    let group_counts = match &goal.group_target {
        Some(t) => {
            let exc = build_group_pattern(&t.pattern)?;
            let end = t.pattern.end_time() + t.pattern.guard_time;
            let cfg = StimulusConfig {
                duration: end,
                ..*stim
            };
            let trace = simulate_neuron(&exc, &SpikeTrain::empty(1), p, &cfg)?;
            let counts = trace.counts_in_windows(&t.pattern.group_windows(end));
            if let Some(want) = &t.counts {
                score += counts
                    .iter()
                    .zip(want)
                    .map(|(&a, &b)| (a as f64 - b as f64).abs())
                    .sum::<f64>();
            }
            let total: usize = counts.iter().sum();
            if t.min_total.is_some_and(|m| total < m) || t.max_total.is_some_and(|m| total > m) {
                score += 1.0;
            }
            if let Some(w) = goal.max_output_width {
                let widest = trace
                    .output_widths(cfg.detection_for(p))
                    .into_iter()
                    .fold(0.0, f64::max);
                if widest > w {
                    score += 1.0;
                }
            }
            if let Some(level) = goal.reset_level {
                let window = (2.0 * period / trace.dt).round() as usize;
                let resets = trace.output_spikes.iter().all(|&t| {
                    let k = (t / trace.dt).round() as usize;
                    trace.v_series[k.min(trace.len())..(k + window).min(trace.len())]
                        .iter()
                        .any(|&v| v < level)
                });
                if !resets {
                    score += 1.0;
                }
            }
            Some(counts)
        }
        None => None,
    };
    if let Some(b) = &goal.burst_target {
        let out = sustained_response(p, b.input_spikes, goal.input_rate, stim)?;
        if !is_bursting(&out) {
            score += 1.0;
        }
    }
    Ok(Assessment {
        score,
        fires_on_n,
        fires_on_n_minus_1,
        group_counts,
    })
}

/// Search result: the parameters and the number of candidates examined.
#[derive(Debug, Clone, PartialEq)]
pub struct Calibrated {
    pub params: OptoNeuronParams,
    pub evaluated: usize,
    pub assessment: Assessment,
}

/// Find parameters whose first output spike needs exactly
/// `goal.spikes_to_fire` consecutive inputs.
pub fn calibrate_three_spike_threshold(
    goal: &CalibrationGoal,
    space: &SearchSpace,
    budget: usize,
    seed: u64,
) -> Result<Calibrated> {
    if goal.spikes_to_fire == 0 || !(goal.input_rate > 0.0) {
        return Err(Error::InvalidParams(
            "calibration needs spikes_to_fire >= 1 and a positive rate".into(),
        ));
    }
    space.validate()?;
    let mut rng = rng::seeded(seed);
    let mut best: Option<(f64, OptoNeuronParams)> = None;
    for i in 0..budget {
        let cand = if i == 0 {
            space.base
        } else {
            space.sample(&mut rng)
        };
        if cand.validate().is_err() || goal.stimulus.dt > cand.max_dt() {
            continue;
        }
        let a = assess(&cand, goal)?;
        if a.feasible() {
            return Ok(Calibrated {
                params: cand,
                evaluated: i + 1,
                assessment: a,
            });
        }
        if best.is_none_or(|(s, _)| a.score < s) {
            best = Some((a.score, cand));
        }
    }
    let (best_score, best) = best.unwrap_or((f64::INFINITY, space.base));
    Err(Error::CalibrationFailed {
        evaluated: budget,
        best_score,
        best: format!("{best:?}"),
    })
}
