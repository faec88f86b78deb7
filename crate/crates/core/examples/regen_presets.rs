//! Re-run the calibration recipe of every preset and rewrite the fixtures.
//!
//! `cargo run --release -p oesnn-core --example regen_presets [name...]`

use oesnn_core::codec::GroupPattern;
use oesnn_core::neuron::calibrate::*;
use oesnn_core::neuron::presets::{CalibrationRecipe, Preset};
use oesnn_core::neuron::{Integrator, OptoNeuronParams, PresetName, StimulusConfig};

fn recipe(name: PresetName) -> CalibrationRecipe {
    let stimulus = StimulusConfig {
        dt: 1e-5,
        duration: 0.0,
        pulse_amplitude: 1e-4,
        pulse_width: 5e-4,
        detection_current: None,
        integrator: Integrator::Euler,
    };
    let base = OptoNeuronParams {
        r1: 5e4,
        c1: 1e-7,
        r2: 5e4,
        c2: 1e-7,
        k1: 1e-2,
        k2: 5.1e-3,
        k3: 1e-3,
        vth1: 0.5,
        vth2: 0.6,
        vth3: 0.6,
        vd: 2.0,
    };
    let r = |key, min, max| ParamRange { key, min, max };
    let space = SearchSpace {
        base,
        ranges: vec![
            r(ParamKey::R1, 1e4, 1e6),
            r(ParamKey::C1, 3e-8, 3e-7),
            r(ParamKey::R2, 1e3, 1e5),
            r(ParamKey::C2, 1e-8, 1e-6),
            r(ParamKey::K1, 1e-3, 1.0),
            r(ParamKey::K3, 1e-3, 1.0),
            r(ParamKey::Vth1, 0.2, 0.8),
            r(ParamKey::Vth3, 0.2, 0.8),
        ],
    };
    let target = GroupTarget {
        pattern: GroupPattern::standard(),
        counts: None,
        min_total: None,
        max_total: None,
    };
    let mut goal = CalibrationGoal {
        spikes_to_fire: 3,
        input_rate: 1e3,
        stimulus,
        group_target: Some(target),
        burst_target: None,
        max_output_width: Some(1e-3),
        reset_level: Some(0.1),
        amplitude_tolerance: 0.1,
    };
    let gt = goal.group_target.as_mut().unwrap();
    let seed = match name {
        PresetName::Regular => {
            gt.counts = Some(vec![3, 1, 1, 0]);
            2
        }
        PresetName::Fast => {
            goal.spikes_to_fire = 2;
            gt.min_total = Some(6);
            2
        }
        PresetName::Low => {
            goal.spikes_to_fire = 4;
            gt.min_total = Some(1);
            gt.max_total = Some(4);
            goal.amplitude_tolerance = 0.05;
            1
        }
        PresetName::Burst => {
            goal.spikes_to_fire = 2;
            goal.burst_target = Some(BurstTarget { input_spikes: 40 });
            goal.max_output_width = None;
            goal.reset_level = None;
            2
        }
    };
    CalibrationRecipe {
        seed,
        budget: 40_000,
        goal,
        space,
    }
}

fn main() {
    let names: Vec<PresetName> = match std::env::args().skip(1).collect::<Vec<_>>() {
        v if v.is_empty() => PresetName::ALL.to_vec(),
        v => v.iter().map(|s| s.parse().unwrap()).collect(),
    };
    for name in names {
        let rec = recipe(name);
        let found = rec.run().expect("calibration");
        let preset = Preset {
            name,
            provenance: format!(
                "calibrate_three_spike_threshold, seed {}, candidate {} of budget {}",
                rec.seed, found.evaluated, rec.budget
            ),
            regime_rate_hz: rec.goal.input_rate,
            pulse_amplitude_amps: rec.goal.stimulus.pulse_amplitude,
            pulse_width_s: rec.goal.stimulus.pulse_width,
            dt_s: rec.goal.stimulus.dt,
            params: found.params,
            calibration: rec,
        };
        let path = format!("{}/presets/{}.toml", env!("CARGO_MANIFEST_DIR"), name);
        std::fs::write(&path, preset.to_toml()).unwrap();
        println!("{name}: {:?} -> {path}", found.assessment);
    }
}
