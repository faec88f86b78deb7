use oesnn_core::codec::{build_group_pattern, GroupPattern, SpikeTrain};
use oesnn_core::neuron::calibrate::{
    burst_response, group_response, is_bursting, sustained_response,
};
use oesnn_core::neuron::opto::{self, advance};
use oesnn_core::neuron::presets::preset_fixture;
use oesnn_core::neuron::{
    calibrate_three_spike_threshold, preset, simulate_neuron, CalibrationGoal, DriveInput,
    Integrator, OptoNeuronState, PresetName, SearchSpace,
};

fn group_counts(name: PresetName, pattern: &GroupPattern) -> Vec<usize> {
    let p = preset_fixture(name).unwrap();
    let params = p.params_for_rate(pattern.intra_group_rate).unwrap();
    let stim = p.stimulus_for(pattern, 0.0);
    group_response(&params, pattern, &stim).unwrap()
}

#[test]
fn regular_preset_counts_three_one_one_zero() {
    assert_eq!(
        group_counts(PresetName::Regular, &GroupPattern::standard()),
        vec![3, 1, 1, 0]
    );
}

#[test]
fn fast_preset_fires_more_than_regular() {
    let pattern = GroupPattern::standard();
    let fast: usize = group_counts(PresetName::Fast, &pattern).iter().sum();
    let regular: usize = group_counts(PresetName::Regular, &pattern).iter().sum();
    assert!(fast > regular, "fast {fast} regular {regular}");
}

#[test]
fn low_preset_fires_less_than_regular() {
    let pattern = GroupPattern::standard();
    let low: usize = group_counts(PresetName::Low, &pattern).iter().sum();
    let regular: usize = group_counts(PresetName::Regular, &pattern).iter().sum();
    assert!(low < regular, "low {low} regular {regular}");
}

#[test]
fn burst_preset_clusters_under_sustained_input() {
    let pattern = GroupPattern::standard();
    let p = preset_fixture(PresetName::Burst).unwrap();
    let params = p.params_for_rate(pattern.intra_group_rate).unwrap();
    let stim = p.stimulus_for(&pattern, 0.0);
    let out = sustained_response(&params, 40, pattern.intra_group_rate, &stim).unwrap();
    assert!(is_bursting(&out), "{out:?}");
    for name in [PresetName::Regular, PresetName::Fast] {
        let p = preset_fixture(name).unwrap();
        let params = p.params_for_rate(pattern.intra_group_rate).unwrap();
        let out = sustained_response(
            &params,
            40,
            pattern.intra_group_rate,
            &p.stimulus_for(&pattern, 0.0),
        )
        .unwrap();
        assert!(!is_bursting(&out), "{name}: {out:?}");
    }
}

#[test]
fn regular_preset_needs_three_spikes() {
    let p = preset_fixture(PresetName::Regular).unwrap();
    let stim = p.stimulus(0.0);
    let rate = p.regime_rate_hz;
    assert!(burst_response(&p.params, 1, rate, &stim)
        .unwrap()
        .is_empty());
    assert!(burst_response(&p.params, 2, rate, &stim)
        .unwrap()
        .is_empty());
    assert!(!burst_response(&p.params, 3, rate, &stim)
        .unwrap()
        .is_empty());
}

#[test]
fn fixtures_reproduce_from_their_recipes() {
    // The stored parameters are the first feasible draw of their own search,
    // so replaying the search from the stored parameters is immediate.
    for name in PresetName::ALL {
        let p = preset_fixture(name).unwrap();
        let mut recipe = p.calibration.clone();
        recipe.space = SearchSpace {
            base: p.params,
            ranges: recipe.space.ranges.clone(),
        };
        let got = recipe.run().unwrap();
        assert_eq!(got.evaluated, 1, "{name}");
        assert_eq!(got.params, p.params, "{name}");
    }
}

#[test]
fn single_spike_calibration_accepts_a_strong_pulse() {
    let p = preset_fixture(PresetName::Regular).unwrap();
    let mut stimulus = p.stimulus(0.0);
    stimulus.pulse_amplitude *= 10.0;
    let goal = CalibrationGoal {
        spikes_to_fire: 1,
        input_rate: p.regime_rate_hz,
        stimulus,
        group_target: None,
        burst_target: None,
        max_output_width: None,
        reset_level: None,
        amplitude_tolerance: 0.0,
    };
    let space = SearchSpace {
        base: p.params,
        ranges: vec![],
    };
    let got = calibrate_three_spike_threshold(&goal, &space, 1, 7).unwrap();
    assert!(got.assessment.fires_on_n);
    assert!(!got.assessment.fires_on_n_minus_1);
}

#[test]
fn calibration_without_feasible_candidates_fails() {
    let p = preset_fixture(PresetName::Regular).unwrap();
    let mut recipe = p.calibration.clone();
    recipe.goal.spikes_to_fire = 50;
    recipe.space.ranges.clear();
    recipe.budget = 3;
    assert!(recipe.run().is_err());
}

#[test]
fn rescaled_neuron_replays_rescaled_input() {
    let pattern = GroupPattern::standard();
    let p = preset_fixture(PresetName::Regular).unwrap();
    let base = p.params_for_rate(pattern.intra_group_rate).unwrap();
    let stim = p.stimulus_for(&pattern, pattern.end_time() + pattern.guard_time);
    let exc = build_group_pattern(&pattern).unwrap();
    let reference = simulate_neuron(&exc, &SpikeTrain::empty(1), &base, &stim).unwrap();
    for k in [0.25, 3.0, 40.0] {
        let q = base.scale_time(k).unwrap();
        let trace = simulate_neuron(
            &exc.dilate(k),
            &SpikeTrain::empty(1),
            &q,
            &stim.scale_time(k),
        )
        .unwrap();
        assert_eq!(
            trace.output_spikes.len(),
            reference.output_spikes.len(),
            "factor {k}"
        );
        for (a, b) in trace.output_spikes.iter().zip(&reference.output_spikes) {
            assert!(
                (a / k - b).abs() <= 1e-9 * b.abs().max(1e-12),
                "factor {k}: {a} vs {b}"
            );
        }
    }
}

#[test]
fn euler_error_halves_with_step() {
    let p = preset("regular").unwrap();
    let drive = DriveInput::excitatory(0.6 * p.vth1 / p.r1);
    let t_end = 0.5 * p.tau_membrane();
    let run = |dt: f64, integ: Integrator| {
        let n = (t_end / dt).round() as usize;
        let mut s = OptoNeuronState::REST;
        for _ in 0..n {
            s = advance(s, drive, dt, &p, integ);
        }
        s.v
    };
    let h = p.max_dt();
    let exact = run(h / 256.0, Integrator::Rk4);
    let e1 = (run(h, Integrator::Euler) - exact).abs();
    let e2 = (run(h / 2.0, Integrator::Euler) - exact).abs();
    let ratio = e1 / e2;
    assert!((1.5..=2.5).contains(&ratio), "ratio {ratio}");
}

#[test]
fn step_validates_inputs() {
    let p = preset("regular").unwrap();
    let bad = OptoNeuronState {
        v: f64::NAN,
        u: 0.0,
    };
    assert!(opto::step(bad, DriveInput::default(), p.max_dt(), &p).is_err());
    assert!(opto::step(OptoNeuronState::REST, DriveInput::default(), 0.0, &p).is_err());
}
