//! End-to-end acceptance run: one PASS/FAIL line per criterion.
//!
//! Criteria 7 and 8 train on MNIST and need the IDX files (see
//! `scripts/fetch_mnist.sh`); they take several minutes.

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use ndarray::Array2;
use oesnn_core::codec::{
    build_group_pattern, poisson_encode, EncodingConfig, GroupPattern, SpikeTrain,
};
use oesnn_core::learning::{normalize_row, stdp_update, AnnModel, StdpConfig};
use oesnn_core::matrix::Matrix;
use oesnn_core::network::{build_feedforward, build_wta, RecordFlags, SimConfig, Simulator};
use oesnn_core::neuron::izhikevich::{self, IzhikevichParams, IzhikevichState};
use oesnn_core::neuron::opto::{advance, derivatives};
use oesnn_core::neuron::{
    preset, simulate_neuron, DriveInput, Integrator, OptoNeuronState, StimulusConfig,
};
use oesnn_core::rng;
use oesnn_harness::config::{MnistBlock, StdpBlock};
use oesnn_harness::{mnist, run_experiment, Experiment, ExperimentConfig, Manifest};
use rand::Rng;
use serde_json::Value;

type Outcome = Result<String, String>;

fn within(got: f64, want: f64, rel: f64, what: &str) -> Result<(), String> {
    if ((got - want) / want).abs() <= rel {
        Ok(())
    } else {
        Err(format!(
            "{what} = {got:.6e}, expected {want:.6e} within {:.1}%",
            rel * 100.0
        ))
    }
}

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn run(mut cfg: ExperimentConfig, dir: &tempfile::TempDir, name: &str) -> Result<Manifest, String> {
    cfg.output_dir = dir.path().join(name);
    run_experiment(&cfg).map_err(|e| e.to_string())
}

fn timing(m: &Manifest, key: &str) -> f64 {
    m.timings.get(key).copied().unwrap_or(f64::INFINITY)
}

fn f(v: &Value) -> f64 {
    v.as_f64().unwrap_or(f64::NAN)
}

fn fig5(dir: &tempfile::TempDir) -> Outcome {
    let m = run(ExperimentConfig::new(Experiment::Fig5), dir, "fig5")?;
    let counts = &m.summary["group_counts"];
    let secs = timing(&m, "simulation_seconds");
    ensure(*counts == serde_json::json!([3, 1, 1, 0]), || {
        format!("group counts {counts}")
    })?;
    ensure(secs < 1.0, || format!("took {secs:.3} s"))?;
    Ok(format!("group counts {counts} in {:.1} ms", secs * 1e3))
}

fn fig6(dir: &tempfile::TempDir) -> Outcome {
    let m = run(ExperimentConfig::new(Experiment::Fig6), dir, "fig6")?;
    let s = &m.summary;
    let secs = timing(&m, "simulation_seconds");
    ensure(s["absent"] == serde_json::json!([3, 5]), || {
        format!("absent {}", s["absent"])
    })?;
    ensure(s["persisting"] == serde_json::json!([1, 2, 4]), || {
        format!("persisting {}", s["persisting"])
    })?;
    ensure(s["extra"] == serde_json::json!(0), || {
        format!("extra spikes {}", s["extra"])
    })?;
    ensure(secs < 1.0, || format!("took {secs:.3} s"))?;
    Ok(format!(
        "events #3 and #5 absent, #1 #2 #4 persist, in {:.1} ms",
        secs * 1e3
    ))
}

fn energy(dir: &tempfile::TempDir) -> Result<Value, String> {
    Ok(run(
        ExperimentConfig::new(Experiment::EnergyReport),
        dir,
        "energy",
    )?
    .summary)
}

fn foundry(e: &Value) -> Outcome {
    let r = &e["reports"][0];
    within(f(&r["q_threshold"]), 44.27e-15, 0.001, "Q")?;
    within(f(&r["e_dyn_in"]), 21.09e-15, 0.005, "E_dyn_in")?;
    within(f(&r["p_dyn_in"]), 2.11e-3, 0.01, "P_dyn_in")?;
    within(f(&r["e_dyn_out"]), 211e-15, 0.01, "E_dyn_out")?;
    within(f(&r["p_dyn_out"]), 21.1e-3, 0.01, "P_dyn_out")?;
    within(f(&r["p_static_off"]), 6.36e-6, 0.01, "P_static_off")?;
    within(f(&r["p_static_on"]), 858e-6, 0.01, "P_static_on")?;
    within(f(&r["p_avg"]), 737e-6, 0.005, "P_avg")?;
    let note = r["notes"].as_array().and_then(|n| {
        n.iter()
            .find_map(|s| s.as_str().filter(|s| s.contains("714")))
    });
    let note = note.ok_or("no note on the published 714 µW")?;
    Ok(format!(
        "Q {:.2} fC, E_in {:.2} fJ, P_avg {:.1} µW; note: {note}",
        f(&r["q_threshold"]) * 1e15,
        f(&r["e_dyn_in"]) * 1e15,
        f(&r["p_avg"]) * 1e6
    ))
}

fn nano(e: &Value) -> Outcome {
    let r = &e["reports"][1];
    within(f(&r["e_dyn_in"]), 200e-18, 1e-9, "E_dyn_in override")?;
    within(f(&r["p_dyn_in"]), 20e-6, 0.01, "P_dyn_in")?;
    within(f(&r["e_dyn_out"]), 2e-15, 0.01, "E_dyn_out")?;
    within(f(&r["p_dyn_out"]), 200e-6, 0.01, "P_dyn_out")?;
    within(f(&r["p_static_off"]), 14e-9, 0.01, "P_static_off")?;
    within(f(&r["p_static_on"]), 43.78e-6, 0.01, "P_static_on")?;
    within(f(&r["p_avg"]), 8.14e-6, 0.01, "P_avg")?;
    within(
        f(&r["e_dyn_in_computed"]),
        20e-18,
        0.01,
        "computed E_dyn_in",
    )?;
    Ok(format!(
        "P_avg {:.3} µW, computed E_in {:.2} aJ shown beside the 200 aJ override",
        f(&r["p_avg"]) * 1e6,
        f(&r["e_dyn_in_computed"]) * 1e18
    ))
}

fn tasks(e: &Value) -> Outcome {
    let t = &e["tasks"];
    within(
        f(&t[0]["task_power_w"]),
        61.4e-6,
        0.01,
        "foundry task power",
    )?;
    within(
        f(&t[0]["task_energy_j"]),
        31.3e-6,
        0.02,
        "foundry task energy",
    )?;
    within(f(&t[1]["task_power_w"]), 0.7e-6, 0.01, "nano task power")?;
    within(f(&t[1]["task_energy_j"]), 253e-9, 0.02, "nano task energy")?;
    Ok(format!(
        "foundry {:.2} µW / {:.2} µJ over {:.3} s, nano {:.3} µW / {:.1} nJ",
        f(&t[0]["task_power_w"]) * 1e6,
        f(&t[0]["task_energy_j"]) * 1e6,
        f(&t[0]["duration_s"]),
        f(&t[1]["task_power_w"]) * 1e6,
        f(&t[1]["task_energy_j"]) * 1e9
    ))
}

fn efficiency(e: &Value) -> Outcome {
    let r = &e["efficiency_gops_per_w"];
    within(
        f(&r[0]["value"]),
        1e-9 / 21.09e-15,
        0.01,
        "foundry efficiency",
    )?;
    within(f(&r[1]["value"]), 1e-9 / 200e-18, 0.01, "nano efficiency")?;
    Ok(format!(
        "{:.3e} and {:.3e} GOP/s/W",
        f(&r[0]["value"]),
        f(&r[1]["value"])
    ))
}

fn mnist_config(
    e: Experiment,
    dir: PathBuf,
    test: usize,
    train: Option<usize>,
) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::new(e);
    cfg.seed = Some(1);
    cfg.mnist = Some(MnistBlock {
        dir: Some(dir),
        train_samples: train,
        test_samples: Some(test),
    });
    cfg
}

fn conversion(dir: &tempfile::TempDir, data: Option<PathBuf>) -> Outcome {
    let data = data.ok_or("MNIST files not found (run scripts/fetch_mnist.sh)")?;
    let t0 = Instant::now();
    let m = run(
        mnist_config(Experiment::ConvertAnn, data, 1000, None),
        dir,
        "convert",
    )?;
    let s = &m.summary;
    let (full, ann, snn) = (
        f(&s["ann_full_test_accuracy"]),
        f(&s["ann_accuracy"]),
        f(&s["snn_accuracy"]),
    );
    let gap = 100.0 * (ann - snn);
    let msg = format!(
        "ANN {:.2}% on 10k test images; on 1000: ANN {:.1}%, SNN {:.1}%, gap {gap:.1} pp; {:.0} s",
        full * 100.0,
        ann * 100.0,
        snn * 100.0,
        t0.elapsed().as_secs_f64()
    );
    ensure(full >= 0.95 && gap.abs() <= 3.0, || msg.clone())?;
    Ok(msg)
}

fn stdp(dir: &tempfile::TempDir, data: Option<PathBuf>) -> Outcome {
    let data = data.ok_or("MNIST files not found (run scripts/fetch_mnist.sh)")?;
    let t0 = Instant::now();
    let mut cfg = mnist_config(Experiment::TrainStdp, data, 1000, Some(5000));
    cfg.stdp = Some(StdpBlock {
        n_exc: 100,
        ..StdpBlock::default()
    });
    let m = run(cfg, dir, "stdp")?;
    let acc = f(&m.summary["test_accuracy"]);
    let msg = format!(
        "{:.1}% on 1000 test images after 5000 training images; {:.0} s",
        acc * 100.0,
        t0.elapsed().as_secs_f64()
    );
    ensure(acc >= 0.60, || msg.clone())?;
    Ok(msg)
}

fn convergence_ratio() -> Result<f64, String> {
    let p = preset("regular").map_err(|e| e.to_string())?;
    let drive = DriveInput::excitatory(0.6 * p.vth1 / p.r1);
    let t_end = 0.5 * p.tau_membrane();
    let v_at = |dt: f64, integ: Integrator| {
        let mut s = OptoNeuronState::REST;
        for _ in 0..(t_end / dt).round() as usize {
            s = advance(s, drive, dt, &p, integ);
        }
        s.v
    };
    let h = p.max_dt();
    let exact = v_at(h / 256.0, Integrator::Rk4);
    let ratio = (v_at(h, Integrator::Euler) - exact).abs()
        / (v_at(h / 2.0, Integrator::Euler) - exact).abs();
    ensure((1.5..=2.5).contains(&ratio), || {
        format!("convergence ratio {ratio}")
    })?;
    Ok(ratio)
}

fn clipping() -> Result<(), String> {
    let mut r = rng::seeded(3);
    for name in ["regular", "low", "burst", "fast"] {
        let p = preset(name).map_err(|e| e.to_string())?;
        let mut s = OptoNeuronState::REST;
        for _ in 0..250_000 {
            let scale = 100.0 * p.vd / p.r1;
            let drive = DriveInput::new(r.random::<f64>() * scale, r.random::<f64>() * scale);
            s = advance(
                s,
                drive,
                p.max_dt() * r.random::<f64>(),
                &p,
                Integrator::Euler,
            );
            ensure(
                (0.0..=p.vd).contains(&s.v) && (0.0..=p.vd).contains(&s.u),
                || format!("{name}: state {s:?} left the rails"),
            )?;
        }
    }
    Ok(())
}

fn balance_and_rescaling() -> Result<(), String> {
    let p = preset("regular").map_err(|e| e.to_string())?;
    for i in [1e-9, 1e-6, 1e-3] {
        let d = DriveInput::new(i, i);
        ensure(
            derivatives(OptoNeuronState::REST, d, &p) == (0.0, 0.0),
            || format!("balanced drive {i} moves the state"),
        )?;
    }
    let gp = GroupPattern::standard();
    let stim = StimulusConfig {
        dt: 1e-5,
        duration: gp.end_time() + gp.guard_time,
        pulse_amplitude: 1e-4,
        pulse_width: 5e-4,
        detection_current: None,
        integrator: Integrator::Euler,
    };
    let exc = build_group_pattern(&gp).map_err(|e| e.to_string())?;
    let a = simulate_neuron(&exc, &SpikeTrain::empty(1), &p, &stim).map_err(|e| e.to_string())?;
    let q = p.scale_time(7.0).map_err(|e| e.to_string())?;
    let b = simulate_neuron(
        &exc.dilate(7.0),
        &SpikeTrain::empty(1),
        &q,
        &stim.scale_time(7.0),
    )
    .map_err(|e| e.to_string())?;
    ensure(a.v_series.len() == b.v_series.len(), || {
        "rescaled trace length differs".into()
    })?;
    let worst = a
        .v_series
        .iter()
        .zip(&b.v_series)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max);
    ensure(worst <= 1e-9, || {
        format!("rescaled trace differs by {worst} V")
    })?;
    Ok(())
}

fn stdp_bounds() -> Result<(), String> {
    let cfg = StdpConfig::default();
    let mut r = rng::seeded(5);
    for _ in 0..10_000 {
        let w = stdp_update(r.random_range(-0.5..1.5), r.random_range(0.0..5.0), &cfg);
        ensure((0.0..=cfg.w_max).contains(&w), || {
            format!("weight {w} out of bounds")
        })?;
    }
    let mut row: Vec<f64> = (0..784).map(|_| r.random::<f64>().powi(4)).collect();
    normalize_row(&mut row, 78.0, 1.0);
    let sum: f64 = row.iter().sum();
    ensure((sum - 78.0).abs() <= 1e-9 * 78.0, || {
        format!("row sums to {sum}")
    })
}

fn gradient_check() -> Result<f64, String> {
    let mut model = AnnModel::init(&[5, 4, 3], 2).map_err(|e| e.to_string())?;
    let mut r = rng::seeded(9);
    for b in model.biases.iter_mut() {
        b.mapv_inplace(|_| r.random_range(-0.5..0.5));
    }
    let x = Array2::from_shape_fn((6, 5), |_| r.random_range(-1.0..1.0));
    let y = [0, 1, 2, 2, 1, 0];
    let (_, g) = model.loss_and_gradients(x.view(), &y);
    let h = 1e-6;
    let mut worst = 0.0f64;
    for l in 0..model.n_layers() {
        let (rows, cols) = model.weights[l].dim();
        for (i, j) in (0..rows).flat_map(|i| (0..cols).map(move |j| (i, j))) {
            let orig = model.weights[l][[i, j]];
            model.weights[l][[i, j]] = orig + h;
            let up = model.loss(x.view(), &y);
            model.weights[l][[i, j]] = orig - h;
            let down = model.loss(x.view(), &y);
            model.weights[l][[i, j]] = orig;
            let fd = (up - down) / (2.0 * h);
            let an = g.weights[l][[i, j]];
            worst = worst.max((fd - an).abs() / (fd.abs() + an.abs()).max(1e-8));
        }
    }
    ensure(worst < 1e-4, || format!("gradient relative error {worst}"))?;
    Ok(worst)
}

fn reduction_and_replay() -> Result<(), String> {
    let p = preset("regular").map_err(|e| e.to_string())?;
    let gp = GroupPattern::standard();
    let exc = build_group_pattern(&gp).map_err(|e| e.to_string())?;
    let cfg = SimConfig {
        dt: 1e-5,
        duration: gp.end_time() + gp.guard_time,
        seed: 0,
        pulse_amplitude: 1e-4,
        pulse_width: 5e-4,
        detection_current: None,
        integrator: Integrator::Euler,
        record: RecordFlags { traces: true },
    };
    let one = Matrix::from_vec(1, 1, vec![1.0]).map_err(|e| e.to_string())?;
    let topo = build_feedforward(&[1, 1], &[one], &p).map_err(|e| e.to_string())?;
    let net = Simulator::new(&topo, &cfg)
        .and_then(|mut s| s.run(&topo, std::slice::from_ref(&exc)))
        .map_err(|e| e.to_string())?;
    let stim = StimulusConfig {
        dt: cfg.dt,
        duration: cfg.duration,
        pulse_amplitude: cfg.pulse_amplitude,
        pulse_width: cfg.pulse_width,
        detection_current: None,
        integrator: Integrator::Euler,
    };
    let single =
        simulate_neuron(&exc, &SpikeTrain::empty(1), &p, &stim).map_err(|e| e.to_string())?;
    ensure(net.traces[0].v[0] == single.v_series, || {
        "network trace differs from the single neuron".into()
    })?;

    let image: Vec<f64> = (0..16).map(|i| (i % 5) as f64 / 4.0).collect();
    let enc = EncodingConfig {
        max_rate: 200.0,
        duration: 0.2,
        seed: 42,
        intensity_scale: 1.0,
    };
    let w = Matrix::from_fn(4, 16, |r, c| ((r * 16 + c) % 7) as f64 / 7.0);
    let wta = build_wta(16, 4, w, &p, 3.0, 1.0).map_err(|e| e.to_string())?;
    let cfg = SimConfig {
        duration: 0.2,
        record: RecordFlags { traces: false },
        ..cfg
    };
    let replay = || -> Result<_, String> {
        let trains = poisson_encode(&image, &enc).map_err(|e| e.to_string())?;
        let mut sim = Simulator::new(&wta, &cfg).map_err(|e| e.to_string())?;
        let r = sim.run(&wta, &trains).map_err(|e| e.to_string())?;
        Ok((r.rasters, r.inh_raster))
    };
    ensure(replay()? == replay()?, || {
        "rasters differ between identical runs".into()
    })?;
    Ok(())
}

fn izhikevich_reset() -> Result<(), String> {
    let p = IzhikevichParams::regular_spiking();
    let s = IzhikevichState { v: 35.0, u: -5.0 };
    let (next, fired) = izhikevich::step(s, 10.0, 0.5, &p).map_err(|e| e.to_string())?;
    let (_, du) = izhikevich::derivatives(s, 10.0, &p);
    ensure(
        fired && next.v == p.c && next.u == s.u + 0.5 * du + p.d,
        || format!("reset gave {next:?}"),
    )
}

fn properties() -> Outcome {
    let ratio = convergence_ratio()?;
    clipping()?;
    balance_and_rescaling()?;
    stdp_bounds()?;
    let grad = gradient_check()?;
    reduction_and_replay()?;
    izhikevich_reset()?;
    Ok(format!(
        "convergence ratio {ratio:.3}, 1e6 clipped steps, cancellation, rescaling, STDP bounds, gradient error {grad:.1e}, reduction, replay, reset"
    ))
}

fn calibration(dir: &tempfile::TempDir) -> Outcome {
    let mut cfg = ExperimentConfig::new(Experiment::Calibrate);
    cfg.seed = Some(2);
    let m = run(cfg, dir, "calibrate")?;
    let s = &m.summary;
    let secs = timing(&m, "search_seconds");
    ensure(s["fires_on_n"] == Value::Bool(true), || {
        "does not fire on 3 spikes".into()
    })?;
    ensure(s["fires_on_n_minus_1"] == Value::Bool(false), || {
        "fires on 2 spikes".into()
    })?;
    ensure(secs <= 60.0, || format!("search took {secs:.1} s"))?;
    Ok(format!(
        "fires on 3, silent on 2, {} candidates in {secs:.1} s",
        s["evaluated"]
    ))
}

fn main() -> ExitCode {
    let dir = tempfile::tempdir().expect("temp dir");
    let data = mnist::locate(None).filter(|d| d.join("t10k-images-idx3-ubyte").is_file());
    let e = energy(&dir);
    let with_energy = |k: fn(&Value) -> Outcome| e.as_ref().map_err(Clone::clone).and_then(k);
    type Check<'a> = Box<dyn FnOnce() -> Outcome + 'a>;
    let criteria: Vec<(&str, Check)> = vec![
        ("grouped input response", Box::new(|| fig5(&dir))),
        ("selective inhibition", Box::new(|| fig6(&dir))),
        ("foundry energy sheet", Box::new(|| with_energy(foundry))),
        ("nano energy sheet", Box::new(|| with_energy(nano))),
        ("task energy", Box::new(|| with_energy(tasks))),
        (
            "spike-event efficiency",
            Box::new(|| with_energy(efficiency)),
        ),
        (
            "ANN and converted SNN",
            Box::new(|| conversion(&dir, data.clone())),
        ),
        (
            "STDP winner-take-all",
            Box::new(|| stdp(&dir, data.clone())),
        ),
        ("property suites", Box::new(properties)),
        ("three-spike calibration", Box::new(|| calibration(&dir))),
    ];
    let mut failed = 0;
    for (k, (name, check)) in criteria.into_iter().enumerate() {
        match check() {
            Ok(msg) => println!("criterion {}: PASS  {name}: {msg}", k + 1),
            Err(msg) => {
                failed += 1;
                println!("criterion {}: FAIL  {name}: {msg}", k + 1);
            }
        }
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} criteria failed");
        ExitCode::FAILURE
    }
}
