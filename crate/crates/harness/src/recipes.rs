//! One function per experiment. Each writes its artifacts through
//! [`Outputs`] and returns a JSON summary for the manifest.

use std::path::{Path, PathBuf};
use std::time::Instant;

use oesnn_core::codec::{
    build_fig6_inhibitory_pattern, build_group_pattern, surviving_events, GroupPattern, SpikeTrain,
};
use oesnn_core::energy::{
    energy_report, eng, mesh_static_power, render_table, spike_event_efficiency, task_energy,
    DeviceEnergyParams, EnergyReport, MeshEnergyParams, TaskEnergySpec,
};
use oesnn_core::learning::ann::predict_dataset;
use oesnn_core::learning::{
    convert_ann_to_snn, evaluate, rate_coding_neuron, train_ann_with, train_stdp_with, AnnModel,
    ConversionConfig, Converted, Dataset, Evaluation, LabelAssignment, RateFit, StdpConfig,
    StdpTrained,
};
use oesnn_core::network::{Simulator, Topology};
use oesnn_core::neuron::calibrate::{burst_response, clusters, is_bursting, sustained_response};
use oesnn_core::neuron::presets::preset_fixture;
use oesnn_core::neuron::{
    calibrate_three_spike_threshold, simulate_neuron, NeuronTrace, OptoNeuronParams, Preset,
    PresetName, StimulusConfig,
};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::config::{
    AnnBlock, CalibrationBlock, EnergyBlock, Experiment, ExperimentConfig, Format, ModelKind,
    NeuronBlock, StdpBlock, StimulusBlock,
};
use crate::error::{Context, HarnessError, Result};
use crate::manifest::Outputs;
use crate::mnist::{self, Split};
use crate::svg;

pub fn run_recipe(cfg: &ExperimentConfig, out: &mut Outputs) -> Result<serde_json::Value> {
    match cfg.experiment {
        Experiment::SimulateNeuron => simulate(cfg, out),
        Experiment::Fig3Presets => fig3(cfg, out),
        Experiment::Fig5 => fig5(cfg, out),
        Experiment::Fig6 => fig6(cfg, out),
        Experiment::TrainStdp => train_stdp(cfg, out),
        Experiment::TrainAnn => train_ann(cfg, out),
        Experiment::ConvertAnn => convert_ann(cfg, out),
        Experiment::Infer => infer(cfg, out),
        Experiment::EnergyReport => energy(cfg, out),
        Experiment::BenchmarkPoints => benchmark_points(cfg, out),
        Experiment::Calibrate => calibrate(cfg, out),
    }
}

fn sci(v: f64) -> String {
    format!("{v:e}")
}

// ---------------------------------------------------------------- neurons

#[derive(Deserialize)]
struct ParamsFile {
    params: OptoNeuronParams,
}

/// The configured preset with its parameters replaced as requested.
fn resolve_preset(block: &NeuronBlock) -> Result<Preset> {
    let name: PresetName = block.preset.parse().ctx("[neuron] preset")?;
    let mut p = preset_fixture(name)?;
    if let Some(path) = &block.params_file {
        let text = std::fs::read_to_string(path)
            .map_err(|e| HarnessError::config(format!("{}: {e}", path.display())))?;
        let f: ParamsFile = toml::from_str(&text)
            .map_err(|e| HarnessError::config(format!("{}: {e}", path.display())))?;
        p.params = f.params;
    }
    if let Some(params) = block.params {
        p.params = params;
    }
    p.params.validate().ctx("[neuron] params")?;
    Ok(p)
}

fn stimulus_for(
    preset: &Preset,
    pattern: &GroupPattern,
    duration: f64,
    s: &StimulusBlock,
) -> StimulusConfig {
    let mut st = preset.stimulus_for(pattern, duration);
    if let Some(v) = s.dt_s {
        st.dt = v;
    }
    if let Some(v) = s.duration_s {
        st.duration = v;
    }
    if let Some(v) = s.pulse_amplitude_amps {
        st.pulse_amplitude = v;
    }
    if let Some(v) = s.pulse_width_s {
        st.pulse_width = v;
    }
    if s.detection_current_amps.is_some() {
        st.detection_current = s.detection_current_amps;
    }
    if let Some(i) = s.integrator {
        st.integrator = i;
    }
    st
}

fn write_trace(out: &mut Outputs, name: &str, tr: &NeuronTrace) -> Result<()> {
    out.write_csv(
        name,
        &["time_s", "v_V", "u_V", "i_vcsel_A"],
        (0..tr.len()).map(|k| {
            [
                sci(tr.time(k)),
                sci(tr.v_series[k]),
                sci(tr.u_series[k]),
                sci(tr.i_vcsel_series[k]),
            ]
        }),
    )?;
    Ok(())
}

/// `channel,time_s` rows for named trains.
fn write_raster(out: &mut Outputs, name: &str, rows: &[(&str, &[f64])]) -> Result<()> {
    let mut ev: Vec<(f64, usize)> = rows
        .iter()
        .enumerate()
        .flat_map(|(r, (_, ts))| ts.iter().map(move |&t| (t, r)))
        .collect();
    ev.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    out.write_csv(
        name,
        &["channel", "time_s"],
        ev.into_iter().map(|(t, r)| [rows[r].0.to_string(), sci(t)]),
    )?;
    Ok(())
}

fn trace_svg(title: &str, tr: &NeuronTrace, p: &OptoNeuronParams) -> String {
    let xs: Vec<f64> = (0..tr.len()).map(|k| tr.time(k)).collect();
    // VCSEL current rescaled onto the voltage axis so both are readable.
    let scale = p.vd / p.peak_vcsel_current().max(f64::MIN_POSITIVE);
    let i_scaled: Vec<f64> = tr.i_vcsel_series.iter().map(|i| i * scale).collect();
    svg::line_plot(
        title,
        "time (s)",
        "V (i_vcsel scaled to vd)",
        &[
            svg::Series {
                name: "v",
                xs: &xs,
                ys: &tr.v_series,
            },
            svg::Series {
                name: "u",
                xs: &xs,
                ys: &tr.u_series,
            },
            svg::Series {
                name: "i_vcsel",
                xs: &xs,
                ys: &i_scaled,
            },
        ],
    )
}

struct PatternRun {
    pattern: GroupPattern,
    params: OptoNeuronParams,
    stim: StimulusConfig,
    exc: SpikeTrain,
    end: f64,
}

fn pattern_run(preset: &Preset, block: &NeuronBlock, s: &StimulusBlock) -> Result<PatternRun> {
    let pattern = s.pattern.clone().unwrap_or_else(GroupPattern::standard);
    pattern.validate().ctx("[stimulus] pattern")?;
    let end = pattern.end_time() + pattern.guard_time;
    let rate = block.rate_hz.unwrap_or(pattern.intra_group_rate);
    let params = preset.params_for_rate(rate)?;
    let stim = stimulus_for(preset, &pattern, end, s);
    let exc = build_group_pattern(&pattern)?;
    Ok(PatternRun {
        pattern,
        params,
        stim,
        exc,
        end,
    })
}

fn simulate(cfg: &ExperimentConfig, out: &mut Outputs) -> Result<serde_json::Value> {
    let block = cfg.neuron.clone().unwrap_or_default();
    let s = cfg.stimulus.clone().unwrap_or_default();
    let preset = resolve_preset(&block)?;
    let mut run = pattern_run(&preset, &block, &s)?;
    if let Some(t) = &s.exc_times_s {
        run.exc = SpikeTrain::new(0, t.clone()).ctx("[stimulus] exc_times_s")?;
    }
    let inh = match &s.inh_times_s {
        Some(t) => SpikeTrain::new(1, t.clone()).ctx("[stimulus] inh_times_s")?,
        None => SpikeTrain::empty(1),
    };
    if s.exc_times_s.is_some() || s.inh_times_s.is_some() {
        let last = run
            .exc
            .times()
            .iter()
            .chain(inh.times())
            .fold(0.0f64, |a, &b| a.max(b));
        if s.duration_s.is_none() {
            run.stim.duration = last + run.pattern.guard_time;
        }
    }
    let tr = simulate_neuron(&run.exc, &inh, &run.params, &run.stim)?;
    if cfg.wants(Format::Csv) {
        write_trace(out, "trace.csv", &tr)?;
        write_raster(
            out,
            "raster.csv",
            &[
                ("exc", run.exc.times()),
                ("inh", inh.times()),
                ("output", &tr.output_spikes),
            ],
        )?;
    }
    if cfg.wants(Format::Svg) {
        out.write_text(
            "trace.svg",
            &trace_svg("simulated neuron", &tr, &run.params),
        )?;
    }
    let summary = json!({
        "preset": preset.name.as_str(),
        "params": run.params,
        "stimulus": run.stim,
        "input_spikes": run.exc.len(),
        "inhibitory_spikes": inh.len(),
        "output_spikes": tr.output_spikes,
    });
    if cfg.wants(Format::Json) {
        out.write_json("summary.json", &summary)?;
    }
    Ok(summary)
}

fn fig5(cfg: &ExperimentConfig, out: &mut Outputs) -> Result<serde_json::Value> {
    let block = cfg.neuron.clone().unwrap_or_default();
    let s = cfg.stimulus.clone().unwrap_or_default();
    let preset = resolve_preset(&block)?;
    let run = pattern_run(&preset, &block, &s)?;
    let t0 = Instant::now();
    let tr = simulate_neuron(&run.exc, &SpikeTrain::empty(1), &run.params, &run.stim)?;
    let counts = tr.counts_in_windows(&run.pattern.group_windows(run.end));
    let seconds = t0.elapsed().as_secs_f64();
    if cfg.wants(Format::Csv) {
        write_trace(out, "trace.csv", &tr)?;
        write_raster(
            out,
            "raster.csv",
            &[("input", run.exc.times()), ("output", &tr.output_spikes)],
        )?;
        out.write_csv(
            "group_counts.csv",
            &["group", "input_spikes", "output_spikes"],
            counts.iter().enumerate().map(|(g, c)| {
                [
                    (g + 1).to_string(),
                    run.pattern.group_sizes[g].to_string(),
                    c.to_string(),
                ]
            }),
        )?;
    }
    if cfg.wants(Format::Svg) {
        out.write_text(
            "trace.svg",
            &trace_svg("grouped input, excitatory only", &tr, &run.params),
        )?;
        out.write_text(
            "raster.svg",
            &svg::raster_plot(
                "input and output spikes",
                &[
                    svg::RasterRow {
                        label: "input",
                        times: run.exc.times(),
                    },
                    svg::RasterRow {
                        label: "output",
                        times: &tr.output_spikes,
                    },
                ],
                run.end,
            ),
        )?;
    }
    out.time("simulation_seconds", seconds);
    let summary = json!({
        "preset": preset.name.as_str(),
        "group_sizes": run.pattern.group_sizes,
        "group_counts": counts,
        "output_spikes": tr.output_spikes,
    });
    if cfg.wants(Format::Json) {
        out.write_json("summary.json", &summary)?;
    }
    Ok(summary)
}

/// Outcome of the excitatory+inhibitory experiment.
#[derive(Debug, Clone, Serialize)]
pub struct Fig6Outcome {
    pub baseline_events: Vec<f64>,
    pub suppressed_requested: Vec<usize>,
    pub inhibitory_times: Vec<f64>,
    pub output_spikes: Vec<f64>,
    /// 1-based baseline events still present.
    pub persisting: Vec<usize>,
    /// 1-based baseline events that vanished.
    pub absent: Vec<usize>,
    /// Output spikes not matching any baseline event.
    pub extra: usize,
}

fn fig6(cfg: &ExperimentConfig, out: &mut Outputs) -> Result<serde_json::Value> {
    let block = cfg.neuron.clone().unwrap_or_default();
    let s = cfg.stimulus.clone().unwrap_or_default();
    let preset = resolve_preset(&block)?;
    let run = pattern_run(&preset, &block, &s)?;
    let suppress = s.suppress_events.clone().unwrap_or_else(|| vec![3, 5]);
    let t0 = Instant::now();
    let base = simulate_neuron(&run.exc, &SpikeTrain::empty(1), &run.params, &run.stim)?;
    let inh = build_fig6_inhibitory_pattern(&run.pattern, &suppress, &preset)?;
    let tr = simulate_neuron(&run.exc, &inh, &run.params, &run.stim)?;
    let alive = surviving_events(
        &base.output_spikes,
        &tr.output_spikes,
        1.5 * run.pattern.period(),
    );
    let persisting: Vec<usize> = (1..=alive.len()).filter(|&e| alive[e - 1]).collect();
    let absent: Vec<usize> = (1..=alive.len()).filter(|&e| !alive[e - 1]).collect();
    let outcome = Fig6Outcome {
        baseline_events: base.output_spikes.clone(),
        suppressed_requested: suppress,
        inhibitory_times: inh.times().to_vec(),
        output_spikes: tr.output_spikes.clone(),
        extra: tr.output_spikes.len() - persisting.len(),
        persisting,
        absent,
    };
    let seconds = t0.elapsed().as_secs_f64();
    if cfg.wants(Format::Csv) {
        write_trace(out, "trace.csv", &tr)?;
        write_raster(
            out,
            "raster.csv",
            &[
                ("exc", run.exc.times()),
                ("inh", inh.times()),
                ("output_baseline", &base.output_spikes),
                ("output", &tr.output_spikes),
            ],
        )?;
        out.write_csv(
            "events.csv",
            &["event", "time_s", "present"],
            base.output_spikes
                .iter()
                .zip(&alive)
                .enumerate()
                .map(|(k, (t, a))| [(k + 1).to_string(), sci(*t), a.to_string()]),
        )?;
    }
    if cfg.wants(Format::Svg) {
        out.write_text(
            "trace.svg",
            &trace_svg("grouped input with inhibition", &tr, &run.params),
        )?;
        out.write_text(
            "raster.svg",
            &svg::raster_plot(
                "excitatory, inhibitory and output spikes",
                &[
                    svg::RasterRow {
                        label: "exc",
                        times: run.exc.times(),
                    },
                    svg::RasterRow {
                        label: "inh",
                        times: inh.times(),
                    },
                    svg::RasterRow {
                        label: "output (exc only)",
                        times: &base.output_spikes,
                    },
                    svg::RasterRow {
                        label: "output",
                        times: &tr.output_spikes,
                    },
                ],
                run.end,
            ),
        )?;
    }
    let summary = serde_json::to_value(&outcome).expect("outcome serializes");
    out.time("simulation_seconds", seconds);
    if cfg.wants(Format::Json) {
        out.write_json("summary.json", &summary)?;
    }
    Ok(summary)
}

fn fig3(cfg: &ExperimentConfig, out: &mut Outputs) -> Result<serde_json::Value> {
    let s = cfg.stimulus.clone().unwrap_or_default();
    let mut rows = Vec::new();
    let mut raster: Vec<(String, Vec<f64>)> = Vec::new();
    let mut end = 0.0f64;
    for name in PresetName::ALL {
        let block = NeuronBlock {
            preset: name.as_str().into(),
            ..NeuronBlock::default()
        };
        let preset = resolve_preset(&block)?;
        let run = pattern_run(&preset, &block, &s)?;
        let tr = simulate_neuron(&run.exc, &SpikeTrain::empty(1), &run.params, &run.stim)?;
        let counts = tr.counts_in_windows(&run.pattern.group_windows(run.end));
        let sustained =
            sustained_response(&run.params, 40, run.pattern.intra_group_rate, &run.stim)?;
        if raster.is_empty() {
            raster.push(("input".into(), run.exc.times().to_vec()));
        }
        end = end.max(run.end);
        raster.push((name.as_str().into(), tr.output_spikes.clone()));
        if cfg.wants(Format::Csv) {
            write_trace(out, &format!("trace_{}.csv", name.as_str()), &tr)?;
        }
        if cfg.wants(Format::Svg) {
            out.write_text(
                &format!("trace_{}.svg", name.as_str()),
                &trace_svg(&format!("{} preset", name.as_str()), &tr, &run.params),
            )?;
        }
        rows.push(json!({
            "preset": name.as_str(),
            "group_counts": counts,
            "total": counts.iter().sum::<usize>(),
            "sustained_spikes": sustained.len(),
            "sustained_clusters": clusters(&sustained).len(),
            "bursting": is_bursting(&sustained),
        }));
    }
    if cfg.wants(Format::Csv) {
        out.write_csv(
            "fig3_counts.csv",
            &[
                "preset",
                "group_counts",
                "total_spikes",
                "sustained_spikes",
                "sustained_clusters",
                "bursting",
            ],
            rows.iter().map(|r| {
                [
                    r["preset"].as_str().unwrap_or_default().to_string(),
                    r["group_counts"].to_string(),
                    r["total"].to_string(),
                    r["sustained_spikes"].to_string(),
                    r["sustained_clusters"].to_string(),
                    r["bursting"].to_string(),
                ]
            }),
        )?;
    }
    if cfg.wants(Format::Svg) {
        let rr: Vec<svg::RasterRow> = raster
            .iter()
            .map(|(l, t)| svg::RasterRow { label: l, times: t })
            .collect();
        out.write_text(
            "raster.svg",
            &svg::raster_plot("preset responses to grouped input", &rr, end),
        )?;
    }
    let summary = json!({ "presets": rows });
    if cfg.wants(Format::Json) {
        out.write_json("summary.json", &summary)?;
    }
    Ok(summary)
}

fn calibrate(cfg: &ExperimentConfig, out: &mut Outputs) -> Result<serde_json::Value> {
    let block: CalibrationBlock = cfg.calibration.clone().unwrap_or_default();
    let name: PresetName = block.preset.parse().ctx("[calibration] preset")?;
    let fixture = preset_fixture(name)?;
    let mut recipe = fixture.calibration.clone();
    if let Some(n) = block.spikes_to_fire {
        recipe.goal.spikes_to_fire = n;
    }
    if block.threshold_only {
        recipe.goal.group_target = None;
        recipe.goal.burst_target = None;
    }
    if let Some(b) = block.budget {
        recipe.budget = b;
    }
    if let Some(sp) = &block.space {
        recipe.space = sp.clone();
    }
    recipe.seed = cfg.seed();
    let t0 = Instant::now();
    let found =
        calibrate_three_spike_threshold(&recipe.goal, &recipe.space, recipe.budget, recipe.seed)?;
    let seconds = t0.elapsed().as_secs_f64();
    let g = &recipe.goal;
    let n = g.spikes_to_fire;
    let fires_n = !burst_response(&found.params, n, g.input_rate, &g.stimulus)?.is_empty();
    let fires_n1 =
        n > 1 && !burst_response(&found.params, n - 1, g.input_rate, &g.stimulus)?.is_empty();
    let result = Preset {
        provenance: format!(
            "calibrate_three_spike_threshold, seed {}, candidate {} of budget {}",
            recipe.seed, found.evaluated, recipe.budget
        ),
        params: found.params,
        calibration: recipe.clone(),
        ..fixture
    };
    out.write_text("calibrated.toml", &result.to_toml())?;
    out.time("search_seconds", seconds);
    let summary = json!({
        "preset": name.as_str(),
        "spikes_to_fire": n,
        "evaluated": found.evaluated,
        "budget": recipe.budget,
        "params": found.params,
        "fires_on_n": fires_n,
        "fires_on_n_minus_1": fires_n1,
        "group_counts": found.assessment.group_counts,
    });
    if cfg.wants(Format::Json) {
        out.write_json("summary.json", &summary)?;
    }
    Ok(summary)
}

// ----------------------------------------------------------------- energy

/// Activity and duration implied by a sheet's published task figures.
pub fn published_task(p: &DeviceEnergyParams) -> Option<TaskEnergySpec> {
    let f = &p.published;
    let (avg, power, energy) = (f.p_avg?, f.task_power?, f.task_energy?);
    (avg > 0.0 && power > 0.0).then(|| TaskEnergySpec {
        activity_fraction: (power / avg * 1000.0).round() / 1000.0,
        duration: energy / power,
    })
}

/// Continuous power a task draws from: the published average when the sheet
/// has one, otherwise the formula value.
pub fn task_base_power(p: &DeviceEnergyParams, r: &EnergyReport) -> f64 {
    p.published.p_avg.filter(|&v| v > 0.0).unwrap_or(r.p_avg)
}

#[derive(Debug, Clone, Serialize)]
pub struct TaskRow {
    pub device: String,
    pub activity_fraction: f64,
    pub duration_s: f64,
    pub base_power_w: f64,
    pub task_power_w: f64,
    pub task_energy_j: f64,
}

fn energy(cfg: &ExperimentConfig, out: &mut Outputs) -> Result<serde_json::Value> {
    let block: EnergyBlock = cfg.energy.clone().unwrap_or_default();
    let sheets = block.sheets();
    let mut reports = Vec::new();
    for s in &sheets {
        reports.push(energy_report(s).ctx(&format!("sheet `{}`", s.name))?);
    }
    let tasks: Vec<Option<TaskEnergySpec>> = match &block.tasks {
        Some(t) => {
            if t.len() != sheets.len() {
                return Err(HarnessError::config(format!(
                    "[energy] tasks has {} entries for {} sheets",
                    t.len(),
                    sheets.len()
                )));
            }
            t.iter().map(|x| Some(*x)).collect()
        }
        None => sheets.iter().map(published_task).collect(),
    };
    let mut task_rows = Vec::new();
    for ((s, r), t) in sheets.iter().zip(&reports).zip(&tasks) {
        if let Some(t) = t {
            t.validate().ctx("[energy] tasks")?;
            let base = task_base_power(s, r);
            let (pw, e) = task_energy(base, t);
            task_rows.push(TaskRow {
                device: s.name.clone(),
                activity_fraction: t.activity_fraction,
                duration_s: t.duration,
                base_power_w: base,
                task_power_w: pw,
                task_energy_j: e,
            });
        }
    }
    let meshes = block.meshes.clone().unwrap_or_else(|| {
        vec![
            MeshEnergyParams::thermo(100),
            MeshEnergyParams::mems(100, 1e3),
        ]
    });
    let mesh_rows: Vec<serde_json::Value> = meshes
        .iter()
        .map(|m| json!({ "mesh": m, "static_power_w": mesh_static_power(m) }))
        .collect();

    let pairs: Vec<(&DeviceEnergyParams, &EnergyReport)> = sheets.iter().zip(&reports).collect();
    let specs: Vec<TaskEnergySpec> = tasks.iter().flatten().copied().collect();
    let mut table = render_table(&pairs, (specs.len() == sheets.len()).then_some(&specs[..]));
    for m in &mesh_rows {
        let p = m["static_power_w"].as_f64().unwrap_or(0.0);
        table.push_str(&format!(
            "mesh {:?} x{}: {}\n",
            m["mesh"]["technology"].as_str().unwrap_or("?"),
            m["mesh"]["n_mzi"],
            eng(p, "W")
        ));
    }
    out.write_text("energy_table.txt", &table)?;
    if cfg.wants(Format::Csv) {
        type Field = fn(&EnergyReport) -> f64;
        let quantities: [(&str, Field); 11] = [
            ("q_threshold_C", |r| r.q_threshold),
            ("q_per_spike_C", |r| r.q_per_spike),
            ("e_dyn_in_J", |r| r.e_dyn_in),
            ("e_dyn_in_computed_J", |r| r.e_dyn_in_computed),
            ("p_dyn_in_W", |r| r.p_dyn_in),
            ("e_dyn_out_J", |r| r.e_dyn_out),
            ("p_dyn_out_W", |r| r.p_dyn_out),
            ("p_static_off_W", |r| r.p_static_off),
            ("p_static_on_W", |r| r.p_static_on),
            ("duty_fraction", |r| r.duty_fraction),
            ("p_avg_W", |r| r.p_avg),
        ];
        let mut header = vec!["quantity"];
        header.extend(sheets.iter().map(|s| s.name.as_str()));
        out.write_csv(
            "energy.csv",
            &header,
            quantities.iter().map(|(q, f)| {
                std::iter::once(q.to_string())
                    .chain(reports.iter().map(|r| sci(f(r))))
                    .collect::<Vec<_>>()
            }),
        )?;
        out.write_csv(
            "task_energy.csv",
            &[
                "device",
                "activity_fraction",
                "duration_s",
                "base_power_W",
                "task_power_W",
                "task_energy_J",
            ],
            task_rows.iter().map(|t| {
                [
                    t.device.clone(),
                    t.activity_fraction.to_string(),
                    sci(t.duration_s),
                    sci(t.base_power_w),
                    sci(t.task_power_w),
                    sci(t.task_energy_j),
                ]
            }),
        )?;
    }
    let summary = json!({
        "reports": reports,
        "tasks": task_rows,
        "meshes": mesh_rows,
        "efficiency_gops_per_w": sheets.iter().zip(&reports)
            .map(|(s, r)| json!({ "device": s.name, "value": spike_event_efficiency(r.e_dyn_in) }))
            .collect::<Vec<_>>(),
    });
    if cfg.wants(Format::Json) {
        out.write_json("energy_report.json", &summary)?;
    }
    Ok(summary)
}

/// Published comparison points shipped with the tool (not computed).
pub const BENCHMARK_ANNOTATIONS: &str = include_str!("../data/benchmark_annotations.csv");

fn benchmark_points(cfg: &ExperimentConfig, out: &mut Outputs) -> Result<serde_json::Value> {
    let block: EnergyBlock = cfg.energy.clone().unwrap_or_default();
    let mut points = Vec::new();
    for s in block.sheets() {
        let r = energy_report(&s).ctx(&format!("sheet `{}`", s.name))?;
        points.push(json!({
            "device": s.name,
            "e_spike_J": r.e_dyn_in,
            "e_spike_computed_J": r.e_dyn_in_computed,
            "spike_rate_hz": s.max_rate,
            "efficiency_gops_per_w": spike_event_efficiency(r.e_dyn_in),
        }));
    }
    out.write_text("annotations.csv", BENCHMARK_ANNOTATIONS)?;
    if cfg.wants(Format::Csv) {
        out.write_csv(
            "benchmark_points.csv",
            &[
                "device",
                "e_spike_J",
                "spike_rate_Hz",
                "efficiency_GOPs_per_W",
            ],
            points.iter().map(|p| {
                [
                    p["device"].as_str().unwrap_or_default().to_string(),
                    sci(p["e_spike_J"].as_f64().unwrap_or(f64::NAN)),
                    sci(p["spike_rate_hz"].as_f64().unwrap_or(f64::NAN)),
                    sci(p["efficiency_gops_per_w"].as_f64().unwrap_or(f64::NAN)),
                ]
            }),
        )?;
    }
    if cfg.wants(Format::Svg) {
        let labels: Vec<String> = points
            .iter()
            .map(|p| p["device"].as_str().unwrap_or("").to_string())
            .collect();
        let pts: Vec<svg::Point> = points
            .iter()
            .zip(&labels)
            .map(|(p, l)| svg::Point {
                label: l,
                x: p["spike_rate_hz"].as_f64().unwrap_or(0.0),
                y: p["efficiency_gops_per_w"].as_f64().unwrap_or(0.0),
            })
            .collect();
        out.write_text(
            "benchmark_points.svg",
            &svg::log_scatter(
                "spike-event efficiency",
                "spike events per second",
                "GOP/s/W",
                &pts,
            ),
        )?;
    }
    let summary = json!({ "points": points });
    if cfg.wants(Format::Json) {
        out.write_json("benchmark_points.json", &summary)?;
    }
    Ok(summary)
}

// ------------------------------------------------------------------ MNIST

pub struct Mnist {
    pub train: Dataset,
    pub test: Dataset,
}

fn mnist_dir(cfg: &ExperimentConfig) -> Result<PathBuf> {
    let explicit = cfg.mnist.as_ref().and_then(|m| m.dir.as_deref());
    mnist::locate(explicit).ok_or_else(|| {
        HarnessError::data(
            "MNIST files not found; set [mnist] dir, MNIST_DIR, or run scripts/fetch_mnist.sh",
        )
    })
}

fn load_mnist(cfg: &ExperimentConfig, need_train: bool) -> Result<Mnist> {
    let dir = mnist_dir(cfg)?;
    let block = cfg.mnist.clone().unwrap_or_default();
    let cut = |d: Dataset, n: Option<usize>| match n {
        Some(n) => d.take(n),
        None => d,
    };
    let train = if need_train {
        cut(
            mnist::load_split(&dir, Split::Train)?.into_dataset(),
            block.train_samples,
        )
    } else {
        Dataset::new(1, Vec::new(), Vec::new()).expect("empty dataset")
    };
    let test = cut(
        mnist::load_split(&dir, Split::Test)?.into_dataset(),
        block.test_samples,
    );
    Ok(Mnist { train, test })
}

fn write_eval(
    out: &mut Outputs,
    cfg: &ExperimentConfig,
    prefix: &str,
    e: &Evaluation,
    labels: &[usize],
) -> Result<()> {
    if cfg.wants(Format::Csv) {
        out.write_csv(
            &format!("{prefix}predictions.csv"),
            &["index", "label", "prediction"],
            e.predictions
                .iter()
                .enumerate()
                .map(|(i, p)| [i.to_string(), labels[i].to_string(), p.to_string()]),
        )?;
        out.write_csv(
            &format!("{prefix}confusion.csv"),
            &(0..=e.confusion.len())
                .map(|k| if k == 0 { "label" } else { "" })
                .collect::<Vec<_>>(),
            e.confusion.iter().enumerate().map(|(l, row)| {
                std::iter::once(l.to_string())
                    .chain(row.iter().map(|c| c.to_string()))
                    .collect::<Vec<_>>()
            }),
        )?;
    }
    Ok(())
}

fn labels_of(data: &Dataset, n: usize) -> Vec<usize> {
    (0..n.min(data.len())).map(|i| data.label(i)).collect()
}

fn train_ann_model(
    cfg: &ExperimentConfig,
    block: &AnnBlock,
    train: &Dataset,
    log: &mut Vec<(usize, f64)>,
) -> Result<AnnModel> {
    let mut tc = block.train;
    tc.seed = cfg.seed();
    Ok(train_ann_with(train, &block.layers, &tc, |e, l| {
        log.push((e, l))
    })?)
}

fn train_ann(cfg: &ExperimentConfig, out: &mut Outputs) -> Result<serde_json::Value> {
    let block = cfg.ann.clone().unwrap_or_default();
    let data = load_mnist(cfg, true)?;
    let t0 = Instant::now();
    let mut log = Vec::new();
    let model = train_ann_model(cfg, &block, &data.train, &mut log)?;
    let train_seconds = t0.elapsed().as_secs_f64();
    let preds = predict_dataset(&model, &data.test);
    let labels = labels_of(&data.test, data.test.len());
    let e = Evaluation::from_predictions(preds, &labels, 10)?;
    let model_path = out.path("model.json");
    let side = model.save(&model_path)?;
    out.register(&model_path)?;
    out.register(&side)?;
    write_eval(out, cfg, "", &e, &labels)?;
    if cfg.wants(Format::Csv) {
        out.write_csv(
            "training_log.csv",
            &["epoch", "mean_loss_nats"],
            log.iter().map(|(ep, l)| [ep.to_string(), sci(*l)]),
        )?;
    }
    out.time("train_seconds", train_seconds);
    let summary = json!({
        "layers": block.layers,
        "train": oesnn_core::learning::AnnTrainConfig { seed: cfg.seed(), ..block.train },
        "train_samples": data.train.len(),
        "test_samples": data.test.len(),
        "test_accuracy": e.accuracy,
        "epoch_losses": log.iter().map(|x| x.1).collect::<Vec<_>>(),
    });
    if cfg.wants(Format::Json) {
        out.write_json("metrics.json", &summary)?;
    }
    Ok(summary)
}

/// Metadata saved next to a converted or STDP topology.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum SavedModel {
    Converted {
        topology: String,
        conversion: ConversionConfig,
        scales: Vec<f64>,
        fit: RateFit,
    },
    Stdp {
        topology: String,
        rule: StdpConfig,
        labels: LabelAssignment,
    },
}

impl SavedModel {
    pub fn kind(&self) -> ModelKind {
        match self {
            SavedModel::Converted { .. } => ModelKind::Converted,
            SavedModel::Stdp { .. } => ModelKind::Stdp,
        }
    }
}

/// A loaded network ready to classify images.
pub enum Classifier {
    Converted(Converted),
    Stdp(StdpTrained),
}

impl Classifier {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let saved: SavedModel = serde_json::from_str(&text)
            .map_err(|e| HarnessError::data(format!("{}: {e}", path.display())))?;
        let dir = path.parent().unwrap_or(Path::new("."));
        Ok(match saved {
            SavedModel::Converted {
                topology,
                conversion,
                scales,
                fit,
            } => Classifier::Converted(Converted {
                topology: Topology::load(&dir.join(topology))?,
                config: conversion,
                scales,
                fit,
            }),
            SavedModel::Stdp {
                topology,
                rule,
                labels,
            } => Classifier::Stdp(StdpTrained {
                topology: Topology::load(&dir.join(topology))?,
                labels,
                config: rule,
                train_spikes: Vec::new(),
            }),
        })
    }

    pub fn simulator(&self) -> Result<Simulator> {
        Ok(match self {
            Classifier::Converted(c) => Simulator::new(&c.topology, &c.config.sim_config())?,
            Classifier::Stdp(s) => s.simulator()?,
        })
    }

    pub fn classify(
        &self,
        sim: &mut Simulator,
        image: &[f64],
        sample: u64,
    ) -> Result<(usize, Vec<u32>)> {
        Ok(match self {
            Classifier::Converted(c) => c.classify_with(sim, image, sample)?,
            Classifier::Stdp(s) => s.classify_with(sim, image, sample)?,
        })
    }
}

/// Stream for test-time encodings, disjoint from training streams.
pub const TEST_STREAM: u64 = 1 << 50;

fn evaluate_classifier(c: &Classifier, test: &Dataset, n: usize) -> Result<Evaluation> {
    let mut sim = c.simulator()?;
    let mut err = None;
    let e = evaluate(test, n, |i, img| {
        match c.classify(&mut sim, img, TEST_STREAM + i as u64) {
            Ok((p, _)) => Ok(p),
            Err(e) => {
                err = Some(e);
                Ok(0)
            }
        }
    })?;
    if let Some(e) = err {
        return Err(e);
    }
    Ok(e)
}

fn convert_ann(cfg: &ExperimentConfig, out: &mut Outputs) -> Result<serde_json::Value> {
    let block = cfg.ann.clone().unwrap_or_default();
    let mut cc = cfg.conversion.unwrap_or_default();
    cc.seed = cfg.seed();
    let n_test = cfg
        .mnist
        .as_ref()
        .and_then(|m| m.test_samples)
        .unwrap_or(1000);
    // The ANN is scored on the whole test split; `n_test` only limits the SNN.
    let mut full = cfg.clone();
    if let Some(m) = full.mnist.as_mut() {
        m.test_samples = None;
    }
    let data = load_mnist(&full, true)?;
    let t0 = Instant::now();
    let model = match &block.model_path {
        Some(p) => AnnModel::load(p)?,
        None => {
            let mut log = Vec::new();
            let m = train_ann_model(cfg, &block, &data.train, &mut log)?;
            let p = out.path("ann_model.json");
            let side = m.save(&p)?;
            out.register(&p)?;
            out.register(&side)?;
            m
        }
    };
    let converted = convert_ann_to_snn(&model, &data.train, &rate_coding_neuron()?, &cc)?;
    let convert_seconds = t0.elapsed().as_secs_f64();
    let topo_path = out.path("topology.json");
    let side = converted.topology.save(&topo_path)?;
    out.register(&topo_path)?;
    out.register(&side)?;
    let saved = SavedModel::Converted {
        topology: "topology.json".into(),
        conversion: cc,
        scales: converted.scales.clone(),
        fit: converted.fit,
    };
    out.write_json("model.json", &saved)?;

    let n = n_test.min(data.test.len());
    let subset = data.test.take(n);
    let labels = labels_of(&subset, n);
    let ann = Evaluation::from_predictions(predict_dataset(&model, &subset), &labels, 10)?;
    let ann_full = Evaluation::from_predictions(
        predict_dataset(&model, &data.test),
        &labels_of(&data.test, data.test.len()),
        10,
    )?;
    let t1 = Instant::now();
    let snn = evaluate_classifier(&Classifier::Converted(converted.clone()), &subset, n)?;
    let infer_seconds = t1.elapsed().as_secs_f64();
    write_eval(out, cfg, "snn_", &snn, &labels)?;
    if cfg.wants(Format::Csv) {
        out.write_csv(
            "comparison.csv",
            &["index", "label", "ann", "snn"],
            (0..n).map(|i| {
                [
                    i.to_string(),
                    labels[i].to_string(),
                    ann.predictions[i].to_string(),
                    snn.predictions[i].to_string(),
                ]
            }),
        )?;
    }
    out.time("convert_seconds", convert_seconds);
    out.time("infer_seconds", infer_seconds);
    let summary = json!({
        "test_samples": n,
        "ann_full_test_accuracy": ann_full.accuracy,
        "ann_accuracy": ann.accuracy,
        "snn_accuracy": snn.accuracy,
        "gap_pp": 100.0 * (ann.accuracy - snn.accuracy),
        "scales": converted.scales,
        "fit": converted.fit,
        "conversion": cc,
    });
    if cfg.wants(Format::Json) {
        out.write_json("metrics.json", &summary)?;
    }
    Ok(summary)
}

fn train_stdp(cfg: &ExperimentConfig, out: &mut Outputs) -> Result<serde_json::Value> {
    let block: StdpBlock = cfg.stdp.clone().unwrap_or_default();
    let mut rule = block.rule;
    rule.seed = cfg.seed();
    let m = cfg.mnist.clone().unwrap_or_default();
    let n_train = m.train_samples.unwrap_or(5000);
    let n_test = m.test_samples.unwrap_or(1000);
    let data = load_mnist(cfg, true)?;
    let t0 = Instant::now();
    let trained = train_stdp_with(
        &data.train,
        n_train,
        block.n_exc,
        &rule,
        &rate_coding_neuron()?,
        |_, _| {},
    )?;
    let train_seconds = t0.elapsed().as_secs_f64();
    let topo_path = out.path("topology.json");
    let side = trained.topology.save(&topo_path)?;
    out.register(&topo_path)?;
    out.register(&side)?;
    let saved = SavedModel::Stdp {
        topology: "topology.json".into(),
        rule,
        labels: trained.labels.clone(),
    };
    out.write_json("model.json", &saved)?;
    let n = n_test.min(data.test.len());
    let labels = labels_of(&data.test, n);
    let t1 = Instant::now();
    let e = evaluate_classifier(&Classifier::Stdp(trained.clone()), &data.test, n)?;
    let infer_seconds = t1.elapsed().as_secs_f64();
    write_eval(out, cfg, "", &e, &labels)?;
    if cfg.wants(Format::Csv) {
        out.write_csv(
            "neuron_labels.csv",
            &["neuron", "label"],
            trained
                .labels
                .labels
                .iter()
                .enumerate()
                .map(|(j, l)| [j.to_string(), l.to_string()]),
        )?;
        out.write_csv(
            "train_spikes.csv",
            &["sample", "exc_spikes"],
            trained
                .train_spikes
                .iter()
                .enumerate()
                .map(|(i, s)| [i.to_string(), s.to_string()]),
        )?;
    }
    out.time("train_seconds", train_seconds);
    out.time("infer_seconds", infer_seconds);
    let summary = json!({
        "n_exc": block.n_exc,
        "train_samples": n_train.min(data.train.len()),
        "test_samples": n,
        "test_accuracy": e.accuracy,
        "rule": rule,
    });
    if cfg.wants(Format::Json) {
        out.write_json("metrics.json", &summary)?;
    }
    Ok(summary)
}

fn infer(cfg: &ExperimentConfig, out: &mut Outputs) -> Result<serde_json::Value> {
    let block = cfg
        .infer
        .clone()
        .ok_or_else(|| HarnessError::config("`infer` needs an [infer] table"))?;
    let c = Classifier::load(&block.model_path)?;
    let kind = match c {
        Classifier::Converted(_) => ModelKind::Converted,
        Classifier::Stdp(_) => ModelKind::Stdp,
    };
    if kind != block.kind {
        return Err(HarnessError::config(format!(
            "{} holds a {kind:?} model, config says {:?}",
            block.model_path.display(),
            block.kind
        )));
    }
    let data = load_mnist(cfg, false)?;
    let n = cfg
        .mnist
        .as_ref()
        .and_then(|m| m.test_samples)
        .unwrap_or(data.test.len())
        .min(data.test.len());
    let labels = labels_of(&data.test, n);
    let t0 = Instant::now();
    let e = evaluate_classifier(&c, &data.test, n)?;
    write_eval(out, cfg, "", &e, &labels)?;
    out.time("infer_seconds", t0.elapsed().as_secs_f64());
    let summary = json!({
        "kind": kind,
        "test_samples": n,
        "test_accuracy": e.accuracy,
    });
    if cfg.wants(Format::Json) {
        out.write_json("metrics.json", &summary)?;
    }
    Ok(summary)
}
