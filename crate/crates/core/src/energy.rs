//! Per-neuron energy and power accounting.
//!
//! The chain runs from the charge a neuron must collect to reach threshold,
//! through the optical energy per input spike (via detector responsivity),
//! to peak dynamic powers, static rail powers, the duty-cycled average and
//! task-level energy. All quantities are SI `f64`.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// One supply rail.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rail {
    #[serde(rename = "voltage_volts")]
    pub voltage: f64,
    /// Current drawn with the neuron off.
    #[serde(rename = "i_leak_amps")]
    pub i_leak: f64,
    /// Current drawn with the transistors on.
    #[serde(rename = "i_on_amps")]
    pub i_on: f64,
}

/// Figures quoted alongside a parameter sheet, kept for side-by-side reporting.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct PublishedFigures {
    #[serde(rename = "p_avg_watts", default)]
    pub p_avg: Option<f64>,
    #[serde(rename = "task_energy_joules", default)]
    pub task_energy: Option<f64>,
    #[serde(rename = "task_power_watts", default)]
    pub task_power: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviceEnergyParams {
    pub name: String,
    #[serde(rename = "c_main_farads")]
    pub c_main: f64,
    #[serde(rename = "c_pd_load_farads")]
    pub c_pd_load: f64,
    #[serde(rename = "c_fet_parasitic_farads")]
    pub c_fet_parasitic: f64,
    #[serde(rename = "v_threshold_volts")]
    pub v_threshold: f64,
    #[serde(rename = "responsivity_amps_per_watt")]
    pub responsivity: f64,
    #[serde(default = "default_spikes_to_threshold")]
    pub spikes_to_threshold: u32,
    #[serde(rename = "spike_width_s")]
    pub spike_width: f64,
    #[serde(rename = "max_rate_hz")]
    pub max_rate: f64,
    pub fanout: u32,
    pub rails: Vec<Rail>,
    #[serde(rename = "e_dyn_in_override_joules", default)]
    pub e_dyn_in_override: Option<f64>,
    #[serde(default)]
    pub published: PublishedFigures,
}

fn default_spikes_to_threshold() -> u32 {
    3
}

impl DeviceEnergyParams {
    /// Foundry-process neuron sheet.
    pub fn foundry() -> Self {
        Self {
            name: "foundry".into(),
            c_main: 60e-15,
            c_pd_load: 2.1e-15,
            c_fet_parasitic: 6e-15,
            v_threshold: 0.65,
            responsivity: 0.7,
            spikes_to_threshold: 3,
            spike_width: 10e-12,
            max_rate: 10e9,
            fanout: 10,
            rails: vec![
                Rail {
                    voltage: 2.0,
                    i_leak: 3.18e-6,
                    i_on: 423.4e-6,
                },
                Rail {
                    voltage: 0.5,
                    i_leak: 580e-12,
                    i_on: 22.4e-6,
                },
            ],
            e_dyn_in_override: None,
            published: PublishedFigures {
                p_avg: Some(714e-6),
                task_energy: Some(31.3e-6),
                task_power: Some(61.4e-6),
            },
        }
    }

    /// Projected nanoscale neuron sheet. The published input energy per spike
    /// is carried as an override; see [`EnergyReport::e_dyn_in_computed`].
    pub fn nano() -> Self {
        Self {
            name: "nano".into(),
            c_main: 0.5e-15,
            c_pd_load: 0.1e-15,
            c_fet_parasitic: 1.1e-18,
            v_threshold: 0.1,
            responsivity: 1.0,
            spikes_to_threshold: 3,
            spike_width: 10e-12,
            max_rate: 10e9,
            fanout: 10,
            rails: vec![Rail {
                voltage: 1.4,
                i_leak: 10e-9,
                i_on: 31.27e-6,
            }],
            e_dyn_in_override: Some(200e-18),
            published: PublishedFigures {
                p_avg: Some(8.14e-6),
                task_energy: Some(253e-9),
                task_power: Some(0.7e-6),
            },
        }
    }

    pub fn validate(&self) -> Result<()> {
        let nonneg = [
            self.c_main,
            self.c_pd_load,
            self.c_fet_parasitic,
            self.v_threshold,
            self.spike_width,
            self.max_rate,
        ];
        let rails_ok = self
            .rails
            .iter()
            .all(|r| r.voltage >= 0.0 && r.i_leak >= 0.0 && r.i_on >= 0.0);
        if nonneg.iter().any(|x| !(*x >= 0.0)) || !rails_ok {
            return Err(Error::InvalidParams(
                "capacitances, voltages, currents and rates must be >= 0".into(),
            ));
        }
        if !(self.responsivity > 0.0) {
            return Err(Error::InvalidParams("responsivity must be > 0".into()));
        }
        if self.spikes_to_threshold == 0 {
            return Err(Error::InvalidParams(
                "spikes_to_threshold must be >= 1".into(),
            ));
        }
        Ok(())
    }

    pub fn total_capacitance(&self) -> f64 {
        self.c_main + self.c_pd_load + self.c_fet_parasitic
    }
}

/// Charge needed to lift the membrane node to threshold.
pub fn charge_to_threshold(p: &DeviceEnergyParams) -> f64 {
    p.total_capacitance() * p.v_threshold
}

/// Optical energy per input spike implied by the sheet, ignoring any override.
pub fn e_dynamic_in_computed(p: &DeviceEnergyParams) -> f64 {
    charge_to_threshold(p) / p.spikes_to_threshold as f64 / p.responsivity
}

/// Energy per input spike: the override when present, otherwise computed.
pub fn e_dynamic_in(p: &DeviceEnergyParams) -> f64 {
    p.e_dyn_in_override
        .unwrap_or_else(|| e_dynamic_in_computed(p))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DynamicPowers {
    pub p_dyn_in: f64,
    pub e_dyn_out: f64,
    pub p_dyn_out: f64,
}

pub fn dynamic_powers(p: &DeviceEnergyParams, e_in: f64) -> DynamicPowers {
    let e_out = p.fanout as f64 * e_in;
    DynamicPowers {
        p_dyn_in: e_in / p.spike_width,
        e_dyn_out: e_out,
        p_dyn_out: e_out / p.spike_width,
    }
}

/// `(P_static_off, P_static_on)` summed over rails.
pub fn static_powers(p: &DeviceEnergyParams) -> (f64, f64) {
    p.rails.iter().fold((0.0, 0.0), |(off, on), r| {
        (off + r.voltage * r.i_leak, on + r.voltage * r.i_on)
    })
}

/// Duty-cycled average power.
pub fn p_average(t_fraction: f64, p_dyn_out: f64, p_static_on: f64, p_static_off: f64) -> f64 {
    t_fraction * (p_dyn_out + p_static_on) + (1.0 - t_fraction) * p_static_off
}

/// Largest fraction of time the neuron can be on, clamped to 1.
pub fn max_duty_fraction(p: &DeviceEnergyParams, spikes_per_output: u32) -> f64 {
    let spikes = spikes_per_output.max(1) as f64;
    (p.spike_width * p.max_rate / spikes).min(1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TaskEnergySpec {
    pub activity_fraction: f64,
    #[serde(rename = "duration_s")]
    pub duration: f64,
}

impl TaskEnergySpec {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.activity_fraction) || !(self.duration >= 0.0) {
            return Err(Error::InvalidParams(
                "activity fraction must lie in [0, 1] and duration be >= 0".into(),
            ));
        }
        Ok(())
    }
}

/// `(task power, task energy)` for a workload active a fraction of the time.
pub fn task_energy(p_avg_continuous: f64, spec: &TaskEnergySpec) -> (f64, f64) {
    let power = spec.activity_fraction * p_avg_continuous;
    (power, power * spec.duration)
}

/// Energy efficiency in GOP/s/W when one spike event is one operation.
pub fn spike_event_efficiency(e_per_spike_event: f64) -> f64 {
    1e-9 / e_per_spike_event
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MeshTechnology {
    /// Thermo-optic phase shifters: continuous holding power.
    Thermo,
    /// Latching MEMS phase shifters.
    Mems,
    /// Optical phase-change material.
    Opcm,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeshEnergyParams {
    pub n_mzi: u64,
    pub technology: MeshTechnology,
    #[serde(rename = "p_static_per_mzi_watts")]
    pub p_static_per_mzi: f64,
    #[serde(rename = "e_reconfig_joules")]
    pub e_reconfig: f64,
    /// Reconfigurations per second of each MZI.
    #[serde(rename = "reconfig_rate_hz")]
    pub reconfig_rate: f64,
}

impl MeshEnergyParams {
    pub fn thermo(n_mzi: u64) -> Self {
        Self {
            n_mzi,
            technology: MeshTechnology::Thermo,
            p_static_per_mzi: 10e-3,
            e_reconfig: 0.0,
            reconfig_rate: 0.0,
        }
    }

    pub fn mems(n_mzi: u64, reconfig_rate: f64) -> Self {
        Self {
            n_mzi,
            technology: MeshTechnology::Mems,
            p_static_per_mzi: 0.0,
            e_reconfig: 1e-12,
            reconfig_rate,
        }
    }
}

/// Power needed to hold (thermo-optic) or keep reconfiguring (latching) a mesh.
pub fn mesh_static_power(m: &MeshEnergyParams) -> f64 {
    let n = m.n_mzi as f64;
    match m.technology {
        MeshTechnology::Thermo => n * m.p_static_per_mzi,
        MeshTechnology::Mems | MeshTechnology::Opcm => n * m.e_reconfig * m.reconfig_rate,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnergyReport {
    pub name: String,
    pub q_threshold: f64,
    pub q_per_spike: f64,
    /// Value used downstream (override when the sheet has one).
    pub e_dyn_in: f64,
    /// Value implied by capacitance, threshold and responsivity.
    pub e_dyn_in_computed: f64,
    pub e_dyn_out: f64,
    pub p_dyn_in: f64,
    pub p_dyn_out: f64,
    pub p_static_off: f64,
    pub p_static_on: f64,
    pub duty_fraction: f64,
    pub p_avg: f64,
    pub published: PublishedFigures,
    pub notes: Vec<String>,
}

/// Evaluate the whole chain for a sheet at its maximum duty fraction.
pub fn energy_report(p: &DeviceEnergyParams) -> Result<EnergyReport> {
    p.validate()?;
    let q = charge_to_threshold(p);
    let e_in = e_dynamic_in(p);
    let e_in_computed = e_dynamic_in_computed(p);
    let dynp = dynamic_powers(p, e_in);
    let (off, on) = static_powers(p);
    let duty = max_duty_fraction(p, p.spikes_to_threshold);
    let avg = p_average(duty, dynp.p_dyn_out, on, off);

    let mut notes = Vec::new();
    if let Some(o) = p.e_dyn_in_override {
        notes.push(format!(
            "input energy per spike uses the sheet override {}; charge/responsivity gives {}",
            eng(o, "J"),
            eng(e_in_computed, "J")
        ));
    }
    if let Some(pub_avg) = p.published.p_avg {
        let rel = (avg - pub_avg) / pub_avg;
        if rel.abs() > 0.01 {
            notes.push(format!(
                "average power by formula is {} against a published {} ({:+.1}%)",
                eng(avg, "W"),
                eng(pub_avg, "W"),
                rel * 100.0
            ));
        }
    }
    Ok(EnergyReport {
        name: p.name.clone(),
        q_threshold: q,
        q_per_spike: q / p.spikes_to_threshold as f64,
        e_dyn_in: e_in,
        e_dyn_in_computed: e_in_computed,
        e_dyn_out: dynp.e_dyn_out,
        p_dyn_in: dynp.p_dyn_in,
        p_dyn_out: dynp.p_dyn_out,
        p_static_off: off,
        p_static_on: on,
        duty_fraction: duty,
        p_avg: avg,
        published: p.published,
        notes,
    })
}

/// Format with an engineering prefix, e.g. `21.09 fJ`.
pub fn eng(value: f64, unit: &str) -> String {
    const PREFIXES: [(f64, &str); 11] = [
        (1e12, "T"),
        (1e9, "G"),
        (1e6, "M"),
        (1e3, "k"),
        (1.0, ""),
        (1e-3, "m"),
        (1e-6, "µ"),
        (1e-9, "n"),
        (1e-12, "p"),
        (1e-15, "f"),
        (1e-18, "a"),
    ];
    if value == 0.0 || !value.is_finite() {
        return format!("{value} {unit}");
    }
    let mag = value.abs();
    let (scale, prefix) = PREFIXES
        .iter()
        .copied()
        .find(|(s, _)| mag >= *s * (1.0 - 1e-12))
        .unwrap_or((1e-18, "a"));
    format!("{:.4} {prefix}{unit}", value / scale).replace(".0000 ", " ")
}

/// Aligned text table in the row order of the foundry/nano comparison sheet.
pub fn render_table(
    sheets: &[(&DeviceEnergyParams, &EnergyReport)],
    task: Option<&[TaskEnergySpec]>,
) -> String {
    let mut rows: Vec<(String, Vec<String>)> = Vec::new();
    let mut row = |label: &str, f: &dyn Fn(usize) -> String| {
        rows.push((label.to_string(), (0..sheets.len()).map(f).collect()));
    };
    row("Maximum spiking rate", &|i| eng(sheets[i].0.max_rate, "Hz"));
    row("Spike width", &|i| eng(sheets[i].0.spike_width, "s"));
    row("C1", &|i| eng(sheets[i].0.c_main, "F"));
    row("PD load capacitance", &|i| eng(sheets[i].0.c_pd_load, "F"));
    row("PD responsivity", &|i| {
        format!("{} A/W", sheets[i].0.responsivity)
    });
    row("FET parasitic capacitance", &|i| {
        eng(sheets[i].0.c_fet_parasitic, "F")
    });
    row("Leakage current (supply)", &|i| {
        rail_list(&sheets[i].0.rails, |r| r.i_leak)
    });
    row("Neuron on current (supply)", &|i| {
        rail_list(&sheets[i].0.rails, |r| r.i_on)
    });
    row("Charge to threshold", &|i| {
        eng(sheets[i].1.q_threshold, "C")
    });
    row("Dynamic input energy", &|i| {
        let r = sheets[i].1;
        if sheets[i].0.e_dyn_in_override.is_some() {
            format!(
                "{}/spike (computed {})",
                eng(r.e_dyn_in, "J"),
                eng(r.e_dyn_in_computed, "J")
            )
        } else {
            format!("{}/spike", eng(r.e_dyn_in, "J"))
        }
    });
    row("Peak dynamic input power", &|i| {
        eng(sheets[i].1.p_dyn_in, "W")
    });
    row("Dynamic output energy", &|i| {
        format!("{}/spike", eng(sheets[i].1.e_dyn_out, "J"))
    });
    row("Peak dynamic output power", &|i| {
        eng(sheets[i].1.p_dyn_out, "W")
    });
    row("Static power when neuron is on", &|i| {
        eng(sheets[i].1.p_static_on, "W")
    });
    row("Static power when neuron is off", &|i| {
        eng(sheets[i].1.p_static_off, "W")
    });
    row("Continuous spiking average power", &|i| {
        let r = sheets[i].1;
        match r.published.p_avg {
            Some(p) => format!("{} (published {})", eng(r.p_avg, "W"), eng(p, "W")),
            None => eng(r.p_avg, "W"),
        }
    });
    if let Some(tasks) = task {
        row("Task average power", &|i| {
            let base = sheets[i].1.published.p_avg.unwrap_or(sheets[i].1.p_avg);
            eng(task_energy(base, &tasks[i]).0, "W")
        });
        row("Task total energy", &|i| {
            let base = sheets[i].1.published.p_avg.unwrap_or(sheets[i].1.p_avg);
            eng(task_energy(base, &tasks[i]).1, "J")
        });
    }

    let label_w = rows.iter().map(|r| r.0.chars().count()).max().unwrap_or(0);
    let col_w: Vec<usize> = (0..sheets.len())
        .map(|i| {
            rows.iter()
                .map(|r| r.1[i].chars().count())
                .chain(std::iter::once(sheets[i].0.name.chars().count()))
                .max()
                .unwrap_or(0)
        })
        .collect();
    let mut out = String::new();
    let _ = write!(out, "{:label_w$}", "");
    for (i, (s, _)) in sheets.iter().enumerate() {
        let _ = write!(out, "  {:>w$}", s.name, w = col_w[i]);
    }
    out.push('\n');
    for (label, cells) in &rows {
        let _ = write!(out, "{label:label_w$}");
        for (i, c) in cells.iter().enumerate() {
            let _ = write!(out, "  {:>w$}", c, w = col_w[i]);
        }
        out.push('\n');
    }
    out
}

fn rail_list(rails: &[Rail], f: impl Fn(&Rail) -> f64) -> String {
    rails
        .iter()
        .map(|r| format!("{} ({} V)", eng(f(r), "A"), r.voltage))
        .collect::<Vec<_>>()
        .join(", ")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rel(a: f64, b: f64) -> f64 {
        ((a - b) / b).abs()
    }

    #[test]
    fn charge_examples() {
        let f = DeviceEnergyParams::foundry();
        assert!(rel(charge_to_threshold(&f), 44.27e-15) < 1e-3);
        let n = DeviceEnergyParams::nano();
        assert!(rel(charge_to_threshold(&n), 60.11e-18) < 1e-3);
        let mut z = f.clone();
        z.c_main = 0.0;
        z.c_pd_load = 0.0;
        z.c_fet_parasitic = 0.0;
        assert_eq!(charge_to_threshold(&z), 0.0);
    }

    #[test]
    fn input_energy_examples() {
        let f = DeviceEnergyParams::foundry();
        let e = e_dynamic_in(&f);
        assert!(rel(e, 21.09e-15) < 5e-3, "{e}");
        let mut unit = f.clone();
        unit.responsivity = 1.0;
        unit.c_main = 3e-15;
        unit.c_pd_load = 0.0;
        unit.c_fet_parasitic = 0.0;
        unit.v_threshold = 1.0;
        assert!(rel(e_dynamic_in(&unit), 1e-15) < 1e-12);
        let n = DeviceEnergyParams::nano();
        assert_eq!(e_dynamic_in(&n), 200e-18);
        assert!(rel(e_dynamic_in_computed(&n), 20.04e-18) < 1e-3);
    }

    #[test]
    fn dynamic_power_examples() {
        let f = DeviceEnergyParams::foundry();
        let d = dynamic_powers(&f, 21.09e-15);
        assert!(rel(d.p_dyn_in, 2.11e-3) < 1e-2);
        assert!(rel(d.e_dyn_out, 211e-15) < 1e-2);
        assert!(rel(d.p_dyn_out, 21.1e-3) < 1e-2);
        let n = DeviceEnergyParams::nano();
        let d = dynamic_powers(&n, 200e-18);
        assert!(rel(d.p_dyn_in, 20e-6) < 1e-9);
        assert!(rel(d.e_dyn_out, 2e-15) < 1e-9);
        assert!(rel(d.p_dyn_out, 200e-6) < 1e-9);
        let mut one = f.clone();
        one.fanout = 1;
        assert_eq!(dynamic_powers(&one, 5e-15).e_dyn_out, 5e-15);
    }

    #[test]
    fn static_power_examples() {
        let (off, on) = static_powers(&DeviceEnergyParams::foundry());
        assert!(rel(off, 6.36e-6) < 1e-2);
        assert!(rel(on, 858e-6) < 1e-2);
        let (off, on) = static_powers(&DeviceEnergyParams::nano());
        assert!(rel(off, 14e-9) < 1e-9);
        assert!(rel(on, 43.78e-6) < 1e-3);
        let mut z = DeviceEnergyParams::nano();
        z.rails[0].i_leak = 0.0;
        z.rails[0].i_on = 0.0;
        assert_eq!(static_powers(&z), (0.0, 0.0));
    }

    #[test]
    fn average_power_examples() {
        let n = energy_report(&DeviceEnergyParams::nano()).unwrap();
        assert!(
            (8.13e-6..=8.14e-6 * 1.001).contains(&n.p_avg),
            "{}",
            n.p_avg
        );
        assert_eq!(p_average(0.0, 1.0, 2.0, 3.0), 3.0);
        assert_eq!(p_average(1.0, 1.0, 2.0, 3.0), 3.0);
        let f = energy_report(&DeviceEnergyParams::foundry()).unwrap();
        assert!(rel(f.p_avg, 737e-6) < 5e-3, "{}", f.p_avg);
        assert!(f.notes.iter().any(|n| n.contains("published")));
    }

    #[test]
    fn duty_examples() {
        let f = DeviceEnergyParams::foundry();
        assert!(rel(max_duty_fraction(&f, 3), 0.0333) < 1e-2);
        assert!(rel(max_duty_fraction(&f, 1), 0.10) < 1e-12);
        let mut slow = f.clone();
        slow.spike_width = 1e-3;
        slow.max_rate = 1e3;
        assert_eq!(max_duty_fraction(&slow, 1), 1.0);
    }

    #[test]
    fn task_examples() {
        let spec = TaskEnergySpec {
            activity_fraction: 0.086,
            duration: 31.3e-6 / 61.4e-6,
        };
        let (p, e) = task_energy(714e-6, &spec);
        assert!(rel(p, 61.4e-6) < 1e-2);
        assert!(rel(e, 31.3e-6) < 2e-2);
        let idle = TaskEnergySpec {
            activity_fraction: 0.0,
            duration: 1.0,
        };
        assert_eq!(task_energy(714e-6, &idle), (0.0, 0.0));
        assert!(TaskEnergySpec {
            activity_fraction: 1.5,
            duration: 1.0
        }
        .validate()
        .is_err());
    }

    #[test]
    fn efficiency_examples() {
        assert!(rel(spike_event_efficiency(21.09e-15), 4.74e4) < 1e-2);
        assert!(rel(spike_event_efficiency(200e-18), 5e6) < 1e-12);
        assert!(rel(spike_event_efficiency(1e-9), 1.0) < 1e-12);
    }

    #[test]
    fn mesh_examples() {
        assert!(rel(mesh_static_power(&MeshEnergyParams::thermo(100)), 1.0) < 1e-12);
        assert_eq!(mesh_static_power(&MeshEnergyParams::mems(100, 0.0)), 0.0);
        assert!(rel(mesh_static_power(&MeshEnergyParams::mems(100, 1e3)), 100e-9) < 1e-12);
    }

    #[test]
    fn eng_formatting() {
        assert_eq!(eng(21.09e-15, "J"), "21.0900 fJ");
        assert_eq!(eng(1.0, "W"), "1 W");
        assert_eq!(eng(858e-6, "W"), "858 µW");
    }

    #[test]
    fn table_has_published_side_by_side() {
        let f = DeviceEnergyParams::foundry();
        let n = DeviceEnergyParams::nano();
        let rf = energy_report(&f).unwrap();
        let rn = energy_report(&n).unwrap();
        let t = render_table(&[(&f, &rf), (&n, &rn)], None);
        assert!(t.contains("published 714 µW"));
        assert!(t.contains("computed"));
        let first = t.lines().nth(1).unwrap();
        assert!(first.starts_with("Maximum spiking rate"));
    }
}
