use oesnn_core::energy::{
    dynamic_powers, p_average, task_energy, DeviceEnergyParams, TaskEnergySpec,
};
use oesnn_core::learning::{normalize_row, stdp_update, StdpConfig};
use oesnn_core::neuron::izhikevich::{self, IzhikevichParams, IzhikevichState};
use oesnn_core::neuron::opto::{advance, derivatives};
use oesnn_core::neuron::{preset, DriveInput, Integrator, OptoNeuronParams, OptoNeuronState};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn params() -> impl Strategy<Value = OptoNeuronParams> {
    (
        1e3f64..1e6,
        1e-9f64..1e-6,
        1e3f64..1e6,
        1e-9f64..1e-6,
        1e-4f64..1.0,
        1e-3f64..1.0,
        1e-4f64..1.0,
        0.1f64..0.5,
        0.0f64..0.5,
        0.0f64..0.5,
    )
        .prop_map(
            |(r1, c1, r2, c2, k1, k2, k3, vth1, d2, d3)| OptoNeuronParams {
                r1,
                c1,
                r2,
                c2,
                k1,
                k2,
                k3,
                vth1,
                vth2: vth1 + d2,
                vth3: vth1 + d3,
                vd: 2.0,
            },
        )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn state_stays_within_rails(p in params(), seed in any::<u64>(), rk4 in any::<bool>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let scale = p.vd / p.r1;
        let integ = if rk4 { Integrator::Rk4 } else { Integrator::Euler };
        let mut s = OptoNeuronState::REST;
        for _ in 0..10_000 {
            let drive = DriveInput::new(rng.random::<f64>() * 100.0 * scale, rng.random::<f64>() * 100.0 * scale);
            let dt = p.max_dt() * rng.random::<f64>();
            s = advance(s, drive, dt, &p, integ);
            prop_assert!(s.v >= 0.0 && s.v <= p.vd, "v {}", s.v);
            prop_assert!(s.u >= 0.0 && s.u <= p.vd, "u {}", s.u);
        }
    }

    #[test]
    fn balanced_input_cancels_at_rest(p in params(), i in 0.0f64..1e-2) {
        let drive = DriveInput::new(i, i);
        prop_assert_eq!(derivatives(OptoNeuronState::REST, drive, &p), (0.0, 0.0));
        prop_assert_eq!(advance(OptoNeuronState::REST, drive, p.max_dt(), &p, Integrator::Euler), OptoNeuronState::REST);
    }

    #[test]
    fn time_rescaling_preserves_trajectory(k in 0.05f64..20.0, amp in 0.0f64..3.0) {
        let p = preset("regular").unwrap();
        let q = p.scale_time(k).unwrap();
        let drive = DriveInput::excitatory(amp * p.vth1 / p.r1);
        let (mut a, mut b) = (OptoNeuronState::REST, OptoNeuronState::REST);
        let dt = p.max_dt() / 2.0;
        for _ in 0..300 {
            a = advance(a, drive, dt, &p, Integrator::Euler);
            b = advance(b, drive, dt * k, &q, Integrator::Euler);
        }
        prop_assert!((a.v - b.v).abs() <= 1e-7 * p.vd, "{} vs {}", a.v, b.v);
        prop_assert!((a.u - b.u).abs() <= 1e-7 * p.vd, "{} vs {}", a.u, b.u);
    }

    #[test]
    fn izhikevich_reset_is_exact(v0 in 30.0f64..60.0, u0 in -20.0f64..20.0, i in -10.0f64..40.0) {
        let p = IzhikevichParams::regular_spiking();
        let s = IzhikevichState { v: v0, u: u0 };
        let (next, fired) = izhikevich::step(s, i, 0.1, &p).unwrap();
        let (_, du) = izhikevich::derivatives(s, i, &p);
        prop_assert!(fired);
        prop_assert_eq!(next.v, p.c);
        prop_assert_eq!(next.u, (u0 + 0.1 * du) + p.d);
    }

    #[test]
    fn stdp_update_respects_bounds(w in -1.0f64..2.0, x in 0.0f64..5.0, eta in 0.0f64..1.0, x_tar in 0.0f64..1.0) {
        let cfg = StdpConfig { eta_post: eta, x_tar, ..StdpConfig::default() };
        let got = stdp_update(w, x, &cfg);
        prop_assert!((0.0..=cfg.w_max).contains(&got));
    }

    #[test]
    fn normalization_hits_target(row in prop::collection::vec(0.0f64..1.0, 10..200), frac in 0.05f64..0.95) {
        let w_max = 1.0;
        let target = frac * row.len() as f64 * w_max;
        let mut r = row.clone();
        prop_assume!(row.iter().filter(|&&w| w > 0.0).count() as f64 * w_max > target);
        normalize_row(&mut r, target, w_max);
        let sum: f64 = r.iter().sum();
        prop_assert!((sum - target).abs() <= 1e-9 * target, "{sum} vs {target}");
        prop_assert!(r.iter().all(|&w| (0.0..=w_max).contains(&w)));
        // order is preserved
        for i in 0..row.len() {
            for j in 0..row.len() {
                if row[i] < row[j] {
                    prop_assert!(r[i] <= r[j]);
                }
            }
        }
    }

    #[test]
    fn energy_is_linear_and_monotone(e in 1e-18f64..1e-12, a in 0.0f64..1.0, b in 0.0f64..1.0, d in 0.0f64..10.0) {
        let p = DeviceEnergyParams::foundry();
        let one = dynamic_powers(&p, e);
        let two = dynamic_powers(&p, 2.0 * e);
        prop_assert!((two.p_dyn_out - 2.0 * one.p_dyn_out).abs() <= 1e-12 * two.p_dyn_out);
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        let p_lo = p_average(lo, one.p_dyn_out, 1e-5, 1e-8);
        let p_hi = p_average(hi, one.p_dyn_out, 1e-5, 1e-8);
        prop_assert!(p_lo <= p_hi);
        let (pw, en) = task_energy(p_hi, &TaskEnergySpec { activity_fraction: lo, duration: d });
        let (pw2, en2) = task_energy(p_hi, &TaskEnergySpec { activity_fraction: hi, duration: 2.0 * d });
        prop_assert!(pw <= pw2 && en <= en2);
        prop_assert!((en - pw * d).abs() <= 1e-12 * en.abs().max(1e-30));
    }
}
