//! Optoelectronic behavioural neuron.
//!
//! ```text
//! R1 C1 dv/dt = R1 (I_exc - I_inh) - R1 K1 max{0, u - Vth1}^2 - v
//! R2 C2 du/dt = R2 K3 max{0, v - Vth3 - u}^2 - u
//! I_vcsel     = K2 max{0, v - Vth2}^2
//! ```
//!
//! Both state variables are clipped to `[0, Vd]` after every step.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Ratio between the smallest RC time constant and the largest admissible
/// integration step.
pub const STABILITY_RATIO: f64 = 20.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptoNeuronParams {
    #[serde(rename = "r1_ohms")]
    pub r1: f64,
    #[serde(rename = "c1_farads")]
    pub c1: f64,
    #[serde(rename = "r2_ohms")]
    pub r2: f64,
    #[serde(rename = "c2_farads")]
    pub c2: f64,
    /// Refractory drain transconductance (FET3).
    #[serde(rename = "k1_amps_per_volt2")]
    pub k1: f64,
    /// VCSEL drive transconductance (FET2).
    #[serde(rename = "k2_amps_per_volt2")]
    pub k2: f64,
    /// Refractory charging transconductance.
    #[serde(rename = "k3_amps_per_volt2")]
    pub k3: f64,
    #[serde(rename = "vth1_volts")]
    pub vth1: f64,
    #[serde(rename = "vth2_volts")]
    pub vth2: f64,
    #[serde(rename = "vth3_volts")]
    pub vth3: f64,
    /// Supply rail; both state variables are clipped to it.
    #[serde(rename = "vd_volts")]
    pub vd: f64,
}

impl OptoNeuronParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidParams(m.to_string()));
        let all = [
            self.r1, self.c1, self.r2, self.c2, self.k1, self.k2, self.k3, self.vth1, self.vth2,
            self.vth3, self.vd,
        ];
        if all.iter().any(|x| !x.is_finite()) {
            return bad("opto parameters must be finite");
        }
        if !(self.r1 > 0.0 && self.c1 > 0.0 && self.r2 > 0.0 && self.c2 > 0.0) {
            return bad("r1, c1, r2, c2 must be > 0");
        }
        if self.k1 < 0.0 || self.k2 < 0.0 || self.k3 < 0.0 {
            return bad("k1, k2, k3 must be >= 0");
        }
        for (name, v) in [
            ("vth1", self.vth1),
            ("vth2", self.vth2),
            ("vth3", self.vth3),
        ] {
            if !(v > 0.0 && v < self.vd) {
                return Err(Error::InvalidParams(format!("{name} must lie in (0, vd)")));
            }
        }
        Ok(())
    }

    pub fn tau_membrane(&self) -> f64 {
        self.r1 * self.c1
    }

    pub fn tau_refractory(&self) -> f64 {
        self.r2 * self.c2
    }

    /// Largest forward-Euler step accepted by [`step`].
    pub fn max_dt(&self) -> f64 {
        self.tau_membrane().min(self.tau_refractory()) / STABILITY_RATIO
    }

    /// VCSEL current with the membrane at the supply rail.
    pub fn peak_vcsel_current(&self) -> f64 {
        vcsel_current(self.vd, self)
    }

    /// Default output-spike detection current: 10% of the peak VCSEL current.
    pub fn default_detection_current(&self) -> f64 {
        0.1 * self.peak_vcsel_current()
    }

    /// Multiply every RC time constant by `factor` by scaling the capacitors.
    pub fn scale_time(&self, factor: f64) -> Result<Self> {
        if !(factor > 0.0 && factor.is_finite()) {
            return Err(Error::InvalidParams("time scale factor must be > 0".into()));
        }
        Ok(Self {
            c1: self.c1 * factor,
            c2: self.c2 * factor,
            ..*self
        })
    }
}

/// Free function form of [`OptoNeuronParams::scale_time`].
pub fn scale_time(p: &OptoNeuronParams, factor: f64) -> Result<OptoNeuronParams> {
    p.scale_time(factor)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct OptoNeuronState {
    pub v: f64,
    pub u: f64,
}

impl OptoNeuronState {
    pub const REST: Self = Self { v: 0.0, u: 0.0 };
}

/// Photocurrents on the excitatory and inhibitory detectors, both >= 0.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct DriveInput {
    pub i_exc: f64,
    pub i_inh: f64,
}

impl DriveInput {
    pub fn new(i_exc: f64, i_inh: f64) -> Self {
        Self { i_exc, i_inh }
    }

    pub fn excitatory(i: f64) -> Self {
        Self {
            i_exc: i,
            i_inh: 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Integrator {
    #[default]
    Euler,
    Rk4,
}

#[inline]
fn relu_sq(x: f64) -> f64 {
    if x > 0.0 {
        x * x
    } else {
        0.0
    }
}

/// Time derivatives `(dv/dt, du/dt)`.
#[inline]
pub fn derivatives(s: OptoNeuronState, drive: DriveInput, p: &OptoNeuronParams) -> (f64, f64) {
    let dv = (p.r1 * (drive.i_exc - drive.i_inh) - p.r1 * p.k1 * relu_sq(s.u - p.vth1) - s.v)
        / (p.r1 * p.c1);
    let du = (p.r2 * p.k3 * relu_sq(s.v - p.vth3 - s.u) - s.u) / (p.r2 * p.c2);
    (dv, du)
}

#[inline]
pub fn vcsel_current(v: f64, p: &OptoNeuronParams) -> f64 {
    p.k2 * relu_sq(v - p.vth2)
}

#[inline]
fn clip(s: OptoNeuronState, vd: f64) -> OptoNeuronState {
    OptoNeuronState {
        v: s.v.clamp(0.0, vd),
        u: s.u.clamp(0.0, vd),
    }
}

/// Check `dt` against the stability precondition.
pub fn check_dt(dt: f64, p: &OptoNeuronParams) -> Result<()> {
    let limit = p.max_dt();
    if !(dt > 0.0) || dt > limit * (1.0 + 1e-12) {
        return Err(Error::Stability { dt, limit });
    }
    Ok(())
}

/// Advance one step of `dt` seconds without re-validating `dt`.
///
/// Callers that step many times check [`check_dt`] once up front.
#[inline]
pub fn advance(
    s: OptoNeuronState,
    drive: DriveInput,
    dt: f64,
    p: &OptoNeuronParams,
    integrator: Integrator,
) -> OptoNeuronState {
    let next = match integrator {
        Integrator::Euler => {
            let (dv, du) = derivatives(s, drive, p);
            OptoNeuronState {
                v: s.v + dt * dv,
                u: s.u + dt * du,
            }
        }
        Integrator::Rk4 => {
            let at = |k: (f64, f64), h: f64| OptoNeuronState {
                v: s.v + h * k.0,
                u: s.u + h * k.1,
            };
            let k1 = derivatives(s, drive, p);
            let k2 = derivatives(at(k1, dt / 2.0), drive, p);
            let k3 = derivatives(at(k2, dt / 2.0), drive, p);
            let k4 = derivatives(at(k3, dt), drive, p);
            OptoNeuronState {
                v: s.v + dt / 6.0 * (k1.0 + 2.0 * k2.0 + 2.0 * k3.0 + k4.0),
                u: s.u + dt / 6.0 * (k1.1 + 2.0 * k2.1 + 2.0 * k3.1 + k4.1),
            }
        }
    };
    clip(next, p.vd)
}

/// One forward-Euler step with clipping; returns the new state and the VCSEL
/// current at the updated membrane potential.
pub fn step(
    s: OptoNeuronState,
    drive: DriveInput,
    dt: f64,
    p: &OptoNeuronParams,
) -> Result<(OptoNeuronState, f64)> {
    step_with(s, drive, dt, p, Integrator::Euler)
}

pub fn step_with(
    s: OptoNeuronState,
    drive: DriveInput,
    dt: f64,
    p: &OptoNeuronParams,
    integrator: Integrator,
) -> Result<(OptoNeuronState, f64)> {
    check_dt(dt, p)?;
    if !(s.v.is_finite() && s.u.is_finite()) {
        return Err(Error::NonFinite("opto neuron state"));
    }
    let next = advance(s, drive, dt, p, integrator);
    Ok((next, vcsel_current(next.v, p)))
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;

    pub(crate) fn unit_params() -> OptoNeuronParams {
        OptoNeuronParams {
            r1: 1e4,
            c1: 1e-7,
            r2: 1e4,
            c2: 1e-7,
            k1: 1e-2,
            k2: 0.1,
            k3: 1e-3,
            vth1: 0.4,
            vth2: 0.65,
            vth3: 0.6,
            vd: 2.0,
        }
    }

    #[test]
    fn resting_fixed_point() {
        let p = unit_params();
        assert_eq!(
            derivatives(OptoNeuronState::REST, DriveInput::default(), &p),
            (0.0, 0.0)
        );
        let (s, i) = step(OptoNeuronState::REST, DriveInput::default(), p.max_dt(), &p).unwrap();
        assert_eq!(s, OptoNeuronState::REST);
        assert_eq!(i, 0.0);
    }

    #[test]
    fn balanced_drive_cancels() {
        let p = unit_params();
        let (dv, _) = derivatives(OptoNeuronState::REST, DriveInput::new(1e-6, 1e-6), &p);
        assert_eq!(dv, 0.0);
    }

    #[test]
    fn refractory_drain_is_non_positive() {
        let p = unit_params();
        let s = OptoNeuronState { v: 0.0, u: 1.0 };
        let (dv, _) = derivatives(s, DriveInput::default(), &p);
        let expected = -(p.k1 / p.c1) * (1.0 - p.vth1).powi(2);
        assert!((dv - expected).abs() <= 1e-9 * expected.abs());
        assert!(dv <= 0.0);
    }

    #[test]
    fn vcsel_examples() {
        let mut p = unit_params();
        assert_eq!(vcsel_current(0.5, &p), 0.0);
        assert_eq!(vcsel_current(p.vth2, &p), 0.0);
        p.k2 = 0.1;
        let i = vcsel_current(p.vth2 + 0.1, &p);
        assert!((i - 1e-3).abs() < 1e-15);
    }

    #[test]
    fn strong_drive_raises_output() {
        let p = unit_params();
        let s = OptoNeuronState {
            v: p.vth2 - 1e-3,
            u: 0.0,
        };
        let (next, i) = step(s, DriveInput::excitatory(1e-2), p.max_dt(), &p).unwrap();
        assert!(next.v > s.v);
        assert!(i > 0.0);
    }

    #[test]
    fn clip_ceiling_holds() {
        let p = unit_params();
        let s = OptoNeuronState { v: p.vd, u: 0.0 };
        let (next, _) = step(s, DriveInput::excitatory(1.0), p.max_dt(), &p).unwrap();
        assert_eq!(next.v, p.vd);
    }

    #[test]
    fn inhibition_at_rest_is_clipped() {
        let p = unit_params();
        let (s, _) = step(
            OptoNeuronState::REST,
            DriveInput::new(0.0, 1e-3),
            p.max_dt(),
            &p,
        )
        .unwrap();
        assert_eq!(s.v, 0.0);
    }

    #[test]
    fn rejects_large_dt() {
        let p = unit_params();
        let err = step(
            OptoNeuronState::REST,
            DriveInput::default(),
            p.max_dt() * 1.5,
            &p,
        );
        assert!(matches!(err, Err(Error::Stability { .. })));
    }

    #[test]
    fn zero_gain_is_pure_rc() {
        let mut p = unit_params();
        p.k1 = 0.0;
        p.k2 = 0.0;
        p.k3 = 0.0;
        p.validate().unwrap();
        let mut s = OptoNeuronState::REST;
        for _ in 0..2000 {
            let (n, i) = step(s, DriveInput::excitatory(1e-4), p.max_dt(), &p).unwrap();
            assert_eq!(i, 0.0);
            assert_eq!(n.u, 0.0);
            s = n;
        }
        // settles toward I R1 = 1 V
        assert!((s.v - 1.0).abs() < 0.01);
    }

    #[test]
    fn scale_time_identity_and_constants() {
        let p = unit_params();
        assert_eq!(p.scale_time(1.0).unwrap(), p);
        let q = p.scale_time(10.0).unwrap();
        assert!((q.tau_membrane() / p.tau_membrane() - 10.0).abs() < 1e-12);
        assert!((q.tau_refractory() / p.tau_refractory() - 10.0).abs() < 1e-12);
        assert_eq!(
            (q.k1, q.k2, q.k3, q.vth1, q.vth2, q.vth3),
            (p.k1, p.k2, p.k3, p.vth1, p.vth2, p.vth3)
        );
        assert!(p.scale_time(0.0).is_err());
    }

    #[test]
    fn validation_rejects_bad_thresholds() {
        let mut p = unit_params();
        p.vth2 = p.vd;
        assert!(p.validate().is_err());
        p = unit_params();
        p.c1 = 0.0;
        assert!(p.validate().is_err());
        p = unit_params();
        p.k3 = -1.0;
        assert!(p.validate().is_err());
    }
}
