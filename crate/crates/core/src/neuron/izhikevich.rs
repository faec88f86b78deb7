//! Reference Izhikevich model in its usual units (mV, ms).

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IzhikevichParams {
    /// Recovery time scale (1/ms).
    pub a: f64,
    /// Recovery sensitivity to v.
    pub b: f64,
    /// Reset potential (mV).
    pub c: f64,
    /// Recovery increment on reset (mV).
    pub d: f64,
    #[serde(rename = "v_threshold_mv")]
    pub v_threshold: f64,
}

impl IzhikevichParams {
    pub fn regular_spiking() -> Self {
        Self {
            a: 0.02,
            b: 0.2,
            c: -65.0,
            d: 8.0,
            v_threshold: 30.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.a > 0.0) {
            return Err(Error::InvalidParams("izhikevich a must be > 0".into()));
        }
        if !(self.v_threshold > self.c) {
            return Err(Error::InvalidParams(
                "izhikevich v_threshold must exceed reset c".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IzhikevichState {
    pub v: f64,
    pub u: f64,
}

impl IzhikevichState {
    /// Resting state `v = c`, `u = b c`.
    pub fn resting(p: &IzhikevichParams) -> Self {
        Self {
            v: p.c,
            u: p.b * p.c,
        }
    }
}

pub fn derivatives(s: IzhikevichState, input: f64, p: &IzhikevichParams) -> (f64, f64) {
    let dv = 0.04 * s.v * s.v + 5.0 * s.v + 140.0 - s.u + input;
    let du = p.a * (p.b * s.v - s.u);
    (dv, du)
}

/// One forward-Euler step of `dt` ms followed by the threshold reset.
pub fn step(
    s: IzhikevichState,
    input: f64,
    dt: f64,
    p: &IzhikevichParams,
) -> Result<(IzhikevichState, bool)> {
    if !(s.v.is_finite() && s.u.is_finite() && input.is_finite()) {
        return Err(Error::NonFinite("izhikevich state or input"));
    }
    if !(dt >= 0.0) {
        return Err(Error::InvalidParams("dt must be >= 0".into()));
    }
    let (dv, du) = derivatives(s, input, p);
    let mut next = IzhikevichState {
        v: s.v + dt * dv,
        u: s.u + dt * du,
    };
    if !(next.v.is_finite() && next.u.is_finite()) {
        return Err(Error::NonFinite("izhikevich state diverged"));
    }
    let fired = next.v >= p.v_threshold;
    if fired {
        next.v = p.c;
        next.u += p.d;
    }
    Ok((next, fired))
}

/// Spike count under constant current for `duration` ms.
pub fn count_spikes(p: &IzhikevichParams, input: f64, dt: f64, duration: f64) -> Result<usize> {
    let steps = (duration / dt).round() as usize;
    let mut s = IzhikevichState::resting(p);
    let mut n = 0;
    for _ in 0..steps {
        let (next, fired) = step(s, input, dt, p)?;
        s = next;
        n += fired as usize;
    }
    Ok(n)
}
