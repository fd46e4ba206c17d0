use std::f64::consts::TAU;

use super::{DroopParams, SecondaryParams};

/// Instantaneous PCC power and voltage magnitude behind a first-order
/// low-pass filter.
#[derive(Debug, Clone)]
pub struct PowerMeter {
    cutoff_hz: f64,
    pub p: f64,
    pub q: f64,
    pub v: f64,
    pub p_filtered: f64,
    pub q_filtered: f64,
    pub v_filtered: f64,
}

impl PowerMeter {
    pub fn new(cutoff_hz: f64) -> Self {
        Self {
            cutoff_hz,
            p: 0.0,
            q: 0.0,
            v: 0.0,
            p_filtered: 0.0,
            q_filtered: 0.0,
            v_filtered: 0.0,
        }
    }

    /// Update from dq PCC voltage and output current (pu). Returns the
    /// filtered `(P, Q)`.
    pub fn update(&mut self, v_dq: (f64, f64), i_dq: (f64, f64), dt: f64) -> (f64, f64) {
        let (vd, vq) = v_dq;
        let (id, iq) = i_dq;
        self.p = vd * id + vq * iq;
        self.q = vq * id - vd * iq;
        self.v = vd.hypot(vq);
        // Exact discretization of 1/(1 + s/wc) under a held input.
        let alpha = 1.0 - (-TAU * self.cutoff_hz * dt).exp();
        self.p_filtered += alpha * (self.p - self.p_filtered);
        self.q_filtered += alpha * (self.q - self.q_filtered);
        self.v_filtered += alpha * (self.v - self.v_filtered);
        (self.p_filtered, self.q_filtered)
    }
}

/// Droop law: `f = f0 - mp (P - p0)`, `V = v0 - nq (Q - q0)`.
pub fn droop_primary(p_f: f64, q_f: f64, params: &DroopParams) -> (f64, f64) {
    (
        params.f0 - params.mp * (p_f - params.p0),
        params.v0 - params.nq * (q_f - params.q0),
    )
}

/// PI restoration of frequency and PCC voltage towards rated values.
#[derive(Debug, Clone)]
pub struct SecondaryControl {
    pub params: SecondaryParams,
    pub integ_f: f64,
    pub integ_v: f64,
}

impl SecondaryControl {
    pub fn new(params: SecondaryParams) -> Self {
        Self {
            params,
            integ_f: 0.0,
            integ_v: 0.0,
        }
    }

    /// Returns `(delta_f_hz, delta_v_pu)` and advances the integrators by `dt`.
    pub fn restore(&mut self, f_meas: f64, v_pcc: f64, dt: f64) -> (f64, f64) {
        let p = &self.params;
        if !p.enabled {
            return (0.0, 0.0);
        }
        let ef = p.f_rated - f_meas;
        let ev = p.v_rated - v_pcc;
        self.integ_f = (self.integ_f + p.ki_f * ef * dt).clamp(-p.limit_f_hz, p.limit_f_hz);
        self.integ_v = (self.integ_v + p.ki_v * ev * dt).clamp(-p.limit_v_pu, p.limit_v_pu);
        (p.kp_f * ef + self.integ_f, p.kp_v * ev + self.integ_v)
    }

    /// Output without advancing the integrators.
    pub fn hold(&self) -> (f64, f64) {
        if self.params.enabled {
            (self.integ_f, self.integ_v)
        } else {
            (0.0, 0.0)
        }
    }
}

pub fn wrap_angle(theta: f64) -> f64 {
    let w = theta.rem_euclid(TAU);
    // rem_euclid can round up to exactly TAU for tiny negative inputs.
    if w >= TAU {
        0.0
    } else {
        w
    }
}

/// Advance the internal angle at `f_total` and emit the dq voltage
/// reference `(v_total, 0)`.
pub fn reference_generator(f_total: f64, v_total: f64, theta: f64, dt: f64) -> (f64, (f64, f64)) {
    (wrap_angle(theta + TAU * f_total * dt), (v_total, 0.0))
}
