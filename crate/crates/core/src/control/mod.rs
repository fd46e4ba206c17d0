//! Grid-forming control chain: power measurement, P-f / Q-V droop,
//! secondary restoration, reference generation, nested dq voltage and
//! current loops, and the averaged inverter.
//!
//! Everything in this module works in per-unit on the plant rating, with
//! peak phase quantities as bases (amplitude-invariant Park), so dq
//! magnitudes read directly as per-unit peak values and
//! `P = v_d i_d + v_q i_q`.

mod inner;
mod inverter;
mod park;
mod primary;

pub use inner::{saturate_magnitude, InnerLoops};
pub use inverter::{averaged_inverter, InverterOutput};
pub use park::{abc_to_alpha_beta, abc_to_dq, alpha_beta_to_abc, dq_to_abc};
pub use primary::{droop_primary, reference_generator, wrap_angle, PowerMeter, SecondaryControl};

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DroopParams {
    /// Rated frequency, Hz.
    pub f0: f64,
    /// Voltage setpoint, pu.
    pub v0: f64,
    /// Hz per pu active power.
    pub mp: f64,
    /// pu voltage per pu reactive power.
    pub nq: f64,
    pub p0: f64,
    pub q0: f64,
    /// Cutoff of the first-order power measurement filter, Hz.
    pub lpf_cutoff_hz: f64,
}

impl Default for DroopParams {
    fn default() -> Self {
        Self {
            f0: 60.0,
            v0: 1.0,
            mp: 0.3,
            nq: 0.05,
            p0: 0.0,
            q0: 0.0,
            lpf_cutoff_hz: 5.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SecondaryParams {
    pub enabled: bool,
    pub kp_f: f64,
    pub ki_f: f64,
    pub kp_v: f64,
    pub ki_v: f64,
    pub f_rated: f64,
    pub v_rated: f64,
    /// Integrator clamp for the frequency channel, Hz.
    pub limit_f_hz: f64,
    /// Integrator clamp for the voltage channel, pu.
    pub limit_v_pu: f64,
}

impl Default for SecondaryParams {
    fn default() -> Self {
        Self {
            enabled: true,
            kp_f: 0.5,
            ki_f: 2.0,
            kp_v: 0.5,
            ki_v: 2.0,
            f_rated: 60.0,
            v_rated: 1.0,
            limit_f_hz: 2.0,
            limit_v_pu: 0.2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct InnerLoopParams {
    pub kp_v: f64,
    pub ki_v: f64,
    pub kp_i: f64,
    pub ki_i: f64,
    /// Magnitude limit on the current reference, pu.
    pub current_limit_pu: f64,
    /// Gain on the measured output current added to the current reference.
    pub load_current_feedforward: f64,
}

impl Default for InnerLoopParams {
    fn default() -> Self {
        Self {
            kp_v: 0.5,
            ki_v: 150.0,
            kp_i: 1.0,
            ki_i: 300.0,
            current_limit_pu: 1.2,
            load_current_feedforward: 1.0,
        }
    }
}

/// LC filter seen by the inner loops, per-unit on the plant rating.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FilterPu {
    pub l: f64,
    pub c: f64,
    pub r: f64,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ControlError {
    #[error("non-finite {what} at t = {t:.6} s")]
    NonFinite { what: &'static str, t: f64 },
    #[error("DC-link voltage must be positive, got {0} V")]
    DcLink(f64),
    #[error(transparent)]
    DcSide(#[from] crate::dcside::DcError),
}

impl DroopParams {
    pub fn validate(&self) -> Vec<String> {
        let mut out = Vec::new();
        if !(self.mp > 0.0) {
            out.push(format!("droop mp must be > 0, got {}", self.mp));
        }
        if !(self.nq >= 0.0) {
            out.push(format!("droop nq must be >= 0, got {}", self.nq));
        }
        if !(self.lpf_cutoff_hz > 0.0) {
            out.push(format!(
                "droop lpf_cutoff_hz must be > 0, got {}",
                self.lpf_cutoff_hz
            ));
        }
        if !(self.f0 > 0.0) || !(self.v0 > 0.0) {
            out.push("droop f0 and v0 must be positive".to_string());
        }
        out
    }
}

impl InnerLoopParams {
    pub fn validate(&self) -> Vec<String> {
        let gains = [self.kp_v, self.ki_v, self.kp_i, self.ki_i];
        let mut out = Vec::new();
        if gains.iter().any(|g| !(*g >= 0.0)) {
            out.push("inner loop gains must be >= 0".to_string());
        }
        if !(self.current_limit_pu > 0.0) {
            out.push(format!(
                "current limit must be > 0, got {}",
                self.current_limit_pu
            ));
        }
        out
    }
}

impl SecondaryParams {
    pub fn validate(&self) -> Vec<String> {
        let gains = [self.kp_f, self.ki_f, self.kp_v, self.ki_v];
        let mut out = Vec::new();
        if gains.iter().any(|g| !(*g >= 0.0)) {
            out.push("secondary gains must be >= 0".to_string());
        }
        if !(self.limit_f_hz >= 0.0) || !(self.limit_v_pu >= 0.0) {
            out.push("secondary limits must be >= 0".to_string());
        }
        out
    }
}
