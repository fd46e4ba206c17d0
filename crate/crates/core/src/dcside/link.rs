use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};

use super::DcError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DcLinkParams {
    pub capacitance_f: f64,
    pub v_set: f64,
    /// PI gains on the voltage error (pu of `v_set`) producing power in pu
    /// of the plant rating.
    pub kp: f64,
    pub ki: f64,
    /// Bandwidth of the inverter-power feedforward, Hz.
    pub feedforward_cutoff_hz: f64,
    pub regulation: bool,
    /// Fraction of `v_set` below which the run is aborted.
    pub collapse_fraction: f64,
}

impl Default for DcLinkParams {
    fn default() -> Self {
        Self {
            capacitance_f: 20.0,
            v_set: 1500.0,
            kp: 10.0,
            ki: 200.0,
            feedforward_cutoff_hz: 20.0,
            regulation: true,
            collapse_fraction: 0.5,
        }
    }
}

impl DcLinkParams {
    pub fn validate(&self) -> Vec<String> {
        let mut out = Vec::new();
        if !(self.capacitance_f > 0.0 && self.v_set > 0.0) {
            out.push("DC link capacitance and setpoint must be > 0".to_string());
        }
        if !(self.kp >= 0.0 && self.ki >= 0.0 && self.feedforward_cutoff_hz > 0.0) {
            out.push("DC link regulator gains must be >= 0 and cutoff > 0".to_string());
        }
        if !(0.0..1.0).contains(&self.collapse_fraction) {
            out.push("DC link collapse_fraction must be in [0, 1)".to_string());
        }
        out
    }
}

/// DC-link capacitor energy balance plus the buck-boost voltage regulator.
#[derive(Debug, Clone)]
pub struct DcLink {
    pub params: DcLinkParams,
    pub v_dc: f64,
    integ: f64,
    feedforward: f64,
    prev_net_mw: Option<f64>,
}

impl DcLink {
    pub fn new(params: DcLinkParams) -> Self {
        Self {
            v_dc: params.v_set,
            params,
            integ: 0.0,
            feedforward: 0.0,
            prev_net_mw: None,
        }
    }

    /// Total DC supply request (MW) so that the supply tracks the inverter
    /// draw and the link returns to its setpoint.
    pub fn regulate(&mut self, p_out_mw: f64, rated_mw: f64, dt: f64) -> f64 {
        let p = &self.params;
        let alpha = 1.0 - (-TAU * p.feedforward_cutoff_hz * dt).exp();
        self.feedforward += alpha * (p_out_mw - self.feedforward);
        if !p.regulation {
            return self.feedforward;
        }
        let e = (p.v_set - self.v_dc) / p.v_set;
        self.integ = (self.integ + p.ki * e * dt).clamp(-2.0, 2.0);
        self.feedforward + rated_mw * (p.kp * e + self.integ)
    }

    /// Integrate `C/2 d(v^2)/dt = p_in - p_out` over one step with the
    /// trapezoidal rule on the net power. Returns the new voltage.
    pub fn step(&mut self, p_in_mw: f64, p_out_mw: f64, dt: f64) -> f64 {
        let net = p_in_mw - p_out_mw;
        let prev = self.prev_net_mw.unwrap_or(net);
        let v2 = self.v_dc * self.v_dc + dt * (prev + net) * 1e6 / self.params.capacitance_f;
        self.prev_net_mw = Some(net);
        self.v_dc = v2.max(0.0).sqrt();
        self.v_dc
    }

    pub fn check(&self, t: f64) -> Result<(), DcError> {
        if self.v_dc < self.params.collapse_fraction * self.params.v_set {
            return Err(DcError::Collapse {
                v_dc: self.v_dc,
                v_set: self.params.v_set,
                t,
            });
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn balanced_power_holds_voltage() {
        let mut link = DcLink::new(DcLinkParams::default());
        for _ in 0..1000 {
            link.step(25.0, 25.0, 50e-6);
        }
        assert_eq!(link.v_dc, 1500.0);
    }

    #[test]
    fn unregulated_deficit_drains_linearly_in_v_squared() {
        let params = DcLinkParams {
            regulation: false,
            ..Default::default()
        };
        let mut link = DcLink::new(params);
        let (p_in, p_out, dt) = (10.0, 30.0, 1e-4);
        let v0 = link.v_dc;
        for k in 1..=500 {
            link.step(p_in, p_out, dt);
            let expected =
                v0 * v0 + 2.0 * (p_in - p_out) * 1e6 / params.capacitance_f * k as f64 * dt;
            assert!((link.v_dc * link.v_dc - expected).abs() < 1e-6 * v0 * v0);
        }
    }

    #[test]
    fn regulated_link_recovers_from_load_step() {
        let mut link = DcLink::new(DcLinkParams::default());
        let rated = 200.0;
        let dt = 50e-6;
        let mut p_out = 50.0;
        // Settle at the initial operating point.
        for _ in 0..40_000 {
            let p_in = link.regulate(p_out, rated, dt);
            link.step(p_in, p_out, dt);
        }
        p_out += 10.0;
        let mut v_min = f64::MAX;
        let mut recovered_at = None;
        for k in 0..40_000 {
            let p_in = link.regulate(p_out, rated, dt);
            let v = link.step(p_in, p_out, dt);
            v_min = v_min.min(v);
            let t = k as f64 * dt;
            let inside = (v - 1500.0).abs() / 1500.0 <= 0.02;
            match (recovered_at, inside) {
                (None, true) if v_min < 1500.0 => recovered_at = Some(t),
                (Some(_), false) => recovered_at = None,
                _ => {}
            }
        }
        assert!(v_min < 1500.0, "no dip");
        assert!(recovered_at.is_some_and(|t| t < 0.2), "{recovered_at:?}");
        assert!((link.v_dc - 1500.0).abs() < 1e-3);
    }

    #[test]
    fn collapse_detected() {
        let mut link = DcLink::new(DcLinkParams::default());
        link.v_dc = 700.0;
        assert!(matches!(link.check(1.0), Err(DcError::Collapse { .. })));
    }
}
