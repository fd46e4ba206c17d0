use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BatteryParams {
    pub capacity_mwh: f64,
    pub soc_init: f64,
    pub p_discharge_max_mw: f64,
    pub p_charge_max_mw: f64,
    /// Pack internal resistance, ohms. Used for loss accounting only.
    pub r_internal: f64,
    /// Open-circuit voltage table as `(soc, volts)`, increasing in both.
    pub ocv: Vec<(f64, f64)>,
}

impl Default for BatteryParams {
    fn default() -> Self {
        Self {
            capacity_mwh: 20.0,
            soc_init: 0.8,
            p_discharge_max_mw: 40.0,
            p_charge_max_mw: 40.0,
            r_internal: 1e-3,
            ocv: vec![
                (0.0, 1000.0),
                (0.1, 1080.0),
                (0.5, 1150.0),
                (0.9, 1200.0),
                (1.0, 1230.0),
            ],
        }
    }
}

impl BatteryParams {
    pub fn validate(&self) -> Vec<String> {
        let mut out = Vec::new();
        if !(self.capacity_mwh > 0.0) {
            out.push("battery capacity must be > 0".to_string());
        }
        if !(0.0..=1.0).contains(&self.soc_init) {
            out.push(format!(
                "battery soc_init must be in [0, 1], got {}",
                self.soc_init
            ));
        }
        if !(self.p_discharge_max_mw >= 0.0 && self.p_charge_max_mw >= 0.0) {
            out.push("battery power limits must be >= 0".to_string());
        }
        if !(self.r_internal >= 0.0) {
            out.push("battery internal resistance must be >= 0".to_string());
        }
        if self.ocv.len() < 2
            || self
                .ocv
                .windows(2)
                .any(|w| !(w[1].0 > w[0].0) || !(w[1].1 >= w[0].1))
        {
            out.push(
                "battery OCV table must have >= 2 points, increasing in soc and volts".to_string(),
            );
        }
        out
    }
}

/// `soc - p_es dt / capacity` (discharge positive), clamped to [0, 1].
pub fn soc_update(soc: f64, capacity_mwh: f64, p_es_mw: f64, dt_s: f64) -> f64 {
    (soc - p_es_mw * dt_s / (capacity_mwh * 3600.0)).clamp(0.0, 1.0)
}

#[derive(Debug, Clone)]
pub struct Battery {
    pub params: BatteryParams,
    pub soc: f64,
    /// Accumulated resistive loss, MJ.
    pub loss_mj: f64,
}

impl Battery {
    pub fn new(params: BatteryParams) -> Self {
        let soc = params.soc_init;
        Self {
            params,
            soc,
            loss_mj: 0.0,
        }
    }

    pub fn ocv(&self) -> f64 {
        let t = &self.params.ocv;
        let s = self.soc;
        if s <= t[0].0 {
            return t[0].1;
        }
        let k = t.partition_point(|p| p.0 < s).min(t.len() - 1);
        let (a, b) = (t[k - 1], t[k]);
        a.1 + (s - a.0) / (b.0 - a.0) * (b.1 - a.1)
    }

    /// Deliver `p_es_mw` for `dt` seconds.
    pub fn apply(&mut self, p_es_mw: f64, dt: f64) {
        let i = p_es_mw * 1e6 / self.ocv();
        self.loss_mj += i * i * self.params.r_internal * dt * 1e-6;
        self.soc = soc_update(self.soc, self.params.capacity_mwh, p_es_mw, dt);
    }
}
