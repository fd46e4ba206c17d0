//! Single-diode PV module scaled to an array.

use serde::{Deserialize, Serialize};

const BOLTZMANN: f64 = 1.380_649e-23;
const ELECTRON_CHARGE: f64 = 1.602_176_634e-19;
const T_REF_C: f64 = 25.0;
const G_REF: f64 = 1000.0;

/// Module-level single-diode parameters at standard test conditions.
/// Defaults are a common 200 W polycrystalline module.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PvModule {
    /// Photo-current at 1000 W/m^2, 25 C, amperes.
    pub i_ph_ref: f64,
    pub v_oc_ref: f64,
    /// Temperature coefficient of short-circuit current, A/K.
    pub ki_isc: f64,
    /// Temperature coefficient of open-circuit voltage, V/K.
    pub kv_voc: f64,
    pub ideality: f64,
    pub cells_in_series: u32,
    pub r_series: f64,
    pub r_shunt: f64,
}

impl Default for PvModule {
    fn default() -> Self {
        Self {
            i_ph_ref: 8.214,
            v_oc_ref: 32.9,
            ki_isc: 0.0032,
            kv_voc: -0.123,
            ideality: 1.3,
            cells_in_series: 54,
            r_series: 0.221,
            r_shunt: 415.405,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PvArray {
    pub module: PvModule,
    pub modules_series: u32,
    pub modules_parallel: u32,
    /// Nameplate rating, MW (informational; available power comes from the curve).
    pub rated_mw: f64,
}

impl Default for PvArray {
    fn default() -> Self {
        Self {
            module: PvModule::default(),
            modules_series: 50,
            modules_parallel: 13_000,
            rated_mw: 130.0,
        }
    }
}

/// Temperature- and irradiance-adjusted diode constants for one module.
#[derive(Debug, Clone, Copy)]
struct Operating {
    i_ph: f64,
    i_0: f64,
    a_vt: f64,
    r_s: f64,
    r_p: f64,
}

impl PvModule {
    fn operating(&self, irradiance: f64, temperature_c: f64) -> Operating {
        let t_k = temperature_c + 273.15;
        let dt = temperature_c - T_REF_C;
        let vt = self.cells_in_series as f64 * BOLTZMANN * t_k / ELECTRON_CHARGE;
        let a_vt = self.ideality * vt;
        let i_sc_t = self.i_ph_ref + self.ki_isc * dt;
        let v_oc_t = self.v_oc_ref + self.kv_voc * dt;
        Operating {
            i_ph: i_sc_t * irradiance.max(0.0) / G_REF,
            i_0: i_sc_t / ((v_oc_t / a_vt).exp() - 1.0),
            a_vt,
            r_s: self.r_series,
            r_p: self.r_shunt,
        }
    }
}

impl Operating {
    fn residual(&self, v: f64, i: f64) -> (f64, f64) {
        let x = (v + i * self.r_s) / self.a_vt;
        let e = x.exp();
        let f = self.i_ph - self.i_0 * (e - 1.0) - (v + i * self.r_s) / self.r_p - i;
        let df = -self.i_0 * e * self.r_s / self.a_vt - self.r_s / self.r_p - 1.0;
        (f, df)
    }

    /// Module current at terminal voltage `v`. The residual is strictly
    /// decreasing in `i`, so a bracketed Newton iteration always converges.
    fn current(&self, v: f64) -> f64 {
        let mut hi = self.i_ph + 1.0;
        let mut lo = -1.0;
        while self.residual(v, lo).0 < 0.0 {
            lo = 2.0 * lo - 1.0;
        }
        let mut i = self.i_ph.min(hi);
        for _ in 0..100 {
            let (f, df) = self.residual(v, i);
            if f > 0.0 {
                lo = i;
            } else {
                hi = i;
            }
            let mut next = i - f / df;
            if !(next > lo && next < hi) {
                next = 0.5 * (lo + hi);
            }
            if (next - i).abs() <= 1e-13 * (1.0 + i.abs()) {
                return next;
            }
            i = next;
        }
        i
    }
}

impl PvArray {
    /// Array current (A) at array voltage `v` (V).
    pub fn current(&self, v: f64, irradiance: f64, temperature_c: f64) -> f64 {
        let op = self.module.operating(irradiance, temperature_c);
        let v_mod = v / self.modules_series as f64;
        op.current(v_mod) * self.modules_parallel as f64
    }

    pub fn power(&self, v: f64, irradiance: f64, temperature_c: f64) -> f64 {
        v * self.current(v, irradiance, temperature_c)
    }

    /// Open-circuit array voltage by bisection on `i(v) = 0`.
    pub fn open_circuit_voltage(&self, irradiance: f64, temperature_c: f64) -> f64 {
        let op = self.module.operating(irradiance, temperature_c);
        if op.i_ph <= 0.0 {
            return 0.0;
        }
        let mut lo = 0.0;
        let mut hi = self.module.v_oc_ref * 2.0;
        while op.current(hi) > 0.0 {
            hi *= 2.0;
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if op.current(mid) > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo < 1e-12 * hi {
                break;
            }
        }
        0.5 * (lo + hi) * self.modules_series as f64
    }

    /// Maximum power point `(v, p)` in volts and watts, by golden-section
    /// search on the unimodal P(v) curve.
    pub fn max_power_point(&self, irradiance: f64, temperature_c: f64) -> (f64, f64) {
        let v_oc = self.open_circuit_voltage(irradiance, temperature_c);
        if v_oc <= 0.0 {
            return (0.0, 0.0);
        }
        let p = |v: f64| self.power(v, irradiance, temperature_c);
        let ratio = 0.5 * (5f64.sqrt() - 1.0);
        let (mut a, mut b) = (0.0, v_oc);
        let mut c = b - ratio * (b - a);
        let mut d = a + ratio * (b - a);
        let (mut pc, mut pd) = (p(c), p(d));
        while b - a > 1e-9 * v_oc {
            if pc > pd {
                b = d;
                d = c;
                pd = pc;
                c = b - ratio * (b - a);
                pc = p(c);
            } else {
                a = c;
                c = d;
                pc = pd;
                d = a + ratio * (b - a);
                pd = p(d);
            }
        }
        let v = 0.5 * (a + b);
        (v, p(v))
    }

    pub fn validate(&self) -> Vec<String> {
        let m = &self.module;
        let mut out = Vec::new();
        if self.modules_series == 0 || self.modules_parallel == 0 || m.cells_in_series == 0 {
            out.push("PV module counts must be positive".to_string());
        }
        if !(m.i_ph_ref > 0.0 && m.v_oc_ref > 0.0 && m.ideality > 0.0 && m.r_shunt > 0.0) {
            out.push("PV module parameters must be positive".to_string());
        }
        if !(m.r_series >= 0.0) {
            out.push("PV series resistance must be >= 0".to_string());
        }
        out
    }
}
