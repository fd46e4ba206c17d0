//! Grid-forming PV-battery plant: the control chain and DC side wired to a
//! network terminal.

use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};

use crate::control::{
    abc_to_dq, averaged_inverter, droop_primary, reference_generator, ControlError, DroopParams,
    FilterPu, InnerLoopParams, InnerLoops, PowerMeter, SecondaryControl, SecondaryParams,
};
use crate::dcside::{DcSide, DcSideParams};
use crate::emt::{SourceFilter, TerminalController, TerminalMeasurement};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PlantParams {
    pub rated_mva: f64,
    /// Converter-side line-to-line voltage of the step-up transformer, kV.
    pub lv_kv: f64,
    /// LC filter on the converter side: henries, farads, ohms per phase.
    pub filter_l_h: f64,
    pub filter_c_f: f64,
    pub filter_r_ohm: f64,
    pub droop: DroopParams,
    pub secondary: SecondaryParams,
    pub inner: InnerLoopParams,
    /// Voltage reference ramps from zero over this time; secondary control
    /// is held until it ends.
    pub startup_ramp_s: f64,
    /// Run the outer control chain every n-th solver step.
    pub control_decimation: usize,
    /// Virtual resistance (pu) acting only on the DC component of the
    /// inverter current. The dq loops cannot see a DC offset in abc, so
    /// without it a transformer core energized with a flux offset stays
    /// offset. Zero disables.
    pub dc_suppression_pu: f64,
    pub dc: DcSideParams,
}

impl Default for PlantParams {
    fn default() -> Self {
        let (rated_mva, lv_kv, f) = (200.0, 0.69, 60.0);
        let z = lv_kv * lv_kv / rated_mva;
        let w = TAU * f;
        Self {
            rated_mva,
            lv_kv,
            filter_l_h: 0.10 * z / w,
            filter_c_f: 0.20 / (z * w),
            filter_r_ohm: 0.005 * z,
            droop: DroopParams::default(),
            secondary: SecondaryParams::default(),
            inner: InnerLoopParams::default(),
            startup_ramp_s: 0.1,
            control_decimation: 1,
            dc_suppression_pu: 1.0,
            dc: DcSideParams::default(),
        }
    }
}

impl PlantParams {
    pub fn validate(&self) -> Vec<String> {
        let mut out = Vec::new();
        if !(self.rated_mva > 0.0 && self.lv_kv > 0.0) {
            out.push("plant rated_mva and lv_kv must be > 0".to_string());
        }
        if !(self.filter_l_h > 0.0 && self.filter_c_f > 0.0 && self.filter_r_ohm >= 0.0) {
            out.push("plant filter L and C must be > 0 and R >= 0".to_string());
        }
        if !(self.startup_ramp_s >= 0.0) {
            out.push("plant startup_ramp_s must be >= 0".to_string());
        }
        if !(self.dc_suppression_pu >= 0.0 && self.dc_suppression_pu.is_finite()) {
            out.push("plant dc_suppression_pu must be >= 0".to_string());
        }
        if self.control_decimation == 0 {
            out.push("plant control_decimation must be >= 1".to_string());
        }
        out.extend(self.droop.validate());
        out.extend(self.secondary.validate());
        out.extend(self.inner.validate());
        out.extend(self.dc.validate());
        out
    }

    /// Filter in per-unit of the plant rating.
    pub fn filter_pu(&self, base_frequency_hz: f64) -> FilterPu {
        let z = self.lv_kv * self.lv_kv / self.rated_mva;
        let w = TAU * base_frequency_hz;
        FilterPu {
            l: self.filter_l_h * w / z,
            c: self.filter_c_f * w * z,
            r: self.filter_r_ohm / z,
        }
    }
}

/// Per-unit bases on the grid side of the step-up transformer.
#[derive(Debug, Clone, Copy)]
struct Bases {
    v_peak: f64,
    i_peak: f64,
    /// Grid-side over converter-side voltage.
    turns: f64,
}

#[derive(Debug, Clone)]
pub struct GridFormingPlant {
    pub params: PlantParams,
    base_frequency_hz: f64,
    bases: Bases,
    pub meter: PowerMeter,
    pub secondary: SecondaryControl,
    pub inner: InnerLoops,
    pub dc: DcSide,
    /// Angle of the reference frame at the current step.
    pub theta: f64,
    pub f_total: f64,
    pub v_total: f64,
    cmd: (f64, f64),
    pub clamped: bool,
    pub v_dc: f64,
    /// Largest current-reference magnitude seen, pu.
    pub max_i_ref: f64,
    dc_offset: CycleMean,
}

/// Per-phase mean over the most recent fundamental cycle.
#[derive(Debug, Clone)]
struct CycleMean {
    samples: Vec<[f64; 3]>,
    next: usize,
    filled: bool,
    sum: [f64; 3],
}

impl CycleMean {
    fn new() -> Self {
        Self {
            samples: Vec::new(),
            next: 0,
            filled: false,
            sum: [0.0; 3],
        }
    }

    fn push(&mut self, x: [f64; 3], n: usize) -> [f64; 3] {
        if self.samples.len() != n {
            *self = Self::new();
            self.samples = vec![[0.0; 3]; n.max(1)];
        }
        let old = std::mem::replace(&mut self.samples[self.next], x);
        for k in 0..3 {
            self.sum[k] += x[k] - old[k];
        }
        self.next += 1;
        if self.next == self.samples.len() {
            self.next = 0;
            self.filled = true;
            // Resum once per cycle to keep rounding from accumulating.
            self.sum = self
                .samples
                .iter()
                .fold([0.0; 3], |a, s| [a[0] + s[0], a[1] + s[1], a[2] + s[2]]);
        }
        let len = if self.filled {
            self.samples.len()
        } else {
            self.next
        };
        self.sum.map(|s| s / len as f64)
    }
}

impl GridFormingPlant {
    /// Plant attached to a terminal of `terminal_kv` line-to-line.
    pub fn new(params: PlantParams, terminal_kv: f64, base_frequency_hz: f64) -> Self {
        let v_peak = terminal_kv * 1e3 * (2.0f64 / 3.0).sqrt();
        let bases = Bases {
            v_peak,
            i_peak: params.rated_mva * 1e6 / (1.5 * v_peak),
            turns: terminal_kv / params.lv_kv,
        };
        let filter = params.filter_pu(base_frequency_hz);
        Self {
            meter: PowerMeter::new(params.droop.lpf_cutoff_hz),
            secondary: SecondaryControl::new(params.secondary),
            inner: InnerLoops::new(params.inner, filter),
            dc: DcSide::new(&params.dc, params.rated_mva),
            theta: 0.0,
            f_total: params.droop.f0,
            v_total: 0.0,
            cmd: (0.0, 0.0),
            clamped: false,
            v_dc: params.dc.link.v_set,
            max_i_ref: 0.0,
            dc_offset: CycleMean::new(),
            base_frequency_hz,
            bases,
            params,
        }
    }

    /// One plant per source attachment of `case`, in order.
    pub fn for_case(case: &crate::network::NetworkCase) -> Vec<Self> {
        case.sources
            .iter()
            .map(|s| {
                let kv = case.bus(&s.bus).map_or(1.0, |b| b.nominal_kv);
                Self::new(s.plant.clone(), kv, case.base_frequency_hz)
            })
            .collect()
    }

    fn ramp(&self, t: f64) -> f64 {
        if self.params.startup_ramp_s > 0.0 {
            (t / self.params.startup_ramp_s).min(1.0)
        } else {
            1.0
        }
    }

    fn outer_step(&mut self, m: &TerminalMeasurement, dt: f64) -> Result<(), ControlError> {
        let b = self.bases;
        let pu = |x: [f64; 3], base: f64| x.map(|y| y / base);
        let v = abc_to_dq(pu(m.v_abc, b.v_peak), self.theta);
        let i_inv = abc_to_dq(pu(m.i_inv_abc, b.i_peak), self.theta);
        let i_out = abc_to_dq(pu(m.i_out_abc, b.i_peak), self.theta);

        let (p_f, q_f) = self.meter.update(v, i_out, dt);
        let (f_g, v_g) = droop_primary(p_f, q_f, &self.params.droop);
        let (df, dv) = if m.t >= self.params.startup_ramp_s {
            self.secondary
                .restore(self.f_total, self.meter.v_filtered, dt)
        } else {
            self.secondary.hold()
        };
        self.f_total = f_g + df;
        self.v_total = (v_g + dv) * self.ramp(m.t);
        if !self.f_total.is_finite() || !self.v_total.is_finite() {
            return Err(ControlError::NonFinite {
                what: "frequency/voltage reference",
                t: m.t,
            });
        }
        let w = self.f_total / self.base_frequency_hz;
        self.cmd = self
            .inner
            .step((self.v_total, 0.0), v, i_inv, i_out, w, dt, m.t)?;
        self.max_i_ref = self
            .max_i_ref
            .max(self.inner.i_ref.0.hypot(self.inner.i_ref.1));
        Ok(())
    }

    /// Power delivered by the bridge over the last step, MW.
    fn bridge_power_mw(m: &TerminalMeasurement) -> f64 {
        (0..3).map(|k| m.e_abc[k] * m.i_inv_abc[k]).sum::<f64>() * 1e-6
    }
}

impl TerminalController for GridFormingPlant {
    fn filter(&self) -> SourceFilter {
        let n2 = self.bases.turns * self.bases.turns;
        SourceFilter {
            r: self.params.filter_r_ohm * n2,
            l: self.params.filter_l_h * n2,
            c: self.params.filter_c_f / n2,
        }
    }

    fn control(&mut self, m: &TerminalMeasurement, dt: f64) -> Result<[f64; 3], ControlError> {
        let decim = self.params.control_decimation.max(1) as u64;
        if m.step.is_multiple_of(decim) {
            self.outer_step(m, dt * decim as f64)?;
        }
        self.v_dc = self.dc.step(Self::bridge_power_mw(m), m.t, dt)?;
        let (theta, _) = reference_generator(self.f_total, self.v_total, self.theta, dt);
        self.theta = theta;
        let out = averaged_inverter(
            self.cmd,
            self.theta,
            self.v_dc,
            self.bases.turns,
            self.bases.v_peak,
        )?;
        self.clamped = out.clamped;
        let mut e = out.v_abc;
        if self.params.dc_suppression_pu > 0.0 {
            let n = (1.0 / (self.base_frequency_hz * dt)).round() as usize;
            let i_dc = self.dc_offset.push(m.i_inv_abc, n);
            let r = self.params.dc_suppression_pu * self.bases.v_peak / self.bases.i_peak;
            for k in 0..3 {
                e[k] -= r * i_dc[k];
            }
        }
        Ok(e)
    }

    fn signal_names(&self) -> Vec<String> {
        [
            "f_hz",
            "p_mw",
            "q_mvar",
            "v_pcc_pu",
            "p_pv_mw",
            "p_es_mw",
            "pv_available_mw",
            "v_dc",
            "soc",
            "i_ref_pu",
            "clamp",
            "shortfall",
        ]
        .map(String::from)
        .to_vec()
    }

    fn signals(&self, out: &mut Vec<f64>) {
        let s = self.params.rated_mva;
        let a = self.dc.allocation;
        out.extend([
            self.f_total,
            self.meter.p * s,
            self.meter.q * s,
            self.meter.v,
            a.p_pv,
            a.p_es,
            self.dc.pv_available_mw,
            self.v_dc,
            self.dc.battery.soc,
            self.inner.i_ref.0.hypot(self.inner.i_ref.1),
            f64::from(u8::from(self.clamped)),
            f64::from(u8::from(a.shortfall())),
        ]);
    }
}
