//! DC side of the plant: PV array and battery behind averaged converters on
//! a shared, regulated DC link.
//!
//! Storage is the first supplier. PV only picks up what exceeds the
//! battery's discharge limit (or everything, once the battery is empty).

mod battery;
mod link;
mod pv;

pub use battery::{soc_update, Battery, BatteryParams};
pub use link::{DcLink, DcLinkParams};
pub use pv::{PvArray, PvModule};

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum DcError {
    #[error("DC link collapsed to {v_dc:.1} V (setpoint {v_set:.1} V) at t = {t:.6} s: supply cannot cover the inverter")]
    Collapse { v_dc: f64, v_set: f64, t: f64 },
    #[error("invalid environment profile: {0}")]
    Profile(String),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Allocation {
    pub p_es: f64,
    pub p_pv: f64,
    /// Requested power neither source could cover.
    pub deficit: f64,
}

impl Allocation {
    pub fn shortfall(&self) -> bool {
        self.deficit > 0.0
    }
}

/// Split a DC power request (MW) between storage and PV.
///
/// A negative request charges the battery within its charge limit.
pub fn allocate_power(p_req: f64, battery: &Battery, pv_available: f64) -> Allocation {
    let pv_available = pv_available.max(0.0);
    if p_req < 0.0 {
        let p_es = if battery.soc < 1.0 {
            p_req.max(-battery.params.p_charge_max_mw)
        } else {
            0.0
        };
        return Allocation {
            p_es,
            p_pv: 0.0,
            deficit: 0.0,
        };
    }
    let p_es = if battery.soc > 0.0 {
        p_req.min(battery.params.p_discharge_max_mw)
    } else {
        0.0
    };
    let p_pv = (p_req - p_es).min(pv_available);
    let deficit = p_req - p_es - p_pv;
    Allocation {
        p_es,
        p_pv,
        deficit: if deficit > 0.0 { deficit } else { 0.0 },
    }
}

/// Irradiance and temperature seen by the array.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Environment {
    Constant {
        irradiance_wm2: f64,
        temperature_c: f64,
    },
    /// Rows of `(time_s, irradiance_wm2, temperature_c)`, linearly
    /// interpolated and held flat outside the covered span.
    Profile(Vec<(f64, f64, f64)>),
}

impl Default for Environment {
    fn default() -> Self {
        Environment::Constant {
            irradiance_wm2: 1000.0,
            temperature_c: 25.0,
        }
    }
}

impl Environment {
    /// Parse a `time_s,irradiance_wm2,temperature_c` CSV with a header row.
    pub fn from_csv(text: &str) -> Result<Self, DcError> {
        let mut rows = Vec::new();
        for (n, line) in text.lines().enumerate().skip(1) {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let fields: Vec<f64> = line
                .split(',')
                .map(|f| f.trim().parse::<f64>())
                .collect::<Result<_, _>>()
                .map_err(|e| DcError::Profile(format!("line {}: {e}", n + 1)))?;
            if fields.len() != 3 {
                return Err(DcError::Profile(format!(
                    "line {}: expected 3 fields",
                    n + 1
                )));
            }
            rows.push((fields[0], fields[1], fields[2]));
        }
        let env = Environment::Profile(rows);
        env.check()?;
        Ok(env)
    }

    pub fn check(&self) -> Result<(), DcError> {
        match self {
            Environment::Constant { irradiance_wm2, .. } if *irradiance_wm2 < 0.0 => {
                Err(DcError::Profile("negative irradiance".into()))
            }
            Environment::Constant { .. } => Ok(()),
            Environment::Profile(rows) => {
                if rows.is_empty() {
                    return Err(DcError::Profile("empty profile".into()));
                }
                if rows.windows(2).any(|w| w[1].0 <= w[0].0) {
                    return Err(DcError::Profile("times must be strictly increasing".into()));
                }
                if rows.iter().any(|r| r.1 < 0.0) {
                    return Err(DcError::Profile("negative irradiance".into()));
                }
                Ok(())
            }
        }
    }

    pub fn at(&self, t: f64) -> (f64, f64) {
        match self {
            Environment::Constant {
                irradiance_wm2,
                temperature_c,
            } => (*irradiance_wm2, *temperature_c),
            Environment::Profile(rows) => {
                let first = rows[0];
                let last = rows[rows.len() - 1];
                if t <= first.0 {
                    return (first.1, first.2);
                }
                if t >= last.0 {
                    return (last.1, last.2);
                }
                let k = rows.partition_point(|r| r.0 <= t);
                let (a, b) = (rows[k - 1], rows[k]);
                let w = (t - a.0) / (b.0 - a.0);
                (a.1 + w * (b.1 - a.1), a.2 + w * (b.2 - a.2))
            }
        }
    }
}

/// Everything on the DC side of one plant.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DcSideParams {
    pub link: DcLinkParams,
    pub pv: PvArray,
    pub battery: BatteryParams,
    pub environment: Environment,
}

impl DcSideParams {
    pub fn validate(&self) -> Vec<String> {
        let mut out = self.link.validate();
        out.extend(self.pv.validate());
        out.extend(self.battery.validate());
        if let Err(e) = self.environment.check() {
            out.push(e.to_string());
        }
        out
    }
}

/// Live DC-side state for one plant.
#[derive(Debug, Clone)]
pub struct DcSide {
    pub link: DcLink,
    pub battery: Battery,
    pub pv: PvArray,
    pub environment: Environment,
    /// Last commanded split.
    pub allocation: Allocation,
    pub pv_available_mw: f64,
    mpp_cache: Option<((f64, f64), f64)>,
    rated_mw: f64,
}

impl DcSide {
    pub fn new(params: &DcSideParams, rated_mw: f64) -> Self {
        Self {
            link: DcLink::new(params.link),
            battery: Battery::new(params.battery.clone()),
            pv: params.pv,
            environment: params.environment.clone(),
            allocation: Allocation {
                p_es: 0.0,
                p_pv: 0.0,
                deficit: 0.0,
            },
            pv_available_mw: 0.0,
            mpp_cache: None,
            rated_mw,
        }
    }

    fn pv_available(&mut self, t: f64) -> f64 {
        let env = self.environment.at(t);
        match self.mpp_cache {
            Some((key, p)) if key == env => p,
            _ => {
                let (_, p_w) = self.pv.max_power_point(env.0, env.1);
                let p = p_w * 1e-6;
                self.mpp_cache = Some((env, p));
                p
            }
        }
    }

    /// Advance one step given the power drawn by the inverter bridge (MW).
    /// Returns the new DC-link voltage.
    pub fn step(&mut self, p_out_mw: f64, t: f64, dt: f64) -> Result<f64, DcError> {
        let p_req = self.link.regulate(p_out_mw, self.rated_mw, dt);
        self.pv_available_mw = self.pv_available(t);
        let alloc = allocate_power(p_req, &self.battery, self.pv_available_mw);
        self.battery.apply(alloc.p_es, dt);
        self.allocation = alloc;
        let v = self.link.step(alloc.p_es + alloc.p_pv, p_out_mw, dt);
        self.link.check(t)?;
        Ok(v)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn battery(soc: f64, p_max: f64) -> Battery {
        Battery::new(BatteryParams {
            soc_init: soc,
            p_discharge_max_mw: p_max,
            ..Default::default()
        })
    }

    #[test]
    fn storage_alone_below_its_limit() {
        let a = allocate_power(30.0, &battery(0.8, 40.0), 100.0);
        assert_eq!((a.p_es, a.p_pv, a.shortfall()), (30.0, 0.0, false));
    }

    #[test]
    fn remainder_goes_to_pv() {
        let a = allocate_power(70.0, &battery(0.8, 40.0), 50.0);
        assert_eq!((a.p_es, a.p_pv, a.shortfall()), (40.0, 30.0, false));
    }

    #[test]
    fn empty_battery_leaves_pv_short() {
        let a = allocate_power(20.0, &battery(0.0, 40.0), 15.0);
        assert_eq!((a.p_es, a.p_pv), (0.0, 15.0));
        assert!(a.shortfall());
        assert_eq!(a.deficit, 5.0);
    }

    #[test]
    fn environment_profile_interpolates() {
        let env =
            Environment::from_csv("time_s,irradiance_wm2,temperature_c\n0,1000,25\n10,500,35\n")
                .unwrap();
        assert_eq!(env.at(-1.0), (1000.0, 25.0));
        assert_eq!(env.at(5.0), (750.0, 30.0));
        assert_eq!(env.at(20.0), (500.0, 35.0));
        assert!(Environment::from_csv("h\n1,2\n").is_err());
        assert!(Environment::from_csv("h\n1,2,3\n0,2,3\n").is_err());
    }
}
