//! Timed switching and load events, and the network state they act on.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::network::{BreakerState, LoadKind, NetworkCase};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "action", rename_all = "snake_case")]
pub enum Action {
    CloseBreaker {
        id: String,
    },
    OpenBreaker {
        id: String,
    },
    /// Set the total main load at a bus (MW, Mvar at nominal voltage).
    SetLoad {
        bus: String,
        p_mw: f64,
        q_mvar: f64,
    },
    AttachAux {
        bus: String,
    },
    DetachAux {
        bus: String,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScheduledEvent {
    pub t: f64,
    #[serde(flatten)]
    pub action: Action,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventSchedule {
    #[serde(default)]
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub notes: Option<String>,
    /// Size of each auxiliary load, MW (resistive). Defaults to 2% of the
    /// case base MVA.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub aux_load_mw: Option<f64>,
    pub events: Vec<ScheduledEvent>,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ScheduleError {
    #[error("event at t = {t} s references unknown breaker \"{id}\"")]
    UnknownBreaker { t: f64, id: String },
    #[error("event at t = {t} s references unknown bus \"{bus}\"")]
    UnknownBus { t: f64, bus: String },
    #[error("event at t = {t} s: {message}")]
    BadEvent { t: f64, message: String },
    #[error("event times must be non-decreasing (t = {t} s follows {prev} s)")]
    Unordered { t: f64, prev: f64 },
    #[error("cannot read schedule {path}: {message}")]
    Read { path: String, message: String },
}

impl EventSchedule {
    pub fn from_json(text: &str) -> Result<Self, ScheduleError> {
        serde_json::from_str(text).map_err(|e| ScheduleError::Read {
            path: "<text>".into(),
            message: e.to_string(),
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ScheduleError> {
        let path = path.as_ref();
        let read_err = |message: String| ScheduleError::Read {
            path: path.display().to_string(),
            message,
        };
        let text = std::fs::read_to_string(path).map_err(|e| read_err(e.to_string()))?;
        serde_json::from_str(&text).map_err(|e| read_err(e.to_string()))
    }

    pub fn aux_load_mw(&self, case: &NetworkCase) -> f64 {
        self.aux_load_mw.unwrap_or(0.02 * case.base_mva)
    }

    /// Check references and ordering against a case.
    pub fn validate(&self, case: &NetworkCase) -> Result<(), ScheduleError> {
        let breakers: BTreeSet<&str> = case.breakers.iter().map(|b| b.id.as_str()).collect();
        let mut prev = f64::NEG_INFINITY;
        for ev in &self.events {
            let t = ev.t;
            if !t.is_finite() || t < 0.0 {
                return Err(ScheduleError::BadEvent {
                    t,
                    message: "time must be finite and >= 0".into(),
                });
            }
            if t < prev {
                return Err(ScheduleError::Unordered { t, prev });
            }
            prev = t;
            match &ev.action {
                Action::CloseBreaker { id } | Action::OpenBreaker { id } => {
                    if !breakers.contains(id.as_str()) {
                        return Err(ScheduleError::UnknownBreaker { t, id: id.clone() });
                    }
                }
                Action::SetLoad { bus, p_mw, q_mvar } => {
                    if case.bus(bus).is_none() {
                        return Err(ScheduleError::UnknownBus {
                            t,
                            bus: bus.clone(),
                        });
                    }
                    if !(*p_mw >= 0.0) || !q_mvar.is_finite() {
                        return Err(ScheduleError::BadEvent {
                            t,
                            message: format!("invalid load ({p_mw} MW, {q_mvar} Mvar)"),
                        });
                    }
                }
                Action::AttachAux { bus } | Action::DetachAux { bus } => {
                    if case.bus(bus).is_none() {
                        return Err(ScheduleError::UnknownBus {
                            t,
                            bus: bus.clone(),
                        });
                    }
                }
            }
        }
        if let Some(aux) = self.aux_load_mw {
            if !(aux > 0.0) {
                return Err(ScheduleError::BadEvent {
                    t: 0.0,
                    message: format!("aux_load_mw must be > 0, got {aux}"),
                });
            }
        }
        Ok(())
    }

    /// Distinct event times, in order. Each starts a step.
    pub fn step_times(&self) -> Vec<f64> {
        let mut out: Vec<f64> = Vec::new();
        for ev in &self.events {
            if out.last() != Some(&ev.t) {
                out.push(ev.t);
            }
        }
        out
    }
}

/// One connected load piece, `(P MW, Q Mvar)` at nominal voltage.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LoadPiece {
    pub kind: LoadKind,
    pub p_mw: f64,
    pub q_mvar: f64,
}

/// Breaker positions and connected loads at an instant.
///
/// Main-load changes that only add power are realized as an extra parallel
/// piece, so already-connected load keeps its state; any other change
/// replaces the bus's main load with a single piece.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkState {
    pub breakers: BTreeMap<String, BreakerState>,
    pub loads: BTreeMap<String, Vec<LoadPiece>>,
    pub aux_buses: BTreeSet<String>,
    pub aux_load_mw: f64,
}

impl NetworkState {
    pub fn initial(case: &NetworkCase, aux_load_mw: f64) -> Self {
        let mut loads: BTreeMap<String, Vec<LoadPiece>> = BTreeMap::new();
        for l in &case.loads {
            loads.entry(l.bus.clone()).or_default().push(LoadPiece {
                kind: l.kind,
                p_mw: l.p_mw,
                q_mvar: l.q_mvar,
            });
        }
        Self {
            breakers: case.initial_breaker_states(),
            loads,
            aux_buses: BTreeSet::new(),
            aux_load_mw,
        }
    }

    /// Total main load at a bus.
    pub fn main_load(&self, bus: &str) -> (f64, f64) {
        self.loads
            .get(bus)
            .map(|v| {
                v.iter()
                    .filter(|p| p.kind == LoadKind::Main)
                    .fold((0.0, 0.0), |acc, p| (acc.0 + p.p_mw, acc.1 + p.q_mvar))
            })
            .unwrap_or((0.0, 0.0))
    }

    /// Every connected load piece, including scheduled auxiliary loads, as
    /// `(bus, piece)`.
    pub fn connected_loads(&self) -> Vec<(String, LoadPiece)> {
        let mut out: Vec<(String, LoadPiece)> = self
            .loads
            .iter()
            .flat_map(|(bus, v)| v.iter().map(move |p| (bus.clone(), *p)))
            .collect();
        for bus in &self.aux_buses {
            out.push((
                bus.clone(),
                LoadPiece {
                    kind: LoadKind::Auxiliary,
                    p_mw: self.aux_load_mw,
                    q_mvar: 0.0,
                },
            ));
        }
        out
    }

    /// Apply an action. Returns whether anything changed.
    pub fn apply(&mut self, action: &Action) -> bool {
        match action {
            Action::CloseBreaker { id } => {
                self.breakers.insert(id.clone(), BreakerState::Closed) != Some(BreakerState::Closed)
            }
            Action::OpenBreaker { id } => {
                self.breakers.insert(id.clone(), BreakerState::Open) != Some(BreakerState::Open)
            }
            Action::AttachAux { bus } => self.aux_buses.insert(bus.clone()),
            Action::DetachAux { bus } => self.aux_buses.remove(bus),
            Action::SetLoad { bus, p_mw, q_mvar } => {
                let (p0, q0) = self.main_load(bus);
                let (dp, dq) = (p_mw - p0, q_mvar - q0);
                let eps = 1e-12 * (1.0 + p_mw.abs() + q_mvar.abs());
                if dp.abs() <= eps && dq.abs() <= eps {
                    return false;
                }
                let pieces = self.loads.entry(bus.clone()).or_default();
                if dp >= -eps && dq >= -eps {
                    pieces.push(LoadPiece {
                        kind: LoadKind::Main,
                        p_mw: dp.max(0.0),
                        q_mvar: dq.max(0.0),
                    });
                } else {
                    pieces.retain(|p| p.kind != LoadKind::Main);
                    if *p_mw != 0.0 || *q_mvar != 0.0 {
                        pieces.push(LoadPiece {
                            kind: LoadKind::Main,
                            p_mw: *p_mw,
                            q_mvar: *q_mvar,
                        });
                    }
                }
                true
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::wscc9;

    #[test]
    fn additive_pickups_become_pieces() {
        let case = wscc9();
        let mut s = NetworkState::initial(&case, 2.0);
        assert!(s.apply(&Action::SetLoad {
            bus: "5".into(),
            p_mw: 13.4,
            q_mvar: 5.3
        }));
        assert!(s.apply(&Action::SetLoad {
            bus: "5".into(),
            p_mw: 26.1,
            q_mvar: 10.4
        }));
        assert_eq!(s.loads["5"].len(), 2);
        let (p, q) = s.main_load("5");
        assert!((p - 26.1).abs() < 1e-12 && (q - 10.4).abs() < 1e-12);
        assert!(!s.apply(&Action::SetLoad {
            bus: "5".into(),
            p_mw: 26.1,
            q_mvar: 10.4
        }));
        // A reduction replaces the pieces.
        assert!(s.apply(&Action::SetLoad {
            bus: "5".into(),
            p_mw: 10.0,
            q_mvar: 1.0
        }));
        assert_eq!(s.loads["5"].len(), 1);
        assert!(s.apply(&Action::SetLoad {
            bus: "5".into(),
            p_mw: 0.0,
            q_mvar: 0.0
        }));
        assert!(s.loads["5"].is_empty());
    }

    #[test]
    fn aux_loads_are_resistive() {
        let case = wscc9();
        let mut s = NetworkState::initial(&case, 2.0);
        s.apply(&Action::AttachAux { bus: "4".into() });
        let loads = s.connected_loads();
        assert_eq!(loads.len(), 1);
        assert_eq!(loads[0].1.p_mw, 2.0);
        assert_eq!(loads[0].1.q_mvar, 0.0);
        assert!(s.apply(&Action::DetachAux { bus: "4".into() }));
        assert!(s.connected_loads().is_empty());
    }

    #[test]
    fn validation_catches_unknown_references() {
        let case = wscc9();
        let bad = EventSchedule {
            name: String::new(),
            notes: None,
            aux_load_mw: None,
            events: vec![ScheduledEvent {
                t: 1.0,
                action: Action::CloseBreaker { id: "nope".into() },
            }],
        };
        assert!(matches!(
            bad.validate(&case),
            Err(ScheduleError::UnknownBreaker { .. })
        ));
        let unordered = EventSchedule {
            events: vec![
                ScheduledEvent {
                    t: 2.0,
                    action: Action::AttachAux { bus: "4".into() },
                },
                ScheduledEvent {
                    t: 1.0,
                    action: Action::AttachAux { bus: "5".into() },
                },
            ],
            ..bad
        };
        assert!(matches!(
            unordered.validate(&case),
            Err(ScheduleError::Unordered { .. })
        ));
    }

    #[test]
    fn json_shape() {
        let ev = ScheduledEvent {
            t: 2.5,
            action: Action::SetLoad {
                bus: "5".into(),
                p_mw: 13.4,
                q_mvar: 5.3,
            },
        };
        let text = serde_json::to_string(&ev).unwrap();
        assert_eq!(
            text,
            r#"{"t":2.5,"action":"set_load","bus":"5","p_mw":13.4,"q_mvar":5.3}"#
        );
    }
}
