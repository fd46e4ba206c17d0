//! Electrical network description: buses, pi-model lines, transformers,
//! breakers, loads and grid-forming source attachments.
//!
//! Cases are stored as JSON with SI quantities (ohms, henries, farads per
//! phase; kilovolts line-to-line; megawatts/megavars three-phase). A case is
//! validated as a whole before it is handed out, so a [`NetworkCase`] value
//! always satisfies the invariants listed on [`NetworkCase::validate`].

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::f64::consts::PI;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::plant::PlantParams;

/// Bundled WSCC 9-bus case prepared for backbone energization.
pub const WSCC9_CASE_JSON: &str = include_str!("../data/wscc9_blackstart.json");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BusKind {
    SourceTerminal,
    Transmission,
    Load,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bus {
    pub id: String,
    /// Line-to-line RMS kilovolts.
    pub nominal_kv: f64,
    pub kind: BusKind,
}

impl Bus {
    /// Peak line-to-ground voltage at nominal, in volts.
    pub fn phase_peak_v(&self) -> f64 {
        self.nominal_kv * 1e3 * (2.0f64 / 3.0).sqrt()
    }
}

/// Pi-model line. `c_shunt` is the total shunt capacitance, half at each end.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Branch {
    pub id: String,
    pub from: String,
    pub to: String,
    pub r: f64,
    pub l: f64,
    #[serde(default)]
    pub c_shunt: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub breaker: Option<String>,
}

/// Piecewise-linear magnetizing branch, attached at the primary (`from`) side.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Magnetizing {
    /// Unsaturated magnetizing inductance, henries.
    pub l_mag: f64,
    /// Knee flux in per-unit of rated peak flux.
    pub knee_flux: f64,
    /// Saturated (air-core) inductance, henries.
    pub l_sat: f64,
}

/// Two-winding transformer. `ratio` is the off-nominal turns ratio in
/// per-unit; the physical ratio is `ratio * kv_from / kv_to`. Leakage and
/// winding resistance are referred to the primary (`from`) side.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transformer {
    pub id: String,
    pub from: String,
    pub to: String,
    pub ratio: f64,
    pub leakage_l: f64,
    #[serde(default)]
    pub winding_r: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub magnetizing: Option<Magnetizing>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub breaker: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LoadKind {
    Main,
    Auxiliary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoadSpec {
    pub bus: String,
    pub p_mw: f64,
    pub q_mvar: f64,
    #[serde(default = "default_load_kind")]
    pub kind: LoadKind,
}

fn default_load_kind() -> LoadKind {
    LoadKind::Main
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BreakerState {
    Open,
    Closed,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Breaker {
    pub id: String,
    pub initial_state: BreakerState,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourceAttachment {
    pub bus: String,
    #[serde(default)]
    pub plant: PlantParams,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkCase {
    #[serde(default)]
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub notes: Option<String>,
    pub base_mva: f64,
    pub base_frequency_hz: f64,
    pub buses: Vec<Bus>,
    #[serde(default)]
    pub branches: Vec<Branch>,
    #[serde(default)]
    pub transformers: Vec<Transformer>,
    #[serde(default)]
    pub loads: Vec<LoadSpec>,
    #[serde(default)]
    pub breakers: Vec<Breaker>,
    #[serde(default)]
    pub sources: Vec<SourceAttachment>,
}

#[derive(Debug, thiserror::Error)]
pub enum CaseError {
    #[error("cannot read case file {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed case file: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("invalid case: {0}")]
    Invalid(Finding),
}

/// One failed invariant check.
#[derive(Debug, Clone, PartialEq)]
pub struct Finding {
    pub element: String,
    pub message: String,
}

impl fmt::Display for Finding {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.element, self.message)
    }
}

fn finding(element: impl Into<String>, message: impl Into<String>) -> Finding {
    Finding {
        element: element.into(),
        message: message.into(),
    }
}

/// Read and validate a case file.
pub fn load_case(path: impl AsRef<Path>) -> Result<NetworkCase, CaseError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| CaseError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_case(&text)
}

/// Parse and validate a case from JSON text.
pub fn parse_case(text: &str) -> Result<NetworkCase, CaseError> {
    let case: NetworkCase = serde_json::from_str(text)?;
    if let Some(first) = case.validate().into_iter().next() {
        return Err(CaseError::Invalid(first));
    }
    Ok(case)
}

/// The bundled 9-bus case.
pub fn wscc9() -> NetworkCase {
    parse_case(WSCC9_CASE_JSON).expect("bundled case is valid")
}

/// Series impedance absorbing `(p_mw, q_mvar)` at `v_kv` line-to-line and
/// `frequency_hz`. Returns `(r_ohm, x_ohm)` per phase; `x` is negative for a
/// capacitive load.
pub fn load_series_impedance(p_mw: f64, q_mvar: f64, v_kv: f64) -> Result<(f64, f64), LoadError> {
    if !(v_kv > 0.0) || !v_kv.is_finite() {
        return Err(LoadError::Voltage(v_kv));
    }
    let s2 = p_mw * p_mw + q_mvar * q_mvar;
    if !(s2 > 0.0) || !s2.is_finite() {
        return Err(LoadError::ZeroPower);
    }
    if p_mw < 0.0 {
        return Err(LoadError::NegativeP(p_mw));
    }
    let v2 = v_kv * v_kv;
    Ok((v2 * p_mw / s2, v2 * q_mvar / s2))
}

#[derive(Debug, Clone, Copy, PartialEq, thiserror::Error)]
pub enum LoadError {
    #[error("load impedance undefined for P = Q = 0")]
    ZeroPower,
    #[error("load voltage must be positive, got {0} kV")]
    Voltage(f64),
    #[error("load active power must be non-negative, got {0} MW")]
    NegativeP(f64),
}

/// Realization of a load as a series element per phase.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LoadImpedance {
    /// Series R-L; `l` may be zero for a purely resistive load.
    Inductive { r: f64, l: f64 },
    /// Series R-C for loads with negative Q.
    Capacitive { r: f64, c: f64 },
}

/// Constant-impedance realization of a load at nominal voltage and base
/// frequency.
pub fn load_impedance(
    p_mw: f64,
    q_mvar: f64,
    v_kv: f64,
    frequency_hz: f64,
) -> Result<LoadImpedance, LoadError> {
    let (r, x) = load_series_impedance(p_mw, q_mvar, v_kv)?;
    let w = 2.0 * PI * frequency_hz;
    Ok(if x >= 0.0 {
        LoadImpedance::Inductive { r, l: x / w }
    } else {
        LoadImpedance::Capacitive {
            r,
            c: -1.0 / (w * x),
        }
    })
}

impl LoadImpedance {
    /// Three-phase complex power `(P MW, Q Mvar)` drawn at `v_kv`, `frequency_hz`.
    pub fn power_at(&self, v_kv: f64, frequency_hz: f64) -> (f64, f64) {
        let w = 2.0 * PI * frequency_hz;
        let (r, x) = match *self {
            LoadImpedance::Inductive { r, l } => (r, w * l),
            LoadImpedance::Capacitive { r, c } => (r, -1.0 / (w * c)),
        };
        let z2 = r * r + x * x;
        let v2 = v_kv * v_kv;
        (v2 * r / z2, v2 * x / z2)
    }
}

impl NetworkCase {
    pub fn bus(&self, id: &str) -> Option<&Bus> {
        self.buses.iter().find(|b| b.id == id)
    }

    pub fn bus_index(&self) -> BTreeMap<&str, usize> {
        self.buses
            .iter()
            .enumerate()
            .map(|(i, b)| (b.id.as_str(), i))
            .collect()
    }

    pub fn initial_breaker_states(&self) -> BTreeMap<String, BreakerState> {
        self.breakers
            .iter()
            .map(|b| (b.id.clone(), b.initial_state))
            .collect()
    }

    /// Every breaker closed.
    pub fn all_closed(&self) -> BTreeMap<String, BreakerState> {
        self.breakers
            .iter()
            .map(|b| (b.id.clone(), BreakerState::Closed))
            .collect()
    }

    /// Physical (SI) turns ratio of a transformer, primary over secondary.
    pub fn physical_ratio(&self, t: &Transformer) -> f64 {
        let kv_from = self.bus(&t.from).map_or(1.0, |b| b.nominal_kv);
        let kv_to = self.bus(&t.to).map_or(1.0, |b| b.nominal_kv);
        t.ratio * kv_from / kv_to
    }

    /// Buses reachable from any source through in-service branches and
    /// transformers under `breakers`. Elements without a breaker are always
    /// in service.
    pub fn energized_buses(&self, breakers: &BTreeMap<String, BreakerState>) -> BTreeSet<String> {
        let adjacency = self.adjacency(breakers);
        let mut seen = BTreeSet::new();
        let mut queue: VecDeque<&str> = VecDeque::new();
        for s in &self.sources {
            if self.bus(&s.bus).is_some() && seen.insert(s.bus.clone()) {
                queue.push_back(s.bus.as_str());
            }
        }
        while let Some(b) = queue.pop_front() {
            if let Some(next) = adjacency.get(b) {
                for n in next {
                    if seen.insert((*n).to_string()) {
                        queue.push_back(n);
                    }
                }
            }
        }
        seen
    }

    fn adjacency<'a>(
        &'a self,
        breakers: &BTreeMap<String, BreakerState>,
    ) -> BTreeMap<&'a str, Vec<&'a str>> {
        let in_service = |b: &Option<String>| match b {
            None => true,
            Some(id) => breakers.get(id) == Some(&BreakerState::Closed),
        };
        let mut adj: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
        let edges = self
            .branches
            .iter()
            .filter(|b| in_service(&b.breaker))
            .map(|b| (b.from.as_str(), b.to.as_str()))
            .chain(
                self.transformers
                    .iter()
                    .filter(|t| in_service(&t.breaker))
                    .map(|t| (t.from.as_str(), t.to.as_str())),
            );
        for (a, b) in edges {
            adj.entry(a).or_default().push(b);
            adj.entry(b).or_default().push(a);
        }
        adj
    }

    /// Run every invariant check; an empty result means the case is valid.
    pub fn validate(&self) -> Vec<Finding> {
        let mut out = Vec::new();
        let positive = |x: f64| x > 0.0 && x.is_finite();
        let non_negative = |x: f64| x >= 0.0 && x.is_finite();

        if !positive(self.base_mva) {
            out.push(finding(
                "case",
                format!("base_mva must be positive, got {}", self.base_mva),
            ));
        }
        if !positive(self.base_frequency_hz) {
            out.push(finding(
                "case",
                format!(
                    "base_frequency_hz must be positive, got {}",
                    self.base_frequency_hz
                ),
            ));
        }
        if self.buses.is_empty() {
            out.push(finding("case", "no buses"));
        }

        let mut bus_ids = BTreeSet::new();
        for b in &self.buses {
            if !bus_ids.insert(b.id.as_str()) {
                out.push(finding(format!("bus {}", b.id), "duplicate bus id"));
            }
            if !positive(b.nominal_kv) {
                out.push(finding(
                    format!("bus {}", b.id),
                    format!("nominal_kv must be positive, got {}", b.nominal_kv),
                ));
            }
        }

        let mut breaker_ids = BTreeSet::new();
        for b in &self.breakers {
            if !breaker_ids.insert(b.id.as_str()) {
                out.push(finding(format!("breaker {}", b.id), "duplicate breaker id"));
            }
        }

        let check_bus = |out: &mut Vec<Finding>, element: &str, bus: &str| {
            if !bus_ids.contains(bus) {
                out.push(finding(
                    element,
                    format!("references unknown bus \"{bus}\""),
                ));
            }
        };
        let check_breaker = |out: &mut Vec<Finding>, element: &str, br: &Option<String>| {
            if let Some(id) = br {
                if !breaker_ids.contains(id.as_str()) {
                    out.push(finding(
                        element,
                        format!("references unknown breaker \"{id}\""),
                    ));
                }
            }
        };

        let mut element_ids = BTreeSet::new();
        for br in &self.branches {
            let name = format!("branch {}", br.id);
            if !element_ids.insert(br.id.as_str()) {
                out.push(finding(&name, "duplicate element id"));
            }
            check_bus(&mut out, &name, &br.from);
            check_bus(&mut out, &name, &br.to);
            check_breaker(&mut out, &name, &br.breaker);
            if br.from == br.to {
                out.push(finding(&name, "from and to are the same bus"));
            }
            if !non_negative(br.r) {
                out.push(finding(&name, format!("r must be >= 0, got {}", br.r)));
            }
            if !positive(br.l) {
                out.push(finding(&name, format!("l must be > 0, got {}", br.l)));
            }
            if !non_negative(br.c_shunt) {
                out.push(finding(
                    &name,
                    format!("c_shunt must be >= 0, got {}", br.c_shunt),
                ));
            }
        }

        for t in &self.transformers {
            let name = format!("transformer {}", t.id);
            if !element_ids.insert(t.id.as_str()) {
                out.push(finding(&name, "duplicate element id"));
            }
            check_bus(&mut out, &name, &t.from);
            check_bus(&mut out, &name, &t.to);
            check_breaker(&mut out, &name, &t.breaker);
            if t.from == t.to {
                out.push(finding(&name, "from and to are the same bus"));
            }
            if !positive(t.ratio) {
                out.push(finding(
                    &name,
                    format!("ratio must be > 0, got {}", t.ratio),
                ));
            }
            if !positive(t.leakage_l) {
                out.push(finding(
                    &name,
                    format!("leakage_l must be > 0, got {}", t.leakage_l),
                ));
            }
            if !non_negative(t.winding_r) {
                out.push(finding(
                    &name,
                    format!("winding_r must be >= 0, got {}", t.winding_r),
                ));
            }
            if let Some(m) = &t.magnetizing {
                if !positive(m.l_mag) || !positive(m.l_sat) {
                    out.push(finding(&name, "magnetizing inductances must be > 0"));
                } else if m.l_sat >= m.l_mag {
                    out.push(finding(&name, "magnetizing l_sat must be below l_mag"));
                }
                if !positive(m.knee_flux) {
                    out.push(finding(&name, "magnetizing knee_flux must be > 0"));
                }
            }
        }

        for (i, l) in self.loads.iter().enumerate() {
            let name = format!("load #{i} at bus {}", l.bus);
            check_bus(&mut out, &name, &l.bus);
            if !non_negative(l.p_mw) {
                out.push(finding(&name, format!("p_mw must be >= 0, got {}", l.p_mw)));
            }
            if !l.q_mvar.is_finite() {
                out.push(finding(&name, "q_mvar must be finite"));
            }
        }

        if self.sources.is_empty() {
            out.push(finding("case", "no source attachment"));
        }
        let mut source_buses = BTreeSet::new();
        for s in &self.sources {
            let name = format!("source at bus {}", s.bus);
            check_bus(&mut out, &name, &s.bus);
            if !source_buses.insert(s.bus.as_str()) {
                out.push(finding(&name, "more than one source on this bus"));
            }
            for problem in s.plant.validate() {
                out.push(finding(&name, problem));
            }
        }

        // Connectivity only makes sense once references resolve.
        if out.is_empty() {
            let reach = self.energized_buses(&self.all_closed());
            let missing: Vec<&str> = self
                .buses
                .iter()
                .map(|b| b.id.as_str())
                .filter(|id| !reach.contains(*id))
                .collect();
            if !missing.is_empty() {
                out.push(finding(
                    "case",
                    format!(
                        "buses not connected to a source with all breakers closed: {}",
                        missing.join(", ")
                    ),
                ));
            }
        }
        out
    }
}
