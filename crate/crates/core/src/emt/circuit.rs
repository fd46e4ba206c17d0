//! Per-phase circuit description and assembly of the energized part of a
//! network case.

use std::collections::{BTreeMap, BTreeSet};
use std::f64::consts::TAU;

use nalgebra::DMatrix;

use super::companion::{ElementKind, ElementState};
use super::EmtError;
use crate::network::{load_impedance, BreakerState, LoadImpedance, NetworkCase};
use crate::schedule::NetworkState;

#[derive(Debug, Clone, PartialEq)]
pub struct CircuitElement {
    /// Stable identity across topology changes; element state is carried
    /// over by key.
    pub key: String,
    pub a: usize,
    pub b: Option<usize>,
    pub kind: ElementKind,
}

/// Controlled voltage source behind a series R-L, injecting into `node`.
#[derive(Debug, Clone, PartialEq)]
pub struct SourceBranch {
    pub key: String,
    pub node: usize,
    pub r: f64,
    pub l: f64,
    /// Index of the filter capacitor element at `node`, if any.
    pub cap_element: Option<usize>,
}

/// Filter seen by the network at a source attachment, grid-side SI values.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SourceFilter {
    pub r: f64,
    pub l: f64,
    pub c: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Circuit {
    pub nodes: Vec<String>,
    pub elements: Vec<CircuitElement>,
    pub sources: Vec<SourceBranch>,
}

impl Circuit {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_node(&mut self, name: impl Into<String>) -> usize {
        self.nodes.push(name.into());
        self.nodes.len() - 1
    }

    pub fn node(&self, name: &str) -> Option<usize> {
        self.nodes.iter().position(|n| n == name)
    }

    pub fn add_element(
        &mut self,
        key: impl Into<String>,
        a: usize,
        b: Option<usize>,
        kind: ElementKind,
    ) -> usize {
        self.elements.push(CircuitElement {
            key: key.into(),
            a,
            b,
            kind,
        });
        self.elements.len() - 1
    }

    /// Add a source behind `filter`; a positive `filter.c` adds a shunt
    /// capacitor at the node.
    pub fn add_source(
        &mut self,
        key: impl Into<String>,
        node: usize,
        filter: SourceFilter,
    ) -> usize {
        let key = key.into();
        let cap_element = (filter.c > 0.0).then(|| {
            self.add_element(
                format!("{key}:cf"),
                node,
                None,
                ElementKind::Capacitor { c: filter.c },
            )
        });
        self.sources.push(SourceBranch {
            key,
            node,
            r: filter.r,
            l: filter.l,
            cap_element,
        });
        self.sources.len() - 1
    }

    /// Nodal conductance matrix for one phase, with every element in the
    /// given state.
    pub fn conductance_matrix(&self, dt: f64, states: &[ElementState]) -> DMatrix<f64> {
        let n = self.nodes.len();
        let mut g = DMatrix::zeros(n, n);
        for (e, s) in self.elements.iter().zip(states) {
            let c = e.kind.stamp(s, dt).conductance;
            let r = e.kind.ratio();
            g[(e.a, e.a)] += c;
            if let Some(b) = e.b {
                g[(e.a, b)] -= r * c;
                g[(b, e.a)] -= r * c;
                g[(b, b)] += r * r * c;
            }
        }
        for s in &self.sources {
            g[(s.node, s.node)] += 1.0 / (s.r + 2.0 * s.l / dt);
        }
        g
    }

    /// Nodes in connected groups that have no element to ground and no
    /// source, which leaves the nodal matrix singular.
    pub fn floating_nodes(&self) -> Vec<String> {
        let n = self.nodes.len();
        let mut parent: Vec<usize> = (0..n).collect();
        fn find(p: &mut [usize], mut x: usize) -> usize {
            while p[x] != x {
                p[x] = p[p[x]];
                x = p[x];
            }
            x
        }
        let mut grounded = vec![false; n];
        for e in &self.elements {
            match e.b {
                Some(b) => {
                    let (ra, rb) = (find(&mut parent, e.a), find(&mut parent, b));
                    parent[ra] = rb;
                }
                None => grounded[e.a] = true,
            }
        }
        for s in &self.sources {
            grounded[s.node] = true;
        }
        let mut root_grounded = vec![false; n];
        for i in 0..n {
            if grounded[i] {
                let r = find(&mut parent, i);
                root_grounded[r] = true;
            }
        }
        (0..n)
            .filter(|&i| {
                let r = find(&mut parent, i);
                !root_grounded[r]
            })
            .map(|i| self.nodes[i].clone())
            .collect()
    }
}

/// Energized circuit for the present network state.
#[derive(Debug, Clone)]
pub struct Assembly {
    pub circuit: Circuit,
    /// Bus id to node index, energized buses only.
    pub bus_nodes: BTreeMap<String, usize>,
    /// Source index in `circuit.sources` per case source, in case order.
    pub source_index: Vec<usize>,
    pub warnings: Vec<String>,
}

impl Assembly {
    pub fn conductance_matrix(&self, dt: f64) -> DMatrix<f64> {
        let rest = vec![ElementState::default(); self.circuit.elements.len()];
        self.circuit.conductance_matrix(dt, &rest)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct AssemblyOptions {
    /// Include saturable magnetizing branches of transformers that have one.
    pub saturation: bool,
}

/// Build the circuit covering buses energized from the sources.
///
/// `filters` holds the filter of each case source, in case order. Closed
/// elements in islands without a source are left out and reported in
/// `warnings`.
pub fn assemble(
    case: &NetworkCase,
    state: &NetworkState,
    filters: &[SourceFilter],
    options: AssemblyOptions,
) -> Result<Assembly, EmtError> {
    for b in &case.breakers {
        if !state.breakers.contains_key(&b.id) {
            return Err(EmtError::Breaker(format!(
                "no state for breaker \"{}\"",
                b.id
            )));
        }
    }
    if let Some(id) = state
        .breakers
        .keys()
        .find(|id| !case.breakers.iter().any(|b| &b.id == *id))
    {
        return Err(EmtError::Breaker(format!("unknown breaker \"{id}\"")));
    }
    if filters.len() != case.sources.len() {
        return Err(EmtError::Config(format!(
            "{} source filters for {} case sources",
            filters.len(),
            case.sources.len()
        )));
    }

    let energized = case.energized_buses(&state.breakers);
    let in_service = |b: &Option<String>| match b {
        None => true,
        Some(id) => state.breakers.get(id) == Some(&BreakerState::Closed),
    };

    let mut circuit = Circuit::new();
    let mut bus_nodes = BTreeMap::new();
    for bus in &case.buses {
        if energized.contains(&bus.id) {
            bus_nodes.insert(bus.id.clone(), circuit.add_node(bus.id.clone()));
        }
    }
    let w = TAU * case.base_frequency_hz;

    for br in case.branches.iter().filter(|b| in_service(&b.breaker)) {
        let (Some(&a), Some(&b)) = (bus_nodes.get(&br.from), bus_nodes.get(&br.to)) else {
            continue;
        };
        circuit.add_element(
            format!("branch:{}", br.id),
            a,
            Some(b),
            ElementKind::SeriesRl {
                r: br.r,
                l: br.l,
                ratio: 1.0,
            },
        );
        if br.c_shunt > 0.0 {
            let c = ElementKind::Capacitor {
                c: 0.5 * br.c_shunt,
            };
            circuit.add_element(format!("branch:{}:c_from", br.id), a, None, c);
            circuit.add_element(format!("branch:{}:c_to", br.id), b, None, c);
        }
    }

    for t in case.transformers.iter().filter(|t| in_service(&t.breaker)) {
        let (Some(&a), Some(&b)) = (bus_nodes.get(&t.from), bus_nodes.get(&t.to)) else {
            continue;
        };
        circuit.add_element(
            format!("xfmr:{}", t.id),
            a,
            Some(b),
            ElementKind::SeriesRl {
                r: t.winding_r,
                l: t.leakage_l,
                ratio: case.physical_ratio(t),
            },
        );
        if let (true, Some(m)) = (options.saturation, t.magnetizing) {
            let v_peak = case.bus(&t.from).map_or(0.0, |b| b.phase_peak_v());
            circuit.add_element(
                format!("xfmr:{}:mag", t.id),
                a,
                None,
                ElementKind::Saturable {
                    l_mag: m.l_mag,
                    l_sat: m.l_sat,
                    knee: m.knee_flux * v_peak / w,
                },
            );
        }
    }

    let mut counters: BTreeMap<String, usize> = BTreeMap::new();
    for (bus, piece) in state.connected_loads() {
        let Some(&a) = bus_nodes.get(&bus) else {
            continue;
        };
        if piece.p_mw == 0.0 && piece.q_mvar == 0.0 {
            continue;
        }
        let kv = case.bus(&bus).map_or(0.0, |b| b.nominal_kv);
        let z = load_impedance(piece.p_mw, piece.q_mvar, kv, case.base_frequency_hz)
            .map_err(|e| EmtError::Config(format!("load at bus {bus}: {e}")))?;
        let n = counters
            .entry(format!("{bus}:{:?}", piece.kind))
            .or_insert(0);
        let key = format!("load:{bus}:{:?}:{n}", piece.kind);
        *n += 1;
        let kind = match z {
            LoadImpedance::Inductive { r, l } => ElementKind::SeriesRl { r, l, ratio: 1.0 },
            LoadImpedance::Capacitive { r, c } => ElementKind::SeriesRc { r, c },
        };
        circuit.add_element(key, a, None, kind);
    }

    let mut source_index = Vec::with_capacity(case.sources.len());
    for (s, f) in case.sources.iter().zip(filters) {
        let node = bus_nodes[&s.bus];
        source_index.push(circuit.add_source(format!("source:{}", s.bus), node, *f));
    }

    let warnings = island_warnings(case, state, &energized);
    for w in &warnings {
        log::warn!("{w}");
    }
    Ok(Assembly {
        circuit,
        bus_nodes,
        source_index,
        warnings,
    })
}

fn island_warnings(
    case: &NetworkCase,
    state: &NetworkState,
    energized: &BTreeSet<String>,
) -> Vec<String> {
    let in_service = |b: &Option<String>| match b {
        None => true,
        Some(id) => state.breakers.get(id) == Some(&BreakerState::Closed),
    };
    let mut adj: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
    for (from, to) in case
        .branches
        .iter()
        .filter(|b| in_service(&b.breaker))
        .map(|b| (b.from.as_str(), b.to.as_str()))
        .chain(
            case.transformers
                .iter()
                .filter(|t| in_service(&t.breaker))
                .map(|t| (t.from.as_str(), t.to.as_str())),
        )
    {
        adj.entry(from).or_default().push(to);
        adj.entry(to).or_default().push(from);
    }
    let loaded: BTreeSet<String> = state
        .connected_loads()
        .into_iter()
        .filter(|(_, p)| p.p_mw != 0.0 || p.q_mvar != 0.0)
        .map(|(b, _)| b)
        .collect();

    let mut seen: BTreeSet<&str> = BTreeSet::new();
    let mut out = Vec::new();
    for bus in &case.buses {
        let id = bus.id.as_str();
        if energized.contains(id) || seen.contains(id) {
            continue;
        }
        let mut group = vec![id];
        seen.insert(id);
        let mut k = 0;
        while k < group.len() {
            if let Some(next) = adj.get(group[k]) {
                for n in next {
                    if seen.insert(n) {
                        group.push(n);
                    }
                }
            }
            k += 1;
        }
        let has_elements = group.len() > 1 || group.iter().any(|b| loaded.contains(*b));
        if has_elements {
            group.sort_unstable();
            out.push(format!(
                "island [{}] has no path to a source; excluded from the solution",
                group.join(", ")
            ));
        }
    }
    out
}
