use std::collections::BTreeMap;

use nalgebra::{DVector, Dyn, LU};

use super::circuit::Circuit;
use super::companion::{CompanionStamp, ElementKind, ElementState, Rule};
use super::EmtError;

/// Time-stepping state for one circuit.
///
/// Voltage sources sit behind series R-L branches and are supplied per step.
/// The nodal matrices are factorized lazily and only rebuilt on a topology
/// change or when a piecewise element changes segment.
#[derive(Debug, Clone)]
pub struct Simulator {
    dt: f64,
    circuit: Circuit,
    states: Vec<[ElementState; 3]>,
    source_states: Vec<[ElementState; 3]>,
    source_e: Vec<[f64; 3]>,
    segments: Vec<[i8; 3]>,
    v: [DVector<f64>; 3],
    lu: [Option<LU<f64, Dyn, Dyn>>; 3],
    stamps: Vec<CompanionStamp>,
    steps: u64,
    damp_next: bool,
}

impl Simulator {
    pub fn new(circuit: Circuit, dt: f64) -> Result<Self, EmtError> {
        if !(dt > 0.0) || !dt.is_finite() {
            return Err(EmtError::Config(format!("time step must be > 0, got {dt}")));
        }
        for s in &circuit.sources {
            if !(s.r >= 0.0 && s.l >= 0.0 && s.r + s.l > 0.0) {
                return Err(EmtError::Config(format!(
                    "source {} needs a series impedance",
                    s.key
                )));
            }
        }
        let n = circuit.nodes.len();
        let zero = || DVector::zeros(n);
        Ok(Self {
            dt,
            states: vec![[ElementState::default(); 3]; circuit.elements.len()],
            source_states: vec![[ElementState::default(); 3]; circuit.sources.len()],
            source_e: vec![[0.0; 3]; circuit.sources.len()],
            segments: vec![[0; 3]; circuit.elements.len()],
            v: [zero(), zero(), zero()],
            lu: [None, None, None],
            stamps: Vec::new(),
            steps: 0,
            damp_next: false,
            circuit,
        })
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn circuit(&self) -> &Circuit {
        &self.circuit
    }

    /// Completed steps.
    pub fn steps(&self) -> u64 {
        self.steps
    }

    pub fn time(&self) -> f64 {
        self.steps as f64 * self.dt
    }

    pub fn node_voltage(&self, node: usize) -> [f64; 3] {
        [self.v[0][node], self.v[1][node], self.v[2][node]]
    }

    /// Current through a source branch, into its node.
    pub fn source_current(&self, source: usize) -> [f64; 3] {
        self.source_states[source].map(|s| s.i)
    }

    /// Source voltage applied during the last step.
    pub fn source_voltage(&self, source: usize) -> [f64; 3] {
        self.source_e[source]
    }

    /// Current through an element, from `a` towards `b` (or ground).
    pub fn element_current(&self, element: usize) -> [f64; 3] {
        self.states[element].map(|s| s.i)
    }

    pub fn element_state(&self, element: usize) -> [ElementState; 3] {
        self.states[element]
    }

    /// Energy stored in all inductors and capacitors, joules.
    pub fn stored_energy(&self) -> f64 {
        let elements: f64 = self
            .circuit
            .elements
            .iter()
            .zip(&self.states)
            .map(|(e, s)| s.iter().map(|x| e.kind.energy(x)).sum::<f64>())
            .sum();
        let sources: f64 = self
            .circuit
            .sources
            .iter()
            .zip(&self.source_states)
            .map(|(b, s)| s.iter().map(|x| 0.5 * b.l * x.i * x.i).sum::<f64>())
            .sum();
        elements + sources
    }

    /// Swap in a new topology. Node voltages, element states and source
    /// states carry over by name/key; anything new starts at rest. The next
    /// step is taken with damped integration.
    pub fn replace_circuit(&mut self, circuit: Circuit) {
        let old_nodes: BTreeMap<&str, usize> = self
            .circuit
            .nodes
            .iter()
            .enumerate()
            .map(|(i, n)| (n.as_str(), i))
            .collect();
        let n = circuit.nodes.len();
        let mut v = [DVector::zeros(n), DVector::zeros(n), DVector::zeros(n)];
        for (j, name) in circuit.nodes.iter().enumerate() {
            if let Some(&i) = old_nodes.get(name.as_str()) {
                for ph in 0..3 {
                    v[ph][j] = self.v[ph][i];
                }
            }
        }

        let old_elements: BTreeMap<&str, usize> = self
            .circuit
            .elements
            .iter()
            .enumerate()
            .map(|(i, e)| (e.key.as_str(), i))
            .collect();
        let states: Vec<[ElementState; 3]> = circuit
            .elements
            .iter()
            .map(|e| {
                old_elements
                    .get(e.key.as_str())
                    .map_or([ElementState::default(); 3], |&i| self.states[i])
            })
            .collect();
        let segments = circuit
            .elements
            .iter()
            .zip(&states)
            .map(|(e, s)| [0, 1, 2].map(|ph| e.kind.segment(&s[ph])))
            .collect();

        let old_sources: BTreeMap<&str, usize> = self
            .circuit
            .sources
            .iter()
            .enumerate()
            .map(|(i, s)| (s.key.as_str(), i))
            .collect();
        let (source_states, source_e) = circuit
            .sources
            .iter()
            .map(|s| match old_sources.get(s.key.as_str()) {
                Some(&i) => (self.source_states[i], self.source_e[i]),
                None => ([ElementState::default(); 3], [0.0; 3]),
            })
            .unzip();

        self.circuit = circuit;
        self.v = v;
        self.states = states;
        self.segments = segments;
        self.source_states = source_states;
        self.source_e = source_e;
        self.lu = [None, None, None];
        self.damp_next = true;
    }

    fn factorize(&mut self, ph: usize) -> Result<(), EmtError> {
        let floating = self.circuit.floating_nodes();
        if !floating.is_empty() {
            return Err(EmtError::Singular {
                t: self.time(),
                nodes: floating,
            });
        }
        let states: Vec<ElementState> = self.states.iter().map(|s| s[ph]).collect();
        let g = self.circuit.conductance_matrix(self.dt, &states);
        let lu = g.lu();
        if !lu.is_invertible() {
            return Err(EmtError::Singular {
                t: self.time(),
                nodes: self.circuit.nodes.clone(),
            });
        }
        self.lu[ph] = Some(lu);
        Ok(())
    }

    /// Advance one step with source voltages `e_next` (one entry per source,
    /// volts) applying at the end of the step.
    pub fn step(&mut self, e_next: &[[f64; 3]]) -> Result<(), EmtError> {
        if e_next.len() != self.circuit.sources.len() {
            return Err(EmtError::Config(format!(
                "{} source voltages for {} sources",
                e_next.len(),
                self.circuit.sources.len()
            )));
        }
        if std::mem::take(&mut self.damp_next) {
            let e_mid: Vec<[f64; 3]> = self
                .source_e
                .iter()
                .zip(e_next)
                .map(|(a, b)| [0, 1, 2].map(|k| 0.5 * (a[k] + b[k])))
                .collect();
            self.substep(&e_mid, Rule::BackwardEulerHalf)?;
            self.substep(e_next, Rule::BackwardEulerHalf)?;
        } else {
            self.substep(e_next, Rule::Trapezoidal)?;
        }
        self.steps += 1;
        Ok(())
    }

    fn substep(&mut self, e_next: &[[f64; 3]], rule: Rule) -> Result<(), EmtError> {
        let dt = self.dt;
        let n = self.circuit.nodes.len();
        let mut refactor = false;
        for ph in 0..3 {
            if self.lu[ph].is_none() {
                self.factorize(ph)?;
            }
            self.stamps.clear();
            let mut rhs = DVector::zeros(n);
            for (e, s) in self.circuit.elements.iter().zip(&self.states) {
                let st = e.kind.stamp_with(&s[ph], dt, rule);
                rhs[e.a] -= st.history_current;
                if let Some(b) = e.b {
                    rhs[b] += e.kind.ratio() * st.history_current;
                }
                self.stamps.push(st);
            }
            let mut source_stamps = Vec::with_capacity(self.circuit.sources.len());
            for ((src, s), e) in self
                .circuit
                .sources
                .iter()
                .zip(&self.source_states)
                .zip(e_next)
            {
                let kind = ElementKind::SeriesRl {
                    r: src.r,
                    l: src.l,
                    ratio: 1.0,
                };
                let st = kind.stamp_with(&s[ph], dt, rule);
                rhs[src.node] += st.conductance * e[ph] + st.history_current;
                source_stamps.push((kind, st));
            }

            let v = self.lu[ph]
                .as_ref()
                .expect("factorized above")
                .solve(&rhs)
                .ok_or_else(|| EmtError::Singular {
                    t: self.time(),
                    nodes: self.circuit.floating_nodes(),
                })?;
            if v.iter().any(|x| !x.is_finite()) {
                return Err(EmtError::NonFinite {
                    t: self.time() + dt,
                });
            }

            for (k, e) in self.circuit.elements.iter().enumerate() {
                let u = v[e.a] - e.b.map_or(0.0, |b| e.kind.ratio() * v[b]);
                let next = e
                    .kind
                    .advance_with(&self.states[k][ph], &self.stamps[k], u, dt, rule);
                self.states[k][ph] = next;
                let seg = e.kind.segment(&next);
                if seg != self.segments[k][ph] {
                    self.segments[k][ph] = seg;
                    refactor = true;
                }
            }
            for (j, (src, (kind, st))) in
                self.circuit.sources.iter().zip(&source_stamps).enumerate()
            {
                let u = e_next[j][ph] - v[src.node];
                self.source_states[j][ph] =
                    kind.advance_with(&self.source_states[j][ph], st, u, dt, rule);
            }
            self.v[ph] = v;
        }
        for (dst, e) in self.source_e.iter_mut().zip(e_next) {
            *dst = *e;
        }
        if refactor {
            // A segment change is a topology change for the trapezoidal
            // rule's purposes: damp the next step the same way.
            self.lu = [None, None, None];
            self.damp_next = true;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::emt::circuit::SourceFilter;

    #[test]
    fn resistive_divider() {
        let mut c = Circuit::new();
        let m = c.add_node("m");
        c.add_element(
            "r",
            m,
            None,
            ElementKind::SeriesRl {
                r: 1.0,
                l: 0.0,
                ratio: 1.0,
            },
        );
        c.add_source(
            "s",
            m,
            SourceFilter {
                r: 1.0,
                l: 0.0,
                c: 0.0,
            },
        );
        let mut sim = Simulator::new(c, 50e-6).unwrap();
        for _ in 0..10 {
            sim.step(&[[1.0, -0.5, 2.0]]).unwrap();
            assert_eq!(sim.node_voltage(m), [0.5, -0.25, 1.0]);
        }
    }

    #[test]
    fn floating_node_is_reported() {
        let mut c = Circuit::new();
        let a = c.add_node("a");
        let b = c.add_node("b");
        c.add_source(
            "s",
            a,
            SourceFilter {
                r: 1.0,
                l: 0.0,
                c: 0.0,
            },
        );
        let d = c.add_node("d");
        c.add_element(
            "bd",
            b,
            Some(d),
            ElementKind::SeriesRl {
                r: 1.0,
                l: 1e-3,
                ratio: 1.0,
            },
        );
        let mut sim = Simulator::new(c, 50e-6).unwrap();
        match sim.step(&[[1.0; 3]]) {
            Err(EmtError::Singular { nodes, .. }) => assert_eq!(nodes, vec!["b", "d"]),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn transformer_ratio_refers_load() {
        // 2:1 step-down feeding 10 ohm: seen from the primary as 40 ohm.
        let mut c = Circuit::new();
        let p = c.add_node("p");
        let s = c.add_node("s");
        c.add_element(
            "t",
            p,
            Some(s),
            ElementKind::SeriesRl {
                r: 0.5,
                l: 0.0,
                ratio: 2.0,
            },
        );
        c.add_element(
            "load",
            s,
            None,
            ElementKind::SeriesRl {
                r: 10.0,
                l: 0.0,
                ratio: 1.0,
            },
        );
        c.add_source(
            "src",
            p,
            SourceFilter {
                r: 0.5,
                l: 0.0,
                c: 0.0,
            },
        );
        let mut sim = Simulator::new(c, 50e-6).unwrap();
        sim.step(&[[100.0, 0.0, 0.0]]).unwrap();
        let i = 100.0 / 41.0;
        assert!((sim.source_current(0)[0] - i).abs() < 1e-9);
        assert!((sim.node_voltage(s)[0] - 20.0 * i).abs() < 1e-9);
    }
}
