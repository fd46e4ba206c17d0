//! Newton-Raphson AC power flow over the energized part of a network case.
//!
//! The plant bus is the slack at a fixed 1.0 pu, standing in for secondary
//! control; every other energized bus is PQ. All quantities are per-unit on
//! the case base MVA and each bus's nominal kV.

use std::collections::{BTreeMap, BTreeSet};
use std::f64::consts::TAU;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::network::{BreakerState, NetworkCase};
use crate::schedule::NetworkState;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LoadModel {
    /// Loads draw their nominal (P, Q) regardless of voltage.
    ConstantPower,
    /// Loads are shunt admittances sized at nominal voltage, like the time
    /// domain.
    ConstantImpedance,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BusType {
    Slack,
    Pq,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PfBus {
    pub id: String,
    pub kind: BusType,
    /// Constant-power demand, pu.
    pub p_load: f64,
    pub q_load: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PfCase {
    pub base_mva: f64,
    pub buses: Vec<PfBus>,
    pub ybus: DMatrix<Complex64>,
    /// Slack voltage magnitude, pu.
    pub v_slack: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PfSolution {
    pub bus_ids: Vec<String>,
    pub vm: Vec<f64>,
    /// Voltage angles, radians.
    pub va: Vec<f64>,
    /// Power injected at the slack bus, pu.
    pub slack_p: f64,
    pub slack_q: f64,
    pub iterations: usize,
    pub max_mismatch: f64,
    /// Largest mismatch before each iteration and after the last one.
    pub history: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PfError {
    #[error("no convergence after {iterations} iterations; worst mismatch {mismatch:.3e} pu at bus {bus}")]
    NoConvergence {
        iterations: usize,
        bus: String,
        mismatch: f64,
    },
    #[error("singular Jacobian at iteration {0}")]
    SingularJacobian(usize),
    #[error("case has no source attachment to act as slack")]
    NoSlack,
    #[error("loads at buses not connected to the plant: {}", .0.join(", "))]
    Disconnected(Vec<String>),
    #[error("unknown breaker \"{0}\"")]
    UnknownBreaker(String),
    #[error("no state given for breaker \"{0}\"")]
    MissingBreaker(String),
}

impl PfSolution {
    pub fn index(&self, bus: &str) -> Option<usize> {
        self.bus_ids.iter().position(|b| b == bus)
    }

    pub fn vm_of(&self, bus: &str) -> Option<f64> {
        self.index(bus).map(|i| self.vm[i])
    }
}

/// Build the power-flow case for the energized subnetwork under `breakers`
/// with `loads` as `(bus, P MW, Q Mvar)` at nominal voltage.
pub fn step_case_from(
    network: &NetworkCase,
    breakers: &BTreeMap<String, BreakerState>,
    loads: &[(String, f64, f64)],
    model: LoadModel,
    magnetizing: bool,
) -> Result<PfCase, PfError> {
    for b in &network.breakers {
        if !breakers.contains_key(&b.id) {
            return Err(PfError::MissingBreaker(b.id.clone()));
        }
    }
    if let Some(id) = breakers
        .keys()
        .find(|id| !network.breakers.iter().any(|b| &b.id == *id))
    {
        return Err(PfError::UnknownBreaker(id.clone()));
    }
    let slack_bus = network.sources.first().ok_or(PfError::NoSlack)?.bus.clone();
    let energized = network.energized_buses(breakers);
    let stranded: BTreeSet<String> = loads
        .iter()
        .filter(|(b, p, q)| !energized.contains(b) && (*p != 0.0 || *q != 0.0))
        .map(|(b, _, _)| b.clone())
        .collect();
    if !stranded.is_empty() {
        return Err(PfError::Disconnected(stranded.into_iter().collect()));
    }

    let ids: Vec<String> = network
        .buses
        .iter()
        .filter(|b| energized.contains(&b.id))
        .map(|b| b.id.clone())
        .collect();
    let index: BTreeMap<&str, usize> = ids
        .iter()
        .enumerate()
        .map(|(i, b)| (b.as_str(), i))
        .collect();
    let n = ids.len();
    let base = network.base_mva;
    let w = TAU * network.base_frequency_hz;
    let z_base = |bus: &str| {
        let kv = network.bus(bus).map_or(1.0, |b| b.nominal_kv);
        kv * kv / base
    };
    let in_service = |b: &Option<String>| match b {
        None => true,
        Some(id) => breakers.get(id) == Some(&BreakerState::Closed),
    };

    let mut y = DMatrix::from_element(n, n, Complex64::new(0.0, 0.0));
    for br in network.branches.iter().filter(|b| in_service(&b.breaker)) {
        let (Some(&i), Some(&j)) = (index.get(br.from.as_str()), index.get(br.to.as_str())) else {
            continue;
        };
        let zb = z_base(&br.from);
        let ys = Complex64::new(1.0, 0.0) / (Complex64::new(br.r, w * br.l) / zb);
        let yc = Complex64::new(0.0, 0.5 * w * br.c_shunt * zb);
        y[(i, i)] += ys + yc;
        y[(j, j)] += ys + yc;
        y[(i, j)] -= ys;
        y[(j, i)] -= ys;
    }
    for t in network
        .transformers
        .iter()
        .filter(|t| in_service(&t.breaker))
    {
        let (Some(&i), Some(&j)) = (index.get(t.from.as_str()), index.get(t.to.as_str())) else {
            continue;
        };
        let zb = z_base(&t.from);
        let ys = Complex64::new(1.0, 0.0) / (Complex64::new(t.winding_r, w * t.leakage_l) / zb);
        let a = t.ratio;
        y[(i, i)] += ys;
        y[(i, j)] -= a * ys;
        y[(j, i)] -= a * ys;
        y[(j, j)] += a * a * ys;
        if let (true, Some(m)) = (magnetizing, t.magnetizing) {
            y[(i, i)] += Complex64::new(0.0, -zb / (w * m.l_mag));
        }
    }

    let mut buses: Vec<PfBus> = ids
        .iter()
        .map(|id| PfBus {
            id: id.clone(),
            kind: if *id == slack_bus {
                BusType::Slack
            } else {
                BusType::Pq
            },
            p_load: 0.0,
            q_load: 0.0,
        })
        .collect();
    for (bus, p, q) in loads {
        let Some(&i) = index.get(bus.as_str()) else {
            continue;
        };
        let (p, q) = (p / base, q / base);
        match model {
            LoadModel::ConstantPower => {
                buses[i].p_load += p;
                buses[i].q_load += q;
            }
            LoadModel::ConstantImpedance => y[(i, i)] += Complex64::new(p, -q),
        }
    }
    Ok(PfCase {
        base_mva: base,
        buses,
        ybus: y,
        v_slack: 1.0,
    })
}

/// Power-flow case for a harness network state (main and auxiliary loads).
pub fn step_case_from_state(
    network: &NetworkCase,
    state: &NetworkState,
    model: LoadModel,
    magnetizing: bool,
) -> Result<PfCase, PfError> {
    let loads: Vec<(String, f64, f64)> = state
        .connected_loads()
        .into_iter()
        .map(|(b, p)| (b, p.p_mw, p.q_mvar))
        .collect();
    step_case_from(network, &state.breakers, &loads, model, magnetizing)
}

impl PfCase {
    pub fn slack(&self) -> usize {
        self.buses
            .iter()
            .position(|b| b.kind == BusType::Slack)
            .expect("case has a slack bus")
    }

    /// Complex power injected at each bus for voltages `v`, pu.
    pub fn injections(&self, v: &[Complex64]) -> Vec<Complex64> {
        let n = v.len();
        (0..n)
            .map(|i| {
                let i_inj: Complex64 = (0..n).map(|j| self.ybus[(i, j)] * v[j]).sum();
                v[i] * i_inj.conj()
            })
            .collect()
    }

    /// Injection minus specified injection per bus; the slack entry is zero.
    pub fn mismatch(&self, v: &[Complex64]) -> Vec<Complex64> {
        let slack = self.slack();
        self.injections(v)
            .into_iter()
            .zip(&self.buses)
            .enumerate()
            .map(|(i, (s, b))| {
                if i == slack {
                    Complex64::new(0.0, 0.0)
                } else {
                    s + Complex64::new(b.p_load, b.q_load)
                }
            })
            .collect()
    }
}

/// Newton-Raphson in polar coordinates from a flat start.
pub fn solve(case: &PfCase, tol: f64, max_iter: usize) -> Result<PfSolution, PfError> {
    let n = case.buses.len();
    let slack = case.slack();
    let pq: Vec<usize> = (0..n).filter(|&i| i != slack).collect();
    let m = pq.len();
    let mut vm = vec![1.0; n];
    let mut va = vec![0.0; n];
    vm[slack] = case.v_slack;

    let voltages = |vm: &[f64], va: &[f64]| -> Vec<Complex64> {
        vm.iter()
            .zip(va)
            .map(|(&r, &a)| Complex64::from_polar(r, a))
            .collect()
    };
    let worst = |mis: &[Complex64]| -> (usize, f64) {
        mis.iter()
            .enumerate()
            .map(|(i, s)| (i, s.re.abs().max(s.im.abs())))
            .fold((0, 0.0), |acc, x| if x.1 > acc.1 { x } else { acc })
    };

    let mut history = Vec::new();
    let mut iterations = 0;
    loop {
        let v = voltages(&vm, &va);
        let mis = case.mismatch(&v);
        let (worst_bus, max_mis) = worst(&mis);
        history.push(max_mis);
        if max_mis <= tol {
            let s = case.injections(&v)[slack];
            return Ok(PfSolution {
                bus_ids: case.buses.iter().map(|b| b.id.clone()).collect(),
                vm,
                va,
                slack_p: s.re,
                slack_q: s.im,
                iterations,
                max_mismatch: max_mis,
                history,
            });
        }
        if iterations >= max_iter {
            return Err(PfError::NoConvergence {
                iterations,
                bus: case.buses[worst_bus].id.clone(),
                mismatch: max_mis,
            });
        }
        iterations += 1;

        // dS/dVa = j diag(V) conj(diag(I) - Y diag(V)),
        // dS/dVm = diag(V) conj(Y diag(V/|V|)) + conj(diag(I)) diag(V/|V|).
        let i_bus: Vec<Complex64> = (0..n)
            .map(|i| (0..n).map(|j| case.ybus[(i, j)] * v[j]).sum())
            .collect();
        let vn: Vec<Complex64> = v.iter().map(|x| x / x.norm()).collect();
        let j_unit = Complex64::new(0.0, 1.0);
        let ds_dva = |i: usize, k: usize| {
            let diag = if i == k {
                i_bus[i]
            } else {
                Complex64::new(0.0, 0.0)
            };
            j_unit * v[i] * (diag - case.ybus[(i, k)] * v[k]).conj()
        };
        let ds_dvm = |i: usize, k: usize| {
            let mut x = v[i] * (case.ybus[(i, k)] * vn[k]).conj();
            if i == k {
                x += i_bus[i].conj() * vn[i];
            }
            x
        };
        let mut jac = DMatrix::zeros(2 * m, 2 * m);
        let mut f = DVector::zeros(2 * m);
        for (r, &i) in pq.iter().enumerate() {
            f[r] = mis[i].re;
            f[m + r] = mis[i].im;
            for (c, &k) in pq.iter().enumerate() {
                let a = ds_dva(i, k);
                let b = ds_dvm(i, k);
                jac[(r, c)] = a.re;
                jac[(r, m + c)] = b.re;
                jac[(m + r, c)] = a.im;
                jac[(m + r, m + c)] = b.im;
            }
        }
        let dx = jac
            .lu()
            .solve(&(-f))
            .ok_or(PfError::SingularJacobian(iterations))?;
        if dx.iter().any(|x| !x.is_finite()) {
            return Err(PfError::SingularJacobian(iterations));
        }
        for (r, &i) in pq.iter().enumerate() {
            va[i] += dx[r];
            vm[i] += dx[m + r];
        }
    }
}
