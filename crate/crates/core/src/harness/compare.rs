use std::collections::BTreeSet;

use serde::Serialize;

use super::step_windows;
use crate::network::NetworkCase;
use crate::powerflow::{solve, step_case_from_state, LoadModel, PfError, PfSolution};
use crate::schedule::EventSchedule;

/// Simulated steady state of one step.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SteadyState {
    pub step: usize,
    /// `(bus, RMS voltage pu)` for every energized bus.
    pub buses: Vec<(String, f64)>,
    pub p_mw: f64,
    pub q_mvar: f64,
}

/// Power-flow reference for one step.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OracleStep {
    pub step: usize,
    pub t_start: f64,
    pub solution: PfSolution,
    /// Plant output, MW / Mvar.
    pub p_mw: f64,
    pub q_mvar: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Deviation {
    pub step: usize,
    /// `V_<bus>`, `P` or `Q`.
    pub quantity: String,
    pub simulated: f64,
    pub reference: f64,
    /// Relative deviation: voltages against the reference magnitude, plant
    /// powers against the reference apparent power (with a floor).
    pub relative: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DeviationReport {
    /// Worst first.
    pub rows: Vec<Deviation>,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum CompareError {
    #[error(
        "step {step}: simulated buses [{simulated}] differ from reference buses [{reference}]"
    )]
    Topology {
        step: usize,
        simulated: String,
        reference: String,
    },
    #[error("step {0} has no reference")]
    MissingStep(usize),
    #[error("power flow for step {step}: {source}")]
    PowerFlow {
        step: usize,
        #[source]
        source: PfError,
    },
}

impl DeviationReport {
    pub fn worst(&self) -> Option<&Deviation> {
        self.rows.first()
    }

    pub fn exceeding(&self, threshold: f64) -> impl Iterator<Item = &Deviation> {
        self.rows.iter().filter(move |d| !(d.relative <= threshold))
    }

    pub fn max_voltage_deviation(&self) -> f64 {
        self.rows
            .iter()
            .filter(|d| d.quantity.starts_with("V_"))
            .map(|d| d.relative)
            .fold(0.0, f64::max)
    }

    pub fn max_power_deviation(&self) -> f64 {
        self.rows
            .iter()
            .filter(|d| d.quantity == "P" || d.quantity == "Q")
            .map(|d| d.relative)
            .fold(0.0, f64::max)
    }
}

/// Solve the power-flow reference for every step of `schedule`.
pub fn oracle_steps(
    case: &NetworkCase,
    schedule: &EventSchedule,
    t_end: f64,
    model: LoadModel,
    magnetizing: bool,
) -> Result<Vec<OracleStep>, CompareError> {
    step_windows(case, schedule, t_end)
        .into_iter()
        .map(|w| {
            let err = |source| CompareError::PowerFlow {
                step: w.index,
                source,
            };
            let pf = step_case_from_state(case, &w.state, model, magnetizing).map_err(err)?;
            let solution = solve(&pf, 1e-8, 20).map_err(err)?;
            Ok(OracleStep {
                step: w.index,
                t_start: w.t_start,
                p_mw: solution.slack_p * case.base_mva,
                q_mvar: solution.slack_q * case.base_mva,
                solution,
            })
        })
        .collect()
}

/// Per-step deviations of simulated steady states from the references.
/// `s_floor_mva` bounds the power normalization from below so nearly
/// unloaded steps do not divide by ~0.
pub fn compare_to_oracle(
    simulated: &[SteadyState],
    oracle: &[OracleStep],
    s_floor_mva: f64,
) -> Result<DeviationReport, CompareError> {
    let mut rows = Vec::new();
    for sim in simulated {
        let reference = oracle
            .iter()
            .find(|o| o.step == sim.step)
            .ok_or(CompareError::MissingStep(sim.step))?;
        let sol = &reference.solution;
        let sim_buses: BTreeSet<&str> = sim.buses.iter().map(|b| b.0.as_str()).collect();
        let ref_buses: BTreeSet<&str> = sol.bus_ids.iter().map(String::as_str).collect();
        if sim_buses != ref_buses {
            let join = |s: &BTreeSet<&str>| s.iter().copied().collect::<Vec<_>>().join(", ");
            return Err(CompareError::Topology {
                step: sim.step,
                simulated: join(&sim_buses),
                reference: join(&ref_buses),
            });
        }
        for (bus, v) in &sim.buses {
            let vr = sol.vm_of(bus).expect("bus sets match");
            rows.push(Deviation {
                step: sim.step,
                quantity: format!("V_{bus}"),
                simulated: *v,
                reference: vr,
                relative: (v - vr).abs() / vr,
            });
        }
        let s_ref = reference.p_mw.hypot(reference.q_mvar).max(s_floor_mva);
        for (q, x, r) in [
            ("P", sim.p_mw, reference.p_mw),
            ("Q", sim.q_mvar, reference.q_mvar),
        ] {
            rows.push(Deviation {
                step: sim.step,
                quantity: q.into(),
                simulated: x,
                reference: r,
                relative: (x - r).abs() / s_ref,
            });
        }
    }
    rows.sort_by(|a, b| b.relative.total_cmp(&a.relative));
    Ok(DeviationReport { rows })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::build_table1_schedule;
    use crate::network::wscc9;

    fn references() -> Vec<OracleStep> {
        oracle_steps(
            &wscc9(),
            &build_table1_schedule(),
            20.0,
            LoadModel::ConstantImpedance,
            false,
        )
        .unwrap()
    }

    fn echo(o: &OracleStep) -> SteadyState {
        SteadyState {
            step: o.step,
            buses: o
                .solution
                .bus_ids
                .iter()
                .cloned()
                .zip(o.solution.vm.iter().copied())
                .collect(),
            p_mw: o.p_mw,
            q_mvar: o.q_mvar,
        }
    }

    #[test]
    fn identical_inputs_give_zero_deviation() {
        let refs = references();
        let sims: Vec<SteadyState> = refs.iter().map(echo).collect();
        let r = compare_to_oracle(&sims, &refs, 1.0).unwrap();
        assert!(r.rows.iter().all(|d| d.relative == 0.0));
        assert_eq!(
            r.rows.len(),
            refs.iter().map(|o| o.solution.vm.len() + 2).sum::<usize>()
        );
    }

    #[test]
    fn report_is_sorted_and_topology_checked() {
        let refs = references();
        let mut sims: Vec<SteadyState> = refs.iter().map(echo).collect();
        sims[3].buses[2].1 *= 1.02;
        sims[1].p_mw += 0.001;
        let r = compare_to_oracle(&sims, &refs, 1.0).unwrap();
        assert_eq!(r.worst().unwrap().step, 4);
        assert!(r.rows.windows(2).all(|w| w[0].relative >= w[1].relative));
        assert_eq!(r.exceeding(0.01).count(), 1);
        sims[0].buses.pop();
        assert!(matches!(
            compare_to_oracle(&sims, &refs, 1.0),
            Err(CompareError::Topology { step: 1, .. })
        ));
    }
}
