use serde::{Deserialize, Serialize};

use super::circuit::{assemble, Assembly, AssemblyOptions, SourceFilter};
use super::solver::Simulator;
use super::timeseries::TimeSeries;
use super::EmtError;
use crate::control::ControlError;
use crate::network::NetworkCase;
use crate::schedule::{EventSchedule, NetworkState};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    pub dt: f64,
    pub t_end: f64,
    /// Keep every n-th step in the output.
    pub output_decimation: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            dt: 50e-6,
            t_end: 20.0,
            output_decimation: 10,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<(), EmtError> {
        if !(self.dt > 0.0 && self.dt <= 1e-4) {
            return Err(EmtError::Config(format!(
                "dt must be in (0, 1e-4] s, got {}",
                self.dt
            )));
        }
        if !(self.t_end > 0.0) || !self.t_end.is_finite() {
            return Err(EmtError::Config(format!(
                "t_end must be > 0, got {}",
                self.t_end
            )));
        }
        if self.output_decimation == 0 {
            return Err(EmtError::Config("output_decimation must be >= 1".into()));
        }
        Ok(())
    }

    pub fn steps(&self) -> u64 {
        (self.t_end / self.dt - 1e-6).ceil() as u64
    }
}

/// Index of the first step boundary at or after `t`.
pub fn event_step_index(t: f64, dt: f64) -> u64 {
    (t / dt - 1e-6).ceil().max(0.0) as u64
}

/// What a controller sees at its terminal at the start of a step. Voltages
/// in volts, currents in amperes, grid side.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TerminalMeasurement {
    pub t: f64,
    pub step: u64,
    /// Terminal (filter capacitor) voltage.
    pub v_abc: [f64; 3],
    /// Current through the filter inductor.
    pub i_inv_abc: [f64; 3],
    /// Current delivered to the network.
    pub i_out_abc: [f64; 3],
    /// Source voltage applied over the last step.
    pub e_abc: [f64; 3],
}

/// Controller driving the voltage source of one source attachment.
pub trait TerminalController {
    /// Filter between the controlled source and the terminal, grid-side SI.
    fn filter(&self) -> SourceFilter;

    /// Source voltage (volts per phase) for the end of the step starting at
    /// `m.t`.
    fn control(&mut self, m: &TerminalMeasurement, dt: f64) -> Result<[f64; 3], ControlError>;

    fn signal_names(&self) -> Vec<String> {
        Vec::new()
    }

    /// Append the current values of `signal_names`.
    fn signals(&self, _out: &mut Vec<f64>) {}
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct RunOptions {
    pub saturation: bool,
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub series: TimeSeries,
    pub warnings: Vec<String>,
    pub steps: u64,
    pub events_applied: usize,
}

struct Terminal {
    node: usize,
    source: usize,
    cap: Option<usize>,
}

fn terminals(a: &Assembly) -> Vec<Terminal> {
    a.source_index
        .iter()
        .map(|&s| {
            let src = &a.circuit.sources[s];
            Terminal {
                node: src.node,
                source: s,
                cap: src.cap_element,
            }
        })
        .collect()
}

/// Simulate `case` under `schedule`. `controllers[i]` drives
/// `case.sources[i]`.
///
/// Bus voltages are recorded as `v_<bus>_<phase>` in kV, followed by each
/// controller's signals prefixed with `plant<bus>_`.
pub fn run(
    case: &NetworkCase,
    schedule: &EventSchedule,
    controllers: &mut [&mut dyn TerminalController],
    config: &SolverConfig,
    options: RunOptions,
) -> Result<RunOutput, EmtError> {
    config.validate()?;
    schedule.validate(case)?;
    if controllers.len() != case.sources.len() {
        return Err(EmtError::Config(format!(
            "{} controllers for {} source attachments",
            controllers.len(),
            case.sources.len()
        )));
    }
    let dt = config.dt;
    let n_steps = config.steps();
    let filters: Vec<SourceFilter> = controllers.iter().map(|c| c.filter()).collect();
    let assembly_options = AssemblyOptions {
        saturation: options.saturation,
    };

    let events: Vec<(u64, _)> = schedule
        .events
        .iter()
        .filter(|e| e.t <= config.t_end + 1e-9)
        .map(|e| (event_step_index(e.t, dt), &e.action))
        .collect();

    let mut state = NetworkState::initial(case, schedule.aux_load_mw(case));
    let mut assembly = assemble(case, &state, &filters, assembly_options)?;
    let mut warnings: Vec<String> = Vec::new();
    let note = |w: &mut Vec<String>, a: &Assembly| {
        for x in &a.warnings {
            if !w.contains(x) {
                w.push(x.clone());
            }
        }
    };
    note(&mut warnings, &assembly);
    let mut term = terminals(&assembly);
    let mut sim = Simulator::new(assembly.circuit.clone(), dt)?;

    let mut names = Vec::new();
    for b in &case.buses {
        for ph in ["a", "b", "c"] {
            names.push(format!("v_{}_{ph}", b.id));
        }
    }
    for (s, c) in case.sources.iter().zip(controllers.iter()) {
        names.extend(
            c.signal_names()
                .into_iter()
                .map(|n| format!("plant{}_{n}", s.bus)),
        );
    }
    let mut series = TimeSeries::new(dt * config.output_decimation as f64, names);
    let mut row = Vec::with_capacity(series.names.len());
    let mut record = |sim: &Simulator,
                      assembly: &Assembly,
                      controllers: &[&mut dyn TerminalController],
                      series: &mut TimeSeries| {
        row.clear();
        for b in &case.buses {
            match assembly.bus_nodes.get(&b.id) {
                Some(&n) => row.extend(sim.node_voltage(n).map(|v| v * 1e-3)),
                None => row.extend([0.0; 3]),
            }
        }
        for c in controllers {
            c.signals(&mut row);
        }
        series.push(&row);
    };

    let mut next_event = 0;
    let mut events_applied = 0;
    let mut e_next: Vec<[f64; 3]> = vec![[0.0; 3]; controllers.len()];
    for k in 0..n_steps {
        let mut changed = false;
        while next_event < events.len() && events[next_event].0 <= k {
            changed |= state.apply(events[next_event].1);
            next_event += 1;
            events_applied += 1;
        }
        if changed {
            assembly = assemble(case, &state, &filters, assembly_options)?;
            note(&mut warnings, &assembly);
            term = terminals(&assembly);
            sim.replace_circuit(assembly.circuit.clone());
        }
        if k == 0 {
            record(&sim, &assembly, controllers, &mut series);
        }

        let t = k as f64 * dt;
        for (j, (c, tm)) in controllers.iter_mut().zip(&term).enumerate() {
            let i_inv = sim.source_current(tm.source);
            let i_cap = tm.cap.map_or([0.0; 3], |e| sim.element_current(e));
            let m = TerminalMeasurement {
                t,
                step: k,
                v_abc: sim.node_voltage(tm.node),
                i_inv_abc: i_inv,
                i_out_abc: [0, 1, 2].map(|p| i_inv[p] - i_cap[p]),
                e_abc: sim.source_voltage(tm.source),
            };
            let bus = &case.sources[j].bus;
            let e = c.control(&m, dt).map_err(|source| EmtError::Control {
                bus: bus.clone(),
                t,
                source,
            })?;
            if e.iter().any(|x| !x.is_finite()) {
                return Err(EmtError::NonFiniteCommand {
                    bus: bus.clone(),
                    t,
                });
            }
            e_next[j] = e;
        }
        sim.step(&e_next)?;
        if (k + 1) % config.output_decimation as u64 == 0 {
            record(&sim, &assembly, controllers, &mut series);
        }
    }

    Ok(RunOutput {
        series,
        warnings,
        steps: n_steps,
        events_applied,
    })
}
