//! The backbone-energization scenario: its event schedule, per-step
//! replay of the network state, stability metrics and the comparison
//! against power-flow references.

mod compare;
mod metrics;

pub use compare::{
    compare_to_oracle, oracle_steps, CompareError, Deviation, DeviationReport, OracleStep,
    SteadyState,
};
pub use metrics::{
    compute_metrics, BusStepMetrics, MetricsConfig, MetricsError, StabilityMetrics, StepMetrics,
};

use crate::network::NetworkCase;
use crate::schedule::{Action, EventSchedule, NetworkState, ScheduledEvent};

/// Bundled copy of [`build_table1_schedule`].
pub const TABLE1_SCHEDULE_JSON: &str = include_str!("../../data/table1_schedule.json");

/// Staged pickup of the 9-bus backbone: seven steps, cumulative loads at
/// buses 5, 6 and 8, and temporary auxiliary loads at the ends of newly
/// energized transmission.
pub fn build_table1_schedule() -> EventSchedule {
    fn close(t: f64, id: &str) -> ScheduledEvent {
        ScheduledEvent {
            t,
            action: Action::CloseBreaker { id: id.into() },
        }
    }
    fn load(t: f64, bus: &str, p_mw: f64, q_mvar: f64) -> ScheduledEvent {
        ScheduledEvent {
            t,
            action: Action::SetLoad {
                bus: bus.into(),
                p_mw,
                q_mvar,
            },
        }
    }
    fn attach(t: f64, bus: &str) -> ScheduledEvent {
        ScheduledEvent {
            t,
            action: Action::AttachAux { bus: bus.into() },
        }
    }
    fn detach(t: f64, bus: &str) -> ScheduledEvent {
        ScheduledEvent {
            t,
            action: Action::DetachAux { bus: bus.into() },
        }
    }

    let events = vec![
        // Step 1: plant transformer.
        close(0.0, "BT14"),
        attach(0.0, "4"),
        // Step 2: first line.
        close(1.0, "BL45"),
        attach(1.0, "5"),
        // Step 3.
        close(2.5, "BL57"),
        attach(2.5, "7"),
        load(2.5, "5", 13.4, 5.3),
        // Step 4.
        close(5.0, "BL78"),
        load(5.0, "8", 28.8, 10.1),
        // Step 5.
        close(7.5, "BL46"),
        load(7.5, "6", 4.0, 1.3),
        load(7.5, "8", 33.4, 11.7),
        // Step 6.
        close(10.0, "BL69"),
        attach(10.0, "9"),
        load(10.0, "5", 26.1, 10.4),
        load(10.0, "6", 59.8, 19.9),
        load(10.0, "8", 34.3, 12.0),
        // Step 7: close the loop, reach the generator terminals, drop aux.
        close(18.0, "BT27"),
        close(18.0, "BT39"),
        close(18.0, "BL89"),
        load(18.0, "5", 30.1, 12.0),
        load(18.0, "6", 59.8, 19.9),
        load(18.0, "8", 65.7, 23.0),
        detach(18.0, "4"),
        detach(18.0, "5"),
        detach(18.0, "7"),
        detach(18.0, "9"),
    ];
    EventSchedule {
        name: "table1".into(),
        notes: Some(
            "Cumulative pickups per step; breaker order within each step follows the numbered energization \
             path, transformers before their downstream lines. Auxiliary loads are 2% of base MVA, resistive."
                .into(),
        ),
        aux_load_mw: None,
        events,
    }
}

/// Interval between consecutive event times, with the network state that
/// holds throughout it.
#[derive(Debug, Clone, PartialEq)]
pub struct StepWindow {
    pub index: usize,
    pub t_start: f64,
    /// Start of the next step, or the end of the run.
    pub t_end: f64,
    pub state: NetworkState,
    /// Buses connected to a source, in case order.
    pub energized: Vec<String>,
}

/// Replay `schedule` against `case` up to `t_end`.
pub fn step_windows(case: &NetworkCase, schedule: &EventSchedule, t_end: f64) -> Vec<StepWindow> {
    let mut state = NetworkState::initial(case, schedule.aux_load_mw(case));
    let times: Vec<f64> = schedule
        .step_times()
        .into_iter()
        .filter(|&t| t <= t_end)
        .collect();
    let mut out = Vec::with_capacity(times.len());
    for (k, &t) in times.iter().enumerate() {
        for ev in schedule.events.iter().filter(|e| e.t == t) {
            state.apply(&ev.action);
        }
        let energized_set = case.energized_buses(&state.breakers);
        out.push(StepWindow {
            index: k + 1,
            t_start: t,
            t_end: times.get(k + 1).copied().unwrap_or(t_end),
            energized: case
                .buses
                .iter()
                .filter(|b| energized_set.contains(&b.id))
                .map(|b| b.id.clone())
                .collect(),
            state: state.clone(),
        });
    }
    out
}

/// Drop events after `t_end`.
pub fn truncate_schedule(schedule: &EventSchedule, t_end: f64) -> EventSchedule {
    EventSchedule {
        events: schedule
            .events
            .iter()
            .filter(|e| e.t <= t_end)
            .cloned()
            .collect(),
        ..schedule.clone()
    }
}
