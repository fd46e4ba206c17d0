//! Fixed-step, balanced three-phase electromagnetic transient engine.
//!
//! Each phase is solved explicitly with its own nodal matrix; the network is
//! symmetric, so the three matrices are equal, but keeping them separate
//! keeps the phase quantities literal all the way to the controllers.

mod circuit;
mod companion;
mod run;
mod solver;
mod timeseries;

pub use circuit::{
    assemble, Assembly, AssemblyOptions, Circuit, CircuitElement, SourceBranch, SourceFilter,
};
pub use companion::{
    stamp_element, CompanionStamp, ElementKind, ElementState, PassiveElement, Rule,
};
pub use run::{
    event_step_index, run, RunOptions, RunOutput, SolverConfig, TerminalController,
    TerminalMeasurement,
};
pub use solver::Simulator;
pub use timeseries::{TimeSeries, TimeSeriesError};

use crate::control::ControlError;
use crate::schedule::ScheduleError;

#[derive(Debug, thiserror::Error)]
pub enum EmtError {
    #[error("singular nodal matrix at t = {t:.6} s; floating nodes: [{}]", nodes.join(", "))]
    Singular { t: f64, nodes: Vec<String> },
    #[error("{0}")]
    Breaker(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Schedule(#[from] ScheduleError),
    #[error("controller at bus {bus} failed at t = {t:.6} s: {source}")]
    Control {
        bus: String,
        t: f64,
        #[source]
        source: ControlError,
    },
    #[error("controller at bus {bus} returned a non-finite voltage command at t = {t:.6} s")]
    NonFiniteCommand { bus: String, t: f64 },
    #[error("solution diverged (non-finite node voltage) at t = {t:.6} s")]
    NonFinite { t: f64 },
}
