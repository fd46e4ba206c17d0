//! Fixtures shared by the integration test targets.
#![allow(dead_code)]

use std::f64::consts::TAU;
use std::time::{Duration, Instant};

use blackstart::emt::{
    run, Circuit, ElementKind, RunOptions, RunOutput, Simulator, SolverConfig, SourceFilter,
    TerminalController,
};
use blackstart::harness::{build_table1_schedule, compute_metrics, MetricsConfig, StepMetrics};
use blackstart::network::{wscc9, NetworkCase};
use blackstart::plant::GridFormingPlant;
use blackstart::powerflow::PfCase;
use blackstart::schedule::{Action, EventSchedule, ScheduledEvent};
use num_complex::Complex64;

pub const DT: f64 = 50e-6;

pub fn balanced(amplitude: f64, w: f64, t: f64) -> [f64; 3] {
    [0, 1, 2].map(|k| amplitude * (w * t - k as f64 * TAU / 3.0).cos())
}

/// Current one time constant after a 1 V step into R = 1 ohm, L = 10 mH
/// behind a 1 mohm source resistance, with the analytic value.
pub fn rl_step_at_tau() -> (f64, f64) {
    let (r, l, r_src) = (1.0, 10e-3, 1e-3);
    let mut c = Circuit::new();
    let m = c.add_node("m");
    let e = c.add_element("rl", m, None, ElementKind::SeriesRl { r, l, ratio: 1.0 });
    c.add_source(
        "s",
        m,
        SourceFilter {
            r: r_src,
            l: 0.0,
            c: 0.0,
        },
    );
    let mut sim = Simulator::new(c, DT).unwrap();
    let tau = l / (r + r_src);
    for _ in 0..(tau / DT).round() as usize {
        sim.step(&[[1.0; 3]]).unwrap();
    }
    let analytic = (1.0 - (-1.0f64).exp()) / (r + r_src);
    (sim.element_current(e)[0], analytic)
}

/// Steady amplitude at the node of a parallel RLC (resonant at 60 Hz)
/// driven through a series resistance, with the phasor-divider value.
pub fn parallel_rlc_amplitude(dt: f64, f_drive: f64) -> (f64, f64) {
    let (r, l, cap, r_src) = (50.0, 0.1, 1.0 / ((TAU * 60.0).powi(2) * 0.1), 10.0);
    let mut c = Circuit::new();
    let m = c.add_node("m");
    c.add_element(
        "r",
        m,
        None,
        ElementKind::SeriesRl {
            r,
            l: 0.0,
            ratio: 1.0,
        },
    );
    c.add_element(
        "l",
        m,
        None,
        ElementKind::SeriesRl {
            r: 0.0,
            l,
            ratio: 1.0,
        },
    );
    c.add_element("c", m, None, ElementKind::Capacitor { c: cap });
    c.add_source(
        "s",
        m,
        SourceFilter {
            r: r_src,
            l: 0.0,
            c: 0.0,
        },
    );
    let mut sim = Simulator::new(c, dt).unwrap();

    let w = TAU * f_drive;
    let n_settle = (1.5 / dt).round() as usize;
    let n_cycle = (1.0 / (f_drive * dt)).round() as usize;
    let mut peak: f64 = 0.0;
    for k in 0..n_settle + 2 * n_cycle {
        let t = (k + 1) as f64 * dt;
        sim.step(&[balanced(100.0, w, t)]).unwrap();
        if k >= n_settle {
            // Balanced set: the amplitude is available at every instant.
            let v = sim.node_voltage(m);
            peak = peak.max((2.0 / 3.0 * (v[0] * v[0] + v[1] * v[1] + v[2] * v[2])).sqrt());
        }
    }
    let jw = Complex64::new(0.0, w);
    let zp = 1.0 / (1.0 / r + 1.0 / (jw * l) + jw * cap);
    (peak, (100.0 * zp / (zp + r_src)).norm())
}

/// The plant alone on its step-up transformer feeding a 100 MW resistive
/// load at the high-voltage bus: about half the plant rating.
pub fn islanded(secondary: bool) -> StepMetrics {
    let mut case = wscc9();
    case.sources[0].plant.secondary.enabled = secondary;
    let schedule = EventSchedule {
        name: "island".into(),
        notes: None,
        aux_load_mw: None,
        events: vec![
            ScheduledEvent {
                t: 0.0,
                action: Action::CloseBreaker { id: "BT14".into() },
            },
            ScheduledEvent {
                t: 0.0,
                action: Action::SetLoad {
                    bus: "4".into(),
                    p_mw: 100.0,
                    q_mvar: 0.0,
                },
            },
        ],
    };
    let config = SolverConfig {
        t_end: 6.0,
        ..Default::default()
    };
    let out = run_with_plants(&case, &schedule, &config);
    let m = compute_metrics(&out.series, &case, &schedule, &MetricsConfig::default()).unwrap();
    m.steps.into_iter().next().unwrap()
}

pub fn run_with_plants(
    case: &NetworkCase,
    schedule: &EventSchedule,
    config: &SolverConfig,
) -> RunOutput {
    let mut plants = GridFormingPlant::for_case(case);
    let mut ctl: Vec<&mut dyn TerminalController> = plants
        .iter_mut()
        .map(|p| p as &mut dyn TerminalController)
        .collect();
    run(case, schedule, &mut ctl, config, RunOptions::default()).unwrap()
}

/// The full black-start scenario on the bundled case, after `adjust`.
pub fn table1_run(
    t_end: f64,
    adjust: impl FnOnce(&mut NetworkCase),
) -> (NetworkCase, RunOutput, Duration) {
    let mut case = wscc9();
    adjust(&mut case);
    let config = SolverConfig {
        t_end,
        ..Default::default()
    };
    let start = Instant::now();
    let out = run_with_plants(&case, &build_table1_schedule(), &config);
    (case, out, start.elapsed())
}

/// Gauss-Seidel on the same admittance matrix, iterated to a fixed point.
pub fn gauss_seidel(case: &PfCase) -> Vec<Complex64> {
    let n = case.buses.len();
    let slack = case.slack();
    let mut v = vec![Complex64::new(1.0, 0.0); n];
    v[slack] = Complex64::new(case.v_slack, 0.0);
    for _ in 0..100_000 {
        let mut delta: f64 = 0.0;
        for i in (0..n).filter(|&i| i != slack) {
            let s = -Complex64::new(case.buses[i].p_load, case.buses[i].q_load);
            let others: Complex64 = (0..n)
                .filter(|&j| j != i)
                .map(|j| case.ybus[(i, j)] * v[j])
                .sum();
            let next = ((s / v[i]).conj() - others) / case.ybus[(i, i)];
            delta = delta.max((next - v[i]).norm());
            v[i] = next;
        }
        if delta < 1e-13 {
            return v;
        }
    }
    panic!("Gauss-Seidel did not converge");
}
