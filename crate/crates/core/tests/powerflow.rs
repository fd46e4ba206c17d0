mod common;

use blackstart::harness::{build_table1_schedule, step_windows};
use blackstart::network::wscc9;
use blackstart::powerflow::{solve, step_case_from_state, BusType, LoadModel, PfBus, PfCase};
use common::gauss_seidel;
use nalgebra::DMatrix;
use num_complex::Complex64;

fn final_step_case(model: LoadModel) -> PfCase {
    let case = wscc9();
    let last = step_windows(&case, &build_table1_schedule(), 20.0)
        .pop()
        .unwrap();
    step_case_from_state(&case, &last.state, model, false).unwrap()
}

#[test]
fn two_bus_closed_form() {
    let y = Complex64::new(0.0, -10.0);
    let ybus = DMatrix::from_row_slice(2, 2, &[y, -y, -y, y]);
    let case = PfCase {
        base_mva: 100.0,
        buses: vec![
            PfBus {
                id: "s".into(),
                kind: BusType::Slack,
                p_load: 0.0,
                q_load: 0.0,
            },
            PfBus {
                id: "l".into(),
                kind: BusType::Pq,
                p_load: 0.5,
                q_load: 0.0,
            },
        ],
        ybus,
        v_slack: 1.0,
    };
    let sol = solve(&case, 1e-12, 20).unwrap();
    // Lossless line, unity-power-factor load: V = cos(d), P = sin(2d) / (2x).
    let delta = -(2.0f64 * 0.1 * 0.5).asin() / 2.0;
    assert!((sol.va[1] - delta).abs() < 1e-8, "{} vs {delta}", sol.va[1]);
    assert!(
        (sol.vm[1] - delta.cos()).abs() < 1e-8,
        "{} vs {}",
        sol.vm[1],
        delta.cos()
    );
    assert!((sol.slack_p - 0.5).abs() < 1e-8);
}

#[test]
fn newton_agrees_with_gauss_seidel_on_every_step() {
    let case = wscc9();
    for model in [LoadModel::ConstantPower, LoadModel::ConstantImpedance] {
        for w in step_windows(&case, &build_table1_schedule(), 20.0) {
            let pf = step_case_from_state(&case, &w.state, model, false).unwrap();
            let nr = solve(&pf, 1e-10, 20).unwrap();
            let gs = gauss_seidel(&pf);
            for (i, v) in gs.iter().enumerate() {
                assert!(
                    (nr.vm[i] - v.norm()).abs() < 1e-6,
                    "step {} bus {}",
                    w.index,
                    pf.buses[i].id
                );
                assert!(
                    (nr.va[i] - v.arg()).abs() < 1e-6,
                    "step {} bus {}",
                    w.index,
                    pf.buses[i].id
                );
            }
        }
    }
}

#[test]
fn final_step_residual_is_small_at_every_bus() {
    let pf = final_step_case(LoadModel::ConstantPower);
    let sol = solve(&pf, 1e-10, 20).unwrap();
    let v: Vec<Complex64> = sol
        .vm
        .iter()
        .zip(&sol.va)
        .map(|(&m, &a)| Complex64::from_polar(m, a))
        .collect();
    for (bus, r) in pf.buses.iter().zip(pf.mismatch(&v)) {
        assert!(r.norm() < 1e-8, "bus {}: {r}", bus.id);
    }
    assert_eq!(pf.buses.len(), 9);
}

#[test]
fn newton_converges_quadratically() {
    let pf = final_step_case(LoadModel::ConstantPower);
    let sol = solve(&pf, 1e-12, 20).unwrap();
    let h = &sol.history;
    assert!(sol.iterations <= 6, "{} iterations", sol.iterations);
    // Once in the basin, each error is bounded by a constant times the
    // square of the previous one.
    let pairs: Vec<(f64, f64)> = h
        .windows(2)
        .map(|w| (w[0], w[1]))
        .filter(|&(a, b)| a < 0.1 && b > 1e-14)
        .collect();
    assert!(!pairs.is_empty(), "history {h:?}");
    for (a, b) in pairs {
        assert!(b <= 10.0 * a * a, "history {h:?}");
    }
}
