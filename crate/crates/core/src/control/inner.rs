use super::{ControlError, FilterPu, InnerLoopParams};

/// Scale `(d, q)` down to magnitude `limit`, keeping its angle. Returns the
/// (possibly scaled) vector and whether the limit was active.
pub fn saturate_magnitude(d: f64, q: f64, limit: f64) -> ((f64, f64), bool) {
    let mag = d.hypot(q);
    if mag > limit {
        let k = limit / mag;
        ((d * k, q * k), true)
    } else {
        ((d, q), false)
    }
}

/// Cascaded dq voltage and current PI loops around the LC filter.
#[derive(Debug, Clone)]
pub struct InnerLoops {
    pub params: InnerLoopParams,
    pub filter: FilterPu,
    pub integ_v: (f64, f64),
    pub integ_i: (f64, f64),
    pub i_ref: (f64, f64),
    pub saturated: bool,
}

impl InnerLoops {
    pub fn new(params: InnerLoopParams, filter: FilterPu) -> Self {
        Self {
            params,
            filter,
            integ_v: (0.0, 0.0),
            integ_i: (0.0, 0.0),
            i_ref: (0.0, 0.0),
            saturated: false,
        }
    }

    /// One control step. `w` is the per-unit angular frequency of the dq
    /// frame; voltages and currents are per-unit. Returns the inverter
    /// voltage command in dq.
    pub fn step(
        &mut self,
        v_ref: (f64, f64),
        v: (f64, f64),
        i_inv: (f64, f64),
        i_out: (f64, f64),
        w: f64,
        dt: f64,
        t: f64,
    ) -> Result<(f64, f64), ControlError> {
        let finite = |x: (f64, f64)| x.0.is_finite() && x.1.is_finite();
        if !finite(v_ref) || !finite(v) || !finite(i_inv) || !finite(i_out) || !w.is_finite() {
            return Err(ControlError::NonFinite {
                what: "inner loop input",
                t,
            });
        }
        let p = &self.params;
        let f = &self.filter;

        let ev = (v_ref.0 - v.0, v_ref.1 - v.1);
        let wc = w * f.c;
        let unlimited = (
            p.kp_v * ev.0 + self.integ_v.0 + p.load_current_feedforward * i_out.0 - wc * v.1,
            p.kp_v * ev.1 + self.integ_v.1 + p.load_current_feedforward * i_out.1 + wc * v.0,
        );
        let (i_ref, saturated) = saturate_magnitude(unlimited.0, unlimited.1, p.current_limit_pu);
        // Conditional integration: freeze the voltage integrators while the
        // current reference is limited.
        if !saturated {
            self.integ_v.0 += p.ki_v * ev.0 * dt;
            self.integ_v.1 += p.ki_v * ev.1 * dt;
        }
        self.i_ref = i_ref;
        self.saturated = saturated;

        let ei = (i_ref.0 - i_inv.0, i_ref.1 - i_inv.1);
        let wl = w * f.l;
        let cmd = (
            p.kp_i * ei.0 + self.integ_i.0 + v.0 + f.r * i_inv.0 - wl * i_inv.1,
            p.kp_i * ei.1 + self.integ_i.1 + v.1 + f.r * i_inv.1 + wl * i_inv.0,
        );
        self.integ_i.0 += p.ki_i * ei.0 * dt;
        self.integ_i.1 += p.ki_i * ei.1 * dt;
        if !finite(cmd) {
            return Err(ControlError::NonFinite {
                what: "inverter voltage command",
                t,
            });
        }
        Ok(cmd)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn loops() -> InnerLoops {
        InnerLoops::new(
            InnerLoopParams::default(),
            FilterPu {
                l: 0.1,
                c: 0.2,
                r: 0.005,
            },
        )
    }

    #[test]
    fn saturation_keeps_angle() {
        let ((d, q), hit) = saturate_magnitude(2.0 * 0.6, 2.0 * 0.8, 1.2);
        assert!(hit);
        assert!((d.hypot(q) - 1.2).abs() < 1e-12);
        assert!((q.atan2(d) - 0.8f64.atan2(0.6)).abs() < 1e-12);
        assert_eq!(saturate_magnitude(0.3, 0.4, 1.2), ((0.3, 0.4), false));
    }

    #[test]
    fn equilibrium_is_a_fixed_point() {
        // Steady state: v = v_ref, i_inv = i_out + j w C v.
        let mut c = loops();
        let w = 1.0;
        let v = (1.0, 0.0);
        let i_out = (0.6, -0.2);
        let i_inv = (
            i_out.0 - w * c.filter.c * v.1,
            i_out.1 + w * c.filter.c * v.0,
        );
        let first = c.step(v, v, i_inv, i_out, w, 50e-6, 0.0).unwrap();
        let snapshot = (c.integ_v, c.integ_i);
        for _ in 0..100 {
            let cmd = c.step(v, v, i_inv, i_out, w, 50e-6, 0.0).unwrap();
            assert!((cmd.0 - first.0).abs() < 1e-12 && (cmd.1 - first.1).abs() < 1e-12);
        }
        assert_eq!(snapshot, (c.integ_v, c.integ_i));
        assert_eq!(snapshot, ((0.0, 0.0), (0.0, 0.0)));
    }

    #[test]
    fn current_reference_is_limited() {
        let mut c = loops();
        c.step(
            (3.0, 0.0),
            (0.0, 0.0),
            (0.0, 0.0),
            (2.0, 0.0),
            1.0,
            50e-6,
            0.0,
        )
        .unwrap();
        assert!(c.saturated);
        assert!((c.i_ref.0.hypot(c.i_ref.1) - 1.2).abs() < 1e-12);
        assert_eq!(c.integ_v, (0.0, 0.0));
    }

    #[test]
    fn non_finite_input_is_an_error() {
        let mut c = loops();
        let err = c
            .step(
                (1.0, 0.0),
                (f64::NAN, 0.0),
                (0.0, 0.0),
                (0.0, 0.0),
                1.0,
                50e-6,
                0.25,
            )
            .unwrap_err();
        assert!(matches!(err, ControlError::NonFinite { .. }));
    }

    /// Averaged dq model of the LC filter feeding a resistive load, with a
    /// one-step actuation delay, integrated with small explicit substeps.
    #[test]
    fn closed_loop_lc_fixture_settles() {
        let mut c = loops();
        let wb = 2.0 * std::f64::consts::PI * 60.0;
        let (l, cf, r) = (c.filter.l, c.filter.c, c.filter.r);
        let r_load = 1.0 / 0.8;
        let dt = 50e-6;
        let sub = 50;
        let h = dt / sub as f64;
        let w = 1.0;
        let (mut v, mut i) = ((0.0f64, 0.0f64), (0.0f64, 0.0f64));
        let mut cmd = (0.0, 0.0);
        let mut settled_at = None;
        for k in 0..4000 {
            let t = k as f64 * dt;
            let io = (v.0 / r_load, v.1 / r_load);
            let next = c.step((1.0, 0.0), v, i, io, w, dt, t).unwrap();
            for _ in 0..sub {
                let io = (v.0 / r_load, v.1 / r_load);
                let di = (
                    wb / l * (cmd.0 - v.0 - r * i.0) + wb * w * i.1,
                    wb / l * (cmd.1 - v.1 - r * i.1) - wb * w * i.0,
                );
                let dv = (
                    wb / cf * (i.0 - io.0) + wb * w * v.1,
                    wb / cf * (i.1 - io.1) - wb * w * v.0,
                );
                i = (i.0 + h * di.0, i.1 + h * di.1);
                v = (v.0 + h * dv.0, v.1 + h * dv.1);
            }
            cmd = next;
            let err = ((v.0 - 1.0).hypot(v.1)).abs();
            match (settled_at, err < 0.02) {
                (None, true) => settled_at = Some(t),
                (Some(_), false) => settled_at = None,
                _ => {}
            }
        }
        let ts = settled_at.expect("voltage never settled");
        assert!(ts < 0.1, "settled at {ts}");
    }
}
