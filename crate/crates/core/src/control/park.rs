//! Amplitude-invariant Park transform.
//!
//! The d axis is aligned with phase a at `theta`, so a balanced set
//! `A cos(theta - k 2pi/3)` maps to `(A, 0)`.

const SQRT3_2: f64 = 0.866_025_403_784_438_6;

/// Clarke transform, amplitude invariant. Zero sequence is discarded.
#[inline]
pub fn abc_to_alpha_beta(x: [f64; 3]) -> (f64, f64) {
    let alpha = (2.0 * x[0] - x[1] - x[2]) / 3.0;
    let beta = (x[1] - x[2]) / 3.0_f64.sqrt();
    (alpha, beta)
}

#[inline]
pub fn alpha_beta_to_abc(alpha: f64, beta: f64) -> [f64; 3] {
    [
        alpha,
        -0.5 * alpha + SQRT3_2 * beta,
        -0.5 * alpha - SQRT3_2 * beta,
    ]
}

#[inline]
pub fn abc_to_dq(x: [f64; 3], theta: f64) -> (f64, f64) {
    let (alpha, beta) = abc_to_alpha_beta(x);
    let (s, c) = theta.sin_cos();
    (alpha * c + beta * s, -alpha * s + beta * c)
}

#[inline]
pub fn dq_to_abc(d: f64, q: f64, theta: f64) -> [f64; 3] {
    let (s, c) = theta.sin_cos();
    alpha_beta_to_abc(d * c - q * s, d * s + q * c)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn balanced(amplitude: f64, phase: f64) -> [f64; 3] {
        [0.0, -2.0 * PI / 3.0, 2.0 * PI / 3.0].map(|k| amplitude * (phase + k).cos())
    }

    #[test]
    fn aligned_set_maps_to_d_axis() {
        for theta in [0.0, 0.3, 2.0, 5.9] {
            let (d, q) = abc_to_dq(balanced(1.0, theta), theta);
            assert!(
                (d - 1.0).abs() < 1e-14 && q.abs() < 1e-14,
                "{theta}: {d} {q}"
            );
        }
    }

    #[test]
    fn zero_in_zero_out() {
        assert_eq!(abc_to_dq([0.0; 3], 1.234), (0.0, 0.0));
    }

    #[test]
    fn lagging_set_has_negative_q() {
        let (d, q) = abc_to_dq(balanced(1.0, 0.7 - PI / 2.0), 0.7);
        assert!(d.abs() < 1e-14 && (q + 1.0).abs() < 1e-14);
    }

    proptest! {
        #[test]
        fn round_trip_without_zero_sequence(
            a in -1e3f64..1e3, b in -1e3f64..1e3, theta in -10.0f64..10.0,
        ) {
            let x = [a, b, -a - b];
            let (d, q) = abc_to_dq(x, theta);
            let y = dq_to_abc(d, q, theta);
            let scale = 1.0 + a.abs() + b.abs();
            for k in 0..3 {
                prop_assert!((x[k] - y[k]).abs() <= 1e-12 * scale);
            }
        }
    }
}
