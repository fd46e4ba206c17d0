use super::{dq_to_abc, saturate_magnitude, ControlError};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InverterOutput {
    /// Phase voltages applied behind the filter inductor, volts.
    pub v_abc: [f64; 3],
    /// The command was scaled down to the modulation limit.
    pub clamped: bool,
    /// Applied command after clamping, pu.
    pub v_dq: (f64, f64),
}

/// Average model of the bridge: the dq command (pu of `v_base_peak`) becomes
/// three ideal phase sources. The command magnitude is limited to what the
/// DC link can synthesize, `v_dc / 2` peak per phase on the converter side,
/// referred through `turns_ratio` (grid side over converter side).
pub fn averaged_inverter(
    v_dq: (f64, f64),
    theta: f64,
    v_dc: f64,
    turns_ratio: f64,
    v_base_peak: f64,
) -> Result<InverterOutput, ControlError> {
    if !(v_dc > 0.0) {
        return Err(ControlError::DcLink(v_dc));
    }
    let limit = 0.5 * v_dc * turns_ratio / v_base_peak;
    let (v_dq, clamped) = saturate_magnitude(v_dq.0, v_dq.1, limit);
    let v_abc = dq_to_abc(v_dq.0, v_dq.1, theta).map(|x| x * v_base_peak);
    Ok(InverterOutput {
        v_abc,
        clamped,
        v_dq,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn ample_link_passes_command() {
        let out = averaged_inverter((1.0, 0.0), 0.5, 1e4, 1.0, 100.0).unwrap();
        assert!(!out.clamped);
        for (k, x) in out.v_abc.iter().enumerate() {
            let expected = 100.0 * (0.5 - k as f64 * 2.0 * PI / 3.0).cos();
            assert!((x - expected).abs() < 1e-9);
        }
    }

    #[test]
    fn command_beyond_link_is_clamped() {
        // Limit: 0.5 * 150 / 100 = 0.75 pu.
        let out = averaged_inverter((1.0, 0.0), 0.0, 150.0, 1.0, 100.0).unwrap();
        assert!(out.clamped);
        assert!((out.v_abc[0] - 75.0).abs() < 1e-9);
    }

    #[test]
    fn zero_command_and_bad_link() {
        let out = averaged_inverter((0.0, 0.0), 1.0, 1.0, 1.0, 1.0).unwrap();
        assert_eq!(out.v_abc, [0.0; 3]);
        assert!(averaged_inverter((0.0, 0.0), 1.0, 0.0, 1.0, 1.0).is_err());
    }
}
