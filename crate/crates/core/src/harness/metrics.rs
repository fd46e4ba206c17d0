use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use super::{step_windows, SteadyState};
use crate::emt::TimeSeries;
use crate::network::NetworkCase;
use crate::schedule::EventSchedule;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MetricsConfig {
    pub f_nominal: f64,
    /// Length of the steady-state snapshot before each event, cycles.
    pub steady_cycles: f64,
    /// Settled when the one-cycle RMS varies less than this fraction over
    /// the snapshot.
    pub settle_tolerance: f64,
    /// Initial span of the first step left out of the min/max bounds: the
    /// plant is still ramping its voltage up from zero.
    pub startup_exclusion_s: f64,
    /// Span after every later step's switching instant left out of the
    /// min/max bounds. Zero keeps the switching transients in.
    pub event_exclusion_s: f64,
    /// Bus whose phase-a voltage zero crossings give the frequency. Defaults
    /// to the first source bus.
    pub frequency_bus: Option<String>,
}

impl Default for MetricsConfig {
    fn default() -> Self {
        Self {
            f_nominal: 60.0,
            steady_cycles: 5.0,
            settle_tolerance: 0.002,
            startup_exclusion_s: 0.25,
            event_exclusion_s: 0.0,
            frequency_bus: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BusStepMetrics {
    pub bus: String,
    /// Extremes of the one-cycle RMS voltage over the step, pu.
    pub v_min: f64,
    pub v_max: f64,
    /// Mean RMS voltage over the snapshot, pu.
    pub v_ss: f64,
    /// (max - min) / mean of the one-cycle RMS within the snapshot.
    pub variation: f64,
    pub settled: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StepMetrics {
    pub index: usize,
    pub t_start: f64,
    pub t_end: f64,
    pub buses: Vec<BusStepMetrics>,
    pub f_min: f64,
    pub f_max: f64,
    /// Mean cycle frequency over the snapshot.
    pub f_ss: f64,
    /// Plant output averaged over the snapshot, MW / Mvar.
    pub p_ss_mw: f64,
    pub q_ss_mvar: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StabilityMetrics {
    pub steps: Vec<StepMetrics>,
}

#[derive(Debug, thiserror::Error)]
pub enum MetricsError {
    #[error("time series ends at {end:.6} s, before the event at {event:.6} s")]
    TooShort { end: f64, event: f64 },
    #[error("time series lacks signal \"{0}\"")]
    MissingSignal(String),
    #[error("step {index} is shorter than the {cycles}-cycle snapshot")]
    StepTooShort { index: usize, cycles: f64 },
    #[error("malformed metrics file, line {line}: {message}")]
    Format { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl StepMetrics {
    pub fn steady_state(&self) -> SteadyState {
        SteadyState {
            step: self.index,
            buses: self.buses.iter().map(|b| (b.bus.clone(), b.v_ss)).collect(),
            p_mw: self.p_ss_mw,
            q_mvar: self.q_ss_mvar,
        }
    }

    pub fn bus(&self, id: &str) -> Option<&BusStepMetrics> {
        self.buses.iter().find(|b| b.bus == id)
    }
}

/// Instantaneous three-phase RMS (pu of nominal phase RMS) of one bus.
fn three_phase_rms(ts: &TimeSeries, bus: &str, kv: f64) -> Result<Vec<f64>, MetricsError> {
    let col = |ph: &str| {
        let name = format!("v_{bus}_{ph}");
        ts.column(&name).ok_or(MetricsError::MissingSignal(name))
    };
    let (a, b, c) = (col("a")?, col("b")?, col("c")?);
    let base = kv / 3f64.sqrt();
    Ok((0..ts.len())
        .map(|i| ((a[i] * a[i] + b[i] * b[i] + c[i] * c[i]) / 3.0).sqrt() / base)
        .collect())
}

/// Rising zero-crossing times. Each crossing is located on the cubic
/// through the four samples around it.
fn rising_crossings(ts: &TimeSeries, x: &[f64]) -> Vec<f64> {
    let mut out = Vec::new();
    for i in 1..x.len() {
        if !(x[i - 1] < 0.0 && x[i] >= 0.0) {
            continue;
        }
        let mut s = -x[i - 1] / (x[i] - x[i - 1]);
        if i >= 2 && i + 1 < x.len() {
            // Lagrange cubic on nodes -1, 0, 1, 2 (relative to i - 1).
            let (y0, y1, y2, y3) = (x[i - 2], x[i - 1], x[i], x[i + 1]);
            let p = |s: f64| {
                -y0 * s * (s - 1.0) * (s - 2.0) / 6.0 + y1 * (s + 1.0) * (s - 1.0) * (s - 2.0) / 2.0
                    - y2 * (s + 1.0) * s * (s - 2.0) / 2.0
                    + y3 * (s + 1.0) * s * (s - 1.0) / 6.0
            };
            for _ in 0..8 {
                let h = 1e-6;
                let d = (p(s + h) - p(s - h)) / (2.0 * h);
                if d == 0.0 {
                    break;
                }
                let next = (s - p(s) / d).clamp(0.0, 1.0);
                if (next - s).abs() < 1e-12 {
                    s = next;
                    break;
                }
                s = next;
            }
        }
        out.push(ts.time(i - 1) + s * ts.sample_dt);
    }
    out
}

fn mean(x: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = x.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    if n == 0 {
        f64::NAN
    } else {
        s / n as f64
    }
}

/// Stability metrics per schedule step.
pub fn compute_metrics(
    ts: &TimeSeries,
    case: &NetworkCase,
    schedule: &EventSchedule,
    config: &MetricsConfig,
) -> Result<StabilityMetrics, MetricsError> {
    let end = ts.end_time();
    if let Some(last) = schedule.events.last() {
        if last.t > end + 1e-9 || ts.is_empty() {
            return Err(MetricsError::TooShort { end, event: last.t });
        }
    }
    let dt = ts.sample_dt;
    let t_stop = end + dt;
    let cycle = 1.0 / config.f_nominal;
    let n_cycle = ((cycle / dt).round() as usize).max(1);
    let snapshot = config.steady_cycles * cycle;
    let idx_at = |t: f64| (((t - ts.t0) / dt) - 1e-6).ceil().max(0.0) as usize;

    let f_bus = config
        .frequency_bus
        .clone()
        .or_else(|| case.sources.first().map(|s| s.bus.clone()))
        .unwrap_or_default();
    let f_name = format!("v_{f_bus}_a");
    let crossings = rising_crossings(
        ts,
        ts.column(&f_name)
            .ok_or(MetricsError::MissingSignal(f_name))?,
    );
    let cycle_f: Vec<(f64, f64)> = crossings
        .windows(2)
        .map(|w| (w[1], 1.0 / (w[1] - w[0])))
        .collect();

    let plant = case
        .sources
        .first()
        .map(|s| format!("plant{}_", s.bus))
        .unwrap_or_default();
    let p_col = ts.column(&format!("{plant}p_mw"));
    let q_col = ts.column(&format!("{plant}q_mvar"));

    let mut rms_cache: Vec<(String, Vec<f64>, Vec<f64>)> = Vec::new();
    let mut steps = Vec::new();
    let windows = step_windows(case, schedule, t_stop);
    let n_windows = windows.len();
    for w in windows {
        if w.t_end - w.t_start < snapshot {
            // A run cut short just after an event has no snapshot for it.
            if w.index == n_windows && w.index > 1 {
                break;
            }
            return Err(MetricsError::StepTooShort {
                index: w.index,
                cycles: config.steady_cycles,
            });
        }
        let bound_start = w.t_start
            + if w.index == 1 {
                config.startup_exclusion_s
            } else {
                config.event_exclusion_s
            };
        let (i0, i1) = (idx_at(bound_start), idx_at(w.t_end).min(ts.len()));
        let (s0, s1) = (idx_at(w.t_end - snapshot), i1);

        let mut buses = Vec::new();
        for bus in &w.energized {
            if !rms_cache.iter().any(|c| &c.0 == bus) {
                let kv = case.bus(bus).map_or(1.0, |b| b.nominal_kv);
                let r = three_phase_rms(ts, bus, kv)?;
                // Prefix sums of r^2 for one-cycle windows.
                let mut prefix = Vec::with_capacity(r.len() + 1);
                prefix.push(0.0);
                for x in &r {
                    prefix.push(prefix.last().unwrap() + x * x);
                }
                rms_cache.push((bus.clone(), r, prefix));
            }
            let (_, r, prefix) = rms_cache.iter().find(|c| &c.0 == bus).unwrap();
            let window_rms = |i: usize| {
                ((prefix[i + n_cycle] - prefix[i]) / n_cycle as f64)
                    .max(0.0)
                    .sqrt()
            };
            let windows = |a: usize, b: usize| (a..b.saturating_sub(n_cycle - 1)).map(window_rms);

            let (mut v_min, mut v_max) = (f64::INFINITY, f64::NEG_INFINITY);
            for v in windows(i0, i1) {
                v_min = v_min.min(v);
                v_max = v_max.max(v);
            }
            let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
            let ss: Vec<f64> = windows(s0, s1).collect();
            for &v in &ss {
                lo = lo.min(v);
                hi = hi.max(v);
            }
            let v_ss = mean(r[s0..s1].iter().copied());
            let variation = if ss.is_empty() {
                f64::NAN
            } else {
                (hi - lo) / mean(ss.iter().copied())
            };
            buses.push(BusStepMetrics {
                bus: bus.clone(),
                v_min,
                v_max,
                v_ss,
                variation,
                settled: variation < config.settle_tolerance,
            });
        }

        let in_step: Vec<f64> = cycle_f
            .iter()
            .filter(|(t, f)| *t - 1.0 / f >= bound_start && *t < w.t_end)
            .map(|x| x.1)
            .collect();
        let f_ss = mean(
            cycle_f
                .iter()
                .filter(|(t, f)| *t - 1.0 / f >= w.t_end - snapshot && *t < w.t_end)
                .map(|x| x.1),
        );
        let avg = |c: Option<&[f64]>| c.map_or(f64::NAN, |c| mean(c[s0..s1].iter().copied()));
        steps.push(StepMetrics {
            index: w.index,
            t_start: w.t_start,
            t_end: w.t_end,
            buses,
            f_min: in_step.iter().copied().fold(f64::INFINITY, f64::min),
            f_max: in_step.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            f_ss,
            p_ss_mw: avg(p_col),
            q_ss_mvar: avg(q_col),
        });
    }
    Ok(StabilityMetrics { steps })
}

const HEADER: &str = "step,t_start,t_end,quantity,min,max,steady,variation,settled";

impl StabilityMetrics {
    /// Long-format CSV: one row per step and quantity (`V_<bus>` in pu,
    /// `f` in Hz, `P` in MW, `Q` in Mvar).
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "{HEADER}")?;
        for s in &self.steps {
            let head = format!("{},{:.6},{:.6}", s.index, s.t_start, s.t_end);
            for b in &s.buses {
                writeln!(
                    w,
                    "{head},V_{},{:.12e},{:.12e},{:.12e},{:.12e},{}",
                    b.bus,
                    b.v_min,
                    b.v_max,
                    b.v_ss,
                    b.variation,
                    u8::from(b.settled)
                )?;
            }
            writeln!(
                w,
                "{head},f,{:.12e},{:.12e},{:.12e},,",
                s.f_min, s.f_max, s.f_ss
            )?;
            writeln!(w, "{head},P,,,{:.12e},,", s.p_ss_mw)?;
            writeln!(w, "{head},Q,,,{:.12e},,", s.q_ss_mvar)?;
        }
        Ok(())
    }

    /// Read the steady-state part of a metrics CSV back.
    pub fn read_steady_states<R: BufRead>(r: R) -> Result<Vec<SteadyState>, MetricsError> {
        let mut out: Vec<SteadyState> = Vec::new();
        for (n, line) in r.lines().enumerate() {
            let line = line?;
            let bad = |message: String| MetricsError::Format {
                line: n + 1,
                message,
            };
            if n == 0 {
                if line.trim() != HEADER {
                    return Err(bad("unexpected header".into()));
                }
                continue;
            }
            if line.trim().is_empty() {
                continue;
            }
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 9 {
                return Err(bad(format!("{} fields, expected 9", f.len())));
            }
            let step: usize = f[0].parse().map_err(|e| bad(format!("step: {e}")))?;
            let steady: f64 = f[6].parse().map_err(|e| bad(format!("steady: {e}")))?;
            if out.last().is_none_or(|s| s.step != step) {
                out.push(SteadyState {
                    step,
                    buses: Vec::new(),
                    p_mw: f64::NAN,
                    q_mvar: f64::NAN,
                });
            }
            let cur = out.last_mut().unwrap();
            match f[3] {
                "P" => cur.p_mw = steady,
                "Q" => cur.q_mvar = steady,
                "f" => {}
                q => match q.strip_prefix("V_") {
                    Some(bus) => cur.buses.push((bus.to_string(), steady)),
                    None => return Err(bad(format!("unknown quantity {q}"))),
                },
            }
        }
        Ok(out)
    }
}
