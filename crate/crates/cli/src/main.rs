mod artifacts;

use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use blackstart::emt::{run, RunOptions, SolverConfig, TerminalController};
use blackstart::harness::{
    compare_to_oracle, compute_metrics, oracle_steps, truncate_schedule, DeviationReport,
    MetricsConfig, OracleStep, StabilityMetrics, TABLE1_SCHEDULE_JSON,
};
use blackstart::network::{parse_case, NetworkCase, WSCC9_CASE_JSON};
use blackstart::plant::GridFormingPlant;
use blackstart::powerflow::{LoadModel, PfSolution};
use blackstart::schedule::EventSchedule;
use clap::{Args, Parser, Subcommand, ValueEnum};

use artifacts::{sha256_hex, InputRef, Metadata, Outputs, SCHEMA_VERSION};

const TIMESERIES: &str = "timeseries.csv";
const METRICS: &str = "metrics.csv";
const SUMMARY: &str = "summary.txt";
const SIM_META: &str = "simulate.json";
const POWERFLOW: &str = "powerflow.csv";
const PF_META: &str = "powerflow.json";
const DEVIATIONS: &str = "deviations.csv";

#[derive(Parser)]
#[command(
    name = "blackstart",
    version,
    about = "Black start of a transmission backbone from a grid-forming PV-battery plant"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the time-domain simulation and compute stability metrics.
    Simulate(SimulateArgs),
    /// Solve the steady-state power flow for every schedule step.
    Powerflow(PowerflowArgs),
    /// Compare simulated steady states against power-flow references.
    Compare(CompareArgs),
    /// Check a case (and optionally a schedule) and print a summary.
    Validate(ValidateArgs),
}

#[derive(Args)]
struct Inputs {
    /// Case file, or "9bus" for the bundled case.
    #[arg(long, default_value = "9bus")]
    case: String,
    /// Schedule file, or "table1" for the bundled schedule.
    #[arg(long, default_value = "table1")]
    schedule: String,
    /// End of the simulated interval, seconds.
    #[arg(long = "t-end", default_value_t = 20.0)]
    t_end: f64,
    /// Output directory.
    #[arg(long, env = "BLACKSTART_OUT_DIR", default_value = "out")]
    out: PathBuf,
    /// Model transformer core saturation (and magnetizing shunts in the power flow).
    #[arg(long = "enable-saturation")]
    enable_saturation: bool,
}

#[derive(Args)]
struct SimulateArgs {
    #[command(flatten)]
    inputs: Inputs,
    /// Solver time step, seconds.
    #[arg(long, default_value_t = 50e-6)]
    dt: f64,
    /// Keep every n-th solver step in the time series.
    #[arg(long, default_value_t = 10)]
    decimation: usize,
}

#[derive(Clone, Copy, ValueEnum)]
enum LoadModelArg {
    ConstantImpedance,
    ConstantPower,
}

impl From<LoadModelArg> for LoadModel {
    fn from(m: LoadModelArg) -> Self {
        match m {
            LoadModelArg::ConstantImpedance => LoadModel::ConstantImpedance,
            LoadModelArg::ConstantPower => LoadModel::ConstantPower,
        }
    }
}

#[derive(Args)]
struct PowerflowArgs {
    #[command(flatten)]
    inputs: Inputs,
    /// Load representation in the power flow.
    #[arg(long = "load-model", value_enum, default_value = "constant-impedance")]
    load_model: LoadModelArg,
}

#[derive(Args)]
struct CompareArgs {
    /// Simulation output directory or its metrics CSV.
    #[arg(long)]
    sim: PathBuf,
    /// Power-flow output directory or its CSV.
    #[arg(long)]
    oracle: PathBuf,
    /// Largest acceptable relative deviation.
    #[arg(long, default_value_t = 0.01)]
    threshold: f64,
    /// Lower bound on the apparent power used to normalize P and Q deviations, MVA.
    #[arg(long = "s-floor-mva", default_value_t = 1.0)]
    s_floor_mva: f64,
    /// Output directory for the deviation table.
    #[arg(long, env = "BLACKSTART_OUT_DIR", default_value = "out")]
    out: PathBuf,
}

#[derive(Args)]
struct ValidateArgs {
    /// Case file, or "9bus" for the bundled case.
    #[arg(long, default_value = "9bus")]
    case: String,
    /// Schedule file or "table1" to check against the case.
    #[arg(long)]
    schedule: Option<String>,
}

/// A domain failure that still carries a report worth printing.
struct Failed;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Simulate(a) => simulate(a),
        Command::Powerflow(a) => powerflow(a),
        Command::Compare(a) => compare(a),
        Command::Validate(a) => validate(a),
    };
    match result {
        Ok(Ok(())) => ExitCode::SUCCESS,
        Ok(Err(Failed)) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn read_input(spec: &str, builtin: &str, text: &str, what: &str) -> Result<(String, InputRef)> {
    let text = if spec == builtin {
        text.to_string()
    } else {
        fs::read_to_string(spec).with_context(|| format!("cannot read {what} file {spec}"))?
    };
    let r = InputRef {
        source: spec.to_string(),
        sha256: sha256_hex(text.as_bytes()),
    };
    Ok((text, r))
}

struct Loaded {
    case: NetworkCase,
    schedule: EventSchedule,
    case_ref: InputRef,
    schedule_ref: InputRef,
}

fn load_inputs(inputs: &Inputs) -> Result<Loaded> {
    let (case_text, case_ref) = read_input(&inputs.case, "9bus", WSCC9_CASE_JSON, "case")?;
    let case = parse_case(&case_text).with_context(|| format!("case {}", inputs.case))?;
    let (sched_text, schedule_ref) =
        read_input(&inputs.schedule, "table1", TABLE1_SCHEDULE_JSON, "schedule")?;
    let schedule = EventSchedule::from_json(&sched_text)
        .map_err(|e| anyhow::anyhow!("{e}"))
        .with_context(|| format!("schedule {}", inputs.schedule))?;
    schedule
        .validate(&case)
        .with_context(|| format!("schedule {} against case {}", inputs.schedule, inputs.case))?;
    if !(inputs.t_end > 0.0 && inputs.t_end.is_finite()) {
        bail!(
            "--t-end must be a positive number of seconds, got {}",
            inputs.t_end
        );
    }
    Ok(Loaded {
        case,
        schedule,
        case_ref,
        schedule_ref,
    })
}

fn write_summary(w: &mut dyn Write, m: &StabilityMetrics) -> std::io::Result<()> {
    writeln!(w, "step  window [s]        f_ss [Hz]   P [MW]    Q [Mvar]  bus  V_min   V_max   V_ss    settled")?;
    for s in &m.steps {
        for (k, b) in s.buses.iter().enumerate() {
            if k == 0 {
                write!(
                    w,
                    "{:>4}  {:>6.3}-{:<9.3}  {:>9.4}  {:>8.2}  {:>8.2}",
                    s.index, s.t_start, s.t_end, s.f_ss, s.p_ss_mw, s.q_ss_mvar
                )?;
            } else {
                write!(w, "{:54}", "")?;
            }
            writeln!(
                w,
                "  {:>3}  {:.4}  {:.4}  {:.4}  {}",
                b.bus,
                b.v_min,
                b.v_max,
                b.v_ss,
                if b.settled { "yes" } else { "no" }
            )?;
        }
    }
    Ok(())
}

fn simulate(a: SimulateArgs) -> Result<Result<(), Failed>> {
    let loaded = load_inputs(&a.inputs)?;
    let config = SolverConfig {
        dt: a.dt,
        t_end: a.inputs.t_end,
        output_decimation: a.decimation,
    };
    config.validate()?;
    let options = RunOptions {
        saturation: a.inputs.enable_saturation,
    };
    let mut plants = GridFormingPlant::for_case(&loaded.case);
    let params: Vec<_> = plants.iter().map(|p| p.params.clone()).collect();
    for (s, p) in loaded.case.sources.iter().zip(&params) {
        if let Some(problem) = p.validate().into_iter().next() {
            bail!("plant at bus {}: {problem}", s.bus);
        }
    }

    let mut out = Outputs::create(&a.inputs.out)?;
    let result = {
        let mut ctl: Vec<&mut dyn TerminalController> = plants
            .iter_mut()
            .map(|p| p as &mut dyn TerminalController)
            .collect();
        run(&loaded.case, &loaded.schedule, &mut ctl, &config, options)?
    };
    for w in &result.warnings {
        eprintln!("warning: {w}");
    }
    out.write(TIMESERIES, |w| Ok(result.series.write_csv(w)?))?;

    let schedule = truncate_schedule(&loaded.schedule, a.inputs.t_end);
    let metrics_config = MetricsConfig::default();
    let metrics = compute_metrics(&result.series, &loaded.case, &schedule, &metrics_config)?;
    out.write(METRICS, |w| Ok(metrics.write_csv(w)?))?;
    out.write(SUMMARY, |w| Ok(write_summary(w, &metrics)?))?;

    let mut artifacts = out.names();
    artifacts.push(SIM_META.into());
    let meta = Metadata {
        schema_version: SCHEMA_VERSION,
        tool_version: env!("CARGO_PKG_VERSION").into(),
        command: "simulate".into(),
        case: loaded.case_ref,
        schedule: loaded.schedule_ref,
        t_end: a.inputs.t_end,
        saturation: options.saturation,
        solver: Some(config),
        metrics: Some(metrics_config),
        load_model: None,
        plants: params,
        deterministic: true,
        warnings: result.warnings.clone(),
        artifacts,
    };
    out.write(SIM_META, |w| Ok(serde_json::to_writer_pretty(w, &meta)?))?;
    out.commit();

    let mut stdout = std::io::stdout().lock();
    write_summary(&mut stdout, &metrics)?;
    println!(
        "{} steps, {} events; wrote {}",
        result.steps,
        result.events_applied,
        a.inputs.out.display()
    );
    Ok(Ok(()))
}

fn powerflow(a: PowerflowArgs) -> Result<Result<(), Failed>> {
    let loaded = load_inputs(&a.inputs)?;
    let model: LoadModel = a.load_model.into();
    let steps = oracle_steps(
        &loaded.case,
        &loaded.schedule,
        a.inputs.t_end,
        model,
        a.inputs.enable_saturation,
    )?;
    let mut out = Outputs::create(&a.inputs.out)?;
    out.write(POWERFLOW, |w| Ok(write_oracle_csv(w, &steps)?))?;
    let mut artifacts = out.names();
    artifacts.push(PF_META.into());
    let meta = Metadata {
        schema_version: SCHEMA_VERSION,
        tool_version: env!("CARGO_PKG_VERSION").into(),
        command: "powerflow".into(),
        case: loaded.case_ref,
        schedule: loaded.schedule_ref,
        t_end: a.inputs.t_end,
        saturation: a.inputs.enable_saturation,
        solver: None,
        metrics: None,
        load_model: Some(model),
        plants: Vec::new(),
        deterministic: true,
        warnings: Vec::new(),
        artifacts,
    };
    out.write(PF_META, |w| Ok(serde_json::to_writer_pretty(w, &meta)?))?;
    out.commit();

    println!("step  bus  V [pu]   angle [deg]");
    for s in &steps {
        let sol = &s.solution;
        for (k, bus) in sol.bus_ids.iter().enumerate() {
            println!(
                "{:>4}  {:>3}  {:.5}  {:>9.4}",
                s.step,
                bus,
                sol.vm[k],
                sol.va[k].to_degrees()
            );
        }
        println!(
            "      plant P = {:.3} MW, Q = {:.3} Mvar ({} iterations)",
            s.p_mw, s.q_mvar, sol.iterations
        );
    }
    Ok(Ok(()))
}

const ORACLE_HEADER: &str = "step,t_start,bus,vm_pu,va_rad,plant_p_mw,plant_q_mvar";

/// One row per step and bus; the plant output is repeated on every row of
/// its step.
fn write_oracle_csv(w: &mut dyn Write, steps: &[OracleStep]) -> std::io::Result<()> {
    writeln!(w, "{ORACLE_HEADER}")?;
    for s in steps {
        let sol = &s.solution;
        for (k, bus) in sol.bus_ids.iter().enumerate() {
            writeln!(
                w,
                "{},{:.6},{},{:.12e},{:.12e},{:.12e},{:.12e}",
                s.step, s.t_start, bus, sol.vm[k], sol.va[k], s.p_mw, s.q_mvar
            )?;
        }
    }
    Ok(())
}

fn read_oracle_csv(path: &Path) -> Result<Vec<OracleStep>> {
    let file = fs::File::open(path).with_context(|| format!("cannot read {}", path.display()))?;
    let mut out: Vec<OracleStep> = Vec::new();
    for (n, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        if n == 0 {
            if line.trim() != ORACLE_HEADER {
                bail!("{}: unexpected header", path.display());
            }
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 7 {
            bail!(
                "{} line {}: {} fields, expected 7",
                path.display(),
                n + 1,
                f.len()
            );
        }
        let num = |i: usize| -> Result<f64> {
            f[i].parse()
                .with_context(|| format!("{} line {}: field {}", path.display(), n + 1, i + 1))
        };
        let step: usize = f[0]
            .parse()
            .with_context(|| format!("{} line {}: step", path.display(), n + 1))?;
        if out.last().is_none_or(|s| s.step != step) {
            out.push(OracleStep {
                step,
                t_start: num(1)?,
                solution: PfSolution {
                    bus_ids: Vec::new(),
                    vm: Vec::new(),
                    va: Vec::new(),
                    slack_p: f64::NAN,
                    slack_q: f64::NAN,
                    iterations: 0,
                    max_mismatch: f64::NAN,
                    history: Vec::new(),
                },
                p_mw: num(5)?,
                q_mvar: num(6)?,
            });
        }
        let s = out.last_mut().expect("pushed above");
        s.solution.bus_ids.push(f[2].to_string());
        s.solution.vm.push(num(3)?);
        s.solution.va.push(num(4)?);
    }
    Ok(out)
}

/// `(data file, metadata file)` for a path that is either the data file or
/// the directory holding it.
fn locate(path: &Path, data: &str, meta: &str) -> (PathBuf, PathBuf) {
    if path.is_dir() {
        (path.join(data), path.join(meta))
    } else {
        let dir = path.parent().unwrap_or(Path::new("."));
        (path.to_path_buf(), dir.join(meta))
    }
}

fn write_deviations(w: &mut dyn Write, r: &DeviationReport) -> std::io::Result<()> {
    writeln!(w, "step,quantity,simulated,reference,relative")?;
    for d in &r.rows {
        writeln!(
            w,
            "{},{},{:.12e},{:.12e},{:.12e}",
            d.step, d.quantity, d.simulated, d.reference, d.relative
        )?;
    }
    Ok(())
}

fn compare(a: CompareArgs) -> Result<Result<(), Failed>> {
    if !(a.threshold >= 0.0) {
        bail!("--threshold must be >= 0, got {}", a.threshold);
    }
    let (metrics_path, sim_meta_path) = locate(&a.sim, METRICS, SIM_META);
    let (oracle_path, pf_meta_path) = locate(&a.oracle, POWERFLOW, PF_META);
    let sim_meta = Metadata::read(&sim_meta_path)?;
    let pf_meta = Metadata::read(&pf_meta_path)?;
    if sim_meta.case.sha256 != pf_meta.case.sha256 {
        bail!(
            "artifacts come from different cases ({} vs {})",
            sim_meta.case.source,
            pf_meta.case.source
        );
    }
    if sim_meta.schedule.sha256 != pf_meta.schedule.sha256 {
        bail!(
            "artifacts come from different schedules ({} vs {})",
            sim_meta.schedule.source,
            pf_meta.schedule.source
        );
    }

    let file = fs::File::open(&metrics_path)
        .with_context(|| format!("cannot read {}", metrics_path.display()))?;
    let sims = StabilityMetrics::read_steady_states(BufReader::new(file))
        .with_context(|| format!("reading {}", metrics_path.display()))?;
    let oracle = read_oracle_csv(&oracle_path)?;
    let report = compare_to_oracle(&sims, &oracle, a.s_floor_mva)?;

    let mut out = Outputs::create(&a.out)?;
    out.write(DEVIATIONS, |w| Ok(write_deviations(w, &report)?))?;
    out.commit();

    println!("step  quantity  simulated     reference     deviation");
    for d in &report.rows {
        let flag = if d.relative <= a.threshold {
            ""
        } else {
            "  EXCEEDS"
        };
        println!(
            "{:>4}  {:<8}  {:>12.6}  {:>12.6}  {:>8.4}%{flag}",
            d.step,
            d.quantity,
            d.simulated,
            d.reference,
            100.0 * d.relative
        );
    }
    let exceeding = report.exceeding(a.threshold).count();
    println!(
        "max voltage deviation {:.4}%, max power deviation {:.4}%, threshold {:.4}%",
        100.0 * report.max_voltage_deviation(),
        100.0 * report.max_power_deviation(),
        100.0 * a.threshold
    );
    if exceeding > 0 {
        println!("{exceeding} deviation(s) exceed the threshold");
        return Ok(Err(Failed));
    }
    Ok(Ok(()))
}

fn validate(a: ValidateArgs) -> Result<Result<(), Failed>> {
    let mut findings: Vec<String> = Vec::new();
    let case_text = if a.case == "9bus" {
        Some(WSCC9_CASE_JSON.to_string())
    } else {
        match fs::read_to_string(&a.case) {
            Ok(t) => Some(t),
            Err(e) => {
                findings.push(format!("cannot read {}: {e}", a.case));
                None
            }
        }
    };
    let case: Option<NetworkCase> =
        case_text.and_then(|t| match serde_json::from_str::<NetworkCase>(&t) {
            Ok(c) => Some(c),
            Err(e) => {
                findings.push(format!("parse: {e}"));
                None
            }
        });

    println!("case {}", a.case);
    if let Some(c) = &case {
        println!(
            "  {} buses, {} branches, {} transformers, {} loads, {} breakers, {} sources",
            c.buses.len(),
            c.branches.len(),
            c.transformers.len(),
            c.loads.len(),
            c.breakers.len(),
            c.sources.len()
        );
        println!("  base {} MVA, {} Hz", c.base_mva, c.base_frequency_hz);
        findings.extend(c.validate().iter().map(ToString::to_string));
        for s in &c.sources {
            findings.extend(
                s.plant
                    .validate()
                    .into_iter()
                    .map(|p| format!("plant at bus {}: {p}", s.bus)),
            );
        }
    }
    if let Some(spec) = &a.schedule {
        match read_input(spec, "table1", TABLE1_SCHEDULE_JSON, "schedule")
            .and_then(|(t, _)| EventSchedule::from_json(&t).map_err(|e| anyhow::anyhow!("{e}")))
        {
            Ok(s) => {
                println!(
                    "schedule {spec}: {} events, steps at {:?} s",
                    s.events.len(),
                    s.step_times()
                );
                if let Some(c) = &case {
                    if let Err(e) = s.validate(c) {
                        findings.push(format!("schedule: {e}"));
                    }
                }
            }
            Err(e) => findings.push(format!("schedule {spec}: {e:#}")),
        }
    }
    if findings.is_empty() {
        println!("all checks pass");
    } else {
        println!("{} finding(s):", findings.len());
        for f in &findings {
            println!("  - {f}");
        }
    }
    Ok(Ok(()))
}
