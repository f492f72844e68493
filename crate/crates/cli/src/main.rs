//! `dcf`: command-line front end over the analytical model and the
//! simulator. Every subcommand emits CSV (stdout or `--out`) with a
//! stable header; human-readable summaries go to stderr so the CSV
//! stream stays clean. Exit status: 0 success, 1 usage problem, 2
//! numerical failure.

use clap::{Args, Parser, Subcommand, ValueEnum};
use dcf_model::config::{db_to_linear, Scenario};
use dcf_model::phy::{self, BerQuery};
use dcf_model::sim::{self, SlotOutcome};
use dcf_model::solver::{self, ModelSolution};
use rayon::prelude::*;
use std::path::PathBuf;

#[derive(Parser)]
#[command(
    name = "dcf",
    version,
    about = "802.11 DCF throughput model: solver, sweeps, simulator, BER tables"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve one scenario and emit the operating point as one CSV row
    Solve(ScenarioArgs),
    /// Solve along a one-dimensional parameter grid
    Sweep(SweepArgs),
    /// Run the discrete-event simulator for one scenario
    Simulate(SimulateArgs),
    /// Solve and simulate each grid point, reporting relative errors
    Validate(ValidateArgs),
    /// Tabulate bit and frame error rates over an SNR grid
    Ber(BerArgs),
}

#[derive(Args)]
struct ScenarioArgs {
    /// Scenario file (flat `key = value` lines); defaults when omitted
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Override one scenario key (repeatable), e.g. --set n_stations=20
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Write the CSV here instead of stdout
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,
}

#[derive(Copy, Clone, PartialEq, Eq, ValueEnum)]
enum Axis {
    Lambda,
    N,
    Snr,
    Z0,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    scenario: ScenarioArgs,
    /// Swept parameter
    #[arg(long, value_enum)]
    axis: Axis,
    /// Grid: `a:b:steps` (inclusive linspace) or `v1,v2,...`
    #[arg(long)]
    grid: String,
    /// Simulate each point too, appending throughput_sim, ci95, seed
    #[arg(long)]
    validate: bool,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Simulated time per point, microseconds (only with --validate)
    #[arg(long = "horizon-us", default_value_t = 2e8)]
    horizon_us: f64,
    /// Batches for the simulator confidence interval
    #[arg(long, default_value_t = 10)]
    batches: u32,
}

#[derive(Args)]
struct SimulateArgs {
    #[command(flatten)]
    scenario: ScenarioArgs,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Simulated time, microseconds
    #[arg(long = "horizon-us", default_value_t = 2e8)]
    horizon_us: f64,
    #[arg(long, default_value_t = 10)]
    batches: u32,
    /// Emit a per-slot event log instead of the aggregate report row
    #[arg(long)]
    trace: bool,
}

#[derive(Args)]
struct ValidateArgs {
    #[command(flatten)]
    scenario: ScenarioArgs,
    #[arg(long, value_enum)]
    axis: Axis,
    #[arg(long)]
    grid: String,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long = "horizon-us", default_value_t = 2e8)]
    horizon_us: f64,
    #[arg(long, default_value_t = 10)]
    batches: u32,
}

#[derive(Args)]
struct BerArgs {
    #[command(flatten)]
    scenario: ScenarioArgs,
    /// SNR grid in dB: `a:b:steps` or `v1,v2,...`
    #[arg(long)]
    grid: String,
}

#[derive(Debug)]
enum AppError {
    Usage(String),
    Numerical(String),
    Io(std::io::Error),
}

impl From<std::io::Error> for AppError {
    fn from(e: std::io::Error) -> Self {
        AppError::Io(e)
    }
}

fn usage(e: impl std::fmt::Display) -> AppError {
    AppError::Usage(e.to_string())
}

fn numerical(e: impl std::fmt::Display) -> AppError {
    AppError::Numerical(e.to_string())
}

fn main() {
    std::process::exit(real_main());
}

fn real_main() -> i32 {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // --help/--version land here too; they are not usage errors
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let result = match cli.command {
        Command::Solve(a) => cmd_solve(a),
        Command::Sweep(a) => cmd_sweep(a),
        Command::Simulate(a) => cmd_simulate(a),
        Command::Validate(a) => cmd_validate(a),
        Command::Ber(a) => cmd_ber(a),
    };
    match result {
        Ok(()) => 0,
        Err(AppError::Usage(m)) => {
            eprintln!("error: {m}");
            1
        }
        Err(AppError::Numerical(m)) => {
            eprintln!("error: {m}");
            2
        }
        Err(AppError::Io(e)) => {
            eprintln!("error: {e}");
            1
        }
    }
}

fn load_scenario(args: &ScenarioArgs) -> Result<Scenario, AppError> {
    let mut sc = match &args.config {
        Some(path) => Scenario::load(path).map_err(usage)?,
        None => Scenario::default(),
    };
    for kv in &args.set {
        let (key, value) = kv
            .split_once('=')
            .ok_or_else(|| AppError::Usage(format!("--set expects KEY=VALUE, got `{kv}`")))?;
        sc.set(key.trim(), value.trim()).map_err(usage)?;
    }
    sc.validate().map_err(usage)?;
    Ok(sc)
}

/// Inclusive `a:b:steps` linspace or explicit `v1,v2,...` list; must be
/// monotone in either direction.
fn parse_grid(spec: &str) -> Result<Vec<f64>, AppError> {
    let values: Vec<f64> = if spec.contains(':') {
        let parts: Vec<&str> = spec.split(':').collect();
        if parts.len() != 3 {
            return Err(AppError::Usage(format!(
                "grid `{spec}`: expected a:b:steps"
            )));
        }
        let a: f64 = parts[0]
            .parse()
            .map_err(|e| AppError::Usage(format!("grid start `{}`: {e}", parts[0])))?;
        let b: f64 = parts[1]
            .parse()
            .map_err(|e| AppError::Usage(format!("grid end `{}`: {e}", parts[1])))?;
        let steps: usize = parts[2]
            .parse()
            .map_err(|e| AppError::Usage(format!("grid steps `{}`: {e}", parts[2])))?;
        if steps == 0 {
            return Err(AppError::Usage("grid steps must be >= 1".into()));
        }
        if !a.is_finite() || !b.is_finite() {
            return Err(AppError::Usage("linspace endpoints must be finite".into()));
        }
        if steps == 1 {
            vec![a]
        } else {
            (0..steps)
                .map(|i| a + (b - a) * i as f64 / (steps - 1) as f64)
                .collect()
        }
    } else {
        spec.split(',')
            .map(|v| {
                v.trim()
                    .parse::<f64>()
                    .map_err(|e| AppError::Usage(format!("grid value `{v}`: {e}")))
            })
            .collect::<Result<_, _>>()?
    };
    if values.is_empty() {
        return Err(AppError::Usage("grid is empty".into()));
    }
    if values.iter().any(|v| v.is_nan()) {
        return Err(AppError::Usage("grid values must not be NaN".into()));
    }
    let increasing = values.windows(2).all(|w| w[0] <= w[1]);
    let decreasing = values.windows(2).all(|w| w[0] >= w[1]);
    if !increasing && !decreasing {
        return Err(AppError::Usage(format!("grid `{spec}` is not monotone")));
    }
    Ok(values)
}

fn apply_axis(base: &Scenario, axis: Axis, value: f64) -> Result<Scenario, AppError> {
    let mut sc = base.clone();
    match axis {
        Axis::Lambda => {
            if value < 0.0 {
                return Err(AppError::Usage(format!("lambda grid value {value} < 0")));
            }
            sc.traffic.lambda_pkt_s = value;
        }
        Axis::N => {
            if value < 1.0 || value.fract() != 0.0 {
                return Err(AppError::Usage(format!(
                    "n grid values must be positive integers, got {value}"
                )));
            }
            sc.traffic.n_stations = value as u32;
        }
        Axis::Snr => sc.channel.snr_db = value,
        Axis::Z0 => sc.channel.z0_db = value,
    }
    sc.validate().map_err(usage)?;
    Ok(sc)
}

/// 10 significant digits, scientific; deterministic across runs.
fn fmt_f(x: f64) -> String {
    format!("{x:.9e}")
}

/// Error messages embedded in a CSV cell must not break the row shape.
fn csv_safe(msg: &str) -> String {
    msg.replace(',', ";").replace('\n', " ")
}

fn write_output(out: &Option<PathBuf>, content: &str) -> Result<(), AppError> {
    match out {
        Some(path) => std::fs::write(path, content)?,
        None => print!("{content}"),
    }
    Ok(())
}

const SOLVE_HEADER: &str =
    "lambda_pkt_s,n,snr_db,z0_db,p_e,tau,p_col,p_cap,p_eq,q,e_slot_us,throughput,iterations,residual";

fn solve_row(sc: &Scenario, s: &ModelSolution) -> String {
    format!(
        "{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
        fmt_f(sc.traffic.lambda_pkt_s),
        sc.traffic.n_stations,
        fmt_f(sc.channel.snr_db),
        fmt_f(sc.channel.z0_db),
        fmt_f(s.p_e),
        fmt_f(s.tau),
        fmt_f(s.p_col),
        fmt_f(s.p_cap),
        fmt_f(s.p_eq),
        fmt_f(s.q),
        fmt_f(s.e_slot_us),
        fmt_f(s.throughput),
        s.iterations,
        fmt_f(s.residual)
    )
}

/// Row of empty output cells for a failed point; inputs stay readable.
fn failed_row(sc: &Scenario) -> String {
    format!(
        "{},{},{},{}{}",
        fmt_f(sc.traffic.lambda_pkt_s),
        sc.traffic.n_stations,
        fmt_f(sc.channel.snr_db),
        fmt_f(sc.channel.z0_db),
        ",".repeat(10)
    )
}

fn solve_point(sc: &Scenario) -> Result<ModelSolution, solver::SolverError> {
    solver::solve_fixed_point(&sc.mac, &sc.channel, &sc.traffic, &sc.solver)
}

fn summarize_solution(s: &ModelSolution) {
    eprintln!(
        "tau={:.6} p_col={:.6} p_cap={:.6} p_e={:.6} p_eq={:.6} q={:.6}",
        s.tau, s.p_col, s.p_cap, s.p_e, s.p_eq, s.q
    );
    eprintln!(
        "throughput={:.6} e_slot={:.3} us ({} iterations, residual {:.3e})",
        s.throughput, s.e_slot_us, s.iterations, s.residual
    );
}

fn cmd_solve(args: ScenarioArgs) -> Result<(), AppError> {
    let sc = load_scenario(&args)?;
    let s = solve_point(&sc).map_err(numerical)?;
    let csv = format!("{SOLVE_HEADER}\n{}\n", solve_row(&sc, &s));
    write_output(&args.out, &csv)?;
    summarize_solution(&s);
    Ok(())
}

/// Fixed master-seed -> point-seed derivation (splitmix64 finalizer over
/// the point index) so sweep rows stay reproducible independently of
/// evaluation order.
fn point_seed(master: u64, index: usize) -> u64 {
    let mut z = master
        .wrapping_add((index as u64 + 1).wrapping_mul(0x9E3779B97F4A7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D049BB133111EB);
    z ^ (z >> 31)
}

fn cmd_sweep(args: SweepArgs) -> Result<(), AppError> {
    let base = load_scenario(&args.scenario)?;
    let grid = parse_grid(&args.grid)?;
    let points: Vec<Scenario> = grid
        .iter()
        .map(|v| apply_axis(&base, args.axis, *v))
        .collect::<Result<_, _>>()?;

    let rows: Vec<String> = points
        .par_iter()
        .enumerate()
        .map(|(i, sc)| {
            let mut row;
            let mut error = String::new();
            match solve_point(sc) {
                Ok(s) => {
                    row = solve_row(sc, &s);
                    if args.validate {
                        let seed = point_seed(args.seed, i);
                        match sim::run(
                            &sc.mac,
                            &sc.channel,
                            &sc.traffic,
                            seed,
                            args.horizon_us,
                            args.batches,
                        ) {
                            Ok(r) => {
                                row.push_str(&format!(
                                    ",{},{},{}",
                                    fmt_f(r.throughput),
                                    fmt_f(r.ci95_halfwidth),
                                    seed
                                ));
                            }
                            Err(e) => {
                                row.push_str(",,,");
                                error = csv_safe(&e.to_string());
                            }
                        }
                    }
                }
                Err(e) => {
                    row = failed_row(sc);
                    if args.validate {
                        row.push_str(",,,");
                    }
                    error = csv_safe(&e.to_string());
                }
            }
            format!("{row},{error}")
        })
        .collect();

    let header = if args.validate {
        format!("{SOLVE_HEADER},throughput_sim,ci95,seed,error")
    } else {
        format!("{SOLVE_HEADER},error")
    };
    let mut csv = String::from(&header);
    csv.push('\n');
    for r in &rows {
        csv.push_str(r);
        csv.push('\n');
    }
    write_output(&args.scenario.out, &csv)?;

    let failed = rows.iter().filter(|r| !r.ends_with(',')).count();
    eprintln!("{} points, {} failed", rows.len(), failed);
    Ok(())
}

fn cmd_validate(args: ValidateArgs) -> Result<(), AppError> {
    let base = load_scenario(&args.scenario)?;
    let grid = parse_grid(&args.grid)?;
    let points: Vec<Scenario> = grid
        .iter()
        .map(|v| apply_axis(&base, args.axis, *v))
        .collect::<Result<_, _>>()?;

    let rows: Vec<(String, Option<f64>)> = points
        .par_iter()
        .enumerate()
        .map(|(i, sc)| {
            let seed = point_seed(args.seed, i);
            let solved = solve_point(sc);
            let simulated = sim::run(
                &sc.mac,
                &sc.channel,
                &sc.traffic,
                seed,
                args.horizon_us,
                args.batches,
            );
            match (solved, simulated) {
                (Ok(s), Ok(r)) => {
                    let rel_err = relative_error(r.throughput, s.throughput);
                    let row = format!(
                        "{},{},{},{},{},",
                        solve_row(sc, &s),
                        fmt_f(r.throughput),
                        fmt_f(r.ci95_halfwidth),
                        seed,
                        fmt_f(rel_err)
                    );
                    (row, Some(rel_err))
                }
                (solved, simulated) => {
                    let mut error = String::new();
                    let row_head = match &solved {
                        Ok(s) => solve_row(sc, s),
                        Err(e) => {
                            error = e.to_string();
                            failed_row(sc)
                        }
                    };
                    if let Err(e) = &simulated {
                        if !error.is_empty() {
                            error.push_str("; ");
                        }
                        error.push_str(&e.to_string());
                    }
                    (format!("{row_head},,,,,{}", csv_safe(&error)), None)
                }
            }
        })
        .collect();

    let mut csv = format!("{SOLVE_HEADER},throughput_sim,ci95,seed,rel_err,error\n");
    for (r, _) in &rows {
        csv.push_str(r);
        csv.push('\n');
    }
    write_output(&args.scenario.out, &csv)?;

    let errs: Vec<f64> = rows.iter().filter_map(|(_, e)| *e).collect();
    let failed = rows.len() - errs.len();
    if let Some(max) = errs.iter().cloned().reduce(f64::max) {
        eprintln!(
            "max rel_err = {max:.6} over {} points ({} failed)",
            errs.len(),
            failed
        );
    } else {
        eprintln!("no points validated ({failed} failed)");
    }
    Ok(())
}

/// |sim - model| / model, with the zero-model cases pinned: both zero
/// compares equal (0), a nonzero simulated value against a zero model is
/// reported as its absolute value.
fn relative_error(sim_value: f64, model_value: f64) -> f64 {
    if model_value > 0.0 {
        (sim_value - model_value).abs() / model_value
    } else if sim_value == 0.0 {
        0.0
    } else {
        sim_value.abs()
    }
}

fn cmd_simulate(args: SimulateArgs) -> Result<(), AppError> {
    let sc = load_scenario(&args.scenario)?;
    if !(args.horizon_us > 0.0) {
        return Err(AppError::Usage("--horizon-us must be > 0".into()));
    }
    if args.batches < 1 {
        return Err(AppError::Usage("--batches must be >= 1".into()));
    }

    if args.trace {
        return trace_run(&sc, &args);
    }

    let r = sim::run(
        &sc.mac,
        &sc.channel,
        &sc.traffic,
        args.seed,
        args.horizon_us,
        args.batches,
    )
    .map_err(numerical)?;

    let header = "lambda_pkt_s,n,snr_db,z0_db,sim_time_us,payload_bits_delivered,slots_idle,\
                  slots_success,slots_collision,slots_error,slots_total,capture_events,\
                  tx_attempts,active_station_slots,throughput,ci95_halfwidth,seed";
    let row = format!(
        "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
        fmt_f(sc.traffic.lambda_pkt_s),
        sc.traffic.n_stations,
        fmt_f(sc.channel.snr_db),
        fmt_f(sc.channel.z0_db),
        fmt_f(r.sim_time_us),
        r.payload_bits_delivered,
        r.slots_idle,
        r.slots_success,
        r.slots_collision,
        r.slots_error,
        r.slots_total,
        r.capture_events,
        r.tx_attempts,
        r.active_station_slots,
        fmt_f(r.throughput),
        fmt_f(r.ci95_halfwidth),
        r.seed
    );
    write_output(&args.scenario.out, &format!("{header}\n{row}\n"))?;
    eprintln!(
        "{} slots over {:.3e} us: throughput={:.6} +/- {:.6} (95% CI), tau_hat={:.6}",
        r.slots_total,
        r.sim_time_us,
        r.throughput,
        r.ci95_halfwidth,
        r.tau_hat()
    );
    Ok(())
}

fn trace_run(sc: &Scenario, args: &SimulateArgs) -> Result<(), AppError> {
    let mut world =
        sim::World::new(&sc.mac, &sc.channel, &sc.traffic, args.seed).map_err(numerical)?;
    let mut csv = String::from("slot_index,outcome,station,duration_us\n");
    let mut index = 0u64;
    while world.time_us() < args.horizon_us {
        let ev = world.step_slot();
        let (name, station) = match ev.outcome {
            SlotOutcome::Idle => ("idle", String::new()),
            SlotOutcome::Success { station } => ("success", station.to_string()),
            SlotOutcome::Capture { station } => ("capture", station.to_string()),
            SlotOutcome::Collision => ("collision", String::new()),
            SlotOutcome::ChannelError { station } => ("channel_error", station.to_string()),
        };
        csv.push_str(&format!("{index},{name},{station},{}\n", fmt_f(ev.duration_us)));
        index += 1;
    }
    write_output(&args.scenario.out, &csv)?;
    eprintln!("{index} slots traced over {:.3e} us", world.time_us());
    Ok(())
}

fn cmd_ber(args: BerArgs) -> Result<(), AppError> {
    let sc = load_scenario(&args.scenario)?;
    let grid = parse_grid(&args.grid)?;
    let mut csv = String::from("snr_db,modulation,ber,fer\n");
    for snr_db in grid {
        let ber = phy::ber_rayleigh(BerQuery {
            modulation: sc.channel.modulation,
            snr_linear: db_to_linear(snr_db),
        })
        .map_err(numerical)?;
        let mut ch = sc.channel.clone();
        ch.snr_db = snr_db;
        let fer = phy::fer(&sc.mac, &ch).map_err(numerical)?;
        csv.push_str(&format!(
            "{},{},{},{}\n",
            fmt_f(snr_db),
            sc.channel.modulation,
            fmt_f(ber),
            fmt_f(fer)
        ));
    }
    write_output(&args.scenario.out, &csv)?;
    Ok(())
}
