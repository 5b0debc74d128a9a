//! Command-line front end.
//!
//! Every subcommand resolves its flags into the corresponding library
//! configuration, echoes that configuration to stderr as JSON, and calls into
//! the library.

use std::ffi::OsString;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::analytics::{
    feasibility_grid, fiber_km_to_timebins, optimize_params, penalty_curve, penalty_to_db,
    timebins_to_fiber_km, write_grid_csv, write_penalty_csv, PlanQuery, Range, SearchGrid,
    FIBER_SPEED_MPS,
};
use crate::error::Error;
use crate::pattern::{generate_pattern, Pattern};
use crate::recovery::{find_offset, DetectionSet, RecoveryParams, DEFAULT_MIN_DETECTIONS};
use crate::simulator::{
    benchmark, monte_carlo_rates, run_scenario, simulate_block, BenchConfig, ChannelModel,
    ScenarioConfig, DESK_DELTA_MAX, DESK_N_R,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_IO: i32 = 3;
pub const EXIT_MALFORMED: i32 = 4;
pub const EXIT_INFEASIBLE: i32 = 5;
pub const EXIT_INVALID: i32 = 6;

const EXIT_CODES_HELP: &str = "\
Exit codes:
  0  success
  1  unexpected failure (including failed output writes)
  2  usage error (unknown flag, missing value)
  3  I/O error (missing or unreadable file)
  4  malformed or corrupt input file
  5  infeasible parameters (t >= 1 - 2Q, no feasible plan, block longer than interval)
  6  invalid argument value

Environment:
  RESYNC_THREADS  caps the worker threads used by `mc` and `grid`";

#[derive(Debug, Parser)]
#[command(
    name = "resync",
    version,
    about = "Clock-offset resynchronization from single-photon detections",
    after_help = EXIT_CODES_HELP
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a resynchronization pattern file.
    GenPattern {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 1 << 25)]
        bins: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Simulate the detections of one block for a pattern file.
    GenDetections {
        #[arg(long)]
        pattern: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 800)]
        tau_ps: i64,
        #[command(flatten)]
        channel: ChannelArgs,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Write one decimal timestamp per line instead of the binary format.
        #[arg(long)]
        text: bool,
    },
    /// Recover the offset of one block of detections.
    Recover {
        #[arg(long)]
        pattern: PathBuf,
        #[arg(long)]
        detections: PathBuf,
        #[arg(long, default_value_t = 800)]
        tau_ps: i64,
        #[arg(long = "t", default_value_t = 0.5)]
        threshold_t: f64,
        #[arg(long, default_value_t = 1_000_000)]
        delta_max: u64,
        #[arg(long, default_value_t = 500)]
        nd_max: usize,
        #[arg(long, default_value_t = DEFAULT_MIN_DETECTIONS)]
        min_detections: usize,
        #[arg(long)]
        json: bool,
    },
    /// Replay a multi-block scenario from a JSON configuration.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Also write the JSON summary to this file.
        #[arg(long)]
        summary: Option<PathBuf>,
    },
    /// Find the smallest N_d (and its threshold t) meeting the reliability bounds.
    Plan {
        #[command(flatten)]
        constraints: ConstraintArgs,
        /// Detection rate used for the SKR penalty of the optimum.
        #[arg(long)]
        rate_hz: Option<f64>,
        #[arg(long)]
        json: bool,
    },
    /// Emit the (N_d, t) feasibility grid as CSV.
    Grid {
        #[command(flatten)]
        constraints: ConstraintArgs,
        #[arg(long, default_value_t = 10)]
        nd_start: u64,
        #[arg(long, default_value_t = 1000)]
        nd_end: u64,
        #[arg(long, default_value_t = 10)]
        nd_step: u64,
        #[arg(long, default_value_t = 0.01)]
        t_start: f64,
        #[arg(long, default_value_t = 0.99)]
        t_end: f64,
        #[arg(long, default_value_t = 0.01)]
        t_step: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Emit SKR penalty curves of optimal plans as CSV.
    Penalty {
        #[command(flatten)]
        constraints: ConstraintArgs,
        /// Comma-separated maximum QBER values.
        #[arg(long, value_delimiter = ',', default_value = "0.05,0.11,0.2")]
        qmax_list: Vec<f64>,
        /// Comma-separated detection rates in Hz.
        #[arg(long, value_delimiter = ',', default_value = "1000,3000,10000,50000,100000")]
        rates_hz: Vec<f64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Monte Carlo estimate of acceptance rates for one channel.
    Mc {
        #[arg(long, default_value_t = 10_000)]
        trials: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 0)]
        pattern_seed: u64,
        #[arg(long, default_value_t = DESK_N_R)]
        n_r: usize,
        #[arg(long, default_value_t = 800)]
        tau_ps: i64,
        #[arg(long = "t", default_value_t = 0.5)]
        threshold_t: f64,
        #[arg(long, default_value_t = DESK_DELTA_MAX)]
        delta_max: u64,
        #[arg(long, default_value_t = 500)]
        nd_max: usize,
        #[command(flatten)]
        channel: ChannelArgs,
        #[arg(long)]
        json: bool,
    },
    /// Time the zero-offset fast path against a full sweep.
    Bench {
        #[arg(long, default_value_t = 1 << 25)]
        pattern_bins: usize,
        #[arg(long, default_value_t = 500)]
        nd: usize,
        #[arg(long, default_value_t = 1_000_000)]
        delta_max: u64,
        #[arg(long, default_value_t = 100)]
        reps: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        json: bool,
    },
}

#[derive(Debug, Args, Clone, Copy)]
pub struct ChannelArgs {
    #[arg(long, default_value_t = 0.02)]
    eta: f64,
    #[arg(long, default_value_t = 0.05)]
    qber: f64,
    #[arg(long, default_value_t = 0.0)]
    dark_rate_hz: f64,
    #[arg(long, default_value_t = 0.0)]
    jitter_ps: f64,
    #[arg(long, default_value_t = 0, allow_hyphen_values = true)]
    offset_ps: i64,
    #[arg(long, default_value_t = 100)]
    tdc_tick_ps: i64,
}

impl ChannelArgs {
    fn model(&self) -> ChannelModel {
        ChannelModel {
            detection_prob: self.eta,
            qber: self.qber,
            dark_rate_hz: self.dark_rate_hz,
            jitter_ps: self.jitter_ps,
            true_offset_ps: self.offset_ps,
            tdc_tick_ps: self.tdc_tick_ps,
            ..ChannelModel::default()
        }
    }
}

#[derive(Debug, Args, Clone, Copy)]
pub struct ConstraintArgs {
    #[arg(long, default_value_t = 0.2)]
    qmax: f64,
    /// Maximum tested fiber length change in km.
    #[arg(long, default_value_t = 100.0, conflicts_with = "delta_max")]
    max_km: f64,
    /// Maximum tested offset in timebins, instead of --max-km.
    #[arg(long)]
    delta_max: Option<u64>,
    #[arg(long, default_value_t = 1.0)]
    interval_s: f64,
    #[arg(long, default_value_t = 1.0 - 1e-6)]
    p_day: f64,
    #[arg(long, default_value_t = 0.99)]
    p_correct: f64,
    #[arg(long, default_value_t = 800)]
    tau_ps: i64,
    #[arg(long, default_value_t = FIBER_SPEED_MPS)]
    fiber_speed_mps: f64,
}

impl ConstraintArgs {
    fn query(&self, detection_rate_hz: Option<f64>) -> Result<PlanQuery, Error> {
        if self.tau_ps <= 0 || !(self.fiber_speed_mps > 0.0) || !(self.max_km >= 0.0) {
            return Err(Error::InvalidArgument(
                "tau_ps, fiber speed and max-km must be positive".into(),
            ));
        }
        let delta_max = self
            .delta_max
            .unwrap_or_else(|| fiber_km_to_timebins(self.max_km, self.tau_ps, self.fiber_speed_mps));
        Ok(PlanQuery {
            qber_max: self.qmax,
            delta_max,
            interval_s: self.interval_s,
            p_day_min: self.p_day,
            p_correct_min: self.p_correct,
            detection_rate_hz,
            grid: SearchGrid::default(),
        })
    }
}

fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Io(_) => EXIT_IO,
        Error::CorruptFile(_) | Error::Malformed(_) => EXIT_MALFORMED,
        Error::InfeasibleThreshold { .. } | Error::NoFeasibleSolution | Error::InvalidSchedule { .. } => {
            EXIT_INFEASIBLE
        }
        Error::InvalidArgument(_) | Error::InsufficientDetections { .. } => EXIT_INVALID,
    }
}

fn echo_config<T: Serialize>(err: &mut dyn Write, command: &str, config: &T) {
    let json = serde_json::to_string(config).unwrap_or_else(|e| format!("<unserializable: {e}>"));
    let _ = writeln!(err, "effective config [{command}]: {json}");
}

fn thread_pool() -> Result<rayon::ThreadPool, Error> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Ok(value) = std::env::var("RESYNC_THREADS") {
        let n: usize = value
            .trim()
            .parse()
            .map_err(|_| Error::InvalidArgument(format!("RESYNC_THREADS={value:?} is not a count")))?;
        builder = builder.num_threads(n);
    }
    builder
        .build()
        .map_err(|e| Error::InvalidArgument(format!("cannot start worker threads: {e}")))
}

fn create(path: &PathBuf) -> Result<BufWriter<File>, Error> {
    Ok(BufWriter::new(File::create(path)?))
}

#[derive(Serialize)]
struct RecoverConfig<'a> {
    pattern: &'a PathBuf,
    detections: &'a PathBuf,
    params: RecoveryParams,
}

#[derive(Serialize)]
struct McConfig {
    trials: u64,
    seed: u64,
    pattern_seed: u64,
    n_r: usize,
    params: RecoveryParams,
    channel: ChannelModel,
}

fn execute(command: Command, out: &mut dyn Write, err: &mut dyn Write) -> Result<(), Error> {
    match command {
        Command::GenPattern { seed, bins, out: path } => {
            echo_config(err, "gen-pattern", &serde_json::json!({ "seed": seed, "bins": bins, "out": path }));
            let pattern = generate_pattern(seed, bins)?;
            pattern.save(&path)?;
            writeln!(out, "wrote pattern: seed={seed} bins={bins} popcount={} path={}", pattern.popcount(), path.display())?;
        }
        Command::GenDetections { pattern, out: path, tau_ps, channel, seed, text } => {
            let model = channel.model();
            echo_config(
                err,
                "gen-detections",
                &serde_json::json!({ "pattern": pattern, "out": path, "tau_ps": tau_ps, "channel": model, "seed": seed, "text": text }),
            );
            let pattern = Pattern::load(&pattern)?;
            let detections = simulate_block(&pattern, &model, tau_ps, seed)?;
            if text {
                detections.save_text(&path)?;
            } else {
                detections.save_binary(&path)?;
            }
            writeln!(out, "wrote {} detections to {}", detections.len(), path.display())?;
        }
        Command::Recover { pattern, detections, tau_ps, threshold_t, delta_max, nd_max, min_detections, json } => {
            let params = RecoveryParams { tau_ps, threshold_t, delta_max, nd_max, min_detections };
            echo_config(err, "recover", &RecoverConfig { pattern: &pattern, detections: &detections, params });
            params.validate()?;
            let pattern = Pattern::load(&pattern)?;
            let detections = DetectionSet::load(&detections)?;
            let outcome = find_offset(&pattern, &detections, &params)?;
            if json {
                writeln!(out, "{}", serde_json::to_string(&outcome)?)?;
            } else {
                writeln!(out, "status: {}", outcome.status.as_str())?;
                writeln!(out, "delta_bins: {}", outcome.delta_bins)?;
                writeln!(out, "delta_align_ps: {}", outcome.delta_align_ps)?;
                writeln!(out, "delta_total_ps: {}", outcome.delta_total_ps)?;
                writeln!(out, "correlation_abs: {}", outcome.correlation_abs)?;
                writeln!(out, "threshold_abs: {}", outcome.threshold_abs)?;
                writeln!(out, "tested_count: {}", outcome.tested_count)?;
                writeln!(out, "nd: {}", outcome.nd)?;
            }
        }
        Command::Simulate { config, out: path, summary } => {
            let text = std::fs::read_to_string(&config)?;
            let scenario = ScenarioConfig::from_json(&text)?;
            echo_config(err, "simulate", &scenario);
            let report = run_scenario(&scenario)?;
            report.write_csv(create(&path)?)?;
            let json = report.summary_json()?;
            if let Some(summary_path) = summary {
                std::fs::write(summary_path, format!("{json}\n"))?;
            }
            writeln!(out, "{json}")?;
        }
        Command::Plan { constraints, rate_hz, json } => {
            let query = constraints.query(rate_hz)?;
            echo_config(err, "plan", &query);
            let plan = optimize_params(&query)?;
            if json {
                writeln!(out, "{}", serde_json::to_string(&plan)?)?;
            } else {
                let km = timebins_to_fiber_km(query.delta_max, constraints.tau_ps, constraints.fiber_speed_mps);
                writeln!(out, "delta_max: {} timebins ({km:.1} km)", query.delta_max)?;
                writeln!(out, "nd_star: {}", plan.nd_star)?;
                writeln!(out, "t_star: {:.3}", plan.t_star)?;
                writeln!(out, "p_correct: {:.6}", plan.p_correct)?;
                writeln!(out, "p_no_wrong_day: {:.9}", plan.p_no_wrong_day)?;
                if let (Some(rate), Some(penalty)) = (rate_hz, plan.skr_penalty) {
                    writeln!(
                        out,
                        "skr_penalty at {rate} Hz: {:.4} % ({:.4} dB)",
                        100.0 * penalty,
                        penalty_to_db(penalty)?
                    )?;
                }
            }
        }
        Command::Grid { constraints, nd_start, nd_end, nd_step, t_start, t_end, t_step, out: path } => {
            let query = constraints.query(None)?;
            let nd_range = Range { start: nd_start, end: nd_end, step: nd_step };
            let t_range = Range { start: t_start, end: t_end, step: t_step };
            echo_config(err, "grid", &serde_json::json!({ "query": query, "nd": nd_range, "t": t_range, "out": path }));
            let rows = thread_pool()?.install(|| feasibility_grid(&query, nd_range, t_range))?;
            write_grid_csv(&rows, create(&path)?)?;
            let feasible = rows.iter().filter(|r| r.feasible).count();
            writeln!(out, "wrote {} cells ({feasible} feasible) to {}", rows.len(), path.display())?;
        }
        Command::Penalty { constraints, qmax_list, rates_hz, out: path } => {
            let query = constraints.query(None)?;
            echo_config(err, "penalty", &serde_json::json!({ "query": query, "qmax": qmax_list, "rates_hz": rates_hz }));
            let rows = penalty_curve(&query, &qmax_list, &rates_hz)?;
            write_penalty_csv(&rows, create(&path)?)?;
            writeln!(out, "wrote {} rows to {}", rows.len(), path.display())?;
        }
        Command::Mc { trials, seed, pattern_seed, n_r, tau_ps, threshold_t, delta_max, nd_max, channel, json } => {
            let params = RecoveryParams {
                tau_ps,
                threshold_t,
                delta_max,
                nd_max,
                min_detections: DEFAULT_MIN_DETECTIONS.min(nd_max.max(1)),
            };
            let model = channel.model();
            echo_config(err, "mc", &McConfig { trials, seed, pattern_seed, n_r, params, channel: model });
            let pattern = generate_pattern(pattern_seed, n_r)?;
            let report = thread_pool()?.install(|| monte_carlo_rates(&pattern, &model, &params, trials, seed))?;
            if json {
                writeln!(out, "{}", serde_json::to_string(&report)?)?;
            } else {
                writeln!(
                    out,
                    "p_correct: {:.6} [{:.6}, {:.6}]",
                    report.p_correct, report.ci_correct.0, report.ci_correct.1
                )?;
                writeln!(out, "p_wrong: {:.6} [{:.6}, {:.6}]", report.p_wrong, report.ci_wrong.0, report.ci_wrong.1)?;
                writeln!(out, "missed: {}", report.missed)?;
                writeln!(out, "mean_tested: {:.3}", report.mean_tested)?;
                writeln!(out, "mean_nd: {:.1}", report.mean_nd)?;
            }
        }
        Command::Bench { pattern_bins, nd, delta_max, reps, seed, json } => {
            let config = BenchConfig { pattern_bins, nd, delta_max, reps, seed };
            echo_config(err, "bench", &config);
            let report = benchmark(&config)?;
            if json {
                writeln!(out, "{}", serde_json::to_string(&report)?)?;
            } else {
                writeln!(out, "detections in block: {}", report.raw_detections)?;
                writeln!(out, "zero-offset evaluation: median {:.2} us, p95 {:.2} us", report.fast_median_us, report.fast_p95_us)?;
                writeln!(
                    out,
                    "full sweep ({} offsets): {:.0} us",
                    report.sweep_outcome.tested_count, report.sweep_us
                )?;
                writeln!(out, "speedup: {:.0}x", report.speedup)?;
            }
        }
    }
    Ok(())
}

/// Parses `args` (including the program name) and runs the subcommand.
/// Returns the process exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let rendered = e.render().to_string();
            if e.use_stderr() {
                let _ = write!(err, "{rendered}");
            } else {
                let _ = write!(out, "{rendered}");
            }
            return code;
        }
    };
    match execute(cli.command, out, err) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            exit_code(&e)
        }
    }
}
