//! Synthetic detection streams and multi-block scenario replay.
//!
//! A block is generated per pulse of the pattern: the pulse is detected with
//! probability `detection_prob`, a detection lands in the paired bin of its
//! qubit with probability `qber`, and dark counts are added uniformly over the
//! block. Timestamps are placed at bin centers, shifted by the true offset,
//! blurred by Gaussian jitter and quantized to the TDC tick.
//!
//! All randomness comes from ChaCha8 streams derived from one seed, one stream
//! per source, so a block is a pure function of `(pattern, channel, seed)`.

use std::io::Write;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Geometric, Normal, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analytics::FIBER_SPEED_MPS;
use crate::error::{Error, Result};
use crate::pattern::{generate_pattern, Pattern, SplitMix64};
use crate::recovery::{
    align_and_discretize, cross_correlation, DetectionSet, OffsetFinder, RecoveryOutcome,
    RecoveryParams, RecoveryStatus, DEFAULT_MIN_DETECTIONS, DEFAULT_TAU_PS, DEFAULT_TDC_TICK_PS,
};

/// Desk-scale pattern length.
pub const DESK_N_R: usize = 1 << 16;
/// Desk-scale maximum tested offset.
pub const DESK_DELTA_MAX: u64 = 1 << 12;

const STREAM_DETECT: u64 = 0;
const STREAM_ERROR: u64 = 1;
const STREAM_DARK: u64 = 2;
const STREAM_JITTER: u64 = 3;

/// Deterministic per-index seed derived from a base seed.
pub fn derive_seed(base: u64, index: u64) -> u64 {
    SplitMix64::new(base ^ index.wrapping_mul(0xD1B5_4A32_D192_ED03)).next_u64()
}

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

/// Parametric quantum channel and detector.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ChannelModel {
    /// Per-pulse detection probability.
    pub detection_prob: f64,
    pub qber: f64,
    pub dark_rate_hz: f64,
    /// Gaussian timestamp jitter (standard deviation).
    pub jitter_ps: f64,
    pub true_offset_ps: i64,
    /// Residual fractional frequency offset in ppm, applied across interruptions.
    pub drift_ppm: f64,
    pub tdc_tick_ps: i64,
    /// Minimum spacing between kept detections; 0 disables thinning.
    pub dead_time_ps: i64,
}

impl Default for ChannelModel {
    fn default() -> Self {
        Self {
            detection_prob: 0.02,
            qber: 0.05,
            dark_rate_hz: 0.0,
            jitter_ps: 0.0,
            true_offset_ps: 0,
            drift_ppm: 0.0,
            tdc_tick_ps: DEFAULT_TDC_TICK_PS,
            dead_time_ps: 0,
        }
    }
}

impl ChannelModel {
    /// Perfect detector without errors and with every pulse detected.
    pub fn noiseless() -> Self {
        Self {
            detection_prob: 1.0,
            qber: 0.0,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::InvalidArgument(format!("channel: {what} ({self:?})")));
        if !(0.0..=1.0).contains(&self.detection_prob) {
            return bad("detection_prob must lie in [0, 1]");
        }
        if !(0.0..0.5).contains(&self.qber) {
            return bad("qber must lie in [0, 0.5)");
        }
        if !(self.dark_rate_hz >= 0.0 && self.dark_rate_hz.is_finite()) {
            return bad("dark_rate_hz must be >= 0");
        }
        if !(self.jitter_ps >= 0.0 && self.jitter_ps.is_finite()) {
            return bad("jitter_ps must be >= 0");
        }
        if self.tdc_tick_ps <= 0 {
            return bad("tdc_tick_ps must be > 0");
        }
        if self.dead_time_ps < 0 {
            return bad("dead_time_ps must be >= 0");
        }
        if !self.drift_ppm.is_finite() {
            return bad("drift_ppm must be finite");
        }
        Ok(())
    }
}

fn quantize(ts: i64, tick: i64) -> i64 {
    (ts + tick / 2).div_euclid(tick) * tick
}

/// Generates the detections of one resynchronization block.
///
/// Detections shifted outside `[0, N_r * tau)` are dropped.
pub fn simulate_block(pattern: &Pattern, channel: &ChannelModel, tau_ps: i64, rng_seed: u64) -> Result<DetectionSet> {
    channel.validate()?;
    if tau_ps <= 0 {
        return Err(Error::InvalidArgument(format!("tau_ps must be > 0, got {tau_ps}")));
    }
    let n_qubits = pattern.len() / 2;
    let mut bins: Vec<u64> = Vec::new();

    if channel.detection_prob > 0.0 {
        let mut detect = stream(rng_seed, STREAM_DETECT);
        let mut errors = stream(rng_seed, STREAM_ERROR);
        let gap = Geometric::new(channel.detection_prob).expect("validated probability");
        let mut j = gap.sample(&mut detect);
        while j < n_qubits as u64 {
            let early = 2 * j as usize;
            let pulse = early + pattern.bit(early + 1) as usize;
            let bin = if channel.qber > 0.0 && errors.gen_bool(channel.qber) {
                pulse ^ 1
            } else {
                pulse
            };
            bins.push(bin as u64);
            j = j.saturating_add(gap.sample(&mut detect)).saturating_add(1);
        }
    }

    let block_ps = pattern.len() as i64 * tau_ps;
    if channel.dark_rate_hz > 0.0 {
        let mut dark = stream(rng_seed, STREAM_DARK);
        let mean = channel.dark_rate_hz * block_ps as f64 * 1e-12;
        let count = Poisson::new(mean).expect("positive mean").sample(&mut dark) as usize;
        bins.extend((0..count).map(|_| dark.gen_range(0..pattern.len() as u64)));
    }

    let mut jitter = stream(rng_seed, STREAM_JITTER);
    let normal = (channel.jitter_ps > 0.0).then(|| Normal::new(0.0, channel.jitter_ps).expect("finite sigma"));
    let mut ts: Vec<i64> = bins
        .into_iter()
        .filter_map(|bin| {
            let mut t = bin as i64 * tau_ps + tau_ps / 2 + channel.true_offset_ps;
            if let Some(n) = &normal {
                t += n.sample(&mut jitter).round() as i64;
            }
            let t = quantize(t, channel.tdc_tick_ps);
            (0..block_ps).contains(&t).then_some(t)
        })
        .collect();
    ts.sort_unstable();

    if channel.dead_time_ps > 0 {
        let mut last = i64::MIN;
        ts.retain(|&t| {
            if last == i64::MIN || t - last >= channel.dead_time_ps {
                last = t;
                true
            } else {
                false
            }
        });
    }
    Ok(DetectionSet::new(ts).expect("sorted nonnegative timestamps"))
}

/// Channel change applied before a block is transmitted.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ChannelEvent {
    /// Switch the fiber to a new absolute length.
    SetFiberKm { length_km: f64 },
    /// Interrupt the quantum channel; the clocks drift apart meanwhile.
    Interrupt { duration_s: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScheduledEvent {
    pub block: usize,
    #[serde(flatten)]
    pub event: ChannelEvent,
}

fn default_fiber_speed() -> f64 {
    FIBER_SPEED_MPS
}

fn default_tau() -> i64 {
    DEFAULT_TAU_PS
}

fn default_min_detections() -> usize {
    DEFAULT_MIN_DETECTIONS
}

fn default_true() -> bool {
    true
}

/// A multi-block replay, as read from a JSON document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub n_q: u64,
    pub n_r: usize,
    pub pattern_seed: u64,
    #[serde(default = "default_tau")]
    pub tau_ps: i64,
    pub threshold_t: f64,
    pub delta_max: u64,
    pub nd_max: usize,
    #[serde(default = "default_min_detections")]
    pub min_detections: usize,
    #[serde(default)]
    pub channel: ChannelModel,
    pub n_blocks: usize,
    #[serde(default)]
    pub events: Vec<ScheduledEvent>,
    pub rng_seed: u64,
    #[serde(default = "default_fiber_speed")]
    pub fiber_speed_mps: f64,
    #[serde(default)]
    pub initial_fiber_km: f64,
    /// Record evaluation wall time per block.
    #[serde(default = "default_true")]
    pub record_timing: bool,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            n_q: 1 << 19,
            n_r: DESK_N_R,
            pattern_seed: 0,
            tau_ps: DEFAULT_TAU_PS,
            threshold_t: 0.5,
            delta_max: DESK_DELTA_MAX,
            nd_max: 500,
            min_detections: DEFAULT_MIN_DETECTIONS,
            channel: ChannelModel::default(),
            n_blocks: 100,
            events: Vec::new(),
            rng_seed: 0,
            fiber_speed_mps: FIBER_SPEED_MPS,
            initial_fiber_km: 0.0,
            record_timing: true,
        }
    }
}

impl ScenarioConfig {
    pub fn params(&self) -> RecoveryParams {
        RecoveryParams {
            tau_ps: self.tau_ps,
            threshold_t: self.threshold_t,
            delta_max: self.delta_max,
            nd_max: self.nd_max,
            min_detections: self.min_detections,
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_q < 2 || self.n_q % 2 != 0 || self.n_r < 2 || self.n_r % 2 != 0 {
            return Err(Error::InvalidArgument(format!(
                "n_q and n_r must be even and >= 2, got {} and {}",
                self.n_q, self.n_r
            )));
        }
        if self.events.windows(2).any(|w| w[1].block < w[0].block) {
            return Err(Error::InvalidArgument("events must be sorted by block index".into()));
        }
        if !(self.fiber_speed_mps > 0.0) {
            return Err(Error::InvalidArgument("fiber_speed_mps must be > 0".into()));
        }
        self.params().validate()?;
        self.channel.validate()
    }

    /// Start-to-start resynchronization interval in seconds.
    pub fn interval_s(&self) -> f64 {
        (self.n_q + self.n_r as u64) as f64 * self.tau_ps as f64 * 1e-12
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BlockVerdict {
    Correct,
    Wrong,
    Missed,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BlockRecord {
    pub block: usize,
    /// Offset between the true clock offset and Bob's estimate before the block.
    pub injected_ps: i64,
    pub outcome: RecoveryOutcome,
    pub verdict: BlockVerdict,
    pub eval_us: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScenarioSummary {
    pub n_blocks: usize,
    pub correct: usize,
    pub wrong: usize,
    pub missed: usize,
    pub offset_changes: usize,
    pub recovered_changes: usize,
    pub final_true_ps: i64,
    pub final_estimate_ps: i64,
    pub interval_s: f64,
    pub skr_penalty: f64,
    pub median_eval_us_zero_offset: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScenarioReport {
    pub records: Vec<BlockRecord>,
    /// Bob's accumulated offset estimate after each block.
    pub accumulated_ps: Vec<i64>,
    pub summary: ScenarioSummary,
}

/// Verdict for an outcome given the offset that was actually injected.
pub fn classify(outcome: &RecoveryOutcome, injected_ps: Option<i64>, tau_ps: i64) -> BlockVerdict {
    match (outcome.status, injected_ps) {
        (RecoveryStatus::Accepted, Some(truth)) if 2 * (outcome.delta_total_ps - truth).abs() <= tau_ps => {
            BlockVerdict::Correct
        }
        (RecoveryStatus::Accepted, _) => BlockVerdict::Wrong,
        _ => BlockVerdict::Missed,
    }
}

fn median(values: &mut [f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    values.sort_by(f64::total_cmp);
    Some(values[values.len() / 2])
}

pub fn run_scenario(config: &ScenarioConfig) -> Result<ScenarioReport> {
    config.validate()?;
    let pattern = generate_pattern(config.pattern_seed, config.n_r)?;
    let mut finder = OffsetFinder::new(config.params())?;

    let ps_per_km = 1000.0 / config.fiber_speed_mps * 1e12;
    let mut true_ps = config.channel.true_offset_ps as f64;
    let mut fiber_km = config.initial_fiber_km;
    let mut estimate_ps = 0i64;
    let mut events = config.events.iter().peekable();

    let mut records = Vec::with_capacity(config.n_blocks);
    let mut accumulated_ps = Vec::with_capacity(config.n_blocks);
    for block in 0..config.n_blocks {
        while let Some(ev) = events.next_if(|ev| ev.block <= block) {
            match ev.event {
                ChannelEvent::SetFiberKm { length_km } => {
                    true_ps += (length_km - fiber_km) * ps_per_km;
                    fiber_km = length_km;
                }
                ChannelEvent::Interrupt { duration_s } => {
                    true_ps += config.channel.drift_ppm * 1e-6 * duration_s * 1e12;
                }
            }
        }
        let injected_ps = true_ps.round() as i64 - estimate_ps;
        let channel = ChannelModel {
            true_offset_ps: injected_ps,
            ..config.channel
        };
        let detections = simulate_block(&pattern, &channel, config.tau_ps, derive_seed(config.rng_seed, block as u64))?;

        let start = Instant::now();
        let outcome = finder.find(&pattern, &detections);
        let eval_us = if config.record_timing {
            start.elapsed().as_secs_f64() * 1e6
        } else {
            0.0
        };
        if outcome.status == RecoveryStatus::Accepted {
            estimate_ps += outcome.delta_total_ps;
        }
        records.push(BlockRecord {
            block,
            injected_ps,
            outcome,
            verdict: classify(&outcome, Some(injected_ps), config.tau_ps),
            eval_us,
        });
        accumulated_ps.push(estimate_ps);
    }

    let count = |v: BlockVerdict| records.iter().filter(|r| r.verdict == v).count();
    let changed: Vec<&BlockRecord> = records
        .iter()
        .filter(|r| 2 * r.injected_ps.abs() > config.tau_ps)
        .collect();
    let mut zero_times: Vec<f64> = records
        .iter()
        .filter(|r| r.outcome.status == RecoveryStatus::Accepted && r.outcome.delta_bins == 0)
        .map(|r| r.eval_us)
        .collect();
    let summary = ScenarioSummary {
        n_blocks: config.n_blocks,
        correct: count(BlockVerdict::Correct),
        wrong: count(BlockVerdict::Wrong),
        missed: count(BlockVerdict::Missed),
        offset_changes: changed.len(),
        recovered_changes: changed.iter().filter(|r| r.verdict == BlockVerdict::Correct).count(),
        final_true_ps: true_ps.round() as i64,
        final_estimate_ps: estimate_ps,
        interval_s: config.interval_s(),
        skr_penalty: config.n_r as f64 / (config.n_q as f64 + config.n_r as f64),
        median_eval_us_zero_offset: if config.record_timing { median(&mut zero_times) } else { None },
    };
    Ok(ScenarioReport {
        records,
        accumulated_ps,
        summary,
    })
}

impl ScenarioReport {
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record([
            "block",
            "injected_ps",
            "status",
            "delta_bins",
            "delta_total_ps",
            "tested",
            "corr_abs",
            "eval_us",
        ])?;
        for r in &self.records {
            out.write_record([
                r.block.to_string(),
                r.injected_ps.to_string(),
                r.outcome.status.as_str().to_string(),
                r.outcome.delta_bins.to_string(),
                r.outcome.delta_total_ps.to_string(),
                r.outcome.tested_count.to_string(),
                r.outcome.correlation_abs.to_string(),
                format!("{:.3}", r.eval_us),
            ])?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn summary_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.summary)?)
    }
}

/// Wilson score interval for `successes` out of `n` at normal quantile `z`.
pub fn wilson_interval(successes: u64, n: u64, z: f64) -> (f64, f64) {
    if n == 0 {
        return (0.0, 1.0);
    }
    let n = n as f64;
    let p = successes as f64 / n;
    let z2 = z * z;
    let denom = 1.0 + z2 / n;
    let center = (p + z2 / (2.0 * n)) / denom;
    let half = z * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / denom;
    ((center - half).max(0.0), (center + half).min(1.0))
}

/// 97.5 % quantile of the standard normal.
pub const Z_95: f64 = 1.959_963_984_540_054;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MonteCarloReport {
    pub trials: u64,
    pub correct: u64,
    pub wrong: u64,
    pub missed: u64,
    pub p_correct: f64,
    pub p_wrong: f64,
    pub ci_correct: (f64, f64),
    pub ci_wrong: (f64, f64),
    pub mean_tested: f64,
    pub mean_nd: f64,
    /// Mean normalized correlation `C / N_d` at the injected offset, when the
    /// channel carries signal and the offset lies on the timebin grid.
    pub mean_corr_at_truth: Option<f64>,
}

#[derive(Debug, Clone, Copy)]
struct Trial {
    verdict: BlockVerdict,
    tested: u64,
    nd: usize,
    corr_at_truth: Option<f64>,
}

/// Runs independent block simulations and recoveries with the offset in
/// `channel.true_offset_ps`. A channel with `detection_prob == 0` carries no
/// signal, so every acceptance on it counts as wrong.
///
/// Trials may run in parallel; results are aggregated in trial order.
pub fn monte_carlo_rates(
    pattern: &Pattern,
    channel: &ChannelModel,
    params: &RecoveryParams,
    trials: u64,
    rng_seed: u64,
) -> Result<MonteCarloReport> {
    if trials == 0 {
        return Err(Error::InvalidArgument("trials must be >= 1".into()));
    }
    channel.validate()?;
    let finder = OffsetFinder::new(*params)?;
    let truth = (channel.detection_prob > 0.0).then_some(channel.true_offset_ps);
    let truth_bins = truth
        .filter(|ps| (ps.rem_euclid(params.tau_ps)) == 0)
        .map(|ps| ps / params.tau_ps)
        .filter(|d| d.unsigned_abs() <= params.delta_max);

    let results: Vec<Result<Trial>> = (0..trials)
        .into_par_iter()
        .map_init(
            || finder.clone(),
            |finder, i| {
                let detections = simulate_block(pattern, channel, params.tau_ps, derive_seed(rng_seed, i))?;
                let outcome = finder.find(pattern, &detections);
                let corr_at_truth = match (truth_bins, outcome.status) {
                    (Some(delta), RecoveryStatus::Accepted | RecoveryStatus::NoneQualified) => {
                        let aligned = align_and_discretize(&detections, params, pattern.len())?;
                        Some(cross_correlation(pattern, &aligned, delta) as f64 / aligned.nd() as f64)
                    }
                    _ => None,
                };
                Ok(Trial {
                    verdict: classify(&outcome, truth, params.tau_ps),
                    tested: outcome.tested_count,
                    nd: outcome.nd,
                    corr_at_truth,
                })
            },
        )
        .collect();
    let results: Vec<Trial> = results.into_iter().collect::<Result<_>>()?;

    let count = |v| results.iter().filter(|t| t.verdict == v).count() as u64;
    let (correct, wrong, missed) = (
        count(BlockVerdict::Correct),
        count(BlockVerdict::Wrong),
        count(BlockVerdict::Missed),
    );
    let n = trials as f64;
    let corrs: Vec<f64> = results.iter().filter_map(|t| t.corr_at_truth).collect();
    Ok(MonteCarloReport {
        trials,
        correct,
        wrong,
        missed,
        p_correct: correct as f64 / n,
        p_wrong: wrong as f64 / n,
        ci_correct: wilson_interval(correct, trials, Z_95),
        ci_wrong: wilson_interval(wrong, trials, Z_95),
        mean_tested: results.iter().map(|t| t.tested as f64).sum::<f64>() / n,
        mean_nd: results.iter().map(|t| t.nd as f64).sum::<f64>() / n,
        mean_corr_at_truth: (!corrs.is_empty()).then(|| corrs.iter().sum::<f64>() / corrs.len() as f64),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BenchConfig {
    pub pattern_bins: usize,
    pub nd: usize,
    pub delta_max: u64,
    pub reps: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchReport {
    pub config: BenchConfig,
    pub raw_detections: usize,
    pub fast_outcome: RecoveryOutcome,
    pub fast_median_us: f64,
    pub fast_p95_us: f64,
    pub sweep_outcome: RecoveryOutcome,
    pub sweep_us: f64,
    pub speedup: f64,
}

fn percentile(sorted: &[Duration], q: f64) -> f64 {
    let idx = ((sorted.len() - 1) as f64 * q).round() as usize;
    sorted[idx].as_secs_f64() * 1e6
}

/// Times the zero-offset fast path against a full sweep over all offsets.
///
/// The fast path evaluates a stream that matches the pattern at offset 0; the
/// sweep evaluates a stream generated from an unrelated pattern, so no offset
/// qualifies and all `2 delta_max + 1` candidates are tested.
pub fn benchmark(config: &BenchConfig) -> Result<BenchReport> {
    if config.reps == 0 || config.nd == 0 {
        return Err(Error::InvalidArgument("reps and nd must be >= 1".into()));
    }
    if config.pattern_bins as u64 <= 2 * config.delta_max {
        return Err(Error::InvalidArgument(format!(
            "pattern of {} bins leaves nothing after removing {} margin bins on each side",
            config.pattern_bins, config.delta_max
        )));
    }
    let pattern = generate_pattern(config.seed, config.pattern_bins)?;
    let decoy = generate_pattern(config.seed ^ 0x5555_5555_5555_5555, config.pattern_bins)?;
    let params = RecoveryParams {
        nd_max: config.nd,
        min_detections: DEFAULT_MIN_DETECTIONS.min(config.nd),
        delta_max: config.delta_max,
        ..RecoveryParams::default()
    };
    let inner = 1.0 - 2.0 * config.delta_max as f64 / config.pattern_bins as f64;
    let eta = (1.25 * config.nd as f64 / (inner * (config.pattern_bins / 2) as f64)).min(1.0);
    let channel = ChannelModel {
        detection_prob: eta,
        qber: 0.0,
        ..ChannelModel::default()
    };
    let fast_stream = simulate_block(&pattern, &channel, params.tau_ps, derive_seed(config.seed, 0))?;
    let sweep_stream = simulate_block(&decoy, &channel, params.tau_ps, derive_seed(config.seed, 1))?;

    let mut finder = OffsetFinder::new(params)?;
    let mut fast_outcome = finder.find(&pattern, &fast_stream);
    let mut times = Vec::with_capacity(config.reps);
    for _ in 0..config.reps {
        let start = Instant::now();
        fast_outcome = std::hint::black_box(finder.find(&pattern, std::hint::black_box(&fast_stream)));
        times.push(start.elapsed());
    }
    times.sort_unstable();

    let start = Instant::now();
    let sweep_outcome = finder.find(&pattern, &sweep_stream);
    let sweep_us = start.elapsed().as_secs_f64() * 1e6;

    let fast_median_us = percentile(&times, 0.5);
    Ok(BenchReport {
        config: *config,
        raw_detections: fast_stream.len(),
        fast_outcome,
        fast_median_us,
        fast_p95_us: percentile(&times, 0.95),
        sweep_outcome,
        sweep_us,
        speedup: sweep_us / fast_median_us.max(1e-3),
    })
}
