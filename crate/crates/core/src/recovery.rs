//! Clock-offset recovery from single-photon detection timestamps.
//!
//! The pipeline for one resynchronization block:
//!
//! 1. estimate the sub-timebin alignment offset from the circular mean of the
//!    detection phases and subtract it,
//! 2. convert timestamps to timebin indices,
//! 3. drop detections within `delta_max` timebins of either block edge, then
//!    keep the first `nd_max` survivors,
//! 4. test offsets in the order `0, +1, -1, +2, -2, ...` and accept the first
//!    one whose absolute cross-correlation exceeds `ceil(t * N_d)`.
//!
//! Timestamps are integer picoseconds relative to the block start.

use std::f64::consts::TAU;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pattern::Pattern;

pub const DETECTIONS_MAGIC: &[u8; 4] = b"RDET";
pub const DETECTIONS_VERSION: u16 = 1;

/// Default timebin duration of the reference system.
pub const DEFAULT_TAU_PS: i64 = 800;
/// Default TDC resolution.
pub const DEFAULT_TDC_TICK_PS: i64 = 100;
/// Below this many processed detections a block is not evaluated.
pub const DEFAULT_MIN_DETECTIONS: usize = 8;

/// The method parameters of one recovery run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RecoveryParams {
    /// Timebin duration in picoseconds.
    pub tau_ps: i64,
    /// Fractional acceptance threshold `t`.
    pub threshold_t: f64,
    /// Largest tested offset magnitude, in timebins.
    pub delta_max: u64,
    /// Maximum number of detections evaluated per block.
    pub nd_max: usize,
    /// Minimum number of processed detections required to evaluate a block.
    pub min_detections: usize,
}

impl Default for RecoveryParams {
    fn default() -> Self {
        Self {
            tau_ps: DEFAULT_TAU_PS,
            threshold_t: 0.5,
            delta_max: 1_000_000,
            nd_max: 500,
            min_detections: DEFAULT_MIN_DETECTIONS,
        }
    }
}

impl RecoveryParams {
    pub fn new(tau_ps: i64, threshold_t: f64, delta_max: u64, nd_max: usize) -> Result<Self> {
        let params = Self {
            tau_ps,
            threshold_t,
            delta_max,
            nd_max,
            min_detections: DEFAULT_MIN_DETECTIONS.min(nd_max.max(1)),
        };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<()> {
        if self.tau_ps <= 0 {
            return Err(Error::InvalidArgument(format!("tau_ps must be > 0, got {}", self.tau_ps)));
        }
        if !(self.threshold_t > 0.0 && self.threshold_t < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "threshold t must lie in (0, 1), got {}",
                self.threshold_t
            )));
        }
        if self.nd_max == 0 {
            return Err(Error::InvalidArgument("nd_max must be >= 1".into()));
        }
        if self.min_detections == 0 || self.min_detections > self.nd_max {
            return Err(Error::InvalidArgument(format!(
                "min_detections must lie in [1, nd_max = {}], got {}",
                self.nd_max, self.min_detections
            )));
        }
        if self.delta_max > i64::MAX as u64 / 4 {
            return Err(Error::InvalidArgument(format!("delta_max {} is too large", self.delta_max)));
        }
        Ok(())
    }
}

/// Sorted detection timestamps of one block, in picoseconds.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct DetectionSet {
    timestamps_ps: Vec<i64>,
}

impl DetectionSet {
    /// Wraps timestamps that are already nondecreasing and nonnegative.
    pub fn new(timestamps_ps: Vec<i64>) -> Result<Self> {
        if let Some(&first) = timestamps_ps.first() {
            if first < 0 {
                return Err(Error::InvalidArgument(format!("negative timestamp {first}")));
            }
        }
        if let Some(i) = timestamps_ps.windows(2).position(|w| w[1] < w[0]) {
            return Err(Error::InvalidArgument(format!(
                "timestamps not sorted at index {}: {} after {}",
                i + 1,
                timestamps_ps[i + 1],
                timestamps_ps[i]
            )));
        }
        Ok(Self { timestamps_ps })
    }

    /// Sorts `timestamps_ps` first. Negative values are still rejected.
    pub fn from_unsorted(mut timestamps_ps: Vec<i64>) -> Result<Self> {
        timestamps_ps.sort_unstable();
        Self::new(timestamps_ps)
    }

    pub fn timestamps(&self) -> &[i64] {
        &self.timestamps_ps
    }

    pub fn len(&self) -> usize {
        self.timestamps_ps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.timestamps_ps.is_empty()
    }

    /// Binary form: magic `RDET`, u16 LE version, u64 LE count, then
    /// `count` i64 LE timestamps.
    pub fn write_binary<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(DETECTIONS_MAGIC)?;
        w.write_all(&DETECTIONS_VERSION.to_le_bytes())?;
        w.write_all(&(self.timestamps_ps.len() as u64).to_le_bytes())?;
        for ts in &self.timestamps_ps {
            w.write_all(&ts.to_le_bytes())?;
        }
        w.flush()?;
        Ok(())
    }

    /// Text form: one decimal integer per line.
    pub fn write_text<W: Write>(&self, mut w: W) -> Result<()> {
        for ts in &self.timestamps_ps {
            writeln!(w, "{ts}")?;
        }
        w.flush()?;
        Ok(())
    }

    /// Reads either format, detected by the leading magic bytes.
    pub fn read_from<R: Read>(mut r: R) -> Result<Self> {
        let mut data = Vec::new();
        r.read_to_end(&mut data)?;
        if data.starts_with(DETECTIONS_MAGIC) {
            Self::parse_binary(&data)
        } else {
            Self::parse_text(&data[..])
        }
    }

    fn parse_binary(data: &[u8]) -> Result<Self> {
        if data.len() < 14 {
            return Err(Error::CorruptFile("truncated detections header".into()));
        }
        let version = u16::from_le_bytes([data[4], data[5]]);
        if version != DETECTIONS_VERSION {
            return Err(Error::CorruptFile(format!(
                "unsupported detections format version {version}"
            )));
        }
        let count = u64::from_le_bytes(data[6..14].try_into().unwrap());
        let payload = &data[14..];
        if payload.len() as u64 != count.saturating_mul(8) {
            return Err(Error::CorruptFile(format!(
                "header declares {count} timestamps, payload has {} bytes",
                payload.len()
            )));
        }
        let ts = payload
            .chunks_exact(8)
            .map(|c| i64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Self::new(ts).map_err(|e| Error::CorruptFile(e.to_string()))
    }

    fn parse_text<R: BufRead>(r: R) -> Result<Self> {
        let mut ts = Vec::new();
        for (lineno, line) in r.lines().enumerate() {
            let line = line?;
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let value = line.parse::<i64>().map_err(|e| {
                Error::Malformed(format!("line {}: {line:?}: {e}", lineno + 1))
            })?;
            ts.push(value);
        }
        Self::new(ts).map_err(|e| Error::Malformed(e.to_string()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::read_from(BufReader::new(File::open(path)?))
    }

    pub fn save_binary(&self, path: impl AsRef<Path>) -> Result<()> {
        self.write_binary(BufWriter::new(File::create(path)?))
    }

    pub fn save_text(&self, path: impl AsRef<Path>) -> Result<()> {
        self.write_text(BufWriter::new(File::create(path)?))
    }
}

/// Detections reduced to timebin precision.
///
/// Bins are sorted, so range checks against a tested offset only need the
/// first and last entry.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AlignedDetections {
    bins: Vec<u64>,
    delta_align_ps: i64,
}

impl AlignedDetections {
    pub fn from_bins(bins: Vec<u64>, delta_align_ps: i64) -> Result<Self> {
        if bins.windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::InvalidArgument("timebin indices must be sorted".into()));
        }
        Ok(Self {
            bins,
            delta_align_ps,
        })
    }

    pub fn bins(&self) -> &[u64] {
        &self.bins
    }

    pub fn delta_align_ps(&self) -> i64 {
        self.delta_align_ps
    }

    /// Number of processed detections `N_d`.
    pub fn nd(&self) -> usize {
        self.bins.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RecoveryStatus {
    Accepted,
    NoneQualified,
    InsufficientDetections,
}

impl RecoveryStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            RecoveryStatus::Accepted => "accepted",
            RecoveryStatus::NoneQualified => "none_qualified",
            RecoveryStatus::InsufficientDetections => "insufficient_detections",
        }
    }
}

/// Result of evaluating one resynchronization block.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RecoveryOutcome {
    pub status: RecoveryStatus,
    /// Accepted offset in timebins; 0 unless accepted.
    pub delta_bins: i64,
    pub delta_align_ps: i64,
    /// `delta_bins * tau + delta_align`, or 0 when nothing was accepted.
    pub delta_total_ps: i64,
    pub tested_count: u64,
    /// `C` at acceptance, otherwise the largest `C` seen.
    pub correlation_abs: i64,
    /// Absolute threshold `T = ceil(t * N_d)`.
    pub threshold_abs: i64,
    /// Processed detection count `N_d`.
    pub nd: usize,
}

/// Circular-mean estimate of the sub-timebin offset.
///
/// Returns the shift in `(-tau/2, tau/2]` which, once subtracted, moves the
/// mean detection phase to the bin center. If the phasors cancel, returns 0.
pub fn find_alignment_offset(detections: &DetectionSet, tau_ps: i64) -> Result<i64> {
    if tau_ps <= 0 {
        return Err(Error::InvalidArgument(format!("tau_ps must be > 0, got {tau_ps}")));
    }
    if detections.is_empty() {
        return Err(Error::InsufficientDetections {
            available: 0,
            required: 1,
        });
    }
    let tau = tau_ps as f64;
    let (mut sx, mut sy) = (0.0f64, 0.0f64);
    for &ts in detections.timestamps() {
        let phase = ts.rem_euclid(tau_ps) as f64 / tau;
        let (s, c) = (TAU * phase).sin_cos();
        sx += c;
        sy += s;
    }
    if sx.hypot(sy) <= 1e-9 * detections.len() as f64 {
        return Ok(0);
    }
    // mean phase in (-1/2, 1/2], shift relative to the bin center
    let mean_phase = sy.atan2(sx) / TAU;
    let mut shift = mean_phase - 0.5;
    if shift <= -0.5 {
        shift += 1.0;
    }
    let mut delta = (shift * tau).round() as i64;
    if 2 * delta <= -tau_ps {
        delta += tau_ps;
    } else if 2 * delta > tau_ps {
        delta -= tau_ps;
    }
    Ok(delta)
}

fn discretize_into(
    detections: &DetectionSet,
    delta_align_ps: i64,
    params: &RecoveryParams,
    n_r: usize,
    bins: &mut Vec<u64>,
) {
    bins.clear();
    let lo = params.delta_max;
    let hi = (n_r as u64).saturating_sub(params.delta_max);
    for &ts in detections.timestamps() {
        let bin = (ts - delta_align_ps).div_euclid(params.tau_ps);
        if bin < 0 {
            continue;
        }
        let bin = bin as u64;
        if bin < lo {
            continue;
        }
        if bin >= hi {
            // sorted input: every later detection is past the margin too
            break;
        }
        bins.push(bin);
        if bins.len() == params.nd_max {
            break;
        }
    }
}

/// Aligns, discretizes, removes margins and truncates to `nd_max`.
pub fn align_and_discretize(
    detections: &DetectionSet,
    params: &RecoveryParams,
    n_r: usize,
) -> Result<AlignedDetections> {
    params.validate()?;
    let delta_align_ps = find_alignment_offset(detections, params.tau_ps)?;
    let mut bins = Vec::with_capacity(params.nd_max.min(detections.len()));
    discretize_into(detections, delta_align_ps, params, n_r, &mut bins);
    if bins.is_empty() {
        return Err(Error::InsufficientDetections {
            available: 0,
            required: 1,
        });
    }
    Ok(AlignedDetections {
        bins,
        delta_align_ps,
    })
}

/// Maps `0, 1, 2, 3, 4, ...` onto `0, +1, -1, +2, -2, ...`.
#[inline]
pub fn map_nat_to_int(n: u64) -> i64 {
    let half = (n >> 1) as i64;
    if n & 1 == 0 {
        -half
    } else {
        half + 1
    }
}

/// `T = ceil(t * N_d)`. Products within 1e-9 of an integer snap to it, so a
/// decimal `t` such as 0.017 with `N_d = 3000` gives 51 rather than 52.
pub fn absolute_threshold(threshold_t: f64, nd: usize) -> i64 {
    let x = threshold_t * nd as f64;
    let nearest = x.round();
    if (x - nearest).abs() <= 1e-9 * nearest.abs().max(1.0) {
        nearest as i64
    } else {
        x.ceil() as i64
    }
}

#[inline]
fn correlate(words: &[u64], bins: &[u64], delta: i64) -> i64 {
    let mut coincidences: u64 = 0;
    for &bin in bins {
        let k = (bin as i64 - delta) as usize;
        coincidences += (words[k >> 6] >> (k & 63)) & 1;
    }
    2 * coincidences as i64 - bins.len() as i64
}

/// Absolute cross-correlation `C = 2N - N_d` at offset `delta`.
///
/// Panics when some `bin - delta` falls outside the pattern, which cannot
/// happen for `|delta| <= delta_max` after margin removal.
pub fn cross_correlation(pattern: &Pattern, aligned: &AlignedDetections, delta: i64) -> i64 {
    let bins = aligned.bins();
    if let (Some(&first), Some(&last)) = (bins.first(), bins.last()) {
        let n_r = pattern.len() as i64;
        assert!(
            first as i64 - delta >= 0 && (last as i64 - delta) < n_r,
            "offset {delta} indexes outside the pattern for bins [{first}, {last}] with N_r = {n_r}"
        );
    }
    correlate(pattern.words(), bins, delta)
}

/// Reusable recovery state. Holds the scratch buffer so repeated evaluations
/// do not allocate.
#[derive(Debug, Clone)]
pub struct OffsetFinder {
    params: RecoveryParams,
    bins: Vec<u64>,
}

impl OffsetFinder {
    pub fn new(params: RecoveryParams) -> Result<Self> {
        params.validate()?;
        Ok(Self {
            params,
            bins: Vec::with_capacity(params.nd_max),
        })
    }

    pub fn params(&self) -> &RecoveryParams {
        &self.params
    }

    pub fn find(&mut self, pattern: &Pattern, detections: &DetectionSet) -> RecoveryOutcome {
        let params = self.params;
        let insufficient = |delta_align_ps, nd| RecoveryOutcome {
            status: RecoveryStatus::InsufficientDetections,
            delta_bins: 0,
            delta_align_ps,
            delta_total_ps: 0,
            tested_count: 0,
            correlation_abs: 0,
            threshold_abs: absolute_threshold(params.threshold_t, nd),
            nd,
        };
        let Ok(delta_align_ps) = find_alignment_offset(detections, params.tau_ps) else {
            return insufficient(0, 0);
        };
        discretize_into(detections, delta_align_ps, &params, pattern.len(), &mut self.bins);
        let nd = self.bins.len();
        if nd < params.min_detections {
            return insufficient(delta_align_ps, nd);
        }

        let threshold = absolute_threshold(params.threshold_t, nd);
        let words = pattern.words();
        let mut best = i64::MIN;
        for n in 0..=2 * params.delta_max {
            let delta = map_nat_to_int(n);
            let c = correlate(words, &self.bins, delta);
            if c > threshold {
                return RecoveryOutcome {
                    status: RecoveryStatus::Accepted,
                    delta_bins: delta,
                    delta_align_ps,
                    delta_total_ps: delta * params.tau_ps + delta_align_ps,
                    tested_count: n + 1,
                    correlation_abs: c,
                    threshold_abs: threshold,
                    nd,
                };
            }
            best = best.max(c);
        }
        RecoveryOutcome {
            status: RecoveryStatus::NoneQualified,
            delta_bins: 0,
            delta_align_ps,
            delta_total_ps: 0,
            tested_count: 2 * params.delta_max + 1,
            correlation_abs: best,
            threshold_abs: threshold,
            nd,
        }
    }
}

/// Recovers the offset of one block.
pub fn find_offset(
    pattern: &Pattern,
    detections: &DetectionSet,
    params: &RecoveryParams,
) -> Result<RecoveryOutcome> {
    Ok(OffsetFinder::new(*params)?.find(pattern, detections))
}
