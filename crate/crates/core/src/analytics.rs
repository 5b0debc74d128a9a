//! Success-probability model and parameter planner.
//!
//! The cross-correlation counter `N` of one block is binomial,
//! `N ~ B(N_d, p)`, and is approximated here by a normal distribution:
//!
//! * wrong offset (`p = 1/2`): `P(no accept) = Phi(t * sqrt(N_d))`
//! * correct offset (`p = 1 - Q`):
//!   `P(accept) = Phi(sqrt(N_d) * (1 - t - 2Q) / sqrt(4Q(1 - Q)))`,
//!   meaningful only for `t < 1 - 2Q`
//!
//! Everything in this module works in SI floating point. Timebin durations
//! enter as integer picoseconds and are converted at the boundary.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Speed of light in standard single-mode fiber.
pub const FIBER_SPEED_MPS: f64 = 2.04e8;
pub const SECONDS_PER_DAY: f64 = 86_400.0;

/// Standard normal CDF.
pub fn phi(x: f64) -> f64 {
    0.5 * libm::erfc(-x / std::f64::consts::SQRT_2)
}

/// Upper tail `1 - Phi(x)`, accurate where `Phi(x)` rounds to 1.
pub fn phi_upper(x: f64) -> f64 {
    0.5 * libm::erfc(x / std::f64::consts::SQRT_2)
}

/// Probability that a single wrong offset is not accepted.
pub fn p_no_wrong_single(nd: u64, threshold_t: f64) -> f64 {
    phi(threshold_t * (nd as f64).sqrt())
}

/// `ln P_no_wrong,1`, computed from the upper tail.
fn ln_p_no_wrong_single(nd: u64, threshold_t: f64) -> f64 {
    (-phi_upper(threshold_t * (nd as f64).sqrt())).ln_1p()
}

/// Lower bound on the probability that none of `n_offsets` wrong offsets is
/// accepted, `P_no_wrong,1 ^ n_offsets`.
pub fn p_no_wrong_many(nd: u64, threshold_t: f64, n_offsets: u64) -> f64 {
    (n_offsets as f64 * ln_p_no_wrong_single(nd, threshold_t)).exp()
}

/// Resynchronization blocks per day at start-to-start interval `interval_s`.
pub fn blocks_per_day(interval_s: f64) -> u64 {
    ((SECONDS_PER_DAY / interval_s).floor() as u64).max(1)
}

/// Number of wrong offsets tested over one day: `2 delta_max` per block.
pub fn offsets_per_day(delta_max: u64, interval_s: f64) -> u64 {
    2 * delta_max * blocks_per_day(interval_s)
}

/// Per-day lower bound on not accepting any wrong offset.
pub fn p_no_wrong_day(nd: u64, threshold_t: f64, delta_max: u64, interval_s: f64) -> f64 {
    p_no_wrong_many(nd, threshold_t, offsets_per_day(delta_max, interval_s))
}

fn p_correct_unchecked(nd: u64, threshold_t: f64, qber: f64) -> f64 {
    if qber == 0.0 {
        return if threshold_t < 1.0 { 1.0 } else { 0.0 };
    }
    let x = (nd as f64).sqrt() * (1.0 - threshold_t - 2.0 * qber) / (4.0 * qber * (1.0 - qber)).sqrt();
    phi(x)
}

/// Probability of accepting the correct offset with one block.
pub fn p_correct(nd: u64, threshold_t: f64, qber: f64) -> Result<f64> {
    if !(0.0..0.5).contains(&qber) {
        return Err(Error::InvalidArgument(format!("QBER must lie in [0, 0.5), got {qber}")));
    }
    let bound = 1.0 - 2.0 * qber;
    if threshold_t >= bound {
        return Err(Error::InfeasibleThreshold {
            t: threshold_t,
            qber,
            bound,
        });
    }
    Ok(p_correct_unchecked(nd, threshold_t, qber))
}

/// Fiber length to the number of timebins it delays, rounded up.
pub fn fiber_km_to_timebins(length_km: f64, tau_ps: i64, fiber_speed_mps: f64) -> u64 {
    let bins = length_km * 1000.0 / (tau_ps as f64 * 1e-12 * fiber_speed_mps);
    // absorb representation error so exact quotients are not bumped up a bin
    let nearest = bins.round();
    if (bins - nearest).abs() <= 1e-9 * nearest.max(1.0) {
        nearest as u64
    } else {
        bins.ceil() as u64
    }
}

pub fn timebins_to_fiber_km(timebins: u64, tau_ps: i64, fiber_speed_mps: f64) -> f64 {
    timebins as f64 * tau_ps as f64 * 1e-12 * fiber_speed_mps / 1000.0
}

/// Fraction of channel time spent in resynchronization blocks: a block of
/// `nd` detections at rate `detection_rate_hz`, once per `interval_s`
/// (start to start).
pub fn skr_penalty(nd: u64, detection_rate_hz: f64, interval_s: f64) -> Result<f64> {
    if !(detection_rate_hz > 0.0 && interval_s > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "rate and interval must be positive, got {detection_rate_hz} Hz, {interval_s} s"
        )));
    }
    let block_s = nd as f64 / detection_rate_hz;
    if block_s > interval_s {
        return Err(Error::InvalidSchedule {
            block_s,
            interval_s,
        });
    }
    Ok(nd as f64 / (detection_rate_hz * interval_s))
}

/// Equivalent extra channel attenuation of a duty-cycle penalty.
pub fn penalty_to_db(fraction: f64) -> Result<f64> {
    if !(0.0..1.0).contains(&fraction) {
        return Err(Error::InvalidArgument(format!(
            "penalty fraction must lie in [0, 1), got {fraction}"
        )));
    }
    Ok(-10.0 * (1.0 - fraction).log10())
}

/// Point query for the analytic model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnalyticQuery {
    pub nd: u64,
    pub threshold_t: f64,
    pub qber: f64,
    pub delta_max: u64,
    pub interval_s: f64,
    pub tau_ps: i64,
    pub fiber_speed_mps: f64,
    pub detection_rate_hz: f64,
}

/// Evaluated point query.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AnalyticReport {
    pub p_no_wrong_single: f64,
    pub p_no_wrong_block: f64,
    pub p_no_wrong_day: f64,
    pub p_correct: f64,
    pub max_offset_km: f64,
    pub skr_penalty: f64,
    pub penalty_db: f64,
}

impl AnalyticQuery {
    pub fn validate(&self) -> Result<()> {
        let ok = self.nd >= 1
            && self.threshold_t > 0.0
            && self.threshold_t < 1.0
            && (0.0..0.5).contains(&self.qber)
            && self.interval_s > 0.0
            && self.tau_ps > 0
            && self.fiber_speed_mps > 0.0
            && self.detection_rate_hz > 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!("invalid analytic query {self:?}")))
        }
    }

    pub fn evaluate(&self) -> Result<AnalyticReport> {
        self.validate()?;
        let penalty = skr_penalty(self.nd, self.detection_rate_hz, self.interval_s)?;
        Ok(AnalyticReport {
            p_no_wrong_single: p_no_wrong_single(self.nd, self.threshold_t),
            p_no_wrong_block: p_no_wrong_many(self.nd, self.threshold_t, 2 * self.delta_max),
            p_no_wrong_day: p_no_wrong_day(self.nd, self.threshold_t, self.delta_max, self.interval_s),
            p_correct: p_correct(self.nd, self.threshold_t, self.qber)?,
            max_offset_km: timebins_to_fiber_km(self.delta_max, self.tau_ps, self.fiber_speed_mps),
            skr_penalty: penalty,
            penalty_db: penalty_to_db(penalty)?,
        })
    }
}

/// `(N_d, t)` grid searched by the planner.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SearchGrid {
    pub nd_min: u64,
    pub nd_max: u64,
    pub t_step: f64,
    /// Lower end of the threshold range; `t_step` when unset.
    pub t_min: Option<f64>,
}

impl Default for SearchGrid {
    fn default() -> Self {
        Self {
            nd_min: 8,
            nd_max: 5000,
            t_step: 1e-3,
            t_min: None,
        }
    }
}

impl SearchGrid {
    /// Threshold values `k * t_step` in `[t_min, t_bound)`.
    fn thresholds(&self, t_bound: f64) -> impl Iterator<Item = f64> + '_ {
        let first = match self.t_min {
            Some(t) => (t / self.t_step - 1e-9).ceil().max(1.0) as u64,
            None => 1,
        };
        (first..)
            .map(move |k| k as f64 * self.t_step)
            .take_while(move |&t| t < t_bound && t < 1.0)
    }
}

/// Planner constraints.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlanQuery {
    pub qber_max: f64,
    pub delta_max: u64,
    pub interval_s: f64,
    pub p_day_min: f64,
    pub p_correct_min: f64,
    /// Detection rate used to report the SKR penalty of the optimum.
    pub detection_rate_hz: Option<f64>,
    pub grid: SearchGrid,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlanResult {
    pub nd_star: u64,
    pub t_star: f64,
    pub p_correct: f64,
    pub p_no_wrong_day: f64,
    pub skr_penalty: Option<f64>,
}

impl PlanQuery {
    fn validate(&self) -> Result<()> {
        let p_ok = |p: f64| p > 0.0 && p < 1.0;
        if !(0.0..0.5).contains(&self.qber_max) {
            return Err(Error::InvalidArgument(format!(
                "qber_max must lie in [0, 0.5), got {}",
                self.qber_max
            )));
        }
        if !p_ok(self.p_day_min) || !p_ok(self.p_correct_min) {
            return Err(Error::InvalidArgument(format!(
                "probability bounds must lie in (0, 1), got {} and {}",
                self.p_day_min, self.p_correct_min
            )));
        }
        if !(self.interval_s > 0.0) {
            return Err(Error::InvalidArgument(format!("interval must be > 0, got {}", self.interval_s)));
        }
        if !(self.grid.t_step > 0.0) || self.grid.nd_min == 0 || self.grid.nd_min > self.grid.nd_max {
            return Err(Error::InvalidArgument(format!("invalid search grid {:?}", self.grid)));
        }
        Ok(())
    }
}

/// Smallest `N_d` on the grid meeting both probability bounds; among the
/// feasible thresholds for that `N_d`, the one with the highest `P_correct`.
pub fn optimize_params(query: &PlanQuery) -> Result<PlanResult> {
    query.validate()?;
    let q = query.qber_max;
    let t_bound = 1.0 - 2.0 * q;
    let n_offsets = offsets_per_day(query.delta_max, query.interval_s);
    let ln_p_day_min = query.p_day_min.ln();

    for nd in query.grid.nd_min..=query.grid.nd_max {
        let mut best: Option<(f64, f64, f64)> = None;
        for t in query.grid.thresholds(t_bound) {
            let ln_day = n_offsets as f64 * ln_p_no_wrong_single(nd, t);
            if ln_day < ln_p_day_min {
                continue;
            }
            let pc = p_correct_unchecked(nd, t, q);
            if pc < query.p_correct_min {
                continue;
            }
            if best.map_or(true, |(_, best_pc, _)| pc > best_pc) {
                best = Some((t, pc, ln_day.exp()));
            }
        }
        if let Some((t_star, p_correct, p_no_wrong_day)) = best {
            let skr_penalty = query
                .detection_rate_hz
                .map(|rate| skr_penalty(nd, rate, query.interval_s))
                .transpose()?;
            return Ok(PlanResult {
                nd_star: nd,
                t_star,
                p_correct,
                p_no_wrong_day,
                skr_penalty,
            });
        }
    }
    Err(Error::NoFeasibleSolution)
}

/// Inclusive arithmetic range for grid axes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Range<T> {
    pub start: T,
    pub end: T,
    pub step: T,
}

impl Range<u64> {
    pub fn values(&self) -> Vec<u64> {
        (self.start..=self.end).step_by(self.step.max(1) as usize).collect()
    }
}

impl Range<f64> {
    pub fn values(&self) -> Vec<f64> {
        if !(self.step > 0.0) {
            return vec![self.start];
        }
        let count = ((self.end - self.start) / self.step + 1e-9).floor() as u64;
        (0..=count).map(|k| self.start + k as f64 * self.step).collect()
    }
}

/// One cell of the feasibility grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GridRow {
    pub nd: u64,
    pub t: f64,
    /// Normal-approximation value, also reported where `t >= 1 - 2Q`.
    pub p_correct: f64,
    pub p_no_wrong_day: f64,
    pub feasible: bool,
}

/// Evaluates every `(N_d, t)` cell against the planner constraints.
///
/// Cells are computed in parallel; rows come back ordered by `nd` then `t`.
pub fn feasibility_grid(query: &PlanQuery, nd_range: Range<u64>, t_range: Range<f64>) -> Result<Vec<GridRow>> {
    query.validate()?;
    let q = query.qber_max;
    let n_offsets = offsets_per_day(query.delta_max, query.interval_s);
    let ts = t_range.values();
    let rows = nd_range
        .values()
        .into_par_iter()
        .flat_map_iter(|nd| {
            ts.iter().map(move |&t| {
                let p_correct = p_correct_unchecked(nd, t, q);
                let p_no_wrong_day = p_no_wrong_many(nd, t, n_offsets);
                let feasible = t > 0.0
                    && t < 1.0 - 2.0 * q
                    && p_correct >= query.p_correct_min
                    && p_no_wrong_day >= query.p_day_min;
                GridRow {
                    nd,
                    t,
                    p_correct,
                    p_no_wrong_day,
                    feasible,
                }
            })
        })
        .collect();
    Ok(rows)
}

pub fn write_grid_csv<W: Write>(rows: &[GridRow], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["nd", "t", "p_correct", "p_no_wrong_day", "feasible"])?;
    for r in rows {
        out.write_record([
            r.nd.to_string(),
            format!("{:.6}", r.t),
            format!("{:.12e}", r.p_correct),
            format!("{:.12e}", r.p_no_wrong_day),
            u8::from(r.feasible).to_string(),
        ])?;
    }
    out.flush()?;
    Ok(())
}

/// One point of an SKR penalty curve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PenaltyRow {
    pub qmax: f64,
    pub rate_hz: f64,
    pub interval_s: f64,
    pub nd: u64,
    pub t: f64,
    pub penalty: f64,
    pub db: f64,
}

/// Optimal penalty for each `(Q_max, R)` pair. Pairs whose block would not
/// fit into the interval, or with no feasible plan, are skipped.
pub fn penalty_curve(base: &PlanQuery, qmax_values: &[f64], rates_hz: &[f64]) -> Result<Vec<PenaltyRow>> {
    let mut rows = Vec::new();
    for &qmax in qmax_values {
        let plan = match optimize_params(&PlanQuery {
            qber_max: qmax,
            detection_rate_hz: None,
            ..*base
        }) {
            Ok(plan) => plan,
            Err(Error::NoFeasibleSolution) => continue,
            Err(e) => return Err(e),
        };
        for &rate_hz in rates_hz {
            let penalty = match skr_penalty(plan.nd_star, rate_hz, base.interval_s) {
                Ok(p) => p,
                Err(Error::InvalidSchedule { .. }) => continue,
                Err(e) => return Err(e),
            };
            let db = match penalty_to_db(penalty) {
                Ok(db) => db,
                Err(_) => continue,
            };
            rows.push(PenaltyRow {
                qmax,
                rate_hz,
                interval_s: base.interval_s,
                nd: plan.nd_star,
                t: plan.t_star,
                penalty,
                db,
            });
        }
    }
    Ok(rows)
}

pub fn write_penalty_csv<W: Write>(rows: &[PenaltyRow], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["qmax", "rate_hz", "interval_s", "nd", "t", "penalty", "db"])?;
    for r in rows {
        out.write_record([
            r.qmax.to_string(),
            r.rate_hz.to_string(),
            r.interval_s.to_string(),
            r.nd.to_string(),
            format!("{:.6}", r.t),
            format!("{:.9e}", r.penalty),
            format!("{:.9e}", r.db),
        ])?;
    }
    out.flush()?;
    Ok(())
}
