//! Reference implementations the library is checked against. They favour
//! obviousness over speed and share no search or correlation code with the
//! library.

#![allow(dead_code)]

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use resync::pattern::{generate_pattern, Pattern};
use resync::recovery::{find_alignment_offset, DetectionSet, RecoveryParams};
use resync::simulator::{simulate_block, ChannelModel};

pub const TAU: i64 = 800;

/// `ln P(X = k)` for `X ~ Binomial(n, p)` with `0 < p < 1`.
fn ln_pmf(n: u64, k: u64, p: f64) -> f64 {
    let ln_choose = libm::lgamma(n as f64 + 1.0) - libm::lgamma(k as f64 + 1.0) - libm::lgamma((n - k) as f64 + 1.0);
    ln_choose + k as f64 * p.ln() + (n - k) as f64 * (1.0 - p).ln()
}

/// `P(X >= k)` for `X ~ Binomial(n, p)`, summing whichever side is shorter.
pub fn binom_sf(n: u64, p: f64, k: u64) -> f64 {
    if k == 0 {
        return 1.0;
    }
    if k > n {
        return 0.0;
    }
    if p <= 0.0 {
        return 0.0;
    }
    if p >= 1.0 {
        return 1.0;
    }
    let upper: f64 = (k..=n).map(|i| ln_pmf(n, i, p).exp()).sum();
    let lower: f64 = (0..k).map(|i| ln_pmf(n, i, p).exp()).sum();
    if upper < lower {
        upper
    } else {
        1.0 - lower
    }
}

/// `ceil(k_milli * nd / 1000)` in integers, i.e. `T` for `t = k_milli / 1000`.
pub fn threshold_milli(k_milli: u64, nd: u64) -> i64 {
    (k_milli * nd).div_ceil(1000) as i64
}

/// Exact probability that the correct offset is accepted: `P(2N - N_d > T)`
/// with `N ~ Binomial(N_d, 1 - Q)`.
pub fn exact_p_correct(nd: u64, threshold: i64, qber: f64) -> f64 {
    // 2N > N_d + T  <=>  N >= floor((N_d + T) / 2) + 1
    let k = ((nd as i64 + threshold).div_euclid(2) + 1).max(0) as u64;
    binom_sf(nd, 1.0 - qber, k)
}

/// Exact probability that one uncorrelated offset is rejected, with
/// `N ~ Binomial(N_d, 1/2)`.
pub fn exact_p_reject_wrong(nd: u64, threshold: i64) -> f64 {
    1.0 - exact_p_correct(nd, threshold, 0.5)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum BruteOutcome {
    Insufficient,
    None { nd: usize },
    First { delta: i64, tested: u64, correlation: i64, nd: usize },
}

/// Position of `delta` in the search order `0, +1, -1, +2, -2, ...`.
fn search_position(delta: i64) -> u64 {
    match delta {
        0 => 0,
        d if d > 0 => 2 * d as u64 - 1,
        d => 2 * d.unsigned_abs(),
    }
}

/// Evaluates every offset in `[-delta_max, delta_max]` and returns the
/// qualifying one that comes first in the search order. `threshold_abs` is
/// supplied by the caller from integer arithmetic.
pub fn brute_force(
    pattern: &Pattern,
    detections: &DetectionSet,
    params: &RecoveryParams,
    threshold_abs: impl Fn(usize) -> i64,
) -> BruteOutcome {
    if detections.is_empty() {
        return BruteOutcome::Insufficient;
    }
    let align = find_alignment_offset(detections, params.tau_ps).unwrap();
    let dmax = params.delta_max as i64;
    let n_r = pattern.len() as i64;
    let bins: Vec<i64> = detections
        .timestamps()
        .iter()
        .map(|&ts| (ts - align).div_euclid(params.tau_ps))
        .filter(|&b| b >= dmax && b < n_r - dmax)
        .take(params.nd_max)
        .collect();
    if bins.len() < params.min_detections {
        return BruteOutcome::Insufficient;
    }
    let nd = bins.len();
    let threshold = threshold_abs(nd);
    let mut best: Option<(u64, i64, i64)> = None;
    for delta in -dmax..=dmax {
        let n = bins.iter().filter(|&&b| pattern.bit((b - delta) as usize) == 1).count() as i64;
        let c = 2 * n - nd as i64;
        if c > threshold {
            let pos = search_position(delta);
            if best.map_or(true, |(p, _, _)| pos < p) {
                best = Some((pos, delta, c));
            }
        }
    }
    match best {
        Some((pos, delta, correlation)) => BruteOutcome::First {
            delta,
            tested: pos + 1,
            correlation,
            nd,
        },
        None => BruteOutcome::None { nd },
    }
}

/// A small randomized recovery problem.
pub struct Instance {
    pub pattern: Pattern,
    pub detections: DetectionSet,
    pub params: RecoveryParams,
    pub t_milli: u64,
}

/// Draws an instance with `N_r <= 2^12` and `delta_max <= 64`. Channels range
/// from clean to pure noise and thresholds from lax to strict, so that
/// acceptance at zero, acceptance after a search, wrong acceptance and
/// rejection all occur.
pub fn random_instance(rng: &mut ChaCha8Rng) -> Instance {
    let n_r = 2 * rng.gen_range(64usize..=2048);
    let delta_max = rng.gen_range(0u64..=64.min(n_r as u64 / 2 - 8));
    let nd_max = rng.gen_range(8usize..=200);
    let t_milli = rng.gen_range(20u64..=900);
    let params = RecoveryParams {
        tau_ps: TAU,
        threshold_t: t_milli as f64 / 1000.0,
        delta_max,
        nd_max,
        min_detections: 8,
    };
    let pattern = generate_pattern(rng.gen(), n_r).unwrap();
    let reach = (delta_max as i64 + 3) * TAU;
    let channel = ChannelModel {
        detection_prob: if rng.gen_bool(0.15) { 0.0 } else { rng.gen_range(0.01..0.6) },
        qber: rng.gen_range(0.0..0.45),
        dark_rate_hz: if rng.gen_bool(0.5) { 0.0 } else { rng.gen_range(1e6..2e8) },
        jitter_ps: rng.gen_range(0.0..150.0),
        true_offset_ps: rng.gen_range(-reach..=reach),
        ..ChannelModel::default()
    };
    let detections = simulate_block(&pattern, &channel, TAU, rng.gen()).unwrap();
    Instance {
        pattern,
        detections,
        params,
        t_milli,
    }
}
