//! The bi-level scheduler: static admission scoring plus dynamic re-scoring
//! at layer boundaries with sparsity-refined latency estimates.
//!
//! Scores are argmin-selected. The static score orders requests before any
//! runtime information exists; the dynamic score recomputes every queued
//! request from its monitored sparsity, slack and a wait/service penalty
//! that discourages gratuitous preemption.

use serde::{Deserialize, Serialize};

use crate::predictor::{predict_remaining, sparsity_coeff, MonitorState, PredictorConfig};
use crate::profile::ModelProfile;

/// Score arithmetic width. Half emulates a reduced-precision hardware
/// scheduler by rounding every score to binary16 before comparison.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScorePrecision {
    #[default]
    Full,
    Half,
}

/// How the wait/service penalty enters the dynamic score.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PenaltyMode {
    /// Added alongside slack, as written.
    #[default]
    Additive,
    /// Sign flipped, for studying the alternative reading.
    Negated,
    /// Disabled.
    Off,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DystaConfig {
    /// Static slack weight.
    pub beta: f64,
    /// Dynamic slack-plus-penalty weight.
    pub eta: f64,
    pub predictor: PredictorConfig,
    pub score_precision: ScorePrecision,
    pub penalty_mode: PenaltyMode,
    /// When false the dynamic scheduler ignores monitored sparsity
    /// (gamma pinned to 1), leaving only profile-average estimates.
    pub sparsity_aware: bool,
}

impl Default for DystaConfig {
    fn default() -> Self {
        Self {
            beta: 0.5,
            eta: 0.5,
            predictor: PredictorConfig::default(),
            score_precision: ScorePrecision::Full,
            penalty_mode: PenaltyMode::Additive,
            sparsity_aware: true,
        }
    }
}

/// One scored queue entry.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoredRequest {
    pub id: u64,
    pub score: f64,
    pub remaining_est: f64,
    pub slack: f64,
    pub penalty: f64,
    pub gamma: f64,
}

/// The scheduler's view of one queued request.
pub struct QueueEntry<'a> {
    pub id: u64,
    pub arrival: f64,
    pub deadline: f64,
    pub next_layer: usize,
    pub exec_accum: f64,
    pub profile: &'a ModelProfile,
    pub monitor: &'a MonitorState,
}

/// Admission-time score from profiled averages only.
///
/// `Lat` is the profile's average total latency, slack the SLO window minus
/// `Lat`, and the score `Lat + beta * slack`. With beta = 0 the initial
/// ordering reduces to shortest-estimated-job-first.
pub fn static_score(id: u64, arrival: f64, deadline: f64, profile: &ModelProfile, config: &DystaConfig) -> ScoredRequest {
    let lat = profile.avg_total_latency;
    let slack = (deadline - arrival) - lat;
    ScoredRequest {
        id,
        score: lat + config.beta * slack,
        remaining_est: lat,
        slack,
        penalty: 0.0,
        gamma: 1.0,
    }
}

/// Recomputes every queued request's score at a layer boundary (or at a
/// dispatch-from-idle instant).
///
/// Per request i:
///   remaining_i = alpha * gamma_i * remaining profile average
///   slack_i     = deadline_i - now - remaining_i
///   penalty_i   = (T_wait_i / T_isol_est_i) / |queue|
///   score_i     = remaining_i + eta * (slack_i + penalty_i)
/// where gamma_i comes from that request's own monitor history (1 if it has
/// never run) and T_wait_i = now - arrival_i - exec_accum_i.
pub fn dynamic_score_all(queue: &[QueueEntry<'_>], now: f64, config: &DystaConfig) -> Vec<ScoredRequest> {
    let queue_len = queue.len() as f64;
    queue
        .iter()
        .map(|entry| {
            let gamma = if config.sparsity_aware {
                sparsity_coeff(entry.monitor, entry.profile, config.predictor.strategy, &config.predictor).gamma
            } else {
                1.0
            };
            let alpha = config.predictor.alpha;
            let remaining_est = predict_remaining(entry.profile, gamma, entry.next_layer, alpha);
            let slack = entry.deadline - now - remaining_est;
            let wait = now - entry.arrival - entry.exec_accum;
            let isol_est = alpha * gamma * entry.profile.avg_total_latency;
            let raw_penalty = if isol_est > 0.0 {
                (wait / isol_est) / queue_len
            } else {
                0.0
            };
            let penalty = match config.penalty_mode {
                PenaltyMode::Additive => raw_penalty,
                PenaltyMode::Negated => -raw_penalty,
                PenaltyMode::Off => 0.0,
            };
            let score = remaining_est + config.eta * (slack + penalty);
            ScoredRequest {
                id: entry.id,
                score: quantize_score(score, config.score_precision),
                remaining_est,
                slack,
                penalty,
                gamma,
            }
        })
        .collect()
}

/// Argmin of score. Ties break toward the currently running request when it
/// is among the minima, then toward the lowest request id. Returns None on
/// an empty queue, the engine's signal to idle.
pub fn select_next(scored: &[ScoredRequest], running: Option<u64>) -> Option<u64> {
    let min = scored
        .iter()
        .map(|s| s.score)
        .fold(f64::INFINITY, f64::min);
    let mut best: Option<u64> = None;
    for s in scored {
        if s.score > min {
            continue;
        }
        if Some(s.id) == running {
            return Some(s.id);
        }
        best = Some(match best {
            Some(b) => b.min(s.id),
            None => s.id,
        });
    }
    best
}

const BINARY16_MAX: f64 = 65504.0;
// Smallest magnitude that rounds to binary16 infinity.
const BINARY16_OVERFLOW: f64 = 65520.0;
const BINARY16_MIN_NORMAL_EXP: i32 = -14;
const BINARY16_SUBNORMAL_QUANTUM: f64 = 5.960_464_477_539_063e-8; // 2^-24

/// Rounds a score to the nearest binary16 value (round-to-nearest-even),
/// saturating overflow at the largest finite binary16. Full mode is the
/// identity.
pub fn quantize_score(score: f64, precision: ScorePrecision) -> f64 {
    match precision {
        ScorePrecision::Full => score,
        ScorePrecision::Half => round_to_binary16(score),
    }
}

fn round_to_binary16(x: f64) -> f64 {
    if x == 0.0 || x.is_nan() {
        return x;
    }
    let sign = if x.is_sign_negative() { -1.0 } else { 1.0 };
    let magnitude = x.abs();
    if magnitude >= BINARY16_OVERFLOW {
        return sign * BINARY16_MAX;
    }
    // Exponent of the f64 value; safe because the magnitude is normal here
    // (far above f64 subnormals once below the overflow threshold).
    let exp = ((magnitude.to_bits() >> 52) & 0x7ff) as i32 - 1023;
    let quantum = if exp < BINARY16_MIN_NORMAL_EXP {
        BINARY16_SUBNORMAL_QUANTUM
    } else {
        // binary16 has 10 fraction bits.
        (exp - 10).try_into().map(|e: i32| 2f64.powi(e)).unwrap()
    };
    let rounded = (magnitude / quantum).round_ties_even() * quantum;
    if rounded >= BINARY16_OVERFLOW {
        sign * BINARY16_MAX
    } else {
        sign * rounded
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::workload::{ModelPatternKey, SparsityPattern};

    fn profile(latencies: &[f64], sparsities: &[f64]) -> ModelProfile {
        ModelProfile::new(
            ModelPatternKey::new("net_a", SparsityPattern::Dense),
            latencies.to_vec(),
            sparsities.to_vec(),
        )
        .unwrap()
    }

    #[test]
    fn static_score_formula() {
        // Lat 10, SLO window 100, beta 0.5: slack 90, score 55.
        let p = profile(&[10.0], &[0.5]);
        let cfg = DystaConfig::default();
        let s = static_score(0, 0.0, 100.0, &p, &cfg);
        assert_eq!(s.slack, 90.0);
        assert_eq!(s.score, 55.0);
        assert_eq!(s.remaining_est, 10.0);
        assert_eq!(s.gamma, 1.0);
        assert_eq!(s.penalty, 0.0);
    }

    #[test]
    fn static_score_beta_zero_is_sjf() {
        let p = profile(&[10.0], &[0.5]);
        let cfg = DystaConfig {
            beta: 0.0,
            ..DystaConfig::default()
        };
        let s = static_score(0, 0.0, 100.0, &p, &cfg);
        assert_eq!(s.score, 10.0);
    }

    #[test]
    fn static_score_pattern_specific() {
        let fast = profile(&[2.0], &[0.8]);
        let slow = profile(&[5.0], &[0.2]);
        let cfg = DystaConfig::default();
        let a = static_score(0, 0.0, 50.0, &fast, &cfg);
        let b = static_score(1, 0.0, 50.0, &slow, &cfg);
        assert!(a.score != b.score);
        // Larger profile average with the same window gives the bigger score
        // whenever beta < 1.
        assert!(a.score < b.score);
    }

    #[test]
    fn dynamic_score_fresh_request() {
        let p = profile(&[4.0, 6.0], &[0.5, 0.5]);
        let monitor = MonitorState::new();
        let cfg = DystaConfig::default();
        let queue = [QueueEntry {
            id: 0,
            arrival: 0.0,
            deadline: 100.0,
            next_layer: 0,
            exec_accum: 0.0,
            profile: &p,
            monitor: &monitor,
        }];
        let scored = dynamic_score_all(&queue, 0.0, &cfg);
        assert_eq!(scored.len(), 1);
        let s = &scored[0];
        assert_eq!(s.gamma, 1.0);
        assert_eq!(s.remaining_est, 10.0);
        assert_eq!(s.slack, 90.0);
        assert_eq!(s.penalty, 0.0);
        assert_eq!(s.score, 10.0 + 0.5 * 90.0);
    }

    #[test]
    fn dynamic_eta_zero_orders_by_remaining() {
        let short = profile(&[2.0], &[0.5]);
        let long = profile(&[9.0], &[0.5]);
        let m = MonitorState::new();
        let cfg = DystaConfig {
            eta: 0.0,
            ..DystaConfig::default()
        };
        let queue = [
            QueueEntry { id: 0, arrival: 0.0, deadline: 5.0, next_layer: 0, exec_accum: 0.0, profile: &long, monitor: &m },
            QueueEntry { id: 1, arrival: 0.0, deadline: 1000.0, next_layer: 0, exec_accum: 0.0, profile: &short, monitor: &m },
        ];
        let scored = dynamic_score_all(&queue, 0.0, &cfg);
        assert_eq!(scored[0].score, 9.0);
        assert_eq!(scored[1].score, 2.0);
        assert_eq!(select_next(&scored, None), Some(1));
    }

    #[test]
    fn dynamic_empty_queue_gives_empty_list() {
        let cfg = DystaConfig::default();
        assert!(dynamic_score_all(&[], 1.0, &cfg).is_empty());
        assert_eq!(select_next(&[], None), None);
    }

    #[test]
    fn penalty_uses_wait_over_estimated_isolation() {
        let p = profile(&[3.0, 3.0, 3.0], &[0.2, 0.2, 0.2]);
        let m = MonitorState::new();
        let cfg = DystaConfig::default();
        // Arrived at 0.5, never ran, now 1.0: wait 0.5, isol est 9, queue of 2.
        let queue = [
            QueueEntry { id: 0, arrival: 1.0, deadline: 50.0, next_layer: 0, exec_accum: 0.0, profile: &p, monitor: &m },
            QueueEntry { id: 1, arrival: 0.5, deadline: 90.5, next_layer: 0, exec_accum: 0.0, profile: &p, monitor: &m },
        ];
        let scored = dynamic_score_all(&queue, 1.0, &cfg);
        assert_eq!(scored[1].penalty, (0.5 / 9.0) / 2.0);
        assert_eq!(scored[0].penalty, 0.0);
    }

    #[test]
    fn penalty_modes() {
        let p = profile(&[2.0], &[0.5]);
        let m = MonitorState::new();
        let entry = |profile, monitor| QueueEntry {
            id: 0,
            arrival: 0.0,
            deadline: 10.0,
            next_layer: 0,
            exec_accum: 0.0,
            profile,
            monitor,
        };
        let mut cfg = DystaConfig::default();
        let base = dynamic_score_all(&[entry(&p, &m)], 3.0, &cfg)[0].penalty;
        assert!(base > 0.0);
        cfg.penalty_mode = PenaltyMode::Negated;
        assert_eq!(dynamic_score_all(&[entry(&p, &m)], 3.0, &cfg)[0].penalty, -base);
        cfg.penalty_mode = PenaltyMode::Off;
        assert_eq!(dynamic_score_all(&[entry(&p, &m)], 3.0, &cfg)[0].penalty, 0.0);
    }

    fn scored(id: u64, score: f64) -> ScoredRequest {
        ScoredRequest {
            id,
            score,
            remaining_est: 0.0,
            slack: 0.0,
            penalty: 0.0,
            gamma: 1.0,
        }
    }

    #[test]
    fn select_next_argmin() {
        let s = [scored(10, 5.0), scored(11, 3.0), scored(12, 9.0)];
        assert_eq!(select_next(&s, None), Some(11));
    }

    #[test]
    fn select_next_tie_prefers_running() {
        let s = [scored(3, 2.0), scored(7, 2.0)];
        assert_eq!(select_next(&s, Some(7)), Some(7));
        assert_eq!(select_next(&s, Some(3)), Some(3));
        // Without a running request the lowest id wins.
        assert_eq!(select_next(&s, None), Some(3));
        // A running request that is not among the minima does not win.
        let s = [scored(3, 2.0), scored(7, 5.0)];
        assert_eq!(select_next(&s, Some(7)), Some(3));
    }

    #[test]
    fn select_next_deterministic() {
        let s = [scored(1, 4.0), scored(2, 4.0), scored(3, 4.5)];
        let a = select_next(&s, None);
        let b = select_next(&s, None);
        assert_eq!(a, b);
    }

    #[test]
    fn quantize_full_is_identity() {
        for v in [-1234.5678, 0.0, 3.25e-9, 7.0e9] {
            assert_eq!(quantize_score(v, ScorePrecision::Full), v);
        }
    }

    #[test]
    fn quantize_half_drops_below_ulp_bits() {
        // The binary16 grid at 1.0 has spacing 2^-10, so 1 + 2^-12 rounds
        // back down to 1.0.
        let v = 1.0 + 2f64.powi(-12);
        assert_eq!(quantize_score(v, ScorePrecision::Half), 1.0);
        // Half an ulp above the midpoint rounds up.
        let v = 1.0 + 2f64.powi(-10);
        assert_eq!(quantize_score(v, ScorePrecision::Half), 1.0 + 2f64.powi(-10));
    }

    #[test]
    fn quantize_half_saturates_overflow() {
        assert_eq!(quantize_score(1.0e9, ScorePrecision::Half), 65504.0);
        assert_eq!(quantize_score(-1.0e9, ScorePrecision::Half), -65504.0);
        assert_eq!(quantize_score(65519.9, ScorePrecision::Half), 65504.0);
        assert_eq!(quantize_score(65521.0, ScorePrecision::Half), 65504.0);
    }

    #[test]
    fn quantize_half_exact_values_pass_through() {
        for v in [0.5, -2.0, 1536.0, 2f64.powi(-14), 6.103515625e-5] {
            assert_eq!(quantize_score(v, ScorePrecision::Half), v);
        }
    }

    #[test]
    fn quantize_half_subnormal_grid() {
        // Below 2^-14 the grid spacing is 2^-24.
        let q = 2f64.powi(-24);
        let v = 3.4 * q;
        assert_eq!(quantize_score(v, ScorePrecision::Half), 3.0 * q);
        let v = 3.6 * q;
        assert_eq!(quantize_score(v, ScorePrecision::Half), 4.0 * q);
        // Ties go to even.
        let v = 3.5 * q;
        assert_eq!(quantize_score(v, ScorePrecision::Half), 4.0 * q);
        let v = 2.5 * q;
        assert_eq!(quantize_score(v, ScorePrecision::Half), 2.0 * q);
    }

    #[test]
    fn argmin_invariant_under_latency_scaling_with_eta_zero() {
        // Multiplying all latencies by k scales every eta = 0 score by k and
        // leaves the argmin unchanged.
        let p1 = profile(&[2.0, 3.0], &[0.5, 0.4]);
        let p2 = profile(&[4.0], &[0.3]);
        let k = 12.5;
        let p1k = profile(&[2.0 * k, 3.0 * k], &[0.5, 0.4]);
        let p2k = profile(&[4.0 * k], &[0.3]);
        let m = MonitorState::new();
        let cfg = DystaConfig { eta: 0.0, ..DystaConfig::default() };
        fn entries<'a>(a: &'a ModelProfile, b: &'a ModelProfile, m: &'a MonitorState) -> [QueueEntry<'a>; 2] {
            [
                QueueEntry { id: 0, arrival: 0.0, deadline: 100.0, next_layer: 0, exec_accum: 0.0, profile: a, monitor: m },
                QueueEntry { id: 1, arrival: 0.0, deadline: 100.0, next_layer: 0, exec_accum: 0.0, profile: b, monitor: m },
            ]
        }
        let base = dynamic_score_all(&entries(&p1, &p2, &m), 0.0, &cfg);
        let scaled = dynamic_score_all(&entries(&p1k, &p2k, &m), 0.0, &cfg);
        assert_eq!(select_next(&base, None), select_next(&scaled, None));
        for (a, b) in base.iter().zip(&scaled) {
            assert!((b.score - k * a.score).abs() < 1e-9 * b.score.abs().max(1.0));
        }
    }
}
