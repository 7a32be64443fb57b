//! Reference schedulers the bi-level scheduler is compared against.
//!
//! All preemptive policies preempt only at layer boundaries, identical to
//! the main scheduler, so comparisons isolate the selection rule. Estimates
//! marked "blind" use profile averages with no monitored-sparsity
//! correction. BASELINES.md documents the reconstructions in detail.

use std::collections::BTreeMap;
use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::dysta::{select_next, QueueEntry, ScoredRequest};

fn blind_remaining(entry: &QueueEntry<'_>) -> f64 {
    entry.profile.remaining_avg_latency(entry.next_layer)
}

fn scored(id: u64, score: f64, remaining_est: f64, slack: f64) -> ScoredRequest {
    ScoredRequest {
        id,
        score,
        remaining_est,
        slack,
        penalty: 0.0,
        gamma: 1.0,
    }
}

/// First-come first-served. Never preempts: a running request is always
/// retained; otherwise the earliest arrival wins, ties by lowest id.
pub fn fcfs_select(queue: &[QueueEntry<'_>], running: Option<u64>) -> Option<u64> {
    if let Some(id) = running {
        if queue.iter().any(|e| e.id == id) {
            return Some(id);
        }
    }
    queue
        .iter()
        .min_by(|a, b| {
            a.arrival
                .partial_cmp(&b.arrival)
                .unwrap()
                .then(a.id.cmp(&b.id))
        })
        .map(|e| e.id)
}

/// Shortest-job first over blind estimates, preemptive at layer boundaries.
/// The estimate for a partially executed request is the profile average of
/// its remaining layers (equal to the average total for fresh requests).
/// Ties break by lowest id.
pub fn sjf_select(queue: &[QueueEntry<'_>]) -> Option<u64> {
    queue
        .iter()
        .min_by(|a, b| {
            blind_remaining(a)
                .partial_cmp(&blind_remaining(b))
                .unwrap()
                .then(a.id.cmp(&b.id))
        })
        .map(|e| e.id)
}

/// Per-candidate SJF metrics for event logs.
pub fn sjf_score_all(queue: &[QueueEntry<'_>]) -> Vec<ScoredRequest> {
    queue
        .iter()
        .map(|e| {
            let rem = blind_remaining(e);
            scored(e.id, rem, rem, 0.0)
        })
        .collect()
}

/// Token-based priority scheduling.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PremaConfig {
    /// Priority assigned to requests not listed in `priorities`.
    pub default_priority: u32,
    /// Explicit per-request priorities, keyed by request id.
    pub priorities: BTreeMap<u64, u32>,
}

impl Default for PremaConfig {
    fn default() -> Self {
        Self {
            default_priority: 1,
            priorities: BTreeMap::new(),
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct TokenEntry {
    tokens: f64,
    last_accrual: f64,
}

/// Token state across scheduler invocations.
///
/// Tokens start at the request's priority and, while a request waits, grow
/// by `priority * elapsed / estimated isolated latency` per invocation. The
/// threshold is the highest priority present in the queue; candidates are
/// requests with `tokens >= threshold` (the modified criterion, so a fresh
/// highest-priority request qualifies immediately). Among candidates the
/// shortest blind remaining estimate wins, ties by lowest id. Tokens reset
/// to the priority on dispatch.
#[derive(Debug, Clone)]
pub struct PremaScheduler {
    config: PremaConfig,
    state: HashMap<u64, TokenEntry>,
}

impl PremaScheduler {
    pub fn new(config: PremaConfig) -> Self {
        Self {
            config,
            state: HashMap::new(),
        }
    }

    pub fn priority(&self, id: u64) -> u32 {
        self.config
            .priorities
            .get(&id)
            .copied()
            .unwrap_or(self.config.default_priority)
    }

    pub fn tokens(&self, id: u64) -> Option<f64> {
        self.state.get(&id).map(|e| e.tokens)
    }

    /// Accrues tokens for waiting requests, then selects.
    pub fn select(&mut self, queue: &[QueueEntry<'_>], now: f64, running: Option<u64>) -> Option<u64> {
        if queue.is_empty() {
            return None;
        }
        for entry in queue {
            let priority = self.priority(entry.id);
            let token = self.state.entry(entry.id).or_insert(TokenEntry {
                tokens: priority as f64,
                last_accrual: entry.arrival,
            });
            if Some(entry.id) == running {
                token.last_accrual = now;
                continue;
            }
            let isolated_est = entry.profile.avg_total_latency;
            if isolated_est > 0.0 {
                token.tokens += priority as f64 * (now - token.last_accrual) / isolated_est;
            }
            token.last_accrual = now;
        }
        let threshold = queue
            .iter()
            .map(|e| self.priority(e.id))
            .max()
            .unwrap_or(0) as f64;
        let candidates: Vec<&QueueEntry<'_>> = queue
            .iter()
            .filter(|e| self.state[&e.id].tokens >= threshold)
            .collect();
        // A request at the maximum priority always holds tokens >= its own
        // priority, so the candidate set cannot be empty.
        let chosen = candidates
            .iter()
            .min_by(|a, b| {
                blind_remaining(a)
                    .partial_cmp(&blind_remaining(b))
                    .unwrap()
                    .then(a.id.cmp(&b.id))
            })
            .map(|e| e.id)?;
        let priority = self.priority(chosen);
        if let Some(token) = self.state.get_mut(&chosen) {
            token.tokens = priority as f64;
            token.last_accrual = now;
        }
        Some(chosen)
    }

    /// Token values for event logs, in queue order.
    pub fn token_rows(&self, queue: &[QueueEntry<'_>]) -> Vec<ScoredRequest> {
        queue
            .iter()
            .map(|e| {
                let tokens = self.tokens(e.id).unwrap_or(self.priority(e.id) as f64);
                scored(e.id, tokens, blind_remaining(e), 0.0)
            })
            .collect()
    }
}

/// Deadline-driven selection degenerated to time-sharing: earliest absolute
/// deadline first, ties by shorter blind remaining estimate, then lowest id.
/// A past-due request necessarily holds the earliest deadline.
pub fn planaria_select(queue: &[QueueEntry<'_>]) -> Option<u64> {
    queue
        .iter()
        .min_by(|a, b| {
            a.deadline
                .partial_cmp(&b.deadline)
                .unwrap()
                .then(blind_remaining(a).partial_cmp(&blind_remaining(b)).unwrap())
                .then(a.id.cmp(&b.id))
        })
        .map(|e| e.id)
}

pub fn planaria_score_all(queue: &[QueueEntry<'_>], now: f64) -> Vec<ScoredRequest> {
    queue
        .iter()
        .map(|e| {
            let rem = blind_remaining(e);
            scored(e.id, e.deadline, rem, e.deadline - now - rem)
        })
        .collect()
}

/// Weighted urgency/fairness selection.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct Sdrm3Config {
    /// Weight on urgency; 1 - alpha_weight goes to fairness.
    pub alpha_weight: f64,
}

impl Default for Sdrm3Config {
    fn default() -> Self {
        Self { alpha_weight: 0.5 }
    }
}

fn min_max_normalize(values: &[f64]) -> Vec<f64> {
    let min = values.iter().cloned().fold(f64::INFINITY, f64::min);
    let max = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !(max - min).is_normal() {
        return vec![0.0; values.len()];
    }
    values.iter().map(|v| (v - min) / (max - min)).collect()
}

/// MapScore_i = alpha * Urgency_i + (1 - alpha) * Fairness_i, maximum wins.
/// Urgency is negated slack and fairness the wait/service ratio, both
/// min-max normalized over the current queue.
pub fn sdrm3_score_all(queue: &[QueueEntry<'_>], now: f64, cfg: &Sdrm3Config) -> Vec<ScoredRequest> {
    let urgency_raw: Vec<f64> = queue
        .iter()
        .map(|e| -(e.deadline - now - blind_remaining(e)))
        .collect();
    let fairness_raw: Vec<f64> = queue
        .iter()
        .map(|e| {
            let wait = now - e.arrival - e.exec_accum;
            let service = e.profile.avg_total_latency;
            if service > 0.0 {
                wait / service
            } else {
                0.0
            }
        })
        .collect();
    let urgency = min_max_normalize(&urgency_raw);
    let fairness = min_max_normalize(&fairness_raw);
    queue
        .iter()
        .enumerate()
        .map(|(i, e)| {
            let map_score = cfg.alpha_weight * urgency[i] + (1.0 - cfg.alpha_weight) * fairness[i];
            scored(e.id, map_score, blind_remaining(e), -urgency_raw[i])
        })
        .collect()
}

pub fn sdrm3_select(queue: &[QueueEntry<'_>], now: f64, cfg: &Sdrm3Config) -> Option<u64> {
    sdrm3_score_all(queue, now, cfg)
        .iter()
        .max_by(|a, b| a.score.partial_cmp(&b.score).unwrap().then(b.id.cmp(&a.id)))
        .map(|s| s.id)
}

/// Perfect-prediction variant of the dynamic scheduler: identical scoring
/// and tie rules, with the remaining estimate replaced by the ground-truth
/// remaining trace latency. An upper-bound reference.
pub fn oracle_score_all(
    queue: &[QueueEntry<'_>],
    true_remaining: &[f64],
    now: f64,
    eta: f64,
) -> Vec<ScoredRequest> {
    let queue_len = queue.len() as f64;
    queue
        .iter()
        .zip(true_remaining)
        .map(|(entry, &remaining)| {
            let slack = entry.deadline - now - remaining;
            let wait = now - entry.arrival - entry.exec_accum;
            let isolated = remaining + entry.exec_accum;
            let penalty = if isolated > 0.0 {
                (wait / isolated) / queue_len
            } else {
                0.0
            };
            ScoredRequest {
                id: entry.id,
                score: remaining + eta * (slack + penalty),
                remaining_est: remaining,
                slack,
                penalty,
                gamma: 1.0,
            }
        })
        .collect()
}

pub fn oracle_select(
    queue: &[QueueEntry<'_>],
    true_remaining: &[f64],
    now: f64,
    eta: f64,
    running: Option<u64>,
) -> Option<u64> {
    select_next(&oracle_score_all(queue, true_remaining, now, eta), running)
}
