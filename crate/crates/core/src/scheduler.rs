//! Uniform front-end over the scheduling policies the engine can drive.

use serde::{Deserialize, Serialize};

use crate::baselines::{
    fcfs_select, oracle_score_all, planaria_score_all, planaria_select, sdrm3_score_all,
    sdrm3_select, sjf_score_all, sjf_select, PremaConfig, PremaScheduler, Sdrm3Config,
};
use crate::dysta::{dynamic_score_all, select_next, DystaConfig, QueueEntry, ScoredRequest};

/// Scheduler selection plus per-policy parameters.
#[derive(Debug, Clone)]
pub enum SchedulerSpec {
    Fcfs,
    Sjf,
    Prema(PremaConfig),
    Planaria,
    Sdrm3(Sdrm3Config),
    Oracle(OracleConfig),
    Dysta(DystaConfig),
    /// Ablation: admission-time scores only, no dynamic re-scoring.
    DystaStaticOnly { beta: f64 },
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct OracleConfig {
    pub eta: f64,
}

impl Default for OracleConfig {
    fn default() -> Self {
        Self { eta: 0.5 }
    }
}

impl SchedulerSpec {
    pub fn name(&self) -> &'static str {
        match self {
            SchedulerSpec::Fcfs => "fcfs",
            SchedulerSpec::Sjf => "sjf",
            SchedulerSpec::Prema(_) => "prema",
            SchedulerSpec::Planaria => "planaria",
            SchedulerSpec::Sdrm3(_) => "sdrm3",
            SchedulerSpec::Oracle(_) => "oracle",
            SchedulerSpec::Dysta(_) => "dysta",
            SchedulerSpec::DystaStaticOnly { .. } => "dysta_static_only",
        }
    }

    /// Parses the config-file scheduler name into a spec with default
    /// parameters.
    pub fn from_name(name: &str) -> Option<Self> {
        match name {
            "fcfs" => Some(SchedulerSpec::Fcfs),
            "sjf" => Some(SchedulerSpec::Sjf),
            "prema" => Some(SchedulerSpec::Prema(PremaConfig::default())),
            "planaria" => Some(SchedulerSpec::Planaria),
            "sdrm3" => Some(SchedulerSpec::Sdrm3(Sdrm3Config::default())),
            "oracle" => Some(SchedulerSpec::Oracle(OracleConfig::default())),
            "dysta" => Some(SchedulerSpec::Dysta(DystaConfig::default())),
            "dysta_static_only" => Some(SchedulerSpec::DystaStaticOnly { beta: 0.5 }),
            _ => None,
        }
    }

    /// Static admission scores are only meaningful to the dysta family.
    pub fn uses_static_scores(&self) -> bool {
        matches!(
            self,
            SchedulerSpec::Dysta(_) | SchedulerSpec::DystaStaticOnly { .. }
        )
    }

    pub fn beta(&self) -> f64 {
        match self {
            SchedulerSpec::Dysta(cfg) => cfg.beta,
            SchedulerSpec::DystaStaticOnly { beta } => *beta,
            _ => 0.0,
        }
    }
}

/// One candidate the engine offers to the policy: the queue-entry view plus
/// fields only specific policies may read (the admission score for the
/// static-only ablation, the ground-truth remaining latency for the oracle).
pub struct Candidate<'a> {
    pub entry: QueueEntry<'a>,
    pub static_score: f64,
    pub true_remaining: f64,
}

/// Instantiated policy with any cross-invocation state.
pub struct ActiveScheduler {
    spec: SchedulerSpec,
    prema: Option<PremaScheduler>,
}

impl ActiveScheduler {
    pub fn new(spec: SchedulerSpec) -> Self {
        let prema = match &spec {
            SchedulerSpec::Prema(cfg) => Some(PremaScheduler::new(cfg.clone())),
            _ => None,
        };
        Self { spec, prema }
    }

    pub fn spec(&self) -> &SchedulerSpec {
        &self.spec
    }

    pub fn prema(&self) -> Option<&PremaScheduler> {
        self.prema.as_ref()
    }

    /// Picks the next request among `candidates` at time `now`. Returns the
    /// chosen id and the per-candidate metric rows for event logging (the
    /// policy's own selection metric in `score`).
    pub fn decide(
        &mut self,
        candidates: &[Candidate<'_>],
        now: f64,
        running: Option<u64>,
    ) -> (Option<u64>, Vec<ScoredRequest>) {
        if candidates.is_empty() {
            return (None, Vec::new());
        }
        let entries: Vec<QueueEntry<'_>> = candidates
            .iter()
            .map(|c| QueueEntry {
                id: c.entry.id,
                arrival: c.entry.arrival,
                deadline: c.entry.deadline,
                next_layer: c.entry.next_layer,
                exec_accum: c.entry.exec_accum,
                profile: c.entry.profile,
                monitor: c.entry.monitor,
            })
            .collect();
        match &self.spec {
            SchedulerSpec::Fcfs => {
                let rows = entries
                    .iter()
                    .map(|e| ScoredRequest {
                        id: e.id,
                        score: e.arrival,
                        remaining_est: e.profile.remaining_avg_latency(e.next_layer),
                        slack: 0.0,
                        penalty: 0.0,
                        gamma: 1.0,
                    })
                    .collect();
                (fcfs_select(&entries, running), rows)
            }
            SchedulerSpec::Sjf => (sjf_select(&entries), sjf_score_all(&entries)),
            SchedulerSpec::Prema(_) => {
                let prema = self.prema.as_mut().expect("prema state");
                let chosen = prema.select(&entries, now, running);
                let rows = prema.token_rows(&entries);
                (chosen, rows)
            }
            SchedulerSpec::Planaria => (planaria_select(&entries), planaria_score_all(&entries, now)),
            SchedulerSpec::Sdrm3(cfg) => (sdrm3_select(&entries, now, cfg), sdrm3_score_all(&entries, now, cfg)),
            SchedulerSpec::Oracle(cfg) => {
                let truths: Vec<f64> = candidates.iter().map(|c| c.true_remaining).collect();
                let rows = oracle_score_all(&entries, &truths, now, cfg.eta);
                (select_next(&rows, running), rows)
            }
            SchedulerSpec::Dysta(cfg) => {
                let rows = dynamic_score_all(&entries, now, cfg);
                (select_next(&rows, running), rows)
            }
            SchedulerSpec::DystaStaticOnly { .. } => {
                let rows: Vec<ScoredRequest> = candidates
                    .iter()
                    .map(|c| ScoredRequest {
                        id: c.entry.id,
                        score: c.static_score,
                        remaining_est: c.entry.profile.remaining_avg_latency(c.entry.next_layer),
                        slack: 0.0,
                        penalty: 0.0,
                        gamma: 1.0,
                    })
                    .collect();
                (select_next(&rows, running), rows)
            }
        }
    }
}
