//! The discrete-event engine: replays traces at layer granularity on a
//! single time-shared accelerator.
//!
//! The scheduler is invoked at every layer (or layer-block) completion of
//! the running request and whenever an arrival reaches an idle accelerator.
//! Arrivals during a layer wait for the boundary. A completion and an
//! arrival at the same instant are processed completion first, arrival
//! enqueued, then one scheduler invocation sees both. The monitor receives
//! the just-finished layers' sparsities before the scheduler runs.

use serde::{Deserialize, Serialize};

use crate::dysta::{static_score, QueueEntry};
use crate::error::{Result, SimError};
use crate::predictor::MonitorState;
use crate::profile::ProfileStore;
use crate::scheduler::{ActiveScheduler, Candidate, SchedulerSpec};
use crate::workload::{LayerTrace, ModelPatternKey, Request};

/// What to do when the ready queue would exceed the configured depth.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OverflowPolicy {
    /// Abort the simulation.
    #[default]
    Error,
    /// Drop the arriving request and count it as a violation.
    DropViolate,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SimConfig {
    /// Number of consecutive layers executed as one non-preemptible block.
    pub layer_block: usize,
    /// Constant cost charged when the scheduler switches away from an
    /// unfinished request.
    pub switch_overhead: f64,
    /// Ready-queue depth limit mirroring the hardware FIFO; None = unbounded.
    pub max_queue_len: Option<usize>,
    pub overflow: OverflowPolicy,
    /// Collect per-invocation event rows.
    pub collect_events: bool,
    /// Guard against runaway simulations.
    pub max_sim_time: f64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            layer_block: 1,
            switch_overhead: 0.0,
            max_queue_len: None,
            overflow: OverflowPolicy::Error,
            collect_events: false,
            max_sim_time: 1e9,
        }
    }
}

/// One contiguous stretch of execution: layers `[first_layer, last_layer)`
/// ran uninterrupted over `[start, end)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub start: f64,
    pub end: f64,
    pub first_layer: usize,
    pub last_layer: usize,
}

/// Outcome of one request.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub id: u64,
    pub key: ModelPatternKey,
    pub arrival: f64,
    pub deadline: f64,
    /// True trace sum.
    pub t_isol: f64,
    /// None only for requests dropped by the overflow policy.
    pub completion: Option<f64>,
    pub turnaround: Option<f64>,
    pub violated: bool,
    pub preemptions: u32,
    pub dropped: bool,
    pub segments: Vec<Segment>,
}

impl RunRecord {
    /// Normalized turnaround, `turnaround / t_isol`.
    pub fn slowdown(&self) -> Option<f64> {
        self.turnaround.map(|t| t / self.t_isol)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    Arrival,
    LayerComplete,
    Score,
    Dispatch,
}

impl EventKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            EventKind::Arrival => "arrival",
            EventKind::LayerComplete => "layer_complete",
            EventKind::Score => "score",
            EventKind::Dispatch => "dispatch",
        }
    }
}

/// One event-log row: `time,kind,request_id,layer_idx,score`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventRow {
    pub time: f64,
    pub kind: EventKind,
    pub request_id: u64,
    pub layer_idx: usize,
    pub score: f64,
}

#[derive(Debug, Clone, Default)]
pub struct SimOutput {
    pub records: Vec<RunRecord>,
    pub events: Vec<EventRow>,
}

impl SimOutput {
    pub fn total_preemptions(&self) -> u64 {
        self.records.iter().map(|r| r.preemptions as u64).sum()
    }
}

/// Per-request and total preemption counts from completed records.
pub fn preemption_accounting(records: &[RunRecord]) -> (Vec<(u64, u32)>, u64) {
    let per_request: Vec<(u64, u32)> = records.iter().map(|r| (r.id, r.preemptions)).collect();
    let total = per_request.iter().map(|&(_, c)| c as u64).sum();
    (per_request, total)
}

/// Appends a completed layer's sparsity to the monitor history.
pub fn monitor_update(state: &mut MonitorState, layer: &LayerTrace) {
    state.push(layer.sparsity);
}

struct RequestState {
    request: Request,
    monitor: MonitorState,
    static_score: f64,
    segments: Vec<Segment>,
    dropped: bool,
}

struct RunningBlock {
    idx: usize,
    start: f64,
    end: f64,
    first_layer: usize,
    last_layer: usize,
}

/// Drives one simulation to completion. Single-threaded and deterministic.
pub struct Engine {
    states: Vec<RequestState>,
    profiles: ProfileStore,
    scheduler: ActiveScheduler,
    config: SimConfig,
    events: Vec<EventRow>,
}

impl Engine {
    pub fn new(
        requests: Vec<Request>,
        profiles: ProfileStore,
        spec: SchedulerSpec,
        config: SimConfig,
    ) -> Result<Self> {
        if config.layer_block == 0 {
            return Err(SimError::InvalidSpec("layer_block must be >= 1".into()));
        }
        // Every key must resolve before the clock starts.
        for request in &requests {
            profiles.lookup(&request.key)?;
        }
        let mut requests = requests;
        requests.sort_by(|a, b| a.arrival.partial_cmp(&b.arrival).unwrap().then(a.id.cmp(&b.id)));
        let use_static = spec.uses_static_scores();
        let beta = spec.beta();
        let states = requests
            .into_iter()
            .map(|request| {
                let static_val = if use_static {
                    let profile = profiles.lookup(&request.key).unwrap();
                    let cfg = crate::dysta::DystaConfig {
                        beta,
                        ..crate::dysta::DystaConfig::default()
                    };
                    static_score(request.id, request.arrival, request.deadline, profile, &cfg).score
                } else {
                    0.0
                };
                RequestState {
                    request,
                    monitor: MonitorState::new(),
                    static_score: static_val,
                    segments: Vec::new(),
                    dropped: false,
                }
            })
            .collect();
        Ok(Self {
            states,
            profiles,
            scheduler: ActiveScheduler::new(spec),
            config,
            events: Vec::new(),
        })
    }

    fn log(&mut self, time: f64, kind: EventKind, request_id: u64, layer_idx: usize, score: f64) {
        if self.config.collect_events {
            self.events.push(EventRow {
                time,
                kind,
                request_id,
                layer_idx,
                score,
            });
        }
    }

    /// Moves every pending arrival with time <= `t` into the ready queue.
    fn enqueue_arrivals(
        &mut self,
        next_arrival: &mut usize,
        ready: &mut Vec<usize>,
        running: bool,
        t: f64,
    ) -> Result<()> {
        while *next_arrival < self.states.len() && self.states[*next_arrival].request.arrival <= t {
            let idx = *next_arrival;
            *next_arrival += 1;
            if let Some(limit) = self.config.max_queue_len {
                let depth = ready.len() + usize::from(running);
                if depth >= limit {
                    match self.config.overflow {
                        OverflowPolicy::Error => {
                            return Err(SimError::QueueOverflow {
                                time: self.states[idx].request.arrival,
                                depth: depth + 1,
                                limit,
                            });
                        }
                        OverflowPolicy::DropViolate => {
                            self.states[idx].dropped = true;
                            continue;
                        }
                    }
                }
            }
            let arrival = self.states[idx].request.arrival;
            let id = self.states[idx].request.id;
            let static_score = self.states[idx].static_score;
            self.log(arrival, EventKind::Arrival, id, 0, static_score);
            ready.push(idx);
        }
        Ok(())
    }

    /// Scheduler invocation over the ready set plus the running request.
    fn invoke(&mut self, ready: &[usize], running_idx: Option<usize>, now: f64) -> Result<usize> {
        let mut indices: Vec<usize> = ready.to_vec();
        if let Some(idx) = running_idx {
            indices.push(idx);
        }
        indices.sort_unstable();
        let running_id = running_idx.map(|idx| self.states[idx].request.id);
        let candidates: Vec<Candidate<'_>> = indices
            .iter()
            .map(|&idx| {
                let state = &self.states[idx];
                let request = &state.request;
                Candidate {
                    entry: QueueEntry {
                        id: request.id,
                        arrival: request.arrival,
                        deadline: request.deadline,
                        next_layer: request.next_layer,
                        exec_accum: request.exec_accum,
                        profile: self.profiles.lookup(&request.key).unwrap(),
                        monitor: &state.monitor,
                    },
                    static_score: state.static_score,
                    true_remaining: request.trace.remaining_latency(request.next_layer),
                }
            })
            .collect();
        let (chosen, rows) = self.scheduler.decide(&candidates, now, running_id);
        let chosen = chosen.expect("scheduler returned no choice for a non-empty queue");
        if self.config.collect_events {
            for (row, &idx) in rows.iter().zip(&indices) {
                debug_assert_eq!(row.id, self.states[idx].request.id);
                let layer = self.states[idx].request.next_layer;
                self.log(now, EventKind::Score, row.id, layer, row.score);
            }
        }
        Ok(indices
            .into_iter()
            .find(|&idx| self.states[idx].request.id == chosen)
            .expect("scheduler chose an id outside the queue"))
    }

    fn dispatch(&mut self, idx: usize, start: f64) -> RunningBlock {
        let state = &mut self.states[idx];
        let first_layer = state.request.next_layer;
        let last_layer = (first_layer + self.config.layer_block).min(state.request.trace.layer_count());
        let duration: f64 = state.request.trace.layers[first_layer..last_layer]
            .iter()
            .map(|l| l.latency)
            .sum();
        let id = state.request.id;
        self.log(start, EventKind::Dispatch, id, first_layer, 0.0);
        RunningBlock {
            idx,
            start,
            end: start + duration,
            first_layer,
            last_layer,
        }
    }

    pub fn run(mut self) -> Result<SimOutput> {
        let mut ready: Vec<usize> = Vec::new();
        let mut next_arrival = 0usize;
        let mut running: Option<RunningBlock> = None;
        let mut now = 0.0;

        loop {
            if now > self.config.max_sim_time {
                return Err(SimError::TimeGuard(self.config.max_sim_time));
            }
            match running.take() {
                None => {
                    if ready.is_empty() {
                        if next_arrival >= self.states.len() {
                            break;
                        }
                        now = self.states[next_arrival].request.arrival;
                        self.enqueue_arrivals(&mut next_arrival, &mut ready, false, now)?;
                        if ready.is_empty() {
                            // Everything at this instant was dropped.
                            continue;
                        }
                    }
                    let idx = self.invoke(&ready, None, now)?;
                    ready.retain(|&r| r != idx);
                    running = Some(self.dispatch(idx, now));
                }
                Some(block) => {
                    self.enqueue_arrivals(&mut next_arrival, &mut ready, true, block.end)?;
                    now = block.end;
                    // Completion bookkeeping before the scheduler sees the
                    // boundary: monitor, progress, segment.
                    {
                        let state = &mut self.states[block.idx];
                        for j in block.first_layer..block.last_layer {
                            let layer = state.request.trace.layers[j];
                            monitor_update(&mut state.monitor, &layer);
                            state.request.exec_accum += layer.latency;
                        }
                        state.request.next_layer = block.last_layer;
                        state.segments.push(Segment {
                            start: block.start,
                            end: block.end,
                            first_layer: block.first_layer,
                            last_layer: block.last_layer,
                        });
                        let id = state.request.id;
                        self.log(now, EventKind::LayerComplete, id, block.last_layer - 1, 0.0);
                    }
                    let finished = self.states[block.idx].request.next_layer
                        == self.states[block.idx].request.trace.layer_count();
                    if finished {
                        self.states[block.idx].request.completion = Some(now);
                        if !ready.is_empty() {
                            let idx = self.invoke(&ready, None, now)?;
                            ready.retain(|&r| r != idx);
                            running = Some(self.dispatch(idx, now));
                        }
                    } else {
                        let idx = self.invoke(&ready, Some(block.idx), now)?;
                        if idx == block.idx {
                            running = Some(self.dispatch(idx, now));
                        } else {
                            self.states[block.idx].request.preempt_count += 1;
                            ready.push(block.idx);
                            ready.retain(|&r| r != idx);
                            running = Some(self.dispatch(idx, now + self.config.switch_overhead));
                        }
                    }
                }
            }
        }

        let records = self
            .states
            .iter()
            .map(|state| {
                let request = &state.request;
                let t_isol = request.isolated_latency();
                let turnaround = request.completion.map(|c| c - request.arrival);
                let violated = state.dropped
                    || turnaround.map_or(false, |t| request.arrival + t > request.deadline);
                RunRecord {
                    id: request.id,
                    key: request.key.clone(),
                    arrival: request.arrival,
                    deadline: request.deadline,
                    t_isol,
                    completion: request.completion,
                    turnaround,
                    violated,
                    preemptions: request.preempt_count,
                    dropped: state.dropped,
                    segments: state.segments.clone(),
                }
            })
            .collect();
        Ok(SimOutput {
            records,
            events: self.events,
        })
    }
}

/// Runs one simulation and returns the per-request records.
pub fn run_sim(
    requests: Vec<Request>,
    profiles: &ProfileStore,
    spec: SchedulerSpec,
    config: &SimConfig,
) -> Result<Vec<RunRecord>> {
    Engine::new(requests, profiles.clone(), spec, config.clone()).map(Engine::run)?.map(|o| o.records)
}

/// Runs one simulation with event collection enabled.
pub fn run_sim_logged(
    requests: Vec<Request>,
    profiles: &ProfileStore,
    spec: SchedulerSpec,
    config: &SimConfig,
) -> Result<SimOutput> {
    let config = SimConfig {
        collect_events: true,
        ..config.clone()
    };
    Engine::new(requests, profiles.clone(), spec, config)?.run()
}

/// Writes the event log in the debug CSV schema.
pub fn write_event_log(path: impl AsRef<std::path::Path>, events: &[EventRow]) -> Result<()> {
    let mut writer = csv::Writer::from_path(path.as_ref())?;
    writer.write_record(["time", "kind", "request_id", "layer_idx", "score"])?;
    for row in events {
        writer.write_record([
            format!("{:.9}", row.time),
            row.kind.as_str().to_string(),
            row.request_id.to_string(),
            row.layer_idx.to_string(),
            format!("{:.17e}", row.score),
        ])?;
    }
    writer.flush()?;
    Ok(())
}
