//! Trace-driven, layer-granularity simulator for scheduling sparse
//! multi-DNN inference workloads on a time-shared accelerator.
//!
//! The crate replays recorded (latency, sparsity) traces under pluggable
//! scheduling policies: a bi-level scheduler that refines profiled latency
//! estimates with monitored sparsity, plus the reference policies it is
//! evaluated against, and the ANTT / SLO-violation / throughput metrics.

pub mod baselines;
pub mod dysta;
pub mod error;
pub mod fixtures;
pub mod metrics;
pub mod predictor;
pub mod profile;
pub mod scheduler;
pub mod sim;
pub mod workload;

pub use error::{Result, SimError};
pub use metrics::{aggregate_seeds, MetricsReport, SeedSummary, SummaryRow};
pub use predictor::{CoeffStrategy, MonitorState, PredictorConfig};
pub use profile::{build_profiles, ModelProfile, ProfileStore};
pub use scheduler::SchedulerSpec;
pub use sim::{run_sim, run_sim_logged, RunRecord, SimConfig};
pub use workload::{
    gen_arrivals, load_traces, synth_traces, LayerTrace, ModelPatternKey, Request, SampleTrace,
    SparsityPattern, SynthSpec, TraceFormat, WorkloadSpec,
};
