//! Traces, requests and workload generation.
//!
//! A trace is the ground truth the simulator replays: the per-layer latency
//! and sparsity recorded for one (model, input) execution. Workloads are
//! streams of requests with Poisson arrivals and SLO deadlines, each request
//! replaying one trace sampled from a pool.

use std::collections::HashMap;
use std::fmt;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, Exp};
use serde::{Deserialize, Serialize};

use crate::error::{Result, SimError};

/// RNG sub-streams. One seed drives a workload; each concern draws from its
/// own ChaCha stream so adding a feature does not perturb existing draws.
const STREAM_ARRIVALS: u64 = 1;
const STREAM_TRACE_CHOICE: u64 = 2;
const STREAM_SYNTH: u64 = 3;

/// Structural form of the pruning mask a model was sparsified with.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SparsityPattern {
    Dense,
    PointwiseRandom,
    BlockNM,
    Channelwise,
    DynamicAttention,
}

impl SparsityPattern {
    pub fn as_str(&self) -> &'static str {
        match self {
            SparsityPattern::Dense => "dense",
            SparsityPattern::PointwiseRandom => "pointwise_random",
            SparsityPattern::BlockNM => "block_nm",
            SparsityPattern::Channelwise => "channelwise",
            SparsityPattern::DynamicAttention => "dynamic_attention",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "dense" => Some(SparsityPattern::Dense),
            "pointwise_random" => Some(SparsityPattern::PointwiseRandom),
            "block_nm" => Some(SparsityPattern::BlockNM),
            "channelwise" => Some(SparsityPattern::Channelwise),
            "dynamic_attention" => Some(SparsityPattern::DynamicAttention),
            _ => None,
        }
    }
}

impl fmt::Display for SparsityPattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Identifies one profiled model variant. Latency behaviour is tracked
/// separately per (model, pattern) pair.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ModelPatternKey {
    pub model_name: String,
    pub pattern: SparsityPattern,
}

impl ModelPatternKey {
    pub fn new(model_name: impl Into<String>, pattern: SparsityPattern) -> Self {
        Self {
            model_name: model_name.into(),
            pattern,
        }
    }
}

impl fmt::Display for ModelPatternKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.model_name, self.pattern)
    }
}

/// Measured latency and sparsity of one layer execution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LayerTrace {
    /// Seconds spent executing this layer in isolation.
    pub latency: f64,
    /// Fraction of zero values produced/consumed at this layer, in [0, 1].
    pub sparsity: f64,
}

impl LayerTrace {
    pub fn new(latency: f64, sparsity: f64) -> Result<Self> {
        if !(latency.is_finite() && latency >= 0.0) {
            return Err(SimError::Validation(format!(
                "layer latency must be finite and >= 0, got {latency}"
            )));
        }
        if !(0.0..=1.0).contains(&sparsity) {
            return Err(SimError::Validation(format!(
                "layer sparsity must lie in [0, 1], got {sparsity}"
            )));
        }
        Ok(Self { latency, sparsity })
    }

    /// Fraction of non-zero values.
    pub fn density(&self) -> f64 {
        1.0 - self.sparsity
    }
}

/// Ground-truth execution record for one (model, input) pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleTrace {
    pub key: ModelPatternKey,
    pub sample_id: String,
    pub layers: Vec<LayerTrace>,
}

impl SampleTrace {
    pub fn new(key: ModelPatternKey, sample_id: impl Into<String>, layers: Vec<LayerTrace>) -> Result<Self> {
        if layers.is_empty() {
            return Err(SimError::Validation(format!("trace for {key} has no layers")));
        }
        let trace = Self {
            key,
            sample_id: sample_id.into(),
            layers,
        };
        if trace.isolated_latency() <= 0.0 {
            return Err(SimError::Validation(format!(
                "trace {}:{} has zero total latency",
                trace.key, trace.sample_id
            )));
        }
        Ok(trace)
    }

    pub fn layer_count(&self) -> usize {
        self.layers.len()
    }

    /// Uninterrupted execution time of the whole trace, `T_isol`.
    pub fn isolated_latency(&self) -> f64 {
        self.layers.iter().map(|l| l.latency).sum()
    }

    /// True latency still to run from `next_layer` onward.
    pub fn remaining_latency(&self, next_layer: usize) -> f64 {
        self.layers[next_layer.min(self.layers.len())..]
            .iter()
            .map(|l| l.latency)
            .sum()
    }
}

/// An inference job to schedule: a trace to replay plus arrival and deadline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Request {
    pub id: u64,
    pub key: ModelPatternKey,
    /// Arrival time in seconds.
    pub arrival: f64,
    /// Absolute deadline, `arrival + T_isol * M_slo`.
    pub deadline: f64,
    pub trace: SampleTrace,
    /// Index of the next layer to execute; 0 means not started.
    pub next_layer: usize,
    /// Execution time already spent, the sum of latencies of layers `[0, next_layer)`.
    pub exec_accum: f64,
    pub completion: Option<f64>,
    pub preempt_count: u32,
}

impl Request {
    pub fn new(id: u64, trace: SampleTrace, arrival: f64) -> Self {
        Self {
            id,
            key: trace.key.clone(),
            arrival,
            deadline: f64::INFINITY,
            trace,
            next_layer: 0,
            exec_accum: 0.0,
            completion: None,
            preempt_count: 0,
        }
    }

    pub fn isolated_latency(&self) -> f64 {
        self.trace.isolated_latency()
    }
}

/// Parameters for a generated request stream.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WorkloadSpec {
    /// Requests per second of the Poisson arrival process.
    pub arrival_rate: f64,
    pub num_requests: usize,
    /// SLO stringency: deadline = arrival + T_isol * slo_multiplier.
    pub slo_multiplier: f64,
    pub seed: u64,
}

impl WorkloadSpec {
    fn validate(&self) -> Result<()> {
        if self.num_requests < 1 {
            return Err(SimError::InvalidSpec("num_requests must be >= 1".into()));
        }
        if !(self.arrival_rate.is_finite() && self.arrival_rate > 0.0) {
            return Err(SimError::InvalidSpec(format!(
                "arrival_rate must be finite and > 0, got {}",
                self.arrival_rate
            )));
        }
        Ok(())
    }
}

/// Supported trace file formats. CSV is the interchange format; others may
/// be added without touching call sites.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TraceFormat {
    Csv,
}

/// Loads traces from a file.
///
/// CSV schema (header required):
/// `model_name,pattern,sample_id,layer_idx,latency_s,sparsity`
/// with `layer_idx` contiguous `0..L-1` per (model, pattern, sample) group.
pub fn load_traces(path: impl AsRef<Path>, format: TraceFormat) -> Result<Vec<SampleTrace>> {
    match format {
        TraceFormat::Csv => load_traces_csv(path.as_ref()),
    }
}

fn load_traces_csv(path: &Path) -> Result<Vec<SampleTrace>> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_path(path)?;
    // Rows belonging to one (model, pattern, sample) group must be contiguous
    // with layer_idx counting up from 0; order in the file is preserved.
    let mut traces: Vec<SampleTrace> = Vec::new();
    let mut order: Vec<(ModelPatternKey, String)> = Vec::new();
    let mut groups: HashMap<(ModelPatternKey, String), Vec<LayerTrace>> = HashMap::new();

    for (idx, record) in reader.records().enumerate() {
        let line = idx + 2; // 1-based, after the header row
        let record = record.map_err(|e| SimError::Parse {
            line,
            msg: e.to_string(),
        })?;
        if record.len() != 6 {
            return Err(SimError::Parse {
                line,
                msg: format!("expected 6 fields, got {}", record.len()),
            });
        }
        let field = |i: usize| record.get(i).unwrap_or("").trim();
        let pattern = SparsityPattern::parse(field(1)).ok_or_else(|| SimError::Parse {
            line,
            msg: format!("unknown sparsity pattern {:?}", field(1)),
        })?;
        let parse_f64 = |i: usize, name: &str| -> Result<f64> {
            field(i).parse::<f64>().map_err(|e| SimError::Parse {
                line,
                msg: format!("bad {name} {:?}: {e}", field(i)),
            })
        };
        let layer_idx: usize = field(3).parse().map_err(|e| SimError::Parse {
            line,
            msg: format!("bad layer_idx {:?}: {e}", field(3)),
        })?;
        let latency = parse_f64(4, "latency_s")?;
        let sparsity = parse_f64(5, "sparsity")?;
        let layer = LayerTrace::new(latency, sparsity)
            .map_err(|e| SimError::Validation(format!("line {line}: {e}")))?;

        let group_key = (
            ModelPatternKey::new(field(0), pattern),
            field(2).to_string(),
        );
        let layers = groups.entry(group_key.clone()).or_insert_with(|| {
            order.push(group_key.clone());
            Vec::new()
        });
        if layer_idx != layers.len() {
            return Err(SimError::Parse {
                line,
                msg: format!(
                    "layer_idx {} out of order for {}:{} (expected {})",
                    layer_idx,
                    group_key.0,
                    group_key.1,
                    layers.len()
                ),
            });
        }
        layers.push(layer);
    }

    if order.is_empty() {
        return Err(SimError::EmptyInput("trace file contains no rows"));
    }
    for group_key in order {
        let layers = groups.remove(&group_key).unwrap();
        traces.push(SampleTrace::new(group_key.0, group_key.1, layers)?);
    }
    Ok(traces)
}

/// Writes traces in the CSV schema accepted by [`load_traces`].
pub fn save_traces(path: impl AsRef<Path>, traces: &[SampleTrace]) -> Result<()> {
    let mut writer = csv::Writer::from_path(path.as_ref())?;
    writer.write_record(["model_name", "pattern", "sample_id", "layer_idx", "latency_s", "sparsity"])?;
    for trace in traces {
        for (idx, layer) in trace.layers.iter().enumerate() {
            writer.write_record([
                trace.key.model_name.as_str(),
                trace.key.pattern.as_str(),
                trace.sample_id.as_str(),
                &idx.to_string(),
                &format!("{:.17e}", layer.latency),
                &format!("{:.17e}", layer.sparsity),
            ])?;
        }
    }
    writer.flush()?;
    Ok(())
}

/// Parameters of the synthetic trace generator for one model.
///
/// Sparsities are drawn around `mean_sparsity` with a per-sample common
/// factor and per-layer noise mixed so any two layers have Pearson
/// correlation `correlation`. `rel_range` calibrates the draw width so that,
/// at correlation 1, the empirical (max - min) / mean of network sparsity
/// over a large pool approaches `rel_range`. Per-layer latency couples to
/// density through `alpha_synth`:
/// `lat = base_latency * ((1 - alpha_synth) + alpha_synth * density / mean_density)`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SynthSpec {
    pub model_name: String,
    pub pattern: SparsityPattern,
    pub num_samples: usize,
    pub layers: usize,
    /// Mean per-layer latency in seconds (scalar; see `latency_profile`).
    pub base_latency: f64,
    /// Mean per-layer sparsity (scalar; see `sparsity_profile`).
    pub mean_sparsity: f64,
    /// Target relative range of network sparsity across samples.
    pub rel_range: f64,
    /// Pearson correlation between any two layers' sparsities, in [0, 1].
    pub correlation: f64,
    /// Latency-vs-density coupling; 1 = latency fully tracks density.
    pub alpha_synth: f64,
    /// Optional per-layer mean sparsities overriding `mean_sparsity`.
    #[serde(default)]
    pub sparsity_profile: Option<Vec<f64>>,
    /// Optional per-layer base latencies overriding `base_latency`.
    #[serde(default)]
    pub latency_profile: Option<Vec<f64>>,
}

impl SynthSpec {
    pub fn uniform(
        model_name: impl Into<String>,
        pattern: SparsityPattern,
        num_samples: usize,
        layers: usize,
        base_latency: f64,
        mean_sparsity: f64,
        rel_range: f64,
        correlation: f64,
    ) -> Self {
        Self {
            model_name: model_name.into(),
            pattern,
            num_samples,
            layers,
            base_latency,
            mean_sparsity,
            rel_range,
            correlation,
            alpha_synth: 1.0,
            sparsity_profile: None,
            latency_profile: None,
        }
    }

    pub fn key(&self) -> ModelPatternKey {
        ModelPatternKey::new(self.model_name.clone(), self.pattern)
    }

    fn validate(&self) -> Result<()> {
        if self.num_samples == 0 || self.layers == 0 {
            return Err(SimError::InvalidSpec("num_samples and layers must be >= 1".into()));
        }
        if !(0.0..=1.0).contains(&self.correlation) {
            return Err(SimError::InvalidSpec(format!(
                "correlation must lie in [0, 1], got {}",
                self.correlation
            )));
        }
        if !(0.0..=1.0).contains(&self.mean_sparsity) {
            return Err(SimError::InvalidSpec(format!(
                "mean_sparsity must lie in [0, 1], got {}",
                self.mean_sparsity
            )));
        }
        if !(self.rel_range.is_finite() && self.rel_range >= 0.0) {
            return Err(SimError::InvalidSpec("rel_range must be >= 0".into()));
        }
        if !(0.0..=1.0).contains(&self.alpha_synth) {
            return Err(SimError::InvalidSpec("alpha_synth must lie in [0, 1]".into()));
        }
        if let Some(profile) = &self.sparsity_profile {
            if profile.len() != self.layers {
                return Err(SimError::InvalidSpec("sparsity_profile length must equal layers".into()));
            }
            if profile.iter().any(|s| !(0.0..=1.0).contains(s)) {
                return Err(SimError::InvalidSpec("sparsity_profile entries must lie in [0, 1]".into()));
            }
        }
        if let Some(profile) = &self.latency_profile {
            if profile.len() != self.layers {
                return Err(SimError::InvalidSpec("latency_profile length must equal layers".into()));
            }
        }
        Ok(())
    }
}

const SQRT3: f64 = 1.732_050_807_568_877_2;

/// Generates a deterministic pool of traces emulating measured sparsity
/// statistics: bounded per-sample dynamicity, linear cross-layer correlation
/// and density-coupled latency.
pub fn synth_traces(spec: &SynthSpec, seed: u64) -> Result<Vec<SampleTrace>> {
    spec.validate()?;
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    rng.set_stream(STREAM_SYNTH);

    let means: Vec<f64> = match &spec.sparsity_profile {
        Some(p) => p.clone(),
        None => vec![spec.mean_sparsity; spec.layers],
    };
    let bases: Vec<f64> = match &spec.latency_profile {
        Some(p) => p.clone(),
        None => vec![spec.base_latency; spec.layers],
    };
    let mean_network_sparsity: f64 = means.iter().sum::<f64>() / spec.layers as f64;
    // Unit-variance uniform draws have support [-sqrt(3), sqrt(3)], so at
    // correlation 1 the network sparsity spans 2*sqrt(3)*delta.
    let delta = spec.rel_range * mean_network_sparsity / (2.0 * SQRT3);
    let w_common = spec.correlation.sqrt();
    let w_idio = (1.0 - spec.correlation).sqrt();

    let mut traces = Vec::with_capacity(spec.num_samples);
    for sample in 0..spec.num_samples {
        let z: f64 = rng.gen_range(-SQRT3..=SQRT3);
        let mut layers = Vec::with_capacity(spec.layers);
        for layer in 0..spec.layers {
            let eps: f64 = rng.gen_range(-SQRT3..=SQRT3);
            let x = w_common * z + w_idio * eps;
            let sparsity = (means[layer] + delta * x).clamp(0.0, 1.0);
            let density = 1.0 - sparsity;
            let mean_density = 1.0 - means[layer];
            let ratio = if mean_density > 0.0 {
                density / mean_density
            } else {
                1.0
            };
            let latency = (bases[layer] * ((1.0 - spec.alpha_synth) + spec.alpha_synth * ratio))
                .max(bases[layer] * 1e-6);
            layers.push(LayerTrace { latency, sparsity });
        }
        traces.push(SampleTrace::new(
            spec.key(),
            format!("s{sample:04}"),
            layers,
        )?);
    }
    Ok(traces)
}

/// Generates `spec.num_requests` requests with exponential inter-arrival
/// gaps and traces sampled uniformly with replacement from `trace_pool`.
/// The first arrival sits at the first gap, not at t=0. Deterministic for a
/// fixed seed; deadlines are assigned per [`assign_slos`].
pub fn gen_arrivals(trace_pool: &[SampleTrace], spec: &WorkloadSpec) -> Result<Vec<Request>> {
    spec.validate()?;
    if trace_pool.is_empty() {
        return Err(SimError::EmptyInput("trace pool is empty"));
    }
    let mut arrival_rng = ChaCha12Rng::seed_from_u64(spec.seed);
    arrival_rng.set_stream(STREAM_ARRIVALS);
    let mut choice_rng = ChaCha12Rng::seed_from_u64(spec.seed);
    choice_rng.set_stream(STREAM_TRACE_CHOICE);

    let gap_dist = Exp::new(spec.arrival_rate)
        .map_err(|e| SimError::InvalidSpec(format!("bad arrival rate: {e}")))?;

    let mut requests = Vec::with_capacity(spec.num_requests);
    let mut now = 0.0;
    for id in 0..spec.num_requests {
        now += gap_dist.sample(&mut arrival_rng);
        let trace = trace_pool[choice_rng.gen_range(0..trace_pool.len())].clone();
        requests.push(Request::new(id as u64, trace, now));
    }
    // Gaps are nonnegative so arrivals are already ascending; the sort is a
    // guard for rounding-induced ties, broken by request id.
    requests.sort_by(|a, b| {
        a.arrival
            .partial_cmp(&b.arrival)
            .unwrap()
            .then(a.id.cmp(&b.id))
    });
    assign_slos(&mut requests, spec.slo_multiplier);
    Ok(requests)
}

/// Sets every deadline to `arrival + T_isol * slo_multiplier`.
///
/// Returns true when the multiplier makes requests feasible in isolation
/// (`slo_multiplier > 1`); false signals an infeasible-even-alone setting,
/// which is allowed for stress studies but worth surfacing to callers.
pub fn assign_slos(requests: &mut [Request], slo_multiplier: f64) -> bool {
    for request in requests.iter_mut() {
        request.deadline = request.arrival + request.isolated_latency() * slo_multiplier;
    }
    slo_multiplier > 1.0
}
