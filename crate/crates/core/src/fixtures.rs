//! Deterministic scenarios used by tests, the acceptance suite and the CLI
//! `fixture` subcommand.
//!
//! `tri_basic` is small enough to execute by hand: three requests, three
//! layers each, with traces built as exact density-ratio scalings of their
//! profiles so predictions are exact and every score is hand-checkable.
//! `fig5` encodes a two-request scenario where a latency-average scheduler
//! preempts a fast-running job and loses a deadline, while the
//! sparsity-refined estimate declines the preemption and meets both.

use std::path::Path;

use crate::dysta::DystaConfig;
use crate::error::Result;
use crate::predictor::{CoeffStrategy, PredictorConfig};
use crate::profile::{build_profiles, ProfileStore};
use crate::workload::{
    assign_slos, save_traces, synth_traces, LayerTrace, ModelPatternKey, Request, SampleTrace,
    SparsityPattern, SynthSpec,
};

/// A self-contained scenario: request traces, the pool profiles are built
/// from, the request stream and its SLO multiplier.
#[derive(Debug, Clone)]
pub struct Fixture {
    pub name: &'static str,
    pub profile_pool: Vec<SampleTrace>,
    pub requests: Vec<Request>,
    pub slo_multiplier: f64,
    pub dysta: DystaConfig,
}

impl Fixture {
    pub fn profiles(&self) -> ProfileStore {
        build_profiles(&self.profile_pool).expect("fixture pool is well-formed")
    }

    pub fn request_traces(&self) -> Vec<SampleTrace> {
        self.requests.iter().map(|r| r.trace.clone()).collect()
    }
}

fn uniform_trace(
    model: &str,
    pattern: SparsityPattern,
    sample: &str,
    layers: usize,
    latency: f64,
    sparsity: f64,
) -> SampleTrace {
    SampleTrace::new(
        ModelPatternKey::new(model, pattern),
        sample,
        vec![LayerTrace { latency, sparsity }; layers],
    )
    .unwrap()
}

/// Three models, one request each, arrivals 0 / 0.5 / 1.2 and SLO x10.
///
/// Profiles (per layer, 3 layers): net_x (2.0 s, 0.5), net_y (3.0 s, 0.2),
/// net_z (1.0 s, 0.4). Request traces are exact density-ratio scalings with
/// ratios 0.5, 1.0 and 1.5, so the last-one coefficient recovers the ratio
/// after the first layer of each request.
pub fn tri_basic() -> Fixture {
    let x = ModelPatternKey::new("net_x", SparsityPattern::PointwiseRandom);
    let y = ModelPatternKey::new("net_y", SparsityPattern::DynamicAttention);
    let z = ModelPatternKey::new("net_z", SparsityPattern::Channelwise);

    let profile_pool = vec![
        // net_x: averages (2.0, 0.5) from two symmetric samples.
        uniform_trace(&x.model_name, x.pattern, "p0", 3, 1.0, 0.75),
        uniform_trace(&x.model_name, x.pattern, "p1", 3, 3.0, 0.25),
        // net_y: a single representative sample.
        uniform_trace(&y.model_name, y.pattern, "p0", 3, 3.0, 0.2),
        // net_z: averages (1.0, 0.4).
        uniform_trace(&z.model_name, z.pattern, "p0", 3, 1.5, 0.1),
        uniform_trace(&z.model_name, z.pattern, "p1", 3, 0.5, 0.7),
    ];

    let r0 = uniform_trace(&x.model_name, x.pattern, "req", 3, 1.0, 0.75);
    let r1 = uniform_trace(&y.model_name, y.pattern, "req", 3, 3.0, 0.2);
    let r2 = uniform_trace(&z.model_name, z.pattern, "req", 3, 1.5, 0.1);

    let mut requests = vec![
        Request::new(0, r0, 0.0),
        Request::new(1, r1, 0.5),
        Request::new(2, r2, 1.2),
    ];
    let slo_multiplier = 10.0;
    assign_slos(&mut requests, slo_multiplier);

    Fixture {
        name: "tri_basic",
        profile_pool,
        requests,
        slo_multiplier,
        dysta: DystaConfig::default(),
    }
}

/// Two requests reproducing the preempt/no-preempt comparison.
///
/// Request 0 (net_fast) runs twice as fast as its profile average because
/// its input is highly sparse (density ratio 0.4); request 1 (net_steady)
/// matches its average exactly. At the first boundary after request 1
/// arrives, the blind comparison preempts request 0 (remaining average 7.5
/// vs 6.0) and request 0 later misses its x2 deadline; the monitored
/// density ratio bounds request 0's remaining work at 3.0, so the refined
/// scheduler keeps it running and both deadlines hold.
pub fn fig5() -> Fixture {
    let fast = ModelPatternKey::new("net_fast", SparsityPattern::DynamicAttention);
    let steady = ModelPatternKey::new("net_steady", SparsityPattern::Channelwise);

    let profile_pool = vec![
        // net_fast: averages (2.5, 0.5) from two spread samples.
        uniform_trace(&fast.model_name, fast.pattern, "p0", 4, 4.0, 0.2),
        uniform_trace(&fast.model_name, fast.pattern, "p1", 4, 1.0, 0.8),
        // net_steady: profile equals the request trace.
        uniform_trace(&steady.model_name, steady.pattern, "p0", 6, 1.0, 0.5),
    ];

    let r0 = uniform_trace(&fast.model_name, fast.pattern, "req", 4, 1.0, 0.8);
    let r1 = uniform_trace(&steady.model_name, steady.pattern, "req", 6, 1.0, 0.5);

    let mut requests = vec![Request::new(0, r0, 0.0), Request::new(1, r1, 0.5)];
    let slo_multiplier = 2.0;
    assign_slos(&mut requests, slo_multiplier);

    Fixture {
        name: "fig5",
        profile_pool,
        requests,
        slo_multiplier,
        dysta: DystaConfig {
            predictor: PredictorConfig {
                strategy: CoeffStrategy::LastOne,
                ..PredictorConfig::default()
            },
            ..DystaConfig::default()
        },
    }
}

/// A six-request mix under a tight SLO where deadline-driven and
/// shortest-job orderings disagree: the short jobs stacked behind a long
/// one let shortest-job trade a long-job violation for turnaround.
pub fn tight_mix() -> Fixture {
    let long = ModelPatternKey::new("net_long", SparsityPattern::BlockNM);
    let short = ModelPatternKey::new("net_short", SparsityPattern::PointwiseRandom);

    let profile_pool = vec![
        uniform_trace(&long.model_name, long.pattern, "p0", 6, 1.5, 0.5),
        uniform_trace(&short.model_name, short.pattern, "p0", 3, 0.5, 0.5),
    ];

    let mk_long = |sample: &str| uniform_trace(&long.model_name, long.pattern, sample, 6, 1.5, 0.5);
    let mk_short = |sample: &str| uniform_trace(&short.model_name, short.pattern, sample, 3, 0.5, 0.5);

    let mut requests = vec![
        Request::new(0, mk_long("r0"), 0.0),
        Request::new(1, mk_short("r1"), 1.0),
        Request::new(2, mk_short("r2"), 2.0),
        Request::new(3, mk_short("r3"), 3.5),
        Request::new(4, mk_short("r4"), 5.0),
        Request::new(5, mk_short("r5"), 6.5),
    ];
    let slo_multiplier = 1.6;
    assign_slos(&mut requests, slo_multiplier);

    Fixture {
        name: "tight_mix",
        profile_pool,
        requests,
        slo_multiplier,
        dysta: DystaConfig::default(),
    }
}

/// Generator parameters for the bundled synthetic benchmark: a pool with
/// the dynamicity of attention-style models (high per-sample latency
/// variance, strong cross-layer correlation).
pub fn attnn_like_pool_specs() -> Vec<SynthSpec> {
    vec![
        SynthSpec::uniform("attn_s", SparsityPattern::DynamicAttention, 150, 8, 0.0015, 0.55, 0.50, 0.92),
        SynthSpec::uniform("attn_m", SparsityPattern::DynamicAttention, 150, 12, 0.0020, 0.60, 0.45, 0.90),
        SynthSpec::uniform("attn_l", SparsityPattern::DynamicAttention, 150, 12, 0.0035, 0.65, 0.55, 0.95),
    ]
}

/// Moderate-variance pool with the longer latencies of vision models.
pub fn cnn_like_pool_specs() -> Vec<SynthSpec> {
    vec![
        SynthSpec::uniform("cnn_s", SparsityPattern::PointwiseRandom, 150, 10, 0.018, 0.35, 0.20, 0.85),
        SynthSpec::uniform("cnn_m", SparsityPattern::BlockNM, 150, 14, 0.022, 0.40, 0.25, 0.85),
        SynthSpec::uniform("cnn_l", SparsityPattern::Channelwise, 150, 16, 0.025, 0.30, 0.18, 0.90),
    ]
}

/// The trace pool behind `synth_benchmark`, deterministic in `seed`.
pub fn synth_benchmark_pool(seed: u64) -> Vec<SampleTrace> {
    let mut pool = Vec::new();
    for (i, spec) in attnn_like_pool_specs().iter().enumerate() {
        pool.extend(synth_traces(spec, seed.wrapping_add(i as u64 * 1000)).unwrap());
    }
    pool
}

/// Arrival rates used by the benchmark presets: low, mid, high.
pub const BENCHMARK_RATES: [f64; 3] = [20.0, 30.0, 40.0];
pub const BENCHMARK_MID_RATE: f64 = 30.0;
pub const BENCHMARK_SEEDS: [u64; 5] = [1, 2, 3, 4, 5];
pub const BENCHMARK_NUM_REQUESTS: usize = 1000;

/// Scheduler parameters the benchmark presets use for the bi-level
/// scheduler. The eta weight is tuned lower than the library default so the
/// remaining-time term dominates at loose multipliers; see README.
pub fn benchmark_dysta_config() -> DystaConfig {
    DystaConfig {
        beta: 0.5,
        eta: 0.05,
        ..DystaConfig::default()
    }
}

/// Pool for the predictor-strategy comparison: one model family whose
/// sparsity drifts in layer groups (recent layers are the best predictor)
/// and one whose per-layer noise is independent (history averaging is the
/// best predictor). Both keep pairwise cross-layer correlation >= 0.9.
pub fn rmse_pool(seed: u64) -> Vec<SampleTrace> {
    let mut pool = grouped_drift_traces(
        "attn_drift",
        SparsityPattern::DynamicAttention,
        400,
        12,
        3,
        0.002,
        0.55,
        0.90,
        0.12,
        seed,
    );
    let stationary = SynthSpec::uniform(
        "attn_flat",
        SparsityPattern::DynamicAttention,
        400,
        12,
        0.002,
        0.55,
        0.12,
        0.90,
    );
    pool.extend(synth_traces(&stationary, seed.wrapping_add(7777)).unwrap());
    pool
}

/// Traces whose idiosyncratic sparsity component is shared within blocks of
/// `group` consecutive layers, emulating stage-wise drift through a model.
#[allow(clippy::too_many_arguments)]
pub fn grouped_drift_traces(
    model: &str,
    pattern: SparsityPattern,
    num_samples: usize,
    layers: usize,
    group: usize,
    base_latency: f64,
    mean_sparsity: f64,
    correlation: f64,
    rel_range: f64,
    seed: u64,
) -> Vec<SampleTrace> {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(seed);
    rng.set_stream(3);
    const SQRT3: f64 = 1.732_050_807_568_877_2;
    let delta = rel_range * mean_sparsity / (2.0 * SQRT3);
    let w_common = correlation.sqrt();
    let w_idio = (1.0 - correlation).sqrt();
    let groups = layers.div_ceil(group);
    let key = ModelPatternKey::new(model, pattern);
    let mean_density = 1.0 - mean_sparsity;
    (0..num_samples)
        .map(|sample| {
            let z: f64 = rng.gen_range(-SQRT3..=SQRT3);
            let group_noise: Vec<f64> = (0..groups).map(|_| rng.gen_range(-SQRT3..=SQRT3)).collect();
            let layer_traces = (0..layers)
                .map(|j| {
                    let x = w_common * z + w_idio * group_noise[j / group];
                    let sparsity = (mean_sparsity + delta * x).clamp(0.0, 1.0);
                    let ratio = (1.0 - sparsity) / mean_density;
                    LayerTrace {
                        latency: (base_latency * ratio).max(base_latency * 1e-6),
                        sparsity,
                    }
                })
                .collect();
            SampleTrace::new(key.clone(), format!("s{sample:04}"), layer_traces).unwrap()
        })
        .collect()
}

/// Writes a fixture's files: `traces.csv` (request traces),
/// `profile_pool.csv`, `workload.csv` (explicit arrivals) and
/// `manifest.toml`.
pub fn write_fixture(fixture: &Fixture, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir)?;
    save_traces(dir.join("traces.csv"), &fixture.request_traces())?;
    save_traces(dir.join("profile_pool.csv"), &fixture.profile_pool)?;

    let mut writer = csv::Writer::from_path(dir.join("workload.csv"))?;
    writer.write_record(["request_id", "model_name", "pattern", "sample_id", "arrival_s"])?;
    for request in &fixture.requests {
        writer.write_record([
            request.id.to_string(),
            request.key.model_name.clone(),
            request.key.pattern.as_str().to_string(),
            request.trace.sample_id.clone(),
            format!("{:.9}", request.arrival),
        ])?;
    }
    writer.flush()?;

    let mut manifest = String::new();
    manifest.push_str(&format!("name = \"{}\"\n", fixture.name));
    manifest.push_str(&format!("slo_multiplier = {}\n", fixture.slo_multiplier));
    manifest.push_str(&format!("num_requests = {}\n", fixture.requests.len()));
    manifest.push_str("\n[layer_counts]\n");
    let mut keys: Vec<&Request> = fixture.requests.iter().collect();
    keys.sort_by_key(|r| r.id);
    for request in keys {
        manifest.push_str(&format!(
            "request_{} = {}\n",
            request.id,
            request.trace.layer_count()
        ));
    }
    std::fs::write(dir.join("manifest.toml"), manifest)?;
    Ok(())
}
