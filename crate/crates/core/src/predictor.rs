//! Sparse latency prediction from monitored layer sparsity.
//!
//! A sparsity coefficient gamma rescales profiled average latencies by the
//! ratio of observed to profiled density. On sparsity-exploiting hardware,
//! latency tracks effective (non-zero) operations, so the coefficient is a
//! density ratio: higher monitored sparsity shrinks the estimate.

use serde::{Deserialize, Serialize};

use crate::error::{Result, SimError};
use crate::profile::{ModelProfile, ProfileStore};
use crate::workload::SampleTrace;

/// Which monitored layers feed the coefficient estimate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CoeffStrategy {
    /// All executed layers.
    AverageAll,
    /// The most recent n executed layers.
    LastN(usize),
    /// The most recent executed layer only.
    LastOne,
}

impl CoeffStrategy {
    fn window(&self, observed: usize) -> usize {
        match *self {
            CoeffStrategy::AverageAll => observed,
            CoeffStrategy::LastN(n) => n.min(observed),
            CoeffStrategy::LastOne => 1.min(observed),
        }
    }
}

/// Per-request record of the layer sparsities observed so far, most recent
/// last. The engine appends one entry per completed layer, which keeps
/// scheduler decisions blind to layers that have not run yet.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct MonitorState {
    observed: Vec<f64>,
}

impl MonitorState {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, sparsity: f64) {
        debug_assert!((0.0..=1.0).contains(&sparsity));
        self.observed.push(sparsity);
    }

    pub fn count(&self) -> usize {
        self.observed.len()
    }

    pub fn observed(&self) -> &[f64] {
        &self.observed
    }
}

/// Predictor configuration shared by the dynamic scheduler.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PredictorConfig {
    pub strategy: CoeffStrategy,
    /// How effectively sparsity converts into real latency reduction on the
    /// target hardware; 1 on accelerators that skip both weight and
    /// activation zeros.
    pub alpha: f64,
    /// Clamp bounds for the coefficient under degenerate densities.
    pub gamma_min: f64,
    pub gamma_max: f64,
}

impl Default for PredictorConfig {
    fn default() -> Self {
        Self {
            strategy: CoeffStrategy::LastOne,
            alpha: 1.0,
            gamma_min: 0.05,
            gamma_max: 20.0,
        }
    }
}

pub const DEFAULT_LAST_N: usize = 3;

/// Coefficient plus a flag recording that the profile density over the
/// reference window was zero and the value was clamped instead of computed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Coefficient {
    pub gamma: f64,
    pub degenerate: bool,
}

/// Estimated-over-profiled density ratio for the layers selected by the
/// strategy. With no observations the static fallback gamma = 1 applies.
pub fn sparsity_coeff(
    monitor: &MonitorState,
    profile: &ModelProfile,
    strategy: CoeffStrategy,
    cfg: &PredictorConfig,
) -> Coefficient {
    let observed = monitor.count().min(profile.layer_count());
    let window = strategy.window(observed);
    if window == 0 {
        return Coefficient {
            gamma: 1.0,
            degenerate: false,
        };
    }
    let start = observed - window;
    let mut monitored_density = 0.0;
    let mut profile_density = 0.0;
    for j in start..observed {
        monitored_density += 1.0 - monitor.observed()[j];
        profile_density += profile.layer_avg_density(j);
    }
    if profile_density <= 0.0 {
        return Coefficient {
            gamma: cfg.gamma_max,
            degenerate: true,
        };
    }
    Coefficient {
        gamma: (monitored_density / profile_density).clamp(cfg.gamma_min, cfg.gamma_max),
        degenerate: false,
    }
}

/// `alpha * gamma * sum of average layer latencies from next_layer on`.
pub fn predict_remaining(profile: &ModelProfile, gamma: f64, next_layer: usize, alpha: f64) -> f64 {
    alpha * gamma * profile.remaining_avg_latency(next_layer)
}

/// Root-mean-square error of remaining-latency prediction over a pool.
///
/// For every sample, at every layer boundary j >= 1 the strategy predicts
/// the remaining latency from layers < j and is compared with the trace's
/// true remaining latency; both sides are normalized by the profile's
/// average total latency. Single-layer traces contribute their boundary 0
/// prediction, where the static fallback gamma = 1 applies.
pub fn eval_rmse(
    traces: &[SampleTrace],
    profiles: &ProfileStore,
    strategy: CoeffStrategy,
    alpha: f64,
) -> Result<f64> {
    let cfg = PredictorConfig {
        strategy,
        alpha,
        ..PredictorConfig::default()
    };
    let mut sum_sq = 0.0;
    let mut count = 0usize;
    for trace in traces {
        let profile = profiles.lookup(&trace.key)?;
        let norm = profile.avg_total_latency;
        if norm <= 0.0 {
            return Err(SimError::Validation(format!(
                "profile {} has non-positive average latency",
                trace.key
            )));
        }
        let layers = trace.layer_count();
        let boundaries: std::ops::Range<usize> = if layers >= 2 { 1..layers } else { 0..1 };
        let mut monitor = MonitorState::new();
        let mut next_boundary = boundaries.start;
        for j in 0..next_boundary {
            monitor.push(trace.layers[j].sparsity);
        }
        for j in boundaries {
            while next_boundary < j {
                monitor.push(trace.layers[next_boundary].sparsity);
                next_boundary += 1;
            }
            let coeff = sparsity_coeff(&monitor, profile, strategy, &cfg);
            let predicted = predict_remaining(profile, coeff.gamma, j, alpha);
            let truth = trace.remaining_latency(j);
            let err = (predicted - truth) / norm;
            sum_sq += err * err;
            count += 1;
        }
    }
    if count == 0 {
        return Err(SimError::EmptyInput("no traces to evaluate"));
    }
    Ok((sum_sq / count as f64).sqrt())
}

/// Per-model RMSE rows for the `rmse` report CSV.
pub fn eval_rmse_by_model(
    traces: &[SampleTrace],
    profiles: &ProfileStore,
    strategy: CoeffStrategy,
    alpha: f64,
) -> Result<Vec<(crate::workload::ModelPatternKey, f64)>> {
    let mut keys: Vec<_> = traces.iter().map(|t| t.key.clone()).collect();
    keys.sort();
    keys.dedup();
    let mut rows = Vec::with_capacity(keys.len());
    for key in keys {
        let subset: Vec<SampleTrace> = traces.iter().filter(|t| t.key == key).cloned().collect();
        rows.push((key, eval_rmse(&subset, profiles, strategy, alpha)?));
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::profile::build_profiles;
    use crate::workload::{LayerTrace, ModelPatternKey, SparsityPattern, SynthSpec};

    fn profile(latencies: &[f64], sparsities: &[f64]) -> ModelProfile {
        ModelProfile::new(
            ModelPatternKey::new("net_a", SparsityPattern::Dense),
            latencies.to_vec(),
            sparsities.to_vec(),
        )
        .unwrap()
    }

    fn monitor(values: &[f64]) -> MonitorState {
        let mut m = MonitorState::new();
        for &v in values {
            m.push(v);
        }
        m
    }

    #[test]
    fn coeff_identical_density_is_one() {
        let p = profile(&[1.0, 1.0], &[0.4, 0.4]);
        let cfg = PredictorConfig::default();
        let c = sparsity_coeff(&monitor(&[0.4]), &p, CoeffStrategy::LastOne, &cfg);
        assert_eq!(c.gamma, 1.0);
        assert!(!c.degenerate);
    }

    #[test]
    fn coeff_density_ratio() {
        // Monitored sparsity 0.7 vs profiled 0.4: densities 0.3 / 0.6.
        let p = profile(&[1.0, 1.0], &[0.4, 0.4]);
        let cfg = PredictorConfig::default();
        let c = sparsity_coeff(&monitor(&[0.7]), &p, CoeffStrategy::LastOne, &cfg);
        assert!((c.gamma - 0.5).abs() < 1e-15);
    }

    #[test]
    fn coeff_without_observations_falls_back_to_one() {
        let p = profile(&[1.0], &[0.4]);
        let cfg = PredictorConfig::default();
        for strategy in [CoeffStrategy::AverageAll, CoeffStrategy::LastN(3), CoeffStrategy::LastOne] {
            assert_eq!(sparsity_coeff(&monitor(&[]), &p, strategy, &cfg).gamma, 1.0);
        }
    }

    #[test]
    fn coeff_degenerate_profile_density_clamps() {
        let p = profile(&[1.0, 1.0], &[1.0, 1.0]);
        let cfg = PredictorConfig::default();
        let c = sparsity_coeff(&monitor(&[0.2]), &p, CoeffStrategy::LastOne, &cfg);
        assert_eq!(c.gamma, cfg.gamma_max);
        assert!(c.degenerate);
    }

    #[test]
    fn coeff_uniform_ratio_exact_for_all_strategies() {
        // Trace densities are exactly r times profile densities, so all
        // three strategies must return r.
        let p = profile(&[2.0, 2.0, 2.0, 2.0], &[0.5, 0.4, 0.6, 0.3]);
        let r = 0.75;
        let observed: Vec<f64> = p.layer_avg_sparsity.iter().map(|s| 1.0 - r * (1.0 - s)).collect();
        let m = monitor(&observed);
        let cfg = PredictorConfig::default();
        for strategy in [CoeffStrategy::AverageAll, CoeffStrategy::LastN(3), CoeffStrategy::LastOne] {
            let c = sparsity_coeff(&m, &p, strategy, &cfg);
            assert!((c.gamma - r).abs() < 1e-12, "{strategy:?} gave {}", c.gamma);
        }
    }

    #[test]
    fn predict_remaining_examples() {
        let p = profile(&[2.0, 4.0, 6.0], &[0.5, 0.5, 0.5]);
        assert_eq!(predict_remaining(&p, 1.0, 3, 1.0), 0.0);
        assert_eq!(predict_remaining(&p, 1.0, 0, 1.0), p.avg_total_latency);
        assert_eq!(predict_remaining(&p, 0.5, 1, 1.0), 5.0);
    }

    #[test]
    fn prediction_scale_invariance() {
        let p = profile(&[2.0, 4.0, 6.0], &[0.5, 0.4, 0.3]);
        let k = 7.5;
        let scaled = profile(&[2.0 * k, 4.0 * k, 6.0 * k], &[0.5, 0.4, 0.3]);
        let m = monitor(&[0.6, 0.2]);
        let cfg = PredictorConfig::default();
        for strategy in [CoeffStrategy::AverageAll, CoeffStrategy::LastN(2), CoeffStrategy::LastOne] {
            let g = sparsity_coeff(&m, &p, strategy, &cfg).gamma;
            let gs = sparsity_coeff(&m, &scaled, strategy, &cfg).gamma;
            assert_eq!(g, gs, "gamma must ignore latency scale");
            let a = predict_remaining(&p, g, 1, 1.0);
            let b = predict_remaining(&scaled, gs, 1, 1.0);
            assert!((b - k * a).abs() < 1e-9 * b.abs());
        }
    }

    #[test]
    fn higher_monitored_sparsity_never_raises_estimate() {
        let p = profile(&[1.0, 1.0, 1.0], &[0.5, 0.5, 0.5]);
        let cfg = PredictorConfig::default();
        let mut last = f64::INFINITY;
        for sparsity in [0.1, 0.3, 0.5, 0.7, 0.9] {
            let g = sparsity_coeff(&monitor(&[sparsity]), &p, CoeffStrategy::LastOne, &cfg).gamma;
            let est = predict_remaining(&p, g, 1, 1.0);
            assert!(est <= last + 1e-15);
            last = est;
        }
    }

    fn ratio_scaled_trace(p: &ModelProfile, r: f64, sample: &str) -> SampleTrace {
        let layers = (0..p.layer_count())
            .map(|j| {
                LayerTrace::new(
                    r * p.layer_avg_latency[j],
                    1.0 - r * p.layer_avg_density(j),
                )
                .unwrap()
            })
            .collect();
        SampleTrace::new(p.key.clone(), sample, layers).unwrap()
    }

    #[test]
    fn exact_on_uniform_ratio_traces() {
        // A trace whose densities and latencies are both r times the profile
        // is predicted exactly at every boundary by every strategy.
        let p = profile(&[1.0, 3.0, 2.0, 4.0], &[0.5, 0.3, 0.6, 0.4]);
        let cfg = PredictorConfig::default();
        for r in [0.25, 0.8, 1.0, 1.4] {
            let t = ratio_scaled_trace(&p, r, "s0");
            for j in 1..t.layer_count() {
                let m = monitor(&t.layers[..j].iter().map(|l| l.sparsity).collect::<Vec<_>>());
                for strategy in [CoeffStrategy::AverageAll, CoeffStrategy::LastN(3), CoeffStrategy::LastOne] {
                    let g = sparsity_coeff(&m, &p, strategy, &cfg).gamma;
                    let predicted = predict_remaining(&p, g, j, 1.0);
                    let truth = t.remaining_latency(j);
                    assert!(
                        (predicted - truth).abs() <= 1e-12 * truth,
                        "r={r} j={j} {strategy:?}: {predicted} vs {truth}"
                    );
                }
            }
        }
    }

    #[test]
    fn rmse_zero_when_traces_equal_profile() {
        let p = profile(&[1.0, 2.0, 3.0], &[0.5, 0.4, 0.3]);
        let t = ratio_scaled_trace(&p, 1.0, "s0");
        let store = ProfileStore::from_profiles([p]);
        for strategy in [CoeffStrategy::AverageAll, CoeffStrategy::LastN(3), CoeffStrategy::LastOne] {
            let rmse = eval_rmse(std::slice::from_ref(&t), &store, strategy, 1.0).unwrap();
            assert!(rmse.abs() < 1e-12, "{strategy:?} rmse {rmse}");
        }
    }

    #[test]
    fn rmse_single_layer_uses_static_fallback() {
        let p = profile(&[2.0], &[0.5]);
        let t = SampleTrace::new(p.key.clone(), "s0", vec![LayerTrace::new(3.0, 0.5).unwrap()]).unwrap();
        let store = ProfileStore::from_profiles([p]);
        // Prediction at boundary 0 with gamma = 1 is 2.0 against truth 3.0,
        // normalized by 2.0: error 0.5.
        let rmse = eval_rmse(std::slice::from_ref(&t), &store, CoeffStrategy::LastOne, 1.0).unwrap();
        assert!((rmse - 0.5).abs() < 1e-12);
    }

    #[test]
    fn rmse_errors_on_empty_input() {
        let store = ProfileStore::from_profiles([profile(&[1.0], &[0.5])]);
        assert!(eval_rmse(&[], &store, CoeffStrategy::LastOne, 1.0).is_err());
    }

    #[test]
    fn rmse_full_correlation_last_one_not_worse_than_last_n() {
        // At correlation 1 with uniform per-layer means every strategy sees
        // the same density ratio, so last-one cannot trail last-3.
        let spec = SynthSpec::uniform("net_a", SparsityPattern::DynamicAttention, 400, 10, 0.002, 0.5, 0.5, 1.0);
        let traces = crate::workload::synth_traces(&spec, 5).unwrap();
        let profiles = build_profiles(&traces).unwrap();
        let last_one = eval_rmse(&traces, &profiles, CoeffStrategy::LastOne, 1.0).unwrap();
        let last_n = eval_rmse(&traces, &profiles, CoeffStrategy::LastN(DEFAULT_LAST_N), 1.0).unwrap();
        assert!(
            last_one <= last_n + 1e-12,
            "last_one {last_one} vs last_n {last_n}"
        );
    }
}
