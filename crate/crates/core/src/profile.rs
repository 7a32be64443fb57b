//! Latency/sparsity lookup tables keyed by model-pattern pair.
//!
//! Profiles hold the per-layer averages the schedulers estimate with; they
//! are built offline from representative traces and stay fixed for a run.

use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Result, SimError};
use crate::workload::{LayerTrace, ModelPatternKey, SampleTrace};

/// Per-layer average latency and sparsity for one model-pattern pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelProfile {
    pub key: ModelPatternKey,
    pub layer_avg_latency: Vec<f64>,
    pub layer_avg_sparsity: Vec<f64>,
    pub avg_total_latency: f64,
    /// `remaining_avg[j]` = sum of `layer_avg_latency[j..]`; one extra 0 entry
    /// at the end so a finished request reads an empty remainder.
    remaining_avg: Vec<f64>,
}

impl ModelProfile {
    pub fn new(key: ModelPatternKey, layer_avg_latency: Vec<f64>, layer_avg_sparsity: Vec<f64>) -> Result<Self> {
        if layer_avg_latency.is_empty() || layer_avg_latency.len() != layer_avg_sparsity.len() {
            return Err(SimError::Validation(format!(
                "profile for {key} needs equal, non-empty latency and sparsity lists"
            )));
        }
        let mut remaining_avg = vec![0.0; layer_avg_latency.len() + 1];
        for j in (0..layer_avg_latency.len()).rev() {
            remaining_avg[j] = remaining_avg[j + 1] + layer_avg_latency[j];
        }
        let avg_total_latency = remaining_avg[0];
        Ok(Self {
            key,
            layer_avg_latency,
            layer_avg_sparsity,
            avg_total_latency,
            remaining_avg,
        })
    }

    pub fn layer_count(&self) -> usize {
        self.layer_avg_latency.len()
    }

    /// Average latency of layers `[next_layer, L)`; zero once finished.
    pub fn remaining_avg_latency(&self, next_layer: usize) -> f64 {
        self.remaining_avg[next_layer.min(self.layer_count())]
    }

    pub fn layer_avg_density(&self, layer: usize) -> f64 {
        1.0 - self.layer_avg_sparsity[layer]
    }
}

/// Immutable map from model-pattern pair to its profile.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ProfileStore {
    profiles: HashMap<ModelPatternKey, ModelProfile>,
}

impl ProfileStore {
    pub fn from_profiles(profiles: impl IntoIterator<Item = ModelProfile>) -> Self {
        Self {
            profiles: profiles.into_iter().map(|p| (p.key.clone(), p)).collect(),
        }
    }

    /// O(1) lookup; a missing key is an explicit error so schedulers never
    /// silently fall back to a default estimate.
    pub fn lookup(&self, key: &ModelPatternKey) -> Result<&ModelProfile> {
        self.profiles
            .get(key)
            .ok_or_else(|| SimError::UnknownModel(key.to_string()))
    }

    pub fn contains(&self, key: &ModelPatternKey) -> bool {
        self.profiles.contains_key(key)
    }

    pub fn len(&self) -> usize {
        self.profiles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.profiles.is_empty()
    }

    /// Profiles sorted by key, for deterministic iteration order.
    pub fn sorted(&self) -> Vec<&ModelProfile> {
        let mut all: Vec<&ModelProfile> = self.profiles.values().collect();
        all.sort_by(|a, b| a.key.cmp(&b.key));
        all
    }
}

/// Builds per-key per-layer arithmetic means of latency and sparsity.
/// All traces of a key must share the layer count.
pub fn build_profiles(traces: &[SampleTrace]) -> Result<ProfileStore> {
    if traces.is_empty() {
        return Err(SimError::EmptyInput("cannot build profiles from no traces"));
    }
    struct Acc {
        latency: Vec<f64>,
        sparsity: Vec<f64>,
        count: usize,
    }
    let mut acc: HashMap<ModelPatternKey, Acc> = HashMap::new();
    for trace in traces {
        let entry = acc.entry(trace.key.clone()).or_insert_with(|| Acc {
            latency: vec![0.0; trace.layer_count()],
            sparsity: vec![0.0; trace.layer_count()],
            count: 0,
        });
        if entry.latency.len() != trace.layer_count() {
            return Err(SimError::Validation(format!(
                "trace {}:{} has {} layers but earlier traces of the same key have {}",
                trace.key,
                trace.sample_id,
                trace.layer_count(),
                entry.latency.len()
            )));
        }
        for (j, layer) in trace.layers.iter().enumerate() {
            entry.latency[j] += layer.latency;
            entry.sparsity[j] += layer.sparsity;
        }
        entry.count += 1;
    }
    let mut profiles = Vec::with_capacity(acc.len());
    for (key, acc) in acc {
        let n = acc.count as f64;
        profiles.push(ModelProfile::new(
            key,
            acc.latency.into_iter().map(|v| v / n).collect(),
            acc.sparsity.into_iter().map(|v| v / n).collect(),
        )?);
    }
    Ok(ProfileStore::from_profiles(profiles))
}

/// Exports profiles in the trace CSV schema with `sample_id` fixed to `avg`.
pub fn export_profiles(path: impl AsRef<Path>, store: &ProfileStore) -> Result<()> {
    let mut writer = csv::Writer::from_path(path.as_ref())?;
    writer.write_record(["model_name", "pattern", "sample_id", "layer_idx", "latency_s", "sparsity"])?;
    for profile in store.sorted() {
        for j in 0..profile.layer_count() {
            writer.write_record([
                profile.key.model_name.as_str(),
                profile.key.pattern.as_str(),
                "avg",
                &j.to_string(),
                &format!("{:.17e}", profile.layer_avg_latency[j]),
                &format!("{:.17e}", profile.layer_avg_sparsity[j]),
            ])?;
        }
    }
    writer.flush()?;
    Ok(())
}

/// Imports profiles written by [`export_profiles`].
pub fn import_profiles(path: impl AsRef<Path>) -> Result<ProfileStore> {
    let traces = crate::workload::load_traces(path, crate::workload::TraceFormat::Csv)?;
    let mut profiles = Vec::with_capacity(traces.len());
    for trace in traces {
        if trace.sample_id != "avg" {
            return Err(SimError::Validation(format!(
                "profile file rows must use sample_id `avg`, got {:?}",
                trace.sample_id
            )));
        }
        let (latency, sparsity): (Vec<f64>, Vec<f64>) =
            trace.layers.iter().map(|l: &LayerTrace| (l.latency, l.sparsity)).unzip();
        profiles.push(ModelProfile::new(trace.key, latency, sparsity)?);
    }
    Ok(ProfileStore::from_profiles(profiles))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::workload::{synth_traces, SparsityPattern, SynthSpec};

    fn trace(model: &str, pattern: SparsityPattern, sample: &str, layers: &[(f64, f64)]) -> SampleTrace {
        SampleTrace::new(
            ModelPatternKey::new(model, pattern),
            sample,
            layers
                .iter()
                .map(|&(lat, sp)| LayerTrace::new(lat, sp).unwrap())
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn per_layer_means() {
        let traces = vec![
            trace("net_a", SparsityPattern::Dense, "s0", &[(1.0, 0.2), (2.0, 0.4)]),
            trace("net_a", SparsityPattern::Dense, "s1", &[(3.0, 0.6), (4.0, 0.8)]),
        ];
        let store = build_profiles(&traces).unwrap();
        let p = store.lookup(&traces[0].key).unwrap();
        assert_eq!(p.layer_avg_latency, vec![2.0, 3.0]);
        assert_eq!(p.layer_avg_sparsity, vec![0.4, 0.6]);
        assert_eq!(p.avg_total_latency, 5.0);
        assert_eq!(p.remaining_avg_latency(0), 5.0);
        assert_eq!(p.remaining_avg_latency(1), 3.0);
        assert_eq!(p.remaining_avg_latency(2), 0.0);
    }

    #[test]
    fn single_sample_profile_equals_sample() {
        let t = trace("net_a", SparsityPattern::Channelwise, "s0", &[(1.5, 0.1), (0.5, 0.9)]);
        let store = build_profiles(std::slice::from_ref(&t)).unwrap();
        let p = store.lookup(&t.key).unwrap();
        assert_eq!(p.layer_avg_latency, vec![1.5, 0.5]);
        assert_eq!(p.layer_avg_sparsity, vec![0.1, 0.9]);
    }

    #[test]
    fn profile_matches_brute_force_recomputation() {
        let spec = SynthSpec::uniform("net_a", SparsityPattern::DynamicAttention, 100, 6, 0.003, 0.5, 0.4, 0.7);
        let traces = synth_traces(&spec, 31).unwrap();
        let store = build_profiles(&traces).unwrap();
        let p = store.lookup(&spec.key()).unwrap();
        // Independent recomputation, looping per layer rather than per trace.
        for j in 0..6 {
            let mut lat = 0.0;
            let mut sp = 0.0;
            for t in &traces {
                lat += t.layers[j].latency;
                sp += t.layers[j].sparsity;
            }
            lat /= traces.len() as f64;
            sp /= traces.len() as f64;
            assert!((p.layer_avg_latency[j] - lat).abs() < 1e-12);
            assert!((p.layer_avg_sparsity[j] - sp).abs() < 1e-12);
        }
    }

    #[test]
    fn missing_key_is_unknown_model() {
        let t = trace("net_a", SparsityPattern::Dense, "s0", &[(1.0, 0.0)]);
        let store = build_profiles(std::slice::from_ref(&t)).unwrap();
        let err = store
            .lookup(&ModelPatternKey::new("net_b", SparsityPattern::Dense))
            .unwrap_err();
        assert!(matches!(err, SimError::UnknownModel(_)));
    }

    #[test]
    fn patterns_keep_distinct_profiles() {
        let traces = vec![
            trace("net_a", SparsityPattern::PointwiseRandom, "s0", &[(1.0, 0.2)]),
            trace("net_a", SparsityPattern::Channelwise, "s0", &[(9.0, 0.8)]),
        ];
        let store = build_profiles(&traces).unwrap();
        let a = store.lookup(&traces[0].key).unwrap();
        let b = store.lookup(&traces[1].key).unwrap();
        assert_ne!(a.avg_total_latency, b.avg_total_latency);
        assert_ne!(a.layer_avg_sparsity, b.layer_avg_sparsity);
    }

    #[test]
    fn inconsistent_layer_counts_rejected() {
        let traces = vec![
            trace("net_a", SparsityPattern::Dense, "s0", &[(1.0, 0.2)]),
            trace("net_a", SparsityPattern::Dense, "s1", &[(1.0, 0.2), (1.0, 0.2)]),
        ];
        assert!(build_profiles(&traces).is_err());
        assert!(build_profiles(&[]).is_err());
    }

    #[test]
    fn build_is_permutation_invariant() {
        let spec = SynthSpec::uniform("net_a", SparsityPattern::BlockNM, 20, 3, 1.0, 0.4, 0.3, 0.5);
        let traces = synth_traces(&spec, 17).unwrap();
        let mut reversed = traces.clone();
        reversed.reverse();
        let a = build_profiles(&traces).unwrap();
        let b = build_profiles(&reversed).unwrap();
        let (pa, pb) = (a.lookup(&spec.key()).unwrap(), b.lookup(&spec.key()).unwrap());
        for j in 0..3 {
            assert!((pa.layer_avg_latency[j] - pb.layer_avg_latency[j]).abs() < 1e-12);
            assert!((pa.layer_avg_sparsity[j] - pb.layer_avg_sparsity[j]).abs() < 1e-12);
        }
    }

    #[test]
    fn export_import_round_trip() {
        let spec = SynthSpec::uniform("net_a", SparsityPattern::Dense, 10, 4, 0.5, 0.3, 0.2, 0.9);
        let store = build_profiles(&synth_traces(&spec, 1).unwrap()).unwrap();
        let f = tempfile::NamedTempFile::new().unwrap();
        export_profiles(f.path(), &store).unwrap();
        let loaded = import_profiles(f.path()).unwrap();
        assert_eq!(store, loaded);
    }
}
