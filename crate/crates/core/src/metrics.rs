//! Evaluation metrics over completed runs: average normalized turnaround
//! time, SLO violation rate and system throughput, plus seed aggregation.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Result, SimError};
use crate::sim::RunRecord;

/// Mean over requests of turnaround / isolated latency. Dropped requests
/// never completed and are excluded; 1.0 is ideal.
pub fn compute_antt(records: &[RunRecord]) -> Result<f64> {
    let slowdowns: Vec<f64> = records.iter().filter_map(|r| r.slowdown()).collect();
    if slowdowns.is_empty() {
        return Err(SimError::EmptyInput("no completed records for ANTT"));
    }
    Ok(slowdowns.iter().sum::<f64>() / slowdowns.len() as f64)
}

/// Fraction of requests whose turnaround exceeded their SLO (dropped
/// requests count as violated).
pub fn compute_violation_rate(records: &[RunRecord]) -> Result<f64> {
    if records.is_empty() {
        return Err(SimError::EmptyInput("no records for violation rate"));
    }
    let violated = records.iter().filter(|r| r.violated).count();
    Ok(violated as f64 / records.len() as f64)
}

/// Violation rate the same records would have had under a different SLO
/// multiplier; the schedule itself is taken as fixed.
pub fn violation_rate_at(records: &[RunRecord], slo_multiplier: f64) -> Result<f64> {
    if records.is_empty() {
        return Err(SimError::EmptyInput("no records for violation rate"));
    }
    let violated = records
        .iter()
        .filter(|r| match r.turnaround {
            Some(t) => t > slo_multiplier * r.t_isol,
            None => true,
        })
        .count();
    Ok(violated as f64 / records.len() as f64)
}

/// Completed requests per second over the span from first arrival to last
/// completion.
pub fn compute_stp(records: &[RunRecord]) -> Result<f64> {
    let completed: Vec<&RunRecord> = records.iter().filter(|r| r.completion.is_some()).collect();
    if completed.is_empty() {
        return Err(SimError::EmptyInput("no completed records for STP"));
    }
    let first_arrival = records.iter().map(|r| r.arrival).fold(f64::INFINITY, f64::min);
    let last_completion = completed
        .iter()
        .filter_map(|r| r.completion)
        .fold(f64::NEG_INFINITY, f64::max);
    let span = last_completion - first_arrival;
    if span <= 0.0 {
        return Err(SimError::Validation(format!(
            "non-positive workload span {span}"
        )));
    }
    Ok(completed.len() as f64 / span)
}

/// All metrics for one (scheduler, seed) run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub seed: u64,
    pub antt: f64,
    pub violation_rate: f64,
    pub stp: f64,
    pub total_preemptions: u64,
    pub num_requests: usize,
}

impl MetricsReport {
    pub fn from_records(records: &[RunRecord], seed: u64) -> Result<Self> {
        Ok(Self {
            seed,
            antt: compute_antt(records)?,
            violation_rate: compute_violation_rate(records)?,
            stp: compute_stp(records)?,
            total_preemptions: records.iter().map(|r| r.preemptions as u64).sum(),
            num_requests: records.len(),
        })
    }
}

/// Mean and sample standard deviation of each metric across seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedSummary {
    pub seeds: usize,
    pub antt_mean: f64,
    pub antt_std: f64,
    pub violation_mean: f64,
    pub violation_std: f64,
    pub stp_mean: f64,
    pub stp_std: f64,
    pub preemptions_mean: f64,
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

pub fn aggregate_seeds(reports: &[MetricsReport]) -> Result<SeedSummary> {
    if reports.is_empty() {
        return Err(SimError::EmptyInput("no reports to aggregate"));
    }
    let antt: Vec<f64> = reports.iter().map(|r| r.antt).collect();
    let violation: Vec<f64> = reports.iter().map(|r| r.violation_rate).collect();
    let stp: Vec<f64> = reports.iter().map(|r| r.stp).collect();
    let preemptions: Vec<f64> = reports.iter().map(|r| r.total_preemptions as f64).collect();
    let (antt_mean, antt_std) = mean_std(&antt);
    let (violation_mean, violation_std) = mean_std(&violation);
    let (stp_mean, stp_std) = mean_std(&stp);
    let (preemptions_mean, _) = mean_std(&preemptions);
    Ok(SeedSummary {
        seeds: reports.len(),
        antt_mean,
        antt_std,
        violation_mean,
        violation_std,
        stp_mean,
        stp_std,
        preemptions_mean,
    })
}

/// One `summary.csv` row: a single (scheduler, cell, seed) simulation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub scheduler: String,
    pub slo_multiplier: f64,
    pub arrival_rate: f64,
    pub seed: u64,
    pub antt: f64,
    pub violation_rate: f64,
    pub stp: f64,
    pub preemptions: u64,
}

pub fn write_summary_csv(path: impl AsRef<Path>, rows: &[SummaryRow]) -> Result<()> {
    let mut writer = csv::Writer::from_path(path.as_ref())?;
    writer.write_record([
        "scheduler",
        "slo_multiplier",
        "arrival_rate",
        "seed",
        "antt",
        "violation_rate",
        "stp",
        "preemptions",
    ])?;
    for row in rows {
        writer.write_record([
            row.scheduler.clone(),
            format!("{}", row.slo_multiplier),
            format!("{}", row.arrival_rate),
            row.seed.to_string(),
            format!("{:.9}", row.antt),
            format!("{:.9}", row.violation_rate),
            format!("{:.9}", row.stp),
            row.preemptions.to_string(),
        ])?;
    }
    writer.flush()?;
    Ok(())
}

/// One `requests.csv` row per request of a run.
pub fn write_requests_csv(
    path: impl AsRef<Path>,
    context: &[(String, f64, f64, u64, &[RunRecord])],
) -> Result<()> {
    let mut writer = csv::Writer::from_path(path.as_ref())?;
    writer.write_record([
        "scheduler",
        "slo_multiplier",
        "arrival_rate",
        "seed",
        "request_id",
        "model",
        "pattern",
        "arrival",
        "completion",
        "t_isol",
        "turnaround",
        "violated",
        "preemptions",
        "dropped",
    ])?;
    for (scheduler, m_slo, rate, seed, records) in context {
        for r in *records {
            writer.write_record([
                scheduler.clone(),
                format!("{m_slo}"),
                format!("{rate}"),
                seed.to_string(),
                r.id.to_string(),
                r.key.model_name.clone(),
                r.key.pattern.as_str().to_string(),
                format!("{:.9}", r.arrival),
                r.completion.map_or(String::new(), |c| format!("{c:.9}")),
                format!("{:.9}", r.t_isol),
                r.turnaround.map_or(String::new(), |t| format!("{t:.9}")),
                (r.violated as u8).to_string(),
                r.preemptions.to_string(),
                (r.dropped as u8).to_string(),
            ])?;
        }
    }
    writer.flush()?;
    Ok(())
}
