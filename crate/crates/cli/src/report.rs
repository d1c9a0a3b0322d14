//! CSV and JSON report writers. Output is a pure function of its inputs, so
//! identical runs produce byte-identical files.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use pllcp::eval::{aggregate, AggregateReport, AuditRow, MethodMetrics, SeedAccuracy};
use serde::Serialize;

use crate::config::ExperimentConfig;
use crate::error::CliError;
use crate::experiment::{InvariantFailure, PreparedData, SeedResult};

pub const METRICS_FILE: &str = "metrics.csv";
pub const SUMMARY_FILE: &str = "summary.csv";
pub const PREDICTIONS_FILE: &str = "predictions.csv";
pub const AUDIT_FILE: &str = "audit.csv";
pub const SUMMARY_JSON: &str = "summary.json";

/// Fixed decimals; NaN becomes an empty field.
fn fixed(v: f64, decimals: usize) -> String {
    if v.is_nan() {
        String::new()
    } else if v.is_infinite() {
        if v > 0.0 { "inf" } else { "-inf" }.into()
    } else {
        format!("{v:.decimals$}")
    }
}

/// Shortest round-trip representation.
fn exact(v: f64) -> String {
    if v.is_nan() {
        String::new()
    } else if v.is_infinite() {
        if v > 0.0 { "inf" } else { "-inf" }.into()
    } else {
        v.to_string()
    }
}

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>, CliError> {
    let path = dir.join(name);
    File::create(&path)
        .map(BufWriter::new)
        .map_err(|e| CliError::Io(format!("cannot write {}: {e}", path.display())))
}

fn csv_writer(dir: &Path, name: &str) -> Result<csv::Writer<BufWriter<File>>, CliError> {
    Ok(csv::Writer::from_writer(create(dir, name)?))
}

pub fn write_metrics(dir: &Path, results: &[SeedResult]) -> Result<(), CliError> {
    let mut w = csv_writer(dir, METRICS_FILE)?;
    w.write_record([
        "seed",
        "method",
        "epsilon",
        "coverage",
        "efficiency",
        "critical_score",
        "n_test",
    ])?;
    for m in results.iter().flat_map(|r| &r.metrics) {
        w.write_record([
            m.seed.to_string(),
            m.method.to_string(),
            m.epsilon.to_string(),
            fixed(m.coverage, 4),
            fixed(m.efficiency, 4),
            exact(m.critical_score),
            m.n_test.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_summary(dir: &Path, report: &AggregateReport) -> Result<(), CliError> {
    let mut w = csv_writer(dir, SUMMARY_FILE)?;
    w.write_record([
        "method",
        "epsilon",
        "n_seeds",
        "coverage_mean",
        "coverage_std",
        "efficiency_mean",
        "efficiency_std",
    ])?;
    for m in &report.methods {
        w.write_record([
            m.method.to_string(),
            m.epsilon.to_string(),
            m.n_seeds.to_string(),
            fixed(m.coverage.mean, 4),
            fixed(m.coverage.std, 4),
            fixed(m.efficiency.mean, 4),
            fixed(m.efficiency.std, 4),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_predictions(dir: &Path, results: &[SeedResult], epsilon: f64) -> Result<(), CliError> {
    let mut w = csv_writer(dir, PREDICTIONS_FILE)?;
    w.write_record([
        "seed",
        "method",
        "epsilon",
        "instance_id",
        "critical_score",
        "prediction_set",
    ])?;
    for r in results {
        for (method, preds) in &r.predictions {
            for p in preds {
                let members = p.members.iter().map(|l| l.to_string()).collect::<Vec<_>>().join(";");
                w.write_record([
                    r.seed.to_string(),
                    method.to_string(),
                    epsilon.to_string(),
                    p.instance_id.to_string(),
                    exact(p.critical.value),
                    members,
                ])?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_audit(dir: &Path, rows: &[(u64, &AuditRow)]) -> Result<(), CliError> {
    let mut w = csv_writer(dir, AUDIT_FILE)?;
    w.write_record([
        "seed",
        "method",
        "precondition",
        "precondition_rate",
        "critical_score",
        "oracle_critical_score",
        "quantile_dominates",
        "containment",
        "containment_fraction",
        "hard_failure",
    ])?;
    for (seed, row) in rows {
        w.write_record([
            seed.to_string(),
            row.method.to_string(),
            row.precondition.as_str().to_string(),
            row.precondition_rate.map_or(String::new(), |r| fixed(r, 4)),
            exact(row.critical),
            exact(row.oracle_critical),
            row.quantile_dominates.to_string(),
            if row.containment_held { "pass" } else { "fail" }.to_string(),
            fixed(row.containment_fraction, 4),
            row.hard_failure.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Serialize)]
struct DatasetSummary {
    instances: usize,
    num_classes: usize,
    dim: usize,
    oracle: bool,
    mean_candidate_set_size: f64,
    supermodel_train_accuracy: Option<f64>,
}

#[derive(Debug, Serialize)]
struct InvariantSummary<'a> {
    passed: bool,
    audited_runs: usize,
    failures: &'a [InvariantFailure],
}

#[derive(Debug, Serialize)]
struct RunSummary<'a> {
    config: &'a ExperimentConfig,
    dataset: DatasetSummary,
    std_convention: &'static str,
    aggregate: &'a AggregateReport,
    accuracies: Vec<SeedAccuracy>,
    invariants: InvariantSummary<'a>,
}

pub fn aggregate_results(results: &[SeedResult]) -> AggregateReport {
    let metrics: Vec<MethodMetrics> = results.iter().flat_map(|r| r.metrics.iter().cloned()).collect();
    let accuracies: Vec<SeedAccuracy> = results.iter().filter_map(|r| r.accuracy).collect();
    aggregate(&metrics, &accuracies)
}

pub fn write_summary_json(
    dir: &Path,
    config: &ExperimentConfig,
    prepared: &PreparedData,
    results: &[SeedResult],
    report: &AggregateReport,
    failures: &[InvariantFailure],
) -> Result<(), CliError> {
    let d = &prepared.data;
    let summary = RunSummary {
        config,
        dataset: DatasetSummary {
            instances: d.len(),
            num_classes: d.num_classes(),
            dim: d.dim(),
            oracle: d.is_oracle(),
            mean_candidate_set_size: d.mean_candidate_set_size(),
            supermodel_train_accuracy: prepared.supermodel.as_ref().map(|s| s.1),
        },
        std_convention: "population (divide by number of seeds)",
        aggregate: report,
        accuracies: results.iter().filter_map(|r| r.accuracy).collect(),
        invariants: InvariantSummary {
            passed: failures.is_empty(),
            audited_runs: results.iter().filter(|r| r.audit.is_some()).count(),
            failures,
        },
    };
    let mut w = create(dir, SUMMARY_JSON)?;
    serde_json::to_writer_pretty(&mut w, &summary)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}
