use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use pllcp::eval::{lemma_harness, AggregateReport, AuditRow, LemmaHarnessConfig, LemmaSummary};
use pllcp::io::write_dataset;
use pllcp::train::write_checkpoint;
use pllcp::PartialDataset;

use crate::config::ExperimentConfig;
use crate::error::CliError;
use crate::experiment::{invariant_failures, prepare, run_all, InvariantFailure, SeedResult};
use crate::report;

pub const PRECISE_FILE: &str = "dataset_precise.txt";
pub const PARTIAL_FILE: &str = "dataset_partial.txt";
pub const SUPERMODEL_FILE: &str = "supermodel.txt";
pub const LEMMA_FILE: &str = "lemma.json";

fn ensure_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::Io(format!("cannot create {}: {e}", dir.display())))
}

fn write_file(path: &Path, body: impl FnOnce(&mut BufWriter<File>) -> Result<(), CliError>) -> Result<(), CliError> {
    let f = File::create(path).map_err(|e| CliError::Io(format!("cannot write {}: {e}", path.display())))?;
    let mut w = BufWriter::new(f);
    body(&mut w)?;
    w.flush()?;
    Ok(())
}

fn save_dataset(path: &Path, d: &PartialDataset) -> Result<(), CliError> {
    write_file(path, |w| Ok(write_dataset(d, w)?))
}

#[derive(Debug, Clone)]
pub struct GenerateOutcome {
    pub files: Vec<PathBuf>,
    pub mean_candidate_set_size: f64,
    pub supermodel_train_accuracy: Option<f64>,
}

/// Writes the source dataset and, when contamination is configured, its
/// partially labeled variant.
pub fn cmd_generate(config: &ExperimentConfig, out: &mut dyn Write) -> Result<GenerateOutcome, CliError> {
    let prepared = prepare(config)?;
    let dir = &config.output_dir;
    ensure_dir(dir)?;
    let mut files = Vec::new();
    match &prepared.source {
        Some(source) => {
            let precise = dir.join(PRECISE_FILE);
            save_dataset(&precise, source)?;
            let partial = dir.join(PARTIAL_FILE);
            save_dataset(&partial, &prepared.data)?;
            files.extend([precise, partial]);
        }
        None => {
            let name = if prepared.data.is_precise() {
                PRECISE_FILE
            } else {
                PARTIAL_FILE
            };
            let path = dir.join(name);
            save_dataset(&path, &prepared.data)?;
            files.push(path);
        }
    }
    if let Some((model, acc)) = &prepared.supermodel {
        let path = dir.join(SUPERMODEL_FILE);
        write_file(&path, |w| Ok(write_checkpoint(model, w)?))?;
        files.push(path);
        writeln!(out, "supermodel train accuracy: {acc:.4}")?;
    }
    let css = prepared.data.mean_candidate_set_size();
    writeln!(out, "instances: {}", prepared.data.len())?;
    writeln!(out, "mean candidate set size: {css:.4}")?;
    for f in &files {
        writeln!(out, "wrote {}", f.display())?;
    }
    Ok(GenerateOutcome {
        files,
        mean_candidate_set_size: css,
        supermodel_train_accuracy: prepared.supermodel.map(|s| s.1),
    })
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub results: Vec<SeedResult>,
    pub report: AggregateReport,
    pub failures: Vec<InvariantFailure>,
}

/// Full experiment. Reports are written before invariant failures are
/// turned into an error.
pub fn cmd_run(config: &ExperimentConfig, out: &mut dyn Write) -> Result<RunOutcome, CliError> {
    let prepared = prepare(config)?;
    let results = run_all(config, &prepared.data)?;
    let agg = report::aggregate_results(&results);
    let failures = invariant_failures(&results);

    let dir = &config.output_dir;
    ensure_dir(dir)?;
    report::write_metrics(dir, &results)?;
    report::write_summary(dir, &agg)?;
    report::write_predictions(dir, &results, config.epsilon)?;
    let audit_rows: Vec<(u64, &AuditRow)> = results
        .iter()
        .flat_map(|r| r.audit.iter().flatten().map(move |row| (r.seed, row)))
        .collect();
    if !audit_rows.is_empty() {
        report::write_audit(dir, &audit_rows)?;
    }
    report::write_summary_json(dir, config, &prepared, &results, &agg, &failures)?;

    writeln!(
        out,
        "{} seeds, epsilon {}, mean candidate set size {:.4}",
        results.len(),
        config.epsilon,
        prepared.data.mean_candidate_set_size()
    )?;
    writeln!(out, "{:<10} {:>17} {:>17}", "method", "coverage", "efficiency")?;
    for m in &agg.methods {
        writeln!(
            out,
            "{:<10} {:>8.4} ± {:<6.4} {:>8.4} ± {:<6.4}",
            m.method.to_string(),
            m.coverage.mean,
            m.coverage.std,
            m.efficiency.mean,
            m.efficiency.std
        )?;
    }
    writeln!(out, "reports in {}", dir.display())?;

    let outcome = RunOutcome {
        results,
        report: agg,
        failures,
    };
    if let Some(f) = outcome.failures.first() {
        return Err(CliError::Invariant(format!(
            "{} hard failure(s); first: seed {} method {}: {}",
            outcome.failures.len(),
            f.seed,
            f.method,
            f.detail
        )));
    }
    Ok(outcome)
}

/// Per-seed precondition and containment table. Needs true labels.
pub fn cmd_audit(config: &ExperimentConfig, out: &mut dyn Write) -> Result<Vec<(u64, AuditRow)>, CliError> {
    let prepared = prepare(config)?;
    if !prepared.data.is_oracle() {
        return Err(pllcp::Error::NotOracle { operation: "audit" }.into());
    }
    let results = run_all(config, &prepared.data)?;
    let rows: Vec<(u64, AuditRow)> = results
        .iter()
        .flat_map(|r| r.audit.iter().flatten().map(move |row| (r.seed, row.clone())))
        .collect();
    let dir = &config.output_dir;
    ensure_dir(dir)?;
    let refs: Vec<(u64, &AuditRow)> = rows.iter().map(|(s, r)| (*s, r)).collect();
    report::write_audit(dir, &refs)?;

    writeln!(
        out,
        "{:>6} {:<10} {:<14} {:>8} {:>12} {:>12}  containment",
        "seed", "method", "precondition", "rate", "q", "q_oracle"
    )?;
    for (seed, row) in &rows {
        writeln!(
            out,
            "{:>6} {:<10} {:<14} {:>8} {:>12.6} {:>12.6}  {}",
            seed,
            row.method.to_string(),
            row.precondition.as_str(),
            row.precondition_rate.map_or("-".into(), |r| format!("{r:.4}")),
            row.critical,
            row.oracle_critical,
            if row.containment_held { "pass" } else { "fail" }
        )?;
    }
    let failures: Vec<_> = rows.iter().filter(|(_, r)| r.hard_failure).collect();
    if let Some((seed, row)) = failures.first() {
        return Err(CliError::Invariant(format!(
            "{} hard failure(s); first: seed {seed} method {}",
            failures.len(),
            row.method
        )));
    }
    Ok(rows)
}

/// Randomized rank-lemma trials. Without `explore_violations`, any failure
/// is an invariant violation.
pub fn cmd_lemma(
    harness: &LemmaHarnessConfig,
    out_dir: Option<&Path>,
    out: &mut dyn Write,
) -> Result<LemmaSummary, CliError> {
    let summary = lemma_harness(harness)?;
    writeln!(
        out,
        "lemma trials: {}, held: {}, failed: {}",
        summary.trials,
        summary.holds,
        summary.failures.len()
    )?;
    for f in summary.failures.iter().take(5) {
        writeln!(
            out,
            "  |E1|={} t_l={} t_r={} epsilon={:.4}: q {} -> {}",
            f.size, f.t_l, f.t_r, f.epsilon, f.q_before, f.q_after
        )?;
    }
    if let Some(dir) = out_dir {
        ensure_dir(dir)?;
        write_file(&dir.join(LEMMA_FILE), |w| {
            serde_json::to_writer_pretty(&mut *w, &summary)?;
            writeln!(w)?;
            Ok(())
        })?;
    }
    if !harness.explore_violations && !summary.failures.is_empty() {
        return Err(CliError::Invariant(format!(
            "rank lemma failed on {} of {} trials",
            summary.failures.len(),
            summary.trials
        )));
    }
    Ok(summary)
}
