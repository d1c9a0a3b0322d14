//! The per-seed experiment pipeline: split, train, calibrate, predict,
//! evaluate and audit.

use std::fs::File;
use std::io::BufReader;

use pllcp::datagen::{contaminate_instance_dependent, contaminate_random, generate_gaussian, train_supermodel};
use pllcp::eval::{AuditRow, MethodMetrics, ScoredSplit, SeedAccuracy};
use pllcp::io::{import_csv, load_idx_dataset, read_dataset};
use pllcp::train::{accuracy, erm_fit};
use pllcp::{CalibrationMethod, Network, PartialDataset, PredictionSet};
use rayon::prelude::*;

use crate::config::{ContaminationConfig, DatasetConfig, ExperimentConfig};
use crate::error::CliError;

/// Dataset after ingestion and contamination.
#[derive(Debug, Clone)]
pub struct PreparedData {
    /// Data before contamination, when contamination was applied.
    pub source: Option<PartialDataset>,
    pub data: PartialDataset,
    pub supermodel: Option<(Network, f64)>,
}

fn open(path: &std::path::Path) -> Result<BufReader<File>, CliError> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| CliError::Io(format!("cannot open {}: {e}", path.display())))
}

pub fn load_dataset(config: &DatasetConfig) -> Result<PartialDataset, CliError> {
    Ok(match config {
        DatasetConfig::Gaussian { .. } => {
            let spec = config.gaussian_spec().expect("gaussian config");
            generate_gaussian(&spec)?
        }
        DatasetConfig::File { path } => read_dataset(open(path)?)?,
        DatasetConfig::Idx { images, labels, limit } => load_idx_dataset(images, labels, *limit)?,
        DatasetConfig::Csv { path, has_truth } => import_csv(open(path)?, *has_truth)?.0,
    })
}

pub fn prepare(config: &ExperimentConfig) -> Result<PreparedData, CliError> {
    let base = load_dataset(&config.dataset)?;
    let needs_precise = |what: &str| {
        if base.is_precise() && base.is_oracle() {
            Ok(())
        } else {
            Err(CliError::Config(format!(
                "{what} contamination needs a precise dataset with true labels"
            )))
        }
    };
    match &config.contamination {
        ContaminationConfig::None => Ok(PreparedData {
            source: None,
            data: base,
            supermodel: None,
        }),
        ContaminationConfig::Random { p, seed } => {
            needs_precise("random")?;
            let data = contaminate_random(&base, *p, *seed)?;
            Ok(PreparedData {
                source: Some(base),
                data,
                supermodel: None,
            })
        }
        ContaminationConfig::Instance { seed, .. } => {
            needs_precise("instance-dependent")?;
            let sm_config = config.contamination.supermodel().expect("instance config");
            let sm = train_supermodel(&base, &sm_config)?;
            let data = contaminate_instance_dependent(&base, &sm.model, *seed)?;
            Ok(PreparedData {
                source: Some(base),
                data,
                supermodel: Some((sm.model, sm.train_accuracy)),
            })
        }
    }
}

/// Methods checked against the oracle score set whenever truths exist.
pub fn audit_methods(config: &ExperimentConfig) -> Vec<CalibrationMethod> {
    let mut methods = vec![
        CalibrationMethod::Max,
        CalibrationMethod::All,
        CalibrationMethod::Mean,
        CalibrationMethod::Min,
    ];
    for m in &config.methods {
        if !methods.contains(m) && !m.needs_oracle() {
            methods.push(*m);
        }
    }
    methods
}

#[derive(Debug, Clone)]
pub struct SeedResult {
    pub seed: u64,
    pub accuracy: Option<SeedAccuracy>,
    /// One entry per configured method; coverage is NaN without test truths.
    pub metrics: Vec<MethodMetrics>,
    pub predictions: Vec<(CalibrationMethod, Vec<PredictionSet>)>,
    /// Present when the calibration split carries true labels.
    pub audit: Option<Vec<AuditRow>>,
}

pub fn run_seed(config: &ExperimentConfig, data: &PartialDataset, seed: u64) -> Result<SeedResult, CliError> {
    let split = data.split(&config.split.with_seed(seed)?)?;
    let spec = config.model.spec(data.dim(), data.num_classes())?;
    let model = erm_fit(&split.train, &spec, &config.train.with_seed(seed))?.model;
    let scored = ScoredSplit::new(&split.calib, &split.test, &model)?;

    let mut metrics = Vec::with_capacity(config.methods.len());
    let mut predictions = Vec::with_capacity(config.methods.len());
    for &method in &config.methods {
        if method.needs_oracle() && !split.calib.is_oracle() {
            return Err(CliError::Config(format!(
                "method {method} needs true labels, which the dataset does not have"
            )));
        }
        let preds = scored.predict(method, config.epsilon)?;
        let m = match split.test.hidden_truths() {
            Some(truths) => pllcp::eval::metrics_of(method, config.epsilon, seed, &preds, truths)?,
            None => MethodMetrics {
                method,
                seed,
                epsilon: config.epsilon,
                coverage: f64::NAN,
                efficiency: pllcp::eval::efficiency(&preds),
                critical_score: preds.first().map_or(f64::NAN, |p| p.critical.value),
                n_test: preds.len(),
            },
        };
        metrics.push(m);
        predictions.push((method, preds));
    }

    let accuracy = match (split.train.is_oracle(), split.test.is_oracle()) {
        (true, true) => Some(SeedAccuracy {
            seed,
            train_accuracy: accuracy(&model, &split.train)?,
            test_accuracy: accuracy(&model, &split.test)?,
        }),
        _ => None,
    };
    let audit = if split.calib.is_oracle() && split.test.is_oracle() {
        Some(scored.audit(config.epsilon, &audit_methods(config))?)
    } else {
        None
    };
    Ok(SeedResult {
        seed,
        accuracy,
        metrics,
        predictions,
        audit,
    })
}

/// Runs every seed in parallel; results come back sorted by seed.
pub fn run_all(config: &ExperimentConfig, data: &PartialDataset) -> Result<Vec<SeedResult>, CliError> {
    let mut seeds = config.seeds.clone();
    seeds.sort_unstable();
    seeds.par_iter().map(|&seed| run_seed(config, data, seed)).collect()
}

/// A hard invariant that failed on some run.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct InvariantFailure {
    pub seed: u64,
    pub method: CalibrationMethod,
    pub detail: String,
}

pub fn invariant_failures(results: &[SeedResult]) -> Vec<InvariantFailure> {
    let mut out = Vec::new();
    for r in results {
        for row in r.audit.iter().flatten().filter(|row| row.hard_failure) {
            out.push(InvariantFailure {
                seed: r.seed,
                method: row.method,
                detail: format!(
                    "precondition {} held but q={} vs oracle q={}, containment {:.4}",
                    row.precondition.as_str(),
                    row.critical,
                    row.oracle_critical,
                    row.containment_fraction
                ),
            });
        }
    }
    out
}
