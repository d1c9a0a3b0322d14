//! Inductive conformal prediction with set-valued calibration labels.
//!
//! Nonconformity of a pair `(x, y)` is `1 - f(x)_y`. With partially labeled
//! calibration data each instance carries a candidate set `S_j`, so the
//! per-instance scores have to be collapsed (or kept) in some way before the
//! critical score is taken:
//!
//! | method   | scores per calibration instance                 |
//! |----------|-------------------------------------------------|
//! | `Max`    | `1 - min_{y∈S} f(x)_y` (pessimistic)             |
//! | `All`    | `1 - f(x)_y` for every `y ∈ S`                   |
//! | `Mean`   | `1 - mean_{y∈S} f(x)_y`                          |
//! | `Min`    | `1 - max_{y∈S} f(x)_y` (optimistic baseline)     |
//! | `Mu(μ)`  | `μ · min-score + (1 - μ) · max-score`            |
//! | `Oracle` | `1 - f(x)_{y*}` with the hidden truth `y*`       |
//!
//! The critical score is the `⌈(1 + |E|)(1 - ε)⌉`-th smallest element of the
//! score multiset and the prediction set keeps every label whose predicted
//! probability is at least `1 - q`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::data::{CandidateSet, Instance, LabelId, PartialDataset, ProbabilityVector};
use crate::error::{Error, Result};
use crate::train::ProbabilisticClassifier;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CalibrationMethod {
    Max,
    All,
    Mean,
    Min,
    Mu(f64),
    /// Precise scores from the hidden truths. Diagnostics only.
    PreciseOracle,
}

impl CalibrationMethod {
    pub fn check(&self) -> Result<()> {
        match *self {
            CalibrationMethod::Mu(mu) if !(0.0..=1.0).contains(&mu) => {
                Err(Error::InvalidSpec(format!("mu must lie in [0, 1], got {mu}")))
            }
            _ => Ok(()),
        }
    }

    pub fn needs_oracle(&self) -> bool {
        matches!(self, CalibrationMethod::PreciseOracle)
    }
}

impl fmt::Display for CalibrationMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CalibrationMethod::Max => f.write_str("max"),
            CalibrationMethod::All => f.write_str("all"),
            CalibrationMethod::Mean => f.write_str("mean"),
            CalibrationMethod::Min => f.write_str("min"),
            CalibrationMethod::Mu(mu) => write!(f, "mu={mu}"),
            CalibrationMethod::PreciseOracle => f.write_str("oracle"),
        }
    }
}

impl FromStr for CalibrationMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let method = match s {
            "max" => CalibrationMethod::Max,
            "all" => CalibrationMethod::All,
            "mean" => CalibrationMethod::Mean,
            "min" => CalibrationMethod::Min,
            "oracle" => CalibrationMethod::PreciseOracle,
            _ => {
                let mu = s
                    .strip_prefix("mu=")
                    .ok_or_else(|| Error::InvalidSpec(format!("unknown calibration method {s:?}")))?;
                let mu: f64 = mu
                    .parse()
                    .map_err(|_| Error::InvalidSpec(format!("bad mu value in {s:?}")))?;
                CalibrationMethod::Mu(mu)
            }
        };
        method.check()?;
        Ok(method)
    }
}

impl Serialize for CalibrationMethod {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for CalibrationMethod {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Multiset of nonconformity scores in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreSet {
    scores: Vec<f64>,
    method: CalibrationMethod,
}

impl ScoreSet {
    /// Scores are clamped into `[0, 1]`.
    pub fn new(scores: Vec<f64>, method: CalibrationMethod) -> Result<Self> {
        if let Some(s) = scores.iter().find(|s| s.is_nan()) {
            return Err(Error::InvalidSpec(format!("score {s} is not a number")));
        }
        Ok(ScoreSet {
            scores: scores.into_iter().map(clamp_unit).collect(),
            method,
        })
    }

    pub fn scores(&self) -> &[f64] {
        &self.scores
    }

    pub fn method(&self) -> CalibrationMethod {
        self.method
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }
}

#[inline]
fn clamp_unit(v: f64) -> f64 {
    v.clamp(0.0, 1.0)
}

/// Largest (`max`) and smallest (`min`) nonconformity over a candidate set.
fn extreme_scores(set: &CandidateSet, probs: &ProbabilityVector) -> (f64, f64) {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for l in set.iter() {
        let p = probs.get(l);
        lo = lo.min(p);
        hi = hi.max(p);
    }
    (1.0 - hi, 1.0 - lo)
}

/// Appends the scores one calibration instance contributes under `method`.
pub fn instance_scores(
    set: &CandidateSet,
    probs: &ProbabilityVector,
    truth: Option<LabelId>,
    method: CalibrationMethod,
    out: &mut Vec<f64>,
) -> Result<()> {
    match method {
        CalibrationMethod::Max => out.push(extreme_scores(set, probs).1),
        CalibrationMethod::Min => out.push(extreme_scores(set, probs).0),
        CalibrationMethod::All => out.extend(set.iter().map(|l| 1.0 - probs.get(l))),
        CalibrationMethod::Mean => {
            let sum: f64 = set.iter().map(|l| probs.get(l)).sum();
            out.push(1.0 - sum / set.len() as f64);
        }
        CalibrationMethod::Mu(mu) => {
            let (min_score, max_score) = extreme_scores(set, probs);
            out.push(mu * min_score + (1.0 - mu) * max_score);
        }
        CalibrationMethod::PreciseOracle => {
            let t = truth.ok_or(Error::NotOracle {
                operation: "oracle score set",
            })?;
            out.push(1.0 - probs.get(t));
        }
    }
    Ok(())
}

/// Score set from precomputed calibration predictions.
pub fn score_set_from_probs(
    candidates: &[CandidateSet],
    truths: Option<&[LabelId]>,
    probs: &[ProbabilityVector],
    method: CalibrationMethod,
) -> Result<ScoreSet> {
    method.check()?;
    if candidates.is_empty() {
        return Err(Error::EmptyCalibration);
    }
    if candidates.len() != probs.len() {
        return Err(Error::LengthMismatch {
            left: candidates.len(),
            right: probs.len(),
        });
    }
    if method.needs_oracle() && truths.is_none() {
        return Err(Error::NotOracle {
            operation: "oracle score set",
        });
    }
    let mut scores = Vec::with_capacity(candidates.len());
    for (j, (set, p)) in candidates.iter().zip(probs).enumerate() {
        instance_scores(set, p, truths.map(|t| t[j]), method, &mut scores)?;
    }
    ScoreSet::new(scores, method)
}

/// Nonconformity scores of a calibration set under `method`.
pub fn score_set<C: ProbabilisticClassifier + ?Sized>(
    calib: &PartialDataset,
    f: &C,
    method: CalibrationMethod,
) -> Result<ScoreSet> {
    if calib.is_empty() {
        return Err(Error::EmptyCalibration);
    }
    if method.needs_oracle() && !calib.is_oracle() {
        return Err(Error::NotOracle {
            operation: "oracle score set",
        });
    }
    let probs = f.predict_all(calib)?;
    score_set_from_probs(calib.candidates(), calib.hidden_truths(), &probs, method)
}

/// Threshold selected from a score multiset.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CriticalScore {
    /// Selected score, or `+∞` when the rank exceeds the set size.
    pub value: f64,
    /// 1-based rank `⌈(1 + n)(1 - ε)⌉`.
    pub rank: usize,
    pub epsilon: f64,
}

impl CriticalScore {
    pub fn is_infinite(&self) -> bool {
        self.value.is_infinite()
    }

    /// Probability threshold `1 - q`.
    pub fn threshold(&self) -> f64 {
        1.0 - self.value
    }
}

pub fn check_epsilon(epsilon: f64) -> Result<()> {
    if epsilon > 0.0 && epsilon < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidEpsilon(epsilon))
    }
}

/// `⌈(1 + n)(1 - ε)⌉`.
///
/// Products within a relative `1e-12` of an integer are treated as that
/// integer, so that e.g. `n = 99, ε = 0.1` gives rank 90 rather than 91 from
/// the rounding error in `1 - 0.1`.
pub fn critical_rank(n: usize, epsilon: f64) -> usize {
    let x = (1 + n) as f64 * (1.0 - epsilon);
    let r = x.round();
    if (x - r).abs() <= 1e-12 * x.max(1.0) {
        r as usize
    } else {
        x.ceil() as usize
    }
}

/// Critical score of a raw score slice.
pub fn critical_score_of(scores: &[f64], epsilon: f64) -> Result<CriticalScore> {
    check_epsilon(epsilon)?;
    if scores.is_empty() {
        return Err(Error::EmptyScoreSet);
    }
    let rank = critical_rank(scores.len(), epsilon);
    let value = if rank > scores.len() {
        f64::INFINITY
    } else {
        let mut buf = scores.to_vec();
        let (_, v, _) = buf.select_nth_unstable_by(rank - 1, f64::total_cmp);
        *v
    };
    Ok(CriticalScore { value, rank, epsilon })
}

pub fn critical_score(e: &ScoreSet, epsilon: f64) -> Result<CriticalScore> {
    critical_score_of(e.scores(), epsilon)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PredictionSet {
    pub instance_id: usize,
    pub members: Vec<LabelId>,
    pub critical: CriticalScore,
}

impl PredictionSet {
    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn contains(&self, label: LabelId) -> bool {
        self.members.binary_search(&label).is_ok()
    }

    pub fn is_subset_of(&self, other: &PredictionSet) -> bool {
        self.members.iter().all(|&l| other.contains(l))
    }
}

/// `{ y : f(x)_y ≥ 1 - q }`; an infinite critical score admits every label.
pub fn prediction_set_from_probs(
    instance_id: usize,
    probs: &ProbabilityVector,
    critical: CriticalScore,
) -> PredictionSet {
    let members = if critical.is_infinite() {
        (0..probs.len()).map(LabelId::from).collect()
    } else {
        let threshold = critical.threshold();
        probs
            .as_slice()
            .iter()
            .enumerate()
            .filter(|(_, &p)| p >= threshold)
            .map(|(i, _)| LabelId::from(i))
            .collect()
    };
    PredictionSet {
        instance_id,
        members,
        critical,
    }
}

pub fn prediction_set<C: ProbabilisticClassifier + ?Sized>(
    x: &Instance,
    f: &C,
    e: &ScoreSet,
    epsilon: f64,
) -> Result<PredictionSet> {
    let critical = critical_score(e, epsilon)?;
    let probs = f.predict_proba(&x.features)?;
    Ok(prediction_set_from_probs(x.id, &probs, critical))
}

/// A calibrated predictor: classifier plus a fixed critical score.
#[derive(Debug, Clone)]
pub struct ConformalPredictor<C> {
    classifier: C,
    method: CalibrationMethod,
    critical: CriticalScore,
}

impl<C: ProbabilisticClassifier> ConformalPredictor<C> {
    pub fn calibrate(classifier: C, calib: &PartialDataset, method: CalibrationMethod, epsilon: f64) -> Result<Self> {
        check_epsilon(epsilon)?;
        let scores = score_set(calib, &classifier, method)?;
        let critical = critical_score(&scores, epsilon)?;
        Ok(ConformalPredictor {
            classifier,
            method,
            critical,
        })
    }

    pub fn method(&self) -> CalibrationMethod {
        self.method
    }

    pub fn critical(&self) -> CriticalScore {
        self.critical
    }

    pub fn predict(&self, x: &Instance) -> Result<PredictionSet> {
        let probs = self.classifier.predict_proba(&x.features)?;
        Ok(prediction_set_from_probs(x.id, &probs, self.critical))
    }

    pub fn predict_all(&self, d: &PartialDataset) -> Result<Vec<PredictionSet>> {
        d.instances().iter().map(|x| self.predict(x)).collect()
    }
}

/// Per-instance check of `f(x_j)_{y_j} ≥ 1 / |S_j|`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MeanConditionReport {
    pub per_instance: Vec<bool>,
    pub satisfied: bool,
}

impl MeanConditionReport {
    pub fn satisfaction_rate(&self) -> f64 {
        if self.per_instance.is_empty() {
            return 0.0;
        }
        self.per_instance.iter().filter(|&&b| b).count() as f64 / self.per_instance.len() as f64
    }
}

pub fn mean_condition_from_probs(
    candidates: &[CandidateSet],
    truths: &[LabelId],
    probs: &[ProbabilityVector],
) -> MeanConditionReport {
    let per_instance: Vec<bool> = candidates
        .iter()
        .zip(truths)
        .zip(probs)
        .map(|((s, &t), p)| p.get(t) >= 1.0 / s.len() as f64)
        .collect();
    let satisfied = per_instance.iter().all(|&b| b);
    MeanConditionReport {
        per_instance,
        satisfied,
    }
}

/// Precondition under which mean-score calibration dominates the oracle.
pub fn check_mean_condition<C: ProbabilisticClassifier + ?Sized>(
    calib: &PartialDataset,
    f: &C,
) -> Result<MeanConditionReport> {
    let truths = calib.truths("check_mean_condition")?;
    let probs = f.predict_all(calib)?;
    Ok(mean_condition_from_probs(calib.candidates(), truths, &probs))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AllConditionReport {
    /// `min(1/4, (n + K) / (K (1 + n)))`.
    pub epsilon_bound: f64,
    pub epsilon_ok: bool,
    /// Oracle critical score `q(E_1, ε)`.
    pub oracle_critical: f64,
    /// `q(E_1, ε) ≤ 0.5`.
    pub quantile_ok: bool,
    pub satisfied: bool,
}

/// Upper bound on ε under which the all-scores set dominates the oracle.
pub fn all_condition_epsilon_bound(n_calib: usize, num_classes: usize) -> f64 {
    let n = n_calib as f64;
    let k = num_classes as f64;
    0.25f64.min((n + k) / (k * (1.0 + n)))
}

pub fn all_condition_from_probs(
    candidates: &[CandidateSet],
    truths: &[LabelId],
    probs: &[ProbabilityVector],
    num_classes: usize,
    epsilon: f64,
) -> Result<AllConditionReport> {
    let oracle = score_set_from_probs(candidates, Some(truths), probs, CalibrationMethod::PreciseOracle)?;
    let q1 = critical_score(&oracle, epsilon)?.value;
    let epsilon_bound = all_condition_epsilon_bound(candidates.len(), num_classes);
    let epsilon_ok = epsilon <= epsilon_bound;
    let quantile_ok = q1 <= 0.5;
    Ok(AllConditionReport {
        epsilon_bound,
        epsilon_ok,
        oracle_critical: q1,
        quantile_ok,
        satisfied: epsilon_ok && quantile_ok,
    })
}

/// Preconditions under which all-scores calibration dominates the oracle.
pub fn check_all_condition<C: ProbabilisticClassifier + ?Sized>(
    calib: &PartialDataset,
    f: &C,
    epsilon: f64,
) -> Result<AllConditionReport> {
    check_epsilon(epsilon)?;
    let truths = calib.truths("check_all_condition")?;
    let probs = f.predict_all(calib)?;
    all_condition_from_probs(calib.candidates(), truths, &probs, calib.num_classes(), epsilon)
}
