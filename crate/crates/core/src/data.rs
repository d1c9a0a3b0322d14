//! Core domain types: labels, candidate sets, partially labeled datasets,
//! probability vectors and train/calibration/test splits.
//!
//! Labels are dense integer ids in `[0, K)`. A dataset in *oracle mode*
//! additionally carries the hidden ground truth for each instance; every
//! operation that needs it refuses non-oracle data with [`Error::NotOracle`].

use std::fmt;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Absolute tolerance on the sum of a probability vector.
pub const PROBABILITY_SUM_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct LabelId(pub u32);

impl LabelId {
    #[inline]
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl From<usize> for LabelId {
    fn from(v: usize) -> Self {
        LabelId(v as u32)
    }
}

impl fmt::Display for LabelId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Set of candidate labels observed for one instance, stored sorted and
/// without duplicates.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct CandidateSet {
    members: Vec<LabelId>,
}

impl CandidateSet {
    /// Validated constructor: nonempty and all members below `num_classes`.
    pub fn new<I>(labels: I, num_classes: usize) -> Result<Self>
    where
        I: IntoIterator<Item = LabelId>,
    {
        let set = Self::from_labels(labels);
        if set.is_empty() {
            return Err(Error::InvalidSpec("candidate set is empty".into()));
        }
        if let Some(bad) = set.members.iter().find(|l| l.index() >= num_classes) {
            return Err(Error::InvalidSpec(format!(
                "label {bad} out of range for K={num_classes}"
            )));
        }
        Ok(set)
    }

    /// Sorts and deduplicates without range checks. Emptiness and bounds are
    /// reported by [`PartialDataset::validate`].
    pub fn from_labels<I>(labels: I) -> Self
    where
        I: IntoIterator<Item = LabelId>,
    {
        let mut members: Vec<LabelId> = labels.into_iter().collect();
        members.sort_unstable();
        members.dedup();
        CandidateSet { members }
    }

    pub fn singleton(label: LabelId) -> Self {
        CandidateSet { members: vec![label] }
    }

    /// The full label set `{0, .., K-1}`.
    pub fn full(num_classes: usize) -> Self {
        CandidateSet {
            members: (0..num_classes).map(LabelId::from).collect(),
        }
    }

    pub fn members(&self) -> &[LabelId] {
        &self.members
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn contains(&self, label: LabelId) -> bool {
        self.members.binary_search(&label).is_ok()
    }

    pub fn iter(&self) -> impl Iterator<Item = LabelId> + '_ {
        self.members.iter().copied()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Instance {
    pub id: usize,
    pub features: Vec<f64>,
}

/// A single problem found by [`PartialDataset::validate`].
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    LengthMismatch { instances: usize, candidates: usize },
    TruthLengthMismatch { instances: usize, truths: usize },
    TooFewClasses(usize),
    EmptyCandidateSet(usize),
    LabelOutOfRange { index: usize, label: LabelId },
    TruthOutOfRange { index: usize, label: LabelId },
    TruthNotInCandidates { index: usize, label: LabelId },
    FeatureDimension { index: usize, expected: usize, got: usize },
    NonFiniteFeature(usize),
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::LengthMismatch { instances, candidates } => {
                write!(f, "{instances} instances but {candidates} candidate sets")
            }
            Violation::TruthLengthMismatch { instances, truths } => {
                write!(f, "{instances} instances but {truths} hidden truths")
            }
            Violation::TooFewClasses(k) => write!(f, "num_classes {k} < 2"),
            Violation::EmptyCandidateSet(i) => write!(f, "empty candidate set @{i}"),
            Violation::LabelOutOfRange { index, label } => {
                write!(f, "candidate label {label} out of range @{index}")
            }
            Violation::TruthOutOfRange { index, label } => {
                write!(f, "hidden truth {label} out of range @{index}")
            }
            Violation::TruthNotInCandidates { index, label } => {
                write!(f, "hidden truth {label} not in candidate set @{index}")
            }
            Violation::FeatureDimension { index, expected, got } => {
                write!(f, "feature dimension {got} != {expected} @{index}")
            }
            Violation::NonFiniteFeature(i) => write!(f, "non-finite feature @{i}"),
        }
    }
}

/// Feature matrix plus aligned candidate sets; optionally the hidden truths
/// (oracle mode).
#[derive(Debug, Clone, PartialEq)]
pub struct PartialDataset {
    instances: Vec<Instance>,
    candidates: Vec<CandidateSet>,
    hidden_truths: Option<Vec<LabelId>>,
    num_classes: usize,
    dim: usize,
}

impl PartialDataset {
    /// Builds a dataset and rejects it if [`validate`](Self::validate) finds
    /// any violation.
    pub fn new(
        instances: Vec<Instance>,
        candidates: Vec<CandidateSet>,
        hidden_truths: Option<Vec<LabelId>>,
        num_classes: usize,
    ) -> Result<Self> {
        let d = Self::from_parts_unchecked(instances, candidates, hidden_truths, num_classes);
        let violations = d.validate();
        if violations.is_empty() {
            Ok(d)
        } else {
            Err(Error::InvalidDataset(violations))
        }
    }

    /// Builds a dataset without validation. Useful for diagnostics on
    /// possibly malformed input.
    pub fn from_parts_unchecked(
        instances: Vec<Instance>,
        candidates: Vec<CandidateSet>,
        hidden_truths: Option<Vec<LabelId>>,
        num_classes: usize,
    ) -> Self {
        let dim = instances.first().map_or(0, |i| i.features.len());
        PartialDataset {
            instances,
            candidates,
            hidden_truths,
            num_classes,
            dim,
        }
    }

    /// Precise oracle dataset: every candidate set is the singleton truth.
    pub fn precise(instances: Vec<Instance>, truths: Vec<LabelId>, num_classes: usize) -> Result<Self> {
        let candidates = truths.iter().map(|&t| CandidateSet::singleton(t)).collect();
        Self::new(instances, candidates, Some(truths), num_classes)
    }

    /// Checks every structural invariant and returns the violations found.
    /// An empty list means the dataset is valid.
    pub fn validate(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        let n = self.instances.len();
        if self.num_classes < 2 {
            out.push(Violation::TooFewClasses(self.num_classes));
        }
        if self.candidates.len() != n {
            out.push(Violation::LengthMismatch {
                instances: n,
                candidates: self.candidates.len(),
            });
        }
        for (i, inst) in self.instances.iter().enumerate() {
            if inst.features.len() != self.dim {
                out.push(Violation::FeatureDimension {
                    index: i,
                    expected: self.dim,
                    got: inst.features.len(),
                });
            }
            if inst.features.iter().any(|v| !v.is_finite()) {
                out.push(Violation::NonFiniteFeature(i));
            }
        }
        for (i, s) in self.candidates.iter().enumerate() {
            if s.is_empty() {
                out.push(Violation::EmptyCandidateSet(i));
            }
            for l in s.iter().filter(|l| l.index() >= self.num_classes) {
                out.push(Violation::LabelOutOfRange { index: i, label: l });
            }
        }
        if let Some(truths) = &self.hidden_truths {
            if truths.len() != n {
                out.push(Violation::TruthLengthMismatch {
                    instances: n,
                    truths: truths.len(),
                });
            }
            for (i, (&t, s)) in truths.iter().zip(&self.candidates).enumerate() {
                if t.index() >= self.num_classes {
                    out.push(Violation::TruthOutOfRange { index: i, label: t });
                } else if !s.contains(t) {
                    out.push(Violation::TruthNotInCandidates { index: i, label: t });
                }
            }
        }
        out
    }

    pub fn len(&self) -> usize {
        self.instances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instances.is_empty()
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn instances(&self) -> &[Instance] {
        &self.instances
    }

    pub fn candidates(&self) -> &[CandidateSet] {
        &self.candidates
    }

    pub fn is_oracle(&self) -> bool {
        self.hidden_truths.is_some()
    }

    /// Hidden truths, or [`Error::NotOracle`] naming the caller.
    pub fn truths(&self, operation: &'static str) -> Result<&[LabelId]> {
        self.hidden_truths.as_deref().ok_or(Error::NotOracle { operation })
    }

    pub fn hidden_truths(&self) -> Option<&[LabelId]> {
        self.hidden_truths.as_deref()
    }

    /// True when every candidate set is a singleton.
    pub fn is_precise(&self) -> bool {
        self.candidates.iter().all(|s| s.len() == 1)
    }

    pub fn mean_candidate_set_size(&self) -> f64 {
        if self.candidates.is_empty() {
            return 0.0;
        }
        let total: usize = self.candidates.iter().map(CandidateSet::len).sum();
        total as f64 / self.candidates.len() as f64
    }

    /// Same instances and truths with replacement candidate sets.
    pub fn with_candidates(&self, candidates: Vec<CandidateSet>) -> Result<Self> {
        Self::new(
            self.instances.clone(),
            candidates,
            self.hidden_truths.clone(),
            self.num_classes,
        )
    }

    /// Copy without the hidden truths.
    pub fn without_truths(&self) -> Self {
        PartialDataset {
            hidden_truths: None,
            ..self.clone()
        }
    }

    /// Sub-dataset made of the given row indices (in that order). Instance
    /// ids are preserved.
    pub fn subset(&self, indices: &[usize]) -> Self {
        PartialDataset {
            instances: indices.iter().map(|&i| self.instances[i].clone()).collect(),
            candidates: indices.iter().map(|&i| self.candidates[i].clone()).collect(),
            hidden_truths: self
                .hidden_truths
                .as_ref()
                .map(|t| indices.iter().map(|&i| t[i]).collect()),
            num_classes: self.num_classes,
            dim: self.dim,
        }
    }

    /// Partitions the dataset into train, calibration and test parts.
    ///
    /// Calibration and test sizes are `round(n * fraction)`, training takes
    /// the remainder. The permutation depends only on `spec.seed`.
    pub fn split(&self, spec: &SplitSpec) -> Result<SplitDatasets> {
        let idx = spec.partition(self.len())?;
        Ok(SplitDatasets {
            train: self.subset(&idx.train),
            calib: self.subset(&idx.calib),
            test: self.subset(&idx.test),
        })
    }
}

#[derive(Debug, Clone)]
pub struct SplitDatasets {
    pub train: PartialDataset,
    pub calib: PartialDataset,
    pub test: PartialDataset,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train_fraction: f64,
    pub calib_fraction: f64,
    pub test_fraction: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitIndices {
    pub train: Vec<usize>,
    pub calib: Vec<usize>,
    pub test: Vec<usize>,
}

impl SplitSpec {
    pub fn new(train: f64, calib: f64, test: f64, seed: u64) -> Result<Self> {
        let s = SplitSpec {
            train_fraction: train,
            calib_fraction: calib,
            test_fraction: test,
            seed,
        };
        s.check()?;
        Ok(s)
    }

    pub fn check(&self) -> Result<()> {
        let f = [self.train_fraction, self.calib_fraction, self.test_fraction];
        if f.iter().any(|&v| !(v > 0.0 && v.is_finite())) {
            return Err(Error::InvalidSplit(format!("fractions must be positive: {f:?}")));
        }
        let sum: f64 = f.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidSplit(format!("fractions sum to {sum}, not 1")));
        }
        Ok(())
    }

    /// Seeded index partition of `0..n`.
    pub fn partition(&self, n: usize) -> Result<SplitIndices> {
        self.check()?;
        let n_calib = (n as f64 * self.calib_fraction).round() as usize;
        let n_test = (n as f64 * self.test_fraction).round() as usize;
        let n_train = n.saturating_sub(n_calib + n_test);
        for (name, size) in [("train", n_train), ("calib", n_calib), ("test", n_test)] {
            if size == 0 {
                return Err(Error::EmptySplit(format!("{name} partition of n={n} is empty")));
            }
        }
        let mut perm: Vec<usize> = (0..n).collect();
        perm.shuffle(&mut ChaCha8Rng::seed_from_u64(self.seed));
        let calib = perm[..n_calib].to_vec();
        let test = perm[n_calib..n_calib + n_test].to_vec();
        let train = perm[n_calib + n_test..].to_vec();
        Ok(SplitIndices { train, calib, test })
    }
}

/// Predicted class distribution for one instance.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbabilityVector(Vec<f64>);

impl ProbabilityVector {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::InvalidProbability("empty vector".into()));
        }
        if let Some(p) = probs.iter().find(|p| !(p.is_finite() && **p >= 0.0)) {
            return Err(Error::InvalidProbability(format!("entry {p} is not a probability")));
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > PROBABILITY_SUM_TOLERANCE {
            return Err(Error::InvalidProbability(format!("entries sum to {sum}")));
        }
        Ok(ProbabilityVector(probs))
    }

    /// Numerically stable softmax.
    pub fn softmax(logits: &[f64]) -> Self {
        ProbabilityVector(softmax(logits))
    }

    pub fn uniform(k: usize) -> Self {
        ProbabilityVector(vec![1.0 / k as f64; k])
    }

    #[inline]
    pub fn get(&self, label: LabelId) -> f64 {
        self.0[label.index()]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Most probable label, lowest id on ties.
    pub fn argmax(&self) -> LabelId {
        let mut best = 0;
        for (i, &p) in self.0.iter().enumerate() {
            if p > self.0[best] {
                best = i;
            }
        }
        LabelId::from(best)
    }
}

pub(crate) fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut out: Vec<f64> = logits.iter().map(|&z| (z - max).exp()).collect();
    let sum: f64 = out.iter().sum();
    for v in &mut out {
        *v /= sum;
    }
    out
}
