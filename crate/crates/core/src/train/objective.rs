//! Training objectives for partially labeled data.
//!
//! Both objectives use cross-entropy as the base loss. The optimistic
//! superset loss takes the minimum over the candidate set, which for
//! cross-entropy is attained at the candidate with the highest predicted
//! probability. The progressive objective is a weighted cross-entropy over
//! the candidate set whose weights are re-estimated from the model.

use serde::{Deserialize, Serialize};

use crate::data::{CandidateSet, LabelId, ProbabilityVector};
use crate::train::model::{probs_from_acts, Network};

/// Probabilities are clamped from below before taking logarithms.
pub const LOG_CLAMP: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Loss {
    OptimisticSuperset,
    ProgressiveWeighting,
}

#[inline]
fn neg_log(p: f64) -> f64 {
    -p.max(LOG_CLAMP).ln()
}

/// In-set label with the highest probability; lowest id wins ties.
pub fn best_candidate(set: &CandidateSet, probs: &[f64]) -> LabelId {
    let mut members = set.iter();
    let mut best = members.next().expect("candidate set is nonempty");
    for l in members {
        if probs[l.index()] > probs[best.index()] {
            best = l;
        }
    }
    best
}

/// `min_{y in S} -log p_y`, with the logarithm clamped at `1e-12`.
pub fn optimistic_superset_loss(set: &CandidateSet, probs: &ProbabilityVector) -> f64 {
    neg_log(probs.get(best_candidate(set, probs.as_slice())))
}

/// Per-instance weights over the candidate set, aligned with
/// [`CandidateSet::members`]. Mass outside the set is implicitly zero.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelWeights {
    weights: Vec<Vec<f64>>,
}

impl LabelWeights {
    /// Uniform weights over each candidate set.
    pub fn uniform(candidates: &[CandidateSet]) -> Self {
        LabelWeights {
            weights: candidates.iter().map(|s| vec![1.0 / s.len() as f64; s.len()]).collect(),
        }
    }

    pub fn from_raw(weights: Vec<Vec<f64>>) -> Self {
        LabelWeights { weights }
    }

    pub fn get(&self, i: usize) -> &[f64] {
        &self.weights[i]
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    /// Dense weight vector over all `K` labels for instance `i`.
    pub fn dense(&self, i: usize, set: &CandidateSet, num_classes: usize) -> Vec<f64> {
        let mut out = vec![0.0; num_classes];
        for (l, w) in set.iter().zip(&self.weights[i]) {
            out[l.index()] = *w;
        }
        out
    }

    /// True if every row is a distribution over its candidate set.
    pub fn is_valid(&self, candidates: &[CandidateSet], tol: f64) -> bool {
        self.weights.len() == candidates.len()
            && self.weights.iter().zip(candidates).all(|(w, s)| {
                w.len() == s.len()
                    && w.iter().all(|&v| v >= 0.0 && v.is_finite())
                    && (w.iter().sum::<f64>() - 1.0).abs() <= tol
            })
    }
}

/// One disambiguation step: `w_{i,y} ∝ p_i(y)` for `y ∈ S_i`.
///
/// Instances whose in-set probabilities are all zero keep their previous
/// weights.
pub fn progressive_reweight(
    weights: &LabelWeights,
    candidates: &[CandidateSet],
    probs: &[ProbabilityVector],
) -> LabelWeights {
    let rows = candidates
        .iter()
        .zip(probs)
        .enumerate()
        .map(|(i, (set, p))| {
            let raw: Vec<f64> = set.iter().map(|l| p.get(l)).collect();
            let total: f64 = raw.iter().sum();
            if total > 0.0 && total.is_finite() {
                raw.into_iter().map(|v| v / total).collect()
            } else {
                weights.get(i).to_vec()
            }
        })
        .collect();
    LabelWeights { weights: rows }
}

/// Supervision for one training instance.
#[derive(Debug, Clone, Copy)]
pub enum Target<'a> {
    /// Optimistic superset loss over the set.
    Superset(&'a CandidateSet),
    /// Weighted cross-entropy; weights aligned with the set's members.
    Weighted { set: &'a CandidateSet, weights: &'a [f64] },
}

impl Target<'_> {
    /// Loss value and the dense target distribution `t` such that the
    /// gradient w.r.t. the logits is `p - t`.
    fn loss_and_target(&self, probs: &[f64]) -> (f64, Vec<f64>) {
        let mut t = vec![0.0; probs.len()];
        match *self {
            Target::Superset(set) => {
                let y = best_candidate(set, probs);
                t[y.index()] = 1.0;
                (neg_log(probs[y.index()]), t)
            }
            Target::Weighted { set, weights } => {
                let mut loss = 0.0;
                for (l, &w) in set.iter().zip(weights) {
                    t[l.index()] = w;
                    loss += w * neg_log(probs[l.index()]);
                }
                (loss, t)
            }
        }
    }
}

/// Mean loss over a batch, without regularization.
pub fn batch_loss(net: &Network, batch: &[(&[f64], Target<'_>)]) -> f64 {
    let total: f64 = batch
        .iter()
        .map(|(x, target)| {
            let probs = probs_from_acts(&net.forward(x));
            target.loss_and_target(&probs).0
        })
        .sum();
    total / batch.len() as f64
}

/// Mean loss over a batch and its gradient w.r.t. the flat parameter vector.
///
/// At ties of the optimistic loss the subgradient of the lowest-id minimizer
/// is used.
pub fn batch_loss_and_grad(net: &Network, batch: &[(&[f64], Target<'_>)]) -> (f64, Vec<f64>) {
    let mut grad = vec![0.0; net.params().len()];
    let scale = 1.0 / batch.len() as f64;
    let mut total = 0.0;
    for (x, target) in batch {
        let acts = net.forward(x);
        let probs = probs_from_acts(&acts);
        let (loss, t) = target.loss_and_target(&probs);
        total += loss;
        let dlogits: Vec<f64> = probs.iter().zip(&t).map(|(p, t)| p - t).collect();
        net.backward(&acts, &dlogits, scale, &mut grad);
    }
    (total * scale, grad)
}
