//! Synthetic precise datasets and the two label-contamination protocols
//! that turn them into partially labeled data.
//!
//! Contamination draws each instance's randomness from a ChaCha stream keyed
//! by `(seed, instance id)`, so results do not depend on processing order.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::data::{CandidateSet, Instance, LabelId, PartialDataset, ProbabilityVector};
use crate::error::{Error, Result};
use crate::train::{accuracy, erm_fit, Loss, LrSchedule, ModelSpec, Network, ProbabilisticClassifier, TrainConfig};

/// Isotropic Gaussian classes sharing one standard deviation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianMixtureSpec {
    pub num_classes: usize,
    pub dim: usize,
    pub means: Vec<Vec<f64>>,
    pub sigma: f64,
    pub samples_per_class: usize,
    pub seed: u64,
}

impl GaussianMixtureSpec {
    /// Class means drawn uniformly from the cube `[-spread, spread]^dim`
    /// with a dedicated RNG stream of `seed`.
    pub fn random_means(
        num_classes: usize,
        dim: usize,
        spread: f64,
        sigma: f64,
        samples_per_class: usize,
        seed: u64,
    ) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(u64::MAX);
        let means = (0..num_classes)
            .map(|_| (0..dim).map(|_| rng.random_range(-spread..=spread)).collect())
            .collect();
        GaussianMixtureSpec {
            num_classes,
            dim,
            means,
            sigma,
            samples_per_class,
            seed,
        }
    }

    /// Class means evenly spaced on a circle of `radius` in the first two
    /// coordinates; remaining coordinates are zero. Needs `dim >= 2`.
    pub fn ring(num_classes: usize, dim: usize, radius: f64, sigma: f64, samples_per_class: usize, seed: u64) -> Self {
        let means = (0..num_classes)
            .map(|c| {
                let angle = 2.0 * std::f64::consts::PI * c as f64 / num_classes as f64;
                let mut m = vec![0.0; dim];
                if dim >= 2 {
                    m[0] = radius * angle.cos();
                    m[1] = radius * angle.sin();
                }
                m
            })
            .collect();
        GaussianMixtureSpec {
            num_classes,
            dim,
            means,
            sigma,
            samples_per_class,
            seed,
        }
    }

    pub fn check(&self) -> Result<()> {
        if self.num_classes < 2 {
            return Err(Error::InvalidSpec(format!("K < 2 (got {})", self.num_classes)));
        }
        if self.dim == 0 {
            return Err(Error::InvalidSpec("dim must be >= 1".into()));
        }
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return Err(Error::InvalidSpec(format!(
                "sigma must be positive, got {}",
                self.sigma
            )));
        }
        if self.samples_per_class == 0 {
            return Err(Error::InvalidSpec("samples_per_class must be >= 1".into()));
        }
        if self.means.len() != self.num_classes || self.means.iter().any(|m| m.len() != self.dim) {
            return Err(Error::InvalidSpec(
                "means must be num_classes vectors of length dim".into(),
            ));
        }
        Ok(())
    }
}

/// Precise oracle dataset with `K * n_c` instances, class-major order.
pub fn generate_gaussian(spec: &GaussianMixtureSpec) -> Result<PartialDataset> {
    spec.check()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let n = spec.num_classes * spec.samples_per_class;
    let mut instances = Vec::with_capacity(n);
    let mut truths = Vec::with_capacity(n);
    for (c, mean) in spec.means.iter().enumerate() {
        for _ in 0..spec.samples_per_class {
            let features = mean
                .iter()
                .map(|&m| {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    m + spec.sigma * z
                })
                .collect();
            instances.push(Instance {
                id: instances.len(),
                features,
            });
            truths.push(LabelId::from(c));
        }
    }
    PartialDataset::precise(instances, truths, spec.num_classes)
}

fn instance_rng(seed: u64, id: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id as u64);
    rng
}

fn require_precise_oracle<'a>(d: &'a PartialDataset, operation: &'static str) -> Result<&'a [LabelId]> {
    let truths = d.truths(operation)?;
    if !d.is_precise() {
        return Err(Error::InvalidSpec(format!("{operation} needs a precise dataset")));
    }
    Ok(truths)
}

/// Uniformly random label other than `truth`.
fn random_false_label(rng: &mut ChaCha8Rng, truth: LabelId, k: usize) -> LabelId {
    let r = rng.random_range(0..k - 1);
    LabelId::from(if r >= truth.index() { r + 1 } else { r })
}

/// Adds each false label independently with probability `p`; when none was
/// added, one uniformly random false label is forced in.
pub fn contaminate_random(d: &PartialDataset, p: f64, seed: u64) -> Result<PartialDataset> {
    if !(p > 0.0 && p <= 1.0) {
        return Err(Error::InvalidSpec(format!("p must lie in (0, 1], got {p}")));
    }
    let truths = require_precise_oracle(d, "contaminate_random")?;
    let k = d.num_classes();
    let candidates = d
        .instances()
        .iter()
        .zip(truths)
        .map(|(inst, &truth)| {
            let mut rng = instance_rng(seed, inst.id);
            let mut labels = vec![truth];
            for l in (0..k).map(LabelId::from).filter(|&l| l != truth) {
                if rng.random::<f64>() < p {
                    labels.push(l);
                }
            }
            if labels.len() == 1 {
                labels.push(random_false_label(&mut rng, truth, k));
            }
            CandidateSet::from_labels(labels)
        })
        .collect();
    d.with_candidates(candidates)
}

/// Adds each false label `y` with probability
/// `f_s(x)_y / max_{y' ≠ truth} f_s(x)_{y'}`, so the most probable false
/// label is always included. If every false label has probability zero, one
/// uniformly random false label is added instead.
pub fn contaminate_instance_dependent<C: ProbabilisticClassifier + ?Sized>(
    d: &PartialDataset,
    supermodel: &C,
    seed: u64,
) -> Result<PartialDataset> {
    let truths = require_precise_oracle(d, "contaminate_instance_dependent")?;
    let k = d.num_classes();
    if supermodel.num_classes() != k {
        return Err(Error::InvalidSpec(format!(
            "supermodel has {} classes, data has {k}",
            supermodel.num_classes()
        )));
    }
    let mut candidates = Vec::with_capacity(d.len());
    for (inst, &truth) in d.instances().iter().zip(truths) {
        let probs = supermodel.predict_proba(&inst.features)?;
        let mut rng = instance_rng(seed, inst.id);
        candidates.push(CandidateSet::from_labels(instance_dependent_labels(
            &probs, truth, &mut rng,
        )));
    }
    d.with_candidates(candidates)
}

fn instance_dependent_labels(probs: &ProbabilityVector, truth: LabelId, rng: &mut ChaCha8Rng) -> Vec<LabelId> {
    let k = probs.len();
    let max_false = (0..k)
        .filter(|&l| l != truth.index())
        .map(|l| probs.as_slice()[l])
        .fold(0.0, f64::max);
    let mut labels = vec![truth];
    if max_false <= 0.0 {
        labels.push(random_false_label(rng, truth, k));
        return labels;
    }
    for l in (0..k).filter(|&l| l != truth.index()) {
        let p_y = probs.as_slice()[l] / max_false;
        if rng.random::<f64>() < p_y {
            labels.push(LabelId::from(l));
        }
    }
    labels
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SupermodelConfig {
    pub hidden: usize,
    pub train: TrainConfig,
}

impl Default for SupermodelConfig {
    fn default() -> Self {
        SupermodelConfig {
            hidden: 16,
            train: TrainConfig {
                loss: Loss::OptimisticSuperset,
                epochs: 10,
                batch_size: 64,
                learning_rate: 0.05,
                momentum: 0.9,
                weight_decay: 1e-4,
                lr_schedule: LrSchedule::CosineAnnealing,
                seed: 0,
            },
        }
    }
}

#[derive(Debug, Clone)]
pub struct Supermodel {
    pub model: Network,
    pub train_accuracy: f64,
}

/// Trains the one-hidden-layer network used to drive instance-dependent
/// contamination, on the same precise data it will later contaminate.
pub fn train_supermodel(d: &PartialDataset, config: &SupermodelConfig) -> Result<Supermodel> {
    let truths = require_precise_oracle(d, "train_supermodel")?;
    let mut present: Vec<LabelId> = truths.to_vec();
    present.sort_unstable();
    present.dedup();
    if present.len() < 2 || d.num_classes() < 2 {
        return Err(Error::InvalidSpec("K < 2".into()));
    }
    let spec = ModelSpec::mlp(d.dim(), vec![config.hidden], d.num_classes());
    let outcome = erm_fit(d, &spec, &config.train)?;
    let train_accuracy = accuracy(&outcome.model, d)?;
    Ok(Supermodel {
        model: outcome.model,
        train_accuracy,
    })
}
