use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::PartialDataset;
use crate::error::{Error, Result};
use crate::train::model::{ModelSpec, Network, ProbabilisticClassifier};
use crate::train::objective::{batch_loss_and_grad, progressive_reweight, LabelWeights, Loss, Target};
use crate::train::optimizer::{LrSchedule, Sgd};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub loss: Loss,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub lr_schedule: LrSchedule,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            loss: Loss::ProgressiveWeighting,
            epochs: 30,
            batch_size: 64,
            learning_rate: 0.1,
            momentum: 0.9,
            weight_decay: 1e-4,
            lr_schedule: LrSchedule::CosineAnnealing,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn check(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::InvalidSpec("epochs must be >= 1".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidSpec("batch_size must be >= 1".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidSpec(format!(
                "learning_rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::InvalidSpec(format!(
                "momentum must lie in [0, 1), got {}",
                self.momentum
            )));
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return Err(Error::InvalidSpec(format!(
                "weight_decay must be >= 0, got {}",
                self.weight_decay
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: Network,
    /// Mean data loss per epoch (regularization excluded).
    pub epoch_losses: Vec<f64>,
    /// Final disambiguation weights for the progressive objective.
    pub label_weights: Option<LabelWeights>,
}

/// Empirical risk minimization on partially labeled data.
///
/// Mini-batch SGD with momentum over shuffled data; the progressive
/// objective starts from uniform weights over each candidate set and
/// re-estimates them once per epoch from the current model. Deterministic
/// given `config.seed`.
pub fn erm_fit(train: &PartialDataset, spec: &ModelSpec, config: &TrainConfig) -> Result<TrainOutcome> {
    config.check()?;
    spec.check()?;
    if train.is_empty() {
        return Err(Error::InvalidSpec("training set is empty".into()));
    }
    if train.dim() != spec.input_dim {
        return Err(Error::DimensionMismatch {
            expected: spec.input_dim,
            got: train.dim(),
        });
    }
    if train.num_classes() != spec.num_classes {
        return Err(Error::InvalidSpec(format!(
            "model has {} classes, data has {}",
            spec.num_classes,
            train.num_classes()
        )));
    }
    let violations = train.validate();
    if !violations.is_empty() {
        return Err(Error::InvalidDataset(violations));
    }

    let mut model = Network::init(spec.clone(), config.seed)?;
    let mut opt = Sgd::new(model.params().len(), config.momentum, config.weight_decay);
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(config.seed);
    shuffle_rng.set_stream(1);

    let candidates = train.candidates();
    let mut weights = match config.loss {
        Loss::ProgressiveWeighting => Some(LabelWeights::uniform(candidates)),
        Loss::OptimisticSuperset => None,
    };
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut epoch_losses = Vec::with_capacity(config.epochs);

    for epoch in 0..config.epochs {
        let lr = config.lr_schedule.lr_at(config.learning_rate, epoch, config.epochs);
        order.shuffle(&mut shuffle_rng);
        let mut total = 0.0;
        for chunk in order.chunks(config.batch_size) {
            let batch: Vec<(&[f64], Target<'_>)> = chunk
                .iter()
                .map(|&i| {
                    let x = train.instances()[i].features.as_slice();
                    let target = match &weights {
                        Some(w) => Target::Weighted {
                            set: &candidates[i],
                            weights: w.get(i),
                        },
                        None => Target::Superset(&candidates[i]),
                    };
                    (x, target)
                })
                .collect();
            let (loss, grad) = batch_loss_and_grad(&model, &batch);
            if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                return Err(Error::Divergence { epoch });
            }
            total += loss * chunk.len() as f64;
            opt.step(model.params_mut(), &grad, lr);
        }
        let mean = total / train.len() as f64;
        if !mean.is_finite() || model.params().iter().any(|p| !p.is_finite()) {
            return Err(Error::Divergence { epoch });
        }
        epoch_losses.push(mean);
        if let Some(w) = &weights {
            let probs = model.predict_all(train)?;
            weights = Some(progressive_reweight(w, candidates, &probs));
        }
    }

    Ok(TrainOutcome {
        model,
        epoch_losses,
        label_weights: weights,
    })
}

/// Fraction of instances whose arg-max prediction equals the hidden truth.
pub fn accuracy<C: ProbabilisticClassifier + ?Sized>(f: &C, d: &PartialDataset) -> Result<f64> {
    let truths = d.truths("accuracy")?;
    if d.is_empty() {
        return Ok(0.0);
    }
    let mut hits = 0usize;
    for (inst, &t) in d.instances().iter().zip(truths) {
        if f.predict_proba(&inst.features)?.argmax() == t {
            hits += 1;
        }
    }
    Ok(hits as f64 / d.len() as f64)
}
