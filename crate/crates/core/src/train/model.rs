use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{softmax, PartialDataset, ProbabilityVector};
use crate::error::{Error, Result};

/// Anything that maps an instance to a probability vector over `K` classes.
pub trait ProbabilisticClassifier {
    fn num_classes(&self) -> usize;

    fn input_dim(&self) -> usize;

    fn predict_proba(&self, features: &[f64]) -> Result<ProbabilityVector>;

    /// Predictions for every instance of `d`, in dataset order.
    fn predict_all(&self, d: &PartialDataset) -> Result<Vec<ProbabilityVector>> {
        d.instances()
            .iter()
            .map(|inst| self.predict_proba(&inst.features))
            .collect()
    }
}

impl<T: ProbabilisticClassifier + ?Sized> ProbabilisticClassifier for &T {
    fn num_classes(&self) -> usize {
        (**self).num_classes()
    }

    fn input_dim(&self) -> usize {
        (**self).input_dim()
    }

    fn predict_proba(&self, features: &[f64]) -> Result<ProbabilityVector> {
        (**self).predict_proba(features)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum ModelKind {
    SoftmaxRegression,
    Mlp { hidden: Vec<usize> },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub kind: ModelKind,
    pub input_dim: usize,
    pub num_classes: usize,
}

impl ModelSpec {
    pub fn softmax_regression(input_dim: usize, num_classes: usize) -> Self {
        ModelSpec {
            kind: ModelKind::SoftmaxRegression,
            input_dim,
            num_classes,
        }
    }

    pub fn mlp(input_dim: usize, hidden: Vec<usize>, num_classes: usize) -> Self {
        ModelSpec {
            kind: ModelKind::Mlp { hidden },
            input_dim,
            num_classes,
        }
    }

    pub fn check(&self) -> Result<()> {
        if self.num_classes < 2 {
            return Err(Error::InvalidSpec(format!("K < 2 (got {})", self.num_classes)));
        }
        if self.input_dim == 0 {
            return Err(Error::InvalidSpec("input_dim must be positive".into()));
        }
        if let ModelKind::Mlp { hidden } = &self.kind {
            if hidden.contains(&0) {
                return Err(Error::InvalidSpec("hidden widths must be positive".into()));
            }
        }
        Ok(())
    }

    /// Unit counts from input to output, e.g. `[d, 16, K]`.
    pub fn layer_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![self.input_dim];
        if let ModelKind::Mlp { hidden } = &self.kind {
            sizes.extend_from_slice(hidden);
        }
        sizes.push(self.num_classes);
        sizes
    }

    pub fn num_params(&self) -> usize {
        self.layer_sizes().windows(2).map(|w| w[0] * w[1] + w[1]).sum()
    }
}

#[derive(Debug, Clone, Copy)]
struct LayerShape {
    fan_in: usize,
    fan_out: usize,
    /// Start of the row-major `fan_out x fan_in` weight block; biases follow.
    offset: usize,
}

impl LayerShape {
    fn bias_offset(&self) -> usize {
        self.offset + self.fan_in * self.fan_out
    }
}

fn layer_shapes(spec: &ModelSpec) -> Vec<LayerShape> {
    let mut offset = 0;
    spec.layer_sizes()
        .windows(2)
        .map(|w| {
            let s = LayerShape {
                fan_in: w[0],
                fan_out: w[1],
                offset,
            };
            offset += w[0] * w[1] + w[1];
            s
        })
        .collect()
}

/// Fully connected network with rectifier hidden layers and a softmax
/// output. With no hidden layers this is softmax regression.
///
/// All parameters live in one flat vector so the optimizer and gradient
/// checks can treat the model as a point in `R^p`.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    spec: ModelSpec,
    params: Vec<f64>,
    seed: u64,
}

impl Network {
    /// Weights and biases drawn from `U(-1/sqrt(fan_in), 1/sqrt(fan_in))`.
    pub fn init(spec: ModelSpec, seed: u64) -> Result<Self> {
        spec.check()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = vec![0.0; spec.num_params()];
        for layer in layer_shapes(&spec) {
            let bound = 1.0 / (layer.fan_in as f64).sqrt();
            let end = layer.bias_offset() + layer.fan_out;
            for p in &mut params[layer.offset..end] {
                *p = rng.random_range(-bound..bound);
            }
        }
        Ok(Network { spec, params, seed })
    }

    pub fn from_params(spec: ModelSpec, params: Vec<f64>, seed: u64) -> Result<Self> {
        spec.check()?;
        if params.len() != spec.num_params() {
            return Err(Error::DimensionMismatch {
                expected: spec.num_params(),
                got: params.len(),
            });
        }
        Ok(Network { spec, params, seed })
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    fn check_dim(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.spec.input_dim {
            return Err(Error::DimensionMismatch {
                expected: self.spec.input_dim,
                got: x.len(),
            });
        }
        Ok(())
    }

    /// Output-layer pre-activations.
    pub fn logits(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_dim(x)?;
        Ok(self.forward(x).pop().expect("at least one layer"))
    }

    /// Activations of every layer: `acts[0] = x`, hidden layers after the
    /// rectifier, last entry the logits.
    pub(crate) fn forward(&self, x: &[f64]) -> Vec<Vec<f64>> {
        let shapes = layer_shapes(&self.spec);
        let last = shapes.len() - 1;
        let mut acts = Vec::with_capacity(shapes.len() + 1);
        acts.push(x.to_vec());
        for (l, shape) in shapes.iter().enumerate() {
            let input = &acts[l];
            let w = &self.params[shape.offset..shape.bias_offset()];
            let b = &self.params[shape.bias_offset()..shape.bias_offset() + shape.fan_out];
            let mut out: Vec<f64> = (0..shape.fan_out)
                .map(|o| {
                    let row = &w[o * shape.fan_in..(o + 1) * shape.fan_in];
                    b[o] + row.iter().zip(input).map(|(a, b)| a * b).sum::<f64>()
                })
                .collect();
            if l != last {
                for v in &mut out {
                    *v = v.max(0.0);
                }
            }
            acts.push(out);
        }
        acts
    }

    /// Accumulates `scale * d(loss)/d(params)` into `grad`, given the
    /// cached activations and the loss gradient w.r.t. the logits.
    pub(crate) fn backward(&self, acts: &[Vec<f64>], dlogits: &[f64], scale: f64, grad: &mut [f64]) {
        let shapes = layer_shapes(&self.spec);
        let mut delta: Vec<f64> = dlogits.iter().map(|d| d * scale).collect();
        for (l, shape) in shapes.iter().enumerate().rev() {
            let input = &acts[l];
            let bias_off = shape.bias_offset();
            for o in 0..shape.fan_out {
                let d = delta[o];
                if d == 0.0 {
                    continue;
                }
                grad[bias_off + o] += d;
                let row = &mut grad[shape.offset + o * shape.fan_in..shape.offset + (o + 1) * shape.fan_in];
                for (g, a) in row.iter_mut().zip(input) {
                    *g += d * a;
                }
            }
            if l == 0 {
                break;
            }
            let w = &self.params[shape.offset..bias_off];
            let mut prev = vec![0.0; shape.fan_in];
            for (o, &d) in delta.iter().enumerate() {
                if d == 0.0 {
                    continue;
                }
                let row = &w[o * shape.fan_in..(o + 1) * shape.fan_in];
                for (p, wv) in prev.iter_mut().zip(row) {
                    *p += d * wv;
                }
            }
            // rectifier derivative on the hidden layer feeding this one
            for (p, a) in prev.iter_mut().zip(input) {
                if *a <= 0.0 {
                    *p = 0.0;
                }
            }
            delta = prev;
        }
    }
}

impl ProbabilisticClassifier for Network {
    fn num_classes(&self) -> usize {
        self.spec.num_classes
    }

    fn input_dim(&self) -> usize {
        self.spec.input_dim
    }

    fn predict_proba(&self, features: &[f64]) -> Result<ProbabilityVector> {
        let logits = self.logits(features)?;
        Ok(ProbabilityVector::softmax(&logits))
    }
}

pub(crate) fn probs_from_acts(acts: &[Vec<f64>]) -> Vec<f64> {
    softmax(acts.last().expect("nonempty activations"))
}
