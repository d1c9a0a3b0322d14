use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LrSchedule {
    Constant,
    CosineAnnealing,
}

impl LrSchedule {
    /// Learning rate for `epoch` (0-based) out of `total` epochs. Cosine
    /// annealing decays to zero over `total` epochs.
    pub fn lr_at(self, base: f64, epoch: usize, total: usize) -> f64 {
        match self {
            LrSchedule::Constant => base,
            LrSchedule::CosineAnnealing => {
                let t = epoch as f64 / total.max(1) as f64;
                0.5 * base * (1.0 + (PI * t).cos())
            }
        }
    }
}

/// Gradient descent with heavy-ball momentum and L2 weight decay:
/// `g += wd * θ; v = m * v + g; θ -= lr * v`.
#[derive(Debug, Clone)]
pub struct Sgd {
    pub momentum: f64,
    pub weight_decay: f64,
    velocity: Vec<f64>,
}

impl Sgd {
    pub fn new(num_params: usize, momentum: f64, weight_decay: f64) -> Self {
        Sgd {
            momentum,
            weight_decay,
            velocity: vec![0.0; num_params],
        }
    }

    pub fn step(&mut self, params: &mut [f64], grad: &[f64], lr: f64) {
        for ((p, &g), v) in params.iter_mut().zip(grad).zip(&mut self.velocity) {
            let g = g + self.weight_decay * *p;
            *v = self.momentum * *v + g;
            *p -= lr * *v;
        }
    }
}
