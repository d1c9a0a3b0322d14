//! Experiment configuration, read from TOML. Unknown keys are rejected.

use std::path::{Path, PathBuf};

use pllcp::data::SplitSpec;
use pllcp::datagen::{GaussianMixtureSpec, SupermodelConfig};
use pllcp::train::{Loss, LrSchedule, ModelKind, TrainConfig};
use pllcp::{CalibrationMethod, ModelSpec};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub dataset: DatasetConfig,
    #[serde(default)]
    pub contamination: ContaminationConfig,
    #[serde(default)]
    pub model: ModelConfig,
    #[serde(default)]
    pub train: TrainSection,
    #[serde(default)]
    pub split: SplitSection,
    #[serde(default = "default_methods")]
    pub methods: Vec<CalibrationMethod>,
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
}

fn default_methods() -> Vec<CalibrationMethod> {
    vec![
        CalibrationMethod::Max,
        CalibrationMethod::All,
        CalibrationMethod::Mean,
        CalibrationMethod::Min,
        CalibrationMethod::Mu(0.5),
        CalibrationMethod::PreciseOracle,
    ]
}

fn default_epsilon() -> f64 {
    0.1
}

fn default_seeds() -> Vec<u64> {
    (0..5).collect()
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MeanLayout {
    /// Means evenly spaced on a circle in the first two coordinates.
    Ring,
    /// Means uniform in a cube.
    Random,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DatasetConfig {
    Gaussian {
        num_classes: usize,
        dim: usize,
        samples_per_class: usize,
        #[serde(default = "one")]
        sigma: f64,
        #[serde(default = "default_layout")]
        layout: MeanLayout,
        /// Ring radius or cube half-width.
        #[serde(default = "default_scale")]
        scale: f64,
        #[serde(default)]
        seed: u64,
    },
    /// The line-oriented dataset format written by `generate`.
    File { path: PathBuf },
    Idx {
        images: PathBuf,
        labels: PathBuf,
        #[serde(default)]
        limit: Option<usize>,
    },
    Csv {
        path: PathBuf,
        #[serde(default)]
        has_truth: bool,
    },
}

fn one() -> f64 {
    1.0
}

fn default_layout() -> MeanLayout {
    MeanLayout::Ring
}

fn default_scale() -> f64 {
    2.5
}

impl DatasetConfig {
    pub fn gaussian_spec(&self) -> Option<GaussianMixtureSpec> {
        match *self {
            DatasetConfig::Gaussian {
                num_classes,
                dim,
                samples_per_class,
                sigma,
                layout,
                scale,
                seed,
            } => Some(match layout {
                MeanLayout::Ring => GaussianMixtureSpec::ring(num_classes, dim, scale, sigma, samples_per_class, seed),
                MeanLayout::Random => {
                    GaussianMixtureSpec::random_means(num_classes, dim, scale, sigma, samples_per_class, seed)
                }
            }),
            _ => None,
        }
    }

    fn resolve(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        match self {
            DatasetConfig::Gaussian { .. } => {}
            DatasetConfig::File { path } | DatasetConfig::Csv { path, .. } => fix(path),
            DatasetConfig::Idx { images, labels, .. } => {
                fix(images);
                fix(labels);
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ContaminationConfig {
    /// Use the dataset's candidate sets as they are.
    #[default]
    None,
    Random {
        p: f64,
        #[serde(default)]
        seed: u64,
    },
    Instance {
        #[serde(default)]
        seed: u64,
        #[serde(default = "default_supermodel_hidden")]
        hidden: usize,
        #[serde(default = "default_supermodel_epochs")]
        epochs: usize,
        #[serde(default = "default_supermodel_lr")]
        learning_rate: f64,
    },
}

fn default_supermodel_hidden() -> usize {
    SupermodelConfig::default().hidden
}

fn default_supermodel_epochs() -> usize {
    SupermodelConfig::default().train.epochs
}

fn default_supermodel_lr() -> f64 {
    SupermodelConfig::default().train.learning_rate
}

impl ContaminationConfig {
    pub fn supermodel(&self) -> Option<SupermodelConfig> {
        match *self {
            ContaminationConfig::Instance {
                seed,
                hidden,
                epochs,
                learning_rate,
            } => {
                let base = SupermodelConfig::default();
                Some(SupermodelConfig {
                    hidden,
                    train: TrainConfig {
                        epochs,
                        learning_rate,
                        seed,
                        ..base.train
                    },
                })
            }
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    /// `softmax` or `mlp`.
    #[serde(default = "default_model_kind")]
    pub kind: String,
    #[serde(default)]
    pub hidden: Vec<usize>,
}

fn default_model_kind() -> String {
    "softmax".into()
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            kind: default_model_kind(),
            hidden: Vec::new(),
        }
    }
}

impl ModelConfig {
    pub fn spec(&self, input_dim: usize, num_classes: usize) -> Result<ModelSpec, CliError> {
        let spec = match self.kind.as_str() {
            "softmax" if self.hidden.is_empty() => ModelSpec::softmax_regression(input_dim, num_classes),
            "softmax" => return Err(CliError::Config("softmax model takes no hidden layers".into())),
            "mlp" => ModelSpec::mlp(input_dim, self.hidden.clone(), num_classes),
            other => return Err(CliError::Config(format!("unknown model kind {other:?}"))),
        };
        spec.check().map_err(|e| CliError::Config(e.to_string()))?;
        if let ModelKind::Mlp { hidden } = &spec.kind {
            if hidden.is_empty() {
                return Err(CliError::Config("mlp needs at least one hidden layer".into()));
            }
        }
        Ok(spec)
    }
}

/// Training hyperparameters; the seed comes from the run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub loss: Loss,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub lr_schedule: LrSchedule,
}

impl Default for TrainSection {
    fn default() -> Self {
        let t = TrainConfig::default();
        TrainSection {
            loss: t.loss,
            epochs: t.epochs,
            batch_size: t.batch_size,
            learning_rate: t.learning_rate,
            momentum: t.momentum,
            weight_decay: t.weight_decay,
            lr_schedule: t.lr_schedule,
        }
    }
}

impl TrainSection {
    pub fn with_seed(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            loss: self.loss,
            epochs: self.epochs,
            batch_size: self.batch_size,
            learning_rate: self.learning_rate,
            momentum: self.momentum,
            weight_decay: self.weight_decay,
            lr_schedule: self.lr_schedule,
            seed,
        }
    }
}

/// Fractions of the data; the split seed comes from the run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitSection {
    pub train: f64,
    pub calib: f64,
    pub test: f64,
}

impl Default for SplitSection {
    fn default() -> Self {
        SplitSection {
            train: 0.7,
            calib: 0.1,
            test: 0.2,
        }
    }
}

impl SplitSection {
    pub fn with_seed(&self, seed: u64) -> Result<SplitSpec, CliError> {
        SplitSpec::new(self.train, self.calib, self.test, seed).map_err(|e| CliError::Config(e.to_string()))
    }
}

/// Command-line overrides applied on top of the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub epsilon: Option<f64>,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        let config: ExperimentConfig = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    /// Reads a config file. Relative dataset paths are resolved against the
    /// file's directory.
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Io(format!("cannot read config {}: {e}", path.display())))?;
        let mut config = Self::from_toml(&text)?;
        if let Some(dir) = path.parent() {
            config.dataset.resolve(dir);
        }
        Ok(config)
    }

    pub fn apply(&mut self, o: &Overrides) -> Result<(), CliError> {
        if let Some(seed) = o.seed {
            self.seeds = vec![seed];
        }
        if let Some(out) = &o.out {
            self.output_dir = out.clone();
        }
        if let Some(eps) = o.epsilon {
            self.epsilon = eps;
        }
        self.validate()
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |m: String| Err(CliError::Config(m));
        if self.seeds.is_empty() {
            return bad("at least one seed is required".into());
        }
        let mut seen = self.seeds.clone();
        seen.sort_unstable();
        seen.dedup();
        if seen.len() != self.seeds.len() {
            return bad("seeds must be distinct".into());
        }
        if !(self.epsilon > 0.0 && self.epsilon < 1.0) {
            return bad(format!("epsilon must lie in (0, 1), got {}", self.epsilon));
        }
        if self.methods.is_empty() {
            return bad("at least one calibration method is required".into());
        }
        for (i, m) in self.methods.iter().enumerate() {
            m.check().map_err(|e| CliError::Config(e.to_string()))?;
            if self.methods[..i].contains(m) {
                return bad(format!("method {m} listed twice"));
            }
        }
        if let Some(spec) = self.dataset.gaussian_spec() {
            spec.check().map_err(|e| CliError::Config(e.to_string()))?;
        }
        if let ContaminationConfig::Random { p, .. } = self.contamination {
            if !(p > 0.0 && p <= 1.0) {
                return bad(format!("contamination p must lie in (0, 1], got {p}"));
            }
        }
        if let Some(sm) = self.contamination.supermodel() {
            sm.train.check().map_err(|e| CliError::Config(e.to_string()))?;
            if sm.hidden == 0 {
                return bad("supermodel hidden width must be positive".into());
            }
        }
        self.train
            .with_seed(0)
            .check()
            .map_err(|e| CliError::Config(e.to_string()))?;
        self.split.with_seed(0)?;
        Ok(())
    }
}
