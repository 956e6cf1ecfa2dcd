use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::data::SynthConfig;
use crate::error::{Error, Result};
use crate::nn::TrainConfig;
use crate::perturb::{LabelSource, NoiseAnchor, PerturbConfig};

/// Where the trace comes from. `eco_csv` wins when set.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DataConfig {
    pub eco_csv: Option<PathBuf>,
    pub synth: SynthConfig,
}

/// Settings for the `gradcheck` subcommand.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GradCheckConfig {
    pub models: usize,
    pub max_hidden: usize,
    pub max_window: usize,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        Self {
            models: 50,
            max_hidden: 4,
            max_window: 8,
        }
    }
}

/// One JSON document describing a whole experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub data: DataConfig,
    pub seed: u64,
    pub window_len: usize,
    /// Step between training windows.
    pub train_stride: usize,
    /// Step between evaluated test windows.
    pub eval_stride: usize,
    pub train_fraction: f64,
    pub train: TrainConfig,
    pub epsilon: Vec<f64>,
    /// Gaussian variance in W^2; matched to the AMLODA distortion when unset.
    pub sigma2: Option<f64>,
    /// AMLODA epsilon used by `compare`; the largest swept epsilon when unset.
    pub compare_epsilon: Option<f64>,
    pub gaussian_seeds: usize,
    pub gamma: Option<f64>,
    pub pair_period: usize,
    pub use_true_labels: bool,
    pub anchor: NoiseAnchor,
    pub tariff: Vec<PathBuf>,
    pub pad_zero: bool,
    pub out: PathBuf,
    /// Checkpoint to load; `<out>/model.json` when unset.
    pub model: Option<PathBuf>,
    pub jobs: Option<usize>,
    pub gradcheck: GradCheckConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            data: DataConfig::default(),
            seed: 7,
            window_len: 60,
            train_stride: 60,
            eval_stride: 1,
            train_fraction: 0.8,
            train: TrainConfig {
                epochs: 60,
                learning_rate: 0.2,
                batch_size: 32,
                seed: 7,
                hidden_size: 16,
                clip_norm: Some(0.05),
            },
            epsilon: vec![0.0, 1e-4, 1e-3, 1e-2],
            sigma2: None,
            compare_epsilon: None,
            gaussian_seeds: 5,
            gamma: None,
            pair_period: 2,
            use_true_labels: false,
            anchor: NoiseAnchor::default(),
            tariff: Vec::new(),
            pad_zero: false,
            out: PathBuf::from("out"),
            model: None,
            jobs: None,
            gradcheck: GradCheckConfig::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::config(format!("cannot read config {}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| Error::config(format!("{}: {e}", path.display())))
    }

    /// Applies `name = value` overrides addressed by dotted field paths such
    /// as `train.epochs` or `data.synth.seed`. Values are parsed as JSON and
    /// fall back to plain strings.
    pub fn with_overrides<'a>(self, overrides: impl IntoIterator<Item = (&'a str, &'a str)>) -> Result<Self> {
        let mut doc = serde_json::to_value(&self)?;
        for (name, raw) in overrides {
            let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
            let slot = name
                .split('.')
                .try_fold(&mut doc, |node, key| node.get_mut(key.replace('-', "_")))
                .ok_or_else(|| Error::config(format!("unknown config field `{name}`")))?;
            *slot = value;
        }
        serde_json::from_value(doc).map_err(|e| Error::config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        if self.window_len < 2 || self.train_stride == 0 || self.eval_stride == 0 {
            return Err(Error::config("window_len must be at least 2 and strides positive"));
        }
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return Err(Error::config("train_fraction must lie strictly between 0 and 1"));
        }
        if let Some(e) = self.epsilon.iter().find(|e| !(e.is_finite() && **e >= 0.0)) {
            return Err(Error::config(format!("epsilon values must be non-negative, got {e}")));
        }
        if let Some(s) = self.sigma2 {
            if !(s.is_finite() && s > 0.0) {
                return Err(Error::config(format!("sigma2 must be positive, got {s}")));
            }
        }
        if self.gaussian_seeds == 0 {
            return Err(Error::config("gaussian_seeds must be at least 1"));
        }
        self.train.validate()?;
        self.perturb_config(0.0).validate()
    }

    /// The training settings with the global seed applied.
    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            seed: self.seed,
            ..self.train.clone()
        }
    }

    pub fn perturb_config(&self, epsilon: f64) -> PerturbConfig {
        PerturbConfig {
            epsilon,
            gamma: self.gamma,
            pair_period: self.pair_period,
            window_len: self.window_len,
            label_source: if self.use_true_labels {
                LabelSource::GroundTruth
            } else {
                LabelSource::Predicted
            },
            anchor: self.anchor,
            eval_stride: self.eval_stride,
        }
    }

    pub fn model_path(&self) -> PathBuf {
        self.model.clone().unwrap_or_else(|| self.out.join("model.json"))
    }
}
