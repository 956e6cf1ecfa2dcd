use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::lstm::{backward, bce_loss, lstm_forward};
use super::{LstmModel, ModelSpec};
use crate::data::WindowedDataset;
use crate::error::{Error, Result};

/// Stacked LSTM depth used by [`train_from_scratch`].
pub const LAYERS: usize = 2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub seed: u64,
    pub hidden_size: usize,
    /// Rescales a batch gradient whose L2 norm exceeds this value.
    pub clip_norm: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 20,
            learning_rate: 0.05,
            batch_size: 32,
            seed: 7,
            hidden_size: 32,
            clip_norm: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::config("learning_rate must be positive"));
        }
        if self.batch_size == 0 || self.hidden_size == 0 {
            return Err(Error::config("batch_size and hidden_size must be positive"));
        }
        if let Some(c) = self.clip_norm {
            if !(c > 0.0 && c.is_finite()) {
                return Err(Error::config("clip_norm must be positive when set"));
            }
        }
        Ok(())
    }
}

/// Mini-batch gradient descent on binary cross-entropy.
///
/// Windows are visited in a seeded shuffled order each epoch; the gradient of
/// each batch is the mean of the per-window gradients. Returns the trained
/// model and the mean training loss of every epoch.
pub fn train(
    mut model: LstmModel,
    train_set: &WindowedDataset,
    config: &TrainConfig,
) -> Result<(LstmModel, Vec<f64>)> {
    config.validate()?;
    if train_set.is_empty() {
        return Err(Error::config("training set is empty"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(1);
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut history = Vec::with_capacity(config.epochs);

    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for batch in order.chunks(config.batch_size) {
            let per_window: Vec<(f64, Vec<f64>)> = batch
                .par_iter()
                .map(|&i| {
                    let w = &train_set.windows[i];
                    let (p, cache) = lstm_forward(&model, &w.values)?;
                    let g = backward(&model, &cache, &w.values, w.label)?;
                    Ok((bce_loss(p, w.label), g.param_grads))
                })
                .collect::<Result<_>>()
                .map_err(|e| match e {
                    Error::NonFinite { .. } => Error::Diverged { epoch },
                    other => other,
                })?;
            let mut mean_grad = vec![0.0; model.num_params()];
            for (loss, grads) in &per_window {
                epoch_loss += loss;
                for (m, g) in mean_grad.iter_mut().zip(grads) {
                    *m += g;
                }
            }
            let mut scale = config.learning_rate / batch.len() as f64;
            if let Some(clip) = config.clip_norm {
                let norm = mean_grad.iter().map(|g| g * g).sum::<f64>().sqrt() / batch.len() as f64;
                if norm > clip {
                    scale *= clip / norm;
                }
            }
            for (p, g) in model.params_mut().iter_mut().zip(&mean_grad) {
                *p -= scale * g;
            }
        }
        let mean = epoch_loss / train_set.len() as f64;
        if !mean.is_finite() || model.params().iter().any(|p| !p.is_finite()) {
            return Err(Error::Diverged { epoch });
        }
        history.push(mean);
    }
    Ok((model, history))
}

/// Initializes a two-layer model from `config.seed` and trains it.
pub fn train_from_scratch(
    train_set: &WindowedDataset,
    config: &TrainConfig,
) -> Result<(LstmModel, Vec<f64>)> {
    config.validate()?;
    let model = LstmModel::init(ModelSpec::stacked(config.hidden_size, LAYERS), config.seed)?;
    train(model, train_set, config)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Window;
    use crate::nn::predict;
    use rand::{Rng, SeedableRng};

    /// High readings mean occupied, low readings mean vacant.
    fn separable(n: usize, len: usize, seed: u64) -> WindowedDataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let windows = (0..n)
            .map(|i| {
                let label = (i % 2) as u8;
                let centre = if label == 1 { 0.75 } else { 0.25 };
                Window {
                    start: i * len,
                    values: (0..len).map(|_| centre + rng.random_range(-0.15..0.15)).collect(),
                    label,
                }
            })
            .collect();
        WindowedDataset {
            windows,
            window_len: len,
        }
    }

    fn small_config() -> TrainConfig {
        TrainConfig {
            epochs: 10,
            learning_rate: 0.05,
            batch_size: 8,
            seed: 1,
            hidden_size: 6,
            clip_norm: None,
        }
    }

    #[test]
    fn zero_epochs_is_identity() {
        let ds = separable(16, 5, 0);
        let model = LstmModel::init(ModelSpec::stacked(4, 2), 3).unwrap();
        let cfg = TrainConfig {
            epochs: 0,
            ..small_config()
        };
        let (trained, history) = train(model.clone(), &ds, &cfg).unwrap();
        assert_eq!(trained, model);
        assert!(history.is_empty());
    }

    #[test]
    fn training_is_deterministic() {
        let ds = separable(32, 6, 1);
        let cfg = TrainConfig {
            epochs: 3,
            ..small_config()
        };
        let a = train_from_scratch(&ds, &cfg).unwrap();
        let b = train_from_scratch(&ds, &cfg).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn learns_separable_set() {
        let ds = separable(200, 8, 2);
        let cfg = TrainConfig {
            epochs: 30,
            learning_rate: 0.5,
            ..small_config()
        };
        let (model, history) = train_from_scratch(&ds, &cfg).unwrap();
        assert!(history[9] < history[0]);
        let correct = ds
            .windows
            .iter()
            .filter(|w| predict(&model, &w.values).unwrap().1 == w.label)
            .count();
        let acc = correct as f64 / ds.len() as f64;
        assert!(acc >= 0.95, "accuracy {acc}");
    }

    #[test]
    fn loss_decreases_at_default_rate() {
        let ds = separable(200, 8, 3);
        let (_, history) = train_from_scratch(&ds, &small_config()).unwrap();
        assert_eq!(history.len(), 10);
        assert!(history[9] < history[0], "{history:?}");
    }

    #[test]
    fn clipping_bounds_the_step() {
        let ds = separable(8, 4, 4);
        let model = LstmModel::init(ModelSpec::stacked(3, 2), 5).unwrap();
        let cfg = TrainConfig {
            epochs: 1,
            batch_size: 8,
            learning_rate: 10.0,
            clip_norm: Some(1e-3),
            ..small_config()
        };
        let (trained, _) = train(model.clone(), &ds, &cfg).unwrap();
        let step: f64 = trained
            .params()
            .iter()
            .zip(model.params())
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        assert!(step <= 10.0 * 1e-3 * (1.0 + 1e-9), "step {step}");
        assert!(step > 0.0);
        let bad = TrainConfig {
            clip_norm: Some(0.0),
            ..small_config()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn rejects_bad_config() {
        let ds = separable(4, 3, 0);
        let cfg = TrainConfig {
            learning_rate: 0.0,
            ..small_config()
        };
        assert!(train_from_scratch(&ds, &cfg).is_err());
        let empty = WindowedDataset {
            windows: vec![],
            window_len: 3,
        };
        assert!(train_from_scratch(&empty, &small_config()).is_err());
    }

    #[test]
    fn huge_learning_rate_diverges_or_saturates() {
        let ds = separable(16, 4, 0);
        let cfg = TrainConfig {
            learning_rate: 1e300,
            epochs: 3,
            ..small_config()
        };
        match train_from_scratch(&ds, &cfg) {
            Err(Error::Diverged { epoch }) => assert!(epoch < 3),
            Ok((model, _)) => assert!(model.params().iter().all(|p| p.is_finite())),
            Err(other) => panic!("unexpected {other:?}"),
        }
    }
}
