//! Stacked LSTM binary classifier trained from scratch.
//!
//! Architecture: a scalar input sequence feeds `hidden_sizes.len()` stacked
//! LSTM layers; each layer's hidden-state sequence passes through a ReLU
//! before reaching the next layer, and a dense unit on the final timestep of
//! the last layer produces a logit that a sigmoid turns into the probability
//! of occupancy.
//!
//! Parameters live in one flat vector so that optimizers and gradient checks
//! can treat the model as a point in R^n. [`Layout`] maps names to offsets.

mod checkpoint;
mod gradcheck;
mod lstm;
mod train;

pub use checkpoint::{Checkpoint, NamedTensor};
pub use gradcheck::{compare_gradients, grad_check, GradCheckReport, ABS_FLOOR, FD_STEP, REL_TOL};
pub use lstm::{backward, bce_loss, lstm_forward, predict, ForwardCache, GradientBundle, PROB_CLAMP};
pub use train::{train, train_from_scratch, TrainConfig};

use std::ops::Range;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Gate blocks in the order they are stored in every layer.
pub const GATES: [&str; 4] = ["input", "forget", "cell", "output"];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub input_size: usize,
    pub hidden_sizes: Vec<usize>,
    pub output_size: usize,
}

impl ModelSpec {
    /// Scalar input, `layers` LSTM layers of width `hidden`, one output.
    pub fn stacked(hidden: usize, layers: usize) -> Self {
        Self {
            input_size: 1,
            hidden_sizes: vec![hidden; layers],
            output_size: 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_size != 1 || self.output_size != 1 {
            return Err(Error::config("only scalar input and output are supported"));
        }
        if self.hidden_sizes.is_empty() || self.hidden_sizes.contains(&0) {
            return Err(Error::config("need at least one LSTM layer of positive width"));
        }
        Ok(())
    }
}

/// Offsets of one LSTM layer inside the flat parameter vector.
///
/// `w_input` is `[4H x in]`, `w_hidden` is `[4H x H]`, `bias` is `[4H]`,
/// all row-major with gate blocks in [`GATES`] order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LayerLayout {
    pub input: usize,
    pub hidden: usize,
    pub w_input: Range<usize>,
    pub w_hidden: Range<usize>,
    pub bias: Range<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Layout {
    pub layers: Vec<LayerLayout>,
    pub out_weight: Range<usize>,
    pub out_bias: usize,
    pub len: usize,
}

impl Layout {
    pub fn new(spec: &ModelSpec) -> Self {
        let mut offset = 0;
        let mut take = |n: usize| {
            let r = offset..offset + n;
            offset += n;
            r
        };
        let mut input = spec.input_size;
        let mut layers = Vec::with_capacity(spec.hidden_sizes.len());
        for &hidden in &spec.hidden_sizes {
            layers.push(LayerLayout {
                input,
                hidden,
                w_input: take(4 * hidden * input),
                w_hidden: take(4 * hidden * hidden),
                bias: take(4 * hidden),
            });
            input = hidden;
        }
        let out_weight = take(input);
        let out_bias = take(1).start;
        Self {
            layers,
            out_weight,
            out_bias,
            len: offset,
        }
    }

    /// Human-readable name of a flat parameter index, e.g.
    /// `layer1.forget.w_hidden[3,7]`.
    pub fn describe(&self, index: usize) -> String {
        for (l, layer) in self.layers.iter().enumerate() {
            let h = layer.hidden;
            for (part, range, cols) in [
                ("w_input", &layer.w_input, layer.input),
                ("w_hidden", &layer.w_hidden, h),
                ("bias", &layer.bias, 1),
            ] {
                if range.contains(&index) {
                    let local = index - range.start;
                    let (row, col) = (local / cols, local % cols);
                    let gate = GATES[row / h];
                    return if part == "bias" {
                        format!("layer{l}.{gate}.{part}[{}]", row % h)
                    } else {
                        format!("layer{l}.{gate}.{part}[{},{col}]", row % h)
                    };
                }
            }
        }
        if self.out_weight.contains(&index) {
            format!("output.weight[{}]", index - self.out_weight.start)
        } else {
            "output.bias".to_string()
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LstmModel {
    spec: ModelSpec,
    layout: Layout,
    params: Vec<f64>,
}

impl LstmModel {
    /// All-zero parameters: every window maps to probability 0.5.
    pub fn zeros(spec: ModelSpec) -> Result<Self> {
        spec.validate()?;
        let layout = Layout::new(&spec);
        let params = vec![0.0; layout.len];
        Ok(Self {
            spec,
            layout,
            params,
        })
    }

    /// Uniform initialization in `[-k, k]` with `k = 1/sqrt(H)` of the first
    /// layer's width.
    pub fn init(spec: ModelSpec, seed: u64) -> Result<Self> {
        let mut model = Self::zeros(spec)?;
        let k = 1.0 / (model.spec.hidden_sizes[0] as f64).sqrt();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for p in &mut model.params {
            *p = rng.random_range(-k..=k);
        }
        Ok(model)
    }

    pub fn from_params(spec: ModelSpec, params: Vec<f64>) -> Result<Self> {
        let mut model = Self::zeros(spec)?;
        if params.len() != model.layout.len {
            return Err(Error::LengthMismatch {
                expected: model.layout.len,
                actual: params.len(),
            });
        }
        if params.iter().any(|p| !p.is_finite()) {
            return Err(Error::Checkpoint("non-finite parameter".into()));
        }
        model.params = params;
        Ok(model)
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn num_params(&self) -> usize {
        self.params.len()
    }
}
