use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{LstmModel, ModelSpec, TrainConfig, GATES};
use crate::data::NormParams;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedTensor {
    pub name: String,
    /// `[rows, cols]`; vectors use `[n, 1]`.
    pub shape: [usize; 2],
    pub values: Vec<f64>,
}

/// JSON model checkpoint. Floats are written in shortest round-trip form,
/// so save/load reproduces every parameter bit for bit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub layer_specs: ModelSpec,
    pub params: Vec<NamedTensor>,
    pub seed: u64,
    pub train_config: TrainConfig,
    /// Look-back length the model was trained on.
    pub window_len: usize,
    /// Normalization fitted on the training trace.
    pub norm: NormParams,
}

impl Checkpoint {
    pub fn new(model: &LstmModel, train_config: &TrainConfig, window_len: usize, norm: NormParams) -> Self {
        let layout = model.layout();
        let p = model.params();
        let mut params = Vec::new();
        for (l, layer) in layout.layers.iter().enumerate() {
            let h = layer.hidden;
            for (gi, gate) in GATES.iter().enumerate() {
                for (part, range, cols) in [
                    ("w_input", &layer.w_input, layer.input),
                    ("w_hidden", &layer.w_hidden, h),
                    ("bias", &layer.bias, 1),
                ] {
                    let start = range.start + gi * h * cols;
                    params.push(NamedTensor {
                        name: format!("layer{l}.{gate}.{part}"),
                        shape: [h, cols],
                        values: p[start..start + h * cols].to_vec(),
                    });
                }
            }
        }
        params.push(NamedTensor {
            name: "output.weight".into(),
            shape: [layout.out_weight.len(), 1],
            values: p[layout.out_weight.clone()].to_vec(),
        });
        params.push(NamedTensor {
            name: "output.bias".into(),
            shape: [1, 1],
            values: vec![p[layout.out_bias]],
        });
        Self {
            layer_specs: model.spec().clone(),
            params,
            seed: train_config.seed,
            train_config: train_config.clone(),
            window_len,
            norm,
        }
    }

    /// Rebuilds the model; tensors must appear in the order [`Checkpoint::new`]
    /// writes them.
    pub fn model(&self) -> Result<LstmModel> {
        let mut model = LstmModel::zeros(self.layer_specs.clone())?;
        let expected = Checkpoint::new(&model, &self.train_config, self.window_len, self.norm);
        if expected.params.len() != self.params.len() {
            return Err(Error::Checkpoint(format!(
                "expected {} tensors, found {}",
                expected.params.len(),
                self.params.len()
            )));
        }
        let mut flat = Vec::with_capacity(model.num_params());
        for (want, got) in expected.params.iter().zip(&self.params) {
            if want.name != got.name || want.shape != got.shape || got.values.len() != want.values.len() {
                return Err(Error::Checkpoint(format!(
                    "tensor `{}` {:?} does not match expected `{}` {:?}",
                    got.name, got.shape, want.name, want.shape
                )));
            }
        }
        // Tensors are stored per gate; the flat layout interleaves gates
        // inside each part, so scatter back by the same offsets.
        flat.resize(model.num_params(), 0.0);
        let layout = model.layout().clone();
        let mut tensors = self.params.iter();
        for layer in &layout.layers {
            let h = layer.hidden;
            for gi in 0..GATES.len() {
                for (range, cols) in [
                    (&layer.w_input, layer.input),
                    (&layer.w_hidden, h),
                    (&layer.bias, 1),
                ] {
                    let t = tensors.next().expect("count checked above");
                    let start = range.start + gi * h * cols;
                    flat[start..start + h * cols].copy_from_slice(&t.values);
                }
            }
        }
        let t = tensors.next().expect("count checked above");
        flat[layout.out_weight.clone()].copy_from_slice(&t.values);
        flat[layout.out_bias] = tensors.next().expect("count checked above").values[0];
        model = LstmModel::from_params(self.layer_specs.clone(), flat)?;
        Ok(model)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_json()? + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn norm() -> NormParams {
        NormParams {
            min_w: 1.5,
            max_w: 2345.25,
        }
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let model = LstmModel::init(ModelSpec::stacked(5, 2), 99).unwrap();
        let ckpt = Checkpoint::new(&model, &TrainConfig::default(), 60, norm());
        let text = ckpt.to_json().unwrap();
        let back = Checkpoint::from_json(&text).unwrap();
        assert_eq!(back, ckpt);
        let restored = back.model().unwrap();
        for (a, b) in model.params().iter().zip(restored.params()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
        assert_eq!(restored, model);
    }

    #[test]
    fn tensors_are_named_by_gate() {
        let model = LstmModel::init(ModelSpec::stacked(2, 2), 1).unwrap();
        let ckpt = Checkpoint::new(&model, &TrainConfig::default(), 60, norm());
        let names: Vec<&str> = ckpt.params.iter().map(|t| t.name.as_str()).collect();
        assert_eq!(names[0], "layer0.input.w_input");
        assert_eq!(names[4], "layer0.forget.w_hidden");
        assert_eq!(names[11], "layer0.output.bias");
        assert_eq!(names.last(), Some(&"output.bias"));
        assert_eq!(names.len(), 2 * 4 * 3 + 2);
        let forget = &ckpt.params[4];
        let layer = &model.layout().layers[0];
        assert_eq!(forget.values, model.params()[layer.w_hidden.start + 4..layer.w_hidden.start + 8]);
    }

    #[test]
    fn mismatched_tensor_rejected() {
        let model = LstmModel::init(ModelSpec::stacked(2, 2), 1).unwrap();
        let mut ckpt = Checkpoint::new(&model, &TrainConfig::default(), 60, norm());
        ckpt.params[3].values.pop();
        assert!(matches!(ckpt.model(), Err(Error::Checkpoint(_))));
        ckpt.params.pop();
        assert!(ckpt.model().is_err());
    }
}
