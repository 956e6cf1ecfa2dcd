use super::LstmModel;
use crate::error::{Error, Result};

/// Probabilities are kept inside `[PROB_CLAMP, 1 - PROB_CLAMP]`.
pub const PROB_CLAMP: f64 = 1e-12;

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn relu(x: f64) -> f64 {
    x.max(0.0)
}

/// Activations of one LSTM layer over a whole window.
#[derive(Debug, Clone, PartialEq)]
struct LayerCache {
    /// `L x in`; the ReLU of the previous layer's hidden states for layers > 0.
    inputs: Vec<f64>,
    /// `L x 4H`, activated gates in `GATES` order.
    gates: Vec<f64>,
    /// `L x H`
    cells: Vec<f64>,
    /// `L x H`
    tanh_cells: Vec<f64>,
    /// `L x H`, raw hidden states (pre-ReLU).
    hidden: Vec<f64>,
}

/// Everything `backward` needs from a forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardCache {
    layers: Vec<LayerCache>,
    steps: usize,
    pub logit: f64,
}

impl ForwardCache {
    pub fn steps(&self) -> usize {
        self.steps
    }

    /// Raw hidden states of `layer` at timestep `t`.
    pub fn hidden(&self, layer: usize, t: usize) -> &[f64] {
        let h = self.layers[layer].cells.len() / self.steps;
        &self.layers[layer].hidden[t * h..(t + 1) * h]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradientBundle {
    /// Same layout as `LstmModel::params`.
    pub param_grads: Vec<f64>,
    /// d loss / d window[t].
    pub input_grad: Vec<f64>,
}

/// Runs the network over `window` and returns the occupancy probability.
pub fn lstm_forward(model: &LstmModel, window: &[f64]) -> Result<(f64, ForwardCache)> {
    if window.is_empty() {
        return Err(Error::config("window must contain at least one sample"));
    }
    if let Some(t) = window.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite {
            context: "input window",
            timestep: t,
        });
    }
    let steps = window.len();
    let p = model.params();
    let mut layers = Vec::with_capacity(model.layout().layers.len());
    let mut inputs = window.to_vec();
    let mut z = Vec::new();
    let (mut step_c, mut step_tc, mut step_h) = (Vec::new(), Vec::new(), Vec::new());

    for layout in &model.layout().layers {
        let (n_in, h) = (layout.input, layout.hidden);
        let w_x = &p[layout.w_input.clone()];
        let w_h = &p[layout.w_hidden.clone()];
        let bias = &p[layout.bias.clone()];
        let mut cache = LayerCache {
            inputs,
            gates: Vec::with_capacity(steps * 4 * h),
            cells: Vec::with_capacity(steps * h),
            tanh_cells: Vec::with_capacity(steps * h),
            hidden: Vec::with_capacity(steps * h),
        };
        let zeros = vec![0.0; h];
        for t in 0..steps {
            let x = &cache.inputs[t * n_in..(t + 1) * n_in];
            let h_prev = if t == 0 { &zeros[..] } else { &cache.hidden[(t - 1) * h..t * h] };
            let c_prev = if t == 0 { &zeros[..] } else { &cache.cells[(t - 1) * h..t * h] };
            z.clear();
            for r in 0..4 * h {
                let wx = &w_x[r * n_in..(r + 1) * n_in];
                let wh = &w_h[r * h..(r + 1) * h];
                let mut acc = bias[r];
                acc += wx.iter().zip(x).map(|(w, v)| w * v).sum::<f64>();
                acc += wh.iter().zip(h_prev).map(|(w, v)| w * v).sum::<f64>();
                z.push(acc);
            }
            for (r, zr) in z.iter().enumerate() {
                let a = if r / h == 2 { zr.tanh() } else { sigmoid(*zr) };
                cache.gates.push(a);
            }
            let g = &cache.gates[t * 4 * h..(t + 1) * 4 * h];
            step_c.clear();
            step_tc.clear();
            step_h.clear();
            for j in 0..h {
                let c = g[h + j] * c_prev[j] + g[j] * g[2 * h + j];
                let tc = c.tanh();
                let hv = g[3 * h + j] * tc;
                if !hv.is_finite() {
                    return Err(Error::NonFinite {
                        context: "hidden state",
                        timestep: t,
                    });
                }
                step_c.push(c);
                step_tc.push(tc);
                step_h.push(hv);
            }
            cache.cells.extend_from_slice(&step_c);
            cache.tanh_cells.extend_from_slice(&step_tc);
            cache.hidden.extend_from_slice(&step_h);
        }
        inputs = cache.hidden.iter().copied().map(relu).collect();
        layers.push(cache);
    }

    let last_h = model.layout().layers.last().map_or(1, |l| l.hidden);
    let top = &inputs[(steps - 1) * last_h..];
    let w_out = &p[model.layout().out_weight.clone()];
    let logit = p[model.layout().out_bias] + w_out.iter().zip(top).map(|(w, v)| w * v).sum::<f64>();
    if !logit.is_finite() {
        return Err(Error::NonFinite {
            context: "output logit",
            timestep: steps - 1,
        });
    }
    let prob = sigmoid(logit).clamp(PROB_CLAMP, 1.0 - PROB_CLAMP);
    Ok((
        prob,
        ForwardCache {
            layers,
            steps,
            logit,
        },
    ))
}

/// Binary cross-entropy with the probability clamped away from 0 and 1.
pub fn bce_loss(probability: f64, label: u8) -> f64 {
    let p = probability.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP);
    if label == 1 {
        -p.ln()
    } else {
        -(1.0 - p).ln()
    }
}

/// Backpropagation through time for `bce_loss(lstm_forward(window), label)`.
pub fn backward(
    model: &LstmModel,
    cache: &ForwardCache,
    window: &[f64],
    label: u8,
) -> Result<GradientBundle> {
    let steps = cache.steps;
    if window.len() != steps {
        return Err(Error::LengthMismatch {
            expected: steps,
            actual: window.len(),
        });
    }
    let p = model.params();
    let layout = model.layout();
    let mut grads = vec![0.0; p.len()];

    let d_logit = sigmoid(cache.logit) - f64::from(label);
    let top_h = layout.layers.last().map_or(1, |l| l.hidden);
    let top = cache.layers.last().expect("model has at least one layer");
    let last_hidden = &top.hidden[(steps - 1) * top_h..];
    grads[layout.out_bias] = d_logit;
    let w_out = &p[layout.out_weight.clone()];
    // Gradient w.r.t. the raw hidden states of the layer being processed.
    let mut d_out = vec![0.0; steps * top_h];
    for j in 0..top_h {
        grads[layout.out_weight.start + j] = d_logit * relu(last_hidden[j]);
        if last_hidden[j] > 0.0 {
            d_out[(steps - 1) * top_h + j] = d_logit * w_out[j];
        }
    }

    let mut input_grad = Vec::new();
    for (l, (ll, lc)) in layout.layers.iter().zip(&cache.layers).enumerate().rev() {
        let (n_in, h) = (ll.input, ll.hidden);
        let w_x = &p[ll.w_input.clone()];
        let w_h = &p[ll.w_hidden.clone()];
        let mut d_in = vec![0.0; steps * n_in];
        let mut dh_next = vec![0.0; h];
        let mut dc_next = vec![0.0; h];
        let mut dz = vec![0.0; 4 * h];
        let zeros = vec![0.0; h];

        for t in (0..steps).rev() {
            let g = &lc.gates[t * 4 * h..(t + 1) * 4 * h];
            let tc = &lc.tanh_cells[t * h..(t + 1) * h];
            let c_prev = if t == 0 { &zeros[..] } else { &lc.cells[(t - 1) * h..t * h] };
            let h_prev = if t == 0 { &zeros[..] } else { &lc.hidden[(t - 1) * h..t * h] };
            let x = &lc.inputs[t * n_in..(t + 1) * n_in];

            for j in 0..h {
                let (i, f, gg, o) = (g[j], g[h + j], g[2 * h + j], g[3 * h + j]);
                let dh = d_out[t * h + j] + dh_next[j];
                let dc = dh * o * (1.0 - tc[j] * tc[j]) + dc_next[j];
                dz[j] = dc * gg * i * (1.0 - i);
                dz[h + j] = dc * c_prev[j] * f * (1.0 - f);
                dz[2 * h + j] = dc * i * (1.0 - gg * gg);
                dz[3 * h + j] = dh * tc[j] * o * (1.0 - o);
                dc_next[j] = dc * f;
            }

            dh_next.iter_mut().for_each(|v| *v = 0.0);
            let d_x = &mut d_in[t * n_in..(t + 1) * n_in];
            for (r, &dzr) in dz.iter().enumerate() {
                if dzr == 0.0 {
                    continue;
                }
                grads[ll.bias.start + r] += dzr;
                let gx = &mut grads[ll.w_input.start + r * n_in..ll.w_input.start + (r + 1) * n_in];
                let wx = &w_x[r * n_in..(r + 1) * n_in];
                for k in 0..n_in {
                    gx[k] += dzr * x[k];
                    d_x[k] += wx[k] * dzr;
                }
                let gh = &mut grads[ll.w_hidden.start + r * h..ll.w_hidden.start + (r + 1) * h];
                let wh = &w_h[r * h..(r + 1) * h];
                for k in 0..h {
                    gh[k] += dzr * h_prev[k];
                    dh_next[k] += wh[k] * dzr;
                }
            }
        }

        if l == 0 {
            input_grad = d_in;
        } else {
            let below = &cache.layers[l - 1].hidden;
            d_out = d_in
                .iter()
                .zip(below)
                .map(|(d, hv)| if *hv > 0.0 { *d } else { 0.0 })
                .collect();
        }
    }

    Ok(GradientBundle {
        param_grads: grads,
        input_grad,
    })
}

/// Probability and hard label; ties at 0.5 count as occupied.
pub fn predict(model: &LstmModel, window: &[f64]) -> Result<(f64, u8)> {
    let (p, _) = lstm_forward(model, window)?;
    Ok((p, u8::from(p >= 0.5)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{LstmModel, ModelSpec};

    #[test]
    fn zero_model_is_undecided() {
        let model = LstmModel::zeros(ModelSpec::stacked(4, 2)).unwrap();
        let window = [0.1, 0.9, 0.3];
        let (p, _) = lstm_forward(&model, &window).unwrap();
        assert_eq!(p, 0.5);
        assert_eq!(predict(&model, &window).unwrap(), (0.5, 1));
        for label in [0, 1] {
            let (_, cache) = lstm_forward(&model, &window).unwrap();
            let g = backward(&model, &cache, &window, label).unwrap();
            assert!(g.input_grad.iter().all(|v| *v == 0.0));
        }
    }

    #[test]
    fn forward_is_deterministic() {
        let model = LstmModel::init(ModelSpec::stacked(8, 2), 11).unwrap();
        let window: Vec<f64> = (0..20).map(|i| (i as f64 * 0.37).sin().abs()).collect();
        let a = lstm_forward(&model, &window).unwrap();
        let b = lstm_forward(&model, &window).unwrap();
        assert_eq!(a, b);
        assert!(a.0 > 0.0 && a.0 < 1.0);
    }

    /// One unit per layer, two timesteps, weights chosen by hand. The
    /// expected probability is the recurrence unrolled independently below.
    #[test]
    fn hand_unrolled_micro_model() {
        let spec = ModelSpec::stacked(1, 2);
        // Per layer: w_input[i,f,g,o], w_hidden[i,f,g,o], bias[i,f,g,o].
        let layer0 = [0.5, -0.3, 0.8, 0.2, 0.1, 0.4, -0.6, 0.3, 0.05, 0.1, -0.2, 0.0];
        let layer1 = [0.7, 0.2, 0.9, -0.4, -0.2, 0.3, 0.5, 0.1, 0.0, -0.1, 0.1, 0.2];
        let mut params = Vec::new();
        params.extend_from_slice(&layer0);
        params.extend_from_slice(&layer1);
        params.extend_from_slice(&[1.5, -0.25]);
        let model = LstmModel::from_params(spec, params).unwrap();
        let x = [0.2, 0.9];

        let s = |v: f64| 1.0 / (1.0 + (-v).exp());
        let cell = |w: &[f64; 12], x: f64, h: f64, c: f64| {
            let i = s(w[0] * x + w[4] * h + w[8]);
            let f = s(w[1] * x + w[5] * h + w[9]);
            let g = (w[2] * x + w[6] * h + w[10]).tanh();
            let o = s(w[3] * x + w[7] * h + w[11]);
            let c = f * c + i * g;
            (o * c.tanh(), c)
        };
        let (h0a, c0a) = cell(&layer0, x[0], 0.0, 0.0);
        let (h0b, _) = cell(&layer0, x[1], h0a, c0a);
        let (h1a, c1a) = cell(&layer1, h0a.max(0.0), 0.0, 0.0);
        let (h1b, _) = cell(&layer1, h0b.max(0.0), h1a, c1a);
        let expected = s(1.5 * h1b.max(0.0) - 0.25);

        let (p, _) = lstm_forward(&model, &x).unwrap();
        assert!((p - expected).abs() < 1e-15, "{p} vs {expected}");
    }

    #[test]
    fn bce_examples() {
        assert!((bce_loss(0.5, 1) - std::f64::consts::LN_2).abs() < 1e-15);
        assert!((bce_loss(0.5, 0) - std::f64::consts::LN_2).abs() < 1e-15);
        assert!(bce_loss(1.0 - 1e-12, 1) < 1e-11);
        assert!(bce_loss(0.0, 1).is_finite());
        assert!(bce_loss(1.0, 0).is_finite());
        assert!(bce_loss(1.0, 1) >= 0.0);
    }

    #[test]
    fn non_finite_input_names_timestep() {
        let model = LstmModel::zeros(ModelSpec::stacked(2, 2)).unwrap();
        match lstm_forward(&model, &[0.0, f64::NAN, 0.0]) {
            Err(Error::NonFinite { timestep, .. }) => assert_eq!(timestep, 1),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn predict_threshold() {
        // Bias-only model: logit = out_bias.
        let spec = ModelSpec::stacked(1, 1);
        let mut model = LstmModel::zeros(spec).unwrap();
        let b = model.layout().out_bias;
        model.params_mut()[b] = (0.7f64 / 0.3).ln();
        let (p, label) = predict(&model, &[0.0]).unwrap();
        assert!((p - 0.7).abs() < 1e-12);
        assert_eq!(label, 1);
        model.params_mut()[b] = -0.1;
        assert_eq!(predict(&model, &[0.0]).unwrap().1, 0);
    }
}
