//! Sign-of-gradient noise applied as conservation-preserving pairs.
//!
//! Every `pair_period` samples a noise value `n_t` (watts) is derived from
//! the sign of the attack model's input gradient. It is subtracted from the
//! reading at `t` and added to the reading at `t + 1`, so every pair, and
//! therefore every billing frame made of whole pairs, keeps its total.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{NormParams, OccupancyLabels, PowerTrace};
use crate::error::{Error, Result};
use crate::nn::{backward, lstm_forward, LstmModel};

/// Which label the loss gradient is taken against.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LabelSource {
    /// The attacked model's own hard prediction. Usable on a live meter.
    #[default]
    Predicted,
    /// Ground-truth occupancy, for offline evaluation.
    GroundTruth,
}

/// How a pair's noise sign is read off the input gradient.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseAnchor {
    /// Window ending at `t + 1`; sign of `g[L-1] - g[L-2]`, the derivative of
    /// the loss along the pair direction (-1 at `t`, +1 at `t + 1`).
    #[default]
    PairDirection,
    /// Window ending at `t`; sign of the final-position gradient `g[L-1]`.
    FinalPosition,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PerturbConfig {
    /// Penetration coefficient in normalized units.
    pub epsilon: f64,
    /// Optional cap `|n_t| <= gamma * |P_t|`.
    pub gamma: Option<f64>,
    pub pair_period: usize,
    pub window_len: usize,
    pub label_source: LabelSource,
    pub anchor: NoiseAnchor,
    /// Stride of the windows used to measure prediction flips.
    pub eval_stride: usize,
}

impl Default for PerturbConfig {
    fn default() -> Self {
        Self {
            epsilon: 0.0,
            gamma: None,
            pair_period: 2,
            window_len: 60,
            label_source: LabelSource::Predicted,
            anchor: NoiseAnchor::PairDirection,
            eval_stride: 1,
        }
    }
}

impl PerturbConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon >= 0.0 && self.epsilon.is_finite()) {
            return Err(Error::config("epsilon must be a non-negative number"));
        }
        if let Some(g) = self.gamma {
            if !(g > 0.0) {
                return Err(Error::config("gamma must be positive when set"));
            }
        }
        if self.pair_period < 2 || self.pair_period % 2 != 0 {
            return Err(Error::config("pair_period must be an even number >= 2"));
        }
        if self.window_len < 2 {
            return Err(Error::config("window_len must be at least 2"));
        }
        if self.eval_stride == 0 {
            return Err(Error::config("eval_stride must be at least 1"));
        }
        Ok(())
    }
}

/// Noise in watts, aligned with the source trace. Only indices that are
/// multiples of the pair period carry a value; all others are zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseSeries {
    pub values: Vec<f64>,
    pub pair_period: usize,
    /// Pair starts whose look-back window did not fit in the trace.
    pub unavailable: Vec<usize>,
}

impl NoiseSeries {
    pub fn zeros(len: usize, pair_period: usize) -> Self {
        Self {
            values: vec![0.0; len],
            pair_period,
            unavailable: Vec::new(),
        }
    }

    pub fn pair_starts(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.values.len().saturating_sub(1)).step_by(self.pair_period)
    }
}

/// Readings after perturbation.
///
/// For paired noise `applied_mask` has one entry per pair (`true` when the
/// pair was changed); for per-sample noise it has one entry per sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerturbedTrace {
    pub values: Vec<f64>,
    pub applied_mask: Vec<bool>,
}

impl PerturbedTrace {
    pub fn total(&self) -> f64 {
        self.values.iter().sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstraintReport {
    pub epsilon: f64,
    pub gamma: Option<f64>,
    /// `sum(P_hat - P)` in watt-samples.
    pub total_delta_w: f64,
    /// Largest `|n_t| / |P_t|` over applied pairs; null when unbounded
    /// (a zero reading was shifted) or when nothing was applied.
    pub max_relative_perturbation: Option<f64>,
    pub gamma_satisfied: bool,
    /// Share of evaluation windows whose predicted label changed.
    pub flipped_fraction: f64,
    pub skipped_pairs: usize,
    pub unavailable_windows: usize,
}

fn sign(x: f64) -> i8 {
    if x > 0.0 {
        1
    } else if x < 0.0 {
        -1
    } else {
        0
    }
}

/// Elementwise sign of the loss gradient with respect to `window`.
pub fn input_gradient_sign(model: &LstmModel, window: &[f64], label: u8) -> Result<Vec<i8>> {
    let (_, cache) = lstm_forward(model, window)?;
    let grads = backward(model, &cache, window, label)?;
    Ok(grads.input_grad.iter().map(|g| sign(*g)).collect())
}

fn pair_sign(
    model: &LstmModel,
    normalized: &[f64],
    labels: &OccupancyLabels,
    config: &PerturbConfig,
    t: usize,
) -> Result<Option<i8>> {
    let l = config.window_len;
    let end = match config.anchor {
        NoiseAnchor::PairDirection => t + 1,
        NoiseAnchor::FinalPosition => t,
    };
    if end + 1 < l {
        return Ok(None);
    }
    let window = &normalized[end + 1 - l..=end];
    let (p, cache) = lstm_forward(model, window)?;
    let label = match config.label_source {
        LabelSource::Predicted => u8::from(p >= 0.5),
        LabelSource::GroundTruth => labels.values[end],
    };
    let g = backward(model, &cache, window, label)?.input_grad;
    Ok(Some(match config.anchor {
        NoiseAnchor::PairDirection => sign(g[l - 1] - g[l - 2]),
        NoiseAnchor::FinalPosition => sign(g[l - 1]),
    }))
}

/// Noise for every pair: `n_t = epsilon * sign * (max_w - min_w)`, clipped
/// to `gamma * |P_t|` when a cap is configured.
pub fn compute_noise(
    model: &LstmModel,
    trace: &PowerTrace,
    labels: &OccupancyLabels,
    params: &NormParams,
    config: &PerturbConfig,
) -> Result<NoiseSeries> {
    config.validate()?;
    if labels.len() != trace.len() {
        return Err(Error::LengthMismatch {
            expected: trace.len(),
            actual: labels.len(),
        });
    }
    let mut noise = NoiseSeries::zeros(trace.len(), config.pair_period);
    if config.epsilon == 0.0 {
        return Ok(noise);
    }
    let normalized = params.apply(&trace.values);
    let starts: Vec<usize> = noise.pair_starts().collect();
    let signs = starts
        .par_iter()
        .map(|&t| pair_sign(model, &normalized, labels, config, t))
        .collect::<Result<Vec<_>>>()?;
    let scale = config.epsilon * params.range();
    for (&t, s) in starts.iter().zip(signs) {
        match s {
            None => noise.unavailable.push(t),
            Some(s) => {
                let mut n = scale * f64::from(s);
                if let Some(gamma) = config.gamma {
                    let cap = gamma * trace.values[t].abs();
                    n = n.clamp(-cap, cap);
                }
                noise.values[t] = n;
            }
        }
    }
    Ok(noise)
}

/// Applies each pair's noise as `P_t - n_t`, `P_{t+1} + n_t`.
///
/// A pair is left untouched when `P_t < n_t` or `P_{t+1} + n_t < 0`, so no
/// reading goes negative. A trailing sample without a partner is never
/// changed.
pub fn apply_paired_perturbation(trace: &PowerTrace, noise: &NoiseSeries) -> Result<PerturbedTrace> {
    if noise.values.len() != trace.len() {
        return Err(Error::LengthMismatch {
            expected: trace.len(),
            actual: noise.values.len(),
        });
    }
    let mut values = trace.values.clone();
    let mut applied_mask = Vec::new();
    for t in noise.pair_starts() {
        let n = noise.values[t];
        let (p0, p1) = (values[t], values[t + 1]);
        let apply = p0 >= n && p1 + n >= 0.0;
        if apply {
            values[t] = p0 - n;
            values[t + 1] = p1 + n;
        }
        applied_mask.push(apply);
    }
    Ok(PerturbedTrace {
        values,
        applied_mask,
    })
}

/// Occupancy probabilities for windows of `window_len` readings taken every
/// `stride` samples; window `k` ends at `k * stride + window_len - 1`.
pub fn score_windows(
    model: &LstmModel,
    values_w: &[f64],
    params: &NormParams,
    window_len: usize,
    stride: usize,
) -> Result<Vec<f64>> {
    if values_w.len() < window_len || window_len == 0 || stride == 0 {
        return Err(Error::config(format!(
            "cannot take windows of {window_len} every {stride} from {} samples",
            values_w.len()
        )));
    }
    let normalized = params.apply(values_w);
    let starts: Vec<usize> = (0..=normalized.len() - window_len).step_by(stride).collect();
    starts
        .par_iter()
        .map(|&s| lstm_forward(model, &normalized[s..s + window_len]).map(|(p, _)| p))
        .collect()
}

/// Labels of the windows produced by [`score_windows`].
pub fn window_labels(labels: &OccupancyLabels, window_len: usize, stride: usize) -> Vec<u8> {
    (window_len - 1..labels.len())
        .step_by(stride)
        .map(|end| labels.values[end])
        .collect()
}

/// Output of [`generate_oblivious_trace`] plus the scores it computed.
#[derive(Debug, Clone, PartialEq)]
pub struct ObliviousRun {
    pub perturbed: PerturbedTrace,
    pub noise: NoiseSeries,
    pub report: ConstraintReport,
    pub perturbed_scores: Vec<f64>,
}

/// [`generate_oblivious_trace`] against precomputed scores of the clean
/// trace, so sweeps over epsilon score the original only once.
pub fn generate_with_baseline(
    model: &LstmModel,
    trace: &PowerTrace,
    labels: &OccupancyLabels,
    params: &NormParams,
    config: &PerturbConfig,
    original_scores: &[f64],
) -> Result<ObliviousRun> {
    let noise = compute_noise(model, trace, labels, params, config)?;
    let perturbed = apply_paired_perturbation(trace, &noise)?;
    let perturbed_scores = if config.epsilon == 0.0 {
        original_scores.to_vec()
    } else {
        score_windows(model, &perturbed.values, params, config.window_len, config.eval_stride)?
    };
    if perturbed_scores.len() != original_scores.len() {
        return Err(Error::LengthMismatch {
            expected: perturbed_scores.len(),
            actual: original_scores.len(),
        });
    }

    let total_delta_w = perturbed
        .values
        .iter()
        .zip(&trace.values)
        .map(|(a, b)| a - b)
        .sum();
    let mut max_rel = Some(0.0f64);
    let mut any_applied = false;
    for (t, applied) in noise.pair_starts().zip(&perturbed.applied_mask) {
        let n = noise.values[t];
        if !applied || n == 0.0 {
            continue;
        }
        any_applied = true;
        let p = trace.values[t].abs();
        max_rel = match max_rel {
            Some(m) if p > 0.0 => Some(m.max(n.abs() / p)),
            _ => None,
        };
    }
    let max_relative_perturbation = if any_applied { max_rel } else { None };
    let gamma_satisfied = match (config.gamma, any_applied) {
        (Some(g), true) => max_relative_perturbation.is_some_and(|m| m <= g * (1.0 + 1e-12)),
        _ => true,
    };
    let flips = original_scores
        .iter()
        .zip(&perturbed_scores)
        .filter(|(a, b)| (**a >= 0.5) != (**b >= 0.5))
        .count();

    let report = ConstraintReport {
        epsilon: config.epsilon,
        gamma: config.gamma,
        total_delta_w,
        max_relative_perturbation,
        gamma_satisfied,
        flipped_fraction: flips as f64 / original_scores.len().max(1) as f64,
        skipped_pairs: perturbed.applied_mask.iter().filter(|a| !**a).count(),
        unavailable_windows: noise.unavailable.len(),
    };
    Ok(ObliviousRun {
        perturbed,
        noise,
        report,
        perturbed_scores,
    })
}

/// Computes noise against `model`, applies it pairwise and reports the
/// constraint and flip statistics.
pub fn generate_oblivious_trace(
    model: &LstmModel,
    trace: &PowerTrace,
    labels: &OccupancyLabels,
    params: &NormParams,
    config: &PerturbConfig,
) -> Result<(PerturbedTrace, ConstraintReport)> {
    config.validate()?;
    let original = score_windows(model, &trace.values, params, config.window_len, config.eval_stride)?;
    let run = generate_with_baseline(model, trace, labels, params, config, &original)?;
    Ok((run.perturbed, run.report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::ModelSpec;
    use proptest::prelude::*;

    fn trace(values: &[f64]) -> PowerTrace {
        PowerTrace::new(0, 1.0, values.to_vec()).unwrap()
    }

    fn noise_at(len: usize, entries: &[(usize, f64)]) -> NoiseSeries {
        let mut n = NoiseSeries::zeros(len, 2);
        for &(t, v) in entries {
            n.values[t] = v;
        }
        n
    }

    #[test]
    fn pair_example() {
        let out = apply_paired_perturbation(&trace(&[100., 100.]), &noise_at(2, &[(0, 5.)])).unwrap();
        assert_eq!(out.values, vec![95., 105.]);
        assert_eq!(out.applied_mask, vec![true]);
        assert_eq!(out.total(), 200.0);
    }

    #[test]
    fn guard_skips_small_reading() {
        let out = apply_paired_perturbation(&trace(&[3., 100.]), &noise_at(2, &[(0, 5.)])).unwrap();
        assert_eq!(out.values, vec![3., 100.]);
        assert_eq!(out.applied_mask, vec![false]);
    }

    #[test]
    fn guard_skips_negative_partner() {
        let out = apply_paired_perturbation(&trace(&[10., 2.]), &noise_at(2, &[(0, -5.)])).unwrap();
        assert_eq!(out.values, vec![10., 2.]);
        let out = apply_paired_perturbation(&trace(&[10., 7.]), &noise_at(2, &[(0, -5.)])).unwrap();
        assert_eq!(out.values, vec![15., 2.]);
    }

    #[test]
    fn trailing_sample_untouched() {
        let out = apply_paired_perturbation(&trace(&[50., 50., 50.]), &noise_at(3, &[(0, 1.)])).unwrap();
        assert_eq!(out.values, vec![49., 51., 50.]);
        assert_eq!(out.applied_mask.len(), 1);
    }

    #[test]
    fn length_mismatch_rejected() {
        assert!(apply_paired_perturbation(&trace(&[1., 2.]), &noise_at(3, &[])).is_err());
    }

    #[test]
    fn zero_model_has_zero_signs() {
        let model = LstmModel::zeros(ModelSpec::stacked(3, 2)).unwrap();
        let s = input_gradient_sign(&model, &[0.2, 0.5, 0.1], 1).unwrap();
        assert_eq!(s, vec![0, 0, 0]);
    }

    #[test]
    fn signs_in_codomain() {
        let model = LstmModel::init(ModelSpec::stacked(4, 2), 3).unwrap();
        let s = input_gradient_sign(&model, &[0.2, 0.5, 0.1, 0.9], 0).unwrap();
        assert!(s.iter().all(|v| [-1, 0, 1].contains(v)));
        assert!(s.iter().any(|v| *v != 0));
    }

    /// Dense unit reads a single-unit layer whose only path from the input is
    /// the cell candidate; the gradient sign at the last step follows the
    /// sign of the candidate weight times the label term.
    #[test]
    fn micro_model_sign_matches_hand_gradient() {
        let spec = ModelSpec::stacked(1, 1);
        // [w_i, w_f, w_g, w_o | u_i, u_f, u_g, u_o | b_i, b_f, b_g, b_o | v, c]
        let params = vec![
            0.0, 0.0, 2.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 3.0, 1.0, 0.0,
        ];
        let model = LstmModel::from_params(spec, params).unwrap();
        let x = [0.4, 0.6];
        // By hand: i = f = 1/2, o = sigmoid(3), g_t = tanh(2 x_t),
        // c_1 = g_1/2, c_2 = c_1/2 + g_2/2, h_2 = o tanh(c_2) > 0, logit = h_2.
        // d logit/d x_2 = o (1 - tanh^2 c_2) (1 - g_2^2) > 0
        // d logit/d x_1 = o (1 - tanh^2 c_2) (1 - g_1^2) / 2 > 0
        // With label 0 the loss gradient is p * d logit > 0; label 1 flips it.
        assert_eq!(input_gradient_sign(&model, &x, 0).unwrap(), vec![1, 1]);
        assert_eq!(input_gradient_sign(&model, &x, 1).unwrap(), vec![-1, -1]);
        // Pair direction: (1 - g_2^2) > (1 - g_1^2) / 2 for g_1 = tanh(0.8), g_2 = tanh(1.2).
        let g1 = (0.8f64).tanh();
        let g2 = (1.2f64).tanh();
        assert!(1.0 - g2 * g2 > (1.0 - g1 * g1) / 2.0);
        let labels = OccupancyLabels::new(vec![0, 0]).unwrap();
        let cfg = PerturbConfig {
            epsilon: 0.0001,
            window_len: 2,
            label_source: LabelSource::GroundTruth,
            ..PerturbConfig::default()
        };
        let params = NormParams { min_w: 0.0, max_w: 1000.0 };
        let t = trace(&[400., 600.]);
        let noise = compute_noise(&model, &t, &labels, &params, &cfg).unwrap();
        assert!((noise.values[0] - 0.1).abs() < 1e-12);
    }

    #[test]
    fn epsilon_zero_is_identity() {
        let model = LstmModel::init(ModelSpec::stacked(3, 2), 1).unwrap();
        let t = trace(&[10., 20., 30., 40., 50., 60., 70.]);
        let labels = OccupancyLabels::new(vec![0, 0, 1, 1, 0, 1, 1]).unwrap();
        let params = NormParams { min_w: 10.0, max_w: 70.0 };
        let cfg = PerturbConfig {
            window_len: 3,
            ..PerturbConfig::default()
        };
        let (out, report) = generate_oblivious_trace(&model, &t, &labels, &params, &cfg).unwrap();
        assert_eq!(out.values, t.values);
        assert_eq!(report.total_delta_w, 0.0);
        assert_eq!(report.flipped_fraction, 0.0);
        assert!(report.gamma_satisfied);
    }

    #[test]
    fn early_pairs_without_window_get_no_noise() {
        let model = LstmModel::init(ModelSpec::stacked(3, 2), 1).unwrap();
        let t = trace(&[10., 20., 30., 40., 50., 60.]);
        let labels = OccupancyLabels::new(vec![0; 6]).unwrap();
        let params = NormParams { min_w: 10.0, max_w: 60.0 };
        let cfg = PerturbConfig {
            epsilon: 0.1,
            window_len: 4,
            anchor: NoiseAnchor::FinalPosition,
            ..PerturbConfig::default()
        };
        let noise = compute_noise(&model, &t, &labels, &params, &cfg).unwrap();
        assert_eq!(noise.unavailable, vec![0, 2]);
        assert_eq!(noise.values[0], 0.0);
        assert!(noise.values[4].abs() == 5.0 || noise.values[4] == 0.0);
        let cfg = PerturbConfig {
            anchor: NoiseAnchor::PairDirection,
            ..cfg
        };
        let noise = compute_noise(&model, &t, &labels, &params, &cfg).unwrap();
        assert_eq!(noise.unavailable, vec![0]);
    }

    #[test]
    fn gamma_caps_noise() {
        let model = LstmModel::init(ModelSpec::stacked(3, 2), 8).unwrap();
        let values: Vec<f64> = (0..40).map(|i| 20.0 + (i % 5) as f64 * 30.0).collect();
        let t = trace(&values);
        let labels = OccupancyLabels::new(vec![1; 40]).unwrap();
        let params = NormParams { min_w: 20.0, max_w: 140.0 };
        let cfg = PerturbConfig {
            epsilon: 0.5,
            gamma: Some(0.05),
            window_len: 4,
            ..PerturbConfig::default()
        };
        let (_, report) = generate_oblivious_trace(&model, &t, &labels, &params, &cfg).unwrap();
        assert!(report.gamma_satisfied);
        assert!(report.max_relative_perturbation.unwrap() <= 0.05 + 1e-12);
        assert!(report.total_delta_w.abs() < 1e-9 * t.total());
    }

    #[test]
    fn config_validation() {
        let bad = [
            PerturbConfig { epsilon: -1.0, ..PerturbConfig::default() },
            PerturbConfig { gamma: Some(0.0), ..PerturbConfig::default() },
            PerturbConfig { pair_period: 3, ..PerturbConfig::default() },
            PerturbConfig { window_len: 1, ..PerturbConfig::default() },
        ];
        for cfg in bad {
            assert!(cfg.validate().is_err(), "{cfg:?}");
        }
    }

    #[test]
    fn report_json_fields() {
        let report = ConstraintReport {
            epsilon: 0.01,
            gamma: None,
            total_delta_w: 0.0,
            max_relative_perturbation: None,
            gamma_satisfied: true,
            flipped_fraction: 0.25,
            skipped_pairs: 3,
            unavailable_windows: 0,
        };
        let v = serde_json::to_value(&report).unwrap();
        for key in ["epsilon", "gamma", "total_delta_w", "max_relative_perturbation", "flipped_fraction", "skipped_pairs"] {
            assert!(v.get(key).is_some(), "{key}");
        }
    }

    proptest! {
        #[test]
        fn pairs_conserve_and_stay_non_negative(
            data in prop::collection::vec((0.0f64..3000.0, -200.0f64..200.0), 1..300)
        ) {
            let values: Vec<f64> = data.iter().map(|(p, _)| *p).collect();
            let t = trace(&values);
            let mut noise = NoiseSeries::zeros(values.len(), 2);
            for (i, (_, n)) in data.iter().enumerate() {
                if i % 2 == 0 { noise.values[i] = *n; }
            }
            let out = apply_paired_perturbation(&t, &noise).unwrap();
            let total = t.total();
            prop_assert!((out.total() - total).abs() <= 1e-9 * total.max(1e-300) || (out.total() - total).abs() < 1e-9);
            prop_assert!(out.values.iter().all(|v| *v >= 0.0));
            for (k, start) in noise.pair_starts().enumerate() {
                let (d0, d1) = (out.values[start] - values[start], out.values[start + 1] - values[start + 1]);
                if out.applied_mask[k] {
                    prop_assert!((d0.abs() - noise.values[start].abs()).abs() < 1e-9);
                    prop_assert!((d1.abs() - noise.values[start].abs()).abs() < 1e-9);
                } else {
                    prop_assert_eq!((d0, d1), (0.0, 0.0));
                }
            }
            if values.len() % 2 == 1 {
                prop_assert_eq!(out.values.last(), values.last());
            }
        }
    }
}
