//! Meter traces, occupancy labels and the preprocessing pipeline that turns
//! them into fixed-length look-back windows for the attack classifier.

mod csv;
mod synth;

pub use self::csv::{clean_missing, load_eco_csv, write_trace_csv, CleaningReport, RawTrace};
pub use self::synth::{synth_household, SynthConfig};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Uniformly sampled power readings in watts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerTrace {
    /// UTC seconds of the first sample.
    pub start_time: i64,
    /// Seconds between samples.
    pub sample_period: f64,
    pub values: Vec<f64>,
}

impl PowerTrace {
    pub fn new(start_time: i64, sample_period: f64, values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::NoSamples);
        }
        if !(sample_period > 0.0) {
            return Err(Error::config("sample_period must be positive"));
        }
        if let Some(i) = values.iter().position(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::Parse {
                row: i,
                message: format!("power {} is not a non-negative finite number", values[i]),
            });
        }
        Ok(Self {
            start_time,
            sample_period,
            values,
        })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn total(&self) -> f64 {
        self.values.iter().sum()
    }

    /// Samples `[start, end)` as a new trace with a shifted start time.
    pub fn slice(&self, start: usize, end: usize) -> Result<Self> {
        if start >= end || end > self.len() {
            return Err(Error::config(format!(
                "slice {start}..{end} out of range for trace of length {}",
                self.len()
            )));
        }
        Ok(Self {
            start_time: self.start_time + (start as f64 * self.sample_period).round() as i64,
            sample_period: self.sample_period,
            values: self.values[start..end].to_vec(),
        })
    }

    /// Same timing, different readings. Used for perturbed copies.
    pub fn with_values(&self, values: Vec<f64>) -> Result<Self> {
        if values.len() != self.len() {
            return Err(Error::LengthMismatch {
                expected: self.len(),
                actual: values.len(),
            });
        }
        Ok(Self {
            start_time: self.start_time,
            sample_period: self.sample_period,
            values,
        })
    }
}

/// Per-sample ground truth: 1 = occupied, 0 = unoccupied.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OccupancyLabels {
    pub values: Vec<u8>,
}

impl OccupancyLabels {
    pub fn new(values: Vec<u8>) -> Result<Self> {
        if let Some(i) = values.iter().position(|v| *v > 1) {
            return Err(Error::Parse {
                row: i,
                message: format!("occupancy label {} is not 0 or 1", values[i]),
            });
        }
        Ok(Self { values })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn slice(&self, start: usize, end: usize) -> Self {
        Self {
            values: self.values[start..end].to_vec(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormParams {
    pub min_w: f64,
    pub max_w: f64,
}

impl NormParams {
    pub fn range(&self) -> f64 {
        self.max_w - self.min_w
    }

    /// Maps watts into normalized units with these parameters. A constant
    /// calibration maps everything to zero.
    pub fn apply(&self, values: &[f64]) -> Vec<f64> {
        let range = self.range();
        if range > 0.0 {
            values.iter().map(|v| (v - self.min_w) / range).collect()
        } else {
            vec![0.0; values.len()]
        }
    }
}

/// Min-max normalization into `[0, 1]`.
pub fn normalize(trace: &PowerTrace) -> (Vec<f64>, NormParams) {
    let (min_w, max_w) = trace
        .values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
            (lo.min(*v), hi.max(*v))
        });
    let params = NormParams { min_w, max_w };
    (params.apply(&trace.values), params)
}

pub fn denormalize(values: &[f64], params: &NormParams) -> Vec<f64> {
    let range = params.range();
    values.iter().map(|v| v * range + params.min_w).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Window {
    /// Index of the first sample in the source sequence.
    pub start: usize,
    pub values: Vec<f64>,
    pub label: u8,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowedDataset {
    pub windows: Vec<Window>,
    pub window_len: usize,
}

impl WindowedDataset {
    pub fn len(&self) -> usize {
        self.windows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.windows.is_empty()
    }

    pub fn labels(&self) -> Vec<u8> {
        self.windows.iter().map(|w| w.label).collect()
    }
}

/// Cuts `values` into windows of `window_len` samples taken every `stride`
/// samples. Each window is labelled with the occupancy of its final sample.
pub fn make_windows(
    values: &[f64],
    labels: &OccupancyLabels,
    window_len: usize,
    stride: usize,
) -> Result<WindowedDataset> {
    if window_len == 0 || stride == 0 {
        return Err(Error::config("window length and stride must be at least 1"));
    }
    if labels.len() != values.len() {
        return Err(Error::LengthMismatch {
            expected: values.len(),
            actual: labels.len(),
        });
    }
    if values.len() < window_len {
        return Err(Error::config(format!(
            "sequence of length {} is shorter than window length {window_len}",
            values.len()
        )));
    }
    let windows = (0..=values.len() - window_len)
        .step_by(stride)
        .map(|start| Window {
            start,
            values: values[start..start + window_len].to_vec(),
            label: labels.values[start + window_len - 1],
        })
        .collect();
    Ok(WindowedDataset {
        windows,
        window_len,
    })
}

/// Chronological split: the first `floor(n * train_fraction)` windows train.
pub fn split_train_test(
    dataset: WindowedDataset,
    train_fraction: f64,
) -> Result<(WindowedDataset, WindowedDataset)> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::config(format!(
            "train fraction {train_fraction} must lie strictly between 0 and 1"
        )));
    }
    let n = dataset.windows.len();
    let n_train = (n as f64 * train_fraction).floor() as usize;
    if n_train == 0 || n_train == n {
        return Err(Error::config(format!(
            "splitting {n} windows at {train_fraction} leaves an empty side"
        )));
    }
    let window_len = dataset.window_len;
    let mut train = dataset.windows;
    let test = train.split_off(n_train);
    Ok((
        WindowedDataset {
            windows: train,
            window_len,
        },
        WindowedDataset {
            windows: test,
            window_len,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn trace(values: &[f64]) -> PowerTrace {
        PowerTrace::new(0, 1.0, values.to_vec()).unwrap()
    }

    fn labels(n: usize) -> OccupancyLabels {
        OccupancyLabels::new((0..n).map(|i| (i % 2) as u8).collect()).unwrap()
    }

    #[test]
    fn normalize_forces_endpoints() {
        let (v, p) = normalize(&trace(&[0.0, 50.0, 100.0]));
        assert_eq!(v, vec![0.0, 0.5, 1.0]);
        assert_eq!(p, NormParams { min_w: 0.0, max_w: 100.0 });

        let (v, _) = normalize(&trace(&[10.0, 20.0, 30.0]));
        assert_eq!(v, vec![0.0, 0.5, 1.0]);
    }

    #[test]
    fn normalize_constant_trace() {
        let (v, p) = normalize(&trace(&[42.0, 42.0]));
        assert_eq!(v, vec![0.0, 0.0]);
        assert_eq!(p, NormParams { min_w: 42.0, max_w: 42.0 });
        assert_eq!(denormalize(&v, &p), vec![42.0, 42.0]);
    }

    #[test]
    fn denormalize_examples() {
        let p = NormParams { min_w: 0.0, max_w: 100.0 };
        assert_eq!(denormalize(&[0.0, 1.0], &p), vec![0.0, 100.0]);
        let p = NormParams { min_w: 10.0, max_w: 30.0 };
        assert_eq!(denormalize(&[0.5], &p), vec![20.0]);
    }

    #[test]
    fn window_counts() {
        let seq = [0.0, 0.1, 0.2, 0.3, 0.4];
        let ds = make_windows(&seq, &labels(5), 3, 1).unwrap();
        assert_eq!(ds.len(), (5 - 3) / 1 + 1);

        let ds = make_windows(&seq[..3], &labels(3), 3, 1).unwrap();
        assert_eq!(ds.len(), 1);
        assert_eq!(ds.windows[0].values, seq[..3].to_vec());

        assert!(make_windows(&seq[..3], &labels(3), 4, 1).is_err());
    }

    #[test]
    fn split_examples() {
        let seq: Vec<f64> = (0..10).map(|i| i as f64 / 10.0).collect();
        let ds = make_windows(&seq, &labels(10), 1, 1).unwrap();
        let (train, test) = split_train_test(ds, 0.8).unwrap();
        assert_eq!((train.len(), test.len()), (8, 2));

        let ds = make_windows(&seq[..2], &labels(2), 1, 1).unwrap();
        let (train, test) = split_train_test(ds, 0.5).unwrap();
        assert_eq!((train.len(), test.len()), (1, 1));

        let ds = make_windows(&seq[..1], &labels(1), 1, 1).unwrap();
        assert!(split_train_test(ds, 0.8).is_err());
    }

    proptest! {
        #[test]
        fn normalize_round_trip(values in prop::collection::vec(0.0f64..5000.0, 1..200)) {
            let t = trace(&values);
            let (norm, params) = normalize(&t);
            prop_assert!(norm.iter().all(|v| (0.0..=1.0).contains(v)));
            let back = denormalize(&norm, &params);
            for (a, b) in values.iter().zip(&back) {
                prop_assert!((a - b).abs() <= 1e-9 * a.abs().max(1e-300) || (a - b).abs() < 1e-12);
            }
        }

        #[test]
        fn window_labels_align(
            len in 1usize..120,
            window_len in 1usize..20,
            stride in 1usize..7,
            seed in any::<u64>(),
        ) {
            prop_assume!(len >= window_len);
            let vals: Vec<f64> = (0..len).map(|i| i as f64 / len as f64).collect();
            let labs = OccupancyLabels::new(
                (0..len).map(|i| ((seed >> (i % 64)) & 1) as u8).collect()
            ).unwrap();
            let ds = make_windows(&vals, &labs, window_len, stride).unwrap();
            prop_assert_eq!(ds.len(), (len - window_len) / stride + 1);
            for w in &ds.windows {
                prop_assert_eq!(w.values.len(), window_len);
                prop_assert_eq!(w.label, labs.values[w.start + window_len - 1]);
            }
        }

        #[test]
        fn split_is_chronological(n in 2usize..200, f in 0.05f64..0.95) {
            let vals: Vec<f64> = (0..n).map(|i| i as f64).collect();
            let ds = make_windows(&vals, &labels(n), 1, 1).unwrap();
            match split_train_test(ds, f) {
                Ok((train, test)) => {
                    let last_train = train.windows.last().unwrap().start;
                    prop_assert!(test.windows.iter().all(|w| w.start >= last_train));
                    prop_assert_eq!(train.len(), (n as f64 * f).floor() as usize);
                }
                Err(_) => {
                    let k = (n as f64 * f).floor() as usize;
                    prop_assert!(k == 0 || k == n);
                }
            }
        }
    }
}
