//! Time-of-use (TOU) and peak-load pricing (PLP) tariffs.
//!
//! Rates are expressed per watt-sample: the bill of a frame is its summed
//! readings times the rate. At 1 Hz a watt-sample is one joule, so a price in
//! currency per kWh converts with [`rate_from_kwh_price`].

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::PowerTrace;
use crate::error::{Error, Result};

/// Relative tolerance under which two bills count as identical.
pub const BILL_REL_TOL: f64 = 1e-9;

/// Currency per watt-sample for a price per kWh at the given sample period.
pub fn rate_from_kwh_price(price_per_kwh: f64, sample_period_s: f64) -> f64 {
    price_per_kwh * sample_period_s / 3.6e6
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TouFrame {
    pub len: usize,
    pub rate: f64,
}

/// Frames of a TOU cycle. The cycle repeats until the trace is covered.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TouSchedule {
    pub frames: Vec<TouFrame>,
}

impl TouSchedule {
    pub fn validate(&self) -> Result<()> {
        if self.frames.is_empty() {
            return Err(Error::config("TOU schedule has no frames"));
        }
        if self.frames.iter().any(|f| f.len == 0) {
            return Err(Error::config("TOU frame lengths must be at least 1"));
        }
        if self.frames.iter().any(|f| !(f.rate >= 0.0 && f.rate.is_finite())) {
            return Err(Error::config("TOU rates must be non-negative"));
        }
        Ok(())
    }

    pub fn cycle_len(&self) -> usize {
        self.frames.iter().map(|f| f.len).sum()
    }
}

/// Consumption-bucket tariff: a frame totalling `m` is billed
/// `m * rates[j]` where `j` counts the thresholds `k <= m`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlpSchedule {
    pub frame_len: usize,
    pub thresholds: Vec<f64>,
    pub rates: Vec<f64>,
}

impl PlpSchedule {
    pub fn validate(&self) -> Result<()> {
        if self.frame_len == 0 {
            return Err(Error::config("PLP frame_len must be at least 1"));
        }
        if self.rates.len() != self.thresholds.len() + 1 {
            return Err(Error::config(format!(
                "PLP needs one more rate than thresholds ({} thresholds, {} rates)",
                self.thresholds.len(),
                self.rates.len()
            )));
        }
        if self.thresholds.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::config("PLP thresholds must be strictly increasing"));
        }
        if self.rates.iter().any(|r| !(*r >= 0.0 && r.is_finite())) {
            return Err(Error::config("PLP rates must be non-negative"));
        }
        Ok(())
    }

    /// Index of the rate that applies to a frame total.
    pub fn bucket(&self, m: f64) -> usize {
        self.thresholds.partition_point(|k| *k <= m)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum Tariff {
    Tou(TouSchedule),
    Plp(PlpSchedule),
}

impl Tariff {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let tariff: Tariff = serde_json::from_str(&text)?;
        tariff.validate()?;
        Ok(tariff)
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Tariff::Tou(s) => s.validate(),
            Tariff::Plp(s) => s.validate(),
        }
    }

    pub fn frame_lengths(&self) -> Vec<usize> {
        match self {
            Tariff::Tou(s) => s.frames.iter().map(|f| f.len).collect(),
            Tariff::Plp(s) => vec![s.frame_len],
        }
    }

    /// True when every frame boundary falls on a pair boundary.
    pub fn aligned_to(&self, pair_period: usize) -> bool {
        self.frame_lengths().iter().all(|len| len % pair_period == 0)
    }

    pub fn bill(&self, values: &[f64], pad_zero: bool) -> Result<f64> {
        self.validate()?;
        match self {
            Tariff::Tou(s) => {
                let frames = tou_frame_consumption(values, s, pad_zero)?;
                tou_bill(&frames, s)
            }
            Tariff::Plp(s) => {
                let frames = frame_consumption(values, s.frame_len, pad_zero)?;
                plp_bill(&frames, s)
            }
        }
    }
}

/// Summed readings per frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameConsumption {
    pub totals: Vec<f64>,
}

fn consumption_by_lengths(
    values: &[f64],
    lengths: impl Iterator<Item = usize>,
    cycle: usize,
    pad_zero: bool,
) -> Result<FrameConsumption> {
    if values.len() % cycle != 0 && !pad_zero {
        return Err(Error::config(format!(
            "trace length {} is not a multiple of the frame cycle {cycle}; pass pad_zero to zero-fill",
            values.len()
        )));
    }
    let mut totals = Vec::new();
    let mut pos = 0;
    for len in lengths {
        if pos >= values.len() {
            break;
        }
        let end = (pos + len).min(values.len());
        totals.push(values[pos..end].iter().sum());
        pos += len;
    }
    Ok(FrameConsumption { totals })
}

/// Splits readings into fixed-length frames. A trailing partial frame is an
/// error unless `pad_zero`, which completes it with zeros.
pub fn frame_consumption(values: &[f64], frame_length: usize, pad_zero: bool) -> Result<FrameConsumption> {
    if frame_length == 0 {
        return Err(Error::config("frame length must be at least 1"));
    }
    consumption_by_lengths(values, std::iter::repeat(frame_length), frame_length, pad_zero)
}

/// Frames following a TOU cycle, repeated as often as the trace needs.
pub fn tou_frame_consumption(values: &[f64], schedule: &TouSchedule, pad_zero: bool) -> Result<FrameConsumption> {
    schedule.validate()?;
    let mut frames = consumption_by_lengths(
        values,
        schedule.frames.iter().map(|f| f.len).cycle(),
        schedule.cycle_len(),
        pad_zero,
    )?;
    // A padded final cycle still bills every frame of the cycle.
    let n = schedule.frames.len();
    let rem = frames.totals.len() % n;
    if rem != 0 {
        frames.totals.resize(frames.totals.len() + n - rem, 0.0);
    }
    Ok(frames)
}

/// `sum_i rate_i * m_i`, with rates cycling over the schedule.
pub fn tou_bill(frames: &FrameConsumption, schedule: &TouSchedule) -> Result<f64> {
    schedule.validate()?;
    let n = schedule.frames.len();
    if frames.totals.is_empty() || frames.totals.len() % n != 0 {
        return Err(Error::LengthMismatch {
            expected: n,
            actual: frames.totals.len(),
        });
    }
    Ok(frames
        .totals
        .iter()
        .zip(schedule.frames.iter().cycle())
        .map(|(m, f)| m * f.rate)
        .sum())
}

pub fn plp_bill(frames: &FrameConsumption, schedule: &PlpSchedule) -> Result<f64> {
    schedule.validate()?;
    Ok(frames
        .totals
        .iter()
        .map(|m| m * schedule.rates[schedule.bucket(*m)])
        .sum())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BillingCheck {
    pub bill_original: f64,
    pub bill_perturbed: f64,
    pub delta: f64,
    pub invariant: bool,
}

/// Bills both traces under `tariff` and compares them.
pub fn billing_invariance_check(
    original: &PowerTrace,
    perturbed: &[f64],
    tariff: &Tariff,
    pad_zero: bool,
) -> Result<BillingCheck> {
    if perturbed.len() != original.len() {
        return Err(Error::LengthMismatch {
            expected: original.len(),
            actual: perturbed.len(),
        });
    }
    let bill_original = tariff.bill(&original.values, pad_zero)?;
    let bill_perturbed = tariff.bill(perturbed, pad_zero)?;
    let delta = bill_perturbed - bill_original;
    Ok(BillingCheck {
        bill_original,
        bill_perturbed,
        delta,
        invariant: delta.abs() <= BILL_REL_TOL * bill_original.abs(),
    })
}
