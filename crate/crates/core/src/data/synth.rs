use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{OccupancyLabels, PowerTrace};
use crate::error::{Error, Result};

const SECONDS_PER_DAY: u32 = 86_400;

/// 2012-11-01T00:00:00Z, the first day of the ECO winter period.
pub const SYNTH_START_TIME: i64 = 1_351_728_000;

/// Per-second probability that the active appliance changes while occupied.
const SWITCH_PROBABILITY: f64 = 0.15;

/// Deterministic household generator settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub day_count: u32,
    pub base_load_w: f64,
    pub appliance_burst_w: f64,
    /// `[start, end)` in seconds after midnight, repeated every day.
    pub occupied_intervals: Vec<(u32, u32)>,
    pub noise_std_w: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            day_count: 1,
            base_load_w: 120.0,
            appliance_burst_w: 800.0,
            occupied_intervals: vec![(6 * 3600, 9 * 3600), (12 * 3600, 14 * 3600), (17 * 3600, 23 * 3600)],
            noise_std_w: 2.0,
            seed: 7,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.day_count == 0 {
            return Err(Error::config("day_count must be at least 1"));
        }
        for (name, w) in [
            ("base_load_w", self.base_load_w),
            ("appliance_burst_w", self.appliance_burst_w),
            ("noise_std_w", self.noise_std_w),
        ] {
            if !(w.is_finite() && w >= 0.0) {
                return Err(Error::config(format!("{name} must be a non-negative wattage")));
            }
        }
        let mut intervals = self.occupied_intervals.clone();
        intervals.sort_unstable();
        for &(start, end) in &intervals {
            if start >= end || end > SECONDS_PER_DAY {
                return Err(Error::config(format!(
                    "occupied interval {start}..{end} is empty or exceeds one day"
                )));
            }
        }
        if let Some(w) = intervals.windows(2).find(|w| w[1].0 < w[0].1) {
            return Err(Error::config(format!(
                "occupied intervals {:?} and {:?} overlap",
                w[0], w[1]
            )));
        }
        Ok(())
    }

    fn occupied_at(&self, second_of_day: u32) -> bool {
        self.occupied_intervals
            .iter()
            .any(|&(start, end)| (start..end).contains(&second_of_day))
    }
}

/// Generates a 1 Hz household trace with aligned occupancy labels.
///
/// The base load and sensor noise are always present. While occupied, an
/// appliance process switches between off and a random fraction of
/// `appliance_burst_w`.
pub fn synth_household(config: &SynthConfig) -> Result<(PowerTrace, OccupancyLabels)> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let noise = Normal::new(0.0, config.noise_std_w).map_err(|e| Error::config(e.to_string()))?;

    let n = (config.day_count * SECONDS_PER_DAY) as usize;
    let mut values = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    let mut appliance_w = 0.0;
    for i in 0..n {
        let occupied = config.occupied_at(i as u32 % SECONDS_PER_DAY);
        // Draw unconditionally so the noise stream does not depend on occupancy.
        let switch: f64 = rng.random();
        let on: bool = rng.random();
        let fraction: f64 = rng.random_range(0.1..1.0);
        let sensor = noise.sample(&mut rng);
        if occupied {
            if switch < SWITCH_PROBABILITY {
                appliance_w = if on { config.appliance_burst_w * fraction } else { 0.0 };
            }
        } else {
            appliance_w = 0.0;
        }
        values.push((config.base_load_w + appliance_w + sensor).max(0.0));
        labels.push(occupied as u8);
    }
    Ok((
        PowerTrace::new(SYNTH_START_TIME, 1.0, values)?,
        OccupancyLabels::new(labels)?,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_same_trace() {
        let cfg = SynthConfig::default();
        assert_eq!(synth_household(&cfg).unwrap(), synth_household(&cfg).unwrap());
        let other = SynthConfig { seed: 8, ..cfg.clone() };
        assert_ne!(synth_household(&cfg).unwrap().0, synth_household(&other).unwrap().0);
    }

    #[test]
    fn no_occupancy_is_base_load_plus_noise() {
        let cfg = SynthConfig {
            occupied_intervals: vec![],
            ..SynthConfig::default()
        };
        let (trace, labels) = synth_household(&cfg).unwrap();
        assert!(labels.values.iter().all(|l| *l == 0));
        let mean = trace.total() / trace.len() as f64;
        assert!((mean - cfg.base_load_w).abs() < 0.1);
        assert!(trace
            .values
            .iter()
            .all(|v| (v - cfg.base_load_w).abs() < 8.0 * cfg.noise_std_w));
    }

    #[test]
    fn full_day_occupancy() {
        let cfg = SynthConfig {
            occupied_intervals: vec![(0, SECONDS_PER_DAY)],
            day_count: 2,
            ..SynthConfig::default()
        };
        let (trace, labels) = synth_household(&cfg).unwrap();
        assert_eq!(trace.len(), 2 * 86_400);
        assert!(labels.values.iter().all(|l| *l == 1));
    }

    #[test]
    fn labels_follow_intervals() {
        let cfg = SynthConfig::default();
        let (_, labels) = synth_household(&cfg).unwrap();
        assert_eq!(labels.values[6 * 3600 - 1], 0);
        assert_eq!(labels.values[6 * 3600], 1);
        assert_eq!(labels.values[9 * 3600 - 1], 1);
        assert_eq!(labels.values[9 * 3600], 0);
    }

    #[test]
    fn invalid_configs() {
        let overlapping = SynthConfig {
            occupied_intervals: vec![(100, 200), (150, 300)],
            ..SynthConfig::default()
        };
        assert!(matches!(synth_household(&overlapping), Err(Error::Config(_))));
        let no_days = SynthConfig {
            day_count: 0,
            ..SynthConfig::default()
        };
        assert!(synth_household(&no_days).is_err());
        let negative = SynthConfig {
            base_load_w: -1.0,
            ..SynthConfig::default()
        };
        assert!(synth_household(&negative).is_err());
    }
}
