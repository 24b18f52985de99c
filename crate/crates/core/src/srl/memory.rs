//! Recent-episode memory of the translator and outlier calibration.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::preference::{angular_distance, PreferenceVector};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MemoryEntry {
    pub prompt: String,
    pub preference: PreferenceVector,
    pub reward: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MemoryConfig {
    pub capacity: usize,
    /// Number of most recent entries consulted.
    pub k: usize,
}

impl Default for MemoryConfig {
    fn default() -> Self {
        Self { capacity: 64, k: 8 }
    }
}

/// Ring buffer of the last `capacity` episodes.
#[derive(Debug, Clone)]
pub struct ContextMemory {
    config: MemoryConfig,
    entries: VecDeque<MemoryEntry>,
}

impl ContextMemory {
    pub fn new(config: MemoryConfig) -> Result<Self> {
        if config.capacity == 0 || config.k == 0 || config.k > config.capacity {
            return Err(Error::config("memory needs 0 < k <= capacity"));
        }
        Ok(Self {
            config,
            entries: VecDeque::with_capacity(config.capacity),
        })
    }

    pub fn push(&mut self, entry: MemoryEntry) {
        if self.entries.len() == self.config.capacity {
            self.entries.pop_front();
        }
        self.entries.push_back(entry);
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Up to `k` most recent entries, oldest first.
    pub fn recent(&self) -> impl Iterator<Item = &MemoryEntry> {
        let skip = self.entries.len().saturating_sub(self.config.k);
        self.entries.iter().skip(skip)
    }

    /// Mean of the recent preferences.
    pub fn recent_mean(&self) -> Option<PreferenceVector> {
        if self.is_empty() {
            return None;
        }
        PreferenceVector::mean(self.recent().map(|e| &e.preference)).ok()
    }

    /// Mean angular distance of the recent preferences to their mean.
    pub fn spread(&self) -> Option<f64> {
        let mean = self.recent_mean()?;
        let n = self.recent().count() as f64;
        Some(self.recent().map(|e| angular_distance(e.preference, mean)).sum::<f64>() / n)
    }

    /// Least-squares slope of the recent rewards against their order; `None`
    /// with fewer than two entries.
    pub fn reward_trend(&self) -> Option<f64> {
        let r: Vec<f64> = self.recent().map(|e| e.reward).collect();
        if r.len() < 2 {
            return None;
        }
        let n = r.len() as f64;
        let x_mean = (n - 1.0) / 2.0;
        let y_mean = r.iter().sum::<f64>() / n;
        let (mut sxy, mut sxx) = (0.0, 0.0);
        for (i, y) in r.iter().enumerate() {
            let dx = i as f64 - x_mean;
            sxy += dx * (y - y_mean);
            sxx += dx * dx;
        }
        Some(sxy / sxx)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CalibrationConfig {
    pub enabled: bool,
    /// Angular distance up to which a prediction is kept as is.
    pub d0: f64,
    /// Distance at and beyond which the blend weight bottoms out.
    pub d1: f64,
    pub iota_min: f64,
}

impl Default for CalibrationConfig {
    fn default() -> Self {
        Self {
            enabled: true,
            d0: 0.1,
            d1: 0.4,
            iota_min: 0.3,
        }
    }
}

impl CalibrationConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0 <= self.d0 && self.d0 < self.d1 && self.d1.is_finite()) {
            return Err(Error::config("calibration needs 0 <= d0 < d1"));
        }
        if !(0.0..=1.0).contains(&self.iota_min) {
            return Err(Error::config("iota_min must lie in [0, 1]"));
        }
        Ok(())
    }

    /// Weight on the prediction: 1 up to `d0`, linear down to `iota_min` at
    /// `d1`, flat beyond.
    pub fn iota(&self, distance: f64) -> f64 {
        if distance <= self.d0 {
            1.0
        } else if distance >= self.d1 {
            self.iota_min
        } else {
            1.0 - (1.0 - self.iota_min) * (distance - self.d0) / (self.d1 - self.d0)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CalibrationMode {
    /// Disabled or nothing to compare against.
    Identity,
    /// Recent memory is consistent with rising rewards and the prediction
    /// agrees with it.
    Confident,
    /// Prediction within `d0` of memory that does not meet the confidence
    /// conditions.
    Consistent,
    /// Prediction shrunk towards the recent mean.
    Shrunk,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Calibrated {
    pub preference: PreferenceVector,
    pub iota: f64,
    pub distance: f64,
    pub mode: CalibrationMode,
}

/// `iota * s_pred + (1 - iota) * s_recent`, re-projected onto the simplex.
pub fn calibrate(s_pred: &PreferenceVector, memory: &ContextMemory, cfg: &CalibrationConfig) -> Calibrated {
    let identity = Calibrated {
        preference: *s_pred,
        iota: 1.0,
        distance: 0.0,
        mode: CalibrationMode::Identity,
    };
    if !cfg.enabled {
        return identity;
    }
    let Some(s_bar) = memory.recent_mean() else {
        return identity;
    };
    let distance = angular_distance(s_pred, s_bar);
    let iota = cfg.iota(distance);
    if iota >= 1.0 {
        let confident = memory.spread().is_some_and(|s| s <= cfg.d0) && memory.reward_trend().is_some_and(|t| t > 0.0);
        return Calibrated {
            preference: *s_pred,
            iota: 1.0,
            distance,
            mode: if confident { CalibrationMode::Confident } else { CalibrationMode::Consistent },
        };
    }
    let mut blend = [0.0; 4];
    for (i, b) in blend.iter_mut().enumerate() {
        *b = iota * s_pred.weights()[i] + (1.0 - iota) * s_bar.weights()[i];
    }
    Calibrated {
        preference: PreferenceVector::project(blend),
        iota,
        distance,
        mode: CalibrationMode::Shrunk,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn entry(w: [f64; 4], reward: f64) -> MemoryEntry {
        MemoryEntry {
            prompt: String::new(),
            preference: PreferenceVector::project(w),
            reward,
        }
    }

    fn memory_of(ws: &[[f64; 4]]) -> ContextMemory {
        let mut m = ContextMemory::new(MemoryConfig::default()).unwrap();
        for (i, w) in ws.iter().enumerate() {
            m.push(entry(*w, i as f64));
        }
        m
    }

    #[test]
    fn empty_memory_is_identity() {
        let m = ContextMemory::new(MemoryConfig::default()).unwrap();
        let s = PreferenceVector::project([0.7, 0.1, 0.1, 0.1]);
        let c = calibrate(&s, &m, &CalibrationConfig::default());
        assert_eq!(c.preference, s);
        assert_eq!(c.mode, CalibrationMode::Identity);
    }

    #[test]
    fn prediction_at_the_mean_is_unchanged() {
        let m = memory_of(&[[0.4, 0.3, 0.2, 0.1]; 5]);
        let s = m.recent_mean().unwrap();
        let c = calibrate(&s, &m, &CalibrationConfig::default());
        assert_eq!(c.preference, s);
        assert_eq!(c.mode, CalibrationMode::Confident);
    }

    #[test]
    fn far_prediction_gets_the_floor_blend() {
        let m = memory_of(&[[0.85, 0.05, 0.05, 0.05]; 3]);
        let s = PreferenceVector::project([0.01, 0.01, 0.97, 0.01]);
        let s_bar = m.recent_mean().unwrap();
        let d = angular_distance(s, s_bar);
        assert!(d >= 0.4, "distance {d}");
        let c = calibrate(&s, &m, &CalibrationConfig::default());
        assert_eq!(c.iota, 0.3);
        assert_eq!(c.mode, CalibrationMode::Shrunk);
        for i in 0..4 {
            assert_relative_eq!(
                c.preference.weights()[i],
                0.3 * s.weights()[i] + 0.7 * s_bar.weights()[i],
                epsilon = 1e-12
            );
        }
    }

    #[test]
    fn schedule_is_linear_between_thresholds() {
        let c = CalibrationConfig::default();
        assert_eq!(c.iota(0.05), 1.0);
        assert_relative_eq!(c.iota(0.25), 0.65, epsilon = 1e-12);
        assert_eq!(c.iota(0.9), 0.3);
    }

    #[test]
    fn ring_keeps_the_latest_entries() {
        let mut m = ContextMemory::new(MemoryConfig { capacity: 3, k: 2 }).unwrap();
        for i in 0..5 {
            m.push(entry([0.25; 4], i as f64));
        }
        assert_eq!(m.len(), 3);
        assert_eq!(m.recent().map(|e| e.reward).collect::<Vec<_>>(), vec![3.0, 4.0]);
        assert_relative_eq!(m.reward_trend().unwrap(), 1.0);
        assert!(ContextMemory::new(MemoryConfig { capacity: 2, k: 3 }).is_err());
    }

    proptest! {
        #[test]
        fn calibrated_output_stays_on_the_simplex(
            raw in prop::array::uniform4(0.0f64..1.0),
            hist in prop::collection::vec(prop::array::uniform4(0.0f64..1.0), 0..10),
        ) {
            let m = memory_of(&hist);
            let c = calibrate(&PreferenceVector::project(raw), &m, &CalibrationConfig::default());
            prop_assert!(PreferenceVector::new(*c.preference.weights()).is_ok());
            prop_assert!((0.0..=1.0).contains(&c.iota));
        }
    }
}
