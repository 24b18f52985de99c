//! The four-component subjective preference vector `[w_C, w_B, w_L, w_P]`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Lower bound applied to every component after projection.
pub const OMEGA_MIN: f64 = 1e-3;

/// Tolerance on the unit-sum constraint.
pub const SUM_TOL: f64 = 1e-9;

pub const CAPABILITY: usize = 0;
pub const INFO_LOSS: usize = 1;
pub const LATENCY: usize = 2;
pub const OUTAGE: usize = 3;

/// Weights over capability, information loss, latency and outage.
///
/// Always on the probability simplex with every component at least
/// [`OMEGA_MIN`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 4]", into = "[f64; 4]")]
pub struct PreferenceVector([f64; 4]);

impl PreferenceVector {
    /// Validates an already-normalized weight vector.
    pub fn new(weights: [f64; 4]) -> Result<Self> {
        if weights.iter().any(|w| !w.is_finite()) {
            return Err(Error::domain("preference weights must be finite"));
        }
        if weights.iter().any(|&w| w < OMEGA_MIN - 1e-12) {
            return Err(Error::domain(format!(
                "preference weight below floor {OMEGA_MIN}: {weights:?}"
            )));
        }
        let sum: f64 = weights.iter().sum();
        if (sum - 1.0).abs() > SUM_TOL {
            return Err(Error::domain(format!("preference weights sum to {sum}, not 1")));
        }
        Ok(Self(weights))
    }

    /// Projects arbitrary finite weights onto the floored simplex.
    ///
    /// Subtracts the floor, clips at zero, renormalizes the remainder to
    /// `1 - 4 * OMEGA_MIN` and adds the floor back. Valid vectors are fixed
    /// points. An all-nonpositive remainder maps to the even vector.
    pub fn project(raw: [f64; 4]) -> Self {
        let mut excess = [0.0; 4];
        for (e, &w) in excess.iter_mut().zip(&raw) {
            *e = if w.is_finite() { (w - OMEGA_MIN).max(0.0) } else { 0.0 };
        }
        let total: f64 = excess.iter().sum();
        if total <= 0.0 {
            return Self::even();
        }
        let budget = 1.0 - 4.0 * OMEGA_MIN;
        let mut out = [0.0; 4];
        for (o, e) in out.iter_mut().zip(&excess) {
            *o = OMEGA_MIN + budget * e / total;
        }
        Self(out)
    }

    pub fn even() -> Self {
        Self([0.25; 4])
    }

    pub fn weights(&self) -> &[f64; 4] {
        &self.0
    }

    pub fn capability(&self) -> f64 {
        self.0[CAPABILITY]
    }

    pub fn info_loss(&self) -> f64 {
        self.0[INFO_LOSS]
    }

    pub fn latency(&self) -> f64 {
        self.0[LATENCY]
    }

    pub fn outage(&self) -> f64 {
        self.0[OUTAGE]
    }

    /// Index of the largest weight, then the second largest (ties by lower index).
    pub fn ranked_components(&self) -> [usize; 4] {
        let mut idx = [0, 1, 2, 3];
        idx.sort_by(|&a, &b| self.0[b].total_cmp(&self.0[a]).then(a.cmp(&b)));
        idx
    }

    /// Component-wise arithmetic mean, re-projected.
    pub fn mean<'a>(vectors: impl IntoIterator<Item = &'a PreferenceVector>) -> Result<Self> {
        let mut acc = [0.0; 4];
        let mut n = 0usize;
        for v in vectors {
            for (a, w) in acc.iter_mut().zip(&v.0) {
                *a += w;
            }
            n += 1;
        }
        if n == 0 {
            return Err(Error::Size("mean of an empty preference set".into()));
        }
        Ok(Self::project(acc.map(|a| a / n as f64)))
    }
}

impl TryFrom<[f64; 4]> for PreferenceVector {
    type Error = Error;

    fn try_from(value: [f64; 4]) -> Result<Self> {
        Self::new(value)
    }
}

impl From<PreferenceVector> for [f64; 4] {
    fn from(v: PreferenceVector) -> Self {
        v.0
    }
}

impl AsRef<[f64]> for PreferenceVector {
    fn as_ref(&self) -> &[f64] {
        &self.0
    }
}

/// Cosine similarity of two equal-length vectors; 0 if either is all-zero.
pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut dot = 0.0;
    let mut na = 0.0;
    let mut nb = 0.0;
    for (x, y) in a.iter().zip(b) {
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    // sqrt(na * nb) rather than sqrt(na) * sqrt(nb): exact for a == b.
    (dot / (na * nb).sqrt()).clamp(-1.0, 1.0)
}

/// Angle between two vectors divided by pi, in `[0, 1]`; at most 0.5 for
/// non-negative inputs.
pub fn angular_distance(a: impl AsRef<[f64]>, b: impl AsRef<[f64]>) -> f64 {
    cosine(a.as_ref(), b.as_ref()).acos() / std::f64::consts::PI
}
