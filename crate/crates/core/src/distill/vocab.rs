use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::preference::PreferenceVector;

/// Squared distances closer than this are treated as ties.
const TIE_EPS: f64 = 1e-12;

/// Quantized simplex: every vector whose coordinates are multiples of `step`
/// and sum to one, with the floor applied by projection.
#[derive(Debug, Clone, PartialEq)]
pub struct PreferenceVocab {
    step: f64,
    levels: u32,
    entries: Vec<PreferenceVector>,
    by_counts: HashMap<[u32; 4], usize>,
}

impl PreferenceVocab {
    pub fn new(step: f64) -> Result<Self> {
        let levels = (1.0 / step).round();
        if !(step > 0.0 && step <= 1.0) || ((levels * step) - 1.0).abs() > 1e-9 {
            return Err(Error::config(format!("vocabulary step {step} must divide 1")));
        }
        let levels = levels as u32;
        let mut entries = Vec::new();
        let mut by_counts = HashMap::new();
        for a in 0..=levels {
            for b in 0..=levels - a {
                for c in 0..=levels - a - b {
                    let d = levels - a - b - c;
                    let counts = [a, b, c, d];
                    by_counts.insert(counts, entries.len());
                    entries.push(PreferenceVector::project(counts.map(|k| k as f64 / levels as f64)));
                }
            }
        }
        Ok(Self {
            step,
            levels,
            entries,
            by_counts,
        })
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entry(&self, idx: usize) -> &PreferenceVector {
        &self.entries[idx]
    }

    pub fn entries(&self) -> &[PreferenceVector] {
        &self.entries
    }

    /// Index of the grid point with the given integer coordinates.
    pub fn index_of_counts(&self, counts: [u32; 4]) -> Option<usize> {
        if counts.iter().sum::<u32>() != self.levels {
            return None;
        }
        self.by_counts.get(&counts).copied()
    }

    /// Nearest entry by Euclidean distance; ties go to the lowest index.
    pub fn snap(&self, s: &PreferenceVector) -> usize {
        let w = s.weights();
        let mut best = (0, f64::INFINITY);
        for (i, e) in self.entries.iter().enumerate() {
            let d: f64 = e.weights().iter().zip(w).map(|(a, b)| (a - b) * (a - b)).sum();
            if d < best.1 - TIE_EPS {
                best = (i, d);
            }
        }
        best.0
    }
}

impl PreferenceVocab {
    /// Gaussian features of every entry against the entries of a coarser
    /// anchor grid: `exp(-|e_j - a_k|^2 / (2 bandwidth^2))`, shape `len x anchors`.
    pub fn rbf_basis(&self, anchor_step: f64, bandwidth: f64) -> Result<crate::nn::Matrix> {
        if !(bandwidth > 0.0) {
            return Err(Error::config("basis bandwidth must be positive"));
        }
        let anchors = PreferenceVocab::new(anchor_step)?;
        let k = anchors.len();
        let mut data = Vec::with_capacity(self.len() * k);
        for e in &self.entries {
            for a in &anchors.entries {
                let d2: f64 = e.weights().iter().zip(a.weights()).map(|(x, y)| (x - y) * (x - y)).sum();
                data.push((-d2 / (2.0 * bandwidth * bandwidth)).exp());
            }
        }
        crate::nn::Matrix::from_vec(self.len(), k, data)
    }
}

pub fn snap_to_vocab(vocab: &PreferenceVocab, s: &PreferenceVector) -> usize {
    vocab.snap(s)
}
