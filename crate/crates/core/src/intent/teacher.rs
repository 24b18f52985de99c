//! Synthetic teacher that labels prompts with preference vectors.

use std::collections::BTreeMap;

use rand_distr::{Distribution, Gamma};
use serde::{Deserialize, Serialize};

use super::embed::tokenize;
use super::grammar::Grammar;
use super::Prompt;
use crate::error::{Error, Result};
use crate::preference::PreferenceVector;
use crate::seed::rng_for;

/// Labels a prompt as `project(base[app] + sum of keyword shifts)`, then
/// perturbs it with Dirichlet noise centred on that vector.
///
/// The Dirichlet concentration is `1 / noise_scale^2`, so each component's
/// standard deviation is roughly `noise_scale * sqrt(w * (1 - w))`. The noise
/// stream is seeded from `(seed, application, text)`, making labels a pure
/// function of the prompt.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TeacherOracle {
    pub bases: BTreeMap<u32, [f64; 4]>,
    pub shifts: BTreeMap<String, [f64; 4]>,
    pub noise_scale: f64,
    pub seed: u64,
}

impl TeacherOracle {
    pub fn from_grammar(grammar: &Grammar, noise_scale: f64, seed: u64) -> Self {
        Self {
            bases: grammar.applications.iter().map(|a| (a.id, a.base)).collect(),
            shifts: grammar.keyword_shifts(),
            noise_scale,
            seed,
        }
    }

    /// The noiseless label: base shifted by keywords, projected.
    pub fn clean_label(&self, prompt: &Prompt) -> Result<PreferenceVector> {
        let base = self
            .bases
            .get(&prompt.application_id)
            .ok_or_else(|| Error::config(format!("teacher has no base for application {}", prompt.application_id)))?;
        let mut raw = *base;
        for token in tokenize(&prompt.text) {
            if let Some(shift) = self.shifts.get(&token) {
                for (r, s) in raw.iter_mut().zip(shift) {
                    *r += s;
                }
            }
        }
        Ok(PreferenceVector::project(raw))
    }

    pub fn translate(&self, prompt: &Prompt) -> Result<PreferenceVector> {
        let clean = self.clean_label(prompt)?;
        if self.noise_scale <= 0.0 {
            return Ok(clean);
        }
        let mut rng = rng_for(self.seed, &format!("teacher/{}/{}", prompt.application_id, prompt.text));
        let concentration = 1.0 / (self.noise_scale * self.noise_scale);
        let mut draw = [0.0; 4];
        for (d, w) in draw.iter_mut().zip(clean.weights()) {
            let gamma = Gamma::new(concentration * w, 1.0).map_err(|e| Error::domain(format!("gamma: {e}")))?;
            *d = gamma.sample(&mut rng);
        }
        let total: f64 = draw.iter().sum();
        if !(total > 0.0) {
            return Ok(clean);
        }
        Ok(PreferenceVector::project(draw.map(|d| d / total)))
    }
}

pub fn teacher_translate(oracle: &TeacherOracle, prompt: &Prompt) -> Result<PreferenceVector> {
    oracle.translate(prompt)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::preference::angular_distance;

    fn oracle(noise: f64) -> TeacherOracle {
        TeacherOracle::from_grammar(&Grammar::default(), noise, 17)
    }

    #[test]
    fn no_keywords_no_noise_is_base() {
        let o = oracle(0.0);
        let p = Prompt::new("Please write a market analysis report.", 1).unwrap();
        let base = Grammar::default().app(1).unwrap().base;
        let got = o.translate(&p).unwrap();
        for (g, b) in got.weights().iter().zip(&base) {
            assert!((g - b).abs() < 1e-12);
        }
    }

    #[test]
    fn keyword_shift_then_project() {
        let mut o = oracle(0.0);
        o.shifts.clear();
        o.shifts.insert("urgent".into(), [0.0, 0.0, 0.2, 0.0]);
        let p = Prompt::new("Answer a trivia question, this is urgent.", 2).unwrap();
        let base = o.bases[&2];
        let expected = PreferenceVector::project([base[0], base[1], base[2] + 0.2, base[3]]);
        assert_eq!(o.translate(&p).unwrap(), expected);
    }

    #[test]
    fn deterministic_and_noisy() {
        let o = oracle(0.05);
        let p = Prompt::new("Help me design a brand poster, keep it detailed.", 1).unwrap();
        let a = o.translate(&p).unwrap();
        assert_eq!(a, o.translate(&p).unwrap());
        let clean = o.clean_label(&p).unwrap();
        assert_ne!(a, clean);
        assert!(angular_distance(a, clean) < 0.1);
    }

    #[test]
    fn unknown_application_is_config_error() {
        let p = Prompt::new("hello", 42).unwrap();
        assert!(matches!(oracle(0.0).translate(&p), Err(Error::Config(_))));
    }
}
