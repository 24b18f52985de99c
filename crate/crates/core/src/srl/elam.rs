//! The market of edge intent translators the policy can call.

use std::sync::Arc;

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::distill::{Prediction, StudentModel};
use crate::error::{Error, Result};
use crate::intent::Prompt;
use crate::preference::PreferenceVector;

#[derive(Debug, Clone)]
pub enum Translator {
    /// A distilled student; predictions below `p_min` count as failures.
    Student { model: Arc<StudentModel>, p_min: f64 },
    /// The user's true preference plus Gaussian noise, re-projected.
    Noisy { sigma: f64 },
    /// Always the same vector.
    Constant(PreferenceVector),
}

#[derive(Debug, Clone)]
pub struct ElamProfile {
    pub id: String,
    pub fee: f64,
    pub translator: Translator,
}

impl ElamProfile {
    pub fn new(id: impl Into<String>, fee: f64, translator: Translator) -> Result<Self> {
        if !(fee.is_finite() && fee >= 0.0) {
            return Err(Error::config(format!("fee {fee} must be finite and non-negative")));
        }
        if let Translator::Noisy { sigma } = translator {
            if !(sigma.is_finite() && sigma >= 0.0) {
                return Err(Error::config("translator noise must be non-negative"));
            }
        }
        Ok(Self {
            id: id.into(),
            fee,
            translator,
        })
    }

    /// Even-vector stub at no cost.
    pub fn even_stub() -> Self {
        Self {
            id: "even".into(),
            fee: 0.0,
            translator: Translator::Constant(PreferenceVector::even()),
        }
    }

    /// Translates a prompt; `None` is a failed translation. `truth` is only
    /// read by the noisy stub.
    pub fn translate<R: Rng>(&self, prompt: &Prompt, truth: &PreferenceVector, rng: &mut R) -> Option<PreferenceVector> {
        match &self.translator {
            Translator::Student { model, p_min } => match model.predict(prompt, *p_min) {
                Prediction::Vector { preference, .. } => Some(preference),
                Prediction::Failure { .. } => None,
            },
            Translator::Noisy { sigma } => {
                if *sigma == 0.0 {
                    return Some(*truth);
                }
                let normal = Normal::new(0.0, *sigma).expect("validated sigma");
                let mut w = *truth.weights();
                w.iter_mut().for_each(|v| *v += normal.sample(rng));
                Some(PreferenceVector::project(w))
            }
            Translator::Constant(s) => Some(*s),
        }
    }
}

/// Two distilled students with fees proportional to their hidden width, plus
/// the free even stub.
pub fn default_market(small: StudentModel, large: StudentModel, p_min: f64, fee_per_unit: f64) -> Result<Vec<ElamProfile>> {
    let mut out = Vec::with_capacity(3);
    for (name, m) in [("small", small), ("large", large)] {
        let fee = fee_per_unit * m.hidden() as f64;
        out.push(ElamProfile::new(
            name,
            fee,
            Translator::Student {
                model: Arc::new(m),
                p_min,
            },
        )?);
    }
    out.push(ElamProfile::even_stub());
    Ok(out)
}
