use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::vocab::PreferenceVocab;
use crate::error::{Error, Result};
use crate::intent::{Embedder, EmbeddingVector, Prompt};
use crate::nn::{glorot_uniform, log_softmax, Matrix, ParamBundle};
use crate::preference::PreferenceVector;
use crate::seed::rng_for;

pub(crate) const W1: usize = 0;
pub(crate) const B1: usize = 1;
pub(crate) const W2: usize = 2;
pub(crate) const B2: usize = 3;

/// Capacity profile of the student translator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StudentSize {
    Small,
    Large,
}

impl StudentSize {
    pub fn hidden(self) -> usize {
        match self {
            StudentSize::Small => 32,
            StudentSize::Large => 128,
        }
    }
}

/// Basis over which the head spreads each logit; see [`StudentModel`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HeadBasis {
    pub anchor_step: f64,
    pub bandwidth: f64,
}

impl Default for HeadBasis {
    fn default() -> Self {
        Self {
            anchor_step: 0.1,
            bandwidth: 0.1,
        }
    }
}

/// Forward intermediates for one input.
#[derive(Debug, Clone)]
pub(crate) struct Encoded {
    pub h: Vec<f64>,
    /// Activation derivative at each hidden unit.
    pub dact: Vec<f64>,
    /// Head coordinates `h * W_head + b_head`, one per anchor.
    pub g: Vec<f64>,
}

/// Prompt embedding -> tanh hidden layer -> one logit per vocabulary entry.
///
/// The head is an affine map from the hidden layer to the vocabulary logits,
/// factorised through fixed Gaussian features of each entry:
/// `z = (h W + b) Phi^T`. Raising one entry's logit therefore raises its
/// neighbours too, so entries never seen in training are not left at their
/// initial values while trained ones drift only relative to each other.
#[derive(Debug, Clone)]
pub struct StudentModel {
    pub(crate) params: ParamBundle,
    embedder: Embedder,
    vocab: PreferenceVocab,
    head_basis: HeadBasis,
    basis: Arc<Matrix>,
}

impl PartialEq for StudentModel {
    fn eq(&self, other: &Self) -> bool {
        self.params == other.params && self.embedder == other.embedder && self.vocab == other.vocab && self.head_basis == other.head_basis
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Prediction {
    Vector { preference: PreferenceVector, index: usize, prob: f64 },
    /// No vocabulary entry reached the confidence threshold.
    Failure { max_prob: f64 },
}

impl Prediction {
    pub fn preference(&self) -> Option<PreferenceVector> {
        match self {
            Prediction::Vector { preference, .. } => Some(*preference),
            Prediction::Failure { .. } => None,
        }
    }
}

impl StudentModel {
    pub fn new(hidden: usize, vocab: PreferenceVocab, embedder: Embedder, head_basis: HeadBasis, seed: u64) -> Result<Self> {
        if hidden == 0 {
            return Err(Error::config("student hidden width must be positive"));
        }
        let basis = Arc::new(vocab.rbf_basis(head_basis.anchor_step, head_basis.bandwidth)?);
        let mut rng = rng_for(seed, "distill/init");
        let mut params = ParamBundle::new();
        params.add("encoder.w", glorot_uniform(embedder.dim(), hidden, &mut rng))?;
        params.add("encoder.b", Matrix::zeros(1, hidden))?;
        params.add("head.w", glorot_uniform(hidden, basis.cols(), &mut rng))?;
        params.add("head.b", Matrix::zeros(1, basis.cols()))?;
        Ok(Self {
            params,
            embedder,
            vocab,
            head_basis,
            basis,
        })
    }

    pub fn with_size(size: StudentSize, vocab: PreferenceVocab, seed: u64) -> Result<Self> {
        Self::new(size.hidden(), vocab, Embedder::default(), HeadBasis::default(), seed)
    }

    /// Rebuilds a model around previously saved parameters.
    pub fn from_params(params: ParamBundle, vocab: PreferenceVocab, embedder: Embedder, head_basis: HeadBasis) -> Result<Self> {
        let basis = Arc::new(vocab.rbf_basis(head_basis.anchor_step, head_basis.bandwidth)?);
        let shapes: Vec<_> = params.iter().map(|p| p.value.shape()).collect();
        let ok = shapes.len() == 4
            && shapes[W1].0 == embedder.dim()
            && shapes[B1] == (1, shapes[W1].1)
            && shapes[W2] == (shapes[W1].1, basis.cols())
            && shapes[B2] == (1, basis.cols());
        if !ok {
            return Err(Error::structural(format!("checkpoint shapes {shapes:?} do not fit the vocabulary")));
        }
        Ok(Self {
            params,
            embedder,
            vocab,
            head_basis,
            basis,
        })
    }

    pub fn hidden(&self) -> usize {
        self.params.get(W1).cols()
    }

    pub fn vocab(&self) -> &PreferenceVocab {
        &self.vocab
    }

    pub fn head_basis(&self) -> HeadBasis {
        self.head_basis
    }

    pub fn embedder(&self) -> &Embedder {
        &self.embedder
    }

    pub fn params(&self) -> &ParamBundle {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamBundle {
        &mut self.params
    }

    pub fn embed(&self, prompt: &Prompt) -> EmbeddingVector {
        self.embedder.embed(&prompt.text)
    }

    pub(crate) fn encode(&self, x: &[f64]) -> Encoded {
        let w1 = self.params.get(W1);
        let mut pre = self.params.get(B1).as_slice().to_vec();
        for (k, &xk) in x.iter().enumerate() {
            if xk == 0.0 {
                continue;
            }
            for (p, w) in pre.iter_mut().zip(w1.row(k)) {
                *p += xk * w;
            }
        }
        let h: Vec<f64> = pre.iter().map(|v| v.tanh()).collect();
        let dact = h.iter().map(|t| 1.0 - t * t).collect();
        let w2 = self.params.get(W2);
        let mut g = self.params.get(B2).as_slice().to_vec();
        for (i, &hi) in h.iter().enumerate() {
            for (gk, w) in g.iter_mut().zip(w2.row(i)) {
                *gk += hi * w;
            }
        }
        Encoded { h, dact, g }
    }

    /// A single logit, without materialising the whole row.
    pub(crate) fn logit_at(&self, enc: &Encoded, j: usize) -> f64 {
        self.basis.row(j).iter().zip(&enc.g).map(|(phi, g)| phi * g).sum()
    }

    pub(crate) fn logits_from(&self, enc: &Encoded) -> Vec<f64> {
        (0..self.basis.rows()).map(|j| self.logit_at(enc, j)).collect()
    }

    /// Accumulates parameter gradients given sparse logit gradients `dz`.
    pub(crate) fn backward(&self, x: &[f64], enc: &Encoded, dz: &[(usize, f64)], grads: &mut [Matrix]) {
        let k = self.basis.cols();
        let mut dg = vec![0.0; k];
        for &(j, d) in dz {
            for (g, phi) in dg.iter_mut().zip(self.basis.row(j)) {
                *g += d * phi;
            }
        }
        self.backward_head(x, enc, &dg, grads);
    }

    /// Same as [`Self::backward`] for a dense logit gradient.
    pub(crate) fn backward_dense(&self, x: &[f64], enc: &Encoded, dz: &[f64], grads: &mut [Matrix]) {
        let k = self.basis.cols();
        let mut dg = vec![0.0; k];
        for (j, &d) in dz.iter().enumerate() {
            if d == 0.0 {
                continue;
            }
            for (g, phi) in dg.iter_mut().zip(self.basis.row(j)) {
                *g += d * phi;
            }
        }
        self.backward_head(x, enc, &dg, grads);
    }

    fn backward_head(&self, x: &[f64], enc: &Encoded, dg: &[f64], grads: &mut [Matrix]) {
        let hidden = self.hidden();
        let k = dg.len();
        let w2 = self.params.get(W2);
        let mut dh = vec![0.0; hidden];
        {
            let dw2 = grads[W2].as_mut_slice();
            for i in 0..hidden {
                let row = &mut dw2[i * k..(i + 1) * k];
                for ((o, d), w) in row.iter_mut().zip(dg).zip(w2.row(i)) {
                    *o += enc.h[i] * d;
                    dh[i] += w * d;
                }
            }
        }
        for (b, d) in grads[B2].as_mut_slice().iter_mut().zip(dg) {
            *b += d;
        }
        let dpre: Vec<f64> = dh.iter().zip(&enc.dact).map(|(d, a)| d * a).collect();
        for (b, d) in grads[B1].as_mut_slice().iter_mut().zip(&dpre) {
            *b += d;
        }
        let dw1 = grads[W1].as_mut_slice();
        for (kx, &xk) in x.iter().enumerate() {
            if xk == 0.0 {
                continue;
            }
            for (w, d) in dw1[kx * hidden..(kx + 1) * hidden].iter_mut().zip(&dpre) {
                *w += xk * d;
            }
        }
    }

    pub fn logits(&self, prompt: &Prompt) -> Vec<f64> {
        let x = self.embed(prompt);
        self.logits_from(&self.encode(x.values()))
    }

    pub fn log_probs(&self, prompt: &Prompt) -> Vec<f64> {
        log_softmax(&self.logits(prompt), None)
    }

    /// `log pi(s | prompt)` at the vocabulary entry nearest to `s`.
    pub fn policy_logprob(&self, prompt: &Prompt, s: &PreferenceVector) -> f64 {
        self.log_probs(prompt)[self.vocab.snap(s)]
    }

    pub(crate) fn predict_embedded(&self, x: &[f64], p_min: f64) -> Prediction {
        let lp = log_softmax(&self.logits_from(&self.encode(x)), None);
        let (index, best) = lp
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |acc, (i, &v)| if v > acc.1 { (i, v) } else { acc });
        let prob = best.exp();
        if prob < p_min {
            Prediction::Failure { max_prob: prob }
        } else {
            Prediction::Vector {
                preference: *self.vocab.entry(index),
                index,
                prob,
            }
        }
    }

    /// Most probable vocabulary entry, or a failure when its probability is
    /// below `p_min`.
    pub fn predict(&self, prompt: &Prompt, p_min: f64) -> Prediction {
        self.predict_embedded(self.embed(prompt).values(), p_min)
    }
}

/// Frozen snapshot of a student, used as the distillation anchor.
#[derive(Debug, Clone, PartialEq)]
pub struct ReferencePolicy(StudentModel);

impl ReferencePolicy {
    pub fn freeze(model: &StudentModel) -> Self {
        let mut frozen = model.clone();
        frozen.params = model.params.snapshot();
        Self(frozen)
    }

    pub fn model(&self) -> &StudentModel {
        &self.0
    }
}

pub fn policy_logprob(model: &StudentModel, prompt: &Prompt, s: &PreferenceVector) -> f64 {
    model.policy_logprob(prompt, s)
}

pub fn predict(model: &StudentModel, prompt: &Prompt, p_min: f64) -> Prediction {
    model.predict(prompt, p_min)
}
