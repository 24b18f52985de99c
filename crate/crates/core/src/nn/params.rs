use serde::{Deserialize, Serialize};

use super::matrix::Matrix;
use crate::error::{Error, Result};

/// Equality compares names and values; optimizer state is ignored.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Param {
    pub name: String,
    pub value: Matrix,
    #[serde(skip)]
    first_moment: Vec<f64>,
    #[serde(skip)]
    second_moment: Vec<f64>,
}

/// Named parameter matrices with Adam moment buffers.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct ParamBundle {
    params: Vec<Param>,
    #[serde(skip)]
    step: u64,
}

impl PartialEq for Param {
    fn eq(&self, other: &Self) -> bool {
        self.name == other.name && self.value == other.value
    }
}

impl PartialEq for ParamBundle {
    fn eq(&self, other: &Self) -> bool {
        self.params == other.params
    }
}

impl ParamBundle {
    pub fn new() -> Self {
        Self::default()
    }

    /// Registers a parameter and returns its index.
    pub fn add(&mut self, name: impl Into<String>, value: Matrix) -> Result<usize> {
        let name = name.into();
        if self.params.iter().any(|p| p.name == name) {
            return Err(Error::structural(format!("duplicate parameter name {name}")));
        }
        let n = value.as_slice().len();
        self.params.push(Param {
            name,
            value,
            first_moment: vec![0.0; n],
            second_moment: vec![0.0; n],
        });
        Ok(self.params.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn get(&self, idx: usize) -> &Matrix {
        &self.params[idx].value
    }

    pub fn get_mut(&mut self, idx: usize) -> &mut Matrix {
        &mut self.params[idx].value
    }

    pub fn name(&self, idx: usize) -> &str {
        &self.params[idx].name
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.params.iter().position(|p| p.name == name)
    }

    pub fn iter(&self) -> impl Iterator<Item = &Param> {
        self.params.iter()
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// Zero gradients shaped like every parameter.
    pub fn zeros_like(&self) -> Vec<Matrix> {
        self.params.iter().map(|p| Matrix::zeros(p.value.rows(), p.value.cols())).collect()
    }

    pub fn num_values(&self) -> usize {
        self.params.iter().map(|p| p.value.as_slice().len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.params.iter().all(|p| p.value.is_finite())
    }

    /// Copy of the values only; optimizer state starts fresh.
    pub fn snapshot(&self) -> ParamBundle {
        let mut out = ParamBundle::new();
        for p in &self.params {
            out.add(p.name.clone(), p.value.clone()).expect("names already unique");
        }
        out
    }

    /// Restores moment buffers after deserialization.
    pub fn reset_optimizer(&mut self) {
        for p in &mut self.params {
            let n = p.value.as_slice().len();
            p.first_moment = vec![0.0; n];
            p.second_moment = vec![0.0; n];
        }
        self.step = 0;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl AdamConfig {
    pub fn with_lr(lr: f64) -> Self {
        Self { lr, ..Self::default() }
    }
}

/// One bias-corrected Adam update, descending along `grads`.
pub fn adam_step(params: &mut ParamBundle, grads: &[Matrix], cfg: &AdamConfig) -> Result<()> {
    if grads.len() != params.len() {
        return Err(Error::structural(format!(
            "{} gradients for {} parameters",
            grads.len(),
            params.len()
        )));
    }
    for (p, g) in params.params.iter().zip(grads) {
        if p.value.shape() != g.shape() {
            return Err(Error::structural(format!("gradient shape mismatch for {}", p.name)));
        }
    }
    params.step += 1;
    let t = params.step as i32;
    let c1 = 1.0 - cfg.beta1.powi(t);
    let c2 = 1.0 - cfg.beta2.powi(t);
    for (p, g) in params.params.iter_mut().zip(grads) {
        if p.first_moment.len() != g.as_slice().len() {
            p.first_moment = vec![0.0; g.as_slice().len()];
            p.second_moment = vec![0.0; g.as_slice().len()];
        }
        let values = p.value.as_mut_slice();
        for (((w, &gi), m), v) in values
            .iter_mut()
            .zip(g.as_slice())
            .zip(p.first_moment.iter_mut())
            .zip(p.second_moment.iter_mut())
        {
            *m = cfg.beta1 * *m + (1.0 - cfg.beta1) * gi;
            *v = cfg.beta2 * *v + (1.0 - cfg.beta2) * gi * gi;
            let m_hat = *m / c1;
            let v_hat = *v / c2;
            *w -= cfg.lr * m_hat / (v_hat.sqrt() + cfg.eps);
        }
    }
    Ok(())
}
