//! Advantage estimation and the clipped-surrogate / REINFORCE updates.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::policy::{Observation, PolicyNet};
use crate::error::{Error, Result};
use crate::nn::{adam_step, log_softmax_backward, AdamConfig, Matrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    Ppo,
    Reinforce,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PpoConfig {
    pub algorithm: Algorithm,
    pub gamma: f64,
    pub gae_lambda: f64,
    pub clip_eps: f64,
    /// Passes over each batch (REINFORCE always makes one).
    pub epochs: usize,
    pub minibatch_size: usize,
    pub episodes_per_update: usize,
    pub entropy_coef: f64,
    pub value_coef: f64,
    pub learning_rate: f64,
    /// Global gradient-norm clip; `None` disables it.
    pub max_grad_norm: Option<f64>,
}

impl Default for PpoConfig {
    fn default() -> Self {
        Self {
            algorithm: Algorithm::Ppo,
            gamma: 0.99,
            gae_lambda: 0.95,
            clip_eps: 0.2,
            epochs: 4,
            minibatch_size: 64,
            episodes_per_update: 16,
            entropy_coef: 0.01,
            value_coef: 0.5,
            learning_rate: 3e-4,
            max_grad_norm: Some(0.5),
        }
    }
}

impl PpoConfig {
    pub fn validate(&self) -> Result<()> {
        let unit = |v: f64| (0.0..=1.0).contains(&v);
        if !unit(self.gamma) || !unit(self.gae_lambda) {
            return Err(Error::config("gamma and gae_lambda must lie in [0, 1]"));
        }
        if !(self.clip_eps >= 0.0 && self.clip_eps.is_finite()) {
            return Err(Error::config("clip_eps must be non-negative"));
        }
        if self.epochs == 0 || self.minibatch_size == 0 || self.episodes_per_update == 0 {
            return Err(Error::config("epochs, minibatch_size and episodes_per_update must be positive"));
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::config("learning_rate must be non-negative"));
        }
        if !(self.entropy_coef.is_finite() && self.value_coef.is_finite() && self.value_coef >= 0.0) {
            return Err(Error::config("loss coefficients must be finite"));
        }
        if self.max_grad_norm.is_some_and(|m| !(m > 0.0)) {
            return Err(Error::config("max_grad_norm must be positive"));
        }
        Ok(())
    }
}

/// One decision of an episode.
#[derive(Debug, Clone)]
pub struct Transition {
    pub obs: Observation,
    pub action: usize,
    pub log_prob: f64,
    pub value: f64,
    pub reward: f64,
}

/// `A_t = sum_l (gamma * lambda)^l delta_{t+l}` with
/// `delta_t = r_t + gamma V_{t+1} - V_t`. `values` carries one extra
/// bootstrap entry (0 at a terminal state).
pub fn gae(rewards: &[f64], values: &[f64], gamma: f64, gae_lambda: f64) -> Result<Vec<f64>> {
    if values.len() != rewards.len() + 1 {
        return Err(Error::structural(format!(
            "{} values for {} rewards; expected one bootstrap value",
            values.len(),
            rewards.len()
        )));
    }
    let mut adv = vec![0.0; rewards.len()];
    let mut running = 0.0;
    for t in (0..rewards.len()).rev() {
        let delta = rewards[t] + gamma * values[t + 1] - values[t];
        running = delta + gamma * gae_lambda * running;
        adv[t] = running;
    }
    Ok(adv)
}

/// Shifts and scales to mean 0 and standard deviation 1. Constant inputs
/// map to zeros.
pub fn normalize_advantages(adv: &mut [f64]) {
    if adv.is_empty() {
        return;
    }
    let n = adv.len() as f64;
    let mean = adv.iter().sum::<f64>() / n;
    let var = adv.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / n;
    let sd = var.sqrt();
    for a in adv.iter_mut() {
        *a = if sd > 1e-12 { (*a - mean) / sd } else { 0.0 };
    }
}

/// A transition ready for a policy update.
#[derive(Debug, Clone)]
pub struct BatchItem {
    pub obs: Observation,
    pub action: usize,
    pub old_log_prob: f64,
    /// Normalized advantage.
    pub advantage: f64,
    /// Critic target: raw advantage plus the value estimate.
    pub ret: f64,
}

/// Runs GAE per episode, then normalizes advantages over the whole batch.
pub fn build_batch(episodes: Vec<Vec<Transition>>, gamma: f64, gae_lambda: f64) -> Result<Vec<BatchItem>> {
    let mut items = Vec::new();
    let mut adv_all = Vec::new();
    for ep in episodes {
        let rewards: Vec<f64> = ep.iter().map(|t| t.reward).collect();
        if rewards.iter().any(|r| !r.is_finite()) {
            return Err(Error::Training {
                epoch: 0,
                reason: "non-finite reward".into(),
            });
        }
        let mut values: Vec<f64> = ep.iter().map(|t| t.value).collect();
        values.push(0.0);
        let adv = gae(&rewards, &values, gamma, gae_lambda)?;
        for (t, a) in ep.into_iter().zip(adv) {
            adv_all.push(a);
            items.push(BatchItem {
                ret: a + t.value,
                obs: t.obs,
                action: t.action,
                old_log_prob: t.log_prob,
                advantage: a,
            });
        }
    }
    normalize_advantages(&mut adv_all);
    for (item, a) in items.iter_mut().zip(adv_all) {
        item.advantage = a;
    }
    Ok(items)
}

/// Mean loss components over a minibatch.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LossTerms {
    /// Negated surrogate (what is minimized).
    pub actor: f64,
    pub critic: f64,
    pub entropy: f64,
    pub total: f64,
    /// Fraction of items whose ratio sits outside the clip range.
    pub clip_fraction: f64,
    /// Largest `|ratio - 1|` in the minibatch.
    pub max_ratio_dev: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Objective {
    Clipped(f64),
    PolicyGradient,
}

fn loss_impl(
    policy: &PolicyNet,
    norm_adj: &Matrix,
    items: &[&BatchItem],
    objective: Objective,
    cfg: &PpoConfig,
    grads: Option<&mut Vec<Matrix>>,
) -> Result<LossTerms> {
    if items.is_empty() {
        return Err(Error::Size("empty minibatch".into()));
    }
    let m = items.len() as f64;
    let mut grads = grads;
    let mut out = LossTerms::default();
    let mut clipped = 0usize;
    for item in items {
        let f = policy.forward(norm_adj, &item.obs)?;
        let lp = f.log_probs[item.action];
        if !lp.is_finite() {
            return Err(Error::Contract(format!("stored action {} is masked", item.action)));
        }
        let a = item.advantage;
        // d(surrogate)/d(log pi_a)
        let (surrogate, d_lp) = match objective {
            Objective::PolicyGradient => (lp * a, a),
            Objective::Clipped(eps) => {
                let ratio = (lp - item.old_log_prob).exp();
                out.max_ratio_dev = out.max_ratio_dev.max((ratio - 1.0).abs());
                let clipped_ratio = ratio.clamp(1.0 - eps, 1.0 + eps);
                // The unclipped branch carries the gradient only strictly
                // inside the side of the trust region that the sign of the
                // advantage pushes towards.
                let live = if a >= 0.0 { ratio < 1.0 + eps } else { ratio > 1.0 - eps };
                if ratio != clipped_ratio {
                    clipped += 1;
                }
                let s = (ratio * a).min(clipped_ratio * a);
                (s, if live { ratio * a } else { 0.0 })
            }
        };
        let mut entropy = 0.0;
        for l in f.log_probs.iter().filter(|l| l.is_finite()) {
            entropy -= l.exp() * l;
        }
        let v_err = f.value - item.ret;
        out.actor -= surrogate / m;
        out.critic += v_err * v_err / m;
        out.entropy += entropy / m;

        if let Some(g) = grads.as_deref_mut() {
            let mut up = vec![0.0; f.log_probs.len()];
            up[item.action] = -d_lp / m;
            let mut d_logits = log_softmax_backward(&f.log_probs, &up);
            // dH/dz_j = -p_j (log p_j + H)
            for (d, l) in d_logits.iter_mut().zip(&f.log_probs) {
                if l.is_finite() {
                    *d += cfg.entropy_coef * l.exp() * (l + entropy) / m;
                }
            }
            let d_value = 2.0 * cfg.value_coef * v_err / m;
            policy.backward(norm_adj, &item.obs, &f, &d_logits, d_value, g)?;
        }
    }
    out.total = out.actor + cfg.value_coef * out.critic - cfg.entropy_coef * out.entropy;
    out.clip_fraction = clipped as f64 / m;
    if !out.total.is_finite() {
        return Err(Error::Training {
            epoch: 0,
            reason: format!("non-finite loss {out:?}"),
        });
    }
    Ok(out)
}

/// Clipped surrogate loss `-min(r A, clip(r) A) + c_v (V - R)^2 - c_e H`,
/// averaged over the minibatch, with its gradient if `grads` is given.
pub fn ppo_loss(
    policy: &PolicyNet,
    norm_adj: &Matrix,
    items: &[&BatchItem],
    cfg: &PpoConfig,
    grads: Option<&mut Vec<Matrix>>,
) -> Result<LossTerms> {
    loss_impl(policy, norm_adj, items, Objective::Clipped(cfg.clip_eps), cfg, grads)
}

/// `-log pi(a|s) A + c_v (V - R)^2 - c_e H`, averaged.
pub fn reinforce_loss(
    policy: &PolicyNet,
    norm_adj: &Matrix,
    items: &[&BatchItem],
    cfg: &PpoConfig,
    grads: Option<&mut Vec<Matrix>>,
) -> Result<LossTerms> {
    loss_impl(policy, norm_adj, items, Objective::PolicyGradient, cfg, grads)
}

fn clip_global_norm(grads: &mut [Matrix], max_norm: f64) -> f64 {
    let norm = grads
        .iter()
        .flat_map(|g| g.as_slice())
        .map(|v| v * v)
        .sum::<f64>()
        .sqrt();
    if norm > max_norm {
        let s = max_norm / norm;
        grads.iter_mut().for_each(|g| g.scale(s));
    }
    norm
}

/// Averages of the loss terms seen during one update.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct UpdateStats {
    pub actor: f64,
    pub critic: f64,
    pub entropy: f64,
    /// Largest `|ratio - 1|` over the batch before the first step.
    pub initial_ratio_dev: f64,
    pub steps: usize,
}

fn apply(policy: &mut PolicyNet, mut grads: Vec<Matrix>, cfg: &PpoConfig) -> Result<()> {
    if grads.iter().any(|g| !g.is_finite()) {
        return Err(Error::Training {
            epoch: 0,
            reason: "non-finite gradient".into(),
        });
    }
    if let Some(max) = cfg.max_grad_norm {
        clip_global_norm(&mut grads, max);
    }
    adam_step(policy.params_mut(), &grads, &AdamConfig::with_lr(cfg.learning_rate))?;
    if !policy.params().is_finite() {
        return Err(Error::Training {
            epoch: 0,
            reason: "non-finite parameters".into(),
        });
    }
    Ok(())
}

/// `epochs` passes of shuffled minibatches over the clipped surrogate.
pub fn ppo_update<R: Rng>(
    policy: &mut PolicyNet,
    norm_adj: &Matrix,
    batch: &[BatchItem],
    cfg: &PpoConfig,
    rng: &mut R,
) -> Result<UpdateStats> {
    let mut stats = UpdateStats::default();
    if batch.is_empty() {
        return Ok(stats);
    }
    let all: Vec<&BatchItem> = batch.iter().collect();
    stats.initial_ratio_dev = ppo_loss(policy, norm_adj, &all, cfg, None)?.max_ratio_dev;
    let mut order: Vec<usize> = (0..batch.len()).collect();
    for _ in 0..cfg.epochs {
        order.shuffle(rng);
        for chunk in order.chunks(cfg.minibatch_size) {
            let mb: Vec<&BatchItem> = chunk.iter().map(|&i| &batch[i]).collect();
            let mut grads = policy.params().zeros_like();
            let terms = ppo_loss(policy, norm_adj, &mb, cfg, Some(&mut grads))?;
            apply(policy, grads, cfg)?;
            stats.actor += terms.actor;
            stats.critic += terms.critic;
            stats.entropy += terms.entropy;
            stats.steps += 1;
        }
    }
    let k = stats.steps as f64;
    stats.actor /= k;
    stats.critic /= k;
    stats.entropy /= k;
    Ok(stats)
}

/// One pass of minibatched policy-gradient steps.
pub fn reinforce_update<R: Rng>(
    policy: &mut PolicyNet,
    norm_adj: &Matrix,
    batch: &[BatchItem],
    cfg: &PpoConfig,
    rng: &mut R,
) -> Result<UpdateStats> {
    let mut stats = UpdateStats::default();
    if batch.is_empty() {
        return Ok(stats);
    }
    let mut order: Vec<usize> = (0..batch.len()).collect();
    order.shuffle(rng);
    for chunk in order.chunks(cfg.minibatch_size) {
        let mb: Vec<&BatchItem> = chunk.iter().map(|&i| &batch[i]).collect();
        let mut grads = policy.params().zeros_like();
        let terms = reinforce_loss(policy, norm_adj, &mb, cfg, Some(&mut grads))?;
        apply(policy, grads, cfg)?;
        stats.actor += terms.actor;
        stats.critic += terms.critic;
        stats.entropy += terms.entropy;
        stats.steps += 1;
    }
    let k = stats.steps as f64;
    stats.actor /= k;
    stats.critic /= k;
    stats.entropy /= k;
    Ok(stats)
}
