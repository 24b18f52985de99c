//! Graph-encoded actor-critic.
//!
//! `z = [mean_pool(GCN(X)) | relu(s W + b) | psi[kappa]]` feeds a two-layer
//! actor over `N` node actions followed by one action per E-LAM, and a
//! two-layer critic. Both heads share the encoder.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::env::NODE_FEATURES;
use crate::error::{Error, Result};
use crate::nn::{
    dense_backward, dense_forward, gcn_backward, gcn_forward, glorot_uniform, log_softmax, mean_pool,
    mean_pool_backward, relu, relu_backward, GcnCache, Matrix, ParamBundle,
};
use crate::seed::rng_for;

const GCN1: usize = 0;
const GCN2: usize = 1;
const PHI_W: usize = 2;
const PHI_B: usize = 3;
const PSI: usize = 4;
const ACTOR_W1: usize = 5;
const ACTOR_B1: usize = 6;
const ACTOR_W2: usize = 7;
const ACTOR_B2: usize = 8;
const CRITIC_W1: usize = 9;
const CRITIC_B1: usize = 10;
const CRITIC_W2: usize = 11;
const CRITIC_B2: usize = 12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PolicyShape {
    pub gcn_hidden: usize,
    /// Width of both the intent and the E-LAM embedding.
    pub embed_dim: usize,
    pub head_hidden: usize,
}

impl Default for PolicyShape {
    fn default() -> Self {
        Self {
            gcn_hidden: 64,
            embed_dim: 16,
            head_hidden: 64,
        }
    }
}

impl PolicyShape {
    pub fn latent_dim(&self) -> usize {
        self.gcn_hidden + 2 * self.embed_dim
    }
}

/// What the policy sees at one decision.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    /// `N x 6` node features.
    pub features: Matrix,
    pub intent: [f64; 4],
    /// Chosen E-LAM; `None` while the E-LAM itself is being chosen.
    pub model: Option<usize>,
    /// Over `N + n_elams` actions.
    pub mask: Vec<bool>,
}

/// Intermediates of one forward pass.
#[derive(Debug, Clone)]
pub struct Forward {
    gcn: GcnCache,
    h_nodes: Matrix,
    intent_pre: Matrix,
    z: Matrix,
    actor_pre: Matrix,
    actor_h: Matrix,
    critic_pre: Matrix,
    critic_h: Matrix,
    pub logits: Vec<f64>,
    pub log_probs: Vec<f64>,
    pub value: f64,
}

impl Forward {
    pub fn latent(&self) -> &[f64] {
        self.z.as_slice()
    }

    pub fn graph_latent(&self) -> &[f64] {
        &self.z.as_slice()[..self.h_nodes.cols()]
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ActOutput {
    pub action: usize,
    pub log_prob: f64,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyNet {
    shape: PolicyShape,
    n_nodes: usize,
    n_elams: usize,
    params: ParamBundle,
}

impl PolicyNet {
    pub fn new(shape: PolicyShape, n_nodes: usize, n_elams: usize, seed: u64) -> Result<Self> {
        if shape.gcn_hidden == 0 || shape.embed_dim == 0 || shape.head_hidden == 0 {
            return Err(Error::config("policy widths must be positive"));
        }
        if n_nodes == 0 || n_elams == 0 {
            return Err(Error::config("policy needs at least one node and one E-LAM"));
        }
        let mut rng = rng_for(seed, "srl/init");
        let (g, e, hh, z) = (shape.gcn_hidden, shape.embed_dim, shape.head_hidden, shape.latent_dim());
        let n_actions = n_nodes + n_elams;
        let mut actor_out = glorot_uniform(hh, n_actions, &mut rng);
        // A near-uniform initial policy.
        actor_out.scale(0.01);
        let mut p = ParamBundle::new();
        p.add("gcn1", glorot_uniform(NODE_FEATURES, g, &mut rng))?;
        p.add("gcn2", glorot_uniform(g, g, &mut rng))?;
        p.add("phi_w", glorot_uniform(4, e, &mut rng))?;
        p.add("phi_b", Matrix::zeros(1, e))?;
        p.add("psi", glorot_uniform(n_elams, e, &mut rng))?;
        p.add("actor_w1", glorot_uniform(z, hh, &mut rng))?;
        p.add("actor_b1", Matrix::zeros(1, hh))?;
        p.add("actor_w2", actor_out)?;
        p.add("actor_b2", Matrix::zeros(1, n_actions))?;
        p.add("critic_w1", glorot_uniform(z, hh, &mut rng))?;
        p.add("critic_b1", Matrix::zeros(1, hh))?;
        p.add("critic_w2", glorot_uniform(hh, 1, &mut rng))?;
        p.add("critic_b2", Matrix::zeros(1, 1))?;
        Ok(Self {
            shape,
            n_nodes,
            n_elams,
            params: p,
        })
    }

    pub fn from_params(shape: PolicyShape, n_nodes: usize, n_elams: usize, params: ParamBundle) -> Result<Self> {
        let reference = Self::new(shape, n_nodes, n_elams, 0)?;
        if reference.params.len() != params.len()
            || reference.params.iter().zip(params.iter()).any(|(a, b)| a.name != b.name || a.value.shape() != b.value.shape())
        {
            return Err(Error::structural("parameter layout does not match the policy shape"));
        }
        Ok(Self { params, ..reference })
    }

    pub fn shape(&self) -> PolicyShape {
        self.shape
    }

    pub fn n_nodes(&self) -> usize {
        self.n_nodes
    }

    pub fn n_elams(&self) -> usize {
        self.n_elams
    }

    pub fn n_actions(&self) -> usize {
        self.n_nodes + self.n_elams
    }

    pub fn params(&self) -> &ParamBundle {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamBundle {
        &mut self.params
    }

    fn check(&self, obs: &Observation) -> Result<()> {
        if obs.features.shape() != (self.n_nodes, NODE_FEATURES) {
            return Err(Error::structural(format!(
                "features are {:?}, expected ({}, {NODE_FEATURES})",
                obs.features.shape(),
                self.n_nodes
            )));
        }
        if obs.mask.len() != self.n_actions() {
            return Err(Error::structural("mask length does not match the action space"));
        }
        if obs.model.is_some_and(|m| m >= self.n_elams) {
            return Err(Error::structural("E-LAM index out of range"));
        }
        Ok(())
    }

    pub fn forward(&self, norm_adj: &Matrix, obs: &Observation) -> Result<Forward> {
        self.check(obs)?;
        let p = &self.params;
        let (h_nodes, gcn) = gcn_forward(&[p.get(GCN1), p.get(GCN2)], norm_adj, &obs.features)?;
        let h_graph = mean_pool(&h_nodes)?;
        let intent_pre = dense_forward(&Matrix::row_vector(obs.intent.to_vec()), p.get(PHI_W), p.get(PHI_B))?;
        let h_intent = relu(&intent_pre);
        let mut z = h_graph;
        z.extend_from_slice(h_intent.as_slice());
        match obs.model {
            Some(m) => z.extend_from_slice(p.get(PSI).row(m)),
            None => z.extend(std::iter::repeat(0.0).take(self.shape.embed_dim)),
        }
        let z = Matrix::row_vector(z);

        let actor_pre = dense_forward(&z, p.get(ACTOR_W1), p.get(ACTOR_B1))?;
        let actor_h = relu(&actor_pre);
        let logits = dense_forward(&actor_h, p.get(ACTOR_W2), p.get(ACTOR_B2))?.into_vec();
        let critic_pre = dense_forward(&z, p.get(CRITIC_W1), p.get(CRITIC_B1))?;
        let critic_h = relu(&critic_pre);
        let value = dense_forward(&critic_h, p.get(CRITIC_W2), p.get(CRITIC_B2))?[(0, 0)];

        if !obs.mask.iter().any(|&m| m) {
            return Err(Error::Contract("no valid action".into()));
        }
        let log_probs = log_softmax(&logits, Some(&obs.mask));
        Ok(Forward {
            gcn,
            h_nodes,
            intent_pre,
            z,
            actor_pre,
            actor_h,
            critic_pre,
            critic_h,
            logits,
            log_probs,
            value,
        })
    }

    /// Latent `z` of an observation.
    pub fn encode(&self, norm_adj: &Matrix, obs: &Observation) -> Result<Vec<f64>> {
        Ok(self.forward(norm_adj, obs)?.z.into_vec())
    }

    /// Samples an action from the masked policy.
    pub fn act<R: Rng>(&self, norm_adj: &Matrix, obs: &Observation, rng: &mut R) -> Result<ActOutput> {
        let f = self.forward(norm_adj, obs)?;
        let u: f64 = rng.gen();
        let mut acc = 0.0;
        let mut action = None;
        let mut last_live = 0;
        for (i, lp) in f.log_probs.iter().enumerate() {
            if lp.is_finite() {
                last_live = i;
                acc += lp.exp();
                if u < acc {
                    action = Some(i);
                    break;
                }
            }
        }
        // Rounding can leave the cumulative sum just below u.
        let action = action.unwrap_or(last_live);
        Ok(ActOutput {
            action,
            log_prob: f.log_probs[action],
            value: f.value,
        })
    }

    /// Most probable valid action; ties go to the lowest index.
    pub fn act_greedy(&self, norm_adj: &Matrix, obs: &Observation) -> Result<ActOutput> {
        let f = self.forward(norm_adj, obs)?;
        let mut best = None::<usize>;
        for (i, lp) in f.log_probs.iter().enumerate() {
            if lp.is_finite() && best.map_or(true, |b| *lp > f.log_probs[b]) {
                best = Some(i);
            }
        }
        let action = best.expect("forward rejects empty masks");
        Ok(ActOutput {
            action,
            log_prob: f.log_probs[action],
            value: f.value,
        })
    }

    /// Accumulates into `grads` the parameter gradient of a scalar whose
    /// derivative is `d_logits` w.r.t. the raw logits and `d_value` w.r.t.
    /// the critic output.
    pub fn backward(
        &self,
        norm_adj: &Matrix,
        obs: &Observation,
        f: &Forward,
        d_logits: &[f64],
        d_value: f64,
        grads: &mut [Matrix],
    ) -> Result<()> {
        let p = &self.params;
        let mut acc = |idx: usize, g: &Matrix| grads[idx].add_assign(g);

        let d_logits = Matrix::row_vector(d_logits.to_vec());
        let a2 = dense_backward(&f.actor_h, p.get(ACTOR_W2), &d_logits)?;
        acc(ACTOR_W2, &a2.dw)?;
        acc(ACTOR_B2, &a2.db)?;
        let a1 = dense_backward(&f.z, p.get(ACTOR_W1), &relu_backward(&f.actor_pre, &a2.dx))?;
        acc(ACTOR_W1, &a1.dw)?;
        acc(ACTOR_B1, &a1.db)?;

        let d_value = Matrix::row_vector(vec![d_value]);
        let c2 = dense_backward(&f.critic_h, p.get(CRITIC_W2), &d_value)?;
        acc(CRITIC_W2, &c2.dw)?;
        acc(CRITIC_B2, &c2.db)?;
        let c1 = dense_backward(&f.z, p.get(CRITIC_W1), &relu_backward(&f.critic_pre, &c2.dx))?;
        acc(CRITIC_W1, &c1.dw)?;
        acc(CRITIC_B1, &c1.db)?;

        let mut dz = a1.dx;
        dz.add_assign(&c1.dx)?;
        let dz = dz.as_slice();
        let (g, e) = (self.shape.gcn_hidden, self.shape.embed_dim);

        let d_graph = mean_pool_backward(self.n_nodes, &dz[..g]);
        let gg = gcn_backward(&[p.get(GCN1), p.get(GCN2)], norm_adj, &f.gcn, &d_graph)?;
        acc(GCN1, &gg.weights[0])?;
        acc(GCN2, &gg.weights[1])?;

        let d_intent = relu_backward(&f.intent_pre, &Matrix::row_vector(dz[g..g + e].to_vec()));
        let phi = dense_backward(&Matrix::row_vector(obs.intent.to_vec()), p.get(PHI_W), &d_intent)?;
        acc(PHI_W, &phi.dw)?;
        acc(PHI_B, &phi.db)?;

        if let Some(m) = obs.model {
            let mut d_psi = Matrix::zeros(self.n_elams, e);
            d_psi.row_mut(m).copy_from_slice(&dz[g + e..]);
            acc(PSI, &d_psi)?;
        }
        Ok(())
    }
}
