//! The chain-composition MDP: one node per step, shaped by type match and
//! preference-weighted agent quality, with a QoE bonus at the end.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::harness::Scenario;
use crate::nn::{normalized_adjacency, Matrix};
use crate::preference::{PreferenceVector, CAPABILITY, INFO_LOSS, LATENCY, OUTAGE};
use crate::qoe::{
    agent_capabilities, evaluate_chain, member_latency, subjective_episode_reward, AgenticNetwork, GenSfc,
    QoeBreakdown, RequestTemplate,
};

/// Node feature channels.
pub const NODE_FEATURES: usize = 6;
const SELECTED: usize = 4;
const LAST: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnvConfig {
    /// Magnitude of the type-match flag reward.
    pub delta: f64,
    /// Penalty when no valid action remains before the chain is complete.
    pub fail_penalty: f64,
    /// After the first node, only graph neighbours of the last node are valid.
    pub graph_restricted: bool,
}

impl Default for EnvConfig {
    fn default() -> Self {
        Self {
            delta: 1.0,
            fail_penalty: 5.0,
            graph_restricted: true,
        }
    }
}

impl EnvConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.delta.is_finite() && self.delta >= 0.0) {
            return Err(Error::config("delta must be non-negative"));
        }
        if !(self.fail_penalty.is_finite() && self.fail_penalty >= 0.0) {
            return Err(Error::config("fail_penalty must be non-negative"));
        }
        Ok(())
    }
}

/// Min-max scaling oriented so that 1 is always the desirable end.
/// A degenerate range maps every value to 1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Desirability {
    pub min: f64,
    pub max: f64,
    pub higher_is_better: bool,
}

impl Desirability {
    fn fit(values: impl IntoIterator<Item = f64>, higher_is_better: bool) -> Self {
        let (min, max) = values
            .into_iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
        Self { min, max, higher_is_better }
    }

    pub fn apply(&self, v: f64) -> f64 {
        let span = self.max - self.min;
        if !(span > 0.0) {
            return 1.0;
        }
        let x = if self.higher_is_better { v - self.min } else { self.max - v };
        (x / span).clamp(0.0, 1.0)
    }
}

/// Plain min-max to `[0, 1]`; degenerate ranges map to 0.
fn minmax(values: &[f64]) -> Vec<f64> {
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    values
        .iter()
        .map(|&v| if hi > lo { (v - lo) / (hi - lo) } else { 0.0 })
        .collect()
}

/// Scenario-level constants of the MDP, fitted once per scenario.
#[derive(Debug, Clone)]
pub struct SrlEnv {
    network: AgenticNetwork,
    template: RequestTemplate,
    arrival_rate: f64,
    config: EnvConfig,
    norm_adj: Matrix,
    /// N x 4: min-max capability, latency, observations and failures.
    static_features: Matrix,
    capability: Vec<f64>,
    latency: Vec<f64>,
    crash: Vec<f64>,
    scale_capability: Desirability,
    scale_ber: Desirability,
    scale_latency: Desirability,
    scale_crash: Desirability,
}

/// One live episode.
#[derive(Debug, Clone)]
pub struct EnvState {
    node_features: Matrix,
    chain: Vec<usize>,
    selected: Vec<bool>,
    preference: PreferenceVector,
    elam_index: Option<usize>,
    fee: f64,
    done: bool,
    dead_end: bool,
}

impl EnvState {
    pub fn node_features(&self) -> &Matrix {
        &self.node_features
    }

    pub fn chain(&self) -> &[usize] {
        &self.chain
    }

    pub fn preference(&self) -> &PreferenceVector {
        &self.preference
    }

    pub fn elam_index(&self) -> Option<usize> {
        self.elam_index
    }

    pub fn fee(&self) -> f64 {
        self.fee
    }

    pub fn step_index(&self) -> usize {
        self.chain.len()
    }

    pub fn is_done(&self) -> bool {
        self.done
    }

    pub fn dead_end(&self) -> bool {
        self.dead_end
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepOutcome {
    pub reward: f64,
    pub done: bool,
}

/// Terminal evaluation of an episode.
#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeOutcome {
    pub reward: f64,
    /// `None` for dead ends.
    pub breakdown: Option<QoeBreakdown>,
}

impl SrlEnv {
    pub fn new(scenario: &Scenario, config: EnvConfig) -> Result<Self> {
        config.validate()?;
        scenario.validate()?;
        let network = scenario.network.clone();
        let n = network.len();
        let adjacency = Matrix::from_vec(n, n, network.adjacency())?;
        let norm_adj = normalized_adjacency(&adjacency)?;
        let capability = agent_capabilities(&network)?;
        let latency = (0..n)
            .map(|i| member_latency(&network, i, scenario.arrival_rate))
            .collect::<Result<Vec<_>>>()?;
        let crash: Vec<f64> = network.agents().iter().map(|a| a.crash_rate()).collect();
        let obs: Vec<f64> = network.agents().iter().map(|a| a.observations as f64).collect();
        let fails: Vec<f64> = network.agents().iter().map(|a| a.failures as f64).collect();

        let mut static_features = Matrix::zeros(n, 4);
        for (c, col) in [minmax(&capability), minmax(&latency), minmax(&obs), minmax(&fails)].iter().enumerate() {
            for (i, v) in col.iter().enumerate() {
                static_features[(i, c)] = *v;
            }
        }
        Ok(Self {
            scale_capability: Desirability::fit(capability.iter().copied(), true),
            scale_ber: Desirability::fit(network.links().iter().map(|l| l.mean_ber), false),
            scale_latency: Desirability::fit(latency.iter().copied(), false),
            scale_crash: Desirability::fit(crash.iter().copied(), false),
            network,
            template: scenario.template.clone(),
            arrival_rate: scenario.arrival_rate,
            config,
            norm_adj,
            static_features,
            capability,
            latency,
            crash,
        })
    }

    pub fn network(&self) -> &AgenticNetwork {
        &self.network
    }

    pub fn template(&self) -> &RequestTemplate {
        &self.template
    }

    pub fn arrival_rate(&self) -> f64 {
        self.arrival_rate
    }

    pub fn config(&self) -> &EnvConfig {
        &self.config
    }

    pub fn norm_adj(&self) -> &Matrix {
        &self.norm_adj
    }

    pub fn n_nodes(&self) -> usize {
        self.network.len()
    }

    pub fn chain_len(&self) -> usize {
        self.template.required_types.len()
    }

    /// Node features with both selection flags cleared.
    pub fn empty_features(&self) -> Matrix {
        let n = self.n_nodes();
        let mut x = Matrix::zeros(n, NODE_FEATURES);
        for i in 0..n {
            x.row_mut(i)[..4].copy_from_slice(self.static_features.row(i));
        }
        x
    }

    /// Desirability of agent `id` on each QoE factor when appended after
    /// `predecessor`, in preference order (capability, BER, latency, crash).
    /// The first node uses BER 0.
    pub fn indicators(&self, id: usize, predecessor: Option<usize>) -> Result<[f64; 4]> {
        if id >= self.n_nodes() {
            return Err(Error::Contract(format!("agent {id} does not exist")));
        }
        // A hop without a link (only possible when not graph-restricted)
        // scores as the worst BER.
        let ber_term = match predecessor {
            None => self.scale_ber.apply(0.0),
            Some(p) => self.network.link_between(p, id).map_or(0.0, |l| self.scale_ber.apply(l.mean_ber)),
        };
        let mut out = [0.0; 4];
        out[CAPABILITY] = self.scale_capability.apply(self.capability[id]);
        out[INFO_LOSS] = ber_term;
        out[LATENCY] = self.scale_latency.apply(self.latency[id]);
        out[OUTAGE] = self.scale_crash.apply(self.crash[id]);
        Ok(out)
    }

    /// Shaped reward for placing `id` at `position` after `predecessor`.
    pub fn step_reward(&self, s: &PreferenceVector, id: usize, position: usize, predecessor: Option<usize>) -> Result<f64> {
        let ind = self.indicators(id, predecessor)?;
        let matches = self.template.required_types.get(position) == Some(&self.network.agent(id).service_type);
        let flag = if matches { self.config.delta } else { -self.config.delta };
        Ok(flag + s.weights().iter().zip(&ind).map(|(w, v)| w * v).sum::<f64>())
    }

    /// Starts an episode with an already translated preference.
    pub fn reset(&self, preference: PreferenceVector, elam_index: Option<usize>, fee: f64) -> Result<EnvState> {
        if !(fee.is_finite() && fee >= 0.0) {
            return Err(Error::domain("fee must be non-negative"));
        }
        let n = self.n_nodes();
        Ok(EnvState {
            node_features: self.empty_features(),
            chain: Vec::with_capacity(self.chain_len()),
            selected: vec![false; n],
            preference,
            elam_index,
            fee,
            done: false,
            dead_end: false,
        })
    }

    /// Candidate nodes: every unselected agent at the first step, afterwards
    /// the unselected neighbours of the last node (or every unselected agent
    /// when not graph-restricted).
    pub fn valid_actions(&self, state: &EnvState) -> Vec<bool> {
        let n = self.n_nodes();
        if state.done {
            return vec![false; n];
        }
        match state.chain.last() {
            Some(&last) if self.config.graph_restricted => {
                let mut mask = vec![false; n];
                for &j in self.network.neighbors(last) {
                    mask[j] = !state.selected[j];
                }
                mask
            }
            _ => state.selected.iter().map(|s| !s).collect(),
        }
    }

    pub fn step(&self, state: &mut EnvState, action: usize) -> Result<StepOutcome> {
        if state.done {
            return Err(Error::Contract("step on a finished episode".into()));
        }
        let mask = self.valid_actions(state);
        if !mask.get(action).copied().unwrap_or(false) {
            return Err(Error::Contract(format!("action {action} is masked")));
        }
        let position = state.chain.len();
        let reward = self.step_reward(&state.preference, action, position, state.chain.last().copied())?;
        if let Some(&last) = state.chain.last() {
            state.node_features[(last, LAST)] = 0.0;
        }
        state.node_features[(action, SELECTED)] = 1.0;
        state.node_features[(action, LAST)] = 1.0;
        state.selected[action] = true;
        state.chain.push(action);
        if state.chain.len() == self.chain_len() {
            state.done = true;
        } else if !self.valid_actions(state).iter().any(|&m| m) {
            state.done = true;
            state.dead_end = true;
        }
        Ok(StepOutcome {
            reward,
            done: state.done,
        })
    }

    /// QoE breakdown of a complete chain.
    pub fn evaluate(&self, chain: &[usize]) -> Result<QoeBreakdown> {
        let sfc = GenSfc::new(chain.to_vec(), self.arrival_rate)?;
        evaluate_chain(&self.network, &sfc, &self.template)
    }

    /// Terminal bonus of a complete chain under `s`.
    pub fn bonus(&self, s: &PreferenceVector, chain: &[usize], fee: f64) -> Result<(f64, QoeBreakdown)> {
        let b = self.evaluate(chain)?;
        let r = subjective_episode_reward(&b, s.weights(), self.template.capability_threshold, fee)?;
        Ok((r, b))
    }

    /// Terminal reward of the episode under its own preference. Dead ends and
    /// chains with an unlinked hop get the failure penalty.
    pub fn finalize(&self, state: &EnvState) -> Result<EpisodeOutcome> {
        self.finalize_with(state, &state.preference)
    }

    /// Terminal reward re-scored under another preference, e.g. a user's
    /// ground truth.
    pub fn finalize_with(&self, state: &EnvState, s: &PreferenceVector) -> Result<EpisodeOutcome> {
        if !state.done {
            return Err(Error::Contract("finalize before the episode ended".into()));
        }
        if state.dead_end || !self.is_path(&state.chain) {
            return Ok(EpisodeOutcome {
                reward: -self.config.fail_penalty,
                breakdown: None,
            });
        }
        let (reward, b) = self.bonus(s, &state.chain, state.fee)?;
        Ok(EpisodeOutcome {
            reward,
            breakdown: Some(b),
        })
    }

    fn is_path(&self, chain: &[usize]) -> bool {
        chain.windows(2).all(|w| self.network.link_between(w[0], w[1]).is_some())
    }

    /// Terminal reward of a chain under `s` when it serves the request: the
    /// bonus of a complete linked chain of the required types, the failure
    /// penalty otherwise.
    pub fn chain_bonus(&self, s: &PreferenceVector, chain: &[usize], fee: f64) -> Result<f64> {
        let typed = chain
            .iter()
            .zip(&self.template.required_types)
            .all(|(&id, &t)| self.network.agent(id).service_type == t);
        if chain.len() == self.chain_len() && typed && self.is_path(chain) {
            Ok(self.bonus(s, chain, fee)?.0)
        } else {
            Ok(-self.config.fail_penalty)
        }
    }

    /// Sum of shaped step rewards plus the terminal bonus of a complete
    /// chain, as the agent would have collected it under `s`.
    pub fn chain_return(&self, s: &PreferenceVector, chain: &[usize], fee: f64) -> Result<f64> {
        let mut total = 0.0;
        for (pos, &id) in chain.iter().enumerate() {
            let pred = if pos == 0 { None } else { Some(chain[pos - 1]) };
            total += self.step_reward(s, id, pos, pred)?;
        }
        if chain.len() == self.chain_len() && self.is_path(chain) {
            total += self.bonus(s, chain, fee)?.0;
        } else {
            total -= self.config.fail_penalty;
        }
        Ok(total)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qoe::fixtures::{agent, link};
    use crate::qoe::ScalingConstants;
    use approx::assert_relative_eq;

    fn scenario(agents: Vec<crate::qoe::AgentSpec>, links: Vec<crate::qoe::LinkSpec>) -> Scenario {
        Scenario {
            network: AgenticNetwork::new(agents, links, ScalingConstants::default()).unwrap(),
            arrival_rate: 0.8,
            template: RequestTemplate::default(),
        }
    }

    /// Path 0-1-2-3 where agent 1 dominates agent 3 on every factor.
    fn toy() -> SrlEnv {
        let s = scenario(
            vec![
                agent(1, 1e20, 2.0, 0.2, 100, 5),
                agent(2, 1e22, 9.0, 0.0, 100, 0),
                agent(3, 1e21, 4.0, 0.1, 100, 2),
                agent(2, 1e19, 1.5, 1.0, 100, 10),
            ],
            vec![link(0, 1, 0.01), link(1, 2, 0.0), link(2, 3, 0.05)],
        );
        SrlEnv::new(&s, EnvConfig::default()).unwrap()
    }

    fn complete(n: usize) -> SrlEnv {
        let agents = (0..n).map(|i| agent((i % 3) as u32 + 1, 1e21, 3.0, 0.1, 100, 1)).collect();
        let mut links = vec![];
        for a in 0..n {
            for b in a + 1..n {
                links.push(link(a, b, 0.01));
            }
        }
        SrlEnv::new(&scenario(agents, links), EnvConfig::default()).unwrap()
    }

    #[test]
    fn best_and_worst_step_rewards() {
        let env = toy();
        let s = PreferenceVector::new([0.4, 0.3, 0.2, 0.1]).unwrap();
        // Agent 1 is the best on capability, latency and crash, and link 1-2 has
        // the lowest BER.
        let r = env.step_reward(&s, 1, 1, Some(2)).unwrap();
        assert_relative_eq!(r, 2.0, epsilon = 1e-12);
        // Agent 3 is the worst on all four at a type mismatch.
        let r = env.step_reward(&s, 3, 2, Some(2)).unwrap();
        assert_relative_eq!(r, -1.0, epsilon = 1e-12);
    }

    #[test]
    fn first_node_gets_best_ber_term() {
        let env = toy();
        assert_eq!(env.indicators(3, None).unwrap()[INFO_LOSS], 1.0);
        assert_eq!(env.indicators(3, Some(2)).unwrap()[INFO_LOSS], 0.0);
    }

    #[test]
    fn masks_follow_the_graph() {
        let env = toy();
        let mut st = env.reset(PreferenceVector::even(), None, 0.0).unwrap();
        assert_eq!(env.valid_actions(&st), vec![true; 4]);
        env.step(&mut st, 1).unwrap();
        assert_eq!(env.valid_actions(&st), vec![true, false, true, false]);
        assert!(env.step(&mut st, 3).is_err());

        let env = complete(6);
        let mut st = env.reset(PreferenceVector::even(), None, 0.0).unwrap();
        env.step(&mut st, 0).unwrap();
        assert_eq!(env.valid_actions(&st).iter().filter(|&&m| m).count(), 5);
    }

    #[test]
    fn dead_end_terminates_with_penalty() {
        let env = toy();
        let mut st = env.reset(PreferenceVector::even(), None, 0.0).unwrap();
        env.step(&mut st, 0).unwrap();
        let out = env.step(&mut st, 1).unwrap();
        assert!(!out.done);
        let mut st = env.reset(PreferenceVector::even(), None, 0.0).unwrap();
        env.step(&mut st, 1).unwrap();
        env.step(&mut st, 0).unwrap();
        // 0 has no unselected neighbour left.
        assert!(st.is_done() && st.dead_end());
        let fin = env.finalize(&st).unwrap();
        assert_eq!(fin.reward, -5.0);
        assert!(fin.breakdown.is_none());
    }

    #[test]
    fn flags_track_selection() {
        let env = toy();
        let mut st = env.reset(PreferenceVector::even(), None, 0.0).unwrap();
        env.step(&mut st, 0).unwrap();
        env.step(&mut st, 1).unwrap();
        let x = st.node_features();
        assert_eq!((0..4).map(|i| x[(i, LAST)]).sum::<f64>(), 1.0);
        assert_eq!(x[(1, LAST)], 1.0);
        assert_eq!((0..4).map(|i| x[(i, SELECTED)]).collect::<Vec<_>>(), vec![1.0, 1.0, 0.0, 0.0]);
        assert!(x.as_slice().iter().all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn fee_is_additive_and_return_decomposes() {
        let env = toy();
        let s = PreferenceVector::new([0.4, 0.3, 0.2, 0.1]).unwrap();
        let mut st = env.reset(s, Some(0), 0.2).unwrap();
        let mut total = 0.0;
        for a in [0, 1, 2] {
            total += env.step(&mut st, a).unwrap().reward;
        }
        assert!(st.is_done() && !st.dead_end());
        let fin = env.finalize(&st).unwrap();
        let mut st2 = env.reset(s, Some(0), 0.3).unwrap();
        for a in [0, 1, 2] {
            env.step(&mut st2, a).unwrap();
        }
        assert_relative_eq!(fin.reward - env.finalize(&st2).unwrap().reward, 0.1, epsilon = 1e-12);
        assert_relative_eq!(total + fin.reward, env.chain_return(&s, &[0, 1, 2], 0.2).unwrap(), epsilon = 1e-12);
        let b = fin.breakdown.unwrap();
        let direct = subjective_episode_reward(&b, s.weights(), 1e-3, 0.2).unwrap();
        assert_relative_eq!(fin.reward, direct, epsilon = 1e-12);
    }

    #[test]
    fn unrestricted_mode_offers_all_unselected() {
        let mut env = toy();
        env.config.graph_restricted = false;
        let mut st = env.reset(PreferenceVector::even(), None, 0.0).unwrap();
        env.step(&mut st, 0).unwrap();
        assert_eq!(env.valid_actions(&st), vec![false, true, true, true]);
        env.step(&mut st, 2).unwrap();
        env.step(&mut st, 1).unwrap();
        assert_eq!(env.finalize(&st).unwrap().reward, -5.0);
        assert_eq!(env.indicators(2, Some(0)).unwrap()[INFO_LOSS], 0.0);
    }
}
