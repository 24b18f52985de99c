//! Exhaustive search over chains and E-LAM fees for small scenarios.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::preference::PreferenceVector;
use crate::qoe::{evaluate_chain, subjective_episode_reward, GenSfc};

use super::scenario::Scenario;

/// Largest search space `brute_force_optimum` accepts.
pub const MAX_CHAINS: usize = 1_000_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BruteForceResult {
    pub chain: Vec<usize>,
    pub elam: usize,
    pub reward: f64,
    /// Number of type-valid connected chains examined.
    pub chains: usize,
}

/// All type-valid chains of distinct agents whose consecutive members are
/// linked, in lexicographic order.
pub fn feasible_chains(scenario: &Scenario) -> Result<Vec<Vec<usize>>> {
    let net = &scenario.network;
    let types = &scenario.template.required_types;
    let mut out = Vec::new();
    let mut stack: Vec<usize> = Vec::with_capacity(types.len());

    fn extend(
        scenario: &Scenario,
        types: &[u32],
        stack: &mut Vec<usize>,
        out: &mut Vec<Vec<usize>>,
    ) -> Result<()> {
        let net = &scenario.network;
        if stack.len() == types.len() {
            if out.len() == MAX_CHAINS {
                return Err(Error::Size(format!("more than {MAX_CHAINS} feasible chains")));
            }
            out.push(stack.clone());
            return Ok(());
        }
        let want = types[stack.len()];
        let candidates: Vec<usize> = match stack.last() {
            None => (0..net.len()).collect(),
            Some(&last) => {
                let mut n = net.neighbors(last).to_vec();
                n.sort_unstable();
                n
            }
        };
        for c in candidates {
            if net.agent(c).service_type == want && !stack.contains(&c) {
                stack.push(c);
                extend(scenario, types, stack, out)?;
                stack.pop();
            }
        }
        Ok(())
    }

    if net.is_empty() {
        return Ok(out);
    }
    extend(scenario, types, &mut stack, &mut out)?;
    Ok(out)
}

/// Highest terminal reward over every feasible chain and E-LAM fee under
/// preference `s`. Ties keep the lexicographically first (chain, E-LAM).
pub fn brute_force_optimum(scenario: &Scenario, s: &PreferenceVector, fees: &[f64]) -> Result<BruteForceResult> {
    if fees.is_empty() {
        return Err(Error::config("fee table is empty"));
    }
    let chains = feasible_chains(scenario)?;
    let mut best: Option<BruteForceResult> = None;
    for chain in &chains {
        let sfc = GenSfc::new(chain.clone(), scenario.arrival_rate)?;
        let b = evaluate_chain(&scenario.network, &sfc, &scenario.template)?;
        for (k, &fee) in fees.iter().enumerate() {
            let r = subjective_episode_reward(&b, s.weights(), scenario.template.capability_threshold, fee)?;
            if best.as_ref().is_none_or(|x| r > x.reward) {
                best = Some(BruteForceResult {
                    chain: chain.clone(),
                    elam: k,
                    reward: r,
                    chains: 0,
                });
            }
        }
    }
    let mut best = best.ok_or_else(|| Error::structural("no feasible chain in this scenario"))?;
    best.chains = chains.len();
    Ok(best)
}
