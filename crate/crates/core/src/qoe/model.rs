//! Closed-form QoE factors of a chain: capability, bit error rate, M/G/1
//! latency and outage probability, and the objective and subjective QoE
//! built from them.

use serde::{Deserialize, Serialize};

use super::network::{AgenticNetwork, GenSfc, RequestTemplate, ScalingConstants};
use crate::error::{Error, Result};
use crate::preference::{CAPABILITY, INFO_LOSS, LATENCY, OUTAGE};

/// Compute-optimal model/data split and the resulting loss.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PretrainingLoss {
    pub loss: f64,
    /// Optimal parameter count.
    pub n_opt: f64,
    /// Optimal token count.
    pub d_opt: f64,
}

pub fn pretraining_loss(compute_budget: f64, c: &ScalingConstants) -> Result<PretrainingLoss> {
    if !(compute_budget.is_finite() && compute_budget > 0.0) {
        return Err(Error::domain(format!("compute budget must be positive, got {compute_budget}")));
    }
    let positive = [c.zeta, c.eta, c.alpha1, c.alpha2];
    if positive.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
        return Err(Error::domain("scaling constants must be positive"));
    }
    let a_sum = c.alpha1 + c.alpha2;
    let ratio = (c.alpha1 * c.zeta) / (c.alpha2 * c.eta);
    let per_flop = compute_budget / 6.0;
    let n_opt = ratio.powf(1.0 / a_sum) * per_flop.powf(c.alpha2 / a_sum);
    let d_opt = ratio.recip().powf(1.0 / a_sum) * per_flop.powf(c.alpha1 / a_sum);
    let loss = c.l0 + c.zeta / n_opt.powf(c.alpha1) + c.eta / d_opt.powf(c.alpha2);
    Ok(PretrainingLoss { loss, n_opt, d_opt })
}

/// Probability that an agent with the given pre-training loss completes its task.
pub fn agent_capability(loss: f64) -> Result<f64> {
    if !(loss >= 0.0) {
        return Err(Error::domain(format!("loss must be non-negative, got {loss}")));
    }
    Ok((-loss).exp())
}

fn member_capability(network: &AgenticNetwork, id: usize) -> Result<f64> {
    let loss = pretraining_loss(network.agent(id).compute_budget, network.constants())?;
    agent_capability(loss.loss.max(0.0))
}

/// Per-agent success probability `exp(-loss)` for every agent.
pub fn agent_capabilities(network: &AgenticNetwork) -> Result<Vec<f64>> {
    (0..network.len()).map(|i| member_capability(network, i)).collect()
}

/// `(1/n) * prod exp(-loss_i)`.
///
/// The `1/n` prefactor is kept as the model defines it; a geometric mean
/// would be the scale-free alternative.
pub fn chain_capability(network: &AgenticNetwork, chain: &GenSfc) -> Result<f64> {
    network.check_chain(chain)?;
    let mut product = 1.0;
    for &id in chain.agent_ids() {
        product *= member_capability(network, id)?;
    }
    Ok(product / chain.len() as f64)
}

/// `1 - prod over hops of (1 - BER)`; zero for a single agent.
pub fn chain_ber(network: &AgenticNetwork, chain: &GenSfc) -> Result<f64> {
    network.check_chain(chain)?;
    let mut correct = 1.0;
    for w in chain.agent_ids().windows(2) {
        let link = network
            .link_between(w[0], w[1])
            .ok_or_else(|| Error::structural(format!("no link between {} and {}", w[0], w[1])))?;
        correct *= 1.0 - link.mean_ber;
    }
    Ok(1.0 - correct)
}

/// `rho = lambda / mu`; errors unless `rho < 1`.
pub fn traffic_intensity(arrival_rate: f64, service_rate: f64) -> Result<f64> {
    if !(arrival_rate >= 0.0 && arrival_rate.is_finite()) {
        return Err(Error::domain("arrival rate must be non-negative"));
    }
    if !(service_rate > 0.0 && service_rate.is_finite()) {
        return Err(Error::domain("service rate must be positive"));
    }
    let rho = arrival_rate / service_rate;
    if rho >= 1.0 {
        return Err(Error::Stability { agent: None, rho });
    }
    Ok(rho)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AgentLatency {
    /// Mean sojourn time: service plus queueing.
    pub latency: f64,
    /// Mean time spent waiting in queue.
    pub wait: f64,
    /// Coefficient of variation of the service time.
    pub cov: f64,
}

/// Pollaczek-Khinchine mean latency of one M/G/1 agent.
pub fn agent_latency(arrival_rate: f64, service_rate: f64, service_time_std: f64) -> Result<AgentLatency> {
    if !(service_time_std >= 0.0 && service_time_std.is_finite()) {
        return Err(Error::domain("service time std must be non-negative"));
    }
    let rho = traffic_intensity(arrival_rate, service_rate)?;
    let cov = service_time_std * service_rate;
    let wait = rho * (1.0 + cov * cov) / (2.0 * service_rate * (1.0 - rho));
    Ok(AgentLatency {
        latency: 1.0 / service_rate + wait,
        wait,
        cov,
    })
}

/// Latency of agent `id` when fed at `arrival_rate`.
pub fn member_latency(network: &AgenticNetwork, id: usize, arrival_rate: f64) -> Result<f64> {
    let a = network.agent(id);
    agent_latency(arrival_rate, a.service_rate, a.service_time_std)
        .map(|l| l.latency)
        .map_err(|e| match e {
            Error::Stability { rho, .. } => Error::Stability { agent: Some(id), rho },
            other => other,
        })
}

/// Sum of per-agent latencies; transmission delay is not modeled.
pub fn chain_latency(network: &AgenticNetwork, chain: &GenSfc) -> Result<f64> {
    network.check_chain(chain)?;
    chain
        .agent_ids()
        .iter()
        .map(|&id| member_latency(network, id, chain.arrival_rate()))
        .sum()
}

/// `P(R > lambda_max)` for `R ~ Poisson(arrival_rate)`, summing the pmf up to
/// `floor(lambda_max)` with the multiplicative term recurrence.
pub fn poisson_overload_prob(arrival_rate: f64, lambda_max: f64) -> Result<f64> {
    if !(arrival_rate >= 0.0 && arrival_rate.is_finite()) {
        return Err(Error::domain("arrival rate must be non-negative"));
    }
    if !(lambda_max >= 0.0 && lambda_max.is_finite()) {
        return Err(Error::domain("lambda_max must be non-negative"));
    }
    let kmax = lambda_max.floor() as u64;
    let mut term = (-arrival_rate).exp();
    let mut cdf = term;
    for k in 1..=kmax {
        term *= arrival_rate / k as f64;
        cdf += term;
        if term == 0.0 {
            break;
        }
    }
    Ok((1.0 - cdf).clamp(0.0, 1.0))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Outage {
    pub probability: f64,
    /// Agent with the highest traffic intensity (lowest id on ties).
    pub bottleneck: usize,
    pub no_crash: f64,
    pub overload: f64,
}

pub fn outage_probability(network: &AgenticNetwork, chain: &GenSfc) -> Result<Outage> {
    network.check_chain(chain)?;
    let mut no_crash = 1.0;
    let mut bottleneck = usize::MAX;
    for &id in chain.agent_ids() {
        let a = network.agent(id);
        if a.observations == 0 {
            return Err(Error::domain(format!("agent {id} has no observations")));
        }
        no_crash *= 1.0 - a.crash_rate();
        // argmax of lambda / mu is argmin of mu
        if bottleneck == usize::MAX {
            bottleneck = id;
        } else {
            let best = network.agent(bottleneck).service_rate;
            if a.service_rate < best || (a.service_rate == best && id < bottleneck) {
                bottleneck = id;
            }
        }
    }
    let lambda_max = network.agent(bottleneck).service_rate;
    let overload = poisson_overload_prob(chain.arrival_rate(), lambda_max)?;
    Ok(Outage {
        probability: (1.0 - no_crash * (1.0 - overload)).clamp(0.0, 1.0),
        bottleneck,
        no_crash,
        overload,
    })
}

/// Which of the request constraints a chain satisfies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Feasibility {
    pub latency: bool,
    pub capability: bool,
    /// Service types match the request in order.
    pub succ: bool,
}

impl Feasibility {
    pub fn all(&self) -> bool {
        self.latency && self.capability && self.succ
    }
}

/// The four QoE factors of a chain plus its constraint flags.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QoeBreakdown {
    pub capability: f64,
    pub ber: f64,
    pub latency: f64,
    pub outage_prob: f64,
    pub feasible: Feasibility,
}

impl QoeBreakdown {
    /// A breakdown with all constraints marked satisfied; for tests and
    /// hand-built examples.
    pub fn from_factors(capability: f64, ber: f64, latency: f64, outage_prob: f64) -> Self {
        Self {
            capability,
            ber,
            latency,
            outage_prob,
            feasible: Feasibility {
                latency: true,
                capability: true,
                succ: true,
            },
        }
    }
}

/// Weber-Fechner objective QoE.
pub fn objective_qoe(b: &QoeBreakdown, c_th: f64) -> Result<f64> {
    if !(b.capability > 0.0 && b.latency > 0.0 && c_th > 0.0) {
        return Err(Error::domain("capability, latency and threshold must be positive"));
    }
    Ok((1.0 - b.outage_prob) * ((1.0 - b.ber) * (b.capability / c_th).ln() - b.latency.ln()))
}

/// Preference-weighted QoE minus the translator fee.
///
/// Errors when a log argument is non-positive instead of clamping it.
pub fn subjective_episode_reward(b: &QoeBreakdown, weights: &[f64; 4], c_th: f64, fee: f64) -> Result<f64> {
    if !(c_th > 0.0) {
        return Err(Error::domain("capability threshold must be positive"));
    }
    if !(fee >= 0.0 && fee.is_finite()) {
        return Err(Error::domain("fee must be non-negative"));
    }
    let cap_arg = weights[CAPABILITY] * b.capability / c_th;
    let lat_arg = weights[LATENCY] * b.latency;
    if !(cap_arg > 0.0) {
        return Err(Error::domain(format!("log of non-positive capability term {cap_arg}")));
    }
    if !(lat_arg > 0.0) {
        return Err(Error::domain(format!("log of non-positive latency term {lat_arg}")));
    }
    let core = (1.0 - weights[INFO_LOSS] * b.ber) * cap_arg.ln() - lat_arg.ln();
    Ok((1.0 - weights[OUTAGE] * b.outage_prob) * core - fee)
}

pub fn evaluate_chain(network: &AgenticNetwork, chain: &GenSfc, template: &RequestTemplate) -> Result<QoeBreakdown> {
    let capability = chain_capability(network, chain)?;
    let ber = chain_ber(network, chain)?;
    let latency = chain_latency(network, chain)?;
    let outage = outage_probability(network, chain)?;
    let succ = chain.len() == template.required_types.len()
        && chain
            .agent_ids()
            .iter()
            .zip(&template.required_types)
            .all(|(&id, &t)| network.agent(id).service_type == t);
    Ok(QoeBreakdown {
        capability,
        ber,
        latency,
        outage_prob: outage.probability,
        feasible: Feasibility {
            latency: latency <= template.max_latency,
            capability: capability >= template.capability_threshold,
            succ,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::super::network::fixtures::*;
    use super::super::network::*;
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn single(mu: f64, sigma: f64, obs: u64, fail: u64) -> AgenticNetwork {
        AgenticNetwork::new(vec![agent(1, 1e21, mu, sigma, obs, fail)], vec![], ScalingConstants::default()).unwrap()
    }

    #[test]
    fn scaling_law_reference_values() {
        // Frozen from an independent evaluation of the closed form.
        let c = ScalingConstants::default();
        let at6 = pretraining_loss(6.0, &c).unwrap();
        assert_relative_eq!(at6.n_opt, 1.344_710_642_772_53, max_relative = 1e-12);
        assert_relative_eq!(at6.d_opt, 0.743_654_410_244_121_9, max_relative = 1e-12);
        let big = pretraining_loss(1e21, &c).unwrap();
        assert_relative_eq!(big.loss, 0.638_882_940_154_319_3, max_relative = 1e-10);
        assert_relative_eq!(agent_capability(big.loss).unwrap(), 0.527_881_770_343_138_9, max_relative = 1e-10);
    }

    #[test]
    fn symmetric_constants_give_unit_split() {
        let c = ScalingConstants {
            zeta: 400.0,
            eta: 400.0,
            alpha1: 0.3,
            alpha2: 0.3,
            l0: 0.0,
        };
        let r = pretraining_loss(6.0, &c).unwrap();
        assert_eq!(r.n_opt, 1.0);
        assert_eq!(r.d_opt, 1.0);
    }

    #[test]
    fn scaling_law_domain() {
        assert!(pretraining_loss(0.0, &ScalingConstants::default()).is_err());
        assert!(pretraining_loss(-1.0, &ScalingConstants::default()).is_err());
        assert!(agent_capability(-0.1).is_err());
    }

    #[test]
    fn capability_of_loss() {
        assert_eq!(agent_capability(0.0).unwrap(), 1.0);
        assert_relative_eq!(agent_capability(2f64.ln()).unwrap(), 0.5, max_relative = 1e-15);
        assert_relative_eq!(agent_capability(0.639).unwrap(), 0.527_819_980_201_207_7, max_relative = 1e-12);
    }

    #[test]
    fn chain_capability_prefactor() {
        // Each member at exp(-ln 2) = 0.5 requires a custom constant set:
        // l0 = ln 2 with zeta, eta tiny relative to a huge budget.
        let c = ScalingConstants {
            zeta: 1e-300,
            eta: 1e-300,
            alpha1: 0.5,
            alpha2: 0.5,
            l0: 2f64.ln(),
        };
        let agents = (0..3).map(|i| agent(i + 1, 1e30, 2.0, 0.0, 1, 0)).collect();
        let net = AgenticNetwork::new(agents, vec![link(0, 1, 0.0), link(1, 2, 0.0)], c).unwrap();
        let chain = GenSfc::new(vec![0, 1, 2], 1.0).unwrap();
        assert_relative_eq!(chain_capability(&net, &chain).unwrap(), 0.125 / 3.0, max_relative = 1e-12);
        let one = GenSfc::new(vec![1], 1.0).unwrap();
        assert_relative_eq!(chain_capability(&net, &one).unwrap(), 0.5, max_relative = 1e-12);
    }

    #[test]
    fn ber_composition() {
        let net = path3();
        let chain = GenSfc::new(vec![0, 1, 2], 1.0).unwrap();
        assert_relative_eq!(chain_ber(&net, &chain).unwrap(), 0.28, max_relative = 1e-12);
        assert_eq!(chain_ber(&net, &GenSfc::new(vec![1], 1.0).unwrap()).unwrap(), 0.0);
    }

    #[test]
    fn intensity_boundary_is_unstable() {
        assert_eq!(traffic_intensity(1.0, 2.0).unwrap(), 0.5);
        assert_eq!(traffic_intensity(0.3, 1.0).unwrap(), 0.3);
        assert!(matches!(traffic_intensity(2.0, 2.0), Err(Error::Stability { .. })));
    }

    #[test]
    fn latency_examples() {
        let mm1 = agent_latency(1.0, 2.0, 0.5).unwrap();
        assert_relative_eq!(mm1.latency, 1.0, max_relative = 1e-15);
        assert_eq!(mm1.cov, 1.0);
        let det = agent_latency(1.0, 2.0, 0.0).unwrap();
        // 0.5 * 1 / (2 * 2 * 0.5) = 0.25; the queueing simulator agrees.
        assert_relative_eq!(det.wait, 0.25, max_relative = 1e-15);
        assert_relative_eq!(det.latency, 0.75, max_relative = 1e-15);
        let idle = agent_latency(1e-12, 2.0, 0.0).unwrap();
        assert_relative_eq!(idle.latency, 0.5, max_relative = 1e-9);
    }

    #[test]
    fn chain_latency_is_additive_and_names_unstable_agent() {
        let agents = vec![agent(1, 1e21, 2.0, 0.5, 1, 0), agent(2, 1e21, 2.0, 0.5, 1, 0), agent(3, 1e21, 0.5, 0.0, 1, 0)];
        let net = AgenticNetwork::new(agents, vec![link(0, 1, 0.0), link(1, 2, 0.0)], ScalingConstants::default()).unwrap();
        assert_relative_eq!(chain_latency(&net, &GenSfc::new(vec![0], 1.0).unwrap()).unwrap(), 1.0);
        assert_relative_eq!(chain_latency(&net, &GenSfc::new(vec![0, 1], 1.0).unwrap()).unwrap(), 2.0);
        let err = chain_latency(&net, &GenSfc::new(vec![0, 1, 2], 1.0).unwrap()).unwrap_err();
        assert!(matches!(err, Error::Stability { agent: Some(2), .. }));
    }

    #[test]
    fn poisson_overload_examples() {
        assert_eq!(poisson_overload_prob(0.0, 0.0).unwrap(), 0.0);
        assert_relative_eq!(poisson_overload_prob(2.0, 2.0).unwrap(), 1.0 - 5.0 * (-2f64).exp(), max_relative = 1e-14);
        assert!(poisson_overload_prob(2.0, 100.0).unwrap() < 1e-12);
        // floor is applied to non-integral thresholds
        assert_eq!(poisson_overload_prob(2.0, 2.9).unwrap(), poisson_overload_prob(2.0, 2.0).unwrap());
        assert!(poisson_overload_prob(-1.0, 1.0).is_err());
    }

    #[test]
    fn outage_examples() {
        let zero = single(2.0, 0.0, 10, 0);
        let chain = GenSfc::new(vec![0], 0.0).unwrap();
        assert_eq!(outage_probability(&zero, &chain).unwrap().probability, 0.0);

        // lambda_max = 1e6 makes the overload term vanish
        let crashy = single(1e6, 0.0, 10, 1);
        let o = outage_probability(&crashy, &GenSfc::new(vec![0], 1.0).unwrap()).unwrap();
        assert_relative_eq!(o.probability, 0.1, max_relative = 1e-12);

        let agents = vec![agent(1, 1e21, 2.0, 0.0, 10, 1), agent(2, 1e21, 3.0, 0.0, 10, 2)];
        let net = AgenticNetwork::new(agents, vec![link(0, 1, 0.0)], ScalingConstants::default()).unwrap();
        let o = outage_probability(&net, &GenSfc::new(vec![0, 1], 2.0).unwrap()).unwrap();
        assert_eq!(o.bottleneck, 0);
        let expected = 1.0 - 0.9 * 0.8 * (5.0 * (-2f64).exp());
        assert_relative_eq!(o.probability, expected, max_relative = 1e-12);
        assert_relative_eq!(o.probability, 0.512_792_980_348_194_3, max_relative = 1e-12);
    }

    #[test]
    fn bottleneck_ties_go_to_lowest_id() {
        let agents = vec![agent(1, 1e21, 3.0, 0.0, 1, 0), agent(2, 1e21, 2.0, 0.0, 1, 0), agent(3, 1e21, 2.0, 0.0, 1, 0)];
        let net = AgenticNetwork::new(agents, vec![link(0, 1, 0.0), link(1, 2, 0.0)], ScalingConstants::default()).unwrap();
        let o = outage_probability(&net, &GenSfc::new(vec![2, 1, 0], 1.0).unwrap()).unwrap();
        assert_eq!(o.bottleneck, 1);
    }

    #[test]
    fn objective_qoe_examples() {
        assert_eq!(objective_qoe(&QoeBreakdown::from_factors(0.1, 0.0, 1.0, 0.0), 0.1).unwrap(), 0.0);
        assert_eq!(objective_qoe(&QoeBreakdown::from_factors(0.5, 0.3, 4.0, 1.0), 0.1).unwrap(), 0.0);
        let e = std::f64::consts::E;
        let q = objective_qoe(&QoeBreakdown::from_factors(e * 0.1, 0.5, 1.0, 0.0), 0.1).unwrap();
        assert_relative_eq!(q, 0.5, max_relative = 1e-14);
        assert!(objective_qoe(&QoeBreakdown::from_factors(0.0, 0.0, 1.0, 0.0), 0.1).is_err());
    }

    #[test]
    fn subjective_reward_examples() {
        let e = std::f64::consts::E;
        let degenerate = QoeBreakdown::from_factors(e * 0.1, 0.0, 1.0, 0.0);
        assert!(subjective_episode_reward(&degenerate, &[1.0, 0.0, 0.0, 0.0], 0.1, 0.0).is_err());

        // w_C * C / C_th = e and w_L * L = 1, with w_B = w_P = 0
        let w = [0.5, 0.0, 0.5, 0.0];
        let b = QoeBreakdown::from_factors(2.0 * e * 0.1, 0.3, 2.0, 0.4);
        let r = subjective_episode_reward(&b, &w, 0.1, 0.0).unwrap();
        assert_relative_eq!(r, 1.0, max_relative = 1e-14);
        let r_fee = subjective_episode_reward(&b, &w, 0.1, 0.25).unwrap();
        assert_relative_eq!(r_fee, 0.75, max_relative = 1e-14);
    }

    #[test]
    fn evaluate_flags() {
        let net = path3();
        let generous = RequestTemplate::new(vec![1, 2, 3], 1e-6, 100.0).unwrap();
        let ok = evaluate_chain(&net, &GenSfc::new(vec![0, 1, 2], 1.0).unwrap(), &generous).unwrap();
        assert!(ok.feasible.all());

        let reversed = evaluate_chain(&net, &GenSfc::new(vec![2, 1, 0], 1.0).unwrap(), &generous).unwrap();
        assert!(!reversed.feasible.succ);
        assert!(reversed.feasible.latency);

        let strict = RequestTemplate::new(vec![1, 2, 3], 1e-6, 0.5).unwrap();
        let slow = evaluate_chain(&net, &GenSfc::new(vec![0, 1, 2], 1.0).unwrap(), &strict).unwrap();
        assert!(!slow.feasible.latency);
        assert!(slow.feasible.succ);
    }

    #[test]
    fn capability_is_permutation_invariant() {
        let agents = vec![agent(1, 3e19, 2.0, 0.0, 1, 0), agent(2, 7e21, 2.0, 0.0, 1, 0), agent(3, 2e23, 2.0, 0.0, 1, 0)];
        let links = vec![link(0, 1, 0.0), link(1, 2, 0.0), link(0, 2, 0.0)];
        let net = AgenticNetwork::new(agents, links, ScalingConstants::default()).unwrap();
        let a = chain_capability(&net, &GenSfc::new(vec![0, 1, 2], 1.0).unwrap()).unwrap();
        let b = chain_capability(&net, &GenSfc::new(vec![2, 0, 1], 1.0).unwrap()).unwrap();
        assert_relative_eq!(a, b, max_relative = 1e-15);
    }

    /// Textbook factorial summation, independent of the recurrence.
    fn brute_overload(lambda: f64, lambda_max: f64) -> f64 {
        let mut cdf = 0.0;
        let mut fact = 1.0f64;
        for k in 0..=(lambda_max.floor() as i32) {
            if k > 0 {
                fact *= k as f64;
            }
            cdf += (-lambda).exp() * lambda.powi(k) / fact;
        }
        (1.0 - cdf).max(0.0)
    }

    proptest! {
        #[test]
        fn overload_matches_factorial_sum(lambda in 0.0f64..10.0, lambda_max in 0.0f64..20.0) {
            let fast = poisson_overload_prob(lambda, lambda_max).unwrap();
            prop_assert!((fast - brute_overload(lambda, lambda_max)).abs() <= 1e-12);
        }

        #[test]
        fn overload_non_increasing_in_threshold(lambda in 0.0f64..10.0, a in 0.0f64..20.0, b in 0.0f64..20.0) {
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            prop_assert!(poisson_overload_prob(lambda, hi).unwrap() <= poisson_overload_prob(lambda, lo).unwrap() + 1e-15);
        }

        #[test]
        fn mm1_reduction(mu in 0.1f64..50.0, rho in 0.0f64..0.99) {
            let lambda = rho * mu;
            let l = agent_latency(lambda, mu, 1.0 / mu).unwrap();
            prop_assert!((l.latency - 1.0 / (mu - lambda)).abs() <= 1e-9 * l.latency);
        }

        #[test]
        fn latency_non_decreasing_in_arrival_rate(mu in 0.5f64..10.0, sigma in 0.0f64..2.0, a in 0.0f64..0.99, b in 0.0f64..0.99) {
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            let l_lo = agent_latency(lo * mu, mu, sigma).unwrap().latency;
            let l_hi = agent_latency(hi * mu, mu, sigma).unwrap().latency;
            prop_assert!(l_hi >= l_lo);
        }

        #[test]
        fn ber_non_decreasing(b1 in 0.0f64..1.0, b2 in 0.0f64..1.0, bump in 0.0f64..1.0) {
            let mk = |x: f64, y: f64| {
                let agents = (0..3).map(|i| agent(i + 1, 1e21, 2.0, 0.0, 1, 0)).collect();
                AgenticNetwork::new(agents, vec![link(0, 1, x), link(1, 2, y)], ScalingConstants::default()).unwrap()
            };
            let chain = GenSfc::new(vec![0, 1, 2], 1.0).unwrap();
            let base = chain_ber(&mk(b1, b2), &chain).unwrap();
            let raised = chain_ber(&mk((b1 + bump).min(1.0), b2), &chain).unwrap();
            prop_assert!(raised >= base - 1e-15);
        }

        #[test]
        fn outage_non_decreasing_in_crash_rate(f1 in 0u64..=100, f2 in 0u64..=100, extra in 0u64..=100) {
            let mk = |x: u64| {
                let agents = vec![agent(1, 1e21, 2.0, 0.0, 100, x), agent(2, 1e21, 3.0, 0.0, 100, f2)];
                AgenticNetwork::new(agents, vec![link(0, 1, 0.0)], ScalingConstants::default()).unwrap()
            };
            let chain = GenSfc::new(vec![0, 1], 1.0).unwrap();
            let lo = outage_probability(&mk(f1), &chain).unwrap().probability;
            let hi = outage_probability(&mk((f1 + extra).min(100)), &chain).unwrap().probability;
            prop_assert!(hi >= lo - 1e-15);
        }

        #[test]
        fn full_outage_zeroes_objective(c in 1e-3f64..1.0, b in 0.0f64..1.0, l in 1e-3f64..100.0) {
            prop_assert_eq!(objective_qoe(&QoeBreakdown::from_factors(c, b, l, 1.0), 0.01).unwrap(), 0.0);
        }
    }

    #[test]
    fn loss_strictly_decreasing_on_grid() {
        let c = ScalingConstants::default();
        let mut prev = f64::INFINITY;
        for k in 0..20 {
            let budget = 1e18 * 10f64.powf(6.0 * k as f64 / 19.0);
            let l = pretraining_loss(budget, &c).unwrap().loss;
            assert!(l < prev);
            prev = l;
        }
    }
}
