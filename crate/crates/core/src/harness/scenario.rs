//! Random agent networks.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::qoe::{member_latency, AgentSpec, AgenticNetwork, LinkSpec, RequestTemplate, ScalingConstants};
use crate::seed::rng_for;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case")]
pub enum Topology {
    ErdosRenyi { p: f64 },
    Complete,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub n_agents: usize,
    pub n_types: u32,
    /// Compute budget is log-uniform between these powers of ten.
    pub log10_compute: [f64; 2],
    pub service_rate: [f64; 2],
    /// Service time std is uniform on `[0, max_cov / mu]`.
    pub max_cov: f64,
    pub crash_rate: [f64; 2],
    pub link_ber: [f64; 2],
    /// Crash rates are stored as `failures / observations`.
    pub observations: u64,
    pub arrival_rate: f64,
    pub topology: Topology,
    pub max_retries: usize,
    pub template: RequestTemplate,
    pub constants: ScalingConstants,
    pub seed: u64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            n_agents: 81,
            n_types: 4,
            log10_compute: [19.0, 23.0],
            service_rate: [1.0, 10.0],
            max_cov: 2.0,
            crash_rate: [0.0, 0.1],
            link_ber: [0.0, 0.05],
            observations: 1000,
            arrival_rate: 0.8,
            topology: Topology::ErdosRenyi { p: 0.15 },
            max_retries: 1000,
            template: RequestTemplate::default(),
            constants: ScalingConstants::default(),
            seed: 0,
        }
    }
}

fn check_range(name: &str, r: [f64; 2], lo: f64) -> Result<()> {
    if !(r[0].is_finite() && r[1].is_finite() && r[0] >= lo && r[0] <= r[1]) {
        return Err(Error::config(format!("{name} range {r:?} is invalid")));
    }
    Ok(())
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_agents < 2 {
            return Err(Error::config("need at least two agents"));
        }
        if self.n_types == 0 {
            return Err(Error::config("need at least one service type"));
        }
        check_range("log10_compute", self.log10_compute, f64::NEG_INFINITY)?;
        check_range("service_rate", self.service_rate, f64::MIN_POSITIVE)?;
        check_range("crash_rate", self.crash_rate, 0.0)?;
        check_range("link_ber", self.link_ber, 0.0)?;
        if self.crash_rate[1] > 1.0 || self.link_ber[1] > 1.0 {
            return Err(Error::config("crash rate and BER must stay within [0, 1]"));
        }
        if !(self.max_cov >= 0.0 && self.max_cov.is_finite()) {
            return Err(Error::config("max_cov must be non-negative"));
        }
        if self.observations == 0 {
            return Err(Error::config("observations must be positive"));
        }
        if !(self.arrival_rate > 0.0 && self.arrival_rate < self.service_rate[0]) {
            return Err(Error::config(format!(
                "arrival rate {} must be positive and below the slowest service rate {}",
                self.arrival_rate, self.service_rate[0]
            )));
        }
        if let Topology::ErdosRenyi { p } = self.topology {
            if !(p > 0.0 && p <= 1.0) {
                return Err(Error::config(format!("edge probability {p} outside (0, 1]")));
            }
        }
        self.template.validate().map_err(|e| Error::config(e.to_string()))?;
        if let Some(t) = self.template.required_types.iter().find(|&&t| t == 0 || t > self.n_types) {
            return Err(Error::config(format!("template requires unknown type {t}")));
        }
        Ok(())
    }
}

/// A generated network together with the request it is meant to serve.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Scenario {
    pub network: AgenticNetwork,
    pub arrival_rate: f64,
    pub template: RequestTemplate,
}

impl Scenario {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let s: Self = serde_json::from_str(text)?;
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        self.template.validate()?;
        for id in 0..self.network.len() {
            member_latency(&self.network, id, self.arrival_rate)?;
        }
        for &t in &self.template.required_types {
            if !self.network.agents().iter().any(|a| a.service_type == t) {
                return Err(Error::structural(format!("no agent provides type {t}")));
            }
        }
        Ok(())
    }
}

fn sample_agents<R: Rng>(cfg: &ScenarioConfig, rng: &mut R) -> Vec<AgentSpec> {
    // Round-robin types, then shuffled, so every type gets floor(n / types)
    // agents or one more.
    let mut types: Vec<u32> = (0..cfg.n_agents).map(|i| (i as u32 % cfg.n_types) + 1).collect();
    types.shuffle(rng);
    types
        .into_iter()
        .map(|service_type| {
            let log_c = rng.gen_range(cfg.log10_compute[0]..=cfg.log10_compute[1]);
            let mu = rng.gen_range(cfg.service_rate[0]..=cfg.service_rate[1]);
            let sigma = rng.gen_range(0.0..=cfg.max_cov / mu);
            let crash = rng.gen_range(cfg.crash_rate[0]..=cfg.crash_rate[1]);
            AgentSpec {
                id: 0,
                service_type,
                compute_budget: 10f64.powf(log_c),
                service_rate: mu,
                service_time_std: sigma,
                observations: cfg.observations,
                failures: (crash * cfg.observations as f64).round() as u64,
            }
        })
        .collect()
}

fn sample_links<R: Rng>(cfg: &ScenarioConfig, rng: &mut R) -> Vec<LinkSpec> {
    let n = cfg.n_agents;
    let mut links = Vec::new();
    for a in 0..n {
        for b in a + 1..n {
            let keep = match cfg.topology {
                Topology::Complete => true,
                Topology::ErdosRenyi { p } => rng.gen_bool(p),
            };
            if keep {
                links.push(LinkSpec {
                    endpoints: [a, b],
                    mean_ber: rng.gen_range(cfg.link_ber[0]..=cfg.link_ber[1]),
                });
            }
        }
    }
    links
}

/// Samples a connected scenario. Topologies are redrawn until connected, up
/// to `max_retries` attempts.
pub fn gen_scenario(cfg: &ScenarioConfig) -> Result<Scenario> {
    cfg.validate()?;
    let mut rng = rng_for(cfg.seed, "scenario/agents");
    let agents = sample_agents(cfg, &mut rng);
    let mut rng = rng_for(cfg.seed, "scenario/topology");
    for _ in 0..cfg.max_retries.max(1) {
        let links = sample_links(cfg, &mut rng);
        let network = AgenticNetwork::new(agents.clone(), links, cfg.constants)?;
        if network.is_connected() {
            let scenario = Scenario {
                network,
                arrival_rate: cfg.arrival_rate,
                template: cfg.template.clone(),
            };
            scenario.validate()?;
            return Ok(scenario);
        }
    }
    Err(Error::config(format!(
        "no connected topology after {} attempts; raise the edge probability",
        cfg.max_retries
    )))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qoe::traffic_intensity;

    #[test]
    fn same_seed_same_bytes() {
        let cfg = ScenarioConfig::default();
        let a = gen_scenario(&cfg).unwrap().to_json().unwrap();
        let b = gen_scenario(&cfg).unwrap().to_json().unwrap();
        assert_eq!(a, b);
        let other = gen_scenario(&ScenarioConfig { seed: 1, ..cfg }).unwrap().to_json().unwrap();
        assert_ne!(a, other);
    }

    #[test]
    fn type_counts_cover_all_agents() {
        let s = gen_scenario(&ScenarioConfig::default()).unwrap();
        let mut counts = [0usize; 4];
        for a in s.network.agents() {
            counts[a.service_type as usize - 1] += 1;
        }
        assert_eq!(counts.iter().sum::<usize>(), 81);
        assert_eq!(counts, [21, 20, 20, 20]);
        assert!(s.network.is_connected());
    }

    #[test]
    fn every_queue_is_stable() {
        for seed in 0..5 {
            let s = gen_scenario(&ScenarioConfig { seed, ..Default::default() }).unwrap();
            for a in s.network.agents() {
                assert!(traffic_intensity(s.arrival_rate, a.service_rate).unwrap() < 1.0);
                assert!(a.service_time_std * a.service_rate <= 2.0 + 1e-12);
                assert!(a.crash_rate() <= 0.1);
            }
            assert!(s.network.links().iter().all(|l| l.mean_ber <= 0.05));
        }
    }

    #[test]
    fn sparse_graph_fails_after_bounded_retries() {
        let cfg = ScenarioConfig {
            topology: Topology::ErdosRenyi { p: 0.001 },
            max_retries: 3,
            ..Default::default()
        };
        assert!(matches!(gen_scenario(&cfg), Err(Error::Config(_))));
    }

    #[test]
    fn complete_topology_and_round_trip() {
        let cfg = ScenarioConfig {
            n_agents: 6,
            topology: Topology::Complete,
            ..Default::default()
        };
        let s = gen_scenario(&cfg).unwrap();
        assert_eq!(s.network.links().len(), 15);
        let back = Scenario::from_json(&s.to_json().unwrap()).unwrap();
        assert_eq!(back.to_json().unwrap(), s.to_json().unwrap());
    }

    #[test]
    fn rejects_unstable_arrival_rate() {
        let cfg = ScenarioConfig {
            arrival_rate: 1.5,
            ..Default::default()
        };
        assert!(matches!(gen_scenario(&cfg), Err(Error::Config(_))));
    }
}
