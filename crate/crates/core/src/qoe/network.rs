use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Scaling-law constants for the compute-optimal pre-training loss.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScalingConstants {
    pub zeta: f64,
    pub eta: f64,
    pub alpha1: f64,
    pub alpha2: f64,
    #[serde(default)]
    pub l0: f64,
}

impl Default for ScalingConstants {
    fn default() -> Self {
        Self {
            zeta: 406.4,
            eta: 410.7,
            alpha1: 0.34,
            alpha2: 0.28,
            l0: 0.0,
        }
    }
}

/// One agent of the network. `id` is its index in [`AgenticNetwork::agents`]
/// and is not stored in scenario files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentSpec {
    #[serde(skip)]
    pub id: usize,
    /// 1-based service type.
    pub service_type: u32,
    /// Training compute in FLOPs.
    pub compute_budget: f64,
    /// Requests per second.
    pub service_rate: f64,
    /// Standard deviation of the service time in seconds.
    pub service_time_std: f64,
    pub observations: u64,
    pub failures: u64,
}

impl AgentSpec {
    pub fn crash_rate(&self) -> f64 {
        self.failures as f64 / self.observations as f64
    }

    fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::structural(format!("agent {}: {what}", self.id)));
        if !(self.compute_budget.is_finite() && self.compute_budget > 0.0) {
            return bad("compute_budget must be positive");
        }
        if !(self.service_rate.is_finite() && self.service_rate > 0.0) {
            return bad("service_rate must be positive");
        }
        if !(self.service_time_std.is_finite() && self.service_time_std >= 0.0) {
            return bad("service_time_std must be non-negative");
        }
        if self.observations == 0 {
            return bad("observations must be positive");
        }
        if self.failures > self.observations {
            return bad("failures exceed observations");
        }
        if self.service_type == 0 {
            return bad("service types are 1-based");
        }
        Ok(())
    }
}

/// Undirected link with its mean bit error rate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinkSpec {
    pub endpoints: [usize; 2],
    pub mean_ber: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct NetworkFile {
    agents: Vec<AgentSpec>,
    links: Vec<LinkSpec>,
    #[serde(default)]
    constants: ScalingConstants,
}

/// Undirected agent graph with per-agent attributes and per-link BER.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(try_from = "NetworkFile", into = "NetworkFile")]
pub struct AgenticNetwork {
    agents: Vec<AgentSpec>,
    links: Vec<LinkSpec>,
    constants: ScalingConstants,
    /// `link_index[i * n + j]` is the link joining i and j, if any.
    link_index: Vec<Option<usize>>,
    neighbors: Vec<Vec<usize>>,
}

impl AgenticNetwork {
    pub fn new(
        mut agents: Vec<AgentSpec>,
        links: Vec<LinkSpec>,
        constants: ScalingConstants,
    ) -> Result<Self> {
        let n = agents.len();
        if n == 0 {
            return Err(Error::structural("network has no agents"));
        }
        for (i, a) in agents.iter_mut().enumerate() {
            a.id = i;
            a.validate()?;
        }
        let mut link_index = vec![None; n * n];
        let mut neighbors = vec![Vec::new(); n];
        for (k, link) in links.iter().enumerate() {
            let [a, b] = link.endpoints;
            if a >= n || b >= n {
                return Err(Error::structural(format!("link {k} references a missing agent")));
            }
            if a == b {
                return Err(Error::structural(format!("link {k} is a self-loop")));
            }
            if !(0.0..=1.0).contains(&link.mean_ber) {
                return Err(Error::structural(format!("link {k}: mean_ber outside [0, 1]")));
            }
            if link_index[a * n + b].is_some() {
                return Err(Error::structural(format!("duplicate link between {a} and {b}")));
            }
            link_index[a * n + b] = Some(k);
            link_index[b * n + a] = Some(k);
            neighbors[a].push(b);
            neighbors[b].push(a);
        }
        for nb in &mut neighbors {
            nb.sort_unstable();
        }
        Ok(Self {
            agents,
            links,
            constants,
            link_index,
            neighbors,
        })
    }

    pub fn agents(&self) -> &[AgentSpec] {
        &self.agents
    }

    pub fn agent(&self, id: usize) -> &AgentSpec {
        &self.agents[id]
    }

    pub fn links(&self) -> &[LinkSpec] {
        &self.links
    }

    pub fn constants(&self) -> &ScalingConstants {
        &self.constants
    }

    pub fn len(&self) -> usize {
        self.agents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.agents.is_empty()
    }

    /// Sorted neighbor ids.
    pub fn neighbors(&self, id: usize) -> &[usize] {
        &self.neighbors[id]
    }

    pub fn link_between(&self, a: usize, b: usize) -> Option<&LinkSpec> {
        let n = self.len();
        if a >= n || b >= n {
            return None;
        }
        self.link_index[a * n + b].map(|k| &self.links[k])
    }

    /// Breadth-first connectivity check.
    pub fn is_connected(&self) -> bool {
        let n = self.len();
        let mut seen = vec![false; n];
        let mut stack = vec![0];
        seen[0] = true;
        let mut count = 1;
        while let Some(u) = stack.pop() {
            for &v in &self.neighbors[u] {
                if !seen[v] {
                    seen[v] = true;
                    count += 1;
                    stack.push(v);
                }
            }
        }
        count == n
    }

    /// Dense 0/1 adjacency in row-major order.
    pub fn adjacency(&self) -> Vec<f64> {
        self.link_index
            .iter()
            .map(|l| if l.is_some() { 1.0 } else { 0.0 })
            .collect()
    }

    /// Checks that `chain` is a simple path in this network.
    pub fn check_chain(&self, chain: &GenSfc) -> Result<()> {
        let ids = chain.agent_ids();
        for &id in ids {
            if id >= self.len() {
                return Err(Error::structural(format!("chain references missing agent {id}")));
            }
        }
        for w in ids.windows(2) {
            if self.link_between(w[0], w[1]).is_none() {
                return Err(Error::structural(format!("no link between {} and {}", w[0], w[1])));
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

impl TryFrom<NetworkFile> for AgenticNetwork {
    type Error = Error;

    fn try_from(f: NetworkFile) -> Result<Self> {
        Self::new(f.agents, f.links, f.constants)
    }
}

impl From<AgenticNetwork> for NetworkFile {
    fn from(n: AgenticNetwork) -> Self {
        NetworkFile {
            agents: n.agents,
            links: n.links,
            constants: n.constants,
        }
    }
}

/// An ordered chain of distinct agents serving one request stream.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenSfc {
    agent_ids: Vec<usize>,
    arrival_rate: f64,
}

impl GenSfc {
    pub fn new(agent_ids: Vec<usize>, arrival_rate: f64) -> Result<Self> {
        if agent_ids.is_empty() {
            return Err(Error::structural("empty chain"));
        }
        if !(arrival_rate.is_finite() && arrival_rate >= 0.0) {
            return Err(Error::domain("arrival rate must be non-negative"));
        }
        for (i, a) in agent_ids.iter().enumerate() {
            if agent_ids[..i].contains(a) {
                return Err(Error::structural(format!("agent {a} repeated in chain")));
            }
        }
        Ok(Self {
            agent_ids,
            arrival_rate,
        })
    }

    pub fn agent_ids(&self) -> &[usize] {
        &self.agent_ids
    }

    pub fn arrival_rate(&self) -> f64 {
        self.arrival_rate
    }

    pub fn len(&self) -> usize {
        self.agent_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.agent_ids.is_empty()
    }
}

/// What a request needs: the ordered service types and its QoE thresholds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RequestTemplate {
    pub required_types: Vec<u32>,
    pub capability_threshold: f64,
    pub max_latency: f64,
}

impl RequestTemplate {
    pub fn new(required_types: Vec<u32>, capability_threshold: f64, max_latency: f64) -> Result<Self> {
        let t = Self {
            required_types,
            capability_threshold,
            max_latency,
        };
        t.validate()?;
        Ok(t)
    }

    pub fn validate(&self) -> Result<()> {
        if self.required_types.is_empty() {
            return Err(Error::config("request template needs at least one service type"));
        }
        if !(self.capability_threshold > 0.0 && self.max_latency > 0.0) {
            return Err(Error::config("request thresholds must be positive"));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.required_types.len()
    }

    pub fn is_empty(&self) -> bool {
        self.required_types.is_empty()
    }
}

impl Default for RequestTemplate {
    fn default() -> Self {
        Self {
            required_types: vec![1, 2, 3],
            capability_threshold: 1e-3,
            max_latency: 10.0,
        }
    }
}


#[cfg(test)]
mod tests {
    use super::fixtures::*;
    use super::*;

    #[test]
    fn rejects_self_loops_and_duplicates() {
        let agents = vec![agent(1, 1e20, 1.0, 0.0, 1, 0), agent(2, 1e20, 1.0, 0.0, 1, 0)];
        let c = ScalingConstants::default();
        assert!(AgenticNetwork::new(agents.clone(), vec![link(0, 0, 0.0)], c).is_err());
        assert!(AgenticNetwork::new(agents.clone(), vec![link(0, 1, 0.0), link(1, 0, 0.0)], c).is_err());
        assert!(AgenticNetwork::new(agents, vec![link(0, 1, 1.5)], c).is_err());
    }

    #[test]
    fn rejects_bad_agent_attributes() {
        let c = ScalingConstants::default();
        assert!(AgenticNetwork::new(vec![agent(1, 1e20, 0.0, 0.0, 1, 0)], vec![], c).is_err());
        assert!(AgenticNetwork::new(vec![agent(1, 1e20, 1.0, 0.0, 1, 2)], vec![], c).is_err());
        assert!(AgenticNetwork::new(vec![agent(1, -1.0, 1.0, 0.0, 1, 0)], vec![], c).is_err());
    }

    #[test]
    fn chain_rejects_repeats_and_missing_links() {
        let net = path3();
        assert!(GenSfc::new(vec![0, 1, 0], 1.0).is_err());
        assert!(GenSfc::new(vec![], 1.0).is_err());
        let skip = GenSfc::new(vec![0, 2], 1.0).unwrap();
        assert!(net.check_chain(&skip).is_err());
        let ok = GenSfc::new(vec![2, 1, 0], 1.0).unwrap();
        assert!(net.check_chain(&ok).is_ok());
    }

    #[test]
    fn json_round_trip_assigns_ids_from_position() {
        let net = path3();
        let text = net.to_json().unwrap();
        assert!(!text.contains("\"id\""));
        let back = AgenticNetwork::from_json(&text).unwrap();
        assert_eq!(back.agents(), net.agents());
        assert_eq!(back.agent(2).id, 2);
        assert_eq!(back.neighbors(1), &[0, 2]);
    }

    #[test]
    fn constants_default_when_missing() {
        let text = r#"{"agents":[{"service_type":1,"compute_budget":1e20,"service_rate":2,
            "service_time_std":0,"observations":5,"failures":0}],"links":[]}"#;
        let net = AgenticNetwork::from_json(text).unwrap();
        assert_eq!(*net.constants(), ScalingConstants::default());
        assert!(net.is_connected());
    }
}
