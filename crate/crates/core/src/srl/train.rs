use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::elam::ElamProfile;
use super::env::{EnvConfig, EnvState, SrlEnv};
use super::memory::{calibrate, CalibrationConfig, Calibrated, ContextMemory, MemoryConfig, MemoryEntry};
use super::policy::{Observation, PolicyNet, PolicyShape};
use super::ppo::{build_batch, ppo_update, reinforce_update, Algorithm, PpoConfig, Transition, UpdateStats};
use crate::error::{Error, Result};
use crate::intent::IntentSample;
use crate::preference::{cosine, PreferenceVector};
use crate::qoe::QoeBreakdown;
use crate::seed::rng_for;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    /// Intent-conditioned policy trained on translated preferences.
    Srl,
    /// Uniformly random valid actions.
    Random,
    /// Type-correct candidate best on the dominant preference factor.
    Greedy,
    /// The same learner fed the even vector instead of the translation.
    Even,
}

impl Variant {
    pub fn as_str(self) -> &'static str {
        match self {
            Variant::Srl => "srl",
            Variant::Random => "random",
            Variant::Greedy => "greedy",
            Variant::Even => "even",
        }
    }

    pub fn is_learned(self) -> bool {
        matches!(self, Variant::Srl | Variant::Even)
    }

    pub const ALL: [Variant; 4] = [Variant::Srl, Variant::Random, Variant::Greedy, Variant::Even];
}

impl std::str::FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Variant::ALL
            .into_iter()
            .find(|v| v.as_str() == s)
            .ok_or_else(|| Error::config(format!("unknown variant {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SrlConfig {
    pub episodes: usize,
    pub seed: u64,
    pub ppo: PpoConfig,
    pub policy: PolicyShape,
    pub env: EnvConfig,
    pub memory: MemoryConfig,
    pub calibration: CalibrationConfig,
    /// E-LAM used by the greedy baseline.
    pub baseline_elam: usize,
}

impl Default for SrlConfig {
    fn default() -> Self {
        Self {
            episodes: 2000,
            seed: 0,
            ppo: PpoConfig::default(),
            policy: PolicyShape::default(),
            env: EnvConfig::default(),
            memory: MemoryConfig::default(),
            calibration: CalibrationConfig::default(),
            baseline_elam: 0,
        }
    }
}

impl SrlConfig {
    pub fn validate(&self) -> Result<()> {
        self.ppo.validate()?;
        self.env.validate()?;
        self.calibration.validate()?;
        ContextMemory::new(self.memory)?;
        Ok(())
    }
}

/// Weighted mixture of labelled prompt pools; each episode draws a pool by
/// weight, then a sample uniformly from it.
#[derive(Debug, Clone)]
pub struct PromptMix {
    pools: Vec<(Vec<IntentSample>, f64)>,
}

impl PromptMix {
    pub fn new(pools: Vec<(Vec<IntentSample>, f64)>) -> Result<Self> {
        if pools.is_empty() || pools.iter().any(|(s, w)| s.is_empty() || !(*w > 0.0 && w.is_finite())) {
            return Err(Error::config("prompt pools must be non-empty with positive weights"));
        }
        Ok(Self { pools })
    }

    pub fn single(samples: Vec<IntentSample>) -> Result<Self> {
        Self::new(vec![(samples, 1.0)])
    }

    /// `fraction` of the episodes come from `other`.
    pub fn contaminated(main: Vec<IntentSample>, other: Vec<IntentSample>, fraction: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&fraction) {
            return Err(Error::config("contamination fraction must lie in [0, 1)"));
        }
        if fraction == 0.0 {
            return Self::single(main);
        }
        Self::new(vec![(main, 1.0 - fraction), (other, fraction)])
    }

    pub fn sample<R: Rng>(&self, rng: &mut R) -> &IntentSample {
        let total: f64 = self.pools.iter().map(|(_, w)| w).sum();
        let mut u = rng.gen::<f64>() * total;
        let mut pick = self.pools.len() - 1;
        for (i, (_, w)) in self.pools.iter().enumerate() {
            if u < *w {
                pick = i;
                break;
            }
            u -= w;
        }
        self.pools[pick].0.choose(rng).expect("pools are non-empty")
    }
}

/// One CSV row per episode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SrlLogRow {
    pub episode: usize,
    pub variant: String,
    pub seed: u64,
    pub elam_id: String,
    pub fee: f64,
    /// Terminal bonus under the translated preference.
    pub reward_episode: f64,
    /// Terminal bonus under the user's true preference.
    pub reward_gt: f64,
    pub capability: Option<f64>,
    pub ber: Option<f64>,
    pub latency: Option<f64>,
    pub outage: Option<f64>,
    pub feasible: bool,
    pub actor_loss: Option<f64>,
    pub critic_loss: Option<f64>,
    pub entropy: Option<f64>,
    /// Agent ids joined by `-`.
    pub chain: String,
    /// Shaped step rewards plus bonus under the translated preference.
    pub return_hat: f64,
    pub return_gt: f64,
    /// Translated preference the episode was scored with.
    pub s_c: f64,
    pub s_b: f64,
    pub s_l: f64,
    pub s_p: f64,
}

impl SrlLogRow {
    pub fn s_hat(&self) -> [f64; 4] {
        [self.s_c, self.s_b, self.s_l, self.s_p]
    }
}

pub const LOG_HEADER: [&str; 22] = [
    "episode",
    "variant",
    "seed",
    "elam_id",
    "fee",
    "reward_episode",
    "reward_gt",
    "capability",
    "ber",
    "latency",
    "outage",
    "feasible",
    "actor_loss",
    "critic_loss",
    "entropy",
    "chain",
    "return_hat",
    "return_gt",
    "s_c",
    "s_b",
    "s_l",
    "s_p",
];

pub fn write_srl_log<W: Write>(w: W, rows: &[SrlLogRow]) -> Result<()> {
    let mut out = csv::WriterBuilder::new().has_headers(false).from_writer(w);
    out.write_record(LOG_HEADER)?;
    for r in rows {
        out.serialize(r)?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_srl_log_file(path: &Path, rows: &[SrlLogRow]) -> Result<()> {
    write_srl_log(std::fs::File::create(path)?, rows)
}

pub fn read_srl_log(path: &Path) -> Result<Vec<SrlLogRow>> {
    let mut r = csv::Reader::from_path(path)?;
    let rows = r.deserialize().collect::<std::result::Result<Vec<SrlLogRow>, _>>()?;
    Ok(rows)
}

pub fn format_chain(chain: &[usize]) -> String {
    chain.iter().map(|c| c.to_string()).collect::<Vec<_>>().join("-")
}

pub fn parse_chain(s: &str) -> Result<Vec<usize>> {
    if s.is_empty() {
        return Ok(vec![]);
    }
    s.split('-')
        .map(|t| t.parse().map_err(|_| Error::structural(format!("bad chain entry {t:?}"))))
        .collect()
}

/// Everything observed in one episode.
#[derive(Debug, Clone)]
pub struct EpisodeRecord {
    pub elam: usize,
    pub fee: f64,
    /// Translated (and calibrated) preference.
    pub s_hat: PreferenceVector,
    pub chain: Vec<usize>,
    pub dead_end: bool,
    pub reward_hat: f64,
    pub reward_gt: f64,
    pub return_hat: f64,
    pub return_gt: f64,
    pub breakdown: Option<QoeBreakdown>,
    pub calibration: Calibrated,
    pub translation_failed: bool,
    /// Decisions with rewards under the training preference; empty for
    /// baselines.
    pub transitions: Vec<Transition>,
}

enum Driver<'a> {
    Sample { net: &'a PolicyNet, rng: &'a mut ChaCha8Rng },
    Argmax { net: &'a PolicyNet },
    Random { rng: &'a mut ChaCha8Rng },
    Greedy { elam: usize },
}

fn node_mask(env: &SrlEnv, state: &EnvState, n_elams: usize) -> Vec<bool> {
    let mut mask = env.valid_actions(state);
    mask.extend(std::iter::repeat(false).take(n_elams));
    mask
}

/// Valid, type-correct candidate maximizing the desirability of the most
/// heavily weighted factor, then the second; remaining ties go to the lower
/// id. Falls back to every valid node when none has the right type.
pub fn greedy_choice(env: &SrlEnv, state: &EnvState) -> Result<usize> {
    let mask = env.valid_actions(state);
    let pos = state.step_index();
    let want = env.template().required_types.get(pos).copied();
    let valid: Vec<usize> = (0..mask.len()).filter(|&i| mask[i]).collect();
    let typed: Vec<usize> = valid
        .iter()
        .copied()
        .filter(|&i| Some(env.network().agent(i).service_type) == want)
        .collect();
    let pool = if typed.is_empty() { valid } else { typed };
    let rank = state.preference().ranked_components();
    let pred = state.chain().last().copied();
    let mut best: Option<(usize, [f64; 4])> = None;
    for id in pool {
        let ind = env.indicators(id, pred)?;
        let better = match &best {
            None => true,
            Some((_, b)) => {
                ind[rank[0]] > b[rank[0]] || (ind[rank[0]] == b[rank[0]] && ind[rank[1]] > b[rank[1]])
            }
        };
        if better {
            best = Some((id, ind));
        }
    }
    best.map(|(id, _)| id).ok_or_else(|| Error::Contract("no valid action".into()))
}

/// Shared episode machinery for learned policies and baselines.
struct Episode<'a> {
    env: &'a SrlEnv,
    elams: &'a [ElamProfile],
    calibration: &'a CalibrationConfig,
    /// Feed the even vector to the policy and reward instead of the translation.
    even_input: bool,
}

impl Episode<'_> {
    fn play(
        &self,
        sample: &IntentSample,
        memory: &mut ContextMemory,
        driver: &mut Driver,
        translate_rng: &mut ChaCha8Rng,
    ) -> Result<EpisodeRecord> {
        let env = self.env;
        let n = env.n_nodes();
        let n_elams = self.elams.len();
        let recent = memory.recent_mean().unwrap_or_else(PreferenceVector::even);
        let mut transitions = Vec::new();

        let elam = if n_elams == 1 {
            0
        } else {
            let intent = if self.even_input { PreferenceVector::even() } else { recent };
            let mut mask = vec![false; n];
            mask.extend(std::iter::repeat(true).take(n_elams));
            let obs = Observation {
                features: env.empty_features(),
                intent: *intent.weights(),
                model: None,
                mask,
            };
            self.decide(driver, &obs, None, &mut transitions)? - n
        };
        let profile = &self.elams[elam];

        let translated = profile.translate(&sample.prompt, &sample.preference, translate_rng);
        let translation_failed = translated.is_none();
        // A failed translation falls back to the recent mean for this round.
        let raw = translated.unwrap_or(recent);
        let calibration = calibrate(&raw, memory, self.calibration);
        let s_hat = calibration.preference;
        let s_train = if self.even_input { PreferenceVector::even() } else { s_hat };

        let mut state = env.reset(s_train, Some(elam), profile.fee)?;
        while !state.is_done() {
            let obs = Observation {
                features: state.node_features().clone(),
                intent: *s_train.weights(),
                model: Some(elam),
                mask: node_mask(env, &state, n_elams),
            };
            let action = self.decide(driver, &obs, Some(&state), &mut transitions)?;
            let out = env.step(&mut state, action)?;
            if let Some(t) = transitions.last_mut() {
                t.reward = out.reward;
            }
        }
        let train_final = env.finalize(&state)?;
        if let Some(t) = transitions.last_mut() {
            t.reward += train_final.reward;
        }
        let hat = env.finalize_with(&state, &s_hat)?;
        let gt = env.finalize_with(&state, &sample.preference)?;
        let chain = state.chain().to_vec();
        let record = EpisodeRecord {
            elam,
            fee: profile.fee,
            s_hat,
            return_hat: env.chain_return(&s_hat, &chain, profile.fee)?,
            return_gt: env.chain_return(&sample.preference, &chain, profile.fee)?,
            chain,
            dead_end: state.dead_end(),
            reward_hat: hat.reward,
            reward_gt: gt.reward,
            breakdown: hat.breakdown,
            calibration,
            translation_failed,
            transitions,
        };
        memory.push(MemoryEntry {
            prompt: sample.prompt.text.clone(),
            preference: s_hat,
            reward: record.reward_hat,
        });
        Ok(record)
    }

    fn decide(
        &self,
        driver: &mut Driver,
        obs: &Observation,
        state: Option<&EnvState>,
        transitions: &mut Vec<Transition>,
    ) -> Result<usize> {
        let adj = self.env.norm_adj();
        match driver {
            Driver::Sample { net, rng } => {
                let out = net.act(adj, obs, rng)?;
                transitions.push(Transition {
                    obs: obs.clone(),
                    action: out.action,
                    log_prob: out.log_prob,
                    value: out.value,
                    reward: 0.0,
                });
                Ok(out.action)
            }
            Driver::Argmax { net } => Ok(net.act_greedy(adj, obs)?.action),
            Driver::Random { rng } => {
                let live: Vec<usize> = (0..obs.mask.len()).filter(|&i| obs.mask[i]).collect();
                live.choose(rng).copied().ok_or_else(|| Error::Contract("no valid action".into()))
            }
            Driver::Greedy { elam } => match state {
                None => Ok(self.env.n_nodes() + *elam),
                Some(s) => greedy_choice(self.env, s),
            },
        }
    }
}

fn log_row(episode: usize, variant: Variant, seed: u64, elams: &[ElamProfile], rec: &EpisodeRecord, stats: Option<&UpdateStats>) -> SrlLogRow {
    let b = rec.breakdown;
    SrlLogRow {
        episode,
        variant: variant.as_str().into(),
        seed,
        elam_id: elams[rec.elam].id.clone(),
        fee: rec.fee,
        reward_episode: rec.reward_hat,
        reward_gt: rec.reward_gt,
        capability: b.map(|b| b.capability),
        ber: b.map(|b| b.ber),
        latency: b.map(|b| b.latency),
        outage: b.map(|b| b.outage_prob),
        feasible: b.is_some_and(|b| b.feasible.all()),
        actor_loss: stats.map(|s| s.actor),
        critic_loss: stats.map(|s| s.critic),
        entropy: stats.map(|s| s.entropy),
        chain: format_chain(&rec.chain),
        return_hat: rec.return_hat,
        return_gt: rec.return_gt,
        s_c: rec.s_hat.weights()[0],
        s_b: rec.s_hat.weights()[1],
        s_l: rec.s_hat.weights()[2],
        s_p: rec.s_hat.weights()[3],
    }
}

fn check_market(env: &SrlEnv, elams: &[ElamProfile], cfg: &SrlConfig) -> Result<()> {
    cfg.validate()?;
    if elams.is_empty() {
        return Err(Error::config("the E-LAM market is empty"));
    }
    if cfg.baseline_elam >= elams.len() {
        return Err(Error::config("baseline_elam is out of range"));
    }
    if env.config() != &cfg.env {
        return Err(Error::config("environment was built with a different configuration"));
    }
    Ok(())
}

/// A trained policy with its per-episode log.
#[derive(Debug, Clone)]
pub struct SrlRun {
    pub policy: PolicyNet,
    pub log: Vec<SrlLogRow>,
}

/// Trains the intent-conditioned (`Srl`) or even-vector (`Even`) learner.
pub fn train_srl(env: &SrlEnv, prompts: &PromptMix, elams: &[ElamProfile], cfg: &SrlConfig, variant: Variant) -> Result<SrlRun> {
    check_market(env, elams, cfg)?;
    if !variant.is_learned() {
        return Err(Error::config(format!("{} is not a learned variant", variant.as_str())));
    }
    let mut policy = PolicyNet::new(cfg.policy, env.n_nodes(), elams.len(), cfg.seed)?;
    let mut memory = ContextMemory::new(cfg.memory)?;
    let mut prompt_rng = rng_for(cfg.seed, "srl/prompts");
    let mut translate_rng = rng_for(cfg.seed, "srl/translate");
    let mut act_rng = rng_for(cfg.seed, "srl/act");
    let mut batch_rng = rng_for(cfg.seed, "srl/minibatch");
    let episode = Episode {
        env,
        elams,
        calibration: &cfg.calibration,
        even_input: variant == Variant::Even,
    };

    let mut log = Vec::with_capacity(cfg.episodes);
    let mut pending: Vec<Vec<Transition>> = Vec::new();
    let mut last_stats: Option<UpdateStats> = None;
    for ep in 0..cfg.episodes {
        let sample = prompts.sample(&mut prompt_rng);
        let rec = {
            let mut driver = Driver::Sample {
                net: &policy,
                rng: &mut act_rng,
            };
            episode.play(sample, &mut memory, &mut driver, &mut translate_rng)?
        };
        log.push(log_row(ep, variant, cfg.seed, elams, &rec, last_stats.as_ref()));
        pending.push(rec.transitions);
        if pending.len() == cfg.ppo.episodes_per_update || ep + 1 == cfg.episodes {
            let batch = build_batch(std::mem::take(&mut pending), cfg.ppo.gamma, cfg.ppo.gae_lambda)
                .map_err(|e| at_episode(e, ep))?;
            let stats = match cfg.ppo.algorithm {
                Algorithm::Ppo => ppo_update(&mut policy, env.norm_adj(), &batch, &cfg.ppo, &mut batch_rng),
                Algorithm::Reinforce => reinforce_update(&mut policy, env.norm_adj(), &batch, &cfg.ppo, &mut batch_rng),
            }
            .map_err(|e| at_episode(e, ep))?;
            last_stats = Some(stats);
        }
    }
    Ok(SrlRun { policy, log })
}

fn at_episode(e: Error, episode: usize) -> Error {
    match e {
        Error::Training { reason, .. } => Error::Training { epoch: episode, reason },
        other => other,
    }
}

/// Runs the random or greedy baseline over the same prompt stream a learner
/// with this configuration would see.
pub fn run_baseline(env: &SrlEnv, prompts: &PromptMix, elams: &[ElamProfile], cfg: &SrlConfig, variant: Variant) -> Result<Vec<SrlLogRow>> {
    check_market(env, elams, cfg)?;
    let mut memory = ContextMemory::new(cfg.memory)?;
    let mut prompt_rng = rng_for(cfg.seed, "srl/prompts");
    let mut translate_rng = rng_for(cfg.seed, "srl/translate");
    let mut random_rng = rng_for(cfg.seed, "baseline/random");
    let episode = Episode {
        env,
        elams,
        calibration: &cfg.calibration,
        even_input: false,
    };
    let mut log = Vec::with_capacity(cfg.episodes);
    for ep in 0..cfg.episodes {
        let sample = prompts.sample(&mut prompt_rng);
        let mut driver = match variant {
            Variant::Random => Driver::Random { rng: &mut random_rng },
            Variant::Greedy => Driver::Greedy { elam: cfg.baseline_elam },
            other => return Err(Error::config(format!("{} is not a baseline", other.as_str()))),
        };
        let rec = episode.play(sample, &mut memory, &mut driver, &mut translate_rng)?;
        log.push(log_row(ep, variant, cfg.seed, elams, &rec, None));
    }
    Ok(log)
}

/// Replays a trained policy greedily (argmax actions) over fresh prompts,
/// with translation, calibration and memory as in training. No updates.
pub fn evaluate_policy(
    policy: &PolicyNet,
    env: &SrlEnv,
    prompts: &PromptMix,
    elams: &[ElamProfile],
    cfg: &SrlConfig,
    variant: Variant,
) -> Result<Vec<SrlLogRow>> {
    check_market(env, elams, cfg)?;
    if !variant.is_learned() {
        return Err(Error::config(format!("{} is not a learned variant", variant.as_str())));
    }
    if policy.n_nodes() != env.n_nodes() || policy.n_elams() != elams.len() {
        return Err(Error::config("policy does not fit this scenario and market"));
    }
    let mut memory = ContextMemory::new(cfg.memory)?;
    let mut prompt_rng = rng_for(cfg.seed, "eval/prompts");
    let mut translate_rng = rng_for(cfg.seed, "eval/translate");
    let episode = Episode {
        env,
        elams,
        calibration: &cfg.calibration,
        even_input: variant == Variant::Even,
    };
    let mut log = Vec::with_capacity(cfg.episodes);
    for ep in 0..cfg.episodes {
        let sample = prompts.sample(&mut prompt_rng);
        let mut driver = Driver::Argmax { net: policy };
        let rec = episode.play(sample, &mut memory, &mut driver, &mut translate_rng)?;
        log.push(log_row(ep, variant, cfg.seed, elams, &rec, None));
    }
    Ok(log)
}

/// Deterministic rollout of a trained policy for preference `s`: argmax
/// E-LAM (when there is a choice), then argmax nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct Decoded {
    pub elam: usize,
    pub chain: Vec<usize>,
    pub dead_end: bool,
}

pub fn decode_chain(policy: &PolicyNet, env: &SrlEnv, s: &PreferenceVector) -> Result<Decoded> {
    let n = env.n_nodes();
    let n_elams = policy.n_elams();
    let adj = env.norm_adj();
    let elam = if n_elams == 1 {
        0
    } else {
        let mut mask = vec![false; n];
        mask.extend(std::iter::repeat(true).take(n_elams));
        let obs = Observation {
            features: env.empty_features(),
            intent: *s.weights(),
            model: None,
            mask,
        };
        policy.act_greedy(adj, &obs)?.action - n
    };
    let mut state = env.reset(*s, Some(elam), 0.0)?;
    while !state.is_done() {
        let obs = Observation {
            features: state.node_features().clone(),
            intent: *s.weights(),
            model: Some(elam),
            mask: node_mask(env, &state, n_elams),
        };
        let a = policy.act_greedy(adj, &obs)?.action;
        env.step(&mut state, a)?;
    }
    Ok(Decoded {
        elam,
        chain: state.chain().to_vec(),
        dead_end: state.dead_end(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MatchStats {
    pub users: usize,
    pub wins: usize,
    /// Users for whom the best reward was shared by several policies.
    pub ties: usize,
    pub fraction: f64,
}

/// For each user, decodes every policy under the user's true preference and
/// checks whether the policy of the application nearest by cosine similarity
/// earns the highest shaped return. Ties are broken uniformly at random.
pub fn policy_match_experiment(
    env: &SrlEnv,
    policies: &[(PreferenceVector, &PolicyNet)],
    fees: &[f64],
    users: &[PreferenceVector],
    seed: u64,
) -> Result<MatchStats> {
    if policies.len() < 2 {
        return Err(Error::config("matching needs at least two policies"));
    }
    let mut rng = rng_for(seed, "srl/match");
    let mut stats = MatchStats {
        users: users.len(),
        wins: 0,
        ties: 0,
        fraction: 0.0,
    };
    for user in users {
        let nearest = (0..policies.len())
            .max_by(|&a, &b| {
                cosine(user.as_ref(), policies[a].0.as_ref())
                    .total_cmp(&cosine(user.as_ref(), policies[b].0.as_ref()))
                    .then(b.cmp(&a))
            })
            .expect("at least two policies");
        let mut rewards = Vec::with_capacity(policies.len());
        for (_, p) in policies {
            let d = decode_chain(p, env, user)?;
            let fee = fees.get(d.elam).copied().ok_or_else(|| Error::config("fee table is too short"))?;
            rewards.push(env.chain_return(user, &d.chain, fee)?);
        }
        let best = rewards.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let top: Vec<usize> = (0..rewards.len()).filter(|&i| rewards[i] == best).collect();
        if top.len() > 1 {
            stats.ties += 1;
        }
        if *top.choose(&mut rng).expect("non-empty") == nearest {
            stats.wins += 1;
        }
    }
    stats.fraction = if users.is_empty() { 0.0 } else { stats.wins as f64 / users.len() as f64 };
    Ok(stats)
}

/// Trained policy plus the configuration that produced it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyCheckpoint {
    pub variant: Variant,
    pub config: SrlConfig,
    pub elam_ids: Vec<String>,
    pub policy: PolicyNet,
}

impl PolicyCheckpoint {
    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string(self)?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }
}

/// Mean of `f` over the last `n` rows (all rows if fewer).
pub fn tail_mean(rows: &[SrlLogRow], n: usize, f: impl Fn(&SrlLogRow) -> f64) -> f64 {
    let tail = &rows[rows.len().saturating_sub(n)..];
    if tail.is_empty() {
        return f64::NAN;
    }
    tail.iter().map(f).sum::<f64>() / tail.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::{gen_scenario, ScenarioConfig, Topology};
    use crate::intent::Prompt;
    use crate::qoe::subjective_episode_reward;
    use crate::srl::elam::Translator;

    fn small_env() -> SrlEnv {
        let sc = gen_scenario(&ScenarioConfig {
            n_agents: 12,
            topology: Topology::ErdosRenyi { p: 0.5 },
            seed: 3,
            ..Default::default()
        })
        .unwrap();
        SrlEnv::new(&sc, EnvConfig::default()).unwrap()
    }

    fn pool(app: u32, w: [f64; 4]) -> Vec<IntentSample> {
        (0..5)
            .map(|i| IntentSample {
                prompt: Prompt::new(format!("request {i} for app {app}"), app).unwrap(),
                preference: PreferenceVector::project(w),
            })
            .collect()
    }

    fn prompts() -> PromptMix {
        PromptMix::new(vec![(pool(1, [0.7, 0.1, 0.1, 0.1]), 1.0), (pool(2, [0.1, 0.1, 0.7, 0.1]), 1.0)]).unwrap()
    }

    fn market() -> Vec<ElamProfile> {
        vec![
            ElamProfile::new("noisy", 0.01, Translator::Noisy { sigma: 0.05 }).unwrap(),
            ElamProfile::even_stub(),
        ]
    }

    fn cfg(episodes: usize) -> SrlConfig {
        let mut c = SrlConfig {
            episodes,
            seed: 5,
            ..Default::default()
        };
        c.ppo.episodes_per_update = 8;
        c.policy = PolicyShape {
            gcn_hidden: 16,
            embed_dim: 8,
            head_hidden: 16,
        };
        c
    }

    fn csv_of(rows: &[SrlLogRow]) -> Vec<u8> {
        let mut buf = Vec::new();
        write_srl_log(&mut buf, rows).unwrap();
        buf
    }

    #[test]
    fn identical_seeds_give_identical_logs() {
        let env = small_env();
        let a = train_srl(&env, &prompts(), &market(), &cfg(40), Variant::Srl).unwrap();
        let b = train_srl(&env, &prompts(), &market(), &cfg(40), Variant::Srl).unwrap();
        assert_eq!(csv_of(&a.log), csv_of(&b.log));
        assert_eq!(a.policy, b.policy);
        let mut other = cfg(40);
        other.seed = 6;
        let c = train_srl(&env, &prompts(), &market(), &other, Variant::Srl).unwrap();
        assert_ne!(csv_of(&a.log), csv_of(&c.log));
    }

    #[test]
    fn zero_learning_rate_keeps_the_initial_policy() {
        let env = small_env();
        let mut c = cfg(32);
        c.ppo.learning_rate = 0.0;
        let run = train_srl(&env, &prompts(), &market(), &c, Variant::Srl).unwrap();
        let init = PolicyNet::new(c.policy, env.n_nodes(), 2, c.seed).unwrap();
        assert_eq!(run.policy, init);
        assert!(run.log[31].actor_loss.is_some());
        assert!(run.log[0].actor_loss.is_none());
    }

    #[test]
    fn short_run_improves_the_return() {
        let env = small_env();
        let mut c = cfg(600);
        c.ppo.learning_rate = 1e-3;
        let run = train_srl(&env, &prompts(), &market(), &c, Variant::Srl).unwrap();
        let head = tail_mean(&run.log[..150], 150, |r| r.return_hat);
        let tail = tail_mean(&run.log, 150, |r| r.return_hat);
        assert!(tail > head + 0.3, "head {head} tail {tail}");
    }

    #[test]
    fn log_rows_recompute_from_the_chain() {
        let env = small_env();
        let run = train_srl(&env, &prompts(), &market(), &cfg(24), Variant::Srl).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("log.csv");
        write_srl_log_file(&path, &run.log).unwrap();
        let rows = read_srl_log(&path).unwrap();
        assert_eq!(rows, run.log);
        for r in &rows {
            let chain = parse_chain(&r.chain).unwrap();
            assert_eq!(format_chain(&chain), r.chain);
            let Some(c) = r.capability else {
                assert_eq!(r.reward_episode, -env.config().fail_penalty);
                continue;
            };
            let b = env.evaluate(&chain).unwrap();
            assert_eq!((b.capability, b.ber, b.latency, b.outage_prob), (c, r.ber.unwrap(), r.latency.unwrap(), r.outage.unwrap()));
            let again = subjective_episode_reward(&b, &r.s_hat(), env.template().capability_threshold, r.fee).unwrap();
            assert!((again - r.reward_episode).abs() < 1e-9);
            let s = PreferenceVector::new(r.s_hat()).unwrap();
            assert!((env.chain_return(&s, &chain, r.fee).unwrap() - r.return_hat).abs() < 1e-9);
        }
    }

    #[test]
    fn random_baseline_replays_with_its_seed() {
        let env = small_env();
        let a = run_baseline(&env, &prompts(), &market(), &cfg(30), Variant::Random).unwrap();
        let b = run_baseline(&env, &prompts(), &market(), &cfg(30), Variant::Random).unwrap();
        assert_eq!(csv_of(&a), csv_of(&b));
        assert!(run_baseline(&env, &prompts(), &market(), &cfg(3), Variant::Srl).is_err());
        assert!(train_srl(&env, &prompts(), &market(), &cfg(3), Variant::Greedy).is_err());
    }

    #[test]
    fn greedy_follows_the_dominant_factor() {
        let env = small_env();
        // Latency dominant, capability second.
        let s = PreferenceVector::project([0.2, 0.05, 0.7, 0.05]);
        let state = env.reset(s, Some(0), 0.0).unwrap();
        let pick = greedy_choice(&env, &state).unwrap();
        let want = env.template().required_types[0];
        let typed: Vec<usize> = (0..env.n_nodes()).filter(|&i| env.network().agent(i).service_type == want).collect();
        let best = typed
            .iter()
            .map(|&i| env.indicators(i, None).unwrap()[2])
            .fold(f64::NEG_INFINITY, f64::max);
        assert_eq!(env.network().agent(pick).service_type, want);
        assert_eq!(env.indicators(pick, None).unwrap()[2], best);

        // The greedy baseline always stays on type and pays the configured E-LAM.
        let log = run_baseline(&env, &prompts(), &market(), &cfg(10), Variant::Greedy).unwrap();
        assert!(log.iter().all(|r| r.elam_id == "noisy"));
    }

    #[test]
    fn identical_policies_match_at_chance() {
        let env = small_env();
        let c = cfg(1);
        let p = PolicyNet::new(c.policy, env.n_nodes(), 2, 0).unwrap();
        let users: Vec<PreferenceVector> = (0..400)
            .map(|i| PreferenceVector::project([1.0 + (i % 7) as f64, 1.0 + (i % 5) as f64, 2.0, 1.0]))
            .collect();
        let a = PreferenceVector::project([0.7, 0.1, 0.1, 0.1]);
        let b = PreferenceVector::project([0.1, 0.1, 0.7, 0.1]);
        let stats = policy_match_experiment(&env, &[(a, &p), (b, &p)], &[0.0, 0.0], &users, 1).unwrap();
        assert_eq!(stats.ties, 400);
        assert!((stats.fraction - 0.5).abs() < 0.08, "{stats:?}");
        let again = policy_match_experiment(&env, &[(a, &p), (b, &p)], &[0.0, 0.0], &users, 1).unwrap();
        assert_eq!(stats, again);
    }

    #[test]
    fn checkpoint_round_trips_and_evaluates() {
        let env = small_env();
        let c = cfg(16);
        let run = train_srl(&env, &prompts(), &market(), &c, Variant::Even).unwrap();
        let ck = PolicyCheckpoint {
            variant: Variant::Even,
            config: c.clone(),
            elam_ids: market().iter().map(|e| e.id.clone()).collect(),
            policy: run.policy,
        };
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("policy.json");
        ck.save(&path).unwrap();
        let back = PolicyCheckpoint::load(&path).unwrap();
        assert_eq!(back, ck);
        let a = evaluate_policy(&back.policy, &env, &prompts(), &market(), &c, Variant::Even).unwrap();
        let b = evaluate_policy(&ck.policy, &env, &prompts(), &market(), &c, Variant::Even).unwrap();
        assert_eq!(a.len(), 16);
        assert_eq!(csv_of(&a), csv_of(&b));
        let d = decode_chain(&back.policy, &env, &PreferenceVector::even()).unwrap();
        assert_eq!(d.chain.len() == env.chain_len(), !d.dead_end);
    }

    #[test]
    fn variant_names_parse() {
        for v in Variant::ALL {
            assert_eq!(v.as_str().parse::<Variant>().unwrap(), v);
        }
        assert!("ppo".parse::<Variant>().is_err());
    }
}
