//! Experiment orchestration: configs, run records and their summaries.
//!
//! Every run writes one CSV of raw rows into the output directory and one
//! [`RunRecord`] into `records.json`. Record summaries are pure functions of
//! the rows, so `summarize` can recompute and check them.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::distill::{
    even_baseline_metrics, read_distill_log, train_distill, write_distill_log, DistillConfig, DistillLogRow,
    StudentSize,
};
use crate::error::{Error, Result};
use crate::intent::{Grammar, IoKdSample};
use crate::srl::{
    default_market, evaluate_policy, read_srl_log, run_baseline, train_srl, write_srl_log_file, ElamProfile,
    PolicyCheckpoint, PromptMix, SrlConfig, SrlEnv, SrlLogRow, Translator, Variant,
};

use super::intents::{gen_intents, IntentConfig, IntentSet};
use super::scenario::{gen_scenario, Scenario, ScenarioConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VariantSelection {
    Srl,
    Random,
    Greedy,
    Even,
    All,
}

impl VariantSelection {
    pub fn variants(self) -> Vec<Variant> {
        match self {
            VariantSelection::Srl => vec![Variant::Srl],
            VariantSelection::Random => vec![Variant::Random],
            VariantSelection::Greedy => vec![Variant::Greedy],
            VariantSelection::Even => vec![Variant::Even],
            VariantSelection::All => Variant::ALL.to_vec(),
        }
    }
}

/// The E-LAMs the policy may call.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum MarketConfig {
    /// A small and a large distilled student trained on the union of the
    /// applications' training sets, plus the free even stub.
    Students {
        fee_per_unit: f64,
        /// Confidence threshold; `None` uses the distillation default.
        p_min: Option<f64>,
    },
    /// One translator returning the true preference plus Gaussian noise.
    Noisy { sigma: f64, fee: f64 },
}

impl MarketConfig {
    /// Fee table in market order, known without training any student.
    pub fn fees(&self) -> Vec<f64> {
        match self {
            MarketConfig::Students { fee_per_unit, .. } => vec![
                fee_per_unit * StudentSize::Small.hidden() as f64,
                fee_per_unit * StudentSize::Large.hidden() as f64,
                0.0,
            ],
            MarketConfig::Noisy { fee, .. } => vec![*fee],
        }
    }
}

impl Default for MarketConfig {
    fn default() -> Self {
        MarketConfig::Students {
            fee_per_unit: 0.001,
            p_min: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub variant: VariantSelection,
    pub scenario: ScenarioConfig,
    pub intents: IntentConfig,
    pub distill: DistillConfig,
    pub srl: SrlConfig,
    pub market: MarketConfig,
    /// Episodes per training, baseline or evaluation run.
    pub episodes: usize,
    /// Run seeds; each drives student and policy training. The scenario and
    /// datasets keep their own seeds.
    pub seeds: Vec<u64>,
    /// Applications whose test prompts form the request stream.
    pub request_apps: Vec<u32>,
    /// Trailing episodes averaged into the `final_*` summary metrics.
    pub final_window: usize,
    pub out_dir: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            variant: VariantSelection::All,
            scenario: ScenarioConfig::default(),
            intents: IntentConfig::default(),
            distill: DistillConfig::default(),
            srl: SrlConfig::default(),
            market: MarketConfig::default(),
            episodes: 2000,
            seeds: vec![0],
            request_apps: vec![1, 2, 3],
            final_window: 500,
            out_dir: PathBuf::from("runs"),
        }
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| Error::config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(Error::config("seeds must be non-empty"));
        }
        if self.final_window == 0 {
            return Err(Error::config("final_window must be positive"));
        }
        self.scenario.validate()?;
        self.intents.validate()?;
        self.distill.validate()?;
        self.srl.validate()?;
        if self.request_apps.is_empty() || self.request_apps.iter().any(|a| !self.intents.applications.contains(a)) {
            return Err(Error::config("request_apps must be a non-empty subset of the intent applications"));
        }
        match &self.market {
            MarketConfig::Students { fee_per_unit, p_min } => {
                if !(*fee_per_unit >= 0.0 && fee_per_unit.is_finite()) {
                    return Err(Error::config("fee_per_unit must be non-negative"));
                }
                if p_min.is_some_and(|p| !(0.0..=1.0).contains(&p)) {
                    return Err(Error::config("p_min must lie in [0, 1]"));
                }
            }
            MarketConfig::Noisy { sigma, fee } => {
                if !(*sigma >= 0.0 && *fee >= 0.0 && sigma.is_finite() && fee.is_finite()) {
                    return Err(Error::config("noisy market needs non-negative sigma and fee"));
                }
            }
        }
        Ok(())
    }

    /// The SRL configuration of one run.
    pub fn srl_for(&self, seed: u64) -> SrlConfig {
        SrlConfig {
            episodes: self.episodes,
            seed,
            ..self.srl.clone()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunKind {
    Distill,
    Train,
    Baseline,
    Eval,
}

impl RunKind {
    pub fn as_str(self) -> &'static str {
        match self {
            RunKind::Distill => "distill",
            RunKind::Train => "train",
            RunKind::Baseline => "baseline",
            RunKind::Eval => "eval",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub kind: RunKind,
    pub variant: String,
    pub seed: u64,
    /// Set for per-application distillation runs.
    pub application: Option<u32>,
    /// Git blob hash of the canonical JSON of the inputs.
    pub input_hash: String,
    pub config: serde_json::Value,
    /// Row CSV, relative to the output directory.
    pub rows_file: String,
    pub summary: BTreeMap<String, f64>,
}

impl RunRecord {
    fn key(&self) -> (RunKind, String, Option<u32>, u64) {
        (self.kind, self.variant.clone(), self.application, self.seed)
    }

    /// Recomputes the summary from the row file next to `records.json`.
    pub fn recompute_summary(&self, out_dir: &Path) -> Result<BTreeMap<String, f64>> {
        let path = out_dir.join(&self.rows_file);
        match self.kind {
            RunKind::Distill => Ok(summarize_distill_rows(&read_distill_log(&path)?)),
            _ => {
                let window = self.summary.get("final_window").copied().unwrap_or(0.0) as usize;
                Ok(summarize_srl_rows(&read_srl_log(&path)?, window))
            }
        }
    }
}

/// `git hash-object` of `bytes`: SHA-1 over `blob <len>\0<bytes>`.
pub fn git_blob_hash(bytes: &[u8]) -> String {
    let mut h = sha1_smol::Sha1::new();
    h.update(format!("blob {}\0", bytes.len()).as_bytes());
    h.update(bytes);
    h.digest().to_string()
}

fn input_hash(config: &serde_json::Value, extra: &[u8]) -> Result<String> {
    let mut bytes = serde_json::to_vec(config)?;
    bytes.extend_from_slice(extra);
    Ok(git_blob_hash(&bytes))
}

fn mean(xs: impl Iterator<Item = f64>) -> Option<f64> {
    let (mut s, mut n) = (0.0, 0usize);
    for x in xs {
        s += x;
        n += 1;
    }
    (n > 0).then(|| s / n as f64)
}

/// Summary of an episode log. Metrics over an empty set are omitted.
pub fn summarize_srl_rows(rows: &[SrlLogRow], final_window: usize) -> BTreeMap<String, f64> {
    let mut out = BTreeMap::new();
    out.insert("episodes".into(), rows.len() as f64);
    out.insert("final_window".into(), final_window as f64);
    let tail = &rows[rows.len().saturating_sub(final_window)..];
    let mut put = |name: &str, v: Option<f64>| {
        if let Some(v) = v.filter(|v| v.is_finite()) {
            out.insert(name.into(), v);
        }
    };
    for (prefix, part) in [("mean", rows), ("final", tail)] {
        put(&format!("{prefix}_reward_episode"), mean(part.iter().map(|r| r.reward_episode)));
        put(&format!("{prefix}_reward_gt"), mean(part.iter().map(|r| r.reward_gt)));
        put(&format!("{prefix}_return_hat"), mean(part.iter().map(|r| r.return_hat)));
        put(&format!("{prefix}_return_gt"), mean(part.iter().map(|r| r.return_gt)));
        put(&format!("{prefix}_capability"), mean(part.iter().filter_map(|r| r.capability)));
        put(&format!("{prefix}_latency"), mean(part.iter().filter_map(|r| r.latency)));
        put(&format!("{prefix}_fee"), mean(part.iter().map(|r| r.fee)));
        put(
            &format!("{prefix}_dead_end_rate"),
            mean(part.iter().map(|r| if r.capability.is_none() { 1.0 } else { 0.0 })),
        );
    }
    out
}

/// Metrics of the last logged epoch of each split.
pub fn summarize_distill_rows(rows: &[DistillLogRow]) -> BTreeMap<String, f64> {
    let mut out = BTreeMap::new();
    for split in ["train", "test"] {
        if let Some(r) = rows.iter().rev().find(|r| r.split == split) {
            for (name, v) in [("mse", r.mse), ("mae", r.mae), ("failure_rate", r.failure_rate)] {
                if v.is_finite() {
                    out.insert(format!("{split}_{name}"), v);
                }
            }
            out.insert("epochs".into(), r.epoch as f64);
        }
    }
    out
}

/// Everything a run needs besides its seed.
pub struct World {
    pub scenario: Scenario,
    pub intents: IntentSet,
    pub grammar: Grammar,
}

impl World {
    pub fn build(cfg: &ExperimentConfig) -> Result<Self> {
        cfg.validate()?;
        let grammar = Grammar::default();
        Ok(Self {
            scenario: gen_scenario(&cfg.scenario)?,
            intents: gen_intents(&grammar, &cfg.intents)?,
            grammar,
        })
    }

    /// Request stream: the test prompts of `apps`, equally weighted.
    pub fn requests(&self, apps: &[u32]) -> Result<PromptMix> {
        let mut pools = Vec::with_capacity(apps.len());
        for &a in apps {
            pools.push((self.intents.app(a)?.test.clone(), 1.0));
        }
        PromptMix::new(pools)
    }

    /// Union of the training sets of `apps`.
    pub fn pooled_train(&self, apps: &[u32]) -> Result<Vec<IoKdSample>> {
        let mut out = Vec::new();
        for &a in apps {
            out.extend(self.intents.app(a)?.train.iter().cloned());
        }
        Ok(out)
    }
}

/// The market of one run.
pub fn build_market(cfg: &ExperimentConfig, world: &World, seed: u64) -> Result<Vec<ElamProfile>> {
    match &cfg.market {
        MarketConfig::Noisy { sigma, fee } => Ok(vec![ElamProfile::new("noisy", *fee, Translator::Noisy { sigma: *sigma })?]),
        MarketConfig::Students { fee_per_unit, p_min } => {
            let train = world.pooled_train(&cfg.intents.applications)?;
            let student = |size: StudentSize| {
                let dc = DistillConfig {
                    size,
                    seed,
                    ..cfg.distill.clone()
                };
                train_distill(&train, None, &dc).map(|r| (r.model, dc))
            };
            let (small, dc) = student(StudentSize::Small)?;
            let (large, _) = student(StudentSize::Large)?;
            let p = p_min.unwrap_or_else(|| dc.p_min_for(small.vocab().len()));
            default_market(small, large, p, *fee_per_unit)
        }
    }
}

fn rows_name(kind: RunKind, variant: &str, application: Option<u32>, seed: u64) -> String {
    match application {
        Some(a) => format!("{}_{variant}_app{a}_seed{seed}.csv", kind.as_str()),
        None => format!("{}_{variant}_seed{seed}.csv", kind.as_str()),
    }
}

fn srl_record(
    cfg: &ExperimentConfig,
    world: &World,
    kind: RunKind,
    variant: Variant,
    seed: u64,
    rows: &[SrlLogRow],
) -> Result<RunRecord> {
    let config = serde_json::json!({
        "kind": kind.as_str(),
        "variant": variant.as_str(),
        "seed": seed,
        "experiment": cfg,
    });
    let rows_file = rows_name(kind, variant.as_str(), None, seed);
    std::fs::create_dir_all(&cfg.out_dir)?;
    write_srl_log_file(&cfg.out_dir.join(&rows_file), rows)?;
    Ok(RunRecord {
        kind,
        variant: variant.as_str().into(),
        seed,
        application: None,
        input_hash: input_hash(&config, world.scenario.to_json()?.as_bytes())?,
        config,
        rows_file,
        summary: summarize_srl_rows(rows, cfg.final_window),
    })
}

fn checkpoint_path(cfg: &ExperimentConfig, variant: Variant, seed: u64) -> PathBuf {
    cfg.out_dir.join(format!("policy_{}_seed{seed}.json", variant.as_str()))
}

fn arms(cfg: &ExperimentConfig, keep: impl Fn(Variant) -> bool) -> Vec<(Variant, u64)> {
    let mut out = Vec::new();
    for &seed in &cfg.seeds {
        for v in cfg.variant.variants() {
            if keep(v) {
                out.push((v, seed));
            }
        }
    }
    out
}

/// Trains the learned variants selected by `cfg.variant` and saves their
/// checkpoints.
pub fn run_train(cfg: &ExperimentConfig, world: &World) -> Result<Vec<RunRecord>> {
    let env = SrlEnv::new(&world.scenario, cfg.srl.env)?;
    let requests = world.requests(&cfg.request_apps)?;
    let jobs = arms(cfg, Variant::is_learned);
    jobs.par_iter()
        .map(|&(variant, seed)| {
            let market = build_market(cfg, world, seed)?;
            let srl = cfg.srl_for(seed);
            let run = train_srl(&env, &requests, &market, &srl, variant)?;
            let ck = PolicyCheckpoint {
                variant,
                config: srl,
                elam_ids: market.iter().map(|e| e.id.clone()).collect(),
                policy: run.policy,
            };
            std::fs::create_dir_all(&cfg.out_dir)?;
            ck.save(&checkpoint_path(cfg, variant, seed))?;
            srl_record(cfg, world, RunKind::Train, variant, seed, &run.log)
        })
        .collect()
}

/// Runs the random and greedy baselines selected by `cfg.variant`.
pub fn run_baselines(cfg: &ExperimentConfig, world: &World) -> Result<Vec<RunRecord>> {
    let env = SrlEnv::new(&world.scenario, cfg.srl.env)?;
    let requests = world.requests(&cfg.request_apps)?;
    let jobs = arms(cfg, |v| !v.is_learned());
    jobs.par_iter()
        .map(|&(variant, seed)| {
            let market = build_market(cfg, world, seed)?;
            let rows = run_baseline(&env, &requests, &market, &cfg.srl_for(seed), variant)?;
            srl_record(cfg, world, RunKind::Baseline, variant, seed, &rows)
        })
        .collect()
}

/// Replays saved checkpoints greedily on fresh requests.
pub fn run_eval(cfg: &ExperimentConfig, world: &World) -> Result<Vec<RunRecord>> {
    let env = SrlEnv::new(&world.scenario, cfg.srl.env)?;
    let requests = world.requests(&cfg.request_apps)?;
    let jobs = arms(cfg, Variant::is_learned);
    jobs.par_iter()
        .map(|&(variant, seed)| {
            let ck = PolicyCheckpoint::load(&checkpoint_path(cfg, variant, seed))?;
            let market = build_market(cfg, world, seed)?;
            let ids: Vec<String> = market.iter().map(|e| e.id.clone()).collect();
            if ck.elam_ids != ids {
                return Err(Error::config("checkpoint was trained on a different market"));
            }
            let rows = evaluate_policy(&ck.policy, &env, &requests, &market, &cfg.srl_for(seed), variant)?;
            srl_record(cfg, world, RunKind::Eval, variant, seed, &rows)
        })
        .collect()
}

/// Per application and seed: the weighted student, the unweighted
/// (`scale_factor = 0`) student and the even predictor, scored on the
/// application's test set.
pub fn run_distill(cfg: &ExperimentConfig, world: &World) -> Result<Vec<RunRecord>> {
    let mut jobs = Vec::new();
    for &seed in &cfg.seeds {
        for a in &world.intents.apps {
            for variant in ["iokd", "unweighted", "even"] {
                jobs.push((seed, a, variant));
            }
        }
    }
    std::fs::create_dir_all(&cfg.out_dir)?;
    jobs.par_iter()
        .map(|&(seed, app, variant)| {
            let rows = match variant {
                "even" => {
                    let m = even_baseline_metrics(&app.test)?;
                    vec![DistillLogRow {
                        epoch: 0,
                        split: "test".into(),
                        loss: None,
                        mae: m.mae,
                        mse: m.mse,
                        failure_rate: m.failure_rate,
                        mean_beta: 0.0,
                    }]
                }
                _ => {
                    let scale_factor = if variant == "iokd" { cfg.distill.scale_factor } else { 0.0 };
                    let dc = DistillConfig {
                        seed,
                        scale_factor,
                        ..cfg.distill.clone()
                    };
                    train_distill(&app.train, Some(&app.test), &dc)?.log
                }
            };
            let config = serde_json::json!({
                "kind": "distill",
                "variant": variant,
                "seed": seed,
                "application": app.application_id,
                "distill": cfg.distill,
                "intents": cfg.intents,
            });
            let rows_file = rows_name(RunKind::Distill, variant, Some(app.application_id), seed);
            let mut bytes = Vec::new();
            write_distill_log(&mut bytes, &rows)?;
            std::fs::write(cfg.out_dir.join(&rows_file), &bytes)?;
            Ok(RunRecord {
                kind: RunKind::Distill,
                variant: variant.into(),
                seed,
                application: Some(app.application_id),
                input_hash: input_hash(&config, &[])?,
                config,
                rows_file,
                summary: summarize_distill_rows(&rows),
            })
        })
        .collect()
}

/// Training runs and baselines for every selected variant and seed.
pub fn run_experiment(cfg: &ExperimentConfig, world: &World) -> Result<Vec<RunRecord>> {
    let mut out = run_train(cfg, world)?;
    out.extend(run_baselines(cfg, world)?);
    Ok(out)
}

pub const RECORDS_FILE: &str = "records.json";

pub fn load_records(out_dir: &Path) -> Result<Vec<RunRecord>> {
    let path = out_dir.join(RECORDS_FILE);
    if !path.exists() {
        return Ok(Vec::new());
    }
    Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
}

/// Adds `records` to `records.json`, replacing earlier records of the same
/// (kind, variant, application, seed).
pub fn save_records(out_dir: &Path, records: &[RunRecord]) -> Result<()> {
    std::fs::create_dir_all(out_dir)?;
    let mut all = load_records(out_dir)?;
    all.retain(|r| !records.iter().any(|n| n.key() == r.key()));
    all.extend(records.iter().cloned());
    all.sort_by_key(RunRecord::key);
    std::fs::write(out_dir.join(RECORDS_FILE), serde_json::to_string_pretty(&all)?)?;
    Ok(())
}

/// Mean and sample standard deviation over seeds of one metric.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub kind: RunKind,
    pub variant: String,
    pub application: Option<u32>,
    pub metric: String,
    pub n: usize,
    pub mean: f64,
    pub std: f64,
}

/// Groups records by (kind, variant, application) and aggregates every
/// summary metric over seeds. A single record has std 0.
pub fn export_summary(records: &[RunRecord]) -> Vec<SummaryRow> {
    let mut groups: BTreeMap<(RunKind, String, Option<u32>, String), Vec<f64>> = BTreeMap::new();
    for r in records {
        for (metric, &v) in &r.summary {
            groups
                .entry((r.kind, r.variant.clone(), r.application, metric.clone()))
                .or_default()
                .push(v);
        }
    }
    groups
        .into_iter()
        .map(|((kind, variant, application, metric), vs)| {
            let n = vs.len();
            let mean = vs.iter().sum::<f64>() / n as f64;
            let std = if n > 1 {
                (vs.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
            } else {
                0.0
            };
            SummaryRow {
                kind,
                variant,
                application,
                metric,
                n,
                mean,
                std,
            }
        })
        .collect()
}

pub const SUMMARY_HEADER: [&str; 7] = ["kind", "variant", "application", "metric", "n", "mean", "std"];

/// Writes `summary.csv` and `summary.json` into `out_dir`.
pub fn write_summary(out_dir: &Path, rows: &[SummaryRow]) -> Result<()> {
    std::fs::create_dir_all(out_dir)?;
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_path(out_dir.join("summary.csv"))?;
    w.write_record(SUMMARY_HEADER)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    std::fs::write(out_dir.join("summary.json"), serde_json::to_string_pretty(rows)?)?;
    Ok(())
}

/// Reloads the records of `out_dir`, checks each summary against its rows
/// (to 1e-12) and writes the aggregated tables.
pub fn summarize_dir(out_dir: &Path) -> Result<Vec<SummaryRow>> {
    let records = load_records(out_dir)?;
    for r in &records {
        let again = r.recompute_summary(out_dir)?;
        let same = again.len() == r.summary.len()
            && again
                .iter()
                .all(|(k, v)| r.summary.get(k).is_some_and(|w| (v - w).abs() <= 1e-12 * v.abs().max(1.0)));
        if !same {
            return Err(Error::structural(format!("summary of {} does not match its rows", r.rows_file)));
        }
    }
    let rows = export_summary(&records);
    write_summary(out_dir, &rows)?;
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::Topology;
    use crate::srl::PolicyShape;

    fn tiny(dir: &Path) -> ExperimentConfig {
        let mut cfg = ExperimentConfig {
            scenario: ScenarioConfig {
                n_agents: 12,
                topology: Topology::ErdosRenyi { p: 0.5 },
                ..Default::default()
            },
            intents: IntentConfig {
                historical: 20,
                test: 20,
                train: 40,
                ..Default::default()
            },
            market: MarketConfig::Noisy { sigma: 0.05, fee: 0.01 },
            episodes: 20,
            seeds: vec![0, 1],
            final_window: 5,
            out_dir: dir.to_path_buf(),
            ..Default::default()
        };
        cfg.srl.ppo.episodes_per_update = 5;
        cfg.srl.policy = PolicyShape {
            gcn_hidden: 8,
            embed_dim: 4,
            head_hidden: 8,
        };
        cfg.distill.epochs = 1;
        cfg
    }

    #[test]
    fn git_hash_matches_git() {
        // `printf 'hello\n' | git hash-object --stdin`
        assert_eq!(git_blob_hash(b"hello\n"), "ce013625030ba8dba906f756967f9e9ca394464a");
        assert_eq!(git_blob_hash(b""), "e69de29bb2d1d6434b8b29ae775ad8c2e48c5391");
    }

    #[test]
    fn all_variants_emit_one_record_per_seed_and_rerun_identically() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = tiny(dir.path());
        let world = World::build(&cfg).unwrap();
        let records = run_experiment(&cfg, &world).unwrap();
        assert_eq!(records.len(), 8);
        for v in Variant::ALL {
            for seed in [0, 1] {
                assert_eq!(records.iter().filter(|r| r.variant == v.as_str() && r.seed == seed).count(), 1);
            }
        }
        save_records(dir.path(), &records).unwrap();
        let table = summarize_dir(dir.path()).unwrap();
        assert!(table.iter().any(|r| r.metric == "final_reward_episode" && r.n == 2));

        // Same inputs, same numbers and hashes.
        let again = run_experiment(&cfg, &world).unwrap();
        for (a, b) in records.iter().zip(&again) {
            assert_eq!(a.summary, b.summary);
            assert_eq!(a.input_hash, b.input_hash);
        }
        let evals = run_eval(&cfg, &world).unwrap();
        assert_eq!(evals.len(), 4);
        assert!(evals.iter().all(|r| r.kind == RunKind::Eval));
    }

    #[test]
    fn summaries_recompute_from_rows() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = ExperimentConfig {
            variant: VariantSelection::Random,
            ..tiny(dir.path())
        };
        let world = World::build(&cfg).unwrap();
        let records = run_baselines(&cfg, &world).unwrap();
        let rows = read_srl_log(&dir.path().join(&records[0].rows_file)).unwrap();
        let hand: f64 = rows[rows.len() - 5..].iter().map(|r| r.reward_gt).sum::<f64>() / 5.0;
        assert!((records[0].summary["final_reward_gt"] - hand).abs() < 1e-12);
        for r in &records {
            let again = r.recompute_summary(dir.path()).unwrap();
            for (k, v) in &r.summary {
                assert!((again[k] - v).abs() < 1e-12, "{k}");
            }
        }
    }

    #[test]
    fn zero_episodes_give_an_empty_but_valid_summary() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = ExperimentConfig {
            episodes: 0,
            seeds: vec![3],
            ..tiny(dir.path())
        };
        let world = World::build(&cfg).unwrap();
        let records = run_experiment(&cfg, &world).unwrap();
        assert_eq!(records.len(), 4);
        for r in &records {
            assert_eq!(r.summary["episodes"], 0.0);
            assert!(!r.summary.contains_key("mean_reward_episode"));
        }
        save_records(dir.path(), &records).unwrap();
        summarize_dir(dir.path()).unwrap();
    }

    #[test]
    fn distill_runs_cover_every_application() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = ExperimentConfig {
            seeds: vec![0],
            ..tiny(dir.path())
        };
        let world = World::build(&cfg).unwrap();
        let records = run_distill(&cfg, &world).unwrap();
        assert_eq!(records.len(), 9);
        let even = records.iter().find(|r| r.variant == "even" && r.application == Some(1)).unwrap();
        let direct = even_baseline_metrics(&world.intents.app(1).unwrap().test).unwrap();
        assert_eq!(even.summary["test_mse"], direct.mse);
        save_records(dir.path(), &records).unwrap();
        save_records(dir.path(), &records).unwrap();
        assert_eq!(load_records(dir.path()).unwrap().len(), 9);
        summarize_dir(dir.path()).unwrap();
    }

    #[test]
    fn single_record_has_zero_std() {
        let r = RunRecord {
            kind: RunKind::Train,
            variant: "srl".into(),
            seed: 0,
            application: None,
            input_hash: String::new(),
            config: serde_json::Value::Null,
            rows_file: String::new(),
            summary: [("x".to_string(), 2.5)].into_iter().collect(),
        };
        let rows = export_summary(&[r.clone()]);
        assert_eq!(rows.len(), 1);
        assert_eq!((rows[0].mean, rows[0].std, rows[0].n), (2.5, 0.0, 1));
        let mut r2 = r.clone();
        r2.seed = 1;
        r2.summary.insert("x".into(), 3.5);
        let rows = export_summary(&[r, r2]);
        assert_eq!(rows[0].mean, 3.0);
        assert!((rows[0].std - 0.5f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn configs_are_validated() {
        let dir = tempfile::tempdir().unwrap();
        let ok = tiny(dir.path());
        let text = serde_json::to_string(&ok).unwrap();
        assert_eq!(ExperimentConfig::from_json(&text).unwrap(), ok);
        assert!(ExperimentConfig::from_json(r#"{"seeds": []}"#).is_err());
        assert!(ExperimentConfig::from_json(r#"{"bogus": 1}"#).is_err());
        assert!(ExperimentConfig::from_json(r#"{"request_apps": [7]}"#).is_err());
    }
}
