//! Labelled intent datasets per application: few-shot demos, a held-out test
//! set and an augmented distillation training set.

use std::collections::BTreeSet;
use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::intent::{
    build_iokd_dataset, filter_relevant, read_records, write_records, DatasetRecord, Grammar, IntentSample, IoKdSample,
    Prompt, TeacherOracle,
};
use crate::seed::{derive_seed, rng_for};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IntentConfig {
    pub applications: Vec<u32>,
    /// Few-shot demonstrations per application.
    pub demo: usize,
    /// Historical pool per application, shared by all applications.
    pub historical: usize,
    pub test: usize,
    /// Final size of each augmented training set.
    pub train: usize,
    /// Minimum cosine similarity for a historical prompt to join the demos.
    pub relevance: f64,
    pub contrastive_k: usize,
    pub teacher_noise: f64,
    pub seed: u64,
}

impl Default for IntentConfig {
    fn default() -> Self {
        Self {
            applications: vec![1, 2, 3],
            demo: 10,
            historical: 100,
            test: 200,
            train: 500,
            relevance: 0.3,
            contrastive_k: 4,
            teacher_noise: 0.05,
            seed: 0,
        }
    }
}

impl IntentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.applications.is_empty() {
            return Err(Error::config("need at least one application"));
        }
        let unique: BTreeSet<_> = self.applications.iter().collect();
        if unique.len() != self.applications.len() {
            return Err(Error::config("applications must be distinct"));
        }
        if self.demo == 0 || self.test == 0 {
            return Err(Error::config("demo and test sets must be non-empty"));
        }
        if self.train < self.demo {
            return Err(Error::config("training set cannot be smaller than the demo set"));
        }
        if !(self.teacher_noise >= 0.0 && self.teacher_noise.is_finite()) {
            return Err(Error::config("teacher noise must be non-negative"));
        }
        Ok(())
    }

    pub fn oracle(&self, grammar: &Grammar) -> TeacherOracle {
        TeacherOracle::from_grammar(grammar, self.teacher_noise, self.seed)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AppIntents {
    pub application_id: u32,
    pub demo: Vec<IntentSample>,
    pub train: Vec<IoKdSample>,
    pub test: Vec<IntentSample>,
}

impl AppIntents {
    /// The training set without contrastive vectors.
    pub fn train_samples(&self) -> Vec<IntentSample> {
        self.train
            .iter()
            .map(|s| IntentSample {
                prompt: s.prompt.clone(),
                preference: s.preference,
            })
            .collect()
    }

    /// The first `n` training samples; the demos (and relevant historical
    /// prompts) come first, so smaller sets are prefixes of larger ones.
    pub fn train_prefix(&self, n: usize) -> &[IoKdSample] {
        &self.train[..n.min(self.train.len())]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IntentSet {
    pub historical: Vec<IntentSample>,
    pub apps: Vec<AppIntents>,
}

impl IntentSet {
    pub fn app(&self, id: u32) -> Result<&AppIntents> {
        self.apps
            .iter()
            .find(|a| a.application_id == id)
            .ok_or_else(|| Error::config(format!("no intents for application {id}")))
    }
}

/// Draws prompts for `app` from the labelled stream, skipping texts in
/// `exclude`, until `count` are collected.
fn fresh_prompts(
    grammar: &Grammar,
    oracle: &TeacherOracle,
    app: u32,
    count: usize,
    seed: u64,
    label: &str,
    exclude: &BTreeSet<String>,
) -> Result<Vec<IntentSample>> {
    let spec = grammar.app(app)?;
    let mut rng = rng_for(seed, &format!("intents/{label}/{app}"));
    let mut out = Vec::with_capacity(count);
    let budget = 50 * count + 100;
    for _ in 0..budget {
        if out.len() == count {
            break;
        }
        let prompt: Prompt = grammar.sample_prompt(spec, &mut rng, |_| true);
        if exclude.contains(&prompt.text) {
            continue;
        }
        let preference = oracle.translate(&prompt)?;
        out.push(IntentSample { prompt, preference });
    }
    if out.len() < count {
        return Err(Error::config(format!(
            "grammar for application {app} cannot supply {count} prompts outside the excluded set"
        )));
    }
    Ok(out)
}

/// Builds demo, training and test sets for every configured application.
/// Test prompts never share their text with any demo or training prompt of
/// the same application.
pub fn gen_intents(grammar: &Grammar, cfg: &IntentConfig) -> Result<IntentSet> {
    cfg.validate()?;
    grammar.validate()?;
    let oracle = cfg.oracle(grammar);
    let none = BTreeSet::new();
    let mut historical = Vec::new();
    for &app in &cfg.applications {
        historical.extend(fresh_prompts(grammar, &oracle, app, cfg.historical, cfg.seed, "historical", &none)?);
    }
    let mut apps = Vec::with_capacity(cfg.applications.len());
    for &app in &cfg.applications {
        let demo = fresh_prompts(grammar, &oracle, app, cfg.demo, cfg.seed, "demo", &none)?;
        let mut seed_set = demo.clone();
        let room = cfg.train - demo.len();
        seed_set.extend(filter_relevant(&historical, &demo, cfg.relevance).into_iter().take(room));
        let n_aug = cfg.train - seed_set.len();
        let aug_seed = derive_seed(cfg.seed, &format!("intents/augment/{app}"));
        let train = build_iokd_dataset(&seed_set, &historical, n_aug, cfg.contrastive_k, &oracle, grammar, aug_seed)?;
        let seen: BTreeSet<String> = train.iter().map(|s| s.prompt.text.clone()).collect();
        let test = fresh_prompts(grammar, &oracle, app, cfg.test, cfg.seed, "test", &seen)?;
        apps.push(AppIntents {
            application_id: app,
            demo,
            train,
            test,
        });
    }
    Ok(IntentSet { historical, apps })
}

fn write_jsonl(path: &Path, records: &[DatasetRecord]) -> Result<()> {
    write_records(BufWriter::new(File::create(path)?), records)
}

fn read_jsonl(path: &Path) -> Result<Vec<DatasetRecord>> {
    read_records(BufReader::new(File::open(path)?))
}

/// `historical.jsonl` plus `app{id}_{demo,train,test}.jsonl` in `dir`.
pub fn write_intent_set(dir: &Path, set: &IntentSet) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let plain = |v: &[IntentSample]| v.iter().map(DatasetRecord::from).collect::<Vec<_>>();
    write_jsonl(&dir.join("historical.jsonl"), &plain(&set.historical))?;
    for a in &set.apps {
        let id = a.application_id;
        write_jsonl(&dir.join(format!("app{id}_demo.jsonl")), &plain(&a.demo))?;
        write_jsonl(&dir.join(format!("app{id}_test.jsonl")), &plain(&a.test))?;
        let train: Vec<DatasetRecord> = a.train.iter().map(DatasetRecord::from).collect();
        write_jsonl(&dir.join(format!("app{id}_train.jsonl")), &train)?;
    }
    Ok(())
}

pub fn read_intent_set(dir: &Path, applications: &[u32]) -> Result<IntentSet> {
    let plain = |name: String| -> Result<Vec<IntentSample>> {
        Ok(read_jsonl(&dir.join(name))?.into_iter().map(DatasetRecord::into_intent).collect())
    };
    let historical = plain("historical.jsonl".into())?;
    let mut apps = Vec::with_capacity(applications.len());
    for &id in applications {
        apps.push(AppIntents {
            application_id: id,
            demo: plain(format!("app{id}_demo.jsonl"))?,
            test: plain(format!("app{id}_test.jsonl"))?,
            train: read_jsonl(&dir.join(format!("app{id}_train.jsonl")))?
                .into_iter()
                .map(DatasetRecord::into_iokd)
                .collect(),
        });
    }
    Ok(IntentSet { historical, apps })
}
