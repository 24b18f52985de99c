use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use super::embed::{cosine_similarity, Embedder};
use super::grammar::Grammar;
use super::teacher::TeacherOracle;
use super::{IntentSample, IoKdSample, Prompt};
use crate::error::{Error, Result};
use crate::preference::{angular_distance, PreferenceVector};
use crate::seed::rng_for;

/// Historical samples whose prompt is at least `tau_min`-similar to some user
/// prompt, in input order.
pub fn filter_relevant(historical: &[IntentSample], user: &[IntentSample], tau_min: f64) -> Vec<IntentSample> {
    let embedder = Embedder::default();
    let user_emb: Vec<_> = user.iter().map(|u| embedder.embed(&u.prompt.text)).collect();
    historical
        .iter()
        .filter(|h| {
            let e = embedder.embed(&h.prompt.text);
            user_emb
                .iter()
                .map(|u| cosine_similarity(u, &e))
                .fold(f64::NEG_INFINITY, f64::max)
                >= tau_min
        })
        .cloned()
        .collect()
}

/// The `k` pool entries farthest from `sample` by angular distance, farthest
/// first; ties keep pool order.
pub fn topk_contrastive(sample: &PreferenceVector, pool: &[PreferenceVector], k: usize) -> Result<Vec<PreferenceVector>> {
    if k == 0 {
        return Err(Error::Size("k must be at least 1".into()));
    }
    if pool.len() < k {
        return Err(Error::Size(format!("pool of {} cannot supply top-{k}", pool.len())));
    }
    let mut scored: Vec<(usize, f64)> = pool.iter().enumerate().map(|(i, p)| (i, angular_distance(sample, p))).collect();
    scored.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    Ok(scored.into_iter().take(k).map(|(i, _)| pool[i]).collect())
}

/// Like [`topk_contrastive`] but skips entries at zero distance from `sample`.
pub fn topk_distinct_contrastive(sample: &PreferenceVector, pool: &[PreferenceVector], k: usize) -> Result<Vec<PreferenceVector>> {
    let distinct: Vec<PreferenceVector> = pool.iter().copied().filter(|p| angular_distance(sample, p) > 0.0).collect();
    topk_contrastive(sample, &distinct, k)
        .map_err(|_| Error::Size(format!("only {} contrastive candidates distinct from the sample, need {k}", distinct.len())))
}

fn dominant_application(demo: &[IntentSample]) -> u32 {
    let mut counts = std::collections::BTreeMap::new();
    for s in demo {
        *counts.entry(s.prompt.application_id).or_insert(0usize) += 1;
    }
    // max count, lowest id on ties
    let mut best = (0usize, u32::MAX);
    for (&app, &c) in &counts {
        if c > best.0 {
            best = (c, app);
        }
    }
    best.1
}

/// Appends `n_aug` teacher-labelled prompts for the demo set's dominant
/// application, using only keyword groups that occur in the demo prompts.
pub fn augment(
    demo: &[IntentSample],
    n_aug: usize,
    oracle: &TeacherOracle,
    grammar: &Grammar,
    seed: u64,
) -> Result<Vec<IntentSample>> {
    if demo.is_empty() {
        return Err(Error::Size("augmentation needs a non-empty demo set".into()));
    }
    let mut out = demo.to_vec();
    if n_aug == 0 {
        return Ok(out);
    }
    let app = grammar.app(dominant_application(demo))?;
    let seen: Vec<String> = demo
        .iter()
        .flat_map(|s| grammar.groups_in(&s.prompt.text))
        .map(str::to_owned)
        .collect();
    let mut rng = rng_for(seed, &format!("augment/{}", app.id));
    for _ in 0..n_aug {
        let prompt = grammar.sample_prompt(app, &mut rng, |g| seen.iter().any(|s| s == g));
        let preference = oracle.translate(&prompt)?;
        out.push(IntentSample { prompt, preference });
    }
    Ok(out)
}

/// Augments the demo set, then attaches the `k` most divergent historical
/// preference vectors (distinct from the sample's own) to every sample.
pub fn build_iokd_dataset(
    demo: &[IntentSample],
    historical: &[IntentSample],
    n_aug: usize,
    k: usize,
    oracle: &TeacherOracle,
    grammar: &Grammar,
    seed: u64,
) -> Result<Vec<IoKdSample>> {
    let pool: Vec<PreferenceVector> = historical.iter().map(|h| h.preference).collect();
    augment(demo, n_aug, oracle, grammar, seed)?
        .into_iter()
        .map(|s| {
            let contrastive = topk_distinct_contrastive(&s.preference, &pool, k)?;
            Ok(IoKdSample {
                prompt: s.prompt,
                preference: s.preference,
                contrastive,
            })
        })
        .collect()
}

pub fn mean_preference(samples: &[IntentSample]) -> Result<PreferenceVector> {
    PreferenceVector::mean(samples.iter().map(|s| &s.preference))
}

/// One line of a dataset file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetRecord {
    pub text: String,
    pub application_id: u32,
    pub preference: PreferenceVector,
    #[serde(default)]
    pub contrastive: Vec<PreferenceVector>,
    #[serde(default)]
    pub annotation: Option<String>,
}

impl From<&IoKdSample> for DatasetRecord {
    fn from(s: &IoKdSample) -> Self {
        Self {
            text: s.prompt.text.clone(),
            application_id: s.prompt.application_id,
            preference: s.preference,
            contrastive: s.contrastive.clone(),
            annotation: s.prompt.annotation.clone(),
        }
    }
}

impl From<&IntentSample> for DatasetRecord {
    fn from(s: &IntentSample) -> Self {
        Self {
            text: s.prompt.text.clone(),
            application_id: s.prompt.application_id,
            preference: s.preference,
            contrastive: Vec::new(),
            annotation: s.prompt.annotation.clone(),
        }
    }
}

impl DatasetRecord {
    pub fn prompt(&self) -> Prompt {
        Prompt {
            text: self.text.clone(),
            application_id: self.application_id,
            annotation: self.annotation.clone(),
        }
    }

    pub fn into_intent(self) -> IntentSample {
        IntentSample {
            prompt: self.prompt(),
            preference: self.preference,
        }
    }

    pub fn into_iokd(self) -> IoKdSample {
        IoKdSample {
            prompt: self.prompt(),
            preference: self.preference,
            contrastive: self.contrastive,
        }
    }
}

/// Writes one JSON object per line.
pub fn write_records<W: Write>(mut w: W, records: &[DatasetRecord]) -> Result<()> {
    for r in records {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_records<R: BufRead>(r: R) -> Result<Vec<DatasetRecord>> {
    let mut out = Vec::new();
    for line in r.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line)?);
    }
    Ok(out)
}
