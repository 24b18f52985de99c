//! Template grammar for synthetic user prompts.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::embed::tokenize;
use super::Prompt;
use crate::error::{Error, Result};
use crate::seed::rng_for;

const DEFAULT_GRAMMAR: &str = include_str!("../../config/grammar.json");

/// Modifier phrases that each carry one keyword and shift the preference.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KeywordGroup {
    pub name: String,
    /// Added to the base preference once per keyword occurrence.
    pub shift: [f64; 4],
    pub phrases: Vec<String>,
    pub keywords: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AppGrammar {
    pub id: u32,
    pub name: String,
    /// Preference of a user of this application whose prompt has no keywords.
    pub base: [f64; 4],
    pub tasks: Vec<String>,
    /// Probability that a prompt carries a phrase from each group.
    pub group_probs: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grammar {
    pub openers: Vec<String>,
    pub keyword_groups: Vec<KeywordGroup>,
    pub applications: Vec<AppGrammar>,
}

impl Default for Grammar {
    fn default() -> Self {
        Self::from_json(DEFAULT_GRAMMAR).expect("shipped grammar is valid")
    }
}

impl Grammar {
    pub fn from_json(text: &str) -> Result<Self> {
        let g: Self = serde_json::from_str(text)?;
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        if self.openers.is_empty() {
            return Err(Error::config("grammar needs at least one opener"));
        }
        for group in &self.keyword_groups {
            if group.phrases.is_empty() || group.keywords.is_empty() {
                return Err(Error::config(format!("keyword group {} is empty", group.name)));
            }
            for phrase in &group.phrases {
                let tokens = tokenize(phrase);
                if !group.keywords.iter().any(|k| tokens.contains(k)) {
                    return Err(Error::config(format!("phrase {phrase:?} carries no keyword of {}", group.name)));
                }
            }
        }
        for app in &self.applications {
            if app.tasks.is_empty() {
                return Err(Error::config(format!("application {} has no tasks", app.id)));
            }
            for (name, p) in &app.group_probs {
                if self.group(name).is_none() {
                    return Err(Error::config(format!("application {} references unknown group {name}", app.id)));
                }
                if !(0.0..=1.0).contains(p) {
                    return Err(Error::config(format!("group probability {p} outside [0, 1]")));
                }
            }
        }
        Ok(())
    }

    pub fn app(&self, id: u32) -> Result<&AppGrammar> {
        self.applications
            .iter()
            .find(|a| a.id == id)
            .ok_or_else(|| Error::config(format!("unknown application id {id}")))
    }

    pub fn group(&self, name: &str) -> Option<&KeywordGroup> {
        self.keyword_groups.iter().find(|g| g.name == name)
    }

    /// Every keyword with its preference shift.
    pub fn keyword_shifts(&self) -> BTreeMap<String, [f64; 4]> {
        let mut out = BTreeMap::new();
        for g in &self.keyword_groups {
            for k in &g.keywords {
                out.insert(k.clone(), g.shift);
            }
        }
        out
    }

    /// Names of the groups whose keywords occur in `text`.
    pub fn groups_in(&self, text: &str) -> Vec<&str> {
        let tokens = tokenize(text);
        self.keyword_groups
            .iter()
            .filter(|g| g.keywords.iter().any(|k| tokens.contains(k)))
            .map(|g| g.name.as_str())
            .collect()
    }

    /// One prompt for `app`; only groups accepted by `allow` may appear.
    pub fn sample_prompt<R: Rng>(&self, app: &AppGrammar, rng: &mut R, allow: impl Fn(&str) -> bool) -> Prompt {
        let opener = self.openers.choose(rng).expect("validated non-empty");
        let task = app.tasks.choose(rng).expect("validated non-empty");
        let mut text = format!("{opener} {task}");
        for group in &self.keyword_groups {
            let p = app.group_probs.get(&group.name).copied().unwrap_or(0.0);
            // always draw, so restricting groups does not shift later draws
            let include = rng.gen::<f64>() < p;
            let phrase = group.phrases.choose(rng).expect("validated non-empty");
            if include && allow(&group.name) {
                text.push_str(", ");
                text.push_str(phrase);
            }
        }
        text.push('.');
        Prompt::new(text, app.id).expect("generated prompts are non-empty")
    }
}

/// `count` prompts for one application; deterministic given `seed`.
pub fn generate_prompts(grammar: &Grammar, application_id: u32, count: usize, seed: u64) -> Result<Vec<Prompt>> {
    let app = grammar.app(application_id)?;
    let mut rng = rng_for(seed, &format!("prompts/{application_id}"));
    Ok((0..count).map(|_| grammar.sample_prompt(app, &mut rng, |_| true)).collect())
}
