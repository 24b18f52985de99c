//! Synthetic intents, text embedding and preference dataset construction.

mod dataset;
mod embed;
mod grammar;
mod teacher;

pub use dataset::*;
pub use embed::{cosine_similarity, embed, tokenize, Embedder, EmbeddingVector, DEFAULT_DIM};
pub use grammar::{generate_prompts, AppGrammar, Grammar, KeywordGroup};
pub use teacher::{teacher_translate, TeacherOracle};

pub use crate::preference::{angular_distance, PreferenceVector};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A natural-language request from one user of one application.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Prompt {
    pub text: String,
    pub application_id: u32,
    /// Free-text reasoning note; carried through files, never computed on.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub annotation: Option<String>,
}

impl Prompt {
    pub fn new(text: impl Into<String>, application_id: u32) -> Result<Self> {
        let text = text.into();
        if text.trim().is_empty() {
            return Err(Error::domain("prompt text must be non-empty"));
        }
        Ok(Self {
            text,
            application_id,
            annotation: None,
        })
    }
}

/// A prompt labelled with its preference vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntentSample {
    pub prompt: Prompt,
    pub preference: PreferenceVector,
}

/// A labelled prompt with the contrastive vectors it should be pushed away from.
#[derive(Debug, Clone, PartialEq)]
pub struct IoKdSample {
    pub prompt: Prompt,
    pub preference: PreferenceVector,
    pub contrastive: Vec<PreferenceVector>,
}
