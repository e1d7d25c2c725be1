//! Retrieval prompt construction.
//!
//! Templates are reproduced exactly as printed: the single-prompt template
//! starts with a capital "A", the caption template with a lower-case "a".

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::captions::CaptionSet;
use crate::compound::{CompoundError, CompoundNoun};

#[derive(Debug, Clone, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(tag = "kind", rename_all = "kebab-case"))]
pub enum PromptStrategy {
    BaseTemplate,
    ReversedTemplate,
    CaptionEnsemble { k: usize },
    PromptsFromFile { source_path: String },
}

impl PromptStrategy {
    pub fn name(&self) -> &'static str {
        match self {
            PromptStrategy::BaseTemplate => "base",
            PromptStrategy::ReversedTemplate => "reversed",
            PromptStrategy::CaptionEnsemble { .. } => "ensemble",
            PromptStrategy::PromptsFromFile { .. } => "file",
        }
    }

    /// Short human-readable descriptor, e.g. `ensemble(k=5)`.
    pub fn descriptor(&self) -> String {
        match self {
            PromptStrategy::CaptionEnsemble { k } => format!("ensemble(k={k})"),
            PromptStrategy::PromptsFromFile { source_path } => format!("file({source_path})"),
            other => String::from(other.name()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum PromptError {
    #[error(transparent)]
    Compound(#[from] CompoundError),
    #[error("caption set is for {captions:?}, not {compound_noun:?}")]
    CaptionSetMismatch { compound_noun: String, captions: String },
    #[error("prompt set for {0:?} is empty")]
    Empty(String),
    #[error("strategy {strategy} expects {expected} prompts, got {got}")]
    WrongCount { strategy: &'static str, expected: usize, got: usize },
}

/// The prompts scored against every candidate image for one compound noun.
#[derive(Debug, Clone, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct PromptSet {
    compound_noun: String,
    strategy: PromptStrategy,
    prompts: Vec<String>,
}

impl PromptSet {
    /// Checks the per-strategy prompt count.
    pub fn new(compound_noun: impl Into<String>, strategy: PromptStrategy, prompts: Vec<String>) -> Result<Self, PromptError> {
        let compound_noun = compound_noun.into();
        if prompts.is_empty() {
            return Err(PromptError::Empty(compound_noun));
        }
        let expected = match strategy {
            PromptStrategy::BaseTemplate | PromptStrategy::ReversedTemplate => Some(1),
            PromptStrategy::CaptionEnsemble { k } => Some(k),
            PromptStrategy::PromptsFromFile { .. } => None,
        };
        if let Some(expected) = expected {
            if prompts.len() != expected {
                return Err(PromptError::WrongCount { strategy: strategy.name(), expected, got: prompts.len() });
            }
        }
        Ok(Self { compound_noun, strategy, prompts })
    }

    pub fn compound_noun(&self) -> &str {
        &self.compound_noun
    }

    pub fn strategy(&self) -> &PromptStrategy {
        &self.strategy
    }

    pub fn prompts(&self) -> &[String] {
        &self.prompts
    }

    pub fn len(&self) -> usize {
        self.prompts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.prompts.is_empty()
    }
}

pub const BASE_PREFIX: &str = "A photo of a ";

fn base_template(text: &str) -> String {
    let mut s = String::with_capacity(BASE_PREFIX.len() + text.len());
    s.push_str(BASE_PREFIX);
    s.push_str(text);
    s
}

/// `"A photo of a {cn}"` with the compound noun lower-cased.
pub fn build_base_prompt(cn: &CompoundNoun) -> String {
    base_template(&cn.prompt_text())
}

/// The base template applied to the reversed compound.
pub fn build_reversed_prompt(cn: &CompoundNoun) -> Result<String, CompoundError> {
    Ok(base_template(&cn.reversed()?.to_lowercase()))
}

/// `"a photo of a {cn}. An example of {cn} in an image is {caption}"`.
pub fn build_example_prompt(cn: &CompoundNoun, caption: &str) -> String {
    let text = cn.prompt_text();
    format!("a photo of a {text}. An example of {text} in an image is {caption}")
}

/// One prompt per caption, in caption order.
pub fn build_example_prompts(cn: &CompoundNoun, captions: &CaptionSet) -> Result<PromptSet, PromptError> {
    if !captions.compound_noun().eq_ignore_ascii_case(cn.text()) {
        return Err(PromptError::CaptionSetMismatch {
            compound_noun: cn.text().into(),
            captions: captions.compound_noun().into(),
        });
    }
    let prompts = captions.captions().iter().map(|c| build_example_prompt(cn, c)).collect();
    PromptSet::new(cn.text(), PromptStrategy::CaptionEnsemble { k: captions.len() }, prompts)
}

pub fn base_prompt_set(cn: &CompoundNoun) -> PromptSet {
    PromptSet {
        compound_noun: cn.text().into(),
        strategy: PromptStrategy::BaseTemplate,
        prompts: alloc::vec![build_base_prompt(cn)],
    }
}

pub fn reversed_prompt_set(cn: &CompoundNoun) -> Result<PromptSet, CompoundError> {
    Ok(PromptSet {
        compound_noun: cn.text().into(),
        strategy: PromptStrategy::ReversedTemplate,
        prompts: alloc::vec![build_reversed_prompt(cn)?],
    })
}
