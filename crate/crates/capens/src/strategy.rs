//! Prompt sources selected on the command line.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use capens_core::captions::CaptionSet;
use capens_core::eval::{CachedCaptionPrompts, CaptionLookupError, PromptSource, TemplatePrompts};
use capens_core::prompt::{PromptError, PromptSet, PromptStrategy};
use capens_core::{CompoundError, CompoundNoun};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum StrategyName {
    Base,
    Reversed,
    Ensemble,
    File,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum PrompterError {
    #[error("{cn:?}: {source}")]
    Compound { cn: String, source: CompoundError },
    #[error(transparent)]
    Caption(#[from] CaptionLookupError),
    #[error("no prompts for {0:?} in the prompts file")]
    MissingPrompts(String),
    #[error("{cn:?}: {source}")]
    Prompt { cn: String, source: PromptError },
}

#[derive(Debug, thiserror::Error)]
pub enum PromptsFileError {
    #[error("reading {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{path}: {detail}")]
    Malformed { path: String, detail: String },
}

/// Externally supplied prompt lists: a JSON object mapping each compound
/// noun (matched case-insensitively) to a non-empty list of prompts.
#[derive(Debug, Clone)]
pub struct PromptsFile {
    source_path: String,
    prompts: HashMap<String, Vec<String>>,
}

impl PromptsFile {
    pub fn load(path: &Path) -> Result<Self, PromptsFileError> {
        let p = path.display().to_string();
        let raw = std::fs::read(path).map_err(|source| PromptsFileError::Io { path: p.clone(), source })?;
        let map: BTreeMap<String, Vec<String>> =
            serde_json::from_slice(&raw).map_err(|e| PromptsFileError::Malformed { path: p.clone(), detail: e.to_string() })?;
        let mut prompts = HashMap::with_capacity(map.len());
        for (cn, list) in map {
            let key = CompoundNoun::new(&cn)
                .map_err(|e| PromptsFileError::Malformed { path: p.clone(), detail: format!("{cn:?}: {e}") })?
                .prompt_text();
            if list.is_empty() || list.iter().any(|s| s.trim().is_empty()) {
                return Err(PromptsFileError::Malformed { path: p, detail: format!("{cn:?}: empty prompt list or prompt") });
            }
            if prompts.insert(key, list).is_some() {
                return Err(PromptsFileError::Malformed { path: p, detail: format!("{cn:?} listed twice") });
            }
        }
        Ok(Self { source_path: p, prompts })
    }
}

impl PromptSource for PromptsFile {
    type Error = PrompterError;

    fn strategy(&self) -> PromptStrategy {
        PromptStrategy::PromptsFromFile { source_path: self.source_path.clone() }
    }

    fn prompt_set(&self, cn: &CompoundNoun) -> Result<PromptSet, PrompterError> {
        let list = self.prompts.get(&cn.prompt_text()).ok_or_else(|| PrompterError::MissingPrompts(cn.text().into()))?;
        PromptSet::new(cn.text(), self.strategy(), list.clone()).map_err(|source| PrompterError::Prompt { cn: cn.text().into(), source })
    }
}

/// Every prompt strategy behind one [`PromptSource`].
#[derive(Debug, Clone)]
pub enum Prompter {
    Template(TemplatePrompts),
    /// Caption sets keyed by lower-cased compound noun, cut to `k`.
    Ensemble { sets: BTreeMap<String, CaptionSet>, k: usize },
    File(PromptsFile),
}

impl PromptSource for Prompter {
    type Error = PrompterError;

    fn strategy(&self) -> PromptStrategy {
        match self {
            Prompter::Template(t) => t.strategy(),
            Prompter::Ensemble { k, .. } => PromptStrategy::CaptionEnsemble { k: *k },
            Prompter::File(f) => f.strategy(),
        }
    }

    fn prompt_set(&self, cn: &CompoundNoun) -> Result<PromptSet, PrompterError> {
        match self {
            Prompter::Template(t) => t.prompt_set(cn).map_err(|source| PrompterError::Compound { cn: cn.text().into(), source }),
            Prompter::Ensemble { sets, k } => Ok(CachedCaptionPrompts::new(sets, *k).prompt_set(cn)?),
            Prompter::File(f) => f.prompt_set(cn),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reversed_error_names_the_compound() {
        let p = Prompter::Template(TemplatePrompts::Reversed);
        let err = p.prompt_set(&CompoundNoun::new("lab coat rack stand").unwrap()).unwrap_err();
        assert!(err.to_string().contains("lab coat rack stand"), "{err}");
        assert_eq!(p.prompt_set(&CompoundNoun::new("lab coat").unwrap()).unwrap().prompts(), ["A photo of a coat lab"]);
    }

    #[test]
    fn prompts_file_lookup() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("desc.json");
        std::fs::write(&path, r#"{"Lab Coat": ["a lab coat, which has long sleeves", "a lab coat, which is white"]}"#).unwrap();
        let f = PromptsFile::load(&path).unwrap();
        let set = f.prompt_set(&CompoundNoun::new("lab coat").unwrap()).unwrap();
        assert_eq!(set.len(), 2);
        assert_eq!(f.strategy().name(), "file");
        assert!(matches!(f.prompt_set(&CompoundNoun::new("snow ball").unwrap()), Err(PrompterError::MissingPrompts(_))));

        std::fs::write(&path, r#"{"lab coat": []}"#).unwrap();
        assert!(matches!(PromptsFile::load(&path), Err(PromptsFileError::Malformed { .. })));
        std::fs::write(&path, r#"{"lab coat": ["x"], "Lab  Coat": ["y"]}"#).unwrap();
        assert!(matches!(PromptsFile::load(&path), Err(PromptsFileError::Malformed { .. })));
    }
}
