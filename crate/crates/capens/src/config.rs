//! Run configuration: one TOML document with dotted keys, overridden by flags.
//!
//! ```toml
//! manifest = "compun.json"
//! strategy = "ensemble"
//! k = 5
//! seed = 0
//! cache_dir = ".capens-cache"
//! out = "runs/ensemble"
//! provider.kind = "file-store"
//! provider.path = "embeddings.jsonl"
//! provider.model = "ViT-L-14"
//! provider.dim = 768
//! captioner.kind = "file"
//! captioner.path = "captions.json"
//! ```
//!
//! Relative paths in the file resolve against the file's directory.

use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::captioner::CaptionerSpec;
use crate::provider::EmbeddingProviderSpec;
use crate::strategy::StrategyName;

pub const DEFAULT_K: usize = 5;
pub const DEFAULT_CACHE_DIR: &str = ".capens-cache";
pub const DEFAULT_OUT: &str = "capens-out";

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("reading config {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("config {path}: {detail}")]
    Parse { path: String, detail: String },
    #[error("{0}")]
    Invalid(String),
}

/// Everything optional, as written in the file or given on the command line.
#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigLayer {
    pub manifest: Option<PathBuf>,
    pub strategy: Option<StrategyName>,
    pub k: Option<usize>,
    pub seed: Option<u64>,
    pub cache_dir: Option<PathBuf>,
    /// Disable the disk cache entirely.
    pub no_cache: Option<bool>,
    pub out: Option<PathBuf>,
    pub jobs: Option<usize>,
    pub fail_soft: Option<bool>,
    /// Prompt lists for the `file` strategy.
    pub prompts: Option<PathBuf>,
    pub provider: Option<EmbeddingProviderSpec>,
    pub captioner: Option<CaptionerSpec>,
}

impl ConfigLayer {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let p = path.display().to_string();
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io { path: p.clone(), source })?;
        let mut layer: ConfigLayer = toml::from_str(&text).map_err(|e| ConfigError::Parse { path: p, detail: e.to_string() })?;
        layer.resolve_paths(path.parent().unwrap_or(Path::new("")));
        Ok(layer)
    }

    fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        for p in [&mut self.manifest, &mut self.cache_dir, &mut self.out, &mut self.prompts].into_iter().flatten() {
            fix(p);
        }
        if let Some(p) = self.provider.as_mut().and_then(|s| s.path.as_mut()) {
            fix(p);
        }
        if let Some(p) = self.captioner.as_mut().and_then(|s| s.path.as_mut()) {
            fix(p);
        }
    }

    /// Fields set in `over` replace those in `self`.
    pub fn merge(self, over: ConfigLayer) -> ConfigLayer {
        ConfigLayer {
            manifest: over.manifest.or(self.manifest),
            strategy: over.strategy.or(self.strategy),
            k: over.k.or(self.k),
            seed: over.seed.or(self.seed),
            cache_dir: over.cache_dir.or(self.cache_dir),
            no_cache: over.no_cache.or(self.no_cache),
            out: over.out.or(self.out),
            jobs: over.jobs.or(self.jobs),
            fail_soft: over.fail_soft.or(self.fail_soft),
            prompts: over.prompts.or(self.prompts),
            provider: over.provider.or(self.provider),
            captioner: over.captioner.or(self.captioner),
        }
    }

    pub fn resolve(self) -> Result<RunConfig, ConfigError> {
        let manifest = self.manifest.ok_or_else(|| ConfigError::Invalid("no manifest given (--manifest)".into()))?;
        let k = self.k.unwrap_or(DEFAULT_K);
        if k == 0 {
            return Err(ConfigError::Invalid("k must be at least 1".into()));
        }
        let seed = self.seed.unwrap_or(0);
        let strategy = self.strategy.unwrap_or(StrategyName::Base);
        if strategy == StrategyName::File && self.prompts.is_none() {
            return Err(ConfigError::Invalid("strategy file needs a prompts file (--prompts)".into()));
        }
        let provider = self
            .provider
            .map(|mut p| {
                // Synthetic providers fall back to the run seed.
                if matches!(p.kind, crate::provider::ProviderKind::SyntheticHash | crate::provider::ProviderKind::SyntheticRandom) {
                    p.seed.get_or_insert(seed);
                }
                p
            })
            .ok_or_else(|| ConfigError::Invalid("no embedding provider given (--provider)".into()))?;
        provider.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        if let Some(c) = &self.captioner {
            c.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        }
        let jobs = match self.jobs {
            Some(0) => return Err(ConfigError::Invalid("jobs must be at least 1".into())),
            Some(j) => j,
            None => std::thread::available_parallelism().map_or(1, |n| n.get()),
        };
        let cache_dir = if self.no_cache.unwrap_or(false) {
            None
        } else {
            Some(self.cache_dir.unwrap_or_else(|| DEFAULT_CACHE_DIR.into()))
        };
        Ok(RunConfig {
            manifest,
            strategy,
            k,
            seed,
            provider,
            captioner: self.captioner,
            cache_dir,
            out: self.out.unwrap_or_else(|| DEFAULT_OUT.into()),
            jobs,
            fail_soft: self.fail_soft.unwrap_or(false),
            prompts: self.prompts,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub manifest: PathBuf,
    pub strategy: StrategyName,
    pub k: usize,
    pub seed: u64,
    pub provider: EmbeddingProviderSpec,
    pub captioner: Option<CaptionerSpec>,
    /// `None` disables caching.
    pub cache_dir: Option<PathBuf>,
    pub out: PathBuf,
    pub jobs: usize,
    pub fail_soft: bool,
    pub prompts: Option<PathBuf>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::provider::ProviderKind;

    const FILE: &str = r#"
manifest = "data/compun.json"
strategy = "ensemble"
k = 3
provider.kind = "synthetic-hash"
provider.dim = 32
captioner.kind = "file"
captioner.path = "captions.json"
"#;

    #[test]
    fn file_then_flags() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.toml");
        std::fs::write(&path, FILE).unwrap();
        let file = ConfigLayer::load(&path).unwrap();
        assert_eq!(file.manifest.as_deref(), Some(dir.path().join("data/compun.json").as_path()));
        assert_eq!(file.captioner.as_ref().unwrap().path.as_deref(), Some(dir.path().join("captions.json").as_path()));

        let flags = ConfigLayer { k: Some(7), seed: Some(9), jobs: Some(2), ..Default::default() };
        let cfg = file.merge(flags).resolve().unwrap();
        assert_eq!((cfg.k, cfg.seed, cfg.jobs, cfg.strategy), (7, 9, 2, StrategyName::Ensemble));
        assert_eq!((cfg.provider.kind, cfg.provider.seed), (ProviderKind::SyntheticHash, Some(9)));
        assert_eq!(cfg.cache_dir.as_deref(), Some(Path::new(DEFAULT_CACHE_DIR)));
    }

    #[test]
    fn invalid_configs() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.toml");
        std::fs::write(&path, "manifest = \"m.json\"\nbogus = 1\n").unwrap();
        assert!(matches!(ConfigLayer::load(&path), Err(ConfigError::Parse { .. })));

        let base = ConfigLayer { manifest: Some("m.json".into()), provider: Some("synthetic-hash:dim=4".parse().unwrap()), ..Default::default() };
        assert!(base.clone().resolve().is_ok());
        assert!(ConfigLayer { k: Some(0), ..base.clone() }.resolve().is_err());
        assert!(ConfigLayer { jobs: Some(0), ..base.clone() }.resolve().is_err());
        assert!(ConfigLayer { strategy: Some(StrategyName::File), ..base.clone() }.resolve().is_err());
        assert!(ConfigLayer { manifest: None, ..base.clone() }.resolve().is_err());
        assert!(ConfigLayer { provider: Some("http:dim=4".parse().unwrap()), ..base }.resolve().is_err());
    }
}
