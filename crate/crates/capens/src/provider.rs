//! Embedding providers: file store, HTTP service, and synthetic generators,
//! all written through the disk cache.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;

use base64::Engine;
use capens_core::digest::sha256_hex;
use capens_core::eval::Embedder;
use capens_core::synthetic::{Namespace, SyntheticEmbedder, SyntheticKind};
use capens_core::{EmbeddingVector, ImageRef};
use serde::{Deserialize, Serialize};

use crate::cache::{CacheKey, CacheNamespace, DiskCache};
use crate::http::{join_url, HttpClient, HttpError};
use crate::store::{FileStore, StoreNamespace};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProviderKind {
    FileStore,
    Http,
    SyntheticRandom,
    SyntheticHash,
}

impl ProviderKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ProviderKind::FileStore => "file-store",
            ProviderKind::Http => "http",
            ProviderKind::SyntheticRandom => "synthetic-random",
            ProviderKind::SyntheticHash => "synthetic-hash",
        }
    }
}

impl FromStr for ProviderKind {
    type Err = ProviderError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s {
            "file-store" => ProviderKind::FileStore,
            "http" => ProviderKind::Http,
            "synthetic-random" => ProviderKind::SyntheticRandom,
            "synthetic-hash" => ProviderKind::SyntheticHash,
            other => return Err(ProviderError::InvalidSpec(format!("unknown provider kind {other:?}"))),
        })
    }
}

/// How to obtain embeddings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EmbeddingProviderSpec {
    pub kind: ProviderKind,
    /// Base URL of the embedding service (`http`).
    #[serde(default)]
    pub endpoint: Option<String>,
    /// JSON Lines store (`file-store`).
    #[serde(default)]
    pub path: Option<PathBuf>,
    #[serde(rename = "model", default = "default_model")]
    pub model_id: String,
    pub dim: usize,
    /// Required by the synthetic kinds.
    #[serde(default)]
    pub seed: Option<u64>,
}

fn default_model() -> String {
    "default".into()
}

impl EmbeddingProviderSpec {
    pub fn synthetic(kind: SyntheticKind, seed: u64, dim: usize) -> Self {
        let kind = match kind {
            SyntheticKind::Hash => ProviderKind::SyntheticHash,
            SyntheticKind::Random => ProviderKind::SyntheticRandom,
        };
        Self { kind, endpoint: None, path: None, model_id: "synthetic".into(), dim, seed: Some(seed) }
    }

    pub fn validate(&self) -> Result<(), ProviderError> {
        let fail = |m: &str| Err(ProviderError::InvalidSpec(format!("{}: {m}", self.kind.as_str())));
        if self.dim == 0 {
            return fail("dim must be positive");
        }
        match self.kind {
            ProviderKind::Http if self.endpoint.is_none() => fail("endpoint is required"),
            ProviderKind::FileStore if self.path.is_none() => fail("path is required"),
            ProviderKind::SyntheticHash | ProviderKind::SyntheticRandom if self.seed.is_none() => fail("seed is required"),
            _ => Ok(()),
        }
    }
}

/// Parses `kind[:key=value,...]`, e.g. `synthetic-hash:dim=64,seed=7`.
impl FromStr for EmbeddingProviderSpec {
    type Err = ProviderError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (kind, rest) = s.split_once(':').unwrap_or((s, ""));
        let mut spec = EmbeddingProviderSpec {
            kind: kind.trim().parse()?,
            endpoint: None,
            path: None,
            model_id: default_model(),
            dim: 0,
            seed: None,
        };
        for (key, value) in parse_pairs(rest).map_err(ProviderError::InvalidSpec)? {
            let bad = |e: &dyn fmt::Display| ProviderError::InvalidSpec(format!("{key}={value}: {e}"));
            match key {
                "endpoint" => spec.endpoint = Some(value.into()),
                "path" => spec.path = Some(value.into()),
                "model" => spec.model_id = value.into(),
                "dim" => spec.dim = value.parse().map_err(|e| bad(&e))?,
                "seed" => spec.seed = Some(value.parse().map_err(|e| bad(&e))?),
                _ => return Err(ProviderError::InvalidSpec(format!("unknown provider option {key:?}"))),
            }
        }
        Ok(spec)
    }
}

/// Splits `a=1,b=2`. Values may contain `:` (URLs) but not `,`.
pub(crate) fn parse_pairs(s: &str) -> Result<Vec<(&str, &str)>, String> {
    s.split(',')
        .map(str::trim)
        .filter(|p| !p.is_empty())
        .map(|p| p.split_once('=').map(|(k, v)| (k.trim(), v.trim())).ok_or_else(|| format!("expected key=value, got {p:?}")))
        .collect()
}

#[derive(Debug, thiserror::Error)]
pub enum ProviderError {
    #[error("provider unavailable: {0}")]
    ProviderUnavailable(String),
    #[error("no stored embedding for {0:?}")]
    MissingEmbedding(String),
    #[error("provider returned dim {got}, expected {expected}")]
    DimMismatch { expected: usize, got: usize },
    #[error("invalid provider spec: {0}")]
    InvalidSpec(String),
    #[error("provider returned an invalid vector: {0}")]
    BadVector(String),
}

impl From<HttpError> for ProviderError {
    fn from(e: HttpError) -> Self {
        ProviderError::ProviderUnavailable(e.to_string())
    }
}

/// Reads image bytes from local paths (relative to a base directory),
/// `file://` URIs, or `http(s)://` URLs.
#[derive(Debug, Clone)]
pub struct ImageLoader {
    base_dir: PathBuf,
    http: HttpClient,
}

impl ImageLoader {
    pub fn new(base_dir: impl Into<PathBuf>, http: HttpClient) -> Self {
        Self { base_dir: base_dir.into(), http }
    }

    pub fn read(&self, uri: &str) -> Result<Vec<u8>, ProviderError> {
        if uri.starts_with("http://") || uri.starts_with("https://") {
            return self.http.get_bytes(uri).map_err(|e| ProviderError::ProviderUnavailable(format!("image {uri}: {e}")));
        }
        let path = Path::new(uri.strip_prefix("file://").unwrap_or(uri));
        let path = if path.is_absolute() { path.to_path_buf() } else { self.base_dir.join(path) };
        std::fs::read(&path).map_err(|e| ProviderError::ProviderUnavailable(format!("image {uri}: {e}")))
    }

    /// The manifest digest when present, otherwise SHA-256 of the bytes.
    pub fn digest(&self, image: &ImageRef) -> Result<String, ProviderError> {
        match &image.content_hash {
            Some(h) => Ok(h.clone()),
            None => Ok(sha256_hex(&self.read(&image.uri)?)),
        }
    }
}

#[derive(Debug, Serialize)]
struct TextRequest<'a> {
    model: &'a str,
    texts: &'a [String],
}

#[derive(Debug, Serialize)]
struct ImageRequest<'a> {
    model: &'a str,
    images_b64: Vec<String>,
}

#[derive(Debug, Deserialize)]
pub struct EmbedResponse {
    pub model: String,
    pub dim: usize,
    pub embeddings: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Eq, Deserialize)]
pub struct Health {
    pub status: String,
    pub model: String,
    pub dim: usize,
}

/// Client for the `/v1/embed/*` service.
#[derive(Debug, Clone)]
pub struct HttpEmbedClient {
    endpoint: String,
    model: String,
    dim: usize,
    http: HttpClient,
    batch: usize,
}

impl HttpEmbedClient {
    pub fn new(endpoint: &str, model: &str, dim: usize, http: HttpClient) -> Self {
        Self { endpoint: endpoint.into(), model: model.into(), dim, http, batch: 64 }
    }

    pub fn health(&self) -> Result<Health, ProviderError> {
        let h: Health = self.http.get_json(&join_url(&self.endpoint, "/v1/health"))?;
        if h.dim != self.dim {
            return Err(ProviderError::DimMismatch { expected: self.dim, got: h.dim });
        }
        Ok(h)
    }

    pub fn embed_texts(&self, texts: &[String]) -> Result<Vec<Vec<f64>>, ProviderError> {
        let url = join_url(&self.endpoint, "/v1/embed/text");
        let mut out = Vec::with_capacity(texts.len());
        for chunk in texts.chunks(self.batch) {
            let resp: EmbedResponse = self.http.post_json(&url, &TextRequest { model: &self.model, texts: chunk })?;
            out.extend(self.check(resp, chunk.len())?);
        }
        Ok(out)
    }

    pub fn embed_images(&self, images: &[Vec<u8>]) -> Result<Vec<Vec<f64>>, ProviderError> {
        let url = join_url(&self.endpoint, "/v1/embed/image");
        let engine = base64::engine::general_purpose::STANDARD;
        let mut out = Vec::with_capacity(images.len());
        for chunk in images.chunks(self.batch) {
            let body = ImageRequest { model: &self.model, images_b64: chunk.iter().map(|b| engine.encode(b)).collect() };
            let resp: EmbedResponse = self.http.post_json(&url, &body)?;
            out.extend(self.check(resp, chunk.len())?);
        }
        Ok(out)
    }

    fn check(&self, resp: EmbedResponse, want: usize) -> Result<Vec<Vec<f64>>, ProviderError> {
        if resp.embeddings.len() != want {
            return Err(ProviderError::ProviderUnavailable(format!(
                "service returned {} embeddings for {want} inputs",
                resp.embeddings.len()
            )));
        }
        if resp.dim != self.dim {
            return Err(ProviderError::DimMismatch { expected: self.dim, got: resp.dim });
        }
        if let Some(bad) = resp.embeddings.iter().find(|e| e.len() != self.dim) {
            return Err(ProviderError::DimMismatch { expected: self.dim, got: bad.len() });
        }
        Ok(resp.embeddings)
    }
}

#[derive(Debug)]
enum Backend {
    FileStore(FileStore),
    Http(HttpEmbedClient),
    Synthetic(SyntheticEmbedder),
}

/// A configured embedding source with write-through caching.
#[derive(Debug)]
pub struct Provider {
    spec: EmbeddingProviderSpec,
    backend: Backend,
    cache: Option<Arc<DiskCache>>,
    images: ImageLoader,
}

impl Provider {
    /// `base_dir` resolves relative image paths (normally the manifest's directory).
    pub fn open(
        spec: EmbeddingProviderSpec,
        cache: Option<Arc<DiskCache>>,
        base_dir: impl Into<PathBuf>,
        http: HttpClient,
    ) -> Result<Self, ProviderError> {
        spec.validate()?;
        let backend = match spec.kind {
            ProviderKind::FileStore => {
                let path = spec.path.as_deref().expect("validated");
                let store = FileStore::load(path, &spec.model_id, spec.dim)
                    .map_err(|e| ProviderError::ProviderUnavailable(e.to_string()))?;
                Backend::FileStore(store)
            }
            ProviderKind::Http => {
                let endpoint = spec.endpoint.as_deref().expect("validated");
                Backend::Http(HttpEmbedClient::new(endpoint, &spec.model_id, spec.dim, http.clone()))
            }
            ProviderKind::SyntheticHash | ProviderKind::SyntheticRandom => {
                let kind = if spec.kind == ProviderKind::SyntheticHash { SyntheticKind::Hash } else { SyntheticKind::Random };
                Backend::Synthetic(SyntheticEmbedder::new(kind, spec.seed.expect("validated"), spec.dim, spec.model_id.clone()))
            }
        };
        Ok(Self { spec, backend, cache, images: ImageLoader::new(base_dir, http) })
    }

    pub fn spec(&self) -> &EmbeddingProviderSpec {
        &self.spec
    }

    pub fn health(&self) -> Result<Health, ProviderError> {
        match &self.backend {
            Backend::Http(c) => c.health(),
            _ => Ok(Health { status: "ok".into(), model: self.spec.model_id.clone(), dim: self.spec.dim }),
        }
    }

    /// Cache scope: synthetic vectors depend on the seed as well as the model.
    fn cache_provider_id(&self) -> String {
        match self.spec.seed {
            Some(seed) if matches!(self.backend, Backend::Synthetic(_)) => format!("{}/seed={seed}", self.spec.kind.as_str()),
            _ => self.spec.kind.as_str().to_string(),
        }
    }

    fn to_vector(&self, values: Vec<f64>) -> Result<EmbeddingVector, ProviderError> {
        if values.len() != self.spec.dim {
            return Err(ProviderError::DimMismatch { expected: self.spec.dim, got: values.len() });
        }
        EmbeddingVector::new(self.spec.model_id.clone(), values).map_err(|e| ProviderError::BadVector(e.to_string()))
    }

    /// Fills cache misses with `compute` (called once, with the miss indices).
    fn cached<F>(&self, keys: Vec<CacheKey>, compute: F) -> Result<Vec<EmbeddingVector>, ProviderError>
    where
        F: FnOnce(&[usize]) -> Result<Vec<EmbeddingVector>, ProviderError>,
    {
        let mut out: Vec<Option<EmbeddingVector>> = match &self.cache {
            Some(c) => keys.iter().map(|k| c.lookup::<EmbeddingVector>(k).filter(|v| v.dim() == self.spec.dim)).collect(),
            None => vec![None; keys.len()],
        };
        let misses: Vec<usize> = (0..keys.len()).filter(|&i| out[i].is_none()).collect();
        if !misses.is_empty() {
            let fresh = compute(&misses)?;
            debug_assert_eq!(fresh.len(), misses.len());
            for (&i, v) in misses.iter().zip(fresh) {
                if let Some(c) = &self.cache {
                    if let Err(e) = c.store(&keys[i], &v) {
                        log::warn!("cache store failed: {e}");
                    }
                }
                out[i] = Some(v);
            }
        }
        Ok(out.into_iter().map(|v| v.expect("filled")).collect())
    }
}

impl Embedder for Provider {
    type Error = ProviderError;

    fn provider_id(&self) -> &str {
        self.spec.kind.as_str()
    }

    fn model_id(&self) -> &str {
        &self.spec.model_id
    }

    fn dim(&self) -> usize {
        self.spec.dim
    }

    fn embed_texts(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>, ProviderError> {
        let scope = self.cache_provider_id();
        let keys = texts
            .iter()
            .map(|t| CacheKey::new(CacheNamespace::TextEmbedding, &scope, &self.spec.model_id, t.as_bytes()))
            .collect();
        self.cached(keys, |misses| match &self.backend {
            Backend::Synthetic(s) => Ok(misses.iter().map(|&i| s.embed_key(Namespace::Text, texts[i].as_bytes())).collect()),
            Backend::FileStore(store) => misses
                .iter()
                .map(|&i| {
                    let v = store.get(StoreNamespace::Text, &texts[i]).ok_or_else(|| ProviderError::MissingEmbedding(texts[i].clone()))?;
                    self.to_vector(v.to_vec())
                })
                .collect(),
            Backend::Http(client) => {
                let batch: Vec<String> = misses.iter().map(|&i| texts[i].clone()).collect();
                client.embed_texts(&batch)?.into_iter().map(|v| self.to_vector(v)).collect()
            }
        })
    }

    fn embed_images(&self, images: &[ImageRef]) -> Result<Vec<EmbeddingVector>, ProviderError> {
        let scope = self.cache_provider_id();
        let random = matches!(&self.backend, Backend::Synthetic(s) if s.kind() == SyntheticKind::Random);
        let digests: Vec<String> = images
            .iter()
            .map(|img| if random { Ok(sha256_hex(img.id.as_bytes())) } else { self.images.digest(img) })
            .collect::<Result<_, _>>()?;
        let keys = digests
            .iter()
            .map(|d| CacheKey {
                namespace: CacheNamespace::ImageEmbedding,
                provider_id: scope.clone(),
                model_id: self.spec.model_id.clone(),
                payload_digest: d.clone(),
            })
            .collect();
        self.cached(keys, |misses| match &self.backend {
            Backend::Synthetic(s) => Ok(misses
                .iter()
                .map(|&i| {
                    let key = if random { images[i].id.as_str() } else { digests[i].as_str() };
                    s.embed_key(Namespace::Image, key.as_bytes())
                })
                .collect()),
            Backend::FileStore(store) => misses
                .iter()
                .map(|&i| {
                    let v = store
                        .get(StoreNamespace::Image, &digests[i])
                        .or_else(|| store.get(StoreNamespace::Image, &images[i].id))
                        .ok_or_else(|| ProviderError::MissingEmbedding(images[i].id.clone()))?;
                    self.to_vector(v.to_vec())
                })
                .collect(),
            Backend::Http(client) => {
                let bytes = misses.iter().map(|&i| self.images.read(&images[i].uri)).collect::<Result<Vec<_>, _>>()?;
                client.embed_images(&bytes)?.into_iter().map(|v| self.to_vector(v)).collect()
            }
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spec_strings() {
        let s: EmbeddingProviderSpec = "synthetic-hash:dim=64,seed=7,model=toy".parse().unwrap();
        assert_eq!((s.kind, s.dim, s.seed, s.model_id.as_str()), (ProviderKind::SyntheticHash, 64, Some(7), "toy"));
        s.validate().unwrap();
        let h: EmbeddingProviderSpec = "http:endpoint=http://127.0.0.1:8080,dim=768,model=ViT-L-14".parse().unwrap();
        assert_eq!(h.endpoint.as_deref(), Some("http://127.0.0.1:8080"));
        h.validate().unwrap();
        assert!("bogus:dim=1".parse::<EmbeddingProviderSpec>().is_err());
        assert!("http:dim".parse::<EmbeddingProviderSpec>().is_err());
        assert!("synthetic-hash:dim=x".parse::<EmbeddingProviderSpec>().is_err());
    }

    #[test]
    fn spec_invariants() {
        let no_seed: EmbeddingProviderSpec = "synthetic-random:dim=8".parse().unwrap();
        assert!(no_seed.validate().is_err());
        let no_endpoint: EmbeddingProviderSpec = "http:dim=8".parse().unwrap();
        assert!(no_endpoint.validate().is_err());
        let no_path: EmbeddingProviderSpec = "file-store:dim=8".parse().unwrap();
        assert!(no_path.validate().is_err());
        let zero: EmbeddingProviderSpec = "synthetic-random:dim=0,seed=1".parse().unwrap();
        assert!(zero.validate().is_err());
    }

    #[test]
    fn spec_from_toml_table() {
        let s: EmbeddingProviderSpec = toml::from_str("kind = \"file-store\"\npath = \"emb.jsonl\"\nmodel = \"clip\"\ndim = 768\n").unwrap();
        assert_eq!(s.kind, ProviderKind::FileStore);
        assert_eq!(s.path.as_deref(), Some(Path::new("emb.jsonl")));
    }
}
