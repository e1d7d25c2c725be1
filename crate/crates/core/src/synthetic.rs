//! Deterministic synthetic embeddings for tests and chance baselines.
//!
//! A vector is a standard-normal stream from ChaCha8 seeded by
//! `sha256(seed, namespace, key)`, then L2-normalized. The two kinds differ
//! only in what the key is for images: the content digest ([`SyntheticKind::Hash`])
//! or the image id ([`SyntheticKind::Random`]).

use alloc::string::String;
use alloc::vec::Vec;
use rand_chacha::ChaCha8Rng;
use rand_core::SeedableRng;
use rand_distr::{Distribution, StandardNormal};

use crate::digest::sha256_fields;
use crate::eval::Embedder;
use crate::manifest::ImageRef;
use crate::vector::{l2_normalize, EmbeddingVector};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SyntheticKind {
    /// Images keyed by their content digest, so identical bytes embed identically.
    Hash,
    /// Images keyed by id.
    Random,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Namespace {
    Text,
    Image,
}

impl Namespace {
    pub fn as_str(self) -> &'static str {
        match self {
            Namespace::Text => "text",
            Namespace::Image => "image",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SyntheticError {
    #[error("image {0:?} has no content hash; synthetic-hash needs the image digest")]
    MissingContentHash(String),
}

#[derive(Debug, Clone)]
pub struct SyntheticEmbedder {
    kind: SyntheticKind,
    seed: u64,
    dim: usize,
    model_id: String,
}

impl SyntheticEmbedder {
    /// Panics if `dim` is zero.
    pub fn new(kind: SyntheticKind, seed: u64, dim: usize, model_id: impl Into<String>) -> Self {
        assert!(dim > 0, "synthetic embedder needs a positive dimension");
        Self { kind, seed, dim, model_id: model_id.into() }
    }

    pub fn kind(&self) -> SyntheticKind {
        self.kind
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        Self { seed, ..self.clone() }
    }

    /// The vector for an arbitrary key in a namespace.
    pub fn embed_key(&self, ns: Namespace, key: &[u8]) -> EmbeddingVector {
        let seed = sha256_fields(&[&self.seed.to_le_bytes(), ns.as_str().as_bytes(), key]);
        let mut rng = ChaCha8Rng::from_seed(seed);
        loop {
            let values: Vec<f64> = (0..self.dim).map(|_| StandardNormal.sample(&mut rng)).collect();
            let raw = EmbeddingVector::new(self.model_id.clone(), values).expect("normal samples are finite");
            // An all-zero draw is impossible in practice; redraw rather than fail.
            if let Ok(v) = l2_normalize(&raw) {
                return v;
            }
        }
    }

    /// Key used for an image under this kind.
    pub fn image_key<'a>(&self, image: &'a ImageRef) -> Result<&'a str, SyntheticError> {
        match self.kind {
            SyntheticKind::Random => Ok(&image.id),
            SyntheticKind::Hash => {
                image.content_hash.as_deref().ok_or_else(|| SyntheticError::MissingContentHash(image.id.clone()))
            }
        }
    }
}

impl Embedder for SyntheticEmbedder {
    type Error = SyntheticError;

    fn provider_id(&self) -> &str {
        match self.kind {
            SyntheticKind::Hash => "synthetic-hash",
            SyntheticKind::Random => "synthetic-random",
        }
    }

    fn model_id(&self) -> &str {
        &self.model_id
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn embed_texts(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>, Self::Error> {
        Ok(texts.iter().map(|t| self.embed_key(Namespace::Text, t.as_bytes())).collect())
    }

    fn embed_images(&self, images: &[ImageRef]) -> Result<Vec<EmbeddingVector>, Self::Error> {
        images.iter().map(|img| Ok(self.embed_key(Namespace::Image, self.image_key(img)?.as_bytes()))).collect()
    }
}
