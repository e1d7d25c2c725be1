//! JSON manifest reading and writing.

use capens_core::manifest::{
    validate_manifest, RULE_DUPLICATE_IMAGE, RULE_DUPLICATE_INSTANCE, RULE_DUPLICATE_NEGATIVE, RULE_POSITIVE_IN_NEGATIVES,
};
use capens_core::{BenchmarkInstance, BenchmarkManifest, Category, CompoundNoun, ImageRef};
use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error)]
pub enum ManifestError {
    #[error("malformed JSON: {0}")]
    MalformedJson(#[source] serde_json::Error),
    #[error("schema violation at {path}: {message}")]
    SchemaViolation { path: String, message: String },
    #[error("duplicate id {0:?}")]
    DuplicateId(String),
    #[error("instance {0:?} must have exactly 2 negatives")]
    BadNegativeCount(String),
    #[error("invalid manifest: {0}")]
    Invalid(String),
    #[error("reading {path}: {source}")]
    Io { path: String, source: std::io::Error },
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ManifestDoc {
    name: String,
    version: String,
    instances: Vec<InstanceDoc>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct InstanceDoc {
    id: String,
    compound_noun: String,
    #[serde(default)]
    category: Option<Category>,
    positive: ImageDoc,
    negatives: Vec<ImageDoc>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ImageDoc {
    id: String,
    uri: String,
    #[serde(default)]
    sha256: Option<String>,
}

impl From<ImageDoc> for ImageRef {
    fn from(d: ImageDoc) -> Self {
        ImageRef { id: d.id, uri: d.uri, content_hash: d.sha256 }
    }
}

impl From<&ImageRef> for ImageDoc {
    fn from(r: &ImageRef) -> Self {
        ImageDoc { id: r.id.clone(), uri: r.uri.clone(), sha256: r.content_hash.clone() }
    }
}

/// Parses and validates a manifest document.
pub fn parse_manifest(raw: &[u8]) -> Result<BenchmarkManifest, ManifestError> {
    let value: serde_json::Value = serde_json::from_slice(raw).map_err(ManifestError::MalformedJson)?;
    let doc: ManifestDoc = serde_path_to_error::deserialize(value).map_err(|e| ManifestError::SchemaViolation {
        path: e.path().to_string(),
        message: e.inner().to_string(),
    })?;

    let mut instances = Vec::with_capacity(doc.instances.len());
    for (i, inst) in doc.instances.into_iter().enumerate() {
        let compound_noun = CompoundNoun::new(&inst.compound_noun).map_err(|e| ManifestError::SchemaViolation {
            path: format!("instances[{i}].compound_noun"),
            message: e.to_string(),
        })?;
        let negatives: [ImageDoc; 2] = inst.negatives.try_into().map_err(|_| ManifestError::BadNegativeCount(inst.id.clone()))?;
        instances.push(BenchmarkInstance {
            id: inst.id,
            compound_noun,
            positive: inst.positive.into(),
            negatives: negatives.map(ImageRef::from),
            category: inst.category.unwrap_or(Category::Unlabeled),
        });
    }
    let manifest = BenchmarkManifest { name: doc.name, version: doc.version, instances };

    if let Some(v) = validate_manifest(&manifest).violations.into_iter().next() {
        return Err(match (v.rule, v.subject) {
            (RULE_DUPLICATE_INSTANCE | RULE_DUPLICATE_IMAGE | RULE_POSITIVE_IN_NEGATIVES | RULE_DUPLICATE_NEGATIVE, Some(id)) => {
                ManifestError::DuplicateId(id)
            }
            _ => ManifestError::Invalid(format!("{}: {}", v.instance_id.unwrap_or_default(), v.detail)),
        });
    }
    Ok(manifest)
}

pub fn read_manifest(path: &std::path::Path) -> Result<BenchmarkManifest, ManifestError> {
    let raw = std::fs::read(path).map_err(|source| ManifestError::Io { path: path.display().to_string(), source })?;
    parse_manifest(&raw)
}

/// Serializes a manifest in the schema accepted by [`parse_manifest`].
pub fn serialize_manifest(m: &BenchmarkManifest) -> String {
    let doc = ManifestDoc {
        name: m.name.clone(),
        version: m.version.clone(),
        instances: m
            .instances
            .iter()
            .map(|i| InstanceDoc {
                id: i.id.clone(),
                compound_noun: i.compound_noun.text().to_string(),
                category: (i.category != Category::Unlabeled).then_some(i.category),
                positive: (&i.positive).into(),
                negatives: i.negatives.iter().map(ImageDoc::from).collect(),
            })
            .collect(),
    };
    serde_json::to_string_pretty(&doc).expect("manifest serializes")
}
