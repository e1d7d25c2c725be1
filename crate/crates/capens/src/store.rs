//! Precomputed embeddings in a JSON Lines file.
//!
//! One record per line:
//! `{"ns": "text"|"image", "model": str, "key": str, "dim": int, "v": [floats]}`.
//! Text records are keyed by the exact prompt text, image records by the hex
//! SHA-256 of the image bytes (or, failing that, the image id).

use std::collections::HashMap;
use std::io::{BufRead, BufReader};
use std::path::Path;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StoreNamespace {
    Text,
    Image,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StoreRecord {
    pub ns: StoreNamespace,
    pub model: String,
    pub key: String,
    pub dim: usize,
    pub v: Vec<f64>,
}

#[derive(Debug, thiserror::Error)]
pub enum StoreError {
    #[error("reading {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{path}:{line}: {detail}")]
    BadRecord { path: String, line: usize, detail: String },
    #[error("{path}:{line}: record has dim {got}, provider expects {expected}")]
    DimMismatch { path: String, line: usize, expected: usize, got: usize },
}

#[derive(Debug, Clone, Default)]
pub struct FileStore {
    entries: HashMap<(StoreNamespace, String), Vec<f64>>,
}

impl FileStore {
    /// Loads records for `model`; records of other models are skipped.
    pub fn load(path: &Path, model: &str, dim: usize) -> Result<Self, StoreError> {
        let p = path.display().to_string();
        let file = std::fs::File::open(path).map_err(|source| StoreError::Io { path: p.clone(), source })?;
        let mut entries = HashMap::new();
        for (i, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|source| StoreError::Io { path: p.clone(), source })?;
            if line.trim().is_empty() {
                continue;
            }
            let bad = |detail: String| StoreError::BadRecord { path: p.clone(), line: i + 1, detail };
            let rec: StoreRecord = serde_json::from_str(&line).map_err(|e| bad(e.to_string()))?;
            if rec.model != model {
                continue;
            }
            if rec.v.len() != rec.dim {
                return Err(bad(format!("dim field {} but {} values", rec.dim, rec.v.len())));
            }
            if rec.dim != dim {
                return Err(StoreError::DimMismatch { path: p.clone(), line: i + 1, expected: dim, got: rec.dim });
            }
            if rec.v.iter().any(|x| !x.is_finite()) {
                return Err(bad("non-finite value".into()));
            }
            entries.insert((rec.ns, rec.key), rec.v);
        }
        Ok(Self { entries })
    }

    pub fn get(&self, ns: StoreNamespace, key: &str) -> Option<&[f64]> {
        self.entries.get(&(ns, key.to_string())).map(Vec::as_slice)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write(lines: &[&str]) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        for l in lines {
            writeln!(f, "{l}").unwrap();
        }
        f
    }

    #[test]
    fn loads_matching_model_only() {
        let f = write(&[
            r#"{"ns":"text","model":"clip","key":"A photo of a snow ball","dim":2,"v":[0.5,0.5]}"#,
            r#"{"ns":"image","model":"clip","key":"abc","dim":2,"v":[1,0]}"#,
            "",
            r#"{"ns":"image","model":"other","key":"abc","dim":3,"v":[1,0,0]}"#,
        ]);
        let s = FileStore::load(f.path(), "clip", 2).unwrap();
        assert_eq!(s.len(), 2);
        assert_eq!(s.get(StoreNamespace::Image, "abc"), Some(&[1.0, 0.0][..]));
        assert_eq!(s.get(StoreNamespace::Text, "abc"), None);
    }

    #[test]
    fn rejects_bad_records() {
        let f = write(&[r#"{"ns":"text","model":"clip","key":"k","dim":3,"v":[1,2]}"#]);
        assert!(matches!(FileStore::load(f.path(), "clip", 3), Err(StoreError::BadRecord { line: 1, .. })));
        let f = write(&[r#"{"ns":"text","model":"clip","key":"k","dim":2,"v":[1,2]}"#]);
        assert!(matches!(FileStore::load(f.path(), "clip", 4), Err(StoreError::DimMismatch { expected: 4, got: 2, .. })));
        let f = write(&["not json"]);
        assert!(matches!(FileStore::load(f.path(), "clip", 2), Err(StoreError::BadRecord { .. })));
    }
}
