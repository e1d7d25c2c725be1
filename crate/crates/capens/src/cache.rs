//! Persistent content-addressed cache for embeddings and caption sets.
//!
//! Each entry is one JSON file holding the key, the serialized value, and the
//! SHA-256 of that serialized value. Entries that fail the checksum are
//! reported and treated as misses. Writes go through a temporary file and a
//! rename, so readers never observe a half-written entry.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, AtomicUsize, Ordering};

use capens_core::digest::{sha256_fields, sha256_hex, to_hex};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CacheNamespace {
    TextEmbedding,
    ImageEmbedding,
    Captions,
}

impl CacheNamespace {
    pub fn as_str(self) -> &'static str {
        match self {
            CacheNamespace::TextEmbedding => "text-embedding",
            CacheNamespace::ImageEmbedding => "image-embedding",
            CacheNamespace::Captions => "captions",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CacheKey {
    pub namespace: CacheNamespace,
    pub provider_id: String,
    pub model_id: String,
    /// Hex digest of the exact bytes sent to the provider.
    pub payload_digest: String,
}

impl CacheKey {
    pub fn new(namespace: CacheNamespace, provider_id: &str, model_id: &str, payload: &[u8]) -> Self {
        Self {
            namespace,
            provider_id: provider_id.into(),
            model_id: model_id.into(),
            payload_digest: sha256_hex(payload),
        }
    }

    fn file_name(&self) -> String {
        let d = sha256_fields(&[
            self.namespace.as_str().as_bytes(),
            self.provider_id.as_bytes(),
            self.model_id.as_bytes(),
            self.payload_digest.as_bytes(),
        ]);
        format!("{}.json", to_hex(&d))
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct Entry {
    key: CacheKey,
    checksum: String,
    value: String,
}

#[derive(Debug, thiserror::Error)]
pub enum CacheError {
    #[error("cache entry {0} is corrupt")]
    CacheCorrupt(PathBuf),
    #[error("cache io at {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("cache value does not serialize: {0}")]
    Serialize(#[from] serde_json::Error),
}

#[derive(Debug)]
pub struct DiskCache {
    root: PathBuf,
    corrupt: AtomicUsize,
    tmp_counter: AtomicU64,
}

impl DiskCache {
    pub fn open(root: impl Into<PathBuf>) -> Result<Self, CacheError> {
        let root = root.into();
        fs::create_dir_all(&root).map_err(|source| CacheError::Io { path: root.clone(), source })?;
        Ok(Self { root, corrupt: AtomicUsize::new(0), tmp_counter: AtomicU64::new(0) })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn path_for(&self, key: &CacheKey) -> PathBuf {
        self.root.join(key.namespace.as_str()).join(key.file_name())
    }

    /// Number of corrupt entries met so far.
    pub fn corrupt_entries(&self) -> usize {
        self.corrupt.load(Ordering::Relaxed)
    }

    /// `Ok(None)` on a miss. Corrupt entries are logged and count as misses.
    pub fn lookup<T: DeserializeOwned>(&self, key: &CacheKey) -> Option<T> {
        match self.try_lookup(key) {
            Ok(v) => v,
            Err(e) => {
                self.corrupt.fetch_add(1, Ordering::Relaxed);
                log::warn!("{e}; treating as a cache miss");
                None
            }
        }
    }

    fn try_lookup<T: DeserializeOwned>(&self, key: &CacheKey) -> Result<Option<T>, CacheError> {
        let path = self.path_for(key);
        let raw = match fs::read(&path) {
            Ok(raw) => raw,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(None),
            Err(source) => return Err(CacheError::Io { path, source }),
        };
        let corrupt = || CacheError::CacheCorrupt(path.clone());
        let entry: Entry = serde_json::from_slice(&raw).map_err(|_| corrupt())?;
        if entry.key != *key || sha256_hex(entry.value.as_bytes()) != entry.checksum {
            return Err(corrupt());
        }
        serde_json::from_str(&entry.value).map(Some).map_err(|_| corrupt())
    }

    pub fn store<T: Serialize>(&self, key: &CacheKey, value: &T) -> Result<(), CacheError> {
        let value = serde_json::to_string(value)?;
        let entry = Entry { key: key.clone(), checksum: sha256_hex(value.as_bytes()), value };
        let path = self.path_for(key);
        let dir = path.parent().expect("entry path has a parent");
        let io = |source| CacheError::Io { path: path.clone(), source };
        fs::create_dir_all(dir).map_err(io)?;
        let tmp = dir.join(format!(
            ".{}.{}.{}.tmp",
            key.file_name(),
            std::process::id(),
            self.tmp_counter.fetch_add(1, Ordering::Relaxed)
        ));
        let mut f = fs::File::create(&tmp).map_err(io)?;
        f.write_all(serde_json::to_string(&entry)?.as_bytes()).map_err(io)?;
        f.sync_all().map_err(io)?;
        drop(f);
        fs::rename(&tmp, &path).map_err(io)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn key(payload: &str) -> CacheKey {
        CacheKey::new(CacheNamespace::TextEmbedding, "synthetic-hash", "m", payload.as_bytes())
    }

    #[test]
    fn miss_then_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let cache = DiskCache::open(dir.path()).unwrap();
        assert_eq!(cache.lookup::<Vec<f64>>(&key("a")), None);
        let v = vec![0.1, -1.0 / 3.0, 1e-300, f64::MIN_POSITIVE, 0.7071067811865476];
        cache.store(&key("a"), &v).unwrap();
        let got: Vec<f64> = cache.lookup(&key("a")).unwrap();
        assert_eq!(got.iter().map(|x| x.to_bits()).collect::<Vec<_>>(), v.iter().map(|x| x.to_bits()).collect::<Vec<_>>());
        assert_eq!(cache.lookup::<Vec<f64>>(&key("b")), None);
    }

    #[test]
    fn corrupt_entry_is_a_miss_with_warning() {
        let dir = tempfile::tempdir().unwrap();
        let cache = DiskCache::open(dir.path()).unwrap();
        cache.store(&key("a"), &vec![1.0, 2.0]).unwrap();
        let path = cache.path_for(&key("a"));
        let tampered = fs::read_to_string(&path).unwrap().replace("[1.0,2.0]", "[1.0,2.5]");
        fs::write(&path, tampered).unwrap();
        assert_eq!(cache.lookup::<Vec<f64>>(&key("a")), None);
        assert_eq!(cache.corrupt_entries(), 1);

        fs::write(&path, b"\x00garbage").unwrap();
        assert_eq!(cache.lookup::<Vec<f64>>(&key("a")), None);
        assert_eq!(cache.corrupt_entries(), 2);

        // A fresh store repairs the entry.
        cache.store(&key("a"), &vec![3.0]).unwrap();
        assert_eq!(cache.lookup::<Vec<f64>>(&key("a")), Some(vec![3.0]));
    }

    #[test]
    fn keys_separate_providers_and_namespaces() {
        let dir = tempfile::tempdir().unwrap();
        let cache = DiskCache::open(dir.path()).unwrap();
        let a = key("x");
        let mut b = a.clone();
        b.provider_id = "http".into();
        let mut c = a.clone();
        c.namespace = CacheNamespace::ImageEmbedding;
        cache.store(&a, &1u32).unwrap();
        assert_eq!(cache.lookup::<u32>(&b), None);
        assert_eq!(cache.lookup::<u32>(&c), None);
        assert_eq!(cache.lookup::<u32>(&a), Some(1));
    }

    #[test]
    fn concurrent_writers_and_readers() {
        let dir = tempfile::tempdir().unwrap();
        let cache = DiskCache::open(dir.path()).unwrap();
        std::thread::scope(|s| {
            for t in 0..8 {
                let cache = &cache;
                s.spawn(move || {
                    for i in 0..50 {
                        let k = key(&format!("{}", i % 10));
                        cache.store(&k, &(i % 10)).unwrap();
                        let got: Option<i32> = cache.lookup(&k);
                        assert!(got.is_none_or(|g| g == i % 10), "thread {t}");
                    }
                });
            }
        });
        assert_eq!(cache.corrupt_entries(), 0);
    }
}
