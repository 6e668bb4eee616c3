//! On-disk response cache: one JSON file per key. Replaying a warm cache
//! reproduces a run without touching the network.

use std::fs;
use std::io::ErrorKind;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::BackendError;
use crate::io::write_atomic;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CacheEntry {
    pub key: Vec<String>,
    pub body: String,
}

#[derive(Debug, Clone)]
pub struct ResponseCache {
    dir: PathBuf,
}

pub fn sha256_hex(data: &str) -> String {
    let digest = Sha256::digest(data.as_bytes());
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

impl ResponseCache {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        Self { dir: dir.into() }
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    /// Path of the entry for `key` under `namespace`.
    pub fn path_for(&self, namespace: &str, key: &[String]) -> PathBuf {
        let name = sha256_hex(&key.join("\u{1f}"));
        self.dir.join(namespace).join(format!("{name}.json"))
    }

    pub fn get(&self, namespace: &str, key: &[String]) -> Result<Option<String>, BackendError> {
        let path = self.path_for(namespace, key);
        let bytes = match fs::read(&path) {
            Ok(b) => b,
            Err(e) if e.kind() == ErrorKind::NotFound => return Ok(None),
            Err(e) => return Err(corrupt(&path, e.to_string())),
        };
        let entry: CacheEntry =
            serde_json::from_slice(&bytes).map_err(|e| corrupt(&path, e.to_string()))?;
        if entry.key != key {
            return Err(corrupt(&path, "stored key does not match".into()));
        }
        Ok(Some(entry.body))
    }

    /// Concurrent writers of the same key store identical content; the last
    /// rename wins.
    pub fn put(&self, namespace: &str, key: &[String], body: &str) -> Result<(), BackendError> {
        let path = self.path_for(namespace, key);
        let entry = CacheEntry {
            key: key.to_vec(),
            body: body.to_owned(),
        };
        let bytes = serde_json::to_vec(&entry).expect("cache entry serializes");
        write_atomic(&path, &bytes)
            .map_err(|e| BackendError::Io(format!("{}: {e}", path.display())))
    }

    /// Returns the cached body, or computes, stores, and returns it.
    pub fn get_or_insert_with(
        &self,
        namespace: &str,
        key: &[String],
        fetch: impl FnOnce() -> Result<String, BackendError>,
    ) -> Result<String, BackendError> {
        if let Some(body) = self.get(namespace, key)? {
            return Ok(body);
        }
        let body = fetch()?;
        self.put(namespace, key, &body)?;
        Ok(body)
    }
}

fn corrupt(path: &Path, message: String) -> BackendError {
    BackendError::CacheCorrupt {
        path: path.to_path_buf(),
        message,
    }
}

/// Looks up through an optional cache.
pub fn cached(
    cache: Option<&ResponseCache>,
    namespace: &str,
    key: &[String],
    fetch: impl FnOnce() -> Result<String, BackendError>,
) -> Result<String, BackendError> {
    match cache {
        Some(c) => c.get_or_insert_with(namespace, key, fetch),
        None => fetch(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn key(parts: &[&str]) -> Vec<String> {
        parts.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn miss_then_hit() {
        let dir = tempfile::tempdir().unwrap();
        let cache = ResponseCache::new(dir.path());
        let k = key(&["m", "cot", "abc", "0"]);
        assert_eq!(cache.get("llm", &k).unwrap(), None);
        let mut calls = 0;
        for _ in 0..3 {
            let body = cache
                .get_or_insert_with("llm", &k, || {
                    calls += 1;
                    Ok("reply".into())
                })
                .unwrap();
            assert_eq!(body, "reply");
        }
        assert_eq!(calls, 1);
    }

    #[test]
    fn unreadable_entry_is_corrupt() {
        let dir = tempfile::tempdir().unwrap();
        let cache = ResponseCache::new(dir.path());
        let k = key(&["x"]);
        let path = cache.path_for("llm", &k);
        fs::create_dir_all(path.parent().unwrap()).unwrap();
        fs::write(&path, "{truncated").unwrap();
        assert!(matches!(
            cache.get("llm", &k),
            Err(BackendError::CacheCorrupt { .. })
        ));
    }

    #[test]
    fn fetch_error_is_not_cached() {
        let dir = tempfile::tempdir().unwrap();
        let cache = ResponseCache::new(dir.path());
        let k = key(&["y"]);
        let r = cache.get_or_insert_with("ns", &k, || Err(BackendError::Io("down".into())));
        assert!(r.is_err());
        assert_eq!(cache.get("ns", &k).unwrap(), None);
    }

    #[test]
    fn digest_is_stable() {
        assert_eq!(
            sha256_hex("abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }
}
