use std::collections::HashMap;
use std::fs;
use std::io::{self, ErrorKind};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::RwLock;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::BackendRequest;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CacheEntry {
    pub answer: String,
    pub backend_id: String,
    pub created_unix: u64,
}

/// Key-value store for backend answers. Concurrent writers of the same key
/// store identical answers, so last-writer-wins is sufficient.
pub trait ResponseCache: Send + Sync {
    fn get(&self, key: &str) -> io::Result<Option<CacheEntry>>;
    fn put(&self, key: &str, entry: &CacheEntry) -> io::Result<()>;
}

/// Hex SHA-256 of (model id, prompt, decode params). The pmid is not part of
/// the key, so identical abstracts share one entry.
pub fn cache_key(request: &BackendRequest) -> String {
    #[derive(Serialize)]
    struct KeyMaterial<'a> {
        model_id: &'a str,
        prompt: &'a str,
        temperature: f64,
        max_answer_length: u32,
    }
    let material = serde_json::to_vec(&KeyMaterial {
        model_id: &request.model_id,
        prompt: &request.prompt,
        temperature: request.decode_params.temperature,
        max_answer_length: request.decode_params.max_answer_length,
    })
    .expect("key material serializes");
    hex::encode(Sha256::digest(material))
}

pub(crate) fn unix_now() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

/// One JSON file per key under `<dir>/<first two hex digits>/<key>.json`.
#[derive(Debug, Clone)]
pub struct DiskCache {
    dir: PathBuf,
}

static TMP_COUNTER: AtomicU64 = AtomicU64::new(0);

impl DiskCache {
    pub fn open(dir: impl AsRef<Path>) -> io::Result<Self> {
        fs::create_dir_all(dir.as_ref())?;
        Ok(Self {
            dir: dir.as_ref().to_path_buf(),
        })
    }

    fn path(&self, key: &str) -> PathBuf {
        let shard = key.get(..2).unwrap_or("xx");
        self.dir.join(shard).join(format!("{key}.json"))
    }
}

impl ResponseCache for DiskCache {
    fn get(&self, key: &str) -> io::Result<Option<CacheEntry>> {
        match fs::read(self.path(key)) {
            Ok(bytes) => match serde_json::from_slice(&bytes) {
                Ok(entry) => Ok(Some(entry)),
                Err(e) => {
                    log::warn!("ignoring unreadable cache entry {key}: {e}");
                    Ok(None)
                }
            },
            Err(e) if e.kind() == ErrorKind::NotFound => Ok(None),
            Err(e) => Err(e),
        }
    }

    fn put(&self, key: &str, entry: &CacheEntry) -> io::Result<()> {
        let path = self.path(key);
        let parent = path.parent().expect("sharded path");
        fs::create_dir_all(parent)?;
        let tmp = parent.join(format!(
            ".{key}.{}.{}.tmp",
            std::process::id(),
            TMP_COUNTER.fetch_add(1, Ordering::Relaxed)
        ));
        fs::write(&tmp, serde_json::to_vec(entry).map_err(io::Error::other)?)?;
        fs::rename(&tmp, &path)
    }
}

#[derive(Debug, Default)]
pub struct MemoryCache {
    entries: RwLock<HashMap<String, CacheEntry>>,
}

impl ResponseCache for MemoryCache {
    fn get(&self, key: &str) -> io::Result<Option<CacheEntry>> {
        Ok(self.entries.read().unwrap().get(key).cloned())
    }

    fn put(&self, key: &str, entry: &CacheEntry) -> io::Result<()> {
        self.entries
            .write()
            .unwrap()
            .insert(key.to_string(), entry.clone());
        Ok(())
    }
}
