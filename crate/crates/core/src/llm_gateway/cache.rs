//! Completion cache keyed by `(model_name, prompt_hash)`.
//!
//! Entries live in memory and, when a directory is given, as one JSON file
//! per key so reruns skip the backend entirely. Reads take a shared lock;
//! inserts are serialized.

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Mutex, RwLock};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{Completion, Gateway, GatewayError};
use crate::prompt::prompt_hash;

#[derive(Debug, Serialize, Deserialize)]
struct CacheEntry {
    model_name: String,
    prompt_hash: String,
    raw_text: String,
}

pub struct CachedGateway<G> {
    inner: G,
    dir: Option<PathBuf>,
    entries: RwLock<HashMap<String, String>>,
    write_lock: Mutex<()>,
    hits: AtomicUsize,
    misses: AtomicUsize,
}

impl<G: Gateway> CachedGateway<G> {
    pub fn in_memory(inner: G) -> Self {
        CachedGateway {
            inner,
            dir: None,
            entries: RwLock::new(HashMap::new()),
            write_lock: Mutex::new(()),
            hits: AtomicUsize::new(0),
            misses: AtomicUsize::new(0),
        }
    }

    pub fn on_disk(inner: G, dir: impl AsRef<Path>) -> std::io::Result<Self> {
        fs::create_dir_all(dir.as_ref())?;
        Ok(CachedGateway {
            dir: Some(dir.as_ref().to_path_buf()),
            ..Self::in_memory(inner)
        })
    }

    pub fn hits(&self) -> usize {
        self.hits.load(Ordering::SeqCst)
    }

    pub fn misses(&self) -> usize {
        self.misses.load(Ordering::SeqCst)
    }

    pub fn inner(&self) -> &G {
        &self.inner
    }

    fn key(&self, hash: &str) -> String {
        let mut h = Sha256::new();
        h.update(self.inner.model_name().as_bytes());
        h.update([0u8]);
        h.update(hash.as_bytes());
        hex::encode(h.finalize())
    }

    fn read_disk(&self, key: &str) -> Option<String> {
        let path = self.dir.as_ref()?.join(format!("{key}.json"));
        let entry: CacheEntry = serde_json::from_str(&fs::read_to_string(path).ok()?).ok()?;
        (entry.model_name == self.inner.model_name()).then_some(entry.raw_text)
    }

    fn write_disk(&self, key: &str, hash: &str, text: &str) {
        let Some(dir) = &self.dir else { return };
        let entry = CacheEntry {
            model_name: self.inner.model_name().to_string(),
            prompt_hash: hash.to_string(),
            raw_text: text.to_string(),
        };
        let tmp = dir.join(format!("{key}.json.tmp"));
        let body = serde_json::to_string(&entry).expect("cache entry serializes");
        // A failed write only costs a future miss.
        if fs::write(&tmp, body).is_ok() {
            let _ = fs::rename(&tmp, dir.join(format!("{key}.json")));
        }
    }

    fn fetch_and_store(&self, prompt: &str, key: String, hash: &str) -> Result<Completion, GatewayError> {
        let completion = self.inner.complete_fresh(prompt)?;
        self.write_disk(&key, hash, &completion.raw_text);
        self.entries
            .write()
            .expect("cache lock poisoned")
            .insert(key, completion.raw_text.clone());
        Ok(completion)
    }

    fn hit(&self, hash: String, text: String) -> Completion {
        self.hits.fetch_add(1, Ordering::SeqCst);
        Completion {
            prompt_hash: hash,
            raw_text: text,
            latency: Duration::ZERO,
            attempt: 0,
        }
    }
}

impl<G: Gateway> Gateway for CachedGateway<G> {
    fn model_name(&self) -> &str {
        self.inner.model_name()
    }

    fn complete(&self, prompt: &str) -> Result<Completion, GatewayError> {
        if prompt.is_empty() {
            return Err(GatewayError::EmptyPrompt);
        }
        let hash = prompt_hash(prompt);
        let key = self.key(&hash);
        if let Some(text) = self.entries.read().expect("cache lock poisoned").get(&key) {
            return Ok(self.hit(hash, text.clone()));
        }
        let _guard = self.write_lock.lock().expect("cache lock poisoned");
        if let Some(text) = self.entries.read().expect("cache lock poisoned").get(&key) {
            return Ok(self.hit(hash, text.clone()));
        }
        if let Some(text) = self.read_disk(&key) {
            self.entries
                .write()
                .expect("cache lock poisoned")
                .insert(key, text.clone());
            return Ok(self.hit(hash, text));
        }
        self.misses.fetch_add(1, Ordering::SeqCst);
        self.fetch_and_store(prompt, key, &hash)
    }

    /// Replaces any cached entry with a new backend reply.
    fn complete_fresh(&self, prompt: &str) -> Result<Completion, GatewayError> {
        if prompt.is_empty() {
            return Err(GatewayError::EmptyPrompt);
        }
        let hash = prompt_hash(prompt);
        let key = self.key(&hash);
        let _guard = self.write_lock.lock().expect("cache lock poisoned");
        self.misses.fetch_add(1, Ordering::SeqCst);
        self.fetch_and_store(prompt, key, &hash)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::ReadabilityLabel;
    use crate::llm_gateway::{StubGateway, StubPolicy};

    #[test]
    fn second_request_is_a_hit() {
        let g = CachedGateway::in_memory(StubGateway::new(StubPolicy::Constant(ReadabilityLabel::Neutral)));
        let a = g.complete("p").unwrap();
        let b = g.complete("p").unwrap();
        assert_eq!(a.raw_text, b.raw_text);
        assert_eq!((g.hits(), g.misses()), (1, 1));
        assert_eq!(b.attempt, 0);
    }

    #[test]
    fn disk_cache_survives_restart() {
        let dir = tempfile::tempdir().unwrap();
        let stub = || StubGateway::new(StubPolicy::Verbatim("Readable".into()));
        let first = CachedGateway::on_disk(stub(), dir.path()).unwrap();
        first.complete("prompt").unwrap();
        let second = CachedGateway::on_disk(stub(), dir.path()).unwrap();
        assert_eq!(second.complete("prompt").unwrap().raw_text, "Readable");
        assert_eq!((second.hits(), second.misses()), (1, 0));
    }

    #[test]
    fn fresh_request_bypasses_and_refreshes() {
        let g = CachedGateway::in_memory(StubGateway::new(StubPolicy::Verbatim("x".into())));
        g.complete("p").unwrap();
        assert_eq!(g.complete_fresh("p").unwrap().attempt, 1);
        assert_eq!((g.hits(), g.misses()), (0, 2));
    }
}
