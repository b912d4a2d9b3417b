use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{LineWriter, Write};
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex, RwLock};

use super::{
    EmbeddingMode, EmbeddingProvider, EmbeddingVector, FixtureError, FixtureRecord, FixtureStore,
    PosProvider, PosTag, ProviderError, ProviderKey,
};
use crate::textnorm::NormalizedToken;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct CacheStats {
    pub hits: usize,
    pub misses: usize,
    /// Records appended to the persistent sink.
    pub stored: usize,
}

/// Read-through cache in front of a live provider.
///
/// Concurrent requests for the same key are collapsed into a single backend
/// call. Newly fetched answers are appended to an optional JSONL sink in the
/// fixture format, so the sink can later be replayed with [`FixtureStore`].
pub struct CachedProvider<P> {
    inner: P,
    store: RwLock<FixtureStore>,
    inflight: Mutex<HashMap<ProviderKey, Arc<Mutex<()>>>>,
    sink: Option<Mutex<LineWriter<File>>>,
    hits: AtomicUsize,
    misses: AtomicUsize,
    stored: AtomicUsize,
}

impl<P> CachedProvider<P> {
    /// In-memory cache only.
    pub fn new(inner: P, backend_id: &str, tagger_id: &str) -> Self {
        Self::with_store(inner, FixtureStore::new(backend_id, tagger_id))
    }

    pub fn with_store(inner: P, store: FixtureStore) -> Self {
        Self {
            inner,
            store: RwLock::new(store),
            inflight: Mutex::new(HashMap::new()),
            sink: None,
            hits: AtomicUsize::new(0),
            misses: AtomicUsize::new(0),
            stored: AtomicUsize::new(0),
        }
    }

    /// Cache preloaded from `path` (if it exists) that appends new answers to it.
    pub fn persistent(
        inner: P,
        path: impl AsRef<Path>,
        backend_id: &str,
        tagger_id: &str,
    ) -> Result<Self, FixtureError> {
        let path = path.as_ref();
        let store = if path.exists() {
            FixtureStore::load(path, backend_id, tagger_id)?
        } else {
            FixtureStore::new(backend_id, tagger_id)
        };
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(|source| FixtureError::Io {
                path: path.to_path_buf(),
                source,
            })?;
        let mut cached = Self::with_store(inner, store);
        cached.sink = Some(Mutex::new(LineWriter::new(file)));
        Ok(cached)
    }

    pub fn inner(&self) -> &P {
        &self.inner
    }

    pub fn stats(&self) -> CacheStats {
        CacheStats {
            hits: self.hits.load(Ordering::Relaxed),
            misses: self.misses.load(Ordering::Relaxed),
            stored: self.stored.load(Ordering::Relaxed),
        }
    }

    /// Snapshot of everything cached so far.
    pub fn snapshot(&self) -> FixtureStore {
        self.store.read().unwrap().clone()
    }

    fn key_lock(&self, key: &ProviderKey) -> Arc<Mutex<()>> {
        let mut inflight = self.inflight.lock().unwrap();
        inflight.entry(key.clone()).or_default().clone()
    }

    fn release(&self, key: &ProviderKey, lock: Arc<Mutex<()>>) {
        let mut inflight = self.inflight.lock().unwrap();
        // two references left: ours and the map's
        if Arc::strong_count(&lock) == 2 {
            inflight.remove(key);
        }
    }

    fn lookup<T>(
        &self,
        key: &ProviderKey,
        read: impl Fn(&FixtureStore) -> Option<T>,
        fetch: impl FnOnce() -> Result<T, ProviderError>,
        write: impl FnOnce(&mut FixtureStore, &T) -> Result<FixtureRecord, ProviderError>,
    ) -> Result<T, ProviderError> {
        let cached = read(&self.store.read().unwrap());
        if let Some(v) = cached {
            self.hits.fetch_add(1, Ordering::Relaxed);
            return Ok(v);
        }
        let lock = self.key_lock(key);
        let result = {
            let _guard = lock.lock().unwrap();
            // another caller may have filled the key while we waited; the
            // read guard must be dropped before the write below
            let cached = read(&self.store.read().unwrap());
            if let Some(v) = cached {
                self.hits.fetch_add(1, Ordering::Relaxed);
                Ok(v)
            } else {
                self.misses.fetch_add(1, Ordering::Relaxed);
                fetch().and_then(|value| {
                    let record = write(&mut self.store.write().unwrap(), &value)?;
                    self.append(&record)?;
                    Ok(value)
                })
            }
        };
        self.release(key, lock);
        result
    }

    fn append(&self, record: &FixtureRecord) -> Result<(), ProviderError> {
        let Some(sink) = &self.sink else {
            return Ok(());
        };
        let mut line = serde_json::to_string(record).map_err(|e| ProviderError::Protocol(e.to_string()))?;
        line.push('\n');
        sink.lock()
            .unwrap()
            .write_all(line.as_bytes())
            .map_err(|e| ProviderError::Transport(format!("cache write failed: {e}")))?;
        self.stored.fetch_add(1, Ordering::Relaxed);
        Ok(())
    }
}

impl<P: PosProvider> PosProvider for CachedProvider<P> {
    fn backend_id(&self) -> &str {
        self.inner.backend_id()
    }

    fn tagger_id(&self) -> &str {
        self.inner.tagger_id()
    }

    fn tag(&self, sentence_context: &str, word: &NormalizedToken) -> Result<PosTag, ProviderError> {
        let key = self.pos_key(sentence_context, word)?;
        self.lookup(
            &key,
            |store| store.get(&key).and_then(|e| e.pos),
            || self.inner.tag(sentence_context, word),
            |store, tag| {
                store.insert_pos(key.clone(), *tag);
                Ok(FixtureRecord {
                    key: key.clone(),
                    pos: Some(*tag),
                    vector: None,
                })
            },
        )
    }
}

impl<P: EmbeddingProvider> EmbeddingProvider for CachedProvider<P> {
    fn backend_id(&self) -> &str {
        self.inner.backend_id()
    }

    fn declared_dim(&self, model_id: &str) -> Option<usize> {
        self.inner.declared_dim(model_id)
    }

    fn embed(
        &self,
        model_id: &str,
        sentence_context: &str,
        word: &NormalizedToken,
        mode: EmbeddingMode,
    ) -> Result<EmbeddingVector, ProviderError> {
        let key = self.embedding_key(model_id, sentence_context, word, mode)?;
        self.lookup(
            &key,
            |store| store.get(&key).and_then(|e| e.vector.clone()),
            || self.inner.embed(model_id, sentence_context, word, mode),
            |store, vector: &EmbeddingVector| {
                store
                    .insert_vector(key.clone(), vector.clone())
                    .map_err(|e| ProviderError::Protocol(e.to_string()))?;
                Ok(FixtureRecord {
                    key: key.clone(),
                    pos: None,
                    vector: Some(vector.values().to_vec()),
                })
            },
        )
    }
}
