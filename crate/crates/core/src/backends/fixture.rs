use std::collections::{BTreeMap, HashMap};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{
    EmbeddingMode, EmbeddingProvider, EmbeddingVector, PosProvider, PosTag, ProviderError,
    ProviderKey,
};
use crate::textnorm::NormalizedToken;

#[derive(Debug, Error)]
pub enum FixtureError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("fixture line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("model {model} has vectors of dimension {first} and {second}")]
    DimensionConflict {
        model: String,
        first: usize,
        second: usize,
    },
}

/// One JSONL line of a fixture file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixtureRecord {
    pub key: ProviderKey,
    pub pos: Option<PosTag>,
    pub vector: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct FixtureEntry {
    pub pos: Option<PosTag>,
    pub vector: Option<EmbeddingVector>,
}

/// Offline replay of recorded backend answers. A lookup that was never
/// recorded fails with [`ProviderError::FixtureMiss`].
#[derive(Debug, Clone)]
pub struct FixtureStore {
    backend_id: String,
    tagger_id: String,
    entries: BTreeMap<ProviderKey, FixtureEntry>,
    dims: HashMap<String, usize>,
}

impl FixtureStore {
    pub fn new(backend_id: impl Into<String>, tagger_id: impl Into<String>) -> Self {
        Self {
            backend_id: backend_id.into(),
            tagger_id: tagger_id.into(),
            entries: BTreeMap::new(),
            dims: HashMap::new(),
        }
    }

    pub fn load(
        path: impl AsRef<Path>,
        backend_id: impl Into<String>,
        tagger_id: impl Into<String>,
    ) -> Result<Self, FixtureError> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|source| FixtureError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let mut store = Self::new(backend_id, tagger_id);
        store.extend_from_reader(file)?;
        Ok(store)
    }

    /// Merges every record of a JSONL stream. Later non-null fields win.
    pub fn extend_from_reader(&mut self, reader: impl Read) -> Result<(), FixtureError> {
        for (idx, line) in BufReader::new(reader).lines().enumerate() {
            let line_no = idx + 1;
            let line = line.map_err(|e| FixtureError::Parse {
                line: line_no,
                message: e.to_string(),
            })?;
            if line.trim().is_empty() {
                continue;
            }
            let record: FixtureRecord =
                serde_json::from_str(&line).map_err(|e| FixtureError::Parse {
                    line: line_no,
                    message: e.to_string(),
                })?;
            self.insert_record(record).map_err(|e| match e {
                FixtureError::DimensionConflict { .. } => e,
                other => FixtureError::Parse {
                    line: line_no,
                    message: other.to_string(),
                },
            })?;
        }
        Ok(())
    }

    pub fn insert_record(&mut self, record: FixtureRecord) -> Result<(), FixtureError> {
        if let Some(pos) = record.pos {
            self.insert_pos(record.key.clone(), pos);
        }
        if let Some(values) = record.vector {
            let vector = EmbeddingVector::new(values).map_err(|e| FixtureError::Parse {
                line: 0,
                message: format!("{}: {e}", record.key),
            })?;
            self.insert_vector(record.key, vector)?;
        }
        Ok(())
    }

    pub fn insert_pos(&mut self, key: ProviderKey, pos: PosTag) {
        self.entries.entry(key).or_default().pos = Some(pos);
    }

    pub fn insert_vector(&mut self, key: ProviderKey, vector: EmbeddingVector) -> Result<(), FixtureError> {
        match self.dims.get(&key.model) {
            Some(&dim) if dim != vector.dim() => {
                return Err(FixtureError::DimensionConflict {
                    model: key.model.clone(),
                    first: dim,
                    second: vector.dim(),
                })
            }
            Some(_) => {}
            None => {
                self.dims.insert(key.model.clone(), vector.dim());
            }
        }
        self.entries.entry(key).or_default().vector = Some(vector);
        Ok(())
    }

    pub fn get(&self, key: &ProviderKey) -> Option<&FixtureEntry> {
        self.entries.get(key)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// All records in key order, one per key with both fields merged.
    pub fn records(&self) -> Vec<FixtureRecord> {
        self.entries
            .iter()
            .map(|(key, entry)| FixtureRecord {
                key: key.clone(),
                pos: entry.pos,
                vector: entry.vector.as_ref().map(|v| v.values().to_vec()),
            })
            .collect()
    }

    pub fn write_jsonl(&self, writer: impl Write) -> std::io::Result<()> {
        let mut w = BufWriter::new(writer);
        for record in self.records() {
            serde_json::to_writer(&mut w, &record)?;
            w.write_all(b"\n")?;
        }
        w.flush()
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), FixtureError> {
        let path = path.as_ref();
        let io_err = |source| FixtureError::Io {
            path: path.to_path_buf(),
            source,
        };
        let file = File::create(path).map_err(io_err)?;
        self.write_jsonl(file).map_err(io_err)
    }
}

impl PosProvider for FixtureStore {
    fn backend_id(&self) -> &str {
        &self.backend_id
    }

    fn tagger_id(&self) -> &str {
        &self.tagger_id
    }

    fn tag(&self, sentence_context: &str, word: &NormalizedToken) -> Result<PosTag, ProviderError> {
        let key = self.pos_key(sentence_context, word)?;
        self.get(&key)
            .and_then(|e| e.pos)
            .ok_or_else(|| ProviderError::FixtureMiss(Box::new(key)))
    }
}

impl EmbeddingProvider for FixtureStore {
    fn backend_id(&self) -> &str {
        &self.backend_id
    }

    fn declared_dim(&self, model_id: &str) -> Option<usize> {
        self.dims.get(model_id).copied()
    }

    fn embed(
        &self,
        model_id: &str,
        sentence_context: &str,
        word: &NormalizedToken,
        mode: EmbeddingMode,
    ) -> Result<EmbeddingVector, ProviderError> {
        let key = self.embedding_key(model_id, sentence_context, word, mode)?;
        self.get(&key)
            .and_then(|e| e.vector.clone())
            .ok_or_else(|| ProviderError::FixtureMiss(Box::new(key)))
    }
}
