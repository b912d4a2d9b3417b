//! Linguistic evidence providers: part-of-speech tags and target-word
//! embeddings.
//!
//! Providers are addressed through [`ProviderKey`], a deterministic digest of
//! everything that determines a backend answer. The same key is used by the
//! offline [`FixtureStore`], the read-through [`CachedProvider`] and the
//! sidecar client, so a fixture recorded from a live backend replays
//! bit-identically.

mod cache;
mod fixture;
mod http;

pub use cache::{CacheStats, CachedProvider};
pub use fixture::{FixtureEntry, FixtureError, FixtureRecord, FixtureStore};
pub use http::{HttpBackend, HttpConfig, SidecarHealth, POOLING_RECIPE};

use std::fmt;
use std::ops::Range;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::model::PLACEHOLDER;
use crate::textnorm::NormalizedToken;

/// The 17 Universal POS tags.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum PosTag {
    Adj,
    Adp,
    Adv,
    Aux,
    Cconj,
    Det,
    Intj,
    Noun,
    Num,
    Part,
    Pron,
    Propn,
    Punct,
    Sconj,
    Sym,
    Verb,
    X,
}

impl PosTag {
    pub const ALL: [PosTag; 17] = [
        PosTag::Adj,
        PosTag::Adp,
        PosTag::Adv,
        PosTag::Aux,
        PosTag::Cconj,
        PosTag::Det,
        PosTag::Intj,
        PosTag::Noun,
        PosTag::Num,
        PosTag::Part,
        PosTag::Pron,
        PosTag::Propn,
        PosTag::Punct,
        PosTag::Sconj,
        PosTag::Sym,
        PosTag::Verb,
        PosTag::X,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            PosTag::Adj => "ADJ",
            PosTag::Adp => "ADP",
            PosTag::Adv => "ADV",
            PosTag::Aux => "AUX",
            PosTag::Cconj => "CCONJ",
            PosTag::Det => "DET",
            PosTag::Intj => "INTJ",
            PosTag::Noun => "NOUN",
            PosTag::Num => "NUM",
            PosTag::Part => "PART",
            PosTag::Pron => "PRON",
            PosTag::Propn => "PROPN",
            PosTag::Punct => "PUNCT",
            PosTag::Sconj => "SCONJ",
            PosTag::Sym => "SYM",
            PosTag::Verb => "VERB",
            PosTag::X => "X",
        }
    }
}

impl fmt::Display for PosTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("unknown UPOS tag {0:?}")]
pub struct UnknownTag(pub String);

impl FromStr for PosTag {
    type Err = UnknownTag;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        PosTag::ALL
            .into_iter()
            .find(|t| t.as_str() == s)
            .ok_or_else(|| UnknownTag(s.to_string()))
    }
}

impl TryFrom<String> for PosTag {
    type Error = UnknownTag;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl From<PosTag> for String {
    fn from(t: PosTag) -> String {
        t.as_str().to_string()
    }
}

/// Collapses auxiliaries into the verb class; every other tag is unchanged.
pub fn map_pos(tag: PosTag) -> PosTag {
    match tag {
        PosTag::Aux => PosTag::Verb,
        other => other,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EmbeddingMode {
    /// Target word inserted in its sentence frame.
    #[default]
    Contextual,
    /// Target word encoded alone.
    Isolated,
}

impl EmbeddingMode {
    pub fn as_str(self) -> &'static str {
        match self {
            EmbeddingMode::Contextual => "contextual",
            EmbeddingMode::Isolated => "isolated",
        }
    }
}

impl fmt::Display for EmbeddingMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for EmbeddingMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "contextual" => Ok(EmbeddingMode::Contextual),
            "isolated" => Ok(EmbeddingMode::Isolated),
            other => Err(format!("unknown embedding mode {other:?}")),
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum VectorError {
    #[error("embedding vector is empty")]
    Empty,
    #[error("embedding vector has a non-finite entry at index {0}")]
    NonFinite(usize),
    #[error("embedding vector is all zeros")]
    Zero,
    #[error("dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),
}

/// A finite, non-zero embedding.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingVector(Vec<f64>);

impl EmbeddingVector {
    pub fn new(values: Vec<f64>) -> Result<Self, VectorError> {
        if values.is_empty() {
            return Err(VectorError::Empty);
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(VectorError::NonFinite(i));
        }
        if values.iter().all(|v| *v == 0.0) {
            return Err(VectorError::Zero);
        }
        Ok(Self(values))
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn into_values(self) -> Vec<f64> {
        self.0
    }
}

/// Cosine of the angle between `u` and `v`, clamped to [-1, 1].
pub fn cosine_similarity(u: &EmbeddingVector, v: &EmbeddingVector) -> Result<f64, VectorError> {
    if u.dim() != v.dim() {
        return Err(VectorError::DimensionMismatch(u.dim(), v.dim()));
    }
    let mut dot = 0.0;
    let mut nu = 0.0;
    let mut nv = 0.0;
    for (a, b) in u.values().iter().zip(v.values()) {
        dot += a * b;
        nu += a * a;
        nv += b * b;
    }
    // sqrt of the product keeps cos(v, v) at exactly 1: sqrt(fl(x * x)) == x
    let denom = (nu * nv).sqrt();
    if denom == 0.0 || !denom.is_finite() {
        return Err(VectorError::Zero);
    }
    Ok((dot / denom).clamp(-1.0, 1.0))
}

/// A sentence frame with the placeholder replaced by a filler word.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FilledSentence {
    pub text: String,
    /// Character (scalar value) offsets of the filler inside `text`.
    pub target_span: Range<usize>,
}

pub fn fill_placeholder(sentence_context: &str, word: &str) -> Result<FilledSentence, ProviderError> {
    let mut found = sentence_context.match_indices(PLACEHOLDER);
    let (byte_start, _) = found
        .next()
        .ok_or_else(|| ProviderError::Alignment("placeholder missing".into()))?;
    if found.next().is_some() {
        return Err(ProviderError::Alignment("placeholder appears more than once".into()));
    }
    let prefix = &sentence_context[..byte_start];
    let suffix = &sentence_context[byte_start + PLACEHOLDER.len()..];
    let start = prefix.chars().count();
    let end = start + word.chars().count();
    Ok(FilledSentence {
        text: format!("{prefix}{word}{suffix}"),
        target_span: start..end,
    })
}

/// Identity of one backend answer, stable across processes and machines.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ProviderKey {
    pub backend: String,
    pub model: String,
    pub mode: EmbeddingMode,
    pub sentence_digest: String,
    pub word: String,
}

impl ProviderKey {
    /// Key for a POS lookup. Tags always come from the filled sentence.
    pub fn for_pos(
        backend: &str,
        tagger_id: &str,
        sentence_context: &str,
        word: &NormalizedToken,
    ) -> Result<Self, ProviderError> {
        let filled = fill_placeholder(sentence_context, word.as_str())?;
        Ok(Self {
            backend: backend.to_string(),
            model: tagger_id.to_string(),
            mode: EmbeddingMode::Contextual,
            sentence_digest: sha256_hex(&filled.text),
            word: word.as_str().to_string(),
        })
    }

    /// Key for an embedding lookup. Isolated mode ignores the sentence frame.
    pub fn for_embedding(
        backend: &str,
        model_id: &str,
        mode: EmbeddingMode,
        sentence_context: &str,
        word: &NormalizedToken,
    ) -> Result<Self, ProviderError> {
        let encoded = match mode {
            EmbeddingMode::Contextual => fill_placeholder(sentence_context, word.as_str())?.text,
            EmbeddingMode::Isolated => word.as_str().to_string(),
        };
        Ok(Self {
            backend: backend.to_string(),
            model: model_id.to_string(),
            mode,
            sentence_digest: sha256_hex(&encoded),
            word: word.as_str().to_string(),
        })
    }
}

impl fmt::Display for ProviderKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}/{}/{}/{}/{:?}",
            self.backend, self.model, self.mode, self.sentence_digest, self.word
        )
    }
}

pub fn sha256_hex(text: &str) -> String {
    hex::encode(Sha256::digest(text.as_bytes()))
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProviderError {
    #[error("transport error: {0}")]
    Transport(String),
    #[error("protocol error: {0}")]
    Protocol(String),
    #[error("alignment failure: {0}")]
    Alignment(String),
    #[error("fixture miss: {0}")]
    FixtureMiss(Box<ProviderKey>),
}

/// Source of part-of-speech tags for a word placed in its sentence frame.
pub trait PosProvider: Send + Sync {
    /// Backend identity shared by every transport serving the same models.
    fn backend_id(&self) -> &str;

    fn tagger_id(&self) -> &str;

    /// Raw (unmapped) tag of `word` once substituted into `sentence_context`.
    fn tag(&self, sentence_context: &str, word: &NormalizedToken) -> Result<PosTag, ProviderError>;

    fn pos_key(&self, sentence_context: &str, word: &NormalizedToken) -> Result<ProviderKey, ProviderError> {
        ProviderKey::for_pos(self.backend_id(), self.tagger_id(), sentence_context, word)
    }
}

/// Source of target-word embeddings, mean-pooled over the word's subword
/// tokens from the model's final hidden layer.
pub trait EmbeddingProvider: Send + Sync {
    fn backend_id(&self) -> &str;

    /// Dimension the backend declares for `model_id`, when known.
    fn declared_dim(&self, model_id: &str) -> Option<usize>;

    fn embed(
        &self,
        model_id: &str,
        sentence_context: &str,
        word: &NormalizedToken,
        mode: EmbeddingMode,
    ) -> Result<EmbeddingVector, ProviderError>;

    fn embedding_key(
        &self,
        model_id: &str,
        sentence_context: &str,
        word: &NormalizedToken,
        mode: EmbeddingMode,
    ) -> Result<ProviderKey, ProviderError> {
        ProviderKey::for_embedding(self.backend_id(), model_id, mode, sentence_context, word)
    }
}

impl<T: PosProvider + ?Sized> PosProvider for &T {
    fn backend_id(&self) -> &str {
        (**self).backend_id()
    }
    fn tagger_id(&self) -> &str {
        (**self).tagger_id()
    }
    fn tag(&self, sentence_context: &str, word: &NormalizedToken) -> Result<PosTag, ProviderError> {
        (**self).tag(sentence_context, word)
    }
}

impl<T: EmbeddingProvider + ?Sized> EmbeddingProvider for &T {
    fn backend_id(&self) -> &str {
        (**self).backend_id()
    }
    fn declared_dim(&self, model_id: &str) -> Option<usize> {
        (**self).declared_dim(model_id)
    }
    fn embed(
        &self,
        model_id: &str,
        sentence_context: &str,
        word: &NormalizedToken,
        mode: EmbeddingMode,
    ) -> Result<EmbeddingVector, ProviderError> {
        (**self).embed(model_id, sentence_context, word, mode)
    }
}

fn check_query(sentence_context: &str, word: &NormalizedToken) -> Result<(), ProviderError> {
    if word.is_empty() {
        return Err(ProviderError::Alignment("empty target word".into()));
    }
    fill_placeholder(sentence_context, word.as_str()).map(|_| ())
}

/// Raw tag of `word` in `sentence_context`.
pub fn tag_in_context(
    provider: &dyn PosProvider,
    sentence_context: &str,
    word: &NormalizedToken,
) -> Result<PosTag, ProviderError> {
    check_query(sentence_context, word)?;
    provider.tag(sentence_context, word)
}

/// Embedding of `word`, checked against the provider's declared dimension.
pub fn embed(
    provider: &dyn EmbeddingProvider,
    model_id: &str,
    sentence_context: &str,
    word: &NormalizedToken,
    mode: EmbeddingMode,
) -> Result<EmbeddingVector, ProviderError> {
    match mode {
        EmbeddingMode::Contextual => check_query(sentence_context, word)?,
        EmbeddingMode::Isolated if word.is_empty() => {
            return Err(ProviderError::Alignment("empty target word".into()))
        }
        EmbeddingMode::Isolated => {}
    }
    let vector = provider.embed(model_id, sentence_context, word, mode)?;
    if let Some(dim) = provider.declared_dim(model_id) {
        if dim != vector.dim() {
            return Err(ProviderError::Protocol(format!(
                "model {model_id} declares dim {dim} but returned {}",
                vector.dim()
            )));
        }
    }
    Ok(vector)
}
