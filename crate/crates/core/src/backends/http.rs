//! Blocking client for the inference sidecar.
//!
//! Wire contract:
//! - `POST /embed` `{"sentence","target","mode","model_id"}` →
//!   `{"vector","dim","model_id","pooling"}`
//! - `POST /pos` `{"sentence","target"}` → `{"pos","tagger_id"}` (raw tag, AUX kept)
//! - `GET /health` → `{"status","models","dims"}`
//!
//! A 422 status means the target could not be aligned with the backend
//! tokenization.

use std::collections::HashMap;
use std::sync::OnceLock;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::{EmbeddingMode, EmbeddingProvider, EmbeddingVector, PosProvider, PosTag, ProviderError};
use crate::textnorm::NormalizedToken;

/// Pooling recipe every embedding response must echo.
pub const POOLING_RECIPE: &str = "mean-subwords-last-layer";

#[derive(Debug, Clone)]
pub struct HttpConfig {
    /// Base URL, e.g. `http://127.0.0.1:8765`.
    pub endpoint: String,
    pub backend_id: String,
    pub tagger_id: String,
    pub timeout: Duration,
}

impl HttpConfig {
    pub fn new(endpoint: impl Into<String>) -> Self {
        Self {
            endpoint: endpoint.into(),
            backend_id: "sidecar".to_string(),
            tagger_id: "default".to_string(),
            timeout: Duration::from_secs(60),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SidecarHealth {
    pub status: String,
    pub models: Vec<String>,
    pub dims: HashMap<String, usize>,
}

#[derive(Serialize)]
struct EmbedRequest<'a> {
    sentence: &'a str,
    target: &'a str,
    mode: EmbeddingMode,
    model_id: &'a str,
}

#[derive(Deserialize)]
struct EmbedResponse {
    vector: Vec<f64>,
    dim: usize,
    model_id: String,
    pooling: String,
}

#[derive(Serialize)]
struct PosRequest<'a> {
    sentence: &'a str,
    target: &'a str,
}

#[derive(Deserialize)]
struct PosResponse {
    pos: String,
    #[allow(dead_code)]
    tagger_id: String,
}

pub struct HttpBackend {
    config: HttpConfig,
    agent: ureq::Agent,
    dims: OnceLock<Option<HashMap<String, usize>>>,
}

impl HttpBackend {
    pub fn new(config: HttpConfig) -> Self {
        let agent = ureq::AgentBuilder::new().timeout(config.timeout).build();
        Self {
            config,
            agent,
            dims: OnceLock::new(),
        }
    }

    pub fn config(&self) -> &HttpConfig {
        &self.config
    }

    fn url(&self, path: &str) -> String {
        format!("{}{path}", self.config.endpoint.trim_end_matches('/'))
    }

    pub fn health(&self) -> Result<SidecarHealth, ProviderError> {
        let resp = self.agent.get(&self.url("/health")).call().map_err(map_error)?;
        resp.into_json()
            .map_err(|e| ProviderError::Protocol(format!("bad /health body: {e}")))
    }

    fn post<T: for<'de> Deserialize<'de>>(&self, path: &str, body: &impl Serialize) -> Result<T, ProviderError> {
        let resp = self
            .agent
            .post(&self.url(path))
            .send_json(body)
            .map_err(map_error)?;
        resp.into_json()
            .map_err(|e| ProviderError::Protocol(format!("bad {path} body: {e}")))
    }
}

fn map_error(err: ureq::Error) -> ProviderError {
    match err {
        ureq::Error::Status(422, resp) => {
            ProviderError::Alignment(resp.into_string().unwrap_or_default())
        }
        ureq::Error::Status(code, resp) if code < 500 => ProviderError::Protocol(format!(
            "sidecar returned {code}: {}",
            resp.into_string().unwrap_or_default()
        )),
        ureq::Error::Status(code, resp) => ProviderError::Transport(format!(
            "sidecar returned {code}: {}",
            resp.into_string().unwrap_or_default()
        )),
        ureq::Error::Transport(t) => ProviderError::Transport(t.to_string()),
    }
}

impl PosProvider for HttpBackend {
    fn backend_id(&self) -> &str {
        &self.config.backend_id
    }

    fn tagger_id(&self) -> &str {
        &self.config.tagger_id
    }

    fn tag(&self, sentence_context: &str, word: &NormalizedToken) -> Result<PosTag, ProviderError> {
        let resp: PosResponse = self.post(
            "/pos",
            &PosRequest {
                sentence: sentence_context,
                target: word.as_str(),
            },
        )?;
        resp.pos
            .parse()
            .map_err(|e| ProviderError::Protocol(format!("{e}")))
    }
}

impl EmbeddingProvider for HttpBackend {
    fn backend_id(&self) -> &str {
        &self.config.backend_id
    }

    fn declared_dim(&self, model_id: &str) -> Option<usize> {
        self.dims
            .get_or_init(|| self.health().ok().map(|h| h.dims))
            .as_ref()
            .and_then(|d| d.get(model_id).copied())
    }

    fn embed(
        &self,
        model_id: &str,
        sentence_context: &str,
        word: &NormalizedToken,
        mode: EmbeddingMode,
    ) -> Result<EmbeddingVector, ProviderError> {
        let resp: EmbedResponse = self.post(
            "/embed",
            &EmbedRequest {
                sentence: sentence_context,
                target: word.as_str(),
                mode,
                model_id,
            },
        )?;
        if resp.pooling != POOLING_RECIPE {
            return Err(ProviderError::Protocol(format!(
                "unexpected pooling {:?}, expected {POOLING_RECIPE:?}",
                resp.pooling
            )));
        }
        if resp.model_id != model_id {
            return Err(ProviderError::Protocol(format!(
                "asked for model {model_id}, got {}",
                resp.model_id
            )));
        }
        if resp.vector.len() != resp.dim {
            return Err(ProviderError::Protocol(format!(
                "vector has {} entries but dim is {}",
                resp.vector.len(),
                resp.dim
            )));
        }
        EmbeddingVector::new(resp.vector).map_err(|e| ProviderError::Protocol(e.to_string()))
    }
}
