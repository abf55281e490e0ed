//! Embeddings for diagnostic messages.
//!
//! Retrieval by message similarity needs a vector per rendered message. The
//! default embedder is fully offline and deterministic: a hashed
//! bag-of-tokens. A remote provider can be swapped in behind the same trait;
//! the bank records which provider produced its vectors so queries can never
//! silently mix spaces.

use serde::{Deserialize, Serialize};

use super::BankError;
use crate::text::{tokenize, LanguageProfile, NormalizationRules};

/// A real-valued vector with finite components.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct EmbeddingVector(Vec<f64>);

impl EmbeddingVector {
    pub fn new(components: Vec<f64>) -> Result<Self, BankError> {
        if components.is_empty() {
            return Err(BankError::InvalidEmbedding("zero-dimensional vector".to_string()));
        }
        if let Some(bad) = components.iter().find(|c| !c.is_finite()) {
            return Err(BankError::InvalidEmbedding(format!("non-finite component {bad}")));
        }
        Ok(EmbeddingVector(components))
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn components(&self) -> &[f64] {
        &self.0
    }

    pub fn l2_norm(&self) -> f64 {
        self.0.iter().map(|c| c * c).sum::<f64>().sqrt()
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|c| *c == 0.0)
    }
}

impl TryFrom<Vec<f64>> for EmbeddingVector {
    type Error = BankError;

    fn try_from(value: Vec<f64>) -> Result<Self, Self::Error> {
        EmbeddingVector::new(value)
    }
}

impl From<EmbeddingVector> for Vec<f64> {
    fn from(value: EmbeddingVector) -> Vec<f64> {
        value.0
    }
}

/// Cosine similarity in [-1, 1]. Errors on dimension mismatch and on
/// zero-norm inputs (similarity would be undefined).
pub fn cosine_similarity(u: &EmbeddingVector, v: &EmbeddingVector) -> Result<f64, BankError> {
    if u.dim() != v.dim() {
        return Err(BankError::DimensionMismatch {
            expected: u.dim(),
            got: v.dim(),
        });
    }
    let norm_u = u.l2_norm();
    let norm_v = v.l2_norm();
    if norm_u == 0.0 || norm_v == 0.0 {
        return Err(BankError::ZeroVector);
    }
    let dot: f64 = u
        .components()
        .iter()
        .zip(v.components())
        .map(|(a, b)| a * b)
        .sum();
    Ok(dot / (norm_u * norm_v))
}

/// Turns a rendered diagnostic message into a vector. Implementations must
/// be deterministic for a fixed `id()`.
pub trait Embedder: Send + Sync {
    /// Stable provider identifier recorded in banks (e.g. `hash64-512`).
    fn id(&self) -> &str;
    fn dim(&self) -> usize;
    fn embed(&self, text: &str) -> Result<EmbeddingVector, BankError>;
}

/// Offline fallback embedder: lowercase the significant tokens of the
/// message, hash each with FNV-1a 64 into `dim` buckets, count, and
/// L2-normalize. No network, no model weights, bit-for-bit reproducible.
#[derive(Debug, Clone)]
pub struct HashEmbedder {
    dim: usize,
    id: String,
    profile: LanguageProfile,
}

pub const DEFAULT_HASH_DIM: usize = 512;

impl HashEmbedder {
    pub fn new(dim: usize) -> Self {
        HashEmbedder {
            dim,
            id: format!("hash64-{dim}"),
            profile: message_profile(),
        }
    }

    /// Parse an embedder back out of a bank's recorded provider id.
    pub fn from_provider_id(id: &str) -> Option<Self> {
        let dim: usize = id.strip_prefix("hash64-")?.parse().ok()?;
        (dim > 0).then(|| HashEmbedder::new(dim))
    }
}

impl Default for HashEmbedder {
    fn default() -> Self {
        HashEmbedder::new(DEFAULT_HASH_DIM)
    }
}

impl Embedder for HashEmbedder {
    fn id(&self) -> &str {
        &self.id
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn embed(&self, text: &str) -> Result<EmbeddingVector, BankError> {
        let mut counts = vec![0.0f64; self.dim];
        for token in tokenize(text, &self.profile).significant() {
            let bucket = (fnv1a64(token.lexeme.to_lowercase().as_bytes()) % self.dim as u64) as usize;
            counts[bucket] += 1.0;
        }
        let norm = counts.iter().map(|c| c * c).sum::<f64>().sqrt();
        if norm > 0.0 {
            for c in &mut counts {
                *c /= norm;
            }
        }
        EmbeddingVector::new(counts)
    }
}

/// Lexing profile for diagnostic messages (not tied to any registered
/// language): both quote styles, no comments.
fn message_profile() -> LanguageProfile {
    LanguageProfile {
        id: crate::text::LanguageId::new("message").expect("valid id"),
        display: "Message".to_string(),
        quote_chars: vec!['"', '\''],
        line_comments: vec![],
        block_comments: vec![],
        case_insensitive: false,
        normalization: NormalizationRules::default(),
    }
}

/// FNV-1a, 64-bit. Fixed offset basis and prime keep bucket assignment
/// stable across platforms and releases (std hashers guarantee neither).
fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for byte in bytes {
        hash ^= u64::from(*byte);
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    hash
}

/// Remote embedding provider speaking a minimal JSON contract:
/// POST `{"input": <text>, "model": <model>}` → `{"embedding": [..]}`.
pub struct RemoteEmbedder {
    id: String,
    model: String,
    endpoint: String,
    api_key: Option<String>,
    expected_dim: Option<usize>,
    client: reqwest::blocking::Client,
}

impl RemoteEmbedder {
    /// `api_key_env` names an environment variable; the key itself never
    /// appears in config files.
    pub fn new(
        endpoint: impl Into<String>,
        model: impl Into<String>,
        api_key_env: Option<&str>,
        expected_dim: Option<usize>,
    ) -> Result<Self, BankError> {
        let model = model.into();
        let api_key = match api_key_env {
            Some(var) => Some(std::env::var(var).map_err(|_| {
                BankError::EmbeddingUnavailable(format!("environment variable `{var}` is not set"))
            })?),
            None => None,
        };
        let client = reqwest::blocking::Client::builder()
            .timeout(std::time::Duration::from_secs(60))
            .build()
            .map_err(|e| BankError::EmbeddingUnavailable(e.to_string()))?;
        Ok(RemoteEmbedder {
            id: format!("remote:{model}"),
            model,
            endpoint: endpoint.into(),
            api_key,
            expected_dim,
            client,
        })
    }
}

#[derive(Serialize)]
struct EmbeddingRequest<'a> {
    input: &'a str,
    model: &'a str,
}

#[derive(Deserialize)]
struct EmbeddingResponse {
    embedding: Vec<f64>,
}

impl Embedder for RemoteEmbedder {
    fn id(&self) -> &str {
        &self.id
    }

    fn dim(&self) -> usize {
        self.expected_dim.unwrap_or(0)
    }

    fn embed(&self, text: &str) -> Result<EmbeddingVector, BankError> {
        let mut request = self.client.post(&self.endpoint).json(&EmbeddingRequest {
            input: text,
            model: &self.model,
        });
        if let Some(key) = &self.api_key {
            request = request.bearer_auth(key);
        }
        let response = request
            .send()
            .map_err(|e| BankError::EmbeddingUnavailable(e.to_string()))?;
        if !response.status().is_success() {
            return Err(BankError::EmbeddingUnavailable(format!(
                "embedding endpoint returned {}",
                response.status()
            )));
        }
        let parsed: EmbeddingResponse = response
            .json()
            .map_err(|e| BankError::EmbeddingUnavailable(format!("malformed response: {e}")))?;
        if let Some(expected) = self.expected_dim {
            if parsed.embedding.len() != expected {
                return Err(BankError::DimensionMismatch {
                    expected,
                    got: parsed.embedding.len(),
                });
            }
        }
        EmbeddingVector::new(parsed.embedding)
    }
}
