//! Completion providers: the trait the engine talks to, plus a remote
//! OpenAI-compatible client, a scripted mock for offline tests, and a
//! disk cache that wraps any provider.

mod cache;
mod mock;
mod remote;

pub use cache::CachingProvider;
pub use mock::MockProvider;
pub use remote::{RemoteConfig, RemoteProvider};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum LlmError {
    /// Transient transport/server trouble; the remote client retries these
    /// with exponential backoff before giving up.
    #[error("completion provider unavailable: {0}")]
    ProviderUnavailable(String),
    /// The provider understood the request and said no (bad request,
    /// malformed response, unscripted prompt). Never retried.
    #[error("completion provider rejected the request: {0}")]
    ProviderRejected(String),
    #[error("rate limited by the provider (retry after {retry_after_secs:?}s)")]
    RateLimited { retry_after_secs: Option<u64> },
    #[error("invalid provider config: {0}")]
    ConfigError(String),
    #[error("completion cache error: {0}")]
    Cache(String),
}

/// Sampling controls passed through to the provider.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SamplingParams {
    pub temperature: f64,
    /// Number of candidates to sample.
    pub n: usize,
    pub max_tokens: usize,
    pub stop: Vec<String>,
}

/// The stop string doubles as the prompt's section header prefix, so
/// generation halts before the model invents another shot.
pub const DEFAULT_STOP: &str = "### ";

impl Default for SamplingParams {
    fn default() -> Self {
        SamplingParams {
            temperature: 0.7,
            n: 1,
            max_tokens: 512,
            stop: vec![DEFAULT_STOP.to_string()],
        }
    }
}

impl SamplingParams {
    pub fn validate(&self) -> Result<(), LlmError> {
        if self.n == 0 {
            return Err(LlmError::ConfigError("n must be at least 1".to_string()));
        }
        if self.max_tokens == 0 {
            return Err(LlmError::ConfigError("max_tokens must be at least 1".to_string()));
        }
        if !self.temperature.is_finite() || self.temperature < 0.0 {
            return Err(LlmError::ConfigError(format!(
                "temperature must be finite and non-negative, got {}",
                self.temperature
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FinishReason {
    /// Generation hit a stop sequence.
    Stop,
    /// Generation ran out of `max_tokens`.
    Length,
    /// The provider ended the stream for its own reasons.
    ProviderEnd,
}

/// One sampled completion: the generated text (stop sequence excluded) and
/// the log-probability of each generated token.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Completion {
    pub text: String,
    pub token_logprobs: Vec<(String, f64)>,
    pub finish: FinishReason,
}

impl Completion {
    /// Arithmetic mean of the token log-probabilities; the ranking score.
    /// `None` when there are no tokens to average.
    pub fn mean_logprob(&self) -> Option<f64> {
        if self.token_logprobs.is_empty() {
            return None;
        }
        let sum: f64 = self.token_logprobs.iter().map(|(_, lp)| lp).sum();
        Some(sum / self.token_logprobs.len() as f64)
    }

    pub fn validate(&self) -> Result<(), LlmError> {
        if !self.text.is_empty() && self.token_logprobs.is_empty() {
            return Err(LlmError::ConfigError(
                "completion has text but no token logprobs".to_string(),
            ));
        }
        for (token, lp) in &self.token_logprobs {
            if !lp.is_finite() || *lp > 0.0 {
                return Err(LlmError::ConfigError(format!(
                    "token `{token}` has invalid logprob {lp}: must be finite and <= 0"
                )));
            }
        }
        Ok(())
    }
}

/// A source of sampled completions. Implementations must be safe to call
/// from several threads at once.
pub trait CompletionProvider: Send + Sync {
    /// Stable identifier, part of every cache key.
    fn id(&self) -> &str;
    /// Sample `params.n` completions for `prompt`.
    fn complete(&self, prompt: &str, params: &SamplingParams) -> Result<Vec<Completion>, LlmError>;
}

/// SHA-256 of the prompt text, hex-encoded. Used as the mock script key, in
/// cache file names, and in stage traces.
pub fn prompt_fingerprint(prompt: &str) -> String {
    hex_digest(prompt.as_bytes())
}

/// Fingerprint of everything besides the prompt that shapes a completion:
/// provider identity and sampling params (canonical JSON). Truncated — it
/// only disambiguates cache files that share a prompt hash.
pub fn params_fingerprint(provider_id: &str, params: &SamplingParams) -> String {
    let params_json = serde_json::to_string(params).expect("params serialize");
    let mut material = provider_id.as_bytes().to_vec();
    material.push(0);
    material.extend_from_slice(params_json.as_bytes());
    hex_digest(&material)[..16].to_string()
}

fn hex_digest(bytes: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    let digest = hasher.finalize();
    let mut out = String::with_capacity(digest.len() * 2);
    for byte in digest {
        out.push_str(&format!("{byte:02x}"));
    }
    out
}
