//! HTTP client for OpenAI-compatible completion endpoints.
//!
//! The request contract is the classic completions shape: POST a JSON body
//! with `model`, `prompt`, `temperature`, `n`, `max_tokens`, `logprobs`, and
//! `stop`; read `choices[].text`, `choices[].logprobs`, and
//! `choices[].finish_reason` back. Transient failures retry with exponential
//! backoff; 429 honors `Retry-After`; anything else the server rejects is
//! surfaced as-is without retry.

use std::sync::{Condvar, Mutex};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use super::{Completion, CompletionProvider, FinishReason, LlmError, SamplingParams};

#[derive(Debug, Clone)]
pub struct RemoteConfig {
    /// Full completions URL, e.g. `https://host/v1/completions`.
    pub endpoint: String,
    pub model: String,
    /// Environment variable holding the bearer token. Keys live in the
    /// environment only, never in config files.
    pub api_key_env: Option<String>,
    /// Whether the server honors `n` natively; when false, `n` completions
    /// are gathered with `n` sequential single-sample requests.
    pub supports_n: bool,
    pub max_attempts: u32,
    pub backoff_base_ms: u64,
    pub request_timeout_secs: u64,
    /// Upper bound on concurrent in-flight requests.
    pub max_in_flight: Option<usize>,
    /// Minimum spacing between request starts (a crude but dependable rate
    /// limit).
    pub min_request_interval_ms: Option<u64>,
}

impl Default for RemoteConfig {
    fn default() -> Self {
        RemoteConfig {
            endpoint: String::new(),
            model: String::new(),
            api_key_env: None,
            supports_n: true,
            max_attempts: 3,
            backoff_base_ms: 250,
            request_timeout_secs: 120,
            max_in_flight: None,
            min_request_interval_ms: None,
        }
    }
}

pub struct RemoteProvider {
    id: String,
    config: RemoteConfig,
    api_key: Option<String>,
    client: reqwest::blocking::Client,
    gate: Option<InFlightGate>,
    pacer: Mutex<Option<Instant>>,
}

impl RemoteProvider {
    pub fn new(config: RemoteConfig) -> Result<Self, LlmError> {
        if config.endpoint.is_empty() {
            return Err(LlmError::ConfigError("remote endpoint must be set".to_string()));
        }
        if config.model.is_empty() {
            return Err(LlmError::ConfigError("remote model must be set".to_string()));
        }
        if config.max_attempts == 0 {
            return Err(LlmError::ConfigError("max_attempts must be at least 1".to_string()));
        }
        let api_key = match &config.api_key_env {
            Some(var) => Some(std::env::var(var).map_err(|_| {
                LlmError::ConfigError(format!("environment variable `{var}` is not set"))
            })?),
            None => None,
        };
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(config.request_timeout_secs))
            .build()
            .map_err(|e| LlmError::ConfigError(e.to_string()))?;
        Ok(RemoteProvider {
            id: format!("remote:{}", config.model),
            gate: config.max_in_flight.map(InFlightGate::new),
            config,
            api_key,
            client,
            pacer: Mutex::new(None),
        })
    }

    fn request_once(&self, prompt: &str, params: &SamplingParams, n: usize) -> Result<Vec<Completion>, LlmError> {
        let _slot = self.gate.as_ref().map(|g| g.acquire());
        self.pace();

        let body = CompletionRequest {
            model: &self.config.model,
            prompt,
            temperature: params.temperature,
            n,
            max_tokens: params.max_tokens,
            logprobs: 1,
            stop: &params.stop,
        };
        let mut request = self.client.post(&self.config.endpoint).json(&body);
        if let Some(key) = &self.api_key {
            request = request.bearer_auth(key);
        }
        let response = request
            .send()
            .map_err(|e| LlmError::ProviderUnavailable(e.to_string()))?;

        let status = response.status();
        if status.as_u16() == 429 {
            let retry_after_secs = response
                .headers()
                .get("retry-after")
                .and_then(|v| v.to_str().ok())
                .and_then(|v| v.parse::<u64>().ok());
            return Err(LlmError::RateLimited { retry_after_secs });
        }
        if status.is_server_error() {
            return Err(LlmError::ProviderUnavailable(format!("server returned {status}")));
        }
        if !status.is_success() {
            let detail = response.text().unwrap_or_default();
            return Err(LlmError::ProviderRejected(format!(
                "{status}: {}",
                detail.chars().take(300).collect::<String>()
            )));
        }

        let parsed: CompletionResponse = response
            .json()
            .map_err(|e| LlmError::ProviderRejected(format!("malformed response JSON: {e}")))?;
        parsed
            .choices
            .into_iter()
            .map(|choice| completion_from_choice(choice, &params.stop))
            .collect()
    }

    /// Enforce the minimum spacing between request starts.
    fn pace(&self) {
        let Some(interval) = self.config.min_request_interval_ms else {
            return;
        };
        let interval = Duration::from_millis(interval);
        let mut last = self.pacer.lock().expect("pacer lock");
        if let Some(previous) = *last {
            let elapsed = previous.elapsed();
            if elapsed < interval {
                std::thread::sleep(interval - elapsed);
            }
        }
        *last = Some(Instant::now());
    }

    fn with_retries(&self, prompt: &str, params: &SamplingParams, n: usize) -> Result<Vec<Completion>, LlmError> {
        let mut attempt = 0;
        loop {
            attempt += 1;
            match self.request_once(prompt, params, n) {
                Ok(completions) => return Ok(completions),
                Err(e @ LlmError::ProviderRejected(_)) | Err(e @ LlmError::ConfigError(_)) => {
                    return Err(e)
                }
                Err(LlmError::RateLimited { retry_after_secs }) if attempt < self.config.max_attempts => {
                    let wait = retry_after_secs
                        .map(Duration::from_secs)
                        .unwrap_or_else(|| self.backoff_delay(attempt));
                    std::thread::sleep(wait);
                }
                Err(LlmError::ProviderUnavailable(_)) if attempt < self.config.max_attempts => {
                    std::thread::sleep(self.backoff_delay(attempt));
                }
                Err(e) => return Err(e),
            }
        }
    }

    fn backoff_delay(&self, attempt: u32) -> Duration {
        Duration::from_millis(self.config.backoff_base_ms << (attempt - 1).min(8))
    }
}

impl CompletionProvider for RemoteProvider {
    fn id(&self) -> &str {
        &self.id
    }

    fn complete(&self, prompt: &str, params: &SamplingParams) -> Result<Vec<Completion>, LlmError> {
        params.validate()?;
        if self.config.supports_n {
            self.with_retries(prompt, params, params.n)
        } else {
            let mut out = Vec::with_capacity(params.n);
            for _ in 0..params.n {
                out.extend(self.with_retries(prompt, params, 1)?);
            }
            Ok(out)
        }
    }
}

#[derive(Serialize)]
struct CompletionRequest<'a> {
    model: &'a str,
    prompt: &'a str,
    temperature: f64,
    n: usize,
    max_tokens: usize,
    logprobs: u32,
    stop: &'a [String],
}

#[derive(Deserialize)]
struct CompletionResponse {
    choices: Vec<Choice>,
}

#[derive(Deserialize)]
struct Choice {
    text: String,
    #[serde(default)]
    logprobs: Option<ChoiceLogprobs>,
    #[serde(default)]
    finish_reason: Option<String>,
}

#[derive(Deserialize)]
struct ChoiceLogprobs {
    #[serde(default)]
    tokens: Vec<String>,
    #[serde(default)]
    token_logprobs: Vec<Option<f64>>,
}

fn completion_from_choice(choice: Choice, stop: &[String]) -> Result<Completion, LlmError> {
    let logprobs = choice.logprobs.ok_or_else(|| {
        LlmError::ProviderRejected(
            "response carries no logprobs; the endpoint must support `logprobs`".to_string(),
        )
    })?;
    let mut token_logprobs: Vec<(String, f64)> = logprobs
        .tokens
        .into_iter()
        .zip(logprobs.token_logprobs)
        // A null logprob (some servers send one for the first token) counts
        // as certainty; clamp stray positives for the same reason.
        .map(|(token, lp)| (token, lp.unwrap_or(0.0).min(0.0)))
        .collect();

    // Defensive: servers are supposed to exclude the stop sequence, but if
    // one echoes it, cut the text (and the tokens that fall past the cut).
    let mut text = choice.text;
    let mut finish = match choice.finish_reason.as_deref() {
        Some("stop") => FinishReason::Stop,
        Some("length") => FinishReason::Length,
        _ => FinishReason::ProviderEnd,
    };
    if let Some(cut) = stop.iter().filter_map(|s| text.find(s.as_str())).min() {
        text.truncate(cut);
        finish = FinishReason::Stop;
        let mut consumed = 0;
        token_logprobs.retain(|(token, _)| {
            let keep = consumed < cut;
            consumed += token.len();
            keep
        });
    }

    let completion = Completion {
        text,
        token_logprobs,
        finish,
    };
    completion
        .validate()
        .map_err(|e| LlmError::ProviderRejected(format!("invalid completion in response: {e}")))?;
    Ok(completion)
}

/// Counting semaphore over (Mutex, Condvar); bounds concurrent requests.
struct InFlightGate {
    max: usize,
    count: Mutex<usize>,
    available: Condvar,
}

impl InFlightGate {
    fn new(max: usize) -> Self {
        InFlightGate {
            max: max.max(1),
            count: Mutex::new(0),
            available: Condvar::new(),
        }
    }

    fn acquire(&self) -> InFlightSlot<'_> {
        let mut count = self.count.lock().expect("gate lock");
        while *count >= self.max {
            count = self.available.wait(count).expect("gate wait");
        }
        *count += 1;
        InFlightSlot { gate: self }
    }
}

struct InFlightSlot<'a> {
    gate: &'a InFlightGate,
}

impl Drop for InFlightSlot<'_> {
    fn drop(&mut self) {
        let mut count = self.gate.count.lock().expect("gate lock");
        *count -= 1;
        self.gate.available.notify_one();
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_validation_catches_missing_fields() {
        assert!(RemoteProvider::new(RemoteConfig::default()).is_err());
        let no_model = RemoteConfig {
            endpoint: "http://localhost:1/v1/completions".to_string(),
            ..RemoteConfig::default()
        };
        assert!(RemoteProvider::new(no_model).is_err());
    }

    #[test]
    fn missing_api_key_env_is_a_config_error() {
        let config = RemoteConfig {
            endpoint: "http://localhost:1/v1/completions".to_string(),
            model: "m".to_string(),
            api_key_env: Some("MENDER_TEST_KEY_THAT_IS_NOT_SET".to_string()),
            ..RemoteConfig::default()
        };
        assert!(matches!(RemoteProvider::new(config), Err(LlmError::ConfigError(_))));
    }

    #[test]
    fn choice_parsing_zips_tokens_with_logprobs() {
        let choice = Choice {
            text: "ab".to_string(),
            logprobs: Some(ChoiceLogprobs {
                tokens: vec!["a".to_string(), "b".to_string()],
                token_logprobs: vec![None, Some(-0.5)],
            }),
            finish_reason: Some("stop".to_string()),
        };
        let completion = completion_from_choice(choice, &[]).unwrap();
        assert_eq!(completion.token_logprobs, vec![("a".to_string(), 0.0), ("b".to_string(), -0.5)]);
        assert_eq!(completion.finish, FinishReason::Stop);
    }

    #[test]
    fn echoed_stop_sequence_is_cut_from_text_and_tokens() {
        let choice = Choice {
            text: "fix\n### Buggy".to_string(),
            logprobs: Some(ChoiceLogprobs {
                tokens: vec!["fix".to_string(), "\n".to_string(), "### ".to_string(), "Buggy".to_string()],
                token_logprobs: vec![Some(-0.1), Some(-0.2), Some(-0.3), Some(-0.4)],
            }),
            finish_reason: Some("length".to_string()),
        };
        let completion = completion_from_choice(choice, &["### ".to_string()]).unwrap();
        assert_eq!(completion.text, "fix\n");
        assert_eq!(completion.token_logprobs.len(), 2);
        assert_eq!(completion.finish, FinishReason::Stop);
    }

    #[test]
    fn missing_logprobs_is_a_rejection() {
        let choice = Choice {
            text: "x".to_string(),
            logprobs: None,
            finish_reason: None,
        };
        assert!(matches!(
            completion_from_choice(choice, &[]),
            Err(LlmError::ProviderRejected(_))
        ));
    }

    #[test]
    fn in_flight_gate_bounds_concurrency() {
        use std::sync::atomic::{AtomicUsize, Ordering};
        let gate = InFlightGate::new(2);
        let live = AtomicUsize::new(0);
        let peak = AtomicUsize::new(0);
        std::thread::scope(|scope| {
            for _ in 0..8 {
                scope.spawn(|| {
                    let _slot = gate.acquire();
                    let now = live.fetch_add(1, Ordering::SeqCst) + 1;
                    peak.fetch_max(now, Ordering::SeqCst);
                    std::thread::sleep(Duration::from_millis(10));
                    live.fetch_sub(1, Ordering::SeqCst);
                });
            }
        });
        assert!(peak.load(Ordering::SeqCst) <= 2);
    }
}
