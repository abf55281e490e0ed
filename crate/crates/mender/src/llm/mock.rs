//! A scripted provider for offline tests and deterministic evaluation runs.
//!
//! A script maps prompts to ordered completion lists. Matchers, tried in
//! script order, first match wins:
//!
//! * `fingerprint` — SHA-256 hex of the entire prompt text (see
//!   [`prompt_fingerprint`](super::prompt_fingerprint));
//! * `contains` — a substring of the prompt (handy for keying on the target
//!   program, which appears verbatim);
//! * `wildcard` — matches any prompt.
//!
//! A prompt no entry matches is a [`LlmError::ProviderRejected`], so a test
//! with a stale script fails loudly instead of silently producing nothing.
//!
//! When `n` exceeds the scripted list, completions cycle from the start with
//! every token logprob lowered by 0.01 per full cycle — repeats stay valid
//! but rank strictly below the originals, keeping the ranking order total.

use std::path::Path;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::{
    prompt_fingerprint, Completion, CompletionProvider, FinishReason, LlmError, SamplingParams,
};

pub const MOCK_SCRIPT_VERSION: u32 = 1;
const CYCLE_PENALTY: f64 = 0.01;

#[derive(Debug, Serialize, Deserialize)]
struct Script {
    #[serde(default = "default_version")]
    schema_version: u32,
    entries: Vec<ScriptEntry>,
}

fn default_version() -> u32 {
    MOCK_SCRIPT_VERSION
}

#[derive(Debug, Serialize, Deserialize)]
struct ScriptEntry {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    fingerprint: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    contains: Option<String>,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    wildcard: bool,
    completions: Vec<ScriptCompletion>,
}

impl ScriptEntry {
    fn matches(&self, prompt: &str, fingerprint: &str) -> bool {
        if let Some(expected) = &self.fingerprint {
            return expected == fingerprint;
        }
        if let Some(needle) = &self.contains {
            return prompt.contains(needle);
        }
        self.wildcard
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct ScriptCompletion {
    text: String,
    token_logprobs: Vec<(String, f64)>,
    #[serde(default = "default_finish")]
    finish: FinishReason,
}

fn default_finish() -> FinishReason {
    FinishReason::Stop
}

/// Deterministic scripted provider. Identical script, prompt, and params
/// always produce identical completions, across calls and across runs.
pub struct MockProvider {
    script: Script,
    calls: Mutex<u64>,
}

impl MockProvider {
    pub fn from_script_file(path: &Path) -> Result<Self, LlmError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| LlmError::ConfigError(format!("cannot read mock script {path:?}: {e}")))?;
        Self::from_script_str(&text)
    }

    pub fn from_script_str(text: &str) -> Result<Self, LlmError> {
        let script: Script = serde_json::from_str(text)
            .map_err(|e| LlmError::ConfigError(format!("malformed mock script: {e}")))?;
        if script.schema_version != MOCK_SCRIPT_VERSION {
            return Err(LlmError::ConfigError(format!(
                "mock script schema version {} is not supported (expected {MOCK_SCRIPT_VERSION})",
                script.schema_version
            )));
        }
        for (i, entry) in script.entries.iter().enumerate() {
            let matchers = usize::from(entry.fingerprint.is_some())
                + usize::from(entry.contains.is_some())
                + usize::from(entry.wildcard);
            if matchers != 1 {
                return Err(LlmError::ConfigError(format!(
                    "script entry #{i} must have exactly one of fingerprint/contains/wildcard"
                )));
            }
            if entry.completions.is_empty() {
                return Err(LlmError::ConfigError(format!(
                    "script entry #{i} has no completions"
                )));
            }
            for completion in &entry.completions {
                let check = Completion {
                    text: completion.text.clone(),
                    token_logprobs: completion.token_logprobs.clone(),
                    finish: completion.finish,
                };
                check
                    .validate()
                    .map_err(|e| LlmError::ConfigError(format!("script entry #{i}: {e}")))?;
            }
        }
        Ok(MockProvider {
            script,
            calls: Mutex::new(0),
        })
    }

    /// How many completion calls this provider has served; lets tests assert
    /// that a cache hit issued no call.
    pub fn calls(&self) -> u64 {
        *self.calls.lock().expect("calls lock")
    }
}

impl CompletionProvider for MockProvider {
    fn id(&self) -> &str {
        "mock"
    }

    fn complete(&self, prompt: &str, params: &SamplingParams) -> Result<Vec<Completion>, LlmError> {
        params.validate()?;
        *self.calls.lock().expect("calls lock") += 1;

        let fingerprint = prompt_fingerprint(prompt);
        let entry = self
            .script
            .entries
            .iter()
            .find(|e| e.matches(prompt, &fingerprint))
            .ok_or_else(|| {
                LlmError::ProviderRejected(format!(
                    "no scripted completions match prompt {}…",
                    &fingerprint[..12]
                ))
            })?;

        let scripted = &entry.completions;
        let completions = (0..params.n)
            .map(|i| {
                let base = &scripted[i % scripted.len()];
                let cycle = (i / scripted.len()) as f64;
                Completion {
                    text: base.text.clone(),
                    token_logprobs: base
                        .token_logprobs
                        .iter()
                        .map(|(tok, lp)| (tok.clone(), lp - CYCLE_PENALTY * cycle))
                        .collect(),
                    finish: base.finish,
                }
            })
            .collect();
        Ok(completions)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn script() -> String {
        serde_json::json!({
            "schema_version": 1,
            "entries": [
                {
                    "contains": "x = (1",
                    "completions": [
                        {"text": "x = (1)", "token_logprobs": [["x", -0.1], [" = (1)", -0.2]]},
                        {"text": "x = 1", "token_logprobs": [["x", -0.5], [" = 1", -0.5]]}
                    ]
                },
                {
                    "wildcard": true,
                    "completions": [
                        {"text": "pass", "token_logprobs": [["pass", -1.0]], "finish": "length"}
                    ]
                }
            ]
        })
        .to_string()
    }

    #[test]
    fn first_matching_entry_wins() {
        let mock = MockProvider::from_script_str(&script()).unwrap();
        let params = SamplingParams { n: 1, ..SamplingParams::default() };
        let hit = mock.complete("### Buggy Toy\nx = (1\n### Fixed Toy\n", &params).unwrap();
        assert_eq!(hit[0].text, "x = (1)");
        let wild = mock.complete("something else entirely", &params).unwrap();
        assert_eq!(wild[0].text, "pass");
        assert_eq!(wild[0].finish, FinishReason::Length);
    }

    #[test]
    fn fingerprint_matching_keys_on_exact_prompt() {
        let prompt = "exact prompt text";
        let script = serde_json::json!({
            "entries": [{
                "fingerprint": prompt_fingerprint(prompt),
                "completions": [{"text": "ok", "token_logprobs": [["ok", -0.3]]}]
            }]
        })
        .to_string();
        let mock = MockProvider::from_script_str(&script).unwrap();
        let params = SamplingParams::default();
        assert_eq!(mock.complete(prompt, &params).unwrap()[0].text, "ok");
        assert!(matches!(
            mock.complete("different prompt", &params),
            Err(LlmError::ProviderRejected(_))
        ));
    }

    #[test]
    fn cycling_penalizes_each_repeat_by_a_hundredth() {
        let mock = MockProvider::from_script_str(&script()).unwrap();
        let params = SamplingParams { n: 5, ..SamplingParams::default() };
        let out = mock.complete("x = (1", &params).unwrap();
        assert_eq!(out.len(), 5);
        // Entries 2 and 3 are the first repeats (cycle 1), 4 is cycle 2.
        assert_eq!(out[2].text, out[0].text);
        let base = out[0].mean_logprob().unwrap();
        let repeat = out[2].mean_logprob().unwrap();
        assert!((base - repeat - 0.01).abs() < 1e-12);
        let second_repeat = out[4].mean_logprob().unwrap();
        assert!((base - second_repeat - 0.02).abs() < 1e-12);
    }

    #[test]
    fn repeated_calls_are_identical_and_counted() {
        let mock = MockProvider::from_script_str(&script()).unwrap();
        let params = SamplingParams { n: 3, ..SamplingParams::default() };
        let first = mock.complete("x = (1", &params).unwrap();
        let second = mock.complete("x = (1", &params).unwrap();
        assert_eq!(first, second);
        assert_eq!(mock.calls(), 2);
    }

    #[test]
    fn script_validation_rejects_bad_entries() {
        // Two matchers at once.
        let double = serde_json::json!({
            "entries": [{"contains": "a", "wildcard": true,
                         "completions": [{"text": "x", "token_logprobs": [["x", -0.1]]}]}]
        });
        assert!(MockProvider::from_script_str(&double.to_string()).is_err());

        // Positive logprob.
        let positive = serde_json::json!({
            "entries": [{"wildcard": true,
                         "completions": [{"text": "x", "token_logprobs": [["x", 0.1]]}]}]
        });
        assert!(MockProvider::from_script_str(&positive.to_string()).is_err());

        // No completions.
        let empty = serde_json::json!({"entries": [{"wildcard": true, "completions": []}]});
        assert!(MockProvider::from_script_str(&empty.to_string()).is_err());
    }
}
