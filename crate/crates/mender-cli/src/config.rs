//! TOML configuration for the CLI and assembly of engine building blocks.
//!
//! Precedence is always: command-line flags > config file > built-in
//! defaults. Relative paths inside a config file are resolved against the
//! file's own directory, so a checked-in config keeps working from any
//! working directory. Secrets never appear in config files; remote
//! providers name an environment variable instead.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use serde::Deserialize;

use mender::bank::{
    Embedder, HashEmbedder, RemoteEmbedder, ShotStrategy, DEFAULT_HASH_DIM,
};
use mender::diag::{AdapterConfig, DiagnosticsSource, MessageStyle};
use mender::eval::toy::ToyValidator;
use mender::llm::{
    CachingProvider, Completion, CompletionProvider, LlmError, MockProvider, RemoteConfig,
    RemoteProvider, SamplingParams,
};
use mender::text::LanguageId;

/// Parsed config file plus the directory its relative paths resolve
/// against.
#[derive(Debug, Default)]
pub struct LoadedConfig {
    pub file: FileConfig,
    base_dir: PathBuf,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub provider: Option<ProviderSection>,
    pub embedding: Option<EmbeddingSection>,
    pub defaults: Option<DefaultsSection>,
    #[serde(default)]
    pub languages: BTreeMap<String, LanguageSection>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProviderKind {
    Mock,
    Remote,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProviderSection {
    pub kind: ProviderKind,
    /// Completion script for the mock provider.
    pub script: Option<PathBuf>,
    pub endpoint: Option<String>,
    pub model: Option<String>,
    pub api_key_env: Option<String>,
    pub supports_n: Option<bool>,
    pub max_attempts: Option<u32>,
    pub backoff_base_ms: Option<u64>,
    pub request_timeout_secs: Option<u64>,
    pub max_in_flight: Option<usize>,
    pub min_request_interval_ms: Option<u64>,
    /// Enables the on-disk completion cache.
    pub cache_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EmbeddingKind {
    Hash,
    Remote,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EmbeddingSection {
    pub kind: EmbeddingKind,
    pub dim: Option<usize>,
    pub endpoint: Option<String>,
    pub model: Option<String>,
    pub api_key_env: Option<String>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DefaultsSection {
    pub strategy: Option<String>,
    pub shots: Option<usize>,
    pub message_style: Option<String>,
    pub temperature: Option<f64>,
    pub n: Option<usize>,
    pub max_tokens: Option<usize>,
    pub max_prompt_chars: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LanguageSection {
    /// Diagnostics adapter config (TOML), resolved relative to this file.
    pub adapter: Option<PathBuf>,
    /// Default example bank for smart shot selection.
    pub bank: Option<PathBuf>,
    /// Default fixed-shot pairs (JSONL) for `--strategy fixed`.
    pub shots_file: Option<PathBuf>,
    /// Wire the built-in toy validator instead of an external adapter.
    #[serde(default)]
    pub builtin_validator: bool,
}

impl LoadedConfig {
    /// Read and parse `path`; a missing file is an error (the caller chose
    /// to pass it), but calling with `None` yields an empty config.
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else {
            return Ok(LoadedConfig::default());
        };
        let text = fs::read_to_string(path)
            .with_context(|| format!("cannot read config file `{}`", path.display()))?;
        let file: FileConfig = toml::from_str(&text)
            .with_context(|| format!("invalid config file `{}`", path.display()))?;
        let base_dir = path
            .parent()
            .filter(|p| !p.as_os_str().is_empty())
            .map(Path::to_path_buf)
            .unwrap_or_else(|| PathBuf::from("."));
        Ok(LoadedConfig { file, base_dir })
    }

    /// Resolve a path from the config file against the file's directory.
    pub fn resolve(&self, path: &Path) -> PathBuf {
        if path.is_absolute() {
            path.to_path_buf()
        } else {
            self.base_dir.join(path)
        }
    }

    pub fn language_section(&self, language: &LanguageId) -> Option<&LanguageSection> {
        self.file.languages.get(language.as_str())
    }

    /// Diagnostics source for `language`: an explicit `--adapter` flag wins,
    /// then the config file's adapter path, then the built-in toy validator
    /// (automatic for the `toy` language). `None` means genuinely
    /// unconfigured.
    pub fn build_diagnostics(
        &self,
        language: &LanguageId,
        adapter_flag: Option<&Path>,
    ) -> Result<Option<Arc<dyn DiagnosticsSource>>> {
        if let Some(path) = adapter_flag {
            return Ok(Some(load_adapter(path, language)?));
        }
        let section = self.language_section(language);
        if let Some(path) = section.and_then(|s| s.adapter.as_deref()) {
            return Ok(Some(load_adapter(&self.resolve(path), language)?));
        }
        let builtin = section.map_or(language.as_str() == "toy", |s| s.builtin_validator);
        if builtin {
            if language.as_str() != "toy" {
                bail!(
                    "builtin_validator is only available for the `toy` language, \
                     not `{language}`"
                );
            }
            return Ok(Some(Arc::new(ToyValidator::new())));
        }
        Ok(None)
    }

    /// Completion provider: `--mock-script` wins, then the `[provider]`
    /// section. A cache directory (flag or config) wraps the provider in
    /// the on-disk cache.
    pub fn build_provider(
        &self,
        mock_script: Option<&Path>,
        cache_dir: Option<&Path>,
    ) -> Result<Arc<dyn CompletionProvider>> {
        let inner: Arc<dyn CompletionProvider> = if let Some(script) = mock_script {
            Arc::new(
                MockProvider::from_script_file(script)
                    .with_context(|| format!("cannot load mock script `{}`", script.display()))?,
            )
        } else {
            let Some(section) = self.file.provider.as_ref() else {
                bail!(
                    "no completion provider configured: add a [provider] section \
                     to the config file or pass --mock-script"
                );
            };
            match section.kind {
                ProviderKind::Mock => {
                    let Some(script) = section.script.as_deref() else {
                        bail!("provider kind is `mock` but [provider].script is not set");
                    };
                    let script = self.resolve(script);
                    Arc::new(MockProvider::from_script_file(&script).with_context(|| {
                        format!("cannot load mock script `{}`", script.display())
                    })?)
                }
                ProviderKind::Remote => {
                    let endpoint = section.endpoint.clone().ok_or_else(|| {
                        anyhow::anyhow!("provider kind is `remote` but [provider].endpoint is not set")
                    })?;
                    let model = section.model.clone().ok_or_else(|| {
                        anyhow::anyhow!("provider kind is `remote` but [provider].model is not set")
                    })?;
                    let defaults = RemoteConfig::default();
                    let config = RemoteConfig {
                        endpoint,
                        model,
                        api_key_env: section.api_key_env.clone(),
                        supports_n: section.supports_n.unwrap_or(defaults.supports_n),
                        max_attempts: section.max_attempts.unwrap_or(defaults.max_attempts),
                        backoff_base_ms: section
                            .backoff_base_ms
                            .unwrap_or(defaults.backoff_base_ms),
                        request_timeout_secs: section
                            .request_timeout_secs
                            .unwrap_or(defaults.request_timeout_secs),
                        max_in_flight: section.max_in_flight.or(defaults.max_in_flight),
                        min_request_interval_ms: section
                            .min_request_interval_ms
                            .or(defaults.min_request_interval_ms),
                    };
                    Arc::new(RemoteProvider::new(config)?)
                }
            }
        };

        let cache_dir = cache_dir.map(Path::to_path_buf).or_else(|| {
            self.file
                .provider
                .as_ref()
                .and_then(|s| s.cache_dir.as_deref())
                .map(|p| self.resolve(p))
        });
        match cache_dir {
            Some(dir) => Ok(Arc::new(CachingProvider::new(inner, dir)?)),
            None => Ok(inner),
        }
    }

    /// Embedder from the `[embedding]` section; defaults to the hash
    /// embedder at its standard dimension when the section is missing.
    pub fn build_embedder(&self) -> Result<Arc<dyn Embedder>> {
        let Some(section) = self.file.embedding.as_ref() else {
            return Ok(Arc::new(HashEmbedder::new(DEFAULT_HASH_DIM)));
        };
        match section.kind {
            EmbeddingKind::Hash => Ok(Arc::new(HashEmbedder::new(
                section.dim.unwrap_or(DEFAULT_HASH_DIM),
            ))),
            EmbeddingKind::Remote => {
                let endpoint = section.endpoint.clone().ok_or_else(|| {
                    anyhow::anyhow!("embedding kind is `remote` but [embedding].endpoint is not set")
                })?;
                let model = section.model.clone().ok_or_else(|| {
                    anyhow::anyhow!("embedding kind is `remote` but [embedding].model is not set")
                })?;
                Ok(Arc::new(RemoteEmbedder::new(
                    endpoint,
                    model,
                    section.api_key_env.as_deref(),
                    section.dim,
                )?))
            }
        }
    }
}

fn load_adapter(path: &Path, language: &LanguageId) -> Result<Arc<dyn DiagnosticsSource>> {
    let text = fs::read_to_string(path)
        .with_context(|| format!("cannot read adapter config `{}`", path.display()))?;
    let adapter = AdapterConfig::from_toml_str(&text)
        .with_context(|| format!("invalid adapter config `{}`", path.display()))?;
    if adapter.language() != language {
        bail!(
            "adapter `{}` diagnoses `{}`, not `{}`",
            path.display(),
            adapter.language(),
            language
        );
    }
    Ok(Arc::new(adapter))
}

/// Parse a shot-selection strategy name as used on the command line and in
/// config files.
pub fn parse_strategy(name: &str) -> Result<ShotStrategy> {
    match name {
        "none" => Ok(ShotStrategy::None),
        "fixed" => Ok(ShotStrategy::Fixed),
        "error-vector" | "error_vector" => Ok(ShotStrategy::ErrorVector),
        "embedding" => Ok(ShotStrategy::Embedding),
        other => bail!(
            "unknown strategy `{other}` (expected none, fixed, error-vector, or embedding)"
        ),
    }
}

/// Parse a message style; `none` means prompts carry no error message.
pub fn parse_message_style(name: &str) -> Result<Option<MessageStyle>> {
    match name {
        "detailed" => Ok(Some(MessageStyle::Detailed)),
        "abstracted" => Ok(Some(MessageStyle::Abstracted)),
        "none" => Ok(None),
        other => bail!("unknown message style `{other}` (expected detailed, abstracted, or none)"),
    }
}

/// Everything the engine needs, resolved from flags, file, and defaults.
/// Kept as one struct so `--verbose` can print the effective values.
pub struct Effective {
    pub strategy: ShotStrategy,
    pub shots: usize,
    pub message_style: Option<MessageStyle>,
    pub max_prompt_chars: usize,
    pub sampling: SamplingParams,
}

pub struct EffectiveOverrides<'a> {
    pub strategy: Option<&'a str>,
    pub shots: Option<usize>,
    pub message_style: Option<&'a str>,
    pub temperature: Option<f64>,
    pub n: Option<usize>,
    pub max_tokens: Option<usize>,
    pub max_prompt_chars: Option<usize>,
}

impl Effective {
    pub fn resolve(config: &LoadedConfig, flags: &EffectiveOverrides) -> Result<Effective> {
        let defaults = config.file.defaults.as_ref();
        let strategy = match flags.strategy.or(defaults.and_then(|d| d.strategy.as_deref())) {
            Some(name) => parse_strategy(name)?,
            None => ShotStrategy::None,
        };
        let message_style = match flags
            .message_style
            .or(defaults.and_then(|d| d.message_style.as_deref()))
        {
            Some(name) => parse_message_style(name)?,
            None => Some(MessageStyle::Detailed),
        };
        let base = SamplingParams::default();
        let sampling = SamplingParams {
            temperature: flags
                .temperature
                .or(defaults.and_then(|d| d.temperature))
                .unwrap_or(base.temperature),
            n: flags.n.or(defaults.and_then(|d| d.n)).unwrap_or(base.n),
            max_tokens: flags
                .max_tokens
                .or(defaults.and_then(|d| d.max_tokens))
                .unwrap_or(base.max_tokens),
            stop: base.stop,
        };
        // Shots are meaningless without a selection strategy; zero keeps the
        // zero-shot config valid whatever the file's shot default says.
        let shots = if strategy == ShotStrategy::None {
            0
        } else {
            flags.shots.or(defaults.and_then(|d| d.shots)).unwrap_or(2)
        };
        Ok(Effective {
            strategy,
            shots,
            message_style,
            max_prompt_chars: flags
                .max_prompt_chars
                .or(defaults.and_then(|d| d.max_prompt_chars))
                .unwrap_or(mender::prompt::DEFAULT_MAX_PROMPT_CHARS),
            sampling,
        })
    }

    /// One-line-per-field rendering for `--verbose`.
    pub fn render(&self, language: &LanguageId, provider_id: &str) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "language          = {language}");
        let _ = writeln!(out, "provider          = {provider_id}");
        let _ = writeln!(out, "strategy          = {:?}", self.strategy);
        let _ = writeln!(out, "shots             = {}", self.shots);
        let style = match self.message_style {
            Some(MessageStyle::Detailed) => "detailed",
            Some(MessageStyle::Abstracted) => "abstracted",
            None => "none",
        };
        let _ = writeln!(out, "message_style     = {style}");
        let _ = writeln!(out, "max_prompt_chars  = {}", self.max_prompt_chars);
        let _ = writeln!(out, "temperature       = {}", self.sampling.temperature);
        let _ = writeln!(out, "n                 = {}", self.sampling.n);
        let _ = writeln!(out, "max_tokens        = {}", self.sampling.max_tokens);
        out
    }
}

/// Placeholder provider for `--show-prompt`: building an engine requires a
/// provider, but prompt preview must never call one.
pub struct PromptOnlyProvider;

impl CompletionProvider for PromptOnlyProvider {
    fn id(&self) -> &str {
        "prompt-only"
    }

    fn complete(&self, _prompt: &str, _params: &SamplingParams) -> Result<Vec<Completion>, LlmError> {
        Err(LlmError::ConfigError(
            "prompt preview mode has no completion provider".to_string(),
        ))
    }
}
