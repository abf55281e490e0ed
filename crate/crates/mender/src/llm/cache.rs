//! Content-addressed completion cache.
//!
//! Provider calls are the slow, non-deterministic, possibly-billed part of
//! the pipeline, so the eval harness caches them on disk. A cache file is
//! keyed by prompt hash plus a fingerprint of the provider and sampling
//! params; re-running an evaluation with an unchanged setup replays entirely
//! from disk.

use std::path::PathBuf;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{
    params_fingerprint, prompt_fingerprint, Completion, CompletionProvider, LlmError,
    SamplingParams,
};

#[derive(Serialize, Deserialize)]
struct CacheFile {
    schema_version: u32,
    provider: String,
    prompt_sha256: String,
    params: SamplingParams,
    completions: Vec<Completion>,
}

const CACHE_SCHEMA_VERSION: u32 = 1;

/// Wraps any provider with a read-through disk cache.
pub struct CachingProvider {
    inner: Arc<dyn CompletionProvider>,
    dir: PathBuf,
    hits: AtomicU64,
    misses: AtomicU64,
}

impl CachingProvider {
    pub fn new(inner: Arc<dyn CompletionProvider>, dir: impl Into<PathBuf>) -> Result<Self, LlmError> {
        let dir = dir.into();
        std::fs::create_dir_all(&dir)
            .map_err(|e| LlmError::Cache(format!("cannot create cache dir {dir:?}: {e}")))?;
        Ok(CachingProvider {
            inner,
            dir,
            hits: AtomicU64::new(0),
            misses: AtomicU64::new(0),
        })
    }

    pub fn hits(&self) -> u64 {
        self.hits.load(Ordering::Relaxed)
    }

    pub fn misses(&self) -> u64 {
        self.misses.load(Ordering::Relaxed)
    }

    fn path_for(&self, prompt_hash: &str, params: &SamplingParams) -> PathBuf {
        let key = format!("{}-{}", prompt_hash, params_fingerprint(self.inner.id(), params));
        self.dir.join(format!("{key}.json"))
    }
}

impl CompletionProvider for CachingProvider {
    /// Transparent: the cache does not change what provider the results are
    /// attributed to.
    fn id(&self) -> &str {
        self.inner.id()
    }

    fn complete(&self, prompt: &str, params: &SamplingParams) -> Result<Vec<Completion>, LlmError> {
        let prompt_hash = prompt_fingerprint(prompt);
        let path = self.path_for(&prompt_hash, params);

        if let Ok(bytes) = std::fs::read(&path) {
            match serde_json::from_slice::<CacheFile>(&bytes) {
                Ok(file) if file.schema_version == CACHE_SCHEMA_VERSION => {
                    self.hits.fetch_add(1, Ordering::Relaxed);
                    return Ok(file.completions);
                }
                // Stale or corrupt entry: fall through and overwrite it.
                _ => {}
            }
        }

        let completions = self.inner.complete(prompt, params)?;
        self.misses.fetch_add(1, Ordering::Relaxed);

        let file = CacheFile {
            schema_version: CACHE_SCHEMA_VERSION,
            provider: self.inner.id().to_string(),
            prompt_sha256: prompt_hash,
            params: params.clone(),
            completions: completions.clone(),
        };
        let body = serde_json::to_vec_pretty(&file)
            .map_err(|e| LlmError::Cache(format!("cannot serialize cache entry: {e}")))?;
        // Write-then-rename so concurrent readers never see a torn file.
        let tmp = path.with_extension(format!("tmp-{}", std::process::id()));
        std::fs::write(&tmp, body)
            .and_then(|()| std::fs::rename(&tmp, &path))
            .map_err(|e| LlmError::Cache(format!("cannot write cache entry {path:?}: {e}")))?;
        Ok(completions)
    }
}
