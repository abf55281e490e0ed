//! The example bank: curated and mined buggy/fixed pairs, each stored with
//! the diagnostics of its buggy side, an error-category vector, and
//! optionally an embedding of its rendered message. Shot selection retrieves
//! the most similar entries for a new failure.
//!
//! Banks are small (hundreds of entries), so retrieval is an exact linear
//! scan — no approximate index to tune or to make results drift.

mod embed;

pub use embed::{
    cosine_similarity, Embedder, EmbeddingVector, HashEmbedder, RemoteEmbedder, DEFAULT_HASH_DIM,
};

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::diag::{
    error_vector, render_message, DiagError, DiagnosticReport, DiagnosticsSource, MessageStyle,
};
use crate::text::{LanguageId, SourceProgram};

pub const BANK_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum BankError {
    #[error("embedding dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("cosine similarity is undefined for a zero vector")]
    ZeroVector,
    #[error("the example bank is empty")]
    EmptyBank,
    #[error("bank embeddings come from `{bank}` but the query embedder is `{query}`")]
    MixedProvider { bank: String, query: String },
    #[error("embedding provider unavailable: {0}")]
    EmbeddingUnavailable(String),
    #[error("invalid embedding: {0}")]
    InvalidEmbedding(String),
    #[error("bank schema version {found} is not supported (expected {expected}); re-build the bank")]
    SchemaVersion { found: u32, expected: u32 },
    #[error("invalid bank entry: {0}")]
    InvalidEntry(String),
    #[error("invalid pair: {0}")]
    InvalidPair(String),
    #[error("{0}")]
    Selection(String),
    #[error(transparent)]
    Diag(#[from] DiagError),
    #[error("bank i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("bank serialization error: {0}")]
    Json(#[from] serde_json::Error),
}

/// Where a pair came from. Bootstrapped pairs were produced by the engine
/// itself and accepted because the candidate passed diagnostics.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PairSource {
    Forum,
    Telemetry,
    Curated,
    Bootstrapped,
}

/// A buggy program and its known fix, in the same language and textually
/// distinct.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawPair", into = "RawPair")]
pub struct BuggyFixedPair {
    id: String,
    buggy: SourceProgram,
    fixed: SourceProgram,
    source: PairSource,
}

impl BuggyFixedPair {
    pub fn new(
        id: impl Into<String>,
        buggy: SourceProgram,
        fixed: SourceProgram,
        source: PairSource,
    ) -> Result<Self, BankError> {
        let id = id.into();
        if id.is_empty() {
            return Err(BankError::InvalidPair("pair id must be non-empty".to_string()));
        }
        if buggy.language != fixed.language {
            return Err(BankError::InvalidPair(format!(
                "pair `{id}` mixes languages `{}` and `{}`",
                buggy.language, fixed.language
            )));
        }
        if buggy.text == fixed.text {
            return Err(BankError::InvalidPair(format!(
                "pair `{id}` has identical buggy and fixed text"
            )));
        }
        Ok(BuggyFixedPair {
            id,
            buggy,
            fixed,
            source,
        })
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn buggy(&self) -> &SourceProgram {
        &self.buggy
    }

    pub fn fixed(&self) -> &SourceProgram {
        &self.fixed
    }

    pub fn source(&self) -> PairSource {
        self.source
    }

    pub fn language(&self) -> &LanguageId {
        &self.buggy.language
    }
}

/// Serde surface for [`BuggyFixedPair`]; constructor invariants are enforced
/// on deserialization too.
#[derive(Serialize, Deserialize)]
struct RawPair {
    id: String,
    #[serde(default = "default_source")]
    source: PairSource,
    buggy: SourceProgram,
    fixed: SourceProgram,
}

fn default_source() -> PairSource {
    PairSource::Curated
}

impl TryFrom<RawPair> for BuggyFixedPair {
    type Error = BankError;

    fn try_from(raw: RawPair) -> Result<Self, Self::Error> {
        BuggyFixedPair::new(raw.id, raw.buggy, raw.fixed, raw.source)
    }
}

impl From<BuggyFixedPair> for RawPair {
    fn from(pair: BuggyFixedPair) -> RawPair {
        RawPair {
            id: pair.id,
            source: pair.source,
            buggy: pair.buggy,
            fixed: pair.fixed,
        }
    }
}

/// One bank row: the pair plus everything retrieval needs, precomputed.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BankEntry {
    pub pair: BuggyFixedPair,
    pub report: DiagnosticReport,
    pub error_vec: Vec<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub embedding: Option<EmbeddingVector>,
}

/// How shots are chosen for a prompt. `None` means zero-shot; `Fixed` uses a
/// hand-picked set verbatim; the other two retrieve from the bank by
/// diagnostic similarity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShotStrategy {
    None,
    Fixed,
    ErrorVector,
    Embedding,
}

impl ShotStrategy {
    /// Strategies that consult the bank (and therefore need diagnostics for
    /// the query program).
    pub fn is_smart(self) -> bool {
        matches!(self, ShotStrategy::ErrorVector | ShotStrategy::Embedding)
    }
}

/// An in-memory example bank.
#[derive(Debug, Clone)]
pub struct ExampleBank {
    language: LanguageId,
    category_index: Vec<String>,
    embedding_provider: Option<String>,
    embedding_dim: Option<usize>,
    embed_style: MessageStyle,
    entries: Vec<BankEntry>,
}

#[derive(Serialize, Deserialize)]
struct BankHeader {
    schema_version: u32,
    language: LanguageId,
    category_index: Vec<String>,
    embedding_provider: Option<String>,
    embedding_dim: Option<usize>,
    #[serde(default = "default_embed_style")]
    embed_style: MessageStyle,
}

fn default_embed_style() -> MessageStyle {
    MessageStyle::Detailed
}

impl ExampleBank {
    /// Assemble a bank from already-computed parts, enforcing the stored
    /// invariants. `build_bank` and `load` are the usual constructors.
    pub fn from_parts(
        language: LanguageId,
        category_index: Vec<String>,
        embedding_provider: Option<String>,
        embed_style: MessageStyle,
        entries: Vec<BankEntry>,
    ) -> Result<Self, BankError> {
        let embedding_dim = entries.iter().find_map(|e| e.embedding.as_ref().map(|v| v.dim()));
        let bank = ExampleBank {
            language,
            category_index,
            embedding_provider,
            embedding_dim,
            embed_style,
            entries,
        };
        bank.validate()?;
        Ok(bank)
    }

    fn validate(&self) -> Result<(), BankError> {
        let mut seen = std::collections::BTreeSet::new();
        for entry in &self.entries {
            let id = entry.pair.id();
            if !seen.insert(id.to_string()) {
                return Err(BankError::InvalidEntry(format!("duplicate entry id `{id}`")));
            }
            if entry.pair.language() != &self.language {
                return Err(BankError::InvalidEntry(format!(
                    "entry `{id}` language `{}` differs from bank language `{}`",
                    entry.pair.language(),
                    self.language
                )));
            }
            entry.report.validate()?;
            if entry.report.exit_ok {
                return Err(BankError::InvalidEntry(format!(
                    "entry `{id}` has a clean report; bank entries must be buggy"
                )));
            }
            if entry.error_vec.len() != self.category_index.len() + 1 {
                return Err(BankError::InvalidEntry(format!(
                    "entry `{id}` error vector length {} does not fit category index of {}",
                    entry.error_vec.len(),
                    self.category_index.len()
                )));
            }
            match (&entry.embedding, self.embedding_provider.as_ref()) {
                (Some(v), Some(_)) => {
                    if Some(v.dim()) != self.embedding_dim {
                        return Err(BankError::InvalidEntry(format!(
                            "entry `{id}` embedding dim {} differs from bank dim {:?}",
                            v.dim(),
                            self.embedding_dim
                        )));
                    }
                }
                (Some(_), None) => {
                    return Err(BankError::InvalidEntry(format!(
                        "entry `{id}` has an embedding but the bank records no provider"
                    )));
                }
                (None, Some(_)) => {
                    return Err(BankError::InvalidEntry(format!(
                        "entry `{id}` lacks the embedding the bank provider promises"
                    )));
                }
                (None, None) => {}
            }
        }
        Ok(())
    }

    pub fn language(&self) -> &LanguageId {
        &self.language
    }

    pub fn category_index(&self) -> &[String] {
        &self.category_index
    }

    pub fn embedding_provider(&self) -> Option<&str> {
        self.embedding_provider.as_deref()
    }

    pub fn embed_style(&self) -> MessageStyle {
        self.embed_style
    }

    pub fn entries(&self) -> &[BankEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn source_counts(&self) -> BTreeMap<PairSource, usize> {
        let mut counts = BTreeMap::new();
        for entry in &self.entries {
            *counts.entry(entry.pair.source()).or_insert(0) += 1;
        }
        counts
    }

    /// Persist as JSONL: a header line with schema version, language,
    /// category index, and embedding provenance, then one entry per line.
    pub fn save(&self, path: &Path) -> Result<(), BankError> {
        let mut out = String::new();
        let header = BankHeader {
            schema_version: BANK_SCHEMA_VERSION,
            language: self.language.clone(),
            category_index: self.category_index.clone(),
            embedding_provider: self.embedding_provider.clone(),
            embedding_dim: self.embedding_dim,
            embed_style: self.embed_style,
        };
        out.push_str(&serde_json::to_string(&header)?);
        out.push('\n');
        for entry in &self.entries {
            out.push_str(&serde_json::to_string(entry)?);
            out.push('\n');
        }
        let mut file = fs::File::create(path)?;
        file.write_all(out.as_bytes())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, BankError> {
        let file = fs::File::open(path)?;
        let mut lines = BufReader::new(file).lines();
        let header_line = lines
            .next()
            .ok_or_else(|| BankError::InvalidEntry("bank file is empty (no header)".to_string()))??;
        let header: BankHeader = serde_json::from_str(&header_line)?;
        if header.schema_version != BANK_SCHEMA_VERSION {
            return Err(BankError::SchemaVersion {
                found: header.schema_version,
                expected: BANK_SCHEMA_VERSION,
            });
        }
        let mut entries = Vec::new();
        for line in lines {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            entries.push(serde_json::from_str::<BankEntry>(&line)?);
        }
        let bank = ExampleBank {
            language: header.language,
            category_index: header.category_index,
            embedding_provider: header.embedding_provider,
            embedding_dim: header.embedding_dim,
            embed_style: header.embed_style,
            entries,
        };
        bank.validate()?;
        Ok(bank)
    }
}

/// Options for [`build_bank`].
#[derive(Debug, Clone)]
pub struct BankBuildOptions {
    /// Which rendering of the diagnostics gets embedded.
    pub embed_style: MessageStyle,
}

impl Default for BankBuildOptions {
    fn default() -> Self {
        BankBuildOptions {
            embed_style: MessageStyle::Detailed,
        }
    }
}

/// A built bank plus non-fatal notes (pairs skipped because their buggy side
/// already passes diagnostics).
pub struct BankBuildOutcome {
    pub bank: ExampleBank,
    pub warnings: Vec<String>,
}

/// Diagnose every pair's buggy side, fix the category index (sorted set of
/// observed canonical categories), and precompute error vectors and message
/// embeddings.
///
/// Pairs whose buggy side produces no diagnostics are skipped with a
/// warning — they would poison retrieval. Tool unavailability or timeouts
/// abort the build; a bank built past a broken tool would be silently empty.
pub fn build_bank(
    pairs: Vec<BuggyFixedPair>,
    diag: &dyn DiagnosticsSource,
    embedder: Option<&dyn Embedder>,
    options: &BankBuildOptions,
) -> Result<BankBuildOutcome, BankError> {
    let language = diag.language().clone();
    let mut warnings = Vec::new();
    let mut diagnosed = Vec::new();
    for pair in pairs {
        if pair.language() != &language {
            return Err(BankError::InvalidPair(format!(
                "pair `{}` is `{}` but the adapter diagnoses `{}`",
                pair.id(),
                pair.language(),
                language
            )));
        }
        let report = diag.diagnose(pair.buggy())?;
        if report.exit_ok {
            warnings.push(format!(
                "skipping pair `{}`: buggy side already passes diagnostics",
                pair.id()
            ));
            continue;
        }
        diagnosed.push((pair, report));
    }

    let mut categories: Vec<String> = diagnosed
        .iter()
        .flat_map(|(_, report)| report.diagnostics.iter().map(|d| d.category.clone()))
        .collect();
    categories.sort();
    categories.dedup();

    let mut entries = Vec::with_capacity(diagnosed.len());
    for (pair, report) in diagnosed {
        let error_vec = error_vector(&report, &categories);
        let embedding = match embedder {
            Some(embedder) => {
                let message =
                    render_message(&report, options.embed_style, diag.abstraction_patterns())?;
                Some(embedder.embed(&message)?)
            }
            None => None,
        };
        entries.push(BankEntry {
            pair,
            report,
            error_vec,
            embedding,
        });
    }

    let bank = ExampleBank::from_parts(
        language,
        categories,
        embedder.map(|e| e.id().to_string()),
        options.embed_style,
        entries,
    )?;
    Ok(BankBuildOutcome { bank, warnings })
}

/// A shot chosen for a prompt, with the similarity score that ranked it
/// (`None` for fixed shots) and the stored report of its buggy side.
#[derive(Debug, Clone)]
pub struct SelectedShot {
    pub pair: BuggyFixedPair,
    pub report: Option<DiagnosticReport>,
    pub score: Option<f64>,
}

/// Query parameters for [`select_shots`].
pub struct ShotQuery<'a> {
    /// Diagnostics of the program being repaired.
    pub report: &'a DiagnosticReport,
    pub n: usize,
    pub strategy: ShotStrategy,
    /// The verbatim shot set for [`ShotStrategy::Fixed`].
    pub fixed_set: &'a [BuggyFixedPair],
    /// Bank entry never to return (leave-one-out evaluation).
    pub exclude_id: Option<&'a str>,
}

/// Pick up to `n` shots for a query report.
///
/// * `error_vector`: ascending L2 distance between per-category counts.
/// * `embedding`: descending cosine similarity between message embeddings;
///   the embedder must be the provider the bank was built with.
/// * `fixed`: the first `n` pairs of the fixed set, verbatim.
///
/// Similarity ties break by ascending entry id, so selection is a total,
/// reproducible order.
pub fn select_shots(
    bank: Option<&ExampleBank>,
    query: &ShotQuery,
    embedder: Option<&dyn Embedder>,
    abstraction: &[Regex],
) -> Result<Vec<SelectedShot>, BankError> {
    match query.strategy {
        ShotStrategy::None => Ok(Vec::new()),
        ShotStrategy::Fixed => Ok(query
            .fixed_set
            .iter()
            .take(query.n)
            .map(|pair| SelectedShot {
                pair: pair.clone(),
                report: None,
                score: None,
            })
            .collect()),
        ShotStrategy::ErrorVector => {
            let bank = require_bank(bank, query)?;
            let query_vec = error_vector(query.report, bank.category_index());
            let mut scored: Vec<(&BankEntry, f64)> = candidate_entries(bank, query)
                .map(|entry| {
                    let distance = l2_count_distance(&query_vec, &entry.error_vec);
                    (entry, distance)
                })
                .collect();
            scored.sort_by(|(ea, da), (eb, db)| {
                da.total_cmp(db).then_with(|| ea.pair.id().cmp(eb.pair.id()))
            });
            Ok(take_shots(scored, query.n))
        }
        ShotStrategy::Embedding => {
            let bank = require_bank(bank, query)?;
            let embedder = embedder.ok_or_else(|| {
                BankError::Selection("embedding strategy requires an embedder".to_string())
            })?;
            let provider = bank.embedding_provider().ok_or_else(|| {
                BankError::Selection("bank was built without embeddings".to_string())
            })?;
            if embedder.id() != provider {
                return Err(BankError::MixedProvider {
                    bank: provider.to_string(),
                    query: embedder.id().to_string(),
                });
            }
            let message = render_message(query.report, bank.embed_style(), abstraction)?;
            let query_embedding = embedder.embed(&message)?;
            let mut scored = Vec::new();
            for entry in candidate_entries(bank, query) {
                let embedding = entry.embedding.as_ref().ok_or_else(|| {
                    BankError::InvalidEntry(format!("entry `{}` lacks an embedding", entry.pair.id()))
                })?;
                let similarity = cosine_similarity(&query_embedding, embedding)?;
                scored.push((entry, similarity));
            }
            scored.sort_by(|(ea, sa), (eb, sb)| {
                sb.total_cmp(sa).then_with(|| ea.pair.id().cmp(eb.pair.id()))
            });
            Ok(take_shots(scored, query.n))
        }
    }
}

fn require_bank<'a>(
    bank: Option<&'a ExampleBank>,
    query: &ShotQuery,
) -> Result<&'a ExampleBank, BankError> {
    let bank = bank.ok_or_else(|| {
        BankError::Selection(format!("{:?} strategy requires a bank", query.strategy))
    })?;
    if bank.is_empty() {
        return Err(BankError::EmptyBank);
    }
    Ok(bank)
}

fn candidate_entries<'a>(
    bank: &'a ExampleBank,
    query: &'a ShotQuery,
) -> impl Iterator<Item = &'a BankEntry> {
    bank.entries()
        .iter()
        .filter(move |entry| query.exclude_id != Some(entry.pair.id()))
}

fn take_shots(scored: Vec<(&BankEntry, f64)>, n: usize) -> Vec<SelectedShot> {
    scored
        .into_iter()
        .take(n)
        .map(|(entry, score)| SelectedShot {
            pair: entry.pair.clone(),
            report: Some(entry.report.clone()),
            score: Some(score),
        })
        .collect()
}

/// L2 distance between two per-category count vectors. Lengths always agree
/// because both sides were produced against the same category index.
fn l2_count_distance(u: &[u32], v: &[u32]) -> f64 {
    debug_assert_eq!(u.len(), v.len());
    u.iter()
        .zip(v)
        .map(|(a, b)| {
            let d = f64::from(*a) - f64::from(*b);
            d * d
        })
        .sum::<f64>()
        .sqrt()
}

/// Grow a bank's raw material from unpaired buggy programs: repair each one,
/// keep (buggy, top candidate) whenever the top candidate passes
/// diagnostics.
///
/// The engine must not itself be configured for bank-driven shot selection
/// (`none` or `fixed` only) — bootstrapping a bank through a bank would be
/// circular. Per-program provider or tool failures are recorded as warnings
/// and never abort the batch.
pub fn bootstrap_bank(
    programs: &[SourceProgram],
    engine: &crate::engine::Engine,
    diag: &dyn DiagnosticsSource,
) -> Result<(Vec<BuggyFixedPair>, Vec<String>), BankError> {
    if engine.shot_strategy().is_smart() {
        return Err(BankError::Selection(
            "bootstrap requires an engine without bank-driven shot selection".to_string(),
        ));
    }
    let mut pairs = Vec::new();
    let mut warnings = Vec::new();
    for (i, program) in programs.iter().enumerate() {
        let label = format!("program #{i}");
        let task = match crate::engine::RepairTask::new(format!("bootstrap-{i:04}"), program.clone(), None) {
            Ok(task) => task,
            Err(e) => {
                warnings.push(format!("{label}: {e}"));
                continue;
            }
        };
        let result = match engine.repair(&task) {
            Ok(result) => result,
            Err(e) => {
                warnings.push(format!("{label}: repair failed: {e}"));
                continue;
            }
        };
        let candidates = match result.outcome {
            crate::engine::Outcome::Candidates(candidates) => candidates,
            crate::engine::Outcome::AlreadyValid => {
                warnings.push(format!("{label}: already valid, skipped"));
                continue;
            }
            crate::engine::Outcome::NoCandidates => {
                warnings.push(format!("{label}: no candidates survived filtering"));
                continue;
            }
        };
        let top = &candidates[0];
        let fixed = SourceProgram::new(program.language.clone(), top.text.clone());
        let verdict = match diag.diagnose(&fixed) {
            Ok(report) => report,
            Err(e) => {
                warnings.push(format!("{label}: verification failed: {e}"));
                continue;
            }
        };
        if !verdict.exit_ok {
            warnings.push(format!("{label}: top candidate still fails diagnostics"));
            continue;
        }
        match BuggyFixedPair::new(task.id().to_string(), program.clone(), fixed, PairSource::Bootstrapped)
        {
            Ok(pair) => pairs.push(pair),
            Err(e) => warnings.push(format!("{label}: {e}")),
        }
    }
    Ok((pairs, warnings))
}
