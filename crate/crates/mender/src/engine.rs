//! The repair pipeline: diagnose, retrieve shots, build prompt, sample,
//! filter, rank — one provider call per task.
//!
//! An [`Engine`] is immutable after construction, so repair calls on
//! distinct tasks may run concurrently; throughput is bounded only by the
//! provider's in-flight limit and however many diagnostics subprocesses the
//! caller is willing to spawn.

use std::sync::Arc;

use thiserror::Error;

use crate::bank::{
    select_shots, BankError, BuggyFixedPair, Embedder, ExampleBank, SelectedShot, ShotQuery,
    ShotStrategy,
};
use crate::diag::{DiagError, DiagnosticReport, DiagnosticsSource};
use crate::llm::{prompt_fingerprint, CompletionProvider, LlmError, SamplingParams};
use crate::prompt::{build_prompt, Prompt, PromptConfig, PromptError, ShotInput};
use crate::rank::{filter_candidates, rank_candidates, ScoredCandidate};
use crate::text::{LanguageError, LanguageId, LanguageProfile, LanguageRegistry, SourceProgram};

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("invalid engine config: {0}")]
    InvalidConfig(String),
    #[error("invalid repair task: {0}")]
    InvalidTask(String),
    #[error("diagnostics stage: {0}")]
    Diagnostics(#[from] DiagError),
    #[error("shot-selection stage: {0}")]
    Selection(#[from] BankError),
    #[error("prompt stage: {0}")]
    Prompt(#[from] PromptError),
    #[error("provider stage: {0}")]
    Provider(#[from] LlmError),
    #[error(transparent)]
    Language(#[from] LanguageError),
}

/// One program to repair, with an optional ground-truth fix for evaluation.
#[derive(Debug, Clone)]
pub struct RepairTask {
    id: String,
    program: SourceProgram,
    ground_truth: Option<SourceProgram>,
}

impl RepairTask {
    pub fn new(
        id: impl Into<String>,
        program: SourceProgram,
        ground_truth: Option<SourceProgram>,
    ) -> Result<Self, EngineError> {
        let id = id.into();
        if id.is_empty() {
            return Err(EngineError::InvalidTask("task id must be non-empty".to_string()));
        }
        if let Some(gt) = &ground_truth {
            if gt.language != program.language {
                return Err(EngineError::InvalidTask(format!(
                    "ground truth language `{}` differs from program language `{}` (task `{id}`)",
                    gt.language, program.language
                )));
            }
        }
        Ok(RepairTask {
            id,
            program,
            ground_truth,
        })
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn program(&self) -> &SourceProgram {
        &self.program
    }

    pub fn ground_truth(&self) -> Option<&SourceProgram> {
        self.ground_truth.as_ref()
    }
}

/// What a repair call concluded.
#[derive(Debug, Clone)]
pub enum Outcome {
    /// Diagnostics came back clean; nothing to repair. Distinct from a
    /// repair so evaluation can exclude such tasks from pass@k.
    AlreadyValid,
    /// Ranked repair candidates, best first. Never empty.
    Candidates(Vec<ScoredCandidate>),
    /// Every sampled completion was filtered out.
    NoCandidates,
}

/// What each stage saw: enough to audit a run and replay the provider call
/// (the prompt hash is the cache key prefix).
#[derive(Debug, Clone)]
pub struct StageTrace {
    pub report: Option<DiagnosticReport>,
    pub shot_ids: Vec<String>,
    /// SHA-256 of the prompt text; `None` when no prompt was built.
    pub prompt_hash: Option<String>,
    pub prompt_truncated: bool,
    pub raw_candidates: usize,
    pub filtered_candidates: usize,
}

#[derive(Debug, Clone)]
pub struct RepairResult {
    pub outcome: Outcome,
    pub trace: StageTrace,
}

pub struct Engine {
    language: LanguageId,
    profile: LanguageProfile,
    diagnostics: Option<Arc<dyn DiagnosticsSource>>,
    provider: Arc<dyn CompletionProvider>,
    bank: Option<ExampleBank>,
    embedder: Option<Arc<dyn Embedder>>,
    fixed_shots: Vec<BuggyFixedPair>,
    prompt: PromptConfig,
    sampling: SamplingParams,
    leave_one_out: bool,
}

impl std::fmt::Debug for Engine {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Engine")
            .field("language", &self.language)
            .field("provider", &self.provider.id())
            .field("shot_strategy", &self.prompt.shot_strategy)
            .field("shots", &self.prompt.shots)
            .field("message_style", &self.prompt.message_style)
            .field("leave_one_out", &self.leave_one_out)
            .finish_non_exhaustive()
    }
}

pub struct EngineBuilder {
    language: LanguageId,
    registry: LanguageRegistry,
    diagnostics: Option<Arc<dyn DiagnosticsSource>>,
    provider: Option<Arc<dyn CompletionProvider>>,
    bank: Option<ExampleBank>,
    embedder: Option<Arc<dyn Embedder>>,
    fixed_shots: Vec<BuggyFixedPair>,
    prompt: Option<PromptConfig>,
    sampling: SamplingParams,
    leave_one_out: bool,
}

impl Engine {
    pub fn builder(language: LanguageId) -> EngineBuilder {
        EngineBuilder {
            language,
            registry: LanguageRegistry::builtin(),
            diagnostics: None,
            provider: None,
            bank: None,
            embedder: None,
            fixed_shots: Vec::new(),
            prompt: None,
            sampling: SamplingParams::default(),
            leave_one_out: false,
        }
    }

    pub fn language(&self) -> &LanguageId {
        &self.language
    }

    /// The lexing/normalization profile the engine resolved for its language.
    pub fn profile(&self) -> &LanguageProfile {
        &self.profile
    }

    pub fn shot_strategy(&self) -> ShotStrategy {
        self.prompt.shot_strategy
    }

    pub fn prompt_config(&self) -> &PromptConfig {
        &self.prompt
    }

    pub fn sampling(&self) -> &SamplingParams {
        &self.sampling
    }

    pub fn bank(&self) -> Option<&ExampleBank> {
        self.bank.as_ref()
    }

    pub fn diagnostics_source(&self) -> Option<&Arc<dyn DiagnosticsSource>> {
        self.diagnostics.as_ref()
    }

    /// Whether the pipeline runs diagnostics on the input program: true when
    /// messages are rendered into the prompt or shots are retrieved by
    /// diagnostic similarity.
    pub fn needs_diagnostics(&self) -> bool {
        self.prompt.message_style.is_some() || self.prompt.shot_strategy.is_smart()
    }

    /// Run the full pipeline on one task.
    pub fn repair(&self, task: &RepairTask) -> Result<RepairResult, EngineError> {
        self.repair_with_report(task, None)
    }

    /// Like [`Engine::repair`], but accepts a diagnostics report the caller
    /// already computed (the evaluation harness diagnoses first to classify
    /// already-valid tasks). When `None` and the pipeline needs diagnostics,
    /// they are run here.
    pub fn repair_with_report(
        &self,
        task: &RepairTask,
        report: Option<DiagnosticReport>,
    ) -> Result<RepairResult, EngineError> {
        let (report, prompt) = self.prepare(task, report)?;
        let Some(prompt) = prompt else {
            return Ok(RepairResult {
                outcome: Outcome::AlreadyValid,
                trace: StageTrace {
                    report,
                    shot_ids: Vec::new(),
                    prompt_hash: None,
                    prompt_truncated: false,
                    raw_candidates: 0,
                    filtered_candidates: 0,
                },
            });
        };

        let completions = self.provider.complete(&prompt.text, &self.sampling)?;
        let raw_candidates = completions.len();
        let filtered = filter_candidates(
            &completions,
            &task.program,
            &self.profile.normalization,
            &self.profile,
        );
        let filtered_candidates = filtered.len();
        let ranked = rank_candidates(filtered);

        let outcome = if ranked.is_empty() {
            Outcome::NoCandidates
        } else {
            Outcome::Candidates(ranked)
        };
        Ok(RepairResult {
            outcome,
            trace: StageTrace {
                report,
                shot_ids: prompt.shot_ids,
                prompt_hash: Some(prompt_fingerprint(&prompt.text)),
                prompt_truncated: prompt.truncated,
                raw_candidates,
                filtered_candidates,
            },
        })
    }

    /// Build the prompt a repair call would send, without calling the
    /// provider. `None` prompt means diagnostics found nothing to repair.
    pub fn preview_prompt(
        &self,
        task: &RepairTask,
    ) -> Result<(Option<DiagnosticReport>, Option<Prompt>), EngineError> {
        self.prepare(task, None)
    }

    /// Shared front half of the pipeline: diagnostics (or the caller's
    /// report), already-valid short-circuit, shot selection, prompt build.
    fn prepare(
        &self,
        task: &RepairTask,
        report_override: Option<DiagnosticReport>,
    ) -> Result<(Option<DiagnosticReport>, Option<Prompt>), EngineError> {
        if task.program.language != self.language {
            return Err(EngineError::InvalidTask(format!(
                "task `{}` is {} but the engine is configured for {}",
                task.id, task.program.language, self.language
            )));
        }

        let report = match report_override {
            Some(report) => Some(report),
            None if self.needs_diagnostics() => {
                let diag = self.diagnostics.as_ref().expect("validated at build");
                Some(diag.diagnose(&task.program)?)
            }
            None => None,
        };
        if let Some(r) = &report {
            if r.exit_ok {
                return Ok((report, None));
            }
        }

        let shots = self.select_task_shots(task, report.as_ref())?;
        let shot_inputs: Vec<ShotInput> = shots
            .iter()
            .map(|s| ShotInput {
                pair: &s.pair,
                report: s.report.as_ref(),
            })
            .collect();
        let prompt = build_prompt(
            &task.program,
            report.as_ref(),
            &shot_inputs,
            &self.prompt,
            self.abstraction_patterns(),
        )?;
        Ok((report, Some(prompt)))
    }

    fn select_task_shots(
        &self,
        task: &RepairTask,
        report: Option<&DiagnosticReport>,
    ) -> Result<Vec<SelectedShot>, EngineError> {
        match self.prompt.shot_strategy {
            ShotStrategy::None => Ok(Vec::new()),
            ShotStrategy::Fixed => {
                let mut shots = Vec::new();
                for pair in self.fixed_shots.iter().take(self.prompt.shots) {
                    let report = match self.prompt.message_style {
                        Some(_) => {
                            let diag = self.diagnostics.as_ref().expect("validated at build");
                            let report = diag.diagnose(pair.buggy())?;
                            if report.exit_ok {
                                return Err(EngineError::InvalidConfig(format!(
                                    "fixed shot `{}` has a clean buggy side; it cannot \
                                     illustrate a diagnostic",
                                    pair.id()
                                )));
                            }
                            Some(report)
                        }
                        None => None,
                    };
                    shots.push(SelectedShot {
                        pair: pair.clone(),
                        report,
                        score: None,
                    });
                }
                Ok(shots)
            }
            ShotStrategy::ErrorVector | ShotStrategy::Embedding => {
                let report = report.expect("smart strategies imply diagnostics");
                let query = ShotQuery {
                    report,
                    n: self.prompt.shots,
                    strategy: self.prompt.shot_strategy,
                    fixed_set: &[],
                    exclude_id: self.leave_one_out.then_some(task.id.as_str()),
                };
                Ok(select_shots(
                    self.bank.as_ref(),
                    &query,
                    self.embedder.as_deref(),
                    self.abstraction_patterns(),
                )?)
            }
        }
    }

    fn abstraction_patterns(&self) -> &[regex::Regex] {
        self.diagnostics
            .as_ref()
            .map(|d| d.abstraction_patterns())
            .unwrap_or(&[])
    }
}

impl EngineBuilder {
    /// Replace the language registry (to add or override profiles).
    pub fn registry(mut self, registry: LanguageRegistry) -> Self {
        self.registry = registry;
        self
    }

    pub fn diagnostics(mut self, source: Arc<dyn DiagnosticsSource>) -> Self {
        self.diagnostics = Some(source);
        self
    }

    pub fn provider(mut self, provider: Arc<dyn CompletionProvider>) -> Self {
        self.provider = Some(provider);
        self
    }

    pub fn bank(mut self, bank: ExampleBank) -> Self {
        self.bank = Some(bank);
        self
    }

    pub fn embedder(mut self, embedder: Arc<dyn Embedder>) -> Self {
        self.embedder = Some(embedder);
        self
    }

    pub fn fixed_shots(mut self, shots: Vec<BuggyFixedPair>) -> Self {
        self.fixed_shots = shots;
        self
    }

    pub fn prompt_config(mut self, config: PromptConfig) -> Self {
        self.prompt = Some(config);
        self
    }

    pub fn sampling(mut self, params: SamplingParams) -> Self {
        self.sampling = params;
        self
    }

    pub fn leave_one_out(mut self, enabled: bool) -> Self {
        self.leave_one_out = enabled;
        self
    }

    pub fn build(self) -> Result<Engine, EngineError> {
        let profile = self.registry.profile(&self.language)?.clone();
        let prompt = self
            .prompt
            .unwrap_or_else(|| PromptConfig::new(profile.display.clone()));
        prompt.validate()?;
        self.sampling.validate()?;

        let provider = self
            .provider
            .ok_or_else(|| EngineError::InvalidConfig("a completion provider is required".to_string()))?;

        let needs_diag = prompt.message_style.is_some() || prompt.shot_strategy.is_smart();
        if needs_diag {
            let diag = self.diagnostics.as_ref().ok_or_else(|| {
                EngineError::InvalidConfig(
                    "diagnostic messages or similarity-based shots are configured, \
                     but no diagnostics source is"
                        .to_string(),
                )
            })?;
            if diag.language() != &self.language {
                return Err(EngineError::InvalidConfig(format!(
                    "diagnostics source `{}` is for {}, engine is for {}",
                    diag.tool_id(),
                    diag.language(),
                    self.language
                )));
            }
        }

        match prompt.shot_strategy {
            ShotStrategy::None => {}
            ShotStrategy::Fixed => {
                if self.fixed_shots.is_empty() {
                    return Err(EngineError::InvalidConfig(
                        "fixed shot strategy needs a non-empty fixed shot set".to_string(),
                    ));
                }
                if let Some(pair) = self.fixed_shots.iter().find(|p| p.language() != &self.language)
                {
                    return Err(EngineError::InvalidConfig(format!(
                        "fixed shot `{}` is {}, engine is for {}",
                        pair.id(),
                        pair.language(),
                        self.language
                    )));
                }
            }
            ShotStrategy::ErrorVector | ShotStrategy::Embedding => {
                let bank = self.bank.as_ref().ok_or_else(|| {
                    EngineError::InvalidConfig(
                        "similarity-based shot selection needs an example bank".to_string(),
                    )
                })?;
                if bank.language() != &self.language {
                    return Err(EngineError::InvalidConfig(format!(
                        "bank is for {}, engine is for {}",
                        bank.language(),
                        self.language
                    )));
                }
                if prompt.shot_strategy == ShotStrategy::Embedding {
                    let embedder = self.embedder.as_ref().ok_or_else(|| {
                        EngineError::InvalidConfig(
                            "embedding shot selection needs an embedder".to_string(),
                        )
                    })?;
                    match bank.embedding_provider() {
                        Some(provider_id) if provider_id == embedder.id() => {}
                        Some(provider_id) => {
                            return Err(EngineError::InvalidConfig(format!(
                                "bank embeddings come from `{provider_id}`, engine embedder is `{}`",
                                embedder.id()
                            )));
                        }
                        None => {
                            return Err(EngineError::InvalidConfig(
                                "bank stores no embeddings; rebuild it with an embedder"
                                    .to_string(),
                            ));
                        }
                    }
                }
            }
        }

        Ok(Engine {
            language: self.language,
            profile,
            diagnostics: self.diagnostics,
            provider,
            bank: self.bank,
            embedder: self.embedder,
            fixed_shots: self.fixed_shots,
            prompt,
            sampling: self.sampling,
            leave_one_out: self.leave_one_out,
        })
    }
}
