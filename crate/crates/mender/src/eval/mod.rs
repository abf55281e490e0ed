//! Evaluation harness: success judges, pass@k aggregation, localization
//! accuracy, and deterministic report export.
//!
//! A run takes a JSONL dataset of buggy programs (optionally with ground
//! truth fixes), repairs each task through an [`Engine`], judges up to
//! `max_k` ranked candidates with the configured metric, and aggregates:
//!
//! * **pass@k** — fraction of eligible tasks where any of the top `k`
//!   candidates succeeds; tasks that were already valid or hit
//!   infrastructure errors are excluded from rates and counted separately.
//! * **localization** — over tasks *not* repaired at rank 1 that have a
//!   ground truth, whether the top candidate's edit locations all fall
//!   within ±k tokens of some ground-truth edit location.
//!
//! Reports contain no timestamps or environment data, so a rerun under the
//! same inputs is byte-identical.

pub mod toy;

use std::collections::BTreeMap;
use std::io::{BufRead, Write};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::diag::DiagError;
use crate::engine::{Engine, EngineError, Outcome, RepairTask};
use crate::text::{
    edit_locations, normalize_program, token_edit_distance, tokenize, LanguageError, LanguageId,
    LanguageProfile, LexemeCase, NormalizationRules, SourceProgram,
};

pub const REPORT_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("invalid eval config: {0}")]
    InvalidConfig(String),
    #[error("dataset error: {0}")]
    Dataset(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("report serialization failed: {0}")]
    Serialize(#[from] serde_json::Error),
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error(transparent)]
    Language(#[from] LanguageError),
}

/// What counts as a successful repair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    /// Candidate equals the ground truth after per-language normalization.
    ExactMatch,
    /// Candidate passes diagnostics and sits within a token edit distance
    /// of the buggy program.
    ParseAndDistance,
}

/// Coarse classification of one task's run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutcomeClass {
    /// Some judged candidate succeeded.
    Repaired,
    /// Candidates were produced and judged (or none survived filtering),
    /// but none succeeded.
    Unrepaired,
    /// Diagnostics found nothing wrong with the input; excluded from rates.
    AlreadyValid,
    /// An infrastructure failure (tool or provider); excluded from rates.
    Error,
}

/// One dataset row.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DatasetTask {
    pub id: String,
    pub language: LanguageId,
    pub buggy: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fixed: Option<String>,
}

/// Read a JSONL dataset: one task object per line, blank lines ignored.
/// All tasks must share one language and carry unique ids.
pub fn load_dataset(reader: impl BufRead) -> Result<Vec<DatasetTask>, EvalError> {
    let mut tasks: Vec<DatasetTask> = Vec::new();
    let mut seen = std::collections::BTreeSet::new();
    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let task: DatasetTask = serde_json::from_str(&line)
            .map_err(|e| EvalError::Dataset(format!("line {}: {e}", lineno + 1)))?;
        if task.id.is_empty() {
            return Err(EvalError::Dataset(format!("line {}: empty task id", lineno + 1)));
        }
        if !seen.insert(task.id.clone()) {
            return Err(EvalError::Dataset(format!(
                "line {}: duplicate task id `{}`",
                lineno + 1,
                task.id
            )));
        }
        if let Some(first) = tasks.first() {
            if task.language != first.language {
                return Err(EvalError::Dataset(format!(
                    "line {}: task `{}` is {}, but the dataset started with {}",
                    lineno + 1,
                    task.id,
                    task.language,
                    first.language
                )));
            }
        }
        tasks.push(task);
    }
    Ok(tasks)
}

/// Knobs for an evaluation run.
#[derive(Debug, Clone)]
pub struct EvalOptions {
    pub metric: Metric,
    /// The k values reported (pass@k columns).
    pub ks: Vec<usize>,
    /// How many ranked candidates to judge per task; defaults to max(ks).
    pub max_k: Option<usize>,
    /// Token windows for localization accuracy.
    pub localization_ks: Vec<usize>,
    /// Edit-distance bound for [`Metric::ParseAndDistance`]; `None` removes
    /// the bound (the "no token edit limit" variant).
    pub distance_threshold: Option<usize>,
    /// Worker threads; tasks are independent, so any value yields the same
    /// report.
    pub jobs: usize,
}

impl EvalOptions {
    pub fn new(metric: Metric) -> Self {
        EvalOptions {
            metric,
            ks: vec![1, 3],
            max_k: None,
            localization_ks: vec![0, 1, 2],
            distance_threshold: Some(5),
            jobs: 1,
        }
    }

    fn validate(&self) -> Result<(), EvalError> {
        if self.ks.is_empty() {
            return Err(EvalError::InvalidConfig("at least one k is required".to_string()));
        }
        if self.ks.contains(&0) || self.max_k == Some(0) {
            return Err(EvalError::InvalidConfig("k values must be positive".to_string()));
        }
        if self.jobs == 0 {
            return Err(EvalError::InvalidConfig("jobs must be at least 1".to_string()));
        }
        if self.distance_threshold == Some(0) {
            return Err(EvalError::InvalidConfig(
                "a zero distance threshold rejects every repair; use a positive bound or none"
                    .to_string(),
            ));
        }
        Ok(())
    }

    fn effective_max_k(&self) -> usize {
        let k_max = self.ks.iter().copied().max().unwrap_or(1);
        self.max_k.map_or(k_max, |m| m.max(k_max))
    }
}

/// Everything recorded about one task.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalOutcome {
    pub task_id: String,
    pub class: OutcomeClass,
    /// Judge verdict per ranked candidate, best first, up to max_k.
    pub ranked_success: Vec<bool>,
    /// 1-based rank of the first success, if any.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub first_success_rank: Option<usize>,
    /// Localization verdicts for the top candidate, keyed by token window.
    /// Empty when there is no ground truth or no candidate.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub localization_hits: BTreeMap<usize, bool>,
    /// Score of the rank-1 candidate.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub top_score: Option<f64>,
    /// Significant-token count of the buggy program (for length analyses).
    pub num_tokens: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassCounts {
    pub repaired: usize,
    pub unrepaired: usize,
    pub already_valid: usize,
    pub error: usize,
}

impl ClassCounts {
    pub fn total(&self) -> usize {
        self.repaired + self.unrepaired + self.already_valid + self.error
    }
}

/// Localization accuracy over the tasks not repaired at rank 1 that have a
/// ground truth.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LocalizationSummary {
    pub eligible: usize,
    /// window k → fraction of eligible tasks correctly localized.
    pub accuracy: BTreeMap<usize, f64>,
}

/// The full result of a run. Serialization is deterministic: fixed field
/// order, sorted maps, sorted outcomes, no timestamps.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalReport {
    pub schema_version: u32,
    pub language: LanguageId,
    pub metric: Metric,
    pub dataset_size: usize,
    pub counts: ClassCounts,
    /// Tasks the rates are computed over (repaired + unrepaired).
    pub eligible: usize,
    pub pass_at_k: BTreeMap<usize, f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub localization: Option<LocalizationSummary>,
    pub outcomes: Vec<EvalOutcome>,
}

/// True iff `candidate` equals `ground_truth` after normalizing both with
/// the language's rules. Symmetric in the two programs.
pub fn judge_exact_match(
    candidate: &SourceProgram,
    ground_truth: &SourceProgram,
    rules: &NormalizationRules,
    profile: &LanguageProfile,
) -> bool {
    normalize_program(&candidate.text, rules, profile)
        == normalize_program(&ground_truth.text, rules, profile)
}

/// True iff `candidate` passes diagnostics *and* its token edit distance
/// from `buggy` is below `threshold` (`None` = unbounded). Tool failures
/// propagate so the caller can record an infrastructure error.
pub fn judge_parse_and_distance(
    candidate: &SourceProgram,
    buggy: &SourceProgram,
    diag: &dyn crate::diag::DiagnosticsSource,
    threshold: Option<usize>,
    profile: &LanguageProfile,
) -> Result<bool, DiagError> {
    let report = diag.diagnose(candidate)?;
    if !report.exit_ok {
        return Ok(false);
    }
    match threshold {
        None => Ok(true),
        Some(bound) => {
            let case = LexemeCase::from_profile(profile);
            let a = tokenize(&buggy.text, profile);
            let b = tokenize(&candidate.text, profile);
            Ok(token_edit_distance(&a.tokens, &b.tokens, case) < bound)
        }
    }
}

/// True iff every edit location of `candidate` (relative to `buggy`) lies
/// within ±`k` token positions of some ground-truth edit location.
///
/// Edge cases: if the candidate made no edits, the verdict is true only if
/// the ground truth also made none; a candidate with edits against an
/// empty ground-truth edit set is false (there is no location to be near).
pub fn judge_localization(
    candidate: &SourceProgram,
    buggy: &SourceProgram,
    ground_truth: &SourceProgram,
    k: usize,
    profile: &LanguageProfile,
) -> bool {
    let case = LexemeCase::from_profile(profile);
    let buggy_tokens = tokenize(&buggy.text, profile).tokens;
    let candidate_locs = edit_locations(
        &buggy_tokens,
        &tokenize(&candidate.text, profile).tokens,
        case,
    );
    let truth_locs = edit_locations(
        &buggy_tokens,
        &tokenize(&ground_truth.text, profile).tokens,
        case,
    );
    if candidate_locs.is_empty() {
        return truth_locs.is_empty();
    }
    candidate_locs.iter().all(|&c| {
        truth_locs
            .iter()
            .any(|&t| c.abs_diff(t) <= k)
    })
}

/// True iff any of the first `k` ranked candidates succeeded.
pub fn pass_at_k(outcome: &EvalOutcome, k: usize) -> bool {
    outcome.ranked_success.iter().take(k).any(|&ok| ok)
}

/// pass@k rates over the eligible outcomes (repaired + unrepaired).
/// An empty eligible set yields 0.0 for every k.
pub fn aggregate(outcomes: &[EvalOutcome], ks: &[usize]) -> BTreeMap<usize, f64> {
    let eligible: Vec<&EvalOutcome> = outcomes
        .iter()
        .filter(|o| matches!(o.class, OutcomeClass::Repaired | OutcomeClass::Unrepaired))
        .collect();
    let mut rates = BTreeMap::new();
    for &k in ks {
        let rate = if eligible.is_empty() {
            0.0
        } else {
            let hits = eligible.iter().filter(|o| pass_at_k(o, k)).count();
            hits as f64 / eligible.len() as f64
        };
        rates.insert(k, rate);
    }
    rates
}

/// Repair and judge every task in the dataset.
///
/// Per-task infrastructure failures are recorded on the outcome and the run
/// continues. Returns an error only for configuration problems detected
/// before any provider call (metric/dataset mismatch, language mismatch).
pub fn run_eval(
    engine: &Engine,
    dataset: &[DatasetTask],
    options: &EvalOptions,
) -> Result<EvalReport, EvalError> {
    options.validate()?;
    for task in dataset {
        if &task.language != engine.language() {
            return Err(EvalError::InvalidConfig(format!(
                "task `{}` is {}, engine is configured for {}",
                task.id,
                task.language,
                engine.language()
            )));
        }
        if options.metric == Metric::ExactMatch && task.fixed.is_none() {
            return Err(EvalError::InvalidConfig(format!(
                "metric exact_match needs a ground truth, but task `{}` has none",
                task.id
            )));
        }
    }
    if options.metric == Metric::ParseAndDistance && engine.diagnostics_source().is_none() {
        return Err(EvalError::InvalidConfig(
            "metric parse_and_distance needs a diagnostics source".to_string(),
        ));
    }

    let max_k = options.effective_max_k();
    let next = AtomicUsize::new(0);
    let collected: Mutex<Vec<EvalOutcome>> = Mutex::new(Vec::with_capacity(dataset.len()));
    let workers = options.jobs.min(dataset.len().max(1));
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(task) = dataset.get(i) else {
                    break;
                };
                let outcome = evaluate_task(engine, task, options, max_k);
                collected.lock().expect("outcome lock").push(outcome);
            });
        }
    });
    let mut outcomes = collected.into_inner().expect("outcome lock");
    outcomes.sort_by(|a, b| a.task_id.cmp(&b.task_id));

    let mut counts = ClassCounts::default();
    for outcome in &outcomes {
        match outcome.class {
            OutcomeClass::Repaired => counts.repaired += 1,
            OutcomeClass::Unrepaired => counts.unrepaired += 1,
            OutcomeClass::AlreadyValid => counts.already_valid += 1,
            OutcomeClass::Error => counts.error += 1,
        }
    }
    let eligible = counts.repaired + counts.unrepaired;
    let rates = aggregate(&outcomes, &options.ks);
    let localization = localization_summary(&outcomes, dataset, &options.localization_ks);

    Ok(EvalReport {
        schema_version: REPORT_SCHEMA_VERSION,
        language: engine.language().clone(),
        metric: options.metric,
        dataset_size: dataset.len(),
        counts,
        eligible,
        pass_at_k: rates,
        localization,
        outcomes,
    })
}

fn evaluate_task(
    engine: &Engine,
    task: &DatasetTask,
    options: &EvalOptions,
    max_k: usize,
) -> EvalOutcome {
    let profile = engine.profile();
    let buggy = SourceProgram::new(task.language.clone(), task.buggy.clone());
    let num_tokens = tokenize(&buggy.text, profile).significant().len();
    let ground_truth = task
        .fixed
        .as_ref()
        .map(|text| SourceProgram::new(task.language.clone(), text.clone()));

    let mut outcome = EvalOutcome {
        task_id: task.id.clone(),
        class: OutcomeClass::Error,
        ranked_success: Vec::new(),
        first_success_rank: None,
        localization_hits: BTreeMap::new(),
        top_score: None,
        num_tokens,
        error: None,
    };

    let repair_task = match RepairTask::new(task.id.clone(), buggy.clone(), ground_truth.clone()) {
        Ok(t) => t,
        Err(e) => {
            outcome.error = Some(e.to_string());
            return outcome;
        }
    };

    // Diagnose first (when a source exists) so already-valid inputs never
    // reach the provider and are classified out of the rates.
    let report = match engine.diagnostics_source() {
        Some(diag) => match diag.diagnose(&buggy) {
            Ok(report) => Some(report),
            Err(e) => {
                outcome.error = Some(format!("diagnostics: {e}"));
                return outcome;
            }
        },
        None => None,
    };
    if report.as_ref().is_some_and(|r| r.exit_ok) {
        outcome.class = OutcomeClass::AlreadyValid;
        return outcome;
    }

    let result = match engine.repair_with_report(&repair_task, report) {
        Ok(r) => r,
        Err(e) => {
            outcome.error = Some(format!("repair: {e}"));
            return outcome;
        }
    };
    let ranked = match result.outcome {
        Outcome::AlreadyValid => {
            outcome.class = OutcomeClass::AlreadyValid;
            return outcome;
        }
        Outcome::NoCandidates => {
            outcome.class = OutcomeClass::Unrepaired;
            return outcome;
        }
        Outcome::Candidates(ranked) => ranked,
    };

    outcome.top_score = Some(ranked[0].score);
    for candidate in ranked.iter().take(max_k) {
        let program = SourceProgram::new(task.language.clone(), candidate.text.clone());
        let verdict = match options.metric {
            Metric::ExactMatch => {
                let gt = ground_truth.as_ref().expect("checked before the run");
                Ok(judge_exact_match(&program, gt, &profile.normalization, profile))
            }
            Metric::ParseAndDistance => {
                let diag = engine.diagnostics_source().expect("checked before the run");
                judge_parse_and_distance(
                    &program,
                    &buggy,
                    diag.as_ref(),
                    options.distance_threshold,
                    profile,
                )
            }
        };
        match verdict {
            Ok(ok) => outcome.ranked_success.push(ok),
            Err(e) => {
                outcome.error = Some(format!("judging: {e}"));
                outcome.ranked_success.clear();
                return outcome;
            }
        }
    }
    outcome.first_success_rank = outcome
        .ranked_success
        .iter()
        .position(|&ok| ok)
        .map(|i| i + 1);
    outcome.class = if outcome.first_success_rank.is_some() {
        OutcomeClass::Repaired
    } else {
        OutcomeClass::Unrepaired
    };

    if let Some(gt) = &ground_truth {
        let top = SourceProgram::new(task.language.clone(), ranked[0].text.clone());
        for &k in &options.localization_ks {
            let hit = judge_localization(&top, &buggy, gt, k, profile);
            outcome.localization_hits.insert(k, hit);
        }
    }
    outcome
}

/// Fig.-5-style aggregate: among tasks not repaired at rank 1 that have a
/// ground truth (and produced a top candidate), how often the top
/// candidate's edits land within ±k of the ground truth's.
fn localization_summary(
    outcomes: &[EvalOutcome],
    dataset: &[DatasetTask],
    ks: &[usize],
) -> Option<LocalizationSummary> {
    if ks.is_empty() {
        return None;
    }
    let has_truth: std::collections::BTreeSet<&str> = dataset
        .iter()
        .filter(|t| t.fixed.is_some())
        .map(|t| t.id.as_str())
        .collect();
    let eligible: Vec<&EvalOutcome> = outcomes
        .iter()
        .filter(|o| {
            matches!(o.class, OutcomeClass::Repaired | OutcomeClass::Unrepaired)
                && has_truth.contains(o.task_id.as_str())
                && !pass_at_k(o, 1)
        })
        .collect();
    if eligible.is_empty() {
        return None;
    }
    let mut accuracy = BTreeMap::new();
    for &k in ks {
        let hits = eligible
            .iter()
            .filter(|o| o.localization_hits.get(&k).copied().unwrap_or(false))
            .count();
        accuracy.insert(k, hits as f64 / eligible.len() as f64);
    }
    Some(LocalizationSummary {
        eligible: eligible.len(),
        accuracy,
    })
}

/// Serialize the full report as pretty JSON with a trailing newline.
/// Deterministic for a given report.
pub fn write_report_json(report: &EvalReport, mut writer: impl Write) -> Result<(), EvalError> {
    serde_json::to_writer_pretty(&mut writer, report)?;
    writer.write_all(b"\n")?;
    Ok(())
}

/// One-line-per-task CSV for external plotting (scores, lengths, ranks).
pub fn write_summary_csv(report: &EvalReport, mut writer: impl Write) -> Result<(), EvalError> {
    writeln!(writer, "task_id,outcome,first_success_rank,top_score,num_tokens")?;
    for outcome in &report.outcomes {
        let class = match outcome.class {
            OutcomeClass::Repaired => "repaired",
            OutcomeClass::Unrepaired => "unrepaired",
            OutcomeClass::AlreadyValid => "already_valid",
            OutcomeClass::Error => "error",
        };
        let rank = outcome
            .first_success_rank
            .map(|r| r.to_string())
            .unwrap_or_default();
        let score = outcome.top_score.map(|s| s.to_string()).unwrap_or_default();
        writeln!(
            writer,
            "{},{class},{rank},{score},{}",
            outcome.task_id, outcome.num_tokens
        )?;
    }
    Ok(())
}

/// Human-readable summary table for terminal output.
pub fn render_report(report: &EvalReport) -> String {
    let mut out = String::new();
    out.push_str(&format!(
        "language: {}  metric: {}  tasks: {}\n",
        report.language,
        match report.metric {
            Metric::ExactMatch => "exact_match",
            Metric::ParseAndDistance => "parse_and_distance",
        },
        report.dataset_size
    ));
    out.push_str(&format!(
        "repaired: {}  unrepaired: {}  already_valid: {}  errors: {}\n",
        report.counts.repaired,
        report.counts.unrepaired,
        report.counts.already_valid,
        report.counts.error
    ));
    for (k, rate) in &report.pass_at_k {
        out.push_str(&format!("pass@{k}: {rate:.4}\n"));
    }
    if let Some(loc) = &report.localization {
        out.push_str(&format!(
            "localization (over {} tasks unrepaired at rank 1):\n",
            loc.eligible
        ));
        for (k, rate) in &loc.accuracy {
            out.push_str(&format!("  ±{k} tokens: {rate:.4}\n"));
        }
    }
    out
}
