//! Few-shot prompt assembly.
//!
//! The layout is deliberately rigid — completion models are sensitive to
//! header drift, and golden-file tests pin the exact bytes:
//!
//! ```text
//! Fix bugs in the below code:
//! ### Buggy <Lang>
//! <shot buggy program>
//! <rendered diagnostics>          (when a message style is configured)
//! ### Fixed <Lang>
//! <shot fixed program>
//! ...
//! ### Buggy <Lang>
//! <target buggy program>
//! <rendered diagnostics>
//! ### Fixed <Lang>
//! ```
//!
//! The completion continues after the final header; `"### "` doubles as the
//! stop sequence. Bump [`PROMPT_LAYOUT_VERSION`] when the layout changes so
//! golden files and caches can evolve deliberately.

use regex::Regex;
use thiserror::Error;

use crate::bank::{BuggyFixedPair, ShotStrategy};
use crate::diag::{render_message, DiagError, DiagnosticReport, MessageStyle};
use crate::text::SourceProgram;

pub const PROMPT_LAYOUT_VERSION: u32 = 1;

/// The instruction line that opens every prompt (droppable via
/// [`PromptConfig::include_preamble`] for models that do better without it).
pub const PREAMBLE: &str = "Fix bugs in the below code:";

/// Default character budget: roughly a 4k-token context at the conventional
/// four-characters-per-token estimate.
pub const DEFAULT_MAX_PROMPT_CHARS: usize = 16_384;

#[derive(Debug, Error)]
pub enum PromptError {
    #[error("prompt needs {needed} chars but the budget is {budget}; the target program alone does not fit")]
    PromptOverflow { needed: usize, budget: usize },
    #[error("message style is configured but no diagnostic report was provided for {0}")]
    MissingReport(String),
    #[error("invalid prompt config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Render(#[from] DiagError),
}

/// Everything that shapes a prompt besides the programs themselves.
#[derive(Debug, Clone)]
pub struct PromptConfig {
    /// `None` renders no diagnostics at all (message-free ablation).
    pub message_style: Option<MessageStyle>,
    pub shot_strategy: ShotStrategy,
    /// Number of shots requested from selection. Must be zero exactly when
    /// the strategy is `None`.
    pub shots: usize,
    pub max_prompt_chars: usize,
    /// Display name substituted into the headers ("Python").
    pub language_display: String,
    pub include_preamble: bool,
}

impl PromptConfig {
    /// Zero-shot, detailed-message defaults for a language display name.
    pub fn new(language_display: impl Into<String>) -> Self {
        PromptConfig {
            message_style: Some(MessageStyle::Detailed),
            shot_strategy: ShotStrategy::None,
            shots: 0,
            max_prompt_chars: DEFAULT_MAX_PROMPT_CHARS,
            language_display: language_display.into(),
            include_preamble: true,
        }
    }

    pub fn validate(&self) -> Result<(), PromptError> {
        let zero_shot = self.shot_strategy == ShotStrategy::None;
        if zero_shot != (self.shots == 0) {
            return Err(PromptError::InvalidConfig(format!(
                "shots = {} contradicts shot strategy {:?}",
                self.shots, self.shot_strategy
            )));
        }
        if self.max_prompt_chars == 0 {
            return Err(PromptError::InvalidConfig("max_prompt_chars must be positive".to_string()));
        }
        if self.language_display.is_empty() {
            return Err(PromptError::InvalidConfig("language_display must be non-empty".to_string()));
        }
        Ok(())
    }
}

/// One shot ready for layout: the pair plus the diagnostics of its buggy
/// side (required whenever a message style is configured).
pub struct ShotInput<'a> {
    pub pair: &'a BuggyFixedPair,
    pub report: Option<&'a DiagnosticReport>,
}

/// A finished prompt. `shot_ids` lists the shots actually included, in
/// order; `truncated` is set when the budget dropped any.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Prompt {
    pub text: String,
    pub shot_ids: Vec<String>,
    pub truncated: bool,
}

/// Assemble the prompt for `target`.
///
/// The target program appears verbatim exactly once and is never truncated.
/// If the assembled text exceeds the budget, shots are dropped from the end
/// of `shots` until it fits; if the zero-shot layout still exceeds the
/// budget the result is [`PromptError::PromptOverflow`].
pub fn build_prompt(
    target: &SourceProgram,
    report: Option<&DiagnosticReport>,
    shots: &[ShotInput],
    config: &PromptConfig,
    abstraction: &[Regex],
) -> Result<Prompt, PromptError> {
    config.validate()?;
    if config.message_style.is_some() && report.is_none() {
        return Err(PromptError::MissingReport("the target program".to_string()));
    }

    let target_message = message_for(report, config, abstraction, "the target program")?;
    let mut shot_sections = Vec::with_capacity(shots.len());
    for shot in shots {
        let message = message_for(
            shot.report,
            config,
            abstraction,
            &format!("shot `{}`", shot.pair.id()),
        )?;
        shot_sections.push((shot.pair, message));
    }

    let mut included = shot_sections.len();
    loop {
        let text = layout(target, &target_message, &shot_sections[..included], config);
        if text.chars().count() <= config.max_prompt_chars {
            return Ok(Prompt {
                text,
                shot_ids: shot_sections[..included]
                    .iter()
                    .map(|(pair, _)| pair.id().to_string())
                    .collect(),
                truncated: included < shot_sections.len(),
            });
        }
        if included == 0 {
            return Err(PromptError::PromptOverflow {
                needed: text.chars().count(),
                budget: config.max_prompt_chars,
            });
        }
        included -= 1;
    }
}

fn message_for(
    report: Option<&DiagnosticReport>,
    config: &PromptConfig,
    abstraction: &[Regex],
    what: &str,
) -> Result<Option<String>, PromptError> {
    match config.message_style {
        None => Ok(None),
        Some(style) => {
            let report = report.ok_or_else(|| PromptError::MissingReport(what.to_string()))?;
            Ok(Some(render_message(report, style, abstraction)?))
        }
    }
}

fn layout(
    target: &SourceProgram,
    target_message: &Option<String>,
    shots: &[(&BuggyFixedPair, Option<String>)],
    config: &PromptConfig,
) -> String {
    let lang = &config.language_display;
    let mut parts: Vec<&str> = Vec::new();
    if config.include_preamble {
        parts.push(PREAMBLE);
    }
    let buggy_header = format!("### Buggy {lang}");
    let fixed_header = format!("### Fixed {lang}");
    for (pair, message) in shots {
        parts.push(&buggy_header);
        parts.push(trim_trailing_newlines(&pair.buggy().text));
        if let Some(message) = message {
            parts.push(message);
        }
        parts.push(&fixed_header);
        parts.push(trim_trailing_newlines(&pair.fixed().text));
    }
    parts.push(&buggy_header);
    parts.push(trim_trailing_newlines(&target.text));
    if let Some(message) = target_message {
        parts.push(message);
    }
    parts.push(&fixed_header);

    let mut text = parts.join("\n");
    text.push('\n');
    text
}

/// Program texts join the layout without their trailing newlines so headers
/// always start at a fresh line exactly once.
fn trim_trailing_newlines(text: &str) -> &str {
    text.trim_end_matches(['\n', '\r'])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bank::PairSource;
    use crate::diag::{Diagnostic, DiagnosticReport};
    use crate::text::LanguageId;

    fn program(text: &str) -> SourceProgram {
        SourceProgram::new(LanguageId::new("python").unwrap(), text)
    }

    fn syntax_report() -> DiagnosticReport {
        DiagnosticReport::new(
            "pyck",
            vec![Diagnostic {
                category: "invalid-syntax".to_string(),
                description: "invalid syntax".to_string(),
                line: Some(2),
                col_start: Some(4),
                col_end: Some(32),
                raw: "2:4:32: invalid-syntax: invalid syntax".to_string(),
            }],
        )
    }

    fn config() -> PromptConfig {
        PromptConfig::new("Python")
    }

    #[test]
    fn zero_shot_without_message_is_the_bare_template() {
        let mut cfg = config();
        cfg.message_style = None;
        let prompt = build_prompt(&program("x = (1\n"), None, &[], &cfg, &[]).unwrap();
        assert_eq!(
            prompt.text,
            "Fix bugs in the below code:\n### Buggy Python\nx = (1\n### Fixed Python\n"
        );
        assert!(prompt.shot_ids.is_empty());
        assert!(!prompt.truncated);
    }

    #[test]
    fn detailed_message_sits_between_program_and_fixed_header() {
        let report = syntax_report();
        let prompt = build_prompt(&program("x = (1"), Some(&report), &[], &config(), &[]).unwrap();
        assert_eq!(
            prompt.text,
            "Fix bugs in the below code:\n\
             ### Buggy Python\n\
             x = (1\n\
             Error: (1) invalid syntax. Error in line: 2, span starts 4 and ends 32.\n\
             ### Fixed Python\n"
        );
    }

    #[test]
    fn prompt_contains_target_verbatim_exactly_once() {
        let body = "def f((a, b)):\n    return a + b";
        let report = syntax_report();
        let prompt = build_prompt(&program(body), Some(&report), &[], &config(), &[]).unwrap();
        assert_eq!(prompt.text.matches(body).count(), 1);
        assert!(prompt.text.ends_with("### Fixed Python\n"));
    }

    #[test]
    fn shots_render_before_the_target_in_order() {
        let shot_pair = BuggyFixedPair::new(
            "s1",
            program("def g((x)):\n    return x"),
            program("def g(x):\n    return x"),
            PairSource::Curated,
        )
        .unwrap();
        let shot_report = syntax_report();
        let mut cfg = config();
        cfg.shot_strategy = ShotStrategy::Fixed;
        cfg.shots = 1;
        let target_report = syntax_report();
        let prompt = build_prompt(
            &program("def f((a)):\n    return a"),
            Some(&target_report),
            &[ShotInput {
                pair: &shot_pair,
                report: Some(&shot_report),
            }],
            &cfg,
            &[],
        )
        .unwrap();
        assert_eq!(prompt.shot_ids, vec!["s1"]);
        let shot_pos = prompt.text.find("def g((x))").unwrap();
        let target_pos = prompt.text.find("def f((a))").unwrap();
        assert!(shot_pos < target_pos);
        // Two buggy/fixed blocks: the shot's and the target's.
        assert_eq!(prompt.text.matches("### Buggy Python\n").count(), 2);
        assert_eq!(prompt.text.matches("### Fixed Python\n").count(), 2);
    }

    #[test]
    fn missing_report_with_message_style_is_an_error() {
        let result = build_prompt(&program("x"), None, &[], &config(), &[]);
        assert!(matches!(result, Err(PromptError::MissingReport(_))));
    }

    #[test]
    fn budget_drops_shots_from_the_end_never_the_target() {
        let make_pair = |id: &str| {
            BuggyFixedPair::new(
                id,
                program(&format!("{} = (1", id)),
                program(&format!("{} = (1)", id)),
                PairSource::Curated,
            )
            .unwrap()
        };
        let p1 = make_pair("first");
        let p2 = make_pair("second");
        let report = syntax_report();
        let mut cfg = config();
        cfg.message_style = None;
        cfg.shot_strategy = ShotStrategy::Fixed;
        cfg.shots = 2;

        let full = build_prompt(
            &program("t = (9"),
            Some(&report),
            &[
                ShotInput { pair: &p1, report: None },
                ShotInput { pair: &p2, report: None },
            ],
            &cfg,
            &[],
        )
        .unwrap();
        assert_eq!(full.shot_ids, vec!["first", "second"]);

        // Shrink the budget so only the first shot fits.
        cfg.max_prompt_chars = full.text.chars().count() - 1;
        let truncated = build_prompt(
            &program("t = (9"),
            Some(&report),
            &[
                ShotInput { pair: &p1, report: None },
                ShotInput { pair: &p2, report: None },
            ],
            &cfg,
            &[],
        )
        .unwrap();
        assert_eq!(truncated.shot_ids, vec!["first"]);
        assert!(truncated.truncated);
        assert!(truncated.text.contains("t = (9"));
    }

    #[test]
    fn target_too_large_for_budget_is_overflow() {
        let mut cfg = config();
        cfg.message_style = None;
        cfg.max_prompt_chars = 10;
        let result = build_prompt(&program("a very long program text"), None, &[], &cfg, &[]);
        assert!(matches!(result, Err(PromptError::PromptOverflow { .. })));
    }

    #[test]
    fn shots_must_be_zero_iff_strategy_is_none() {
        let mut cfg = config();
        cfg.shots = 2; // strategy is still None
        assert!(matches!(cfg.validate(), Err(PromptError::InvalidConfig(_))));
        cfg.shot_strategy = ShotStrategy::ErrorVector;
        assert!(cfg.validate().is_ok());
        cfg.shots = 0;
        assert!(cfg.validate().is_err());
    }
}
