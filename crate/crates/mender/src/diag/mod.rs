//! Compiler/linter diagnostics: structured reports, canonical message
//! rendering for prompts, message abstraction, and per-category error
//! vectors for example retrieval.

mod adapter;

pub use adapter::{
    default_abstraction_patterns, default_parse_patterns, run_diagnostics, AdapterConfig,
    DiagnosticsSource, RawAdapterConfig,
};

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DiagError {
    #[error("diagnostics tool not found: `{command}`")]
    ToolUnavailable { command: String },
    #[error("diagnostics tool `{command}` timed out after {seconds:.1}s")]
    ToolTimeout { command: String, seconds: f64 },
    #[error("cannot render a message for a report with no diagnostics")]
    EmptyReport,
    #[error("program language `{program}` does not match adapter language `{adapter}`")]
    LanguageMismatch { program: String, adapter: String },
    #[error("invalid adapter config: {0}")]
    InvalidConfig(String),
    #[error("i/o error while running diagnostics: {0}")]
    Io(#[from] std::io::Error),
}

/// One parsed diagnostic. `category` is a short machine-readable code
/// (already mapped through the adapter's category map); `description` is the
/// human-readable text; location fields are 1-based and optional.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Diagnostic {
    pub category: String,
    pub description: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub line: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub col_start: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub col_end: Option<u32>,
    /// The raw tool output line this diagnostic was parsed from.
    pub raw: String,
}

impl Diagnostic {
    /// Category used for tool output lines that mention an error but match
    /// no parse pattern.
    pub const UNPARSED: &'static str = "unparsed";
}

/// Everything one diagnostics run produced. `exit_ok` is derived from the
/// parsed diagnostics, not the tool's exit status: a program is valid iff
/// the adapter parsed no diagnostics out of the output.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DiagnosticReport {
    pub tool: String,
    pub diagnostics: Vec<Diagnostic>,
    pub exit_ok: bool,
}

impl DiagnosticReport {
    pub fn new(tool: impl Into<String>, diagnostics: Vec<Diagnostic>) -> Self {
        let exit_ok = diagnostics.is_empty();
        DiagnosticReport {
            tool: tool.into(),
            diagnostics,
            exit_ok,
        }
    }

    /// Re-derive `exit_ok` after deserialization; reports loaded from disk
    /// must satisfy the same invariant as freshly built ones.
    pub fn validate(&self) -> Result<(), DiagError> {
        if self.exit_ok != self.diagnostics.is_empty() {
            return Err(DiagError::InvalidConfig(
                "report exit_ok contradicts its diagnostics list".to_string(),
            ));
        }
        Ok(())
    }
}

/// How diagnostics appear in prompts: full location detail or just the
/// abstracted description.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MessageStyle {
    Detailed,
    Abstracted,
}

/// Render a report into the canonical multi-line message embedded in
/// prompts, one line per diagnostic, numbered from (1).
///
/// Detailed form:
/// `Error: (i) <description>. Error in line: <line>, span starts <col_start> and ends <col_end>.`
/// Absent location fields are omitted together with their labels; a
/// diagnostic with no location at all has no second sentence.
///
/// Abstracted form: `Error: (i) <description>.` with `abstraction` patterns
/// applied to the description (see [`abstract_message`]).
pub fn render_message(
    report: &DiagnosticReport,
    style: MessageStyle,
    abstraction: &[Regex],
) -> Result<String, DiagError> {
    if report.diagnostics.is_empty() {
        return Err(DiagError::EmptyReport);
    }
    let lines: Vec<String> = report
        .diagnostics
        .iter()
        .enumerate()
        .map(|(i, d)| match style {
            MessageStyle::Detailed => render_detailed(i + 1, d),
            MessageStyle::Abstracted => {
                format!("Error: ({}) {}.", i + 1, abstract_message(&d.description, abstraction))
            }
        })
        .collect();
    Ok(lines.join("\n"))
}

fn render_detailed(ordinal: usize, d: &Diagnostic) -> String {
    let mut line = format!("Error: ({}) {}.", ordinal, d.description);
    let mut location_parts = Vec::new();
    if let Some(l) = d.line {
        location_parts.push(format!("line: {l}"));
    }
    if let Some(start) = d.col_start {
        let mut span = format!("span starts {start}");
        if let Some(end) = d.col_end {
            span.push_str(&format!(" and ends {end}"));
        }
        location_parts.push(span);
    }
    if !location_parts.is_empty() {
        line.push_str(&format!(" Error in {}.", location_parts.join(", ")));
    }
    line
}

/// Strip location stamps and other tool noise from a raw message: every
/// match of every pattern is deleted, surrounding whitespace is collapsed to
/// a single space, and the result is trimmed.
pub fn abstract_message(raw: &str, patterns: &[Regex]) -> String {
    let mut text = raw.to_string();
    for pattern in patterns {
        text = pattern.replace_all(&text, "").into_owned();
    }
    let collapsed: Vec<&str> = text.split_whitespace().collect();
    collapsed.join(" ")
}

/// Count diagnostics per canonical category. Component `j` counts
/// diagnostics whose category equals `index[j]`; a trailing component counts
/// everything else, so the output length is `index.len() + 1` and the
/// components always sum to the number of diagnostics.
pub fn error_vector(report: &DiagnosticReport, index: &[String]) -> Vec<u32> {
    let mut vector = vec![0u32; index.len() + 1];
    for diagnostic in &report.diagnostics {
        match index.iter().position(|c| *c == diagnostic.category) {
            Some(j) => vector[j] += 1,
            None => *vector.last_mut().expect("vector is non-empty") += 1,
        }
    }
    vector
}

#[cfg(test)]
mod tests {
    use super::*;

    fn diag(category: &str, description: &str) -> Diagnostic {
        Diagnostic {
            category: category.to_string(),
            description: description.to_string(),
            line: None,
            col_start: None,
            col_end: None,
            raw: description.to_string(),
        }
    }

    #[test]
    fn detailed_render_with_full_location() {
        let report = DiagnosticReport::new(
            "pyck",
            vec![Diagnostic {
                line: Some(2),
                col_start: Some(4),
                col_end: Some(32),
                ..diag("invalid-syntax", "invalid syntax")
            }],
        );
        assert_eq!(
            render_message(&report, MessageStyle::Detailed, &[]).unwrap(),
            "Error: (1) invalid syntax. Error in line: 2, span starts 4 and ends 32."
        );
    }

    #[test]
    fn detailed_render_omits_absent_fields_with_their_labels() {
        let no_location = DiagnosticReport::new("t", vec![diag("x", "boom")]);
        assert_eq!(
            render_message(&no_location, MessageStyle::Detailed, &[]).unwrap(),
            "Error: (1) boom."
        );

        let line_only = DiagnosticReport::new(
            "t",
            vec![Diagnostic {
                line: Some(7),
                ..diag("x", "boom")
            }],
        );
        assert_eq!(
            render_message(&line_only, MessageStyle::Detailed, &[]).unwrap(),
            "Error: (1) boom. Error in line: 7."
        );

        let open_span = DiagnosticReport::new(
            "t",
            vec![Diagnostic {
                line: Some(7),
                col_start: Some(3),
                ..diag("x", "boom")
            }],
        );
        assert_eq!(
            render_message(&open_span, MessageStyle::Detailed, &[]).unwrap(),
            "Error: (1) boom. Error in line: 7, span starts 3."
        );
    }

    #[test]
    fn multiple_diagnostics_are_numbered_and_newline_joined() {
        let report = DiagnosticReport::new("t", vec![diag("a", "first"), diag("b", "second")]);
        assert_eq!(
            render_message(&report, MessageStyle::Detailed, &[]).unwrap(),
            "Error: (1) first.\nError: (2) second."
        );
    }

    #[test]
    fn empty_report_cannot_be_rendered() {
        let report = DiagnosticReport::new("t", vec![]);
        assert!(matches!(
            render_message(&report, MessageStyle::Detailed, &[]),
            Err(DiagError::EmptyReport)
        ));
    }

    #[test]
    fn abstraction_removes_location_stamps() {
        let pattern = Regex::new(r"\d+:\d+: error:").unwrap();
        assert_eq!(
            abstract_message("16:6: error: expected ';' before 'printf'", &[pattern]),
            "expected ';' before 'printf'"
        );
    }

    #[test]
    fn abstraction_removes_every_match_and_collapses_whitespace() {
        let pattern = Regex::new(r"\d+:\d+: error:").unwrap();
        assert_eq!(
            abstract_message("1:2: error: a  b 3:4: error: c", &[pattern]),
            "a b c"
        );
    }

    #[test]
    fn abstracted_render_drops_locations_from_descriptions() {
        let report = DiagnosticReport::new(
            "cc",
            vec![diag("compile-error", "16:6: error: expected ';' before 'printf'")],
        );
        let pattern = Regex::new(r"\d+:\d+: error:").unwrap();
        assert_eq!(
            render_message(&report, MessageStyle::Abstracted, &[pattern]).unwrap(),
            "Error: (1) expected ';' before 'printf'."
        );
    }

    #[test]
    fn error_vector_counts_with_trailing_other_slot() {
        let report = DiagnosticReport::new(
            "t",
            vec![
                diag("invalid-syntax", "a"),
                diag("expected-token", "b"),
                diag("expected-token", "c"),
            ],
        );
        let index = vec!["invalid-syntax".to_string(), "expected-token".to_string()];
        assert_eq!(error_vector(&report, &index), vec![1, 2, 0]);
    }

    #[test]
    fn unknown_categories_fold_into_the_other_slot() {
        let report = DiagnosticReport::new("t", vec![diag("weird", "a"), diag("weird", "b")]);
        let index = vec!["invalid-syntax".to_string()];
        assert_eq!(error_vector(&report, &index), vec![0, 2]);
    }

    #[test]
    fn error_vector_components_sum_to_diagnostic_count() {
        let report = DiagnosticReport::new(
            "t",
            vec![diag("a", "x"), diag("b", "y"), diag("c", "z")],
        );
        let index = vec!["a".to_string(), "b".to_string()];
        let sum: u32 = error_vector(&report, &index).iter().sum();
        assert_eq!(sum as usize, report.diagnostics.len());
    }
}
