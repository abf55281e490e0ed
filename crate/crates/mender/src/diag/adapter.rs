//! Adapters wrap external compilers/linters behind a uniform interface: a
//! command template, regex parse patterns for the tool's output, and a map
//! from raw tool categories to canonical ones. Onboarding a language means
//! writing one of these configs, not writing code.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::process::{Command, Stdio};
use std::time::{Duration, Instant};

use regex::Regex;
use serde::{Deserialize, Serialize};

use super::{DiagError, Diagnostic, DiagnosticReport};
use crate::text::{LanguageId, SourceProgram};

/// Placeholder in the command template replaced by the temp-file path.
pub const FILE_PLACEHOLDER: &str = "{file}";

/// Anything that can diagnose a program: a subprocess adapter, or an
/// in-process validator (the toy language used by the test corpus).
pub trait DiagnosticsSource: Send + Sync {
    fn tool_id(&self) -> &str;
    fn language(&self) -> &LanguageId;
    fn diagnose(&self, program: &SourceProgram) -> Result<DiagnosticReport, DiagError>;
    /// Patterns stripped from descriptions when rendering abstracted
    /// messages (location stamps and similar tool noise).
    fn abstraction_patterns(&self) -> &[Regex] {
        &[]
    }
}

/// On-disk form of an adapter config (one TOML or JSON document per
/// language). Optional fields fall back to the built-in defaults for known
/// languages.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawAdapterConfig {
    pub language: String,
    /// Argv template; executed directly, never through a shell. Must contain
    /// `{file}` somewhere.
    pub command: Vec<String>,
    /// Suffix for the temp file the program is written to (tools like gcc
    /// sniff the language from it).
    #[serde(default)]
    pub file_suffix: Option<String>,
    #[serde(default)]
    pub timeout_secs: Option<f64>,
    #[serde(default)]
    pub parse_patterns: Option<Vec<String>>,
    #[serde(default)]
    pub abstraction_patterns: Option<Vec<String>>,
    #[serde(default)]
    pub category_map: BTreeMap<String, String>,
    /// When true and the tool exits nonzero without any parseable
    /// diagnostic, synthesize one from the output (for tools whose only
    /// usable signal is the exit status).
    #[serde(default)]
    pub nonzero_exit_is_error: bool,
}

impl RawAdapterConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, DiagError> {
        toml::from_str(text).map_err(|e| DiagError::InvalidConfig(e.to_string()))
    }

    pub fn from_json_str(text: &str) -> Result<Self, DiagError> {
        serde_json::from_str(text).map_err(|e| DiagError::InvalidConfig(e.to_string()))
    }

    pub fn compile(self) -> Result<AdapterConfig, DiagError> {
        AdapterConfig::from_raw(self)
    }
}

/// A validated adapter: regexes compiled, defaults resolved.
#[derive(Debug, Clone)]
pub struct AdapterConfig {
    language: LanguageId,
    command: Vec<String>,
    file_suffix: String,
    timeout: Duration,
    parse_patterns: Vec<Regex>,
    abstraction_patterns: Vec<Regex>,
    category_map: BTreeMap<String, String>,
    nonzero_exit_is_error: bool,
    tool_id: String,
}

const DEFAULT_TIMEOUT_SECS: f64 = 30.0;

impl AdapterConfig {
    pub fn from_raw(raw: RawAdapterConfig) -> Result<Self, DiagError> {
        let language = LanguageId::new(raw.language.as_str())
            .map_err(|e| DiagError::InvalidConfig(e.to_string()))?;
        if raw.command.is_empty() {
            return Err(DiagError::InvalidConfig("command must be non-empty".to_string()));
        }
        if !raw.command.iter().any(|a| a.contains(FILE_PLACEHOLDER)) {
            return Err(DiagError::InvalidConfig(format!(
                "command must reference the program via `{FILE_PLACEHOLDER}`"
            )));
        }
        let timeout_secs = raw.timeout_secs.unwrap_or(DEFAULT_TIMEOUT_SECS);
        // The comparison is written to also reject NaN.
        if timeout_secs.partial_cmp(&0.0) != Some(std::cmp::Ordering::Greater) {
            return Err(DiagError::InvalidConfig("timeout_secs must be positive".to_string()));
        }

        let parse_sources = match raw.parse_patterns {
            Some(patterns) => patterns,
            None => default_parse_patterns(language.as_str()),
        };
        // Adapters that signal errors purely through the exit status may run
        // without line patterns; everyone else needs at least one.
        if parse_sources.is_empty() && !raw.nonzero_exit_is_error {
            return Err(DiagError::InvalidConfig(
                "at least one parse pattern is required (no built-in defaults for this language)"
                    .to_string(),
            ));
        }
        let parse_patterns = compile_patterns(&parse_sources)?;
        for (pattern, source) in parse_patterns.iter().zip(&parse_sources) {
            let names: Vec<_> = pattern.capture_names().flatten().collect();
            if !names.contains(&"description") {
                return Err(DiagError::InvalidConfig(format!(
                    "parse pattern `{source}` must define a (?P<description>...) group"
                )));
            }
        }
        let abstraction_sources = match raw.abstraction_patterns {
            Some(patterns) => patterns,
            None => default_abstraction_patterns(language.as_str()),
        };
        let abstraction_patterns = compile_patterns(&abstraction_sources)?;

        let tool_id = raw.command[0].clone();
        Ok(AdapterConfig {
            language,
            command: raw.command,
            file_suffix: raw.file_suffix.unwrap_or_default(),
            timeout: Duration::from_secs_f64(timeout_secs),
            parse_patterns,
            abstraction_patterns,
            category_map: raw.category_map,
            nonzero_exit_is_error: raw.nonzero_exit_is_error,
            tool_id,
        })
    }

    pub fn from_toml_str(text: &str) -> Result<Self, DiagError> {
        RawAdapterConfig::from_toml_str(text)?.compile()
    }

    pub fn from_json_str(text: &str) -> Result<Self, DiagError> {
        RawAdapterConfig::from_json_str(text)?.compile()
    }

    pub fn command(&self) -> &[String] {
        &self.command
    }

    pub fn timeout(&self) -> Duration {
        self.timeout
    }

    pub fn parse_patterns(&self) -> &[Regex] {
        &self.parse_patterns
    }

    /// Map a raw tool category to its canonical form.
    fn canonical_category(&self, raw: &str) -> String {
        self.category_map.get(raw).cloned().unwrap_or_else(|| raw.to_string())
    }

    /// Parse merged tool output into diagnostics: each line is tried against
    /// the parse patterns in order (first match wins); unmatched lines that
    /// mention an error become `unparsed` diagnostics; everything else
    /// (context lines, carets, notes) is ignored.
    fn parse_output(&self, output: &str, exit_success: bool) -> DiagnosticReport {
        let mut diagnostics = Vec::new();
        'lines: for line in output.lines() {
            for pattern in &self.parse_patterns {
                if let Some(captures) = pattern.captures(line) {
                    if let Some(d) = self.diagnostic_from_captures(&captures, line) {
                        diagnostics.push(d);
                    }
                    continue 'lines;
                }
            }
            let trimmed = line.trim();
            if !trimmed.is_empty() && trimmed.to_lowercase().contains("error") {
                diagnostics.push(Diagnostic {
                    category: Diagnostic::UNPARSED.to_string(),
                    description: trimmed.to_string(),
                    line: None,
                    col_start: None,
                    col_end: None,
                    raw: line.to_string(),
                });
            }
        }
        if diagnostics.is_empty() && !exit_success && self.nonzero_exit_is_error {
            let description = output
                .lines()
                .map(str::trim)
                .find(|l| !l.is_empty())
                .unwrap_or("tool reported failure")
                .to_string();
            diagnostics.push(Diagnostic {
                category: "nonzero-exit".to_string(),
                description,
                line: None,
                col_start: None,
                col_end: None,
                raw: String::new(),
            });
        }
        DiagnosticReport::new(self.tool_id.clone(), diagnostics)
    }

    fn diagnostic_from_captures(&self, captures: &regex::Captures, line: &str) -> Option<Diagnostic> {
        let group = |name: &str| captures.name(name).map(|m| m.as_str());
        let number = |name: &str| group(name).and_then(|s| s.parse::<u32>().ok());

        let description = group("description").unwrap_or("").trim().to_string();
        if description.is_empty() {
            return None; // a diagnostic without a description is useless
        }
        let raw_category = group("category").unwrap_or("error");
        let col_start = number("col_start");
        // Honor col_start <= col_end; drop a span end that contradicts it.
        let col_end = number("col_end").filter(|end| col_start.is_some_and(|start| start <= *end));
        Some(Diagnostic {
            category: self.canonical_category(raw_category),
            description,
            line: number("line"),
            col_start,
            col_end,
            raw: line.to_string(),
        })
    }
}

impl DiagnosticsSource for AdapterConfig {
    fn tool_id(&self) -> &str {
        &self.tool_id
    }

    fn language(&self) -> &LanguageId {
        &self.language
    }

    fn diagnose(&self, program: &SourceProgram) -> Result<DiagnosticReport, DiagError> {
        run_diagnostics(program, self)
    }

    fn abstraction_patterns(&self) -> &[Regex] {
        &self.abstraction_patterns
    }
}

fn compile_patterns(sources: &[String]) -> Result<Vec<Regex>, DiagError> {
    sources
        .iter()
        .map(|s| Regex::new(s).map_err(|e| DiagError::InvalidConfig(format!("bad pattern `{s}`: {e}"))))
        .collect()
}

/// Built-in parse patterns for languages whose normalizer scripts / tools we
/// ship configs for. Every pattern names at least a `description` group.
pub fn default_parse_patterns(language: &str) -> Vec<String> {
    match language {
        "c" => vec![
            r"^[^:\s]+:(?P<line>\d+):(?P<col_start>\d+): error: (?P<description>.+)$".to_string(),
            r"^(?P<line>\d+):(?P<col_start>\d+): error: (?P<description>.+)$".to_string(),
        ],
        "python" => vec![
            r"^(?P<line>\d+):(?P<col_start>\d+):(?P<col_end>\d+)?:? ?(?P<category>[\w-]+): (?P<description>.+)$"
                .to_string(),
        ],
        "javascript" => vec![r"^(?P<category>\w*Error): (?P<description>.+)$".to_string()],
        _ => vec![],
    }
}

/// Built-in abstraction patterns (location stamps stripped from messages).
pub fn default_abstraction_patterns(language: &str) -> Vec<String> {
    match language {
        "c" => vec![r"\d+:\d+: error:".to_string()],
        "python" => vec![r"\d+:\d+(:\d+)?:".to_string()],
        _ => vec![],
    }
}

/// Write the program to a temp file, run the adapter's command on it (argv
/// exec, no shell), and parse the merged stdout+stderr into a report.
///
/// The child is killed after the adapter's timeout ([`DiagError::ToolTimeout`]);
/// a missing executable is [`DiagError::ToolUnavailable`]. Neither is ever
/// conflated with "the program is valid".
pub fn run_diagnostics(
    program: &SourceProgram,
    adapter: &AdapterConfig,
) -> Result<DiagnosticReport, DiagError> {
    if program.language != adapter.language {
        return Err(DiagError::LanguageMismatch {
            program: program.language.to_string(),
            adapter: adapter.language.to_string(),
        });
    }

    let mut file = tempfile::Builder::new()
        .prefix("mender-")
        .suffix(&adapter.file_suffix)
        .tempfile()?;
    file.write_all(program.text.as_bytes())?;
    file.flush()?;
    let path = file.path().to_string_lossy().into_owned();

    let argv: Vec<String> = adapter
        .command
        .iter()
        .map(|a| a.replace(FILE_PLACEHOLDER, &path))
        .collect();
    let output = run_command(&argv, adapter.timeout)?;
    Ok(adapter.parse_output(&output.merged, output.success))
}

struct CommandOutput {
    merged: String,
    success: bool,
}

fn run_command(argv: &[String], timeout: Duration) -> Result<CommandOutput, DiagError> {
    let command_name = argv[0].clone();
    let mut child = Command::new(&argv[0])
        .args(&argv[1..])
        .stdin(Stdio::null())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .map_err(|e| {
            if e.kind() == std::io::ErrorKind::NotFound {
                DiagError::ToolUnavailable {
                    command: command_name.clone(),
                }
            } else {
                DiagError::Io(e)
            }
        })?;

    // Drain both pipes on threads so a chatty tool cannot deadlock us.
    let stdout = child.stdout.take().expect("stdout piped");
    let stderr = child.stderr.take().expect("stderr piped");
    let out_reader = std::thread::spawn(move || read_all(stdout));
    let err_reader = std::thread::spawn(move || read_all(stderr));

    let deadline = Instant::now() + timeout;
    let status = loop {
        if let Some(status) = child.try_wait()? {
            break status;
        }
        if Instant::now() >= deadline {
            let _ = child.kill();
            let _ = child.wait();
            return Err(DiagError::ToolTimeout {
                command: command_name,
                seconds: timeout.as_secs_f64(),
            });
        }
        std::thread::sleep(Duration::from_millis(5));
    };

    let mut merged = out_reader.join().unwrap_or_default();
    let err_text = err_reader.join().unwrap_or_default();
    if !merged.is_empty() && !merged.ends_with('\n') && !err_text.is_empty() {
        merged.push('\n');
    }
    merged.push_str(&err_text);
    Ok(CommandOutput {
        merged,
        success: status.success(),
    })
}

fn read_all(mut pipe: impl Read) -> String {
    let mut buf = Vec::new();
    let _ = pipe.read_to_end(&mut buf);
    String::from_utf8_lossy(&buf).into_owned()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn echo_adapter(parse: &[&str]) -> AdapterConfig {
        AdapterConfig::from_raw(RawAdapterConfig {
            language: "c".to_string(),
            command: vec!["true".to_string(), "{file}".to_string()],
            file_suffix: None,
            timeout_secs: Some(5.0),
            parse_patterns: Some(parse.iter().map(|s| s.to_string()).collect()),
            abstraction_patterns: Some(vec![]),
            category_map: BTreeMap::new(),
            nonzero_exit_is_error: false,
        })
        .unwrap()
    }

    #[test]
    fn exit_status_only_adapter_needs_no_parse_patterns() {
        let adapter = AdapterConfig::from_raw(RawAdapterConfig {
            language: "powershell".to_string(),
            command: vec!["pwsh".to_string(), "{file}".to_string()],
            file_suffix: Some(".ps1".to_string()),
            timeout_secs: None,
            parse_patterns: Some(vec![]),
            abstraction_patterns: Some(vec![]),
            category_map: BTreeMap::new(),
            nonzero_exit_is_error: true,
        })
        .unwrap();
        let report = adapter.parse_output("Missing closing '}' in statement block.", false);
        assert_eq!(report.diagnostics.len(), 1);
        assert_eq!(report.diagnostics[0].category, "nonzero-exit");
        assert_eq!(report.diagnostics[0].description, "Missing closing '}' in statement block.");
        assert!(adapter.parse_patterns().is_empty());
    }

    #[test]
    fn parses_gcc_style_line_into_structured_diagnostic() {
        let adapter = echo_adapter(&[r"^(?P<line>\d+):(?P<col_start>\d+): error: (?P<description>.+)$"]);
        let report = adapter.parse_output("16:6: error: expected ';' before 'printf'", false);
        assert_eq!(report.diagnostics.len(), 1);
        let d = &report.diagnostics[0];
        assert_eq!(d.line, Some(16));
        assert_eq!(d.col_start, Some(6));
        assert_eq!(d.description, "expected ';' before 'printf'");
        assert_eq!(d.category, "error");
        assert!(!report.exit_ok);
    }

    #[test]
    fn category_map_canonicalizes_raw_categories() {
        let adapter = AdapterConfig::from_raw(RawAdapterConfig {
            language: "javascript".to_string(),
            command: vec!["node".to_string(), "--check".to_string(), "{file}".to_string()],
            file_suffix: Some(".js".to_string()),
            timeout_secs: None,
            parse_patterns: None,
            abstraction_patterns: None,
            category_map: [("SyntaxError".to_string(), "invalid-syntax".to_string())].into(),
            nonzero_exit_is_error: false,
        })
        .unwrap();
        let report = adapter.parse_output("SyntaxError: Unexpected token '}'", false);
        assert_eq!(report.diagnostics[0].category, "invalid-syntax");
    }

    #[test]
    fn unmatched_error_lines_become_unparsed_diagnostics() {
        let adapter = echo_adapter(&[r"^(?P<line>\d+): (?P<description>.+)$"]);
        let report = adapter.parse_output(
            "In function 'main':\nsomething Error: odd output\n      ^\n",
            false,
        );
        assert_eq!(report.diagnostics.len(), 1);
        assert_eq!(report.diagnostics[0].category, Diagnostic::UNPARSED);
        assert_eq!(report.diagnostics[0].description, "something Error: odd output");
    }

    #[test]
    fn clean_output_means_exit_ok_regardless_of_status() {
        let adapter = echo_adapter(&[r"^(?P<line>\d+): (?P<description>.+)$"]);
        // Nonzero exit with unparseable, non-error output (e.g. a linter
        // grumbling about style) still counts as valid.
        let report = adapter.parse_output("2 style notes\n", false);
        assert!(report.exit_ok);
    }

    #[test]
    fn nonzero_exit_fallback_synthesizes_a_diagnostic_when_enabled() {
        let mut raw = RawAdapterConfig {
            language: "powershell".to_string(),
            command: vec!["pwsh".to_string(), "{file}".to_string()],
            file_suffix: None,
            timeout_secs: None,
            parse_patterns: Some(vec![r"^(?P<line>\d+): (?P<description>.+)$".to_string()]),
            abstraction_patterns: Some(vec![]),
            category_map: BTreeMap::new(),
            nonzero_exit_is_error: true,
        };
        let adapter = AdapterConfig::from_raw(raw.clone()).unwrap();
        let report = adapter.parse_output("parse failed\n", false);
        assert_eq!(report.diagnostics.len(), 1);
        assert_eq!(report.diagnostics[0].category, "nonzero-exit");
        assert_eq!(report.diagnostics[0].description, "parse failed");

        // ...and with the flag off the same output is a clean report.
        raw.nonzero_exit_is_error = false;
        let lenient = AdapterConfig::from_raw(raw).unwrap();
        assert!(lenient.parse_output("parse failed\n", false).exit_ok);
    }

    #[test]
    fn command_without_file_placeholder_is_rejected() {
        let err = AdapterConfig::from_raw(RawAdapterConfig {
            language: "c".to_string(),
            command: vec!["gcc".to_string()],
            file_suffix: None,
            timeout_secs: None,
            parse_patterns: Some(vec![r"(?P<description>.+)".to_string()]),
            abstraction_patterns: None,
            category_map: BTreeMap::new(),
            nonzero_exit_is_error: false,
        })
        .unwrap_err();
        assert!(matches!(err, DiagError::InvalidConfig(_)));
    }

    #[test]
    fn parse_pattern_must_capture_a_description() {
        let err = AdapterConfig::from_raw(RawAdapterConfig {
            language: "c".to_string(),
            command: vec!["gcc".to_string(), "{file}".to_string()],
            file_suffix: None,
            timeout_secs: None,
            parse_patterns: Some(vec![r"^(?P<line>\d+)$".to_string()]),
            abstraction_patterns: None,
            category_map: BTreeMap::new(),
            nonzero_exit_is_error: false,
        })
        .unwrap_err();
        assert!(err.to_string().contains("description"));
    }

    #[test]
    fn missing_tool_is_tool_unavailable() {
        let adapter = AdapterConfig::from_raw(RawAdapterConfig {
            language: "c".to_string(),
            command: vec!["definitely-not-a-real-tool-x9".to_string(), "{file}".to_string()],
            file_suffix: None,
            timeout_secs: Some(2.0),
            parse_patterns: Some(vec![r"(?P<description>.+)".to_string()]),
            abstraction_patterns: None,
            category_map: BTreeMap::new(),
            nonzero_exit_is_error: false,
        })
        .unwrap();
        let program = SourceProgram::new(LanguageId::new("c").unwrap(), "int main(){}");
        assert!(matches!(
            run_diagnostics(&program, &adapter),
            Err(DiagError::ToolUnavailable { .. })
        ));
    }

    #[test]
    fn slow_tool_times_out_and_is_killed() {
        let adapter = AdapterConfig::from_raw(RawAdapterConfig {
            language: "c".to_string(),
            command: vec![
                "sh".to_string(),
                "-c".to_string(),
                "sleep 5".to_string(),
                "{file}".to_string(),
            ],
            file_suffix: None,
            timeout_secs: Some(0.2),
            parse_patterns: Some(vec![r"(?P<description>.+)".to_string()]),
            abstraction_patterns: None,
            category_map: BTreeMap::new(),
            nonzero_exit_is_error: false,
        })
        .unwrap();
        let program = SourceProgram::new(LanguageId::new("c").unwrap(), "x");
        let started = Instant::now();
        let result = run_diagnostics(&program, &adapter);
        assert!(matches!(result, Err(DiagError::ToolTimeout { .. })));
        assert!(started.elapsed() < Duration::from_secs(3));
    }

    #[test]
    fn language_mismatch_is_rejected_before_running() {
        let adapter = echo_adapter(&[r"(?P<description>.+)"]);
        let program = SourceProgram::new(LanguageId::new("python").unwrap(), "x = 1");
        assert!(matches!(
            run_diagnostics(&program, &adapter),
            Err(DiagError::LanguageMismatch { .. })
        ));
    }
}
