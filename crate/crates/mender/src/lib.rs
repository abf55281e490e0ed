//! Last-mile repair of almost-correct programs.
//!
//! The pipeline localizes faults with compiler/linter diagnostics, builds a
//! few-shot prompt around the buggy program (optionally retrieving similar
//! buggy/fixed pairs from an example bank), samples candidate fixes from a
//! completion provider, and ranks the candidates by average token
//! log-probability. Everything is language-agnostic: per-language behaviour
//! comes from small profiles (lexing), adapter configs (diagnostics), and
//! normalization rule sets.
//!
//! Module map:
//!
//! * [`text`] — generic lexer, token-level edit distance, normalization.
//! * [`diag`] — diagnostics adapters, canonical message rendering, error vectors.
//! * [`bank`] — buggy/fixed example bank, embeddings, shot selection.
//! * [`prompt`] — few-shot prompt assembly under a character budget.
//! * [`llm`] — completion provider abstraction: remote HTTP, scripted mock, cache.
//! * [`rank`] — candidate filtering and log-probability ranking.
//! * [`engine`] — the end-to-end repair pipeline.
//! * [`eval`] — datasets, success judges, pass@k, reports.

#![forbid(unsafe_code)]

pub mod bank;
pub mod diag;
pub mod engine;
pub mod eval;
pub mod llm;
pub mod prompt;
pub mod rank;
pub mod text;
