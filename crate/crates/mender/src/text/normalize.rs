//! Program normalization for candidate comparison and deduplication.
//!
//! Each language ships a rule set describing which token classes to discard
//! and whether identifiers are case-folded. Normalized text is only used for
//! *comparison* (exact-match judging, duplicate filtering) — it is never fed
//! back to a compiler.

use serde::{Deserialize, Serialize};

use super::{tokenize, LanguageProfile, TokenKind};

/// What to discard or fold when normalizing a program.
///
/// `collapse_whitespace` removes whitespace tokens entirely (so `int x`
/// normalizes to `intx`); `drop_newlines` does the same for newline tokens.
/// String literals are never altered.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct NormalizationRules {
    pub strip_line_comments: Vec<String>,
    pub strip_block_comments: Vec<(String, String)>,
    pub collapse_whitespace: bool,
    pub drop_newlines: bool,
    pub uppercase_identifiers: bool,
}

impl NormalizationRules {
    /// True when rule application is a no-op (e.g. PowerShell, Power Fx).
    pub fn is_identity(&self) -> bool {
        self == &NormalizationRules::default()
    }
}

/// Apply `rules` to `text`, using `profile` for string-literal boundaries.
///
/// Steps per pass: strip comments, then drop whitespace/newlines, then
/// uppercase identifiers. Passes repeat until a fixed point so the result is
/// idempotent even when token removal forms new comment markers (removing
/// the space in `a / / b` creates `//`, which the next pass strips).
pub fn normalize_program(text: &str, rules: &NormalizationRules, profile: &LanguageProfile) -> String {
    if rules.is_identity() {
        return text.to_string();
    }
    let mut current = text.to_string();
    // Converges in two or three passes in practice; the bound is a guard
    // against pathological inputs, not a tuning knob.
    for _ in 0..32 {
        let next = normalize_pass(&current, rules, profile);
        if next == current {
            break;
        }
        current = next;
    }
    current
}

fn normalize_pass(text: &str, rules: &NormalizationRules, profile: &LanguageProfile) -> String {
    // Lex with the rules' comment markers (normalization strips exactly
    // those) but the profile's quote characters (strings stay protected).
    let lex_profile = LanguageProfile {
        line_comments: rules.strip_line_comments.clone(),
        block_comments: rules.strip_block_comments.clone(),
        ..profile.clone()
    };
    let mut out = String::with_capacity(text.len());
    for token in tokenize(text, &lex_profile).tokens {
        match token.kind {
            TokenKind::Comment => {}
            TokenKind::Whitespace if rules.collapse_whitespace => {}
            TokenKind::Newline if rules.drop_newlines => {}
            TokenKind::Identifier if rules.uppercase_identifiers => {
                out.push_str(&token.lexeme.to_uppercase());
            }
            _ => out.push_str(&token.lexeme),
        }
    }
    out
}
