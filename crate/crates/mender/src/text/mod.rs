//! Language-agnostic text machinery: tokens, a profile-driven lexer,
//! token-level edit distance, and program normalization.

mod distance;
mod lang;
mod lexer;
mod normalize;

pub use distance::{edit_locations, token_edit_distance, LexemeCase};
pub use lang::{LanguageProfile, LanguageRegistry};
pub use lexer::{tokenize, LexWarning, Tokenized};
pub use normalize::{normalize_program, NormalizationRules};

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Error)]
pub enum LanguageError {
    #[error("invalid language id `{0}`: must be non-empty, lowercase, without whitespace")]
    InvalidId(String),
    #[error("no language profile registered for `{0}`")]
    UnknownLanguage(String),
}

/// Canonical identifier for a language ("python", "excel", ...).
///
/// Ids are lowercase and free of whitespace; every id used by the pipeline
/// must resolve to a profile in a [`LanguageRegistry`].
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct LanguageId(String);

impl LanguageId {
    pub fn new(id: impl Into<String>) -> Result<Self, LanguageError> {
        let id = id.into();
        let ok = !id.is_empty()
            && id
                .chars()
                .all(|c| !c.is_whitespace() && !c.is_uppercase());
        if ok {
            Ok(LanguageId(id))
        } else {
            Err(LanguageError::InvalidId(id))
        }
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for LanguageId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl TryFrom<String> for LanguageId {
    type Error = LanguageError;

    fn try_from(value: String) -> Result<Self, Self::Error> {
        LanguageId::new(value)
    }
}

impl From<LanguageId> for String {
    fn from(value: LanguageId) -> String {
        value.0
    }
}

/// A program text tagged with the language it is written in.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SourceProgram {
    pub language: LanguageId,
    pub text: String,
}

impl SourceProgram {
    pub fn new(language: LanguageId, text: impl Into<String>) -> Self {
        SourceProgram {
            language,
            text: text.into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TokenKind {
    Identifier,
    Number,
    String,
    Operator,
    Punctuation,
    Comment,
    Whitespace,
    Newline,
    Other,
}

/// One lexed token. `line` and `col` are 1-based; `col` counts bytes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Token {
    pub lexeme: String,
    pub kind: TokenKind,
    pub line: u32,
    pub col: u32,
}

impl Token {
    /// Significant tokens are what distance, localization, and the fallback
    /// embedder operate on; whitespace, newlines, and comments are not.
    pub fn is_significant(&self) -> bool {
        !matches!(
            self.kind,
            TokenKind::Whitespace | TokenKind::Newline | TokenKind::Comment
        )
    }
}

/// Borrowed view of the significant tokens in a stream.
pub fn significant_tokens(tokens: &[Token]) -> Vec<&Token> {
    tokens.iter().filter(|t| t.is_significant()).collect()
}
