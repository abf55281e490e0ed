//! A tiny arithmetic expression language with an in-process validator.
//!
//! This exists so the evaluation harness can run end-to-end — diagnostics,
//! prompts, judging — without any external toolchain. The grammar:
//!
//! ```text
//! program := [identifier '='] expr
//! expr    := term (('+' | '-') term)*
//! term    := factor (('*' | '/') factor)*
//! factor  := number | identifier | '(' expr ')' | '-' factor
//! ```
//!
//! The validator reports the first error it finds, with one of a small set
//! of stable categories, mirroring how a real compiler adapter feeds the
//! pipeline.

use crate::diag::{DiagError, Diagnostic, DiagnosticReport, DiagnosticsSource};
use crate::text::{tokenize, LanguageId, LanguageRegistry, SourceProgram, Token, TokenKind};

pub const TOY_TOOL_ID: &str = "toy-validator";

/// In-process diagnostics source for the toy expression language.
pub struct ToyValidator {
    language: LanguageId,
    registry: LanguageRegistry,
}

impl Default for ToyValidator {
    fn default() -> Self {
        Self::new()
    }
}

impl ToyValidator {
    pub fn new() -> Self {
        ToyValidator {
            language: LanguageId::new("toy").expect("static id"),
            registry: LanguageRegistry::builtin(),
        }
    }
}

impl DiagnosticsSource for ToyValidator {
    fn tool_id(&self) -> &str {
        TOY_TOOL_ID
    }

    fn language(&self) -> &LanguageId {
        &self.language
    }

    fn diagnose(&self, program: &SourceProgram) -> Result<DiagnosticReport, DiagError> {
        if program.language != self.language {
            return Err(DiagError::LanguageMismatch {
                program: program.language.to_string(),
                adapter: self.language.to_string(),
            });
        }
        let profile = self
            .registry
            .profile(&self.language)
            .expect("toy profile is built in");
        let tokenized = tokenize(&program.text, profile);
        let tokens: Vec<&Token> = tokenized.significant();
        let diagnostics = match Parser::new(&tokens).parse_program() {
            Ok(()) => Vec::new(),
            Err(d) => vec![d],
        };
        Ok(DiagnosticReport::new(TOY_TOOL_ID, diagnostics))
    }
}

/// Recursive-descent parser over significant tokens; stops at the first
/// error and describes it.
struct Parser<'a> {
    tokens: &'a [&'a Token],
    pos: usize,
}

impl<'a> Parser<'a> {
    fn new(tokens: &'a [&'a Token]) -> Self {
        Parser { tokens, pos: 0 }
    }

    fn peek(&self) -> Option<&'a Token> {
        self.tokens.get(self.pos).copied()
    }

    fn bump(&mut self) -> Option<&'a Token> {
        let t = self.peek();
        if t.is_some() {
            self.pos += 1;
        }
        t
    }

    fn parse_program(&mut self) -> Result<(), Diagnostic> {
        if self.tokens.is_empty() {
            return Err(error_at("empty-program", "expected an expression", None));
        }
        // Optional `name =` assignment head.
        if self.tokens.len() >= 2
            && self.tokens[0].kind == TokenKind::Identifier
            && self.tokens[1].lexeme == "="
        {
            self.pos = 2;
        }
        self.parse_expr()?;
        if let Some(extra) = self.peek() {
            return Err(error_at(
                "trailing-input",
                &format!("unexpected input after the expression: `{}`", extra.lexeme),
                Some(extra),
            ));
        }
        Ok(())
    }

    fn parse_expr(&mut self) -> Result<(), Diagnostic> {
        self.parse_term()?;
        while let Some(t) = self.peek() {
            if t.lexeme == "+" || t.lexeme == "-" {
                self.bump();
                self.parse_term()?;
            } else {
                break;
            }
        }
        Ok(())
    }

    fn parse_term(&mut self) -> Result<(), Diagnostic> {
        self.parse_factor()?;
        while let Some(t) = self.peek() {
            if t.lexeme == "*" || t.lexeme == "/" {
                self.bump();
                self.parse_factor()?;
            } else {
                break;
            }
        }
        Ok(())
    }

    fn parse_factor(&mut self) -> Result<(), Diagnostic> {
        let Some(t) = self.peek() else {
            let last = self.tokens.last().copied();
            return Err(error_at(
                "missing-operand",
                "expected a number, name, or parenthesized expression",
                last,
            ));
        };
        match t.kind {
            TokenKind::Number => {
                if t.lexeme.matches('.').count() > 1 {
                    return Err(error_at(
                        "invalid-number",
                        &format!("number has too many decimal points: `{}`", t.lexeme),
                        Some(t),
                    ));
                }
                self.bump();
                Ok(())
            }
            TokenKind::Identifier => {
                self.bump();
                Ok(())
            }
            _ if t.lexeme == "(" => {
                let open = t;
                self.bump();
                self.parse_expr()?;
                match self.peek() {
                    Some(close) if close.lexeme == ")" => {
                        self.bump();
                        Ok(())
                    }
                    _ => Err(error_at(
                        "unbalanced-paren",
                        "expected `)` to close `(`",
                        Some(open),
                    )),
                }
            }
            _ if t.lexeme == "-" => {
                self.bump();
                self.parse_factor()
            }
            _ => Err(error_at(
                "unexpected-token",
                &format!("unexpected token `{}`", t.lexeme),
                Some(t),
            )),
        }
    }
}

fn error_at(category: &str, description: &str, token: Option<&Token>) -> Diagnostic {
    Diagnostic {
        category: category.to_string(),
        description: description.to_string(),
        line: token.map(|t| t.line),
        col_start: token.map(|t| t.col),
        col_end: token.map(|t| t.col + t.lexeme.chars().count().saturating_sub(1) as u32),
        raw: String::new(),
    }
}
