//! A single generic lexer parameterized by a [`LanguageProfile`] instead of
//! one hand-written lexer per language. It is intentionally coarse: the
//! pipeline only needs stable token boundaries for distance and
//! normalization, not a full grammar.

use super::{LanguageProfile, Token, TokenKind};

/// Non-fatal problem noticed while lexing (e.g. an unterminated string).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LexWarning {
    pub line: u32,
    pub col: u32,
    pub message: String,
}

/// Lexer output. Concatenating `tokens` lexemes always reproduces the input
/// text byte for byte; `warnings` never abort lexing.
#[derive(Debug, Clone)]
pub struct Tokenized {
    pub tokens: Vec<Token>,
    pub warnings: Vec<LexWarning>,
}

impl Tokenized {
    pub fn significant(&self) -> Vec<&Token> {
        super::significant_tokens(&self.tokens)
    }
}

const PUNCTUATION: &str = "()[]{},;:.";

/// Split `text` into tokens according to `profile`.
///
/// Rules, in match order at each position: newlines; whitespace runs; block
/// comments; line comments; strings (profile quote chars, backslash
/// escaping); identifiers (letter/underscore then letters/digits/underscores);
/// numbers (maximal digit/dot runs); everything else as single-character
/// operator or punctuation tokens.
///
/// An unterminated string consumes the remainder of its line as one string
/// token and records a warning; lexing never fails.
pub fn tokenize(text: &str, profile: &LanguageProfile) -> Tokenized {
    Lexer::new(text, profile).run()
}

struct Lexer<'a> {
    text: &'a str,
    profile: &'a LanguageProfile,
    pos: usize,
    line: u32,
    col: u32,
    tokens: Vec<Token>,
    warnings: Vec<LexWarning>,
}

impl<'a> Lexer<'a> {
    fn new(text: &'a str, profile: &'a LanguageProfile) -> Self {
        Lexer {
            text,
            profile,
            pos: 0,
            line: 1,
            col: 1,
            tokens: Vec::new(),
            warnings: Vec::new(),
        }
    }

    fn run(mut self) -> Tokenized {
        while self.pos < self.text.len() {
            let start_line = self.line;
            let start_col = self.col;
            let (kind, lexeme) = self.next_lexeme();
            self.advance_position(&lexeme);
            self.tokens.push(Token {
                lexeme,
                kind,
                line: start_line,
                col: start_col,
            });
        }
        Tokenized {
            tokens: self.tokens,
            warnings: self.warnings,
        }
    }

    fn rest(&self) -> &'a str {
        &self.text[self.pos..]
    }

    fn next_lexeme(&mut self) -> (TokenKind, String) {
        let rest = self.rest();
        let first = rest.chars().next().expect("non-empty rest");

        if rest.starts_with("\r\n") {
            return (TokenKind::Newline, "\r\n".to_string());
        }
        if first == '\n' {
            return (TokenKind::Newline, "\n".to_string());
        }
        if first == '\r' {
            // A lone carriage return (not part of CRLF, handled above).
            return (TokenKind::Whitespace, "\r".to_string());
        }
        if first.is_whitespace() {
            let end = rest
                .char_indices()
                .find(|(_, c)| !c.is_whitespace() || *c == '\n' || *c == '\r')
                .map(|(i, _)| i)
                .unwrap_or(rest.len());
            return (TokenKind::Whitespace, rest[..end].to_string());
        }
        for (open, close) in &self.profile.block_comments {
            if rest.starts_with(open.as_str()) {
                return (TokenKind::Comment, self.take_block_comment(rest, open, close));
            }
        }
        for prefix in &self.profile.line_comments {
            if rest.starts_with(prefix.as_str()) {
                let end = rest.find('\n').unwrap_or(rest.len());
                return (TokenKind::Comment, rest[..end].to_string());
            }
        }
        if self.profile.quote_chars.contains(&first) {
            return (TokenKind::String, self.take_string(rest, first));
        }
        if first.is_alphabetic() || first == '_' {
            let end = rest
                .char_indices()
                .find(|(_, c)| !c.is_alphanumeric() && *c != '_')
                .map(|(i, _)| i)
                .unwrap_or(rest.len());
            return (TokenKind::Identifier, rest[..end].to_string());
        }
        if first.is_ascii_digit() {
            let end = rest
                .char_indices()
                .find(|(_, c)| !c.is_ascii_digit() && *c != '.')
                .map(|(i, _)| i)
                .unwrap_or(rest.len());
            return (TokenKind::Number, rest[..end].to_string());
        }
        let len = first.len_utf8();
        let kind = if PUNCTUATION.contains(first) {
            TokenKind::Punctuation
        } else if first.is_ascii() {
            TokenKind::Operator
        } else {
            TokenKind::Other
        };
        (kind, rest[..len].to_string())
    }

    /// Consume a block comment from `open` to the first `close`; an
    /// unterminated comment runs to the end of input with a warning.
    fn take_block_comment(&mut self, rest: &str, open: &str, close: &str) -> String {
        match rest[open.len()..].find(close) {
            Some(i) => rest[..open.len() + i + close.len()].to_string(),
            None => {
                self.warn(format!("unterminated block comment (missing `{close}`)"));
                rest.to_string()
            }
        }
    }

    /// Consume a string literal starting at `quote`. Backslash escapes the
    /// next character. If the line (or input) ends before the closing quote,
    /// the remainder of the line becomes the string token and a warning is
    /// recorded.
    fn take_string(&mut self, rest: &str, quote: char) -> String {
        let mut chars = rest.char_indices().skip(1);
        let mut escaped = false;
        for (i, c) in &mut chars {
            if escaped {
                escaped = false;
                continue;
            }
            match c {
                '\\' => escaped = true,
                '\n' => {
                    self.warn(format!("unterminated string (missing closing {quote})"));
                    return rest[..i].to_string();
                }
                c if c == quote => return rest[..i + c.len_utf8()].to_string(),
                _ => {}
            }
        }
        self.warn(format!("unterminated string (missing closing {quote})"));
        let end = rest.find('\n').unwrap_or(rest.len());
        rest[..end].to_string()
    }

    fn warn(&mut self, message: String) {
        self.warnings.push(LexWarning {
            line: self.line,
            col: self.col,
            message,
        });
    }

    fn advance_position(&mut self, lexeme: &str) {
        self.pos += lexeme.len();
        for c in lexeme.chars() {
            if c == '\n' {
                self.line += 1;
                self.col = 1;
            } else {
                self.col += c.len_utf8() as u32;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::super::LanguageRegistry;
    use super::*;
    use crate::text::TokenKind::*;

    fn kinds(text: &str, lang: &str) -> Vec<TokenKind> {
        let registry = LanguageRegistry::builtin();
        let profile = registry.profile_by_name(lang).unwrap();
        tokenize(text, profile)
            .tokens
            .into_iter()
            .map(|t| t.kind)
            .collect()
    }

    #[test]
    fn splits_assignment_into_expected_kinds() {
        assert_eq!(
            kinds("a = 1", "python"),
            vec![Identifier, Whitespace, Operator, Whitespace, Number]
        );
    }

    #[test]
    fn splits_def_header_into_expected_kinds() {
        assert_eq!(
            kinds("def f((a)):", "python"),
            vec![
                Identifier,
                Whitespace,
                Identifier,
                Punctuation,
                Punctuation,
                Identifier,
                Punctuation,
                Punctuation,
                Punctuation
            ]
        );
    }

    #[test]
    fn string_with_escape_is_one_token() {
        let registry = LanguageRegistry::builtin();
        let profile = registry.profile_by_name("python").unwrap();
        let out = tokenize(r#"x = "a\"b" + 1"#, profile);
        let strings: Vec<_> = out
            .tokens
            .iter()
            .filter(|t| t.kind == String)
            .map(|t| t.lexeme.as_str())
            .collect();
        assert_eq!(strings, vec![r#""a\"b""#]);
        assert!(out.warnings.is_empty());
    }

    #[test]
    fn unterminated_string_takes_rest_of_line_with_warning() {
        let registry = LanguageRegistry::builtin();
        let profile = registry.profile_by_name("python").unwrap();
        let out = tokenize("x = \"oops\ny = 1", profile);
        let s = out.tokens.iter().find(|t| t.kind == String).unwrap();
        assert_eq!(s.lexeme, "\"oops");
        assert_eq!(out.warnings.len(), 1);
        // Lexing continues on the next line.
        assert!(out.tokens.iter().any(|t| t.lexeme == "y"));
    }

    #[test]
    fn comments_line_and_block() {
        let c_kinds = kinds("x /* block */ = 1 // tail", "c");
        assert_eq!(
            c_kinds,
            vec![
                Identifier, Whitespace, Comment, Whitespace, Operator, Whitespace, Number,
                Whitespace, Comment
            ]
        );
    }

    #[test]
    fn line_and_column_positions_are_one_based_bytes() {
        let registry = LanguageRegistry::builtin();
        let profile = registry.profile_by_name("python").unwrap();
        let out = tokenize("ab\n  cd", profile);
        let cd = out.tokens.iter().find(|t| t.lexeme == "cd").unwrap();
        assert_eq!((cd.line, cd.col), (2, 3));
    }

    #[test]
    fn crlf_is_a_single_newline_token() {
        assert_eq!(kinds("a\r\nb", "python"), vec![Identifier, Newline, Identifier]);
    }
}
