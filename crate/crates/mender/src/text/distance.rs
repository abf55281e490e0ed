//! Token-level Levenshtein distance and edit-location recovery.
//!
//! Distance is computed over *significant* tokens only (whitespace, newline,
//! and comment tokens are filtered first), with unit cost for insertion,
//! deletion, and substitution. Token equality is lexeme equality, optionally
//! case-insensitive for languages that compare that way.

use std::borrow::Cow;

use super::Token;

/// How lexemes compare for distance purposes; comes from
/// [`LanguageProfile::case_insensitive`](super::LanguageProfile).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LexemeCase {
    Sensitive,
    Insensitive,
}

impl LexemeCase {
    pub fn from_profile(profile: &super::LanguageProfile) -> Self {
        if profile.case_insensitive {
            LexemeCase::Insensitive
        } else {
            LexemeCase::Sensitive
        }
    }
}

/// Comparison keys for the significant tokens of a stream.
fn keys<'a>(tokens: &'a [Token], case: LexemeCase) -> Vec<Cow<'a, str>> {
    tokens
        .iter()
        .filter(|t| t.is_significant())
        .map(|t| match case {
            LexemeCase::Sensitive => Cow::Borrowed(t.lexeme.as_str()),
            LexemeCase::Insensitive => Cow::Owned(t.lexeme.to_lowercase()),
        })
        .collect()
}

/// Minimal number of token insertions, deletions, and substitutions turning
/// `a` into `b`. Symmetric, zero iff the significant lexemes agree, and obeys
/// the triangle inequality.
pub fn token_edit_distance(a: &[Token], b: &[Token], case: LexemeCase) -> usize {
    let a = keys(a, case);
    let b = keys(b, case);
    // Two-row dynamic program; O(|a|·|b|) time, O(|b|) space.
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0usize; b.len() + 1];
    for i in 1..=a.len() {
        cur[0] = i;
        for j in 1..=b.len() {
            let sub = prev[j - 1] + usize::from(a[i - 1] != b[j - 1]);
            cur[j] = sub.min(prev[j] + 1).min(cur[j - 1] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// Positions in `a` (0-based indices into its significant-token sequence)
/// touched by one minimal edit script turning `a` into `b`.
///
/// The backtrace is deterministic: a zero-cost match is always taken, and
/// among edits the preference is substitution, then deletion, then
/// insertion. Substitutions and deletions are attributed to the affected
/// token's index; an insertion is attributed to the index of the token in
/// `a` that follows it (`a.len()` for an insertion at the end). Positions
/// are returned sorted ascending without duplicates, so the result length
/// never exceeds the edit distance.
pub fn edit_locations(a: &[Token], b: &[Token], case: LexemeCase) -> Vec<usize> {
    let a = keys(a, case);
    let b = keys(b, case);
    let (n, m) = (a.len(), b.len());

    // Full DP matrix, row-major; needed for the backtrace.
    let mut d = vec![0usize; (n + 1) * (m + 1)];
    let idx = |i: usize, j: usize| i * (m + 1) + j;
    for i in 0..=n {
        d[idx(i, 0)] = i;
    }
    for j in 0..=m {
        d[idx(0, j)] = j;
    }
    for i in 1..=n {
        for j in 1..=m {
            let sub = d[idx(i - 1, j - 1)] + usize::from(a[i - 1] != b[j - 1]);
            d[idx(i, j)] = sub.min(d[idx(i - 1, j)] + 1).min(d[idx(i, j - 1)] + 1);
        }
    }

    let mut locations = Vec::new();
    let (mut i, mut j) = (n, m);
    while i > 0 || j > 0 {
        let here = d[idx(i, j)];
        if i > 0 && j > 0 && a[i - 1] == b[j - 1] && here == d[idx(i - 1, j - 1)] {
            i -= 1;
            j -= 1;
        } else if i > 0 && j > 0 && here == d[idx(i - 1, j - 1)] + 1 {
            locations.push(i - 1); // substitution
            i -= 1;
            j -= 1;
        } else if i > 0 && here == d[idx(i - 1, j)] + 1 {
            locations.push(i - 1); // deletion
            i -= 1;
        } else {
            debug_assert!(j > 0 && here == d[idx(i, j - 1)] + 1);
            locations.push(i); // insertion, attributed to the following token
            j -= 1;
        }
    }
    locations.sort_unstable();
    locations.dedup();
    locations
}
