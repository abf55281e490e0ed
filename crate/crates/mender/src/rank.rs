//! Candidate filtering, deduplication, and ordering.
//!
//! A sampled completion becomes a [`ScoredCandidate`] scored by the
//! arithmetic mean of its per-token log-probabilities. Before ranking,
//! candidates that merely restate the buggy program (up to per-language
//! normalization) are dropped, and candidates that normalize to the same
//! text are collapsed to the highest-scoring instance — duplicates would
//! only waste slots in a top-k budget.

use crate::llm::Completion;
use crate::text::{normalize_program, LanguageProfile, NormalizationRules, SourceProgram};

/// A repair candidate with its ranking score.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoredCandidate {
    /// The candidate program text as sampled (stop sequence excluded).
    pub text: String,
    /// Mean token log-probability; finite and ≤ 0.
    pub score: f64,
    /// Index into the raw completion list this candidate came from.
    pub origin_index: usize,
    /// The candidate text after per-language normalization; the dedup key.
    pub normalized_text: String,
}

/// Convert raw completions into scored candidates, dropping:
///
/// - empty or unscorable completions,
/// - candidates whose normalized text equals the normalized buggy program
///   (a "repair" that changes nothing), and
/// - duplicates by normalized text, keeping the highest-scoring instance
///   (score ties keep the earliest sample).
pub fn filter_candidates(
    completions: &[Completion],
    buggy: &SourceProgram,
    rules: &NormalizationRules,
    profile: &LanguageProfile,
) -> Vec<ScoredCandidate> {
    let normalized_buggy = normalize_program(&buggy.text, rules, profile);

    let mut survivors: Vec<ScoredCandidate> = Vec::new();
    for (origin_index, completion) in completions.iter().enumerate() {
        if completion.text.is_empty() {
            continue;
        }
        let Some(score) = completion.mean_logprob() else {
            continue;
        };
        let normalized_text = normalize_program(&completion.text, rules, profile);
        if normalized_text == normalized_buggy {
            continue;
        }
        let candidate = ScoredCandidate {
            text: completion.text.clone(),
            score,
            origin_index,
            normalized_text,
        };
        match survivors
            .iter_mut()
            .find(|existing| existing.normalized_text == candidate.normalized_text)
        {
            Some(existing) => {
                if candidate.score > existing.score {
                    *existing = candidate;
                }
            }
            None => survivors.push(candidate),
        }
    }
    survivors
}

/// Order candidates by score descending; ties broken by ascending
/// origin index, so the earlier sample wins. Total over all float values.
pub fn rank_candidates(mut candidates: Vec<ScoredCandidate>) -> Vec<ScoredCandidate> {
    candidates.sort_by(|a, b| {
        b.score
            .total_cmp(&a.score)
            .then(a.origin_index.cmp(&b.origin_index))
    });
    candidates
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::llm::FinishReason;
    use crate::text::{LanguageId, LanguageRegistry};

    fn completion(text: &str, logprobs: &[f64]) -> Completion {
        Completion {
            text: text.to_string(),
            token_logprobs: logprobs.iter().map(|&lp| (String::from("t"), lp)).collect(),
            finish: FinishReason::Stop,
        }
    }

    fn python() -> (NormalizationRules, LanguageProfile) {
        let registry = LanguageRegistry::builtin();
        let profile = registry
            .profile(&LanguageId::new("python").unwrap())
            .unwrap()
            .clone();
        (profile.normalization.clone(), profile)
    }

    fn buggy() -> SourceProgram {
        SourceProgram {
            language: LanguageId::new("python").unwrap(),
            text: "def f((a, b)):\n    pass\n".to_string(),
        }
    }

    #[test]
    fn candidate_identical_to_buggy_is_dropped() {
        let (rules, profile) = python();
        // Same program up to a comment and newline placement: the
        // normalizer strips comments and newlines, so this is a no-op fix.
        let completions = vec![completion("def f((a, b)):# try again\n    pass\n", &[-0.1])];
        let out = filter_candidates(&completions, &buggy(), &rules, &profile);
        assert!(out.is_empty());
    }

    #[test]
    fn duplicates_keep_highest_score() {
        let (rules, profile) = python();
        let completions = vec![
            completion("def f(a, b):\n    pass", &[-0.9]),
            completion("def f(a, b):# cleaner\n    pass", &[-0.2]),
        ];
        let out = filter_candidates(&completions, &buggy(), &rules, &profile);
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].score, -0.2);
        assert_eq!(out[0].origin_index, 1);
    }

    #[test]
    fn duplicate_score_tie_keeps_earliest_sample() {
        let (rules, profile) = python();
        let completions = vec![
            completion("def f(a, b):\n    pass", &[-0.5]),
            completion("def f(a, b):# same score\n    pass", &[-0.5]),
        ];
        let out = filter_candidates(&completions, &buggy(), &rules, &profile);
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].origin_index, 0);
    }

    #[test]
    fn empty_completions_are_dropped() {
        let (rules, profile) = python();
        let completions = vec![
            Completion {
                text: String::new(),
                token_logprobs: vec![],
                finish: FinishReason::Stop,
            },
            completion("def f(a, b):\n    pass", &[-0.3]),
        ];
        let out = filter_candidates(&completions, &buggy(), &rules, &profile);
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].origin_index, 1);
    }

    #[test]
    fn all_candidates_filtered_yields_empty_list() {
        let (rules, profile) = python();
        let completions = vec![completion("def f((a, b)):\n    pass", &[-0.4])];
        let out = filter_candidates(&completions, &buggy(), &rules, &profile);
        assert!(out.is_empty());
    }

    #[test]
    fn score_is_mean_of_token_logprobs() {
        let (rules, profile) = python();
        let completions = vec![completion("def f(a, b):\n    pass", &[-0.25, -0.75, -0.5])];
        let out = filter_candidates(&completions, &buggy(), &rules, &profile);
        assert!((out[0].score - (-0.5)).abs() < 1e-12);
    }

    #[test]
    fn ranking_orders_by_score_descending() {
        let candidates = vec![
            cand(-1.0, 0),
            cand(-0.2, 1),
            cand(-0.5, 2),
        ];
        let ranked = rank_candidates(candidates);
        let scores: Vec<f64> = ranked.iter().map(|c| c.score).collect();
        assert_eq!(scores, vec![-0.2, -0.5, -1.0]);
    }

    #[test]
    fn ranking_tie_break_preserves_sample_order() {
        let candidates = vec![cand(-0.5, 2), cand(-0.5, 0), cand(-0.5, 1)];
        let ranked = rank_candidates(candidates);
        let origins: Vec<usize> = ranked.iter().map(|c| c.origin_index).collect();
        assert_eq!(origins, vec![0, 1, 2]);
    }

    fn cand(score: f64, origin_index: usize) -> ScoredCandidate {
        ScoredCandidate {
            text: format!("candidate {origin_index}"),
            score,
            origin_index,
            normalized_text: format!("candidate{origin_index}"),
        }
    }
}
