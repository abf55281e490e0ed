//! Language profiles and the registry that resolves a [`LanguageId`] to one.
//!
//! A profile carries everything the generic lexer and the normalizer need to
//! know about a language: quote characters, comment markers, whether token
//! comparison ignores case, and the shipped normalization rule set. New
//! languages are onboarded by registering a profile (usually from a config
//! file) — no code changes.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{LanguageError, LanguageId, NormalizationRules};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LanguageProfile {
    pub id: LanguageId,
    /// Human-readable name substituted into prompt headers ("Python").
    pub display: String,
    #[serde(default)]
    pub quote_chars: Vec<char>,
    #[serde(default)]
    pub line_comments: Vec<String>,
    #[serde(default)]
    pub block_comments: Vec<(String, String)>,
    /// When true, token comparison for edit distance ignores case.
    #[serde(default)]
    pub case_insensitive: bool,
    #[serde(default)]
    pub normalization: NormalizationRules,
}

/// Maps language ids to profiles. [`LanguageRegistry::builtin`] covers the
/// six stock languages plus the in-repo toy expression language.
#[derive(Debug, Clone)]
pub struct LanguageRegistry {
    profiles: BTreeMap<LanguageId, LanguageProfile>,
}

impl LanguageRegistry {
    pub fn empty() -> Self {
        LanguageRegistry {
            profiles: BTreeMap::new(),
        }
    }

    pub fn builtin() -> Self {
        let mut registry = LanguageRegistry::empty();
        for profile in builtin_profiles() {
            registry.register(profile);
        }
        registry
    }

    /// Insert or replace a profile.
    pub fn register(&mut self, profile: LanguageProfile) {
        self.profiles.insert(profile.id.clone(), profile);
    }

    pub fn profile(&self, id: &LanguageId) -> Result<&LanguageProfile, LanguageError> {
        self.profiles
            .get(id)
            .ok_or_else(|| LanguageError::UnknownLanguage(id.to_string()))
    }

    pub fn profile_by_name(&self, name: &str) -> Result<&LanguageProfile, LanguageError> {
        self.profile(&LanguageId::new(name)?)
    }

    pub fn contains(&self, id: &LanguageId) -> bool {
        self.profiles.contains_key(id)
    }

    pub fn ids(&self) -> impl Iterator<Item = &LanguageId> {
        self.profiles.keys()
    }
}

fn lang(id: &str) -> LanguageId {
    LanguageId::new(id).expect("builtin id is valid")
}

fn builtin_profiles() -> Vec<LanguageProfile> {
    vec![
        LanguageProfile {
            id: lang("excel"),
            display: "Excel".to_string(),
            quote_chars: vec!['"'],
            line_comments: vec![],
            block_comments: vec![],
            case_insensitive: true,
            // Formulas compare case-insensitively, so normalization folds
            // identifiers and cell references to upper case and removes
            // insignificant whitespace.
            normalization: NormalizationRules {
                collapse_whitespace: true,
                drop_newlines: true,
                uppercase_identifiers: true,
                ..NormalizationRules::default()
            },
        },
        LanguageProfile {
            id: lang("powerfx"),
            display: "Power Fx".to_string(),
            quote_chars: vec!['"'],
            line_comments: vec!["//".to_string()],
            block_comments: vec![("/*".to_string(), "*/".to_string())],
            case_insensitive: false,
            normalization: NormalizationRules::default(),
        },
        LanguageProfile {
            id: lang("python"),
            display: "Python".to_string(),
            quote_chars: vec!['"', '\''],
            line_comments: vec!["#".to_string()],
            block_comments: vec![],
            case_insensitive: false,
            normalization: NormalizationRules {
                strip_line_comments: vec!["#".to_string()],
                drop_newlines: true,
                ..NormalizationRules::default()
            },
        },
        LanguageProfile {
            id: lang("javascript"),
            display: "JavaScript".to_string(),
            quote_chars: vec!['"', '\'', '`'],
            line_comments: vec!["//".to_string()],
            block_comments: vec![("/*".to_string(), "*/".to_string())],
            case_insensitive: false,
            normalization: NormalizationRules {
                strip_line_comments: vec!["//".to_string()],
                strip_block_comments: vec![("/*".to_string(), "*/".to_string())],
                collapse_whitespace: true,
                drop_newlines: true,
                ..NormalizationRules::default()
            },
        },
        LanguageProfile {
            id: lang("c"),
            display: "C".to_string(),
            quote_chars: vec!['"', '\''],
            line_comments: vec!["//".to_string()],
            block_comments: vec![("/*".to_string(), "*/".to_string())],
            case_insensitive: false,
            normalization: NormalizationRules {
                strip_line_comments: vec!["//".to_string()],
                strip_block_comments: vec![("/*".to_string(), "*/".to_string())],
                collapse_whitespace: true,
                drop_newlines: true,
                ..NormalizationRules::default()
            },
        },
        LanguageProfile {
            id: lang("powershell"),
            display: "PowerShell".to_string(),
            quote_chars: vec!['"', '\''],
            line_comments: vec!["#".to_string()],
            block_comments: vec![("<#".to_string(), "#>".to_string())],
            case_insensitive: false,
            normalization: NormalizationRules::default(),
        },
        LanguageProfile {
            id: lang("toy"),
            display: "Toy".to_string(),
            quote_chars: vec!['"'],
            line_comments: vec![],
            block_comments: vec![],
            case_insensitive: false,
            normalization: NormalizationRules {
                collapse_whitespace: true,
                drop_newlines: true,
                ..NormalizationRules::default()
            },
        },
    ]
}
