//! Group-identifier lexicons and whole-word matching.
//!
//! Matching is case-insensitive token equality after punctuation trimming:
//! "Black." matches the term "black", "blackboard" does not.

use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::tokenizer::words_of;
use crate::seeds;

/// The 25 group identifiers curated from top-weighted features of the Gab
/// bag-of-words classifier.
pub const GHC25: [&str; 25] = [
    "muslim", "jew", "jews", "white", "islam", "blacks", "muslims", "women", "whites", "gay",
    "black", "democat", "islamic", "allah", "jewish", "lesbian", "transgender", "race", "brown",
    "woman", "mexican", "religion", "homosexual", "homosexuality", "africans",
];

/// The 10 identifiers used for the Stormfront corpus.
pub const STORMFRONT10: [&str; 10] = [
    "jew", "jews", "mexican", "blacks", "jewish", "brown", "black", "muslim", "homosexual",
    "islam",
];

/// A named set of lowercase single-word group identifiers (the set S).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IdentifierLexicon {
    name: String,
    terms: BTreeSet<String>,
}

impl IdentifierLexicon {
    pub fn new(name: impl Into<String>, terms: impl IntoIterator<Item = String>) -> Result<Self> {
        let mut set = BTreeSet::new();
        for raw in terms {
            let term = raw.trim().to_lowercase();
            if term.is_empty() {
                continue;
            }
            if term.contains(char::is_whitespace) {
                return Err(Error::Config(format!(
                    "lexicon term {term:?} must be a single word"
                )));
            }
            set.insert(term);
        }
        if set.is_empty() {
            return Err(Error::Config("lexicon has no terms".into()));
        }
        Ok(IdentifierLexicon { name: name.into(), terms: set })
    }

    pub fn ghc25() -> Self {
        Self::new("ghc25", GHC25.iter().map(|s| s.to_string())).expect("builtin lexicon")
    }

    pub fn stormfront10() -> Self {
        Self::new("stormfront10", STORMFRONT10.iter().map(|s| s.to_string())).expect("builtin lexicon")
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn contains(&self, term: &str) -> bool {
        self.terms.contains(term)
    }

    pub fn is_subset_of(&self, other: &Self) -> bool {
        self.terms.is_subset(&other.terms)
    }

    /// Terms in sorted order.
    pub fn sorted_terms(&self) -> Vec<String> {
        self.terms.iter().cloned().collect()
    }

    /// Sub-lexicon with the given terms only.
    pub fn subset(&self, terms: &[String], name: impl Into<String>) -> Result<Self> {
        Self::new(name, terms.iter().cloned())
    }

    /// Distinct lexicon terms occurring in `text` as whole words.
    pub fn terms_in(&self, text: &str) -> BTreeSet<String> {
        words_of(text)
            .into_iter()
            .filter(|w| self.terms.contains(&w.norm))
            .map(|w| w.norm)
            .collect()
    }

    /// Whether any lexicon term occurs in `text` as a whole word.
    pub fn matches(&self, text: &str) -> bool {
        words_of(text).iter().any(|w| self.terms.contains(&w.norm))
    }

    /// Byte spans (and normalized forms) of every term occurrence in `text`.
    pub fn occurrences(&self, text: &str) -> Vec<(usize, usize, String)> {
        words_of(text)
            .into_iter()
            .filter(|w| self.terms.contains(&w.norm))
            .map(|w| (w.start, w.end, w.norm))
            .collect()
    }

    /// Stable hash for run manifests.
    pub fn hash(&self) -> String {
        let joined: Vec<&str> = self.terms.iter().map(|s| s.as_str()).collect();
        seeds::content_hash(joined.join("\n").as_bytes())
    }
}

/// Load a lexicon by builtin name (`ghc25`, `stormfront10`) or from a file
/// with one term per line (`#` comments allowed, duplicates collapse).
pub fn load_lexicon(name_or_path: &str) -> Result<IdentifierLexicon> {
    match name_or_path {
        "ghc25" => Ok(IdentifierLexicon::ghc25()),
        "stormfront10" => Ok(IdentifierLexicon::stormfront10()),
        other => {
            let path = Path::new(other);
            if !path.exists() {
                return Err(Error::Config(format!(
                    "unknown lexicon {other:?}: not a builtin name and not a readable file"
                )));
            }
            let content = std::fs::read_to_string(path)?;
            let name = path
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| "file".to_string());
            let terms = content
                .lines()
                .map(|l| l.trim())
                .filter(|l| !l.is_empty() && !l.starts_with('#'))
                .map(|l| l.to_string());
            IdentifierLexicon::new(name, terms)
        }
    }
}
