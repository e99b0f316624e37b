//! Word-level tokenization with character alignment.
//!
//! Words are whitespace-separated runs with leading/trailing non-alphanumeric
//! characters trimmed and the remainder lowercased. Internal punctuation is
//! kept, so censored slurs ("ni**er") and contractions survive as single
//! tokens. The same extraction is used for classifier features, lexicon
//! matching, and word removal, so "contains a term" means the same thing
//! everywhere.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::explain::PhraseSpan;

/// Token identifier into a [`Tokenizer`] vocabulary.
pub type TokenId = usize;

/// Reserved vocabulary slots.
pub const PAD: TokenId = 0;
pub const UNK: TokenId = 1;
pub const CLS: TokenId = 2;
pub const RESERVED: usize = 3;

/// A word occurrence in raw text: byte span plus normalized form.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Word {
    pub start: usize,
    pub end: usize,
    pub norm: String,
}

/// Extract normalized words and their byte spans from raw text.
pub fn words_of(text: &str) -> Vec<Word> {
    let mut out = Vec::new();
    let mut idx = 0;
    for chunk in text.split_whitespace() {
        // split_whitespace loses offsets; find this chunk from the cursor
        let start = text[idx..].find(chunk).map(|p| idx + p).unwrap_or(idx);
        idx = start + chunk.len();

        let trimmed_front = chunk.trim_start_matches(|c: char| !c.is_alphanumeric());
        let lead = chunk.len() - trimmed_front.len();
        let trimmed = trimmed_front.trim_end_matches(|c: char| !c.is_alphanumeric());
        if trimmed.is_empty() {
            continue;
        }
        out.push(Word {
            start: start + lead,
            end: start + lead + trimmed.len(),
            norm: trimmed.to_lowercase(),
        });
    }
    out
}

/// A tokenized document: token ids aligned to byte spans of the raw text.
/// Masked positions carry [`PAD`]; their spans still point at the original
/// surface form.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenizedText {
    pub text: String,
    pub tokens: Vec<TokenId>,
    pub char_spans: Vec<(usize, usize)>,
    pub pad_token: TokenId,
}

impl TokenizedText {
    /// Build directly from token ids (oracle tests and samplers).
    pub fn from_ids(tokens: Vec<TokenId>, pad_token: TokenId) -> Self {
        let char_spans = tokens.iter().map(|_| (0, 0)).collect();
        TokenizedText { text: String::new(), tokens, char_spans, pad_token }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// Copy with the span's positions replaced by the pad token.
    pub fn with_span_masked(&self, span: PhraseSpan) -> Self {
        let mut out = self.clone();
        for i in span.start..span.end {
            out.tokens[i] = self.pad_token;
        }
        out
    }

    /// Number of non-pad positions.
    pub fn content_len(&self) -> usize {
        self.tokens.iter().filter(|&&t| t != self.pad_token).count()
    }
}

/// Fixed word vocabulary with reserved pad/unk/cls slots.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Tokenizer {
    vocab: Vec<String>,
    #[serde(skip)]
    index: HashMap<String, TokenId>,
}

impl Tokenizer {
    /// Build from a corpus of texts; vocabulary is every distinct word in
    /// first-seen order after the reserved slots.
    pub fn fit<'a>(texts: impl Iterator<Item = &'a str>) -> Self {
        let mut vocab = vec!["[pad]".to_string(), "[unk]".to_string(), "[cls]".to_string()];
        let mut index: HashMap<String, TokenId> = HashMap::new();
        for text in texts {
            for w in words_of(text) {
                if !index.contains_key(&w.norm) {
                    index.insert(w.norm.clone(), vocab.len());
                    vocab.push(w.norm);
                }
            }
        }
        let index = vocab.iter().enumerate().map(|(i, w)| (w.clone(), i)).collect();
        Tokenizer { vocab, index }
    }

    /// Build from an explicit word list (reserved slots are prepended).
    pub fn from_words(words: &[&str]) -> Self {
        let mut vocab = vec!["[pad]".to_string(), "[unk]".to_string(), "[cls]".to_string()];
        vocab.extend(words.iter().map(|w| w.to_lowercase()));
        let index = vocab.iter().enumerate().map(|(i, w)| (w.clone(), i)).collect();
        Tokenizer { vocab, index }
    }

    /// Rebuild from a full vocabulary listing (checkpoint `vocab.txt`).
    pub fn from_vocab(vocab: Vec<String>) -> Result<Self> {
        if vocab.len() < RESERVED
            || vocab[0] != "[pad]"
            || vocab[1] != "[unk]"
            || vocab[2] != "[cls]"
        {
            return Err(Error::Schema(
                "vocabulary must start with [pad], [unk], [cls]".into(),
            ));
        }
        let index = vocab.iter().enumerate().map(|(i, w)| (w.clone(), i)).collect();
        Ok(Tokenizer { vocab, index })
    }

    /// Rebuild the lookup index after deserialization.
    pub fn rebuild_index(&mut self) {
        self.index = self
            .vocab
            .iter()
            .enumerate()
            .map(|(i, w)| (w.clone(), i))
            .collect();
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab.len()
    }

    pub fn vocab(&self) -> &[String] {
        &self.vocab
    }

    pub fn token_str(&self, id: TokenId) -> &str {
        &self.vocab[id]
    }

    pub fn id_of(&self, word: &str) -> Option<TokenId> {
        self.index.get(word).copied()
    }

    /// Tokenize raw text; unknown words map to [`UNK`]. Errors if nothing
    /// tokenizable remains.
    pub fn tokenize(&self, text: &str) -> Result<TokenizedText> {
        let words = words_of(text);
        if words.is_empty() {
            return Err(Error::Input(format!(
                "text tokenizes to zero tokens: {text:?}"
            )));
        }
        let mut tokens = Vec::with_capacity(words.len());
        let mut char_spans = Vec::with_capacity(words.len());
        for w in words {
            tokens.push(self.id_of(&w.norm).unwrap_or(UNK));
            char_spans.push((w.start, w.end));
        }
        Ok(TokenizedText {
            text: text.to_string(),
            tokens,
            char_spans,
            pad_token: PAD,
        })
    }

    /// Tokenize then truncate to `max_tokens`; the flag reports truncation.
    pub fn tokenize_truncated(&self, text: &str, max_tokens: usize) -> Result<(TokenizedText, bool)> {
        let mut t = self.tokenize(text)?;
        let truncated = max_tokens > 0 && t.tokens.len() > max_tokens;
        if truncated {
            t.tokens.truncate(max_tokens);
            t.char_spans.truncate(max_tokens);
        }
        Ok((t, truncated))
    }

    /// Stable hash of the vocabulary, recorded in checkpoint manifests.
    pub fn vocab_hash(&self) -> String {
        crate::seeds::content_hash(self.vocab.join("\n").as_bytes())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn trims_punctuation_keeps_internal() {
        let words = words_of("The ni**er, (muslim) man!");
        let norms: Vec<&str> = words.iter().map(|w| w.norm.as_str()).collect();
        assert_eq!(norms, vec!["the", "ni**er", "muslim", "man"]);
    }

    #[test]
    fn pure_punctuation_chunks_are_dropped() {
        let words = words_of("a -- b");
        assert_eq!(words.len(), 2);
    }

    #[test]
    fn spans_recover_surface_forms() {
        let text = "Black blackboard, ok?";
        let tok = Tokenizer::fit([text].into_iter());
        let t = tok.tokenize(text).unwrap();
        for (i, &(s, e)) in t.char_spans.iter().enumerate() {
            assert_eq!(text[s..e].to_lowercase(), tok.token_str(t.tokens[i]));
        }
    }

    #[test]
    fn masking_preserves_other_positions() {
        let tok = Tokenizer::from_words(&["a", "b", "c"]);
        let t = tok.tokenize("a b c").unwrap();
        let m = t.with_span_masked(PhraseSpan::new(1, 2).unwrap());
        assert_eq!(m.tokens[0], t.tokens[0]);
        assert_eq!(m.tokens[1], PAD);
        assert_eq!(m.tokens[2], t.tokens[2]);
    }

    #[test]
    fn empty_text_is_input_error() {
        let tok = Tokenizer::from_words(&["a"]);
        assert!(tok.tokenize("  ...  ").is_err());
    }

    #[test]
    fn truncation_flag() {
        let tok = Tokenizer::from_words(&["a", "b", "c"]);
        let (t, truncated) = tok.tokenize_truncated("a b c", 2).unwrap();
        assert!(truncated);
        assert_eq!(t.tokens.len(), 2);
        let (_, not) = tok.tokenize_truncated("a b", 2).unwrap();
        assert!(!not);
    }
}
