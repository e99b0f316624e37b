//! Context replacement sampling for SOC.
//!
//! A sampler produces variants of an input in which the N-token neighborhood
//! around a phrase is resampled while the phrase and everything outside the
//! neighborhood stay untouched. The shipped model is an order-1 Markov chain
//! with explicitly supplied probabilities, which makes the neighborhood
//! distribution exactly enumerable — that is the oracle the Monte Carlo path
//! is checked against. The trait is the plug point for heavier language
//! models.
//!
//! Sampling order is left-to-right: the left neighborhood conditions on the
//! token before it, then the right neighborhood conditions on everything to
//! its left including the original (unmasked) phrase. Conditioning tokens
//! outside the chain's vocabulary fall back to the initial distribution.

use std::collections::HashMap;
use std::path::Path;

use rand::Rng;

use crate::error::{Error, Result};
use crate::explain::PhraseSpan;
use crate::model::tokenizer::{TokenId, TokenizedText, Tokenizer};
use crate::seeds;

/// Default cap on exhaustive enumeration size.
pub const ENUMERATION_CAP: usize = 65_536;

/// One resampled input. `log_prob` is populated by samplers that know the
/// exact probability of their replacement (the Markov chain does).
#[derive(Debug, Clone)]
pub struct ContextVariant {
    pub tokens: TokenizedText,
    pub log_prob: Option<f64>,
}

/// Source of context replacements for SOC.
pub trait ContextSampler {
    /// Draw `count` variants of `x` with up to `window` tokens on each side
    /// of `span` resampled. Deterministic for a fixed seed.
    fn sample_contexts(
        &self,
        x: &TokenizedText,
        span: PhraseSpan,
        window: usize,
        count: usize,
        seed: u64,
    ) -> Result<Vec<ContextVariant>>;
}

/// Positions replaced for a span/window pair: the in-bounds neighborhood on
/// each side, never the span itself.
pub fn replaced_positions(x: &TokenizedText, span: PhraseSpan, window: usize) -> Result<Vec<usize>> {
    span.check(x.len())?;
    let left_start = span.start.saturating_sub(window);
    let right_end = (span.end + window).min(x.len());
    let mut out: Vec<usize> = (left_start..span.start).collect();
    out.extend(span.end..right_end);
    Ok(out)
}

/// Order-1 Markov chain over an explicit vocabulary.
#[derive(Debug, Clone, PartialEq)]
pub struct MarkovLm {
    vocab: Vec<String>,
    initial: Vec<f64>,
    transition: Vec<Vec<f64>>,
}

fn normalize(name: &str, probs: &mut [f64]) -> Result<()> {
    if probs.iter().any(|p| !p.is_finite() || *p < 0.0) {
        return Err(Error::Config(format!("{name}: probabilities must be finite and non-negative")));
    }
    let sum: f64 = probs.iter().sum();
    if !sum.is_finite() || sum <= 0.0 {
        return Err(Error::Config(format!("{name}: probabilities sum to zero")));
    }
    if (sum - 1.0).abs() > 1e-6 {
        return Err(Error::Config(format!("{name}: probabilities sum to {sum}, expected 1")));
    }
    // correct small drift, but leave already-normalized rows bit-identical
    if (sum - 1.0).abs() > 1e-12 {
        for p in probs.iter_mut() {
            *p /= sum;
        }
    }
    Ok(())
}

impl MarkovLm {
    pub fn new(vocab: Vec<String>, mut initial: Vec<f64>, mut transition: Vec<Vec<f64>>) -> Result<Self> {
        if vocab.is_empty() {
            return Err(Error::Config("markov lm needs a non-empty vocabulary".into()));
        }
        let mut seen = std::collections::HashSet::new();
        for w in &vocab {
            if !seen.insert(w.as_str()) {
                return Err(Error::Config(format!("duplicate vocabulary word {w:?}")));
            }
        }
        if initial.len() != vocab.len() || transition.len() != vocab.len() {
            return Err(Error::Config("initial/transition sizes must match vocabulary".into()));
        }
        normalize("initial", &mut initial)?;
        for (i, row) in transition.iter_mut().enumerate() {
            if row.len() != vocab.len() {
                return Err(Error::Config(format!("transition row {i} has wrong width")));
            }
            normalize(&format!("transition row {:?}", vocab[i]), row)?;
        }
        Ok(MarkovLm { vocab, initial, transition })
    }

    /// Unigram chain: every conditional equals the (normalized) marginal.
    pub fn unigram(vocab: Vec<String>, weights: Vec<f64>) -> Result<Self> {
        let sum: f64 = weights.iter().sum();
        if !sum.is_finite() || sum <= 0.0 {
            return Err(Error::Config("unigram weights sum to zero".into()));
        }
        let probs: Vec<f64> = weights.iter().map(|w| w / sum).collect();
        let transition = vec![probs.clone(); vocab.len()];
        Self::new(vocab, probs, transition)
    }

    pub fn uniform(vocab: Vec<String>) -> Result<Self> {
        let n = vocab.len();
        Self::unigram(vocab, vec![1.0; n.max(1)])
    }

    pub fn vocab(&self) -> &[String] {
        &self.vocab
    }

    /// Bind the chain's words to a tokenizer's id space.
    pub fn bind(&self, tokenizer: &Tokenizer) -> Result<MarkovSampler> {
        let mut token_ids = Vec::with_capacity(self.vocab.len());
        for w in &self.vocab {
            let Some(id) = tokenizer.id_of(w) else {
                return Err(Error::Config(format!(
                    "lm word {w:?} is not in the classifier vocabulary"
                )));
            };
            token_ids.push(id);
        }
        let state_of = token_ids.iter().enumerate().map(|(s, &t)| (t, s)).collect();
        Ok(MarkovSampler { lm: self.clone(), token_ids, state_of })
    }

    /// Parse the text spec format:
    /// ```text
    /// vocab: a b c
    /// initial: 0.5 0.3 0.2
    /// a: 0.1 0.6 0.3
    /// ...
    /// ```
    pub fn parse(text: &str) -> Result<Self> {
        let mut vocab: Option<Vec<String>> = None;
        let mut initial: Option<Vec<f64>> = None;
        let mut rows: HashMap<String, Vec<f64>> = HashMap::new();

        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((key, rest)) = line.split_once(':') else {
                return Err(Error::Parse { row: lineno + 1, msg: format!("expected `key: ...`, got {line:?}") });
            };
            let key = key.trim();
            if key == "vocab" {
                vocab = Some(rest.split_whitespace().map(|s| s.to_string()).collect());
                continue;
            }
            let probs: std::result::Result<Vec<f64>, _> =
                rest.split_whitespace().map(|s| s.parse::<f64>()).collect();
            let probs = probs.map_err(|e| Error::Parse {
                row: lineno + 1,
                msg: format!("bad probability: {e}"),
            })?;
            if key == "initial" {
                initial = Some(probs);
            } else {
                rows.insert(key.to_string(), probs);
            }
        }

        let vocab = vocab.ok_or_else(|| Error::Schema("lm spec is missing `vocab:`".into()))?;
        let initial = initial.ok_or_else(|| Error::Schema("lm spec is missing `initial:`".into()))?;
        let mut transition = Vec::with_capacity(vocab.len());
        for w in &vocab {
            let row = rows
                .remove(w)
                .ok_or_else(|| Error::Schema(format!("lm spec is missing row for {w:?}")))?;
            transition.push(row);
        }
        Self::new(vocab, initial, transition)
    }

    pub fn render(&self) -> String {
        let fmt = |row: &[f64]| {
            row.iter().map(|p| format!("{p}")).collect::<Vec<_>>().join(" ")
        };
        let mut out = String::from("# markov lm v1\n");
        out.push_str(&format!("vocab: {}\n", self.vocab.join(" ")));
        out.push_str(&format!("initial: {}\n", fmt(&self.initial)));
        for (w, row) in self.vocab.iter().zip(&self.transition) {
            out.push_str(&format!("{w}: {}\n", fmt(row)));
        }
        out
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.render())?;
        Ok(())
    }
}

/// A [`MarkovLm`] bound to a tokenizer id space; implements sampling and
/// exhaustive enumeration.
#[derive(Debug, Clone)]
pub struct MarkovSampler {
    lm: MarkovLm,
    token_ids: Vec<TokenId>,
    state_of: HashMap<TokenId, usize>,
}

impl MarkovSampler {
    /// Conditional distribution given the previous token (by tokenizer id).
    /// Unknown or absent previous tokens use the initial distribution.
    fn conditional(&self, prev: Option<TokenId>) -> &[f64] {
        match prev.and_then(|t| self.state_of.get(&t)) {
            Some(&s) => &self.lm.transition[s],
            None => &self.lm.initial,
        }
    }

    fn prob_of_assignment(&self, x: &TokenizedText, positions: &[usize], states: &[usize]) -> f64 {
        let mut filled: HashMap<usize, TokenId> = HashMap::new();
        let mut p = 1.0;
        for (&pos, &s) in positions.iter().zip(states) {
            let prev = if pos == 0 {
                None
            } else {
                Some(*filled.get(&(pos - 1)).unwrap_or(&x.tokens[pos - 1]))
            };
            p *= self.conditional(prev)[s];
            filled.insert(pos, self.token_ids[s]);
        }
        p
    }

    /// Exhaustively enumerate all context variants with their probabilities.
    /// Probabilities sum to 1. Errors when |V|^positions exceeds `cap`.
    pub fn enumerate_contexts(
        &self,
        x: &TokenizedText,
        span: PhraseSpan,
        window: usize,
        cap: usize,
    ) -> Result<Vec<ContextVariant>> {
        let positions = replaced_positions(x, span, window)?;
        let v = self.lm.vocab.len();
        let total = v.checked_pow(positions.len() as u32).filter(|&t| t <= cap);
        let Some(total) = total else {
            return Err(Error::Capacity(format!(
                "enumeration needs {v}^{} variants, cap is {cap}",
                positions.len()
            )));
        };
        if positions.is_empty() {
            return Ok(vec![ContextVariant { tokens: x.clone(), log_prob: Some(0.0) }]);
        }

        let mut out = Vec::with_capacity(total);
        let mut states = vec![0usize; positions.len()];
        loop {
            let p = self.prob_of_assignment(x, &positions, &states);
            let mut tokens = x.clone();
            for (&pos, &s) in positions.iter().zip(&states) {
                tokens.tokens[pos] = self.token_ids[s];
            }
            out.push(ContextVariant { tokens, log_prob: Some(p.ln()) });

            // odometer increment over state indices
            let mut i = positions.len();
            loop {
                if i == 0 {
                    return Ok(out);
                }
                i -= 1;
                states[i] += 1;
                if states[i] < v {
                    break;
                }
                states[i] = 0;
            }
        }
    }
}

fn draw(probs: &[f64], rng: &mut impl Rng) -> usize {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    for (i, &p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    probs.len() - 1
}

impl ContextSampler for MarkovSampler {
    fn sample_contexts(
        &self,
        x: &TokenizedText,
        span: PhraseSpan,
        window: usize,
        count: usize,
        seed: u64,
    ) -> Result<Vec<ContextVariant>> {
        if count == 0 {
            return Err(Error::Config("sample count must be at least 1".into()));
        }
        let positions = replaced_positions(x, span, window)?;
        let mut rng = seeds::stream_rng(seed, "lm-context", 0);
        let mut out = Vec::with_capacity(count);
        for _ in 0..count {
            let mut tokens = x.clone();
            let mut log_prob = 0.0;
            for &pos in &positions {
                let prev = if pos == 0 { None } else { Some(tokens.tokens[pos - 1]) };
                let dist = self.conditional(prev);
                let s = draw(dist, &mut rng);
                log_prob += dist[s].ln();
                tokens.tokens[pos] = self.token_ids[s];
            }
            out.push(ContextVariant { tokens, log_prob: Some(log_prob) });
        }
        Ok(out)
    }
}

/// Group identical variants, keeping first-occurrence order. SOC evaluates
/// each unique variant once with its multiplicity as weight.
pub fn group_variants(variants: &[ContextVariant]) -> Vec<(TokenizedText, usize)> {
    let mut order: Vec<(TokenizedText, usize)> = Vec::new();
    let mut index: HashMap<&[TokenId], usize> = HashMap::new();
    for v in variants {
        match index.get(v.tokens.tokens.as_slice()) {
            Some(&i) => order[i].1 += 1,
            None => {
                order.push((v.tokens.clone(), 1));
                index.insert(
                    // keys borrow from the input slice, which outlives this map
                    v.tokens.tokens.as_slice(),
                    order.len() - 1,
                );
            }
        }
    }
    order
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy_setup() -> (Tokenizer, MarkovLm) {
        let tok = Tokenizer::from_words(&["a", "b", "c", "x", "y"]);
        let lm = MarkovLm::new(
            vec!["a".into(), "b".into()],
            vec![0.5, 0.5],
            vec![vec![0.25, 0.75], vec![0.9, 0.1]],
        )
        .unwrap();
        (tok, lm)
    }

    #[test]
    fn window_zero_returns_copies() {
        let (tok, lm) = toy_setup();
        let sampler = lm.bind(&tok).unwrap();
        let x = tok.tokenize("x a b y").unwrap();
        let span = PhraseSpan::new(1, 3).unwrap();
        let variants = sampler.sample_contexts(&x, span, 0, 5, 7).unwrap();
        assert_eq!(variants.len(), 5);
        for v in variants {
            assert_eq!(v.tokens.tokens, x.tokens);
            assert_eq!(v.log_prob, Some(0.0));
        }
    }

    #[test]
    fn deterministic_continuation_always_sampled() {
        let tok = Tokenizer::from_words(&["a", "b"]);
        // probability-1 self-transitions, initial all on "b"
        let lm = MarkovLm::new(
            vec!["a".into(), "b".into()],
            vec![0.0, 1.0],
            vec![vec![1.0, 0.0], vec![0.0, 1.0]],
        )
        .unwrap();
        let sampler = lm.bind(&tok).unwrap();
        let x = tok.tokenize("a a a").unwrap();
        let span = PhraseSpan::new(0, 1).unwrap();
        let variants = sampler.sample_contexts(&x, span, 2, 50, 1).unwrap();
        let a = tok.id_of("a").unwrap();
        for v in &variants {
            // positions 1 and 2 resampled: prev is the original span token "a",
            // so both continue deterministically with "a"
            assert_eq!(v.tokens.tokens, vec![a, a, a]);
        }
        assert_eq!(group_variants(&variants).len(), 1);
    }

    #[test]
    fn enumeration_counts_and_normalizes() {
        let (tok, lm) = toy_setup();
        let sampler = lm.bind(&tok).unwrap();
        let x = tok.tokenize("x a b y").unwrap();
        // span [1,2), window 1 replaces positions 0 and 2
        let variants = sampler
            .enumerate_contexts(&x, PhraseSpan::new(1, 2).unwrap(), 1, ENUMERATION_CAP)
            .unwrap();
        assert_eq!(variants.len(), 4);
        let total: f64 = variants.iter().map(|v| v.log_prob.unwrap().exp()).sum();
        assert!((total - 1.0).abs() < 1e-10, "total {total}");
    }

    #[test]
    fn uniform_unigram_enumeration_is_flat() {
        let tok = Tokenizer::from_words(&["a", "b", "c", "z"]);
        let lm = MarkovLm::uniform(vec!["a".into(), "b".into(), "c".into()]).unwrap();
        let sampler = lm.bind(&tok).unwrap();
        let x = tok.tokenize("z z z z").unwrap();
        // span covers last token, window 3 replaces the three before it
        let variants = sampler
            .enumerate_contexts(&x, PhraseSpan::new(3, 4).unwrap(), 3, ENUMERATION_CAP)
            .unwrap();
        assert_eq!(variants.len(), 27);
        for v in &variants {
            assert!((v.log_prob.unwrap().exp() - 1.0 / 27.0).abs() < 1e-12);
        }
    }

    #[test]
    fn enumeration_cap_errors() {
        let tok = Tokenizer::from_words(&["a", "b", "z"]);
        let lm = MarkovLm::uniform(vec!["a".into(), "b".into()]).unwrap();
        let sampler = lm.bind(&tok).unwrap();
        let x = tok.tokenize("z z z z z").unwrap();
        let err = sampler
            .enumerate_contexts(&x, PhraseSpan::new(2, 3).unwrap(), 2, 3)
            .unwrap_err();
        assert!(matches!(err, Error::Capacity(_)), "{err}");
    }

    #[test]
    fn empirical_frequencies_match_exact_probabilities() {
        let (tok, lm) = toy_setup();
        let sampler = lm.bind(&tok).unwrap();
        let x = tok.tokenize("x a b y").unwrap();
        let span = PhraseSpan::new(1, 3).unwrap();
        let exact = sampler.enumerate_contexts(&x, span, 1, ENUMERATION_CAP).unwrap();
        let k = 1000usize;
        let samples = sampler.sample_contexts(&x, span, 1, k, 99).unwrap();
        for ev in &exact {
            let p = ev.log_prob.unwrap().exp();
            let hits = samples.iter().filter(|s| s.tokens.tokens == ev.tokens.tokens).count();
            let freq = hits as f64 / k as f64;
            let se = (p * (1.0 - p) / k as f64).sqrt();
            assert!(
                (freq - p).abs() <= 3.0 * se + 1e-9,
                "freq {freq} vs p {p} (se {se})"
            );
        }
    }

    #[test]
    fn locality_outside_window_is_untouched() {
        let (tok, lm) = toy_setup();
        let sampler = lm.bind(&tok).unwrap();
        let x = tok.tokenize("x a b y c").unwrap();
        let span = PhraseSpan::new(2, 3).unwrap();
        let variants = sampler.sample_contexts(&x, span, 1, 200, 5).unwrap();
        for v in &variants {
            assert_eq!(v.tokens.tokens[0], x.tokens[0]);
            assert_eq!(v.tokens.tokens[2], x.tokens[2]);
            assert_eq!(v.tokens.tokens[4], x.tokens[4]);
        }
    }

    #[test]
    fn span_out_of_range_is_input_error() {
        let (tok, lm) = toy_setup();
        let sampler = lm.bind(&tok).unwrap();
        let x = tok.tokenize("a b").unwrap();
        let err = sampler.sample_contexts(&x, PhraseSpan::new(1, 3).unwrap(), 1, 2, 1);
        assert!(err.is_err());
    }

    #[test]
    fn spec_file_round_trip() {
        let (_, lm) = toy_setup();
        let text = lm.render();
        let back = MarkovLm::parse(&text).unwrap();
        assert_eq!(lm, back);
    }

    #[test]
    fn unbound_word_is_config_error() {
        let tok = Tokenizer::from_words(&["a"]);
        let lm = MarkovLm::uniform(vec!["a".into(), "missing".into()]).unwrap();
        assert!(matches!(lm.bind(&tok), Err(Error::Config(_))));
    }
}
