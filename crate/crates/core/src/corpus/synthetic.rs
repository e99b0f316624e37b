//! Seeded synthetic corpora for desk-scale experiments and tests.
//!
//! The biased generator produces documents where the hate label holds exactly
//! when a group identifier and an insult co-occur, but identifiers are far
//! more frequent in positives than negatives. A classifier that leans on the
//! identifier alone looks good in-domain and false-positives on
//! identifier-only text, which is the failure mode the audits measure.

use rand::seq::SliceRandom;
use rand::Rng;

use crate::corpus::lexicon::{IdentifierLexicon, STORMFRONT10};
use crate::corpus::{Document, Domain, LabeledCorpus, Split};
use crate::error::Result;
use crate::lm_sampler::MarkovLm;
use crate::seeds;

const INSULTS: [&str; 16] = [
    "idiots", "scum", "vermin", "trash", "filth", "parasites", "disgusting", "awful", "stupid",
    "worthless", "garbage", "savages", "liars", "cowards", "degenerates", "pathetic",
];

const NEUTRAL: [&str; 40] = [
    "the", "a", "people", "today", "community", "city", "report", "group", "new", "local",
    "meeting", "school", "members", "public", "council", "family", "weather", "market", "team",
    "music", "garden", "street", "house", "children", "book", "friends", "coffee", "morning",
    "travel", "story", "neighbors", "project", "festival", "kitchen", "river", "bridge",
    "weekend", "library", "park", "game",
];

/// Parameters of the biased generator.
#[derive(Debug, Clone)]
pub struct BiasedSpec {
    pub identifiers: Vec<String>,
    pub insults: Vec<String>,
    pub neutral: Vec<String>,
    /// Inclusive token-length range of a document.
    pub doc_len: (usize, usize),
    /// Fraction of documents that are hate (identifier + insult).
    pub positive_rate: f64,
    /// Fraction of negatives that carry an identifier (and no insult).
    pub negative_identifier_rate: f64,
    /// Fraction of negatives that carry an insult (and no identifier).
    pub negative_insult_rate: f64,
}

impl Default for BiasedSpec {
    fn default() -> Self {
        BiasedSpec {
            identifiers: STORMFRONT10.iter().map(|s| s.to_string()).collect(),
            insults: INSULTS.iter().map(|s| s.to_string()).collect(),
            neutral: NEUTRAL.iter().map(|s| s.to_string()).collect(),
            doc_len: (8, 14),
            positive_rate: 0.25,
            negative_identifier_rate: 0.10,
            negative_insult_rate: 0.10,
        }
    }
}

impl BiasedSpec {
    pub fn lexicon(&self) -> IdentifierLexicon {
        IdentifierLexicon::new("synthetic-identifiers", self.identifiers.iter().cloned())
            .expect("spec identifiers form a lexicon")
    }

    /// Unigram context model over the non-identifier vocabulary, with word
    /// masses matching the generator's expected emission rates. Identifiers
    /// are deliberately excluded: resampled neighborhoods never introduce new
    /// identifier occurrences.
    pub fn context_lm(&self) -> MarkovLm {
        let mean_len = (self.doc_len.0 + self.doc_len.1) as f64 / 2.0;
        let insults_per_doc = self.positive_rate
            + (1.0 - self.positive_rate) * self.negative_insult_rate;
        let identifiers_per_doc = self.positive_rate
            + (1.0 - self.positive_rate) * self.negative_identifier_rate;
        let neutral_per_doc = mean_len - insults_per_doc - identifiers_per_doc;

        let mut words = Vec::new();
        let mut weights = Vec::new();
        for w in &self.neutral {
            words.push(w.clone());
            weights.push(neutral_per_doc / self.neutral.len() as f64);
        }
        for w in &self.insults {
            words.push(w.clone());
            weights.push(insults_per_doc / self.insults.len() as f64);
        }
        MarkovLm::unigram(words, weights).expect("valid unigram spec")
    }
}

enum DocKind {
    Positive,
    NegIdentifier,
    NegInsult,
    NegPlain,
}

fn make_doc(spec: &BiasedSpec, kind: &DocKind, rng: &mut impl Rng) -> (String, bool) {
    let len = rng.gen_range(spec.doc_len.0..=spec.doc_len.1);
    let mut words: Vec<&str> = (0..len)
        .map(|_| spec.neutral.choose(rng).unwrap().as_str())
        .collect();
    let label = match kind {
        DocKind::Positive => {
            let id_pos = rng.gen_range(0..len);
            words[id_pos] = spec.identifiers.choose(rng).unwrap();
            // the insult sits near the identifier: hate is a local composition
            let lo = id_pos.saturating_sub(2);
            let hi = (id_pos + 2).min(len - 1);
            let candidates: Vec<usize> = (lo..=hi).filter(|&p| p != id_pos).collect();
            let ins_pos = *candidates.choose(rng).unwrap();
            words[ins_pos] = spec.insults.choose(rng).unwrap();
            true
        }
        DocKind::NegIdentifier => {
            let p = rng.gen_range(0..len);
            words[p] = spec.identifiers.choose(rng).unwrap();
            false
        }
        DocKind::NegInsult => {
            let p = rng.gen_range(0..len);
            words[p] = spec.insults.choose(rng).unwrap();
            false
        }
        DocKind::NegPlain => false,
    };
    (words.join(" "), label)
}

/// Generate a biased corpus of `n` documents.
pub fn biased_corpus(
    spec: &BiasedSpec,
    n: usize,
    seed: u64,
    id_prefix: &str,
    split: Split,
) -> Result<LabeledCorpus> {
    let mut rng = seeds::stream_rng(seed, "synthetic-biased", 0);
    let mut docs = Vec::with_capacity(n);
    for i in 0..n {
        let u: f64 = rng.gen();
        let kind = if u < spec.positive_rate {
            DocKind::Positive
        } else {
            let v: f64 = rng.gen();
            if v < spec.negative_identifier_rate {
                DocKind::NegIdentifier
            } else if v < spec.negative_identifier_rate + spec.negative_insult_rate {
                DocKind::NegInsult
            } else {
                DocKind::NegPlain
            }
        };
        let (text, label) = make_doc(spec, &kind, &mut rng);
        docs.push(Document::new(format!("{id_prefix}-{i:05}"), text, label, Domain::Synthetic)?);
    }
    LabeledCorpus::new(docs, split)
}

/// Identifier-only non-hate documents: the synthetic analogue of the
/// news-article evaluation set.
pub fn identifier_only_corpus(
    spec: &BiasedSpec,
    n: usize,
    seed: u64,
    id_prefix: &str,
) -> Result<LabeledCorpus> {
    let mut rng = seeds::stream_rng(seed, "synthetic-adversarial", 0);
    let mut docs = Vec::with_capacity(n);
    for i in 0..n {
        let (text, _) = make_doc(spec, &DocKind::NegIdentifier, &mut rng);
        docs.push(Document::new(
            format!("{id_prefix}-{i:05}"),
            text,
            false,
            Domain::Adversarial,
        )?);
    }
    LabeledCorpus::new(docs, Split::None)
}

/// News-like non-hate document stream for exercising the adversarial-set
/// builder: most documents mention one lexicon term in an innocuous context.
pub fn news_stream(lexicon: &IdentifierLexicon, n: usize, seed: u64) -> Vec<Document> {
    let mut rng = seeds::stream_rng(seed, "synthetic-news", 0);
    let terms = lexicon.sorted_terms();
    let mut docs = Vec::with_capacity(n);
    for i in 0..n {
        let len = rng.gen_range(10..=18);
        let mut words: Vec<&str> = (0..len).map(|_| *NEUTRAL.choose(&mut rng).unwrap()).collect();
        if rng.gen::<f64>() < 0.7 {
            let p = rng.gen_range(0..len);
            words[p] = terms.choose(&mut rng).unwrap();
        }
        let doc = Document::new(format!("news-{i:05}"), words.join(" "), false, Domain::Synthetic)
            .expect("generated text is non-empty");
        docs.push(doc);
    }
    docs
}
