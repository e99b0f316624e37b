//! Bag-of-words logistic regression over TF-IDF unigram features.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::autodiff::Mat;
use crate::corpus::{Domain, LabeledCorpus};
use crate::error::{Error, Result};
use crate::model::tokenizer::{TokenizedText, Tokenizer, PAD, RESERVED};
use crate::model::{LabelScores, Scorer, TextClassifier, TrainingConfig};

/// Serialized form of a trained model.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BowWeights {
    pub vocab: Vec<String>,
    pub idf: Vec<f64>,
    pub weights: Vec<f64>,
    pub bias: f64,
    pub train_domain: Option<Domain>,
}

/// TF-IDF logistic regression. `hate_score` is the logit, `nonhate_score`
/// is fixed at zero, so s(x) is the logit itself.
pub struct BowClassifier {
    vocab: Vec<String>,
    index: HashMap<String, usize>,
    idf: Vec<f64>,
    weights: Vec<f64>,
    bias: f64,
    tokenizer: Tokenizer,
    train_domain: Option<Domain>,
}

impl BowClassifier {
    /// TF-IDF feature vector of a tokenized input, L2-normalized. Pad and
    /// reserved tokens contribute nothing.
    pub fn features(&self, x: &TokenizedText) -> Vec<(usize, f64)> {
        let mut counts: HashMap<usize, f64> = HashMap::new();
        for &t in &x.tokens {
            if t == PAD || t < RESERVED {
                continue;
            }
            if let Some(&fi) = self.index.get(self.tokenizer.token_str(t)) {
                *counts.entry(fi).or_insert(0.0) += 1.0;
            }
        }
        let mut feats: Vec<(usize, f64)> = counts
            .into_iter()
            .map(|(fi, tf)| (fi, tf * self.idf[fi]))
            .collect();
        feats.sort_unstable_by_key(|&(fi, _)| fi);
        let norm: f64 = feats.iter().map(|(_, v)| v * v).sum::<f64>().sqrt();
        if norm > 0.0 {
            for (_, v) in feats.iter_mut() {
                *v /= norm;
            }
        }
        feats
    }

    fn logit(&self, feats: &[(usize, f64)]) -> f64 {
        let mut z = self.bias;
        for &(fi, v) in feats {
            z += self.weights[fi] * v;
        }
        z
    }

    /// (term, weight) pairs sorted by descending weight, ties lexicographic.
    /// `k` larger than the vocabulary returns the full ranking.
    pub fn top_features(&self, k: usize) -> Vec<(String, f64)> {
        let mut pairs: Vec<(String, f64)> = self
            .vocab
            .iter()
            .cloned()
            .zip(self.weights.iter().copied())
            .collect();
        pairs.sort_by(|a, b| {
            b.1.partial_cmp(&a.1)
                .unwrap_or(std::cmp::Ordering::Equal)
                .then_with(|| a.0.cmp(&b.0))
        });
        pairs.truncate(k);
        pairs
    }

    pub fn feature_vocab(&self) -> &[String] {
        &self.vocab
    }

    pub fn to_weights(&self) -> BowWeights {
        BowWeights {
            vocab: self.vocab.clone(),
            idf: self.idf.clone(),
            weights: self.weights.clone(),
            bias: self.bias,
            train_domain: self.train_domain,
        }
    }

    pub fn from_weights(w: BowWeights, tokenizer: Tokenizer) -> Self {
        let index = w.vocab.iter().enumerate().map(|(i, s)| (s.clone(), i)).collect();
        BowClassifier {
            vocab: w.vocab,
            index,
            idf: w.idf,
            weights: w.weights,
            bias: w.bias,
            tokenizer,
            train_domain: w.train_domain,
        }
    }
}

impl Scorer for BowClassifier {
    fn score_tokens(&self, x: &TokenizedText) -> LabelScores {
        let feats = self.features(x);
        LabelScores { hate_score: self.logit(&feats), nonhate_score: 0.0 }
    }

    fn score_gradient(&self, x: &TokenizedText) -> Result<Vec<(String, Mat)>> {
        // s(x) = w·f(x) + b is linear: ∂s/∂w is the feature vector itself.
        let mut wg = Mat::zeros(1, self.weights.len());
        for (fi, v) in self.features(x) {
            wg.data[fi] = v;
        }
        Ok(vec![("weights".into(), wg), ("bias".into(), Mat::scalar(1.0))])
    }
}

impl TextClassifier for BowClassifier {
    fn tokenizer(&self) -> &Tokenizer {
        &self.tokenizer
    }

    fn max_tokens(&self) -> usize {
        0
    }

    fn train_domain(&self) -> Option<Domain> {
        self.train_domain
    }
}

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

/// Train by full-batch gradient descent on the reweighted logistic loss.
/// Zero initialization makes training deterministic; duplicating every
/// document leaves the decision function unchanged because both TF-IDF and
/// the mean loss are invariant under uniform duplication.
pub fn train_bow(train: &LabeledCorpus, config: &TrainingConfig) -> Result<BowClassifier> {
    if train.is_empty() {
        return Err(Error::Train("training corpus is empty".into()));
    }
    if train.positives() == 0 || train.negatives() == 0 {
        return Err(Error::Train("training corpus must contain both labels".into()));
    }

    let tokenizer = Tokenizer::fit(train.documents().iter().map(|d| d.text.as_str()));
    // feature vocabulary: corpus words in sorted order
    let mut vocab: Vec<String> = tokenizer.vocab()[RESERVED..].to_vec();
    vocab.sort_unstable();
    let index: HashMap<String, usize> =
        vocab.iter().enumerate().map(|(i, s)| (s.clone(), i)).collect();

    // document frequencies
    let n_docs = train.len() as f64;
    let mut df = vec![0usize; vocab.len()];
    let mut doc_tokens = Vec::with_capacity(train.len());
    for d in train.documents() {
        let toks = tokenizer.tokenize(&d.text)?;
        let mut seen: Vec<usize> = toks
            .tokens
            .iter()
            .filter(|&&t| t >= RESERVED)
            .filter_map(|&t| index.get(tokenizer.token_str(t)).copied())
            .collect();
        seen.sort_unstable();
        seen.dedup();
        for fi in seen {
            df[fi] += 1;
        }
        doc_tokens.push((toks, d.label));
    }
    let idf: Vec<f64> = df
        .iter()
        .map(|&d| 1.0 + (n_docs / (d.max(1) as f64)).ln())
        .collect();

    let mut model = BowClassifier {
        vocab,
        index,
        idf,
        weights: Vec::new(),
        bias: 0.0,
        tokenizer,
        train_domain: crate::audit::corpus_domain(train),
    };
    model.weights = vec![0.0; model.vocab.len()];

    // precompute normalized features as (features, target, weight)
    type Example = (Vec<(usize, f64)>, f64, f64);
    let examples: Vec<Example> = doc_tokens
        .iter()
        .map(|(toks, label)| {
            let f = model.features(toks);
            let y = if *label { 1.0 } else { 0.0 };
            let w = if *label { config.positive_weight } else { 1.0 };
            (f, y, w)
        })
        .collect();

    let iters = if config.max_steps == 0 { 300 } else { config.max_steps };
    let n = examples.len() as f64;
    for _ in 0..iters {
        let mut gw = vec![0.0; model.weights.len()];
        let mut gb = 0.0;
        for (f, y, w) in &examples {
            let p = sigmoid(model.logit(f));
            let err = w * (p - y);
            for &(fi, v) in f {
                gw[fi] += err * v;
            }
            gb += err;
        }
        for (wi, g) in model.weights.iter_mut().zip(&gw) {
            *wi -= config.learning_rate * g / n;
        }
        model.bias -= config.learning_rate * gb / n;
    }
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{Document, Split};
    use crate::model::score;

    fn corpus(rows: &[(&str, bool)]) -> LabeledCorpus {
        let docs = rows
            .iter()
            .enumerate()
            .map(|(i, (t, l))| Document::new(format!("d{i}"), *t, *l, Domain::Synthetic).unwrap())
            .collect();
        LabeledCorpus::new(docs, Split::Train).unwrap()
    }

    #[test]
    fn separable_token_gets_largest_positive_weight() {
        let c = corpus(&[
            ("zzz apple pie", true),
            ("banana zzz split", true),
            ("plain apple pie", false),
            ("banana split bowl", false),
            ("zzz toast", true),
            ("toast jam", false),
        ]);
        let m = train_bow(&c, &TrainingConfig::bow_default()).unwrap();
        let top = m.top_features(1);
        assert_eq!(top[0].0, "zzz", "top features: {:?}", m.top_features(3));
    }

    #[test]
    fn duplicate_corpus_keeps_decision_function() {
        let base = corpus(&[
            ("aa bb cc", true),
            ("bb cc dd", false),
            ("aa dd", true),
            ("cc dd ee", false),
            ("aa ee", true),
            ("ee bb", false),
        ]);
        let mut doubled_docs = Vec::new();
        for (i, d) in base.documents().iter().enumerate() {
            let mut d1 = d.clone();
            d1.id = format!("x{i}");
            let mut d2 = d.clone();
            d2.id = format!("y{i}");
            doubled_docs.push(d1);
            doubled_docs.push(d2);
        }
        let doubled = LabeledCorpus::new(doubled_docs, Split::Train).unwrap();
        let cfg = TrainingConfig::bow_default();
        let m1 = train_bow(&base, &cfg).unwrap();
        let m2 = train_bow(&doubled, &cfg).unwrap();
        for probe in ["aa bb", "cc dd", "ee", "aa cc ee"] {
            let s1 = score(&m1, probe).unwrap().scores.s();
            let s2 = score(&m2, probe).unwrap().scores.s();
            assert!((s1 - s2).abs() < 1e-9, "{probe}: {s1} vs {s2}");
            assert_eq!(s1 > 0.0, s2 > 0.0);
        }
    }

    #[test]
    fn single_label_corpus_is_training_error() {
        let c = corpus(&[("a b", true), ("c d", true)]);
        assert!(matches!(train_bow(&c, &TrainingConfig::bow_default()), Err(Error::Train(_))));
    }

    #[test]
    fn zero_weights_rank_lexicographically() {
        let c = corpus(&[("b a", true), ("a b", false)]);
        let mut m = train_bow(&c, &TrainingConfig::bow_default()).unwrap();
        m.weights = vec![0.0; m.weights.len()];
        let ranking = m.top_features(10);
        let words: Vec<&str> = ranking.iter().map(|(w, _)| w.as_str()).collect();
        assert_eq!(words, vec!["a", "b"]);
    }

    #[test]
    fn k_zero_gives_empty_ranking() {
        let c = corpus(&[("a b", true), ("c d", false)]);
        let m = train_bow(&c, &TrainingConfig::bow_default()).unwrap();
        assert!(m.top_features(0).is_empty());
        assert_eq!(m.top_features(100).len(), m.feature_vocab().len());
    }

    #[test]
    fn scoring_is_deterministic() {
        let c = corpus(&[("a b", true), ("c d", false)]);
        let m = train_bow(&c, &TrainingConfig::bow_default()).unwrap();
        let s1 = score(&m, "a c").unwrap().scores;
        let s2 = score(&m, "a c").unwrap().scores;
        assert_eq!(s1, s2);
    }
}
