//! Importance regularization: train under task loss plus α times the sum of
//! squared identifier importances, and the word-removal baseline.
//!
//! The penalty for a batch is Σ φ(w)² over every occurrence of every lexicon
//! word in the batch, where φ is the occlusion or SOC importance of that
//! single-word span. Context variants are sampled outside the graph and held
//! fixed, so gradients flow through the classifier evaluations only.

use serde::{Deserialize, Serialize};

use crate::autodiff::{Mat, NodeId, Tape};
use crate::corpus::lexicon::IdentifierLexicon;
use crate::corpus::{Document, LabeledCorpus};
use crate::error::{Error, Result};
use crate::explain::{Method, PhraseSpan};
use crate::lm_sampler::{group_variants, ContextSampler};
use crate::model::tokenizer::{TokenizedText, Tokenizer, RESERVED};
use crate::model::trainer::{train_model, TrainLog, TrainableClassifier};
use crate::model::transformer::TransformerClassifier;
use crate::model::{DiffScorer, RegMethod, TapeBinding, TrainingConfig};
use crate::seeds;

/// Loss components of one batch. `total = task_loss + alpha × penalty`
/// exactly as computed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegularizedLoss {
    pub task_loss: f64,
    pub penalty: f64,
    pub alpha: f64,
    pub total: f64,
}

/// Penalty settings. `window`/`samples` are the training-time SOC parameters
/// (both default to 5).
#[derive(Clone, Copy)]
pub struct PenaltyParams {
    pub method: Method,
    pub window: usize,
    pub samples: usize,
    pub seed: u64,
}

impl PenaltyParams {
    pub fn from_config(config: &TrainingConfig) -> Result<Self> {
        let method = match config.reg_method {
            RegMethod::Oc => Method::Oc,
            RegMethod::Soc => Method::Soc,
            other => {
                return Err(Error::Config(format!(
                    "penalty requires reg_method oc or soc, got {other}"
                )))
            }
        };
        Ok(PenaltyParams {
            method,
            window: config.soc_window,
            samples: config.soc_samples,
            seed: config.seed,
        })
    }
}

/// Token positions in `x` whose word belongs to the lexicon.
pub fn lexicon_token_positions(
    x: &TokenizedText,
    tokenizer: &Tokenizer,
    lexicon: &IdentifierLexicon,
) -> Vec<usize> {
    x.tokens
        .iter()
        .enumerate()
        .filter(|(_, &t)| t >= RESERVED && lexicon.contains(tokenizer.token_str(t)))
        .map(|(p, _)| p)
        .collect()
}

/// Build the differentiable φ(w) node for one occurrence.
#[allow(clippy::too_many_arguments)]
fn phi_node<M: DiffScorer + ?Sized>(
    model: &M,
    tape: &mut Tape,
    binding: &mut TapeBinding,
    x: &TokenizedText,
    span: PhraseSpan,
    params: &PenaltyParams,
    sampler: Option<&dyn ContextSampler>,
    occurrence_seed: u64,
) -> Result<NodeId> {
    let diff_for = |tape: &mut Tape, binding: &mut TapeBinding, v: &TokenizedText| {
        let s = model.s_node(tape, binding, v);
        let masked = v.with_span_masked(span);
        let sm = model.s_node(tape, binding, &masked);
        tape.sub(s, sm)
    };
    match params.method {
        Method::Oc => Ok(diff_for(tape, binding, x)),
        Method::Soc => {
            let sampler = sampler
                .ok_or_else(|| Error::Config("soc penalty needs a context sampler".into()))?;
            let variants =
                sampler.sample_contexts(x, span, params.window, params.samples, occurrence_seed)?;
            let groups = group_variants(&variants);
            if groups.len() == 1 {
                return Ok(diff_for(tape, binding, &groups[0].0));
            }
            let mut acc: Option<NodeId> = None;
            for (variant, n) in &groups {
                let d = diff_for(tape, binding, variant);
                let weighted = tape.scale(d, *n as f64);
                acc = Some(match acc {
                    Some(a) => tape.add(a, weighted),
                    None => weighted,
                });
            }
            Ok(tape.scale(acc.expect("at least one group"), 1.0 / params.samples as f64))
        }
    }
}

/// Build the batch penalty node Σ φ(w)²; `None` when the batch contains no
/// lexicon words. `positions` must align with `batch`.
#[allow(clippy::too_many_arguments)]
pub(crate) fn penalty_graph<M: DiffScorer + ?Sized>(
    model: &M,
    tape: &mut Tape,
    binding: &mut TapeBinding,
    batch: &[&TokenizedText],
    positions: &[&[usize]],
    params: &PenaltyParams,
    sampler: Option<&dyn ContextSampler>,
    base_seed: u64,
) -> Result<Option<NodeId>> {
    let mut acc: Option<NodeId> = None;
    let mut occurrence = 0u64;
    for (x, pos) in batch.iter().zip(positions) {
        for &p in *pos {
            let span = PhraseSpan::single(p);
            let occ_seed = seeds::derive_seed(base_seed, "occurrence", occurrence);
            occurrence += 1;
            let phi = phi_node(model, tape, binding, x, span, params, sampler, occ_seed)?;
            let sq = tape.square(phi);
            acc = Some(match acc {
                Some(a) => tape.add(a, sq),
                None => sq,
            });
        }
    }
    Ok(acc)
}

/// Penalty value for a batch of documents (no gradient kept).
pub fn penalty_value<M: TrainableClassifier + ?Sized>(
    model: &M,
    batch: &[Document],
    lexicon: &IdentifierLexicon,
    params: &PenaltyParams,
    sampler: Option<&dyn ContextSampler>,
) -> Result<f64> {
    Ok(penalty_with_gradient(model, batch, lexicon, params, sampler)?.0)
}

/// Penalty plus its exact gradient with respect to every model parameter,
/// ordered like the parameter store.
pub fn penalty_with_gradient<M: TrainableClassifier + ?Sized>(
    model: &M,
    batch: &[Document],
    lexicon: &IdentifierLexicon,
    params: &PenaltyParams,
    sampler: Option<&dyn ContextSampler>,
) -> Result<(f64, Vec<Mat>)> {
    let tokenized: Vec<TokenizedText> = batch
        .iter()
        .map(|d| {
            model
                .tokenizer()
                .tokenize_truncated(&d.text, model.max_tokens())
                .map(|(t, _)| t)
        })
        .collect::<Result<_>>()?;
    let positions: Vec<Vec<usize>> = tokenized
        .iter()
        .map(|x| lexicon_token_positions(x, model.tokenizer(), lexicon))
        .collect();

    let mut tape = Tape::new();
    let mut binding = TapeBinding::new(model.params());
    let refs: Vec<&TokenizedText> = tokenized.iter().collect();
    let pos_refs: Vec<&[usize]> = positions.iter().map(|p| p.as_slice()).collect();
    let node = penalty_graph(
        model, &mut tape, &mut binding, &refs, &pos_refs, params, sampler, params.seed,
    )?;

    let zero_grads = || {
        model
            .params()
            .iter()
            .map(|(_, _, v)| Mat::zeros(v.rows, v.cols))
            .collect()
    };
    match node {
        None => Ok((0.0, zero_grads())),
        Some(n) => {
            let value = tape.value(n).item();
            let grads = tape.backward(n);
            Ok((value, tape.param_grads(&grads, model.params())))
        }
    }
}

/// Counts from a word-removal pass.
#[derive(Debug, Clone, Copy, Default, Serialize, Deserialize)]
pub struct RemovalStats {
    pub words_removed: usize,
    pub docs_touched: usize,
    /// Documents dropped because removal left no text.
    pub docs_emptied: usize,
}

/// Delete every whole-word occurrence of a lexicon term from a document's
/// text, collapsing the whitespace left behind. Labels are unchanged.
pub fn remove_identifiers_text(text: &str, lexicon: &IdentifierLexicon) -> (String, usize) {
    let occurrences = lexicon.occurrences(text);
    if occurrences.is_empty() {
        return (text.to_string(), 0);
    }
    let mut out = String::with_capacity(text.len());
    let mut cursor = 0;
    for &(start, end, _) in &occurrences {
        out.push_str(&text[cursor..start]);
        cursor = end;
    }
    out.push_str(&text[cursor..]);

    let collapsed = out.split_whitespace().collect::<Vec<_>>().join(" ");
    (collapsed, occurrences.len())
}

/// Word-removal baseline over a corpus. Applied to training and evaluation
/// text alike at the call sites that implement the baseline.
pub fn remove_identifiers(
    corpus: &LabeledCorpus,
    lexicon: &IdentifierLexicon,
) -> (LabeledCorpus, RemovalStats) {
    let mut stats = RemovalStats::default();
    let mut docs = Vec::with_capacity(corpus.len());
    for d in corpus.documents() {
        let (text, removed) = remove_identifiers_text(&d.text, lexicon);
        if removed > 0 {
            stats.docs_touched += 1;
            stats.words_removed += removed;
        }
        if text.is_empty() {
            stats.docs_emptied += 1;
            continue;
        }
        let mut nd = d.clone();
        nd.text = text;
        docs.push(nd);
    }
    let corpus = LabeledCorpus::new(docs, corpus.split).expect("ids unchanged");
    (corpus, stats)
}

/// Fine-tune a transformer under the combined objective. `reg_method` must
/// be `oc` or `soc`; α = 0 reproduces the unregularized run exactly.
pub fn train_regularized(
    train: &LabeledCorpus,
    val: &LabeledCorpus,
    config: &TrainingConfig,
    lexicon: &IdentifierLexicon,
    sampler: Option<&dyn ContextSampler>,
) -> Result<(TransformerClassifier, TrainLog)> {
    let params = PenaltyParams::from_config(config)?;
    if params.method == Method::Soc && sampler.is_none() {
        return Err(Error::Config("soc regularization needs a context sampler".into()));
    }
    let mut model = crate::model::trainer::init_transformer(train, config)?;
    let log = train_model(&mut model, train, val, config, Some((lexicon, sampler)))?;
    model.set_train_domain(crate::audit::corpus_domain(train));
    Ok((model, log))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{Domain, Split};
    use crate::model::tokenizer::Tokenizer;
    use crate::model::toy::TwoLayerScorer;

    fn lexicon(terms: &[&str]) -> IdentifierLexicon {
        IdentifierLexicon::new("test", terms.iter().map(|s| s.to_string())).unwrap()
    }

    #[test]
    fn removal_examples() {
        let lex = lexicon(&["muslim", "black"]);
        let (t, n) = remove_identifiers_text("the muslim man", &lex);
        assert_eq!(t, "the man");
        assert_eq!(n, 1);
        let (t, n) = remove_identifiers_text("no lexicon words here", &lex);
        assert_eq!(t, "no lexicon words here");
        assert_eq!(n, 0);
        let (t, _) = remove_identifiers_text("Black blackboard", &lex);
        assert_eq!(t, "blackboard");
    }

    #[test]
    fn removal_closure_holds() {
        let lex = lexicon(&["jew", "muslim"]);
        let docs = vec![
            Document::new("a", "the Muslim and the jew, together", true, Domain::Gab).unwrap(),
            Document::new("b", "nothing here", false, Domain::Gab).unwrap(),
        ];
        let corpus = LabeledCorpus::new(docs, Split::Train).unwrap();
        let (removed, stats) = remove_identifiers(&corpus, &lex);
        assert_eq!(stats.words_removed, 2);
        assert_eq!(stats.docs_touched, 1);
        for d in removed.documents() {
            assert!(!lex.matches(&d.text), "{}", d.text);
            assert_eq!(
                d.label,
                corpus.documents().iter().find(|o| o.id == d.id).unwrap().label
            );
        }
    }

    #[test]
    fn fully_emptied_docs_are_dropped_and_counted() {
        let lex = lexicon(&["jew"]);
        let docs = vec![Document::new("a", "Jew jew", true, Domain::Gab).unwrap()];
        let corpus = LabeledCorpus::new(docs, Split::Train).unwrap();
        let (removed, stats) = remove_identifiers(&corpus, &lex);
        assert_eq!(removed.len(), 0);
        assert_eq!(stats.docs_emptied, 1);
    }

    #[test]
    fn empty_batch_penalty_is_zero() {
        let tok = Tokenizer::from_words(&["plain", "words"]);
        let model = TwoLayerScorer::random(tok, 4, 6, 3);
        let lex = lexicon(&["muslim"]);
        let batch = vec![Document::new("a", "plain words", false, Domain::Synthetic).unwrap()];
        let params =
            PenaltyParams { method: Method::Oc, window: 0, samples: 1, seed: 0 };
        let v = penalty_value(&model, &batch, &lex, &params, None).unwrap();
        assert_eq!(v, 0.0);
    }

    #[test]
    fn single_occurrence_penalty_is_phi_squared() {
        let tok = Tokenizer::from_words(&["muslim", "plain"]);
        let model = TwoLayerScorer::random(tok.clone(), 4, 6, 3);
        let lex = lexicon(&["muslim"]);
        let batch = vec![Document::new("a", "plain muslim plain", false, Domain::Synthetic).unwrap()];
        let params = PenaltyParams { method: Method::Oc, window: 0, samples: 1, seed: 0 };
        let v = penalty_value(&model, &batch, &lex, &params, None).unwrap();

        let x = tok.tokenize("plain muslim plain").unwrap();
        let phi = crate::explain::occlusion_score(&model, &x, PhraseSpan::single(1))
            .unwrap()
            .value;
        assert!((v - phi * phi).abs() < 1e-12, "{v} vs {}", phi * phi);
        assert!(v >= 0.0);
    }

    #[test]
    fn penalty_gradient_matches_finite_differences() {
        let tok = Tokenizer::from_words(&["muslim", "jew", "plain", "calm"]);
        let mut model = TwoLayerScorer::random(tok.clone(), 3, 5, 12);
        let lex = lexicon(&["muslim", "jew"]);
        let lm = crate::lm_sampler::MarkovLm::uniform(vec!["plain".into(), "calm".into()]).unwrap();
        let sampler = lm.bind(&tok).unwrap();
        let batch = vec![
            Document::new("a", "plain muslim calm jew plain", true, Domain::Synthetic).unwrap(),
            Document::new("b", "calm calm muslim", false, Domain::Synthetic).unwrap(),
        ];
        let params = PenaltyParams { method: Method::Soc, window: 2, samples: 4, seed: 11 };

        let (_, grads) =
            penalty_with_gradient(&model, &batch, &lex, &params, Some(&sampler)).unwrap();

        let h = 1e-5;
        let mut checked = 0;
        for id in model.params().ids().collect::<Vec<_>>() {
            let n = model.params().value(id).data.len();
            let cols = model.params().value(id).cols;
            let frozen: Vec<usize> = model.params().frozen_rows(id).to_vec();
            for i in (0..n).step_by(5) {
                if frozen.contains(&(i / cols)) {
                    continue; // frozen rows are excluded from training gradients
                }
                let orig = model.params().value(id).data[i];
                model.params_mut().value_mut(id).data[i] = orig + h;
                let up = penalty_value(&model, &batch, &lex, &params, Some(&sampler)).unwrap();
                model.params_mut().value_mut(id).data[i] = orig - h;
                let down = penalty_value(&model, &batch, &lex, &params, Some(&sampler)).unwrap();
                model.params_mut().value_mut(id).data[i] = orig;
                let num = (up - down) / (2.0 * h);
                let ana = grads[id.0].data[i];
                if num.abs() < 1e-10 && ana.abs() < 1e-10 {
                    continue;
                }
                let denom = num.abs().max(ana.abs());
                assert!(
                    (num - ana).abs() / denom < 1e-4,
                    "param {id:?}[{i}]: numeric {num} vs analytic {ana}"
                );
                checked += 1;
            }
        }
        assert!(checked >= 5, "only {checked} parameters checked");
    }
}
