//! Shared fine-tuning loop: Adam, reweighted cross-entropy, periodic
//! validation, learning-rate halving on validation-F1 decrease.
//!
//! The schedule: validate every `eval_interval` steps; when validation F1
//! drops strictly below the best seen so far, halve the learning rate, and
//! stop once `lr_halvings_to_stop` halvings have already happened. Training
//! also stops at `max_steps` as a hard cap.

use rand::seq::SliceRandom;

use crate::autodiff::Tape;
use crate::corpus::LabeledCorpus;
use crate::error::{Error, Result};
use crate::lm_sampler::ContextSampler;
use crate::model::checkpoint;
use crate::model::tokenizer::TokenizedText;
use crate::model::transformer::{EncoderDims, TransformerClassifier};
use crate::model::{DiffScorer, TapeBinding, TextClassifier, TrainingConfig};
use crate::optim::Adam;
use crate::regularize::{lexicon_token_positions, penalty_graph, PenaltyParams, RegularizedLoss};
use crate::seeds;

/// A model the shared loop can train.
pub trait TrainableClassifier: DiffScorer + TextClassifier {}
impl<T: DiffScorer + TextClassifier> TrainableClassifier for T {}

/// Lexicon plus sampler for penalty-regularized runs.
pub type RegContext<'a> = (
    &'a crate::corpus::lexicon::IdentifierLexicon,
    Option<&'a dyn ContextSampler>,
);

/// One validation measurement.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalPoint {
    pub step: usize,
    pub f1: f64,
    pub lr: f64,
}

/// Everything a training run recorded.
#[derive(Debug, Clone, Default)]
pub struct TrainLog {
    pub batch_losses: Vec<RegularizedLoss>,
    pub evals: Vec<EvalPoint>,
    pub lr_values: Vec<f64>,
    pub steps: usize,
}

impl TrainLog {
    /// Mean task loss inside each evaluation window, for descent checks.
    pub fn mean_task_loss_per_eval(&self, eval_interval: usize) -> Vec<f64> {
        self.batch_losses
            .chunks(eval_interval)
            .filter(|c| c.len() == eval_interval)
            .map(|c| c.iter().map(|l| l.task_loss).sum::<f64>() / c.len() as f64)
            .collect()
    }
}

struct TrainItem {
    tokens: TokenizedText,
    label: bool,
    lexicon_positions: Vec<usize>,
}

fn f1_percent(tp: usize, fp: usize, fn_: usize) -> f64 {
    let p = if tp + fp > 0 { tp as f64 / (tp + fp) as f64 } else { 0.0 };
    let r = if tp + fn_ > 0 { tp as f64 / (tp + fn_) as f64 } else { 0.0 };
    if p + r > 0.0 {
        100.0 * 2.0 * p * r / (p + r)
    } else {
        0.0
    }
}

fn eval_f1<M: TrainableClassifier>(model: &M, items: &[(TokenizedText, bool)]) -> f64 {
    let (mut tp, mut fp, mut fn_) = (0, 0, 0);
    for (x, label) in items {
        let pred = model.score_tokens(x).predicts_hate();
        match (pred, label) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fn_ += 1,
            (false, false) => {}
        }
    }
    f1_percent(tp, fp, fn_)
}

fn tokenize_corpus<M: TrainableClassifier>(
    model: &M,
    corpus: &LabeledCorpus,
) -> Result<Vec<(TokenizedText, bool)>> {
    corpus
        .documents()
        .iter()
        .map(|d| {
            model
                .tokenizer()
                .tokenize_truncated(&d.text, model.max_tokens())
                .map(|(t, _)| (t, d.label))
        })
        .collect()
}

/// Per-example weighted cross-entropy terms for a batch, in batch order.
/// Positives are weighted `positive_weight`, so multiplying that weight by c
/// multiplies exactly the positive terms by c.
pub fn weighted_example_losses<M: TrainableClassifier>(
    model: &M,
    batch: &[(TokenizedText, bool)],
    positive_weight: f64,
) -> Vec<f64> {
    batch
        .iter()
        .map(|(x, label)| {
            let mut tape = Tape::new();
            let mut binding = TapeBinding::new(model.params());
            let logits = model.logits_node(&mut tape, &mut binding, x);
            let lse = tape.log_sum_exp_row(logits);
            let target = tape.pick(logits, 0, if *label { 0 } else { 1 });
            let ce = tape.sub(lse, target);
            let w = if *label { positive_weight } else { 1.0 };
            w * tape.value(ce).item()
        })
        .collect()
}

/// Run the shared loop, mutating `model` in place. With `reg` present and an
/// active penalty (α > 0, method oc/soc) each batch adds α × Σ φ(w)²; with
/// α = 0 the penalty path is skipped entirely, reproducing the unregularized
/// run exactly.
pub fn train_model<M: TrainableClassifier>(
    model: &mut M,
    train: &LabeledCorpus,
    val: &LabeledCorpus,
    config: &TrainingConfig,
    reg: Option<RegContext<'_>>,
) -> Result<TrainLog> {
    if train.is_empty() {
        return Err(Error::Train("training corpus is empty".into()));
    }
    if train.positives() == 0 || train.negatives() == 0 {
        return Err(Error::Train("training corpus must contain both labels".into()));
    }
    if val.is_empty() {
        return Err(Error::Config("validation corpus is empty".into()));
    }

    let penalty_active = config.penalty_active() && reg.is_some();
    let penalty_params = if penalty_active {
        Some(PenaltyParams::from_config(config)?)
    } else {
        None
    };

    let items: Vec<TrainItem> = train
        .documents()
        .iter()
        .map(|d| {
            let (tokens, _) = model
                .tokenizer()
                .tokenize_truncated(&d.text, model.max_tokens())?;
            let lexicon_positions = match (&reg, penalty_active) {
                (Some((lexicon, _)), true) => {
                    lexicon_token_positions(&tokens, model.tokenizer(), lexicon)
                }
                _ => Vec::new(),
            };
            Ok(TrainItem { tokens, label: d.label, lexicon_positions })
        })
        .collect::<Result<_>>()?;
    let val_items = tokenize_corpus(model, val)?;

    let mut adam = Adam::new(model.params());
    let mut shuffle_rng = seeds::stream_rng(config.seed, "shuffle", 0);
    let mut lr = config.learning_rate;
    let mut log = TrainLog { lr_values: vec![lr], ..TrainLog::default() };
    let mut best_f1: Option<f64> = None;
    let mut halvings = 0usize;
    let mut step = 0usize;

    'training: loop {
        let mut order: Vec<usize> = (0..items.len()).collect();
        order.shuffle(&mut shuffle_rng);

        for chunk in order.chunks(config.batch_size) {
            step += 1;
            let mut tape = Tape::new();
            let mut binding = TapeBinding::new(model.params());

            let mut weighted_sum = None;
            for &i in chunk {
                let item = &items[i];
                let logits = model.logits_node(&mut tape, &mut binding, &item.tokens);
                let lse = tape.log_sum_exp_row(logits);
                let target = tape.pick(logits, 0, if item.label { 0 } else { 1 });
                let ce = tape.sub(lse, target);
                let w = if item.label { config.positive_weight } else { 1.0 };
                let wce = tape.scale(ce, w);
                weighted_sum = Some(match weighted_sum {
                    Some(s) => tape.add(s, wce),
                    None => wce,
                });
            }
            let task = tape.scale(weighted_sum.expect("non-empty batch"), 1.0 / chunk.len() as f64);

            let mut penalty_value = 0.0;
            let total = if let (Some(params), Some((_, sampler))) = (&penalty_params, &reg) {
                let batch: Vec<&TokenizedText> = chunk.iter().map(|&i| &items[i].tokens).collect();
                let positions: Vec<&[usize]> =
                    chunk.iter().map(|&i| items[i].lexicon_positions.as_slice()).collect();
                let base_seed = seeds::derive_seed(config.seed, "penalty-step", step as u64);
                let node = penalty_graph(
                    model, &mut tape, &mut binding, &batch, &positions, params, *sampler,
                    base_seed,
                )?;
                match node {
                    Some(p) => {
                        penalty_value = tape.value(p).item();
                        let scaled = tape.scale(p, config.alpha);
                        tape.add(task, scaled)
                    }
                    None => task,
                }
            } else {
                task
            };

            let task_loss = tape.value(task).item();
            let total_loss = tape.value(total).item();
            if !total_loss.is_finite() {
                return Err(Error::Train(format!("loss diverged at step {step}")));
            }
            log.batch_losses.push(RegularizedLoss {
                task_loss,
                penalty: penalty_value,
                alpha: if penalty_active { config.alpha } else { 0.0 },
                total: total_loss,
            });

            let grads = tape.backward(total);
            let pgrads = tape.param_grads(&grads, model.params());
            adam.step(model.params_mut(), &pgrads, lr);

            if step.is_multiple_of(config.eval_interval) {
                let f1 = eval_f1(model, &val_items);
                log.evals.push(EvalPoint { step, f1, lr });
                match best_f1 {
                    Some(best) if f1 < best => {
                        // strictly-below-best counts as a decrease
                        if halvings == config.lr_halvings_to_stop {
                            break 'training;
                        }
                        halvings += 1;
                        lr /= 2.0;
                        log.lr_values.push(lr);
                    }
                    Some(best) if f1 > best => best_f1 = Some(f1),
                    None => best_f1 = Some(f1),
                    _ => {}
                }
            }
            if config.max_steps > 0 && step >= config.max_steps {
                break 'training;
            }
        }
    }

    log.steps = step;
    Ok(log)
}

/// Build the transformer a config describes: a fresh seed-initialized
/// encoder, or one loaded from a pretrained checkpoint directory.
pub fn init_transformer(
    train: &LabeledCorpus,
    config: &TrainingConfig,
) -> Result<TransformerClassifier> {
    match &config.encoder_pretrained {
        Some(path) => {
            if !path.is_dir() {
                return Err(Error::Environment(format!(
                    "pretrained encoder directory {} is not available",
                    path.display()
                )));
            }
            match checkpoint::load_checkpoint(path)?.model {
                checkpoint::ClassifierKind::Transformer(m) => Ok(m),
                checkpoint::ClassifierKind::Bow(_) => Err(Error::Config(
                    "pretrained checkpoint is a bag-of-words model, not an encoder".into(),
                )),
            }
        }
        None => {
            let tokenizer = crate::model::tokenizer::Tokenizer::fit(
                train.documents().iter().map(|d| d.text.as_str()),
            );
            TransformerClassifier::new(
                tokenizer,
                EncoderDims::from_config(config),
                config.max_tokens + 1, // one slot for CLS
                config.seed,
            )
        }
    }
}

/// Fine-tune an (optionally pretrained) transformer on a corpus.
pub fn train_transformer(
    train: &LabeledCorpus,
    val: &LabeledCorpus,
    config: &TrainingConfig,
) -> Result<(TransformerClassifier, TrainLog)> {
    let mut model = init_transformer(train, config)?;
    let log = train_model(&mut model, train, val, config, None)?;
    model.set_train_domain(crate::audit::corpus_domain(train));
    Ok((model, log))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{Document, Domain, Split};
    use crate::model::tokenizer::Tokenizer;
    use crate::model::toy::LinearScorer;

    fn tiny_corpus(n: usize, seed: u64) -> LabeledCorpus {
        // label = doc contains "bad"
        let mut rng = seeds::stream_rng(seed, "tinycorpus", 0);
        let words = ["good", "fine", "calm", "bad"];
        let docs = (0..n)
            .map(|i| {
                let label = i % 3 == 0;
                let mut ws: Vec<&str> = (0..6)
                    .map(|_| words[..3][rand::Rng::gen_range(&mut rng, 0..3)])
                    .collect();
                if label {
                    ws[2] = "bad";
                }
                Document::new(format!("d{i}"), ws.join(" "), label, Domain::Synthetic).unwrap()
            })
            .collect();
        LabeledCorpus::new(docs, Split::Train).unwrap()
    }

    fn config() -> TrainingConfig {
        TrainingConfig {
            batch_size: 8,
            learning_rate: 0.01,
            eval_interval: 5,
            lr_halvings_to_stop: 2,
            max_steps: 60,
            max_tokens: 16,
            encoder_dim: 8,
            encoder_layers: 1,
            encoder_heads: 2,
            encoder_ff: 16,
            seed: 5,
            ..TrainingConfig::default()
        }
    }

    #[test]
    fn loss_decreases_on_separable_data() {
        let train = tiny_corpus(60, 1);
        let val = tiny_corpus(24, 2);
        let (_, log) = train_transformer(&train, &val, &config()).unwrap();
        let means = log.mean_task_loss_per_eval(5);
        assert!(means.len() >= 3, "not enough evals: {}", means.len());
        assert!(
            means[2] < means[0],
            "loss did not descend: {:?}",
            &means[..3]
        );
    }

    #[test]
    fn training_is_seed_deterministic() {
        let train = tiny_corpus(40, 1);
        let val = tiny_corpus(16, 2);
        let cfg = config();
        let (m1, log1) = train_transformer(&train, &val, &cfg).unwrap();
        let (m2, log2) = train_transformer(&train, &val, &cfg).unwrap();
        let l1: Vec<u64> = log1.batch_losses.iter().map(|l| l.total.to_bits()).collect();
        let l2: Vec<u64> = log2.batch_losses.iter().map(|l| l.total.to_bits()).collect();
        assert_eq!(l1, l2);
        let w1 = m1.to_weights();
        let w2 = m2.to_weights();
        assert_eq!(
            serde_json::to_string(&w1.params).unwrap(),
            serde_json::to_string(&w2.params).unwrap()
        );
    }

    #[test]
    fn halvings_bound_number_of_lr_values() {
        let train = tiny_corpus(40, 3);
        let val = tiny_corpus(16, 4);
        let mut cfg = config();
        cfg.lr_halvings_to_stop = 1;
        cfg.max_steps = 400;
        let (_, log) = train_transformer(&train, &val, &cfg).unwrap();
        assert!(log.lr_values.len() <= cfg.lr_halvings_to_stop + 1);
    }

    #[test]
    fn zero_halvings_stops_at_first_decrease() {
        // linear toy model keeps this fast and controllable
        let tok = Tokenizer::from_words(&["good", "fine", "calm", "bad"]);
        let mut model = LinearScorer::random(tok, 7);
        let train = tiny_corpus(40, 5);
        let val = tiny_corpus(16, 6);
        let mut cfg = config();
        cfg.lr_halvings_to_stop = 0;
        cfg.max_steps = 2000;
        cfg.eval_interval = 2;
        let log = train_model(&mut model, &train, &val, &cfg, None).unwrap();
        assert_eq!(log.lr_values.len(), 1, "no halving may happen");
        // stopped before the hard cap means the schedule fired
        assert!(log.steps < 2000, "ran to the cap: {}", log.steps);
    }

    #[test]
    fn loss_decomposition_is_exact_under_active_penalty() {
        use crate::corpus::lexicon::IdentifierLexicon;
        // corpus where the lexicon word carries the label signal
        let words = ["good", "fine", "calm", "muslim"];
        let mut rng = seeds::stream_rng(3, "decomp", 0);
        let docs: Vec<Document> = (0..40)
            .map(|i| {
                let label = i % 3 == 0;
                let mut ws: Vec<&str> =
                    (0..6).map(|_| words[..3][rand::Rng::gen_range(&mut rng, 0..3)]).collect();
                if label {
                    ws[1] = "muslim";
                }
                Document::new(format!("d{i}"), ws.join(" "), label, Domain::Synthetic).unwrap()
            })
            .collect();
        let train = LabeledCorpus::new(docs, Split::Train).unwrap();
        let val = train.clone();

        let tok = Tokenizer::fit(train.documents().iter().map(|d| d.text.as_str()));
        let mut model = LinearScorer::random(tok, 7);
        let lexicon = IdentifierLexicon::new("t", ["muslim".to_string()]).unwrap();
        let mut cfg = config();
        cfg.reg_method = crate::model::RegMethod::Oc;
        cfg.alpha = 0.3;
        cfg.max_steps = 20;
        let log = train_model(&mut model, &train, &val, &cfg, Some((&lexicon, None))).unwrap();

        let mut saw_penalty = false;
        for l in &log.batch_losses {
            assert_eq!(l.total, l.task_loss + l.alpha * l.penalty);
            assert!(l.penalty >= 0.0);
            if l.penalty > 0.0 {
                saw_penalty = true;
            }
        }
        assert!(saw_penalty, "no batch carried a penalty");
    }

    #[test]
    fn positive_weight_scales_positive_losses_exactly() {
        let tok = Tokenizer::from_words(&["good", "bad"]);
        let model = LinearScorer::random(tok.clone(), 3);
        let batch = vec![
            (tok.tokenize("bad good").unwrap(), true),
            (tok.tokenize("good good").unwrap(), false),
        ];
        let base = weighted_example_losses(&model, &batch, 1.0);
        let scaled = weighted_example_losses(&model, &batch, 3.0);
        assert_eq!(scaled[0], 3.0 * base[0]);
        assert_eq!(scaled[1], base[1]);
    }

    #[test]
    fn missing_pretrained_dir_is_environment_error() {
        let train = tiny_corpus(10, 1);
        let val = tiny_corpus(4, 2);
        let mut cfg = config();
        cfg.encoder_pretrained = Some("/nonexistent/encoder".into());
        assert!(matches!(
            train_transformer(&train, &val, &cfg),
            Err(Error::Environment(_))
        ));
    }

    #[test]
    fn empty_validation_is_config_error() {
        let train = tiny_corpus(10, 1);
        let val = LabeledCorpus::empty(Split::Validation);
        assert!(matches!(
            train_transformer(&train, &val, &config()),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn single_label_corpus_is_training_error() {
        let docs = vec![
            Document::new("a", "good fine", false, Domain::Synthetic).unwrap(),
            Document::new("b", "calm calm", false, Domain::Synthetic).unwrap(),
        ];
        let train = LabeledCorpus::new(docs, Split::Train).unwrap();
        let val = tiny_corpus(4, 2);
        assert!(matches!(
            train_transformer(&train, &val, &config()),
            Err(Error::Train(_))
        ));
    }
}
