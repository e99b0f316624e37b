//! Trainable binary classifiers exposing unnormalized per-label scores.

pub mod bow;
pub mod checkpoint;
pub mod tokenizer;
pub mod toy;
pub mod trainer;
pub mod transformer;

use std::path::PathBuf;

use crate::autodiff::{Mat, NodeId, ParamId, ParamStore, Tape};
use crate::corpus::Domain;
use crate::error::{Error, Result};
use crate::kv::KvDoc;
use tokenizer::{TokenizedText, Tokenizer};

/// Unnormalized scores of the two classes. The decision score is
/// `s(x) = hate_score − nonhate_score`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LabelScores {
    pub hate_score: f64,
    pub nonhate_score: f64,
}

impl LabelScores {
    pub fn s(&self) -> f64 {
        self.hate_score - self.nonhate_score
    }

    /// Ties at s(x) = 0 predict non-hate.
    pub fn predicts_hate(&self) -> bool {
        self.s() > 0.0
    }
}

/// Score plus metadata about how the raw text was prepared.
#[derive(Debug, Clone, Copy)]
pub struct Scored {
    pub scores: LabelScores,
    pub truncated: bool,
}

/// Anything that can score a tokenized input.
pub trait Scorer {
    fn score_tokens(&self, x: &TokenizedText) -> LabelScores;

    /// Exact gradient of s(x) with respect to trainable parameters, as
    /// (name, gradient) pairs. Scorers that cannot differentiate return a
    /// capability error.
    fn score_gradient(&self, _x: &TokenizedText) -> Result<Vec<(String, Mat)>> {
        Err(Error::Capability(
            "this scorer does not support differentiation".into(),
        ))
    }
}

/// A scorer with its own text pipeline and provenance.
pub trait TextClassifier: Scorer {
    fn tokenizer(&self) -> &Tokenizer;
    /// Maximum tokens scored; longer inputs are truncated. 0 means unlimited.
    fn max_tokens(&self) -> usize;
    /// Domain of the training corpus, when known.
    fn train_domain(&self) -> Option<Domain>;
}

/// Tokenize, truncate, and score raw text.
pub fn score(classifier: &dyn TextClassifier, text: &str) -> Result<Scored> {
    let (tokens, truncated) = classifier
        .tokenizer()
        .tokenize_truncated(text, classifier.max_tokens())?;
    Ok(Scored { scores: classifier.score_tokens(&tokens), truncated })
}

/// Caches one tape leaf per parameter so gradients accumulate correctly.
pub struct TapeBinding {
    nodes: Vec<Option<NodeId>>,
}

impl TapeBinding {
    pub fn new(store: &ParamStore) -> Self {
        TapeBinding { nodes: vec![None; store.len()] }
    }

    pub fn node(&mut self, tape: &mut Tape, store: &ParamStore, id: ParamId) -> NodeId {
        if let Some(n) = self.nodes[id.0] {
            return n;
        }
        let n = tape.param(store, id);
        self.nodes[id.0] = Some(n);
        n
    }
}

/// A scorer whose score is an autodiff graph over a parameter store.
pub trait DiffScorer: Scorer {
    fn params(&self) -> &ParamStore;
    fn params_mut(&mut self) -> &mut ParamStore;

    /// Build the 1×2 logits node (hate, non-hate) for `x`.
    fn logits_node(&self, tape: &mut Tape, binding: &mut TapeBinding, x: &TokenizedText) -> NodeId;

    /// Build the scalar s(x) node.
    fn s_node(&self, tape: &mut Tape, binding: &mut TapeBinding, x: &TokenizedText) -> NodeId {
        let logits = self.logits_node(tape, binding, x);
        let hate = tape.pick(logits, 0, 0);
        let non = tape.pick(logits, 0, 1);
        tape.sub(hate, non)
    }
}

/// Forward evaluation of a [`DiffScorer`] without keeping gradients.
pub fn diff_score_tokens<M: DiffScorer + ?Sized>(model: &M, x: &TokenizedText) -> LabelScores {
    let mut tape = Tape::new();
    let mut binding = TapeBinding::new(model.params());
    let logits = model.logits_node(&mut tape, &mut binding, x);
    let v = tape.value(logits);
    LabelScores { hate_score: v.at(0, 0), nonhate_score: v.at(0, 1) }
}

/// Gradient of s(x) for any [`DiffScorer`], as (name, grad) pairs.
pub fn diff_score_gradient<M: DiffScorer + ?Sized>(
    model: &M,
    x: &TokenizedText,
) -> Vec<(String, Mat)> {
    let mut tape = Tape::new();
    let mut binding = TapeBinding::new(model.params());
    let s = model.s_node(&mut tape, &mut binding, x);
    let grads = tape.backward(s);
    let pgrads = tape.param_grads(&grads, model.params());
    model
        .params()
        .iter()
        .map(|(id, name, _)| (name.to_string(), pgrads[id.0].clone()))
        .collect()
}

/// How classifier training regularizes identifier importance.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RegMethod {
    None,
    Oc,
    Soc,
    WordRemoval,
}

impl std::fmt::Display for RegMethod {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            RegMethod::None => "none",
            RegMethod::Oc => "oc",
            RegMethod::Soc => "soc",
            RegMethod::WordRemoval => "word_removal",
        };
        f.write_str(s)
    }
}

impl std::str::FromStr for RegMethod {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(RegMethod::None),
            "oc" => Ok(RegMethod::Oc),
            "soc" => Ok(RegMethod::Soc),
            "word_removal" => Ok(RegMethod::WordRemoval),
            other => Err(Error::Config(format!("unknown reg_method {other:?}"))),
        }
    }
}

/// Which classifier a config trains.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelKind {
    Bow,
    Transformer,
}

impl std::fmt::Display for ModelKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ModelKind::Bow => "bow",
            ModelKind::Transformer => "transformer",
        })
    }
}

impl std::str::FromStr for ModelKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "bow" => Ok(ModelKind::Bow),
            "transformer" => Ok(ModelKind::Transformer),
            other => Err(Error::Config(format!("unknown model kind {other:?}"))),
        }
    }
}

/// All training hyperparameters. Round-trips through the flat key-value
/// config format.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingConfig {
    pub model: ModelKind,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Loss multiplier on positive (hate) examples.
    pub positive_weight: f64,
    /// Validate every this many optimizer steps.
    pub eval_interval: usize,
    /// Stop after this many learning-rate halvings.
    pub lr_halvings_to_stop: usize,
    pub seed: u64,
    pub max_tokens: usize,
    /// Regularization strength α.
    pub alpha: f64,
    pub reg_method: RegMethod,
    /// SOC sample count K (training-time default 5).
    pub soc_samples: usize,
    /// SOC context window N (training-time default 5).
    pub soc_window: usize,
    /// Hard cap on optimizer steps; 0 disables the cap.
    pub max_steps: usize,
    pub encoder_dim: usize,
    pub encoder_layers: usize,
    pub encoder_heads: usize,
    pub encoder_ff: usize,
    /// Checkpoint directory to initialize the encoder from, if any.
    pub encoder_pretrained: Option<PathBuf>,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        TrainingConfig {
            model: ModelKind::Transformer,
            batch_size: 32,
            learning_rate: 2e-5,
            positive_weight: 1.0,
            eval_interval: 200,
            lr_halvings_to_stop: 5,
            seed: 0,
            max_tokens: 128,
            alpha: 0.0,
            reg_method: RegMethod::None,
            soc_samples: 5,
            soc_window: 5,
            max_steps: 20_000,
            encoder_dim: 24,
            encoder_layers: 2,
            encoder_heads: 2,
            encoder_ff: 64,
            encoder_pretrained: None,
        }
    }
}

impl TrainingConfig {
    /// Defaults sized for the bag-of-words model (full-batch descent).
    pub fn bow_default() -> Self {
        TrainingConfig {
            model: ModelKind::Bow,
            learning_rate: 2.0,
            max_steps: 300,
            ..Self::default()
        }
    }

    pub fn to_kv(&self) -> KvDoc {
        let mut kv = KvDoc::new();
        kv.set(
            "model",
            match self.model {
                ModelKind::Bow => "bow",
                ModelKind::Transformer => "transformer",
            },
        );
        kv.set("batch_size", self.batch_size);
        kv.set("learning_rate", self.learning_rate);
        kv.set("positive_weight", self.positive_weight);
        kv.set("eval_interval", self.eval_interval);
        kv.set("lr_halvings_to_stop", self.lr_halvings_to_stop);
        kv.set("seed", self.seed);
        kv.set("max_tokens", self.max_tokens);
        kv.set("alpha", self.alpha);
        kv.set("reg_method", self.reg_method);
        kv.set("soc_samples", self.soc_samples);
        kv.set("soc_window", self.soc_window);
        kv.set("max_steps", self.max_steps);
        kv.set("encoder_dim", self.encoder_dim);
        kv.set("encoder_layers", self.encoder_layers);
        kv.set("encoder_heads", self.encoder_heads);
        kv.set("encoder_ff", self.encoder_ff);
        if let Some(p) = &self.encoder_pretrained {
            kv.set("encoder_pretrained", p.display());
        }
        kv
    }

    /// Parse and validate a config document; failures list every offending
    /// key at once.
    pub fn from_kv(kv: &KvDoc) -> Result<Self> {
        let defaults = Self::default();
        let mut problems = Vec::new();

        let model = match kv.get("model").unwrap_or("transformer") {
            "bow" => ModelKind::Bow,
            "transformer" => ModelKind::Transformer,
            other => {
                problems.push(format!("model: unknown kind {other:?}"));
                ModelKind::Transformer
            }
        };
        let reg_method = match kv.get("reg_method").unwrap_or("none").parse::<RegMethod>() {
            Ok(m) => m,
            Err(e) => {
                problems.push(format!("reg_method: {e}"));
                RegMethod::None
            }
        };

        let batch_size = kv
            .take_parsed("batch_size", Some(defaults.batch_size), &mut problems)
            .unwrap_or(defaults.batch_size);
        let learning_rate = kv
            .take_parsed("learning_rate", Some(defaults.learning_rate), &mut problems)
            .unwrap_or(defaults.learning_rate);
        let positive_weight = kv
            .take_parsed("positive_weight", Some(defaults.positive_weight), &mut problems)
            .unwrap_or(defaults.positive_weight);
        let eval_interval = kv
            .take_parsed("eval_interval", Some(defaults.eval_interval), &mut problems)
            .unwrap_or(defaults.eval_interval);
        let lr_halvings_to_stop = kv
            .take_parsed("lr_halvings_to_stop", Some(defaults.lr_halvings_to_stop), &mut problems)
            .unwrap_or(defaults.lr_halvings_to_stop);
        let seed = kv.take_parsed("seed", Some(defaults.seed), &mut problems).unwrap_or(defaults.seed);
        let max_tokens = kv
            .take_parsed("max_tokens", Some(defaults.max_tokens), &mut problems)
            .unwrap_or(defaults.max_tokens);
        // alpha has no default when a penalty method is selected
        let alpha = if matches!(reg_method, RegMethod::Oc | RegMethod::Soc) {
            kv.take_parsed::<f64>("alpha", None, &mut problems).unwrap_or(0.0)
        } else {
            kv.take_parsed("alpha", Some(0.0), &mut problems).unwrap_or(0.0)
        };
        let soc_samples = kv
            .take_parsed("soc_samples", Some(defaults.soc_samples), &mut problems)
            .unwrap_or(defaults.soc_samples);
        let soc_window = kv
            .take_parsed("soc_window", Some(defaults.soc_window), &mut problems)
            .unwrap_or(defaults.soc_window);
        let max_steps = kv
            .take_parsed("max_steps", Some(defaults.max_steps), &mut problems)
            .unwrap_or(defaults.max_steps);
        let encoder_dim = kv
            .take_parsed("encoder_dim", Some(defaults.encoder_dim), &mut problems)
            .unwrap_or(defaults.encoder_dim);
        let encoder_layers = kv
            .take_parsed("encoder_layers", Some(defaults.encoder_layers), &mut problems)
            .unwrap_or(defaults.encoder_layers);
        let encoder_heads = kv
            .take_parsed("encoder_heads", Some(defaults.encoder_heads), &mut problems)
            .unwrap_or(defaults.encoder_heads);
        let encoder_ff = kv
            .take_parsed("encoder_ff", Some(defaults.encoder_ff), &mut problems)
            .unwrap_or(defaults.encoder_ff);
        let encoder_pretrained = kv.get("encoder_pretrained").map(PathBuf::from);

        if batch_size == 0 {
            problems.push("batch_size: must be at least 1".into());
        }
        if !learning_rate.is_finite() || learning_rate <= 0.0 {
            problems.push("learning_rate: must be positive".into());
        }
        if !positive_weight.is_finite() || positive_weight <= 0.0 {
            problems.push("positive_weight: must be positive".into());
        }
        if eval_interval == 0 {
            problems.push("eval_interval: must be at least 1".into());
        }
        if max_tokens == 0 {
            problems.push("max_tokens: must be at least 1".into());
        }
        if alpha < 0.0 {
            problems.push("alpha: must be non-negative".into());
        }
        if reg_method == RegMethod::Soc && soc_samples == 0 {
            problems.push("soc_samples: must be at least 1 when reg_method = soc".into());
        }
        if encoder_dim == 0 || encoder_heads == 0 || !encoder_dim.is_multiple_of(encoder_heads) {
            problems.push(format!(
                "encoder_dim/encoder_heads: dim {encoder_dim} must be a positive multiple of heads {encoder_heads}"
            ));
        }
        if encoder_layers == 0 || encoder_ff == 0 {
            problems.push("encoder_layers/encoder_ff: must be at least 1".into());
        }

        if !problems.is_empty() {
            return Err(Error::Config(format!(
                "invalid training config: {}",
                problems.join("; ")
            )));
        }
        Ok(TrainingConfig {
            model,
            batch_size,
            learning_rate,
            positive_weight,
            eval_interval,
            lr_halvings_to_stop,
            seed,
            max_tokens,
            alpha,
            reg_method,
            soc_samples,
            soc_window,
            max_steps,
            encoder_dim,
            encoder_layers,
            encoder_heads,
            encoder_ff,
            encoder_pretrained,
        })
    }

    /// Whether the loss carries a penalty term.
    pub fn penalty_active(&self) -> bool {
        self.alpha > 0.0 && matches!(self.reg_method, RegMethod::Oc | RegMethod::Soc)
    }
}
