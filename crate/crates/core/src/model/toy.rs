//! Small fixed and trainable scorers used as oracles in tests.
//!
//! The linear scorer makes occlusion values exactly predictable (a span's
//! importance is the sum of its token weights, independent of context), and
//! the two-layer scorer is the smallest differentiable nonlinear model for
//! gradient and Monte Carlo checks.

use rand::Rng;

use crate::autodiff::{Mat, NodeId, ParamStore, Tape};
use crate::corpus::Domain;
use crate::error::Result;
use crate::model::tokenizer::{TokenId, TokenizedText, Tokenizer, PAD};
use crate::model::{
    diff_score_gradient, diff_score_tokens, DiffScorer, LabelScores, Scorer, TapeBinding,
    TextClassifier,
};
use crate::seeds;

fn count_features(x: &TokenizedText, vocab_size: usize) -> Mat {
    let mut f = Mat::zeros(1, vocab_size);
    for &t in &x.tokens {
        if t != PAD && t < vocab_size {
            f.data[t] += 1.0;
        }
    }
    // pad contributes nothing by construction
    f.data[PAD] = 0.0;
    f
}

/// Linear 2-way scorer over token counts: a 2×V weight matrix where row 0
/// scores hate and row 1 non-hate. The pad column is zero.
pub struct LinearScorer {
    store: ParamStore,
    weights: crate::autodiff::ParamId,
    tokenizer: Tokenizer,
}

impl LinearScorer {
    pub fn new(tokenizer: Tokenizer, weights: Mat) -> Self {
        assert_eq!(weights.rows, 2);
        assert_eq!(weights.cols, tokenizer.vocab_size());
        let mut store = ParamStore::new();
        let id = store.add("weights", weights);
        LinearScorer { store, weights: id, tokenizer }
    }

    /// Hate-row weights per token id; the non-hate row is zero, so
    /// s(x) = Σ w[token] over non-pad positions.
    pub fn from_token_weights(tokenizer: Tokenizer, hate_weights: &[f64]) -> Self {
        assert_eq!(hate_weights.len(), tokenizer.vocab_size());
        let mut w = Mat::zeros(2, hate_weights.len());
        w.data[..hate_weights.len()].copy_from_slice(hate_weights);
        *w.at_mut(0, PAD) = 0.0;
        Self::new(tokenizer, w)
    }

    pub fn random(tokenizer: Tokenizer, seed: u64) -> Self {
        let v = tokenizer.vocab_size();
        let mut rng = seeds::stream_rng(seed, "linear-init", 0);
        let mut w = Mat::from_vec(2, v, (0..2 * v).map(|_| rng.gen_range(-1.0..1.0)).collect());
        *w.at_mut(0, PAD) = 0.0;
        *w.at_mut(1, PAD) = 0.0;
        Self::new(tokenizer, w)
    }

    /// Effective per-token weight for s(x): hate row minus non-hate row.
    pub fn token_weight(&self, t: TokenId) -> f64 {
        let w = self.store.value(self.weights);
        w.at(0, t) - w.at(1, t)
    }
}

impl Scorer for LinearScorer {
    fn score_tokens(&self, x: &TokenizedText) -> LabelScores {
        let w = self.store.value(self.weights);
        let mut hate = 0.0;
        let mut non = 0.0;
        for &t in &x.tokens {
            hate += w.at(0, t);
            non += w.at(1, t);
        }
        LabelScores { hate_score: hate, nonhate_score: non }
    }

    fn score_gradient(&self, x: &TokenizedText) -> Result<Vec<(String, Mat)>> {
        Ok(diff_score_gradient(self, x))
    }
}

impl DiffScorer for LinearScorer {
    fn params(&self) -> &ParamStore {
        &self.store
    }

    fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.store
    }

    fn logits_node(&self, tape: &mut Tape, binding: &mut TapeBinding, x: &TokenizedText) -> NodeId {
        let f = tape.constant(count_features(x, self.tokenizer.vocab_size()));
        let w = binding.node(tape, &self.store, self.weights);
        let wt = tape.transpose(w);
        tape.matmul(f, wt)
    }
}

impl TextClassifier for LinearScorer {
    fn tokenizer(&self) -> &Tokenizer {
        &self.tokenizer
    }

    fn max_tokens(&self) -> usize {
        0
    }

    fn train_domain(&self) -> Option<Domain> {
        None
    }
}

/// Two-layer nonlinear scorer: mean token embedding → tanh hidden layer →
/// 2-way logits. Position-insensitive but context-sensitive, which is all the
/// sampling oracles need.
pub struct TwoLayerScorer {
    store: ParamStore,
    emb: crate::autodiff::ParamId,
    w1: crate::autodiff::ParamId,
    b1: crate::autodiff::ParamId,
    w2: crate::autodiff::ParamId,
    b2: crate::autodiff::ParamId,
    tokenizer: Tokenizer,
}

impl TwoLayerScorer {
    pub fn random(tokenizer: Tokenizer, dim: usize, hidden: usize, seed: u64) -> Self {
        let v = tokenizer.vocab_size();
        let mut rng = seeds::stream_rng(seed, "twolayer-init", 0);
        let mut rand_mat = |r: usize, c: usize, scale: f64| {
            Mat::from_vec(r, c, (0..r * c).map(|_| rng.gen_range(-scale..scale)).collect())
        };
        let mut emb = rand_mat(v, dim, 1.0);
        for c in 0..dim {
            *emb.at_mut(PAD, c) = 0.0;
        }
        let w1 = rand_mat(dim, hidden, 1.0);
        let b1 = rand_mat(1, hidden, 0.5);
        let w2 = rand_mat(hidden, 2, 1.0);
        let b2 = rand_mat(1, 2, 0.5);

        let mut store = ParamStore::new();
        let emb_id = store.add("emb", emb);
        store.freeze_rows(emb_id, vec![PAD]);
        let w1_id = store.add("w1", w1);
        let b1_id = store.add("b1", b1);
        let w2_id = store.add("w2", w2);
        let b2_id = store.add("b2", b2);
        TwoLayerScorer {
            store,
            emb: emb_id,
            w1: w1_id,
            b1: b1_id,
            w2: w2_id,
            b2: b2_id,
            tokenizer,
        }
    }
}

impl Scorer for TwoLayerScorer {
    fn score_tokens(&self, x: &TokenizedText) -> LabelScores {
        diff_score_tokens(self, x)
    }

    fn score_gradient(&self, x: &TokenizedText) -> Result<Vec<(String, Mat)>> {
        Ok(diff_score_gradient(self, x))
    }
}

impl DiffScorer for TwoLayerScorer {
    fn params(&self) -> &ParamStore {
        &self.store
    }

    fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.store
    }

    fn logits_node(&self, tape: &mut Tape, binding: &mut TapeBinding, x: &TokenizedText) -> NodeId {
        let emb = binding.node(tape, &self.store, self.emb);
        let gathered = tape.embed_rows(emb, &x.tokens);
        let pooled = tape.mean_rows(gathered);
        let w1 = binding.node(tape, &self.store, self.w1);
        let b1 = binding.node(tape, &self.store, self.b1);
        let h = tape.matmul(pooled, w1);
        let h = tape.add_row(h, b1);
        let h = tape.tanh(h);
        let w2 = binding.node(tape, &self.store, self.w2);
        let b2 = binding.node(tape, &self.store, self.b2);
        let o = tape.matmul(h, w2);
        tape.add_row(o, b2)
    }
}

impl TextClassifier for TwoLayerScorer {
    fn tokenizer(&self) -> &Tokenizer {
        &self.tokenizer
    }

    fn max_tokens(&self) -> usize {
        0
    }

    fn train_domain(&self) -> Option<Domain> {
        None
    }
}

/// A scorer that cannot be differentiated; exists to exercise the capability
/// error path.
pub struct FrozenScorer {
    pub bias: f64,
}

impl Scorer for FrozenScorer {
    fn score_tokens(&self, _x: &TokenizedText) -> LabelScores {
        LabelScores { hate_score: self.bias, nonhate_score: 0.0 }
    }
}
