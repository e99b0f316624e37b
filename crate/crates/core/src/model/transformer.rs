//! Small bidirectional transformer encoder with a 2-way classification head.
//!
//! A CLS token is prepended, the final-layer CLS representation feeds a
//! linear layer, and s(x) is the difference of the two unnormalized logits.
//! The default configuration is a from-seed small encoder so the full
//! pipeline runs without external weights; a checkpoint directory can be
//! given instead to start from pretrained parameters.

use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::autodiff::{Mat, NodeId, ParamId, ParamStore, Tape};
use crate::corpus::Domain;
use crate::error::{Error, Result};
use crate::model::tokenizer::{TokenizedText, Tokenizer, CLS, PAD};
use crate::model::{
    diff_score_gradient, diff_score_tokens, DiffScorer, LabelScores, Scorer, TapeBinding,
    TextClassifier, TrainingConfig,
};
use crate::seeds;

const LN_EPS: f64 = 1e-5;

/// Encoder shape.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EncoderDims {
    pub dim: usize,
    pub layers: usize,
    pub heads: usize,
    pub ff: usize,
}

impl EncoderDims {
    pub fn from_config(config: &TrainingConfig) -> Self {
        EncoderDims {
            dim: config.encoder_dim,
            layers: config.encoder_layers,
            heads: config.encoder_heads,
            ff: config.encoder_ff,
        }
    }
}

struct LayerIds {
    ln1_g: ParamId,
    ln1_b: ParamId,
    wq: ParamId,
    bq: ParamId,
    wk: ParamId,
    bk: ParamId,
    wv: ParamId,
    bv: ParamId,
    wo: ParamId,
    bo: ParamId,
    ln2_g: ParamId,
    ln2_b: ParamId,
    w1: ParamId,
    b1: ParamId,
    w2: ParamId,
    b2: ParamId,
}

struct Layout {
    tok_emb: ParamId,
    pos_emb: ParamId,
    layers: Vec<LayerIds>,
    final_g: ParamId,
    final_b: ParamId,
    head_w: ParamId,
    head_b: ParamId,
}

/// Serialized weights.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TransformerWeights {
    pub dims: EncoderDims,
    pub max_tokens: usize,
    pub seed: u64,
    pub train_domain: Option<Domain>,
    pub params: Vec<(String, Mat)>,
}

pub struct TransformerClassifier {
    tokenizer: Tokenizer,
    dims: EncoderDims,
    max_tokens: usize,
    seed: u64,
    store: ParamStore,
    layout: Layout,
    train_domain: Option<Domain>,
}

fn build_layout(store: &mut ParamStore, dims: &EncoderDims, vocab: usize, max_tokens: usize, init: &mut dyn FnMut(usize, usize, f64) -> Mat) -> Layout {
    let d = dims.dim;
    let mut tok = init(vocab, d, 0.05);
    for c in 0..d {
        *tok.at_mut(PAD, c) = 0.0;
    }
    let tok_emb = store.add("tok_emb", tok);
    store.freeze_rows(tok_emb, vec![PAD]);
    let pos_emb = store.add("pos_emb", init(max_tokens, d, 0.05));

    let mut layers = Vec::with_capacity(dims.layers);
    for l in 0..dims.layers {
        let name = |p: &str| format!("layer{l}.{p}");
        layers.push(LayerIds {
            ln1_g: store.add(&name("ln1_g"), Mat::from_vec(1, d, vec![1.0; d])),
            ln1_b: store.add(&name("ln1_b"), Mat::zeros(1, d)),
            wq: store.add(&name("wq"), init(d, d, 0.08)),
            bq: store.add(&name("bq"), Mat::zeros(1, d)),
            wk: store.add(&name("wk"), init(d, d, 0.08)),
            bk: store.add(&name("bk"), Mat::zeros(1, d)),
            wv: store.add(&name("wv"), init(d, d, 0.08)),
            bv: store.add(&name("bv"), Mat::zeros(1, d)),
            wo: store.add(&name("wo"), init(d, d, 0.08)),
            bo: store.add(&name("bo"), Mat::zeros(1, d)),
            ln2_g: store.add(&name("ln2_g"), Mat::from_vec(1, d, vec![1.0; d])),
            ln2_b: store.add(&name("ln2_b"), Mat::zeros(1, d)),
            w1: store.add(&name("w1"), init(d, dims.ff, 0.08)),
            b1: store.add(&name("b1"), Mat::zeros(1, dims.ff)),
            w2: store.add(&name("w2"), init(dims.ff, d, 0.08)),
            b2: store.add(&name("b2"), Mat::zeros(1, d)),
        });
    }

    Layout {
        tok_emb,
        pos_emb,
        layers,
        final_g: store.add("final_g", Mat::from_vec(1, d, vec![1.0; d])),
        final_b: store.add("final_b", Mat::zeros(1, d)),
        head_w: store.add("head_w", init(d, 2, 0.08)),
        head_b: store.add("head_b", Mat::zeros(1, 2)),
    }
}

impl TransformerClassifier {
    /// Fresh model with seed-initialized weights.
    pub fn new(tokenizer: Tokenizer, dims: EncoderDims, max_tokens: usize, seed: u64) -> Result<Self> {
        if !dims.dim.is_multiple_of(dims.heads) {
            return Err(Error::Config(format!(
                "encoder dim {} must be divisible by heads {}",
                dims.dim, dims.heads
            )));
        }
        if max_tokens < 2 {
            return Err(Error::Config("max_tokens must be at least 2".into()));
        }
        let mut rng = seeds::stream_rng(seed, "transformer-init", 0);
        let normal = Normal::new(0.0, 1.0).expect("unit normal");
        let mut init = |r: usize, c: usize, scale: f64| {
            Mat::from_vec(r, c, (0..r * c).map(|_| normal.sample(&mut rng) * scale).collect())
        };
        let mut store = ParamStore::new();
        let layout = build_layout(&mut store, &dims, tokenizer.vocab_size(), max_tokens, &mut init);
        Ok(TransformerClassifier {
            tokenizer,
            dims,
            max_tokens,
            seed,
            store,
            layout,
            train_domain: None,
        })
    }

    pub fn dims(&self) -> EncoderDims {
        self.dims
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn set_train_domain(&mut self, domain: Option<Domain>) {
        self.train_domain = domain;
    }

    pub fn to_weights(&self) -> TransformerWeights {
        TransformerWeights {
            dims: self.dims,
            max_tokens: self.max_tokens,
            seed: self.seed,
            train_domain: self.train_domain,
            params: self
                .store
                .iter()
                .map(|(_, name, value)| (name.to_string(), value.clone()))
                .collect(),
        }
    }

    pub fn from_weights(w: TransformerWeights, tokenizer: Tokenizer) -> Result<Self> {
        let mut model = Self::new(tokenizer, w.dims, w.max_tokens, w.seed)?;
        model.train_domain = w.train_domain;
        if w.params.len() != model.store.len() {
            return Err(Error::Schema(format!(
                "checkpoint has {} parameters, model expects {}",
                w.params.len(),
                model.store.len()
            )));
        }
        for (id, (name, value)) in model.store.ids().collect::<Vec<_>>().into_iter().zip(w.params) {
            if model.store.name(id) != name {
                return Err(Error::Schema(format!(
                    "checkpoint parameter {name:?} does not match expected {:?}",
                    model.store.name(id)
                )));
            }
            let slot = model.store.value_mut(id);
            if (slot.rows, slot.cols) != (value.rows, value.cols) {
                return Err(Error::Schema(format!("parameter {name:?} has wrong shape")));
            }
            *slot = value;
        }
        Ok(model)
    }

    /// Input ids: CLS then the document tokens, truncated to the positional
    /// table. Documents are truncated, not split.
    fn input_ids(&self, x: &TokenizedText) -> Vec<usize> {
        let keep = (self.max_tokens - 1).min(x.tokens.len());
        let mut ids = Vec::with_capacity(keep + 1);
        ids.push(CLS);
        ids.extend_from_slice(&x.tokens[..keep]);
        ids
    }
}

impl Scorer for TransformerClassifier {
    fn score_tokens(&self, x: &TokenizedText) -> LabelScores {
        diff_score_tokens(self, x)
    }

    fn score_gradient(&self, x: &TokenizedText) -> Result<Vec<(String, Mat)>> {
        Ok(diff_score_gradient(self, x))
    }
}

impl DiffScorer for TransformerClassifier {
    fn params(&self) -> &ParamStore {
        &self.store
    }

    fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.store
    }

    fn logits_node(&self, tape: &mut Tape, binding: &mut TapeBinding, x: &TokenizedText) -> NodeId {
        let ids = self.input_ids(x);
        let n = ids.len();
        let d = self.dims.dim;
        let dh = d / self.dims.heads;

        let tok_emb = binding.node(tape, &self.store, self.layout.tok_emb);
        let pos_emb = binding.node(tape, &self.store, self.layout.pos_emb);
        let tok = tape.embed_rows(tok_emb, &ids);
        let positions: Vec<usize> = (0..n).collect();
        let pos = tape.embed_rows(pos_emb, &positions);
        let mut h = tape.add(tok, pos);

        for layer in &self.layout.layers {
            // attention block, pre-norm
            let g1 = binding.node(tape, &self.store, layer.ln1_g);
            let b1 = binding.node(tape, &self.store, layer.ln1_b);
            let a = tape.normalize_rows(h, LN_EPS);
            let a = tape.mul_row(a, g1);
            let a = tape.add_row(a, b1);

            let mk = |tape: &mut Tape, binding: &mut TapeBinding, w, b, a| {
                let wn = binding.node(tape, &self.store, w);
                let bn = binding.node(tape, &self.store, b);
                let y = tape.matmul(a, wn);
                tape.add_row(y, bn)
            };
            let q = mk(tape, binding, layer.wq, layer.bq, a);
            let k = mk(tape, binding, layer.wk, layer.bk, a);
            let v = mk(tape, binding, layer.wv, layer.bv, a);

            let mut heads = Vec::with_capacity(self.dims.heads);
            for hi in 0..self.dims.heads {
                let qh = tape.col_slice(q, hi * dh, dh);
                let kh = tape.col_slice(k, hi * dh, dh);
                let vh = tape.col_slice(v, hi * dh, dh);
                let kt = tape.transpose(kh);
                let scores = tape.matmul(qh, kt);
                let scores = tape.scale(scores, 1.0 / (dh as f64).sqrt());
                let attn = tape.softmax_rows(scores);
                heads.push(tape.matmul(attn, vh));
            }
            let ctx = if heads.len() == 1 { heads[0] } else { tape.col_concat(&heads) };
            let wo = binding.node(tape, &self.store, layer.wo);
            let bo = binding.node(tape, &self.store, layer.bo);
            let o = tape.matmul(ctx, wo);
            let o = tape.add_row(o, bo);
            h = tape.add(h, o);

            // feed-forward block, pre-norm
            let g2 = binding.node(tape, &self.store, layer.ln2_g);
            let b2n = binding.node(tape, &self.store, layer.ln2_b);
            let f = tape.normalize_rows(h, LN_EPS);
            let f = tape.mul_row(f, g2);
            let f = tape.add_row(f, b2n);
            let w1 = binding.node(tape, &self.store, layer.w1);
            let b1f = binding.node(tape, &self.store, layer.b1);
            let w2 = binding.node(tape, &self.store, layer.w2);
            let b2f = binding.node(tape, &self.store, layer.b2);
            let ff = tape.matmul(f, w1);
            let ff = tape.add_row(ff, b1f);
            let ff = tape.gelu(ff);
            let ff = tape.matmul(ff, w2);
            let ff = tape.add_row(ff, b2f);
            h = tape.add(h, ff);
        }

        let fg = binding.node(tape, &self.store, self.layout.final_g);
        let fb = binding.node(tape, &self.store, self.layout.final_b);
        let r = tape.normalize_rows(h, LN_EPS);
        let r = tape.mul_row(r, fg);
        let r = tape.add_row(r, fb);
        let cls = tape.row_select(r, 0);

        let hw = binding.node(tape, &self.store, self.layout.head_w);
        let hb = binding.node(tape, &self.store, self.layout.head_b);
        let logits = tape.matmul(cls, hw);
        tape.add_row(logits, hb)
    }
}

impl TextClassifier for TransformerClassifier {
    fn tokenizer(&self) -> &Tokenizer {
        &self.tokenizer
    }

    fn max_tokens(&self) -> usize {
        // one slot is reserved for CLS
        self.max_tokens - 1
    }

    fn train_domain(&self) -> Option<Domain> {
        self.train_domain
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::score;

    fn tiny() -> (Tokenizer, TransformerClassifier) {
        let tok = Tokenizer::from_words(&["a", "b", "c", "d"]);
        let dims = EncoderDims { dim: 8, layers: 2, heads: 2, ff: 16 };
        let model = TransformerClassifier::new(tok.clone(), dims, 16, 3).unwrap();
        (tok, model)
    }

    #[test]
    fn scoring_is_finite_and_deterministic() {
        let (tok, model) = tiny();
        let x = tok.tokenize("a b c d a").unwrap();
        let s1 = model.score_tokens(&x);
        let s2 = model.score_tokens(&x);
        assert_eq!(s1, s2);
        assert!(s1.s().is_finite());
    }

    #[test]
    fn truncation_flag_set_beyond_max_tokens() {
        let tok = Tokenizer::from_words(&["a"]);
        let dims = EncoderDims { dim: 4, layers: 1, heads: 1, ff: 8 };
        let model = TransformerClassifier::new(tok, dims, 4, 0).unwrap();
        let scored = score(&model, "a a a a a a").unwrap();
        assert!(scored.truncated);
        let short = score(&model, "a a a").unwrap();
        assert!(!short.truncated);
    }

    #[test]
    fn s_gradient_matches_finite_differences() {
        let (tok, mut model) = tiny();
        let x = tok.tokenize("a b c").unwrap();
        let grads = model.score_gradient(&x).unwrap();
        let h = 1e-5;
        // spot-check a handful of parameters across the stack
        for (pname, idx) in [
            ("tok_emb", 3 * 8 + 1),
            ("pos_emb", 2),
            ("layer0.wq", 5),
            ("layer0.w1", 7),
            ("layer1.wo", 11),
            ("head_w", 3),
        ] {
            let id = model
                .store
                .ids()
                .find(|&i| model.store.name(i) == pname)
                .unwrap();
            let orig = model.store.value(id).data[idx];
            model.store.value_mut(id).data[idx] = orig + h;
            let up = model.score_tokens(&x).s();
            model.store.value_mut(id).data[idx] = orig - h;
            let down = model.score_tokens(&x).s();
            model.store.value_mut(id).data[idx] = orig;
            let num = (up - down) / (2.0 * h);
            let ana = grads.iter().find(|(n, _)| n == pname).unwrap().1.data[idx];
            let denom = num.abs().max(ana.abs()).max(1e-6);
            assert!(
                (num - ana).abs() / denom < 1e-4,
                "{pname}[{idx}]: numeric {num} vs analytic {ana}"
            );
        }
    }

    #[test]
    fn weights_round_trip() {
        let (tok, model) = tiny();
        let w = model.to_weights();
        let back = TransformerClassifier::from_weights(w, tok.clone()).unwrap();
        let x = tok.tokenize("a b c").unwrap();
        assert_eq!(model.score_tokens(&x), back.score_tokens(&x));
    }
}
