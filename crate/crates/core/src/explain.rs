//! Occlusion and sampling-and-occlusion importance scores, corpus-level word
//! rankings, and hierarchical explanation trees.
//!
//! Occlusion measures the drop in s(x) when a phrase is replaced by padding.
//! SOC additionally marginalizes the phrase's neighborhood: it averages that
//! drop over context variants drawn from a language model, which removes the
//! compositional effect between the phrase and the particular context it
//! appeared in. With a zero window the two coincide exactly.

use std::collections::HashMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::LabeledCorpus;
use crate::error::{Error, Result};
use crate::lm_sampler::{group_variants, ContextSampler};
use crate::model::tokenizer::{TokenizedText, RESERVED};
use crate::model::{Scorer, TextClassifier};
use crate::seeds;

/// Half-open token span `[start, end)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PhraseSpan {
    pub start: usize,
    pub end: usize,
}

impl PhraseSpan {
    pub fn new(start: usize, end: usize) -> Result<Self> {
        if start >= end {
            return Err(Error::Input(format!("span {start}..{end} is empty or reversed")));
        }
        Ok(PhraseSpan { start, end })
    }

    pub fn single(pos: usize) -> Self {
        PhraseSpan { start: pos, end: pos + 1 }
    }

    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Bounds check against a token count.
    pub fn check(&self, token_count: usize) -> Result<()> {
        if self.end > token_count {
            return Err(Error::Input(format!(
                "span {}..{} exceeds token count {token_count}",
                self.start, self.end
            )));
        }
        Ok(())
    }
}

impl std::fmt::Display for PhraseSpan {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}:{}", self.start, self.end)
    }
}

/// Importance method.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Oc,
    Soc,
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Method::Oc => "oc",
            Method::Soc => "soc",
        })
    }
}

impl std::str::FromStr for Method {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "oc" => Ok(Method::Oc),
            "soc" => Ok(Method::Soc),
            other => Err(Error::Config(format!("unknown explanation method {other:?}"))),
        }
    }
}

/// A phrase's contribution in s(x) units, with sampling metadata.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ImportanceScore {
    pub value: f64,
    pub method: Method,
    /// Sample count (1 for occlusion).
    pub samples: usize,
    /// Standard error of the per-variant differences (0 for occlusion).
    pub std_error: f64,
    /// Context window used (0 for occlusion).
    pub window: usize,
}

/// Explainer settings shared by the SOC paths. Analysis defaults are
/// K = 20 samples with an N = 20 window.
#[derive(Debug, Clone, Copy)]
pub struct ExplainParams {
    pub method: Method,
    pub window: usize,
    pub samples: usize,
    pub seed: u64,
}

impl ExplainParams {
    pub fn oc() -> Self {
        ExplainParams { method: Method::Oc, window: 0, samples: 1, seed: 0 }
    }

    pub fn soc_analysis(seed: u64) -> Self {
        ExplainParams { method: Method::Soc, window: 20, samples: 20, seed }
    }
}

/// Prediction change when the span is replaced by padding.
pub fn occlusion_score(
    scorer: &dyn Scorer,
    x: &TokenizedText,
    span: PhraseSpan,
) -> Result<ImportanceScore> {
    span.check(x.len())?;
    let full = scorer.score_tokens(x).s();
    let masked = scorer.score_tokens(&x.with_span_masked(span)).s();
    Ok(ImportanceScore {
        value: full - masked,
        method: Method::Oc,
        samples: 1,
        std_error: 0.0,
        window: 0,
    })
}

/// Mean prediction change over resampled contexts. Identical variants are
/// grouped and scored once with their multiplicity as weight, so a degenerate
/// neighborhood distribution (window 0, or a probability-1 continuation)
/// reproduces the occlusion value exactly.
pub fn soc_score(
    scorer: &dyn Scorer,
    sampler: &dyn ContextSampler,
    x: &TokenizedText,
    span: PhraseSpan,
    window: usize,
    count: usize,
    seed: u64,
) -> Result<ImportanceScore> {
    span.check(x.len())?;
    let variants = sampler.sample_contexts(x, span, window, count, seed)?;
    let groups = group_variants(&variants);

    let diffs: Vec<(f64, usize)> = groups
        .iter()
        .map(|(v, n)| {
            let s = scorer.score_tokens(v).s();
            let sm = scorer.score_tokens(&v.with_span_masked(span)).s();
            (s - sm, *n)
        })
        .collect();

    let k = count as f64;
    let value = if diffs.len() == 1 {
        diffs[0].0
    } else {
        diffs.iter().map(|&(d, n)| d * n as f64).sum::<f64>() / k
    };
    let std_error = if diffs.len() == 1 || count < 2 {
        0.0
    } else {
        let var_sum: f64 = diffs
            .iter()
            .map(|&(d, n)| n as f64 * (d - value) * (d - value))
            .sum();
        (var_sum / (k - 1.0) / k).sqrt()
    };
    Ok(ImportanceScore { value, method: Method::Soc, samples: count, std_error, window })
}

/// Score a span with either method.
pub fn span_score(
    scorer: &dyn Scorer,
    sampler: Option<&dyn ContextSampler>,
    x: &TokenizedText,
    span: PhraseSpan,
    params: &ExplainParams,
) -> Result<ImportanceScore> {
    match params.method {
        Method::Oc => occlusion_score(scorer, x, span),
        Method::Soc => {
            let sampler = sampler.ok_or_else(|| {
                Error::Config("soc scoring needs a context sampler".into())
            })?;
            soc_score(scorer, sampler, x, span, params.window, params.samples, params.seed)
        }
    }
}

/// One word's corpus-mean importance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WordImportance {
    pub word: String,
    pub mean: f64,
    pub occurrences: usize,
}

/// Per-word mean single-token importance over a corpus, ranked descending.
/// Words with fewer than `min_occurrences` occurrences are dropped. Every
/// document derives its own seed from its corpus position, so results do not
/// depend on scheduling.
pub fn word_importances(
    classifier: &(dyn TextClassifier + Sync),
    sampler: Option<&(dyn ContextSampler + Sync)>,
    corpus: &LabeledCorpus,
    params: &ExplainParams,
    min_occurrences: usize,
) -> Result<Vec<WordImportance>> {
    if corpus.is_empty() {
        return Err(Error::Input("corpus is empty".into()));
    }
    let per_doc: Result<Vec<Vec<(String, f64)>>> = corpus
        .documents()
        .par_iter()
        .enumerate()
        .map(|(di, doc)| {
            let (x, _) = classifier
                .tokenizer()
                .tokenize_truncated(&doc.text, classifier.max_tokens())?;
            let doc_params = ExplainParams {
                seed: seeds::derive_seed(params.seed, "doc", di as u64),
                ..*params
            };
            let mut out = Vec::with_capacity(x.len());
            for (pos, &t) in x.tokens.iter().enumerate() {
                if t < RESERVED {
                    continue;
                }
                let score = span_score(
                    classifier as &dyn Scorer,
                    sampler.map(|s| s as &dyn ContextSampler),
                    &x,
                    PhraseSpan::single(pos),
                    &doc_params,
                )?;
                out.push((classifier.tokenizer().token_str(t).to_string(), score.value));
            }
            Ok(out)
        })
        .collect();

    let mut sums: HashMap<String, (f64, usize)> = HashMap::new();
    for doc in per_doc? {
        for (word, value) in doc {
            let e = sums.entry(word).or_insert((0.0, 0));
            e.0 += value;
            e.1 += 1;
        }
    }
    let mut ranking: Vec<WordImportance> = sums
        .into_iter()
        .filter(|(_, (_, n))| *n >= min_occurrences)
        .map(|(word, (sum, n))| WordImportance { word, mean: sum / n as f64, occurrences: n })
        .collect();
    ranking.sort_by(|a, b| {
        b.mean
            .partial_cmp(&a.mean)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then_with(|| a.word.cmp(&b.word))
    });
    Ok(ranking)
}

/// Node of an explanation tree: a span, its score, and two children for
/// internal nodes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeNode {
    pub span: PhraseSpan,
    pub score: ImportanceScore,
    pub children: Option<(usize, usize)>,
}

/// Binary merge tree over token spans. Leaves are single tokens and partition
/// the sequence; each internal node's span concatenates its children's.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExplanationTree {
    pub nodes: Vec<TreeNode>,
    pub root: usize,
}

impl ExplanationTree {
    pub fn leaf_count(&self) -> usize {
        self.nodes.iter().filter(|n| n.children.is_none()).count()
    }

    pub fn internal_count(&self) -> usize {
        self.nodes.len() - self.leaf_count()
    }

    /// Check the structural invariants: single-token leaves partitioning the
    /// sequence, adjacent sibling spans, node count.
    pub fn validate(&self, token_count: usize) -> Result<()> {
        let mut leaf_spans: Vec<PhraseSpan> = self
            .nodes
            .iter()
            .filter(|n| n.children.is_none())
            .map(|n| n.span)
            .collect();
        leaf_spans.sort_by_key(|s| s.start);
        if leaf_spans.len() != token_count {
            return Err(Error::Input(format!(
                "{} leaves for {} tokens",
                leaf_spans.len(),
                token_count
            )));
        }
        for (i, s) in leaf_spans.iter().enumerate() {
            if s.start != i || s.end != i + 1 {
                return Err(Error::Input(format!("leaf {i} covers {s}")));
            }
        }
        if self.internal_count() + 1 != token_count.max(1) {
            return Err(Error::Input(format!(
                "{} internal nodes for {} tokens",
                self.internal_count(),
                token_count
            )));
        }
        for n in &self.nodes {
            if let Some((l, r)) = n.children {
                let (ls, rs) = (self.nodes[l].span, self.nodes[r].span);
                if ls.end != rs.start || n.span.start != ls.start || n.span.end != rs.end {
                    return Err(Error::Input(format!(
                        "node {} does not concatenate {ls} and {rs}",
                        n.span
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Build the hierarchical explanation by greedy agglomeration: starting from
/// single-token leaves, repeatedly merge the adjacent pair whose merged span
/// has the greatest absolute importance, ties to the leftmost. Every node
/// carries its own re-computed score; span scores are memoized under the
/// shared per-document seed.
pub fn hierarchical_explanation(
    scorer: &dyn Scorer,
    sampler: Option<&dyn ContextSampler>,
    x: &TokenizedText,
    params: &ExplainParams,
) -> Result<ExplanationTree> {
    if x.is_empty() {
        return Err(Error::Input("cannot explain an empty input".into()));
    }
    let mut memo: HashMap<PhraseSpan, ImportanceScore> = HashMap::new();
    let mut score_span = |span: PhraseSpan| -> Result<ImportanceScore> {
        if let Some(s) = memo.get(&span) {
            return Ok(*s);
        }
        let s = span_score(scorer, sampler, x, span, params)?;
        memo.insert(span, s);
        Ok(s)
    };

    let mut nodes: Vec<TreeNode> = Vec::with_capacity(2 * x.len() - 1);
    let mut active: Vec<usize> = Vec::with_capacity(x.len());
    for i in 0..x.len() {
        let span = PhraseSpan::single(i);
        nodes.push(TreeNode { span, score: score_span(span)?, children: None });
        active.push(i);
    }

    while active.len() > 1 {
        let mut best: Option<(usize, f64)> = None;
        for i in 0..active.len() - 1 {
            let l = nodes[active[i]].span;
            let r = nodes[active[i + 1]].span;
            let merged = PhraseSpan { start: l.start, end: r.end };
            let s = score_span(merged)?;
            let a = s.value.abs();
            if best.is_none_or(|(_, b)| a > b) {
                best = Some((i, a));
            }
        }
        let (i, _) = best.expect("non-empty candidate set");
        let (li, ri) = (active[i], active[i + 1]);
        let merged = PhraseSpan { start: nodes[li].span.start, end: nodes[ri].span.end };
        nodes.push(TreeNode { span: merged, score: score_span(merged)?, children: Some((li, ri)) });
        let new_idx = nodes.len() - 1;
        active[i] = new_idx;
        active.remove(i + 1);
    }

    Ok(ExplanationTree { nodes, root: *active.last().expect("at least one node") })
}

/// Serialize a tree to the nested text format consumed by the report
/// renderer: header comments carry the document id and tokens, then one
/// node per line, children indented two spaces under their parent.
pub fn render_tree(tree: &ExplanationTree, doc_id: &str, tokens: &[String]) -> String {
    fn emit(tree: &ExplanationTree, idx: usize, depth: usize, out: &mut String) {
        let n = &tree.nodes[idx];
        let pad = "  ".repeat(depth);
        out.push_str(&format!(
            "{pad}{} value={} stderr={} method={} window={} samples={}\n",
            n.span, n.score.value, n.score.std_error, n.score.method, n.score.window,
            n.score.samples
        ));
        if let Some((l, r)) = n.children {
            emit(tree, l, depth + 1, out);
            emit(tree, r, depth + 1, out);
        }
    }
    let mut out = String::from("# explanation tree v1\n");
    out.push_str(&format!("# id = {doc_id}\n"));
    out.push_str(&format!("# tokens = {}\n", tokens.join(" ")));
    emit(tree, tree.root, 0, &mut out);
    out
}

/// Parse the nested tree format back into (doc id, tokens, tree).
pub fn parse_tree(text: &str) -> Result<(String, Vec<String>, ExplanationTree)> {
    let mut doc_id = String::new();
    let mut tokens: Vec<String> = Vec::new();
    let mut nodes: Vec<TreeNode> = Vec::new();
    // stack of (depth, node index) awaiting children
    let mut stack: Vec<(usize, usize)> = Vec::new();
    let mut root = None;

    for (lineno, raw) in text.lines().enumerate() {
        let row = lineno + 1;
        if raw.trim().is_empty() {
            continue;
        }
        if let Some(rest) = raw.strip_prefix('#') {
            let rest = rest.trim();
            if let Some(v) = rest.strip_prefix("id =") {
                doc_id = v.trim().to_string();
            } else if let Some(v) = rest.strip_prefix("tokens =") {
                tokens = v.split_whitespace().map(|s| s.to_string()).collect();
            }
            continue;
        }
        let indent = raw.len() - raw.trim_start_matches(' ').len();
        if !indent.is_multiple_of(2) {
            return Err(Error::Parse { row, msg: "odd indentation".into() });
        }
        let depth = indent / 2;
        let mut fields = raw.split_whitespace();
        let span_str = fields.next().ok_or(Error::Parse { row, msg: "missing span".into() })?;
        let (s, e) = span_str
            .split_once(':')
            .ok_or(Error::Parse { row, msg: format!("bad span {span_str:?}") })?;
        let span = PhraseSpan {
            start: s.parse().map_err(|_| Error::Parse { row, msg: format!("bad span {span_str:?}") })?,
            end: e.parse().map_err(|_| Error::Parse { row, msg: format!("bad span {span_str:?}") })?,
        };
        let mut value = 0.0;
        let mut std_error = 0.0;
        let mut method = Method::Oc;
        let mut window = 0;
        let mut samples = 1;
        for f in fields {
            let Some((k, v)) = f.split_once('=') else { continue };
            match k {
                "value" => value = v.parse().map_err(|_| Error::Parse { row, msg: format!("bad value {v:?}") })?,
                "stderr" => std_error = v.parse().unwrap_or(0.0),
                "method" => method = v.parse()?,
                "window" => window = v.parse().unwrap_or(0),
                "samples" => samples = v.parse().unwrap_or(1),
                _ => {}
            }
        }
        nodes.push(TreeNode {
            span,
            score: ImportanceScore { value, method, samples, std_error, window },
            children: None,
        });
        let idx = nodes.len() - 1;

        while let Some(&(d, _)) = stack.last() {
            if d >= depth {
                stack.pop();
            } else {
                break;
            }
        }
        if let Some(&(_, parent)) = stack.last() {
            match nodes[parent].children {
                None => nodes[parent].children = Some((idx, idx)),
                Some((l, r)) if l == r => nodes[parent].children = Some((l, idx)),
                Some(_) => {
                    return Err(Error::Parse { row, msg: "node has more than two children".into() })
                }
            }
        } else if root.is_none() {
            root = Some(idx);
        } else {
            return Err(Error::Parse { row, msg: "multiple roots".into() });
        }
        stack.push((depth, idx));
    }

    let root = root.ok_or_else(|| Error::Schema("tree file has no nodes".into()))?;
    Ok((doc_id, tokens, ExplanationTree { nodes, root }))
}
