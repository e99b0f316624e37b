//! Corpus ingestion, splits, adversarial evaluation sets, and serialization.

pub mod lexicon;
pub mod synthetic;

use std::collections::{BTreeMap, HashSet};
use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seeds;
use lexicon::IdentifierLexicon;

/// Source domain of a document.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Domain {
    Gab,
    Stormfront,
    Adversarial,
    Synthetic,
}

impl std::fmt::Display for Domain {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Domain::Gab => "gab",
            Domain::Stormfront => "stormfront",
            Domain::Adversarial => "adversarial",
            Domain::Synthetic => "synthetic",
        };
        f.write_str(s)
    }
}

impl std::str::FromStr for Domain {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gab" => Ok(Domain::Gab),
            "stormfront" => Ok(Domain::Stormfront),
            "adversarial" => Ok(Domain::Adversarial),
            "synthetic" => Ok(Domain::Synthetic),
            other => Err(Error::Config(format!("unknown domain {other:?}"))),
        }
    }
}

/// Split membership of a corpus.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Validation,
    Test,
    None,
}

impl std::fmt::Display for Split {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Split::Train => "train",
            Split::Validation => "validation",
            Split::Test => "test",
            Split::None => "none",
        };
        f.write_str(s)
    }
}

impl std::str::FromStr for Split {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "validation" => Ok(Split::Validation),
            "test" => Ok(Split::Test),
            "none" => Ok(Split::None),
            other => Err(Error::Config(format!("unknown split {other:?}"))),
        }
    }
}

/// A labeled document. `label` is true for hate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Document {
    pub id: String,
    pub text: String,
    pub label: bool,
    pub domain: Domain,
    /// Target-population style markers, e.g. `target -> religion`.
    pub tags: BTreeMap<String, String>,
}

impl Document {
    pub fn new(id: impl Into<String>, text: impl Into<String>, label: bool, domain: Domain) -> Result<Self> {
        let text = text.into();
        if text.split_whitespace().next().is_none() {
            return Err(Error::Input("document text is empty after whitespace normalization".into()));
        }
        Ok(Document { id: id.into(), text, label, domain, tags: BTreeMap::new() })
    }

    pub fn with_tags(mut self, tags: BTreeMap<String, String>) -> Self {
        self.tags = tags;
        self
    }
}

/// Ordered collection of documents with unique ids.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledCorpus {
    documents: Vec<Document>,
    pub split: Split,
}

impl LabeledCorpus {
    pub fn new(documents: Vec<Document>, split: Split) -> Result<Self> {
        let mut seen = HashSet::new();
        for d in &documents {
            if !seen.insert(d.id.as_str()) {
                return Err(Error::Input(format!("duplicate document id {:?}", d.id)));
            }
        }
        Ok(LabeledCorpus { documents, split })
    }

    pub fn empty(split: Split) -> Self {
        LabeledCorpus { documents: Vec::new(), split }
    }

    pub fn len(&self) -> usize {
        self.documents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.documents.is_empty()
    }

    pub fn documents(&self) -> &[Document] {
        &self.documents
    }

    pub fn positives(&self) -> usize {
        self.documents.iter().filter(|d| d.label).count()
    }

    pub fn negatives(&self) -> usize {
        self.len() - self.positives()
    }

    /// Stable content hash for provenance records.
    pub fn hash(&self) -> String {
        let mut buf = String::new();
        for d in &self.documents {
            buf.push_str(&d.id);
            buf.push('\x1f');
            buf.push_str(if d.label { "1" } else { "0" });
            buf.push('\x1f');
            buf.push_str(&d.text);
            buf.push('\x1e');
        }
        seeds::content_hash(buf.as_bytes())
    }
}

fn split_header(line: &str) -> Vec<String> {
    line.split('\t').map(|s| s.trim().to_lowercase()).collect()
}

fn parse_tags(raw: &str) -> BTreeMap<String, String> {
    let mut tags = BTreeMap::new();
    for part in raw.split(';') {
        let part = part.trim();
        if part.is_empty() {
            continue;
        }
        match part.split_once('=') {
            Some((k, v)) => tags.insert(k.trim().to_string(), v.trim().to_string()),
            None => tags.insert(part.to_string(), String::new()),
        };
    }
    tags
}

fn parse_binary(field: &str, name: &str, row: usize) -> Result<bool> {
    match field.trim() {
        "0" => Ok(false),
        "1" => Ok(true),
        other => Err(Error::Parse {
            row,
            msg: format!("field {name:?} must be 0 or 1, got {other:?}"),
        }),
    }
}

/// Load a GHC-format file: tab-separated with a header naming at least
/// `text`, `hd`, `cv`; optional `id` and `tags` columns. The hate label is
/// the OR of the two rhetoric fields.
pub fn load_ghc(path: &Path) -> Result<LabeledCorpus> {
    let content = std::fs::read_to_string(path)?;
    load_ghc_str(&content)
}

pub fn load_ghc_str(content: &str) -> Result<LabeledCorpus> {
    let mut lines = content.lines().enumerate();
    let Some((_, header)) = lines.next() else {
        return LabeledCorpus::new(Vec::new(), Split::None);
    };
    let cols = split_header(header);
    let col = |name: &str| cols.iter().position(|c| c == name);
    let (Some(text_i), Some(hd_i), Some(cv_i)) = (col("text"), col("hd"), col("cv")) else {
        return Err(Error::Schema(format!(
            "GHC header must name text, hd, cv; got {cols:?}"
        )));
    };
    let id_i = col("id");
    let tags_i = col("tags");

    let mut docs = Vec::new();
    for (lineno, line) in lines {
        let row = lineno + 1;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() < cols.len() {
            return Err(Error::Parse {
                row,
                msg: format!("expected {} fields, got {}", cols.len(), fields.len()),
            });
        }
        let text = fields[text_i].trim();
        if text.is_empty() {
            return Err(Error::Parse { row, msg: "empty text field".into() });
        }
        let hd = parse_binary(fields[hd_i], "hd", row)?;
        let cv = parse_binary(fields[cv_i], "cv", row)?;
        let id = id_i
            .map(|i| fields[i].trim().to_string())
            .filter(|s| !s.is_empty())
            .unwrap_or_else(|| format!("ghc-{row:06}"));
        let mut doc = Document::new(id, text, hd || cv, Domain::Gab)
            .map_err(|e| Error::Parse { row, msg: e.to_string() })?;
        if let Some(i) = tags_i {
            doc.tags = parse_tags(fields[i]);
        }
        docs.push(doc);
    }
    LabeledCorpus::new(docs, Split::None)
}

/// Load a sentence-format file: tab-separated with a header naming `text`
/// and `label` (`0`/`1`, or `hate`/`nohate`); optional `id` column.
pub fn load_stormfront(path: &Path) -> Result<LabeledCorpus> {
    let content = std::fs::read_to_string(path)?;
    load_stormfront_str(&content)
}

pub fn load_stormfront_str(content: &str) -> Result<LabeledCorpus> {
    let mut lines = content.lines().enumerate();
    let Some((_, header)) = lines.next() else {
        return LabeledCorpus::new(Vec::new(), Split::None);
    };
    let cols = split_header(header);
    let col = |name: &str| cols.iter().position(|c| c == name);
    let (Some(text_i), Some(label_i)) = (col("text"), col("label")) else {
        return Err(Error::Schema(format!(
            "sentence header must name text, label; got {cols:?}"
        )));
    };
    let id_i = col("id");

    let mut docs = Vec::new();
    for (lineno, line) in lines {
        let row = lineno + 1;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() < cols.len() {
            return Err(Error::Parse {
                row,
                msg: format!("expected {} fields, got {}", cols.len(), fields.len()),
            });
        }
        let text = fields[text_i].trim();
        if text.is_empty() {
            return Err(Error::Parse { row, msg: "empty text field".into() });
        }
        let label = match fields[label_i].trim().to_lowercase().as_str() {
            "1" | "hate" => true,
            "0" | "nohate" => false,
            other => {
                return Err(Error::Parse {
                    row,
                    msg: format!("label must be 0/1 or hate/nohate, got {other:?}"),
                })
            }
        };
        let id = id_i
            .map(|i| fields[i].trim().to_string())
            .filter(|s| !s.is_empty())
            .unwrap_or_else(|| format!("stf-{row:06}"));
        docs.push(
            Document::new(id, text, label, Domain::Stormfront)
                .map_err(|e| Error::Parse { row, msg: e.to_string() })?,
        );
    }
    LabeledCorpus::new(docs, Split::None)
}

/// Deterministically partition a corpus into (first, second) where the first
/// split holds `ratio` of the documents. With `stratify_key`, per-tag-value
/// proportions in the second split match the corpus within ±1 document.
pub fn split_corpus(
    corpus: &LabeledCorpus,
    ratio: f64,
    seed: u64,
    stratify_key: Option<&str>,
) -> Result<(LabeledCorpus, LabeledCorpus)> {
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(Error::Config(format!("split ratio must be in (0, 1), got {ratio}")));
    }
    if let Some(key) = stratify_key {
        if !corpus.documents.iter().any(|d| d.tags.contains_key(key)) {
            return Err(Error::Config(format!(
                "stratify key {key:?} is absent from every document"
            )));
        }
    }

    let mut order: Vec<usize> = (0..corpus.len()).collect();
    order.shuffle(&mut seeds::stream_rng(seed, "split", 0));

    // group shuffled indices by stratum value (single stratum when unkeyed)
    let mut groups: BTreeMap<String, Vec<usize>> = BTreeMap::new();
    for &i in &order {
        let value = match stratify_key {
            Some(key) => corpus.documents[i]
                .tags
                .get(key)
                .cloned()
                .unwrap_or_else(|| "(untagged)".to_string()),
            None => String::new(),
        };
        groups.entry(value).or_default().push(i);
    }

    let mut second_set: HashSet<usize> = HashSet::new();
    for idxs in groups.values() {
        let n_first = (idxs.len() as f64 * ratio).round() as usize;
        for &i in idxs.iter().skip(n_first) {
            second_set.insert(i);
        }
    }

    let mut first = Vec::new();
    let mut second = Vec::new();
    for (i, d) in corpus.documents.iter().enumerate() {
        if second_set.contains(&i) {
            second.push(d.clone());
        } else {
            first.push(d.clone());
        }
    }
    Ok((
        LabeledCorpus::new(first, Split::Train)?,
        LabeledCorpus::new(second, Split::Test)?,
    ))
}

/// Per-term supply report from [`build_adversarial_corpus`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Shortfall {
    pub term: String,
    pub requested: usize,
    pub got: usize,
}

/// Result of building an adversarial set: the corpus plus any terms whose
/// quota could not be met.
#[derive(Debug, Clone)]
pub struct AdversarialBuild {
    pub corpus: LabeledCorpus,
    pub shortfalls: Vec<Shortfall>,
}

/// Draw a balanced, per-term random sample of identifier-containing documents
/// from a presumed non-hate source. Every selected document is relabeled
/// non-hate and tagged with the adversarial domain. Terms that cannot fill
/// their quota are reported, not failed.
pub fn build_adversarial_corpus(
    source: &[Document],
    lexicon: &IdentifierLexicon,
    per_term_quota: usize,
    seed: u64,
) -> Result<AdversarialBuild> {
    if per_term_quota == 0 {
        return Err(Error::Config("per-term quota must be at least 1".into()));
    }
    let terms = lexicon.sorted_terms();

    // candidate pool per term, in source order
    let mut pools: BTreeMap<&str, Vec<usize>> = terms.iter().map(|t| (t.as_str(), Vec::new())).collect();
    for (i, doc) in source.iter().enumerate() {
        for term in lexicon.terms_in(&doc.text) {
            if let Some(pool) = pools.get_mut(term.as_str()) {
                pool.push(i);
            }
        }
    }

    let mut used: HashSet<usize> = HashSet::new();
    let mut picked: Vec<usize> = Vec::new();
    let mut shortfalls = Vec::new();
    for (ti, term) in terms.iter().enumerate() {
        let mut pool = pools.remove(term.as_str()).unwrap_or_default();
        pool.shuffle(&mut seeds::stream_rng(seed, "adversarial", ti as u64));
        let mut got = 0;
        for i in pool {
            if got == per_term_quota {
                break;
            }
            if used.insert(i) {
                picked.push(i);
                got += 1;
            }
        }
        if got < per_term_quota {
            shortfalls.push(Shortfall { term: term.clone(), requested: per_term_quota, got });
        }
    }
    picked.sort_unstable();

    let docs: Vec<Document> = picked
        .into_iter()
        .map(|i| {
            let mut d = source[i].clone();
            d.label = false;
            d.domain = Domain::Adversarial;
            d
        })
        .collect();
    Ok(AdversarialBuild { corpus: LabeledCorpus::new(docs, Split::None)?, shortfalls })
}

fn escape_field(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '\\' => out.push_str("\\\\"),
            '\t' => out.push_str("\\t"),
            '\n' => out.push_str("\\n"),
            '\r' => out.push_str("\\r"),
            c => out.push(c),
        }
    }
    out
}

fn unescape_field(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    let mut chars = s.chars();
    while let Some(c) = chars.next() {
        if c != '\\' {
            out.push(c);
            continue;
        }
        match chars.next() {
            Some('t') => out.push('\t'),
            Some('n') => out.push('\n'),
            Some('r') => out.push('\r'),
            Some('\\') => out.push('\\'),
            Some(other) => {
                out.push('\\');
                out.push(other);
            }
            None => out.push('\\'),
        }
    }
    out
}

/// Serialize a corpus to the line-delimited record format:
/// a `# split = ...` line, a header row, then one tab-separated record per
/// document with tab/newline/backslash escapes in the text field.
pub fn write_corpus(corpus: &LabeledCorpus) -> String {
    let mut out = String::new();
    out.push_str("# contexthate corpus v1\n");
    out.push_str(&format!("# split = {}\n", corpus.split));
    out.push_str("id\tlabel\tdomain\ttext\ttags\n");
    for d in corpus.documents() {
        let tags = d
            .tags
            .iter()
            .map(|(k, v)| if v.is_empty() { k.clone() } else { format!("{k}={v}") })
            .collect::<Vec<_>>()
            .join(";");
        out.push_str(&format!(
            "{}\t{}\t{}\t{}\t{}\n",
            escape_field(&d.id),
            if d.label { 1 } else { 0 },
            d.domain,
            escape_field(&d.text),
            escape_field(&tags),
        ));
    }
    out
}

pub fn save_corpus(corpus: &LabeledCorpus, path: &Path) -> Result<()> {
    std::fs::write(path, write_corpus(corpus))?;
    Ok(())
}

/// Parse the corpus record format written by [`write_corpus`].
pub fn read_corpus(content: &str) -> Result<LabeledCorpus> {
    let mut split = Split::None;
    let mut docs = Vec::new();
    let mut header_seen = false;
    for (lineno, line) in content.lines().enumerate() {
        let row = lineno + 1;
        if line.starts_with('#') {
            if let Some(rest) = line.trim_start_matches('#').trim().strip_prefix("split") {
                if let Some(v) = rest.trim().strip_prefix('=') {
                    split = v.trim().parse()?;
                }
            }
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        if !header_seen {
            let cols = split_header(line);
            if cols != ["id", "label", "domain", "text", "tags"] {
                return Err(Error::Schema(format!(
                    "corpus header must be id/label/domain/text/tags, got {cols:?}"
                )));
            }
            header_seen = true;
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 5 {
            return Err(Error::Parse { row, msg: format!("expected 5 fields, got {}", fields.len()) });
        }
        let label = parse_binary(fields[1], "label", row)?;
        let domain: Domain = fields[2].trim().parse().map_err(|e: Error| Error::Parse {
            row,
            msg: e.to_string(),
        })?;
        let doc = Document::new(unescape_field(fields[0]), unescape_field(fields[3]), label, domain)
            .map_err(|e| Error::Parse { row, msg: e.to_string() })?
            .with_tags(parse_tags(&unescape_field(fields[4])));
        docs.push(doc);
    }
    LabeledCorpus::new(docs, split)
}

pub fn load_corpus(path: &Path) -> Result<LabeledCorpus> {
    let content = std::fs::read_to_string(path)?;
    read_corpus(&content)
}

/// Rank vocabulary terms of a trained bag-of-words model by positive-class
/// weight, for manual curation into an identifier lexicon. Ties break
/// lexicographically. `k` beyond the vocabulary returns the full ranking.
pub fn derive_lexicon_candidates(model: &crate::model::bow::BowClassifier, k: usize) -> Vec<(String, f64)> {
    model.top_features(k)
}
