//! Evaluation protocols: classification metrics, adversarial accuracy,
//! removal-tradeoff curves, rank-shift tables, cross-domain transfer, and
//! multi-run summaries.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::lexicon::IdentifierLexicon;
use crate::corpus::{Domain, LabeledCorpus};
use crate::error::{Error, Result};
use crate::explain::WordImportance;
use crate::model::bow::train_bow;
use crate::model::{score, TextClassifier, TrainingConfig};
use crate::regularize::remove_identifiers;
use crate::seeds;

/// Exact confusion counts with hate as the positive label.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
    pub tn: usize,
}

impl Confusion {
    pub fn precision_pct(&self) -> f64 {
        if self.tp + self.fp == 0 {
            0.0
        } else {
            100.0 * self.tp as f64 / (self.tp + self.fp) as f64
        }
    }

    pub fn recall_pct(&self) -> f64 {
        if self.tp + self.fn_ == 0 {
            0.0
        } else {
            100.0 * self.tp as f64 / (self.tp + self.fn_) as f64
        }
    }

    pub fn f1_pct(&self) -> f64 {
        let p = self.precision_pct();
        let r = self.recall_pct();
        if p + r > 0.0 {
            2.0 * p * r / (p + r)
        } else {
            0.0
        }
    }
}

/// Evaluation results, traceable to exact corpora via content hashes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// Fraction of adversarial documents predicted non-hate, as a percentage.
    pub nyt_accuracy: Option<f64>,
    pub n_test: usize,
    pub n_adversarial: usize,
    pub run_seed: u64,
    pub confusion: Confusion,
    pub test_hash: String,
    pub adversarial_hash: Option<String>,
    pub train_domain: Option<Domain>,
    pub eval_domain: Option<Domain>,
}

/// Domain of a corpus when all documents agree on one.
pub fn corpus_domain(corpus: &LabeledCorpus) -> Option<Domain> {
    let mut docs = corpus.documents().iter();
    let first = docs.next()?.domain;
    docs.all(|d| d.domain == first).then_some(first)
}

/// Precision, recall, F1 from exact confusion counts on a test corpus.
pub fn classification_metrics(
    classifier: &dyn TextClassifier,
    test: &LabeledCorpus,
    run_seed: u64,
) -> Result<MetricsReport> {
    if test.is_empty() {
        return Err(Error::Input("test corpus is empty".into()));
    }
    let mut confusion = Confusion::default();
    for d in test.documents() {
        let pred = score(classifier, &d.text)?.scores.predicts_hate();
        match (pred, d.label) {
            (true, true) => confusion.tp += 1,
            (true, false) => confusion.fp += 1,
            (false, true) => confusion.fn_ += 1,
            (false, false) => confusion.tn += 1,
        }
    }
    Ok(MetricsReport {
        precision: confusion.precision_pct(),
        recall: confusion.recall_pct(),
        f1: confusion.f1_pct(),
        nyt_accuracy: None,
        n_test: test.len(),
        n_adversarial: 0,
        run_seed,
        confusion,
        test_hash: test.hash(),
        adversarial_hash: None,
        train_domain: classifier.train_domain(),
        eval_domain: corpus_domain(test),
    })
}

/// Percentage of adversarial documents predicted non-hate. The corpus must
/// be all-negative; a positive label is a purity violation.
pub fn adversarial_accuracy(
    classifier: &dyn TextClassifier,
    adversarial: &LabeledCorpus,
) -> Result<f64> {
    if adversarial.is_empty() {
        return Err(Error::Input("adversarial corpus is empty".into()));
    }
    if let Some(d) = adversarial.documents().iter().find(|d| d.label) {
        return Err(Error::Input(format!(
            "adversarial corpus purity violated: document {:?} is labeled hate",
            d.id
        )));
    }
    let mut correct = 0usize;
    for d in adversarial.documents() {
        if !score(classifier, &d.text)?.scores.predicts_hate() {
            correct += 1;
        }
    }
    Ok(100.0 * correct as f64 / adversarial.len() as f64)
}

/// Metrics plus adversarial accuracy in one report.
pub fn evaluate(
    classifier: &dyn TextClassifier,
    test: &LabeledCorpus,
    adversarial: Option<&LabeledCorpus>,
    run_seed: u64,
) -> Result<MetricsReport> {
    let mut report = classification_metrics(classifier, test, run_seed)?;
    if let Some(adv) = adversarial {
        report.nyt_accuracy = Some(adversarial_accuracy(classifier, adv)?);
        report.n_adversarial = adv.len();
        report.adversarial_hash = Some(adv.hash());
    }
    Ok(report)
}

/// Same computation as [`classification_metrics`] with a same-domain warning
/// when the classifier is evaluated on its own training domain.
pub fn cross_domain_eval(
    classifier: &dyn TextClassifier,
    foreign_test: &LabeledCorpus,
    run_seed: u64,
) -> Result<(MetricsReport, bool)> {
    let report = classification_metrics(classifier, foreign_test, run_seed)?;
    let same_domain = match (report.train_domain, report.eval_domain) {
        (Some(a), Some(b)) => a == b,
        _ => false,
    };
    Ok((report, same_domain))
}

/// One retrained point on the removal-tradeoff curve.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TradeoffRun {
    pub subset: Vec<String>,
    pub f1: f64,
    pub adv_accuracy: f64,
}

/// Mean metrics at one removal size.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TradeoffPoint {
    pub k: usize,
    pub mean_f1: f64,
    pub mean_adv_accuracy: f64,
    pub runs: Vec<TradeoffRun>,
}

/// Retrain a model with random identifier subsets of each size removed from
/// train, test, and adversarial text, and report per-size means. Subsets and
/// results are deterministic in the seed. The default experiment retrains
/// the bag-of-words model; [`removal_tradeoff_with`] accepts any trainer for
/// the compute-heavier variants.
#[allow(clippy::too_many_arguments)]
pub fn removal_tradeoff(
    train: &LabeledCorpus,
    test: &LabeledCorpus,
    adversarial: &LabeledCorpus,
    lexicon: &IdentifierLexicon,
    max_size: usize,
    repeats: usize,
    seed: u64,
    bow_config: &TrainingConfig,
) -> Result<Vec<TradeoffPoint>> {
    removal_tradeoff_with(train, test, adversarial, lexicon, max_size, repeats, seed, &|t, _| {
        Ok(Box::new(train_bow(t, bow_config)?))
    })
}

/// Per-point retraining closure: subset-removed train corpus plus the
/// subset lexicon (absent at k = 0).
pub type TradeoffTrainer<'a> =
    dyn Fn(&LabeledCorpus, Option<&IdentifierLexicon>) -> Result<Box<dyn TextClassifier>> + Sync + 'a;

/// [`removal_tradeoff`] with a custom per-point trainer. The trainer
/// receives the subset-removed training corpus and the subset lexicon (for
/// applying the same removal to any validation data it holds); the subset is
/// `None` at k = 0.
#[allow(clippy::too_many_arguments)]
pub fn removal_tradeoff_with(
    train: &LabeledCorpus,
    test: &LabeledCorpus,
    adversarial: &LabeledCorpus,
    lexicon: &IdentifierLexicon,
    max_size: usize,
    repeats: usize,
    seed: u64,
    trainer: &TradeoffTrainer<'_>,
) -> Result<Vec<TradeoffPoint>> {
    if max_size > lexicon.len() {
        return Err(Error::Config(format!(
            "max_size {max_size} exceeds lexicon size {}",
            lexicon.len()
        )));
    }
    if repeats == 0 {
        return Err(Error::Config("repeats must be at least 1".into()));
    }
    let terms = lexicon.sorted_terms();

    let jobs: Vec<(usize, usize)> = (0..=max_size)
        .flat_map(|k| (0..repeats).map(move |r| (k, r)))
        .collect();

    let runs: Result<Vec<(usize, TradeoffRun)>> = jobs
        .par_iter()
        .map(|&(k, r)| {
            let mut pool = terms.clone();
            use rand::seq::SliceRandom;
            pool.shuffle(&mut seeds::stream_rng(seed, "tradeoff-subset", (k * 10_000 + r) as u64));
            let subset: Vec<String> = pool.into_iter().take(k).collect();

            let (train_k, test_k, adv_k, sub) = if k == 0 {
                (train.clone(), test.clone(), adversarial.clone(), None)
            } else {
                let sub = lexicon.subset(&subset, format!("subset-{k}-{r}"))?;
                (
                    remove_identifiers(train, &sub).0,
                    remove_identifiers(test, &sub).0,
                    remove_identifiers(adversarial, &sub).0,
                    Some(sub),
                )
            };
            let model = trainer(&train_k, sub.as_ref())?;
            let f1 = classification_metrics(model.as_ref(), &test_k, seed)?.f1;
            let adv_accuracy = adversarial_accuracy(model.as_ref(), &adv_k)?;
            let mut sorted_subset = subset;
            sorted_subset.sort_unstable();
            Ok((k, TradeoffRun { subset: sorted_subset, f1, adv_accuracy }))
        })
        .collect();
    let runs = runs?;

    let mut points = Vec::with_capacity(max_size + 1);
    for k in 0..=max_size {
        let at_k: Vec<TradeoffRun> =
            runs.iter().filter(|(rk, _)| *rk == k).map(|(_, r)| r.clone()).collect();
        let n = at_k.len() as f64;
        points.push(TradeoffPoint {
            k,
            mean_f1: at_k.iter().map(|r| r.f1).sum::<f64>() / n,
            mean_adv_accuracy: at_k.iter().map(|r| r.adv_accuracy).sum::<f64>() / n,
            runs: at_k,
        });
    }
    Ok(points)
}

/// Spearman rank correlation with average ranks for ties.
pub fn spearman(xs: &[f64], ys: &[f64]) -> f64 {
    assert_eq!(xs.len(), ys.len());
    let rx = average_ranks(xs);
    let ry = average_ranks(ys);
    pearson(&rx, &ry)
}

fn average_ranks(values: &[f64]) -> Vec<f64> {
    let n = values.len();
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&a, &b| values[a].partial_cmp(&values[b]).unwrap_or(std::cmp::Ordering::Equal));
    let mut ranks = vec![0.0; n];
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && values[idx[j + 1]] == values[idx[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            ranks[k] = avg;
        }
        i = j + 1;
    }
    ranks
}

fn pearson(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let mut cov = 0.0;
    let mut vx = 0.0;
    let mut vy = 0.0;
    for (x, y) in xs.iter().zip(ys) {
        cov += (x - mx) * (y - my);
        vx += (x - mx) * (x - mx);
        vy += (y - my) * (y - my);
    }
    if vx == 0.0 || vy == 0.0 {
        return 0.0;
    }
    cov / (vx * vy).sqrt()
}

/// One row of a rank-shift table. `delta_rank = rank_before − rank_after`;
/// positive means the word rose under regularization.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RankShiftRow {
    pub word: String,
    pub mean_before: Option<f64>,
    pub mean_after: Option<f64>,
    pub rank_before: Option<usize>,
    pub rank_after: Option<usize>,
    pub delta_rank: Option<i64>,
    pub lexicon_term: bool,
}

/// Top-k rows of the before and after rankings with rank deltas.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RankShiftReport {
    pub before_top: Vec<RankShiftRow>,
    pub after_top: Vec<RankShiftRow>,
}

fn rank_of(ranking: &[WordImportance], word: &str) -> Option<(usize, f64)> {
    ranking
        .iter()
        .position(|w| w.word == word)
        .map(|i| (i + 1, ranking[i].mean))
}

fn shift_rows(
    top_of: &[WordImportance],
    other: &[WordImportance],
    lexicon: &IdentifierLexicon,
    k: usize,
    top_is_before: bool,
) -> Vec<RankShiftRow> {
    top_of
        .iter()
        .take(k)
        .enumerate()
        .map(|(i, w)| {
            let own = (i + 1, w.mean);
            let cross = rank_of(other, &w.word);
            let (rank_before, mean_before, rank_after, mean_after) = if top_is_before {
                (Some(own.0), Some(own.1), cross.map(|c| c.0), cross.map(|c| c.1))
            } else {
                (cross.map(|c| c.0), cross.map(|c| c.1), Some(own.0), Some(own.1))
            };
            let delta_rank = match (rank_before, rank_after) {
                (Some(b), Some(a)) => Some(b as i64 - a as i64),
                _ => None,
            };
            RankShiftRow {
                word: w.word.clone(),
                mean_before,
                mean_after,
                rank_before,
                rank_after,
                delta_rank,
                lexicon_term: lexicon.contains(&w.word),
            }
        })
        .collect()
}

/// Compare two full word rankings over the same corpus and explainer
/// settings. Words absent from the other ranking are marked unranked
/// (`delta_rank` empty).
pub fn rank_shift_report(
    before: &[WordImportance],
    after: &[WordImportance],
    lexicon: &IdentifierLexicon,
    k: usize,
) -> RankShiftReport {
    RankShiftReport {
        before_top: shift_rows(before, after, lexicon, k, true),
        after_top: shift_rows(after, before, lexicon, k, false),
    }
}

/// Mean and sample standard deviation (n − 1).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SummaryStat {
    pub mean: f64,
    pub std: f64,
}

fn summarize(values: &[f64]) -> SummaryStat {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    SummaryStat { mean, std: var.sqrt() }
}

/// Mean ± std of each metric across runs.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetricsSummary {
    pub runs: usize,
    pub precision: SummaryStat,
    pub recall: SummaryStat,
    pub f1: SummaryStat,
    pub nyt_accuracy: Option<SummaryStat>,
}

/// Summarize at least two runs. Order-independent.
pub fn multi_run_summary(reports: &[MetricsReport]) -> Result<MetricsSummary> {
    if reports.len() < 2 {
        return Err(Error::Config(format!(
            "multi-run summary needs at least 2 runs, got {}",
            reports.len()
        )));
    }
    let collect = |f: fn(&MetricsReport) -> f64| -> Vec<f64> { reports.iter().map(f).collect() };
    let nyt: Vec<f64> = reports.iter().filter_map(|r| r.nyt_accuracy).collect();
    Ok(MetricsSummary {
        runs: reports.len(),
        precision: summarize(&collect(|r| r.precision)),
        recall: summarize(&collect(|r| r.recall)),
        f1: summarize(&collect(|r| r.f1)),
        nyt_accuracy: if nyt.len() == reports.len() { Some(summarize(&nyt)) } else { None },
    })
}

/// Seeds for a multi-run experiment: base seed plus the run index.
pub fn run_seeds(base: u64, runs: usize) -> Vec<u64> {
    (0..runs as u64).map(|i| base + i).collect()
}

// ---- formatted reports ----------------------------------------------------

/// TSV header for machine-readable metrics records.
pub fn metrics_tsv_header() -> &'static str {
    "label\tprecision\trecall\tf1\tnyt_accuracy\tn_test\tn_adversarial\ttp\tfp\tfn\ttn\trun_seed\ttest_hash\tadversarial_hash"
}

pub fn metrics_tsv_row(label: &str, r: &MetricsReport) -> String {
    format!(
        "{label}\t{:.4}\t{:.4}\t{:.4}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
        r.precision,
        r.recall,
        r.f1,
        r.nyt_accuracy.map_or(String::from("-"), |v| format!("{v:.4}")),
        r.n_test,
        r.n_adversarial,
        r.confusion.tp,
        r.confusion.fp,
        r.confusion.fn_,
        r.confusion.tn,
        r.run_seed,
        r.test_hash,
        r.adversarial_hash.as_deref().unwrap_or("-"),
    )
}

/// Metrics table in the layout of the in-domain results table.
pub fn render_metrics_table(rows: &[(String, MetricsReport)]) -> String {
    let mut out = String::new();
    out.push_str(&format!(
        "{:<24} {:>10} {:>10} {:>10} {:>10}\n",
        "Method", "Precision", "Recall", "F1", "NYT Acc."
    ));
    out.push_str(&"-".repeat(68));
    out.push('\n');
    for (label, r) in rows {
        out.push_str(&format!(
            "{:<24} {:>10.2} {:>10.2} {:>10.2} {:>10}\n",
            label,
            r.precision,
            r.recall,
            r.f1,
            r.nyt_accuracy.map_or(String::from("-"), |v| format!("{v:.2}")),
        ));
    }
    out
}

/// Summary table with mean ± std entries.
pub fn render_summary_table(rows: &[(String, MetricsSummary)]) -> String {
    let cell = |s: &SummaryStat| format!("{:.2} ± {:.1}", s.mean, s.std);
    let mut out = String::new();
    out.push_str(&format!(
        "{:<24} {:>16} {:>16} {:>16} {:>16}\n",
        "Method", "Precision", "Recall", "F1", "NYT Acc."
    ));
    out.push_str(&"-".repeat(92));
    out.push('\n');
    for (label, s) in rows {
        out.push_str(&format!(
            "{:<24} {:>16} {:>16} {:>16} {:>16}\n",
            label,
            cell(&s.precision),
            cell(&s.recall),
            cell(&s.f1),
            s.nyt_accuracy.as_ref().map_or(String::from("-"), cell),
        ));
    }
    out
}

/// Two-column rank-shift table: top words before, top words after, each with
/// its rank delta. Lexicon terms are marked with `*`.
pub fn render_rank_shift(report: &RankShiftReport) -> String {
    let fmt_delta = |d: Option<i64>| match d {
        Some(d) if d > 0 => format!("+{d}"),
        Some(d) => format!("{d}"),
        None => "unranked".to_string(),
    };
    let mark = |row: &RankShiftRow| if row.lexicon_term { "*" } else { "" };
    let mut out = String::new();
    out.push_str(&format!(
        "{:<20} {:>9}   {:<20} {:>9}\n",
        "Before", "ΔRank", "After", "ΔRank"
    ));
    out.push_str(&"-".repeat(62));
    out.push('\n');
    let n = report.before_top.len().max(report.after_top.len());
    for i in 0..n {
        let left = report.before_top.get(i);
        let right = report.after_top.get(i);
        out.push_str(&format!(
            "{:<20} {:>9}   {:<20} {:>9}\n",
            left.map_or(String::new(), |r| format!("{}{}", r.word, mark(r))),
            left.map_or(String::new(), |r| fmt_delta(r.delta_rank)),
            right.map_or(String::new(), |r| format!("{}{}", r.word, mark(r))),
            right.map_or(String::new(), |r| fmt_delta(r.delta_rank)),
        ));
    }
    out
}

/// Tradeoff curve as line-delimited records.
pub fn tradeoff_tsv(points: &[TradeoffPoint]) -> String {
    let mut out = String::from("k\trepeat\tf1\tadv_accuracy\tsubset\n");
    for p in points {
        for (r, run) in p.runs.iter().enumerate() {
            out.push_str(&format!(
                "{}\t{}\t{:.4}\t{:.4}\t{}\n",
                p.k,
                r,
                run.f1,
                run.adv_accuracy,
                run.subset.join(",")
            ));
        }
    }
    out.push_str("# per-size means\n");
    out.push_str("k\tmean_f1\tmean_adv_accuracy\n");
    for p in points {
        out.push_str(&format!("{}\t{:.4}\t{:.4}\n", p.k, p.mean_f1, p.mean_adv_accuracy));
    }
    out
}
