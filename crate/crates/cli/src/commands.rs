//! Implementations of the five subcommands.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};

use contexthate::audit::{
    self, cross_domain_eval, metrics_tsv_header, metrics_tsv_row, multi_run_summary,
    removal_tradeoff, render_metrics_table, render_rank_shift, render_summary_table, tradeoff_tsv,
    Confusion, MetricsReport,
};
use contexthate::corpus::lexicon::{load_lexicon, IdentifierLexicon};
use contexthate::corpus::synthetic::{biased_corpus, identifier_only_corpus, BiasedSpec};
use contexthate::corpus::{
    build_adversarial_corpus, load_corpus, load_ghc, load_stormfront, save_corpus, split_corpus,
    LabeledCorpus, Split,
};
use contexthate::explain::{
    hierarchical_explanation, render_tree, word_importances, ExplainParams, ExplanationTree,
    Method,
};
use contexthate::kv::KvDoc;
use contexthate::lm_sampler::{ContextSampler, MarkovLm, MarkovSampler};
use contexthate::model::bow::train_bow;
use contexthate::model::checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, ClassifierKind};
use contexthate::model::trainer::{init_transformer, train_transformer, TrainLog};
use contexthate::model::{ModelKind, RegMethod, TextClassifier, TrainingConfig};
use contexthate::regularize::{remove_identifiers, train_regularized};

use crate::manifest::{write_output, RunManifest};
use crate::render::render_report;
use crate::{AuditArgs, ExplainArgs, IngestArgs, SummarizeArgs, TrainArgs};

// ---- ingest ---------------------------------------------------------------

pub fn ingest(args: IngestArgs) -> Result<()> {
    let mut manifest = RunManifest::new("ingest");
    manifest.set("seed", args.seed);
    std::fs::create_dir_all(&args.out_dir)?;

    if let Some(kind) = &args.synthetic {
        if kind != "biased" {
            bail!("unknown synthetic generator {kind:?}; available: biased");
        }
        ingest_synthetic(&args, &mut manifest)?;
        return manifest.write(&args.out_dir);
    }

    if args.adversarial {
        let source_path = args.source.as_ref().context("--adversarial needs --source")?;
        let lexicon_name = args.lexicon.as_deref().context("--adversarial needs --lexicon")?;
        let source = load_corpus(source_path)?;
        let lexicon = load_lexicon(lexicon_name)?;
        manifest.set("lexicon", lexicon.name());
        manifest.set("lexicon_hash", lexicon.hash());
        manifest.set("source_hash", source.hash());

        let build =
            build_adversarial_corpus(source.documents(), &lexicon, args.quota, args.seed)?;
        if !build.shortfalls.is_empty() {
            let mut report = String::from("term\trequested\tgot\n");
            for s in &build.shortfalls {
                eprintln!(
                    "warning: term {:?} short of quota ({}/{})",
                    s.term, s.got, s.requested
                );
                report.push_str(&format!("{}\t{}\t{}\n", s.term, s.requested, s.got));
            }
            write_output(&mut manifest, &args.out_dir.join("shortfall.tsv"), &report)?;
        }
        let out = args.out_dir.join("adversarial.tsv");
        save_corpus(&build.corpus, &out)?;
        manifest.output(&out);
        manifest.set("adversarial_hash", build.corpus.hash());
        manifest.set("n_documents", build.corpus.len());
        println!("adversarial corpus: {} documents", build.corpus.len());
        return manifest.write(&args.out_dir);
    }

    let format = args.format.as_deref().context("--format, --synthetic, or --adversarial required")?;
    let input = args.input.as_ref().context("--format needs --input")?;
    let corpus = match format {
        "ghc" => load_ghc(input)?,
        "sentence" => load_stormfront(input)?,
        "corpus" => load_corpus(input)?,
        other => bail!("unknown format {other:?}; available: ghc, sentence, corpus"),
    };
    manifest.set("input", input.display());
    manifest.set("input_format", format);
    if corpus.is_empty() {
        eprintln!("warning: input produced an empty corpus");
    }
    println!("loaded {} documents ({} hate)", corpus.len(), corpus.positives());

    match args.split {
        Some(ratio) => {
            let (first, second) = split_corpus(&corpus, ratio, args.seed, args.stratify.as_deref())?;
            let train_path = args.out_dir.join("train.tsv");
            let test_path = args.out_dir.join("test.tsv");
            save_corpus(&first, &train_path)?;
            save_corpus(&second, &test_path)?;
            manifest.output(&train_path);
            manifest.output(&test_path);
            manifest.set("split_ratio", ratio);
            manifest.set("train_hash", first.hash());
            manifest.set("test_hash", second.hash());
            if let Some(key) = &args.stratify {
                manifest.set("stratify", key);
            }
            println!("split into {} train / {} test", first.len(), second.len());
        }
        None => {
            let out = args.out_dir.join("corpus.tsv");
            save_corpus(&corpus, &out)?;
            manifest.output(&out);
            manifest.set("corpus_hash", corpus.hash());
        }
    }
    manifest.write(&args.out_dir)
}

fn ingest_synthetic(args: &IngestArgs, manifest: &mut RunManifest) -> Result<()> {
    let spec = BiasedSpec::default();
    let seed = args.seed;
    let sets = [
        ("train.tsv", biased_corpus(&spec, 1600, seed, "tr", Split::Train)?),
        ("val.tsv", biased_corpus(&spec, 300, seed ^ 0x5151, "va", Split::Validation)?),
        ("test.tsv", biased_corpus(&spec, 400, seed ^ 0xa3a3, "te", Split::Test)?),
        ("adversarial.tsv", identifier_only_corpus(&spec, 400, seed ^ 0xc7c7, "adv")?),
    ];
    for (name, corpus) in &sets {
        let path = args.out_dir.join(name);
        save_corpus(corpus, &path)?;
        manifest.output(&path);
        manifest.set(&format!("hash.{name}"), corpus.hash());
        println!("{name}: {} documents ({} hate)", corpus.len(), corpus.positives());
    }
    let lexicon = spec.lexicon();
    let lex_path = args.out_dir.join("lexicon.txt");
    write_output(manifest, &lex_path, &(lexicon.sorted_terms().join("\n") + "\n"))?;
    manifest.set("lexicon_hash", lexicon.hash());
    let lm_path = args.out_dir.join("context_lm.txt");
    write_output(manifest, &lm_path, &spec.context_lm().render())?;
    Ok(())
}

// ---- train ----------------------------------------------------------------

/// Resolve a pretrained-encoder path, consulting the weights cache directory
/// from CONTEXTHATE_WEIGHTS_CACHE when the literal path does not exist.
fn resolve_pretrained(config: &mut TrainingConfig) {
    if let Some(p) = &config.encoder_pretrained {
        if !p.is_dir() {
            if let Some(cache) = std::env::var_os("CONTEXTHATE_WEIGHTS_CACHE") {
                let candidate = PathBuf::from(cache).join(p);
                if candidate.is_dir() {
                    config.encoder_pretrained = Some(candidate);
                }
            }
        }
    }
}

fn write_train_log(manifest: &mut RunManifest, out_dir: &Path, log: &TrainLog) -> Result<()> {
    let mut losses = String::from("step\ttask_loss\tpenalty\talpha\ttotal\n");
    for (i, l) in log.batch_losses.iter().enumerate() {
        losses.push_str(&format!(
            "{}\t{}\t{}\t{}\t{}\n",
            i + 1,
            l.task_loss,
            l.penalty,
            l.alpha,
            l.total
        ));
    }
    write_output(manifest, &out_dir.join("losses.tsv"), &losses)?;
    let mut evals = String::from("step\tval_f1\tlr\n");
    for e in &log.evals {
        evals.push_str(&format!("{}\t{}\t{}\n", e.step, e.f1, e.lr));
    }
    write_output(manifest, &out_dir.join("evals.tsv"), &evals)?;
    Ok(())
}

pub fn train(args: TrainArgs) -> Result<()> {
    let mut manifest = RunManifest::new("train");
    let kv = KvDoc::load(&args.config)?;
    let mut config = TrainingConfig::from_kv(&kv)?;
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    resolve_pretrained(&mut config);
    let config_kv = config.to_kv();
    for key in config_kv.keys() {
        manifest.set(&format!("config.{key}"), config_kv.get(key).unwrap_or_default());
    }

    let train_corpus = load_corpus(&args.train)?;
    manifest.set("train_hash", train_corpus.hash());

    let lexicon = args.lexicon.as_deref().map(load_lexicon).transpose()?;
    if let Some(lex) = &lexicon {
        manifest.set("lexicon", lex.name());
        manifest.set("lexicon_hash", lex.hash());
    }
    let lm = args.lm.as_ref().map(|p| MarkovLm::load(p)).transpose()?;
    if let Some(p) = &args.lm {
        manifest.set("context_lm", p.display());
    }

    let mut extras: Vec<(String, String)> = Vec::new();
    if let Some(lex) = &lexicon {
        extras.push(("lexicon".into(), lex.name().to_string()));
        extras.push(("lexicon_hash".into(), lex.hash()));
    }

    let model = match config.model {
        ModelKind::Bow => {
            let effective_train = match config.reg_method {
                RegMethod::WordRemoval => {
                    let lex = lexicon
                        .as_ref()
                        .context("reg_method word_removal needs --lexicon")?;
                    let (removed, stats) = remove_identifiers(&train_corpus, lex);
                    record_removal(&mut extras, lex, &stats);
                    removed
                }
                RegMethod::None => train_corpus.clone(),
                other => bail!("bag-of-words training does not support reg_method {other}"),
            };
            ClassifierKind::Bow(train_bow(&effective_train, &config)?)
        }
        ModelKind::Transformer => {
            let val_path = args.val.as_ref().context("transformer training needs --val")?;
            let val_corpus = load_corpus(val_path)?;
            manifest.set("val_hash", val_corpus.hash());

            let (model, log) = match config.reg_method {
                RegMethod::None => train_transformer(&train_corpus, &val_corpus, &config)?,
                RegMethod::WordRemoval => {
                    let lex = lexicon
                        .as_ref()
                        .context("reg_method word_removal needs --lexicon")?;
                    let (train_r, stats) = remove_identifiers(&train_corpus, lex);
                    let (val_r, _) = remove_identifiers(&val_corpus, lex);
                    record_removal(&mut extras, lex, &stats);
                    train_transformer(&train_r, &val_r, &config)?
                }
                RegMethod::Oc | RegMethod::Soc => {
                    let lex = lexicon
                        .as_ref()
                        .context("penalty regularization needs --lexicon")?;
                    let sampler = match config.reg_method {
                        RegMethod::Soc => {
                            let lm = lm.as_ref().context("soc regularization needs --lm")?;
                            // bind against the tokenizer the trainer will build
                            let probe = init_transformer(&train_corpus, &config)?;
                            let bound = lm.bind(probe.tokenizer())?;
                            Some(bound)
                        }
                        _ => None,
                    };
                    train_regularized(
                        &train_corpus,
                        &val_corpus,
                        &config,
                        lex,
                        sampler.as_ref().map(|s| s as &dyn ContextSampler),
                    )?
                }
            };
            write_train_log(&mut manifest, &args.out_dir, &log)?;
            manifest.set("steps", log.steps);
            manifest.set("lr_values_used", log.lr_values.len());
            if let Some(e) = log.evals.last() {
                manifest.set("final_val_f1", format!("{:.4}", e.f1));
            }
            ClassifierKind::Transformer(model)
        }
    };

    let ck_dir = args.out_dir.join("checkpoint");
    save_checkpoint(&ck_dir, &model, &config, &extras)?;
    manifest.output(&ck_dir.join("manifest.txt"));
    manifest.output(&ck_dir.join("weights.json"));
    manifest.output(&ck_dir.join("vocab.txt"));
    println!("checkpoint written to {}", ck_dir.display());
    manifest.write(&args.out_dir)
}

fn record_removal(
    extras: &mut Vec<(String, String)>,
    lex: &IdentifierLexicon,
    stats: &contexthate::regularize::RemovalStats,
) {
    extras.push(("word_removal.terms".into(), lex.sorted_terms().join(" ")));
    extras.push(("word_removal.words_removed".into(), stats.words_removed.to_string()));
    extras.push(("word_removal.docs_touched".into(), stats.docs_touched.to_string()));
    extras.push(("word_removal.docs_emptied".into(), stats.docs_emptied.to_string()));
}

// ---- explain ----------------------------------------------------------------

fn read_documents(args: &ExplainArgs) -> Result<Vec<(String, String)>> {
    if let Some(path) = &args.corpus {
        let corpus = load_corpus(path)?;
        return Ok(corpus
            .documents()
            .iter()
            .map(|d| (d.id.clone(), d.text.clone()))
            .collect());
    }
    let path = args.input.as_ref().context("--input or --corpus required")?;
    let content = std::fs::read_to_string(path)?;
    Ok(content
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| (format!("input-{:04}", i + 1), l.to_string()))
        .collect())
}

struct Explainer<'a> {
    classifier: &'a dyn TextClassifier,
    sampler: Option<MarkovSampler>,
}

impl<'a> Explainer<'a> {
    fn build(
        checkpoint: &'a Checkpoint,
        method: Method,
        lm: Option<&MarkovLm>,
    ) -> Result<Self> {
        let classifier = checkpoint.model.as_text();
        let sampler = match method {
            Method::Soc => {
                let lm = lm.context("soc explanations need --lm")?;
                Some(lm.bind(classifier.tokenizer())?)
            }
            Method::Oc => None,
        };
        Ok(Explainer { classifier, sampler })
    }

    fn explain(
        &self,
        text: &str,
        params: &ExplainParams,
    ) -> Result<(Vec<String>, ExplanationTree)> {
        let (tokens, _) = self
            .classifier
            .tokenizer()
            .tokenize_truncated(text, self.classifier.max_tokens())?;
        let token_strs: Vec<String> = tokens
            .tokens
            .iter()
            .map(|&t| self.classifier.tokenizer().token_str(t).to_string())
            .collect();
        let tree = hierarchical_explanation(
            self.classifier,
            self.sampler.as_ref().map(|s| s as &dyn ContextSampler),
            &tokens,
            params,
        )?;
        Ok((token_strs, tree))
    }
}

pub fn explain(args: ExplainArgs) -> Result<()> {
    let mut manifest = RunManifest::new("explain");
    let method: Method = args.method.parse()?;
    let params = ExplainParams {
        method,
        window: args.window,
        samples: args.samples,
        seed: args.seed,
    };
    manifest.set("method", method);
    manifest.set("window", args.window);
    manifest.set("samples", args.samples);
    manifest.set("seed", args.seed);
    manifest.set("checkpoint", args.checkpoint.display());

    let lm = args.lm.as_ref().map(|p| MarkovLm::load(p)).transpose()?;
    let primary = load_checkpoint(&args.checkpoint)?;
    let explainer = Explainer::build(&primary, method, lm.as_ref())?;
    let compare_ck = args.compare.as_ref().map(|p| load_checkpoint(p)).transpose()?;
    let compare = compare_ck
        .as_ref()
        .map(|ck| Explainer::build(ck, method, lm.as_ref()))
        .transpose()?;

    let docs = read_documents(&args)?;
    if docs.is_empty() {
        eprintln!("warning: no documents to explain");
    }

    let mut dump =
        String::from("doc_id\tstart\tend\tmethod\tvalue\tstd_error\twindow\tsamples\tseed\n");
    let mut rendered = Vec::new();
    for (di, (id, text)) in docs.iter().enumerate() {
        let doc_params = ExplainParams {
            seed: contexthate::seeds::derive_seed(args.seed, "doc", di as u64),
            ..params
        };
        let (tokens, tree) = explainer.explain(text, &doc_params)?;
        for node in &tree.nodes {
            dump.push_str(&format!(
                "{id}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\n",
                node.span.start,
                node.span.end,
                node.score.method,
                node.score.value,
                node.score.std_error,
                node.score.window,
                node.score.samples,
                doc_params.seed,
            ));
        }
        let tree_path = args.out_dir.join("trees").join(format!("{id}.tree"));
        write_output(&mut manifest, &tree_path, &render_tree(&tree, id, &tokens))?;

        let after = match &compare {
            Some(c) => {
                let (_, t) = c.explain(text, &doc_params)?;
                let path = args.out_dir.join("trees-after").join(format!("{id}.tree"));
                write_output(&mut manifest, &path, &render_tree(&t, id, &tokens))?;
                Some(t)
            }
            None => None,
        };
        rendered.push((id.clone(), tokens, tree, after));
    }
    write_output(&mut manifest, &args.out_dir.join("explanations.tsv"), &dump)?;

    if args.render {
        let title = match &args.compare {
            Some(_) => "hierarchical explanations: before vs after",
            None => "hierarchical explanations",
        };
        let html = render_report(title, &rendered);
        write_output(&mut manifest, &args.out_dir.join("report.html"), &html)?;
    }
    println!("explained {} documents", rendered.len());
    manifest.write(&args.out_dir)
}

// ---- audit ------------------------------------------------------------------

/// Apply the word-removal baseline to evaluation text when the checkpoint
/// recorded it: the baseline removes terms from both training and testing
/// sentences.
fn apply_checkpoint_removal(ck: &Checkpoint, corpus: &LabeledCorpus) -> Result<LabeledCorpus> {
    match ck.manifest.get("word_removal.terms") {
        Some(terms) => {
            let lex = IdentifierLexicon::new(
                "word-removal",
                terms.split_whitespace().map(|s| s.to_string()),
            )?;
            Ok(remove_identifiers(corpus, &lex).0)
        }
        None => Ok(corpus.clone()),
    }
}

pub fn audit(args: AuditArgs) -> Result<()> {
    let mut manifest = RunManifest::new("audit");
    manifest.set("seed", args.seed);

    if args.table2 {
        audit_table2(&args, &mut manifest)?;
    } else if args.rank_shift {
        audit_rank_shift(&args, &mut manifest)?;
    } else if args.tradeoff {
        audit_tradeoff(&args, &mut manifest)?;
    } else {
        audit_cross_domain(&args, &mut manifest)?;
    }
    manifest.write(&args.out_dir)
}

fn audit_table2(args: &AuditArgs, manifest: &mut RunManifest) -> Result<()> {
    let ck_path = args.checkpoint.as_ref().context("--table2 needs --checkpoint")?;
    let test_path = args.test.as_ref().context("--table2 needs --test")?;
    let ck = load_checkpoint(ck_path)?;
    let test = apply_checkpoint_removal(&ck, &load_corpus(test_path)?)?;
    let adversarial = match &args.adversarial {
        Some(p) => Some(apply_checkpoint_removal(&ck, &load_corpus(p)?)?),
        None => None,
    };

    let report = audit::evaluate(ck.model.as_text(), &test, adversarial.as_ref(), args.seed)?;
    let label = args.label.clone().unwrap_or_else(|| ck.model.kind_name().to_string());

    let tsv = format!("{}\n{}\n", metrics_tsv_header(), metrics_tsv_row(&label, &report));
    write_output(manifest, &args.out_dir.join("metrics.tsv"), &tsv)?;
    let table = render_metrics_table(&[(label, report)]);
    write_output(manifest, &args.out_dir.join("table2.txt"), &table)?;
    print!("{table}");
    Ok(())
}

fn explain_params_from(args: &AuditArgs) -> Result<ExplainParams> {
    Ok(ExplainParams {
        method: args.method.parse()?,
        window: args.window,
        samples: args.samples,
        seed: args.seed,
    })
}

fn ranking_for(
    ck: &Checkpoint,
    corpus: &LabeledCorpus,
    params: &ExplainParams,
    lm: Option<&MarkovLm>,
    min_occurrences: usize,
) -> Result<Vec<contexthate::explain::WordImportance>> {
    let classifier = ck.model.as_text_sync();
    let sampler = match params.method {
        Method::Soc => {
            let lm = lm.context("soc rankings need --lm")?;
            Some(lm.bind(classifier.tokenizer())?)
        }
        Method::Oc => None,
    };
    Ok(word_importances(
        classifier,
        sampler.as_ref().map(|s| s as &(dyn ContextSampler + Sync)),
        corpus,
        params,
        min_occurrences,
    )?)
}

fn ranking_tsv(ranking: &[contexthate::explain::WordImportance]) -> String {
    let mut out = String::from("rank\tword\tmean_importance\toccurrences\n");
    for (i, w) in ranking.iter().enumerate() {
        out.push_str(&format!("{}\t{}\t{}\t{}\n", i + 1, w.word, w.mean, w.occurrences));
    }
    out
}

fn audit_rank_shift(args: &AuditArgs, manifest: &mut RunManifest) -> Result<()> {
    let before_path = args.before.as_ref().context("--rank-shift needs --before")?;
    let after_path = args.after.as_ref().context("--rank-shift needs --after")?;
    let corpus_path = args.corpus.as_ref().context("--rank-shift needs --corpus")?;
    let lexicon = load_lexicon(args.lexicon.as_deref().unwrap_or("ghc25"))?;
    manifest.set("lexicon", lexicon.name());
    manifest.set("lexicon_hash", lexicon.hash());

    let corpus = load_corpus(corpus_path)?;
    manifest.set("corpus_hash", corpus.hash());
    let params = explain_params_from(args)?;
    let lm = args.lm.as_ref().map(|p| MarkovLm::load(p)).transpose()?;

    let before_ck = load_checkpoint(before_path)?;
    let after_ck = load_checkpoint(after_path)?;
    let before = ranking_for(&before_ck, &corpus, &params, lm.as_ref(), args.min_occurrences)?;
    let after = ranking_for(&after_ck, &corpus, &params, lm.as_ref(), args.min_occurrences)?;

    write_output(manifest, &args.out_dir.join("ranking_before.tsv"), &ranking_tsv(&before))?;
    write_output(manifest, &args.out_dir.join("ranking_after.tsv"), &ranking_tsv(&after))?;

    let report = audit::rank_shift_report(&before, &after, &lexicon, args.top);
    let mut tsv = String::from(
        "column\tword\tlexicon_term\trank_before\trank_after\tdelta_rank\tmean_before\tmean_after\n",
    );
    let cell = |v: Option<i64>| v.map_or(String::from("unranked"), |d| d.to_string());
    let optnum = |v: Option<f64>| v.map_or(String::from("-"), |d| d.to_string());
    let optrank = |v: Option<usize>| v.map_or(String::from("-"), |d| d.to_string());
    for (column, rows) in [("before", &report.before_top), ("after", &report.after_top)] {
        for r in rows {
            tsv.push_str(&format!(
                "{column}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\n",
                r.word,
                r.lexicon_term,
                optrank(r.rank_before),
                optrank(r.rank_after),
                cell(r.delta_rank),
                optnum(r.mean_before),
                optnum(r.mean_after),
            ));
        }
    }
    write_output(manifest, &args.out_dir.join("rank_shift.tsv"), &tsv)?;
    let table = render_rank_shift(&report);
    write_output(manifest, &args.out_dir.join("table3.txt"), &table)?;
    print!("{table}");
    Ok(())
}

fn audit_tradeoff(args: &AuditArgs, manifest: &mut RunManifest) -> Result<()> {
    let train_path = args.train.as_ref().context("--tradeoff needs --train")?;
    let test_path = args.test.as_ref().context("--tradeoff needs --test")?;
    let adv_path = args.adversarial.as_ref().context("--tradeoff needs --adversarial")?;
    let lexicon = load_lexicon(args.lexicon.as_deref().unwrap_or("ghc25"))?;
    manifest.set("lexicon", lexicon.name());
    manifest.set("lexicon_hash", lexicon.hash());

    let train = load_corpus(train_path)?;
    let test = load_corpus(test_path)?;
    let adversarial = load_corpus(adv_path)?;
    manifest.set("train_hash", train.hash());
    manifest.set("test_hash", test.hash());
    manifest.set("adversarial_hash", adversarial.hash());

    let points = match args.model.as_str() {
        "bow" => {
            let bow_config = match &args.bow_config {
                Some(p) => TrainingConfig::from_kv(&KvDoc::load(p)?)?,
                None => TrainingConfig::bow_default(),
            };
            removal_tradeoff(
                &train,
                &test,
                &adversarial,
                &lexicon,
                args.max_size,
                args.repeats,
                args.seed,
                &bow_config,
            )?
        }
        "transformer" => {
            let cfg_path = args
                .bow_config
                .as_ref()
                .context("--tradeoff --model transformer needs --bow-config (training config)")?;
            let config = TrainingConfig::from_kv(&KvDoc::load(cfg_path)?)?;
            let val_path = args
                .val
                .as_ref()
                .context("--tradeoff --model transformer needs --val")?;
            let val = load_corpus(val_path)?;
            contexthate::audit::removal_tradeoff_with(
                &train,
                &test,
                &adversarial,
                &lexicon,
                args.max_size,
                args.repeats,
                args.seed,
                &|train_k, subset| {
                    let val_k = match subset {
                        Some(sub) => remove_identifiers(&val, sub).0,
                        None => val.clone(),
                    };
                    let (model, _) = train_transformer(train_k, &val_k, &config)?;
                    Ok(Box::new(model))
                },
            )?
        }
        other => bail!("unknown tradeoff model {other:?}; available: bow, transformer"),
    };
    manifest.set("tradeoff_model", &args.model);
    write_output(manifest, &args.out_dir.join("tradeoff.tsv"), &tradeoff_tsv(&points))?;
    let ks: Vec<f64> = points.iter().map(|p| p.k as f64).collect();
    let f1s: Vec<f64> = points.iter().map(|p| p.mean_f1).collect();
    let advs: Vec<f64> = points.iter().map(|p| p.mean_adv_accuracy).collect();
    manifest.set("spearman_k_f1", format!("{:.4}", audit::spearman(&ks, &f1s)));
    manifest.set("spearman_k_adv", format!("{:.4}", audit::spearman(&ks, &advs)));
    for p in &points {
        println!("k={:2}  mean F1 {:6.2}  mean adversarial accuracy {:6.2}", p.k, p.mean_f1, p.mean_adv_accuracy);
    }
    Ok(())
}

fn audit_cross_domain(args: &AuditArgs, manifest: &mut RunManifest) -> Result<()> {
    let ck_path = args.checkpoint.as_ref().context("--cross-domain needs --checkpoint")?;
    let test_path = args.test.as_ref().context("--cross-domain needs --test")?;
    let ck = load_checkpoint(ck_path)?;
    let test = apply_checkpoint_removal(&ck, &load_corpus(test_path)?)?;
    let (report, same_domain) = cross_domain_eval(ck.model.as_text(), &test, args.seed)?;
    if same_domain {
        eprintln!("warning: classifier evaluated on its own training domain");
        manifest.set("same_domain_warning", true);
    }
    let label = args.label.clone().unwrap_or_else(|| {
        format!(
            "{} ({:?} -> {:?})",
            ck.model.kind_name(),
            report.train_domain,
            report.eval_domain
        )
    });
    let tsv = format!("{}\n{}\n", metrics_tsv_header(), metrics_tsv_row(&label, &report));
    write_output(manifest, &args.out_dir.join("cross_domain.tsv"), &tsv)?;
    let table = render_metrics_table(&[(label, report)]);
    write_output(manifest, &args.out_dir.join("table4.txt"), &table)?;
    print!("{table}");
    Ok(())
}

// ---- summarize ----------------------------------------------------------------

fn parse_metrics_tsv(content: &str) -> Result<Vec<MetricsReport>> {
    let mut out = Vec::new();
    for line in content.lines().skip(1) {
        if line.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split('\t').collect();
        if f.len() < 14 {
            bail!("metrics record has {} fields, expected 14", f.len());
        }
        let opt = |s: &str| if s == "-" { None } else { s.parse::<f64>().ok() };
        out.push(MetricsReport {
            precision: f[1].parse()?,
            recall: f[2].parse()?,
            f1: f[3].parse()?,
            nyt_accuracy: opt(f[4]),
            n_test: f[5].parse()?,
            n_adversarial: f[6].parse()?,
            confusion: Confusion {
                tp: f[7].parse()?,
                fp: f[8].parse()?,
                fn_: f[9].parse()?,
                tn: f[10].parse()?,
            },
            run_seed: f[11].parse()?,
            test_hash: f[12].to_string(),
            adversarial_hash: if f[13] == "-" { None } else { Some(f[13].to_string()) },
            train_domain: None,
            eval_domain: None,
        });
    }
    Ok(out)
}

pub fn summarize(args: SummarizeArgs) -> Result<()> {
    let mut manifest = RunManifest::new("summarize");
    let mut reports = Vec::new();
    let mut entries: Vec<PathBuf> = std::fs::read_dir(&args.runs_dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e == "tsv"))
        .collect();
    entries.sort();
    for path in &entries {
        let content = std::fs::read_to_string(path)?;
        reports.extend(parse_metrics_tsv(&content)?);
        manifest.set(
            &format!("input.{}", reports.len()),
            path.display(),
        );
    }
    let summary = multi_run_summary(&reports)?;
    let label = args.label.clone().unwrap_or_else(|| "summary".to_string());
    let table = render_summary_table(&[(label.clone(), summary.clone())]);
    write_output(&mut manifest, &args.out_dir.join("summary.txt"), &table)?;

    let mut tsv = String::from("label\truns\tprecision_mean\tprecision_std\trecall_mean\trecall_std\tf1_mean\tf1_std\tnyt_mean\tnyt_std\n");
    let nyt = summary
        .nyt_accuracy
        .map_or(("-".to_string(), "-".to_string()), |s| {
            (format!("{:.4}", s.mean), format!("{:.4}", s.std))
        });
    tsv.push_str(&format!(
        "{label}\t{}\t{:.4}\t{:.4}\t{:.4}\t{:.4}\t{:.4}\t{:.4}\t{}\t{}\n",
        summary.runs,
        summary.precision.mean,
        summary.precision.std,
        summary.recall.mean,
        summary.recall.std,
        summary.f1.mean,
        summary.f1.std,
        nyt.0,
        nyt.1,
    ));
    write_output(&mut manifest, &args.out_dir.join("summary.tsv"), &tsv)?;
    print!("{table}");
    manifest.write(&args.out_dir)
}
