//! Acceptance suite. One test per criterion; each prints a pass/fail line.
//!
//! Criteria 1–7 are pure property checks with no external data. Criteria
//! 8–10 run the seeded synthetic bias experiment at desk scale. Criteria
//! 11–12 reproduce published-scale numbers and only run when the real
//! corpora are available locally (`--ignored`, see each test's docs).

mod common;

use rand::Rng;

use contexthate::audit::{
    adversarial_accuracy, classification_metrics, removal_tradeoff, spearman,
};
use contexthate::corpus::lexicon::IdentifierLexicon;
use contexthate::corpus::synthetic::BiasedSpec;
use contexthate::corpus::{LabeledCorpus, Split};
use contexthate::explain::{
    hierarchical_explanation, occlusion_score, soc_score, word_importances, ExplainParams, Method,
    PhraseSpan, WordImportance,
};
use contexthate::lm_sampler::{ContextSampler, MarkovLm, ENUMERATION_CAP};
use contexthate::model::tokenizer::{TokenizedText, Tokenizer};
use contexthate::model::toy::{LinearScorer, TwoLayerScorer};
use contexthate::model::trainer::{train_model, train_transformer};
use contexthate::model::{DiffScorer, RegMethod, Scorer, TextClassifier, TrainingConfig};
use contexthate::regularize::{
    penalty_with_gradient, remove_identifiers_text, train_regularized, PenaltyParams,
};
use contexthate::seeds::stream_rng;
use common::{arm_metrics, SynthExperiment};

fn verdict(number: u32, name: &str, ok: bool) {
    println!("acceptance {number:02} ({name}): {}", if ok { "PASS" } else { "FAIL" });
}

const TOY_WORDS: [&str; 5] = ["alpha", "beta", "gamma", "delta", "epsilon"];

fn random_markov(rng: &mut impl Rng, vocab_size: usize) -> MarkovLm {
    let vocab: Vec<String> = TOY_WORDS[..vocab_size].iter().map(|s| s.to_string()).collect();
    let row = |rng: &mut dyn rand::RngCore| {
        let raw: Vec<f64> = (0..vocab_size).map(|_| rng.gen_range(0.05..1.0)).collect();
        let s: f64 = raw.iter().sum();
        raw.into_iter().map(|x| x / s).collect::<Vec<f64>>()
    };
    let initial = row(rng);
    let transition: Vec<Vec<f64>> = (0..vocab_size).map(|_| row(rng)).collect();
    MarkovLm::new(vocab, initial, transition).unwrap()
}

fn random_input(rng: &mut impl Rng, tok: &Tokenizer, len: usize) -> TokenizedText {
    let words: Vec<&str> = (0..len).map(|_| TOY_WORDS[rng.gen_range(0..TOY_WORDS.len())]).collect();
    tok.tokenize(&words.join(" ")).unwrap()
}

fn random_span(rng: &mut impl Rng, len: usize) -> PhraseSpan {
    let start = rng.gen_range(0..len);
    let end = (start + 1 + rng.gen_range(0..2)).min(len);
    PhraseSpan::new(start, end).unwrap()
}

/// Criterion 1: for 100 random (toy scorer, input, span) triples,
/// soc_score(window = 0) equals occlusion_score exactly.
#[test]
fn acceptance_01_soc_degenerates_to_occlusion() {
    let tok = Tokenizer::from_words(&TOY_WORDS);
    let mut rng = stream_rng(101, "acc1", 0);
    let mut ok = true;
    for case in 0..100u64 {
        let lm = random_markov(&mut rng, 3);
        let sampler = lm.bind(&tok).unwrap();
        let len = rng.gen_range(3..10);
        let x = random_input(&mut rng, &tok, len);
        let span = random_span(&mut rng, x.len());
        let count = rng.gen_range(1..9);

        let exact_eq = if case % 2 == 0 {
            let scorer = TwoLayerScorer::random(tok.clone(), 4, 6, case);
            let oc = occlusion_score(&scorer, &x, span).unwrap();
            let soc = soc_score(&scorer, &sampler, &x, span, 0, count, case).unwrap();
            soc.value == oc.value && soc.std_error == 0.0
        } else {
            let scorer = LinearScorer::random(tok.clone(), case);
            let oc = occlusion_score(&scorer, &x, span).unwrap();
            let soc = soc_score(&scorer, &sampler, &x, span, 0, count, case).unwrap();
            soc.value == oc.value && soc.std_error == 0.0
        };
        if !exact_eq {
            ok = false;
        }
    }
    verdict(1, "soc window-0 degenerates to occlusion exactly", ok);
    assert!(ok);
}

/// Criterion 2: Monte Carlo SOC (K = 500) falls within 3·std_error of the
/// exactly enumerated expectation in ≥ 99% of 200 trials, on an order-1
/// Markov toy LM with |V| ≤ 4 and window ≤ 2.
#[test]
fn acceptance_02_monte_carlo_matches_enumeration() {
    let tok = Tokenizer::from_words(&TOY_WORDS);
    let mut rng = stream_rng(202, "acc2", 0);
    let mut hits = 0;
    let trials = 200;
    for trial in 0..trials {
        let vocab_size = rng.gen_range(2..=4);
        let lm = random_markov(&mut rng, vocab_size);
        let sampler = lm.bind(&tok).unwrap();
        let scorer = TwoLayerScorer::random(tok.clone(), 4, 6, 1000 + trial);
        let len = rng.gen_range(5..10);
        let x = random_input(&mut rng, &tok, len);
        let span = random_span(&mut rng, x.len());
        let window = rng.gen_range(1..=2);

        let exact: f64 = sampler
            .enumerate_contexts(&x, span, window, ENUMERATION_CAP)
            .unwrap()
            .iter()
            .map(|v| {
                let p = v.log_prob.unwrap().exp();
                let d = scorer.score_tokens(&v.tokens).s()
                    - scorer.score_tokens(&v.tokens.with_span_masked(span)).s();
                p * d
            })
            .sum();

        let mc = soc_score(&scorer, &sampler, &x, span, window, 500, trial).unwrap();
        let tolerance = 3.0 * mc.std_error + 1e-12;
        if (mc.value - exact).abs() <= tolerance {
            hits += 1;
        }
    }
    let ok = hits as f64 / trials as f64 >= 0.99;
    println!("  monte carlo within 3 standard errors in {hits}/{trials} trials");
    verdict(2, "monte carlo soc matches enumerated expectation", ok);
    assert!(ok);
}

/// Criterion 3: on a purely linear scorer, OC and SOC span importances equal
/// the sum of contained token weights exactly, for 100 random cases.
#[test]
fn acceptance_03_linear_additivity() {
    let tok = Tokenizer::from_words(&TOY_WORDS);
    let mut rng = stream_rng(303, "acc3", 0);
    let mut ok = true;
    for case in 0..100u64 {
        let mut weights = vec![0.0; tok.vocab_size()];
        for w in weights.iter_mut().skip(3) {
            *w = rng.gen_range(-8i32..=8) as f64;
        }
        let scorer = LinearScorer::from_token_weights(tok.clone(), &weights);
        let vocab_size = rng.gen_range(2..=4);
        let lm = random_markov(&mut rng, vocab_size);
        let sampler = lm.bind(&tok).unwrap();
        let len = rng.gen_range(3..10);
        let x = random_input(&mut rng, &tok, len);
        let span = random_span(&mut rng, x.len());
        let expected: f64 = x.tokens[span.start..span.end].iter().map(|&t| weights[t]).sum();

        let oc = occlusion_score(&scorer, &x, span).unwrap();
        let window = rng.gen_range(0..3);
        let count = rng.gen_range(1..8);
        let soc = soc_score(&scorer, &sampler, &x, span, window, count, case).unwrap();
        if oc.value != expected || soc.value != expected {
            ok = false;
        }
    }
    verdict(3, "linear additivity exact for oc and soc", ok);
    assert!(ok);
}

/// Criterion 4: the penalty's gradient matches central finite differences on
/// a small differentiable scorer with relative error < 1e-4 at ≥ 5 random
/// parameters.
#[test]
fn acceptance_04_penalty_gradient_check() {
    let tok = Tokenizer::from_words(&["muslim", "jew", "plain", "calm", "day"]);
    let mut model = TwoLayerScorer::random(tok.clone(), 3, 5, 77);
    let lexicon =
        IdentifierLexicon::new("t", ["muslim".to_string(), "jew".to_string()]).unwrap();
    let lm = MarkovLm::uniform(vec!["plain".into(), "calm".into(), "day".into()]).unwrap();
    let sampler = lm.bind(&tok).unwrap();
    let batch = vec![
        contexthate::corpus::Document::new(
            "a",
            "plain muslim calm jew day plain",
            true,
            contexthate::corpus::Domain::Synthetic,
        )
        .unwrap(),
        contexthate::corpus::Document::new(
            "b",
            "calm muslim day",
            false,
            contexthate::corpus::Domain::Synthetic,
        )
        .unwrap(),
    ];
    let params = PenaltyParams { method: Method::Soc, window: 2, samples: 4, seed: 5 };
    let (_, grads) =
        penalty_with_gradient(&model, &batch, &lexicon, &params, Some(&sampler)).unwrap();

    let mut rng = stream_rng(404, "acc4", 0);
    let param_ids: Vec<_> = model.params().ids().collect();
    let mut checked = 0;
    let mut ok = true;
    while checked < 8 {
        let id = param_ids[rng.gen_range(0..param_ids.len())];
        let cols = model.params().value(id).cols;
        let n = model.params().value(id).data.len();
        let i = rng.gen_range(0..n);
        if model.params().frozen_rows(id).contains(&(i / cols)) {
            continue;
        }
        let h = 1e-5;
        let orig = model.params().value(id).data[i];
        model.params_mut().value_mut(id).data[i] = orig + h;
        let up = contexthate::regularize::penalty_value(&model, &batch, &lexicon, &params, Some(&sampler)).unwrap();
        model.params_mut().value_mut(id).data[i] = orig - h;
        let down = contexthate::regularize::penalty_value(&model, &batch, &lexicon, &params, Some(&sampler)).unwrap();
        model.params_mut().value_mut(id).data[i] = orig;
        let numeric = (up - down) / (2.0 * h);
        let analytic = grads[id.0].data[i];
        if numeric.abs() < 1e-10 && analytic.abs() < 1e-10 {
            checked += 1;
            continue;
        }
        let rel = (numeric - analytic).abs() / numeric.abs().max(analytic.abs());
        if rel >= 1e-4 {
            println!("  param {id:?}[{i}] relative error {rel}");
            ok = false;
        }
        checked += 1;
    }
    verdict(4, "penalty gradient matches finite differences", ok);
    assert!(ok);
}

/// Criterion 5: α = 0 regularized training reproduces the baseline exactly:
/// identical parameters on the linear model, identical per-step losses on
/// the transformer.
#[test]
fn acceptance_05_zero_alpha_identity() {
    let spec = BiasedSpec::default();
    let train =
        contexthate::corpus::synthetic::biased_corpus(&spec, 160, 3, "tr", Split::Train).unwrap();
    let val = contexthate::corpus::synthetic::biased_corpus(&spec, 60, 4, "va", Split::Validation)
        .unwrap();
    let lexicon = spec.lexicon();

    let cfg = |reg: RegMethod| TrainingConfig {
        batch_size: 16,
        learning_rate: 1e-2,
        positive_weight: 4.0,
        eval_interval: 5,
        lr_halvings_to_stop: 1,
        seed: 9,
        max_tokens: 16,
        alpha: 0.0,
        reg_method: reg,
        soc_samples: 5,
        soc_window: 5,
        max_steps: 40,
        encoder_dim: 8,
        encoder_layers: 1,
        encoder_heads: 2,
        encoder_ff: 16,
        ..TrainingConfig::default()
    };

    // linear model: identical parameters bit for bit
    let fit_linear = |reg: Option<()>| {
        let tok = Tokenizer::fit(train.documents().iter().map(|d| d.text.as_str()));
        let mut model = LinearScorer::random(tok.clone(), 9);
        let lm = spec.context_lm().bind(&tok).unwrap();
        let config = cfg(if reg.is_some() { RegMethod::Soc } else { RegMethod::None });
        let reg_ctx = reg.map(|_| {
            (
                &lexicon,
                Some(&lm as &dyn ContextSampler),
            )
        });
        train_model(&mut model, &train, &val, &config, reg_ctx).unwrap();
        model
            .params()
            .iter()
            .flat_map(|(_, _, m)| m.data.iter().map(|v| v.to_bits()).collect::<Vec<_>>())
            .collect::<Vec<u64>>()
    };
    let linear_ok = fit_linear(None) == fit_linear(Some(()));

    // transformer: identical per-step losses
    let (_, base_log) = train_transformer(&train, &val, &cfg(RegMethod::None)).unwrap();
    let m0 = contexthate::model::trainer::init_transformer(&train, &cfg(RegMethod::Soc)).unwrap();
    let sampler = spec.context_lm().bind(m0.tokenizer()).unwrap();
    drop(m0);
    let (_, reg_log) =
        train_regularized(&train, &val, &cfg(RegMethod::Soc), &lexicon, Some(&sampler)).unwrap();
    let base_bits: Vec<u64> = base_log.batch_losses.iter().map(|l| l.total.to_bits()).collect();
    let reg_bits: Vec<u64> = reg_log.batch_losses.iter().map(|l| l.total.to_bits()).collect();
    let transformer_ok = base_bits == reg_bits
        && reg_log.batch_losses.iter().all(|l| l.penalty == 0.0 && l.total == l.task_loss);

    let ok = linear_ok && transformer_ok;
    verdict(5, "alpha zero reproduces the baseline exactly", ok);
    assert!(ok, "linear {linear_ok}, transformer {transformer_ok}");
}

/// Criterion 6: word-removal closure and whole-word correctness against an
/// independently written matcher oracle on 50 crafted strings.
#[test]
fn acceptance_06_word_removal_matcher_oracle() {
    let lexicon = IdentifierLexicon::new(
        "t",
        ["black", "muslim", "jew", "gay", "brown"].map(String::from),
    )
    .unwrap();

    // independent oracle: whitespace chunks, trim non-alphanumeric edges,
    // lowercase, drop chunks whose core is a lexicon term (keeping any
    // trimmed punctuation), join the non-empty remainder with single spaces
    let oracle = |text: &str| -> String {
        let is_term = |w: &str| {
            ["black", "muslim", "jew", "gay", "brown"].contains(&w.to_lowercase().as_str())
        };
        text.split_whitespace()
            .filter_map(|chunk| {
                let front = chunk.trim_start_matches(|c: char| !c.is_alphanumeric());
                let lead = &chunk[..chunk.len() - front.len()];
                let core = front.trim_end_matches(|c: char| !c.is_alphanumeric());
                let tail = &front[core.len()..];
                if !core.is_empty() && is_term(core) {
                    let leftover = format!("{lead}{tail}");
                    if leftover.is_empty() {
                        None
                    } else {
                        Some(leftover)
                    }
                } else {
                    Some(chunk.to_string())
                }
            })
            .collect::<Vec<_>>()
            .join(" ")
    };

    let cases: Vec<String> = vec![
        "the muslim man".into(),
        "Black blackboard".into(),
        "blackboard only".into(),
        "BLACK.".into(),
        "(muslim)".into(),
        "jew, jews, jewish".into(),
        "gay gayness gays".into(),
        "rollback black roll".into(),
        "the brown-ish brown dog".into(),
        "muslim muslim muslim".into(),
        "no identifiers here at all".into(),
        "punctuation!!! black??? done".into(),
        "a gay, a jew; a muslim: all neighbors".into(),
        "Black'smith black's".into(),
        "e-black black-e".into(),
        "tab\tblack\ttab".into(),
        "  leading black trailing  ".into(),
        "BlAcK mUsLiM".into(),
        "black.muslim".into(),
        "1black black1 black".into(),
        "the jewel of the jew".into(),
        "gayly gay".into(),
        "muslims respect muslim".into(),
        "brown brownie browns brown".into(),
        "quote 'black' unquote".into(),
    ]
    .into_iter()
    .chain((0..25).map(|i| {
        // generated traps: terms embedded in larger words plus real occurrences
        let terms = ["black", "muslim", "jew", "gay", "brown"];
        let t = terms[i % terms.len()];
        format!("pre{t} {t}post {t} mid{t}mid the{i}")
    }))
    .collect();

    let mut ok = true;
    assert_eq!(cases.len(), 50);
    for text in &cases {
        let (got, _) = remove_identifiers_text(text, &lexicon);
        let want = oracle(text);
        if got != want {
            println!("  mismatch on {text:?}: implementation {got:?}, oracle {want:?}");
            ok = false;
        }
        if lexicon.matches(&got) {
            println!("  closure violated on {text:?} -> {got:?}");
            ok = false;
        }
    }
    verdict(6, "word removal matches hand-built oracle on 50 strings", ok);
    assert!(ok);
}

/// Criterion 7: on 100 random inputs, hierarchical trees satisfy the
/// leaf-partition and node-count invariants.
#[test]
fn acceptance_07_tree_validity() {
    let tok = Tokenizer::from_words(&TOY_WORDS);
    let mut rng = stream_rng(707, "acc7", 0);
    let mut ok = true;
    for case in 0..100u64 {
        let len = rng.gen_range(1..12);
        let x = random_input(&mut rng, &tok, len);
        let tree = if case % 4 == 0 {
            let scorer = TwoLayerScorer::random(tok.clone(), 4, 6, case);
            let lm = random_markov(&mut rng, 3);
            let sampler = lm.bind(&tok).unwrap();
            let params =
                ExplainParams { method: Method::Soc, window: 2, samples: 4, seed: case };
            hierarchical_explanation(&scorer, Some(&sampler), &x, &params).unwrap()
        } else {
            let scorer = LinearScorer::random(tok.clone(), case);
            hierarchical_explanation(&scorer, None, &x, &ExplainParams::oc()).unwrap()
        };
        if tree.validate(len).is_err()
            || tree.leaf_count() != len
            || tree.internal_count() != len - 1
        {
            println!("  invalid tree for case {case} (len {len})");
            ok = false;
        }
    }
    verdict(7, "hierarchical trees satisfy structural invariants", ok);
    assert!(ok);
}

/// Criterion 8: on the synthetic biased corpus, SOC regularization
/// (α ≥ 0.1) lifts adversarial accuracy by ≥ 10 points while test F1
/// degrades by ≤ 5 points, in ≥ 8 of 10 seeds.
#[test]
fn acceptance_08_synthetic_bias_experiment() {
    let exp = SynthExperiment::default();
    let mut passing = 0;
    for seed in 0..10u64 {
        let data = exp.data(seed);
        let base = exp.train_baseline(&data, seed);
        let reg = exp.train_regularized(&data, seed);
        let (bf1, badv) = arm_metrics(&base, &data);
        let (rf1, radv) = arm_metrics(&reg, &data);
        let gap_ok = radv - badv >= 10.0;
        let f1_ok = bf1 - rf1 <= 5.0;
        println!(
            "  seed {seed}: baseline f1 {bf1:.1} adv {badv:.1} | regularized f1 {rf1:.1} adv {radv:.1} | {}",
            if gap_ok && f1_ok { "pass" } else { "fail" }
        );
        if gap_ok && f1_ok {
            passing += 1;
        }
    }
    let ok = passing >= 8;
    println!("  {passing}/10 seeds satisfied the gap and F1 conditions");
    verdict(8, "soc regularization closes the false-positive gap", ok);
    assert!(ok);
}

/// Criterion 9: removing more identifiers strictly trades F1 for adversarial
/// accuracy — Spearman ρ ≥ 0.8 (accuracy) and ≤ −0.8 (F1) over k = 0..=10.
#[test]
fn acceptance_09_removal_tradeoff_trend() {
    let exp = SynthExperiment::default();
    let data = exp.data(0);
    let lexicon = exp.spec.lexicon();
    let points = removal_tradeoff(
        &data.train,
        &data.test,
        &data.adversarial,
        &lexicon,
        10,
        5,
        7,
        &TrainingConfig::bow_default(),
    )
    .unwrap();
    let ks: Vec<f64> = points.iter().map(|p| p.k as f64).collect();
    let f1s: Vec<f64> = points.iter().map(|p| p.mean_f1).collect();
    let advs: Vec<f64> = points.iter().map(|p| p.mean_adv_accuracy).collect();
    let rho_adv = spearman(&ks, &advs);
    let rho_f1 = spearman(&ks, &f1s);
    println!("  spearman(k, adversarial accuracy) = {rho_adv:.3}, spearman(k, f1) = {rho_f1:.3}");
    let ok = rho_adv >= 0.8 && rho_f1 <= -0.8;
    verdict(9, "word removal trades f1 for adversarial accuracy", ok);
    assert!(ok);
}

/// Criterion 10: after regularization the mean |SOC importance| of lexicon
/// terms falls below 50% of the unregularized value, and at least 3
/// insult-context terms rise in the ranking.
#[test]
fn acceptance_10_importance_mass_shift() {
    let exp = SynthExperiment::default();
    let seed = 0;
    let data = exp.data(seed);
    let lexicon = exp.spec.lexicon();
    let base = exp.train_baseline(&data, seed);
    let reg = exp.train_regularized(&data, seed);

    let params = ExplainParams { method: Method::Soc, window: 20, samples: 20, seed: 13 };
    let sampler_b = exp.sampler_for(&base);
    let before = word_importances(&base, Some(&sampler_b), &data.test, &params, 5).unwrap();
    let sampler_r = exp.sampler_for(&reg);
    let after = word_importances(&reg, Some(&sampler_r), &data.test, &params, 5).unwrap();

    let mass = |ranking: &[WordImportance]| {
        let vals: Vec<f64> = ranking
            .iter()
            .filter(|w| lexicon.contains(&w.word))
            .map(|w| w.mean.abs())
            .collect();
        vals.iter().sum::<f64>() / vals.len().max(1) as f64
    };
    let (before_mass, after_mass) = (mass(&before), mass(&after));
    let ratio = after_mass / before_mass;

    let insults =
        IdentifierLexicon::new("ins", exp.spec.insults.iter().cloned()).unwrap();
    let rank_of = |ranking: &[WordImportance], w: &str| ranking.iter().position(|x| x.word == w);
    let risen = insults
        .sorted_terms()
        .iter()
        .filter(|t| match (rank_of(&before, t), rank_of(&after, t)) {
            (Some(b), Some(a)) => a < b,
            _ => false,
        })
        .count();

    println!(
        "  identifier mean |importance|: before {before_mass:.3}, after {after_mass:.3} (ratio {ratio:.3}); insult terms risen: {risen}"
    );
    let ok = ratio < 0.5 && risen >= 3;
    verdict(10, "regularization shifts importance mass to context", ok);
    assert!(ok);
}

fn data_env(var: &str) -> Option<std::path::PathBuf> {
    std::env::var_os(var).map(std::path::PathBuf::from)
}

/// Criterion 11 (data-gated; run with `--ignored` when corpora are local):
/// BoW baselines within ±3 F1 of the published 59.60 (GHC) / 45.18
/// (Stormfront), and NYT accuracy within ±5 of 75.61 / 66.78. Set
/// CONTEXTHATE_GHC_TRAIN/TEST, CONTEXTHATE_STF_TRAIN/TEST, and
/// CONTEXTHATE_NYT (corpus format) to the local files.
#[test]
#[ignore = "requires the GHC/Stormfront corpora and the news evaluation set locally"]
fn acceptance_11_bow_baselines_published_scale() {
    let (Some(ghc_train), Some(ghc_test), Some(stf_train), Some(stf_test), Some(nyt)) = (
        data_env("CONTEXTHATE_GHC_TRAIN"),
        data_env("CONTEXTHATE_GHC_TEST"),
        data_env("CONTEXTHATE_STF_TRAIN"),
        data_env("CONTEXTHATE_STF_TEST"),
        data_env("CONTEXTHATE_NYT"),
    ) else {
        panic!("set CONTEXTHATE_GHC_TRAIN/GHC_TEST/STF_TRAIN/STF_TEST/NYT to run this tier");
    };
    let load = |p: &std::path::Path| contexthate::corpus::load_corpus(p).unwrap();
    let cfg = TrainingConfig { max_steps: 2000, ..TrainingConfig::bow_default() };

    let ghc = contexthate::model::bow::train_bow(&load(&ghc_train), &cfg).unwrap();
    let ghc_metrics = classification_metrics(&ghc, &load(&ghc_test), 0).unwrap();
    let nyt_corpus = load(&nyt);
    let ghc_nyt = adversarial_accuracy(&ghc, &nyt_corpus).unwrap();

    let stf = contexthate::model::bow::train_bow(&load(&stf_train), &cfg).unwrap();
    let stf_metrics = classification_metrics(&stf, &load(&stf_test), 0).unwrap();
    let stf10 = IdentifierLexicon::stormfront10();
    let nyt10_docs: Vec<_> = nyt_corpus
        .documents()
        .iter()
        .filter(|d| stf10.matches(&d.text))
        .cloned()
        .collect();
    let nyt10 = LabeledCorpus::new(nyt10_docs, Split::None).unwrap();
    let stf_nyt = adversarial_accuracy(&stf, &nyt10).unwrap();

    println!(
        "  ghc f1 {:.2} (target 59.60 ± 3), nyt {:.2} (target 75.61 ± 5)",
        ghc_metrics.f1, ghc_nyt
    );
    println!(
        "  stf f1 {:.2} (target 45.18 ± 3), nyt {:.2} (target 66.78 ± 5)",
        stf_metrics.f1, stf_nyt
    );
    let ok = (ghc_metrics.f1 - 59.60).abs() <= 3.0
        && (stf_metrics.f1 - 45.18).abs() <= 3.0
        && (ghc_nyt - 75.61).abs() <= 5.0
        && (stf_nyt - 66.78).abs() <= 5.0;
    verdict(11, "bow baselines reproduce published numbers", ok);
    assert!(ok);
}

/// Criterion 12 (data- and compute-gated; run with `--ignored`): transformer
/// rows within the published standard deviations across 10 seeds. Failure to
/// run this tier does not fail acceptance.
#[test]
#[ignore = "requires corpora, a pretrained encoder checkpoint, and long fine-tuning"]
fn acceptance_12_transformer_published_scale() {
    let (Some(train), Some(val), Some(test), Some(encoder)) = (
        data_env("CONTEXTHATE_GHC_TRAIN"),
        data_env("CONTEXTHATE_GHC_VAL"),
        data_env("CONTEXTHATE_GHC_TEST"),
        data_env("CONTEXTHATE_ENCODER"),
    ) else {
        panic!("set CONTEXTHATE_GHC_TRAIN/GHC_VAL/GHC_TEST/ENCODER to run this tier");
    };
    let load = |p: &std::path::Path| contexthate::corpus::load_corpus(p).unwrap();
    let (train, val, test) = (load(&train), load(&val), load(&test));
    let mut f1s = Vec::new();
    for seed in 0..10u64 {
        let cfg = TrainingConfig {
            positive_weight: 10.0,
            seed,
            encoder_pretrained: Some(encoder.clone()),
            ..TrainingConfig::default()
        };
        let (model, _) = train_transformer(&train, &val, &cfg).unwrap();
        f1s.push(classification_metrics(&model, &test, seed).unwrap().f1);
    }
    let mean = f1s.iter().sum::<f64>() / f1s.len() as f64;
    println!("  transformer mean f1 {mean:.2} (published 67.91 ± 3.1)");
    let ok = (mean - 67.91).abs() <= 3.1;
    verdict(12, "transformer reproduces published f1 within reported std", ok);
    assert!(ok);
}
