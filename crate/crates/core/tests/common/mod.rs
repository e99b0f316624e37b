//! Shared fixtures for the integration and acceptance suites: the synthetic
//! bias experiment and small toy setups.
#![allow(dead_code)]

use contexthate::corpus::synthetic::{biased_corpus, identifier_only_corpus, BiasedSpec};
use contexthate::corpus::{LabeledCorpus, Split};
use contexthate::lm_sampler::MarkovSampler;
use contexthate::model::trainer::train_transformer;
use contexthate::model::transformer::TransformerClassifier;
use contexthate::model::{RegMethod, TextClassifier, TrainingConfig};
use contexthate::regularize::train_regularized;

/// Corpora for one seeded run of the synthetic bias experiment.
pub struct SynthData {
    pub train: LabeledCorpus,
    pub val: LabeledCorpus,
    pub test: LabeledCorpus,
    pub adversarial: LabeledCorpus,
}

/// The synthetic bias experiment: a corpus where hate holds exactly when an
/// identifier and an insult co-occur, identifier-only text to measure false
/// positives, and a small transformer trained with and without SOC
/// regularization.
pub struct SynthExperiment {
    pub spec: BiasedSpec,
    pub train_n: usize,
    pub val_n: usize,
    pub test_n: usize,
    pub adv_n: usize,
    pub alpha: f64,
}

impl Default for SynthExperiment {
    fn default() -> Self {
        SynthExperiment {
            spec: BiasedSpec::default(),
            train_n: 1600,
            val_n: 300,
            test_n: 400,
            adv_n: 400,
            alpha: 0.15,
        }
    }
}

impl SynthExperiment {
    pub fn data(&self, seed: u64) -> SynthData {
        SynthData {
            train: biased_corpus(&self.spec, self.train_n, seed, "tr", Split::Train).unwrap(),
            val: biased_corpus(&self.spec, self.val_n, seed ^ 0x5151, "va", Split::Validation)
                .unwrap(),
            test: biased_corpus(&self.spec, self.test_n, seed ^ 0xa3a3, "te", Split::Test).unwrap(),
            adversarial: identifier_only_corpus(&self.spec, self.adv_n, seed ^ 0xc7c7, "adv")
                .unwrap(),
        }
    }

    /// Training configuration for the small transformer arms.
    pub fn config(&self, seed: u64, reg: RegMethod, alpha: f64) -> TrainingConfig {
        TrainingConfig {
            batch_size: 16,
            learning_rate: 3e-3,
            positive_weight: 6.0,
            eval_interval: 50,
            lr_halvings_to_stop: 3,
            seed,
            max_tokens: 16,
            alpha,
            reg_method: reg,
            soc_samples: 5,
            soc_window: 5,
            max_steps: 300,
            encoder_dim: 24,
            encoder_layers: 1,
            encoder_heads: 2,
            encoder_ff: 48,
            encoder_pretrained: None,
            model: contexthate::model::ModelKind::Transformer,
        }
    }

    /// Train the unregularized arm.
    pub fn train_baseline(&self, data: &SynthData, seed: u64) -> TransformerClassifier {
        let cfg = self.config(seed, RegMethod::None, 0.0);
        train_transformer(&data.train, &data.val, &cfg).unwrap().0
    }

    /// Train the SOC-regularized arm; the context model is the generator's
    /// own unigram distribution.
    pub fn train_regularized(&self, data: &SynthData, seed: u64) -> TransformerClassifier {
        let cfg = self.config(seed, RegMethod::Soc, self.alpha);
        let model0 = contexthate::model::trainer::init_transformer(&data.train, &cfg).unwrap();
        let sampler = self.sampler_for(&model0);
        drop(model0);
        let lexicon = self.spec.lexicon();
        train_regularized(&data.train, &data.val, &cfg, &lexicon, Some(&sampler))
            .unwrap()
            .0
    }

    /// Bind the generator's context model to a trained model's vocabulary.
    pub fn sampler_for(&self, model: &TransformerClassifier) -> MarkovSampler {
        self.spec.context_lm().bind(model.tokenizer()).unwrap()
    }
}

/// (test F1, adversarial accuracy) of one arm.
pub fn arm_metrics(model: &TransformerClassifier, data: &SynthData) -> (f64, f64) {
    let f1 = contexthate::audit::classification_metrics(model, &data.test, 0)
        .unwrap()
        .f1;
    let adv = contexthate::audit::adversarial_accuracy(model, &data.adversarial).unwrap();
    (f1, adv)
}
