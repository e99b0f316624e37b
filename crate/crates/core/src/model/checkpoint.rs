//! Checkpoint directories: weights, vocabulary, and a flat manifest.
//!
//! Layout: `manifest.txt` (key = value), `weights.json`, `vocab.txt` (one
//! token per line). Everything is text; identical training runs produce
//! byte-identical checkpoints.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kv::KvDoc;
use crate::model::bow::{BowClassifier, BowWeights};
use crate::model::tokenizer::Tokenizer;
use crate::model::transformer::{TransformerClassifier, TransformerWeights};
use crate::model::{TextClassifier, TrainingConfig};

/// The two checkpointable classifier families.
pub enum ClassifierKind {
    Bow(BowClassifier),
    Transformer(TransformerClassifier),
}

impl ClassifierKind {
    pub fn as_text(&self) -> &dyn TextClassifier {
        match self {
            ClassifierKind::Bow(m) => m,
            ClassifierKind::Transformer(m) => m,
        }
    }

    pub fn as_text_sync(&self) -> &(dyn TextClassifier + Sync) {
        match self {
            ClassifierKind::Bow(m) => m,
            ClassifierKind::Transformer(m) => m,
        }
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            ClassifierKind::Bow(_) => "bow",
            ClassifierKind::Transformer(_) => "transformer",
        }
    }
}

#[derive(Serialize, Deserialize)]
enum WeightsFile {
    Bow(BowWeights),
    Transformer(TransformerWeights),
}

/// A loaded checkpoint: the model plus its manifest.
pub struct Checkpoint {
    pub model: ClassifierKind,
    pub manifest: KvDoc,
}

/// Write a checkpoint directory. `extra` entries (removal stats, lexicon
/// hashes) are merged into the manifest. No timestamps: run timings belong to
/// the run manifest, not the checkpoint.
pub fn save_checkpoint(
    dir: &Path,
    model: &ClassifierKind,
    config: &TrainingConfig,
    extra: &[(String, String)],
) -> Result<()> {
    std::fs::create_dir_all(dir)?;

    let tokenizer = model.as_text().tokenizer();
    std::fs::write(dir.join("vocab.txt"), tokenizer.vocab().join("\n") + "\n")?;

    let weights = match model {
        ClassifierKind::Bow(m) => WeightsFile::Bow(m.to_weights()),
        ClassifierKind::Transformer(m) => WeightsFile::Transformer(m.to_weights()),
    };
    let json = serde_json::to_string(&weights)
        .map_err(|e| Error::Schema(format!("cannot serialize weights: {e}")))?;
    std::fs::write(dir.join("weights.json"), json)?;

    let mut manifest = KvDoc::new();
    manifest.set("model", model.kind_name());
    manifest.set("seed", config.seed);
    manifest.set("vocab_hash", tokenizer.vocab_hash());
    let kv = config.to_kv();
    for key in kv.keys() {
        manifest.set(&format!("config.{key}"), kv.get(key).unwrap_or_default());
    }
    for (k, v) in extra {
        manifest.set(k, v);
    }
    manifest.save(&dir.join("manifest.txt"))?;
    Ok(())
}

/// Load a checkpoint directory written by [`save_checkpoint`].
pub fn load_checkpoint(dir: &Path) -> Result<Checkpoint> {
    let manifest_path = dir.join("manifest.txt");
    if !manifest_path.is_file() {
        return Err(Error::Environment(format!(
            "checkpoint manifest {} is missing",
            manifest_path.display()
        )));
    }
    let manifest = KvDoc::load(&manifest_path)?;

    let vocab_text = std::fs::read_to_string(dir.join("vocab.txt"))?;
    let vocab: Vec<String> = vocab_text.lines().map(|l| l.to_string()).collect();
    let tokenizer = Tokenizer::from_vocab(vocab)?;

    let weights_text = std::fs::read_to_string(dir.join("weights.json"))?;
    let weights: WeightsFile = serde_json::from_str(&weights_text)
        .map_err(|e| Error::Schema(format!("cannot parse weights.json: {e}")))?;

    let model = match weights {
        WeightsFile::Bow(w) => ClassifierKind::Bow(BowClassifier::from_weights(w, tokenizer)),
        WeightsFile::Transformer(w) => {
            ClassifierKind::Transformer(TransformerClassifier::from_weights(w, tokenizer)?)
        }
    };
    Ok(Checkpoint { model, manifest })
}
