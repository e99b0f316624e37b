//! Text classifiers whose phrase-importance explanations are computed,
//! regularized during training, and audited for false-positive bias.
//!
//! The pipeline: ingest labeled corpora, train a bag-of-words or small
//! transformer classifier, explain predictions with occlusion or
//! sampling-and-occlusion importance, optionally penalize the squared
//! importance of group-identifier words during training, and audit the
//! result on identifier-heavy non-hate text.

pub mod audit;
pub mod autodiff;
pub mod corpus;
pub mod error;
pub mod explain;
pub mod kv;
pub mod lm_sampler;
pub mod model;
pub mod optim;
pub mod regularize;
pub mod seeds;

pub use error::{Error, Result};
