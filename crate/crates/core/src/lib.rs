//! Pre-training data pipelines for BERT-style encoders with configurable
//! sentence pairing (NSP, SOP or none) and masked-language-model corruption,
//! including replacement from a TF-IDF keyword pool, plus a small trainable
//! encoder with NER and multi-label fine-tuning drivers.
//!
//! The crate is organised bottom-up:
//!
//! - [`corpus`]: cleaning, sentence splitting and statistics.
//! - [`tokenizer`]: WordPiece vocabulary, encode and decode.
//! - [`tfidf`]: token-level TF-IDF and the keyword replacement pool.
//! - [`pretrain`]: masking strategies, pairing and dataset building.
//! - [`encoder`]: transformer encoder, losses, gradients, AdamW training.
//! - [`finetune`]: BIO / multi-label readers, hold-out split, fine-tuning.
//! - [`metrics`]: entity-level and multi-label precision/recall/F.
//! - [`cli`]: the command implementations behind the `maskforge` binary.

pub mod cli;
pub mod corpus;
pub mod encoder;
pub mod error;
pub mod finetune;
pub mod metrics;
pub mod parallel;
pub mod pretrain;
pub mod rng;
pub mod synthetic;
pub mod tfidf;
pub mod tokenizer;

pub use error::{Error, Result};
