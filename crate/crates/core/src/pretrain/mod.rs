//! Pre-training example generation: sentence pairing (NSP, SOP or none)
//! and MLM corruption under a [`MaskingStrategy`].

mod dataset;
mod example;
mod masking;
mod pairing;
mod strategy;

pub use dataset::{
    build_dataset, read_examples, report_path, tokenize_corpus, write_examples, BuildConfig, Dataset,
    DatasetReport, DEFAULT_MAX_SEQ_LEN,
};
pub use example::{PretrainExample, Segments, IGNORE_INDEX};
pub use masking::{
    corrupt, eligible_positions, op, select_positions, selection_count, Corrupter, ReplacementPool,
    StrategyReport,
};
pub use pairing::{chunk_document, make_pairs, pairs_for_document, take_segment, Budgets, TokenizedDoc};
pub use strategy::{
    partition_counts, MaskingStrategy, PairingMode, Partition, Preset, ReplacementSource, StrategyFractions,
};
