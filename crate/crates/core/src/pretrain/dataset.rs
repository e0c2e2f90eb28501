//! End-to-end dataset construction for one pre-training configuration.

use std::io::{BufRead, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::example::PretrainExample;
use super::masking::{Corrupter, StrategyReport};
use super::pairing::{negative_pool, pairs_for_document, Budgets, TokenizedDoc};
use super::strategy::{MaskingStrategy, PairingMode, Preset};
use crate::corpus::CleanDocument;
use crate::error::{Error, Result};
use crate::parallel::{self, Execution};
use crate::rng::{stream_rng, Stream};
use crate::tfidf::KeywordList;
use crate::tokenizer::Vocabulary;

pub const DEFAULT_MAX_SEQ_LEN: usize = 128;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BuildConfig {
    /// Display name, e.g. `MLM_80_(10_TF_IDF)_10`.
    pub name: String,
    pub pairing: PairingMode,
    pub masking: MaskingStrategy,
    pub max_seq_len: usize,
    pub seed: u64,
}

impl BuildConfig {
    pub fn preset(p: Preset, max_seq_len: usize, seed: u64) -> Self {
        Self {
            name: p.label().to_string(),
            pairing: p.pairing(),
            masking: p.masking(),
            max_seq_len,
            seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetReport {
    pub name: String,
    pub pairing: PairingMode,
    pub examples: u64,
    /// Non-padding positions including special tokens.
    pub tokens: u64,
    /// Non-special positions, the population selection draws from.
    pub eligible_tokens: u64,
    /// `floor(select_frac * eligible_tokens)`: what a single corpus-wide
    /// draw would select, for comparison with the per-example total.
    pub global_select_target: u64,
    pub positive_pairs: u64,
    #[serde(flatten)]
    pub masking: StrategyReport,
}

#[derive(Debug, Clone)]
pub struct Dataset {
    pub config: BuildConfig,
    pub examples: Vec<PretrainExample>,
    pub report: DatasetReport,
}

pub fn tokenize_corpus(corpus: &[CleanDocument], vocab: &Vocabulary, exec: Execution) -> Vec<TokenizedDoc> {
    parallel::map(exec, corpus, |d| {
        d.sentences.iter().map(|s| vocab.encode(s).ids).collect()
    })
}

/// Build every example for `config`. Each document is an independent shard
/// with its own pairing and masking streams, so the output is identical for
/// any worker count.
pub fn build_dataset(
    corpus: &[CleanDocument],
    config: &BuildConfig,
    vocab: &Vocabulary,
    keywords: Option<&KeywordList>,
    exec: Execution,
) -> Result<Dataset> {
    if let Some(d) = corpus.iter().find(|d| !d.kept) {
        return Err(Error::InvalidArgument(format!("document `{}` was rejected by cleaning", d.id)));
    }
    if config.pairing == PairingMode::Nsp && corpus.len() < 2 {
        return Err(Error::Config("NSP pairing needs at least 2 documents".into()));
    }
    let budgets = Budgets::new(config.max_seq_len, config.pairing)?;
    let corrupter = Corrupter::new(config.masking, vocab, keywords)?;
    let docs = tokenize_corpus(corpus, vocab, exec);
    let b_chunks = negative_pool(&docs, config.pairing, budgets);

    let shards = parallel::map_indexed(exec, &docs, |d, _| -> Result<Vec<(PretrainExample, StrategyReport)>> {
        let mut pair_rng = stream_rng(config.seed, Stream::Pairing, d as u64);
        let mut mask_rng = stream_rng(config.seed, Stream::Masking, d as u64);
        let segments = pairs_for_document(d, &docs, &b_chunks, config.pairing, budgets, &mut pair_rng)?;
        segments
            .iter()
            .map(|seg| {
                let assembled = seg.assemble(vocab.special());
                let positions = corrupter.select(&assembled.input_ids, &mut mask_rng);
                corrupter.corrupt(seg, &positions, &mut mask_rng)
            })
            .collect()
    });

    let mut report = DatasetReport {
        name: config.name.clone(),
        pairing: config.pairing,
        examples: 0,
        tokens: 0,
        eligible_tokens: 0,
        global_select_target: 0,
        positive_pairs: 0,
        masking: StrategyReport::default(),
    };
    let special = vocab.special();
    let mut examples = Vec::new();
    for shard in shards {
        for (ex, r) in shard? {
            report.examples += 1;
            report.tokens += ex.content_len() as u64;
            report.eligible_tokens += ex
                .mlm_labels
                .iter()
                .zip(&ex.input_ids)
                .filter(|(&l, &t)| l != super::IGNORE_INDEX || !special.contains(t))
                .count() as u64;
            report.positive_pairs += u64::from(ex.pair_label == Some(1));
            report.masking += r;
            examples.push(ex);
        }
    }
    report.global_select_target = config.masking.select_floor(report.eligible_tokens);
    Ok(Dataset {
        config: config.clone(),
        examples,
        report,
    })
}

pub fn write_examples(path: impl AsRef<Path>, examples: &[PretrainExample]) -> Result<()> {
    let path = path.as_ref();
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = std::io::BufWriter::new(file);
    for ex in examples {
        serde_json::to_writer(&mut w, ex)?;
        w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_examples(path: impl AsRef<Path>) -> Result<Vec<PretrainExample>> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (n, line) in std::io::BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(
            serde_json::from_str(&line)
                .map_err(|e| Error::parse(format!("{}:{}", path.display(), n + 1), e.to_string()))?,
        );
    }
    Ok(out)
}

/// Dataset file plus `<stem>.report.json` next to it.
pub fn report_path(dataset: &Path) -> std::path::PathBuf {
    let stem = dataset.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    dataset.with_file_name(format!("{stem}.report.json"))
}
