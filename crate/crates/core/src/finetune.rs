//! Annotated data readers, the hold-out split, subword label alignment and
//! the fine-tuning / evaluation drivers for NER and multi-label heads.

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::encoder::{
    sigmoid, train, Batch, CheckpointMeta, Collate, Encoder, HeadOutputs, Task, TrainConfig, TrainOutcome,
};
use crate::error::{Error, Result};
use crate::metrics::{multilabel_metrics, ner_metrics, BioTag, MetricsReport};
use crate::parallel::Execution;
use crate::pretrain::IGNORE_INDEX;
use crate::rng::{stream_rng, Stream};
use crate::tokenizer::Vocabulary;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BioSentence {
    pub words: Vec<String>,
    pub tags: Vec<String>,
}

impl BioSentence {
    pub fn new(words: Vec<String>, tags: Vec<String>) -> Result<Self> {
        if words.len() != tags.len() {
            return Err(Error::InvalidArgument(format!(
                "{} words but {} tags",
                words.len(),
                tags.len()
            )));
        }
        for t in &tags {
            BioTag::parse(t).map_err(Error::InvalidArgument)?;
        }
        Ok(Self { words, tags })
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }
}

/// Parse `word<TAB>tag` lines with blank lines between sentences. `source`
/// names the input in error messages.
pub fn parse_ner(text: &str, source: &str) -> Result<Vec<BioSentence>> {
    let mut out = Vec::new();
    let (mut words, mut tags) = (Vec::new(), Vec::new());
    for (i, line) in text.lines().enumerate() {
        let line = line.trim_end_matches('\r');
        let at = || format!("{source}:{}", i + 1);
        if line.trim().is_empty() {
            if !words.is_empty() {
                out.push(BioSentence {
                    words: std::mem::take(&mut words),
                    tags: std::mem::take(&mut tags),
                });
            }
            continue;
        }
        let mut cols = line.split('\t');
        let (Some(word), Some(tag), None) = (cols.next(), cols.next(), cols.next()) else {
            return Err(Error::parse(at(), "expected exactly two tab-separated columns"));
        };
        if word.is_empty() {
            return Err(Error::parse(at(), "empty word"));
        }
        BioTag::parse(tag).map_err(|m| Error::parse(at(), m))?;
        words.push(word.to_string());
        tags.push(tag.to_string());
    }
    if !words.is_empty() {
        out.push(BioSentence { words, tags });
    }
    Ok(out)
}

pub fn read_ner(path: impl AsRef<Path>) -> Result<Vec<BioSentence>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_ner(&text, &path.display().to_string())
}

pub fn format_ner(sentences: &[BioSentence]) -> String {
    let mut s = String::new();
    for (k, sent) in sentences.iter().enumerate() {
        if k > 0 {
            s.push('\n');
        }
        for (w, t) in sent.words.iter().zip(&sent.tags) {
            s.push_str(w);
            s.push('\t');
            s.push_str(t);
            s.push('\n');
        }
    }
    s
}

pub fn write_ner(path: impl AsRef<Path>, sentences: &[BioSentence]) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, format_ner(sentences)).map_err(|e| Error::io(path, e))
}

/// `O` followed by `B-T`, `I-T` for every entity type, types sorted.
pub fn ner_label_set(sentences: &[BioSentence]) -> Vec<String> {
    let kinds: BTreeSet<&str> = sentences
        .iter()
        .flat_map(|s| &s.tags)
        .filter_map(|t| match BioTag::parse(t) {
            Ok(BioTag::Begin(k) | BioTag::Inside(k)) => Some(k),
            _ => None,
        })
        .collect();
    std::iter::once("O".to_string())
        .chain(kinds.into_iter().flat_map(|k| [format!("B-{k}"), format!("I-{k}")]))
        .collect()
}

/// Which subwords of a word carry its tag during training.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Alignment {
    #[default]
    FirstSubword,
    /// Every subword is labelled; later pieces of a `B-X` word get `I-X`.
    AllSubwords,
}

/// Per-token label ids for a content encoding (no special tokens). Tokens of
/// a word after its first get `IGNORE_INDEX` under `FirstSubword`.
pub fn align_labels(
    sentence: &BioSentence,
    enc: &crate::tokenizer::Encoding,
    labels: &[String],
    alignment: Alignment,
) -> Result<Vec<i64>> {
    let index: HashMap<&str, i64> = labels.iter().enumerate().map(|(i, l)| (l.as_str(), i as i64)).collect();
    let lookup = |tag: &str| {
        index
            .get(tag)
            .copied()
            .ok_or_else(|| Error::Config(format!("tag {tag} is not in the model's label set")))
    };
    let mut out = Vec::with_capacity(enc.len());
    let mut prev_word = None;
    for &w in &enc.word_index {
        let tag = sentence
            .tags
            .get(w)
            .ok_or_else(|| Error::Shape(format!("encoding refers to word {w} of {}", sentence.len())))?;
        let first = prev_word != Some(w);
        prev_word = Some(w);
        let label = match (first, alignment) {
            (true, _) => lookup(tag)?,
            (false, Alignment::FirstSubword) => IGNORE_INDEX,
            (false, Alignment::AllSubwords) => match BioTag::parse(tag) {
                Ok(BioTag::Begin(k)) => lookup(&format!("I-{k}"))?,
                _ => lookup(tag)?,
            },
        };
        out.push(label);
    }
    Ok(out)
}

/// A tokenized NER sentence ready for batching.
#[derive(Debug, Clone, PartialEq)]
pub struct NerExample {
    pub input_ids: Vec<u32>,
    pub labels: Vec<i64>,
    /// Position of each word's first token, `None` if truncated away.
    pub word_start: Vec<Option<usize>>,
}

impl NerExample {
    pub fn encode(
        sentence: &BioSentence,
        vocab: &Vocabulary,
        labels: &[String],
        alignment: Alignment,
        max_seq_len: usize,
    ) -> Result<Self> {
        let sp = vocab.special();
        let mut enc = vocab.encode_words(&sentence.words);
        let budget = max_seq_len.saturating_sub(2);
        let aligned = align_labels(sentence, &enc, labels, alignment)?;
        enc.ids.truncate(budget);
        enc.word_index.truncate(budget);
        let mut word_start = vec![None; sentence.len()];
        for (t, &w) in enc.word_index.iter().enumerate().rev() {
            word_start[w] = Some(t + 1);
        }
        let mut input_ids = vec![sp.cls];
        input_ids.extend(&enc.ids);
        input_ids.push(sp.sep);
        let mut lab = vec![IGNORE_INDEX];
        lab.extend(&aligned[..enc.ids.len()]);
        lab.push(IGNORE_INDEX);
        Ok(Self {
            input_ids,
            labels: lab,
            word_start,
        })
    }
}

fn pad_rows<T: Copy>(rows: impl Iterator<Item = Vec<T>>, t: usize, fill: T) -> Vec<Vec<T>> {
    rows.map(|mut r| {
        r.resize(t, fill);
        r
    })
    .collect()
}

fn base_batch(ids: &[&[u32]], pad: u32) -> Batch {
    let t = ids.iter().map(|r| r.len()).max().unwrap_or(0);
    Batch {
        input_ids: pad_rows(ids.iter().map(|r| r.to_vec()), t, pad),
        segment_ids: vec![vec![0; t]; ids.len()],
        attention_mask: pad_rows(ids.iter().map(|r| vec![1u8; r.len()]), t, 0),
        ..Default::default()
    }
}

impl Collate for NerExample {
    fn collate(items: &[&Self], pad: u32) -> Batch {
        let ids: Vec<&[u32]> = items.iter().map(|e| e.input_ids.as_slice()).collect();
        let mut b = base_batch(&ids, pad);
        let t = b.seq_len();
        b.token_labels = Some(pad_rows(items.iter().map(|e| e.labels.clone()), t, IGNORE_INDEX));
        b
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MultiLabelExample {
    pub sentence: String,
    pub labels: Vec<u8>,
}

/// Parse a CSV with header `sentence,<label1>,...`. With `label_names` the
/// header must name exactly those labels (any order); bits come back in
/// `label_names` order.
pub fn parse_multilabel<R: std::io::Read>(
    reader: R,
    source: &str,
    label_names: Option<&[String]>,
) -> Result<(Vec<String>, Vec<MultiLabelExample>)> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let header: Vec<String> = rdr.headers()?.iter().map(|h| h.trim().to_string()).collect();
    if header.first().map(String::as_str) != Some("sentence") {
        return Err(Error::parse(format!("{source}:1"), "first column must be `sentence`"));
    }
    let in_file = &header[1..];
    if in_file.is_empty() {
        return Err(Error::parse(format!("{source}:1"), "no label columns"));
    }
    let names: Vec<String> = label_names.map_or_else(|| in_file.to_vec(), <[String]>::to_vec);
    // column k of the file -> bit position
    let mut slot = Vec::with_capacity(in_file.len());
    for h in in_file {
        let pos = names
            .iter()
            .position(|n| n == h)
            .ok_or_else(|| Error::parse(format!("{source}:1"), format!("unknown label column `{h}`")))?;
        if slot.contains(&pos) {
            return Err(Error::parse(format!("{source}:1"), format!("duplicate label column `{h}`")));
        }
        slot.push(pos);
    }
    if slot.len() != names.len() {
        let missing: Vec<&str> = (0..names.len())
            .filter(|p| !slot.contains(p))
            .map(|p| names[p].as_str())
            .collect();
        return Err(Error::parse(format!("{source}:1"), format!("missing label columns {missing:?}")));
    }
    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let at = format!("{source}:{}", rec.position().map_or(i as u64 + 2, |p| p.line()));
        if rec.len() != header.len() {
            return Err(Error::parse(at, format!("expected {} fields, found {}", header.len(), rec.len())));
        }
        let mut labels = vec![0u8; names.len()];
        for (k, cell) in rec.iter().skip(1).enumerate() {
            labels[slot[k]] = match cell.trim() {
                "0" => 0,
                "1" => 1,
                other => return Err(Error::parse(at, format!("cell `{other}` in column `{}` is not 0 or 1", in_file[k]))),
            };
        }
        out.push(MultiLabelExample {
            sentence: rec[0].to_string(),
            labels,
        });
    }
    Ok((names, out))
}

pub fn read_multilabel(
    path: impl AsRef<Path>,
    label_names: Option<&[String]>,
) -> Result<(Vec<String>, Vec<MultiLabelExample>)> {
    let path = path.as_ref();
    let f = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    parse_multilabel(f, &path.display().to_string(), label_names)
}

pub fn write_multilabel(path: impl AsRef<Path>, label_names: &[String], rows: &[MultiLabelExample]) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(std::iter::once("sentence").chain(label_names.iter().map(String::as_str)))?;
    for r in rows {
        let mut rec = vec![r.sentence.clone()];
        rec.extend(r.labels.iter().map(u8::to_string));
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// A tokenized multi-label sentence.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiLabelEncoded {
    pub input_ids: Vec<u32>,
    pub labels: Vec<u8>,
}

impl MultiLabelEncoded {
    pub fn encode(ex: &MultiLabelExample, vocab: &Vocabulary, max_seq_len: usize) -> Self {
        let sp = vocab.special();
        let mut ids = vocab.encode(&ex.sentence).ids;
        ids.truncate(max_seq_len.saturating_sub(2));
        let mut input_ids = vec![sp.cls];
        input_ids.extend(ids);
        input_ids.push(sp.sep);
        Self {
            input_ids,
            labels: ex.labels.clone(),
        }
    }
}

impl Collate for MultiLabelEncoded {
    fn collate(items: &[&Self], pad: u32) -> Batch {
        let ids: Vec<&[u32]> = items.iter().map(|e| e.input_ids.as_slice()).collect();
        let mut b = base_batch(&ids, pad);
        b.multilabels = Some(items.iter().map(|e| e.labels.clone()).collect());
        b
    }
}

/// Hold-out fractions and the shuffle seed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SplitSpec {
    pub train_frac: f64,
    pub val_frac: f64,
    pub test_frac: f64,
    pub seed: u64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        Self {
            train_frac: 0.8,
            val_frac: 0.1,
            test_frac: 0.1,
            seed: 42,
        }
    }
}

const BASIS: u64 = 10_000;

impl SplitSpec {
    fn basis_points(&self) -> Result<(u64, u64)> {
        let bp = |f: f64| (f * BASIS as f64).round();
        let (a, b, c) = (bp(self.train_frac), bp(self.val_frac), bp(self.test_frac));
        if [a, b, c].iter().any(|v| *v < 0.0) || a + b + c != BASIS as f64 {
            return Err(Error::Config(format!(
                "split fractions {} / {} / {} do not sum to 1",
                self.train_frac, self.val_frac, self.test_frac
            )));
        }
        Ok((a as u64, b as u64))
    }

    /// `(floor(train*n), floor(val*n), remainder)`.
    pub fn sizes(&self, n: usize) -> Result<(usize, usize, usize)> {
        let (a, b) = self.basis_points()?;
        let train = (n as u64 * a / BASIS) as usize;
        let val = (n as u64 * b / BASIS) as usize;
        Ok((train, val, n - train - val))
    }
}

/// Example indices of each split; persisted as the split manifest.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitIndices {
    pub seed: u64,
    pub total: usize,
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

impl SplitIndices {
    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, serde_json::to_vec_pretty(self)?).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_slice(&bytes)?)
    }

    pub fn select<T: Clone>(idx: &[usize], data: &[T]) -> Vec<T> {
        idx.iter().map(|&i| data[i].clone()).collect()
    }
}

/// Seeded shuffle of `0..n`, then contiguous train / val / test slices.
pub fn split_indices(n: usize, spec: &SplitSpec) -> Result<SplitIndices> {
    if n < 10 {
        return Err(Error::InvalidArgument(format!("need at least 10 examples to split, got {n}")));
    }
    let (a, b, _) = spec.sizes(n)?;
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut stream_rng(spec.seed, Stream::Split, 0));
    Ok(SplitIndices {
        seed: spec.seed,
        total: n,
        train: order[..a].to_vec(),
        val: order[a..a + b].to_vec(),
        test: order[a + b..].to_vec(),
    })
}

pub fn split<T: Clone>(data: &[T], spec: &SplitSpec) -> Result<(Vec<T>, Vec<T>, Vec<T>)> {
    let s = split_indices(data.len(), spec)?;
    Ok((
        SplitIndices::select(&s.train, data),
        SplitIndices::select(&s.val, data),
        SplitIndices::select(&s.test, data),
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FinetuneTask {
    Ner,
    Multilabel,
}

impl FinetuneTask {
    pub fn key(self) -> &'static str {
        match self {
            FinetuneTask::Ner => "ner",
            FinetuneTask::Multilabel => "multilabel",
        }
    }

    pub fn objective(self) -> Task {
        match self {
            FinetuneTask::Ner => Task::Ner,
            FinetuneTask::Multilabel => Task::Multilabel,
        }
    }
}

impl fmt::Display for FinetuneTask {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.key())
    }
}

impl FromStr for FinetuneTask {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ner" => Ok(FinetuneTask::Ner),
            "multilabel" => Ok(FinetuneTask::Multilabel),
            _ => Err(Error::Config(format!("unknown task `{s}`, expected ner or multilabel"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FinetuneConfig {
    pub train: TrainConfig,
    pub split: SplitSpec,
    pub max_seq_len: usize,
    pub alignment: Alignment,
    pub threshold: f64,
    pub eval_batch_size: usize,
}

impl Default for FinetuneConfig {
    fn default() -> Self {
        Self {
            train: TrainConfig::finetuning(),
            split: SplitSpec::default(),
            max_seq_len: 64,
            alignment: Alignment::FirstSubword,
            threshold: 0.5,
            eval_batch_size: 64,
        }
    }
}

/// The checkpoint must have been built for this vocabulary.
pub fn check_vocab(encoder: &Encoder, meta: &CheckpointMeta, vocab: &Vocabulary) -> Result<()> {
    if encoder.config.vocab_size != vocab.len() {
        return Err(Error::Config(format!(
            "checkpoint vocabulary size {} does not match tokenizer size {}",
            encoder.config.vocab_size,
            vocab.len()
        )));
    }
    if !meta.vocab.is_empty() && meta.vocab != vocab.tokens() {
        return Err(Error::Config("checkpoint was trained with a different vocabulary".into()));
    }
    Ok(())
}

/// Attach a fresh head for `labels`, or keep an existing head with the same
/// labels. A head for a different label set is a configuration error.
fn attach_head(encoder: &mut Encoder, meta: &mut CheckpointMeta, task: FinetuneTask, labels: &[String], seed: u64) -> Result<()> {
    let existing = match task {
        FinetuneTask::Ner => &mut meta.token_labels,
        FinetuneTask::Multilabel => &mut meta.multilabels,
    };
    if !existing.is_empty() {
        if existing.as_slice() != labels {
            return Err(Error::Config(format!(
                "label set mismatch: checkpoint head has {existing:?}, data has {labels:?}"
            )));
        }
        return Ok(());
    }
    *existing = labels.to_vec();
    let std = encoder.config.initializer_range;
    match task {
        FinetuneTask::Ner => {
            encoder.config.num_token_labels = labels.len();
            encoder.params.reset_token_head(labels.len(), std, &mut stream_rng(seed, Stream::Init, 1));
        }
        FinetuneTask::Multilabel => {
            encoder.config.num_multilabels = labels.len();
            encoder.params.reset_multilabel_head(labels.len(), std, &mut stream_rng(seed, Stream::Init, 2));
        }
    }
    meta.task = Some(task.key().into());
    Ok(())
}

fn chunked_forward<T: Collate>(
    encoder: &Encoder,
    items: &[T],
    batch_size: usize,
    pad: u32,
    exec: Execution,
    mut each: impl FnMut(usize, usize, &HeadOutputs),
) -> Result<()> {
    let mut offset = 0;
    for chunk in items.chunks(batch_size.max(1)) {
        let refs: Vec<&T> = chunk.iter().collect();
        let out = encoder.forward_with(&T::collate(&refs, pad), exec)?;
        for b in 0..chunk.len() {
            each(offset + b, b, &out);
        }
        offset += chunk.len();
    }
    Ok(())
}

/// Predicted tag per word; a word's tag is the argmax at its first token and
/// `O` when the word was truncated away.
pub fn predict_ner(
    encoder: &Encoder,
    vocab: &Vocabulary,
    labels: &[String],
    sentences: &[BioSentence],
    cfg: &FinetuneConfig,
    exec: Execution,
) -> Result<Vec<Vec<String>>> {
    if encoder.config.num_token_labels != labels.len() {
        return Err(Error::Config("token head width does not match the label set".into()));
    }
    // Gold tags are not needed for prediction; encode with all-O labels.
    let examples: Vec<NerExample> = sentences
        .iter()
        .map(|s| {
            let blank = BioSentence {
                words: s.words.clone(),
                tags: vec!["O".into(); s.len()],
            };
            NerExample::encode(&blank, vocab, labels, cfg.alignment, cfg.max_seq_len)
        })
        .collect::<Result<_>>()?;
    let mut preds = vec![Vec::new(); examples.len()];
    chunked_forward(encoder, &examples, cfg.eval_batch_size, vocab.special().pad, exec, |i, b, out| {
        preds[i] = examples[i]
            .word_start
            .iter()
            .map(|pos| match pos {
                None => "O".to_string(),
                Some(t) => labels[argmax(out.token.slice(ndarray::s![b, *t, ..]).iter().copied())].clone(),
            })
            .collect();
    })?;
    Ok(preds)
}

fn argmax(values: impl Iterator<Item = f64>) -> usize {
    let mut best = (0, f64::NEG_INFINITY);
    for (i, v) in values.enumerate() {
        if v > best.1 {
            best = (i, v);
        }
    }
    best.0
}

/// Sigmoid probabilities per label.
pub fn predict_multilabel(
    encoder: &Encoder,
    vocab: &Vocabulary,
    examples: &[MultiLabelExample],
    cfg: &FinetuneConfig,
    exec: Execution,
) -> Result<Vec<Vec<f64>>> {
    let enc: Vec<MultiLabelEncoded> = examples
        .iter()
        .map(|e| MultiLabelEncoded::encode(e, vocab, cfg.max_seq_len))
        .collect();
    let mut probs = vec![Vec::new(); enc.len()];
    chunked_forward(encoder, &enc, cfg.eval_batch_size, vocab.special().pad, exec, |i, b, out| {
        probs[i] = out.multilabel.row(b).iter().map(|&z| sigmoid(z)).collect();
    })?;
    Ok(probs)
}

pub fn evaluate_ner(
    encoder: &Encoder,
    vocab: &Vocabulary,
    labels: &[String],
    sentences: &[BioSentence],
    cfg: &FinetuneConfig,
    exec: Execution,
) -> Result<MetricsReport> {
    let pred = predict_ner(encoder, vocab, labels, sentences, cfg, exec)?;
    let gold: Vec<Vec<String>> = sentences.iter().map(|s| s.tags.clone()).collect();
    ner_metrics(&gold, &pred)
}

pub fn evaluate_multilabel(
    encoder: &Encoder,
    vocab: &Vocabulary,
    label_names: &[String],
    examples: &[MultiLabelExample],
    cfg: &FinetuneConfig,
    exec: Execution,
) -> Result<MetricsReport> {
    let probs = predict_multilabel(encoder, vocab, examples, cfg, exec)?;
    let gold: Vec<Vec<u8>> = examples.iter().map(|e| e.labels.clone()).collect();
    multilabel_metrics(&gold, &probs, cfg.threshold, Some(label_names))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub train_loss: f64,
    pub validation: MetricsReport,
}

#[derive(Debug, Clone)]
pub struct FinetuneOutcome {
    pub encoder: Encoder,
    pub meta: CheckpointMeta,
    pub training: TrainOutcome,
    pub epochs: Vec<EpochMetrics>,
    pub test: MetricsReport,
    pub split: SplitIndices,
}

/// Annotated data for either task.
#[derive(Debug, Clone)]
pub enum TaskData {
    Ner(Vec<BioSentence>),
    Multilabel { labels: Vec<String>, examples: Vec<MultiLabelExample> },
}

impl TaskData {
    pub fn task(&self) -> FinetuneTask {
        match self {
            TaskData::Ner(_) => FinetuneTask::Ner,
            TaskData::Multilabel { .. } => FinetuneTask::Multilabel,
        }
    }

    fn len(&self) -> usize {
        match self {
            TaskData::Ner(s) => s.len(),
            TaskData::Multilabel { examples, .. } => examples.len(),
        }
    }
}

/// Split the data, attach the task head, train on the train split with
/// validation metrics after every epoch, then score the test split.
pub fn finetune(
    mut encoder: Encoder,
    mut meta: CheckpointMeta,
    vocab: &Vocabulary,
    data: &TaskData,
    cfg: &FinetuneConfig,
    exec: Execution,
) -> Result<FinetuneOutcome> {
    check_vocab(&encoder, &meta, vocab)?;
    if meta.vocab.is_empty() {
        meta.vocab = vocab.tokens().to_vec();
    }
    let task = data.task();
    let split = split_indices(data.len(), &cfg.split)?;
    let pad = vocab.special().pad;
    let mut epochs = Vec::new();
    let (training, test) = match data {
        TaskData::Ner(sentences) => {
            let labels = if meta.token_labels.is_empty() {
                ner_label_set(sentences)
            } else {
                meta.token_labels.clone()
            };
            attach_head(&mut encoder, &mut meta, task, &labels, cfg.train.seed)?;
            let train_set: Vec<NerExample> = SplitIndices::select(&split.train, sentences)
                .iter()
                .map(|s| NerExample::encode(s, vocab, &labels, cfg.alignment, cfg.max_seq_len))
                .collect::<Result<_>>()?;
            let val = SplitIndices::select(&split.val, sentences);
            let test = SplitIndices::select(&split.test, sentences);
            let mut reports = Vec::new();
            let training = train(&mut encoder, &train_set, &cfg.train, task.objective(), pad, exec, |_, e| {
                reports.push(evaluate_ner(e, vocab, &labels, &val, cfg, exec)?);
                Ok(())
            })?;
            epochs.extend(reports.into_iter().enumerate());
            (training, evaluate_ner(&encoder, vocab, &labels, &test, cfg, exec)?)
        }
        TaskData::Multilabel { labels, examples } => {
            attach_head(&mut encoder, &mut meta, task, labels, cfg.train.seed)?;
            let train_set: Vec<MultiLabelEncoded> = SplitIndices::select(&split.train, examples)
                .iter()
                .map(|e| MultiLabelEncoded::encode(e, vocab, cfg.max_seq_len))
                .collect();
            let val = SplitIndices::select(&split.val, examples);
            let test = SplitIndices::select(&split.test, examples);
            let mut reports = Vec::new();
            let training = train(&mut encoder, &train_set, &cfg.train, task.objective(), pad, exec, |_, e| {
                reports.push(evaluate_multilabel(e, vocab, labels, &val, cfg, exec)?);
                Ok(())
            })?;
            epochs.extend(reports.into_iter().enumerate());
            (training, evaluate_multilabel(&encoder, vocab, labels, &test, cfg, exec)?)
        }
    };
    let epochs = epochs
        .into_iter()
        .map(|(epoch, validation)| EpochMetrics {
            epoch,
            train_loss: training.epoch_losses.get(epoch).copied().unwrap_or(f64::NAN),
            validation,
        })
        .collect();
    Ok(FinetuneOutcome {
        encoder,
        meta,
        training,
        epochs,
        test,
        split,
    })
}
