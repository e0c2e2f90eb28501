//! Command implementations behind the `maskforge` binary. Every command
//! writes its artifacts plus a `<out>.manifest.json` run manifest.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::corpus::{clean_all, compute_stats, read_clean_jsonl, read_corpus_dir, write_clean_jsonl, CleaningRules};
use crate::encoder::{train, Checkpoint, CheckpointMeta, Encoder, ModelConfig, Task, TrainConfig};
use crate::error::{Error, Result};
use crate::finetune::{
    evaluate_multilabel, evaluate_ner, finetune, read_multilabel, read_ner, write_multilabel, write_ner,
    EpochMetrics, FinetuneConfig, FinetuneTask, SplitIndices, TaskData,
};
use crate::metrics::{compare_report, MetricsReport};
use crate::parallel::Execution;
use crate::pretrain::{build_dataset, read_examples, report_path, write_examples, BuildConfig, DatasetReport, Preset};
use crate::synthetic::{generate, SyntheticConfig};
use crate::tfidf::{KeywordList, TfIdfConfig, TfIdfModel};
use crate::tokenizer::load_vocab;

pub const TOOL_VERSION: &str = concat!(env!("CARGO_PKG_NAME"), " ", env!("CARGO_PKG_VERSION"));

#[derive(Debug, Parser)]
#[command(name = "maskforge", version, about = "Pre-training data strategies for BERT-style encoders")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    /// JSON configuration file for the command.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides the seed in the configuration.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Run on the calling thread only.
    #[arg(long, global = true)]
    pub sequential: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum TaskArg {
    Ner,
    Multilabel,
}

impl From<TaskArg> for FinetuneTask {
    fn from(t: TaskArg) -> Self {
        match t {
            TaskArg::Ner => FinetuneTask::Ner,
            TaskArg::Multilabel => FinetuneTask::Multilabel,
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Clean a directory of `.txt` documents into a JSONL manifest.
    Clean {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Corpus statistics for a cleaned corpus.
    Stats {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        vocab: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Rank tokens by TF-IDF and write the keyword list.
    Tfidf {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        vocab: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Build a pre-training dataset for one strategy.
    BuildPretrain {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        vocab: PathBuf,
        /// One of nsp_80_10_10, sop_80_10_10, mlm_80_10_10, mlm_80_0_20,
        /// mlm_80_10tfidf_10, mlm_80_20tfidf_0.
        #[arg(long)]
        strategy: String,
        #[arg(long)]
        keywords: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Pre-train an encoder on a built dataset.
    Pretrain {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        vocab: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Fine-tune a checkpoint on annotated data (hold-out split included).
    Finetune {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, value_enum)]
        task: TaskArg,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        vocab: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Score a fine-tuned checkpoint; with `--split` only its test indices.
    Evaluate {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, value_enum)]
        task: TaskArg,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        vocab: PathBuf,
        #[arg(long)]
        split: Option<PathBuf>,
        /// Row name in comparisons; defaults to the checkpoint's strategy.
        #[arg(long)]
        name: Option<String>,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Side-by-side table of evaluate outputs (CSV at `--out`, text next to it).
    Compare {
        #[arg(long, required = true, num_args = 1..)]
        input: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Write a synthetic corpus, vocabulary and annotated sets into a directory.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        common: Common,
    },
}

/// One per run, written next to the primary output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub config: serde_json::Value,
    pub seed: Option<u64>,
    pub inputs: Vec<String>,
    pub outputs: Vec<String>,
    pub tool_version: String,
    pub duration_secs: f64,
}

pub fn manifest_path(out: &Path) -> PathBuf {
    let mut s = out.as_os_str().to_owned();
    s.push(".manifest.json");
    PathBuf::from(s)
}

/// `dir/stem.<suffix>` next to `out`.
pub fn sibling(out: &Path, suffix: &str) -> PathBuf {
    let stem = out.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    out.with_file_name(format!("{stem}.{suffix}"))
}

fn load_config<T: DeserializeOwned + Default>(path: Option<&Path>) -> Result<T> {
    match path {
        None => Ok(T::default()),
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
            serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", p.display())))
        }
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_slice(&bytes)?)
}

fn ensure_parent(path: &Path) -> Result<()> {
    match path.parent() {
        Some(dir) if !dir.as_os_str().is_empty() => fs::create_dir_all(dir).map_err(|e| Error::io(dir, e)),
        _ => Ok(()),
    }
}

fn kept_only(path: &Path) -> Result<Vec<crate::corpus::CleanDocument>> {
    Ok(read_clean_jsonl(path)?.into_iter().filter(|d| d.kept).collect())
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BuildSettings {
    pub max_seq_len: Option<usize>,
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PretrainSettings {
    pub model: ModelConfig,
    pub train: TrainConfig,
}

impl Default for PretrainSettings {
    fn default() -> Self {
        Self {
            model: ModelConfig::desk(),
            train: TrainConfig::pretraining(),
        }
    }
}

/// Written by `finetune` next to the checkpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FinetuneSummary {
    pub task: FinetuneTask,
    pub strategy: Option<String>,
    pub epochs: Vec<EpochMetrics>,
    pub test: MetricsReport,
}

struct Run {
    command: &'static str,
    config: serde_json::Value,
    seed: Option<u64>,
    inputs: Vec<PathBuf>,
    outputs: Vec<PathBuf>,
}

/// Execute one command. Output files are created with their parents.
pub fn run(cli: Cli) -> Result<()> {
    let started = Instant::now();
    let (out, run) = match cli.command {
        Command::Clean { input, out, common } => (out.clone(), clean(&input, &out, &common)?),
        Command::Stats { input, vocab, out, common } => (out.clone(), stats(&input, &vocab, &out, &common)?),
        Command::Tfidf { input, vocab, out, common } => (out.clone(), tfidf(&input, &vocab, &out, &common)?),
        Command::BuildPretrain {
            input,
            vocab,
            strategy,
            keywords,
            out,
            common,
        } => (
            out.clone(),
            build_pretrain(&input, &vocab, &strategy, keywords.as_deref(), &out, &common)?,
        ),
        Command::Pretrain { input, vocab, out, common } => (out.clone(), pretrain(&input, &vocab, &out, &common)?),
        Command::Finetune {
            checkpoint,
            task,
            input,
            vocab,
            out,
            common,
        } => (
            out.clone(),
            finetune_cmd(&checkpoint, task.into(), &input, &vocab, &out, &common)?,
        ),
        Command::Evaluate {
            checkpoint,
            task,
            input,
            vocab,
            split,
            name,
            out,
            common,
        } => (
            out.clone(),
            evaluate(&checkpoint, task.into(), &input, &vocab, split.as_deref(), name, &out, &common)?,
        ),
        Command::Compare { input, out, common } => (out.clone(), compare(&input, &out, &common)?),
        Command::Synth { out, common } => (out.join("synth"), synth(&out, &common)?),
    };
    let manifest = RunManifest {
        command: run.command.into(),
        config: run.config,
        seed: run.seed,
        inputs: run.inputs.iter().map(|p| p.display().to_string()).collect(),
        outputs: run.outputs.iter().map(|p| p.display().to_string()).collect(),
        tool_version: TOOL_VERSION.into(),
        duration_secs: started.elapsed().as_secs_f64(),
    };
    write_json(&manifest_path(&out), &manifest)
}

fn exec_of(common: &Common) -> Execution {
    if common.sequential {
        Execution::Sequential
    } else {
        Execution::Parallel
    }
}

fn clean(input: &Path, out: &Path, common: &Common) -> Result<Run> {
    let rules: CleaningRules = load_config(common.config.as_deref())?;
    let docs = read_corpus_dir(input)?;
    let cleaned = clean_all(&docs, &rules, exec_of(common));
    ensure_parent(out)?;
    write_clean_jsonl(out, &cleaned)?;
    Ok(Run {
        command: "clean",
        config: serde_json::to_value(&rules)?,
        seed: None,
        inputs: vec![input.into()],
        outputs: vec![out.into()],
    })
}

fn stats(input: &Path, vocab: &Path, out: &Path, common: &Common) -> Result<Run> {
    let v = load_vocab(vocab)?;
    let corpus = kept_only(input)?;
    let s = compute_stats(&corpus, &v, exec_of(common))?;
    ensure_parent(out)?;
    write_json(out, &s)?;
    Ok(Run {
        command: "stats",
        config: serde_json::Value::Null,
        seed: None,
        inputs: vec![input.into(), vocab.into()],
        outputs: vec![out.into()],
    })
}

fn tfidf(input: &Path, vocab: &Path, out: &Path, common: &Common) -> Result<Run> {
    let cfg: TfIdfConfig = load_config(common.config.as_deref())?;
    let v = load_vocab(vocab)?;
    let corpus = kept_only(input)?;
    let model = TfIdfModel::fit(&corpus, &v, exec_of(common))?;
    let list = model.keyword_list(cfg.k, &v, cfg.aggregation)?;
    ensure_parent(out)?;
    list.write_jsonl(out)?;
    Ok(Run {
        command: "tfidf",
        config: serde_json::to_value(&cfg)?,
        seed: None,
        inputs: vec![input.into(), vocab.into()],
        outputs: vec![out.into()],
    })
}

fn build_pretrain(
    input: &Path,
    vocab: &Path,
    strategy: &str,
    keywords: Option<&Path>,
    out: &Path,
    common: &Common,
) -> Result<Run> {
    let preset: Preset = strategy.parse()?;
    let settings: BuildSettings = load_config(common.config.as_deref())?;
    let seed = common.seed.or(settings.seed).unwrap_or(42);
    let max_len = settings.max_seq_len.unwrap_or(crate::pretrain::DEFAULT_MAX_SEQ_LEN);
    let v = load_vocab(vocab)?;
    let list = match (preset.masking().needs_keywords(), keywords) {
        (true, None) => {
            return Err(Error::Config(format!(
                "strategy {} replaces from the TF-IDF keyword list; pass --keywords",
                preset.key()
            )))
        }
        (_, Some(p)) => Some(KeywordList::read_jsonl(p, Some(&v))?),
        (false, None) => None,
    };
    let corpus = kept_only(input)?;
    let config = BuildConfig::preset(preset, max_len, seed);
    let ds = build_dataset(&corpus, &config, &v, list.as_ref(), exec_of(common))?;
    ensure_parent(out)?;
    write_examples(out, &ds.examples)?;
    let report = report_path(out);
    write_json(&report, &ds.report)?;
    let mut inputs = vec![input.to_path_buf(), vocab.to_path_buf()];
    inputs.extend(keywords.map(Path::to_path_buf));
    Ok(Run {
        command: "build-pretrain",
        config: serde_json::to_value(&config)?,
        seed: Some(seed),
        inputs,
        outputs: vec![out.into(), report],
    })
}

fn pretrain(input: &Path, vocab: &Path, out: &Path, common: &Common) -> Result<Run> {
    let mut settings: PretrainSettings = load_config(common.config.as_deref())?;
    if let Some(s) = common.seed {
        settings.train.seed = s;
    }
    let v = load_vocab(vocab)?;
    settings.model.vocab_size = v.len();
    let data = read_examples(input)?;
    let task = if data.iter().any(|e| e.pair_label.is_some()) {
        Task::MlmPair
    } else {
        Task::Mlm
    };
    let strategy = read_json::<DatasetReport>(&report_path(input)).ok().map(|r| r.name);
    let mut encoder = Encoder::new(settings.model.clone(), settings.train.seed)?;
    let outcome = train(
        &mut encoder,
        &data,
        &settings.train,
        task,
        v.special().pad,
        exec_of(common),
        |_, _| Ok(()),
    )?;
    let meta = CheckpointMeta {
        strategy,
        task: Some(if task == Task::MlmPair { "mlm+pair" } else { "mlm" }.into()),
        vocab: v.tokens().to_vec(),
        ..Default::default()
    };
    ensure_parent(out)?;
    Checkpoint::new(&encoder, meta).save(out)?;
    let curve = sibling(out, "loss.csv");
    outcome.write_csv(&curve)?;
    Ok(Run {
        command: "pretrain",
        config: serde_json::to_value(&settings)?,
        seed: Some(settings.train.seed),
        inputs: vec![input.into(), vocab.into()],
        outputs: vec![out.into(), curve],
    })
}

fn load_task_data(task: FinetuneTask, input: &Path, labels: Option<&[String]>) -> Result<TaskData> {
    Ok(match task {
        FinetuneTask::Ner => TaskData::Ner(read_ner(input)?),
        FinetuneTask::Multilabel => {
            let (labels, examples) = read_multilabel(input, labels)?;
            TaskData::Multilabel { labels, examples }
        }
    })
}

fn finetune_cmd(
    checkpoint: &Path,
    task: FinetuneTask,
    input: &Path,
    vocab: &Path,
    out: &Path,
    common: &Common,
) -> Result<Run> {
    let mut cfg: FinetuneConfig = load_config(common.config.as_deref())?;
    if let Some(s) = common.seed {
        cfg.train.seed = s;
        cfg.split.seed = s;
    }
    let v = load_vocab(vocab)?;
    let (encoder, meta) = Checkpoint::load(checkpoint)?.into_encoder()?;
    let known = (!meta.multilabels.is_empty()).then_some(meta.multilabels.as_slice());
    let data = load_task_data(task, input, known)?;
    let strategy = meta.strategy.clone();
    let result = finetune(encoder, meta, &v, &data, &cfg, exec_of(common))?;
    ensure_parent(out)?;
    Checkpoint::new(&result.encoder, result.meta).save(out)?;
    let split = sibling(out, "split.json");
    result.split.write(&split)?;
    let curve = sibling(out, "loss.csv");
    result.training.write_csv(&curve)?;
    let summary_path = sibling(out, "metrics.json");
    let mut test = result.test;
    test.model = strategy.clone();
    write_json(
        &summary_path,
        &FinetuneSummary {
            task,
            strategy,
            epochs: result.epochs,
            test,
        },
    )?;
    Ok(Run {
        command: "finetune",
        config: serde_json::to_value(&cfg)?,
        seed: Some(cfg.train.seed),
        inputs: vec![checkpoint.into(), input.into(), vocab.into()],
        outputs: vec![out.into(), split, curve, summary_path],
    })
}

#[allow(clippy::too_many_arguments)]
fn evaluate(
    checkpoint: &Path,
    task: FinetuneTask,
    input: &Path,
    vocab: &Path,
    split: Option<&Path>,
    name: Option<String>,
    out: &Path,
    common: &Common,
) -> Result<Run> {
    let cfg: FinetuneConfig = load_config(common.config.as_deref())?;
    let v = load_vocab(vocab)?;
    let (encoder, meta) = Checkpoint::load(checkpoint)?.into_encoder()?;
    crate::finetune::check_vocab(&encoder, &meta, &v)?;
    let known = (!meta.multilabels.is_empty()).then_some(meta.multilabels.as_slice());
    let data = load_task_data(task, input, known)?;
    let test = split.map(SplitIndices::read).transpose()?.map(|s| s.test);
    let exec = exec_of(common);
    let mut report = match data {
        TaskData::Ner(sentences) => {
            if meta.token_labels.is_empty() {
                return Err(Error::Config("checkpoint has no NER head; run finetune first".into()));
            }
            let sentences = match &test {
                Some(idx) => SplitIndices::select(idx, &sentences),
                None => sentences,
            };
            evaluate_ner(&encoder, &v, &meta.token_labels, &sentences, &cfg, exec)?
        }
        TaskData::Multilabel { labels, examples } => {
            if meta.multilabels.is_empty() {
                return Err(Error::Config("checkpoint has no multi-label head; run finetune first".into()));
            }
            let examples = match &test {
                Some(idx) => SplitIndices::select(idx, &examples),
                None => examples,
            };
            evaluate_multilabel(&encoder, &v, &labels, &examples, &cfg, exec)?
        }
    };
    report.model = name.or(meta.strategy);
    ensure_parent(out)?;
    write_json(out, &report)?;
    let mut inputs = vec![checkpoint.to_path_buf(), input.to_path_buf(), vocab.to_path_buf()];
    inputs.extend(split.map(Path::to_path_buf));
    Ok(Run {
        command: "evaluate",
        config: serde_json::to_value(&cfg)?,
        seed: None,
        inputs,
        outputs: vec![out.into()],
    })
}

/// Rows follow the strategy order where names match a preset label, then
/// first appearance. Columns: multi-label then NER.
fn compare(inputs: &[PathBuf], out: &Path, _common: &Common) -> Result<Run> {
    let mut rows: Vec<(String, Vec<MetricsReport>)> = Vec::new();
    for p in inputs {
        let r: MetricsReport = read_json(p)?;
        let name = r
            .model
            .clone()
            .unwrap_or_else(|| p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default());
        match rows.iter_mut().find(|(n, _)| *n == name) {
            Some((_, reps)) => {
                if reps.iter().any(|x| x.task == r.task) {
                    return Err(Error::InvalidArgument(format!("two {} reports for {name}", r.task)));
                }
                reps.push(r);
            }
            None => rows.push((name, vec![r])),
        }
    }
    let rank = |name: &str| Preset::ALL.iter().position(|p| p.label() == name).unwrap_or(usize::MAX);
    rows.sort_by_key(|(n, _)| rank(n));
    let task_rank = |t: &str| match t {
        "multilabel" => 0,
        "ner" => 1,
        _ => 2,
    };
    for (_, reps) in &mut rows {
        reps.sort_by_key(|r| task_rank(&r.task));
    }
    let table = compare_report(&rows)?;
    ensure_parent(out)?;
    fs::write(out, &table.csv).map_err(|e| Error::io(out, e))?;
    let text = sibling(out, "txt");
    fs::write(&text, &table.text).map_err(|e| Error::io(&text, e))?;
    print!("{}", table.text);
    Ok(Run {
        command: "compare",
        config: serde_json::Value::Null,
        seed: None,
        inputs: inputs.to_vec(),
        outputs: vec![out.into(), text],
    })
}

fn synth(out: &Path, common: &Common) -> Result<Run> {
    let mut cfg: SyntheticConfig = load_config(common.config.as_deref())?;
    if let Some(s) = common.seed {
        cfg.seed = s;
    }
    let set = generate(&cfg);
    let corpus = out.join("corpus");
    fs::create_dir_all(&corpus).map_err(|e| Error::io(&corpus, e))?;
    for d in &set.documents {
        let p = corpus.join(format!("{}.txt", d.id));
        fs::write(&p, &d.text).map_err(|e| Error::io(&p, e))?;
    }
    let vocab = out.join("vocab.txt");
    let mut text = set.vocab.join("\n");
    text.push('\n');
    fs::write(&vocab, text).map_err(|e| Error::io(&vocab, e))?;
    let ner = out.join("ner.tsv");
    write_ner(&ner, &set.ner)?;
    let ml = out.join("multilabel.csv");
    write_multilabel(&ml, &set.multilabel_names, &set.multilabel)?;
    Ok(Run {
        command: "synth",
        config: serde_json::to_value(cfg)?,
        seed: Some(cfg.seed),
        inputs: Vec::new(),
        outputs: vec![corpus, vocab, ner, ml],
    })
}
