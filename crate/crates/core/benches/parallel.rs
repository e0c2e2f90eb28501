//! Parallel vs sequential execution of the data-parallel stages.
//!
//!     cargo bench -p maskforge --bench parallel

use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use maskforge::corpus::{clean_all, CleanDocument, CleaningRules, RawDocument};
use maskforge::encoder::{Batch, Collate, Encoder, ModelConfig, Task};
use maskforge::parallel::Execution;
use maskforge::pretrain::{build_dataset, BuildConfig, Preset};
use maskforge::synthetic::{generate, SyntheticConfig};
use maskforge::tfidf::TfIdfModel;
use maskforge::tokenizer::Vocabulary;

const MODES: [(&str, Execution); 2] = [("sequential", Execution::Sequential), ("parallel", Execution::Parallel)];

struct Fixture {
    raw: Vec<RawDocument>,
    corpus: Vec<CleanDocument>,
    vocab: Vocabulary,
}

fn fixture() -> Fixture {
    let set = generate(&SyntheticConfig {
        documents: 120,
        ..Default::default()
    });
    let vocab = Vocabulary::from_tokens(set.vocab.clone()).unwrap();
    let corpus = clean_all(&set.documents, &CleaningRules::default(), Execution::Parallel)
        .into_iter()
        .filter(|d| d.kept)
        .collect();
    Fixture {
        raw: set.documents,
        corpus,
        vocab,
    }
}

fn pipeline(c: &mut Criterion) {
    let f = fixture();
    let keywords = TfIdfModel::fit(&f.corpus, &f.vocab, Execution::Parallel)
        .unwrap()
        .keyword_list(1000, &f.vocab, Default::default())
        .unwrap();
    let build = BuildConfig::preset(Preset::MlmTfidf10, 128, 1);

    let mut g = c.benchmark_group("pipeline");
    g.sample_size(20);
    for (name, exec) in MODES {
        g.bench_with_input(BenchmarkId::new("clean", name), &exec, |b, &e| {
            b.iter(|| clean_all(black_box(&f.raw), &CleaningRules::default(), e))
        });
        g.bench_with_input(BenchmarkId::new("tfidf_fit", name), &exec, |b, &e| {
            b.iter(|| TfIdfModel::fit(black_box(&f.corpus), &f.vocab, e).unwrap())
        });
        g.bench_with_input(BenchmarkId::new("build_dataset", name), &exec, |b, &e| {
            b.iter(|| build_dataset(black_box(&f.corpus), &build, &f.vocab, Some(&keywords), e).unwrap())
        });
    }
    g.finish();
}

fn gradients(c: &mut Criterion) {
    let f = fixture();
    let ds = build_dataset(&f.corpus, &BuildConfig::preset(Preset::Mlm, 128, 1), &f.vocab, None, Execution::Parallel)
        .unwrap();
    let items: Vec<_> = ds.examples.iter().take(32).collect();
    let batch: Batch = Collate::collate(&items, f.vocab.special().pad);
    let enc = Encoder::new(
        ModelConfig {
            vocab_size: f.vocab.len(),
            ..ModelConfig::desk()
        },
        1,
    )
    .unwrap();

    let mut g = c.benchmark_group("encoder");
    g.sample_size(10);
    for (name, exec) in MODES {
        g.bench_with_input(BenchmarkId::new("gradients_b32", name), &exec, |b, &e| {
            b.iter(|| enc.gradients(black_box(&batch), Task::Mlm, 1.0, Some(3), e).unwrap())
        });
    }
    g.finish();
}

criterion_group!(benches, pipeline, gradients);
criterion_main!(benches);
