#![allow(dead_code)]

use maskforge::encoder::{Batch, Encoder, ModelConfig, Task};
use maskforge::parallel::Execution;
use maskforge::pretrain::IGNORE_INDEX;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const FD_STEP: f64 = 1e-3;
pub const PROBES: usize = 50;

pub fn desk_encoder(seed: u64) -> Encoder {
    let mut c = ModelConfig::desk();
    c.num_token_labels = 5;
    c.num_multilabels = 4;
    // Larger weights so gradients are not dominated by rounding noise.
    c.initializer_range = 0.2;
    Encoder::new(c, seed).unwrap()
}

/// Two sequences of 12 tokens, the second with 3 padding columns, with
/// labels for every head.
pub fn probe_batch(vocab: usize, seed: u64) -> Batch {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (n, t) = (2, 12);
    let mut b = Batch::default();
    let mut mlm = Vec::new();
    let mut ner = Vec::new();
    for s in 0..n {
        let len = t - 3 * s;
        let ids: Vec<u32> = (0..t)
            .map(|i| if i < len { rng.random_range(5..vocab as u32) } else { 0 })
            .collect();
        b.segment_ids.push((0..t).map(|i| u8::from(i >= len / 2 && i < len)).collect());
        b.attention_mask.push((0..t).map(|i| u8::from(i < len)).collect());
        mlm.push(
            (0..t)
                .map(|i| if i < len && i % 3 == 1 { rng.random_range(5..vocab as i64) } else { IGNORE_INDEX })
                .collect(),
        );
        ner.push((0..t).map(|i| if i > 0 && i < len { rng.random_range(0..5) } else { IGNORE_INDEX }).collect());
        b.input_ids.push(ids);
    }
    b.mlm_labels = Some(mlm);
    b.token_labels = Some(ner);
    b.pair_labels = Some(vec![Some(1), Some(0)]);
    b.multilabels = Some(vec![vec![1, 0, 0, 1], vec![0, 1, 1, 0]]);
    b
}

/// Worst relative error over `PROBES` random coordinates, split evenly
/// between the task's head tensors and the encoder body.
pub fn gradient_check(enc: &Encoder, batch: &Batch, task: Task, seed: u64) -> (f64, Vec<String>) {
    let (_, grads) = enc.gradients(batch, task, 1.0, None, Execution::Sequential).unwrap();
    let head_prefix = match task {
        Task::Mlm => "head.mlm",
        Task::Pair => "head.pair",
        Task::MlmPair => "head.",
        Task::Ner => "head.token",
        Task::Multilabel => "head.multilabel",
    };
    let names: Vec<(String, (usize, usize))> =
        enc.params.named().into_iter().map(|(n, t)| (n, t.dim())).collect();
    let head: Vec<usize> = (0..names.len()).filter(|&i| names[i].0.starts_with(head_prefix)).collect();
    let body: Vec<usize> = (0..names.len()).filter(|&i| !names[i].0.starts_with("head.")).collect();
    assert!(!head.is_empty(), "no tensors for {head_prefix}");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let loss_at = |e: &Encoder| {
        let out = e.forward(batch).unwrap();
        e.loss(&out, batch, task).unwrap().total
    };
    let mut worst = 0.0f64;
    let mut log = Vec::new();
    for k in 0..PROBES {
        let pool = if k % 2 == 0 { &head } else { &body };
        let ti = pool[rng.random_range(0..pool.len())];
        let (rows, cols) = names[ti].1;
        let (r, c) = (rng.random_range(0..rows), rng.random_range(0..cols));
        let analytic = grads.named()[ti].1[[r, c]];
        let mut e = enc.clone();
        let orig = e.params.named()[ti].1[[r, c]];
        e.params.named_mut()[ti].1[[r, c]] = orig + FD_STEP;
        let up = loss_at(&e);
        e.params.named_mut()[ti].1[[r, c]] = orig - FD_STEP;
        let down = loss_at(&e);
        let numeric = (up - down) / (2.0 * FD_STEP);
        let rel = relative_error(analytic, numeric);
        log.push(format!("{}[{r},{c}] analytic={analytic:.3e} numeric={numeric:.3e} rel={rel:.2e}", names[ti].0));
        worst = worst.max(rel);
    }
    (worst, log)
}

/// `|a - n| / max(|a|, |n|, 1e-8)`.
pub fn relative_error(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(1e-8)
}
