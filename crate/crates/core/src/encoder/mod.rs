//! A small BERT-style encoder with MLM, sentence-pair, token-classification
//! and multi-label heads, hand-written gradients and an AdamW training loop.

mod checkpoint;
mod config;
mod loss;
mod model;
mod optim;
mod params;
mod train;

use ndarray::{Array2, Array3, Axis};

pub use checkpoint::{Checkpoint, CheckpointMeta, CHECKPOINT_FORMAT};
pub use config::{ModelConfig, TrainConfig};
pub use loss::{sigmoid, sigmoid_bce, softmax_cross_entropy, LossBreakdown, Task};
pub use model::{backward_seq, forward_seq, gelu, gelu_grad, SeqCache, SeqInput};
pub use optim::{adamw_update, AdamW, LinearWarmup};
pub use params::{decays, Layer, NamedTensor, Parameters};
pub use train::{smoothed, train, Collate, LossPoint, TrainOutcome};

use crate::error::{Error, Result};
use crate::parallel::{self, Execution};
use crate::pretrain::{PretrainExample, IGNORE_INDEX};
use crate::rng::{stream_rng, Rng, Stream};

/// A rectangular batch: every sequence has the same (padded) length.
/// Loss and its gradient with respect to a block of logits.
type LossGrad<'a> = dyn Fn(&Array2<f64>) -> (f64, Array2<f64>) + 'a;

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Batch {
    pub input_ids: Vec<Vec<u32>>,
    pub segment_ids: Vec<Vec<u8>>,
    pub attention_mask: Vec<Vec<u8>>,
    pub mlm_labels: Option<Vec<Vec<i64>>>,
    pub pair_labels: Option<Vec<Option<u8>>>,
    pub token_labels: Option<Vec<Vec<i64>>>,
    pub multilabels: Option<Vec<Vec<u8>>>,
}

impl Batch {
    pub fn len(&self) -> usize {
        self.input_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.input_ids.is_empty()
    }

    pub fn seq_len(&self) -> usize {
        self.input_ids.first().map_or(0, Vec::len)
    }

    pub fn seq(&self, b: usize) -> SeqInput<'_> {
        SeqInput {
            ids: &self.input_ids[b],
            segments: &self.segment_ids[b],
            mask: &self.attention_mask[b],
        }
    }

    pub fn validate(&self) -> Result<()> {
        let (n, t) = (self.len(), self.seq_len());
        let rect = |rows: &[Vec<_>]| rows.len() == n && rows.iter().all(|r| r.len() == t);
        if !self.input_ids.iter().all(|r| r.len() == t)
            || self.segment_ids.len() != n
            || self.attention_mask.len() != n
            || !self.segment_ids.iter().chain(&self.attention_mask).all(|r| r.len() == t)
        {
            return Err(Error::Shape("batch is not rectangular".into()));
        }
        if self.mlm_labels.as_ref().is_some_and(|l| !rect(l))
            || self.token_labels.as_ref().is_some_and(|l| !rect(l))
            || self.pair_labels.as_ref().is_some_and(|l| l.len() != n)
            || self.multilabels.as_ref().is_some_and(|l| l.len() != n)
        {
            return Err(Error::Shape("label arrays do not match the batch".into()));
        }
        Ok(())
    }

    /// Pad pre-training examples to the longest one.
    pub fn from_pretrain(examples: &[&PretrainExample], pad: u32) -> Self {
        let t = examples.iter().map(|e| e.len()).max().unwrap_or(0);
        let mut batch = Batch {
            mlm_labels: Some(Vec::new()),
            pair_labels: Some(Vec::new()),
            ..Default::default()
        };
        for ex in examples {
            let mut ex = (*ex).clone();
            ex.pad_to(t, pad);
            batch.input_ids.push(ex.input_ids);
            batch.segment_ids.push(ex.segment_ids);
            batch.attention_mask.push(ex.attention_mask);
            batch.mlm_labels.as_mut().unwrap().push(ex.mlm_labels);
            batch.pair_labels.as_mut().unwrap().push(ex.pair_label);
        }
        batch
    }

    /// Same batch with every sequence right-padded to `t`.
    pub fn padded_to(&self, t: usize, pad: u32) -> Self {
        let grow = |rows: &[Vec<u32>], v: u32| -> Vec<Vec<u32>> {
            rows.iter().map(|r| r.iter().copied().chain(std::iter::repeat(v)).take(t.max(r.len())).collect()).collect()
        };
        let grow8 = |rows: &[Vec<u8>], v: u8| -> Vec<Vec<u8>> {
            rows.iter().map(|r| r.iter().copied().chain(std::iter::repeat(v)).take(t.max(r.len())).collect()).collect()
        };
        let grow64 = |rows: &[Vec<i64>]| -> Vec<Vec<i64>> {
            rows.iter()
                .map(|r| r.iter().copied().chain(std::iter::repeat(IGNORE_INDEX)).take(t.max(r.len())).collect())
                .collect()
        };
        Batch {
            input_ids: grow(&self.input_ids, pad),
            segment_ids: grow8(&self.segment_ids, 0),
            attention_mask: grow8(&self.attention_mask, 0),
            mlm_labels: self.mlm_labels.as_deref().map(grow64),
            pair_labels: self.pair_labels.clone(),
            token_labels: self.token_labels.as_deref().map(grow64),
            multilabels: self.multilabels.clone(),
        }
    }
}

/// Hidden states and every head's logits for a batch.
#[derive(Debug, Clone)]
pub struct HeadOutputs {
    /// `(B, T, H)`
    pub hidden: Array3<f64>,
    /// `(B, T, vocab)`
    pub mlm: Array3<f64>,
    /// `(B, 2)` from the `[CLS]` position.
    pub pair: Array2<f64>,
    /// `(B, T, num_token_labels)`
    pub token: Array3<f64>,
    /// `(B, num_multilabels)` from the `[CLS]` position.
    pub multilabel: Array2<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Encoder {
    pub config: ModelConfig,
    pub params: Parameters,
}

/// Selected rows of the per-sequence hidden states.
fn gather(hidden: &[Array2<f64>], picks: &[(usize, usize)], h: usize) -> Array2<f64> {
    let mut out = Array2::zeros((picks.len(), h));
    for (r, &(b, t)) in picks.iter().enumerate() {
        out.row_mut(r).assign(&hidden[b].row(t));
    }
    out
}

fn scatter(d_hidden: &mut [Array2<f64>], picks: &[(usize, usize)], d_rows: &Array2<f64>) {
    for (r, &(b, t)) in picks.iter().enumerate() {
        let mut row = d_hidden[b].row_mut(t);
        row += &d_rows.row(r);
    }
}

struct Targets {
    /// `(b, t)` and class for every labelled position.
    picks: Vec<(usize, usize)>,
    classes: Vec<usize>,
}

fn position_targets(labels: &[Vec<i64>], width: usize, what: &str) -> Result<Targets> {
    let mut picks = Vec::new();
    let mut classes = Vec::new();
    for (b, row) in labels.iter().enumerate() {
        for (t, &l) in row.iter().enumerate() {
            if l == IGNORE_INDEX {
                continue;
            }
            if l < 0 || l as usize >= width {
                return Err(Error::Shape(format!("{what} label {l} outside head width {width}")));
            }
            picks.push((b, t));
            classes.push(l as usize);
        }
    }
    Ok(Targets { picks, classes })
}

fn pair_targets(labels: &[Option<u8>]) -> Result<Targets> {
    let mut picks = Vec::new();
    let mut classes = Vec::new();
    for (b, l) in labels.iter().enumerate() {
        if let Some(l) = *l {
            if l > 1 {
                return Err(Error::Shape(format!("pair label {l} is not 0 or 1")));
            }
            picks.push((b, 0));
            classes.push(l as usize);
        }
    }
    Ok(Targets { picks, classes })
}

fn multilabel_targets(labels: &[Vec<u8>], width: usize) -> Result<Array2<f64>> {
    let mut y = Array2::zeros((labels.len(), width));
    for (b, row) in labels.iter().enumerate() {
        if row.len() != width {
            return Err(Error::Config(format!(
                "example has {} labels but the multi-label head has {width}",
                row.len()
            )));
        }
        for (j, &v) in row.iter().enumerate() {
            y[[b, j]] = f64::from(v);
        }
    }
    Ok(y)
}

fn missing(what: &str) -> Error {
    Error::Config(format!("task needs {what} labels but the batch has none"))
}

impl Encoder {
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = stream_rng(seed, Stream::Init, 0);
        let params = Parameters::init(&config, &mut rng);
        Ok(Self { config, params })
    }

    pub fn from_parts(config: ModelConfig, params: Parameters) -> Result<Self> {
        config.validate()?;
        params.check(&config)?;
        Ok(Self { config, params })
    }

    fn forward_all(&self, batch: &Batch, dropout_seed: Option<u64>, exec: Execution) -> Result<Vec<SeqCache>> {
        batch.validate()?;
        parallel::map_indexed(exec, &batch.input_ids, |b, _| {
            let mut rng = dropout_seed.map(|s| stream_rng(s, Stream::Dropout, b as u64));
            forward_seq::<Rng>(&self.params, &self.config, &batch.seq(b), rng.as_mut())
        })
        .into_iter()
        .collect()
    }

    /// Inference-mode forward pass (no dropout) computing every head.
    pub fn forward(&self, batch: &Batch) -> Result<HeadOutputs> {
        self.forward_with(batch, Execution::default())
    }

    pub fn forward_with(&self, batch: &Batch, exec: Execution) -> Result<HeadOutputs> {
        let caches = self.forward_all(batch, None, exec)?;
        let (n, t, h) = (batch.len(), batch.seq_len(), self.config.hidden_size);
        let p = &self.params;
        let mut hidden = Array3::zeros((n, t, h));
        let mut mlm = Array3::zeros((n, t, p.mlm_w.ncols()));
        let mut token = Array3::zeros((n, t, p.token_w.ncols()));
        let mut pair = Array2::zeros((n, 2));
        let mut multilabel = Array2::zeros((n, p.multi_w.ncols()));
        for (b, c) in caches.iter().enumerate() {
            hidden.index_axis_mut(Axis(0), b).assign(&c.output);
            mlm.index_axis_mut(Axis(0), b).assign(&(c.output.dot(&p.mlm_w) + &p.mlm_b));
            token.index_axis_mut(Axis(0), b).assign(&(c.output.dot(&p.token_w) + &p.token_b));
            if t > 0 {
                let cls = c.output.row(0).insert_axis(Axis(0));
                pair.row_mut(b).assign(&(cls.dot(&p.pair_w) + &p.pair_b).row(0));
                multilabel.row_mut(b).assign(&(cls.dot(&p.multi_w) + &p.multi_b).row(0));
            }
        }
        Ok(HeadOutputs {
            hidden,
            mlm,
            pair,
            token,
            multilabel,
        })
    }

    /// Loss of precomputed head outputs against the batch labels.
    pub fn loss(&self, out: &HeadOutputs, batch: &Batch, task: Task) -> Result<LossBreakdown> {
        batch.validate()?;
        let rows = |logits: &Array3<f64>, picks: &[(usize, usize)]| {
            let mut m = Array2::zeros((picks.len(), logits.len_of(Axis(2))));
            for (r, &(b, t)) in picks.iter().enumerate() {
                m.row_mut(r).assign(&logits.slice(ndarray::s![b, t, ..]));
            }
            m
        };
        let mut lb = LossBreakdown::default();
        if task.uses_mlm() {
            let labels = batch.mlm_labels.as_ref().ok_or_else(|| missing("MLM"))?;
            let tg = position_targets(labels, self.config.vocab_size, "MLM")?;
            lb.no_mlm_targets = tg.picks.is_empty();
            lb.mlm = softmax_cross_entropy(rows(&out.mlm, &tg.picks).view(), &tg.classes).0;
        }
        if task.uses_pair() {
            let labels = batch.pair_labels.as_ref().ok_or_else(|| missing("pair"))?;
            let tg = pair_targets(labels)?;
            let logits = out.pair.select(Axis(0), &tg.picks.iter().map(|p| p.0).collect::<Vec<_>>());
            lb.pair = softmax_cross_entropy(logits.view(), &tg.classes).0;
        }
        if task == Task::Ner {
            let labels = batch.token_labels.as_ref().ok_or_else(|| missing("token"))?;
            let tg = position_targets(labels, self.config.num_token_labels, "token")?;
            lb.ner = softmax_cross_entropy(rows(&out.token, &tg.picks).view(), &tg.classes).0;
        }
        if task == Task::Multilabel {
            let labels = batch.multilabels.as_ref().ok_or_else(|| missing("multi-label"))?;
            let y = multilabel_targets(labels, self.config.num_multilabels)?;
            lb.multilabel = sigmoid_bce(out.multilabel.view(), &y).0;
        }
        lb.total = lb.mlm + lb.pair + lb.ner + lb.multilabel;
        Ok(lb)
    }

    /// Loss and gradients of `scale * loss` for every parameter. With a
    /// `dropout_seed` the pass runs in training mode.
    pub fn gradients(
        &self,
        batch: &Batch,
        task: Task,
        scale: f64,
        dropout_seed: Option<u64>,
        exec: Execution,
    ) -> Result<(LossBreakdown, Parameters)> {
        let caches = self.forward_all(batch, dropout_seed, exec)?;
        let p = &self.params;
        let h = self.config.hidden_size;
        let hidden: Vec<Array2<f64>> = caches.iter().map(|c| c.output.clone()).collect();
        let mut d_hidden: Vec<Array2<f64>> = hidden.iter().map(|x| Array2::zeros(x.raw_dim())).collect();
        let mut grads = p.zeros_like();
        let mut lb = LossBreakdown::default();

        // (rows of hidden, head weight, head bias) -> logits, then the loss
        // gradient flows back into the weights and the picked rows.
        let mut head = |picks: &[(usize, usize)],
                        w: &Array2<f64>,
                        dlogits: &LossGrad<'_>,
                        gw: &mut Array2<f64>,
                        gb: &mut Array2<f64>,
                        b: &Array2<f64>|
         -> f64 {
            let x = gather(&hidden, picks, h);
            let logits = x.dot(w) + b;
            let (loss, mut d) = dlogits(&logits);
            d *= scale;
            *gw += &x.t().dot(&d);
            *gb += &d.sum_axis(Axis(0)).insert_axis(Axis(0));
            scatter(&mut d_hidden, picks, &d.dot(&w.t()));
            loss
        };

        if task.uses_mlm() {
            let labels = batch.mlm_labels.as_ref().ok_or_else(|| missing("MLM"))?;
            let tg = position_targets(labels, self.config.vocab_size, "MLM")?;
            lb.no_mlm_targets = tg.picks.is_empty();
            let ce = |z: &Array2<f64>| softmax_cross_entropy(z.view(), &tg.classes);
            lb.mlm = head(&tg.picks, &p.mlm_w, &ce, &mut grads.mlm_w, &mut grads.mlm_b, &p.mlm_b);
        }
        if task.uses_pair() {
            let labels = batch.pair_labels.as_ref().ok_or_else(|| missing("pair"))?;
            let tg = pair_targets(labels)?;
            let ce = |z: &Array2<f64>| softmax_cross_entropy(z.view(), &tg.classes);
            lb.pair = head(&tg.picks, &p.pair_w, &ce, &mut grads.pair_w, &mut grads.pair_b, &p.pair_b);
        }
        if task == Task::Ner {
            let labels = batch.token_labels.as_ref().ok_or_else(|| missing("token"))?;
            let tg = position_targets(labels, self.config.num_token_labels, "token")?;
            let ce = |z: &Array2<f64>| softmax_cross_entropy(z.view(), &tg.classes);
            lb.ner = head(&tg.picks, &p.token_w, &ce, &mut grads.token_w, &mut grads.token_b, &p.token_b);
        }
        if task == Task::Multilabel {
            let labels = batch.multilabels.as_ref().ok_or_else(|| missing("multi-label"))?;
            let y = multilabel_targets(labels, self.config.num_multilabels)?;
            let picks: Vec<(usize, usize)> = (0..batch.len()).map(|b| (b, 0)).collect();
            let bce = |z: &Array2<f64>| sigmoid_bce(z.view(), &y);
            lb.multilabel = head(&picks, &p.multi_w, &bce, &mut grads.multi_w, &mut grads.multi_b, &p.multi_b);
        }
        lb.total = lb.mlm + lb.pair + lb.ner + lb.multilabel;

        let items: Vec<(usize, Array2<f64>)> = d_hidden.into_iter().enumerate().collect();
        let body = parallel::map(exec, &items, |(b, d)| {
            let mut g = p.zeros_like();
            if d.iter().any(|&v| v != 0.0) {
                backward_seq(p, &self.config, &batch.seq(*b), &caches[*b], d.clone(), &mut g);
            }
            g
        });
        for g in &body {
            grads.add_assign(g);
        }
        Ok((lb, grads))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn batch(n: usize, t: usize, vocab: u32) -> Batch {
        let ids: Vec<Vec<u32>> = (0..n)
            .map(|b| (0..t).map(|i| 5 + ((b * 7 + i * 3) as u32 % (vocab - 5))).collect())
            .collect();
        let mlm: Vec<Vec<i64>> = (0..n)
            .map(|b| (0..t).map(|i| if (i + b) % 4 == 1 { (6 + i) as i64 } else { IGNORE_INDEX }).collect())
            .collect();
        Batch {
            input_ids: ids,
            segment_ids: vec![vec![0; t]; n],
            attention_mask: vec![vec![1; t]; n],
            mlm_labels: Some(mlm),
            pair_labels: Some((0..n).map(|b| Some((b % 2) as u8)).collect()),
            ..Default::default()
        }
    }

    #[test]
    fn output_shapes() {
        let enc = Encoder::new(ModelConfig::desk(), 1).unwrap();
        let out = enc.forward(&batch(2, 16, 200)).unwrap();
        assert_eq!(out.mlm.dim(), (2, 16, 200));
        assert_eq!(out.hidden.dim(), (2, 16, 32));
        assert_eq!(out.pair.dim(), (2, 2));
    }

    #[test]
    fn loss_and_gradient_paths_agree() {
        let enc = Encoder::new(ModelConfig::desk(), 2).unwrap();
        let b = batch(3, 10, 200);
        let out = enc.forward(&b).unwrap();
        let direct = enc.loss(&out, &b, Task::MlmPair).unwrap();
        let (via_grad, _) = enc.gradients(&b, Task::MlmPair, 1.0, None, Execution::Sequential).unwrap();
        assert!((direct.total - via_grad.total).abs() < 1e-12);
        assert!((direct.mlm + direct.pair - direct.total).abs() < 1e-15);
    }

    #[test]
    fn all_padding_batch_is_finite_with_zero_loss() {
        let enc = Encoder::new(ModelConfig::desk(), 3).unwrap();
        let b = Batch {
            input_ids: vec![vec![0; 8]; 2],
            segment_ids: vec![vec![0; 8]; 2],
            attention_mask: vec![vec![0; 8]; 2],
            mlm_labels: Some(vec![vec![IGNORE_INDEX; 8]; 2]),
            ..Default::default()
        };
        let out = enc.forward(&b).unwrap();
        assert!(out.mlm.iter().all(|v| v.is_finite()));
        let (lb, g) = enc.gradients(&b, Task::Mlm, 1.0, None, Execution::Sequential).unwrap();
        assert_eq!(lb.total, 0.0);
        assert!(lb.no_mlm_targets);
        assert!(g.named().iter().all(|(_, t)| t.iter().all(|&v| v == 0.0)));
    }

    #[test]
    fn missing_labels_are_a_config_error() {
        let enc = Encoder::new(ModelConfig::desk(), 3).unwrap();
        let mut b = batch(2, 6, 200);
        b.mlm_labels = None;
        assert!(matches!(
            enc.gradients(&b, Task::Mlm, 1.0, None, Execution::Sequential),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn overlong_input_is_rejected() {
        let enc = Encoder::new(ModelConfig::desk(), 3).unwrap();
        let b = batch(1, 129, 200);
        assert!(matches!(enc.forward(&b), Err(Error::Shape(_))));
    }
}
