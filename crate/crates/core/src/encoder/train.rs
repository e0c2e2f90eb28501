use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::config::TrainConfig;
use super::loss::Task;
use super::optim::{AdamW, LinearWarmup};
use super::{Batch, Encoder};
use crate::error::{Error, Result};
use crate::parallel::Execution;
use crate::pretrain::PretrainExample;
use crate::rng::{derive_seed, stream_rng, Stream};

/// Anything that can be stacked into a padded [`Batch`].
pub trait Collate: Sync + Sized {
    fn collate(items: &[&Self], pad: u32) -> Batch;
}

impl Collate for PretrainExample {
    fn collate(items: &[&Self], pad: u32) -> Batch {
        Batch::from_pretrain(items, pad)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossPoint {
    pub step: usize,
    pub epoch: usize,
    pub lr: f64,
    pub loss: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainOutcome {
    pub curve: Vec<LossPoint>,
    /// Mean training loss of each finished epoch.
    pub epoch_losses: Vec<f64>,
}

impl TrainOutcome {
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path).map_err(|e| Error::io(path, e.into()))?;
        for p in &self.curve {
            w.serialize(p)?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn read_csv(path: &Path) -> Result<Vec<LossPoint>> {
        let mut r = csv::Reader::from_path(path).map_err(|e| Error::io(path, e.into()))?;
        r.deserialize().map(|row| row.map_err(Error::from)).collect()
    }
}

/// Trailing moving average with the given window.
pub fn smoothed(values: &[f64], window: usize) -> Vec<f64> {
    let w = window.max(1);
    let mut out = Vec::with_capacity(values.len());
    let mut sum = 0.0;
    for (i, v) in values.iter().enumerate() {
        sum += v;
        if i >= w {
            sum -= values[i - w];
        }
        out.push(sum / (i + 1).min(w) as f64);
    }
    out
}

/// Train `encoder` on `data`. `on_epoch(epoch, encoder)` runs after each
/// finished epoch, e.g. for validation.
pub fn train<T, F>(
    encoder: &mut Encoder,
    data: &[T],
    cfg: &TrainConfig,
    task: Task,
    pad: u32,
    exec: Execution,
    mut on_epoch: F,
) -> Result<TrainOutcome>
where
    T: Collate,
    F: FnMut(usize, &Encoder) -> Result<()>,
{
    cfg.validate()?;
    if data.is_empty() {
        return Err(Error::InvalidArgument("no training examples".into()));
    }
    let total = cfg.total_steps(data.len());
    let schedule = LinearWarmup::new(cfg.learning_rate, cfg.warmup_fraction, total);
    let mut opt = AdamW::new(&encoder.params, cfg);
    let mut outcome = TrainOutcome::default();
    let mut step = 0;
    let mut epoch = 0;
    while step < total {
        let mut order: Vec<usize> = (0..data.len()).collect();
        order.shuffle(&mut stream_rng(cfg.seed, Stream::Shuffle, epoch as u64));
        let mut epoch_sum = 0.0;
        let mut batches = 0;
        for chunk in order.chunks(cfg.batch_size) {
            if step >= total {
                break;
            }
            let items: Vec<&T> = chunk.iter().map(|&i| &data[i]).collect();
            let batch = T::collate(&items, pad);
            let lr = schedule.lr(step);
            let seed = derive_seed(cfg.seed, Stream::Dropout, step as u64);
            let (lb, grads) = encoder.gradients(&batch, task, 1.0, Some(seed), exec)?;
            if !lb.total.is_finite() || !grads.all_finite() {
                return Err(Error::NonFiniteLoss { step });
            }
            opt.step(&mut encoder.params, &grads, lr);
            outcome.curve.push(LossPoint {
                step,
                epoch,
                lr,
                loss: lb.total,
            });
            epoch_sum += lb.total;
            batches += 1;
            step += 1;
        }
        outcome.epoch_losses.push(epoch_sum / batches.max(1) as f64);
        on_epoch(epoch, encoder)?;
        epoch += 1;
    }
    Ok(outcome)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn moving_average() {
        assert_eq!(smoothed(&[2.0, 4.0, 6.0, 8.0], 2), vec![2.0, 3.0, 5.0, 7.0]);
    }
}
