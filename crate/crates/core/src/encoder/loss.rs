//! Task heads and their losses.

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

/// Which heads contribute to the objective.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    Mlm,
    Pair,
    MlmPair,
    Ner,
    Multilabel,
}

impl Task {
    pub fn uses_mlm(self) -> bool {
        matches!(self, Task::Mlm | Task::MlmPair)
    }

    pub fn uses_pair(self) -> bool {
        matches!(self, Task::Pair | Task::MlmPair)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub total: f64,
    pub mlm: f64,
    pub pair: f64,
    pub ner: f64,
    pub multilabel: f64,
    /// Set when the MLM term was requested but no position had a target.
    pub no_mlm_targets: bool,
}

/// Mean softmax cross-entropy over rows and its gradient w.r.t. the logits.
pub fn softmax_cross_entropy(logits: ArrayView2<'_, f64>, targets: &[usize]) -> (f64, Array2<f64>) {
    let m = targets.len();
    let mut grad = Array2::zeros(logits.raw_dim());
    if m == 0 {
        return (0.0, grad);
    }
    let mut total = 0.0;
    for (r, &y) in targets.iter().enumerate() {
        let row = logits.row(r);
        let max = row.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        let sum: f64 = row.iter().map(|&z| (z - max).exp()).sum();
        let lse = max + sum.ln();
        total += lse - row[y];
        for (c, &z) in row.iter().enumerate() {
            grad[[r, c]] = (z - lse).exp() / m as f64;
        }
        grad[[r, y]] -= 1.0 / m as f64;
    }
    (total / m as f64, grad)
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Mean binary cross-entropy with logits over every cell, and its gradient.
pub fn sigmoid_bce(logits: ArrayView2<'_, f64>, targets: &Array2<f64>) -> (f64, Array2<f64>) {
    let n = logits.len();
    if n == 0 {
        return (0.0, Array2::zeros(logits.raw_dim()));
    }
    let mut total = 0.0;
    let mut grad = Array2::zeros(logits.raw_dim());
    for ((idx, &z), &y) in logits.indexed_iter().zip(targets.iter()) {
        total += z.max(0.0) - z * y + (-z.abs()).exp().ln_1p();
        grad[idx] = (sigmoid(z) - y) / n as f64;
    }
    (total / n as f64, grad)
}
