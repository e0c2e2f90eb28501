use super::config::TrainConfig;
use super::params::{decays, Parameters};

/// One AdamW step over a flat slice (decoupled weight decay).
#[allow(clippy::too_many_arguments)]
pub fn adamw_update(
    p: &mut [f64],
    g: &[f64],
    m: &mut [f64],
    v: &mut [f64],
    step: u64,
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    weight_decay: f64,
) {
    let bc1 = 1.0 - beta1.powi(step as i32);
    let bc2 = 1.0 - beta2.powi(step as i32);
    for i in 0..p.len() {
        p[i] *= 1.0 - lr * weight_decay;
        m[i] = beta1 * m[i] + (1.0 - beta1) * g[i];
        v[i] = beta2 * v[i] + (1.0 - beta2) * g[i] * g[i];
        let mhat = m[i] / bc1;
        let vhat = v[i] / bc2;
        p[i] -= lr * mhat / (vhat.sqrt() + eps);
    }
}

/// Linear warmup from zero to the base rate, then linear decay to zero.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearWarmup {
    pub base: f64,
    pub warmup: usize,
    pub total: usize,
}

impl LinearWarmup {
    pub fn new(base: f64, warmup_fraction: f64, total: usize) -> Self {
        let warmup = ((warmup_fraction * total as f64).round() as usize).min(total);
        Self { base, warmup, total }
    }

    /// Rate used for the update numbered `step` (0-based).
    pub fn lr(&self, step: usize) -> f64 {
        if step < self.warmup {
            return self.base * step as f64 / self.warmup as f64;
        }
        if self.total <= self.warmup {
            return self.base;
        }
        let left = self.total.saturating_sub(step) as f64;
        self.base * (left / (self.total - self.warmup) as f64).max(0.0)
    }
}

#[derive(Debug, Clone)]
pub struct AdamW {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    m: Parameters,
    v: Parameters,
    step: u64,
}

impl AdamW {
    pub fn new(params: &Parameters, cfg: &TrainConfig) -> Self {
        Self {
            beta1: cfg.beta1,
            beta2: cfg.beta2,
            eps: cfg.eps,
            weight_decay: cfg.weight_decay,
            m: params.zeros_like(),
            v: params.zeros_like(),
            step: 0,
        }
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    pub fn step(&mut self, params: &mut Parameters, grads: &Parameters, lr: f64) {
        self.step += 1;
        let named = params.named_mut();
        let gs = grads.named();
        let ms = self.m.named_mut();
        let vs = self.v.named_mut();
        for ((((name, p), (_, g)), (_, m)), (_, v)) in named.into_iter().zip(gs).zip(ms).zip(vs) {
            let wd = if decays(&name) { self.weight_decay } else { 0.0 };
            adamw_update(
                p.as_slice_mut().expect("standard layout"),
                g.as_slice().expect("standard layout"),
                m.as_slice_mut().expect("standard layout"),
                v.as_slice_mut().expect("standard layout"),
                self.step,
                lr,
                self.beta1,
                self.beta2,
                self.eps,
                wd,
            );
        }
    }
}
