use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Architecture hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub vocab_size: usize,
    pub max_position_embeddings: usize,
    pub num_attention_heads: usize,
    pub num_hidden_layers: usize,
    pub hidden_size: usize,
    pub intermediate_size: usize,
    pub type_vocab_size: usize,
    pub dropout: f64,
    pub layer_norm_eps: f64,
    pub initializer_range: f64,
    /// Width of the token-classification head (0 = absent).
    pub num_token_labels: usize,
    /// Width of the multi-label head (0 = absent).
    pub num_multilabels: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self::desk()
    }
}

impl ModelConfig {
    /// BERT-base dimensions with a 32,000-token vocabulary.
    pub fn bert_base() -> Self {
        Self {
            vocab_size: 32_000,
            max_position_embeddings: 512,
            num_attention_heads: 12,
            num_hidden_layers: 12,
            hidden_size: 768,
            intermediate_size: 3072,
            type_vocab_size: 2,
            dropout: 0.1,
            layer_norm_eps: 1e-12,
            initializer_range: 0.02,
            num_token_labels: 0,
            num_multilabels: 0,
        }
    }

    /// Small enough to train and gradient-check on a laptop core.
    pub fn desk() -> Self {
        Self {
            vocab_size: 200,
            max_position_embeddings: 128,
            num_attention_heads: 2,
            num_hidden_layers: 2,
            hidden_size: 32,
            intermediate_size: 64,
            type_vocab_size: 2,
            dropout: 0.1,
            layer_norm_eps: 1e-12,
            initializer_range: 0.02,
            num_token_labels: 0,
            num_multilabels: 0,
        }
    }

    pub fn head_dim(&self) -> usize {
        self.hidden_size / self.num_attention_heads
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if self.num_attention_heads == 0 || !self.hidden_size.is_multiple_of(self.num_attention_heads) {
            return fail(format!(
                "hidden_size {} is not divisible by num_attention_heads {}",
                self.hidden_size, self.num_attention_heads
            ));
        }
        if self.vocab_size == 0 || self.max_position_embeddings == 0 || self.intermediate_size == 0 {
            return fail("vocab, position and intermediate sizes must be positive".into());
        }
        if self.type_vocab_size == 0 {
            return fail("type_vocab_size must be positive".into());
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return fail(format!("dropout {} outside [0, 1)", self.dropout));
        }
        Ok(())
    }
}

/// Optimisation hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub epochs: usize,
    /// Stop after this many optimizer steps (the schedule spans them).
    pub max_steps: Option<usize>,
    pub learning_rate: f64,
    pub warmup_fraction: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self::finetuning()
    }
}

impl TrainConfig {
    /// Batch 16, one epoch.
    pub fn pretraining() -> Self {
        Self {
            batch_size: 16,
            ..Self::finetuning()
        }
    }

    /// Batch 128, one epoch, AdamW at 4e-5 with linear warmup and decay.
    pub fn finetuning() -> Self {
        Self {
            batch_size: 128,
            epochs: 1,
            max_steps: None,
            learning_rate: 4e-5,
            warmup_fraction: 0.1,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.01,
            seed: 42,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.learning_rate.is_nan() || self.learning_rate <= 0.0 {
            return Err(Error::Config("learning_rate must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.warmup_fraction) {
            return Err(Error::Config("warmup_fraction must lie in [0, 1]".into()));
        }
        if self.batch_size == 0 || (self.epochs == 0 && self.max_steps.is_none()) {
            return Err(Error::Config("batch_size and epochs must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) || self.eps <= 0.0 {
            return Err(Error::Config("invalid Adam betas or eps".into()));
        }
        Ok(())
    }

    /// Total optimizer steps for `n` training examples.
    pub fn total_steps(&self, n: usize) -> usize {
        match self.max_steps {
            Some(s) => s,
            None => self.epochs * n.div_ceil(self.batch_size),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_validate() {
        ModelConfig::desk().validate().unwrap();
        let base = ModelConfig::bert_base();
        base.validate().unwrap();
        assert_eq!(base.head_dim(), 64);
        TrainConfig::pretraining().validate().unwrap();
        assert_eq!(TrainConfig::finetuning().batch_size, 128);
    }

    #[test]
    fn invalid_configs_fail() {
        let mut c = ModelConfig::desk();
        c.num_attention_heads = 3;
        assert!(c.validate().is_err());
        let mut t = TrainConfig {
            learning_rate: 0.0,
            ..Default::default()
        };
        assert!(t.validate().is_err());
        t.learning_rate = 1e-3;
        t.warmup_fraction = 1.5;
        assert!(t.validate().is_err());
    }
}
