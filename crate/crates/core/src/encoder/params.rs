//! Named parameter tensors. Every tensor is a 2-D array; biases and
//! layer-norm vectors are single rows.

use ndarray::Array2;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::config::ModelConfig;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub wq: Array2<f64>,
    pub bq: Array2<f64>,
    pub wk: Array2<f64>,
    pub bk: Array2<f64>,
    pub wv: Array2<f64>,
    pub bv: Array2<f64>,
    pub wo: Array2<f64>,
    pub bo: Array2<f64>,
    pub ln1_gamma: Array2<f64>,
    pub ln1_beta: Array2<f64>,
    pub w1: Array2<f64>,
    pub b1: Array2<f64>,
    pub w2: Array2<f64>,
    pub b2: Array2<f64>,
    pub ln2_gamma: Array2<f64>,
    pub ln2_beta: Array2<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Parameters {
    pub tok_emb: Array2<f64>,
    pub pos_emb: Array2<f64>,
    pub seg_emb: Array2<f64>,
    pub emb_ln_gamma: Array2<f64>,
    pub emb_ln_beta: Array2<f64>,
    pub layers: Vec<Layer>,
    pub mlm_w: Array2<f64>,
    pub mlm_b: Array2<f64>,
    pub pair_w: Array2<f64>,
    pub pair_b: Array2<f64>,
    pub token_w: Array2<f64>,
    pub token_b: Array2<f64>,
    pub multi_w: Array2<f64>,
    pub multi_b: Array2<f64>,
}

macro_rules! named_layer {
    ($layer:expr, $i:expr) => {{
        let Layer {
            wq, bq, wk, bk, wv, bv, wo, bo, ln1_gamma, ln1_beta, w1, b1, w2, b2, ln2_gamma, ln2_beta,
        } = $layer;
        let p = |n: &str| format!("layer.{}.{}", $i, n);
        vec![
            (p("query.weight"), wq),
            (p("query.bias"), bq),
            (p("key.weight"), wk),
            (p("key.bias"), bk),
            (p("value.weight"), wv),
            (p("value.bias"), bv),
            (p("attn_out.weight"), wo),
            (p("attn_out.bias"), bo),
            (p("ln1.gamma"), ln1_gamma),
            (p("ln1.beta"), ln1_beta),
            (p("ffn_in.weight"), w1),
            (p("ffn_in.bias"), b1),
            (p("ffn_out.weight"), w2),
            (p("ffn_out.bias"), b2),
            (p("ln2.gamma"), ln2_gamma),
            (p("ln2.beta"), ln2_beta),
        ]
    }};
}

macro_rules! named_all {
    ($params:expr) => {{
        let Parameters {
            tok_emb, pos_emb, seg_emb, emb_ln_gamma, emb_ln_beta, layers, mlm_w, mlm_b, pair_w, pair_b,
            token_w, token_b, multi_w, multi_b,
        } = $params;
        let mut v = vec![
            ("embeddings.token".to_string(), tok_emb),
            ("embeddings.position".to_string(), pos_emb),
            ("embeddings.segment".to_string(), seg_emb),
            ("embeddings.ln.gamma".to_string(), emb_ln_gamma),
            ("embeddings.ln.beta".to_string(), emb_ln_beta),
        ];
        for (i, l) in layers.into_iter().enumerate() {
            v.extend(named_layer!(l, i));
        }
        v.extend([
            ("head.mlm.weight".to_string(), mlm_w),
            ("head.mlm.bias".to_string(), mlm_b),
            ("head.pair.weight".to_string(), pair_w),
            ("head.pair.bias".to_string(), pair_b),
            ("head.token.weight".to_string(), token_w),
            ("head.token.bias".to_string(), token_b),
            ("head.multilabel.weight".to_string(), multi_w),
            ("head.multilabel.bias".to_string(), multi_b),
        ]);
        v
    }};
}

fn normal<R: Rng + ?Sized>(rows: usize, cols: usize, std: f64, rng: &mut R) -> Array2<f64> {
    let dist = Normal::new(0.0, std).expect("std is finite and non-negative");
    Array2::from_shape_simple_fn((rows, cols), || dist.sample(rng))
}

impl Parameters {
    pub fn init<R: Rng + ?Sized>(c: &ModelConfig, rng: &mut R) -> Self {
        let (h, i, s) = (c.hidden_size, c.intermediate_size, c.initializer_range);
        let zeros = |n: usize| Array2::zeros((1, n));
        let ones = |n: usize| Array2::ones((1, n));
        let tok_emb = normal(c.vocab_size, h, s, rng);
        let pos_emb = normal(c.max_position_embeddings, h, s, rng);
        let seg_emb = normal(c.type_vocab_size, h, s, rng);
        let layers = (0..c.num_hidden_layers)
            .map(|_| Layer {
                wq: normal(h, h, s, rng),
                bq: zeros(h),
                wk: normal(h, h, s, rng),
                bk: zeros(h),
                wv: normal(h, h, s, rng),
                bv: zeros(h),
                wo: normal(h, h, s, rng),
                bo: zeros(h),
                ln1_gamma: ones(h),
                ln1_beta: zeros(h),
                w1: normal(h, i, s, rng),
                b1: zeros(i),
                w2: normal(i, h, s, rng),
                b2: zeros(h),
                ln2_gamma: ones(h),
                ln2_beta: zeros(h),
            })
            .collect();
        Self {
            tok_emb,
            pos_emb,
            seg_emb,
            emb_ln_gamma: ones(h),
            emb_ln_beta: zeros(h),
            layers,
            mlm_w: normal(h, c.vocab_size, s, rng),
            mlm_b: zeros(c.vocab_size),
            pair_w: normal(h, 2, s, rng),
            pair_b: zeros(2),
            token_w: normal(h, c.num_token_labels, s, rng),
            token_b: zeros(c.num_token_labels),
            multi_w: normal(h, c.num_multilabels, s, rng),
            multi_b: zeros(c.num_multilabels),
        }
    }

    pub fn named(&self) -> Vec<(String, &Array2<f64>)> {
        named_all!(self)
    }

    pub fn named_mut(&mut self) -> Vec<(String, &mut Array2<f64>)> {
        named_all!(self)
    }

    pub fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        for (_, t) in z.named_mut() {
            t.fill(0.0);
        }
        z
    }

    pub fn num_scalars(&self) -> usize {
        self.named().iter().map(|(_, t)| t.len()).sum()
    }

    pub fn all_finite(&self) -> bool {
        self.named().iter().all(|(_, t)| t.iter().all(|x| x.is_finite()))
    }

    /// `self += other`, tensor by tensor.
    pub fn add_assign(&mut self, other: &Parameters) {
        for ((_, a), (_, b)) in self.named_mut().into_iter().zip(other.named()) {
            *a += b;
        }
    }

    pub fn scale(&mut self, k: f64) {
        for (_, t) in self.named_mut() {
            t.mapv_inplace(|x| x * k);
        }
    }

    /// Replace the token-classification head with a fresh one of `n` labels.
    pub fn reset_token_head<R: Rng + ?Sized>(&mut self, n: usize, std: f64, rng: &mut R) {
        let h = self.tok_emb.ncols();
        self.token_w = normal(h, n, std, rng);
        self.token_b = Array2::zeros((1, n));
    }

    pub fn reset_multilabel_head<R: Rng + ?Sized>(&mut self, n: usize, std: f64, rng: &mut R) {
        let h = self.tok_emb.ncols();
        self.multi_w = normal(h, n, std, rng);
        self.multi_b = Array2::zeros((1, n));
    }

    /// Shapes consistent with `c`, values finite.
    pub fn check(&self, c: &ModelConfig) -> Result<()> {
        let expected = Parameters::shape_template(c);
        let mine = self.named();
        let theirs = expected.named();
        if mine.len() != theirs.len() {
            return Err(Error::Shape(format!(
                "expected {} tensors, found {}",
                theirs.len(),
                mine.len()
            )));
        }
        for ((name, a), (_, b)) in mine.iter().zip(theirs.iter()) {
            if a.dim() != b.dim() {
                return Err(Error::Shape(format!("{name}: {:?} vs expected {:?}", a.dim(), b.dim())));
            }
        }
        if !self.all_finite() {
            return Err(Error::Shape("non-finite parameter values".into()));
        }
        Ok(())
    }

    fn shape_template(c: &ModelConfig) -> Self {
        let mut rng = crate::rng::stream_rng(0, crate::rng::Stream::Init, 0);
        let mut c = c.clone();
        c.initializer_range = 0.0;
        Parameters::init(&c, &mut rng)
    }

    pub fn to_tensors(&self) -> Vec<NamedTensor> {
        self.named()
            .into_iter()
            .map(|(name, t)| NamedTensor {
                name,
                rows: t.nrows(),
                cols: t.ncols(),
                data: t.iter().copied().collect(),
            })
            .collect()
    }

    pub fn from_tensors(c: &ModelConfig, tensors: Vec<NamedTensor>) -> Result<Self> {
        let mut p = Parameters::shape_template(c);
        let slots = p.named_mut();
        if slots.len() != tensors.len() {
            return Err(Error::Shape(format!(
                "checkpoint has {} tensors, config implies {}",
                tensors.len(),
                slots.len()
            )));
        }
        for ((name, slot), t) in slots.into_iter().zip(tensors) {
            if name != t.name || slot.dim() != (t.rows, t.cols) || t.data.len() != t.rows * t.cols {
                return Err(Error::Shape(format!(
                    "tensor `{}` ({}x{}) does not match `{}` {:?}",
                    t.name,
                    t.rows,
                    t.cols,
                    name,
                    slot.dim()
                )));
            }
            *slot = Array2::from_shape_vec((t.rows, t.cols), t.data)
                .map_err(|e| Error::Shape(e.to_string()))?;
        }
        Ok(p)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedTensor {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

/// Biases and layer-norm parameters are exempt from weight decay.
pub fn decays(name: &str) -> bool {
    !(name.ends_with(".bias") || name.ends_with(".gamma") || name.ends_with(".beta"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream_rng, Stream};

    #[test]
    fn names_are_unique_and_shapes_follow_config() {
        let mut c = ModelConfig::desk();
        c.num_token_labels = 5;
        let p = Parameters::init(&c, &mut stream_rng(0, Stream::Init, 0));
        let names: std::collections::HashSet<_> = p.named().into_iter().map(|(n, _)| n).collect();
        assert_eq!(names.len(), 5 + 16 * c.num_hidden_layers + 8);
        assert_eq!(p.tok_emb.dim(), (200, 32));
        assert_eq!(p.token_w.dim(), (32, 5));
        assert_eq!(p.multi_w.dim(), (32, 0));
        p.check(&c).unwrap();
        c.hidden_size = 16;
        assert!(p.check(&c).is_err());
    }

    #[test]
    fn tensors_round_trip() {
        let c = ModelConfig::desk();
        let p = Parameters::init(&c, &mut stream_rng(1, Stream::Init, 0));
        let back = Parameters::from_tensors(&c, p.to_tensors()).unwrap();
        assert_eq!(back, p);
    }

    #[test]
    fn decay_mask() {
        assert!(decays("layer.0.query.weight"));
        assert!(decays("embeddings.token"));
        assert!(!decays("layer.1.ln2.gamma"));
        assert!(!decays("head.mlm.bias"));
    }
}
