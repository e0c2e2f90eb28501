//! Transformer encoder forward and backward passes for a single sequence.
//!
//! Post-LN BERT layout: embeddings (token + position + segment) then
//! layer-norm; each layer is multi-head self-attention with a key padding
//! mask, residual, layer-norm, a GELU feed-forward block, residual,
//! layer-norm. Gradients are derived by hand; the finite-difference tests
//! in `tests/gradients.rs` keep them honest.

use ndarray::{s, Array1, Array2, Axis};
use rand::Rng;

use super::config::ModelConfig;
use super::params::Parameters;
use crate::error::{Error, Result};

/// Added to attention scores of padded keys.
const MASKED_SCORE: f64 = -1.0e4;

#[derive(Debug, Clone, Copy)]
pub struct SeqInput<'a> {
    pub ids: &'a [u32],
    pub segments: &'a [u8],
    pub mask: &'a [u8],
}

impl SeqInput<'_> {
    pub fn check(&self, c: &ModelConfig) -> Result<()> {
        let t = self.ids.len();
        if self.segments.len() != t || self.mask.len() != t {
            return Err(Error::Shape("ids, segments and mask differ in length".into()));
        }
        if t > c.max_position_embeddings {
            return Err(Error::Shape(format!(
                "sequence of {t} exceeds max_position_embeddings {}",
                c.max_position_embeddings
            )));
        }
        if let Some(&id) = self.ids.iter().find(|&&id| id as usize >= c.vocab_size) {
            return Err(Error::Shape(format!("token id {id} outside vocab_size {}", c.vocab_size)));
        }
        if self.segments.iter().any(|&s| s as usize >= c.type_vocab_size) {
            return Err(Error::Shape("segment id outside type_vocab_size".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
struct LnCache {
    xhat: Array2<f64>,
    inv_std: Array1<f64>,
}

fn layer_norm(x: &Array2<f64>, gamma: &Array2<f64>, beta: &Array2<f64>, eps: f64) -> (Array2<f64>, LnCache) {
    let n = x.ncols() as f64;
    let mut xhat = x.clone();
    let mut inv_std = Array1::zeros(x.nrows());
    for (mut row, inv) in xhat.rows_mut().into_iter().zip(inv_std.iter_mut()) {
        let mean = row.sum() / n;
        row.mapv_inplace(|v| v - mean);
        let var = row.iter().map(|v| v * v).sum::<f64>() / n;
        *inv = 1.0 / (var + eps).sqrt();
        let k = *inv;
        row.mapv_inplace(|v| v * k);
    }
    let y = &xhat * gamma + beta;
    (y, LnCache { xhat, inv_std })
}

/// Returns `(dx, dgamma, dbeta)`.
fn layer_norm_backward(dy: &Array2<f64>, cache: &LnCache, gamma: &Array2<f64>) -> (Array2<f64>, Array2<f64>, Array2<f64>) {
    let n = dy.ncols() as f64;
    let dgamma = (dy * &cache.xhat).sum_axis(Axis(0)).insert_axis(Axis(0));
    let dbeta = dy.sum_axis(Axis(0)).insert_axis(Axis(0));
    let dxhat = dy * gamma;
    let mut dx = Array2::zeros(dy.raw_dim());
    for r in 0..dy.nrows() {
        let g = dxhat.row(r);
        let xh = cache.xhat.row(r);
        let mean_g = g.sum() / n;
        let mean_gx = g.iter().zip(xh.iter()).map(|(a, b)| a * b).sum::<f64>() / n;
        let inv = cache.inv_std[r];
        for c in 0..dy.ncols() {
            dx[[r, c]] = inv * (g[c] - mean_g - xh[c] * mean_gx);
        }
    }
    (dx, dgamma, dbeta)
}

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2 / pi)
const GELU_K: f64 = 0.044_715;

/// Tanh approximation of GELU.
pub fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + (GELU_C * (x + GELU_K * x * x * x)).tanh())
}

pub fn gelu_grad(x: f64) -> f64 {
    let t = (GELU_C * (x + GELU_K * x * x * x)).tanh();
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * GELU_C * (1.0 + 3.0 * GELU_K * x * x)
}

fn dropout_mask<R: Rng + ?Sized>(rows: usize, cols: usize, p: f64, rng: &mut R) -> Array2<f64> {
    let keep = 1.0 / (1.0 - p);
    Array2::from_shape_simple_fn((rows, cols), || if rng.random::<f64>() < p { 0.0 } else { keep })
}

fn softmax_rows(scores: &mut Array2<f64>) {
    for mut row in scores.rows_mut() {
        let max = row.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
        row.mapv_inplace(|v| (v - max).exp());
        let sum = row.sum();
        row.mapv_inplace(|v| v / sum);
    }
}

fn row_bias(b: &Array2<f64>) -> ndarray::ArrayView2<'_, f64> {
    b.view()
}

#[derive(Debug, Clone)]
struct LayerCache {
    input: Array2<f64>,
    q: Array2<f64>,
    k: Array2<f64>,
    v: Array2<f64>,
    probs: Vec<Array2<f64>>,
    ctx: Array2<f64>,
    drop_attn: Option<Array2<f64>>,
    ln1: LnCache,
    h1: Array2<f64>,
    f1: Array2<f64>,
    g: Array2<f64>,
    drop_ffn: Option<Array2<f64>>,
    ln2: LnCache,
}

/// Everything the backward pass needs for one sequence.
#[derive(Debug, Clone)]
pub struct SeqCache {
    emb_ln: LnCache,
    drop_emb: Option<Array2<f64>>,
    layers: Vec<LayerCache>,
    /// Final hidden states, `T x H`.
    pub output: Array2<f64>,
}

pub fn forward_seq<R: Rng + ?Sized>(
    p: &Parameters,
    c: &ModelConfig,
    x: &SeqInput<'_>,
    mut dropout: Option<&mut R>,
) -> Result<SeqCache> {
    x.check(c)?;
    let t = x.ids.len();
    let h = c.hidden_size;
    let heads = c.num_attention_heads;
    let dh = c.head_dim();
    let scale = 1.0 / (dh as f64).sqrt();
    let rate = c.dropout;
    let mut maybe_drop = |rows: usize, cols: usize| -> Option<Array2<f64>> {
        match dropout.as_deref_mut() {
            Some(rng) if rate > 0.0 => Some(dropout_mask(rows, cols, rate, rng)),
            _ => None,
        }
    };

    let mut x0 = Array2::zeros((t, h));
    for (i, mut row) in x0.rows_mut().into_iter().enumerate() {
        row.assign(&p.tok_emb.row(x.ids[i] as usize));
        row += &p.pos_emb.row(i);
        row += &p.seg_emb.row(x.segments[i] as usize);
    }
    let (mut hidden, emb_ln) = layer_norm(&x0, &p.emb_ln_gamma, &p.emb_ln_beta, c.layer_norm_eps);
    let drop_emb = maybe_drop(t, h);
    if let Some(m) = &drop_emb {
        hidden *= m;
    }

    let key_bias: Array1<f64> = x.mask.iter().map(|&m| if m == 1 { 0.0 } else { MASKED_SCORE }).collect();

    let mut layers = Vec::with_capacity(c.num_hidden_layers);
    for l in &p.layers {
        let input = hidden;
        let q = input.dot(&l.wq) + row_bias(&l.bq);
        let k = input.dot(&l.wk) + row_bias(&l.bk);
        let v = input.dot(&l.wv) + row_bias(&l.bv);
        let mut ctx = Array2::zeros((t, h));
        let mut probs = Vec::with_capacity(heads);
        for hd in 0..heads {
            let cols = s![.., hd * dh..(hd + 1) * dh];
            let mut scores = q.slice(cols).dot(&k.slice(cols).t()) * scale + &key_bias;
            softmax_rows(&mut scores);
            ctx.slice_mut(cols).assign(&scores.dot(&v.slice(cols)));
            probs.push(scores);
        }
        let mut attn = ctx.dot(&l.wo) + row_bias(&l.bo);
        let drop_attn = maybe_drop(t, h);
        if let Some(m) = &drop_attn {
            attn *= m;
        }
        let (h1, ln1) = layer_norm(&(&input + &attn), &l.ln1_gamma, &l.ln1_beta, c.layer_norm_eps);
        let f1 = h1.dot(&l.w1) + row_bias(&l.b1);
        let g = f1.mapv(gelu);
        let mut f2 = g.dot(&l.w2) + row_bias(&l.b2);
        let drop_ffn = maybe_drop(t, h);
        if let Some(m) = &drop_ffn {
            f2 *= m;
        }
        let (out, ln2) = layer_norm(&(&h1 + &f2), &l.ln2_gamma, &l.ln2_beta, c.layer_norm_eps);
        layers.push(LayerCache {
            input,
            q,
            k,
            v,
            probs,
            ctx,
            drop_attn,
            ln1,
            h1,
            f1,
            g,
            drop_ffn,
            ln2,
        });
        hidden = out;
    }
    Ok(SeqCache {
        emb_ln,
        drop_emb,
        layers,
        output: hidden,
    })
}

fn sum_rows(d: &Array2<f64>) -> Array2<f64> {
    d.sum_axis(Axis(0)).insert_axis(Axis(0))
}

/// Accumulate into `grads` the encoder-body gradients for one sequence given
/// `d_out = dL/d(final hidden states)`. Head gradients are handled by the
/// caller.
pub fn backward_seq(
    p: &Parameters,
    c: &ModelConfig,
    x: &SeqInput<'_>,
    cache: &SeqCache,
    d_out: Array2<f64>,
    grads: &mut Parameters,
) {
    let heads = c.num_attention_heads;
    let dh = c.head_dim();
    let scale = 1.0 / (dh as f64).sqrt();
    let mut d_hidden = d_out;

    for (li, (l, lc)) in p.layers.iter().zip(&cache.layers).enumerate().rev() {
        let g = &mut grads.layers[li];

        let (d_r2, dg2, db2) = layer_norm_backward(&d_hidden, &lc.ln2, &l.ln2_gamma);
        g.ln2_gamma += &dg2;
        g.ln2_beta += &db2;
        let mut d_h1 = d_r2.clone();
        let mut d_f2 = d_r2;
        if let Some(m) = &lc.drop_ffn {
            d_f2 *= m;
        }
        g.w2 += &lc.g.t().dot(&d_f2);
        g.b2 += &sum_rows(&d_f2);
        let mut d_f1 = d_f2.dot(&l.w2.t());
        ndarray::Zip::from(&mut d_f1).and(&lc.f1).for_each(|d, &f| *d *= gelu_grad(f));
        g.w1 += &lc.h1.t().dot(&d_f1);
        g.b1 += &sum_rows(&d_f1);
        d_h1 += &d_f1.dot(&l.w1.t());

        let (d_r1, dg1, db1) = layer_norm_backward(&d_h1, &lc.ln1, &l.ln1_gamma);
        g.ln1_gamma += &dg1;
        g.ln1_beta += &db1;
        let mut d_input = d_r1.clone();
        let mut d_attn = d_r1;
        if let Some(m) = &lc.drop_attn {
            d_attn *= m;
        }
        g.wo += &lc.ctx.t().dot(&d_attn);
        g.bo += &sum_rows(&d_attn);
        let d_ctx = d_attn.dot(&l.wo.t());

        let mut d_q = Array2::zeros(lc.q.raw_dim());
        let mut d_k = Array2::zeros(lc.k.raw_dim());
        let mut d_v = Array2::zeros(lc.v.raw_dim());
        for hd in 0..heads {
            let cols = s![.., hd * dh..(hd + 1) * dh];
            let probs = &lc.probs[hd];
            let d_ctx_h = d_ctx.slice(cols);
            let d_probs = d_ctx_h.dot(&lc.v.slice(cols).t());
            d_v.slice_mut(cols).assign(&probs.t().dot(&d_ctx_h));
            let mut d_scores = probs * &d_probs;
            for (mut row, prow) in d_scores.rows_mut().into_iter().zip(probs.rows()) {
                let dot = row.sum();
                row.zip_mut_with(&prow, |ds, &pr| *ds -= pr * dot);
            }
            d_scores *= scale;
            d_q.slice_mut(cols).assign(&d_scores.dot(&lc.k.slice(cols)));
            d_k.slice_mut(cols).assign(&d_scores.t().dot(&lc.q.slice(cols)));
        }
        g.wq += &lc.input.t().dot(&d_q);
        g.bq += &sum_rows(&d_q);
        g.wk += &lc.input.t().dot(&d_k);
        g.bk += &sum_rows(&d_k);
        g.wv += &lc.input.t().dot(&d_v);
        g.bv += &sum_rows(&d_v);
        d_input += &d_q.dot(&l.wq.t());
        d_input += &d_k.dot(&l.wk.t());
        d_input += &d_v.dot(&l.wv.t());
        d_hidden = d_input;
    }

    if let Some(m) = &cache.drop_emb {
        d_hidden *= m;
    }
    let (d_x0, dg, db) = layer_norm_backward(&d_hidden, &cache.emb_ln, &p.emb_ln_gamma);
    grads.emb_ln_gamma += &dg;
    grads.emb_ln_beta += &db;
    for (i, row) in d_x0.rows().into_iter().enumerate() {
        let mut tok = grads.tok_emb.row_mut(x.ids[i] as usize);
        tok += &row;
        let mut pos = grads.pos_emb.row_mut(i);
        pos += &row;
        let mut seg = grads.seg_emb.row_mut(x.segments[i] as usize);
        seg += &row;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gelu_derivative_matches_central_difference() {
        for &x in &[-3.0, -1.0, -0.1, 0.0, 0.3, 1.7, 4.0] {
            let h = 1e-6;
            let fd = (gelu(x + h) - gelu(x - h)) / (2.0 * h);
            assert!((fd - gelu_grad(x)).abs() < 1e-8, "x={x}");
        }
        assert_eq!(gelu(0.0), 0.0);
    }

    #[test]
    fn layer_norm_rows_are_standardised() {
        let x = ndarray::array![[1.0, 2.0, 3.0, 4.0], [10.0, 10.0, 10.0, 11.0]];
        let g = Array2::ones((1, 4));
        let b = Array2::zeros((1, 4));
        let (y, _) = layer_norm(&x, &g, &b, 1e-12);
        for row in y.rows() {
            assert!(row.sum().abs() < 1e-12);
            assert!((row.iter().map(|v| v * v).sum::<f64>() / 4.0 - 1.0).abs() < 1e-9);
        }
    }
}
