//! Transformer encoder blocks and the token text encoders. Post-norm
//! residual layers with multi-head self-attention and a GELU feed-forward
//! of width 4d.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::params::{ParamId, ParamStore};
use crate::tape::{NodeId, Tape};
use crate::tensor::Tensor;

pub const LAYER_NORM_EPS: f64 = 1e-5;
pub const FFN_WIDTH_FACTOR: usize = 4;

/// Inverted-dropout context: draws masks while training, a no-op in eval.
pub struct DropoutCtx<'r> {
    pub rate: f64,
    pub rng: Option<&'r mut ChaCha8Rng>,
}

impl<'r> DropoutCtx<'r> {
    pub fn eval() -> Self {
        Self { rate: 0.0, rng: None }
    }

    pub fn train(rate: f64, rng: &'r mut ChaCha8Rng) -> Self {
        Self { rate, rng: Some(rng) }
    }

    fn apply(&mut self, tape: &mut Tape, x: NodeId) -> NodeId {
        let Some(rng) = self.rng.as_deref_mut() else { return x };
        if self.rate <= 0.0 {
            return x;
        }
        let keep = 1.0 - self.rate;
        let len = tape.value(x).len();
        let mask: Vec<f64> =
            (0..len).map(|_| if rng.gen::<f64>() < keep { 1.0 / keep } else { 0.0 }).collect();
        tape.dropout(x, mask)
    }
}

fn uniform_init(rows: usize, cols: usize, fan_in: usize, rng: &mut impl Rng) -> Tensor {
    Tensor::uniform(rows, cols, 1.0 / (fan_in as f64).sqrt(), rng)
}

#[derive(Debug, Clone)]
pub struct EncoderLayerParams {
    pub wq: ParamId,
    pub bq: ParamId,
    pub wk: ParamId,
    pub bk: ParamId,
    pub wv: ParamId,
    pub bv: ParamId,
    pub wo: ParamId,
    pub bo: ParamId,
    pub ln1_gamma: ParamId,
    pub ln1_beta: ParamId,
    pub ffn_w1: ParamId,
    pub ffn_b1: ParamId,
    pub ffn_w2: ParamId,
    pub ffn_b2: ParamId,
    pub ln2_gamma: ParamId,
    pub ln2_beta: ParamId,
}

impl EncoderLayerParams {
    pub fn register(store: &mut ParamStore, prefix: &str, dim: usize, rng: &mut impl Rng) -> Self {
        let ff = FFN_WIDTH_FACTOR * dim;
        fn mat(
            store: &mut ParamStore,
            rng: &mut impl Rng,
            prefix: &str,
            name: &str,
            r: usize,
            c: usize,
        ) -> ParamId {
            store.register(format!("{prefix}.{name}"), uniform_init(r, c, r, rng))
        }
        let mat = |store: &mut ParamStore, rng: &mut _, name: &str, r: usize, c: usize| {
            mat(store, rng, prefix, name, r, c)
        };
        let zero_row = |store: &mut ParamStore, name: &str, c: usize| {
            store.register(format!("{prefix}.{name}"), Tensor::zeros(1, c))
        };
        let one_row = |store: &mut ParamStore, name: &str, c: usize| {
            store.register(format!("{prefix}.{name}"), Tensor::from_vec(1, c, vec![1.0; c]))
        };
        Self {
            wq: mat(store, rng, "attn.wq", dim, dim),
            bq: zero_row(store, "attn.bq", dim),
            wk: mat(store, rng, "attn.wk", dim, dim),
            bk: zero_row(store, "attn.bk", dim),
            wv: mat(store, rng, "attn.wv", dim, dim),
            bv: zero_row(store, "attn.bv", dim),
            wo: mat(store, rng, "attn.wo", dim, dim),
            bo: zero_row(store, "attn.bo", dim),
            ln1_gamma: one_row(store, "ln1.gamma", dim),
            ln1_beta: zero_row(store, "ln1.beta", dim),
            ffn_w1: mat(store, rng, "ffn.w1", dim, ff),
            ffn_b1: zero_row(store, "ffn.b1", ff),
            ffn_w2: mat(store, rng, "ffn.w2", ff, dim),
            ffn_b2: zero_row(store, "ffn.b2", dim),
            ln2_gamma: one_row(store, "ln2.gamma", dim),
            ln2_beta: zero_row(store, "ln2.beta", dim),
        }
    }
}

/// One encoder layer over an L×d sequence.
pub fn encoder_layer(
    tape: &mut Tape,
    p: &EncoderLayerParams,
    x: NodeId,
    heads: usize,
    dropout: &mut DropoutCtx,
) -> NodeId {
    let dim = tape.value(x).cols();
    assert_eq!(dim % heads, 0);
    let dh = dim / heads;

    let wq = tape.param(p.wq);
    let bq = tape.param(p.bq);
    let q0 = tape.matmul(x, wq);
    let q = tape.add_row(q0, bq);
    let wk = tape.param(p.wk);
    let bk = tape.param(p.bk);
    let k0 = tape.matmul(x, wk);
    let k = tape.add_row(k0, bk);
    let wv = tape.param(p.wv);
    let bv = tape.param(p.bv);
    let v0 = tape.matmul(x, wv);
    let v = tape.add_row(v0, bv);

    let mut head_outs = Vec::with_capacity(heads);
    let scale = 1.0 / (dh as f64).sqrt();
    for h in 0..heads {
        let qh = tape.slice_cols(q, h * dh, dh);
        let kh = tape.slice_cols(k, h * dh, dh);
        let vh = tape.slice_cols(v, h * dh, dh);
        let kt = tape.transpose(kh);
        let raw = tape.matmul(qh, kt);
        let scaled = tape.scale(raw, scale);
        let weights = tape.softmax_rows(scaled);
        head_outs.push(tape.matmul(weights, vh));
    }
    let merged = tape.concat_cols(&head_outs);
    let wo = tape.param(p.wo);
    let bo = tape.param(p.bo);
    let projected0 = tape.matmul(merged, wo);
    let projected = tape.add_row(projected0, bo);
    let dropped = dropout.apply(tape, projected);
    let residual = tape.add(x, dropped);
    let g1 = tape.param(p.ln1_gamma);
    let b1 = tape.param(p.ln1_beta);
    let normed = tape.layer_norm_rows(residual, g1, b1, LAYER_NORM_EPS);

    let w1 = tape.param(p.ffn_w1);
    let fb1 = tape.param(p.ffn_b1);
    let h0 = tape.matmul(normed, w1);
    let h1 = tape.add_row(h0, fb1);
    let act = tape.gelu(h1);
    let w2 = tape.param(p.ffn_w2);
    let fb2 = tape.param(p.ffn_b2);
    let h2 = tape.matmul(act, w2);
    let h3 = tape.add_row(h2, fb2);
    let dropped2 = dropout.apply(tape, h3);
    let residual2 = tape.add(normed, dropped2);
    let g2 = tape.param(p.ln2_gamma);
    let b2 = tape.param(p.ln2_beta);
    tape.layer_norm_rows(residual2, g2, b2, LAYER_NORM_EPS)
}

/// Token-sequence encoder: token plus position embeddings, then a stack of
/// encoder layers.
#[derive(Debug, Clone)]
pub struct TextEncoderParams {
    pub tokens: ParamId,
    pub positions: ParamId,
    pub layers: Vec<EncoderLayerParams>,
}

impl TextEncoderParams {
    pub fn register(
        store: &mut ParamStore,
        prefix: &str,
        vocab: usize,
        max_len: usize,
        dim: usize,
        layers: usize,
        rng: &mut impl Rng,
    ) -> Self {
        let tokens = store.register(format!("{prefix}.tok"), uniform_init(vocab, dim, dim, rng));
        let positions =
            store.register(format!("{prefix}.pos"), uniform_init(max_len, dim, dim, rng));
        let layers = (0..layers)
            .map(|i| EncoderLayerParams::register(store, &format!("{prefix}.layer{i}"), dim, rng))
            .collect();
        Self { tokens, positions, layers }
    }
}

pub fn text_encoder(
    tape: &mut Tape,
    p: &TextEncoderParams,
    token_rows: &[usize],
    heads: usize,
    dropout: &mut DropoutCtx,
) -> NodeId {
    assert!(!token_rows.is_empty());
    let tokens = tape.gather_rows(p.tokens, token_rows.to_vec());
    let positions = tape.gather_rows(p.positions, (0..token_rows.len()).collect());
    let mut x = tape.add(tokens, positions);
    for layer in &p.layers {
        x = encoder_layer(tape, layer, x, heads, dropout);
    }
    x
}

/// Stack of post-fusion encoder layers (no embedding of its own).
pub fn encoder_stack(
    tape: &mut Tape,
    layers: &[EncoderLayerParams],
    mut x: NodeId,
    heads: usize,
    dropout: &mut DropoutCtx,
) -> NodeId {
    for layer in layers {
        x = encoder_layer(tape, layer, x, heads, dropout);
    }
    x
}
