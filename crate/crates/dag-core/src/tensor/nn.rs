//! Layer building blocks over the tape: linear maps, layer norm, MLPs and
//! scaled dot-product attention.

use ndarray::{Array2, IxDyn};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::ops::as2;
use super::{Arr, Graph, Var};
use crate::params::{Bound, ParamStore};

/// Standard normal draw via Box-Muller; deterministic given the rng state.
pub fn gaussian(rng: &mut ChaCha8Rng) -> f64 {
    let u1: f64 = rng.gen::<f64>().max(1e-300);
    let u2: f64 = rng.gen();
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

#[derive(Clone, Copy, Debug)]
pub enum InitKind {
    /// Normal with Xavier/Glorot scale `sqrt(2 / (fan_in + fan_out))`.
    Xavier,
    Zeros,
}

/// Affine map `x @ w + b` with parameters registered in a [`ParamStore`].
#[derive(Clone, Debug)]
pub struct Linear {
    w: String,
    b: Option<String>,
    pub in_dim: usize,
    pub out_dim: usize,
}

impl Linear {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        in_dim: usize,
        out_dim: usize,
        init: InitKind,
        bias: bool,
        frozen: bool,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        let w = match init {
            InitKind::Xavier => {
                let std = (2.0 / (in_dim + out_dim) as f64).sqrt();
                Array2::from_shape_fn((in_dim, out_dim), |_| gaussian(rng) * std).into_dyn()
            }
            InitKind::Zeros => Arr::zeros(IxDyn(&[in_dim, out_dim])),
        };
        let wname = format!("{name}.w");
        store.insert(&wname, w, frozen);
        let b = if bias {
            let bname = format!("{name}.b");
            store.insert(&bname, Arr::zeros(IxDyn(&[1, out_dim])), frozen);
            Some(bname)
        } else {
            None
        };
        Linear {
            w: wname,
            b,
            in_dim,
            out_dim,
        }
    }

    pub fn forward(&self, g: &mut Graph, p: &Bound, x: Var) -> Var {
        let y = g.matmul(x, p.var(&self.w));
        match &self.b {
            Some(b) => g.add_rowvec(y, p.var(b)),
            None => y,
        }
    }
}

/// Row-wise layer normalization with learnable gain and bias.
#[derive(Clone, Debug)]
pub struct LayerNorm {
    gain: String,
    bias: String,
    eps: f64,
}

impl LayerNorm {
    pub fn new(store: &mut ParamStore, name: &str, dim: usize, frozen: bool) -> Self {
        let gain = format!("{name}.gain");
        let bias = format!("{name}.bias");
        store.insert(&gain, Arr::ones(IxDyn(&[1, dim])), frozen);
        store.insert(&bias, Arr::zeros(IxDyn(&[1, dim])), frozen);
        LayerNorm {
            gain,
            bias,
            eps: 1e-5,
        }
    }

    pub fn forward(&self, g: &mut Graph, p: &Bound, x: Var) -> Var {
        g.layer_norm_rows(x, p.var(&self.gain), p.var(&self.bias), self.eps)
    }
}

/// Two-layer perceptron with ReLU.
#[derive(Clone, Debug)]
pub struct Mlp {
    pub l1: Linear,
    pub l2: Linear,
}

impl Mlp {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        in_dim: usize,
        hidden: usize,
        out_dim: usize,
        last_init: InitKind,
        frozen: bool,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        let l1 = Linear::new(
            store,
            &format!("{name}.l1"),
            in_dim,
            hidden,
            InitKind::Xavier,
            true,
            frozen,
            rng,
        );
        let l2 = Linear::new(
            store,
            &format!("{name}.l2"),
            hidden,
            out_dim,
            last_init,
            true,
            frozen,
            rng,
        );
        Mlp { l1, l2 }
    }

    pub fn forward(&self, g: &mut Graph, p: &Bound, x: Var) -> Var {
        let h = self.l1.forward(g, p, x);
        let h = g.relu(h);
        self.l2.forward(g, p, h)
    }
}

/// Output of scaled dot-product attention: values plus the normalized
/// attention weights (one matrix per head, rows sum to 1).
pub struct AttentionOutput {
    pub out: Var,
    pub weights: Vec<Var>,
}

/// `softmax(q k^T / sqrt(head_dim)) v`, split over `heads` column blocks.
pub fn attention(g: &mut Graph, q: Var, k: Var, v: Var, heads: usize) -> AttentionOutput {
    let d = as2(g.value(q)).ncols();
    assert_eq!(as2(g.value(k)).ncols(), d, "attention width mismatch");
    assert_eq!(as2(g.value(v)).ncols(), d, "attention width mismatch");
    assert!(heads >= 1 && d % heads == 0, "width {d} not divisible into {heads} heads");
    let hd = d / heads;
    let scale = 1.0 / (hd as f64).sqrt();
    if heads == 1 {
        let kt = g.transpose(k);
        let logits = g.matmul(q, kt);
        let logits = g.affine(logits, scale, 0.0);
        let w = g.softmax_rows(logits);
        let out = g.matmul(w, v);
        return AttentionOutput {
            out,
            weights: vec![w],
        };
    }
    let mut outs = Vec::with_capacity(heads);
    let mut weights = Vec::with_capacity(heads);
    for h in 0..heads {
        let (lo, hi) = (h * hd, (h + 1) * hd);
        let qh = g.slice_cols(q, lo, hi);
        let kh = g.slice_cols(k, lo, hi);
        let vh = g.slice_cols(v, lo, hi);
        let kt = g.transpose(kh);
        let logits = g.matmul(qh, kt);
        let logits = g.affine(logits, scale, 0.0);
        let w = g.softmax_rows(logits);
        outs.push(g.matmul(w, vh));
        weights.push(w);
    }
    AttentionOutput {
        out: g.concat_cols(&outs),
        weights,
    }
}
