//! Multi-head cross-modal attention: visual tokens form the queries, audio
//! tokens the keys and values, and the result is added back onto the visual
//! tokens through a skip connection.

use crate::error::{shape_err, Error, Result};
use crate::nn::Param;
use crate::ops::{matmul, softmax, softmax_backward, transpose2};
use crate::rng::Rng;
use crate::tensor::{Scalar, Tensor};

/// Per-head query/key/value projections stored as packed E x E matrices;
/// rows h*d_k..(h+1)*d_k hold head h. The attention scaling factor is d_k.
pub struct CrossModalAttention<T: Scalar> {
    pub w_q: Param<T>,
    pub w_k: Param<T>,
    pub w_v: Param<T>,
    pub n_heads: usize,
}

pub struct AttentionCache<T: Scalar> {
    f_v: Tensor<T>,
    f_a: Tensor<T>,
    q: Tensor<T>,
    k: Tensor<T>,
    v: Tensor<T>,
    /// Softmax attention weights per head, each N x N.
    attn: Vec<Tensor<T>>,
}

fn take_cols<T: Scalar>(t: &Tensor<T>, from: usize, to: usize) -> Tensor<T> {
    let (n, e) = (t.shape()[0], t.shape()[1]);
    let mut out = Tensor::zeros(&[n, to - from]);
    for r in 0..n {
        for c in from..to {
            out.data_mut()[r * (to - from) + c - from] = t.data()[r * e + c];
        }
    }
    out
}

fn add_cols<T: Scalar>(dst: &mut Tensor<T>, src: &Tensor<T>, from: usize) {
    let (n, e) = (dst.shape()[0], dst.shape()[1]);
    let w = src.shape()[1];
    for r in 0..n {
        for c in 0..w {
            dst.data_mut()[r * e + from + c] += src.data()[r * w + c];
        }
    }
}

impl<T: Scalar> CrossModalAttention<T> {
    pub fn new(rng: &mut Rng, name: &str, embed_dim: usize, n_heads: usize) -> Result<Self> {
        if n_heads == 0 || embed_dim % n_heads != 0 {
            return Err(Error::InvalidArgument(format!(
                "embed dim {embed_dim} must be divisible by n_heads {n_heads}"
            )));
        }
        let init = |rng: &mut Rng, suffix: &str| {
            Param::new(
                format!("{name}.{suffix}"),
                crate::nn::he_normal(rng, &[embed_dim, embed_dim], embed_dim),
            )
        };
        Ok(Self {
            w_q: init(rng, "w_q"),
            w_k: init(rng, "w_k"),
            w_v: init(rng, "w_v"),
            n_heads,
        })
    }

    pub fn head_dim(&self) -> usize {
        self.w_q.value.shape()[0] / self.n_heads
    }

    /// f_v, f_a: N x E token matrices with identical shapes. Returns
    /// Att(f_v, f_a) + f_v.
    pub fn forward(&self, f_v: &Tensor<T>, f_a: &Tensor<T>) -> Result<(Tensor<T>, AttentionCache<T>)> {
        if f_v.shape() != f_a.shape() || f_v.shape().len() != 2 {
            return Err(shape_err("cross_modal_attention tokens", f_v.shape(), f_a.shape()));
        }
        let e = f_v.shape()[1];
        if e != self.w_q.value.shape()[1] {
            return Err(shape_err("cross_modal_attention embed dim", self.w_q.value.shape()[1], e));
        }
        let d_k = e / self.n_heads;
        let scale = T::from_f64(1.0 / (d_k as f64).sqrt());
        // projections: X * W^T
        let q = matmul(f_v, &transpose2(&self.w_q.value))?;
        let k = matmul(f_a, &transpose2(&self.w_k.value))?;
        let v = matmul(f_a, &transpose2(&self.w_v.value))?;
        let mut out = f_v.clone();
        let mut attn = Vec::with_capacity(self.n_heads);
        for h in 0..self.n_heads {
            let (from, to) = (h * d_k, (h + 1) * d_k);
            let qh = take_cols(&q, from, to);
            let kh = take_cols(&k, from, to);
            let vh = take_cols(&v, from, to);
            let scores = matmul(&qh, &transpose2(&kh))?.scale(scale);
            let a = softmax(&scores, 1)?;
            let oh = matmul(&a, &vh)?;
            add_cols(&mut out, &oh, from);
            attn.push(a);
        }
        Ok((out, AttentionCache { f_v: f_v.clone(), f_a: f_a.clone(), q, k, v, attn }))
    }

    /// Accumulates projection gradients; returns (d_f_v, d_f_a).
    pub fn backward(
        &mut self,
        cache: &AttentionCache<T>,
        grad_out: &Tensor<T>,
    ) -> Result<(Tensor<T>, Tensor<T>)> {
        let (n, e) = (cache.f_v.shape()[0], cache.f_v.shape()[1]);
        let d_k = e / self.n_heads;
        let scale = T::from_f64(1.0 / (d_k as f64).sqrt());
        let mut dq = Tensor::zeros(&[n, e]);
        let mut dk = Tensor::zeros(&[n, e]);
        let mut dv = Tensor::zeros(&[n, e]);
        for h in 0..self.n_heads {
            let (from, to) = (h * d_k, (h + 1) * d_k);
            let g_oh = take_cols(grad_out, from, to);
            let a = &cache.attn[h];
            let kh = take_cols(&cache.k, from, to);
            let vh = take_cols(&cache.v, from, to);
            let qh = take_cols(&cache.q, from, to);
            // O = A V
            let d_a = matmul(&g_oh, &transpose2(&vh))?;
            let d_vh = matmul(&transpose2(a), &g_oh)?;
            let d_scores = softmax_backward(a, &d_a, 1).scale(scale);
            let d_qh = matmul(&d_scores, &kh)?;
            let d_kh = matmul(&transpose2(&d_scores), &qh)?;
            add_cols(&mut dq, &d_qh, from);
            add_cols(&mut dk, &d_kh, from);
            add_cols(&mut dv, &d_vh, from);
        }
        // Q = f_v W_q^T  =>  d f_v = dQ W_q, d W_q = dQ^T f_v
        let mut d_fv = matmul(&dq, &self.w_q.value)?;
        self.w_q.grad.add_assign(&matmul(&transpose2(&dq), &cache.f_v)?)?;
        let mut d_fa = matmul(&dk, &self.w_k.value)?;
        self.w_k.grad.add_assign(&matmul(&transpose2(&dk), &cache.f_a)?)?;
        d_fa.add_assign(&matmul(&dv, &self.w_v.value)?)?;
        self.w_v.grad.add_assign(&matmul(&transpose2(&dv), &cache.f_a)?)?;
        // skip connection
        d_fv.add_assign(grad_out)?;
        Ok((d_fv, d_fa))
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        vec![&mut self.w_q, &mut self.w_k, &mut self.w_v]
    }
}
