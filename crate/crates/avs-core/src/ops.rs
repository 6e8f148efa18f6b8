//! Differentiable primitives. Every operation here ships a forward and an
//! exact hand-derived backward; `gradcheck` verifies the pairs against
//! central finite differences. All accumulation is sequential left-to-right.

use crate::error::{shape_err, Error, Result};
use crate::tensor::{Scalar, Tensor};

#[inline(always)]
fn lerp<T: Scalar>(a: T, b: T, t: T) -> T {
    // exact on constant fields: t = anything, a == b => result == a
    a + t * (b - a)
}

// ---------------------------------------------------------------------------
// matmul / linear
// ---------------------------------------------------------------------------

/// `a` is N x K, `b` is K x M; returns N x M.
pub fn matmul<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    let (n, k) = (a.shape()[0], a.shape()[1]);
    let (kb, m) = (b.shape()[0], b.shape()[1]);
    if k != kb {
        return Err(shape_err("matmul inner dim", k, kb));
    }
    let mut out = Tensor::zeros(&[n, m]);
    let ad = a.data();
    let bd = b.data();
    let od = out.data_mut();
    for i in 0..n {
        for j in 0..m {
            let mut acc = T::ZERO;
            for p in 0..k {
                acc += ad[i * k + p] * bd[p * m + j];
            }
            od[i * m + j] = acc;
        }
    }
    Ok(out)
}

pub fn transpose2<T: Scalar>(a: &Tensor<T>) -> Tensor<T> {
    let (n, m) = (a.shape()[0], a.shape()[1]);
    let mut out = Tensor::zeros(&[m, n]);
    for i in 0..n {
        for j in 0..m {
            out.data_mut()[j * n + i] = a.data()[i * m + j];
        }
    }
    out
}

/// x: N x I, w: O x I, b: O; returns N x O.
pub fn linear<T: Scalar>(x: &Tensor<T>, w: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    let (n, i) = (x.shape()[0], x.shape()[1]);
    let (o, iw) = (w.shape()[0], w.shape()[1]);
    if i != iw || b.numel() != o {
        return Err(shape_err("linear", (i, o), (iw, b.numel())));
    }
    let mut out = Tensor::zeros(&[n, o]);
    for r in 0..n {
        for c in 0..o {
            let mut acc = b.data()[c];
            for p in 0..i {
                acc += x.data()[r * i + p] * w.data()[c * i + p];
            }
            out.data_mut()[r * o + c] = acc;
        }
    }
    Ok(out)
}

/// Gradients of `linear`: returns (dx, dw, db).
pub fn linear_backward<T: Scalar>(
    x: &Tensor<T>,
    w: &Tensor<T>,
    grad_out: &Tensor<T>,
) -> (Tensor<T>, Tensor<T>, Tensor<T>) {
    let (n, i) = (x.shape()[0], x.shape()[1]);
    let o = w.shape()[0];
    let mut dx = Tensor::zeros(&[n, i]);
    let mut dw = Tensor::zeros(&[o, i]);
    let mut db = Tensor::zeros(&[o]);
    for r in 0..n {
        for c in 0..o {
            let g = grad_out.data()[r * o + c];
            db.data_mut()[c] += g;
            for p in 0..i {
                dx.data_mut()[r * i + p] += g * w.data()[c * i + p];
                dw.data_mut()[c * i + p] += g * x.data()[r * i + p];
            }
        }
    }
    (dx, dw, db)
}

// ---------------------------------------------------------------------------
// softmax
// ---------------------------------------------------------------------------

/// Softmax along `axis` with max-subtraction for stability.
pub fn softmax<T: Scalar>(logits: &Tensor<T>, axis: usize) -> Result<Tensor<T>> {
    let shape = logits.shape();
    if axis >= shape.len() {
        return Err(Error::InvalidArgument(format!(
            "softmax axis {axis} out of range for shape {shape:?}"
        )));
    }
    let axis_len = shape[axis];
    let inner: usize = shape[axis + 1..].iter().product();
    let outer: usize = shape[..axis].iter().product();
    let mut out = Tensor::zeros(shape);
    let src = logits.data();
    let dst = out.data_mut();
    for oi in 0..outer {
        for ii in 0..inner {
            let base = oi * axis_len * inner + ii;
            let mut m = src[base];
            for a in 1..axis_len {
                let v = src[base + a * inner];
                if v > m {
                    m = v;
                }
            }
            let mut z = T::ZERO;
            for a in 0..axis_len {
                let e = (src[base + a * inner] - m).exp();
                dst[base + a * inner] = e;
                z += e;
            }
            for a in 0..axis_len {
                dst[base + a * inner] /= z;
            }
        }
    }
    Ok(out)
}

/// dL/dlogits given the softmax output `y` and upstream gradient.
pub fn softmax_backward<T: Scalar>(y: &Tensor<T>, grad_out: &Tensor<T>, axis: usize) -> Tensor<T> {
    let shape = y.shape();
    let axis_len = shape[axis];
    let inner: usize = shape[axis + 1..].iter().product();
    let outer: usize = shape[..axis].iter().product();
    let mut grad = Tensor::zeros(shape);
    for oi in 0..outer {
        for ii in 0..inner {
            let base = oi * axis_len * inner + ii;
            let mut dot = T::ZERO;
            for a in 0..axis_len {
                let idx = base + a * inner;
                dot += grad_out.data()[idx] * y.data()[idx];
            }
            for a in 0..axis_len {
                let idx = base + a * inner;
                grad.data_mut()[idx] = y.data()[idx] * (grad_out.data()[idx] - dot);
            }
        }
    }
    grad
}

// ---------------------------------------------------------------------------
// conv2d
// ---------------------------------------------------------------------------

pub fn conv2d_out_dims(h: usize, w: usize, kh: usize, kw: usize, stride: usize, pad: usize) -> Result<(usize, usize)> {
    if stride == 0 {
        return Err(Error::InvalidArgument("conv2d stride must be >= 1".into()));
    }
    if h + 2 * pad < kh || w + 2 * pad < kw {
        return Err(Error::InvalidArgument(format!(
            "conv2d: padded input {}x{} smaller than kernel {}x{}",
            h + 2 * pad,
            w + 2 * pad,
            kh,
            kw
        )));
    }
    Ok(((h + 2 * pad - kh) / stride + 1, (w + 2 * pad - kw) / stride + 1))
}

/// Cross-correlation, NCHW input, OIHW weight, zero padding.
pub fn conv2d<T: Scalar>(
    input: &Tensor<T>,
    weight: &Tensor<T>,
    bias: Option<&Tensor<T>>,
    stride: usize,
    pad: usize,
) -> Result<Tensor<T>> {
    if input.shape().len() != 4 || weight.shape().len() != 4 {
        return Err(shape_err("conv2d rank", 4, input.shape().len()));
    }
    let [n, ci, h, w] = [input.shape()[0], input.shape()[1], input.shape()[2], input.shape()[3]];
    let [co, ciw, kh, kw] = [weight.shape()[0], weight.shape()[1], weight.shape()[2], weight.shape()[3]];
    if ci != ciw {
        return Err(shape_err("conv2d channels", ci, ciw));
    }
    if let Some(b) = bias {
        if b.numel() != co {
            return Err(shape_err("conv2d bias", co, b.numel()));
        }
    }
    let (oh, ow) = conv2d_out_dims(h, w, kh, kw, stride, pad)?;
    let mut out = Tensor::zeros(&[n, co, oh, ow]);
    let id = input.data();
    let wd = weight.data();
    let od = out.data_mut();
    // the inner loop runs over output columns so each output element still
    // accumulates its (ic, ky, kx) terms in a fixed sequential order
    for bn in 0..n {
        for oc in 0..co {
            let plane = &mut od[((bn * co + oc) * oh) * ow..((bn * co + oc) * oh + oh) * ow];
            if let Some(b) = bias {
                plane.fill(b.data()[oc]);
            }
            for ic in 0..ci {
                for ky in 0..kh {
                    let w_row = ((oc * ci + ic) * kh + ky) * kw;
                    for kx in 0..kw {
                        let wv = wd[w_row + kx];
                        let (ox_lo, ox_hi) = valid_out_range(kx, pad, stride, w, ow);
                        if ox_lo >= ox_hi {
                            continue;
                        }
                        for oy in 0..oh {
                            let iy = (oy * stride + ky) as isize - pad as isize;
                            if iy < 0 || iy >= h as isize {
                                continue;
                            }
                            let in_row = ((bn * ci + ic) * h + iy as usize) * w;
                            let out_row = &mut plane[oy * ow..oy * ow + ow];
                            let base = ox_lo * stride + kx - pad;
                            if stride == 1 {
                                let src = &id[in_row + base..in_row + base + (ox_hi - ox_lo)];
                                for (o, &s) in out_row[ox_lo..ox_hi].iter_mut().zip(src) {
                                    *o += s * wv;
                                }
                            } else {
                                for ox in ox_lo..ox_hi {
                                    out_row[ox] += id[in_row + base + (ox - ox_lo) * stride] * wv;
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Output-column range for which ox*stride + kx - pad stays inside [0, w).
#[inline]
fn valid_out_range(kx: usize, pad: usize, stride: usize, w: usize, ow: usize) -> (usize, usize) {
    let lo = pad.saturating_sub(kx).div_ceil(stride);
    let hi_input = w + pad;
    let hi = if hi_input > kx { ((hi_input - kx - 1) / stride + 1).min(ow) } else { 0 };
    (lo.min(ow), hi)
}

/// Gradients of `conv2d`: (d_input, d_weight, d_bias).
pub fn conv2d_backward<T: Scalar>(
    input: &Tensor<T>,
    weight: &Tensor<T>,
    grad_out: &Tensor<T>,
    stride: usize,
    pad: usize,
) -> (Tensor<T>, Tensor<T>, Tensor<T>) {
    let [n, ci, h, w] = [input.shape()[0], input.shape()[1], input.shape()[2], input.shape()[3]];
    let [co, _, kh, kw] = [weight.shape()[0], weight.shape()[1], weight.shape()[2], weight.shape()[3]];
    let (oh, ow) = (grad_out.shape()[2], grad_out.shape()[3]);
    let mut din = Tensor::zeros(input.shape());
    let mut dw = Tensor::zeros(weight.shape());
    let mut db = Tensor::zeros(&[co]);
    let id = input.data();
    let wd = weight.data();
    let gd = grad_out.data();
    let dind = din.data_mut();
    let dwd = dw.data_mut();
    for bn in 0..n {
        for oc in 0..co {
            let g_plane = &gd[((bn * co + oc) * oh) * ow..((bn * co + oc) * oh + oh) * ow];
            let mut acc_b = T::ZERO;
            for &g in g_plane {
                acc_b += g;
            }
            db.data_mut()[oc] += acc_b;
            for ic in 0..ci {
                for ky in 0..kh {
                    let w_row = ((oc * ci + ic) * kh + ky) * kw;
                    for kx in 0..kw {
                        let wv = wd[w_row + kx];
                        let (ox_lo, ox_hi) = valid_out_range(kx, pad, stride, w, ow);
                        if ox_lo >= ox_hi {
                            continue;
                        }
                        let mut acc_w = T::ZERO;
                        for oy in 0..oh {
                            let iy = (oy * stride + ky) as isize - pad as isize;
                            if iy < 0 || iy >= h as isize {
                                continue;
                            }
                            let in_row = ((bn * ci + ic) * h + iy as usize) * w;
                            let g_row = &g_plane[oy * ow..oy * ow + ow];
                            let base = ox_lo * stride + kx - pad;
                            if stride == 1 {
                                let span = ox_hi - ox_lo;
                                let src = &id[in_row + base..in_row + base + span];
                                let dst = &mut dind[in_row + base..in_row + base + span];
                                for ((&g, &s), d) in
                                    g_row[ox_lo..ox_hi].iter().zip(src).zip(dst.iter_mut())
                                {
                                    acc_w += g * s;
                                    *d += g * wv;
                                }
                            } else {
                                for ox in ox_lo..ox_hi {
                                    let ix = in_row + base + (ox - ox_lo) * stride;
                                    let g = g_row[ox];
                                    acc_w += g * id[ix];
                                    dind[ix] += g * wv;
                                }
                            }
                        }
                        dwd[w_row + kx] += acc_w;
                    }
                }
            }
        }
    }
    (din, dw, db)
}

// ---------------------------------------------------------------------------
// bilinear resize (align-corners = false)
// ---------------------------------------------------------------------------

struct ResizeTap {
    x0: usize,
    x1: usize,
    frac: f64,
}

fn resize_taps(in_len: usize, out_len: usize) -> Vec<ResizeTap> {
    let scale = in_len as f64 / out_len as f64;
    (0..out_len)
        .map(|o| {
            let src = (o as f64 + 0.5) * scale - 0.5;
            let src = src.max(0.0).min((in_len - 1) as f64);
            let x0 = src.floor() as usize;
            let x1 = (x0 + 1).min(in_len - 1);
            ResizeTap { x0, x1, frac: src - x0 as f64 }
        })
        .collect()
}

/// CHW bilinear interpolation to (out_h, out_w). Constant fields are
/// preserved exactly; identity sizes return the input unchanged.
pub fn bilinear_resize<T: Scalar>(input: &Tensor<T>, out_h: usize, out_w: usize) -> Result<Tensor<T>> {
    if input.shape().len() != 3 {
        return Err(shape_err("bilinear_resize rank", 3, input.shape().len()));
    }
    if out_h == 0 || out_w == 0 {
        return Err(Error::InvalidArgument("resize target must be >= 1".into()));
    }
    let [c, h, w] = [input.shape()[0], input.shape()[1], input.shape()[2]];
    if out_h == h && out_w == w {
        return Ok(input.clone());
    }
    let ys = resize_taps(h, out_h);
    let xs = resize_taps(w, out_w);
    let mut out = Tensor::zeros(&[c, out_h, out_w]);
    for ch in 0..c {
        for (oy, ty) in ys.iter().enumerate() {
            let fy = T::from_f64(ty.frac);
            for (ox, tx) in xs.iter().enumerate() {
                let fx = T::from_f64(tx.frac);
                let v00 = input.at3(ch, ty.x0, tx.x0);
                let v01 = input.at3(ch, ty.x0, tx.x1);
                let v10 = input.at3(ch, ty.x1, tx.x0);
                let v11 = input.at3(ch, ty.x1, tx.x1);
                let top = lerp(v00, v01, fx);
                let bot = lerp(v10, v11, fx);
                out.set3(ch, oy, ox, lerp(top, bot, fy));
            }
        }
    }
    Ok(out)
}

pub fn bilinear_resize_backward<T: Scalar>(
    in_shape: &[usize],
    grad_out: &Tensor<T>,
) -> Tensor<T> {
    let [c, h, w] = [in_shape[0], in_shape[1], in_shape[2]];
    let (out_h, out_w) = (grad_out.shape()[1], grad_out.shape()[2]);
    if out_h == h && out_w == w {
        return grad_out.clone();
    }
    let ys = resize_taps(h, out_h);
    let xs = resize_taps(w, out_w);
    let mut din = Tensor::zeros(in_shape);
    for ch in 0..c {
        for (oy, ty) in ys.iter().enumerate() {
            let fy = T::from_f64(ty.frac);
            for (ox, tx) in xs.iter().enumerate() {
                let fx = T::from_f64(tx.frac);
                let g = grad_out.at3(ch, oy, ox);
                let wy0 = T::ONE - fy;
                let wx0 = T::ONE - fx;
                let d = din.data_mut();
                let at = |y: usize, x: usize| (ch * h + y) * w + x;
                d[at(ty.x0, tx.x0)] += g * wy0 * wx0;
                d[at(ty.x0, tx.x1)] += g * wy0 * fx;
                d[at(ty.x1, tx.x0)] += g * fy * wx0;
                d[at(ty.x1, tx.x1)] += g * fy * fx;
            }
        }
    }
    din
}

// ---------------------------------------------------------------------------
// 3x3 mean filter (count-normalized at borders), used by SSIM local stats
// ---------------------------------------------------------------------------

pub fn mean_filter3<T: Scalar>(x: &Tensor<T>) -> Tensor<T> {
    debug_assert_eq!(x.shape().len(), 2);
    let (h, w) = (x.shape()[0], x.shape()[1]);
    let mut out = Tensor::zeros(&[h, w]);
    for y in 0..h {
        for xx in 0..w {
            let y0 = y.saturating_sub(1);
            let y1 = (y + 1).min(h - 1);
            let x0 = xx.saturating_sub(1);
            let x1 = (xx + 1).min(w - 1);
            let mut acc = T::ZERO;
            let mut count = 0usize;
            for yy in y0..=y1 {
                for xi in x0..=x1 {
                    acc += x.at2(yy, xi);
                    count += 1;
                }
            }
            out.data_mut()[y * w + xx] = acc / T::from_f64(count as f64);
        }
    }
    out
}

pub fn mean_filter3_backward<T: Scalar>(grad_out: &Tensor<T>) -> Tensor<T> {
    let (h, w) = (grad_out.shape()[0], grad_out.shape()[1]);
    let mut din = Tensor::zeros(&[h, w]);
    for y in 0..h {
        for xx in 0..w {
            let y0 = y.saturating_sub(1);
            let y1 = (y + 1).min(h - 1);
            let x0 = xx.saturating_sub(1);
            let x1 = (xx + 1).min(w - 1);
            let count = (y1 - y0 + 1) * (x1 - x0 + 1);
            let g = grad_out.at2(y, xx) / T::from_f64(count as f64);
            for yy in y0..=y1 {
                for xi in x0..=x1 {
                    din.data_mut()[yy * w + xi] += g;
                }
            }
        }
    }
    din
}

// ---------------------------------------------------------------------------
// elementwise activations
// ---------------------------------------------------------------------------

pub fn relu<T: Scalar>(x: &Tensor<T>) -> Tensor<T> {
    x.map(|v| v.max_s(T::ZERO))
}

pub fn relu_backward<T: Scalar>(x: &Tensor<T>, grad_out: &Tensor<T>) -> Tensor<T> {
    let mut g = grad_out.clone();
    for (gi, &xi) in g.data_mut().iter_mut().zip(x.data()) {
        if xi <= T::ZERO {
            *gi = T::ZERO;
        }
    }
    g
}

#[inline]
pub fn sigmoid_scalar<T: Scalar>(x: T) -> T {
    if x >= T::ZERO {
        T::ONE / (T::ONE + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::ONE + e)
    }
}

pub fn sigmoid<T: Scalar>(x: &Tensor<T>) -> Tensor<T> {
    x.map(sigmoid_scalar)
}

/// Backward given the forward *output* y = sigmoid(x).
pub fn sigmoid_backward<T: Scalar>(y: &Tensor<T>, grad_out: &Tensor<T>) -> Tensor<T> {
    y.zip(grad_out, |yv, g| yv * (T::ONE - yv) * g).expect("shape checked upstream")
}

#[inline]
pub fn softplus_scalar<T: Scalar>(x: T) -> T {
    x.max_s(T::ZERO) + (T::ONE + (-x.abs()).exp()).ln()
}

pub fn softplus<T: Scalar>(x: &Tensor<T>) -> Tensor<T> {
    x.map(softplus_scalar)
}

pub fn softplus_backward<T: Scalar>(x: &Tensor<T>, grad_out: &Tensor<T>) -> Tensor<T> {
    x.zip(grad_out, |xv, g| sigmoid_scalar(xv) * g).expect("shape checked upstream")
}
