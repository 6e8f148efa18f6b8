//! Stage 1: supervised pseudo-dense metric depth from RGB plus binaural echo
//! spectrograms. A small conv encoder/decoder supplies visual tokens and
//! multi-scale features, an audio conv stack embeds the resized spectrogram,
//! cross-modal attention fuses the two, and a metric-bins head (seed
//! regressor, attractor stages, log-binomial) produces depth.

pub mod attention;
pub mod bins;
pub mod loss;
pub mod train;

use crate::error::{Error, Result};
use crate::nn::{Conv2d, ConvCache, Linear, LinearCache, Param};
use crate::ops;
use crate::rng::Rng;
use crate::tensor::{Scalar, Tensor};

use attention::{AttentionCache, CrossModalAttention};
use bins::{AttractorCache, BinPartition, LogBinomialCache, SeedCache};

#[derive(Debug, Clone)]
pub struct AvsNetConfig {
    /// Channel widths of the five stride-2 encoder stages; the last is the
    /// token embedding dim E.
    pub widths: [usize; 5],
    pub n_heads: usize,
    pub n_bins: usize,
    pub d_min: f64,
    pub d_max: f64,
    /// Attractors per refinement stage, one stage per decoder scale.
    pub n_attractors: [usize; 4],
    pub alpha_attr: f64,
    pub gamma_attr: i32,
    /// Seed-projector output dim E'.
    pub bin_embed_dim: usize,
    /// Hidden width of the attractor conv heads.
    pub attr_hidden: usize,
    pub use_audio: bool,
}

impl Default for AvsNetConfig {
    fn default() -> Self {
        Self {
            widths: [16, 32, 64, 128, 192],
            n_heads: 4,
            n_bins: 64,
            d_min: 0.1,
            d_max: 12.0,
            n_attractors: [16, 8, 4, 1],
            alpha_attr: 300.0,
            gamma_attr: 2,
            bin_embed_dim: 32,
            attr_hidden: 16,
            use_audio: true,
        }
    }
}

const Q_EPS: f64 = 1e-6;
const T_EPS: f64 = 1e-3;

pub struct AvsNet<T: Scalar> {
    pub cfg: AvsNetConfig,
    venc: Vec<Conv2d<T>>,
    dconv: Vec<Conv2d<T>>,
    aenc: Vec<Conv2d<T>>,
    ares: Conv2d<T>,
    pub attention: CrossModalAttention<T>,
    pub seed_regressor: Linear<T>,
    seed_projector: Linear<T>,
    attr_conv: Vec<Conv2d<T>>,
    attr_fc: Vec<Linear<T>>,
    qt_head: Conv2d<T>,
}

/// Everything the backward pass needs from one forward evaluation.
pub struct AvsForward<T: Scalar> {
    pub depth: Tensor<T>,
    pub bins: BinPartition<T>,
    pub partitions: Vec<BinPartition<T>>,
    rgb_shape: [usize; 3],
    spec_shape: Option<[usize; 3]>,
    // visual encoder
    venc_caches: Vec<ConvCache<T>>,
    venc_pre: Vec<Tensor<T>>,
    venc_feats: Vec<Tensor<T>>,
    // decoder
    dec_caches: Vec<ConvCache<T>>,
    dec_pre: Vec<Tensor<T>>,
    dec_feats: Vec<Tensor<T>>,
    // audio encoder
    aenc_caches: Vec<ConvCache<T>>,
    aenc_pre: Vec<Tensor<T>>,
    ares_cache: Option<ConvCache<T>>,
    ares_sum_pre: Option<Tensor<T>>,
    audio_bottleneck_shape: Option<[usize; 3]>,
    // fusion
    fused: Tensor<T>,
    att_cache: Option<AttentionCache<T>>,
    // bins head
    seed_lin_cache: LinearCache<T>,
    seed_cache: SeedCache<T>,
    proj_cache: LinearCache<T>,
    attr_conv_caches: Vec<ConvCache<T>>,
    attr_conv_pre: Vec<Tensor<T>>,
    attr_fc_caches: Vec<LinearCache<T>>,
    attr_sig: Vec<Tensor<T>>,
    attr_caches: Vec<AttractorCache<T>>,
    // probability head
    qt_cache: ConvCache<T>,
    qt_raw: Tensor<T>,
    /// Log-binomial mode map, strictly inside (0, 1).
    pub q: Tensor<T>,
    /// Log-binomial temperature map, strictly positive.
    pub t: Tensor<T>,
    lb_cache: LogBinomialCache<T>,
    probs: Tensor<T>,
}

/// Gradients w.r.t. the network inputs; parameter gradients accumulate in
/// the layers themselves.
pub struct AvsInputGrads<T: Scalar> {
    pub d_rgb: Tensor<T>,
    /// None when the audio branch is bypassed.
    pub d_spec: Option<Tensor<T>>,
}

fn to_tokens<T: Scalar>(x: &Tensor<T>) -> Tensor<T> {
    let (c, h, w) = (x.shape()[0], x.shape()[1], x.shape()[2]);
    let n = h * w;
    let mut out = Tensor::zeros(&[n, c]);
    for ch in 0..c {
        for i in 0..n {
            out.data_mut()[i * c + ch] = x.data()[ch * n + i];
        }
    }
    out
}

fn from_tokens<T: Scalar>(t: &Tensor<T>, h: usize, w: usize) -> Tensor<T> {
    let (n, c) = (t.shape()[0], t.shape()[1]);
    debug_assert_eq!(n, h * w);
    let mut out = Tensor::zeros(&[c, h, w]);
    for ch in 0..c {
        for i in 0..n {
            out.data_mut()[ch * n + i] = t.data()[i * c + ch];
        }
    }
    out
}

fn spatial_mean<T: Scalar>(x: &Tensor<T>) -> Tensor<T> {
    let (c, h, w) = (x.shape()[0], x.shape()[1], x.shape()[2]);
    let inv = T::from_f64(1.0 / (h * w) as f64);
    let mut out = Tensor::zeros(&[1, c]);
    for ch in 0..c {
        let mut acc = T::ZERO;
        for i in 0..h * w {
            acc += x.data()[ch * h * w + i];
        }
        out.data_mut()[ch] = acc * inv;
    }
    out
}

fn spatial_mean_backward<T: Scalar>(grad: &Tensor<T>, c: usize, h: usize, w: usize) -> Tensor<T> {
    let inv = T::from_f64(1.0 / (h * w) as f64);
    let mut out = Tensor::zeros(&[c, h, w]);
    for ch in 0..c {
        let g = grad.data()[ch] * inv;
        for i in 0..h * w {
            out.data_mut()[ch * h * w + i] = g;
        }
    }
    out
}

fn token_mean<T: Scalar>(tokens: &Tensor<T>) -> Tensor<T> {
    let (n, e) = (tokens.shape()[0], tokens.shape()[1]);
    let inv = T::from_f64(1.0 / n as f64);
    let mut out = Tensor::zeros(&[1, e]);
    for i in 0..n {
        for c in 0..e {
            out.data_mut()[c] += tokens.data()[i * e + c] * inv;
        }
    }
    out
}

fn token_mean_backward<T: Scalar>(grad: &Tensor<T>, n: usize) -> Tensor<T> {
    let e = grad.numel();
    let inv = T::from_f64(1.0 / n as f64);
    let mut out = Tensor::zeros(&[n, e]);
    for i in 0..n {
        for c in 0..e {
            out.data_mut()[i * e + c] = grad.data()[c] * inv;
        }
    }
    out
}

impl<T: Scalar> AvsNet<T> {
    pub fn new(cfg: AvsNetConfig, seed: u64) -> Result<Self> {
        let w = cfg.widths;
        let mut rng = Rng::seed_from(seed).derive("avsnet-init");
        let mut venc = Vec::new();
        let mut in_ch = 3;
        for (i, &out_ch) in w.iter().enumerate() {
            venc.push(Conv2d::new(&mut rng, &format!("venc{i}"), in_ch, out_ch, 3, 2, 1));
            in_ch = out_ch;
        }
        let dconv = (0..4)
            .map(|i| Conv2d::new(&mut rng, &format!("dconv{i}"), w[4 - i], w[3 - i], 3, 1, 1))
            .collect();
        let mut aenc = Vec::new();
        let mut in_ch = 2;
        for (i, &out_ch) in w.iter().enumerate() {
            aenc.push(Conv2d::new(&mut rng, &format!("aenc{i}"), in_ch, out_ch, 3, 2, 1));
            in_ch = out_ch;
        }
        let ares = Conv2d::new(&mut rng, "ares", w[4], w[4], 3, 1, 1);
        let attention = CrossModalAttention::new(&mut rng, "fusion", w[4], cfg.n_heads)?;
        let seed_regressor = Linear::new(&mut rng, "seed_regressor", w[4], cfg.n_bins);
        let seed_projector = Linear::new(&mut rng, "seed_projector", w[4], cfg.bin_embed_dim);
        let mut attr_conv = Vec::new();
        let mut attr_fc = Vec::new();
        for (i, &n_attr) in cfg.n_attractors.iter().enumerate() {
            attr_conv.push(Conv2d::new(&mut rng, &format!("attr_conv{i}"), w[3 - i], cfg.attr_hidden, 1, 1, 0));
            attr_fc.push(Linear::new(
                &mut rng,
                &format!("attr_fc{i}"),
                cfg.attr_hidden + cfg.bin_embed_dim,
                n_attr,
            ));
        }
        let qt_head = Conv2d::new(&mut rng, "qt_head", w[0], 2, 3, 1, 1);
        Ok(Self {
            cfg,
            venc,
            dconv,
            aenc,
            ares,
            attention,
            seed_regressor,
            seed_projector,
            attr_conv,
            attr_fc,
            qt_head,
        })
    }

    /// Forward pass on one sample. `spec` is the 2 x F x T magnitude
    /// spectrogram and may be omitted only when the audio branch is off.
    pub fn forward(&self, rgb: &Tensor<T>, spec: Option<&Tensor<T>>) -> Result<AvsForward<T>> {
        let [c, h, w] = [rgb.shape()[0], rgb.shape()[1], rgb.shape()[2]];
        if c != 3 || h % 32 != 0 || w % 32 != 0 {
            return Err(Error::InvalidArgument(format!(
                "rgb must be 3 x H x W with H, W divisible by 32, got {:?}",
                rgb.shape()
            )));
        }
        if self.cfg.use_audio && spec.is_none() {
            return Err(Error::InvalidArgument("audio branch enabled but no spectrogram given".into()));
        }

        // visual encoder
        let mut venc_caches = Vec::new();
        let mut venc_pre = Vec::new();
        let mut venc_feats = Vec::new();
        let mut x = rgb.clone();
        for layer in &self.venc {
            let (pre, cache) = layer.forward(&x)?;
            x = ops::relu(&pre);
            venc_caches.push(cache);
            venc_pre.push(pre);
            venc_feats.push(x.clone());
        }
        let bottleneck = venc_feats[4].clone();
        let f_v = to_tokens(&bottleneck);

        // decoder with skip connections
        let mut dec_caches = Vec::new();
        let mut dec_pre = Vec::new();
        let mut dec_feats = Vec::new();
        let mut d = bottleneck.clone();
        for (i, layer) in self.dconv.iter().enumerate() {
            let skip = &venc_feats[3 - i];
            let up = ops::bilinear_resize(&d, skip.shape()[1], skip.shape()[2])?;
            let (conv_out, cache) = layer.forward(&up)?;
            let pre = conv_out.zip(skip, |a, b| a + b)?;
            d = ops::relu(&pre);
            dec_caches.push(cache);
            dec_pre.push(pre);
            dec_feats.push(d.clone());
        }

        // audio branch
        let mut aenc_caches = Vec::new();
        let mut aenc_pre = Vec::new();
        let mut ares_cache = None;
        let mut ares_sum_pre = None;
        let mut audio_bottleneck_shape = None;
        let mut att_cache = None;
        let mut spec_shape = None;
        let fused = if self.cfg.use_audio {
            let spec = spec.expect("checked above");
            if spec.shape().len() != 3 || spec.shape()[0] != 2 {
                return Err(Error::InvalidArgument(format!(
                    "spectrogram must be 2 x F x T, got {:?}",
                    spec.shape()
                )));
            }
            spec_shape = Some([spec.shape()[0], spec.shape()[1], spec.shape()[2]]);
            let mut a = ops::bilinear_resize(spec, h, w)?;
            for layer in &self.aenc {
                let (pre, cache) = layer.forward(&a)?;
                a = ops::relu(&pre);
                aenc_caches.push(cache);
                aenc_pre.push(pre);
            }
            let (res, rcache) = self.ares.forward(&a)?;
            let sum_pre = a.zip(&res, |x, y| x + y)?;
            let a_bot = ops::relu(&sum_pre);
            audio_bottleneck_shape = Some([a_bot.shape()[0], a_bot.shape()[1], a_bot.shape()[2]]);
            ares_cache = Some(rcache);
            ares_sum_pre = Some(sum_pre);
            let f_a = to_tokens(&a_bot);
            let (fused, cache) = self.attention.forward(&f_v, &f_a)?;
            att_cache = Some(cache);
            fused
        } else {
            f_v.clone()
        };

        // seed bins
        let pooled = token_mean(&fused);
        let (seed_logits, seed_lin_cache) = self.seed_regressor.forward(&pooled)?;
        let (mut partition, seed_cache) =
            bins::seed_partition(&seed_logits.reshape(&[self.cfg.n_bins])?, self.cfg.d_min, self.cfg.d_max)?;
        let (proj_tokens, proj_cache) = self.seed_projector.forward(&fused)?;
        let bin_embed = token_mean(&proj_tokens);

        // attractor refinement over decoder scales
        let span = self.cfg.d_max - self.cfg.d_min;
        let mut attr_conv_caches = Vec::new();
        let mut attr_conv_pre = Vec::new();
        let mut attr_fc_caches = Vec::new();
        let mut attr_sig = Vec::new();
        let mut attr_caches = Vec::new();
        let mut partitions = vec![partition.clone()];
        for stage in 0..self.attr_conv.len() {
            let feature = &dec_feats[stage];
            let (pre, ccache) = self.attr_conv[stage].forward(feature)?;
            let hidden = ops::relu(&pre);
            let pooled_h = spatial_mean(&hidden);
            let mut cat = Tensor::zeros(&[1, self.cfg.attr_hidden + self.cfg.bin_embed_dim]);
            cat.data_mut()[..self.cfg.attr_hidden].copy_from_slice(pooled_h.data());
            cat.data_mut()[self.cfg.attr_hidden..].copy_from_slice(bin_embed.data());
            let (logits, fcache) = self.attr_fc[stage].forward(&cat)?;
            let sig = ops::sigmoid(&logits);
            let attractors: Vec<T> = sig
                .data()
                .iter()
                .map(|&s| T::from_f64(self.cfg.d_min) + s * T::from_f64(span))
                .collect();
            let (next, acache) =
                bins::attractor_adjust(&partition, &attractors, self.cfg.alpha_attr, self.cfg.gamma_attr)?;
            partition = next;
            partitions.push(partition.clone());
            attr_conv_caches.push(ccache);
            attr_conv_pre.push(pre);
            attr_fc_caches.push(fcache);
            attr_sig.push(sig);
            attr_caches.push(acache);
        }

        // probability head on the finest decoder feature
        let finest = &dec_feats[3];
        let (qt_raw, qt_cache) = self.qt_head.forward(finest)?;
        let (hh, hw) = (qt_raw.shape()[1], qt_raw.shape()[2]);
        let mut q = Tensor::zeros(&[hh, hw]);
        let mut t = Tensor::zeros(&[hh, hw]);
        let (qe, te) = (T::from_f64(Q_EPS), T::from_f64(T_EPS));
        for i in 0..hh * hw {
            let s = ops::sigmoid_scalar(qt_raw.data()[i]);
            q.data_mut()[i] = s.max_s(qe).min_s(T::ONE - qe);
            t.data_mut()[i] = ops::softplus_scalar(qt_raw.data()[hh * hw + i]) + te;
        }
        let (probs, lb_cache) = bins::log_binomial_probs(&q, &t, self.cfg.n_bins)?;
        let half = bins::pseudo_depth(&probs, &partition.centers)?;
        let depth = ops::bilinear_resize(&half.reshape(&[1, hh, hw])?, h, w)?.reshape(&[h, w])?;

        Ok(AvsForward {
            depth,
            bins: partition,
            partitions,
            rgb_shape: [3, h, w],
            spec_shape,
            venc_caches,
            venc_pre,
            venc_feats,
            dec_caches,
            dec_pre,
            dec_feats,
            aenc_caches,
            aenc_pre,
            ares_cache,
            ares_sum_pre,
            audio_bottleneck_shape,
            fused,
            att_cache,
            seed_lin_cache,
            seed_cache,
            proj_cache,
            attr_conv_caches,
            attr_conv_pre,
            attr_fc_caches,
            attr_sig,
            attr_caches,
            qt_cache,
            qt_raw,
            q,
            t,
            lb_cache,
            probs,
        })
    }

    /// Backpropagates d(loss)/d(depth) through the whole network,
    /// accumulating parameter gradients and returning input gradients.
    pub fn backward(&mut self, fwd: &AvsForward<T>, d_depth: &Tensor<T>) -> Result<AvsInputGrads<T>> {
        let [_, h, w] = fwd.rgb_shape;
        let (hh, hw) = (fwd.q.shape()[0], fwd.q.shape()[1]);

        // depth -> half-resolution pseudo depth
        let d_depth3 = d_depth.reshape(&[1, h, w])?;
        let d_half = ops::bilinear_resize_backward(&[1, hh, hw], &d_depth3).reshape(&[hh, hw])?;
        let (d_probs, d_centers_final) =
            bins::pseudo_depth_backward(&fwd.probs, &fwd.bins.centers, &d_half);

        // probability head
        let (d_q, d_t) = bins::log_binomial_backward(&fwd.lb_cache, &d_probs);
        let mut d_qt = Tensor::zeros(fwd.qt_raw.shape());
        let qe = T::from_f64(Q_EPS);
        for i in 0..hh * hw {
            let s = ops::sigmoid_scalar(fwd.qt_raw.data()[i]);
            // clamp is pass-through strictly inside the bounds
            if s > qe && s < T::ONE - qe {
                d_qt.data_mut()[i] = d_q.data()[i] * s * (T::ONE - s);
            }
            let x1 = fwd.qt_raw.data()[hh * hw + i];
            d_qt.data_mut()[hh * hw + i] = d_t.data()[i] * ops::sigmoid_scalar(x1);
        }
        let mut d_dec_feats: Vec<Tensor<T>> =
            fwd.dec_feats.iter().map(|f| Tensor::zeros(f.shape())).collect();
        d_dec_feats[3].add_assign(&self.qt_head.backward(&fwd.qt_cache, &d_qt)?)?;

        // attractor stages, reversed
        let span = T::from_f64(self.cfg.d_max - self.cfg.d_min);
        let mut d_centers = d_centers_final;
        let mut d_bin_embed = Tensor::zeros(&[1, self.cfg.bin_embed_dim]);
        for stage in (0..self.attr_conv.len()).rev() {
            let (d_prev, d_attr) = bins::attractor_adjust_backward(&fwd.attr_caches[stage], &d_centers);
            let sig = &fwd.attr_sig[stage];
            let d_logits = Tensor::from_vec(
                sig.shape(),
                sig.data()
                    .iter()
                    .zip(&d_attr)
                    .map(|(&s, &g)| g * span * s * (T::ONE - s))
                    .collect(),
            )?;
            let d_cat = self.attr_fc[stage].backward(&fwd.attr_fc_caches[stage], &d_logits)?;
            let d_pool =
                Tensor::from_vec(&[1, self.cfg.attr_hidden], d_cat.data()[..self.cfg.attr_hidden].to_vec())?;
            for (i, &g) in d_cat.data()[self.cfg.attr_hidden..].iter().enumerate() {
                d_bin_embed.data_mut()[i] += g;
            }
            let pre = &fwd.attr_conv_pre[stage];
            let (pc, ph, pw) = (pre.shape()[0], pre.shape()[1], pre.shape()[2]);
            let d_hidden = spatial_mean_backward(&d_pool, pc, ph, pw);
            let d_pre = ops::relu_backward(pre, &d_hidden);
            d_dec_feats[stage]
                .add_assign(&self.attr_conv[stage].backward(&fwd.attr_conv_caches[stage], &d_pre)?)?;
            d_centers = d_prev;
        }

        // seed partition and projector
        let d_seed_logits = bins::seed_partition_backward(
            &fwd.seed_cache,
            &d_centers,
            &vec![T::ZERO; self.cfg.n_bins],
        );
        let d_pooled = self
            .seed_regressor
            .backward(&fwd.seed_lin_cache, &d_seed_logits.reshape(&[1, self.cfg.n_bins])?)?;
        let n_tokens = fwd.fused.shape()[0];
        let mut d_fused = token_mean_backward(&d_pooled.reshape(&[self.cfg.widths[4]])?, n_tokens);
        let d_proj_tokens =
            token_mean_backward(&d_bin_embed.reshape(&[self.cfg.bin_embed_dim])?, n_tokens);
        d_fused.add_assign(&self.seed_projector.backward(&fwd.proj_cache, &d_proj_tokens)?)?;

        // fusion
        let (bh, bw) = (fwd.venc_feats[4].shape()[1], fwd.venc_feats[4].shape()[2]);
        let (d_f_v, d_spec) = if self.cfg.use_audio {
            let cache = fwd.att_cache.as_ref().expect("audio forward cached");
            let (d_f_v, d_f_a) = self.attention.backward(cache, &d_fused)?;
            // audio encoder backward
            let abs = fwd.audio_bottleneck_shape.expect("audio shapes cached");
            let mut d_a = from_tokens(&d_f_a, abs[1], abs[2]);
            // residual block: a_bot = relu(a5 + ares(a5))
            let d_sum = ops::relu_backward(fwd.ares_sum_pre.as_ref().unwrap(), &d_a);
            let d_res_in = self.ares.backward(fwd.ares_cache.as_ref().unwrap(), &d_sum)?;
            d_a = d_sum.zip(&d_res_in, |x, y| x + y)?;
            for i in (0..self.aenc.len()).rev() {
                let d_pre = ops::relu_backward(&fwd.aenc_pre[i], &d_a);
                d_a = self.aenc[i].backward(&fwd.aenc_caches[i], &d_pre)?;
            }
            let ss = fwd.spec_shape.expect("spec shape cached");
            let d_spec = ops::bilinear_resize_backward(&ss, &d_a);
            (d_f_v, Some(d_spec))
        } else {
            (d_fused, None)
        };

        // decoder backward (reverse stage order), accumulating skip grads
        let mut d_enc: Vec<Tensor<T>> =
            fwd.venc_feats.iter().map(|f| Tensor::zeros(f.shape())).collect();
        let mut carry: Option<Tensor<T>> = None;
        for i in (0..self.dconv.len()).rev() {
            let mut g = d_dec_feats[i].clone();
            if let Some(c) = carry.take() {
                g.add_assign(&c)?;
            }
            let d_pre = ops::relu_backward(&fwd.dec_pre[i], &g);
            d_enc[3 - i].add_assign(&d_pre)?;
            let d_up = self.dconv[i].backward(&fwd.dec_caches[i], &d_pre)?;
            let prev_shape = if i == 0 {
                fwd.venc_feats[4].shape().to_vec()
            } else {
                fwd.dec_feats[i - 1].shape().to_vec()
            };
            carry = Some(ops::bilinear_resize_backward(&prev_shape, &d_up));
        }
        // bottleneck receives the decoder carry plus the token-path gradient
        d_enc[4].add_assign(&carry.expect("decoder has stages"))?;
        d_enc[4].add_assign(&from_tokens(&d_f_v, bh, bw))?;

        // visual encoder backward
        let mut d_x = Tensor::zeros(&[1]);
        for i in (0..self.venc.len()).rev() {
            let g = if i == self.venc.len() - 1 {
                d_enc[i].clone()
            } else {
                let mut g = d_enc[i].clone();
                g.add_assign(&d_x)?;
                g
            };
            let d_pre = ops::relu_backward(&fwd.venc_pre[i], &g);
            d_x = self.venc[i].backward(&fwd.venc_caches[i], &d_pre)?;
        }

        Ok(AvsInputGrads { d_rgb: d_x, d_spec })
    }

    /// Visual token embedding f_V (N x E with N = (H/32)(W/32)).
    pub fn visual_tokens(&self, rgb: &Tensor<T>) -> Result<Tensor<T>> {
        let mut x = rgb.clone();
        for layer in &self.venc {
            let (pre, _) = layer.forward(&x)?;
            x = ops::relu(&pre);
        }
        Ok(to_tokens(&x))
    }

    /// Audio token embedding f_A on the same grid as the visual tokens.
    pub fn audio_tokens(&self, spec: &Tensor<T>, h: usize, w: usize) -> Result<Tensor<T>> {
        let mut a = ops::bilinear_resize(spec, h, w)?;
        for layer in &self.aenc {
            let (pre, _) = layer.forward(&a)?;
            a = ops::relu(&pre);
        }
        let (res, _) = self.ares.forward(&a)?;
        let sum = a.zip(&res, |x, y| x + y)?;
        Ok(to_tokens(&ops::relu(&sum)))
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        let mut ps = Vec::new();
        for l in &mut self.venc {
            ps.extend(l.params_mut());
        }
        for l in &mut self.dconv {
            ps.extend(l.params_mut());
        }
        for l in &mut self.aenc {
            ps.extend(l.params_mut());
        }
        ps.extend(self.ares.params_mut());
        ps.extend(self.attention.params_mut());
        ps.extend(self.seed_regressor.params_mut());
        ps.extend(self.seed_projector.params_mut());
        for l in &mut self.attr_conv {
            ps.extend(l.params_mut());
        }
        for l in &mut self.attr_fc {
            ps.extend(l.params_mut());
        }
        ps.extend(self.qt_head.params_mut());
        ps
    }
}
