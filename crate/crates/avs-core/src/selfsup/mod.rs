//! Stage 2a: self-supervised relative depth. DepthNet predicts multi-scale
//! sigmoid disparity from a single frame; PoseNet predicts the 6DoF motion
//! from the target frame to each source frame; training minimizes the
//! photometric reprojection error, so the recovered depth is relative.

pub mod loss;
pub mod train;

use crate::error::{Error, Result};
use crate::geometry::Pose;
use crate::nn::{Conv2d, ConvCache, Param};
use crate::ops;
use crate::rng::Rng;
use crate::tensor::{Scalar, Tensor};

#[derive(Debug, Clone)]
pub struct SelfsupConfig {
    /// Encoder stage widths (four stride-2 stages).
    pub widths: [usize; 4],
    /// Number of disparity scales: 4 gives {1, 1/2, 1/4, 1/8}, 3 gives
    /// {1, 1/2, 1/4}.
    pub n_scales: usize,
    pub d_min: f64,
    pub d_max: f64,
}

impl Default for SelfsupConfig {
    fn default() -> Self {
        Self { widths: [16, 24, 32, 48], n_scales: 4, d_min: 0.1, d_max: 12.0 }
    }
}

/// Shrinks the final pose outputs so early training stays near identity.
pub const POSE_OUTPUT_SCALE: f64 = 0.01;

// ---------------------------------------------------------------------------
// DepthNet
// ---------------------------------------------------------------------------

pub struct DepthNet<T: Scalar> {
    pub cfg: SelfsupConfig,
    enc: Vec<Conv2d<T>>,
    dec: Vec<Conv2d<T>>,
    heads: Vec<Conv2d<T>>,
}

pub struct DepthForward<T: Scalar> {
    /// Disparity maps ordered coarse to fine; the last is full resolution.
    pub disps: Vec<Tensor<T>>,
    enc_caches: Vec<ConvCache<T>>,
    enc_pre: Vec<Tensor<T>>,
    enc_feats: Vec<Tensor<T>>,
    dec_caches: Vec<ConvCache<T>>,
    dec_pre: Vec<Tensor<T>>,
    dec_feats: Vec<Tensor<T>>,
    head_caches: Vec<Option<ConvCache<T>>>,
    head_raw: Vec<Option<Tensor<T>>>,
}

impl<T: Scalar> DepthNet<T> {
    pub fn new(cfg: SelfsupConfig, seed: u64) -> Result<Self> {
        if !(cfg.n_scales == 3 || cfg.n_scales == 4) {
            return Err(Error::InvalidArgument(format!(
                "n_scales must be 3 or 4, got {}",
                cfg.n_scales
            )));
        }
        let mut rng = Rng::seed_from(seed).derive("depthnet-init");
        let w = cfg.widths;
        let mut enc = Vec::new();
        let mut in_ch = 3;
        for (i, &out_ch) in w.iter().enumerate() {
            enc.push(Conv2d::new(&mut rng, &format!("denc{i}"), in_ch, out_ch, 3, 2, 1));
            in_ch = out_ch;
        }
        // decoder stages end at resolutions H/8, H/4, H/2, H
        let dec = vec![
            Conv2d::new(&mut rng, "ddec0", w[3], w[2], 3, 1, 1),
            Conv2d::new(&mut rng, "ddec1", w[2], w[1], 3, 1, 1),
            Conv2d::new(&mut rng, "ddec2", w[1], w[0], 3, 1, 1),
            Conv2d::new(&mut rng, "ddec3", w[0], w[0], 3, 1, 1),
        ];
        let head_in = [w[2], w[1], w[0], w[0]];
        let heads = (0..4)
            .map(|i| Conv2d::new(&mut rng, &format!("dhead{i}"), head_in[i], 1, 3, 1, 1))
            .collect();
        Ok(Self { cfg, enc, dec, heads })
    }

    fn head_active(&self, stage: usize) -> bool {
        // with 3 scales the coarsest (1/8) head is dropped
        self.cfg.n_scales == 4 || stage > 0
    }

    pub fn forward(&self, rgb: &Tensor<T>) -> Result<DepthForward<T>> {
        let [c, h, w] = [rgb.shape()[0], rgb.shape()[1], rgb.shape()[2]];
        if c != 3 || h % 32 != 0 || w % 32 != 0 {
            return Err(Error::InvalidArgument(format!(
                "rgb must be 3 x H x W with H, W divisible by 32, got {:?}",
                rgb.shape()
            )));
        }
        let mut enc_caches = Vec::new();
        let mut enc_pre = Vec::new();
        let mut enc_feats = Vec::new();
        let mut x = rgb.clone();
        for layer in &self.enc {
            let (pre, cache) = layer.forward(&x)?;
            x = ops::relu(&pre);
            enc_caches.push(cache);
            enc_pre.push(pre);
            enc_feats.push(x.clone());
        }

        let mut dec_caches = Vec::new();
        let mut dec_pre = Vec::new();
        let mut dec_feats = Vec::new();
        let mut head_caches = Vec::new();
        let mut head_raw = Vec::new();
        let mut disps = Vec::new();
        let mut d = enc_feats[3].clone();
        for (i, layer) in self.dec.iter().enumerate() {
            let (th, tw) = if i < 3 {
                let skip = &enc_feats[2 - i];
                (skip.shape()[1], skip.shape()[2])
            } else {
                (h, w)
            };
            let up = ops::bilinear_resize(&d, th, tw)?;
            let (conv_out, cache) = layer.forward(&up)?;
            let pre = if i < 3 { conv_out.zip(&enc_feats[2 - i], |a, b| a + b)? } else { conv_out };
            d = ops::relu(&pre);
            dec_caches.push(cache);
            dec_pre.push(pre);
            dec_feats.push(d.clone());
            if self.head_active(i) {
                let (raw, hcache) = self.heads[i].forward(&d)?;
                let disp = ops::sigmoid(&raw).reshape(&[raw.shape()[1], raw.shape()[2]])?;
                disps.push(disp);
                head_caches.push(Some(hcache));
                head_raw.push(Some(raw));
            } else {
                head_caches.push(None);
                head_raw.push(None);
            }
        }
        Ok(DepthForward {
            disps,
            enc_caches,
            enc_pre,
            enc_feats,
            dec_caches,
            dec_pre,
            dec_feats,
            head_caches,
            head_raw,
        })
    }

    /// `d_disps` must align with `DepthForward::disps` (coarse to fine).
    pub fn backward(&mut self, fwd: &DepthForward<T>, d_disps: &[Tensor<T>]) -> Result<Tensor<T>> {
        let mut d_dec: Vec<Tensor<T>> =
            fwd.dec_feats.iter().map(|f| Tensor::zeros(f.shape())).collect();
        let mut di = 0usize;
        for stage in 0..4 {
            if !self.head_active(stage) {
                continue;
            }
            let raw = fwd.head_raw[stage].as_ref().unwrap();
            let (hh, hw) = (raw.shape()[1], raw.shape()[2]);
            let y = ops::sigmoid(raw);
            let g3 = d_disps[di].reshape(&[1, hh, hw])?;
            let d_raw = ops::sigmoid_backward(&y, &g3);
            let hcache = fwd.head_caches[stage].as_ref().unwrap();
            d_dec[stage].add_assign(&self.heads[stage].backward(hcache, &d_raw)?)?;
            di += 1;
        }

        let mut d_enc: Vec<Tensor<T>> =
            fwd.enc_feats.iter().map(|f| Tensor::zeros(f.shape())).collect();
        let mut carry: Option<Tensor<T>> = None;
        for i in (0..4).rev() {
            let mut g = d_dec[i].clone();
            if let Some(c) = carry.take() {
                g.add_assign(&c)?;
            }
            let d_pre = ops::relu_backward(&fwd.dec_pre[i], &g);
            if i < 3 {
                d_enc[2 - i].add_assign(&d_pre)?;
            }
            let d_up = self.dec[i].backward(&fwd.dec_caches[i], &d_pre)?;
            let prev_shape = if i == 0 {
                fwd.enc_feats[3].shape().to_vec()
            } else {
                fwd.dec_feats[i - 1].shape().to_vec()
            };
            carry = Some(ops::bilinear_resize_backward(&prev_shape, &d_up));
        }
        d_enc[3].add_assign(&carry.expect("decoder stages"))?;

        let mut d_x = Tensor::zeros(&[1]);
        for i in (0..4).rev() {
            let g = if i == 3 {
                d_enc[i].clone()
            } else {
                let mut g = d_enc[i].clone();
                g.add_assign(&d_x)?;
                g
            };
            let d_pre = ops::relu_backward(&fwd.enc_pre[i], &g);
            d_x = self.enc[i].backward(&fwd.enc_caches[i], &d_pre)?;
        }
        Ok(d_x)
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        let mut ps = Vec::new();
        for l in &mut self.enc {
            ps.extend(l.params_mut());
        }
        for l in &mut self.dec {
            ps.extend(l.params_mut());
        }
        for (i, l) in self.heads.iter_mut().enumerate() {
            // the inactive coarse head in the 3-scale variant never receives
            // gradients but stays in the parameter list for stable ordering
            let _ = i;
            ps.extend(l.params_mut());
        }
        ps
    }
}

// ---------------------------------------------------------------------------
// PoseNet
// ---------------------------------------------------------------------------

pub struct PoseNet<T: Scalar> {
    enc: Vec<Conv2d<T>>,
    head: Conv2d<T>,
}

pub struct PoseForward<T: Scalar> {
    pub pose: Pose<T>,
    enc_caches: Vec<ConvCache<T>>,
    enc_pre: Vec<Tensor<T>>,
    head_cache: ConvCache<T>,
    head_shape: [usize; 3],
}

impl<T: Scalar> PoseNet<T> {
    pub fn new(widths: [usize; 4], seed: u64) -> Self {
        let mut rng = Rng::seed_from(seed).derive("posenet-init");
        let mut enc = Vec::new();
        let mut in_ch = 6;
        for (i, &out_ch) in widths.iter().enumerate() {
            enc.push(Conv2d::new(&mut rng, &format!("penc{i}"), in_ch, out_ch, 3, 2, 1));
            in_ch = out_ch;
        }
        let head = Conv2d::new(&mut rng, "phead", widths[3], 6, 1, 1, 0);
        Self { enc, head }
    }

    /// `pair` is the target and source frames concatenated channel-wise
    /// (6 x H x W); the output is the target -> source motion.
    pub fn forward(&self, pair: &Tensor<T>) -> Result<PoseForward<T>> {
        if pair.shape().len() != 3 || pair.shape()[0] != 6 {
            return Err(Error::InvalidArgument(format!(
                "posenet input must be 6 x H x W, got {:?}",
                pair.shape()
            )));
        }
        let mut x = pair.clone();
        let mut enc_caches = Vec::new();
        let mut enc_pre = Vec::new();
        for layer in &self.enc {
            let (pre, cache) = layer.forward(&x)?;
            x = ops::relu(&pre);
            enc_caches.push(cache);
            enc_pre.push(pre);
        }
        let (raw, head_cache) = self.head.forward(&x)?;
        let head_shape = [raw.shape()[0], raw.shape()[1], raw.shape()[2]];
        let scale = T::from_f64(POSE_OUTPUT_SCALE);
        let (hh, hw) = (head_shape[1], head_shape[2]);
        let inv = T::from_f64(1.0 / (hh * hw) as f64);
        let mut vec6 = [T::ZERO; 6];
        for ch in 0..6 {
            let mut acc = T::ZERO;
            for i in 0..hh * hw {
                acc += raw.data()[ch * hh * hw + i];
            }
            vec6[ch] = acc * inv * scale;
        }
        let pose = Pose::new([vec6[0], vec6[1], vec6[2]], [vec6[3], vec6[4], vec6[5]]);
        Ok(PoseForward { pose, enc_caches, enc_pre, head_cache, head_shape })
    }

    /// d_rot and d_trans are the gradients w.r.t. the pose vector.
    pub fn backward(&mut self, fwd: &PoseForward<T>, d_rot: [T; 3], d_trans: [T; 3]) -> Result<Tensor<T>> {
        let [_, hh, hw] = fwd.head_shape;
        let scale = T::from_f64(POSE_OUTPUT_SCALE / (hh * hw) as f64);
        let mut d_raw = Tensor::zeros(&[6, hh, hw]);
        let d6 = [d_rot[0], d_rot[1], d_rot[2], d_trans[0], d_trans[1], d_trans[2]];
        for ch in 0..6 {
            let g = d6[ch] * scale;
            for i in 0..hh * hw {
                d_raw.data_mut()[ch * hh * hw + i] = g;
            }
        }
        let mut d_x = self.head.backward(&fwd.head_cache, &d_raw)?;
        for i in (0..self.enc.len()).rev() {
            let d_pre = ops::relu_backward(&fwd.enc_pre[i], &d_x);
            d_x = self.enc[i].backward(&fwd.enc_caches[i], &d_pre)?;
        }
        Ok(d_x)
    }

    pub fn zero_head(&mut self) {
        self.head.weight.value.fill(T::ZERO);
        self.head.bias.value.fill(T::ZERO);
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        let mut ps = Vec::new();
        for l in &mut self.enc {
            ps.extend(l.params_mut());
        }
        ps.extend(self.head.params_mut());
        ps
    }
}
