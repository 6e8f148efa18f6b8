//! Joint DepthNet/PoseNet training on frame triples via the multi-scale
//! photometric reprojection objective.

use std::path::Path;

use crate::checkpoint;
use crate::error::{Error, Result};
use crate::geometry::{
    disp_to_depth, disp_to_depth_backward, inverse_warp, inverse_warp_backward, CameraIntrinsics,
    Pose,
};
use crate::nn::{SgdMomentum, WarmupCosine};
use crate::ops;
use crate::rng::Rng;
use crate::tensor::{Scalar, Tensor};

use super::loss::{
    auto_mask, joint_loss, masked_mean, masked_mean_backward, min_over_sources,
    min_over_sources_backward, photometric_error, photometric_error_backward, PhotometricParams,
};
use super::{DepthNet, PoseNet, SelfsupConfig};

/// Three frames from one contiguous scene, `interval` frames apart.
#[derive(Debug, Clone)]
pub struct FrameTriple<T: Scalar> {
    pub prev: Tensor<T>,
    pub target: Tensor<T>,
    pub next: Tensor<T>,
    pub interval: usize,
}

#[derive(Debug, Clone)]
pub struct SelfsupTrainConfig {
    pub steps: usize,
    pub base_lr: f64,
    pub momentum: f64,
    pub seed: u64,
    pub photometric: PhotometricParams,
    /// Keeps PoseNet frozen at the identity motion (ablation knob).
    pub freeze_pose_identity: bool,
}

impl Default for SelfsupTrainConfig {
    fn default() -> Self {
        Self {
            steps: 500,
            base_lr: 1e-3,
            momentum: 0.9,
            seed: 0,
            photometric: PhotometricParams::default(),
            freeze_pose_identity: false,
        }
    }
}

fn concat_channels<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>) -> Tensor<T> {
    let (c, h, w) = (a.shape()[0], a.shape()[1], a.shape()[2]);
    let mut data = Vec::with_capacity(2 * c * h * w);
    data.extend_from_slice(a.data());
    data.extend_from_slice(b.data());
    Tensor::from_vec(&[2 * c, h, w], data).expect("concat")
}

/// Relative depth from the finest-scale disparity.
pub fn predict_relative_depth<T: Scalar>(net: &DepthNet<T>, rgb: &Tensor<T>) -> Result<Tensor<T>> {
    let fwd = net.forward(rgb)?;
    let finest = fwd.disps.last().expect("depthnet emits at least one scale");
    disp_to_depth(finest, net.cfg.d_min, net.cfg.d_max)
}

/// One evaluation of the joint objective with everything needed to step.
struct StepEval<T: Scalar> {
    loss: f64,
    d_disps: Vec<Tensor<T>>,
    d_poses: [([T; 3], [T; 3]); 2],
}

fn eval_triple<T: Scalar>(
    depthnet: &DepthNet<T>,
    depth_fwd: &super::DepthForward<T>,
    triple: &FrameTriple<T>,
    poses: &[Pose<T>; 2],
    k: &CameraIntrinsics,
    params: &PhotometricParams,
    backward: bool,
) -> Result<StepEval<T>> {
    let (h, w) = (triple.target.shape()[1], triple.target.shape()[2]);
    let sources = [&triple.prev, &triple.next];
    let n_scales = depth_fwd.disps.len();

    // identity reprojection error of the unwarped sources, for auto-masking
    let mut identity_maps = Vec::with_capacity(2);
    for src in sources {
        let (pe, _) = photometric_error(&triple.target, src, params)?;
        identity_maps.push(pe);
    }
    let (identity_min, _) = min_over_sources(&identity_maps)?;

    let mut pe_means = Vec::with_capacity(n_scales);
    let mut smooths = Vec::with_capacity(n_scales);
    let mut d_disps: Vec<Tensor<T>> =
        depth_fwd.disps.iter().map(|d| Tensor::zeros(d.shape())).collect();
    let mut d_poses = [([T::ZERO; 3], [T::ZERO; 3]), ([T::ZERO; 3], [T::ZERO; 3])];
    let inv_n = 1.0 / n_scales as f64;

    for (si, disp) in depth_fwd.disps.iter().enumerate() {
        let disp_up3 = ops::bilinear_resize(
            &disp.reshape(&[1, disp.shape()[0], disp.shape()[1]])?,
            h,
            w,
        )?;
        let disp_up = disp_up3.reshape(&[h, w])?;
        let depth = disp_to_depth(&disp_up, depthnet.cfg.d_min, depthnet.cfg.d_max)?;

        let mut pe_maps = Vec::with_capacity(2);
        let mut pe_caches = Vec::with_capacity(2);
        let mut warps = Vec::with_capacity(2);
        for (src, pose) in sources.iter().zip(poses) {
            let warp = inverse_warp(src, &depth, pose, k)?;
            let (pe, cache) = photometric_error(&triple.target, &warp.image, params)?;
            pe_maps.push(pe);
            pe_caches.push(cache);
            warps.push(warp);
        }
        let (pe_min, chosen) = min_over_sources(&pe_maps)?;
        let mask = auto_mask(&pe_min, &identity_min)?;
        pe_means.push(masked_mean(&pe_min, &mask)?);

        // smoothness at the disparity's native scale
        let rgb_small = ops::bilinear_resize(&triple.target, disp.shape()[0], disp.shape()[1])?;
        let (smooth, smooth_cache) = super::loss::smoothness_loss(disp, &rgb_small)?;
        smooths.push(smooth);

        if backward {
            let d_pe_min = masked_mean_backward(&mask, inv_n);
            let d_pe_sources = min_over_sources_backward(2, &chosen, &d_pe_min);
            let mut d_depth = Tensor::zeros(&[h, w]);
            for (src_i, d_pe) in d_pe_sources.iter().enumerate() {
                let d_synth = photometric_error_backward(&pe_caches[src_i], params, d_pe);
                let grads =
                    inverse_warp_backward(sources[src_i], &depth, &poses[src_i], k, &d_synth)?;
                d_depth.add_assign(&grads.d_depth)?;
                for i in 0..3 {
                    d_poses[src_i].0[i] += grads.d_rotation[i];
                    d_poses[src_i].1[i] += grads.d_translation[i];
                }
            }
            let d_disp_up =
                disp_to_depth_backward(&disp_up, depthnet.cfg.d_min, depthnet.cfg.d_max, &d_depth);
            let d_disp3 = ops::bilinear_resize_backward(
                &[1, disp.shape()[0], disp.shape()[1]],
                &d_disp_up.reshape(&[1, h, w])?,
            );
            d_disps[si].add_assign(&d_disp3.reshape(disp.shape())?)?;
            let d_smooth = super::loss::smoothness_loss_backward(
                &smooth_cache,
                params.lambda_smooth * inv_n,
            );
            d_disps[si].add_assign(&d_smooth)?;
        }
    }

    let loss = joint_loss(&pe_means, &smooths, params.lambda_smooth)?;
    Ok(StepEval { loss, d_disps, d_poses })
}

/// Evaluates the joint loss without updating anything.
pub fn joint_loss_of<T: Scalar>(
    depthnet: &DepthNet<T>,
    posenet: &PoseNet<T>,
    triple: &FrameTriple<T>,
    k: &CameraIntrinsics,
    cfg: &SelfsupTrainConfig,
) -> Result<f64> {
    let depth_fwd = depthnet.forward(&triple.target)?;
    let poses = predict_poses(posenet, triple, cfg.freeze_pose_identity)?;
    let eval = eval_triple(depthnet, &depth_fwd, triple, &poses, k, &cfg.photometric, false)?;
    Ok(eval.loss)
}

fn predict_poses<T: Scalar>(
    posenet: &PoseNet<T>,
    triple: &FrameTriple<T>,
    freeze_identity: bool,
) -> Result<[Pose<T>; 2]> {
    if freeze_identity {
        return Ok([Pose::identity(), Pose::identity()]);
    }
    let prev = posenet.forward(&concat_channels(&triple.target, &triple.prev))?;
    let next = posenet.forward(&concat_channels(&triple.target, &triple.next))?;
    Ok([prev.pose, next.pose])
}

#[derive(Debug, Clone)]
pub struct SelfsupTrainReport {
    pub loss_trace: Vec<f64>,
}

pub fn train_selfsup<T: Scalar>(
    depthnet: &mut DepthNet<T>,
    posenet: &mut PoseNet<T>,
    triples: &[FrameTriple<T>],
    k: &CameraIntrinsics,
    cfg: &SelfsupTrainConfig,
) -> Result<SelfsupTrainReport> {
    if triples.is_empty() {
        return Err(Error::InvalidArgument("empty triple set".into()));
    }
    let schedule = WarmupCosine::new(cfg.base_lr, cfg.steps);
    let mut opt = SgdMomentum::new(cfg.momentum);
    let mut rng = Rng::seed_from(cfg.seed).derive("selfsup-batches");
    let mut order: Vec<usize> = (0..triples.len()).collect();
    let mut cursor = order.len();
    let mut trace = Vec::with_capacity(cfg.steps);

    for step in 0..cfg.steps {
        {
            let mut params = collect_params(depthnet, posenet);
            opt.zero_grads(&mut params);
        }
        if cursor >= order.len() {
            rng.shuffle(&mut order);
            cursor = 0;
        }
        let triple = &triples[order[cursor]];
        cursor += 1;

        let pose_fwds = if cfg.freeze_pose_identity {
            None
        } else {
            let prev = posenet.forward(&concat_channels(&triple.target, &triple.prev))?;
            let next = posenet.forward(&concat_channels(&triple.target, &triple.next))?;
            Some([prev, next])
        };
        let poses = match &pose_fwds {
            Some([a, b]) => [a.pose, b.pose],
            None => [Pose::identity(), Pose::identity()],
        };
        let depth_fwd = depthnet.forward(&triple.target)?;
        let eval =
            match eval_triple(depthnet, &depth_fwd, triple, &poses, k, &cfg.photometric, true) {
                Ok(e) => e,
                Err(Error::NonFinite(_)) => return Err(Error::Diverged { step, trace }),
                Err(e) => return Err(e),
            };
        if !eval.loss.is_finite() {
            return Err(Error::Diverged { step, trace });
        }
        trace.push(eval.loss);

        depthnet.backward(&depth_fwd, &eval.d_disps)?;
        if let Some([fwd_prev, fwd_next]) = pose_fwds {
            posenet.backward(&fwd_prev, eval.d_poses[0].0, eval.d_poses[0].1)?;
            posenet.backward(&fwd_next, eval.d_poses[1].0, eval.d_poses[1].1)?;
        }
        let lr = schedule.lr_at(step);
        let mut params = collect_params(depthnet, posenet);
        opt.step(&mut params, lr);
    }
    Ok(SelfsupTrainReport { loss_trace: trace })
}

fn collect_params<'a, T: Scalar>(
    depthnet: &'a mut DepthNet<T>,
    posenet: &'a mut PoseNet<T>,
) -> Vec<&'a mut crate::nn::Param<T>> {
    let mut ps = depthnet.params_mut();
    ps.extend(posenet.params_mut());
    ps
}

// ---------------------------------------------------------------------------
// checkpoint io
// ---------------------------------------------------------------------------

pub fn save_selfsup<T: Scalar>(
    dir: &Path,
    depthnet: &mut DepthNet<T>,
    posenet: &mut PoseNet<T>,
) -> Result<()> {
    let cfg = depthnet.cfg.clone();
    let hyper = vec![
        ("widths".to_string(), cfg.widths.map(|w| w.to_string()).join(",")),
        ("n_scales".to_string(), cfg.n_scales.to_string()),
        ("d_min".to_string(), cfg.d_min.to_string()),
        ("d_max".to_string(), cfg.d_max.to_string()),
    ];
    let mut named: Vec<(String, Tensor<T>)> = Vec::new();
    for p in depthnet.params_mut() {
        named.push((p.name.clone(), p.value.clone()));
    }
    for p in posenet.params_mut() {
        named.push((p.name.clone(), p.value.clone()));
    }
    let refs: Vec<(String, &Tensor<T>)> = named.iter().map(|(n, t)| (n.clone(), t)).collect();
    checkpoint::save(dir, "relative", &hyper, &refs)
}

pub fn load_selfsup<T: Scalar>(dir: &Path) -> Result<(DepthNet<T>, PoseNet<T>)> {
    let ck = checkpoint::load(dir)?;
    if ck.kind != "relative" {
        return Err(Error::Format(format!("expected relative checkpoint, got {}", ck.kind)));
    }
    let widths_s = ck.hyper.get("widths").ok_or_else(|| Error::Format("missing widths".into()))?;
    let widths: Vec<usize> = widths_s.split(',').filter_map(|p| p.trim().parse().ok()).collect();
    let widths: [usize; 4] =
        widths.try_into().map_err(|_| Error::Format("widths must have 4 entries".into()))?;
    let cfg = SelfsupConfig {
        widths,
        n_scales: ck.hyper_usize("n_scales")?,
        d_min: ck.hyper_f64("d_min")?,
        d_max: ck.hyper_f64("d_max")?,
    };
    let mut depthnet = DepthNet::new(cfg, 0)?;
    let mut posenet = PoseNet::new(widths, 0);
    for p in depthnet.params_mut().into_iter().chain(posenet.params_mut()) {
        p.value = ck.tensor(&p.name)?;
    }
    Ok((depthnet, posenet))
}
