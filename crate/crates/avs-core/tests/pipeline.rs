//! Cross-module integration: overfit smoke tests and a full
//! stage-1 -> stage-2 scale-correction round trip on synthetic corridors.

use avs_core::avsnet::train::{train_avsnet, AvsSample, AvsTrainConfig};
use avs_core::avsnet::{AvsNet, AvsNetConfig};
use avs_core::dataio::synth::{default_spectrogram, synth_scene, SceneSpec};
use avs_core::metrics::compute_metrics;
use avs_core::scaling::median_scale;
use avs_core::selfsup::train::{
    joint_loss_of, predict_relative_depth, train_selfsup, FrameTriple, SelfsupTrainConfig,
};
use avs_core::selfsup::{DepthNet, PoseNet, SelfsupConfig};
use avs_core::tensor::Tensor;

fn corridor_triple(h: usize, w: usize, seed: u64) -> (FrameTriple<f32>, avs_core::geometry::CameraIntrinsics) {
    let spec = SceneSpec {
        n_frames: 41,
        frame_step: 0.02,
        ..SceneSpec::default_for(h, w)
    };
    let samples = synth_scene(&spec, seed).unwrap();
    let k = samples[0].intrinsics;
    (
        FrameTriple {
            prev: samples[0].rgb.cast(),
            target: samples[20].rgb.cast(),
            next: samples[40].rgb.cast(),
            interval: 20,
        },
        k,
    )
}

#[test]
fn selfsup_500_steps_halves_joint_loss() {
    let (triple, k) = corridor_triple(32, 64, 99);
    let net_cfg = SelfsupConfig { widths: [6, 8, 10, 12], ..Default::default() };
    let mut depthnet = DepthNet::<f32>::new(net_cfg.clone(), 5).unwrap();
    let mut posenet = PoseNet::<f32>::new(net_cfg.widths, 6);
    let cfg = SelfsupTrainConfig { steps: 500, base_lr: 8e-3, seed: 7, ..Default::default() };
    let initial = joint_loss_of(&depthnet, &posenet, &triple, &k, &cfg).unwrap();
    train_selfsup(&mut depthnet, &mut posenet, &[triple.clone()], &k, &cfg).unwrap();
    let final_loss = joint_loss_of(&depthnet, &posenet, &triple, &k, &cfg).unwrap();
    assert!(
        final_loss < 0.5 * initial,
        "500-step overfit did not halve the loss: {initial} -> {final_loss}"
    );
}

#[test]
fn avsnet_overfit_then_median_scaling_recovers_metric_depth() {
    // one corridor frame, supervised overfit, then transfer its scale onto a
    // deliberately mis-scaled copy of the ground truth
    let spec = SceneSpec { n_frames: 1, ..SceneSpec::default_for(32, 64) };
    let scene = synth_scene(&spec, 17).unwrap();
    let sample = AvsSample::<f32> {
        rgb: scene[0].rgb.cast(),
        spec: default_spectrogram(&scene[0].echo).unwrap().mag.cast(),
        depth_gt: scene[0].depth_gt.cast(),
    };
    let cfg = AvsNetConfig {
        widths: [4, 6, 8, 10, 12],
        n_heads: 2,
        n_bins: 16,
        bin_embed_dim: 8,
        attr_hidden: 4,
        use_audio: true,
        ..Default::default()
    };
    let mut model = AvsNet::<f32>::new(cfg, 3).unwrap();
    let tcfg = AvsTrainConfig { steps: 300, batch_size: 1, base_lr: 4e-3, ..Default::default() };
    train_avsnet(&mut model, &[sample.clone()], &[], &tcfg).unwrap();
    let pseudo = model.forward(&sample.rgb, Some(&sample.spec)).unwrap().depth;
    let trained_metrics = compute_metrics(&pseudo, &sample.depth_gt, 12.0).unwrap();
    assert!(trained_metrics.abs_rel < 0.12, "overfit abs_rel {}", trained_metrics.abs_rel);

    // relative map = ground truth shrunk by 5x: unscaled delta1 collapses,
    // median scaling via the trained pseudo depth restores it
    let relative: Tensor<f32> = sample.depth_gt.map(|d| d * 0.2);
    let unscaled = compute_metrics(&relative, &sample.depth_gt, 12.0).unwrap();
    assert!(unscaled.delta1 < 0.05, "mis-scaled delta1 {}", unscaled.delta1);
    let (corrected, _) = median_scale(&relative, &pseudo, None).unwrap();
    let scaled = compute_metrics(&corrected, &sample.depth_gt, 12.0).unwrap();
    assert!(scaled.delta1 > 0.9, "median-scaled delta1 {}", scaled.delta1);
}

#[test]
fn photometric_objective_gradcheck_wrt_disparity_and_pose() {
    use avs_core::geometry::{disp_to_depth, disp_to_depth_backward, inverse_warp, inverse_warp_backward, Pose};
    use avs_core::gradcheck::{grad_check, GradCheckCfg};
    use avs_core::rng::Rng;
    use avs_core::selfsup::loss::{photometric_error, photometric_error_backward, PhotometricParams};

    // full chain: disparity -> depth -> warp -> photometric error, checked at
    // 64-bit precision on a 16x32 crop against finite differences
    let (h, w) = (16usize, 32usize);
    let k = avs_core::geometry::CameraIntrinsics::new(24.0, 24.0, (w as f64 - 1.0) / 2.0, (h as f64 - 1.0) / 2.0).unwrap();
    let mut rng = Rng::seed_from(301);
    let smooth_img = |rng: &mut Rng, phase: f64| {
        Tensor::from_vec(
            &[1, h, w],
            (0..h * w)
                .map(|i| {
                    let (y, x) = ((i / w) as f64, (i % w) as f64);
                    0.5 + 0.25 * (0.31 * x + phase).sin() * (0.27 * y).cos() + 0.002 * rng.uniform()
                })
                .collect(),
        )
        .unwrap()
    };
    let target = smooth_img(&mut rng, 0.0);
    let source = smooth_img(&mut rng, 0.35);
    // disparities mapping into roughly 1.5..3 m
    let disp = Tensor::from_vec(&[h, w], (0..h * w).map(|_| rng.uniform_in(0.03, 0.06)).collect()).unwrap();
    let pose_v = Tensor::from_vec(&[6], (0..6).map(|_| rng.uniform_in(-0.01, 0.01)).collect()).unwrap();
    let params = PhotometricParams::default();
    let to_pose = |v: &Tensor<f64>| {
        Pose::new([v.data()[0], v.data()[1], v.data()[2]], [v.data()[3], v.data()[4], v.data()[5]])
    };
    // interior crop keeps mask flips at the border out of the scalar loss
    let crop = |pe: &Tensor<f64>| {
        let mut acc = 0.0;
        for y in 2..h - 2 {
            for x in 2..w - 2 {
                acc += pe.at2(y, x);
            }
        }
        acc
    };
    let t2 = target.clone();
    let s2 = source.clone();
    let report = grad_check(
        |ins| {
            let depth = disp_to_depth(&ins[0], 0.1, 12.0).unwrap();
            let warp = inverse_warp(&source, &depth, &to_pose(&ins[1]), &k).unwrap();
            let (pe, _) = photometric_error(&target, &warp.image, &params).unwrap();
            Tensor::scalar(crop(&pe))
        },
        |ins, g| {
            let depth = disp_to_depth(&ins[0], 0.1, 12.0).unwrap();
            let pose = to_pose(&ins[1]);
            let warp = inverse_warp(&s2, &depth, &pose, &k).unwrap();
            let (_, cache) = photometric_error(&t2, &warp.image, &params).unwrap();
            let mut d_pe = Tensor::zeros(&[h, w]);
            for y in 2..h - 2 {
                for x in 2..w - 2 {
                    d_pe.data_mut()[y * w + x] = g.data()[0];
                }
            }
            let d_synth = photometric_error_backward(&cache, &params, &d_pe);
            let grads = inverse_warp_backward(&s2, &depth, &pose, &k, &d_synth).unwrap();
            let d_disp = disp_to_depth_backward(&ins[0], 0.1, 12.0, &grads.d_depth);
            let mut pv = Vec::with_capacity(6);
            pv.extend_from_slice(&grads.d_rotation);
            pv.extend_from_slice(&grads.d_translation);
            vec![d_disp, Tensor::from_vec(&[6], pv).unwrap()]
        },
        &[disp, pose_v],
        &GradCheckCfg { epsilon: 1e-5, max_coords_per_input: Some(120), ..Default::default() },
    );
    assert!(report.passes(1e-5), "{report:?}");
}

#[test]
fn photometric_components_bounded_on_unit_images() {
    use avs_core::rng::Rng;
    use avs_core::selfsup::loss::{photometric_error, PhotometricParams};
    let mut rng = Rng::seed_from(77);
    for _ in 0..20 {
        let a = Tensor::from_vec(&[3, 6, 6], (0..108).map(|_| rng.uniform()).collect()).unwrap();
        let b = Tensor::from_vec(&[3, 6, 6], (0..108).map(|_| rng.uniform()).collect()).unwrap();
        let (pe, _) = photometric_error(&a, &b, &PhotometricParams::default()).unwrap();
        // beta*L1 + gamma*(1-ssim)/2 with both terms in [0,1]
        assert!(pe.data().iter().all(|&v| (0.0..=1.0).contains(&v)));
    }
}

#[test]
fn relative_depth_bounded_by_disparity_parameterization() {
    let net = DepthNet::<f32>::new(SelfsupConfig { widths: [4, 6, 8, 10], ..Default::default() }, 1)
        .unwrap();
    let (triple, _) = corridor_triple(32, 32, 5);
    let depth = predict_relative_depth(&net, &triple.target).unwrap();
    assert!(depth.data().iter().all(|&d| d > 0.1 && d < 12.0));
}
