//! Supervised trainer for the pseudo-dense metric depth model, plus the
//! input-gradient saliency probe used to inspect what the audio branch
//! attends to.

use std::path::Path;

use crate::checkpoint;
use crate::error::{Error, Result};
use crate::metrics::compute_metrics;
use crate::nn::{SgdMomentum, WarmupCosine};
use crate::rng::Rng;
use crate::tensor::{Scalar, Tensor};

use super::loss::{si_loss, si_loss_backward, SiLossParams};
use super::{AvsNet, AvsNetConfig};

/// One supervised training sample.
#[derive(Debug, Clone)]
pub struct AvsSample<T: Scalar> {
    /// 3 x H x W in [0, 1].
    pub rgb: Tensor<T>,
    /// 2 x F x T magnitude spectrogram.
    pub spec: Tensor<T>,
    /// H x W meters, 0 marks invalid.
    pub depth_gt: Tensor<T>,
}

#[derive(Debug, Clone)]
pub struct AvsTrainConfig {
    pub steps: usize,
    pub batch_size: usize,
    pub base_lr: f64,
    pub momentum: f64,
    pub seed: u64,
    pub si: SiLossParams,
    /// Evaluate Abs Rel on the validation set every this many steps.
    pub val_every: usize,
}

impl Default for AvsTrainConfig {
    fn default() -> Self {
        Self {
            steps: 1000,
            batch_size: 2,
            base_lr: 1e-3,
            momentum: 0.9,
            seed: 0,
            si: SiLossParams::default(),
            val_every: 100,
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainReport {
    pub loss_trace: Vec<f64>,
    /// Best validation Abs Rel seen (None without a validation set).
    pub best_val_abs_rel: Option<f64>,
}

fn mean_abs_rel<T: Scalar>(model: &AvsNet<T>, samples: &[AvsSample<T>], max_depth: f64) -> Result<f64> {
    let mut acc = 0.0;
    for s in samples {
        let spec = if model.cfg.use_audio { Some(&s.spec) } else { None };
        let fwd = model.forward(&s.rgb, spec)?;
        acc += compute_metrics(&fwd.depth, &s.depth_gt, max_depth)?.abs_rel;
    }
    Ok(acc / samples.len() as f64)
}

/// Mini-batch SGD on the scale-invariant loss. The validation set, when
/// non-empty, drives best-Abs-Rel checkpointing: the returned model state is
/// the best validation snapshot.
pub fn train_avsnet<T: Scalar>(
    model: &mut AvsNet<T>,
    train: &[AvsSample<T>],
    val: &[AvsSample<T>],
    cfg: &AvsTrainConfig,
) -> Result<TrainReport> {
    if train.is_empty() {
        return Err(Error::InvalidArgument("empty training set".into()));
    }
    let schedule = WarmupCosine::new(cfg.base_lr, cfg.steps);
    let mut opt = SgdMomentum::new(cfg.momentum);
    let mut rng = Rng::seed_from(cfg.seed).derive("avsnet-batches");
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut cursor = order.len(); // force an initial shuffle
    let mut trace = Vec::with_capacity(cfg.steps);
    let mut best_val: Option<f64> = None;
    let mut best_params: Option<Vec<Tensor<T>>> = None;
    let max_depth = model.cfg.d_max;

    for step in 0..cfg.steps {
        {
            let mut params = model.params_mut();
            opt.zero_grads(&mut params);
        }
        let mut batch_loss = 0.0;
        let bsz = cfg.batch_size.min(train.len());
        let inv = T::from_f64(1.0 / bsz as f64);
        for _ in 0..bsz {
            if cursor >= order.len() {
                rng.shuffle(&mut order);
                cursor = 0;
            }
            let sample = &train[order[cursor]];
            cursor += 1;
            let spec = if model.cfg.use_audio { Some(&sample.spec) } else { None };
            let step_result = model.forward(&sample.rgb, spec).and_then(|fwd| {
                let (loss, cache) = si_loss(&fwd.depth, &sample.depth_gt, cfg.si)?;
                let d_depth = si_loss_backward(&cache, cfg.si).scale(inv);
                model.backward(&fwd, &d_depth)?;
                Ok(loss)
            });
            match step_result {
                Ok(loss) => batch_loss += loss / bsz as f64,
                Err(Error::NonFinite(_)) => return Err(Error::Diverged { step, trace }),
                Err(e) => return Err(e),
            }
        }
        if !batch_loss.is_finite() {
            return Err(Error::Diverged { step, trace });
        }
        trace.push(batch_loss);
        let lr = schedule.lr_at(step);
        let mut params = model.params_mut();
        opt.step(&mut params, lr);
        drop(params);

        if !val.is_empty() && (step + 1) % cfg.val_every == 0 {
            let abs_rel = mean_abs_rel(model, val, max_depth)?;
            if best_val.is_none_or(|b| abs_rel < b) {
                best_val = Some(abs_rel);
                best_params = Some(model.params_mut().iter().map(|p| p.value.clone()).collect());
            }
        }
    }

    if let Some(best) = best_params {
        for (p, v) in model.params_mut().into_iter().zip(best) {
            p.value = v;
        }
    }
    Ok(TrainReport { loss_trace: trace, best_val_abs_rel: best_val })
}

/// Input-gradient saliency: |d mean(depth) / d spec| summed over channel and
/// frequency gives a per-time-frame profile. A model without the audio
/// branch yields an all-zero map.
pub fn saliency<T: Scalar>(
    model: &mut AvsNet<T>,
    rgb: &Tensor<T>,
    spec: &Tensor<T>,
) -> Result<(Vec<f64>, Tensor<T>)> {
    let frames = spec.shape()[2];
    if !model.cfg.use_audio {
        return Ok((vec![0.0; frames], Tensor::zeros(spec.shape())));
    }
    let fwd = model.forward(rgb, Some(spec))?;
    let (h, w) = (fwd.depth.shape()[0], fwd.depth.shape()[1]);
    let d_depth = Tensor::full(&[h, w], T::from_f64(1.0 / (h * w) as f64));
    // parameter gradients accumulated here are discarded by the next
    // optimizer zero_grads; only the input gradient matters
    let grads = model.backward(&fwd, &d_depth)?;
    let d_spec = grads.d_spec.expect("audio branch active");
    let map = d_spec.map(|x| x.abs());
    let (ch, f) = (map.shape()[0], map.shape()[1]);
    let mut profile = vec![0.0f64; frames];
    for t in 0..frames {
        let mut acc = 0.0;
        for c in 0..ch {
            for b in 0..f {
                acc += map.at3(c, b, t).to_f64();
            }
        }
        profile[t] = acc;
    }
    Ok((profile, map))
}

// ---------------------------------------------------------------------------
// checkpoint io
// ---------------------------------------------------------------------------

pub fn save_avsnet<T: Scalar>(dir: &Path, model: &mut AvsNet<T>) -> Result<()> {
    let cfg = model.cfg.clone();
    let hyper = vec![
        ("widths".to_string(), cfg.widths.map(|w| w.to_string()).join(",")),
        ("n_heads".to_string(), cfg.n_heads.to_string()),
        ("n_bins".to_string(), cfg.n_bins.to_string()),
        ("d_min".to_string(), cfg.d_min.to_string()),
        ("d_max".to_string(), cfg.d_max.to_string()),
        ("n_attractors".to_string(), cfg.n_attractors.map(|w| w.to_string()).join(",")),
        ("alpha_attr".to_string(), cfg.alpha_attr.to_string()),
        ("gamma_attr".to_string(), cfg.gamma_attr.to_string()),
        ("bin_embed_dim".to_string(), cfg.bin_embed_dim.to_string()),
        ("attr_hidden".to_string(), cfg.attr_hidden.to_string()),
        ("use_audio".to_string(), cfg.use_audio.to_string()),
    ];
    let params = model.params_mut();
    let named: Vec<(String, Tensor<T>)> =
        params.iter().map(|p| (p.name.clone(), p.value.clone())).collect();
    let refs: Vec<(String, &Tensor<T>)> = named.iter().map(|(n, t)| (n.clone(), t)).collect();
    checkpoint::save(dir, "avsnet", &hyper, &refs)
}

fn parse_list<const N: usize>(s: &str, what: &str) -> Result<[usize; N]> {
    let parts: Vec<usize> = s.split(',').filter_map(|p| p.trim().parse().ok()).collect();
    parts
        .try_into()
        .map_err(|_| Error::Format(format!("bad {what} list: {s}")))
}

pub fn load_avsnet<T: Scalar>(dir: &Path) -> Result<AvsNet<T>> {
    let ck = checkpoint::load(dir)?;
    if ck.kind != "avsnet" {
        return Err(Error::Format(format!("expected avsnet checkpoint, got {}", ck.kind)));
    }
    let cfg = AvsNetConfig {
        widths: parse_list(
            ck.hyper.get("widths").ok_or_else(|| Error::Format("missing widths".into()))?,
            "widths",
        )?,
        n_heads: ck.hyper_usize("n_heads")?,
        n_bins: ck.hyper_usize("n_bins")?,
        d_min: ck.hyper_f64("d_min")?,
        d_max: ck.hyper_f64("d_max")?,
        n_attractors: parse_list(
            ck.hyper.get("n_attractors").ok_or_else(|| Error::Format("missing n_attractors".into()))?,
            "n_attractors",
        )?,
        alpha_attr: ck.hyper_f64("alpha_attr")?,
        gamma_attr: ck.hyper_f64("gamma_attr")? as i32,
        bin_embed_dim: ck.hyper_usize("bin_embed_dim")?,
        attr_hidden: ck.hyper_usize("attr_hidden")?,
        use_audio: ck.hyper_bool("use_audio")?,
    };
    let mut model = AvsNet::new(cfg, 0)?;
    for p in model.params_mut() {
        let loaded: Tensor<T> = ck.tensor(&p.name)?;
        if loaded.shape() != p.value.shape() {
            return Err(Error::Format(format!(
                "checkpoint tensor {} has shape {:?}, expected {:?}",
                p.name,
                loaded.shape(),
                p.value.shape()
            )));
        }
        p.value = loaded;
    }
    Ok(model)
}
