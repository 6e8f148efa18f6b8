//! Scale-invariant log loss for supervised metric depth training.

use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor};

#[derive(Debug, Clone, Copy)]
pub struct SiLossParams {
    pub alpha: f64,
    pub lambda: f64,
}

impl Default for SiLossParams {
    fn default() -> Self {
        Self { alpha: 10.0, lambda: 0.85 }
    }
}

pub struct SiLossCache<T: Scalar> {
    g: Tensor<T>,
    valid: Vec<bool>,
    pred: Tensor<T>,
    loss: f64,
    count: usize,
    sum_g: f64,
}

/// loss = alpha * sqrt( (1/T) sum g^2 - (lambda/T^2) (sum g)^2 ) with
/// g_i = ln pred_i - ln gt_i over the T valid pixels. Pixels with gt <= 0
/// are excluded; an empty mask is rejected.
pub fn si_loss<T: Scalar>(
    pred: &Tensor<T>,
    gt: &Tensor<T>,
    params: SiLossParams,
) -> Result<(f64, SiLossCache<T>)> {
    if pred.shape() != gt.shape() {
        return Err(Error::InvalidArgument(format!(
            "si_loss shapes differ: {:?} vs {:?}",
            pred.shape(),
            gt.shape()
        )));
    }
    let mut g = Tensor::zeros(pred.shape());
    let mut valid = vec![false; pred.numel()];
    let mut count = 0usize;
    let mut sum_g = 0.0f64;
    let mut sum_g2 = 0.0f64;
    for i in 0..pred.numel() {
        let gtv = gt.data()[i].to_f64();
        if gtv <= 0.0 {
            continue;
        }
        let pv = pred.data()[i].to_f64();
        if !pv.is_finite() {
            return Err(Error::NonFinite("si_loss prediction"));
        }
        if pv <= 0.0 {
            return Err(Error::Degenerate(format!(
                "si_loss: non-positive prediction {pv} on valid pixel"
            )));
        }
        let gi = pv.ln() - gtv.ln();
        g.data_mut()[i] = T::from_f64(gi);
        valid[i] = true;
        count += 1;
        sum_g += gi;
        sum_g2 += gi * gi;
    }
    if count == 0 {
        return Err(Error::Degenerate("si_loss: empty valid mask".into()));
    }
    let tf = count as f64;
    let radicand = (sum_g2 / tf - params.lambda * sum_g * sum_g / (tf * tf)).max(0.0);
    let loss = params.alpha * radicand.sqrt();
    Ok((loss, SiLossCache { g, valid, pred: pred.clone(), loss, count, sum_g }))
}

/// d loss / d pred. At the exact minimum (loss = 0) the derivative is not
/// defined through the square root; a zero gradient is returned there.
pub fn si_loss_backward<T: Scalar>(cache: &SiLossCache<T>, params: SiLossParams) -> Tensor<T> {
    let mut grad = Tensor::zeros(cache.pred.shape());
    if cache.loss < 1e-12 {
        return grad;
    }
    let tf = cache.count as f64;
    // loss = a sqrt(R), dR/dg_i = 2 g_i / T - 2 lambda sum_g / T^2
    // dloss/dg_i = a^2 (g_i/T - lambda sum_g/T^2) / loss
    let a2 = params.alpha * params.alpha;
    for i in 0..grad.numel() {
        if !cache.valid[i] {
            continue;
        }
        let gi = cache.g.data()[i].to_f64();
        let dg = a2 * (gi / tf - params.lambda * cache.sum_g / (tf * tf)) / cache.loss;
        // g = ln pred - ln gt  =>  dg/dpred = 1/pred
        grad.data_mut()[i] = T::from_f64(dg / cache.pred.data()[i].to_f64());
    }
    grad
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gradcheck::{grad_check, GradCheckCfg};
    use crate::rng::Rng;

    #[test]
    fn zero_loss_on_exact_prediction() {
        let gt = Tensor::from_vec(&[2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let (loss, _) = si_loss(&gt, &gt, SiLossParams::default()).unwrap();
        assert_eq!(loss, 0.0);
    }

    #[test]
    fn closed_form_for_uniform_scale() {
        let mut rng = Rng::seed_from(41);
        let gt =
            Tensor::from_vec(&[3, 5], (0..15).map(|_| rng.uniform_in(0.5, 9.0)).collect()).unwrap();
        for c in [0.5f64, 1.0, std::f64::consts::E, 3.0] {
            let pred = gt.map(|v| c * v);
            let (loss, _) = si_loss(&pred, &gt, SiLossParams::default()).unwrap();
            let want = 10.0 * 0.15f64.sqrt() * c.ln().abs();
            assert!((loss - want).abs() < 1e-9, "c={c}: {loss} vs {want}");
        }
        // c = e gives 10 sqrt(0.15) = 3.8730
        let pred = gt.map(|v| std::f64::consts::E * v);
        let (loss, _) = si_loss(&pred, &gt, SiLossParams::default()).unwrap();
        assert!((loss - 3.8730).abs() < 1e-4);
    }

    #[test]
    fn single_pixel_scalar_case() {
        let gt = Tensor::from_vec(&[1, 1], vec![1.0]).unwrap();
        let pred = Tensor::from_vec(&[1, 1], vec![2.0]).unwrap();
        let (loss, _) = si_loss(&pred, &gt, SiLossParams::default()).unwrap();
        let want = 10.0 * 2.0f64.ln() * 0.15f64.sqrt();
        assert!((loss - want).abs() < 1e-9);
        assert!((loss - 2.6845).abs() < 1e-4);
    }

    #[test]
    fn invalid_pixels_excluded_and_empty_mask_rejected() {
        let gt = Tensor::from_vec(&[1, 3], vec![0.0, 2.0, 0.0]).unwrap();
        let pred = Tensor::from_vec(&[1, 3], vec![5.0, 2.0, 7.0]).unwrap();
        let (loss, cache) = si_loss(&pred, &gt, SiLossParams::default()).unwrap();
        assert_eq!(loss, 0.0);
        assert_eq!(cache.count, 1);
        let gt0 = Tensor::from_vec(&[1, 1], vec![0.0]).unwrap();
        let p0 = Tensor::from_vec(&[1, 1], vec![1.0]).unwrap();
        assert!(si_loss(&p0, &gt0, SiLossParams::default()).is_err());
    }

    #[test]
    fn gradcheck_against_finite_differences() {
        let mut rng = Rng::seed_from(42);
        let gt =
            Tensor::from_vec(&[3, 4], (0..12).map(|_| rng.uniform_in(0.5, 8.0)).collect()).unwrap();
        let pred =
            Tensor::from_vec(&[3, 4], (0..12).map(|_| rng.uniform_in(0.5, 8.0)).collect()).unwrap();
        let gt2 = gt.clone();
        let report = grad_check(
            move |ins| {
                let (loss, _) = si_loss(&ins[0], &gt, SiLossParams::default()).unwrap();
                Tensor::scalar(loss)
            },
            move |ins, g| {
                let (_, cache) = si_loss(&ins[0], &gt2, SiLossParams::default()).unwrap();
                vec![si_loss_backward(&cache, SiLossParams::default()).scale(g.data()[0])]
            },
            &[pred],
            &GradCheckCfg::default(),
        );
        assert!(report.passes(1e-6), "{report:?}");
    }
}
