//! Depth evaluation: Abs Rel, Sq Rel, RMSE, RMSE log, and the three
//! threshold accuracies, over valid ground-truth pixels only.

use crate::error::{shape_err, Error, Result};
use crate::ops::bilinear_resize;
use crate::tensor::{Scalar, Tensor};

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    pub abs_rel: f64,
    pub sq_rel: f64,
    pub rmse: f64,
    pub rmse_log: f64,
    pub delta1: f64,
    pub delta2: f64,
    pub delta3: f64,
    pub valid_count: usize,
}

impl MetricsReport {
    pub const COLUMNS: [&'static str; 7] =
        ["abs_rel", "sq_rel", "rmse", "rmse_log", "delta1", "delta2", "delta3"];

    pub fn values(&self) -> [f64; 7] {
        [self.abs_rel, self.sq_rel, self.rmse, self.rmse_log, self.delta1, self.delta2, self.delta3]
    }
}

/// Evaluates `pred` against `gt`. The prediction is bilinearly resized to the
/// ground-truth resolution when shapes differ. Valid pixels are those with
/// gt > 0 and gt strictly smaller than `max_depth`; the prediction must be
/// positive there.
pub fn compute_metrics<T: Scalar>(
    pred: &Tensor<T>,
    gt: &Tensor<T>,
    max_depth: f64,
) -> Result<MetricsReport> {
    if pred.shape().len() != 2 || gt.shape().len() != 2 {
        return Err(shape_err("compute_metrics rank", 2, pred.shape().len()));
    }
    let (gh, gw) = (gt.shape()[0], gt.shape()[1]);
    let resized;
    let pred = if pred.shape() == gt.shape() {
        pred
    } else {
        let as_chw = pred.reshape(&[1, pred.shape()[0], pred.shape()[1]])?;
        resized = bilinear_resize(&as_chw, gh, gw)?.reshape(&[gh, gw])?;
        &resized
    };

    let mut n = 0usize;
    let mut abs_rel = 0.0;
    let mut sq_rel = 0.0;
    let mut sq = 0.0;
    let mut sq_log = 0.0;
    let mut d1 = 0usize;
    let mut d2 = 0usize;
    let mut d3 = 0usize;
    let t1 = 1.25;
    let t2 = 1.25 * 1.25;
    let t3 = t2 * 1.25;
    for i in 0..gt.numel() {
        let g = gt.data()[i].to_f64();
        if !(g > 0.0 && g < max_depth) {
            continue;
        }
        let p = pred.data()[i].to_f64();
        if p <= 0.0 {
            return Err(Error::Degenerate(format!(
                "non-positive prediction {p} on a valid pixel"
            )));
        }
        n += 1;
        let diff = p - g;
        abs_rel += diff.abs() / g;
        sq_rel += diff * diff / g;
        sq += diff * diff;
        let dl = p.ln() - g.ln();
        sq_log += dl * dl;
        let ratio = (p / g).max(g / p);
        if ratio < t1 {
            d1 += 1;
        }
        if ratio < t2 {
            d2 += 1;
        }
        if ratio < t3 {
            d3 += 1;
        }
    }
    if n == 0 {
        return Err(Error::Degenerate("empty valid mask (no gt in (0, max_depth))".into()));
    }
    let nf = n as f64;
    Ok(MetricsReport {
        abs_rel: abs_rel / nf,
        sq_rel: sq_rel / nf,
        rmse: (sq / nf).sqrt(),
        rmse_log: (sq_log / nf).sqrt(),
        delta1: d1 as f64 / nf,
        delta2: d2 as f64 / nf,
        delta3: d3 as f64 / nf,
        valid_count: n,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng;

    #[test]
    fn perfect_prediction() {
        let gt = Tensor::from_vec(&[2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let r = compute_metrics(&gt, &gt, 12.0).unwrap();
        assert_eq!(
            (r.abs_rel, r.sq_rel, r.rmse, r.rmse_log, r.delta1, r.delta2, r.delta3),
            (0.0, 0.0, 0.0, 0.0, 1.0, 1.0, 1.0)
        );
        assert_eq!(r.valid_count, 4);
    }

    #[test]
    fn hand_scalar_oracle() {
        let pred = Tensor::from_vec(&[1, 2], vec![2.0, 2.0]).unwrap();
        let gt = Tensor::from_vec(&[1, 2], vec![1.0, 4.0]).unwrap();
        let r = compute_metrics(&pred, &gt, 12.0).unwrap();
        assert!((r.abs_rel - 0.75).abs() < 1e-12);
        assert!((r.sq_rel - 1.0).abs() < 1e-12);
        assert!((r.rmse - 2.5f64.sqrt()).abs() < 1e-12);
        // both ratios are exactly 2 > 1.25^3 = 1.953125
        assert_eq!((r.delta1, r.delta2, r.delta3), (0.0, 0.0, 0.0));
    }

    #[test]
    fn max_depth_is_strict() {
        let pred = Tensor::from_vec(&[1, 2], vec![5.0, 11.0]).unwrap();
        let gt = Tensor::from_vec(&[1, 2], vec![5.0, 12.0]).unwrap();
        let r = compute_metrics(&pred, &gt, 12.0).unwrap();
        assert_eq!(r.valid_count, 1);
        assert_eq!(r.delta1, 1.0);
    }

    #[test]
    fn zero_gt_excluded_and_empty_mask_rejected() {
        let pred = Tensor::from_vec(&[1, 2], vec![1.0, 1.0]).unwrap();
        let gt = Tensor::from_vec(&[1, 2], vec![0.0, 3.0]).unwrap();
        assert_eq!(compute_metrics(&pred, &gt, 12.0).unwrap().valid_count, 1);
        let gt0 = Tensor::from_vec(&[1, 2], vec![0.0, 0.0]).unwrap();
        assert!(compute_metrics(&pred, &gt0, 12.0).is_err());
    }

    #[test]
    fn rejects_nonpositive_pred_on_valid_pixel() {
        let pred = Tensor::from_vec(&[1, 2], vec![-1.0, 1.0]).unwrap();
        let gt = Tensor::from_vec(&[1, 2], vec![2.0, 3.0]).unwrap();
        assert!(compute_metrics(&pred, &gt, 12.0).is_err());
    }

    #[test]
    fn scaling_pred_gives_exact_rmse_log() {
        let mut rng = Rng::seed_from(6);
        let gt = Tensor::from_vec(&[4, 4], (0..16).map(|_| rng.uniform_in(0.5, 8.0)).collect()).unwrap();
        let c = 1.7;
        let pred = gt.map(|v| c * v);
        let r = compute_metrics(&pred, &gt, 12.0).unwrap();
        assert!((r.rmse_log - c.ln()).abs() < 1e-9);
    }

    #[test]
    fn delta_monotonicity_random() {
        let mut rng = Rng::seed_from(7);
        for _ in 0..50 {
            let gt =
                Tensor::from_vec(&[5, 5], (0..25).map(|_| rng.uniform_in(0.1, 11.0)).collect()).unwrap();
            let pred =
                Tensor::from_vec(&[5, 5], (0..25).map(|_| rng.uniform_in(0.1, 11.0)).collect()).unwrap();
            let r = compute_metrics(&pred, &gt, 12.0).unwrap();
            assert!(r.delta1 <= r.delta2 && r.delta2 <= r.delta3 && r.delta3 <= 1.0);
        }
    }

    #[test]
    fn resizes_pred_to_gt_resolution() {
        let pred = Tensor::<f64>::full(&[2, 3], 4.0);
        let gt = Tensor::<f64>::full(&[4, 6], 4.0);
        let r = compute_metrics(&pred, &gt, 12.0).unwrap();
        assert_eq!(r.valid_count, 24);
        assert_eq!(r.abs_rel, 0.0);
    }
}
