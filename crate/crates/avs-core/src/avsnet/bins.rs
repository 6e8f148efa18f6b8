//! Metric bins: seed partition from width logits, attractor refinement, the
//! log-binomial probability volume, and the probability-weighted depth.

use crate::error::{Error, Result};
use crate::ops::{softmax, softmax_backward};
use crate::tensor::{Scalar, Tensor};

/// Strictly increasing bin centers within [d_min, d_max] with positive
/// widths summing to the range.
#[derive(Debug, Clone)]
pub struct BinPartition<T: Scalar> {
    pub centers: Vec<T>,
    pub widths: Vec<T>,
    pub d_min: f64,
    pub d_max: f64,
}

impl<T: Scalar> BinPartition<T> {
    pub fn k(&self) -> usize {
        self.centers.len()
    }

    pub fn validate(&self) -> Result<()> {
        let k = self.centers.len();
        if k < 2 || self.widths.len() != k {
            return Err(Error::Degenerate(format!("partition needs >= 2 bins, got {k}")));
        }
        let (lo, hi) = (self.d_min - 1e-9, self.d_max + 1e-9);
        for i in 0..k {
            let c = self.centers[i].to_f64();
            if !(c >= lo && c <= hi) {
                return Err(Error::Degenerate(format!("center {i} = {c} outside [{}, {}]", self.d_min, self.d_max)));
            }
            if i > 0 && self.centers[i] <= self.centers[i - 1] {
                return Err(Error::Degenerate(format!("centers not strictly increasing at {i}")));
            }
            if self.widths[i].to_f64() <= 0.0 {
                return Err(Error::Degenerate(format!("width {i} not positive")));
            }
        }
        let total: f64 = self.widths.iter().map(|w| w.to_f64()).sum();
        let span = self.d_max - self.d_min;
        if (total - span).abs() > 1e-4 * span {
            return Err(Error::Degenerate(format!("widths sum {total} != span {span}")));
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// seed partition
// ---------------------------------------------------------------------------

pub struct SeedCache<T: Scalar> {
    norm_widths: Tensor<T>,
    span: T,
}

/// Softmax-normalizes K width logits, scales them to the metric span, and
/// accumulates centers at the midpoint of each bin.
pub fn seed_partition<T: Scalar>(
    logits: &Tensor<T>,
    d_min: f64,
    d_max: f64,
) -> Result<(BinPartition<T>, SeedCache<T>)> {
    let k = logits.numel();
    if k < 2 {
        return Err(Error::InvalidArgument(format!("need K >= 2 bins, got {k}")));
    }
    if !(0.0 < d_min && d_min < d_max) {
        return Err(Error::InvalidArgument("need 0 < d_min < d_max".into()));
    }
    if !logits.is_all_finite() {
        return Err(Error::NonFinite("seed bin logits"));
    }
    let norm = softmax(logits, 0)?;
    let span = T::from_f64(d_max - d_min);
    let widths: Vec<T> = norm.data().iter().map(|&w| w * span).collect();
    let mut centers = Vec::with_capacity(k);
    let mut edge = T::from_f64(d_min);
    for &w in &widths {
        centers.push(edge + w * T::from_f64(0.5));
        edge += w;
    }
    Ok((
        BinPartition { centers, widths, d_min, d_max },
        SeedCache { norm_widths: norm, span },
    ))
}

/// Backward through `seed_partition`: center k depends on widths j < k with
/// weight 1 and on width k with weight 1/2.
pub fn seed_partition_backward<T: Scalar>(
    cache: &SeedCache<T>,
    d_centers: &[T],
    d_widths: &[T],
) -> Tensor<T> {
    let k = d_centers.len();
    // suffix sums: dL/dw_j = sum_{k > j} dc_k + 0.5 dc_j + dw_j
    let mut dw = vec![T::ZERO; k];
    let mut suffix = T::ZERO;
    for j in (0..k).rev() {
        dw[j] = suffix + T::from_f64(0.5) * d_centers[j] + d_widths[j];
        suffix += d_centers[j];
    }
    for w in dw.iter_mut() {
        *w *= cache.span;
    }
    let dnorm = Tensor::from_vec(&[k], dw).expect("width grad");
    softmax_backward(&cache.norm_widths, &dnorm, 0)
}

// ---------------------------------------------------------------------------
// attractor adjustment
// ---------------------------------------------------------------------------

pub struct AttractorCache<T: Scalar> {
    centers_in: Vec<T>,
    attractors: Vec<T>,
    /// argsort permutation applied after the shift: out[j] = moved[perm[j]]
    perm: Vec<usize>,
    clamped: Vec<bool>,
    alpha: f64,
    gamma: i32,
}

#[inline]
fn attractor_pull<T: Scalar>(u: T, alpha: T, gamma: i32) -> T {
    u / (T::ONE + alpha * u.abs().powi(gamma))
}

#[inline]
fn attractor_pull_deriv<T: Scalar>(u: T, alpha: T, gamma: i32) -> T {
    // d/du [ u / (1 + a|u|^g) ] = (1 + a|u|^g (1 - g)) / (1 + a|u|^g)^2
    let a_ug = alpha * u.abs().powi(gamma);
    let denom = T::ONE + a_ug;
    (T::ONE + a_ug * T::from_f64(1.0 - gamma as f64)) / (denom * denom)
}

/// Moves each center toward the attractor points by the inverse-attractor
/// rule, then restores ordering and range. Widths are re-derived from the
/// midpoints between adjacent centers so they stay positive and sum to the
/// span.
pub fn attractor_adjust<T: Scalar>(
    bins: &BinPartition<T>,
    attractors: &[T],
    alpha: f64,
    gamma: i32,
) -> Result<(BinPartition<T>, AttractorCache<T>)> {
    if attractors.iter().any(|a| !a.is_finite()) || bins.centers.iter().any(|c| !c.is_finite()) {
        return Err(Error::NonFinite("attractor adjustment"));
    }
    let k = bins.k();
    let alpha_t = T::from_f64(alpha);
    let lo = T::from_f64(bins.d_min);
    let hi = T::from_f64(bins.d_max);
    let mut moved: Vec<T> = Vec::with_capacity(k);
    let mut clamped = vec![false; k];
    for (i, &c) in bins.centers.iter().enumerate() {
        let mut delta = T::ZERO;
        for &a in attractors {
            delta += attractor_pull(a - c, alpha_t, gamma);
        }
        let raw = c + delta;
        let clipped = raw.max_s(lo).min_s(hi);
        clamped[i] = clipped != raw;
        moved.push(clipped);
    }
    let mut perm: Vec<usize> = (0..k).collect();
    perm.sort_by(|&a, &b| moved[a].partial_cmp(&moved[b]).expect("finite centers"));
    let mut centers: Vec<T> = perm.iter().map(|&i| moved[i]).collect();
    // enforce strict ordering if attractors collapsed neighbours together
    for i in 1..k {
        if centers[i] <= centers[i - 1] {
            centers[i] = centers[i - 1] + T::from_f64(1e-9);
        }
    }
    let widths = widths_from_centers(&centers, bins.d_min, bins.d_max);
    Ok((
        BinPartition { centers, widths, d_min: bins.d_min, d_max: bins.d_max },
        AttractorCache {
            centers_in: bins.centers.clone(),
            attractors: attractors.to_vec(),
            perm,
            clamped,
            alpha,
            gamma,
        },
    ))
}

fn widths_from_centers<T: Scalar>(centers: &[T], d_min: f64, d_max: f64) -> Vec<T> {
    let k = centers.len();
    let half = T::from_f64(0.5);
    let mut widths = Vec::with_capacity(k);
    for i in 0..k {
        let left = if i == 0 { T::from_f64(d_min) } else { (centers[i - 1] + centers[i]) * half };
        let right = if i == k - 1 { T::from_f64(d_max) } else { (centers[i] + centers[i + 1]) * half };
        widths.push(right - left);
    }
    widths
}

/// Backward through `attractor_adjust`: routes gradients through the sort
/// permutation and the clamp, then through the pull rule. Returns
/// (d_centers_in, d_attractors). Width gradients are not propagated; the
/// downstream depth only consumes centers.
pub fn attractor_adjust_backward<T: Scalar>(
    cache: &AttractorCache<T>,
    d_centers_out: &[T],
) -> (Vec<T>, Vec<T>) {
    let k = cache.centers_in.len();
    let alpha_t = T::from_f64(cache.alpha);
    let mut d_moved = vec![T::ZERO; k];
    for (j, &src) in cache.perm.iter().enumerate() {
        d_moved[src] += d_centers_out[j];
    }
    let mut d_centers = vec![T::ZERO; k];
    let mut d_attr = vec![T::ZERO; cache.attractors.len()];
    for i in 0..k {
        if cache.clamped[i] {
            continue;
        }
        let g = d_moved[i];
        if g == T::ZERO {
            continue;
        }
        let c = cache.centers_in[i];
        let mut dc = T::ONE;
        for (j, &a) in cache.attractors.iter().enumerate() {
            let fprime = attractor_pull_deriv(a - c, alpha_t, cache.gamma);
            d_attr[j] += g * fprime;
            dc -= fprime;
        }
        d_centers[i] += g * dc;
    }
    (d_centers, d_attr)
}

// ---------------------------------------------------------------------------
// log-binomial probability volume
// ---------------------------------------------------------------------------

/// ln k! for k = 0..=n via cumulative summation.
fn ln_factorials(n: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(n + 1);
    let mut acc = 0.0f64;
    out.push(0.0);
    for i in 1..=n {
        acc += (i as f64).ln();
        out.push(acc);
    }
    out
}

/// ln C(n, k) table for fixed n.
pub fn ln_binomial_coeffs(n: usize) -> Vec<f64> {
    let lf = ln_factorials(n);
    (0..=n).map(|k| lf[n] - lf[k] - lf[n - k]).collect()
}

pub struct LogBinomialCache<T: Scalar> {
    probs: Tensor<T>,
    q: Tensor<T>,
    t: Tensor<T>,
    logits: Tensor<T>,
}

/// Per pixel: logit_k = [k ln q + (K-1-k) ln(1-q) + ln C(K-1, k)] / t, then
/// softmax over k. With t = 1 this reproduces the binomial pmf exactly.
pub fn log_binomial_probs<T: Scalar>(
    q: &Tensor<T>,
    t: &Tensor<T>,
    k_bins: usize,
) -> Result<(Tensor<T>, LogBinomialCache<T>)> {
    if q.shape() != t.shape() || q.shape().len() != 2 {
        return Err(Error::InvalidArgument(format!(
            "q and t must be matching H x W maps, got {:?} and {:?}",
            q.shape(),
            t.shape()
        )));
    }
    if !q.is_all_finite() || !t.is_all_finite() {
        return Err(Error::NonFinite("log-binomial parameters"));
    }
    for (&qv, &tv) in q.data().iter().zip(t.data()) {
        let (qf, tf) = (qv.to_f64(), tv.to_f64());
        if !(qf > 0.0 && qf < 1.0) {
            return Err(Error::InvalidArgument(format!("q must lie strictly in (0,1), got {qf}")));
        }
        if tf <= 0.0 {
            return Err(Error::InvalidArgument(format!("temperature must be positive, got {tf}")));
        }
    }
    let (h, w) = (q.shape()[0], q.shape()[1]);
    let n = k_bins - 1;
    let ln_c: Vec<T> = ln_binomial_coeffs(n).into_iter().map(T::from_f64).collect();
    let mut logits = Tensor::zeros(&[k_bins, h, w]);
    for y in 0..h {
        for x in 0..w {
            let qv = q.at2(y, x);
            let tv = t.at2(y, x);
            let (lnq, ln1q) = (qv.ln(), (T::ONE - qv).ln());
            for k in 0..k_bins {
                let base = T::from_f64(k as f64) * lnq + T::from_f64((n - k) as f64) * ln1q + ln_c[k];
                logits.set3(k, y, x, base / tv);
            }
        }
    }
    let probs = softmax(&logits, 0)?;
    Ok((
        probs.clone(),
        LogBinomialCache { probs, q: q.clone(), t: t.clone(), logits },
    ))
}

/// Backward: (d_q, d_t) given the gradient of the probability volume.
pub fn log_binomial_backward<T: Scalar>(
    cache: &LogBinomialCache<T>,
    grad_probs: &Tensor<T>,
) -> (Tensor<T>, Tensor<T>) {
    let d_logits = softmax_backward(&cache.probs, grad_probs, 0);
    let (k_bins, h, w) = (
        d_logits.shape()[0],
        d_logits.shape()[1],
        d_logits.shape()[2],
    );
    let n = k_bins - 1;
    let mut d_q = Tensor::zeros(&[h, w]);
    let mut d_t = Tensor::zeros(&[h, w]);
    for y in 0..h {
        for x in 0..w {
            let qv = cache.q.at2(y, x);
            let tv = cache.t.at2(y, x);
            let mut acc_q = T::ZERO;
            let mut acc_t = T::ZERO;
            for k in 0..k_bins {
                let g = d_logits.at3(k, y, x);
                if g == T::ZERO {
                    continue;
                }
                // d logit / d q = (k/q - (n-k)/(1-q)) / t
                let dq = (T::from_f64(k as f64) / qv
                    - T::from_f64((n - k) as f64) / (T::ONE - qv))
                    / tv;
                acc_q += g * dq;
                // logit = base / t  =>  d logit / d t = -logit / t
                acc_t += g * (-cache.logits.at3(k, y, x) / tv);
            }
            d_q.data_mut()[y * w + x] = acc_q;
            d_t.data_mut()[y * w + x] = acc_t;
        }
    }
    (d_q, d_t)
}

// ---------------------------------------------------------------------------
// probability-weighted depth
// ---------------------------------------------------------------------------

/// M(u,v) = sum_k p_k(u,v) c_k; a convex combination, so the output stays
/// inside [d_min, d_max].
pub fn pseudo_depth<T: Scalar>(probs: &Tensor<T>, centers: &[T]) -> Result<Tensor<T>> {
    if probs.shape().len() != 3 || probs.shape()[0] != centers.len() {
        return Err(Error::InvalidArgument(format!(
            "probability volume {:?} does not match {} centers",
            probs.shape(),
            centers.len()
        )));
    }
    let (k_bins, h, w) = (probs.shape()[0], probs.shape()[1], probs.shape()[2]);
    let mut out = Tensor::zeros(&[h, w]);
    for k in 0..k_bins {
        let c = centers[k];
        for y in 0..h {
            for x in 0..w {
                out.data_mut()[y * w + x] += probs.at3(k, y, x) * c;
            }
        }
    }
    Ok(out)
}

/// Backward: (d_probs, d_centers).
pub fn pseudo_depth_backward<T: Scalar>(
    probs: &Tensor<T>,
    centers: &[T],
    grad_out: &Tensor<T>,
) -> (Tensor<T>, Vec<T>) {
    let (k_bins, h, w) = (probs.shape()[0], probs.shape()[1], probs.shape()[2]);
    let mut d_probs = Tensor::zeros(probs.shape());
    let mut d_centers = vec![T::ZERO; k_bins];
    for k in 0..k_bins {
        let c = centers[k];
        let mut acc = T::ZERO;
        for y in 0..h {
            for x in 0..w {
                let g = grad_out.at2(y, x);
                d_probs.set3(k, y, x, g * c);
                acc += g * probs.at3(k, y, x);
            }
        }
        d_centers[k] = acc;
    }
    (d_probs, d_centers)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gradcheck::{grad_check, GradCheckCfg};
    use crate::rng::Rng;

    #[test]
    fn uniform_logits_give_equal_bins() {
        let logits = Tensor::from_vec(&[4], vec![0.7f64; 4]).unwrap();
        let (bins, _) = seed_partition(&logits, 1.0, 9.0).unwrap();
        bins.validate().unwrap();
        for (k, &c) in bins.centers.iter().enumerate() {
            let want = 1.0 + (k as f64 + 0.5) * 2.0;
            assert!((c - want).abs() < 1e-12);
            assert!((bins.widths[k] - 2.0).abs() < 1e-12);
        }
    }

    #[test]
    fn seed_partition_always_ordered_and_normalized() {
        let mut rng = Rng::seed_from(31);
        for _ in 0..50 {
            let logits =
                Tensor::from_vec(&[16], (0..16).map(|_| rng.normal() * 3.0).collect()).unwrap();
            let (bins, _) = seed_partition(&logits, 0.1, 12.0).unwrap();
            bins.validate().unwrap();
            let total: f64 = bins.widths.iter().sum();
            assert!((total - 11.9).abs() < 1e-6);
        }
    }

    #[test]
    fn seed_partition_gradcheck() {
        let mut rng = Rng::seed_from(32);
        let logits = Tensor::from_vec(&[6], (0..6).map(|_| rng.normal()).collect()).unwrap();
        let report = grad_check(
            |ins| {
                let (bins, _) = seed_partition(&ins[0], 0.5, 8.0).unwrap();
                Tensor::from_vec(&[6], bins.centers).unwrap()
            },
            |ins, g| {
                let (_, cache) = seed_partition(&ins[0], 0.5, 8.0).unwrap();
                vec![seed_partition_backward(&cache, g.data(), &vec![0.0; 6])]
            },
            &[logits],
            &GradCheckCfg::default(),
        );
        assert!(report.passes(1e-6), "{report:?}");
    }

    #[test]
    fn attractor_zero_at_fixed_point_and_pull_direction() {
        assert_eq!(attractor_pull(0.0f64, 1.0, 2), 0.0);
        // single attractor above a center pulls it up
        let logits = Tensor::from_vec(&[4], vec![0.0f64; 4]).unwrap();
        let (bins, _) = seed_partition(&logits, 1.0, 9.0).unwrap();
        let (adj, _) = attractor_adjust(&bins, &[8.5], 1.0, 2).unwrap();
        for (before, after) in bins.centers.iter().zip(&adj.centers) {
            assert!(after > before, "{after} <= {before}");
        }
        adj.validate().unwrap();
    }

    #[test]
    fn attractor_scalar_formula() {
        // c = 2, a = 4, alpha = 1, gamma = 2: delta = 2 / (1 + 4) = 0.4
        let delta = attractor_pull(4.0f64 - 2.0, 1.0, 2);
        assert!((delta - 0.4).abs() < 1e-12);
    }

    #[test]
    fn attractor_ordering_preserved_under_random_attractors() {
        let mut rng = Rng::seed_from(33);
        for _ in 0..50 {
            let logits =
                Tensor::from_vec(&[8], (0..8).map(|_| rng.normal() * 2.0).collect()).unwrap();
            let (mut bins, _) = seed_partition(&logits, 0.1, 12.0).unwrap();
            for _stage in 0..3 {
                let attractors: Vec<f64> = (0..4).map(|_| rng.uniform_in(0.1, 12.0)).collect();
                let (adj, _) = attractor_adjust(&bins, &attractors, 300.0, 2).unwrap();
                adj.validate().unwrap();
                bins = adj;
            }
        }
    }

    #[test]
    fn attractor_gradcheck() {
        let mut rng = Rng::seed_from(34);
        let logits = Tensor::from_vec(&[5], (0..5).map(|_| rng.normal()).collect()).unwrap();
        let (bins, _) = seed_partition(&logits, 0.5, 10.0).unwrap();
        let centers0 = Tensor::from_vec(&[5], bins.centers.clone()).unwrap();
        let attractors0 = Tensor::from_vec(&[3], vec![2.0, 5.5, 7.1]).unwrap();
        let base = bins;
        let report = grad_check(
            |ins| {
                let b = BinPartition {
                    centers: ins[0].data().to_vec(),
                    widths: base.widths.clone(),
                    d_min: base.d_min,
                    d_max: base.d_max,
                };
                let (adj, _) = attractor_adjust(&b, ins[1].data(), 2.0, 2).unwrap();
                Tensor::from_vec(&[5], adj.centers).unwrap()
            },
            |ins, g| {
                let b = BinPartition {
                    centers: ins[0].data().to_vec(),
                    widths: base.widths.clone(),
                    d_min: base.d_min,
                    d_max: base.d_max,
                };
                let (_, cache) = attractor_adjust(&b, ins[1].data(), 2.0, 2).unwrap();
                let (dc, da) = attractor_adjust_backward(&cache, g.data());
                vec![
                    Tensor::from_vec(&[5], dc).unwrap(),
                    Tensor::from_vec(&[3], da).unwrap(),
                ]
            },
            &[centers0, attractors0],
            &GradCheckCfg::default(),
        );
        assert!(report.passes(1e-6), "{report:?}");
    }

    #[test]
    fn log_binomial_normalizes_and_is_symmetric() {
        let q = Tensor::from_vec(&[1, 1], vec![0.5f64]).unwrap();
        let t = Tensor::from_vec(&[1, 1], vec![1.0f64]).unwrap();
        let (probs, _) = log_binomial_probs(&q, &t, 9).unwrap();
        let sum: f64 = (0..9).map(|k| probs.at3(k, 0, 0)).sum();
        assert!((sum - 1.0).abs() < 1e-6);
        // symmetric around k = 4 for q = 0.5 and K-1 = 8 even
        for k in 0..4 {
            assert!((probs.at3(k, 0, 0) - probs.at3(8 - k, 0, 0)).abs() < 1e-12);
        }
        let argmax = (0..9).max_by(|&a, &b| probs.at3(a, 0, 0).partial_cmp(&probs.at3(b, 0, 0)).unwrap()).unwrap();
        assert_eq!(argmax, 4);
    }

    /// Direct pmf: C(n,k) q^k (1-q)^(n-k).
    fn binomial_pmf(n: usize, k: usize, q: f64) -> f64 {
        let ln_c = ln_binomial_coeffs(n)[k];
        (ln_c + k as f64 * q.ln() + (n - k) as f64 * (1.0 - q).ln()).exp()
    }

    #[test]
    fn log_binomial_matches_pmf_oracle_at_unit_temperature() {
        let q = Tensor::from_vec(&[1, 1], vec![0.25f64]).unwrap();
        let t = Tensor::from_vec(&[1, 1], vec![1.0f64]).unwrap();
        let (probs, _) = log_binomial_probs(&q, &t, 9).unwrap();
        for k in 0..9 {
            let want = binomial_pmf(8, k, 0.25);
            let got = probs.at3(k, 0, 0);
            assert!((got - want).abs() < 1e-6, "k={k}: {got} vs {want}");
        }
    }

    #[test]
    fn log_binomial_gradcheck() {
        let q = Tensor::from_vec(&[2, 2], vec![0.3f64, 0.62, 0.45, 0.71]).unwrap();
        let t = Tensor::from_vec(&[2, 2], vec![0.8f64, 1.3, 0.6, 2.0]).unwrap();
        let report = grad_check(
            |ins| log_binomial_probs(&ins[0], &ins[1], 7).unwrap().0,
            |ins, g| {
                let (_, cache) = log_binomial_probs(&ins[0], &ins[1], 7).unwrap();
                let (dq, dt) = log_binomial_backward(&cache, g);
                vec![dq, dt]
            },
            &[q, t],
            &GradCheckCfg::default(),
        );
        assert!(report.passes(1e-6), "{report:?}");
    }

    #[test]
    fn log_binomial_rejects_bad_domain() {
        let t = Tensor::from_vec(&[1, 1], vec![1.0f64]).unwrap();
        let q_bad = Tensor::from_vec(&[1, 1], vec![1.0f64]).unwrap();
        assert!(log_binomial_probs(&q_bad, &t, 5).is_err());
        let q = Tensor::from_vec(&[1, 1], vec![0.5f64]).unwrap();
        let t_bad = Tensor::from_vec(&[1, 1], vec![0.0f64]).unwrap();
        assert!(log_binomial_probs(&q, &t_bad, 5).is_err());
    }

    #[test]
    fn pseudo_depth_one_hot_and_uniform() {
        let mut probs = Tensor::<f64>::zeros(&[4, 1, 2]);
        probs.set3(2, 0, 0, 1.0);
        probs.set3(0, 0, 1, 1.0);
        let centers = [1.0, 2.0, 5.0, 7.0];
        let d = pseudo_depth(&probs, &centers).unwrap();
        assert_eq!(d.at2(0, 0), 5.0);
        assert_eq!(d.at2(0, 1), 1.0);

        let uniform = Tensor::<f64>::full(&[4, 1, 1], 0.25);
        let even_centers = [1.0, 3.0, 5.0, 7.0]; // uniform bins on [0, 8]
        let d = pseudo_depth(&uniform, &even_centers).unwrap();
        assert!((d.at2(0, 0) - 4.0).abs() < 1e-12);
    }

    #[test]
    fn pseudo_depth_matches_dot_product_oracle_and_range() {
        let mut rng = Rng::seed_from(35);
        let logits =
            Tensor::from_vec(&[5, 3, 2], (0..30).map(|_| rng.normal()).collect()).unwrap();
        let probs = softmax(&logits, 0).unwrap();
        let centers: Vec<f64> = {
            let mut c: Vec<f64> = (0..5).map(|_| rng.uniform_in(0.1, 12.0)).collect();
            c.sort_by(|a, b| a.partial_cmp(b).unwrap());
            c
        };
        let d = pseudo_depth(&probs, &centers).unwrap();
        for y in 0..3 {
            for x in 0..2 {
                let mut want = 0.0;
                for k in 0..5 {
                    want += probs.at3(k, y, x) * centers[k];
                }
                assert!((d.at2(y, x) - want).abs() < 1e-12);
                assert!(d.at2(y, x) >= 0.1 && d.at2(y, x) <= 12.0);
            }
        }
    }

    #[test]
    fn pseudo_depth_gradcheck() {
        let mut rng = Rng::seed_from(36);
        let logits = Tensor::from_vec(&[4, 2, 2], (0..16).map(|_| rng.normal()).collect()).unwrap();
        let probs = softmax(&logits, 0).unwrap();
        let centers = Tensor::from_vec(&[4], vec![0.5, 2.0, 4.0, 9.0]).unwrap();
        let report = grad_check(
            |ins| pseudo_depth(&ins[0], ins[1].data()).unwrap(),
            |ins, g| {
                let (dp, dc) = pseudo_depth_backward(&ins[0], ins[1].data(), g);
                vec![dp, Tensor::from_vec(&[4], dc).unwrap()]
            },
            &[probs, centers],
            &GradCheckCfg::default(),
        );
        assert!(report.passes(1e-7), "{report:?}");
    }
}
