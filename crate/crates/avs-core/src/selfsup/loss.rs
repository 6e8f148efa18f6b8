//! Photometric training objective: SSIM, the per-pixel-minimum reprojection
//! loss, edge-aware smoothness, binary auto-masking, and the multi-scale
//! joint loss.

use crate::error::{shape_err, Error, Result};
use crate::ops::{mean_filter3, mean_filter3_backward};
use crate::tensor::{Scalar, Tensor};

#[derive(Debug, Clone, Copy)]
pub struct PhotometricParams {
    pub beta: f64,
    pub gamma: f64,
    pub lambda_smooth: f64,
}

impl Default for PhotometricParams {
    fn default() -> Self {
        Self { beta: 0.15, gamma: 0.85, lambda_smooth: 1e-3 }
    }
}

pub const SSIM_C1: f64 = 0.01 * 0.01;
pub const SSIM_C2: f64 = 0.03 * 0.03;

// ---------------------------------------------------------------------------
// SSIM
// ---------------------------------------------------------------------------

pub struct SsimCache<T: Scalar> {
    x: Tensor<T>,
    y: Tensor<T>,
    mu_x: Tensor<T>,
    mu_y: Tensor<T>,
    e_xx: Tensor<T>,
    e_yy: Tensor<T>,
    e_xy: Tensor<T>,
}

/// Per-pixel SSIM of two single-channel maps using 3x3 count-normalized
/// local statistics. Output lies in [-1, 1]; identical inputs give exactly 1.
pub fn ssim<T: Scalar>(x: &Tensor<T>, y: &Tensor<T>) -> Result<(Tensor<T>, SsimCache<T>)> {
    if x.shape() != y.shape() || x.shape().len() != 2 {
        return Err(shape_err("ssim", x.shape(), y.shape()));
    }
    let mu_x = mean_filter3(x);
    let mu_y = mean_filter3(y);
    let e_xx = mean_filter3(&x.zip(x, |a, b| a * b)?);
    let e_yy = mean_filter3(&y.zip(y, |a, b| a * b)?);
    let e_xy = mean_filter3(&x.zip(y, |a, b| a * b)?);
    let (c1, c2) = (T::from_f64(SSIM_C1), T::from_f64(SSIM_C2));
    let two = T::from_f64(2.0);
    let mut out = Tensor::zeros(x.shape());
    for i in 0..out.numel() {
        let (mx, my) = (mu_x.data()[i], mu_y.data()[i]);
        let sx = e_xx.data()[i] - mx * mx;
        let sy = e_yy.data()[i] - my * my;
        let sxy = e_xy.data()[i] - mx * my;
        let n1 = two * mx * my + c1;
        let d1 = mx * mx + my * my + c1;
        let n2 = two * sxy + c2;
        let d2 = sx + sy + c2;
        out.data_mut()[i] = (n1 * n2) / (d1 * d2);
    }
    Ok((out, SsimCache { x: x.clone(), y: y.clone(), mu_x, mu_y, e_xx, e_yy, e_xy }))
}

/// Gradients of per-pixel SSIM w.r.t. both inputs.
pub fn ssim_backward<T: Scalar>(cache: &SsimCache<T>, grad_out: &Tensor<T>) -> (Tensor<T>, Tensor<T>) {
    let n = grad_out.numel();
    let (c1, c2) = (T::from_f64(SSIM_C1), T::from_f64(SSIM_C2));
    let two = T::from_f64(2.0);
    let mut d_mu_x = Tensor::zeros(grad_out.shape());
    let mut d_mu_y = Tensor::zeros(grad_out.shape());
    let mut d_e_xx = Tensor::zeros(grad_out.shape());
    let mut d_e_yy = Tensor::zeros(grad_out.shape());
    let mut d_e_xy = Tensor::zeros(grad_out.shape());
    for i in 0..n {
        let g = grad_out.data()[i];
        if g == T::ZERO {
            continue;
        }
        let (mx, my) = (cache.mu_x.data()[i], cache.mu_y.data()[i]);
        let sx = cache.e_xx.data()[i] - mx * mx;
        let sy = cache.e_yy.data()[i] - my * my;
        let sxy = cache.e_xy.data()[i] - mx * my;
        let n1 = two * mx * my + c1;
        let d1 = mx * mx + my * my + c1;
        let n2 = two * sxy + c2;
        let d2 = sx + sy + c2;
        let inv_d1d2 = T::ONE / (d1 * d2);
        let s = n1 * n2 * inv_d1d2;
        // partials in the (mu_x, mu_y, Exx, Eyy, Exy) parameterization
        let ds_dn1 = n2 * inv_d1d2;
        let ds_dn2 = n1 * inv_d1d2;
        let ds_dd1 = -s / d1;
        let ds_dd2 = -s / d2;
        let ds_dmx = two * my * ds_dn1 + two * mx * ds_dd1 - two * my * ds_dn2 - two * mx * ds_dd2;
        let ds_dmy = two * mx * ds_dn1 + two * my * ds_dd1 - two * mx * ds_dn2 - two * my * ds_dd2;
        d_mu_x.data_mut()[i] = g * ds_dmx;
        d_mu_y.data_mut()[i] = g * ds_dmy;
        d_e_xx.data_mut()[i] = g * ds_dd2;
        d_e_yy.data_mut()[i] = g * ds_dd2;
        d_e_xy.data_mut()[i] = g * two * ds_dn2;
    }
    // distribute through the mean filters
    let m_mu_x = mean_filter3_backward(&d_mu_x);
    let m_mu_y = mean_filter3_backward(&d_mu_y);
    let m_e_xx = mean_filter3_backward(&d_e_xx);
    let m_e_yy = mean_filter3_backward(&d_e_yy);
    let m_e_xy = mean_filter3_backward(&d_e_xy);
    let mut dx = Tensor::zeros(grad_out.shape());
    let mut dy = Tensor::zeros(grad_out.shape());
    for i in 0..n {
        let (xv, yv) = (cache.x.data()[i], cache.y.data()[i]);
        dx.data_mut()[i] = m_mu_x.data()[i] + two * xv * m_e_xx.data()[i] + yv * m_e_xy.data()[i];
        dy.data_mut()[i] = m_mu_y.data()[i] + two * yv * m_e_yy.data()[i] + xv * m_e_xy.data()[i];
    }
    (dx, dy)
}

// ---------------------------------------------------------------------------
// per-pixel photometric error for one synthesized view
// ---------------------------------------------------------------------------

pub struct PeCache<T: Scalar> {
    ssim_caches: Vec<SsimCache<T>>,
    target: Tensor<T>,
    synth: Tensor<T>,
}

/// pe = beta * L1 + gamma * (1 - SSIM) / 2, with L1 and SSIM averaged over
/// channels. Both terms lie in [0, 1] for inputs in [0, 1].
pub fn photometric_error<T: Scalar>(
    target: &Tensor<T>,
    synth: &Tensor<T>,
    params: &PhotometricParams,
) -> Result<(Tensor<T>, PeCache<T>)> {
    if target.shape() != synth.shape() || target.shape().len() != 3 {
        return Err(shape_err("photometric_error", target.shape(), synth.shape()));
    }
    let (c, h, w) = (target.shape()[0], target.shape()[1], target.shape()[2]);
    let inv_c = T::from_f64(1.0 / c as f64);
    let beta = T::from_f64(params.beta);
    let gamma = T::from_f64(params.gamma);
    let half = T::from_f64(0.5);
    let mut pe = Tensor::zeros(&[h, w]);
    let mut ssim_caches = Vec::with_capacity(c);
    for ch in 0..c {
        let t2 = channel(target, ch);
        let s2 = channel(synth, ch);
        let (ssim_map, cache) = ssim(&s2, &t2)?;
        for i in 0..h * w {
            let l1 = (s2.data()[i] - t2.data()[i]).abs();
            let dssim = (T::ONE - ssim_map.data()[i]) * half;
            pe.data_mut()[i] += inv_c * (beta * l1 + gamma * dssim);
        }
        ssim_caches.push(cache);
    }
    Ok((pe, PeCache { ssim_caches, target: target.clone(), synth: synth.clone() }))
}

/// d pe / d synth (the target view is data, not a prediction).
pub fn photometric_error_backward<T: Scalar>(
    cache: &PeCache<T>,
    params: &PhotometricParams,
    grad_pe: &Tensor<T>,
) -> Tensor<T> {
    let (c, h, w) = (cache.target.shape()[0], cache.target.shape()[1], cache.target.shape()[2]);
    let inv_c = T::from_f64(1.0 / c as f64);
    let beta = T::from_f64(params.beta);
    let gamma = T::from_f64(params.gamma);
    let half = T::from_f64(0.5);
    let mut d_synth = Tensor::zeros(cache.synth.shape());
    for ch in 0..c {
        // SSIM path: d pe = -gamma/2 * d ssim, per channel weight 1/C
        let d_ssim = grad_pe.map(|g| -g * inv_c * gamma * half);
        let (dx, _dy) = ssim_backward(&cache.ssim_caches[ch], &d_ssim);
        for i in 0..h * w {
            let sv = cache.synth.data()[ch * h * w + i];
            let tv = cache.target.data()[ch * h * w + i];
            let sign = if sv > tv {
                T::ONE
            } else if sv < tv {
                -T::ONE
            } else {
                T::ZERO
            };
            d_synth.data_mut()[ch * h * w + i] =
                dx.data()[i] + grad_pe.data()[i] * inv_c * beta * sign;
        }
    }
    d_synth
}

fn channel<T: Scalar>(x: &Tensor<T>, ch: usize) -> Tensor<T> {
    let (h, w) = (x.shape()[1], x.shape()[2]);
    Tensor::from_vec(&[h, w], x.data()[ch * h * w..(ch + 1) * h * w].to_vec()).expect("channel slice")
}

// ---------------------------------------------------------------------------
// per-pixel minimum over sources
// ---------------------------------------------------------------------------

/// Elementwise minimum over per-source error maps; also returns the chosen
/// source index per pixel.
pub fn min_over_sources<T: Scalar>(maps: &[Tensor<T>]) -> Result<(Tensor<T>, Vec<u8>)> {
    if maps.is_empty() {
        return Err(Error::InvalidArgument("need at least one source".into()));
    }
    let shape = maps[0].shape().to_vec();
    for m in maps {
        if m.shape() != shape {
            return Err(shape_err("min_over_sources", &shape, m.shape()));
        }
    }
    let n = maps[0].numel();
    let mut out = maps[0].clone();
    let mut chosen = vec![0u8; n];
    for (s, m) in maps.iter().enumerate().skip(1) {
        for i in 0..n {
            if m.data()[i] < out.data()[i] {
                out.data_mut()[i] = m.data()[i];
                chosen[i] = s as u8;
            }
        }
    }
    Ok((out, chosen))
}

/// Routes the upstream gradient to the winning source map per pixel.
pub fn min_over_sources_backward<T: Scalar>(
    n_sources: usize,
    chosen: &[u8],
    grad_out: &Tensor<T>,
) -> Vec<Tensor<T>> {
    let mut grads = vec![Tensor::zeros(grad_out.shape()); n_sources];
    for i in 0..grad_out.numel() {
        grads[chosen[i] as usize].data_mut()[i] = grad_out.data()[i];
    }
    grads
}

// ---------------------------------------------------------------------------
// edge-aware smoothness
// ---------------------------------------------------------------------------

pub struct SmoothnessCache<T: Scalar> {
    disp: Tensor<T>,
    wx: Tensor<T>,
    wy: Tensor<T>,
    mean_disp: T,
}

/// mean(|dx d*| e^{-|dx I|} + |dy d*| e^{-|dy I|}) with d* = disp/mean(disp)
/// and image gradients averaged over channels. The x and y terms are each
/// averaged over their own valid positions.
pub fn smoothness_loss<T: Scalar>(
    disp: &Tensor<T>,
    rgb: &Tensor<T>,
) -> Result<(f64, SmoothnessCache<T>)> {
    if disp.shape().len() != 2 || rgb.shape().len() != 3 {
        return Err(shape_err("smoothness_loss", "[H,W] + [C,H,W]", (disp.shape(), rgb.shape())));
    }
    let (h, w) = (disp.shape()[0], disp.shape()[1]);
    if rgb.shape()[1] != h || rgb.shape()[2] != w {
        return Err(shape_err("smoothness_loss resolution", (h, w), (rgb.shape()[1], rgb.shape()[2])));
    }
    let c = rgb.shape()[0];
    let inv_c = 1.0 / c as f64;
    let mean_disp = disp.mean();
    if mean_disp.to_f64() <= 0.0 {
        return Err(Error::Degenerate("smoothness: non-positive mean disparity".into()));
    }
    // edge weights e^{-mean_c |grad I|}
    let mut wx = Tensor::zeros(&[h, w.saturating_sub(1)]);
    let mut wy = Tensor::zeros(&[h.saturating_sub(1), w]);
    for y in 0..h {
        for x in 0..w - 1 {
            let mut g = 0.0;
            for ch in 0..c {
                g += (rgb.at3(ch, y, x + 1) - rgb.at3(ch, y, x)).abs().to_f64();
            }
            wx.data_mut()[y * (w - 1) + x] = T::from_f64((-g * inv_c).exp());
        }
    }
    for y in 0..h - 1 {
        for x in 0..w {
            let mut g = 0.0;
            for ch in 0..c {
                g += (rgb.at3(ch, y + 1, x) - rgb.at3(ch, y, x)).abs().to_f64();
            }
            wy.data_mut()[y * w + x] = T::from_f64((-g * inv_c).exp());
        }
    }
    let inv_mean = T::ONE / mean_disp;
    let mut acc_x = 0.0;
    for y in 0..h {
        for x in 0..w - 1 {
            let d = ((disp.at2(y, x + 1) - disp.at2(y, x)) * inv_mean).abs();
            acc_x += (d * wx.at2(y, x)).to_f64();
        }
    }
    let mut acc_y = 0.0;
    for y in 0..h - 1 {
        for x in 0..w {
            let d = ((disp.at2(y + 1, x) - disp.at2(y, x)) * inv_mean).abs();
            acc_y += (d * wy.at2(y, x)).to_f64();
        }
    }
    let loss = acc_x / (h * (w - 1)) as f64 + acc_y / ((h - 1) * w) as f64;
    Ok((loss, SmoothnessCache { disp: disp.clone(), wx, wy, mean_disp }))
}

/// d loss / d disp, including the dependence through mean(disp).
pub fn smoothness_loss_backward<T: Scalar>(cache: &SmoothnessCache<T>, grad: f64) -> Tensor<T> {
    let (h, w) = (cache.disp.shape()[0], cache.disp.shape()[1]);
    let inv_mean = T::ONE / cache.mean_disp;
    let nx = T::from_f64(grad / (h * (w - 1)) as f64);
    let ny = T::from_f64(grad / ((h - 1) * w) as f64);
    // first, gradient w.r.t. the normalized disparity d*
    let mut d_star = Tensor::<T>::zeros(&[h, w]);
    for y in 0..h {
        for x in 0..w - 1 {
            let diff = (cache.disp.at2(y, x + 1) - cache.disp.at2(y, x)) * inv_mean;
            let sign = if diff > T::ZERO {
                T::ONE
            } else if diff < T::ZERO {
                -T::ONE
            } else {
                T::ZERO
            };
            let g = nx * cache.wx.at2(y, x) * sign;
            d_star.data_mut()[y * w + x + 1] += g;
            d_star.data_mut()[y * w + x] -= g;
        }
    }
    for y in 0..h - 1 {
        for x in 0..w {
            let diff = (cache.disp.at2(y + 1, x) - cache.disp.at2(y, x)) * inv_mean;
            let sign = if diff > T::ZERO {
                T::ONE
            } else if diff < T::ZERO {
                -T::ONE
            } else {
                T::ZERO
            };
            let g = ny * cache.wy.at2(y, x) * sign;
            d_star.data_mut()[(y + 1) * w + x] += g;
            d_star.data_mut()[y * w + x] -= g;
        }
    }
    // d* = disp / mu  =>  d disp_i = d*_i / mu - (1/(n mu^2)) sum_j d*_j disp_j
    let n = (h * w) as f64;
    let mut dot = T::ZERO;
    for i in 0..h * w {
        dot += d_star.data()[i] * cache.disp.data()[i];
    }
    let correction = dot * inv_mean * inv_mean * T::from_f64(1.0 / n);
    let mut out = Tensor::zeros(&[h, w]);
    for i in 0..h * w {
        out.data_mut()[i] = d_star.data()[i] * inv_mean - correction;
    }
    out
}

// ---------------------------------------------------------------------------
// auto-masking
// ---------------------------------------------------------------------------

/// mu = 1 where the best reprojection error beats the best identity error
/// (the loss of the unwarped source against the target), strictly.
pub fn auto_mask<T: Scalar>(
    reproj_pe: &Tensor<T>,
    identity_pe: &Tensor<T>,
) -> Result<Tensor<T>> {
    reproj_pe.zip(identity_pe, |r, i| if r < i { T::ONE } else { T::ZERO })
}

/// Mean of `values` where mask = 1; falls back to the unmasked mean when the
/// mask is empty so a degenerate mask cannot silently zero the objective.
pub fn masked_mean<T: Scalar>(values: &Tensor<T>, mask: &Tensor<T>) -> Result<f64> {
    if values.shape() != mask.shape() {
        return Err(shape_err("masked_mean", values.shape(), mask.shape()));
    }
    let mut acc = 0.0;
    let mut count = 0usize;
    for (v, m) in values.data().iter().zip(mask.data()) {
        if m.to_f64() > 0.5 {
            acc += v.to_f64();
            count += 1;
        }
    }
    if count == 0 {
        Ok(values.mean().to_f64())
    } else {
        Ok(acc / count as f64)
    }
}

/// Gradient of `masked_mean` w.r.t. `values`, scaled by `grad`.
pub fn masked_mean_backward<T: Scalar>(mask: &Tensor<T>, grad: f64) -> Tensor<T> {
    let count = mask.data().iter().filter(|m| m.to_f64() > 0.5).count();
    if count == 0 {
        Tensor::full(mask.shape(), T::from_f64(grad / mask.numel() as f64))
    } else {
        let g = T::from_f64(grad / count as f64);
        mask.map(|m| if m.to_f64() > 0.5 { g } else { T::ZERO })
    }
}

// ---------------------------------------------------------------------------
// joint loss
// ---------------------------------------------------------------------------

/// (1/N) sum_i (masked mean pe_i + lambda_smooth * smoothness_i).
pub fn joint_loss(pe_means: &[f64], smoothness: &[f64], lambda_smooth: f64) -> Result<f64> {
    if pe_means.is_empty() || pe_means.len() != smoothness.len() {
        return Err(Error::InvalidArgument(format!(
            "joint_loss needs matching non-empty scale lists, got {} and {}",
            pe_means.len(),
            smoothness.len()
        )));
    }
    let n = pe_means.len() as f64;
    let total: f64 = pe_means
        .iter()
        .zip(smoothness)
        .map(|(pe, s)| pe + lambda_smooth * s)
        .sum();
    Ok(total / n)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gradcheck::{grad_check, GradCheckCfg};
    use crate::rng::Rng;

    fn random_map(rng: &mut Rng, h: usize, w: usize) -> Tensor<f64> {
        Tensor::from_vec(&[h, w], (0..h * w).map(|_| rng.uniform()).collect()).unwrap()
    }

    fn random_image(rng: &mut Rng, c: usize, h: usize, w: usize) -> Tensor<f64> {
        Tensor::from_vec(&[c, h, w], (0..c * h * w).map(|_| rng.uniform()).collect()).unwrap()
    }

    #[test]
    fn ssim_identity_is_one() {
        let mut rng = Rng::seed_from(51);
        let x = random_map(&mut rng, 6, 7);
        let (s, _) = ssim(&x, &x).unwrap();
        for &v in s.data() {
            assert!((v - 1.0).abs() < 1e-12, "{v}");
        }
    }

    #[test]
    fn ssim_symmetry_and_range() {
        let mut rng = Rng::seed_from(52);
        let x = random_map(&mut rng, 6, 6);
        let y = random_map(&mut rng, 6, 6);
        let (sxy, _) = ssim(&x, &y).unwrap();
        let (syx, _) = ssim(&y, &x).unwrap();
        for (a, b) in sxy.data().iter().zip(syx.data()) {
            assert!((a - b).abs() < 1e-12);
        }
        assert!(sxy.data().iter().all(|&v| (-1.0..=1.0).contains(&v)));
    }

    #[test]
    fn ssim_constant_patches_match_scalar_formula() {
        let x = Tensor::<f64>::full(&[5, 5], 0.5);
        let y = Tensor::<f64>::full(&[5, 5], 0.7);
        let (s, _) = ssim(&x, &y).unwrap();
        // sigma terms vanish; ssim = (2*0.35 + C1) * C2 / ((0.25+0.49+C1) * C2)
        let want = (2.0 * 0.35 + SSIM_C1) / (0.25 + 0.49 + SSIM_C1);
        for &v in s.data() {
            assert!((v - want).abs() < 1e-12, "{v} vs {want}");
        }
    }

    #[test]
    fn ssim_gradcheck_both_inputs() {
        let mut rng = Rng::seed_from(53);
        let x = random_map(&mut rng, 5, 6);
        let y = random_map(&mut rng, 5, 6);
        let report = grad_check(
            |ins| ssim(&ins[0], &ins[1]).unwrap().0,
            |ins, g| {
                let (_, cache) = ssim(&ins[0], &ins[1]).unwrap();
                let (dx, dy) = ssim_backward(&cache, g);
                vec![dx, dy]
            },
            &[x, y],
            &GradCheckCfg::default(),
        );
        assert!(report.passes(1e-6), "{report:?}");
    }

    #[test]
    fn photometric_zero_for_identical_views() {
        let mut rng = Rng::seed_from(54);
        let img = random_image(&mut rng, 3, 5, 5);
        let (pe, _) = photometric_error(&img, &img, &PhotometricParams::default()).unwrap();
        assert!(pe.data().iter().all(|&v| v.abs() < 1e-12));
    }

    #[test]
    fn photometric_scalar_oracle() {
        // constant maps: L1 = 0.2; constants give ssim via the scalar formula
        let target = Tensor::<f64>::full(&[1, 5, 5], 0.5);
        let synth = Tensor::<f64>::full(&[1, 5, 5], 0.7);
        let (pe, _) = photometric_error(&target, &synth, &PhotometricParams::default()).unwrap();
        let s = (2.0 * 0.35 + SSIM_C1) / (0.25 + 0.49 + SSIM_C1);
        let want = 0.15 * 0.2 + 0.85 * (1.0 - s) / 2.0;
        for &v in pe.data() {
            assert!((v - want).abs() < 1e-9, "{v} vs {want}");
        }
    }

    #[test]
    fn photometric_named_scalar_example() {
        // |L1| = 0.2 and SSIM = 0.5 combine to 0.15*0.2 + 0.85*0.25 = 0.2425
        let l1: f64 = 0.2;
        let ssim_v: f64 = 0.5;
        let pe = 0.15 * l1 + 0.85 * (1.0 - ssim_v) / 2.0;
        assert!((pe - 0.2425).abs() < 1e-12);
    }

    #[test]
    fn photometric_gradcheck() {
        let mut rng = Rng::seed_from(55);
        let target = random_image(&mut rng, 2, 5, 5);
        let synth = random_image(&mut rng, 2, 5, 5);
        let t2 = target.clone();
        let report = grad_check(
            move |ins| photometric_error(&target, &ins[0], &PhotometricParams::default()).unwrap().0,
            move |ins, g| {
                let (_, cache) =
                    photometric_error(&t2, &ins[0], &PhotometricParams::default()).unwrap();
                vec![photometric_error_backward(&cache, &PhotometricParams::default(), g)]
            },
            &[synth],
            &GradCheckCfg::default(),
        );
        assert!(report.passes(1e-6), "{report:?}");
    }

    #[test]
    fn min_over_sources_picks_exact_view() {
        let mut rng = Rng::seed_from(56);
        let zero = Tensor::<f64>::zeros(&[4, 4]);
        let noisy = random_map(&mut rng, 4, 4).map(|v| v + 0.1);
        let (min_map, chosen) = min_over_sources(&[noisy, zero]).unwrap();
        assert!(min_map.data().iter().all(|&v| v == 0.0));
        assert!(chosen.iter().all(|&c| c == 1));
    }

    #[test]
    fn min_over_sources_is_elementwise_min() {
        let mut rng = Rng::seed_from(57);
        let a = random_map(&mut rng, 5, 5);
        let b = random_map(&mut rng, 5, 5);
        let (m, chosen) = min_over_sources(&[a.clone(), b.clone()]).unwrap();
        for i in 0..25 {
            assert_eq!(m.data()[i], a.data()[i].min(b.data()[i]));
            let want = if b.data()[i] < a.data()[i] { 1 } else { 0 };
            assert_eq!(chosen[i], want);
        }
    }

    #[test]
    fn smoothness_zero_on_constant_disparity() {
        let mut rng = Rng::seed_from(58);
        let disp = Tensor::<f64>::full(&[6, 8], 0.4);
        let rgb = random_image(&mut rng, 3, 6, 8);
        let (loss, _) = smoothness_loss(&disp, &rgb).unwrap();
        assert_eq!(loss, 0.0);
    }

    #[test]
    fn smoothness_linear_ramp_scalar_value() {
        // disp(y, x) = 0.2 + k x on a constant image: loss = |k| / mean(disp)
        let (h, w) = (4, 6);
        let k = 0.03;
        let disp = Tensor::from_vec(
            &[h, w],
            (0..h * w).map(|i| 0.2 + k * (i % w) as f64).collect(),
        )
        .unwrap();
        let rgb = Tensor::<f64>::full(&[3, h, w], 0.5);
        let (loss, _) = smoothness_loss(&disp, &rgb).unwrap();
        let want = k / disp.mean();
        assert!((loss - want).abs() < 1e-12, "{loss} vs {want}");
    }

    #[test]
    fn smoothness_edges_reduce_penalty() {
        let (h, w) = (4, 6);
        let disp = Tensor::from_vec(
            &[h, w],
            (0..h * w).map(|i| 0.2 + 0.05 * (i % w) as f64).collect(),
        )
        .unwrap();
        let flat = Tensor::<f64>::full(&[3, h, w], 0.5);
        let edgy = Tensor::from_vec(
            &[3, h, w],
            (0..3 * h * w).map(|i| if (i % w) % 2 == 0 { 0.0 } else { 1.0 }).collect(),
        )
        .unwrap();
        let (l_flat, _) = smoothness_loss(&disp, &flat).unwrap();
        let (l_edgy, _) = smoothness_loss(&disp, &edgy).unwrap();
        assert!(l_edgy < l_flat);
    }

    #[test]
    fn smoothness_gradcheck() {
        let mut rng = Rng::seed_from(59);
        let disp = Tensor::from_vec(&[5, 6], (0..30).map(|_| rng.uniform_in(0.1, 0.9)).collect()).unwrap();
        let rgb = random_image(&mut rng, 3, 5, 6);
        let rgb2 = rgb.clone();
        let report = grad_check(
            move |ins| Tensor::scalar(smoothness_loss(&ins[0], &rgb).unwrap().0),
            move |ins, g| {
                let (_, cache) = smoothness_loss(&ins[0], &rgb2).unwrap();
                vec![smoothness_loss_backward(&cache, g.data()[0])]
            },
            &[disp],
            &GradCheckCfg::default(),
        );
        assert!(report.passes(1e-6), "{report:?}");
    }

    #[test]
    fn auto_mask_static_camera_masks_everything() {
        let mut rng = Rng::seed_from(60);
        let img = random_image(&mut rng, 3, 5, 5);
        let params = PhotometricParams::default();
        // sources identical to target: identity pe is exactly zero
        let (identity_pe, _) = photometric_error(&img, &img, &params).unwrap();
        let synth = img.map(|v| (v + 0.05).min(1.0));
        let (reproj_pe, _) = photometric_error(&img, &synth, &params).unwrap();
        let mask = auto_mask(&reproj_pe, &identity_pe).unwrap();
        assert!(mask.data().iter().all(|&m| m == 0.0));
    }

    #[test]
    fn auto_mask_exact_synthesis_wins_everywhere() {
        let mut rng = Rng::seed_from(61);
        let img = random_image(&mut rng, 3, 5, 5);
        let raw = random_image(&mut rng, 3, 5, 5);
        let params = PhotometricParams::default();
        let (identity_pe, _) = photometric_error(&img, &raw, &params).unwrap();
        let (reproj_pe, _) = photometric_error(&img, &img, &params).unwrap();
        let mask = auto_mask(&reproj_pe, &identity_pe).unwrap();
        assert!(mask.data().iter().all(|&m| m == 1.0));
    }

    #[test]
    fn auto_mask_mixed_case_elementwise_oracle() {
        let mut rng = Rng::seed_from(62);
        let a = random_map(&mut rng, 6, 6);
        let b = random_map(&mut rng, 6, 6);
        let mask = auto_mask(&a, &b).unwrap();
        for i in 0..36 {
            let want = if a.data()[i] < b.data()[i] { 1.0 } else { 0.0 };
            assert_eq!(mask.data()[i], want);
        }
    }

    #[test]
    fn joint_loss_arithmetic() {
        assert_eq!(joint_loss(&[2.0, 2.0, 2.0], &[0.0, 0.0, 0.0], 1e-3).unwrap(), 2.0);
        assert_eq!(joint_loss(&[1.0, 2.0, 3.0, 4.0], &[0.0; 4], 1e-3).unwrap(), 2.5);
        // unit smoothness on every scale adds exactly lambda
        let with_smooth = joint_loss(&[1.0, 2.0, 3.0, 4.0], &[1.0; 4], 1e-3).unwrap();
        assert!((with_smooth - 2.501).abs() < 1e-12);
        assert!(joint_loss(&[], &[], 1e-3).is_err());
    }

    #[test]
    fn masked_mean_and_fallback() {
        let v = Tensor::from_vec(&[2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let m = Tensor::from_vec(&[2, 2], vec![1.0, 0.0, 0.0, 1.0]).unwrap();
        assert_eq!(masked_mean(&v, &m).unwrap(), 2.5);
        let empty = Tensor::<f64>::zeros(&[2, 2]);
        assert_eq!(masked_mean(&v, &empty).unwrap(), 2.5); // falls back to full mean
        let g = masked_mean_backward(&m, 1.0);
        assert_eq!(g.data(), &[0.5, 0.0, 0.0, 0.5]);
    }
}
