//! Scale correction: transfers the global scale of the pseudo-dense metric
//! map onto a relative depth map, either through the median ratio or through
//! mean/std alignment.

use crate::error::{shape_err, Error, Result};
use crate::tensor::{Scalar, Tensor};

/// Record of the factor(s) applied by a scaling method.
#[derive(Debug, Clone, PartialEq)]
pub enum ScaleFactor {
    Median { s: f64 },
    MeanStd { mu_r: f64, sigma_r: f64, mu_m: f64, sigma_m: f64 },
}

impl ScaleFactor {
    pub fn to_record(&self) -> String {
        match self {
            ScaleFactor::Median { s } => format!("method = median\ns = {s}\n"),
            ScaleFactor::MeanStd { mu_r, sigma_r, mu_m, sigma_m } => format!(
                "method = meanstd\nmu_r = {mu_r}\nsigma_r = {sigma_r}\nmu_m = {mu_m}\nsigma_m = {sigma_m}\n"
            ),
        }
    }
}

/// Depth clamp floor for the mean/std method; the affine shift can produce
/// non-positive depths which the metrics reject.
pub const MEANSTD_FLOOR: f64 = 1e-3;

/// Median over the masked values; an even count averages the two central
/// order statistics.
fn masked_median<T: Scalar>(map: &Tensor<T>, mask: &[bool]) -> Result<f64> {
    let mut vals: Vec<f64> = map
        .data()
        .iter()
        .zip(mask)
        .filter(|(_, &m)| m)
        .map(|(v, _)| v.to_f64())
        .collect();
    if vals.is_empty() {
        return Err(Error::Degenerate("median over empty mask".into()));
    }
    vals.sort_by(|a, b| a.partial_cmp(b).expect("finite depths"));
    let n = vals.len();
    Ok(if n % 2 == 1 { vals[n / 2] } else { 0.5 * (vals[n / 2 - 1] + vals[n / 2]) })
}

fn joint_mask<T: Scalar>(
    relative: &Tensor<T>,
    pseudo: &Tensor<T>,
    valid: Option<&Tensor<T>>,
) -> Result<Vec<bool>> {
    if relative.shape() != pseudo.shape() {
        return Err(shape_err("scaling maps", relative.shape(), pseudo.shape()));
    }
    if let Some(v) = valid {
        if v.shape() != relative.shape() {
            return Err(shape_err("scaling mask", relative.shape(), v.shape()));
        }
    }
    Ok((0..relative.numel())
        .map(|i| valid.is_none_or(|v| v.data()[i].to_f64() > 0.5))
        .collect())
}

/// Median scaling: M = R * MEDIAN(pseudo) / MEDIAN(R), with both medians
/// computed over the intersection of validity masks.
pub fn median_scale<T: Scalar>(
    relative: &Tensor<T>,
    pseudo: &Tensor<T>,
    valid: Option<&Tensor<T>>,
) -> Result<(Tensor<T>, ScaleFactor)> {
    let mask = joint_mask(relative, pseudo, valid)?;
    let med_r = masked_median(relative, &mask)?;
    let med_m = masked_median(pseudo, &mask)?;
    if med_r <= 0.0 {
        return Err(Error::Degenerate(format!(
            "median of relative depth must be positive, got {med_r}"
        )));
    }
    let s = med_m / med_r;
    let st = T::from_f64(s);
    Ok((relative.map(|v| v * st), ScaleFactor::Median { s }))
}

fn masked_moments<T: Scalar>(map: &Tensor<T>, mask: &[bool]) -> Result<(f64, f64)> {
    let vals: Vec<f64> = map
        .data()
        .iter()
        .zip(mask)
        .filter(|(_, &m)| m)
        .map(|(v, _)| v.to_f64())
        .collect();
    if vals.is_empty() {
        return Err(Error::Degenerate("moments over empty mask".into()));
    }
    let n = vals.len() as f64;
    let mean = vals.iter().sum::<f64>() / n;
    let var = vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    Ok((mean, var.sqrt()))
}

/// Mean/std scaling: M = (R - mu_R)/sigma_R * sigma_M + mu_M, clamped at a
/// small positive floor.
pub fn meanstd_scale<T: Scalar>(
    relative: &Tensor<T>,
    pseudo: &Tensor<T>,
    valid: Option<&Tensor<T>>,
) -> Result<(Tensor<T>, ScaleFactor)> {
    let mask = joint_mask(relative, pseudo, valid)?;
    let (mu_r, sigma_r) = masked_moments(relative, &mask)?;
    let (mu_m, sigma_m) = masked_moments(pseudo, &mask)?;
    if sigma_r <= 0.0 {
        return Err(Error::Degenerate(
            "relative depth is constant, mean/std scaling undefined".into(),
        ));
    }
    let gain = T::from_f64(sigma_m / sigma_r);
    let mu_rt = T::from_f64(mu_r);
    let mu_mt = T::from_f64(mu_m);
    let floor = T::from_f64(MEANSTD_FLOOR);
    let out = relative.map(|v| ((v - mu_rt) * gain + mu_mt).max_s(floor));
    Ok((out, ScaleFactor::MeanStd { mu_r, sigma_r, mu_m, sigma_m }))
}
