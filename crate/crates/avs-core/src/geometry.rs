//! Pinhole camera model, axis-angle rigid motion, disparity/depth
//! conversion, and differentiable inverse warping for view synthesis.
//!
//! The pose convention is target -> source: warping samples the source view
//! at the locations where target pixels land after applying the pose.

use crate::error::{shape_err, Error, Result};
use crate::tensor::{Scalar, Tensor};

#[derive(Debug, Clone, Copy)]
pub struct CameraIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
}

impl CameraIntrinsics {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64) -> Result<Self> {
        if fx <= 0.0 || fy <= 0.0 {
            return Err(Error::InvalidArgument("focal lengths must be positive".into()));
        }
        Ok(Self { fx, fy, cx, cy })
    }

    /// Rescales intrinsics for a resized image.
    pub fn scaled(&self, sx: f64, sy: f64) -> Self {
        Self { fx: self.fx * sx, fy: self.fy * sy, cx: self.cx * sx, cy: self.cy * sy }
    }
}

/// Rigid motion as axis-angle rotation (radians) plus translation (meters).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose<T: Scalar> {
    pub rotation: [T; 3],
    pub translation: [T; 3],
}

impl<T: Scalar> Pose<T> {
    pub fn identity() -> Self {
        Self { rotation: [T::ZERO; 3], translation: [T::ZERO; 3] }
    }

    pub fn new(rotation: [T; 3], translation: [T; 3]) -> Self {
        Self { rotation, translation }
    }

    /// Inverse motion: R^T, -R^T t; in axis-angle that is simply -r.
    pub fn inverse(&self) -> Self {
        let rot = Rotation::from_axis_angle(&self.rotation);
        let mut t = [T::ZERO; 3];
        for i in 0..3 {
            // -R^T t
            t[i] = -(rot.m[0][i] * self.translation[0]
                + rot.m[1][i] * self.translation[1]
                + rot.m[2][i] * self.translation[2]);
        }
        Self { rotation: [-self.rotation[0], -self.rotation[1], -self.rotation[2]], translation: t }
    }

    pub fn cast<U: Scalar>(&self) -> Pose<U> {
        Pose {
            rotation: self.rotation.map(|x| U::from_f64(x.to_f64())),
            translation: self.translation.map(|x| U::from_f64(x.to_f64())),
        }
    }
}

/// Rotation matrix with its partial derivatives w.r.t. the axis-angle vector.
pub struct Rotation<T: Scalar> {
    pub m: [[T; 3]; 3],
    /// d(m)/d(r_i) for i in 0..3; built on demand by `with_jacobian`.
    pub dm: Option<[[[T; 3]; 3]; 3]>,
}

fn cross_matrix<T: Scalar>(v: &[T; 3]) -> [[T; 3]; 3] {
    let z = T::ZERO;
    [[z, -v[2], v[1]], [v[2], z, -v[0]], [-v[1], v[0], z]]
}

fn mat_mul3<T: Scalar>(a: &[[T; 3]; 3], b: &[[T; 3]; 3]) -> [[T; 3]; 3] {
    let mut out = [[T::ZERO; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            let mut acc = T::ZERO;
            for k in 0..3 {
                acc += a[i][k] * b[k][j];
            }
            out[i][j] = acc;
        }
    }
    out
}

fn mat_add_scaled<T: Scalar>(out: &mut [[T; 3]; 3], a: &[[T; 3]; 3], s: T) {
    for i in 0..3 {
        for j in 0..3 {
            out[i][j] += a[i][j] * s;
        }
    }
}

impl<T: Scalar> Rotation<T> {
    /// Rodrigues formula: R = I + A [r]x + B [r]x^2 with A = sin t / t and
    /// B = (1 - cos t)/t^2; series expansions below t = 1e-4 keep the small
    /// angle limit smooth.
    pub fn from_axis_angle(r: &[T; 3]) -> Self {
        let theta2 = (r[0] * r[0] + r[1] * r[1] + r[2] * r[2]).to_f64();
        let theta = theta2.sqrt();
        let (a, b) = if theta < 1e-4 {
            (1.0 - theta2 / 6.0 + theta2 * theta2 / 120.0, 0.5 - theta2 / 24.0 + theta2 * theta2 / 720.0)
        } else {
            (theta.sin() / theta, (1.0 - theta.cos()) / theta2)
        };
        let k = cross_matrix(r);
        let k2 = mat_mul3(&k, &k);
        let mut m = [[T::ZERO; 3]; 3];
        for (i, row) in m.iter_mut().enumerate() {
            row[i] = T::ONE;
        }
        mat_add_scaled(&mut m, &k, T::from_f64(a));
        mat_add_scaled(&mut m, &k2, T::from_f64(b));
        Self { m, dm: None }
    }

    /// Also builds dR/dr_i.
    pub fn with_jacobian(r: &[T; 3]) -> Self {
        let mut rot = Self::from_axis_angle(r);
        let theta2 = (r[0] * r[0] + r[1] * r[1] + r[2] * r[2]).to_f64();
        let theta = theta2.sqrt();
        // a' / t and b' / t stay finite at t = 0
        let (a, b, da_over_t, db_over_t) = if theta < 1e-4 {
            (
                1.0 - theta2 / 6.0 + theta2 * theta2 / 120.0,
                0.5 - theta2 / 24.0 + theta2 * theta2 / 720.0,
                -1.0 / 3.0 + theta2 / 30.0,
                -1.0 / 12.0 + theta2 / 180.0,
            )
        } else {
            let (s, c) = (theta.sin(), theta.cos());
            let a = s / theta;
            let b = (1.0 - c) / theta2;
            ((a), (b), (theta * c - s) / (theta2 * theta), (theta * s - 2.0 * (1.0 - c)) / (theta2 * theta2))
        };
        let k = cross_matrix(r);
        let k2 = mat_mul3(&k, &k);
        let mut dm = [[[T::ZERO; 3]; 3]; 3];
        for i in 0..3 {
            let mut e = [T::ZERO; 3];
            e[i] = T::ONE;
            let ei = cross_matrix(&e);
            let eik = mat_mul3(&ei, &k);
            let kei = mat_mul3(&k, &ei);
            let alpha = T::from_f64(da_over_t) * r[i];
            let beta = T::from_f64(db_over_t) * r[i];
            let mut d = [[T::ZERO; 3]; 3];
            mat_add_scaled(&mut d, &k, alpha);
            mat_add_scaled(&mut d, &ei, T::from_f64(a));
            mat_add_scaled(&mut d, &k2, beta);
            mat_add_scaled(&mut d, &eik, T::from_f64(b));
            mat_add_scaled(&mut d, &kei, T::from_f64(b));
            dm[i] = d;
        }
        rot.dm = Some(dm);
        rot
    }

    #[inline]
    pub fn apply(&self, p: &[T; 3]) -> [T; 3] {
        let mut out = [T::ZERO; 3];
        for i in 0..3 {
            out[i] = self.m[i][0] * p[0] + self.m[i][1] * p[1] + self.m[i][2] * p[2];
        }
        out
    }

    #[inline]
    pub fn apply_transpose(&self, p: &[T; 3]) -> [T; 3] {
        let mut out = [T::ZERO; 3];
        for i in 0..3 {
            out[i] = self.m[0][i] * p[0] + self.m[1][i] * p[1] + self.m[2][i] * p[2];
        }
        out
    }
}

// ---------------------------------------------------------------------------
// disparity <-> depth
// ---------------------------------------------------------------------------

/// Bounded inverse mapping: depth = 1 / (1/d_max + (1/d_min - 1/d_max) disp);
/// disp in (0,1) maps monotonically (decreasing) onto (d_min, d_max).
pub fn disp_to_depth<T: Scalar>(disp: &Tensor<T>, d_min: f64, d_max: f64) -> Result<Tensor<T>> {
    if !(0.0 < d_min && d_min < d_max) {
        return Err(Error::InvalidArgument(format!(
            "need 0 < d_min < d_max, got {d_min}, {d_max}"
        )));
    }
    let lo = T::from_f64(1.0 / d_max);
    let span = T::from_f64(1.0 / d_min - 1.0 / d_max);
    Ok(disp.map(|d| T::ONE / (lo + span * d)))
}

/// d(depth)/d(disp) = -span * depth^2.
pub fn disp_to_depth_backward<T: Scalar>(
    disp: &Tensor<T>,
    d_min: f64,
    d_max: f64,
    grad_out: &Tensor<T>,
) -> Tensor<T> {
    let lo = T::from_f64(1.0 / d_max);
    let span = T::from_f64(1.0 / d_min - 1.0 / d_max);
    disp.zip(grad_out, |d, g| {
        let depth = T::ONE / (lo + span * d);
        -span * depth * depth * g
    })
    .expect("shape checked upstream")
}

// ---------------------------------------------------------------------------
// backproject / project
// ---------------------------------------------------------------------------

/// Lifts each pixel to a camera-frame 3D point: P(u,v) = depth(u,v) *
/// ((u-cx)/fx, (v-cy)/fy, 1). Output is H x W x 3.
pub fn backproject<T: Scalar>(depth: &Tensor<T>, k: &CameraIntrinsics) -> Result<Tensor<T>> {
    if depth.shape().len() != 2 {
        return Err(shape_err("backproject depth rank", 2, depth.shape().len()));
    }
    let (h, w) = (depth.shape()[0], depth.shape()[1]);
    let mut out = Tensor::zeros(&[h, w, 3]);
    for v in 0..h {
        for u in 0..w {
            let d = depth.at2(v, u);
            let x = T::from_f64((u as f64 - k.cx) / k.fx);
            let y = T::from_f64((v as f64 - k.cy) / k.fy);
            let base = (v * w + u) * 3;
            out.data_mut()[base] = d * x;
            out.data_mut()[base + 1] = d * y;
            out.data_mut()[base + 2] = d;
        }
    }
    Ok(out)
}

pub const MIN_PROJECT_DEPTH: f64 = 1e-6;

/// Sub-pixel slack at the image border so that identity round trips, which
/// land 1 ulp outside, still count as inside.
const BORDER_EPS: f64 = 1e-6;

/// Applies the rigid transform and projects onto the pixel grid. Returns the
/// pixel coordinates (H x W x 2), the transformed z depth (H x W), and a
/// validity map (H x W, 1 where z > MIN_PROJECT_DEPTH).
pub fn project<T: Scalar>(
    points: &Tensor<T>,
    pose: &Pose<T>,
    k: &CameraIntrinsics,
) -> Result<(Tensor<T>, Tensor<T>, Tensor<T>)> {
    if points.shape().len() != 3 || points.shape()[2] != 3 {
        return Err(shape_err("project points", "[H, W, 3]", points.shape()));
    }
    let (h, w) = (points.shape()[0], points.shape()[1]);
    let rot = Rotation::from_axis_angle(&pose.rotation);
    let mut pixels = Tensor::zeros(&[h, w, 2]);
    let mut depth = Tensor::zeros(&[h, w]);
    let mut valid = Tensor::zeros(&[h, w]);
    let (fx, fy) = (T::from_f64(k.fx), T::from_f64(k.fy));
    let (cx, cy) = (T::from_f64(k.cx), T::from_f64(k.cy));
    let zmin = T::from_f64(MIN_PROJECT_DEPTH);
    for v in 0..h {
        for u in 0..w {
            let base = (v * w + u) * 3;
            let p = [points.data()[base], points.data()[base + 1], points.data()[base + 2]];
            let mut q = rot.apply(&p);
            for i in 0..3 {
                q[i] += pose.translation[i];
            }
            depth.data_mut()[v * w + u] = q[2];
            if q[2] > zmin {
                valid.data_mut()[v * w + u] = T::ONE;
                pixels.data_mut()[(v * w + u) * 2] = fx * q[0] / q[2] + cx;
                pixels.data_mut()[(v * w + u) * 2 + 1] = fy * q[1] / q[2] + cy;
            }
        }
    }
    Ok((pixels, depth, valid))
}

// ---------------------------------------------------------------------------
// inverse warp
// ---------------------------------------------------------------------------

pub struct WarpOutput<T: Scalar> {
    /// Synthesized target view, same shape as the source (C x H x W).
    pub image: Tensor<T>,
    /// 1 where the reprojected sample fell inside the source frame.
    pub mask: Tensor<T>,
}

/// Gradients returned by `inverse_warp_backward`.
pub struct WarpGrads<T: Scalar> {
    pub d_source: Tensor<T>,
    pub d_depth: Tensor<T>,
    pub d_rotation: [T; 3],
    pub d_translation: [T; 3],
}

/// Synthesizes the target view by sampling the source at the pixels where
/// each target pixel lands under `pose` (target -> source). Out-of-frame and
/// behind-camera samples are masked invalid and output zero.
pub fn inverse_warp<T: Scalar>(
    source: &Tensor<T>,
    target_depth: &Tensor<T>,
    pose: &Pose<T>,
    k: &CameraIntrinsics,
) -> Result<WarpOutput<T>> {
    let (c, h, w) = check_warp_shapes(source, target_depth)?;
    let rot = Rotation::from_axis_angle(&pose.rotation);
    let mut image = Tensor::zeros(&[c, h, w]);
    let mut mask = Tensor::zeros(&[h, w]);
    let zmin = T::from_f64(MIN_PROJECT_DEPTH);
    for v in 0..h {
        for u in 0..w {
            let d = target_depth.at2(v, u);
            let p = pixel_ray(u, v, k, d);
            let mut q = rot.apply(&p);
            for i in 0..3 {
                q[i] += pose.translation[i];
            }
            if q[2] <= zmin {
                continue;
            }
            let px = (T::from_f64(k.fx) * q[0] / q[2] + T::from_f64(k.cx)).to_f64();
            let py = (T::from_f64(k.fy) * q[1] / q[2] + T::from_f64(k.cy)).to_f64();
            if !inside(px, w) || !inside(py, h) {
                continue;
            }
            let px = px.clamp(0.0, (w - 1) as f64);
            let py = py.clamp(0.0, (h - 1) as f64);
            mask.data_mut()[v * w + u] = T::ONE;
            let (x0, y0) = (px.floor() as usize, py.floor() as usize);
            let (x1, y1) = ((x0 + 1).min(w - 1), (y0 + 1).min(h - 1));
            let fx = T::from_f64(px - x0 as f64);
            let fy = T::from_f64(py - y0 as f64);
            for ch in 0..c {
                let v00 = source.at3(ch, y0, x0);
                let v01 = source.at3(ch, y0, x1);
                let v10 = source.at3(ch, y1, x0);
                let v11 = source.at3(ch, y1, x1);
                let top = v00 + fx * (v01 - v00);
                let bot = v10 + fx * (v11 - v10);
                image.set3(ch, v, u, top + fy * (bot - top));
            }
        }
    }
    Ok(WarpOutput { image, mask })
}

/// Backward pass of `inverse_warp` w.r.t. source image, target depth, and
/// pose, given the upstream gradient of the synthesized image. The mask is
/// treated as non-differentiable.
pub fn inverse_warp_backward<T: Scalar>(
    source: &Tensor<T>,
    target_depth: &Tensor<T>,
    pose: &Pose<T>,
    k: &CameraIntrinsics,
    grad_image: &Tensor<T>,
) -> Result<WarpGrads<T>> {
    let (c, h, w) = check_warp_shapes(source, target_depth)?;
    let rot = Rotation::with_jacobian(&pose.rotation);
    let dm = rot.dm.as_ref().expect("jacobian requested");
    let mut d_source = Tensor::zeros(source.shape());
    let mut d_depth = Tensor::zeros(target_depth.shape());
    let mut d_rot = [T::ZERO; 3];
    let mut d_trans = [T::ZERO; 3];
    let (kfx, kfy) = (T::from_f64(k.fx), T::from_f64(k.fy));
    let zmin = T::from_f64(MIN_PROJECT_DEPTH);
    for v in 0..h {
        for u in 0..w {
            let d = target_depth.at2(v, u);
            let p = pixel_ray(u, v, k, d);
            let mut q = rot.apply(&p);
            for i in 0..3 {
                q[i] += pose.translation[i];
            }
            if q[2] <= zmin {
                continue;
            }
            let px_t = kfx * q[0] / q[2] + T::from_f64(k.cx);
            let py_t = kfy * q[1] / q[2] + T::from_f64(k.cy);
            let (px, py) = (px_t.to_f64(), py_t.to_f64());
            if !inside(px, w) || !inside(py, h) {
                continue;
            }
            let px = px.clamp(0.0, (w - 1) as f64);
            let py = py.clamp(0.0, (h - 1) as f64);
            let (x0, y0) = (px.floor() as usize, py.floor() as usize);
            let (x1, y1) = ((x0 + 1).min(w - 1), (y0 + 1).min(h - 1));
            let fx = T::from_f64(px - x0 as f64);
            let fy = T::from_f64(py - y0 as f64);
            let mut d_px = T::ZERO;
            let mut d_py = T::ZERO;
            for ch in 0..c {
                let g = grad_image.at3(ch, v, u);
                if g == T::ZERO {
                    continue;
                }
                let v00 = source.at3(ch, y0, x0);
                let v01 = source.at3(ch, y0, x1);
                let v10 = source.at3(ch, y1, x0);
                let v11 = source.at3(ch, y1, x1);
                let wy0 = T::ONE - fy;
                let wx0 = T::ONE - fx;
                let sd = d_source.data_mut();
                let at = |cc: usize, y: usize, x: usize| (cc * h + y) * w + x;
                sd[at(ch, y0, x0)] += g * wy0 * wx0;
                sd[at(ch, y0, x1)] += g * wy0 * fx;
                sd[at(ch, y1, x0)] += g * fy * wx0;
                sd[at(ch, y1, x1)] += g * fy * fx;
                // d(sample)/d(px) and /d(py)
                d_px += g * (wy0 * (v01 - v00) + fy * (v11 - v10));
                d_py += g * (wx0 * (v10 - v00) + fx * (v11 - v01));
            }
            if d_px == T::ZERO && d_py == T::ZERO {
                continue;
            }
            // projection jacobian
            let inv_z = T::ONE / q[2];
            let dq = [
                d_px * kfx * inv_z,
                d_py * kfy * inv_z,
                -(d_px * kfx * q[0] + d_py * kfy * q[1]) * inv_z * inv_z,
            ];
            for i in 0..3 {
                d_trans[i] += dq[i];
            }
            for i in 0..3 {
                let dr = &dm[i];
                let mut acc = T::ZERO;
                for row in 0..3 {
                    acc += dq[row] * (dr[row][0] * p[0] + dr[row][1] * p[1] + dr[row][2] * p[2]);
                }
                d_rot[i] += acc;
            }
            let dp = rot.apply_transpose(&dq);
            let ray = pixel_ray(u, v, k, T::ONE);
            d_depth.data_mut()[v * w + u] = dp[0] * ray[0] + dp[1] * ray[1] + dp[2] * ray[2];
        }
    }
    Ok(WarpGrads { d_source, d_depth, d_rotation: d_rot, d_translation: d_trans })
}

#[inline]
fn inside(coord: f64, len: usize) -> bool {
    coord >= -BORDER_EPS && coord <= (len - 1) as f64 + BORDER_EPS
}

#[inline]
fn pixel_ray<T: Scalar>(u: usize, v: usize, k: &CameraIntrinsics, depth: T) -> [T; 3] {
    [
        depth * T::from_f64((u as f64 - k.cx) / k.fx),
        depth * T::from_f64((v as f64 - k.cy) / k.fy),
        depth,
    ]
}

fn check_warp_shapes<T: Scalar>(source: &Tensor<T>, depth: &Tensor<T>) -> Result<(usize, usize, usize)> {
    if source.shape().len() != 3 || depth.shape().len() != 2 {
        return Err(shape_err("inverse_warp", "[C,H,W] + [H,W]", (source.shape(), depth.shape())));
    }
    let (c, h, w) = (source.shape()[0], source.shape()[1], source.shape()[2]);
    if depth.shape() != [h, w] {
        return Err(shape_err("inverse_warp depth", [h, w], depth.shape()));
    }
    Ok((c, h, w))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gradcheck::{grad_check, GradCheckCfg};
    use crate::rng::Rng;

    fn test_intrinsics() -> CameraIntrinsics {
        CameraIntrinsics::new(100.0, 100.0, 0.0, 0.0).unwrap()
    }

    #[test]
    fn disp_to_depth_bounds_and_monotonicity() {
        let disp = Tensor::from_vec(&[1, 3], vec![1e-9, 0.5, 1.0 - 1e-9]).unwrap();
        let depth = disp_to_depth(&disp, 0.1, 10.0).unwrap();
        assert!((depth.data()[0] - 10.0).abs() < 1e-6);
        assert!((depth.data()[2] - 0.1).abs() < 1e-6);
        // independent scalar evaluation of the midpoint
        let want = 1.0 / (1.0 / 10.0 + (1.0 / 0.1 - 1.0 / 10.0) * 0.5);
        assert!((depth.data()[1] - want).abs() < 1e-12);
        // monotone decreasing
        assert!(depth.data()[0] > depth.data()[1] && depth.data()[1] > depth.data()[2]);
    }

    #[test]
    fn backproject_known_points() {
        let k = CameraIntrinsics::new(100.0, 100.0, 3.0, 2.0).unwrap();
        let depth = Tensor::<f64>::full(&[5, 7], 2.0);
        let pts = backproject(&depth, &k).unwrap();
        // pixel at the principal point maps to (0, 0, depth)
        let base = (2 * 7 + 3) * 3;
        assert_eq!(&pts.data()[base..base + 3], &[0.0, 0.0, 2.0]);

        let k2 = test_intrinsics();
        let depth = Tensor::<f64>::full(&[1, 101], 1.0);
        let pts = backproject(&depth, &k2).unwrap();
        let base = 100 * 3;
        assert_eq!(&pts.data()[base..base + 3], &[1.0, 0.0, 1.0]);
    }

    #[test]
    fn project_identity_recovers_pixels() {
        let k = CameraIntrinsics::new(90.0, 80.0, 15.5, 7.5).unwrap();
        let mut rng = Rng::seed_from(2);
        let depth = Tensor::from_vec(&[4, 6], (0..24).map(|_| 1.0 + rng.uniform() * 5.0).collect()).unwrap();
        let pts = backproject(&depth, &k).unwrap();
        let (pix, d2, valid) = project(&pts, &Pose::<f64>::identity(), &k).unwrap();
        for v in 0..4 {
            for u in 0..6 {
                assert_eq!(valid.at2(v, u), 1.0);
                assert!((pix.data()[(v * 6 + u) * 2] - u as f64).abs() < 1e-5);
                assert!((pix.data()[(v * 6 + u) * 2 + 1] - v as f64).abs() < 1e-5);
                assert!((d2.at2(v, u) - depth.at2(v, u)).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn project_z_translation_scales_offsets() {
        let k = test_intrinsics();
        let depth = Tensor::<f64>::full(&[3, 3], 2.0);
        let pts = backproject(&depth, &k).unwrap();
        let pose = Pose::new([0.0; 3], [0.0, 0.0, -1.0]);
        let (pix, d2, _) = project(&pts, &pose, &k).unwrap();
        // plane at depth 2 moves to depth 1; pixel offsets double
        for v in 0..3 {
            for u in 0..3 {
                assert!((d2.at2(v, u) - 1.0).abs() < 1e-12);
                let want_x = 2.0 * u as f64;
                assert!((pix.data()[(v * 3 + u) * 2] - want_x).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn project_pi_rotation_mirrors() {
        let k = test_intrinsics();
        let depth = Tensor::<f64>::full(&[1, 3], 4.0);
        let pts = backproject(&depth, &k).unwrap();
        // rotation by pi about z mirrors x and y about the principal point
        let pose = Pose::new([0.0, 0.0, std::f64::consts::PI], [0.0; 3]);
        let (pix, _, _) = project(&pts, &pose, &k).unwrap();
        for u in 0..3 {
            let got = pix.data()[u * 2];
            assert!((got + u as f64).abs() < 1e-9, "u={u} got {got}");
        }
    }

    #[test]
    fn rotation_matches_small_angle_series() {
        let r = [1e-6, -2e-6, 5e-7];
        let rot = Rotation::<f64>::from_axis_angle(&r);
        let p = [0.3, -0.7, 1.1];
        let q = rot.apply(&p);
        // first order: p + r x p
        let cross = [
            r[1] * p[2] - r[2] * p[1],
            r[2] * p[0] - r[0] * p[2],
            r[0] * p[1] - r[1] * p[0],
        ];
        // second-order terms are O(theta^2) ~ 5e-12
        for i in 0..3 {
            assert!((q[i] - (p[i] + cross[i])).abs() < 1e-11);
        }
    }

    #[test]
    fn warp_identity_pose_copies_source() {
        let mut rng = Rng::seed_from(8);
        let k = CameraIntrinsics::new(50.0, 50.0, 3.5, 2.5).unwrap();
        let source = Tensor::from_vec(&[2, 6, 8], (0..96).map(|_| rng.uniform()).collect()).unwrap();
        let depth = Tensor::from_vec(&[6, 8], (0..48).map(|_| 1.0 + rng.uniform() * 4.0).collect()).unwrap();
        let out = inverse_warp(&source, &depth, &Pose::identity(), &k).unwrap();
        assert!(out.mask.data().iter().all(|&m| m == 1.0));
        for (a, b) in out.image.data().iter().zip(source.data()) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn warp_constant_source_stays_constant() {
        let k = test_intrinsics();
        let source = Tensor::<f64>::full(&[1, 8, 8], 0.37);
        let depth = Tensor::<f64>::full(&[8, 8], 3.0);
        let pose = Pose::new([0.01, -0.02, 0.005], [0.02, 0.01, -0.03]);
        let out = inverse_warp(&source, &depth, &pose, &k).unwrap();
        for v in 0..8 {
            for u in 0..8 {
                if out.mask.at2(v, u) == 1.0 {
                    assert_eq!(out.image.at3(0, v, u), 0.37);
                }
            }
        }
    }

    #[test]
    fn warp_x_translation_is_integer_shift() {
        // fx * tx / depth = 50 * 0.2 / 2 = 5 pixels
        let k = CameraIntrinsics::new(50.0, 50.0, 0.0, 0.0).unwrap();
        let mut rng = Rng::seed_from(3);
        let source = Tensor::from_vec(&[1, 4, 16], (0..64).map(|_| rng.uniform()).collect()).unwrap();
        let depth = Tensor::<f64>::full(&[4, 16], 2.0);
        let pose = Pose::new([0.0; 3], [0.2, 0.0, 0.0]);
        let out = inverse_warp(&source, &depth, &pose, &k).unwrap();
        for v in 0..4 {
            for u in 0..16 {
                if u + 5 < 16 {
                    assert_eq!(out.mask.at2(v, u), 1.0);
                    let got = out.image.at3(0, v, u);
                    let want = source.at3(0, v, u + 5);
                    assert!((got - want).abs() < 1e-9, "({v},{u}): {got} vs {want}");
                } else {
                    assert_eq!(out.mask.at2(v, u), 0.0);
                }
            }
        }
    }

    #[test]
    fn warp_roundtrip_on_linear_image() {
        // bilinear sampling is exact on linear ramps, so warping by T then by
        // T^-1 reproduces the image wherever both masks are valid
        let k = CameraIntrinsics::new(60.0, 60.0, 7.5, 5.5).unwrap();
        let (h, w) = (12, 16);
        let img = Tensor::from_vec(
            &[1, h, w],
            (0..h * w).map(|i| 0.2 + 0.03 * (i % w) as f64 + 0.05 * (i / w) as f64).collect(),
        )
        .unwrap();
        let depth = Tensor::<f64>::full(&[h, w], 2.0);
        let pose = Pose::new([0.0; 3], [0.01, -0.005, 0.0]);
        let fwd = inverse_warp(&img, &depth, &pose, &k).unwrap();
        let back = inverse_warp(&fwd.image, &depth, &pose.inverse(), &k).unwrap();
        for v in 1..h - 1 {
            for u in 1..w - 1 {
                if fwd.mask.at2(v, u) == 1.0 && back.mask.at2(v, u) == 1.0 {
                    let a = back.image.at3(0, v, u);
                    let b = img.at3(0, v, u);
                    assert!((a - b).abs() < 1e-4, "({v},{u}): {a} vs {b}");
                }
            }
        }
    }

    #[test]
    fn warp_gradients_pass_gradcheck() {
        let mut rng = Rng::seed_from(12);
        let k = CameraIntrinsics::new(20.0, 22.0, 3.5, 2.5).unwrap();
        let (h, w) = (6, 8);
        // smooth source so bilinear kinks at integer crossings stay away
        let source = Tensor::from_vec(
            &[1, h, w],
            (0..h * w)
                .map(|i| {
                    let (y, x) = ((i / w) as f64, (i % w) as f64);
                    0.5 + 0.3 * (0.4 * x).sin() * (0.5 * y).cos()
                })
                .collect(),
        )
        .unwrap();
        let depth = Tensor::from_vec(&[h, w], (0..h * w).map(|_| 2.0 + rng.uniform()).collect()).unwrap();
        let pose_v = Tensor::from_vec(&[6], vec![0.011, -0.008, 0.013, 0.02, -0.015, 0.01]).unwrap();
        let inputs = [source, depth, pose_v];
        let run = |ins: &[Tensor<f64>]| -> WarpOutput<f64> {
            let pose = Pose::new(
                [ins[2].data()[0], ins[2].data()[1], ins[2].data()[2]],
                [ins[2].data()[3], ins[2].data()[4], ins[2].data()[5]],
            );
            inverse_warp(&ins[0], &ins[1], &pose, &k).unwrap()
        };
        let report = grad_check(
            |ins| run(ins).image,
            |ins, g| {
                let pose = Pose::new(
                    [ins[2].data()[0], ins[2].data()[1], ins[2].data()[2]],
                    [ins[2].data()[3], ins[2].data()[4], ins[2].data()[5]],
                );
                let grads = inverse_warp_backward(&ins[0], &ins[1], &pose, &k, g).unwrap();
                let mut pg = Vec::with_capacity(6);
                pg.extend_from_slice(&grads.d_rotation);
                pg.extend_from_slice(&grads.d_translation);
                vec![grads.d_source, grads.d_depth, Tensor::from_vec(&[6], pg).unwrap()]
            },
            &inputs,
            &GradCheckCfg { epsilon: 1e-6, ..Default::default() },
        );
        assert!(report.passes(1e-5), "{report:?}");
    }

    #[test]
    fn pose_inverse_composes_to_identity() {
        let pose = Pose::new([0.1, -0.2, 0.15], [0.3, 0.1, -0.2]);
        let inv = pose.inverse();
        let rot = Rotation::from_axis_angle(&pose.rotation);
        let rot_inv = Rotation::from_axis_angle(&inv.rotation);
        let p = [0.5, -1.0, 2.0];
        let q = rot.apply(&p);
        let q = [
            q[0] + pose.translation[0],
            q[1] + pose.translation[1],
            q[2] + pose.translation[2],
        ];
        let r = rot_inv.apply(&q);
        let r = [
            r[0] + inv.translation[0],
            r[1] + inv.translation[1],
            r[2] + inv.translation[2],
        ];
        for i in 0..3 {
            assert!((r[i] - p[i]).abs() < 1e-9);
        }
    }
}
