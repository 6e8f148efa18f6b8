//! Procedural corridor scenes: ray-cast planar geometry with value-noise
//! textures, analytic depth, and parametric binaural echoes.
//!
//! Texture lookups always use canonical (unscaled) coordinates, so two
//! scenes that differ only in `scene_scale` render bit-identical RGB while
//! their depth maps and echoes carry the true metric scale. That is the
//! construction behind the scale-ambiguous pairs.

use crate::error::{Error, Result};
use crate::geometry::{CameraIntrinsics, Pose};
use crate::signal::{self, EchoClip, Reflector};
use crate::tensor::Tensor;

use super::SceneSample;

#[derive(Debug, Clone)]
pub struct SceneSpec {
    pub width: usize,
    pub height: usize,
    /// Canonical distance from the world origin to the end wall, meters.
    pub end_wall: f64,
    /// Canonical corridor half width, meters.
    pub half_width: f64,
    /// Camera advance along +z per frame, canonical meters.
    pub frame_step: f64,
    pub n_frames: usize,
    /// Texture frequency in cycles per canonical meter.
    pub tex_freq: f64,
    /// Uniform metric scale applied to depth and echoes (not to RGB).
    pub scene_scale: f64,
    /// Gaussian noise added to the rendered echoes.
    pub echo_noise_std: f64,
    /// Keep this many most prominent reflectors.
    pub max_reflectors: usize,
    pub chirp_f_start: f64,
    pub chirp_f_end: f64,
    pub chirp_duration: f64,
    pub sample_rate: u32,
}

impl SceneSpec {
    pub fn default_for(height: usize, width: usize) -> Self {
        Self {
            width,
            height,
            end_wall: 5.0,
            half_width: 1.5,
            frame_step: 0.05,
            n_frames: 1,
            tex_freq: 1.7,
            scene_scale: 1.0,
            echo_noise_std: 0.0,
            max_reflectors: 3,
            chirp_f_start: 20.0,
            chirp_f_end: 20_000.0,
            chirp_duration: 0.01,
            sample_rate: signal::DEFAULT_SAMPLE_RATE,
        }
    }

    pub fn intrinsics(&self) -> CameraIntrinsics {
        let f = 0.86 * self.width as f64;
        CameraIntrinsics {
            fx: f,
            fy: f,
            cx: (self.width as f64 - 1.0) / 2.0,
            cy: (self.height as f64 - 1.0) / 2.0,
        }
    }
}

fn splitmix(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

fn lattice(ix: i64, iy: i64, seed: u64) -> f64 {
    let h = splitmix((ix as u64).wrapping_mul(0x8646_5fcd).wrapping_add((iy as u64) << 32) ^ seed);
    (h >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

fn smoothstep(t: f64) -> f64 {
    t * t * (3.0 - 2.0 * t)
}

/// Bilinear value noise over a seeded integer lattice, output in [0, 1).
pub fn value_noise(x: f64, y: f64, seed: u64) -> f64 {
    let (fx, fy) = (x.floor(), y.floor());
    let (ix, iy) = (fx as i64, fy as i64);
    let (tx, ty) = (smoothstep(x - fx), smoothstep(y - fy));
    let v00 = lattice(ix, iy, seed);
    let v01 = lattice(ix + 1, iy, seed);
    let v10 = lattice(ix, iy + 1, seed);
    let v11 = lattice(ix + 1, iy + 1, seed);
    let top = v00 + tx * (v01 - v00);
    let bot = v10 + tx * (v11 - v10);
    top + ty * (bot - top)
}

/// Two-octave value noise modulated with a seeded sinusoidal band pattern.
fn banded_texture(u: f64, v: f64, freq: f64, seed: u64) -> f64 {
    let n1 = value_noise(u * freq, v * freq, seed);
    let n2 = value_noise(u * freq * 2.3 + 13.7, v * freq * 2.3 - 4.1, splitmix(seed ^ 0xabcd));
    let phase = (splitmix(seed ^ 0x5a5a) >> 40) as f64 * 1e-3;
    let band = 0.5 + 0.5 * (2.0 * std::f64::consts::PI * (u * freq * 0.8 + 0.35 * v * freq) + phase).sin();
    let t = 0.45 * n1 + 0.3 * n2 + 0.25 * band;
    0.1 + 0.8 * t.clamp(0.0, 1.0)
}

enum Hit {
    EndWall { x: f64, y: f64 },
    SideWall { z: f64, y: f64, right: bool },
}

/// Casts one pixel ray from canonical camera z; returns (z-depth, hit).
fn cast_ray(dx: f64, dy: f64, cam_z: f64, spec: &SceneSpec) -> (f64, Hit) {
    let t_end = spec.end_wall - cam_z;
    // side walls x = +/- half_width; the ray x(t) = dx * t
    let t_side = if dx.abs() > 1e-12 { spec.half_width / dx.abs() } else { f64::INFINITY };
    if t_side < t_end {
        let z = cam_z + t_side;
        let y = dy * t_side;
        (t_side, Hit::SideWall { z, y, right: dx > 0.0 })
    } else {
        let x = dx * t_end;
        let y = dy * t_end;
        (t_end, Hit::EndWall { x, y })
    }
}

/// Reflectors for the camera at canonical z, in canonical meters.
fn reflectors_at(cam_z: f64, spec: &SceneSpec) -> Vec<Reflector> {
    let mut all = vec![
        Reflector { distance: spec.end_wall - cam_z, azimuth: 0.0, strength: 0.9 },
        Reflector {
            distance: spec.half_width,
            azimuth: -std::f64::consts::FRAC_PI_2,
            strength: 0.45,
        },
        Reflector {
            distance: spec.half_width,
            azimuth: std::f64::consts::FRAC_PI_2,
            strength: 0.45,
        },
    ];
    all.sort_by(|a, b| {
        let pa = a.strength / (a.distance * a.distance);
        let pb = b.strength / (b.distance * b.distance);
        pb.partial_cmp(&pa).expect("finite prominence")
    });
    all.truncate(spec.max_reflectors.max(1));
    all
}

/// Renders the frames of one corridor scene. Depth and echoes carry
/// `scene_scale`; RGB is canonical.
pub fn synth_scene(spec: &SceneSpec, seed: u64) -> Result<Vec<SceneSample>> {
    if spec.n_frames < 1 {
        return Err(Error::InvalidArgument("scene needs at least one frame".into()));
    }
    if spec.end_wall <= 0.3 + spec.frame_step * (spec.n_frames - 1) as f64 {
        return Err(Error::InvalidArgument(format!(
            "camera path reaches the end wall: end_wall {} too close for {} frames of step {}",
            spec.end_wall, spec.n_frames, spec.frame_step
        )));
    }
    if spec.half_width <= 0.0 || spec.scene_scale <= 0.0 {
        return Err(Error::InvalidArgument("half_width and scene_scale must be positive".into()));
    }
    let k = spec.intrinsics();
    let chirp =
        signal::gen_chirp(spec.chirp_f_start, spec.chirp_f_end, spec.chirp_duration, spec.sample_rate)?;
    let tex_seed = splitmix(seed ^ 0x7ea5_11ce);
    let (h, w) = (spec.height, spec.width);
    let mut out = Vec::with_capacity(spec.n_frames);
    for frame in 0..spec.n_frames {
        let cam_z = frame as f64 * spec.frame_step;
        let mut rgb = Tensor::<f64>::zeros(&[3, h, w]);
        let mut depth = Tensor::<f64>::zeros(&[h, w]);
        for py in 0..h {
            for px in 0..w {
                let dx = (px as f64 - k.cx) / k.fx;
                let dy = (py as f64 - k.cy) / k.fy;
                let (t, hit) = cast_ray(dx, dy, cam_z, spec);
                depth.data_mut()[py * w + px] = t * spec.scene_scale;
                let (u, v, wall) = match hit {
                    Hit::EndWall { x, y } => (x, y, 0u64),
                    Hit::SideWall { z, y, right } => (z, y, if right { 1 } else { 2 }),
                };
                for c in 0..3 {
                    let s = splitmix(tex_seed ^ (wall << 8) ^ (c as u64));
                    rgb.set3(c, py, px, banded_texture(u, v, spec.tex_freq, s));
                }
            }
        }
        let reflectors: Vec<Reflector> = reflectors_at(cam_z, spec)
            .into_iter()
            .map(|r| Reflector { distance: r.distance * spec.scene_scale, ..r })
            .collect();
        let echo_seed = splitmix(seed ^ ((frame as u64) << 16) ^ 0xec40);
        let (echo, _warnings) =
            signal::render_echo(&chirp, &reflectors, spec.echo_noise_std, echo_seed, spec.sample_rate)?;
        out.push(SceneSample {
            rgb,
            depth_gt: depth,
            echo,
            intrinsics: k,
            pose_world: Pose::new([0.0; 3], [0.0, 0.0, cam_z * spec.scene_scale]),
            scene_id: 0,
            frame_index: frame,
        });
    }
    Ok(out)
}

/// Two single-frame scenes with byte-identical RGB whose geometry differs by
/// exactly `scale`: the echoes are the only cue separating them.
pub fn synth_ambiguous_pair(
    base: &SceneSpec,
    scale: f64,
    seed: u64,
) -> Result<(SceneSample, SceneSample)> {
    if scale <= 1.0 {
        return Err(Error::InvalidArgument(format!("pair scale must exceed 1, got {scale}")));
    }
    let mut spec_a = base.clone();
    spec_a.n_frames = 1;
    let mut spec_b = spec_a.clone();
    spec_b.scene_scale = base.scene_scale * scale;
    let a = synth_scene(&spec_a, seed)?.remove(0);
    let mut b = synth_scene(&spec_b, seed)?.remove(0);
    b.scene_id = 1;
    Ok((a, b))
}

/// STFT of a sample's echo with the artifact's default parameters.
pub fn default_spectrogram(clip: &EchoClip) -> Result<signal::Spectrogram> {
    signal::compute_stft(clip, super::DEFAULT_N_FFT, super::DEFAULT_HOP)
}
