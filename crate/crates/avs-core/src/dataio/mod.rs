//! Dataset handling: the on-disk recording layout (per-scene directories of
//! RGB, 16-bit depth, and stereo WAV), split manifests, frame-triple
//! construction, and the procedural synthetic scene generator.

pub mod config;
pub mod synth;

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use image::{ImageReader, Rgb, RgbImage};

use crate::error::{Error, Result};
use crate::geometry::{CameraIntrinsics, Pose};
use crate::signal::{self, EchoClip};
use crate::tensor::Tensor;

use config::Config;

/// Default STFT parameters used across the pipeline.
pub const DEFAULT_N_FFT: usize = 512;
pub const DEFAULT_HOP: usize = 128;

/// One synchronized RGB-D-echo observation.
#[derive(Debug, Clone)]
pub struct SceneSample {
    /// 3 x H x W in [0, 1].
    pub rgb: Tensor<f64>,
    /// H x W meters; 0 marks invalid pixels.
    pub depth_gt: Tensor<f64>,
    pub echo: EchoClip,
    pub intrinsics: CameraIntrinsics,
    pub pose_world: Pose<f64>,
    pub scene_id: usize,
    pub frame_index: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }

    fn parse(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "val" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            other => Err(Error::Format(format!("unknown split {other}"))),
        }
    }
}

/// Disjoint train/val/test sample id lists.
#[derive(Debug, Clone, Default)]
pub struct SplitManifest {
    pub train: Vec<String>,
    pub val: Vec<String>,
    pub test: Vec<String>,
}

impl SplitManifest {
    pub fn render(&self) -> String {
        let mut out = String::new();
        for (split, ids) in
            [("train", &self.train), ("val", &self.val), ("test", &self.test)]
        {
            for id in ids {
                out.push_str(split);
                out.push(' ');
                out.push_str(id);
                out.push('\n');
            }
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut m = SplitManifest::default();
        let mut seen = std::collections::HashSet::new();
        for line in text.lines() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (split, id) = line
                .split_once(' ')
                .ok_or_else(|| Error::Format(format!("bad manifest line: {line}")))?;
            if !seen.insert(id.to_string()) {
                return Err(Error::Format(format!("sample {id} appears in two splits")));
            }
            match Split::parse(split)? {
                Split::Train => m.train.push(id.to_string()),
                Split::Val => m.val.push(id.to_string()),
                Split::Test => m.test.push(id.to_string()),
            }
        }
        Ok(m)
    }
}

// ---------------------------------------------------------------------------
// frame triples
// ---------------------------------------------------------------------------

/// Indices into the input list forming a (t - interval, t, t + interval)
/// triple within a single scene. Frames must carry their scene id and a
/// per-scene frame index.
pub fn make_triples(frames: &[(usize, usize)], interval: usize) -> Result<Vec<[usize; 3]>> {
    if interval < 1 {
        return Err(Error::InvalidArgument("triple interval must be >= 1".into()));
    }
    // per scene: frame_index -> position in the input list
    let mut by_scene: BTreeMap<usize, BTreeMap<usize, usize>> = BTreeMap::new();
    for (pos, &(scene, frame)) in frames.iter().enumerate() {
        by_scene.entry(scene).or_default().insert(frame, pos);
    }
    let mut out = Vec::new();
    for index in by_scene.values() {
        for (&frame, &pos) in index {
            let (Some(&prev), Some(&next)) = (
                frame.checked_sub(interval).and_then(|f| index.get(&f)),
                index.get(&(frame + interval)),
            ) else {
                continue;
            };
            out.push([prev, pos, next]);
        }
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// export / load (recording-compatible directory layout)
// ---------------------------------------------------------------------------

pub fn sample_id(scene: usize, frame: usize) -> String {
    format!("scene_{scene:04}/frame_{frame:05}")
}

fn rgb_to_png(rgb: &Tensor<f64>) -> RgbImage {
    let (h, w) = (rgb.shape()[1], rgb.shape()[2]);
    let mut img = RgbImage::new(w as u32, h as u32);
    for y in 0..h {
        for x in 0..w {
            let px = Rgb([
                (rgb.at3(0, y, x).clamp(0.0, 1.0) * 255.0).round() as u8,
                (rgb.at3(1, y, x).clamp(0.0, 1.0) * 255.0).round() as u8,
                (rgb.at3(2, y, x).clamp(0.0, 1.0) * 255.0).round() as u8,
            ]);
            img.put_pixel(x as u32, y as u32, px);
        }
    }
    img
}

/// Depth is stored as 16-bit grayscale PNG in millimeters.
fn depth_to_png(depth: &Tensor<f64>) -> image::ImageBuffer<image::Luma<u16>, Vec<u16>> {
    let (h, w) = (depth.shape()[0], depth.shape()[1]);
    let mut img = image::ImageBuffer::new(w as u32, h as u32);
    for y in 0..h {
        for x in 0..w {
            let mm = (depth.at2(y, x).max(0.0) * 1000.0).round().min(u16::MAX as f64) as u16;
            img.put_pixel(x as u32, y as u32, image::Luma([mm]));
        }
    }
    img
}

/// Writes samples under `root` as `scene_XXXX/frame_YYYYY.{png,depth.png,wav}`
/// plus `intrinsics.ini` and `split.manifest`.
pub fn export_dataset(root: &Path, samples: &[SceneSample], manifest: &SplitManifest) -> Result<()> {
    if samples.is_empty() {
        return Err(Error::InvalidArgument("nothing to export".into()));
    }
    fs::create_dir_all(root)?;
    let k = samples[0].intrinsics;
    let mut cfg = Config::default();
    cfg.set("camera.fx", k.fx);
    cfg.set("camera.fy", k.fy);
    cfg.set("camera.cx", k.cx);
    cfg.set("camera.cy", k.cy);
    cfg.write_file(&root.join("intrinsics.ini"))?;
    fs::write(root.join("split.manifest"), manifest.render())?;
    for s in samples {
        let dir = root.join(format!("scene_{:04}", s.scene_id));
        fs::create_dir_all(&dir)?;
        let stem = format!("frame_{:05}", s.frame_index);
        rgb_to_png(&s.rgb)
            .save(dir.join(format!("{stem}.png")))
            .map_err(|e| Error::Format(format!("png write: {e}")))?;
        depth_to_png(&s.depth_gt)
            .save(dir.join(format!("{stem}.depth.png")))
            .map_err(|e| Error::Format(format!("depth png write: {e}")))?;
        signal::write_wav(&dir.join(format!("{stem}.wav")), &s.echo)?;
    }
    Ok(())
}

/// A lazily-loading handle over the directory layout.
pub struct Dataset {
    pub root: PathBuf,
    pub intrinsics: CameraIntrinsics,
    pub manifest: SplitManifest,
    /// (scene_id, frame_index) for every sample found on disk.
    pub entries: Vec<(usize, usize)>,
    /// Diagnostics collected while scanning (missing files, count mismatches).
    pub warnings: Vec<String>,
}

impl Dataset {
    pub fn entries_for(&self, split: Split) -> Vec<(usize, usize)> {
        let ids: &[String] = match split {
            Split::Train => &self.manifest.train,
            Split::Val => &self.manifest.val,
            Split::Test => &self.manifest.test,
        };
        let have: std::collections::HashSet<String> =
            self.entries.iter().map(|&(s, f)| sample_id(s, f)).collect();
        ids.iter()
            .filter(|id| have.contains(*id))
            .filter_map(|id| parse_sample_id(id))
            .collect()
    }

    pub fn load_sample(&self, scene: usize, frame: usize) -> Result<SceneSample> {
        let dir = self.root.join(format!("scene_{scene:04}"));
        let stem = format!("frame_{frame:05}");
        let rgb_img = ImageReader::open(dir.join(format!("{stem}.png")))
            .map_err(|e| Error::Format(format!("rgb open: {e}")))?
            .decode()
            .map_err(|e| Error::Format(format!("rgb decode: {e}")))?
            .to_rgb8();
        let (w, h) = (rgb_img.width() as usize, rgb_img.height() as usize);
        let mut rgb = Tensor::<f64>::zeros(&[3, h, w]);
        for y in 0..h {
            for x in 0..w {
                let px = rgb_img.get_pixel(x as u32, y as u32);
                for c in 0..3 {
                    rgb.set3(c, y, x, px.0[c] as f64 / 255.0);
                }
            }
        }
        let depth_img = ImageReader::open(dir.join(format!("{stem}.depth.png")))
            .map_err(|e| Error::Format(format!("depth open: {e}")))?
            .decode()
            .map_err(|e| Error::Format(format!("depth decode: {e}")))?
            .to_luma16();
        if depth_img.width() as usize != w || depth_img.height() as usize != h {
            return Err(Error::Format(format!(
                "depth resolution {}x{} does not match rgb {}x{}",
                depth_img.width(),
                depth_img.height(),
                w,
                h
            )));
        }
        let mut depth = Tensor::<f64>::zeros(&[h, w]);
        for y in 0..h {
            for x in 0..w {
                depth.data_mut()[y * w + x] =
                    depth_img.get_pixel(x as u32, y as u32).0[0] as f64 / 1000.0;
            }
        }
        let echo = signal::read_wav(&dir.join(format!("{stem}.wav")))?;
        Ok(SceneSample {
            rgb,
            depth_gt: depth,
            echo,
            intrinsics: self.intrinsics,
            pose_world: Pose::identity(),
            scene_id: scene,
            frame_index: frame,
        })
    }
}

fn parse_sample_id(id: &str) -> Option<(usize, usize)> {
    let (scene, frame) = id.split_once('/')?;
    let scene = scene.strip_prefix("scene_")?.parse().ok()?;
    let frame = frame.strip_prefix("frame_")?.parse().ok()?;
    Some((scene, frame))
}

/// Scans a dataset directory. Samples with missing or unparsable files are
/// skipped with a recorded diagnostic; a manifest entry without a matching
/// sample produces a warning. An empty directory yields an empty dataset.
pub fn load_dataset(root: &Path) -> Result<Dataset> {
    let intrinsics = match Config::from_file(&root.join("intrinsics.ini")) {
        Ok(cfg) => CameraIntrinsics {
            fx: cfg.f64_or("camera.fx", 100.0)?,
            fy: cfg.f64_or("camera.fy", 100.0)?,
            cx: cfg.f64_or("camera.cx", 0.0)?,
            cy: cfg.f64_or("camera.cy", 0.0)?,
        },
        Err(_) => CameraIntrinsics { fx: 100.0, fy: 100.0, cx: 0.0, cy: 0.0 },
    };
    let manifest = match fs::read_to_string(root.join("split.manifest")) {
        Ok(text) => SplitManifest::parse(&text)?,
        Err(_) => SplitManifest::default(),
    };
    let mut entries = Vec::new();
    let mut warnings = Vec::new();
    let mut scene_dirs: Vec<PathBuf> = Vec::new();
    if root.exists() {
        for entry in fs::read_dir(root)? {
            let entry = entry?;
            let name = entry.file_name().to_string_lossy().to_string();
            if entry.path().is_dir() && name.starts_with("scene_") {
                scene_dirs.push(entry.path());
            }
        }
    }
    scene_dirs.sort();
    for dir in scene_dirs {
        let scene: usize = match dir
            .file_name()
            .and_then(|n| n.to_str())
            .and_then(|n| n.strip_prefix("scene_"))
            .and_then(|n| n.parse().ok())
        {
            Some(s) => s,
            None => continue,
        };
        let mut frames: Vec<usize> = Vec::new();
        for f in fs::read_dir(&dir)? {
            let name = f?.file_name().to_string_lossy().to_string();
            if let Some(stem) = name.strip_suffix(".png") {
                if stem.ends_with(".depth") {
                    continue;
                }
                if let Some(frame) = stem.strip_prefix("frame_").and_then(|s| s.parse().ok()) {
                    frames.push(frame);
                }
            }
        }
        frames.sort_unstable();
        for frame in frames {
            let stem = format!("frame_{frame:05}");
            let depth_ok = dir.join(format!("{stem}.depth.png")).exists();
            let wav_ok = dir.join(format!("{stem}.wav")).exists();
            if depth_ok && wav_ok {
                entries.push((scene, frame));
            } else {
                warnings.push(format!(
                    "{}: skipped (depth present: {depth_ok}, wav present: {wav_ok})",
                    sample_id(scene, frame)
                ));
            }
        }
    }
    let have: std::collections::HashSet<String> =
        entries.iter().map(|&(s, f)| sample_id(s, f)).collect();
    for id in manifest.train.iter().chain(&manifest.val).chain(&manifest.test) {
        if !have.contains(id) {
            warnings.push(format!("manifest references absent sample {id}"));
        }
    }
    Ok(Dataset { root: root.to_path_buf(), intrinsics, manifest, entries, warnings })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn triples_count_and_boundaries() {
        // a 100-frame scene at interval 20 yields 60 triples (t in [20, 79])
        let frames: Vec<(usize, usize)> = (0..100).map(|f| (0, f)).collect();
        let triples = make_triples(&frames, 20).unwrap();
        assert_eq!(triples.len(), 60);
        assert_eq!(triples[0], [0, 20, 40]);
        assert_eq!(triples[59], [59, 79, 99]);

        // 40 frames cannot host a single interval-20 triple
        let frames: Vec<(usize, usize)> = (0..40).map(|f| (0, f)).collect();
        assert!(make_triples(&frames, 20).unwrap().is_empty());
        assert!(make_triples(&frames, 0).is_err());
    }

    #[test]
    fn triples_never_cross_scene_boundaries() {
        // two scenes of 50 frames each, exhaustive check
        let mut frames = Vec::new();
        for f in 0..50 {
            frames.push((0usize, f));
        }
        for f in 0..50 {
            frames.push((1usize, f));
        }
        let triples = make_triples(&frames, 20).unwrap();
        assert_eq!(triples.len(), 2 * 10);
        for [a, b, c] in triples {
            assert_eq!(frames[a].0, frames[b].0);
            assert_eq!(frames[b].0, frames[c].0);
        }
    }

    #[test]
    fn split_manifest_roundtrip_and_disjointness() {
        let m = SplitManifest {
            train: vec![sample_id(0, 0), sample_id(0, 1)],
            val: vec![sample_id(1, 0)],
            test: vec![sample_id(2, 0)],
        };
        let back = SplitManifest::parse(&m.render()).unwrap();
        assert_eq!(back.train, m.train);
        assert_eq!(back.val, m.val);
        assert_eq!(back.test, m.test);
        assert!(SplitManifest::parse("train a/b\nval a/b\n").is_err());
    }

    #[test]
    fn export_then_load_roundtrips_within_quantization() {
        let spec = synth::SceneSpec { n_frames: 2, ..synth::SceneSpec::default_for(32, 32) };
        let samples = synth::synth_scene(&spec, 21).unwrap();
        let manifest = SplitManifest {
            train: vec![sample_id(0, 0)],
            val: vec![],
            test: vec![sample_id(0, 1)],
        };
        let dir = tempfile::tempdir().unwrap();
        export_dataset(dir.path(), &samples, &manifest).unwrap();
        let ds = load_dataset(dir.path()).unwrap();
        assert_eq!(ds.entries.len(), 2);
        assert!(ds.warnings.is_empty(), "{:?}", ds.warnings);
        assert_eq!(ds.entries_for(Split::Train), vec![(0, 0)]);
        let back = ds.load_sample(0, 0).unwrap();
        // depth quantized to 1 mm
        for (a, b) in back.depth_gt.data().iter().zip(samples[0].depth_gt.data()) {
            assert!((a - b).abs() <= 0.0005 + 1e-9, "{a} vs {b}");
        }
        // rgb quantized to 8 bits
        for (a, b) in back.rgb.data().iter().zip(samples[0].rgb.data()) {
            assert!((a - b).abs() <= 0.5 / 255.0 + 1e-9);
        }
        // audio quantized to 16 bits
        for (a, b) in back.echo.left.iter().zip(&samples[0].echo.left) {
            assert!((a - b).abs() <= 0.5 / 32767.0 + 1e-9);
        }
        assert!((back.intrinsics.fx - samples[0].intrinsics.fx).abs() < 1e-9);
    }

    #[test]
    fn empty_directory_is_an_empty_dataset() {
        let dir = tempfile::tempdir().unwrap();
        let ds = load_dataset(dir.path()).unwrap();
        assert!(ds.entries.is_empty());
    }

    #[test]
    fn missing_files_are_skipped_with_warnings() {
        let spec = synth::SceneSpec { n_frames: 2, ..synth::SceneSpec::default_for(32, 32) };
        let samples = synth::synth_scene(&spec, 3).unwrap();
        let manifest = SplitManifest {
            train: vec![sample_id(0, 0), sample_id(0, 1), sample_id(9, 9)],
            ..Default::default()
        };
        let dir = tempfile::tempdir().unwrap();
        export_dataset(dir.path(), &samples, &manifest).unwrap();
        fs::remove_file(dir.path().join("scene_0000/frame_00001.wav")).unwrap();
        let ds = load_dataset(dir.path()).unwrap();
        assert_eq!(ds.entries, vec![(0, 0)]);
        // one skip diagnostic plus two manifest entries without samples
        assert_eq!(ds.warnings.len(), 3, "{:?}", ds.warnings);
        // manifest entry referencing the absent sample is excluded
        assert_eq!(ds.entries_for(Split::Train), vec![(0, 0)]);
    }
}
