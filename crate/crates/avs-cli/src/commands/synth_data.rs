use std::path::PathBuf;

use avs_core::dataio::synth::{synth_ambiguous_pair, synth_scene, SceneSpec};
use avs_core::dataio::{export_dataset, sample_id, SceneSample, SplitManifest};
use avs_core::error::Result;
use avs_core::rng::Rng;

use super::{load_config, parse_f64_list};

#[derive(Debug, Clone, clap::ValueEnum)]
pub enum Kind {
    /// Textured corridors with forward camera motion.
    Corridor,
    /// Single fronto-parallel walls at the listed distances, identical RGB.
    Walls,
    /// Two scenes with identical RGB whose geometry differs by --scale.
    Ambiguous,
}

#[derive(clap::Args, Debug)]
pub struct Args {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 3)]
    pub scenes: usize,
    #[arg(long, default_value_t = 50)]
    pub frames: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_enum, default_value_t = Kind::Corridor)]
    pub kind: Kind,
    /// Geometry factor for the ambiguous pair.
    #[arg(long, default_value_t = 2.0)]
    pub scale: f64,
    /// Wall distances in meters for --kind walls.
    #[arg(long, default_value = "1,2,3,4,5,6")]
    pub distances: String,
    #[arg(long)]
    pub config: Option<PathBuf>,
}

fn base_spec(cfg: &avs_core::dataio::config::Config) -> Result<SceneSpec> {
    let h = cfg.usize_or("data.height", 64)?;
    let w = cfg.usize_or("data.width", 128)?;
    let mut spec = SceneSpec::default_for(h, w);
    spec.end_wall = cfg.f64_or("scene.end_wall", spec.end_wall)?;
    spec.half_width = cfg.f64_or("scene.half_width", spec.half_width)?;
    spec.frame_step = cfg.f64_or("scene.frame_step", spec.frame_step)?;
    spec.tex_freq = cfg.f64_or("scene.tex_freq", spec.tex_freq)?;
    spec.echo_noise_std = cfg.f64_or("scene.echo_noise_std", spec.echo_noise_std)?;
    Ok(spec)
}

pub fn run(args: &Args) -> Result<Vec<PathBuf>> {
    let cfg = load_config(args.config.as_deref())?;
    let base = base_spec(&cfg)?;
    let mut samples: Vec<SceneSample> = Vec::new();
    let mut manifest = SplitManifest::default();

    match args.kind {
        Kind::Corridor => {
            let mut rng = Rng::seed_from(args.seed).derive("synth-data");
            for scene in 0..args.scenes {
                let spec = SceneSpec {
                    n_frames: args.frames,
                    end_wall: base.end_wall * rng.uniform_in(0.85, 1.25),
                    half_width: base.half_width * rng.uniform_in(0.8, 1.2),
                    tex_freq: base.tex_freq * rng.uniform_in(0.8, 1.3),
                    ..base.clone()
                };
                let scene_seed = rng.next_u64();
                for mut s in synth_scene(&spec, scene_seed)? {
                    s.scene_id = scene;
                    let id = sample_id(scene, s.frame_index);
                    match scene % 5 {
                        3 => manifest.val.push(id),
                        4 => manifest.test.push(id),
                        _ => manifest.train.push(id),
                    }
                    samples.push(s);
                }
            }
        }
        Kind::Walls => {
            let distances = parse_f64_list(&args.distances, "distances")?;
            for (i, &d) in distances.iter().enumerate() {
                // canonical 1 m wall scaled to d: identical RGB across the set
                let spec = SceneSpec {
                    n_frames: 1,
                    end_wall: 1.0,
                    half_width: 5.0,
                    max_reflectors: 1,
                    scene_scale: d,
                    ..base.clone()
                };
                let mut s = synth_scene(&spec, args.seed)?.remove(0);
                s.scene_id = i;
                manifest.train.push(sample_id(i, 0));
                samples.push(s);
            }
        }
        Kind::Ambiguous => {
            let (a, b) = synth_ambiguous_pair(&base, args.scale, args.seed)?;
            manifest.train.push(sample_id(a.scene_id, a.frame_index));
            manifest.train.push(sample_id(b.scene_id, b.frame_index));
            samples.push(a);
            samples.push(b);
        }
    }

    export_dataset(&args.out, &samples, &manifest)?;
    Ok(vec![args.out.clone()])
}
