use std::path::{Path, PathBuf};

use avs_core::avsnet::train::load_avsnet;
use avs_core::checkpoint;
use avs_core::dataio::{load_dataset, Dataset};
use avs_core::error::{Error, Result};
use avs_core::selfsup::train::{load_selfsup, predict_relative_depth};
use avs_core::signal;
use avs_core::tensor::{write_avst, Scalar};

use super::parse_split;
use crate::precision::{from_env, Precision};

#[derive(clap::Args, Debug)]
pub struct Args {
    /// Checkpoint directory written by train-avsnet or train-relative.
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, default_value = "test")]
    pub split: String,
    /// Output directory of per-sample depth AVST tensors.
    #[arg(long)]
    pub out: PathBuf,
}

pub fn stft_params(dir: &Path) -> (usize, usize) {
    match avs_core::dataio::config::Config::from_file(&dir.join("pipeline.ini")) {
        Ok(cfg) => (
            cfg.usize_or("stft.n_fft", avs_core::dataio::DEFAULT_N_FFT).unwrap_or(avs_core::dataio::DEFAULT_N_FFT),
            cfg.usize_or("stft.hop", avs_core::dataio::DEFAULT_HOP).unwrap_or(avs_core::dataio::DEFAULT_HOP),
        ),
        Err(_) => (avs_core::dataio::DEFAULT_N_FFT, avs_core::dataio::DEFAULT_HOP),
    }
}

fn run_typed<T: Scalar>(args: &Args, ds: &Dataset, kind: &str) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(&args.out)?;
    let entries = ds.entries_for(parse_split(&args.split)?);
    if entries.is_empty() {
        return Err(Error::Degenerate(format!("split {} is empty", args.split)));
    }
    let mut artifacts = Vec::new();
    match kind {
        "avsnet" => {
            let model = load_avsnet::<T>(&args.checkpoint)?;
            let (n_fft, hop) = stft_params(&args.checkpoint);
            for (scene, frame) in entries {
                let s = ds.load_sample(scene, frame)?;
                let spec_t;
                let spec = if model.cfg.use_audio {
                    let spec = signal::compute_stft(&s.echo, n_fft, hop)?;
                    spec_t = spec.mag.cast::<T>();
                    Some(&spec_t)
                } else {
                    None
                };
                let fwd = model.forward(&s.rgb.cast(), spec)?;
                let path = args.out.join(format!("scene_{scene:04}_frame_{frame:05}.avst"));
                write_avst(&path, &fwd.depth)?;
                artifacts.push(path);
            }
        }
        "relative" => {
            let (depthnet, _posenet) = load_selfsup::<T>(&args.checkpoint)?;
            for (scene, frame) in entries {
                let s = ds.load_sample(scene, frame)?;
                let depth = predict_relative_depth(&depthnet, &s.rgb.cast())?;
                let path = args.out.join(format!("scene_{scene:04}_frame_{frame:05}.avst"));
                write_avst(&path, &depth)?;
                artifacts.push(path);
            }
        }
        other => {
            return Err(Error::Format(format!("cannot infer with checkpoint kind {other}")));
        }
    }
    Ok(artifacts)
}

pub fn run(args: &Args) -> Result<Vec<PathBuf>> {
    let ck = checkpoint::load(&args.checkpoint)?;
    let ds = load_dataset(&args.data)?;
    match from_env()? {
        Precision::F32 => run_typed::<f32>(args, &ds, &ck.kind),
        Precision::F64 => run_typed::<f64>(args, &ds, &ck.kind),
    }
}
