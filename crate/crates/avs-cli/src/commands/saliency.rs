use std::path::PathBuf;

use avs_core::avsnet::train::{load_avsnet, saliency};
use avs_core::dataio::load_dataset;
use avs_core::error::Result;
use avs_core::signal;
use avs_core::tensor::{write_avst, Scalar};

use crate::precision::{from_env, Precision};

#[derive(clap::Args, Debug)]
pub struct Args {
    /// Trained avsnet checkpoint directory.
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub scene: usize,
    #[arg(long, default_value_t = 0)]
    pub frame: usize,
    /// Output prefix: <prefix>.profile.txt and <prefix>.map.avst.
    #[arg(long)]
    pub out: PathBuf,
}

fn run_typed<T: Scalar>(args: &Args) -> Result<Vec<PathBuf>> {
    let mut model = load_avsnet::<T>(&args.checkpoint)?;
    let ds = load_dataset(&args.data)?;
    let s = ds.load_sample(args.scene, args.frame)?;
    let (n_fft, hop) = super::infer::stft_params(&args.checkpoint);
    let spec = signal::compute_stft(&s.echo, n_fft, hop)?;
    let (profile, map) = saliency(&mut model, &s.rgb.cast(), &spec.mag.cast())?;

    let profile_path = PathBuf::from(format!("{}.profile.txt", args.out.display()));
    let mut text = String::new();
    for v in &profile {
        text.push_str(&format!("{v}\n"));
    }
    std::fs::write(&profile_path, text)?;
    let map_path = PathBuf::from(format!("{}.map.avst", args.out.display()));
    write_avst(&map_path, &map)?;

    let argmax = profile
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.partial_cmp(b.1).expect("finite saliency"))
        .map(|(i, _)| i)
        .unwrap_or(0);
    println!("saliency argmax frame: {argmax}");
    Ok(vec![profile_path, map_path])
}

pub fn run(args: &Args) -> Result<Vec<PathBuf>> {
    match from_env()? {
        Precision::F32 => run_typed::<f32>(args),
        Precision::F64 => run_typed::<f64>(args),
    }
}
