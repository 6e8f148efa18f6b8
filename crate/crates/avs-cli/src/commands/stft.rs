use std::path::PathBuf;

use avs_core::error::Result;
use avs_core::signal;
use avs_core::tensor::write_avst;

use crate::precision::{from_env, Precision};

#[derive(clap::Args, Debug)]
pub struct Args {
    /// Stereo 16-bit PCM WAV input.
    #[arg(long)]
    pub input: PathBuf,
    /// Output AVST tensor (2 x F x T magnitudes).
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = avs_core::dataio::DEFAULT_N_FFT)]
    pub n_fft: usize,
    #[arg(long, default_value_t = avs_core::dataio::DEFAULT_HOP)]
    pub hop: usize,
}

pub fn run(args: &Args) -> Result<Vec<PathBuf>> {
    let clip = signal::read_wav(&args.input)?;
    let spec = signal::compute_stft(&clip, args.n_fft, args.hop)?;
    match from_env()? {
        Precision::F32 => write_avst(&args.out, &spec.mag.cast::<f32>())?,
        Precision::F64 => write_avst(&args.out, &spec.mag)?,
    }
    Ok(vec![args.out.clone()])
}
