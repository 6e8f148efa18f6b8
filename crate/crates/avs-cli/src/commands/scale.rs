use std::path::PathBuf;

use avs_core::error::{Error, Result};
use avs_core::scaling::{meanstd_scale, median_scale};
use avs_core::tensor::{read_avst, write_avst, LoadedTensor, Tensor};

#[derive(Debug, Clone, clap::ValueEnum)]
pub enum Method {
    Median,
    Meanstd,
}

#[derive(clap::Args, Debug)]
pub struct Args {
    /// Relative depth tensor (AVST).
    #[arg(long)]
    pub relative: PathBuf,
    /// Pseudo-dense metric depth tensor (AVST) supplying the scale.
    #[arg(long)]
    pub pseudo: PathBuf,
    #[arg(long, value_enum, default_value_t = Method::Median)]
    pub method: Method,
    /// Output tensor path; the factor record lands next to it.
    #[arg(long)]
    pub out: PathBuf,
}

pub fn run(args: &Args) -> Result<Vec<PathBuf>> {
    let rel_loaded = read_avst(&args.relative)?;
    let rel: Tensor<f64> = rel_loaded.cast();
    let pseudo: Tensor<f64> = read_avst(&args.pseudo)?.cast();
    if rel.shape() != pseudo.shape() {
        return Err(Error::InvalidArgument(format!(
            "relative {:?} and pseudo {:?} shapes differ",
            rel.shape(),
            pseudo.shape()
        )));
    }
    let (scaled, factor) = match args.method {
        Method::Median => median_scale(&rel, &pseudo, None)?,
        Method::Meanstd => meanstd_scale(&rel, &pseudo, None)?,
    };
    // keep the relative input's stored precision
    match rel_loaded {
        LoadedTensor::F32(_) => write_avst(&args.out, &scaled.cast::<f32>())?,
        LoadedTensor::F64(_) => write_avst(&args.out, &scaled)?,
    }
    let record_path = args.out.with_extension("factor.txt");
    std::fs::write(&record_path, factor.to_record())?;
    Ok(vec![args.out.clone(), record_path])
}
