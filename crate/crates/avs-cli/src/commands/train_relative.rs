use std::path::{Path, PathBuf};

use avs_core::dataio::{load_dataset, Split};
use avs_core::error::{Error, Result};
use avs_core::selfsup::train::{save_selfsup, train_selfsup, SelfsupTrainConfig};
use avs_core::selfsup::{DepthNet, PoseNet, SelfsupConfig};
use avs_core::tensor::Scalar;

use super::{load_config, load_triples, parse_usize_list};
use crate::precision::{from_env, Precision};

#[derive(clap::Args, Debug)]
pub struct Args {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Disparity scale count: 4 for {1, 1/2, 1/4, 1/8}, 3 for the 1/4 stack.
    #[arg(long, default_value_t = 4)]
    pub scales: usize,
    #[arg(long)]
    pub steps: Option<usize>,
    /// Frame interval of the training triples.
    #[arg(long, default_value_t = 20)]
    pub interval: usize,
}

fn run_typed<T: Scalar>(args: &Args, out: &Path) -> Result<Vec<PathBuf>> {
    let cfg = load_config(args.config.as_deref())?;
    let widths = parse_usize_list(cfg.get("selfsup.widths").unwrap_or("16,24,32,48"), "widths")?;
    let widths: [usize; 4] =
        widths.try_into().map_err(|_| Error::InvalidArgument("selfsup.widths needs 4 entries".into()))?;
    let net_cfg = SelfsupConfig {
        widths,
        n_scales: args.scales,
        d_min: cfg.f64_or("data.d_min", 0.1)?,
        d_max: cfg.f64_or("data.d_max", 12.0)?,
    };
    let train_cfg = SelfsupTrainConfig {
        steps: args.steps.unwrap_or(cfg.usize_or("train.steps", 500)?),
        base_lr: cfg.f64_or("train.lr", 8e-3)?,
        seed: args.seed,
        ..Default::default()
    };

    let ds = load_dataset(&args.data)?;
    for w in &ds.warnings {
        eprintln!("warning: {w}");
    }
    let triples = load_triples::<T>(&ds, Split::Train, args.interval)?;
    if triples.is_empty() {
        return Err(Error::Degenerate(format!(
            "no interval-{} triples in the train split",
            args.interval
        )));
    }
    let mut depthnet = DepthNet::<T>::new(net_cfg, args.seed)?;
    let mut posenet = PoseNet::<T>::new(widths, args.seed.wrapping_add(1));
    let report = train_selfsup(&mut depthnet, &mut posenet, &triples, &ds.intrinsics, &train_cfg)?;

    save_selfsup(out, &mut depthnet, &mut posenet)?;
    let trace_path = out.join("loss_trace.txt");
    let mut trace = String::new();
    for (i, l) in report.loss_trace.iter().enumerate() {
        trace.push_str(&format!("{i}\t{l}\n"));
    }
    std::fs::write(&trace_path, trace)?;
    Ok(vec![out.to_path_buf(), trace_path])
}

pub fn run(args: &Args) -> Result<Vec<PathBuf>> {
    match from_env()? {
        Precision::F32 => run_typed::<f32>(args, &args.out),
        Precision::F64 => run_typed::<f64>(args, &args.out),
    }
}
