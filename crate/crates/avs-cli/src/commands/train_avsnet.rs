use std::path::{Path, PathBuf};

use avs_core::avsnet::train::{save_avsnet, train_avsnet, AvsTrainConfig};
use avs_core::avsnet::{AvsNet, AvsNetConfig};
use avs_core::dataio::{load_dataset, Split};
use avs_core::error::{Error, Result};
use avs_core::tensor::Scalar;

use super::{load_avs_samples, load_config, parse_usize_list};
use crate::precision::{from_env, Precision};

#[derive(clap::Args, Debug)]
pub struct Args {
    /// Dataset directory (scene_XXXX layout).
    #[arg(long)]
    pub data: PathBuf,
    /// Checkpoint output directory.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Train the visual-only baseline (fusion bypassed).
    #[arg(long)]
    pub no_audio: bool,
    /// Overrides train.steps from the config.
    #[arg(long)]
    pub steps: Option<usize>,
}

fn run_typed<T: Scalar>(args: &Args, out: &Path) -> Result<Vec<PathBuf>> {
    let cfg = load_config(args.config.as_deref())?;
    let widths = parse_usize_list(cfg.get("avsnet.widths").unwrap_or("16,32,64,128,192"), "widths")?;
    let widths: [usize; 5] =
        widths.try_into().map_err(|_| Error::InvalidArgument("avsnet.widths needs 5 entries".into()))?;
    let net_cfg = AvsNetConfig {
        widths,
        n_heads: cfg.usize_or("avsnet.n_heads", 4)?,
        n_bins: cfg.usize_or("avsnet.n_bins", 64)?,
        d_min: cfg.f64_or("data.d_min", 0.1)?,
        d_max: cfg.f64_or("data.d_max", 12.0)?,
        bin_embed_dim: cfg.usize_or("avsnet.bin_embed_dim", 32)?,
        attr_hidden: cfg.usize_or("avsnet.attr_hidden", 16)?,
        use_audio: !args.no_audio,
        ..Default::default()
    };
    let n_fft = cfg.usize_or("stft.n_fft", avs_core::dataio::DEFAULT_N_FFT)?;
    let hop = cfg.usize_or("stft.hop", avs_core::dataio::DEFAULT_HOP)?;
    let train_cfg = AvsTrainConfig {
        steps: args.steps.unwrap_or(cfg.usize_or("train.steps", 1000)?),
        batch_size: cfg.usize_or("train.batch", 2)?,
        base_lr: cfg.f64_or("train.lr", 1e-3)?,
        seed: args.seed,
        val_every: cfg.usize_or("train.val_every", 100)?,
        ..Default::default()
    };

    let ds = load_dataset(&args.data)?;
    for w in &ds.warnings {
        eprintln!("warning: {w}");
    }
    let train = load_avs_samples::<T>(&ds, Split::Train, n_fft, hop)?;
    let val = load_avs_samples::<T>(&ds, Split::Val, n_fft, hop)?;
    let mut model = AvsNet::<T>::new(net_cfg, args.seed)?;
    let report = train_avsnet(&mut model, &train, &val, &train_cfg)?;

    save_avsnet(out, &mut model)?;
    let mut extra = avs_core::dataio::config::Config::default();
    extra.set("stft.n_fft", n_fft);
    extra.set("stft.hop", hop);
    extra.write_file(&out.join("pipeline.ini"))?;
    let trace_path = out.join("loss_trace.txt");
    let mut trace = String::new();
    for (i, l) in report.loss_trace.iter().enumerate() {
        trace.push_str(&format!("{i}\t{l}\n"));
    }
    std::fs::write(&trace_path, trace)?;
    if let Some(best) = report.best_val_abs_rel {
        println!("best validation abs_rel: {best:.6}");
    }
    Ok(vec![out.to_path_buf(), trace_path])
}

pub fn run(args: &Args) -> Result<Vec<PathBuf>> {
    match from_env()? {
        Precision::F32 => run_typed::<f32>(args, &args.out),
        Precision::F64 => run_typed::<f64>(args, &args.out),
    }
}
