pub mod eval;
pub mod infer;
pub mod report;
pub mod saliency;
pub mod scale;
pub mod stft;
pub mod synth_data;
pub mod train_avsnet;
pub mod train_relative;

use std::path::Path;

use avs_core::avsnet::train::AvsSample;
use avs_core::dataio::{Dataset, Split};
use avs_core::error::{Error, Result};
use avs_core::selfsup::train::FrameTriple;
use avs_core::signal;
use avs_core::tensor::{Scalar, Tensor};

/// Loads every sample of a split as a supervised training sample, computing
/// the echo spectrogram with the given STFT parameters.
pub fn load_avs_samples<T: Scalar>(
    ds: &Dataset,
    split: Split,
    n_fft: usize,
    hop: usize,
) -> Result<Vec<AvsSample<T>>> {
    let mut out = Vec::new();
    for (scene, frame) in ds.entries_for(split) {
        let s = ds.load_sample(scene, frame)?;
        let spec = signal::compute_stft(&s.echo, n_fft, hop)?;
        out.push(AvsSample {
            rgb: s.rgb.cast(),
            spec: spec.mag.cast(),
            depth_gt: s.depth_gt.cast(),
        });
    }
    Ok(out)
}

/// Builds interval-spaced frame triples from a split, never crossing scene
/// boundaries.
pub fn load_triples<T: Scalar>(
    ds: &Dataset,
    split: Split,
    interval: usize,
) -> Result<Vec<FrameTriple<T>>> {
    let entries = ds.entries_for(split);
    let triples = avs_core::dataio::make_triples(&entries, interval)?;
    let mut out = Vec::new();
    for [a, b, c] in triples {
        let load = |i: usize| -> Result<Tensor<T>> {
            let (scene, frame) = entries[i];
            Ok(ds.load_sample(scene, frame)?.rgb.cast())
        };
        out.push(FrameTriple { prev: load(a)?, target: load(b)?, next: load(c)?, interval });
    }
    Ok(out)
}

pub fn parse_split(s: &str) -> Result<Split> {
    match s {
        "train" => Ok(Split::Train),
        "val" => Ok(Split::Val),
        "test" => Ok(Split::Test),
        other => Err(Error::InvalidArgument(format!("unknown split {other}"))),
    }
}

pub fn load_config(path: Option<&Path>) -> Result<avs_core::dataio::config::Config> {
    match path {
        Some(p) => avs_core::dataio::config::Config::from_file(p),
        None => Ok(avs_core::dataio::config::Config::default()),
    }
}

pub fn parse_usize_list(s: &str, what: &str) -> Result<Vec<usize>> {
    s.split(',')
        .map(|p| {
            p.trim()
                .parse()
                .map_err(|_| Error::InvalidArgument(format!("bad {what} entry: {p}")))
        })
        .collect()
}

pub fn parse_f64_list(s: &str, what: &str) -> Result<Vec<f64>> {
    s.split(',')
        .map(|p| {
            p.trim()
                .parse()
                .map_err(|_| Error::InvalidArgument(format!("bad {what} entry: {p}")))
        })
        .collect()
}
