//! `avs` command line: synthetic data generation, STFT extraction, training
//! for both pipeline stages, inference, scale correction, evaluation,
//! saliency probing, and report plotting.
//!
//! Exit codes: 0 success, 1 usage error, 2 runtime failure.

mod commands;
mod precision;
mod svg;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "avs", version, about = "Audio-visual metric depth pipeline")]
struct Cli {
    #[command(subcommand)]
    cmd: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset tree (corridors, single walls, or a
    /// scale-ambiguous pair).
    SynthData(commands::synth_data::Args),
    /// Compute the magnitude STFT of a stereo WAV file into an AVST tensor.
    Stft(commands::stft::Args),
    /// Train the supervised audio-visual metric depth model.
    TrainAvsnet(commands::train_avsnet::Args),
    /// Train the self-supervised relative depth model on frame triples.
    TrainRelative(commands::train_relative::Args),
    /// Run a trained checkpoint over a dataset split, writing depth tensors.
    Infer(commands::infer::Args),
    /// Scale-correct a relative depth map with factors from a pseudo-dense
    /// metric map.
    Scale(commands::scale::Args),
    /// Evaluate predicted depth tensors against ground truth.
    Eval(commands::eval::Args),
    /// Input-gradient saliency of a trained model on one sample.
    Saliency(commands::saliency::Args),
    /// Aggregate evaluation tables into a report with SVG bar plots.
    Report(commands::report::Args),
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // --help / --version are not usage errors
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = e.print();
                return ExitCode::from(0);
            }
            let _ = e.print();
            return ExitCode::from(1);
        }
    };
    let result: avs_core::Result<Vec<PathBuf>> = match cli.cmd {
        Command::SynthData(args) => commands::synth_data::run(&args),
        Command::Stft(args) => commands::stft::run(&args),
        Command::TrainAvsnet(args) => commands::train_avsnet::run(&args),
        Command::TrainRelative(args) => commands::train_relative::run(&args),
        Command::Infer(args) => commands::infer::run(&args),
        Command::Scale(args) => commands::scale::run(&args),
        Command::Eval(args) => commands::eval::run(&args),
        Command::Saliency(args) => commands::saliency::run(&args),
        Command::Report(args) => commands::report::run(&args),
    };
    match result {
        Ok(artifacts) => {
            for p in artifacts {
                println!("wrote {}", p.display());
            }
            ExitCode::from(0)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
