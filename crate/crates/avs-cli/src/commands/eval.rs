use std::path::PathBuf;

use avs_core::error::{Error, Result};
use avs_core::metrics::{compute_metrics, MetricsReport};
use avs_core::tensor::{read_avst, Tensor};

/// Formats one TSV row in the report column order.
fn row(label: &str, values: &[f64; 7]) -> String {
    let mut s = label.to_string();
    for v in values {
        s.push_str(&format!("\t{v:.6}"));
    }
    s.push('\n');
    s
}

#[derive(clap::Args, Debug)]
pub struct Args {
    /// Predicted depth tensors; repeat to evaluate a set.
    #[arg(long, required = true, num_args = 1..)]
    pub pred: Vec<PathBuf>,
    /// Ground-truth depth tensors, one per prediction.
    #[arg(long, required = true, num_args = 1..)]
    pub gt: Vec<PathBuf>,
    #[arg(long, default_value_t = 12.0)]
    pub max_depth: f64,
    /// Write the TSV here instead of stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn run(args: &Args) -> Result<Vec<PathBuf>> {
    if args.pred.len() != args.gt.len() {
        return Err(Error::InvalidArgument(format!(
            "{} predictions but {} ground-truth tensors",
            args.pred.len(),
            args.gt.len()
        )));
    }
    let mut table = String::from("sample\tabs_rel\tsq_rel\trmse\trmse_log\tdelta1\tdelta2\tdelta3\n");
    let mut sums = [0.0f64; 7];
    for (p, g) in args.pred.iter().zip(&args.gt) {
        let pred: Tensor<f64> = read_avst(p)?.cast();
        let gt: Tensor<f64> = read_avst(g)?.cast();
        let report: MetricsReport = compute_metrics(&pred, &gt, args.max_depth)?;
        let values = report.values();
        for (s, v) in sums.iter_mut().zip(&values) {
            *s += v;
        }
        let label = p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        table.push_str(&row(&label, &values));
    }
    let n = args.pred.len() as f64;
    let means: [f64; 7] = std::array::from_fn(|i| sums[i] / n);
    table.push_str(&row("mean", &means));

    match &args.out {
        Some(path) => {
            std::fs::write(path, table)?;
            Ok(vec![path.clone()])
        }
        None => {
            print!("{table}");
            Ok(vec![])
        }
    }
}
