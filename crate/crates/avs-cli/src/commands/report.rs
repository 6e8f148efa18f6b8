use std::path::PathBuf;

use avs_core::error::{Error, Result};

use crate::svg::bar_chart;

const COLUMNS: [&str; 7] = ["abs_rel", "sq_rel", "rmse", "rmse_log", "delta1", "delta2", "delta3"];

#[derive(clap::Args, Debug)]
pub struct Args {
    /// Evaluation TSV files produced by `avs eval`.
    #[arg(long, required = true, num_args = 1..)]
    pub inputs: Vec<PathBuf>,
    /// One label per input; file stems are used when omitted.
    #[arg(long, num_args = 1..)]
    pub labels: Vec<String>,
    #[arg(long)]
    pub out: PathBuf,
}

/// Pulls the aggregate (mean) row out of one eval table.
fn mean_row(path: &PathBuf) -> Result<[f64; 7]> {
    let text = std::fs::read_to_string(path)?;
    for line in text.lines() {
        let mut parts = line.split('\t');
        if parts.next() == Some("mean") {
            let vals: Vec<f64> = parts.filter_map(|p| p.parse().ok()).collect();
            if vals.len() != 7 {
                return Err(Error::Format(format!("{}: malformed mean row", path.display())));
            }
            return Ok(std::array::from_fn(|i| vals[i]));
        }
    }
    Err(Error::Format(format!("{}: no mean row found", path.display())))
}

pub fn run(args: &Args) -> Result<Vec<PathBuf>> {
    if !args.labels.is_empty() && args.labels.len() != args.inputs.len() {
        return Err(Error::InvalidArgument(format!(
            "{} labels for {} inputs",
            args.labels.len(),
            args.inputs.len()
        )));
    }
    std::fs::create_dir_all(&args.out)?;
    let labels: Vec<String> = if args.labels.is_empty() {
        args.inputs
            .iter()
            .map(|p| p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default())
            .collect()
    } else {
        args.labels.clone()
    };
    let rows: Vec<[f64; 7]> = args.inputs.iter().map(mean_row).collect::<Result<_>>()?;

    let mut table = String::from("model");
    for c in COLUMNS {
        table.push('\t');
        table.push_str(c);
    }
    table.push('\n');
    for (label, vals) in labels.iter().zip(&rows) {
        table.push_str(label);
        for v in vals {
            table.push_str(&format!("\t{v:.6}"));
        }
        table.push('\n');
    }
    let table_path = args.out.join("report.txt");
    std::fs::write(&table_path, &table)?;

    let mut artifacts = vec![table_path];
    for (ci, column) in COLUMNS.iter().enumerate() {
        let entries: Vec<(String, f64)> =
            labels.iter().cloned().zip(rows.iter().map(|r| r[ci])).collect();
        let path = args.out.join(format!("{column}.svg"));
        std::fs::write(&path, bar_chart(column, &entries))?;
        artifacts.push(path);
    }
    Ok(artifacts)
}
