//! Sweeps the attention-loss margin λ over {0.1, 0.3, 0.5} on a reduced
//! synthetic set and prints the comparison table.
//!
//! cargo run --release --example lambda_sweep [out_dir]

use std::path::PathBuf;

use dagh::cli::{sweep_config, SWEEP_TABLE};
use dagh::config::ExperimentConfig;

fn main() -> dagh::Result<()> {
    let base = ExperimentConfig::from_toml_str(include_str!("../../../configs/toy.toml"))?
        .with_override("dataset.height", "16")?
        .with_override("dataset.width", "16")?
        .with_override("train.epochs_stage1", "10")?
        .with_override("train.epochs_stage2", "10")?;
    let out = std::env::args().nth(1).map(PathBuf::from).unwrap_or_else(|| std::env::temp_dir().join("dagh-lambda-sweep"));
    let values: Vec<String> = ["0.1", "0.3", "0.5"].iter().map(|s| s.to_string()).collect();
    sweep_config(&base, "train.lambda", &values, &out)?;
    let table = std::fs::read_to_string(out.join(SWEEP_TABLE)).map_err(|e| dagh::Error::Io { path: out.clone(), source: e })?;
    print!("{table}");
    Ok(())
}
