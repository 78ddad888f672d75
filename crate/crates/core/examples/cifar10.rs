//! Loads CIFAR-10 (binary version) with the standard 100 query / 500 train
//! per class split and reports split sizes. With `--train`, runs the
//! configs/cifar10.toml experiment on it, which takes hours on a CPU.
//!
//! cargo run --release --example cifar10 -- <cifar-10-batches-bin> [--train]

use std::path::PathBuf;

use dagh::cli;
use dagh::config::{DatasetConfig, ExperimentConfig};
use dagh::datasets::{load_cifar10, SplitSpec, CIFAR10_FILES};

fn main() -> dagh::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let Some(dir) = args.iter().find(|a| !a.starts_with("--")).map(PathBuf::from) else {
        eprintln!("usage: cifar10 <dir containing {}> [--train]", CIFAR10_FILES.join(", "));
        return Ok(());
    };
    let splits = load_cifar10(&dir, &SplitSpec::standard(0))?;
    println!(
        "train {}  query {}  gallery {}  ({})",
        splits.train.len(),
        splits.query.len(),
        splits.gallery.len(),
        splits.train.image_shape()
    );
    if args.iter().any(|a| a == "--train") {
        let mut config = ExperimentConfig::from_toml_str(include_str!("../../../configs/cifar10.toml"))?;
        if let DatasetConfig::Cifar10(c) = &mut config.dataset {
            c.path = dir;
        }
        let out = config.resolved_output_dir();
        let m = cli::train_config(&config, &out)?;
        println!("run written to {}: bit agreement {:.4}", out.display(), m.bit_agreement);
    }
    Ok(())
}
