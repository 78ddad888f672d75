//! Trains both stages on the synthetic toy set from configs/toy.toml,
//! evaluates the final codes and resumes stage 2 from the saved artifacts.
//! Takes about a minute on one core.
//!
//! cargo run --release --example train_pipeline [out_dir]

use std::path::PathBuf;

use dagh::config::ExperimentConfig;
use dagh::metrics::{evaluate, label_relevance};
use dagh::retrieval::pack;
use dagh::trainer::{bit_agreement, encode_dataset, resume_stage2, run_pipeline};

fn main() -> dagh::Result<()> {
    let config = ExperimentConfig::from_toml_str(include_str!("../../../configs/toy.toml"))?;
    let out = std::env::args().nth(1).map(PathBuf::from).unwrap_or_else(|| std::env::temp_dir().join("dagh-toy-run"));
    let splits = config.dataset.load()?;
    let model = config.model.networks();

    let state = run_pipeline(&splits.train, &model, &config.train, Some(&out))?;
    for e in state.history.iter().filter(|e| e.epoch % 5 == 0) {
        println!(
            "{:?} epoch {:>2}  beta {:>7}  total {:.4}",
            e.stage,
            e.epoch,
            e.beta.map(|b| format!("{b:.1}")).unwrap_or_default(),
            e.total
        );
    }

    let q = pack(&encode_dataset(&splits.query, &state.hash2)?)?;
    let g = pack(&encode_dataset(&splits.gallery, &state.hash2)?)?;
    let (ql, gl) = (splits.query.labels(), splits.gallery.labels());
    let report = evaluate(&q, &g, &label_relevance(&ql, &gl), &config.eval)?;
    println!(
        "mAP {:.4}  P@H<=2 {:.4}  bit agreement {:.4}  mean |bit corr| {:.4}",
        report.map,
        report.p_at_h2,
        bit_agreement(&splits.train, &state.hash2, &state.targets)?,
        report.bit_correlation.mean_abs_off_diagonal
    );

    let resumed = resume_stage2(&splits.train, &model, &config.train, &out)?;
    println!("stage 2 resumed from {}: identical = {}", out.display(), resumed.hash2 == state.hash2);
    Ok(())
}
