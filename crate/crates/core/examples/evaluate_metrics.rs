//! Computes the metric suite on hand-made codes where two classes are well
//! separated and a third overlaps, then writes the report files.
//!
//! cargo run --release --example evaluate_metrics [out_dir]

use std::path::PathBuf;

use dagh::datasets::LabelSet;
use dagh::hashnet::BinaryCode;
use dagh::metrics::{evaluate, label_relevance, EvalSettings};
use dagh::retrieval::pack;

fn main() -> dagh::Result<()> {
    let proto = [[1i8, 1, 1, 1, 1, 1, 1, 1], [-1, -1, -1, -1, 1, 1, 1, 1], [1, 1, 1, 1, -1, -1, 1, 1]];
    let mut codes = Vec::new();
    let mut labels = Vec::new();
    for i in 0..30 {
        let class = i % 3;
        let mut bits = proto[class].to_vec();
        bits[i % 8] = -bits[i % 8];
        codes.push(BinaryCode::new(bits)?);
        labels.push(LabelSet::single(class as u32));
    }
    let q = pack(&codes[..6])?;
    let g = pack(&codes[6..])?;
    let settings = EvalSettings {
        cutoff: 10,
        top_n: vec![1, 5, 10, 20],
    };
    let report = evaluate(&q, &g, &label_relevance(&labels[..6], &labels[6..]), &settings)?;
    println!("mAP@10 {:.4}  P@H<=2 {:.4}", report.map, report.p_at_h2);
    for (n, p) in &report.p_at_n {
        println!("P@{n:<3} {p:.4}");
    }
    println!("mean |bit correlation| {:.4}", report.bit_correlation.mean_abs_off_diagonal);
    let out = std::env::args().nth(1).map(PathBuf::from).unwrap_or_else(|| std::env::temp_dir().join("dagh-eval"));
    report.write(&out)?;
    println!("report written to {}", out.display());
    Ok(())
}
