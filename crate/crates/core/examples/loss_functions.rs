//! Evaluates the pairwise semantic loss, the margin attention loss, the
//! combined stage-1 objective and the guide loss on small inputs, and checks
//! the guide gradient against central differences.
//!
//! cargo run --release --example loss_functions

use dagh::losses::{attention_loss, guide_grad, guide_loss, semantic_loss, stage1_loss};

fn main() -> dagh::Result<()> {
    let codes = vec![vec![1.0, 1.0, -1.0, 1.0], vec![1.0, 1.0, -1.0, 1.0], vec![-1.0, -1.0, 1.0, -1.0]];
    // items 0 and 1 share a label, item 2 does not
    let sim = vec![1, 1, 0, 1, 1, 0, 0, 0, 1];
    println!("semantic  = {:.6}", semantic_loss(&codes, &sim)?);
    println!("attention = {:.6} (lambda 0.3)", attention_loss(&codes, &sim, 0.3)?);
    let total = stage1_loss(&codes, &sim, 50.0, 0.3, 4.0, 0.001)?;
    println!("stage-1   = {:.6} = sem {:.4} + 50 * att {:.4} + penalty {:.2e}", total.value, total.sem, total.att, total.penalty);

    let logits = vec![vec![2.0, -1.0, 0.5], vec![-0.3, 0.0, 4.0]];
    let targets = vec![vec![1, 0, 0], vec![0, 1, 1]];
    println!("guide     = {:.6}", guide_loss(&logits, &targets)?);
    let g = guide_grad(&logits, &targets)?;
    let h = 1e-6;
    let mut worst: f64 = 0.0;
    for i in 0..2 {
        for k in 0..3 {
            let mut p = logits.clone();
            let mut m = logits.clone();
            p[i][k] += h;
            m[i][k] -= h;
            let num = (guide_loss(&p, &targets)? - guide_loss(&m, &targets)?) / (2.0 * h);
            worst = worst.max((num - g[i][k]).abs());
        }
    }
    println!("guide gradient vs central differences: max abs error {worst:.2e}");
    Ok(())
}
