//! Generates the synthetic four-class set, inspects it, stores it and reads
//! it back, then draws one round of pairwise mini-batches.
//!
//! cargo run --release --example synthetic_data

use dagh::datasets::{load_dataset, pair_batches, pairwise_label, save_dataset, synthetic_splits, ImageShape};

fn main() -> dagh::Result<()> {
    let shape = ImageShape::new(32, 32, 3);
    let splits = synthetic_splits(4, [50, 10, 50], shape, 0.1, 0)?;
    for ds in [&splits.train, &splits.query, &splits.gallery] {
        println!("{:>8}: {} images, classes {:?}", ds.split(), ds.len(), ds.distinct_labels());
    }

    let a = &splits.train.samples()[0];
    let b = &splits.train.samples()[4];
    let c = &splits.train.samples()[1];
    println!(
        "s(0,4) = {}  s(0,1) = {}",
        pairwise_label(a.labels.as_slice(), b.labels.as_slice())?,
        pairwise_label(a.labels.as_slice(), c.labels.as_slice())?
    );

    let dir = std::env::temp_dir().join("dagh-synthetic-example");
    save_dataset(&splits.train, &dir)?;
    let back = load_dataset(&dir)?;
    println!("stored and reloaded {} images from {}", back.len(), dir.display());

    let batches: Vec<_> = pair_batches(&splits.train, 32, 7)?.collect();
    let similar: usize = batches
        .iter()
        .map(|b| (0..b.len()).flat_map(|i| (i + 1..b.len()).map(move |j| (i, j))).filter(|&(i, j)| b.sim(i, j) == 1).count())
        .sum();
    println!("{} batches, {} similar pairs in the epoch", batches.len(), similar);
    Ok(())
}
