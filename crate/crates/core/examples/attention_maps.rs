//! Runs a freshly initialized attention network over a few images and
//! writes image / map / attended-image panels as PNG files.
//!
//! cargo run --release --example attention_maps [out_dir]

use std::path::PathBuf;

use dagh::attention::{apply_attention, attention_forward, normalize_map, AttentionConfig, AttentionNet};
use dagh::datasets::{generate_synthetic, ImageShape};
use dagh::nn::Tensor;
use dagh::plot::{attention_panel, save_png};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> dagh::Result<()> {
    let out = std::env::args().nth(1).map(PathBuf::from).unwrap_or_else(|| std::env::temp_dir().join("dagh-attention"));
    std::fs::create_dir_all(&out).map_err(|e| dagh::Error::Io { path: out.clone(), source: e })?;
    let shape = ImageShape::new(32, 32, 3);
    let ds = generate_synthetic(4, 2, shape, 0.1, 3)?;
    let config = AttentionConfig {
        input: shape,
        channels: vec![8, 16],
        kernel_size: 3,
    };
    let net = AttentionNet::new(config, &mut ChaCha8Rng::seed_from_u64(1))?;
    println!("attention network: {} parameters", net.params().len());

    for s in ds.samples().iter().take(4) {
        let image = Tensor::from_hwc(&s.pixels, shape);
        let raw = attention_forward(&image, &net)?;
        let map = normalize_map(&raw);
        let attended = apply_attention(&image, &map)?;
        let kept: f64 = attended.data.iter().sum::<f64>() / image.data.iter().sum::<f64>();
        let path = out.join(format!("panel_{}.png", s.id));
        save_png(&attention_panel(&s.pixels, shape, &map, 4)?, &path)?;
        println!("image {} (class {:?}): {:.0}% of intensity kept -> {}", s.id, s.labels.as_slice(), 100.0 * kept, path.display());
    }
    Ok(())
}
