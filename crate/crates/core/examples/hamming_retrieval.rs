//! Packs random codes, writes and reads the code file, ranks a gallery by
//! Hamming distance and lists the items within radius 2.
//!
//! cargo run --release --example hamming_retrieval

use dagh::hashnet::BinaryCode;
use dagh::retrieval::{hamming_distance, pack, rank_gallery, within_radius, PackedCodes};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() -> dagh::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let k = 24;
    let mut random_code = || BinaryCode::new((0..k).map(|_| if rng.random::<bool>() { 1 } else { -1 }).collect());
    let gallery: Vec<BinaryCode> = (0..1000).map(|_| random_code()).collect::<dagh::Result<_>>()?;
    let query = gallery[17].clone();

    let packed = pack(&gallery)?;
    let path = std::env::temp_dir().join("dagh-example.dagh");
    packed.write(&path)?;
    let back = PackedCodes::read(&path)?;
    println!(
        "{} codes of {} bits, {} bytes per code, file round trip equal: {}",
        back.len(),
        back.code_length(),
        back.bytes_per_row(),
        back == packed
    );

    let ranking = rank_gallery(&query, &back)?;
    println!("top 5: {:?}", ranking.ids.iter().zip(&ranking.distances).take(5).collect::<Vec<_>>());
    println!("distance to item 3: {}", hamming_distance(&query, &gallery[3])?);
    println!("within radius 2: {:?}", within_radius(&query, &back, 2)?);
    Ok(())
}
