//! CIFAR-10 binary-format ingestion.
//!
//! Each record is 3073 bytes: one label byte followed by 3072 pixel bytes
//! laid out as three 32×32 planes (red, green, blue), each row-major.

use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{Dataset, ImageSample, ImageShape, LabelSet, Split, Splits};
use crate::error::{Error, Result};

pub const CIFAR10_FILES: [&str; 6] = [
    "data_batch_1.bin",
    "data_batch_2.bin",
    "data_batch_3.bin",
    "data_batch_4.bin",
    "data_batch_5.bin",
    "test_batch.bin",
];
const SIDE: usize = 32;
const PLANE: usize = SIDE * SIDE;
const RECORD: usize = 1 + 3 * PLANE;
const CLASSES: usize = 10;

/// Per-class split sizes. Images of each class are shuffled with `seed`
/// and dealt out to query, then train, then gallery.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SplitSpec {
    pub query_per_class: usize,
    pub train_per_class: usize,
    /// `None` puts every remaining image in the gallery.
    pub gallery_per_class: Option<usize>,
    pub seed: u64,
}

impl SplitSpec {
    /// 100 query and 500 training images per class, the rest as gallery.
    pub fn standard(seed: u64) -> Self {
        Self {
            query_per_class: 100,
            train_per_class: 500,
            gallery_per_class: None,
            seed,
        }
    }
}

fn decode_record(rec: &[u8], file: &str, index: usize) -> Result<(u8, Vec<f32>)> {
    let label = rec[0];
    if label as usize >= CLASSES {
        return Err(Error::Format(format!(
            "{file}: record {index} has label {label}, expected 0..9"
        )));
    }
    let mut pixels = vec![0f32; 3 * PLANE];
    for ch in 0..3 {
        let plane = &rec[1 + ch * PLANE..1 + (ch + 1) * PLANE];
        for (p, &v) in plane.iter().enumerate() {
            pixels[p * 3 + ch] = v as f32 / 255.0;
        }
    }
    Ok((label, pixels))
}

/// Loads the six CIFAR-10 batch files from `dir` and partitions them.
pub fn load_cifar10(dir: &Path, spec: &SplitSpec) -> Result<Splits> {
    let mut by_class: Vec<Vec<Vec<f32>>> = vec![Vec::new(); CLASSES];
    for name in CIFAR10_FILES {
        let path = dir.join(name);
        let bytes = fs::read(&path).map_err(|e| Error::io(&path, e))?;
        if bytes.len() % RECORD != 0 {
            return Err(Error::Format(format!(
                "{}: size {} is not a multiple of the {RECORD}-byte record",
                path.display(),
                bytes.len()
            )));
        }
        for (i, rec) in bytes.chunks_exact(RECORD).enumerate() {
            let (label, pixels) = decode_record(rec, name, i)?;
            by_class[label as usize].push(pixels);
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut parts: [Vec<(u32, Vec<f32>)>; 3] = Default::default();
    for (class, mut images) in by_class.into_iter().enumerate() {
        let need = spec.query_per_class + spec.train_per_class;
        if images.len() < need {
            return Err(Error::invalid(format!(
                "class {class} has {} images, split needs at least {need}",
                images.len()
            )));
        }
        images.shuffle(&mut rng);
        let mut rest = images.into_iter();
        for _ in 0..spec.query_per_class {
            parts[0].push((class as u32, rest.next().expect("counted")));
        }
        for _ in 0..spec.train_per_class {
            parts[1].push((class as u32, rest.next().expect("counted")));
        }
        let gallery: Vec<Vec<f32>> = match spec.gallery_per_class {
            Some(g) => rest.take(g).collect(),
            None => rest.collect(),
        };
        parts[2].extend(gallery.into_iter().map(|p| (class as u32, p)));
    }

    let shape = ImageShape::new(SIDE, SIDE, 3);
    let build = |items: Vec<(u32, Vec<f32>)>, split| {
        let samples = items
            .into_iter()
            .enumerate()
            .map(|(id, (label, pixels))| ImageSample {
                id,
                pixels,
                labels: LabelSet::single(label),
            })
            .collect();
        Dataset::new(samples, split, shape)
    };
    let [query, train, gallery] = parts;
    Ok(Splits {
        query: build(query, Split::Query)?,
        train: build(train, Split::Train)?,
        gallery: build(gallery, Split::Gallery)?,
    })
}
