//! On-disk dataset layout: a directory holding `manifest.json` (shape,
//! split, labels) and `pixels.f32`, the concatenated little-endian `f32`
//! pixels of every sample in id order.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Dataset, ImageSample, ImageShape, LabelSet, Split};
use crate::error::{Error, Result};

pub const DATASET_MANIFEST: &str = "manifest.json";
pub const DATASET_PIXELS: &str = "pixels.f32";
const FORMAT: &str = "dagh-dataset";

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Manifest {
    format: String,
    version: u32,
    split: Split,
    image_shape: [usize; 3],
    labels: Vec<LabelSet>,
    pixels: String,
}

pub fn save_dataset(dataset: &Dataset, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let shape = dataset.image_shape();
    let manifest = Manifest {
        format: FORMAT.into(),
        version: 1,
        split: dataset.split(),
        image_shape: [shape.height, shape.width, shape.channels],
        labels: dataset.labels(),
        pixels: DATASET_PIXELS.into(),
    };
    let json = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    let manifest_path = dir.join(DATASET_MANIFEST);
    fs::write(&manifest_path, json).map_err(|e| Error::io(&manifest_path, e))?;

    let mut bytes = Vec::with_capacity(dataset.len() * shape.len() * 4);
    for s in dataset.samples() {
        for p in &s.pixels {
            bytes.extend_from_slice(&p.to_le_bytes());
        }
    }
    let pixel_path = dir.join(DATASET_PIXELS);
    fs::write(&pixel_path, bytes).map_err(|e| Error::io(&pixel_path, e))
}

pub fn load_dataset(dir: &Path) -> Result<Dataset> {
    let manifest_path = dir.join(DATASET_MANIFEST);
    let text = fs::read_to_string(&manifest_path).map_err(|e| Error::io(&manifest_path, e))?;
    let manifest: Manifest = serde_json::from_str(&text)
        .map_err(|e| Error::Format(format!("{}: {e}", manifest_path.display())))?;
    if manifest.format != FORMAT || manifest.version != 1 {
        return Err(Error::Format(format!(
            "{}: unsupported dataset format {} v{}",
            manifest_path.display(),
            manifest.format,
            manifest.version
        )));
    }
    let [h, w, c] = manifest.image_shape;
    let shape = ImageShape::new(h, w, c);
    let pixel_path = dir.join(&manifest.pixels);
    let bytes = fs::read(&pixel_path).map_err(|e| Error::io(&pixel_path, e))?;
    let per = shape.len() * 4;
    if bytes.len() != per * manifest.labels.len() {
        return Err(Error::Format(format!(
            "{}: expected {} bytes for {} samples of shape {shape}, found {}",
            pixel_path.display(),
            per * manifest.labels.len(),
            manifest.labels.len(),
            bytes.len()
        )));
    }
    let samples = manifest
        .labels
        .into_iter()
        .zip(bytes.chunks_exact(per))
        .enumerate()
        .map(|(id, (labels, chunk))| ImageSample {
            id,
            pixels: chunk
                .chunks_exact(4)
                .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
                .collect(),
            labels,
        })
        .collect();
    Dataset::new(samples, manifest.split, shape)
        .map_err(|e| Error::Format(format!("{}: {e}", dir.display())))
}
