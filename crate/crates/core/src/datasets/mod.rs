//! Image datasets, pairwise supervision and pair-batch streaming.
//!
//! Images are stored as height × width × channel arrays of `f32` pixels in
//! `[0, 1]`. Every image carries a non-empty set of category labels; two
//! images are similar when their label sets intersect.

mod batches;
mod cifar;
mod store;
mod synthetic;

pub use batches::{pair_batches, PairBatch, PairBatches};
pub use cifar::{load_cifar10, SplitSpec, CIFAR10_FILES};
pub use store::{load_dataset, save_dataset, DATASET_MANIFEST, DATASET_PIXELS};
pub use synthetic::{generate_synthetic, synthetic_splits};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Which part of an experiment a dataset plays.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Query,
    Gallery,
}

impl std::fmt::Display for Split {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Query => "query",
            Split::Gallery => "gallery",
        })
    }
}

impl std::str::FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "query" => Ok(Split::Query),
            "gallery" => Ok(Split::Gallery),
            other => Err(Error::invalid(format!("unknown split '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImageShape {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
}

impl ImageShape {
    pub const fn new(height: usize, width: usize, channels: usize) -> Self {
        Self {
            height,
            width,
            channels,
        }
    }

    pub fn len(&self) -> usize {
        self.height * self.width * self.channels
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl std::fmt::Display for ImageShape {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}x{}x{}", self.height, self.width, self.channels)
    }
}

/// A sorted, de-duplicated, non-empty set of category identifiers.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "Vec<u32>", into = "Vec<u32>")]
pub struct LabelSet(Vec<u32>);

impl LabelSet {
    pub fn new(mut labels: Vec<u32>) -> Result<Self> {
        if labels.is_empty() {
            return Err(Error::invalid("label set must not be empty"));
        }
        labels.sort_unstable();
        labels.dedup();
        Ok(Self(labels))
    }

    pub fn single(label: u32) -> Self {
        Self(vec![label])
    }

    pub fn as_slice(&self) -> &[u32] {
        &self.0
    }

    /// Whether the two sets share at least one label.
    pub fn intersects(&self, other: &LabelSet) -> bool {
        sorted_intersect(&self.0, &other.0)
    }
}

impl TryFrom<Vec<u32>> for LabelSet {
    type Error = Error;

    fn try_from(v: Vec<u32>) -> Result<Self> {
        LabelSet::new(v)
    }
}

impl From<LabelSet> for Vec<u32> {
    fn from(s: LabelSet) -> Self {
        s.0
    }
}

fn sorted_intersect(a: &[u32], b: &[u32]) -> bool {
    let (mut i, mut j) = (0, 0);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => return true,
        }
    }
    false
}

/// Pairwise similarity label: 1 when the label sets share a category, else 0.
pub fn pairwise_label(labels_a: &[u32], labels_b: &[u32]) -> Result<u8> {
    if labels_a.is_empty() || labels_b.is_empty() {
        return Err(Error::invalid("pairwise_label requires non-empty label sets"));
    }
    Ok(labels_a.iter().any(|a| labels_b.contains(a)) as u8)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ImageSample {
    pub id: usize,
    /// Row-major `H × W × C` pixels in `[0, 1]`.
    pub pixels: Vec<f32>,
    pub labels: LabelSet,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    samples: Vec<ImageSample>,
    split: Split,
    image_shape: ImageShape,
}

impl Dataset {
    /// Builds a dataset, checking shape, pixel range and id contiguity.
    pub fn new(samples: Vec<ImageSample>, split: Split, image_shape: ImageShape) -> Result<Self> {
        if image_shape.is_empty() {
            return Err(Error::invalid("image shape has a zero dimension"));
        }
        for (i, s) in samples.iter().enumerate() {
            if s.id != i {
                return Err(Error::invalid(format!(
                    "sample ids must be contiguous from 0, found id {} at position {i}",
                    s.id
                )));
            }
            if s.pixels.len() != image_shape.len() {
                return Err(Error::invalid(format!(
                    "sample {i} has {} pixels, expected {} for shape {image_shape}",
                    s.pixels.len(),
                    image_shape.len()
                )));
            }
            if let Some(p) = s.pixels.iter().find(|p| !(p.is_finite() && (0.0..=1.0).contains(*p))) {
                return Err(Error::invalid(format!(
                    "sample {i} has pixel value {p} outside [0, 1]"
                )));
            }
        }
        Ok(Self {
            samples,
            split,
            image_shape,
        })
    }

    pub fn samples(&self) -> &[ImageSample] {
        &self.samples
    }

    pub fn get(&self, id: usize) -> Option<&ImageSample> {
        self.samples.get(id)
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn split(&self) -> Split {
        self.split
    }

    pub fn image_shape(&self) -> ImageShape {
        self.image_shape
    }

    pub fn with_split(mut self, split: Split) -> Self {
        self.split = split;
        self
    }

    pub fn labels(&self) -> Vec<LabelSet> {
        self.samples.iter().map(|s| s.labels.clone()).collect()
    }

    pub fn distinct_labels(&self) -> Vec<u32> {
        let mut all: Vec<u32> = self
            .samples
            .iter()
            .flat_map(|s| s.labels.as_slice().iter().copied())
            .collect();
        all.sort_unstable();
        all.dedup();
        all
    }

    /// Keeps the samples at `ids` (in that order), renumbering from 0.
    pub fn subset(&self, ids: &[usize], split: Split) -> Result<Self> {
        let samples = ids
            .iter()
            .enumerate()
            .map(|(new_id, &old)| {
                let s = self
                    .samples
                    .get(old)
                    .ok_or_else(|| Error::invalid(format!("subset id {old} out of range")))?;
                Ok(ImageSample {
                    id: new_id,
                    pixels: s.pixels.clone(),
                    labels: s.labels.clone(),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Dataset::new(samples, split, self.image_shape)
    }
}

/// Training, query and gallery sets of one experiment.
#[derive(Debug, Clone)]
pub struct Splits {
    pub train: Dataset,
    pub query: Dataset,
    pub gallery: Dataset,
}

impl Splits {
    pub fn get(&self, split: Split) -> &Dataset {
        match split {
            Split::Train => &self.train,
            Split::Query => &self.query,
            Split::Gallery => &self.gallery,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn pairwise_label_examples() {
        assert_eq!(pairwise_label(&[0], &[0]).unwrap(), 1);
        assert_eq!(pairwise_label(&[2], &[5]).unwrap(), 0);
        // multi-label: one shared category is enough
        assert_eq!(pairwise_label(&[1, 3], &[3, 7]).unwrap(), 1);
    }

    #[test]
    fn pairwise_label_rejects_empty() {
        assert!(matches!(pairwise_label(&[], &[1]), Err(Error::InvalidInput(_))));
        assert!(matches!(pairwise_label(&[1], &[]), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn label_set_normalizes() {
        let s = LabelSet::new(vec![3, 1, 3]).unwrap();
        assert_eq!(s.as_slice(), &[1, 3]);
        assert!(LabelSet::new(vec![]).is_err());
    }

    #[test]
    fn dataset_rejects_bad_pixels_and_ids() {
        let shape = ImageShape::new(1, 1, 1);
        let bad = ImageSample {
            id: 0,
            pixels: vec![1.5],
            labels: LabelSet::single(0),
        };
        assert!(Dataset::new(vec![bad], Split::Train, shape).is_err());
        let gap = ImageSample {
            id: 1,
            pixels: vec![0.5],
            labels: LabelSet::single(0),
        };
        assert!(Dataset::new(vec![gap], Split::Train, shape).is_err());
    }

    proptest! {
        #[test]
        fn pairwise_label_is_symmetric(
            a in prop::collection::vec(0u32..12, 1..5),
            b in prop::collection::vec(0u32..12, 1..5),
        ) {
            let ab = pairwise_label(&a, &b).unwrap();
            prop_assert_eq!(ab, pairwise_label(&b, &a).unwrap());
            let sa = LabelSet::new(a).unwrap();
            let sb = LabelSet::new(b).unwrap();
            prop_assert_eq!(ab == 1, sa.intersects(&sb));
        }
    }
}
