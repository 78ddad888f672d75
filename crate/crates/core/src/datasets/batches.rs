use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{Dataset, ImageSample};
use crate::error::{Error, Result};

/// A mini-batch in which every two images form a training pair.
#[derive(Debug, Clone)]
pub struct PairBatch<'a> {
    pub images: Vec<&'a ImageSample>,
    /// Row-major `B × B` similarity matrix with entries in {0, 1}.
    pub sim: Vec<u8>,
}

impl PairBatch<'_> {
    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    pub fn sim(&self, i: usize, j: usize) -> u8 {
        self.sim[i * self.images.len() + j]
    }

    pub fn ids(&self) -> Vec<usize> {
        self.images.iter().map(|s| s.id).collect()
    }
}

/// Similarity matrix over a list of samples, built elementwise from the
/// shared-label rule.
pub(crate) fn similarity_matrix(images: &[&ImageSample]) -> Vec<u8> {
    let b = images.len();
    let mut sim = vec![0u8; b * b];
    for i in 0..b {
        sim[i * b + i] = 1;
        for j in (i + 1)..b {
            let s = images[i].labels.intersects(&images[j].labels) as u8;
            sim[i * b + j] = s;
            sim[j * b + i] = s;
        }
    }
    sim
}

/// One epoch of pair batches over a seeded permutation of `dataset`.
#[derive(Debug)]
pub struct PairBatches<'a> {
    dataset: &'a Dataset,
    order: Vec<usize>,
    batch_size: usize,
    cursor: usize,
}

impl<'a> Iterator for PairBatches<'a> {
    type Item = PairBatch<'a>;

    fn next(&mut self) -> Option<Self::Item> {
        let remaining = self.order.len() - self.cursor;
        // a single leftover image has no partner
        if remaining < 2 {
            self.cursor = self.order.len();
            return None;
        }
        let take = remaining.min(self.batch_size);
        let images: Vec<&ImageSample> = self.order[self.cursor..self.cursor + take]
            .iter()
            .map(|&i| &self.dataset.samples()[i])
            .collect();
        self.cursor += take;
        let sim = similarity_matrix(&images);
        Some(PairBatch { images, sim })
    }
}

/// Streams one epoch of pair batches. Batch order depends only on `seed`.
pub fn pair_batches(dataset: &Dataset, batch_size: usize, seed: u64) -> Result<PairBatches<'_>> {
    if batch_size < 2 {
        return Err(Error::invalid(format!(
            "batch_size must be at least 2, got {batch_size}"
        )));
    }
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    Ok(PairBatches {
        dataset,
        order,
        batch_size,
        cursor: 0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datasets::{ImageShape, LabelSet, Split};

    fn toy(labels: &[u32]) -> Dataset {
        let samples = labels
            .iter()
            .enumerate()
            .map(|(id, &l)| ImageSample {
                id,
                pixels: vec![0.5],
                labels: LabelSet::single(l),
            })
            .collect();
        Dataset::new(samples, Split::Train, ImageShape::new(1, 1, 1)).unwrap()
    }

    #[test]
    fn chunking_keeps_short_tail() {
        let ds = toy(&[0; 10]);
        let sizes: Vec<usize> = pair_batches(&ds, 4, 1).unwrap().map(|b| b.len()).collect();
        assert_eq!(sizes, vec![4, 4, 2]);
    }

    #[test]
    fn single_leftover_is_dropped() {
        let ds = toy(&[0; 9]);
        let sizes: Vec<usize> = pair_batches(&ds, 4, 1).unwrap().map(|b| b.len()).collect();
        assert_eq!(sizes, vec![4, 4]);
    }

    #[test]
    fn sim_matrix_from_labels() {
        let ds = toy(&[0, 0, 1]);
        let imgs: Vec<&ImageSample> = ds.samples().iter().collect();
        assert_eq!(similarity_matrix(&imgs), vec![1, 1, 0, 1, 1, 0, 0, 0, 1]);
    }

    #[test]
    fn rejects_tiny_batch() {
        let ds = toy(&[0, 1]);
        assert!(pair_batches(&ds, 1, 0).is_err());
    }

    #[test]
    fn order_is_seeded() {
        let ds = toy(&[0, 1, 2, 3, 0, 1, 2, 3, 0, 1]);
        let a: Vec<Vec<usize>> = pair_batches(&ds, 3, 9).unwrap().map(|b| b.ids()).collect();
        let b: Vec<Vec<usize>> = pair_batches(&ds, 3, 9).unwrap().map(|b| b.ids()).collect();
        assert_eq!(a, b);
        let c: Vec<Vec<usize>> = pair_batches(&ds, 3, 10).unwrap().map(|b| b.ids()).collect();
        assert_ne!(a, c);
    }

    #[test]
    fn emitted_sim_is_symmetric_with_unit_diagonal() {
        let ds = toy(&[0, 1, 2, 0, 1, 2, 0, 1, 2, 3, 3]);
        for batch in pair_batches(&ds, 4, 3).unwrap() {
            let b = batch.len();
            for i in 0..b {
                assert_eq!(batch.sim(i, i), 1);
                for j in 0..b {
                    assert_eq!(batch.sim(i, j), batch.sim(j, i));
                    assert!(batch.sim(i, j) <= 1);
                    let expect = batch.images[i].labels.intersects(&batch.images[j].labels) as u8;
                    assert_eq!(batch.sim(i, j), expect);
                }
            }
        }
    }
}
