//! Desk-scale synthetic image generator.
//!
//! Each image is a noisy background of random brightness with a random
//! distractor rectangle, overlaid with a class-specific salient patch. The
//! patch shape, position and colour depend only on the class, so images of
//! the same class share patch geometry and differ only in background and
//! noise.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::{Dataset, ImageSample, ImageShape, LabelSet, Split, Splits};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy)]
enum PatchShape {
    Filled,
    Hollow,
    Cross,
    Diagonal,
    HorizontalBar,
    VerticalBar,
}

const SHAPES: [PatchShape; 6] = [
    PatchShape::Filled,
    PatchShape::Hollow,
    PatchShape::Cross,
    PatchShape::Diagonal,
    PatchShape::HorizontalBar,
    PatchShape::VerticalBar,
];

impl PatchShape {
    /// Whether cell `(r, c)` of a `size × size` patch is painted.
    fn covers(self, r: usize, c: usize, size: usize) -> bool {
        let last = size - 1;
        let mid = size / 2;
        let thick = (size / 4).max(1);
        match self {
            PatchShape::Filled => true,
            PatchShape::Hollow => r < thick || c < thick || r + thick > last || c + thick > last,
            PatchShape::Cross => r.abs_diff(mid) < thick || c.abs_diff(mid) < thick,
            PatchShape::Diagonal => r.abs_diff(c) < thick || (r + c).abs_diff(last) < thick,
            PatchShape::HorizontalBar => r.abs_diff(mid) < thick + 1,
            PatchShape::VerticalBar => c.abs_diff(mid) < thick + 1,
        }
    }
}

struct ClassPatch {
    top: usize,
    left: usize,
    size: usize,
    shape: PatchShape,
    color: Vec<f32>,
}

fn class_patch(class: usize, n_classes: usize, shape: ImageShape) -> ClassPatch {
    let grid = (n_classes as f64).sqrt().ceil() as usize;
    let cell_h = shape.height / grid;
    let cell_w = shape.width / grid;
    let size = (cell_h.min(cell_w) * 3 / 4).max(2).min(shape.height.min(shape.width));
    let (row, col) = (class / grid, class % grid);
    let top = (row * cell_h + (cell_h.saturating_sub(size)) / 2).min(shape.height - size);
    let left = (col * cell_w + (cell_w.saturating_sub(size)) / 2).min(shape.width - size);
    let code = class + 1;
    let color = (0..shape.channels)
        .map(|ch| if (code >> (ch % 3)) & 1 == 1 { 0.95 } else { 0.05 })
        .collect();
    ClassPatch {
        top,
        left,
        size,
        shape: SHAPES[class % SHAPES.len()],
        color,
    }
}

/// Generates `n_classes × per_class` labelled images. Sample `i` has class
/// `i % n_classes`. The output is a deterministic function of the arguments.
pub fn generate_synthetic(
    n_classes: usize,
    per_class: usize,
    image_shape: ImageShape,
    noise_level: f64,
    seed: u64,
) -> Result<Dataset> {
    if n_classes < 2 {
        return Err(Error::invalid(format!("n_classes must be >= 2, got {n_classes}")));
    }
    if per_class < 2 {
        return Err(Error::invalid(format!("per_class must be >= 2, got {per_class}")));
    }
    if image_shape.height < 4 || image_shape.width < 4 || image_shape.channels == 0 {
        return Err(Error::invalid(format!(
            "image shape {image_shape} too small for synthetic patches"
        )));
    }
    if !(noise_level.is_finite() && noise_level >= 0.0) {
        return Err(Error::invalid(format!("noise_level must be >= 0, got {noise_level}")));
    }

    let patches: Vec<ClassPatch> = (0..n_classes)
        .map(|c| class_patch(c, n_classes, image_shape))
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, noise_level).expect("noise level validated");
    let ImageShape {
        height,
        width,
        channels,
    } = image_shape;

    let samples = (0..n_classes * per_class)
        .map(|id| {
            let class = id % n_classes;
            let mut px = vec![0f64; image_shape.len()];
            let base: Vec<f64> = (0..channels).map(|_| rng.random_range(0.3..0.7)).collect();
            for (i, p) in px.iter_mut().enumerate() {
                *p = base[i % channels];
            }

            // distractor
            let dh = rng.random_range(1..=(height / 3).max(1));
            let dw = rng.random_range(1..=(width / 3).max(1));
            let dt = rng.random_range(0..=height - dh);
            let dl = rng.random_range(0..=width - dw);
            let dcolor: Vec<f64> = (0..channels).map(|_| rng.random_range(0.0..1.0)).collect();
            for r in dt..dt + dh {
                for c in dl..dl + dw {
                    for ch in 0..channels {
                        px[(r * width + c) * channels + ch] = dcolor[ch];
                    }
                }
            }

            let patch = &patches[class];
            for r in 0..patch.size {
                for c in 0..patch.size {
                    if patch.shape.covers(r, c, patch.size) {
                        let at = ((patch.top + r) * width + patch.left + c) * channels;
                        for ch in 0..channels {
                            px[at + ch] = patch.color[ch] as f64;
                        }
                    }
                }
            }

            let pixels = px
                .into_iter()
                .map(|p| (p + noise.sample(&mut rng)).clamp(0.0, 1.0) as f32)
                .collect();
            ImageSample {
                id,
                pixels,
                labels: LabelSet::single(class as u32),
            }
        })
        .collect();
    Dataset::new(samples, Split::Train, image_shape)
}

/// Generates `train + query + gallery` images per class in one pass and
/// deals each class's images out in that order.
pub fn synthetic_splits(
    n_classes: usize,
    per_class: [usize; 3],
    image_shape: ImageShape,
    noise: f64,
    seed: u64,
) -> Result<Splits> {
    let [train, query, gallery] = per_class;
    if query == 0 || gallery == 0 {
        return Err(Error::invalid("query and gallery need at least one image per class"));
    }
    let total = train + query + gallery;
    let all = generate_synthetic(n_classes, total, image_shape, noise, seed)?;
    // class c occupies ids c, c + n, c + 2n, ...
    let ids = |range: std::ops::Range<usize>| -> Vec<usize> {
        range.flat_map(|j| (0..n_classes).map(move |c| j * n_classes + c)).collect()
    };
    Ok(Splits {
        train: all.subset(&ids(0..train), Split::Train)?,
        query: all.subset(&ids(train..train + query), Split::Query)?,
        gallery: all.subset(&ids(train + query..total), Split::Gallery)?,
    })
}
