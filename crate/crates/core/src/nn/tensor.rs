use crate::datasets::ImageShape;

/// Dense `channels × height × width` array.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(channels: usize, height: usize, width: usize) -> Self {
        Self {
            channels,
            height,
            width,
            data: vec![0.0; channels * height * width],
        }
    }

    pub fn from_vec(channels: usize, height: usize, width: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), channels * height * width, "tensor data length");
        Self {
            channels,
            height,
            width,
            data,
        }
    }

    /// Converts interleaved `H × W × C` pixels to planar layout.
    pub fn from_hwc(pixels: &[f32], shape: ImageShape) -> Self {
        let ImageShape {
            height,
            width,
            channels,
        } = shape;
        let mut t = Self::zeros(channels, height, width);
        let plane = height * width;
        for (p, px) in pixels.chunks_exact(channels).enumerate() {
            for (c, v) in px.iter().enumerate() {
                t.data[c * plane + p] = *v as f64;
            }
        }
        t
    }

    pub fn to_hwc(&self) -> Vec<f64> {
        let plane = self.height * self.width;
        let mut out = vec![0.0; self.data.len()];
        for c in 0..self.channels {
            for p in 0..plane {
                out[p * self.channels + c] = self.data[c * plane + p];
            }
        }
        out
    }

    pub fn plane(&self) -> usize {
        self.height * self.width
    }

    pub fn same_shape(&self, other: &Tensor) -> bool {
        self.channels == other.channels && self.height == other.height && self.width == other.width
    }

    pub fn add_assign(&mut self, other: &Tensor) {
        debug_assert!(self.same_shape(other));
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }
}
