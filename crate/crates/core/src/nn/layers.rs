use super::Tensor;

/// Hands out contiguous parameter ranges while a network is being laid out.
#[derive(Debug, Default)]
pub struct ParamAllocator {
    len: usize,
}

impl ParamAllocator {
    pub fn alloc(&mut self, n: usize) -> usize {
        let off = self.len;
        self.len += n;
        off
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }
}

/// Stride-1 convolution with odd square kernels and "same" zero padding.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Conv2d {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
    pub weight: usize,
    pub bias: usize,
}

impl Conv2d {
    pub fn new(alloc: &mut ParamAllocator, in_channels: usize, out_channels: usize, kernel: usize) -> Self {
        assert!(kernel % 2 == 1, "kernel size must be odd");
        let weight = alloc.alloc(out_channels * in_channels * kernel * kernel);
        let bias = alloc.alloc(out_channels);
        Self {
            in_channels,
            out_channels,
            kernel,
            weight,
            bias,
        }
    }

    pub fn weight_len(&self) -> usize {
        self.out_channels * self.in_channels * self.kernel * self.kernel
    }

    pub fn fan_in(&self) -> usize {
        self.in_channels * self.kernel * self.kernel
    }

    fn w_index(&self, o: usize, i: usize, ky: usize, kx: usize) -> usize {
        self.weight + ((o * self.in_channels + i) * self.kernel + ky) * self.kernel + kx
    }

    /// Valid output rows/cols for a kernel offset `d` on an axis of length `n`.
    fn span(d: isize, n: usize) -> (usize, usize) {
        let lo = (-d).max(0) as usize;
        let hi = (n as isize - d).min(n as isize).max(0) as usize;
        (lo, hi.max(lo))
    }

    pub fn forward(&self, params: &[f64], x: &Tensor) -> Tensor {
        assert_eq!(x.channels, self.in_channels, "conv input channels");
        let (h, w) = (x.height, x.width);
        let pad = (self.kernel / 2) as isize;
        let mut y = Tensor::zeros(self.out_channels, h, w);
        let plane = h * w;
        for o in 0..self.out_channels {
            let out = &mut y.data[o * plane..(o + 1) * plane];
            out.fill(params[self.bias + o]);
            for i in 0..self.in_channels {
                let inp = &x.data[i * plane..(i + 1) * plane];
                for ky in 0..self.kernel {
                    let dy = ky as isize - pad;
                    let (y0, y1) = Self::span(dy, h);
                    for kx in 0..self.kernel {
                        let dx = kx as isize - pad;
                        let (x0, x1) = Self::span(dx, w);
                        let wv = params[self.w_index(o, i, ky, kx)];
                        for r in y0..y1 {
                            let src_r = (r as isize + dy) as usize;
                            let orow = &mut out[r * w + x0..r * w + x1];
                            let src0 = (x0 as isize + dx) as usize;
                            let irow = &inp[src_r * w + src0..src_r * w + src0 + (x1 - x0)];
                            for (a, b) in orow.iter_mut().zip(irow) {
                                *a += wv * b;
                            }
                        }
                    }
                }
            }
        }
        y
    }

    /// Accumulates parameter gradients into `grads` and returns the input gradient.
    pub fn backward(&self, params: &[f64], x: &Tensor, gy: &Tensor, grads: &mut [f64]) -> Tensor {
        let (h, w) = (x.height, x.width);
        let pad = (self.kernel / 2) as isize;
        let plane = h * w;
        let mut gx = Tensor::zeros(self.in_channels, h, w);
        for o in 0..self.out_channels {
            let g = &gy.data[o * plane..(o + 1) * plane];
            grads[self.bias + o] += g.iter().sum::<f64>();
            for i in 0..self.in_channels {
                let inp = &x.data[i * plane..(i + 1) * plane];
                let gin = &mut gx.data[i * plane..(i + 1) * plane];
                for ky in 0..self.kernel {
                    let dy = ky as isize - pad;
                    let (y0, y1) = Self::span(dy, h);
                    for kx in 0..self.kernel {
                        let dx = kx as isize - pad;
                        let (x0, x1) = Self::span(dx, w);
                        let wi = self.w_index(o, i, ky, kx);
                        let wv = params[wi];
                        let mut gw = 0.0;
                        for r in y0..y1 {
                            let src_r = (r as isize + dy) as usize;
                            let src0 = (x0 as isize + dx) as usize;
                            let grow = &g[r * w + x0..r * w + x1];
                            let irow = &inp[src_r * w + src0..src_r * w + src0 + (x1 - x0)];
                            let girow = &mut gin[src_r * w + src0..src_r * w + src0 + (x1 - x0)];
                            for ((gv, iv), gi) in grow.iter().zip(irow).zip(girow.iter_mut()) {
                                gw += gv * iv;
                                *gi += wv * gv;
                            }
                        }
                        grads[wi] += gw;
                    }
                }
            }
        }
        gx
    }
}

/// Fully connected layer, `y = W x + b` with `W` stored row-major `out × in`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Linear {
    pub in_features: usize,
    pub out_features: usize,
    pub weight: usize,
    pub bias: usize,
}

impl Linear {
    pub fn new(alloc: &mut ParamAllocator, in_features: usize, out_features: usize) -> Self {
        let weight = alloc.alloc(in_features * out_features);
        let bias = alloc.alloc(out_features);
        Self {
            in_features,
            out_features,
            weight,
            bias,
        }
    }

    pub fn weight_len(&self) -> usize {
        self.in_features * self.out_features
    }

    pub fn param_range(&self) -> std::ops::Range<usize> {
        // bias is allocated directly after the weights
        self.weight..self.bias + self.out_features
    }

    pub fn forward(&self, params: &[f64], x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.in_features, "linear input length");
        (0..self.out_features)
            .map(|o| {
                let row = &params[self.weight + o * self.in_features..self.weight + (o + 1) * self.in_features];
                params[self.bias + o] + row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>()
            })
            .collect()
    }

    pub fn backward(&self, params: &[f64], x: &[f64], gy: &[f64], grads: &mut [f64]) -> Vec<f64> {
        let mut gx = vec![0.0; self.in_features];
        for (o, &g) in gy.iter().enumerate() {
            grads[self.bias + o] += g;
            let base = self.weight + o * self.in_features;
            for (k, &xv) in x.iter().enumerate() {
                grads[base + k] += g * xv;
                gx[k] += g * params[base + k];
            }
        }
        gx
    }
}

pub fn relu(x: &mut [f64]) {
    for v in x {
        if *v < 0.0 {
            *v = 0.0;
        }
    }
}

/// Masks `g` by the positive entries of the ReLU output `y`.
pub fn relu_backward(y: &[f64], g: &mut [f64]) {
    for (gv, &yv) in g.iter_mut().zip(y) {
        if yv <= 0.0 {
            *gv = 0.0;
        }
    }
}

/// 2×2 max pooling with stride 2. Returns the pooled tensor and, for each
/// output cell, the flat input index of its maximum (first on ties).
pub fn max_pool2(x: &Tensor) -> (Tensor, Vec<usize>) {
    let (oh, ow) = (x.height / 2, x.width / 2);
    let mut y = Tensor::zeros(x.channels, oh, ow);
    let mut arg = vec![0usize; y.data.len()];
    for c in 0..x.channels {
        let base = c * x.plane();
        for r in 0..oh {
            for col in 0..ow {
                let mut best = base + 2 * r * x.width + 2 * col;
                for (dr, dc) in [(0, 1), (1, 0), (1, 1)] {
                    let idx = base + (2 * r + dr) * x.width + 2 * col + dc;
                    if x.data[idx] > x.data[best] {
                        best = idx;
                    }
                }
                let o = c * oh * ow + r * ow + col;
                y.data[o] = x.data[best];
                arg[o] = best;
            }
        }
    }
    (y, arg)
}

pub fn max_pool2_backward(input: &Tensor, argmax: &[usize], gy: &Tensor) -> Tensor {
    let mut gx = Tensor::zeros(input.channels, input.height, input.width);
    for (&idx, &g) in argmax.iter().zip(&gy.data) {
        gx.data[idx] += g;
    }
    gx
}

/// Nearest-neighbour 2× upsampling.
pub fn upsample2(x: &Tensor) -> Tensor {
    let (oh, ow) = (x.height * 2, x.width * 2);
    let mut y = Tensor::zeros(x.channels, oh, ow);
    for c in 0..x.channels {
        for r in 0..oh {
            for col in 0..ow {
                y.data[c * oh * ow + r * ow + col] = x.data[c * x.plane() + (r / 2) * x.width + col / 2];
            }
        }
    }
    y
}

pub fn upsample2_backward(gy: &Tensor) -> Tensor {
    let mut gx = Tensor::zeros(gy.channels, gy.height / 2, gy.width / 2);
    let plane = gx.plane();
    for c in 0..gy.channels {
        for r in 0..gy.height {
            for col in 0..gy.width {
                gx.data[c * plane + (r / 2) * gx.width + col / 2] += gy.data[c * gy.plane() + r * gy.width + col];
            }
        }
    }
    gx
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_tensor(rng: &mut ChaCha8Rng, c: usize, h: usize, w: usize) -> Tensor {
        Tensor::from_vec(c, h, w, (0..c * h * w).map(|_| rng.random_range(-1.0..1.0)).collect())
    }

    /// Direct definition of the padded convolution.
    fn conv_oracle(conv: &Conv2d, p: &[f64], x: &Tensor) -> Tensor {
        let pad = (conv.kernel / 2) as isize;
        let mut y = Tensor::zeros(conv.out_channels, x.height, x.width);
        for o in 0..conv.out_channels {
            for r in 0..x.height as isize {
                for c in 0..x.width as isize {
                    let mut acc = p[conv.bias + o];
                    for i in 0..conv.in_channels {
                        for ky in 0..conv.kernel {
                            for kx in 0..conv.kernel {
                                let (sr, sc) = (r + ky as isize - pad, c + kx as isize - pad);
                                if sr >= 0 && sc >= 0 && (sr as usize) < x.height && (sc as usize) < x.width {
                                    acc += p[conv.w_index(o, i, ky, kx)]
                                        * x.data[i * x.plane() + sr as usize * x.width + sc as usize];
                                }
                            }
                        }
                    }
                    y.data[o * x.plane() + r as usize * x.width + c as usize] = acc;
                }
            }
        }
        y
    }

    #[test]
    fn conv_matches_direct_definition() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut alloc = ParamAllocator::default();
        let conv = Conv2d::new(&mut alloc, 2, 3, 3);
        let p: Vec<f64> = (0..alloc.len()).map(|_| rng.random_range(-1.0..1.0)).collect();
        let x = random_tensor(&mut rng, 2, 5, 4);
        let fast = conv.forward(&p, &x);
        let slow = conv_oracle(&conv, &p, &x);
        for (a, b) in fast.data.iter().zip(&slow.data) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn conv_backward_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut alloc = ParamAllocator::default();
        let conv = Conv2d::new(&mut alloc, 2, 2, 3);
        let mut p: Vec<f64> = (0..alloc.len()).map(|_| rng.random_range(-1.0..1.0)).collect();
        let mut x = random_tensor(&mut rng, 2, 4, 4);
        let gy = random_tensor(&mut rng, 2, 4, 4);
        let loss = |p: &[f64], x: &Tensor| -> f64 {
            conv.forward(p, x).data.iter().zip(&gy.data).map(|(a, b)| a * b).sum()
        };
        let mut grads = vec![0.0; p.len()];
        let gx = conv.backward(&p, &x, &gy, &mut grads);
        let h = 1e-5;
        for k in 0..p.len() {
            let orig = p[k];
            p[k] = orig + h;
            let up = loss(&p, &x);
            p[k] = orig - h;
            let dn = loss(&p, &x);
            p[k] = orig;
            assert!(((up - dn) / (2.0 * h) - grads[k]).abs() < 1e-8);
        }
        for k in 0..x.data.len() {
            let orig = x.data[k];
            x.data[k] = orig + h;
            let up = loss(&p, &x);
            x.data[k] = orig - h;
            let dn = loss(&p, &x);
            x.data[k] = orig;
            assert!(((up - dn) / (2.0 * h) - gx.data[k]).abs() < 1e-8);
        }
    }

    #[test]
    fn pool_and_upsample_shapes() {
        let x = Tensor::from_vec(1, 2, 2, vec![1.0, 4.0, 3.0, 2.0]);
        let (y, arg) = max_pool2(&x);
        assert_eq!(y.data, vec![4.0]);
        assert_eq!(arg, vec![1]);
        let g = max_pool2_backward(&x, &arg, &Tensor::from_vec(1, 1, 1, vec![2.0]));
        assert_eq!(g.data, vec![0.0, 2.0, 0.0, 0.0]);
        let up = upsample2(&y);
        assert_eq!(up.data, vec![4.0; 4]);
        assert_eq!(upsample2_backward(&up).data, vec![16.0]);
    }

    #[test]
    fn linear_forward_backward() {
        let mut alloc = ParamAllocator::default();
        let lin = Linear::new(&mut alloc, 2, 1);
        let p = vec![2.0, -1.0, 0.5];
        assert_eq!(lin.forward(&p, &[1.0, 3.0]), vec![-0.5]);
        let mut g = vec![0.0; 3];
        let gx = lin.backward(&p, &[1.0, 3.0], &[1.0], &mut g);
        assert_eq!(g, vec![1.0, 3.0, 1.0]);
        assert_eq!(gx, vec![2.0, -1.0]);
        assert_eq!(lin.param_range(), 0..3);
    }
}
