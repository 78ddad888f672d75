//! Attention network: a small convolutional encoder-decoder that maps an
//! image to a single-channel saliency map, the min-max normalization of
//! that map, and its pixelwise application to the image.
//!
//! The encoder has `depth` blocks of conv → ReLU → 2×2 max-pool. The decoder
//! mirrors it with nearest 2× upsampling → conv, and fuses the encoder
//! output one level above the bottleneck into the first decoder block by
//! addition. The last decoder conv emits one linear channel.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::datasets::ImageShape;
use crate::error::{Error, Result};
use crate::nn::{self, Conv2d, ParamAllocator, Tensor};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AttentionConfig {
    pub input: ImageShape,
    /// Encoder widths; the number of entries is the depth.
    pub channels: Vec<usize>,
    pub kernel_size: usize,
}

impl AttentionConfig {
    pub fn validate(&self) -> Result<()> {
        let depth = self.channels.len();
        if depth == 0 || self.channels.contains(&0) {
            return Err(Error::invalid("attention channels must be non-empty and positive"));
        }
        if self.kernel_size % 2 == 0 {
            return Err(Error::invalid("attention kernel_size must be odd"));
        }
        let div = 1usize << depth;
        if self.input.height % div != 0 || self.input.width % div != 0 || self.input.height == 0 {
            return Err(Error::invalid(format!(
                "attention input {} must have height and width divisible by {div}",
                self.input
            )));
        }
        Ok(())
    }
}

/// Single-channel map over image pixels, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionMap {
    pub height: usize,
    pub width: usize,
    pub values: Vec<f64>,
}

impl AttentionMap {
    pub fn new(height: usize, width: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != height * width {
            return Err(Error::invalid(format!(
                "attention map of {}x{} needs {} values, got {}",
                height,
                width,
                height * width,
                values.len()
            )));
        }
        Ok(Self {
            height,
            width,
            values,
        })
    }

    pub fn filled(height: usize, width: usize, value: f64) -> Self {
        Self {
            height,
            width,
            values: vec![value; height * width],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttentionNet {
    config: AttentionConfig,
    encoders: Vec<Conv2d>,
    decoders: Vec<Conv2d>,
    params: Vec<f64>,
}

/// Intermediate values kept for the backward pass.
#[derive(Debug, Clone)]
pub struct AttentionCache {
    enc_in: Vec<Tensor>,
    enc_act: Vec<Tensor>,
    enc_arg: Vec<Vec<usize>>,
    dec_in: Vec<Tensor>,
    dec_act: Vec<Option<Tensor>>,
}

impl AttentionNet {
    /// Lays out the network and draws fan-in scaled normal weights.
    pub fn new<R: Rng>(config: AttentionConfig, rng: &mut R) -> Result<Self> {
        let mut net = Self::zeroed(config)?;
        for conv in net.encoders.iter().chain(&net.decoders) {
            let std = (2.0 / conv.fan_in() as f64).sqrt();
            nn::fill_normal(&mut net.params[conv.weight..conv.weight + conv.weight_len()], std, rng);
        }
        Ok(net)
    }

    /// Network with every parameter set to zero.
    pub fn zeroed(config: AttentionConfig) -> Result<Self> {
        config.validate()?;
        let mut alloc = ParamAllocator::default();
        let k = config.kernel_size;
        let mut prev = config.input.channels;
        let encoders: Vec<Conv2d> = config
            .channels
            .iter()
            .map(|&c| {
                let conv = Conv2d::new(&mut alloc, prev, c, k);
                prev = c;
                conv
            })
            .collect();
        let decoders = (0..config.channels.len())
            .map(|l| {
                let out = if l == 0 { 1 } else { config.channels[l - 1] };
                Conv2d::new(&mut alloc, config.channels[l], out, k)
            })
            .collect();
        Ok(Self {
            config,
            encoders,
            decoders,
            params: vec![0.0; alloc.len()],
        })
    }

    pub fn config(&self) -> &AttentionConfig {
        &self.config
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn set_params(&mut self, params: Vec<f64>) -> Result<()> {
        if params.len() != self.params.len() {
            return Err(Error::invalid(format!(
                "attention network expects {} parameters, got {}",
                self.params.len(),
                params.len()
            )));
        }
        self.params = params;
        Ok(())
    }

    /// Parameter range of the output convolution.
    pub fn output_layer(&self) -> std::ops::Range<usize> {
        let c = &self.decoders[0];
        c.weight..c.bias + c.out_channels
    }

    fn check_input(&self, image: &Tensor) -> Result<()> {
        let s = self.config.input;
        if image.channels != s.channels || image.height != s.height || image.width != s.width {
            return Err(Error::invalid(format!(
                "attention network expects {s} input, got {}x{}x{}",
                image.height, image.width, image.channels
            )));
        }
        Ok(())
    }

    /// Raw (unnormalized) attention map plus the backward cache.
    pub fn forward(&self, image: &Tensor) -> Result<(AttentionMap, AttentionCache)> {
        self.check_input(image)?;
        let p = &self.params;
        let depth = self.encoders.len();
        let mut cache = AttentionCache {
            enc_in: Vec::with_capacity(depth),
            enc_act: Vec::with_capacity(depth),
            enc_arg: Vec::with_capacity(depth),
            dec_in: vec![Tensor::zeros(0, 0, 0); depth],
            dec_act: vec![None; depth],
        };
        let mut enc_out = Vec::with_capacity(depth);
        let mut x = image.clone();
        for conv in &self.encoders {
            let mut a = conv.forward(p, &x);
            nn::relu(&mut a.data);
            let (pooled, arg) = nn::max_pool2(&a);
            cache.enc_in.push(x);
            cache.enc_act.push(a);
            cache.enc_arg.push(arg);
            enc_out.push(pooled.clone());
            x = pooled;
        }
        for l in (0..depth).rev() {
            let up = nn::upsample2(&x);
            let mut y = self.decoders[l].forward(p, &up);
            cache.dec_in[l] = up;
            if l > 0 {
                nn::relu(&mut y.data);
                cache.dec_act[l] = Some(y.clone());
                if l == depth - 1 && depth >= 2 {
                    y.add_assign(&enc_out[depth - 2]);
                }
            }
            x = y;
        }
        let map = AttentionMap {
            height: x.height,
            width: x.width,
            values: x.data,
        };
        Ok((map, cache))
    }

    /// Accumulates parameter gradients for `d loss / d map` and returns the
    /// gradient with respect to the input image.
    pub fn backward(&self, cache: &AttentionCache, grad_map: &[f64], grads: &mut [f64]) -> Tensor {
        let p = &self.params;
        let depth = self.encoders.len();
        let s = self.config.input;
        let mut g = Tensor::from_vec(1, s.height, s.width, grad_map.to_vec());
        let mut skip_grad = None;
        for l in 0..depth {
            if l > 0 {
                if l == depth - 1 && depth >= 2 {
                    skip_grad = Some(g.clone());
                }
                let act = cache.dec_act[l].as_ref().expect("cached decoder activation");
                nn::relu_backward(&act.data, &mut g.data);
            }
            let gin = self.decoders[l].backward(p, &cache.dec_in[l], &g, grads);
            g = nn::upsample2_backward(&gin);
        }
        for l in (0..depth).rev() {
            if depth >= 2 && l == depth - 2 {
                g.add_assign(skip_grad.as_ref().expect("skip gradient recorded"));
            }
            let mut ga = nn::max_pool2_backward(&cache.enc_act[l], &cache.enc_arg[l], &g);
            nn::relu_backward(&cache.enc_act[l].data, &mut ga.data);
            g = self.encoders[l].backward(p, &cache.enc_in[l], &ga, grads);
        }
        g
    }
}

/// Raw attention map for `image`.
pub fn attention_forward(image: &Tensor, net: &AttentionNet) -> Result<AttentionMap> {
    net.forward(image).map(|(m, _)| m)
}

fn min_max(values: &[f64]) -> (usize, usize) {
    let mut lo = 0;
    let mut hi = 0;
    for (i, &v) in values.iter().enumerate() {
        if v < values[lo] {
            lo = i;
        }
        if v > values[hi] {
            hi = i;
        }
    }
    (lo, hi)
}

/// Rescales a map to `[0, 1]` by its own minimum and maximum. A constant
/// map becomes all 0.5.
pub fn normalize_map(map: &AttentionMap) -> AttentionMap {
    let (lo, hi) = min_max(&map.values);
    let (min, max) = (map.values[lo], map.values[hi]);
    let range = max - min;
    let values = if range > 0.0 {
        map.values.iter().map(|v| (v - min) / range).collect()
    } else {
        vec![0.5; map.values.len()]
    };
    AttentionMap {
        height: map.height,
        width: map.width,
        values,
    }
}

/// Gradient of a loss through [`normalize_map`], given `d loss / d output`.
/// The minimum and maximum are attributed to their first occurrence.
pub fn normalize_map_backward(map: &AttentionMap, grad_out: &[f64]) -> Vec<f64> {
    let (lo, hi) = min_max(&map.values);
    let (min, max) = (map.values[lo], map.values[hi]);
    let range = max - min;
    if range <= 0.0 {
        return vec![0.0; grad_out.len()];
    }
    let mut g: Vec<f64> = grad_out.iter().map(|go| go / range).collect();
    let total: f64 = grad_out.iter().sum();
    let weighted: f64 = grad_out
        .iter()
        .zip(&map.values)
        .map(|(go, v)| go * (v - min) / range)
        .sum();
    g[lo] += (weighted - total) / range;
    g[hi] -= weighted / range;
    g
}

fn check_map_shape(image: &Tensor, map: &AttentionMap) -> Result<()> {
    if image.height != map.height || image.width != map.width {
        return Err(Error::invalid(format!(
            "attention map {}x{} does not match image {}x{}",
            map.height, map.width, image.height, image.width
        )));
    }
    Ok(())
}

/// Hadamard product of the image with a single-channel map broadcast over
/// colour channels.
pub fn apply_attention(image: &Tensor, norm_map: &AttentionMap) -> Result<Tensor> {
    check_map_shape(image, norm_map)?;
    let plane = image.plane();
    let mut out = image.clone();
    for c in 0..image.channels {
        for (v, m) in out.data[c * plane..(c + 1) * plane].iter_mut().zip(&norm_map.values) {
            *v *= m;
        }
    }
    Ok(out)
}

/// Returns `(d loss / d image, d loss / d map)` for [`apply_attention`].
pub fn apply_attention_backward(image: &Tensor, norm_map: &AttentionMap, grad_out: &Tensor) -> (Tensor, Vec<f64>) {
    let plane = image.plane();
    let mut g_img = grad_out.clone();
    let mut g_map = vec![0.0; plane];
    for c in 0..image.channels {
        let range = c * plane..(c + 1) * plane;
        for (p, (gi, x)) in g_img.data[range.clone()].iter_mut().zip(&image.data[range]).enumerate() {
            g_map[p] += *gi * x;
            *gi *= norm_map.values[p];
        }
    }
    (g_img, g_map)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn config(h: usize, w: usize, channels: Vec<usize>) -> AttentionConfig {
        AttentionConfig {
            input: ImageShape::new(h, w, 3),
            channels,
            kernel_size: 3,
        }
    }

    fn random_image(rng: &mut ChaCha8Rng, c: usize, h: usize, w: usize) -> Tensor {
        Tensor::from_vec(c, h, w, (0..c * h * w).map(|_| rng.random_range(0.0..1.0)).collect())
    }

    #[test]
    fn normalize_examples() {
        let m = AttentionMap::new(2, 2, vec![0.0, 2.0, 1.0, 2.0]).unwrap();
        assert_eq!(normalize_map(&m).values, vec![0.0, 1.0, 0.5, 1.0]);
        let c = AttentionMap::filled(3, 3, 4.2);
        assert!(normalize_map(&c).values.iter().all(|&v| v == 0.5));
        let n = AttentionMap::new(1, 3, vec![0.0, 0.25, 1.0]).unwrap();
        assert_eq!(normalize_map(&n), n);
    }

    #[test]
    fn apply_examples() {
        let img = Tensor::from_vec(2, 1, 2, vec![0.8, 0.2, 0.6, 1.0]);
        assert_eq!(apply_attention(&img, &AttentionMap::filled(1, 2, 1.0)).unwrap(), img);
        assert!(apply_attention(&img, &AttentionMap::filled(1, 2, 0.0)).unwrap().data.iter().all(|&v| v == 0.0));
        let half = AttentionMap::new(1, 2, vec![0.5, 1.0]).unwrap();
        let out = apply_attention(&img, &half).unwrap();
        assert!((out.data[0] - 0.4).abs() < 1e-15);
        assert!((out.data[2] - 0.3).abs() < 1e-15);
        assert!(apply_attention(&img, &AttentionMap::filled(2, 2, 1.0)).is_err());
    }

    #[test]
    fn output_matches_input_spatial_shape() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for (h, w, ch) in [(8, 8, vec![4]), (16, 8, vec![4, 6]), (32, 32, vec![4, 8, 8])] {
            let net = AttentionNet::new(config(h, w, ch), &mut rng).unwrap();
            let img = random_image(&mut rng, 3, h, w);
            let m = attention_forward(&img, &net).unwrap();
            assert_eq!((m.height, m.width, m.values.len()), (h, w, h * w));
        }
    }

    #[test]
    fn zero_output_layer_gives_constant_map() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut net = AttentionNet::new(config(8, 8, vec![4, 4]), &mut rng).unwrap();
        let range = net.output_layer();
        let bias_at = range.end - 1;
        for i in range {
            net.params_mut()[i] = 0.0;
        }
        net.params_mut()[bias_at] = 0.7;
        let m = attention_forward(&random_image(&mut rng, 3, 8, 8), &net).unwrap();
        assert!(m.values.iter().all(|&v| v == 0.7));
    }

    #[test]
    fn rejects_mismatched_input() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let net = AttentionNet::new(config(8, 8, vec![4]), &mut rng).unwrap();
        assert!(matches!(
            attention_forward(&random_image(&mut rng, 3, 4, 8), &net),
            Err(Error::InvalidInput(_))
        ));
        assert!(AttentionNet::new(config(12, 12, vec![2, 2, 2]), &mut rng).is_err());
    }

    #[test]
    fn normalize_backward_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let values: Vec<f64> = (0..12).map(|_| rng.random_range(-2.0..2.0)).collect();
        let weights: Vec<f64> = (0..12).map(|_| rng.random_range(-1.0..1.0)).collect();
        let mut map = AttentionMap::new(3, 4, values).unwrap();
        let loss = |m: &AttentionMap| -> f64 {
            normalize_map(m).values.iter().zip(&weights).map(|(a, b)| a * b).sum()
        };
        let g = normalize_map_backward(&map, &weights);
        let h = 1e-6;
        for k in 0..12 {
            let orig = map.values[k];
            map.values[k] = orig + h;
            let up = loss(&map);
            map.values[k] = orig - h;
            let dn = loss(&map);
            map.values[k] = orig;
            assert!(((up - dn) / (2.0 * h) - g[k]).abs() < 1e-7, "k={k}");
        }
    }

    proptest! {
        #[test]
        fn normalize_ignores_positive_affine_maps(
            values in prop::collection::vec(-5.0f64..5.0, 2..20),
            scale in 0.1f64..10.0,
            shift in -3.0f64..3.0,
        ) {
            let n = values.len();
            let m = AttentionMap::new(1, n, values.clone()).unwrap();
            let t = AttentionMap::new(1, n, values.iter().map(|v| scale * v + shift).collect()).unwrap();
            for (a, b) in normalize_map(&m).values.iter().zip(&normalize_map(&t).values) {
                prop_assert!((a - b).abs() < 1e-9);
            }
            prop_assert!(normalize_map(&m).values.iter().all(|v| (0.0..=1.0).contains(v)));
        }

        #[test]
        fn attention_never_amplifies(
            pixels in prop::collection::vec(0.0f64..1.0, 12),
            raw in prop::collection::vec(-3.0f64..3.0, 4),
        ) {
            let img = Tensor::from_vec(3, 2, 2, pixels.clone());
            let map = normalize_map(&AttentionMap::new(2, 2, raw).unwrap());
            let max = pixels.iter().cloned().fold(0.0, f64::max);
            let out = apply_attention(&img, &map).unwrap();
            for (o, i) in out.data.iter().zip(&pixels) {
                prop_assert!(*o >= 0.0 && *o <= *i && *o <= max);
            }
        }
    }
}
