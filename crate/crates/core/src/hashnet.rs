//! Hashing networks and code quantization.
//!
//! A hashing network is a small CNN (conv → ReLU → 2×2 max-pool blocks, an
//! optional hidden fully connected layer) topped by the `fch` layer that
//! emits `K` real values per image. Training relaxes `sign` with
//! `tanh(β·ω)` while β grows epoch by epoch.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::attention::{apply_attention, attention_forward, normalize_map, AttentionNet};
use crate::datasets::ImageShape;
use crate::error::{Error, Result};
use crate::nn::{self, Conv2d, Linear, ParamAllocator, Tensor};

/// Standard deviation used to initialize the `fch` weights.
pub const FCH_INIT_STD: f64 = 0.01;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HashNetConfig {
    pub input: ImageShape,
    pub conv_channels: Vec<usize>,
    pub kernel_size: usize,
    /// Width of the hidden fully connected layer; 0 disables it.
    pub hidden: usize,
    pub code_length: usize,
}

impl HashNetConfig {
    pub fn validate(&self) -> Result<()> {
        if self.code_length == 0 {
            return Err(Error::invalid("code_length must be at least 1"));
        }
        if self.conv_channels.contains(&0) {
            return Err(Error::invalid("conv_channels must be positive"));
        }
        if self.kernel_size % 2 == 0 {
            return Err(Error::invalid("hash kernel_size must be odd"));
        }
        let div = 1usize << self.conv_channels.len();
        if self.input.height % div != 0 || self.input.width % div != 0 || self.input.height == 0 {
            return Err(Error::invalid(format!(
                "hash input {} must have height and width divisible by {div}",
                self.input
            )));
        }
        Ok(())
    }

    fn feature_len(&self) -> usize {
        let div = 1usize << self.conv_channels.len();
        let c = self.conv_channels.last().copied().unwrap_or(self.input.channels);
        c * (self.input.height / div) * (self.input.width / div)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HashNet {
    config: HashNetConfig,
    convs: Vec<Conv2d>,
    hidden: Option<Linear>,
    fch: Linear,
    params: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct HashCache {
    conv_in: Vec<Tensor>,
    conv_act: Vec<Tensor>,
    conv_arg: Vec<Vec<usize>>,
    features: Vec<f64>,
    hidden_act: Option<Vec<f64>>,
}

impl HashNet {
    /// Fan-in scaled normal weights for the backbone, `N(0, 0.01²)` for `fch`,
    /// zero biases.
    pub fn new<R: Rng>(config: HashNetConfig, rng: &mut R) -> Result<Self> {
        let mut net = Self::zeroed(config)?;
        for conv in net.convs.clone() {
            let std = (2.0 / conv.fan_in() as f64).sqrt();
            nn::fill_normal(&mut net.params[conv.weight..conv.weight + conv.weight_len()], std, rng);
        }
        if let Some(h) = net.hidden {
            let std = (2.0 / h.in_features as f64).sqrt();
            nn::fill_normal(&mut net.params[h.weight..h.weight + h.weight_len()], std, rng);
        }
        let f = net.fch;
        nn::fill_normal(&mut net.params[f.weight..f.weight + f.weight_len()], FCH_INIT_STD, rng);
        Ok(net)
    }

    pub fn zeroed(config: HashNetConfig) -> Result<Self> {
        config.validate()?;
        let mut alloc = ParamAllocator::default();
        let mut prev = config.input.channels;
        let convs = config
            .conv_channels
            .iter()
            .map(|&c| {
                let conv = Conv2d::new(&mut alloc, prev, c, config.kernel_size);
                prev = c;
                conv
            })
            .collect();
        let mut width = config.feature_len();
        let hidden = (config.hidden > 0).then(|| {
            let l = Linear::new(&mut alloc, width, config.hidden);
            width = config.hidden;
            l
        });
        let fch = Linear::new(&mut alloc, width, config.code_length);
        Ok(Self {
            config,
            convs,
            hidden,
            fch,
            params: vec![0.0; alloc.len()],
        })
    }

    pub fn config(&self) -> &HashNetConfig {
        &self.config
    }

    pub fn code_length(&self) -> usize {
        self.config.code_length
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
                "hash network expects {} parameters, got {}",
                self.params.len(),
                params.len()
            )));
        }
        self.params = params;
        Ok(())
    }

    /// Parameter range of the `fch` layer (weights then biases).
    pub fn fch_range(&self) -> std::ops::Range<usize> {
        self.fch.param_range()
    }

    fn check_input(&self, image: &Tensor) -> Result<()> {
        let s = self.config.input;
        if image.channels != s.channels || image.height != s.height || image.width != s.width {
            return Err(Error::invalid(format!(
                "hash network expects {s} input, got {}x{}x{}",
                image.height, image.width, image.channels
            )));
        }
        Ok(())
    }

    /// Raw `fch` output ω and the backward cache.
    pub fn forward(&self, image: &Tensor) -> Result<(Vec<f64>, HashCache)> {
        self.check_input(image)?;
        let p = &self.params;
        let n = self.convs.len();
        let mut cache = HashCache {
            conv_in: Vec::with_capacity(n),
            conv_act: Vec::with_capacity(n),
            conv_arg: Vec::with_capacity(n),
            features: Vec::new(),
            hidden_act: None,
        };
        let mut x = image.clone();
        for conv in &self.convs {
            let mut a = conv.forward(p, &x);
            nn::relu(&mut a.data);
            let (pooled, arg) = nn::max_pool2(&a);
            cache.conv_in.push(x);
            cache.conv_act.push(a);
            cache.conv_arg.push(arg);
            x = pooled;
        }
        cache.features = x.data;
        let mut z = cache.features.clone();
        if let Some(h) = &self.hidden {
            z = h.forward(p, &z);
            nn::relu(&mut z);
            cache.hidden_act = Some(z.clone());
        }
        let omega = self.fch.forward(p, &z);
        Ok((omega, cache))
    }

    /// Accumulates parameter gradients for `d loss / d ω`; returns the
    /// input-image gradient.
    pub fn backward(&self, cache: &HashCache, grad_omega: &[f64], grads: &mut [f64]) -> Tensor {
        let p = &self.params;
        let fch_in = cache.hidden_act.as_ref().unwrap_or(&cache.features);
        let mut g = self.fch.backward(p, fch_in, grad_omega, grads);
        if let (Some(h), Some(act)) = (&self.hidden, &cache.hidden_act) {
            nn::relu_backward(act, &mut g);
            g = h.backward(p, &cache.features, &g, grads);
        }
        let s = self.config.input;
        let div = 1usize << self.convs.len();
        let c = self.config.conv_channels.last().copied().unwrap_or(s.channels);
        let mut gt = Tensor::from_vec(c, s.height / div, s.width / div, g);
        for l in (0..self.convs.len()).rev() {
            let mut ga = nn::max_pool2_backward(&cache.conv_act[l], &cache.conv_arg[l], &gt);
            nn::relu_backward(&cache.conv_act[l].data, &mut ga.data);
            gt = self.convs[l].backward(p, &cache.conv_in[l], &ga, grads);
        }
        gt
    }
}

/// Raw `fch` output ω for one image.
pub fn hash_forward(image: &Tensor, net: &HashNet) -> Result<Vec<f64>> {
    net.forward(image).map(|(w, _)| w)
}

/// A code over {−1, +1}.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct BinaryCode(Vec<i8>);

impl BinaryCode {
    pub fn new(bits: Vec<i8>) -> Result<Self> {
        if let Some(b) = bits.iter().find(|b| **b != 1 && **b != -1) {
            return Err(Error::invalid(format!("binary code entry {b} is not ±1")));
        }
        Ok(Self(bits))
    }

    pub fn as_slice(&self) -> &[i8] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn to_f64(&self) -> Vec<f64> {
        self.0.iter().map(|&b| b as f64).collect()
    }

    /// {−1, +1} → {0, 1}.
    pub fn to_targets(&self) -> Vec<u8> {
        self.0.iter().map(|&b| (b > 0) as u8).collect()
    }
}

/// Elementwise sign with `sign(0) = +1`.
pub fn sign_quantize(omega: &[f64]) -> BinaryCode {
    BinaryCode(omega.iter().map(|&w| if w >= 0.0 { 1 } else { -1 }).collect())
}

/// Adaptive tanh: returns `tanh(β·ω)` and the scalar penalty `ε / β²` that
/// the stage-1 objective carries as a separate additive term.
pub fn atanh_activate(omega: &[f64], beta: f64, epsilon: f64) -> Result<(Vec<f64>, f64)> {
    if !(beta.is_finite() && beta > 0.0) {
        return Err(Error::invalid(format!("beta must be positive, got {beta}")));
    }
    if !(epsilon.is_finite() && epsilon >= 0.0) {
        return Err(Error::invalid(format!("epsilon must be >= 0, got {epsilon}")));
    }
    let code = omega.iter().map(|w| (beta * w).tanh()).collect();
    Ok((code, epsilon / (beta * beta)))
}

/// Continuation schedule `β_t = min(β_max, g^t)`, so `β_0 = 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BetaSchedule {
    pub growth: f64,
    pub beta_max: f64,
}

impl Default for BetaSchedule {
    fn default() -> Self {
        Self {
            growth: 2.0,
            beta_max: 1024.0,
        }
    }
}

impl BetaSchedule {
    pub fn new(growth: f64, beta_max: f64) -> Result<Self> {
        let s = Self { growth, beta_max };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.growth.is_finite() && self.growth > 1.0) {
            return Err(Error::invalid(format!("beta growth must be > 1, got {}", self.growth)));
        }
        if !(self.beta_max >= 1.0) {
            return Err(Error::invalid(format!("beta_max must be >= 1, got {}", self.beta_max)));
        }
        Ok(())
    }

    /// β in effect during epoch `t` (0-based); after `T` completed epochs the
    /// schedule sits at `beta(T)`.
    pub fn beta(&self, epoch: usize) -> f64 {
        let exp = epoch.min(i32::MAX as usize) as i32;
        self.growth.powi(exp).min(self.beta_max)
    }
}

/// Code from the first stream: attention, normalization, Hadamard product,
/// first hashing network, sign.
pub fn encode_attention_guided(image: &Tensor, attention: &AttentionNet, hash: &HashNet) -> Result<BinaryCode> {
    let map = normalize_map(&attention_forward(image, attention)?);
    let attended = apply_attention(image, &map)?;
    Ok(sign_quantize(&hash_forward(&attended, hash)?))
}

/// Final code from the second hashing network; also used for unseen queries.
pub fn encode_final(image: &Tensor, hash: &HashNet) -> Result<BinaryCode> {
    Ok(sign_quantize(&hash_forward(image, hash)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::attention::AttentionConfig;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn config(k: usize) -> HashNetConfig {
        HashNetConfig {
            input: ImageShape::new(8, 8, 3),
            conv_channels: vec![4, 4],
            kernel_size: 3,
            hidden: 8,
            code_length: k,
        }
    }

    fn image(rng: &mut ChaCha8Rng, s: ImageShape) -> Tensor {
        Tensor::from_vec(
            s.channels,
            s.height,
            s.width,
            (0..s.len()).map(|_| rng.random_range(0.0..1.0)).collect(),
        )
    }

    #[test]
    fn output_length_is_code_length() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for k in [12, 24, 32, 48] {
            let net = HashNet::new(config(k), &mut rng).unwrap();
            let x = image(&mut rng, net.config().input);
            assert_eq!(hash_forward(&x, &net).unwrap().len(), k);
        }
    }

    #[test]
    fn zero_fch_weights_yield_bias() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut net = HashNet::new(config(4), &mut rng).unwrap();
        let r = net.fch_range();
        let w_len = net.fch.weight_len();
        for i in r.start..r.start + w_len {
            net.params_mut()[i] = 0.0;
        }
        let bias = [0.1, -0.2, 0.3, 0.0];
        net.params_mut()[r.start + w_len..r.end].copy_from_slice(&bias);
        let x = image(&mut rng, net.config().input);
        assert_eq!(hash_forward(&x, &net).unwrap(), bias.to_vec());
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let net = HashNet::new(config(4), &mut rng).unwrap();
        let x = image(&mut rng, ImageShape::new(4, 8, 3));
        assert!(matches!(hash_forward(&x, &net), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn sign_examples() {
        assert_eq!(sign_quantize(&[0.3, -0.2, 0.0]).as_slice(), &[1, -1, 1]);
        let w = [0.5, -1.5, 2.0, -0.1];
        let b = sign_quantize(&w);
        assert_eq!(sign_quantize(&b.to_f64()), b);
        let neg: Vec<f64> = w.iter().map(|v| -v).collect();
        let nb: Vec<i8> = b.as_slice().iter().map(|v| -v).collect();
        assert_eq!(sign_quantize(&neg).as_slice(), nb.as_slice());
    }

    #[test]
    fn atanh_examples() {
        let (code, penalty) = atanh_activate(&[0.0; 5], 1.0, 0.001).unwrap();
        assert_eq!(code, vec![0.0; 5]);
        assert_eq!(penalty, 0.001);
        let (code, _) = atanh_activate(&[0.1], 100.0, 0.0).unwrap();
        // 1 - tanh(10) = 2 / (e^20 + 1)
        assert!((1.0 - code[0] - 2.0 / (20f64.exp() + 1.0)).abs() < 1e-15);
        assert!((code[0] - 1.0).abs() < 1e-8);
        let (_, p) = atanh_activate(&[], 10.0, 0.001).unwrap();
        assert!((p - 1e-5).abs() < 1e-20);
        assert!(atanh_activate(&[1.0], 0.0, 0.001).is_err());
        assert!(atanh_activate(&[1.0], -2.0, 0.001).is_err());
    }

    #[test]
    fn beta_schedule_values() {
        let s = BetaSchedule::default();
        let seq: Vec<f64> = (0..12).map(|t| s.beta(t)).collect();
        assert_eq!(seq[..11], [1.0, 2.0, 4.0, 8.0, 16.0, 32.0, 64.0, 128.0, 256.0, 512.0, 1024.0]);
        assert_eq!(seq[11], 1024.0);
        assert_eq!(s.beta(30), 1024.0);
        assert!(BetaSchedule::new(1.0, 10.0).is_err());
    }

    #[test]
    fn encoders_are_deterministic_and_binary() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let shape = ImageShape::new(8, 8, 3);
        let att = AttentionNet::new(
            AttentionConfig {
                input: shape,
                channels: vec![4, 4],
                kernel_size: 3,
            },
            &mut rng,
        )
        .unwrap();
        let h1 = HashNet::new(config(16), &mut rng).unwrap();
        let x = image(&mut rng, shape);
        let a = encode_attention_guided(&x, &att, &h1).unwrap();
        assert_eq!(a, encode_attention_guided(&x, &att, &h1).unwrap());
        assert!(a.as_slice().iter().all(|b| *b == 1 || *b == -1));
        let f = encode_final(&x, &h1).unwrap();
        assert_eq!(f.len(), 16);
        assert_eq!(f, encode_final(&x, &h1).unwrap());
    }

    #[test]
    fn targets_map_minus_one_to_zero() {
        assert_eq!(BinaryCode::new(vec![1, -1, 1]).unwrap().to_targets(), vec![1, 0, 1]);
        assert!(BinaryCode::new(vec![1, 0]).is_err());
    }

    proptest! {
        #[test]
        fn atanh_is_odd_and_monotone(w in -5.0f64..5.0, d in 0.0f64..1.0, beta in 1.0f64..64.0) {
            let (a, _) = atanh_activate(&[w, -w, w + d], beta, 0.001).unwrap();
            prop_assert_eq!(a[0], -a[1]);
            prop_assert!(a[2] >= a[0]);
            prop_assert!(a[0].abs() < 1.0 || (beta * w).abs() > 18.0);
        }

        #[test]
        fn tanh_reaches_sign_at_beta_100(w in 0.1f64..10.0, neg in any::<bool>()) {
            let w = if neg { -w } else { w };
            let (a, _) = atanh_activate(&[w], 100.0, 0.0).unwrap();
            prop_assert!((a[0] - w.signum()).abs() <= 1e-8);
        }
    }

    #[test]
    fn hash_gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let cfg = HashNetConfig {
            input: ImageShape::new(4, 4, 3),
            conv_channels: vec![4],
            kernel_size: 3,
            hidden: 5,
            code_length: 6,
        };
        let net = HashNet::new(cfg, &mut rng).unwrap();
        let x = Tensor::from_vec(3, 4, 4, (0..48).map(|_| rng.random_range(0.0..1.0)).collect());
        let r: Vec<f64> = (0..6).map(|_| rng.random_range(-1.0..1.0)).collect();
        let loss = |n: &HashNet, x: &Tensor| -> f64 { hash_forward(x, n).unwrap().iter().zip(&r).map(|(a, b)| a * b).sum() };
        let (_, cache) = net.forward(&x).unwrap();
        let mut grads = vec![0.0; net.params().len()];
        let gx = net.backward(&cache, &r, &mut grads);
        let step = 1e-3;
        let rel = |a: f64, n: f64| (a - n).abs() / a.abs().max(n.abs()).max(1e-6);
        for i in 0..net.params().len() {
            let (mut p, mut m) = (net.clone(), net.clone());
            p.params_mut()[i] += step;
            m.params_mut()[i] -= step;
            let num = (loss(&p, &x) - loss(&m, &x)) / (2.0 * step);
            assert!(rel(grads[i], num) < 1e-4, "param {i}: {} vs {num}", grads[i]);
        }
        for i in 0..x.data.len() {
            let (mut p, mut m) = (x.clone(), x.clone());
            p.data[i] += step;
            m.data[i] -= step;
            let num = (loss(&net, &p) - loss(&net, &m)) / (2.0 * step);
            assert!(rel(gx.data[i], num) < 1e-4, "input {i}: {} vs {num}", gx.data[i]);
        }
    }
}
