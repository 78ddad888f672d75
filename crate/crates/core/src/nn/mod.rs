//! Minimal CPU layers with explicit backward passes.
//!
//! Every network keeps its parameters in one flat `Vec<f64>`; layers hold
//! offsets into it. Gradients are accumulated into a buffer of the same
//! layout, which keeps optimizers, checkpoints and finite-difference checks
//! oblivious to the network structure.

mod layers;
mod tensor;

pub use layers::{
    max_pool2, max_pool2_backward, relu, relu_backward, upsample2, upsample2_backward, Conv2d,
    Linear, ParamAllocator,
};
pub use tensor::Tensor;

use rand::Rng;
use rand_distr::{Distribution, Normal};

/// Fills `params[range]` with `N(0, std²)` samples.
pub(crate) fn fill_normal<R: Rng>(params: &mut [f64], std: f64, rng: &mut R) {
    let dist = Normal::new(0.0, std).expect("finite std");
    for p in params {
        *p = dist.sample(rng);
    }
}
