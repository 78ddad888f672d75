//! Pairwise semantic loss, cosine attention loss, and the sigmoid
//! cross-entropy guide loss, each with its analytic gradient.
//!
//! Pair sums run over unordered pairs `i < j`; self-pairs never contribute.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default weight of the attention loss.
pub const DEFAULT_NU: f64 = 50.0;
/// Default attention-loss margin.
pub const DEFAULT_LAMBDA: f64 = 0.3;
/// Default ATanh regularization constant.
pub const DEFAULT_EPSILON: f64 = 0.001;

/// A loss value together with its named parts.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LossValue {
    pub value: f64,
    pub sem: f64,
    pub att: f64,
    pub penalty: f64,
    pub guide: f64,
    /// Number of unordered pairs the pairwise terms were summed over.
    pub pairs: usize,
}

impl LossValue {
    pub fn components(&self) -> [(&'static str, f64); 4] {
        [
            ("sem", self.sem),
            ("att", self.att),
            ("penalty", self.penalty),
            ("guide", self.guide),
        ]
    }
}

/// `log(1 + e^x)` without overflow.
pub fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `½ Σ a_k b_k`.
pub fn half_inner_product(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::invalid(format!(
            "code lengths differ: {} vs {}",
            a.len(),
            b.len()
        )));
    }
    Ok(0.5 * dot(a, b))
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn check_batch(codes: &[Vec<f64>], sim: &[u8]) -> Result<usize> {
    let b = codes.len();
    if sim.len() != b * b {
        return Err(Error::invalid(format!(
            "similarity matrix has {} entries, expected {b}x{b}",
            sim.len()
        )));
    }
    if let Some(s) = sim.iter().find(|s| **s > 1) {
        return Err(Error::invalid(format!("similarity entry {s} is not 0 or 1")));
    }
    if let Some(k) = codes.first().map(Vec::len) {
        if codes.iter().any(|c| c.len() != k) {
            return Err(Error::invalid("codes in a batch must share one length"));
        }
    }
    Ok(b)
}

fn pair_count(b: usize) -> usize {
    b * b.saturating_sub(1) / 2
}

/// Negative log-likelihood of the pairwise labels under
/// `P(s=1) = σ(½ uᵢᵀuⱼ)`, summed over unordered pairs.
pub fn semantic_loss(codes: &[Vec<f64>], sim: &[u8]) -> Result<f64> {
    semantic_loss_grad(codes, sim).map(|(v, _)| v)
}

/// [`semantic_loss`] and its gradient with respect to every code.
pub fn semantic_loss_grad(codes: &[Vec<f64>], sim: &[u8]) -> Result<(f64, Vec<Vec<f64>>)> {
    let b = check_batch(codes, sim)?;
    let mut grads: Vec<Vec<f64>> = codes.iter().map(|c| vec![0.0; c.len()]).collect();
    let mut loss = 0.0;
    for i in 0..b {
        for j in (i + 1)..b {
            let s = sim[i * b + j] as f64;
            let theta = 0.5 * dot(&codes[i], &codes[j]);
            loss += softplus(theta) - s * theta;
            let d = 0.5 * (sigmoid(theta) - s);
            for k in 0..codes[i].len() {
                grads[i][k] += d * codes[j][k];
                grads[j][k] += d * codes[i][k];
            }
        }
    }
    Ok((loss, grads))
}

/// Per-pair attention term: `d + max(0, λ − d)` with `d = |s − (cos + 1)/2|`.
pub fn attention_pair_term(s: f64, cos: f64, lambda: f64) -> f64 {
    let d = (s - (cos + 1.0) / 2.0).abs();
    d + (lambda - d).max(0.0)
}

/// Cosine attention loss summed over unordered pairs.
pub fn attention_loss(codes: &[Vec<f64>], sim: &[u8], lambda: f64) -> Result<f64> {
    attention_loss_grad(codes, sim, lambda).map(|(v, _)| v)
}

/// [`attention_loss`] and its gradient with respect to every code.
///
/// Inside the margin (`d < λ`) a pair contributes the constant `λ` and no
/// gradient; outside it contributes `d`.
pub fn attention_loss_grad(codes: &[Vec<f64>], sim: &[u8], lambda: f64) -> Result<(f64, Vec<Vec<f64>>)> {
    if !(lambda.is_finite() && lambda > 0.0) {
        return Err(Error::invalid(format!("margin lambda must be > 0, got {lambda}")));
    }
    let b = check_batch(codes, sim)?;
    let norms: Vec<f64> = codes.iter().map(|c| dot(c, c).sqrt()).collect();
    if let Some(i) = norms.iter().position(|n| *n == 0.0 || !n.is_finite()) {
        return Err(Error::invalid(format!(
            "code row {i} has zero norm; cosine similarity is undefined"
        )));
    }
    let mut grads: Vec<Vec<f64>> = codes.iter().map(|c| vec![0.0; c.len()]).collect();
    let mut loss = 0.0;
    for i in 0..b {
        for j in (i + 1)..b {
            let s = sim[i * b + j] as f64;
            let cos = dot(&codes[i], &codes[j]) / (norms[i] * norms[j]);
            let c = (cos + 1.0) / 2.0;
            let d = (s - c).abs();
            loss += d + (lambda - d).max(0.0);
            if d < lambda {
                continue;
            }
            // dd/dc = -sign(s - c); dc/dcos = 1/2
            let d_cos = -(s - c).signum() * 0.5;
            let (ni, nj) = (norms[i], norms[j]);
            for k in 0..codes[i].len() {
                let ui = codes[i][k];
                let uj = codes[j][k];
                grads[i][k] += d_cos * (uj / (ni * nj) - cos * ui / (ni * ni));
                grads[j][k] += d_cos * (ui / (ni * nj) - cos * uj / (nj * nj));
            }
        }
    }
    Ok((loss, grads))
}

/// Weights of the stage-1 objective.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Stage1Weights {
    pub nu: f64,
    pub lambda: f64,
    pub beta: f64,
    pub epsilon: f64,
}

impl Default for Stage1Weights {
    fn default() -> Self {
        Self {
            nu: DEFAULT_NU,
            lambda: DEFAULT_LAMBDA,
            beta: 1.0,
            epsilon: DEFAULT_EPSILON,
        }
    }
}

/// `L_sem + ν·L_att + ε/β²` in raw summed form.
pub fn stage1_loss(codes: &[Vec<f64>], sim: &[u8], nu: f64, lambda: f64, beta: f64, epsilon: f64) -> Result<LossValue> {
    let w = Stage1Weights {
        nu,
        lambda,
        beta,
        epsilon,
    };
    stage1_loss_grad(codes, sim, &w, false).map(|(v, _)| v)
}

/// Stage-1 objective and gradient. With `per_pair_mean` the pairwise terms
/// are divided by the number of pairs; `LossValue::pairs` records that count
/// so the summed form can be recovered.
pub fn stage1_loss_grad(
    codes: &[Vec<f64>],
    sim: &[u8],
    w: &Stage1Weights,
    per_pair_mean: bool,
) -> Result<(LossValue, Vec<Vec<f64>>)> {
    if !(w.nu.is_finite() && w.nu >= 0.0) {
        return Err(Error::invalid(format!("nu must be >= 0, got {}", w.nu)));
    }
    if !(w.beta.is_finite() && w.beta > 0.0) {
        return Err(Error::invalid(format!("beta must be > 0, got {}", w.beta)));
    }
    let (sem, mut g_sem) = semantic_loss_grad(codes, sim)?;
    let (att, g_att) = if w.nu > 0.0 {
        attention_loss_grad(codes, sim, w.lambda)?
    } else {
        (attention_loss(codes, sim, w.lambda).unwrap_or(0.0), Vec::new())
    };
    let pairs = pair_count(codes.len());
    let scale = if per_pair_mean && pairs > 0 { 1.0 / pairs as f64 } else { 1.0 };
    for (i, gs) in g_sem.iter_mut().enumerate() {
        for (k, v) in gs.iter_mut().enumerate() {
            let a = g_att.get(i).map_or(0.0, |g| g[k]);
            *v = scale * (*v + w.nu * a);
        }
    }
    let penalty = w.epsilon / (w.beta * w.beta);
    let value = LossValue {
        value: scale * sem + w.nu * scale * att + penalty,
        sem: scale * sem,
        att: scale * att,
        penalty,
        guide: 0.0,
        pairs,
    };
    Ok((value, g_sem))
}

fn check_guide(logits: &[Vec<f64>], targets: &[Vec<u8>]) -> Result<(usize, usize)> {
    if logits.len() != targets.len() || logits.is_empty() {
        return Err(Error::invalid(format!(
            "guide loss needs matching non-empty rows, got {} logits and {} targets",
            logits.len(),
            targets.len()
        )));
    }
    let k = logits[0].len();
    for (y, b) in logits.iter().zip(targets) {
        if y.len() != k || b.len() != k {
            return Err(Error::invalid("guide loss rows must all have the code length"));
        }
        if let Some(v) = b.iter().find(|v| **v > 1) {
            return Err(Error::invalid(format!("guide target {v} is not 0 or 1")));
        }
    }
    if k == 0 {
        return Err(Error::invalid("guide loss needs at least one bit"));
    }
    Ok((logits.len(), k))
}

/// Mean sigmoid cross-entropy between logits and {0,1} targets, computed
/// as `softplus(y) − b·y`.
pub fn guide_loss(logits: &[Vec<f64>], targets: &[Vec<u8>]) -> Result<f64> {
    let (n, k) = check_guide(logits, targets)?;
    let total: f64 = logits
        .iter()
        .zip(targets)
        .flat_map(|(y, b)| y.iter().zip(b))
        .map(|(&y, &b)| if b == 1 { softplus(-y) } else { softplus(y) })
        .sum();
    Ok(total / (n * k) as f64)
}

/// `∂L_g/∂y = (σ(y) − b) / (K·N)`.
pub fn guide_grad(logits: &[Vec<f64>], targets: &[Vec<u8>]) -> Result<Vec<Vec<f64>>> {
    let (n, k) = check_guide(logits, targets)?;
    let scale = 1.0 / (n * k) as f64;
    Ok(logits
        .iter()
        .zip(targets)
        .map(|(y, b)| y.iter().zip(b).map(|(&y, &b)| scale * (sigmoid(y) - b as f64)).collect())
        .collect())
}
