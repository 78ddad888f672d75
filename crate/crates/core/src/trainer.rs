//! Two-stage training: the attention stream (attention network plus first
//! hashing network, trained jointly on the pairwise objective with a tanh
//! continuation), then the second hashing network fitted to the binary
//! codes the first stream produces.

use std::fs;
use std::path::Path;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::attention::{
    apply_attention, apply_attention_backward, normalize_map, normalize_map_backward, AttentionCache, AttentionConfig,
    AttentionMap, AttentionNet,
};
use crate::checkpoint::{Checkpoint, Stage};
use crate::datasets::{pair_batches, Dataset, ImageShape, ImageSample};
use crate::error::{Error, Result};
use crate::hashnet::{atanh_activate, encode_attention_guided, BetaSchedule, BinaryCode, HashCache, HashNet, HashNetConfig};
use crate::losses::{self, guide_grad, guide_loss, stage1_loss_grad, Stage1Weights};
use crate::nn::Tensor;
use crate::retrieval::{pack, PackedCodes};

pub const STAGE1_DIR: &str = "stage1";
pub const STAGE2_DIR: &str = "stage2";
pub const TARGETS_FILE: &str = "targets.dagh";
pub const LOSS_CSV: &str = "loss.csv";
pub const LOSS_JSON: &str = "loss.json";

// Independent RNG streams derived from the one seed.
const STREAM_STAGE1_INIT: u64 = 0;
const STREAM_STAGE1_BATCHES: u64 = 1;
const STREAM_STAGE2_INIT: u64 = 2;
const STREAM_STAGE2_BATCHES: u64 = 3;

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

/// Network sizes shared by both streams.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    /// Encoder widths of the attention network, one per resolution level.
    pub attention_channels: Vec<usize>,
    /// Conv block widths of each hashing network.
    pub hash_channels: Vec<usize>,
    /// Hidden fully connected width before the hash layer; 0 disables it.
    pub hidden: usize,
    pub kernel_size: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            attention_channels: vec![8, 16],
            hash_channels: vec![16, 32, 32],
            hidden: 64,
            kernel_size: 3,
        }
    }
}

impl ModelConfig {
    pub fn attention(&self, input: ImageShape) -> AttentionConfig {
        AttentionConfig {
            input,
            channels: self.attention_channels.clone(),
            kernel_size: self.kernel_size,
        }
    }

    pub fn hash(&self, input: ImageShape, code_length: usize) -> HashNetConfig {
        HashNetConfig {
            input,
            conv_channels: self.hash_channels.clone(),
            kernel_size: self.kernel_size,
            hidden: self.hidden,
            code_length,
        }
    }

    pub fn validate(&self, input: ImageShape, code_length: usize) -> Result<()> {
        self.attention(input).validate()?;
        self.hash(input, code_length).validate()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    /// Set from the model section when loaded from an experiment file.
    #[serde(skip)]
    pub code_length: usize,
    pub epochs_stage1: usize,
    pub epochs_stage2: usize,
    pub batch_size: usize,
    pub lr: f64,
    /// Stage-2 base learning rate; `None` reuses `lr`. The guide loss is a
    /// per-bit mean and tolerates far larger steps than the weighted
    /// pairwise objective.
    pub lr_stage2: Option<f64>,
    pub lr_fch_multiplier: f64,
    /// Learning rate is multiplied by `lr_decay` every `lr_step` epochs.
    pub lr_decay: f64,
    pub lr_step: usize,
    pub momentum: f64,
    pub weight_decay: f64,
    pub nu: f64,
    pub lambda: f64,
    pub epsilon: f64,
    pub beta: BetaSchedule,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            code_length: 16,
            epochs_stage1: 30,
            epochs_stage2: 30,
            batch_size: 32,
            lr: 0.01,
            lr_stage2: None,
            lr_fch_multiplier: 10.0,
            lr_decay: 0.5,
            lr_step: 10,
            momentum: 0.9,
            weight_decay: 0.0005,
            nu: losses::DEFAULT_NU,
            lambda: losses::DEFAULT_LAMBDA,
            epsilon: losses::DEFAULT_EPSILON,
            beta: BetaSchedule::default(),
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.code_length == 0 {
            return bad("code_length must be at least 1".into());
        }
        if self.batch_size < 2 {
            return bad(format!("batch_size must be at least 2, got {}", self.batch_size));
        }
        for (name, v) in [
            ("lr", self.lr),
            ("lr_stage2", self.lr_stage2.unwrap_or(0.0)),
            ("lr_fch_multiplier", self.lr_fch_multiplier),
            ("lr_decay", self.lr_decay),
            ("weight_decay", self.weight_decay),
            ("nu", self.nu),
            ("epsilon", self.epsilon),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return bad(format!("{name} must be finite and >= 0, got {v}"));
            }
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return bad(format!("momentum must lie in [0, 1), got {}", self.momentum));
        }
        if !(self.lambda.is_finite() && self.lambda > 0.0) {
            return bad(format!("lambda must be > 0, got {}", self.lambda));
        }
        if self.lr_step == 0 {
            return bad("lr_step must be at least 1".into());
        }
        self.beta.validate().map_err(|e| Error::Config(e.to_string()))
    }

    /// Stage-1 learning rate during `epoch` (0-based).
    pub fn lr_at(&self, epoch: usize) -> f64 {
        self.lr * self.decay_factor(epoch)
    }

    /// Stage-2 learning rate during `epoch` (0-based).
    pub fn lr_stage2_at(&self, epoch: usize) -> f64 {
        self.lr_stage2.unwrap_or(self.lr) * self.decay_factor(epoch)
    }

    fn decay_factor(&self, epoch: usize) -> f64 {
        self.lr_decay.powi((epoch / self.lr_step) as i32)
    }
}

/// SGD with momentum and L2 weight decay over one flat parameter vector.
#[derive(Debug, Clone)]
struct Sgd {
    velocity: Vec<f64>,
    momentum: f64,
    weight_decay: f64,
}

impl Sgd {
    fn new(len: usize, cfg: &TrainConfig) -> Self {
        Self {
            velocity: vec![0.0; len],
            momentum: cfg.momentum,
            weight_decay: cfg.weight_decay,
        }
    }

    /// `boost` scales the learning rate on one parameter range. Returns
    /// whether every parameter is still finite.
    fn step(&mut self, params: &mut [f64], grads: &[f64], lr: f64, boost: Option<(std::ops::Range<usize>, f64)>) -> bool {
        for (i, ((p, g), v)) in params.iter_mut().zip(grads).zip(&mut self.velocity).enumerate() {
            let rate = match &boost {
                Some((r, m)) if r.contains(&i) => lr * m,
                _ => lr,
            };
            *v = self.momentum * *v + g + self.weight_decay * *p;
            *p -= rate * *v;
        }
        params.iter().all(|p| p.is_finite())
    }
}

/// Per-epoch loss components, averaged over the epoch's batches. Components
/// that a stage does not optimize are `None`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochLoss {
    pub stage: Stage,
    /// Epoch index within its stage.
    pub epoch: usize,
    pub beta: Option<f64>,
    pub lr: f64,
    pub sem: Option<f64>,
    pub att: Option<f64>,
    pub penalty: Option<f64>,
    pub guide: Option<f64>,
    pub total: f64,
    /// Mean number of pairs per batch; the pairwise terms are divided by it.
    pub pairs: Option<f64>,
}

/// Writes the loss history as CSV, numbering epochs across both stages.
pub fn write_loss_csv(history: &[EpochLoss], path: &Path) -> Result<()> {
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    let mut out = String::from("epoch,sem,att,penalty,guide,total\n");
    for (i, e) in history.iter().enumerate() {
        out.push_str(&format!(
            "{i},{},{},{},{},{}\n",
            opt(e.sem),
            opt(e.att),
            opt(e.penalty),
            opt(e.guide),
            e.total
        ));
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

fn check_finite(v: f64, stage: &'static str, epoch: usize, component: &'static str) -> Result<()> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(Error::Divergence { stage, epoch, component })
    }
}

fn check_dataset(dataset: &Dataset, input: ImageShape) -> Result<()> {
    if dataset.image_shape() != input {
        return Err(Error::invalid(format!(
            "dataset images are {}, networks expect {input}",
            dataset.image_shape()
        )));
    }
    if dataset.distinct_labels().len() < 2 {
        return Err(Error::invalid("training needs at least 2 classes"));
    }
    Ok(())
}

/// Forward values of the attention stream for one image.
pub struct StreamForward {
    pub image: Tensor,
    pub raw_map: AttentionMap,
    pub map: AttentionMap,
    pub attended: Tensor,
    pub omega: Vec<f64>,
    pub code: Vec<f64>,
    att_cache: AttentionCache,
    hash_cache: HashCache,
}

/// Attention, normalization, Hadamard product, hashing network and
/// `tanh(βω)` for one image.
pub fn stream_forward(sample: &ImageSample, shape: ImageShape, attention: &AttentionNet, hash: &HashNet, beta: f64) -> Result<StreamForward> {
    let image = Tensor::from_hwc(&sample.pixels, shape);
    let (raw_map, att_cache) = attention.forward(&image)?;
    let map = normalize_map(&raw_map);
    let attended = apply_attention(&image, &map)?;
    let (omega, hash_cache) = hash.forward(&attended)?;
    let (code, _) = atanh_activate(&omega, beta, 0.0)?;
    Ok(StreamForward {
        image,
        raw_map,
        map,
        attended,
        omega,
        code,
        att_cache,
        hash_cache,
    })
}

/// Backpropagates `d loss / d code` through the attention stream and returns
/// `(attention grads, hash grads)`.
pub fn stream_backward(f: &StreamForward, grad_code: &[f64], attention: &AttentionNet, hash: &HashNet, beta: f64) -> (Vec<f64>, Vec<f64>) {
    let grad_omega: Vec<f64> = grad_code.iter().zip(&f.code).map(|(g, u)| g * beta * (1.0 - u * u)).collect();
    let mut gh = vec![0.0; hash.params().len()];
    let g_att = hash.backward(&f.hash_cache, &grad_omega, &mut gh);
    let (_, g_map) = apply_attention_backward(&f.image, &f.map, &g_att);
    let g_raw = normalize_map_backward(&f.raw_map, &g_map);
    let mut ga = vec![0.0; attention.params().len()];
    attention.backward(&f.att_cache, &g_raw, &mut ga);
    (ga, gh)
}

fn add_into(acc: &mut [f64], g: &[f64]) {
    for (a, b) in acc.iter_mut().zip(g) {
        *a += b;
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Stage1Output {
    pub attention: AttentionNet,
    pub hash1: HashNet,
    pub history: Vec<EpochLoss>,
    /// β reached after the last completed epoch.
    pub beta: f64,
}

/// Freshly initialized stage-1 networks for `shape`.
pub fn init_stage1(shape: ImageShape, model: &ModelConfig, cfg: &TrainConfig) -> Result<(AttentionNet, HashNet)> {
    let mut rng = stream(cfg.seed, STREAM_STAGE1_INIT);
    let attention = AttentionNet::new(model.attention(shape), &mut rng)?;
    let hash1 = HashNet::new(model.hash(shape, cfg.code_length), &mut rng)?;
    Ok((attention, hash1))
}

/// Jointly trains the attention network and the first hashing network.
pub fn train_stage1(dataset: &Dataset, model: &ModelConfig, cfg: &TrainConfig) -> Result<Stage1Output> {
    cfg.validate()?;
    let shape = dataset.image_shape();
    let (attention, hash1) = init_stage1(shape, model, cfg)?;
    train_stage1_from(dataset, attention, hash1, cfg)
}

/// [`train_stage1`] starting from the given networks.
pub fn train_stage1_from(dataset: &Dataset, mut attention: AttentionNet, mut hash1: HashNet, cfg: &TrainConfig) -> Result<Stage1Output> {
    cfg.validate()?;
    let shape = dataset.image_shape();
    check_dataset(dataset, shape)?;
    if hash1.code_length() != cfg.code_length {
        return Err(Error::invalid(format!(
            "hash network has K = {}, config has K = {}",
            hash1.code_length(),
            cfg.code_length
        )));
    }
    let mut opt_a = Sgd::new(attention.params().len(), cfg);
    let mut opt_h = Sgd::new(hash1.params().len(), cfg);
    let fch = hash1.fch_range();
    let mut batch_rng = stream(cfg.seed, STREAM_STAGE1_BATCHES);
    let mut history = Vec::with_capacity(cfg.epochs_stage1);
    let mut stepped = false;

    for epoch in 0..cfg.epochs_stage1 {
        let beta = cfg.beta.beta(epoch);
        let lr = cfg.lr_at(epoch);
        let weights = Stage1Weights {
            nu: cfg.nu,
            lambda: cfg.lambda,
            beta,
            epsilon: cfg.epsilon,
        };
        let (mut sem, mut att, mut total, mut pairs, mut batches) = (0.0, 0.0, 0.0, 0.0, 0usize);
        let mut penalty = 0.0;
        for batch in pair_batches(dataset, cfg.batch_size, batch_rng.next_u64())? {
            let fwd: Vec<StreamForward> = batch
                .images
                .par_iter()
                .map(|s| stream_forward(s, shape, &attention, &hash1, beta))
                .collect::<Result<_>>()?;
            let codes: Vec<Vec<f64>> = fwd.iter().map(|f| f.code.clone()).collect();
            if stepped && codes.iter().any(|c| c.iter().all(|v| *v == 0.0) || c.iter().any(|v| !v.is_finite())) {
                return Err(Error::Divergence {
                    stage: "stage1",
                    epoch,
                    component: "codes",
                });
            }
            let (value, grad_codes) = stage1_loss_grad(&codes, &batch.sim, &weights, true)?;
            check_finite(value.sem, "stage1", epoch, "sem")?;
            check_finite(value.att, "stage1", epoch, "att")?;
            check_finite(value.value, "stage1", epoch, "total")?;

            let per_image: Vec<(Vec<f64>, Vec<f64>)> = fwd
                .par_iter()
                .zip(&grad_codes)
                .map(|(f, g)| stream_backward(f, g, &attention, &hash1, beta))
                .collect();
            let mut ga = vec![0.0; attention.params().len()];
            let mut gh = vec![0.0; hash1.params().len()];
            for (a, h) in &per_image {
                add_into(&mut ga, a);
                add_into(&mut gh, h);
            }
            if ga.iter().chain(&gh).any(|g| !g.is_finite()) {
                return Err(Error::Divergence {
                    stage: "stage1",
                    epoch,
                    component: "gradient",
                });
            }
            let finite_a = opt_a.step(attention.params_mut(), &ga, lr, None);
            let finite_h = opt_h.step(hash1.params_mut(), &gh, lr, Some((fch.clone(), cfg.lr_fch_multiplier)));
            if !(finite_a && finite_h) {
                return Err(Error::Divergence {
                    stage: "stage1",
                    epoch,
                    component: "parameters",
                });
            }
            stepped = true;

            sem += value.sem;
            att += value.att;
            total += value.value;
            penalty = value.penalty;
            pairs += value.pairs as f64;
            batches += 1;
        }
        let n = batches as f64;
        history.push(EpochLoss {
            stage: Stage::Stage1,
            epoch,
            beta: Some(beta),
            lr,
            sem: Some(sem / n),
            att: Some(att / n),
            penalty: Some(penalty),
            guide: None,
            total: total / n,
            pairs: Some(pairs / n),
        });
    }
    Ok(Stage1Output {
        attention,
        hash1,
        history,
        beta: cfg.beta.beta(cfg.epochs_stage1),
    })
}

/// Attention-guided codes for every image, in id order.
pub fn extract_attention_codes(dataset: &Dataset, attention: &AttentionNet, hash1: &HashNet) -> Result<Vec<BinaryCode>> {
    let shape = dataset.image_shape();
    dataset
        .samples()
        .par_iter()
        .map(|s| encode_attention_guided(&Tensor::from_hwc(&s.pixels, shape), attention, hash1))
        .collect()
}

/// Maps ±1 codes to {0, 1} guide targets.
pub fn codes_to_targets(codes: &[BinaryCode]) -> Vec<Vec<u8>> {
    codes.iter().map(BinaryCode::to_targets).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Stage2Output {
    pub hash2: HashNet,
    pub history: Vec<EpochLoss>,
}

/// Trains the second hashing network on the original images against the
/// `{0,1}` targets (row `i` belongs to sample id `i`).
pub fn train_stage2(dataset: &Dataset, targets: &[Vec<u8>], model: &ModelConfig, cfg: &TrainConfig) -> Result<Stage2Output> {
    cfg.validate()?;
    let shape = dataset.image_shape();
    check_dataset(dataset, shape)?;
    if targets.len() != dataset.len() {
        return Err(Error::invalid(format!(
            "{} target rows for {} images",
            targets.len(),
            dataset.len()
        )));
    }
    if let Some(row) = targets.iter().find(|t| t.len() != cfg.code_length || t.iter().any(|b| *b > 1)) {
        return Err(Error::invalid(format!(
            "targets must be {} bits in {{0,1}}, found row of {} values",
            cfg.code_length,
            row.len()
        )));
    }
    let mut hash2 = HashNet::new(model.hash(shape, cfg.code_length), &mut stream(cfg.seed, STREAM_STAGE2_INIT))?;
    let mut opt = Sgd::new(hash2.params().len(), cfg);
    let fch = hash2.fch_range();
    let mut batch_rng = stream(cfg.seed, STREAM_STAGE2_BATCHES);
    let mut history = Vec::with_capacity(cfg.epochs_stage2);

    for epoch in 0..cfg.epochs_stage2 {
        let lr = cfg.lr_stage2_at(epoch);
        let (mut total, mut batches) = (0.0, 0usize);
        for batch in pair_batches(dataset, cfg.batch_size, batch_rng.next_u64())? {
            let fwd: Vec<(Tensor, Vec<f64>, HashCache)> = batch
                .images
                .par_iter()
                .map(|s| {
                    let x = Tensor::from_hwc(&s.pixels, shape);
                    hash2.forward(&x).map(|(w, c)| (x, w, c))
                })
                .collect::<Result<_>>()?;
            let logits: Vec<Vec<f64>> = fwd.iter().map(|f| f.1.clone()).collect();
            let rows: Vec<Vec<u8>> = batch.images.iter().map(|s| targets[s.id].clone()).collect();
            let loss = guide_loss(&logits, &rows)?;
            check_finite(loss, "stage2", epoch, "guide")?;
            let grads = guide_grad(&logits, &rows)?;
            let per_image: Vec<Vec<f64>> = fwd
                .par_iter()
                .zip(&grads)
                .map(|((_, _, cache), g)| {
                    let mut gh = vec![0.0; hash2.params().len()];
                    hash2.backward(cache, g, &mut gh);
                    gh
                })
                .collect();
            let mut gh = vec![0.0; hash2.params().len()];
            for g in &per_image {
                add_into(&mut gh, g);
            }
            if gh.iter().any(|g| !g.is_finite()) {
                return Err(Error::Divergence {
                    stage: "stage2",
                    epoch,
                    component: "gradient",
                });
            }
            if !opt.step(hash2.params_mut(), &gh, lr, Some((fch.clone(), cfg.lr_fch_multiplier))) {
                return Err(Error::Divergence {
                    stage: "stage2",
                    epoch,
                    component: "parameters",
                });
            }
            total += loss;
            batches += 1;
        }
        let mean = total / batches as f64;
        history.push(EpochLoss {
            stage: Stage::Stage2,
            epoch,
            beta: None,
            lr,
            sem: None,
            att: None,
            penalty: None,
            guide: Some(mean),
            total: mean,
            pairs: None,
        });
    }
    Ok(Stage2Output { hash2, history })
}

/// Fraction of bits where `sign(hash(x))` agrees with the target, over all
/// images.
pub fn bit_agreement(dataset: &Dataset, hash: &HashNet, targets: &[Vec<u8>]) -> Result<f64> {
    let codes = encode_dataset(dataset, hash)?;
    let k = hash.code_length();
    let agree: usize = codes
        .iter()
        .zip(targets)
        .map(|(c, t)| c.to_targets().iter().zip(t).filter(|(a, b)| a == b).count())
        .sum();
    Ok(agree as f64 / (k * dataset.len()) as f64)
}

/// Final binary codes for every image, in id order.
pub fn encode_dataset(dataset: &Dataset, hash: &HashNet) -> Result<Vec<BinaryCode>> {
    let shape = dataset.image_shape();
    dataset
        .samples()
        .par_iter()
        .map(|s| crate::hashnet::encode_final(&Tensor::from_hwc(&s.pixels, shape), hash))
        .collect()
}

/// Everything produced by [`run_pipeline`].
#[derive(Debug, Clone, PartialEq)]
pub struct TrainState {
    pub attention: AttentionNet,
    pub hash1: HashNet,
    pub hash2: HashNet,
    pub stage1_epochs: usize,
    pub stage2_epochs: usize,
    pub beta: f64,
    /// Stage-1 epochs followed by stage-2 epochs.
    pub history: Vec<EpochLoss>,
    pub targets: Vec<Vec<u8>>,
}

fn write_history(history: &[EpochLoss], dir: &Path) -> Result<()> {
    write_loss_csv(history, &dir.join(LOSS_CSV))?;
    let p = dir.join(LOSS_JSON);
    let json = serde_json::to_string_pretty(history).expect("history serializes");
    fs::write(&p, json).map_err(|e| Error::io(&p, e))
}

/// Stage 1, target extraction, stage 2. With `out_dir`, each stage's
/// checkpoint, the targets and the loss history are written as soon as they
/// exist, so a failure in stage 2 leaves the stage-1 artifacts in place.
pub fn run_pipeline(dataset: &Dataset, model: &ModelConfig, cfg: &TrainConfig, out_dir: Option<&Path>) -> Result<TrainState> {
    if let Some(dir) = out_dir {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let s1 = train_stage1(dataset, model, cfg)?;
    let codes = extract_attention_codes(dataset, &s1.attention, &s1.hash1)?;
    let targets = codes_to_targets(&codes);
    if let Some(dir) = out_dir {
        Checkpoint {
            stage: Stage::Stage1,
            epoch: cfg.epochs_stage1,
            beta: s1.beta,
            attention: s1.attention.clone(),
            hash1: s1.hash1.clone(),
            hash2: None,
        }
        .save(&dir.join(STAGE1_DIR))?;
        pack(&codes)?.write(&dir.join(TARGETS_FILE))?;
        write_history(&s1.history, dir)?;
    }
    let s2 = train_stage2(dataset, &targets, model, cfg)?;
    let mut history = s1.history;
    history.extend(s2.history);
    if let Some(dir) = out_dir {
        Checkpoint {
            stage: Stage::Stage2,
            epoch: cfg.epochs_stage2,
            beta: s1.beta,
            attention: s1.attention.clone(),
            hash1: s1.hash1.clone(),
            hash2: Some(s2.hash2.clone()),
        }
        .save(&dir.join(STAGE2_DIR))?;
        write_history(&history, dir)?;
    }
    Ok(TrainState {
        attention: s1.attention,
        hash1: s1.hash1,
        hash2: s2.hash2,
        stage1_epochs: cfg.epochs_stage1,
        stage2_epochs: cfg.epochs_stage2,
        beta: s1.beta,
        history,
        targets,
    })
}

/// Reruns stage 2 from the artifacts of an earlier [`run_pipeline`] call in
/// `dir`. Stage 2 depends only on the stored targets and the seed, so the
/// result equals the original run's second network.
pub fn resume_stage2(dataset: &Dataset, model: &ModelConfig, cfg: &TrainConfig, dir: &Path) -> Result<Stage2Output> {
    let stage1 = Checkpoint::load(&dir.join(STAGE1_DIR))?;
    if stage1.code_length() != cfg.code_length {
        return Err(Error::invalid(format!(
            "checkpoint has K = {}, config has K = {}",
            stage1.code_length(),
            cfg.code_length
        )));
    }
    let codes = PackedCodes::read(&dir.join(TARGETS_FILE))?;
    let targets = codes_to_targets(&crate::retrieval::unpack(&codes));
    train_stage2(dataset, &targets, model, cfg)
}
