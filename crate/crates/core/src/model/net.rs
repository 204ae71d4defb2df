//! A small convolutional classifier with hand-written forward/backward passes
//! and an adaptive-moment optimizer, all in f64 for gradient-check accuracy.
//!
//! Layer stack: repeated [conv (valid, kernel 5x3) -> tanh -> 2x axial average
//! pool] blocks, then global average pooling and a linear head emitting one
//! logit. Tanh and average pooling keep the loss surface smooth, which lets
//! the finite-difference gradient oracle in the tests bite to 1e-4.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{Patch, PatchSet};
use crate::error::{Error, Result};
use crate::seeds::SeedPath;

/// Numerical floor/ceiling for predicted probabilities inside the loss.
const PROB_CLAMP: f64 = 1e-7;
const ADAM_BETA1: f64 = 0.9;
const ADAM_BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

/// Mini-batch training hyperparameters.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    /// Per-epoch probability of mirroring each patch laterally.
    pub flip_prob: f64,
    /// Held-out fraction used for best-epoch selection.
    pub validation_fraction: f64,
    pub seed: u64,
}

impl TrainConfig {
    /// Defaults for full-size frames.
    pub fn full() -> Self {
        TrainConfig {
            learning_rate: 1e-5,
            epochs: 10,
            batch_size: 2048,
            flip_prob: 0.5,
            validation_fraction: 0.10,
            seed: 0,
        }
    }

    /// Defaults for desk frames (smaller batches, faster rate).
    pub fn desk() -> Self {
        TrainConfig {
            learning_rate: 1e-3,
            epochs: 10,
            batch_size: 256,
            flip_prob: 0.5,
            validation_fraction: 0.10,
            seed: 0,
        }
    }

    /// Defaults for compact frames: the small patch count per frame needs
    /// smaller batches (more optimizer steps per epoch) and a faster rate to
    /// converge within a single-core time budget.
    pub fn compact() -> Self {
        TrainConfig {
            learning_rate: 3e-3,
            epochs: 12,
            batch_size: 128,
            flip_prob: 0.5,
            validation_fraction: 0.10,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.flip_prob) {
            return Err(Error::config(format!("flip_prob {} outside [0, 1]", self.flip_prob)));
        }
        if !(self.validation_fraction > 0.0 && self.validation_fraction < 1.0) {
            return Err(Error::config(format!(
                "validation_fraction {} outside (0, 1)",
                self.validation_fraction
            )));
        }
        if self.learning_rate <= 0.0 || self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::config("learning_rate, epochs and batch_size must be positive"));
        }
        Ok(())
    }
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig::desk()
    }
}

/// Network shape: input patch size plus per-block channel widths.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Architecture {
    pub input_h: usize,
    pub input_w: usize,
    /// Output channels of each conv block.
    pub widths: Vec<usize>,
    pub kernel_h: usize,
    pub kernel_w: usize,
}

/// Tensor shape tracking through one conv block.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct StageDims {
    pub c_in: usize,
    pub c_out: usize,
    pub in_h: usize,
    pub in_w: usize,
    pub conv_h: usize,
    pub conv_w: usize,
    pub pool_h: usize,
}

impl Architecture {
    /// The protected model's shape: 3 blocks, widths 8/16/32.
    pub fn victim(input_h: usize, input_w: usize) -> Self {
        Architecture {
            input_h,
            input_w,
            widths: vec![8, 16, 32],
            kernel_h: 5,
            kernel_w: 3,
        }
    }

    /// The copying machine's (deliberately different) shape: widths 4/8/16.
    pub fn perpetrator(input_h: usize, input_w: usize) -> Self {
        Architecture {
            input_h,
            input_w,
            widths: vec![4, 8, 16],
            kernel_h: 5,
            kernel_w: 3,
        }
    }

    /// Per-block tensor shapes; errors if any stage collapses to zero size.
    pub(crate) fn stages(&self) -> Result<Vec<StageDims>> {
        if self.widths.is_empty() {
            return Err(Error::config("architecture needs at least one conv block"));
        }
        if self.kernel_h == 0 || self.kernel_w == 0 {
            return Err(Error::config("kernel dimensions must be positive"));
        }
        let (mut h, mut w, mut c) = (self.input_h, self.input_w, 1usize);
        let mut stages = Vec::with_capacity(self.widths.len());
        for (i, &c_out) in self.widths.iter().enumerate() {
            if c_out == 0 {
                return Err(Error::config(format!("block {i} has zero channels")));
            }
            if h < self.kernel_h || w < self.kernel_w {
                return Err(Error::config(format!(
                    "block {i} input {h}x{w} is smaller than the {}x{} kernel",
                    self.kernel_h, self.kernel_w
                )));
            }
            let conv_h = h - self.kernel_h + 1;
            let conv_w = w - self.kernel_w + 1;
            // Axial average pooling by 2; an odd trailing sample pools alone.
            let pool_h = conv_h.div_ceil(2);
            stages.push(StageDims { c_in: c, c_out, in_h: h, in_w: w, conv_h, conv_w, pool_h });
            h = pool_h;
            w = conv_w;
            c = c_out;
        }
        Ok(stages)
    }

    pub fn validate(&self) -> Result<()> {
        self.stages().map(|_| ())
    }
}

/// Weights of one classifier instance. Kept in f64; serialized as f32.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassifierParams {
    pub arch: Architecture,
    /// Per block: `[c_out][c_in][kernel_h][kernel_w]` flattened.
    pub(crate) conv_w: Vec<Vec<f64>>,
    /// Per block: `[c_out]`.
    pub(crate) conv_b: Vec<Vec<f64>>,
    /// `[c_last]`.
    pub(crate) head_w: Vec<f64>,
    pub(crate) head_b: f64,
    pub init_seed: u64,
}

impl ClassifierParams {
    /// Variance-scaled uniform initialization, deterministic in `seed`.
    pub fn init(arch: Architecture, seed: u64) -> Result<Self> {
        let stages = arch.stages()?;
        let mut rng = SeedPath::new(seed).with_str("init").rng();
        let mut uniform = |limit: f64| -> f64 { (rng.gen::<f64>() * 2.0 - 1.0) * limit };

        let mut conv_w = Vec::with_capacity(stages.len());
        let mut conv_b = Vec::with_capacity(stages.len());
        let k = arch.kernel_h * arch.kernel_w;
        for s in &stages {
            let fan_in = (s.c_in * k) as f64;
            let fan_out = (s.c_out * k) as f64;
            let limit = (6.0 / (fan_in + fan_out)).sqrt();
            conv_w.push((0..s.c_out * s.c_in * k).map(|_| uniform(limit)).collect());
            conv_b.push(vec![0.0; s.c_out]);
        }
        let c_last = stages.last().unwrap().c_out;
        let limit = (6.0 / (c_last as f64 + 1.0)).sqrt();
        let head_w = (0..c_last).map(|_| uniform(limit)).collect();
        Ok(ClassifierParams { arch, conv_w, conv_b, head_w, head_b: 0.0, init_seed: seed })
    }

    pub fn n_params(&self) -> usize {
        self.conv_w.iter().map(Vec::len).sum::<usize>()
            + self.conv_b.iter().map(Vec::len).sum::<usize>()
            + self.head_w.len()
            + 1
    }

    /// All weights in one flat vector, in serialization order.
    pub fn to_flat(&self) -> Vec<f64> {
        let mut flat = Vec::with_capacity(self.n_params());
        for (w, b) in self.conv_w.iter().zip(self.conv_b.iter()) {
            flat.extend_from_slice(w);
            flat.extend_from_slice(b);
        }
        flat.extend_from_slice(&self.head_w);
        flat.push(self.head_b);
        flat
    }

    /// Overwrite all weights from a flat vector laid out as [`Self::to_flat`].
    ///
    /// # Panics
    ///
    /// Panics if `flat` has the wrong length.
    pub fn set_flat(&mut self, flat: &[f64]) {
        assert_eq!(flat.len(), self.n_params(), "flat parameter size mismatch");
        let mut i = 0;
        for (w, b) in self.conv_w.iter_mut().zip(self.conv_b.iter_mut()) {
            let n = w.len();
            w.copy_from_slice(&flat[i..i + n]);
            i += n;
            let n = b.len();
            b.copy_from_slice(&flat[i..i + n]);
            i += n;
        }
        let n = self.head_w.len();
        self.head_w.copy_from_slice(&flat[i..i + n]);
        i += n;
        self.head_b = flat[i];
    }

    fn check_patch(&self, p: &Patch) -> Result<()> {
        if p.patch_h != self.arch.input_h || p.patch_w != self.arch.input_w {
            return Err(Error::argument(format!(
                "patch {}x{} does not match the {}x{} network input",
                p.patch_h, p.patch_w, self.arch.input_h, self.arch.input_w
            )));
        }
        Ok(())
    }

    /// Raw pre-squash output for one patch.
    pub fn logit(&self, p: &Patch) -> Result<f64> {
        self.check_patch(p)?;
        let stages = self.arch.stages()?;
        Ok(self.forward(&patch_input(p), &stages).logit)
    }

    /// Score in [0, 1] for one patch.
    pub fn predict(&self, p: &Patch) -> Result<f64> {
        Ok(sigmoid(self.logit(p)?))
    }

    /// Scores for a whole set, identical to per-patch calls.
    pub fn predict_batch(&self, set: &PatchSet) -> Result<Vec<f64>> {
        set.iter().map(|p| self.predict(p)).collect()
    }

    /// Cross-entropy of one (patch, label) pair.
    pub fn loss(&self, p: &Patch, y: u8) -> Result<f64> {
        Ok(bce(self.predict(p)?, y))
    }

    fn forward(&self, input: &[f64], stages: &[StageDims]) -> Activations {
        let mut conv_a = Vec::with_capacity(stages.len());
        let mut pooled = Vec::with_capacity(stages.len());
        let mut current: Vec<f64> = input.to_vec();
        for (b, s) in stages.iter().enumerate() {
            let z = conv_forward(&current, s, &self.conv_w[b], &self.conv_b[b], self.arch.kernel_h, self.arch.kernel_w);
            let a: Vec<f64> = z.iter().map(|v| v.tanh()).collect();
            let p = pool_forward(&a, s);
            conv_a.push(a);
            current = p.clone();
            pooled.push(p);
        }
        let last = stages.last().unwrap();
        let plane = last.pool_h * last.conv_w;
        let gap: Vec<f64> = (0..last.c_out)
            .map(|c| current[c * plane..(c + 1) * plane].iter().sum::<f64>() / plane as f64)
            .collect();
        let logit = self.head_b + self.head_w.iter().zip(gap.iter()).map(|(w, g)| w * g).sum::<f64>();
        Activations { conv_a, pooled, gap, logit }
    }

    /// Gradient of the cross-entropy loss at one sample, as a flat vector in
    /// the same order as `to_flat`.
    fn backward(&self, input: &[f64], acts: &Activations, stages: &[StageDims], y: f64) -> Vec<f64> {
        let s = sigmoid(acts.logit);
        let dlogit = s - y;

        let last = stages.last().unwrap();
        let plane = last.pool_h * last.conv_w;
        let d_head_w: Vec<f64> = acts.gap.iter().map(|g| dlogit * g).collect();
        let d_head_b = dlogit;

        // Through GAP into the last pooled tensor.
        let mut d_pooled = vec![0.0f64; last.c_out * plane];
        for c in 0..last.c_out {
            let d = dlogit * self.head_w[c] / plane as f64;
            for v in d_pooled[c * plane..(c + 1) * plane].iter_mut() {
                *v = d;
            }
        }

        let mut d_conv_w: Vec<Vec<f64>> = self.conv_w.iter().map(|w| vec![0.0; w.len()]).collect();
        let mut d_conv_b: Vec<Vec<f64>> = self.conv_b.iter().map(|b| vec![0.0; b.len()]).collect();

        for b in (0..stages.len()).rev() {
            let stage = &stages[b];
            let d_act = pool_backward(&d_pooled, stage);
            // tanh'(z) = 1 - tanh(z)^2, with tanh(z) already cached.
            let d_z: Vec<f64> = d_act
                .iter()
                .zip(acts.conv_a[b].iter())
                .map(|(d, a)| d * (1.0 - a * a))
                .collect();
            let below: &[f64] = if b == 0 { input } else { &acts.pooled[b - 1] };
            let d_below = conv_backward(
                below,
                &d_z,
                stage,
                &self.conv_w[b],
                &mut d_conv_w[b],
                &mut d_conv_b[b],
                self.arch.kernel_h,
                self.arch.kernel_w,
                b > 0,
            );
            d_pooled = d_below;
        }

        let mut flat = Vec::with_capacity(self.n_params());
        for (w, b) in d_conv_w.iter().zip(d_conv_b.iter()) {
            flat.extend_from_slice(w);
            flat.extend_from_slice(b);
        }
        flat.extend_from_slice(&d_head_w);
        flat.push(d_head_b);
        flat
    }

    /// Loss and its gradient with respect to every weight for one sample,
    /// gradient in [`Self::to_flat`] order.
    pub fn sample_gradient(&self, p: &Patch, y: u8) -> Result<(f64, Vec<f64>)> {
        self.check_patch(p)?;
        let stages = self.arch.stages()?;
        let input = patch_input(p);
        let acts = self.forward(&input, &stages);
        let loss = bce(sigmoid(acts.logit), y);
        let grad = self.backward(&input, &acts, &stages, y as f64);
        Ok((loss, grad))
    }
}

struct Activations {
    conv_a: Vec<Vec<f64>>,
    pooled: Vec<Vec<f64>>,
    gap: Vec<f64>,
    logit: f64,
}

fn patch_input(p: &Patch) -> Vec<f64> {
    // Channel-major (c=1), row-major within the plane.
    let mut out = vec![0.0f64; p.patch_h * p.patch_w];
    for a in 0..p.patch_h {
        for j in 0..p.patch_w {
            out[a * p.patch_w + j] = p.at(a, j) as f64;
        }
    }
    out
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Cross-entropy with the predicted probability clamped away from 0 and 1.
pub(crate) fn bce(s: f64, y: u8) -> f64 {
    let s = s.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP);
    if y == 1 {
        -s.ln()
    } else {
        -(1.0 - s).ln()
    }
}

fn conv_forward(
    input: &[f64],
    s: &StageDims,
    weights: &[f64],
    bias: &[f64],
    kh: usize,
    kw: usize,
) -> Vec<f64> {
    let in_plane = s.in_h * s.in_w;
    let out_plane = s.conv_h * s.conv_w;
    let mut out = vec![0.0f64; s.c_out * out_plane];
    for co in 0..s.c_out {
        let z = &mut out[co * out_plane..(co + 1) * out_plane];
        for v in z.iter_mut() {
            *v = bias[co];
        }
        for ci in 0..s.c_in {
            let plane = &input[ci * in_plane..(ci + 1) * in_plane];
            let w_base = (co * s.c_in + ci) * kh * kw;
            for u in 0..kh {
                for v in 0..kw {
                    let wgt = weights[w_base + u * kw + v];
                    for a in 0..s.conv_h {
                        let src = &plane[(a + u) * s.in_w + v..(a + u) * s.in_w + v + s.conv_w];
                        let dst = &mut z[a * s.conv_w..(a + 1) * s.conv_w];
                        for (d, x) in dst.iter_mut().zip(src.iter()) {
                            *d += wgt * x;
                        }
                    }
                }
            }
        }
    }
    out
}

/// Accumulates weight/bias gradients; returns the input gradient when
/// `need_input_grad` (skipped for the first block, whose input is data).
#[allow(clippy::too_many_arguments)]
fn conv_backward(
    input: &[f64],
    d_out: &[f64],
    s: &StageDims,
    weights: &[f64],
    d_weights: &mut [f64],
    d_bias: &mut [f64],
    kh: usize,
    kw: usize,
    need_input_grad: bool,
) -> Vec<f64> {
    let in_plane = s.in_h * s.in_w;
    let out_plane = s.conv_h * s.conv_w;
    let mut d_input = vec![0.0f64; if need_input_grad { s.c_in * in_plane } else { 0 }];
    for co in 0..s.c_out {
        let dz = &d_out[co * out_plane..(co + 1) * out_plane];
        d_bias[co] += dz.iter().sum::<f64>();
        for ci in 0..s.c_in {
            let plane = &input[ci * in_plane..(ci + 1) * in_plane];
            let w_base = (co * s.c_in + ci) * kh * kw;
            for u in 0..kh {
                for v in 0..kw {
                    let mut acc = 0.0f64;
                    for a in 0..s.conv_h {
                        let src = &plane[(a + u) * s.in_w + v..(a + u) * s.in_w + v + s.conv_w];
                        let dzr = &dz[a * s.conv_w..(a + 1) * s.conv_w];
                        for (x, d) in src.iter().zip(dzr.iter()) {
                            acc += x * d;
                        }
                    }
                    d_weights[w_base + u * kw + v] += acc;
                    if need_input_grad {
                        let wgt = weights[w_base + u * kw + v];
                        let di = &mut d_input[ci * in_plane..(ci + 1) * in_plane];
                        for a in 0..s.conv_h {
                            let dzr = &dz[a * s.conv_w..(a + 1) * s.conv_w];
                            let dst = &mut di[(a + u) * s.in_w + v..(a + u) * s.in_w + v + s.conv_w];
                            for (d, g) in dst.iter_mut().zip(dzr.iter()) {
                                *d += wgt * g;
                            }
                        }
                    }
                }
            }
        }
    }
    d_input
}

fn pool_forward(a: &[f64], s: &StageDims) -> Vec<f64> {
    let conv_plane = s.conv_h * s.conv_w;
    let pool_plane = s.pool_h * s.conv_w;
    let mut out = vec![0.0f64; s.c_out * pool_plane];
    for c in 0..s.c_out {
        let src = &a[c * conv_plane..(c + 1) * conv_plane];
        let dst = &mut out[c * pool_plane..(c + 1) * pool_plane];
        for ap in 0..s.pool_h {
            let a0 = 2 * ap;
            let single = a0 + 1 >= s.conv_h;
            for j in 0..s.conv_w {
                dst[ap * s.conv_w + j] = if single {
                    src[a0 * s.conv_w + j]
                } else {
                    0.5 * (src[a0 * s.conv_w + j] + src[(a0 + 1) * s.conv_w + j])
                };
            }
        }
    }
    out
}

fn pool_backward(d_pooled: &[f64], s: &StageDims) -> Vec<f64> {
    let conv_plane = s.conv_h * s.conv_w;
    let pool_plane = s.pool_h * s.conv_w;
    let mut out = vec![0.0f64; s.c_out * conv_plane];
    for c in 0..s.c_out {
        let src = &d_pooled[c * pool_plane..(c + 1) * pool_plane];
        let dst = &mut out[c * conv_plane..(c + 1) * conv_plane];
        for ap in 0..s.pool_h {
            let a0 = 2 * ap;
            let single = a0 + 1 >= s.conv_h;
            for j in 0..s.conv_w {
                let d = src[ap * s.conv_w + j];
                if single {
                    dst[a0 * s.conv_w + j] = d;
                } else {
                    dst[a0 * s.conv_w + j] = 0.5 * d;
                    dst[(a0 + 1) * s.conv_w + j] = 0.5 * d;
                }
            }
        }
    }
    out
}

/// Per-parameter adaptive-moment optimizer state.
#[derive(Debug, Clone)]
pub struct AdamState {
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
}

impl AdamState {
    pub fn new(n_params: usize) -> Self {
        AdamState { m: vec![0.0; n_params], v: vec![0.0; n_params], t: 0 }
    }

    fn step(&mut self, flat: &mut [f64], grad: &[f64], lr: f64) {
        self.t += 1;
        let bc1 = 1.0 - ADAM_BETA1.powi(self.t as i32);
        let bc2 = 1.0 - ADAM_BETA2.powi(self.t as i32);
        for i in 0..flat.len() {
            let g = grad[i];
            self.m[i] = ADAM_BETA1 * self.m[i] + (1.0 - ADAM_BETA1) * g;
            self.v[i] = ADAM_BETA2 * self.v[i] + (1.0 - ADAM_BETA2) * g * g;
            let m_hat = self.m[i] / bc1;
            let v_hat = self.v[i] / bc2;
            flat[i] -= lr * m_hat / (v_hat.sqrt() + ADAM_EPS);
        }
    }
}

/// One pass over `indices` in mini-batches: shuffle, flip-augment, and update
/// the parameters in place. Returns the mean training loss. The epoch's
/// randomness is fully determined by `(cfg.seed, epoch_tag)`.
pub fn train_one_epoch(
    params: &mut ClassifierParams,
    adam: &mut AdamState,
    data: &PatchSet,
    labels: &[u8],
    indices: &[usize],
    cfg: &TrainConfig,
    epoch_tag: u64,
) -> Result<f64> {
    if indices.is_empty() {
        return Err(Error::argument("cannot train on an empty index set"));
    }
    if data.len() != labels.len() {
        return Err(Error::argument("patch/label count mismatch"));
    }
    let mut rng = SeedPath::new(cfg.seed).with_str("epoch").with(epoch_tag).rng();
    let mut order: Vec<usize> = indices.to_vec();
    order.shuffle(&mut rng);

    let mut flat = params.to_flat();
    let mut total_loss = 0.0f64;
    for batch in order.chunks(cfg.batch_size) {
        let mut grad = vec![0.0f64; flat.len()];
        for &i in batch {
            let flip = rng.gen::<f64>() < cfg.flip_prob;
            let patch = if flip { data.patches[i].hflip() } else { data.patches[i].clone() };
            let (loss, g) = params.sample_gradient(&patch, labels[i])?;
            total_loss += loss;
            for (acc, gi) in grad.iter_mut().zip(g.iter()) {
                *acc += gi;
            }
        }
        let scale = 1.0 / batch.len() as f64;
        for g in grad.iter_mut() {
            *g *= scale;
        }
        adam.step(&mut flat, &grad, cfg.learning_rate);
        params.set_flat(&flat);
    }
    Ok(total_loss / order.len() as f64)
}

/// Cross-entropy of every patch under the current parameters (no flips).
pub fn per_sample_losses(params: &ClassifierParams, data: &PatchSet, labels: &[u8]) -> Result<Vec<f64>> {
    if data.len() != labels.len() {
        return Err(Error::argument("patch/label count mismatch"));
    }
    data.iter()
        .zip(labels.iter())
        .map(|(p, &y)| params.loss(p, y))
        .collect()
}

/// Full training run: seeded validation holdout, per-epoch flip augmentation
/// and shuffling, adaptive-moment updates, and best-validation-epoch
/// snapshotting. Deterministic given `cfg.seed`.
pub fn train(
    init: &ClassifierParams,
    data: &PatchSet,
    labels: &[u8],
    cfg: &TrainConfig,
) -> Result<ClassifierParams> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(Error::argument("training data is empty"));
    }
    if data.len() != labels.len() {
        return Err(Error::argument(format!(
            "{} patches but {} labels",
            data.len(),
            labels.len()
        )));
    }
    if let Some(bad) = labels.iter().find(|&&y| y > 1) {
        return Err(Error::argument(format!("label {bad} outside {{0, 1}}")));
    }
    if data.len() < 2 {
        return Err(Error::argument("training needs at least 2 patches for a holdout"));
    }

    let mut indices: Vec<usize> = (0..data.len()).collect();
    let mut split_rng = SeedPath::new(cfg.seed).with_str("split").rng();
    indices.shuffle(&mut split_rng);
    let n_val = ((data.len() as f64 * cfg.validation_fraction).round() as usize)
        .clamp(1, data.len() - 1);
    let (val_idx, train_idx) = indices.split_at(n_val);

    let mut params = init.clone();
    let mut adam = AdamState::new(params.n_params());
    let mut best = params.clone();
    let mut best_loss = f64::INFINITY;
    for epoch in 0..cfg.epochs {
        let train_loss =
            train_one_epoch(&mut params, &mut adam, data, labels, train_idx, cfg, epoch as u64)?;
        let val_loss: f64 = val_idx
            .iter()
            .map(|&i| params.loss(&data.patches[i], labels[i]))
            .sum::<Result<f64>>()?
            / val_idx.len() as f64;
        log::debug!("epoch {epoch}: train loss {train_loss:.5}, val loss {val_loss:.5}");
        if val_loss < best_loss {
            best_loss = val_loss;
            best = params.clone();
        }
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seeds::SeedPath;
    use rand::Rng;

    /// Smallest input that survives three 5x3 conv blocks with 2x pooling.
    fn micro_arch(widths: Vec<usize>) -> Architecture {
        Architecture { input_h: 32, input_w: 7, widths, kernel_h: 5, kernel_w: 3 }
    }

    fn random_patch(h: usize, w: usize, seed: u64) -> Patch {
        let mut rng = SeedPath::new(seed).with_str("patch").rng();
        Patch::new((0..h * w).map(|_| rng.gen::<f32>() * 2.0 - 1.0).collect(), h, w, 40.0)
    }

    #[test]
    fn stage_dims_for_compact_patch() {
        let arch = Architecture::victim(50, 13);
        let stages = arch.stages().unwrap();
        assert_eq!(stages.len(), 3);
        assert_eq!((stages[0].conv_h, stages[0].conv_w, stages[0].pool_h), (46, 11, 23));
        assert_eq!((stages[1].conv_h, stages[1].conv_w, stages[1].pool_h), (19, 9, 10));
        assert_eq!((stages[2].conv_h, stages[2].conv_w, stages[2].pool_h), (6, 7, 3));
    }

    #[test]
    fn too_small_input_is_a_config_error() {
        let arch = Architecture::victim(12, 5);
        assert!(matches!(arch.validate(), Err(Error::Config(_))));
    }

    #[test]
    fn init_is_deterministic_and_seed_sensitive() {
        let arch = micro_arch(vec![2, 3, 2]);
        let a = ClassifierParams::init(arch.clone(), 7).unwrap();
        let b = ClassifierParams::init(arch.clone(), 7).unwrap();
        let c = ClassifierParams::init(arch, 8).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn flat_round_trip() {
        let params = ClassifierParams::init(micro_arch(vec![2, 2, 2]), 3).unwrap();
        let flat = params.to_flat();
        assert_eq!(flat.len(), params.n_params());
        let mut other = ClassifierParams::init(micro_arch(vec![2, 2, 2]), 4).unwrap();
        other.set_flat(&flat);
        assert_eq!(other.conv_w, params.conv_w);
        assert_eq!(other.head_b, params.head_b);
    }

    #[test]
    fn prediction_is_a_probability_and_logistic_midpoint_holds() {
        let arch = micro_arch(vec![2, 2, 2]);
        let mut params = ClassifierParams::init(arch, 1).unwrap();
        let p = random_patch(32, 7, 2);
        let s = params.predict(&p).unwrap();
        assert!((0.0..=1.0).contains(&s));

        // Zero weights everywhere -> logit 0 -> score exactly 0.5.
        let zeros = vec![0.0; params.n_params()];
        params.set_flat(&zeros);
        assert_eq!(params.predict(&p).unwrap(), 0.5);
    }

    #[test]
    fn batch_prediction_matches_single_calls() {
        let params = ClassifierParams::init(micro_arch(vec![2, 3, 2]), 5).unwrap();
        let set = PatchSet::new((0..6).map(|i| random_patch(32, 7, 100 + i)).collect());
        let batch = params.predict_batch(&set).unwrap();
        for (p, &s) in set.iter().zip(batch.iter()) {
            assert_eq!(params.predict(p).unwrap(), s);
        }
    }

    #[test]
    fn shape_mismatch_is_an_argument_error() {
        let params = ClassifierParams::init(micro_arch(vec![2, 2, 2]), 1).unwrap();
        let wrong = random_patch(31, 7, 3);
        assert!(matches!(params.predict(&wrong), Err(Error::Argument(_))));
    }

    #[test]
    fn loss_hand_values() {
        assert!((bce(0.5, 1) - std::f64::consts::LN_2).abs() < 1e-12);
        assert!(bce(1.0, 1) < 1e-6);
        assert!((bce(0.9, 0) - 2.302585092994046).abs() < 1e-12);
        assert!(bce(0.0, 1).is_finite());
    }

    #[test]
    fn gradient_matches_finite_differences_on_micro_instances() {
        let mut worst = 0.0f64;
        for inst in 0..10 {
            let widths = match inst % 3 {
                0 => vec![1, 2, 2],
                1 => vec![2, 2, 3],
                _ => vec![2, 3, 2],
            };
            let arch = micro_arch(widths);
            let params = ClassifierParams::init(arch, 50 + inst).unwrap();
            let patch = random_patch(32, 7, 1000 + inst);
            let y = (inst % 2) as u8;
            let (_, grad) = params.sample_gradient(&patch, y).unwrap();

            let flat = params.to_flat();
            let h = 1e-6;
            for i in 0..flat.len() {
                let mut plus = params.clone();
                let mut minus = params.clone();
                let mut fp = flat.clone();
                fp[i] += h;
                plus.set_flat(&fp);
                fp[i] -= 2.0 * h;
                minus.set_flat(&fp);
                let fd = (plus.loss(&patch, y).unwrap() - minus.loss(&patch, y).unwrap())
                    / (2.0 * h);
                let denom = grad[i].abs().max(fd.abs()).max(1e-6);
                let rel = (grad[i] - fd).abs() / denom;
                worst = worst.max(rel);
                assert!(
                    rel < 1e-4,
                    "instance {inst}, param {i}: analytic {} vs fd {fd} (rel {rel})",
                    grad[i]
                );
            }
        }
        // Keep a record of how much margin the oracle leaves.
        assert!(worst < 1e-4, "worst relative error {worst}");
    }

    #[test]
    fn separable_toy_data_reaches_full_training_accuracy() {
        // Two disjoint constant levels; the net must separate them quickly.
        let arch = micro_arch(vec![2, 2, 2]);
        let init = ClassifierParams::init(arch, 11).unwrap();
        let mut patches = Vec::new();
        let mut labels = Vec::new();
        for i in 0..40 {
            let level = if i % 2 == 0 { -0.5f32 } else { 0.5 };
            patches.push(Patch::new(vec![level; 32 * 7], 32, 7, 40.0));
            labels.push((i % 2) as u8);
        }
        let set = PatchSet::new(patches);
        let cfg = TrainConfig {
            learning_rate: 0.05,
            epochs: 10,
            batch_size: 8,
            flip_prob: 0.5,
            validation_fraction: 0.10,
            seed: 21,
        };
        let trained = train(&init, &set, &labels, &cfg).unwrap();
        let correct = set
            .iter()
            .zip(labels.iter())
            .filter(|(p, &y)| (trained.predict(p).unwrap() >= 0.5) == (y == 1))
            .count();
        assert_eq!(correct, set.len(), "toy problem not separated");
    }

    #[test]
    fn training_is_deterministic() {
        let arch = micro_arch(vec![2, 2, 2]);
        let init = ClassifierParams::init(arch, 13).unwrap();
        let set = PatchSet::new((0..30).map(|i| random_patch(32, 7, 300 + i)).collect());
        let labels: Vec<u8> = (0..30).map(|i| (i % 2) as u8).collect();
        let cfg = TrainConfig { learning_rate: 0.01, epochs: 3, seed: 9, ..TrainConfig::desk() };
        let a = train(&init, &set, &labels, &cfg).unwrap();
        let b = train(&init, &set, &labels, &cfg).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn invalid_labels_and_empty_data_are_rejected() {
        let arch = micro_arch(vec![2, 2, 2]);
        let init = ClassifierParams::init(arch, 1).unwrap();
        let set = PatchSet::new(vec![random_patch(32, 7, 1), random_patch(32, 7, 2)]);
        let cfg = TrainConfig::desk();
        assert!(train(&init, &PatchSet::default(), &[], &cfg).is_err());
        assert!(train(&init, &set, &[0, 2], &cfg).is_err());
        assert!(train(&init, &set, &[0], &cfg).is_err());
    }

    #[test]
    fn bad_config_is_a_config_error() {
        let arch = micro_arch(vec![2, 2, 2]);
        let init = ClassifierParams::init(arch, 1).unwrap();
        let set = PatchSet::new(vec![random_patch(32, 7, 1), random_patch(32, 7, 2)]);
        let cfg = TrainConfig { flip_prob: 1.5, ..TrainConfig::desk() };
        assert!(matches!(train(&init, &set, &[0, 1], &cfg), Err(Error::Config(_))));
    }
}
