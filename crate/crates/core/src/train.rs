//! Mini-batch Adam training with a step learning-rate schedule.

use std::fmt::Write as _;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::model::{Checkpoint, ModelConfig, ModelError, ModelInput, ModelWeights, TransRppg};
use crate::mstmap::{prepare_maps, Label, MapOptions, MstMapError, RegionTraceSet};
use crate::tensor::Tensor;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("invalid train setting {key}: {message}")]
    InvalidConfig { key: &'static str, message: String },
    #[error("epoch {epoch} outside 1..={max}")]
    EpochOutOfRange { epoch: usize, max: usize },
    #[error("training set is empty")]
    EmptyDataset,
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("non-finite values at epoch {epoch}, batch {batch}: {message}")]
    NonFinite { epoch: usize, batch: usize, message: String },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Map(#[from] MstMapError),
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub lr: f64,
    pub weight_decay: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    /// First epoch (1-indexed) trained at half the initial rate.
    pub lr_halve_epoch: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_epsilon: f64,
    pub seed: u64,
    pub shuffle: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr: 1e-4,
            weight_decay: 5e-5,
            batch_size: 10,
            max_epochs: 60,
            lr_halve_epoch: 45,
            beta1: 0.9,
            beta2: 0.999,
            adam_epsilon: 1e-8,
            seed: 0,
            shuffle: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        let fail = |key: &'static str, message: String| Err(TrainError::InvalidConfig { key, message });
        if !(self.lr.is_finite() && self.lr >= 0.0) {
            return fail("lr", format!("must be >= 0, got {}", self.lr));
        }
        if !(self.weight_decay.is_finite() && self.weight_decay >= 0.0) {
            return fail("weight_decay", format!("must be >= 0, got {}", self.weight_decay));
        }
        if self.batch_size == 0 {
            return fail("batch_size", "must be >= 1".into());
        }
        if self.max_epochs == 0 {
            return fail("max_epochs", "must be >= 1".into());
        }
        if self.lr_halve_epoch == 0 || self.lr_halve_epoch > self.max_epochs + 1 {
            return fail(
                "lr_halve_epoch",
                format!("must lie in 1..={} (max_epochs + 1 disables halving), got {}", self.max_epochs + 1, self.lr_halve_epoch),
            );
        }
        for (key, v) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(v > 0.0 && v < 1.0) {
                return fail(key, format!("must lie in (0, 1), got {v}"));
            }
        }
        if !(self.adam_epsilon > 0.0) {
            return fail("adam_epsilon", format!("must be > 0, got {}", self.adam_epsilon));
        }
        Ok(())
    }
}

/// Initial rate before `lr_halve_epoch`, half of it from then on.
pub fn lr_at_epoch(epoch: usize, cfg: &TrainConfig) -> Result<f64, TrainError> {
    if epoch == 0 || epoch > cfg.max_epochs {
        return Err(TrainError::EpochOutOfRange { epoch, max: cfg.max_epochs });
    }
    Ok(if epoch < cfg.lr_halve_epoch { cfg.lr } else { cfg.lr / 2.0 })
}

/// First and second moments, shaped like the weights.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub m: ModelWeights,
    pub v: ModelWeights,
    /// Updates applied so far.
    pub step: u64,
}

impl AdamState {
    pub fn new(weights: &ModelWeights) -> Self {
        Self { m: weights.zeros_like(), v: weights.zeros_like(), step: 0 }
    }
}

/// One Adam update with bias correction. Weight decay is added to the
/// gradient before the moment updates.
pub fn adam_step(
    weights: &mut ModelWeights,
    grads: &[Vec<f32>],
    state: &mut AdamState,
    cfg: &TrainConfig,
    lr: f64,
) -> Result<(), TrainError> {
    let mut params = weights.named_mut();
    let mut ms = state.m.named_mut();
    let mut vs = state.v.named_mut();
    if grads.len() != params.len() || ms.len() != params.len() || vs.len() != params.len() {
        return Err(TrainError::Shape(format!(
            "{} parameters, {} gradients, {}/{} moment tensors",
            params.len(),
            grads.len(),
            ms.len(),
            vs.len()
        )));
    }
    state.step += 1;
    let t = state.step as i32;
    let c1 = 1.0 - cfg.beta1.powi(t);
    let c2 = 1.0 - cfg.beta2.powi(t);
    let (b1, b2, wd, eps) = (cfg.beta1, cfg.beta2, cfg.weight_decay, cfg.adam_epsilon);
    for (k, ((name, w), g)) in params.iter_mut().zip(grads).enumerate() {
        let m = ms[k].1.data_mut();
        let v = vs[k].1.data_mut();
        let w = w.data_mut();
        if g.len() != w.len() || m.len() != w.len() || v.len() != w.len() {
            return Err(TrainError::Shape(format!("{name}: {} weights, {} gradients", w.len(), g.len())));
        }
        for i in 0..w.len() {
            let wi = w[i] as f64;
            let gi = g[i] as f64 + wd * wi;
            let mi = b1 * m[i] as f64 + (1.0 - b1) * gi;
            let vi = b2 * v[i] as f64 + (1.0 - b2) * gi * gi;
            m[i] = mi as f32;
            v[i] = vi as f32;
            w[i] = (wi - lr * (mi / c1) / ((vi / c2).sqrt() + eps)) as f32;
        }
    }
    Ok(())
}

/// One model-ready sample.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainSample {
    pub input: ModelInput,
    pub label: Label,
    pub subject: String,
}

/// Which maps feed the model.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum InputMode {
    /// Face and background maps into the two-branch model.
    Full,
    /// Background map alone into a single-branch model whose face input
    /// geometry matches the background map.
    BackgroundOnly,
}

impl InputMode {
    /// Model geometry for this mode derived from the two-branch config.
    pub fn model_config(self, cfg: &ModelConfig) -> ModelConfig {
        match self {
            InputMode::Full => cfg.clone(),
            InputMode::BackgroundOnly => ModelConfig { h_face: cfg.h_bg, use_bg_branch: false, ..cfg.clone() },
        }
    }
}

/// Builds maps and patch sequences for every trace set. `cfg` is the model
/// config for the chosen mode.
pub fn prepare_samples(
    sets: &[RegionTraceSet],
    opts: &MapOptions,
    cfg: &ModelConfig,
    mode: InputMode,
) -> Result<Vec<TrainSample>, TrainError> {
    sets.par_iter()
        .map(|set| {
            let maps = prepare_maps(set, opts)?;
            let input = match mode {
                InputMode::Full => ModelInput::from_maps(cfg, &maps.face, maps.bg.as_ref())?,
                InputMode::BackgroundOnly => {
                    let bg = maps.bg.as_ref().ok_or_else(|| {
                        TrainError::Shape(format!("sample of {} has no background regions", set.subject_id))
                    })?;
                    ModelInput::from_maps(cfg, bg, None)?
                }
            };
            Ok(TrainSample { input, label: set.label, subject: set.subject_id.clone() })
        })
        .collect()
}

/// Mean losses of one epoch.
#[derive(Clone, Debug, PartialEq)]
pub struct EpochLog {
    pub epoch: usize,
    pub lr: f64,
    pub l_face: f64,
    pub l_bg: f64,
    pub l_combined: f64,
    pub l_overall: f64,
    pub wall_secs: f64,
}

impl EpochLog {
    pub fn line(&self) -> String {
        format!(
            "epoch={} lr={:.6} L_face={:.6} L_bg={:.6} L_combined={:.6} L_overall={:.6}",
            self.epoch, self.lr, self.l_face, self.l_bg, self.l_combined, self.l_overall
        )
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainLog {
    pub epochs: Vec<EpochLog>,
}

impl TrainLog {
    /// One line per epoch; wall time is left out so logs are reproducible.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for e in &self.epochs {
            writeln!(out, "{}", e.line()).unwrap();
        }
        out
    }
}

/// Everything needed to continue training.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainState {
    pub model: TransRppg,
    pub adam: AdamState,
    pub epochs_done: usize,
    pub log: TrainLog,
}

const EPOCH_KEY: &str = "train.epoch";
const STEP_KEY: &str = "adam.step";

impl TrainState {
    pub fn new(model: TransRppg) -> Self {
        let adam = AdamState::new(&model.weights);
        Self { model, adam, epochs_done: 0, log: TrainLog::default() }
    }

    /// Weights under their canonical names, Adam moments under `adam.m.` and
    /// `adam.v.`, then the step and epoch counters.
    pub fn to_checkpoint(&self) -> Checkpoint {
        let mut ck = Checkpoint::default();
        ck.push_weights("", &self.model.weights);
        ck.push_weights("adam.m.", &self.adam.m);
        ck.push_weights("adam.v.", &self.adam.v);
        ck.push(STEP_KEY, Tensor::scalar(self.adam.step as f32));
        ck.push(EPOCH_KEY, Tensor::scalar(self.epochs_done as f32));
        ck
    }

    /// Restores a state; checkpoints holding only weights start a fresh
    /// optimizer at epoch 0.
    pub fn from_checkpoint(cfg: ModelConfig, ck: &Checkpoint) -> Result<Self, TrainError> {
        let weights = ck.weights(&cfg, "")?;
        let model = TransRppg::from_weights(cfg.clone(), weights)?;
        if ck.get(STEP_KEY).is_none() {
            return Ok(Self::new(model));
        }
        let counter = |key: &str| -> Result<u64, TrainError> {
            let t = ck.get(key).ok_or_else(|| ModelError::Checkpoint(format!("missing tensor {key}")))?;
            Ok(t.data()[0] as u64)
        };
        let adam = AdamState { m: ck.weights(&cfg, "adam.m.")?, v: ck.weights(&cfg, "adam.v.")?, step: counter(STEP_KEY)? };
        Ok(Self { model, adam, epochs_done: counter(EPOCH_KEY)? as usize, log: TrainLog::default() })
    }
}

/// Sample order for one epoch; a fresh stream of the shuffle seed per epoch.
pub fn epoch_order(n: usize, epoch: usize, cfg: &TrainConfig) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    if cfg.shuffle {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(epoch as u64);
        order.shuffle(&mut rng);
    }
    order
}

/// Trains from `state.epochs_done + 1` through `until_epoch` inclusive.
///
/// Each batch averages the per-sample loss, so gradients are averaged too.
/// The last batch of an epoch may be smaller than `batch_size`.
pub fn train_until(
    state: &mut TrainState,
    data: &[TrainSample],
    cfg: &TrainConfig,
    until_epoch: usize,
) -> Result<(), TrainError> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(TrainError::EmptyDataset);
    }
    if until_epoch > cfg.max_epochs {
        return Err(TrainError::EpochOutOfRange { epoch: until_epoch, max: cfg.max_epochs });
    }
    while state.epochs_done < until_epoch {
        let epoch = state.epochs_done + 1;
        let started = Instant::now();
        let lr = lr_at_epoch(epoch, cfg)?;
        let order = epoch_order(data.len(), epoch, cfg);
        let mut sums = [0.0f64; 4];
        for (b, batch) in order.chunks(cfg.batch_size).enumerate() {
            let context = |message: String| TrainError::NonFinite { epoch, batch: b + 1, message };
            let model = &state.model;
            let results: Vec<_> = batch
                .par_iter()
                .map(|&i| model.loss_and_grad(&data[i].input, data[i].label.target()))
                .collect();
            let mut total: Option<Vec<Vec<f32>>> = None;
            for r in results {
                let (loss, grads) = r.map_err(|e| match e {
                    ModelError::Tensor(t @ crate::tensor::TensorError::NonFinite { .. }) => context(t.to_string()),
                    other => TrainError::Model(other),
                })?;
                sums[0] += loss.face;
                sums[1] += loss.bg.unwrap_or(0.0);
                sums[2] += loss.combined;
                sums[3] += loss.total;
                match &mut total {
                    None => total = Some(grads),
                    Some(acc) => {
                        for (a, g) in acc.iter_mut().zip(&grads) {
                            a.iter_mut().zip(g).for_each(|(x, y)| *x += y);
                        }
                    }
                }
            }
            let mut grads = total.expect("batches are non-empty");
            let inv = 1.0 / batch.len() as f32;
            for g in &mut grads {
                g.iter_mut().for_each(|x| *x *= inv);
            }
            if grads.iter().flatten().any(|g| !g.is_finite()) {
                return Err(context("gradient".into()));
            }
            adam_step(&mut state.model.weights, &grads, &mut state.adam, cfg, lr)?;
            if let Some((name, _)) = state.model.weights.named().into_iter().find(|(_, t)| !t.is_finite()) {
                return Err(context(format!("weight {name} after update")));
            }
        }
        let n = data.len() as f64;
        state.epochs_done = epoch;
        state.log.epochs.push(EpochLog {
            epoch,
            lr,
            l_face: sums[0] / n,
            l_bg: sums[1] / n,
            l_combined: sums[2] / n,
            l_overall: sums[3] / n,
            wall_secs: started.elapsed().as_secs_f64(),
        });
    }
    Ok(())
}

/// Fresh model trained for `cfg.max_epochs`.
pub fn fit(model_cfg: &ModelConfig, init_seed: u64, data: &[TrainSample], cfg: &TrainConfig) -> Result<TrainState, TrainError> {
    let mut state = TrainState::new(TransRppg::new(model_cfg.clone(), init_seed)?);
    train_until(&mut state, data, cfg, cfg.max_epochs)?;
    Ok(state)
}
