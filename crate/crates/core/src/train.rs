//! Training through the analog channel: plain pretraining, sparse training
//! with an L1 penalty on the BN scales, and best-checkpoint fine-tuning.

use jscc_tensor::{add, mse_loss, scale, sum_abs, Adam, Optimizer, Sgd, Tape, Tensor};
use rand::seq::SliceRandom;

use crate::channel::{analog_channel, ChannelModel, ChannelRealization, Fading};
use crate::dataset::ImageSet;
use crate::error::{Error, Result};
use crate::model::{Mode, ParamRole, TrainedModel};
use crate::rng::{derive_seed, rng_for};

/// How the L1 term on `η` enters the update.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum L1Mode {
    /// `λ·sign(η)` is added to the MSE gradient before the optimizer step.
    ExplicitSign,
    /// `λ·Σ|η|` is part of the loss and differentiated by the tape.
    InLoss,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OptimizerKind {
    Adam,
    Sgd,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub snr_db: f64,
    pub fading: Fading,
    pub lambda: f64,
    pub l1_mode: L1Mode,
    pub optimizer: OptimizerKind,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 10,
            batch_size: 32,
            learning_rate: 1e-4,
            snr_db: 25.0,
            fading: Fading::SlowRayleigh,
            lambda: 0.0,
            l1_mode: L1Mode::ExplicitSign,
            optimizer: OptimizerKind::Adam,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn channel(&self) -> ChannelModel {
        ChannelModel {
            fading: self.fading,
            snr_db: self.snr_db,
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.lambda >= 0.0) {
            return Err(Error::Config(format!("lambda must be non-negative, got {}", self.lambda)));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch size must be positive".into()));
        }
        if !(self.learning_rate > 0.0) {
            return Err(Error::Config("learning rate must be positive".into()));
        }
        Ok(())
    }
}

/// Mean training loss per epoch.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainReport {
    pub epoch_losses: Vec<f64>,
}

/// Adds `λ·sign(η)` (with `sign(0) = 0`) to a gradient.
pub fn add_l1_subgradient(grad: &mut [f64], eta: &[f64], lambda: f64) {
    for (g, &e) in grad.iter_mut().zip(eta) {
        let s = if e > 0.0 {
            1.0
        } else if e < 0.0 {
            -1.0
        } else {
            0.0
        };
        *g += lambda * s;
    }
}

fn make_optimizer(cfg: &TrainConfig) -> Box<dyn Optimizer> {
    match cfg.optimizer {
        OptimizerKind::Adam => Box::new(Adam::new(cfg.learning_rate)),
        OptimizerKind::Sgd => Box::new(Sgd { lr: cfg.learning_rate }),
    }
}

/// One optimisation step on a batch. Returns the MSE part of the loss.
pub fn train_step(
    model: &mut TrainedModel,
    batch: &Tensor,
    channels: &[ChannelRealization],
    cfg: &TrainConfig,
    optimizer: &mut dyn Optimizer,
) -> Result<f64> {
    let tape = Tape::new();
    let x = tape.constant(batch);
    let enc = model.encoder_pass(x, Mode::Train)?;
    let z_tilde = analog_channel(enc.output, channels)?;
    let dec = model.decoder_pass(z_tilde, Mode::Train)?;
    let mse = mse_loss(dec.output, x)?;
    let bound: Vec<_> = enc.bound.iter().chain(&dec.bound).copied().collect();
    let mut loss = mse;
    if cfg.lambda > 0.0 && cfg.l1_mode == L1Mode::InLoss {
        for (r, v) in &bound {
            if r.role == ParamRole::Eta {
                loss = add(loss, scale(sum_abs(*v), cfg.lambda))?;
            }
        }
    }
    let mse_value = mse.item();
    let mut grads = tape.backward(loss)?;
    let refs = model.param_refs();
    debug_assert_eq!(refs.len(), bound.len());
    let mut params = model.params_mut();
    for ((r, v), p) in bound.iter().zip(params.iter_mut()) {
        let mut g = grads.take(*v).unwrap_or_else(|| vec![0.0; p.numel()]);
        if cfg.lambda > 0.0 && cfg.l1_mode == L1Mode::ExplicitSign && r.role == ParamRole::Eta {
            add_l1_subgradient(&mut g, p.data(), cfg.lambda);
        }
        p.set_grad(g)?;
    }
    optimizer.step(&mut params)?;
    for p in params.iter_mut() {
        p.clear_grad();
    }
    let stats: Vec<_> = enc.bn_stats.into_iter().chain(dec.bn_stats).collect();
    model.apply_bn_stats(&stats);
    Ok(mse_value)
}

/// Trains for `cfg.epochs` epochs minimising `MSE + λ·Σ|η|` through the
/// analog channel. Each epoch visits the images in a seeded random order and
/// every image in every step gets its own channel realization.
pub fn train(model: &mut TrainedModel, data: &ImageSet, cfg: &TrainConfig) -> Result<TrainReport> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(Error::Dataset("training set is empty".into()));
    }
    let mut optimizer = make_optimizer(cfg);
    let mut report = TrainReport::default();
    for epoch in 0..cfg.epochs {
        let mean = run_epoch(model, data, cfg, epoch, optimizer.as_mut())?;
        log::info!("epoch {}/{}: mse {mean:.6}", epoch + 1, cfg.epochs);
        report.epoch_losses.push(mean);
    }
    Ok(report)
}

fn run_epoch(
    model: &mut TrainedModel,
    data: &ImageSet,
    cfg: &TrainConfig,
    epoch: usize,
    optimizer: &mut dyn Optimizer,
) -> Result<f64> {
    let channel = cfg.channel();
    let k = model.spec().feature_len;
    let mut order: Vec<usize> = (0..data.len()).collect();
    order.shuffle(&mut rng_for(cfg.seed, &[epoch as u64]));
    let mut total = 0.0;
    for (step, idx) in order.chunks(cfg.batch_size).enumerate() {
        let batch = data.batch(idx)?;
        let channels: Vec<_> = (0..idx.len())
            .map(|i| {
                let seed = derive_seed(cfg.seed, &[epoch as u64, step as u64, i as u64]);
                ChannelRealization::sample(&channel, k, seed)
            })
            .collect();
        let loss = train_step(model, &batch, &channels, cfg, optimizer)?;
        if !loss.is_finite() {
            return Err(Error::NonFiniteLoss { epoch, step, loss });
        }
        total += loss * idx.len() as f64;
    }
    Ok(total / data.len() as f64)
}

/// Plain reconstruction training (`λ = 0`).
pub fn pretrain(model: &mut TrainedModel, data: &ImageSet, cfg: &TrainConfig) -> Result<TrainReport> {
    let cfg = TrainConfig { lambda: 0.0, ..cfg.clone() };
    train(model, data, &cfg)
}

/// Sparse training with the L1 penalty on every BN scale.
pub fn sparse_train(model: &mut TrainedModel, data: &ImageSet, cfg: &TrainConfig) -> Result<TrainReport> {
    train(model, data, cfg)
}

/// Eval-mode reconstruction MSE (on the `[0, 1]` scale) through the analog
/// channel with fixed per-image realizations.
pub fn validation_mse(model: &TrainedModel, data: &ImageSet, channel: &ChannelModel, seed: u64) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::Dataset("validation set is empty".into()));
    }
    let mut total = 0.0;
    const CHUNK: usize = 64;
    let idx: Vec<usize> = (0..data.len()).collect();
    for (c, chunk) in idx.chunks(CHUNK).enumerate() {
        let x = data.batch(chunk)?;
        let out = crate::channel::analog_inference(model, &x, channel, derive_seed(seed, &[c as u64]))?;
        total += x
            .data()
            .iter()
            .zip(out.data())
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>();
    }
    Ok(total / data.data().len() as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct FineTuneReport {
    /// Validation MSE before fine-tuning, then after each epoch.
    pub val_mse: Vec<f64>,
    /// Index into `val_mse` of the returned checkpoint (0 = untouched).
    pub best_epoch: usize,
    pub train: TrainReport,
}

/// Fine-tunes with `λ = 0` and returns the checkpoint with the lowest
/// validation MSE, counting the incoming model as epoch 0. Ties keep the
/// earlier checkpoint.
pub fn fine_tune(
    model: &TrainedModel,
    train_set: &ImageSet,
    val_set: &ImageSet,
    cfg: &TrainConfig,
) -> Result<(TrainedModel, FineTuneReport)> {
    let cfg = TrainConfig { lambda: 0.0, ..cfg.clone() };
    cfg.validate()?;
    if train_set.is_empty() {
        return Err(Error::Dataset("training set is empty".into()));
    }
    let channel = cfg.channel();
    let val_seed = derive_seed(cfg.seed, &[crate::rng::tag("validation")]);
    let mut best = model.clone();
    let mut best_mse = validation_mse(model, val_set, &channel, val_seed)?;
    let mut report = FineTuneReport {
        val_mse: vec![best_mse],
        best_epoch: 0,
        train: TrainReport::default(),
    };
    let mut current = model.clone();
    let mut optimizer = make_optimizer(&cfg);
    for epoch in 0..cfg.epochs {
        let r = run_epoch(&mut current, train_set, &cfg, epoch, optimizer.as_mut())?;
        report.train.epoch_losses.push(r);
        let mse = validation_mse(&current, val_set, &channel, val_seed)?;
        report.val_mse.push(mse);
        if mse < best_mse {
            best_mse = mse;
            best = current.clone();
            report.best_epoch = epoch + 1;
        }
    }
    Ok((best, report))
}
