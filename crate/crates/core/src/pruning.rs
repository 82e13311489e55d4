//! Structured channel pruning driven by batch-norm scale magnitudes.
//!
//! Every hidden layer carries BN and is prunable; the sigmoid output layers of
//! the encoder and decoder fix `k` and the image channels and are never
//! touched. Removing channel `c` of layer `l` deletes the `c`-th output filter
//! of `l`, its BN entries, and the `c`-th input slice of the layer that
//! consumes `l`'s output.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use jscc_tensor::Tensor;

use crate::dataset::ImageSet;
use crate::error::{Error, Result};
use crate::model::{LayerId, LayerKind, TrainedModel};
use crate::train::{fine_tune, FineTuneReport, TrainConfig};

#[derive(Debug, Clone, PartialEq)]
pub struct SparsityConfig {
    pub lambda: f64,
    pub sparse_epochs: usize,
    pub pruning_rounds: usize,
    pub finetune_epochs: usize,
    pub gamma: f64,
}

impl Default for SparsityConfig {
    fn default() -> Self {
        SparsityConfig {
            lambda: 1e-5,
            sparse_epochs: 10,
            pruning_rounds: 4,
            finetune_epochs: 5,
            gamma: 0.5,
        }
    }
}

impl SparsityConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda >= 0.0) {
            return Err(Error::Config(format!("lambda must be non-negative, got {}", self.lambda)));
        }
        check_gamma(self.gamma)?;
        if self.gamma > 0.0 && self.pruning_rounds == 0 {
            return Err(Error::Config("a positive pruning rate needs at least one round".into()));
        }
        Ok(())
    }
}

fn check_gamma(gamma: f64) -> Result<()> {
    if !(0.0..1.0).contains(&gamma) {
        return Err(Error::Config(format!("pruning rate must lie in [0, 1), got {gamma}")));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelScore {
    pub layer: LayerId,
    pub channel: usize,
    pub magnitude: f64,
}

/// Prunable channels sorted by ascending `|η|`, ties by `(layer, channel)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelImportance {
    pub scores: Vec<ChannelScore>,
}

impl ChannelImportance {
    pub fn from_scores(mut scores: Vec<ChannelScore>) -> Self {
        scores.sort_by(|a, b| {
            a.magnitude
                .total_cmp(&b.magnitude)
                .then(a.layer.cmp(&b.layer))
                .then(a.channel.cmp(&b.channel))
        });
        ChannelImportance { scores }
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }

    fn layer_sizes(&self) -> BTreeMap<LayerId, usize> {
        let mut sizes = BTreeMap::new();
        for s in &self.scores {
            *sizes.entry(s.layer).or_insert(0) += 1;
        }
        sizes
    }
}

/// Layers whose output channels may be removed.
pub fn prunable_layers(model: &TrainedModel) -> Vec<LayerId> {
    let spec = model.spec();
    let last_enc = LayerId::encoder(spec.encoder.len() - 1);
    let last_dec = LayerId::decoder(spec.decoder.len() - 1);
    model
        .layers()
        .filter(|(id, s, _)| s.has_bn && *id != last_enc && *id != last_dec)
        .map(|(id, _, _)| id)
        .collect()
}

pub fn rank_channels(model: &TrainedModel) -> Result<ChannelImportance> {
    let mut scores = Vec::new();
    for id in prunable_layers(model) {
        let bn = model.layer(id).bn.as_ref().expect("prunable layers carry BN");
        for (channel, eta) in bn.eta.data().iter().enumerate() {
            scores.push(ChannelScore {
                layer: id,
                channel,
                magnitude: eta.abs(),
            });
        }
    }
    if scores.is_empty() {
        return Err(Error::Pruning("model has no prunable BN layers".into()));
    }
    Ok(ChannelImportance::from_scores(scores))
}

#[derive(Debug, Clone, PartialEq)]
pub struct PruningPlan {
    /// Keep-mask per prunable layer (`true` = keep).
    pub keep: BTreeMap<LayerId, Vec<bool>>,
    /// Largest `|η|` among the channels selected for removal before the
    /// per-layer floor was applied; 0 for an empty plan.
    pub threshold: f64,
    /// Channels requested by the rate and channels actually removed.
    pub requested: usize,
    pub pruned: usize,
}

impl PruningPlan {
    pub fn is_empty(&self) -> bool {
        self.pruned == 0
    }

    pub fn pruned_channels(&self, layer: LayerId) -> Vec<usize> {
        self.keep
            .get(&layer)
            .map(|m| m.iter().enumerate().filter(|(_, k)| !**k).map(|(i, _)| i).collect())
            .unwrap_or_default()
    }

    /// Pairs `(pruned layer, consumer layer)` whose input channels shrink.
    pub fn dependencies(&self, model: &TrainedModel) -> Vec<(LayerId, LayerId)> {
        self.keep
            .iter()
            .filter(|(_, m)| m.iter().any(|k| !k))
            .filter_map(|(&id, _)| model.spec().next_layer(id).map(|n| (id, n)))
            .collect()
    }
}

/// Marks the `count` globally smallest channels for removal. A layer that
/// would lose every channel keeps its largest-`|η|` one; the shortfall is not
/// made up elsewhere.
pub fn build_plan_count(importance: &ChannelImportance, count: usize) -> PruningPlan {
    let sizes = importance.layer_sizes();
    let mut keep: BTreeMap<LayerId, Vec<bool>> = sizes.iter().map(|(&id, &n)| (id, vec![true; n])).collect();
    let count = count.min(importance.len());
    let selected = &importance.scores[..count];
    let mut per_layer: BTreeMap<LayerId, Vec<&ChannelScore>> = BTreeMap::new();
    for s in selected {
        per_layer.entry(s.layer).or_default().push(s);
    }
    let mut pruned = 0;
    for (layer, mut chosen) in per_layer {
        if chosen.len() == sizes[&layer] {
            // Ascending order, so the last one is the layer's largest.
            chosen.pop();
        }
        for s in chosen {
            keep.get_mut(&layer).unwrap()[s.channel] = false;
            pruned += 1;
        }
    }
    PruningPlan {
        keep,
        threshold: selected.last().map_or(0.0, |s| s.magnitude),
        requested: count,
        pruned,
    }
}

/// Plan removing `floor(γ·N)` of the `N` ranked channels.
pub fn build_plan(importance: &ChannelImportance, gamma: f64) -> Result<PruningPlan> {
    check_gamma(gamma)?;
    let count = (gamma * importance.len() as f64 + 1e-9).floor() as usize;
    Ok(build_plan_count(importance, count))
}

fn check_plan(model: &TrainedModel, plan: &PruningPlan) -> Result<()> {
    let prunable = prunable_layers(model);
    for (id, mask) in &plan.keep {
        if !prunable.contains(id) {
            return Err(Error::Pruning(format!("{id} is not a prunable layer")));
        }
        let c = model.spec().layer(*id).unwrap().out_channels;
        if mask.len() != c {
            return Err(Error::Pruning(format!(
                "{id}: plan covers {} channels, layer has {c}",
                mask.len()
            )));
        }
        if !mask.iter().any(|&k| k) {
            return Err(Error::Pruning(format!("{id}: plan removes every channel")));
        }
    }
    Ok(())
}

/// Copy of `model` with `η` and `β` zeroed on the channels the plan removes.
/// Such channels output exactly zero after BN and ReLU.
pub fn mask_channels(model: &TrainedModel, plan: &PruningPlan) -> Result<TrainedModel> {
    check_plan(model, plan)?;
    let mut out = model.clone();
    for (id, mask) in &plan.keep {
        let bn = out.layer_mut(*id).bn.as_mut().unwrap();
        for (c, keep) in mask.iter().enumerate() {
            if !keep {
                bn.eta.data_mut()[c] = 0.0;
                bn.beta.data_mut()[c] = 0.0;
            }
        }
    }
    Ok(out)
}

fn select_axis(t: &Tensor, axis: usize, keep: &[bool]) -> Result<Tensor> {
    let shape = t.shape();
    let outer: usize = shape[..axis].iter().product();
    let inner: usize = shape[axis + 1..].iter().product();
    let mut data = Vec::new();
    for o in 0..outer {
        for (c, &k) in keep.iter().enumerate() {
            if k {
                let start = (o * shape[axis] + c) * inner;
                data.extend_from_slice(&t.data()[start..start + inner]);
            }
        }
    }
    let mut new_shape = shape.to_vec();
    new_shape[axis] = keep.iter().filter(|&&k| k).count();
    let mut out = Tensor::new(new_shape, data)?;
    out.set_requires_grad(t.requires_grad());
    Ok(out)
}

/// Physically removes the planned channels. The result computes the same
/// function as [`mask_channels`] applied to the original.
pub fn apply_plan(model: &TrainedModel, plan: &PruningPlan) -> Result<TrainedModel> {
    check_plan(model, plan)?;
    let mut out = model.clone();
    for (&id, mask) in &plan.keep {
        if mask.iter().all(|&k| k) {
            continue;
        }
        let kind = out.spec().layer(id).unwrap().kind;
        let params = out.layer_mut(id);
        let out_axis = if kind == LayerKind::Conv { 0 } else { 1 };
        params.weight = select_axis(&params.weight, out_axis, mask)?;
        let bn = params.bn.as_ref().unwrap().select_channels(mask)?;
        params.bn = Some(bn);
        let kept = mask.iter().filter(|&&k| k).count();
        out.spec_mut().layer_mut(id).unwrap().out_channels = kept;

        let next = out
            .spec()
            .next_layer(id)
            .ok_or_else(|| Error::Pruning(format!("{id} has no consumer layer")))?;
        let next_kind = out.spec().layer(next).unwrap().kind;
        let in_axis = if next_kind == LayerKind::Conv { 1 } else { 0 };
        let np = out.layer_mut(next);
        np.weight = select_axis(&np.weight, in_axis, mask)?;
        out.spec_mut().layer_mut(next).unwrap().in_channels = kept;
    }
    out.check_params()?;
    out.spec().validate()?;
    Ok(out)
}

/// Cumulative number of channels removed after each of `rounds` rounds, so
/// that every round removes the same fraction of what remains and the last
/// round reaches `floor(γ·n)`.
pub fn round_targets(n: usize, gamma: f64, rounds: usize) -> Vec<usize> {
    let total = (gamma * n as f64 + 1e-9).floor() as usize;
    (1..=rounds)
        .map(|r| {
            if r == rounds {
                total
            } else {
                let frac = 1.0 - (1.0 - gamma).powf(r as f64 / rounds as f64);
                ((frac * n as f64 + 1e-9).floor() as usize).min(total)
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct RoundReport {
    pub round: usize,
    pub pruned: usize,
    pub channels_remaining: usize,
    pub params: usize,
    pub fine_tune: FineTuneReport,
}

fn prunable_channel_count(model: &TrainedModel) -> usize {
    prunable_layers(model)
        .iter()
        .map(|&id| model.spec().layer(id).unwrap().out_channels)
        .sum()
}

/// Iterative prune / fine-tune rounds reaching global rate `γ`.
pub fn prune_and_fine_tune(
    sparse: &TrainedModel,
    sparsity: &SparsityConfig,
    train_cfg: &TrainConfig,
    train_set: &ImageSet,
    val_set: &ImageSet,
) -> Result<(TrainedModel, Vec<RoundReport>)> {
    sparsity.validate()?;
    if sparsity.gamma == 0.0 {
        return Ok((sparse.clone(), Vec::new()));
    }
    let n0 = prunable_channel_count(sparse);
    let mut model = sparse.clone();
    let mut reports = Vec::new();
    for (round, target) in round_targets(n0, sparsity.gamma, sparsity.pruning_rounds)
        .into_iter()
        .enumerate()
    {
        let already = n0 - prunable_channel_count(&model);
        let importance = rank_channels(&model)?;
        let plan = build_plan_count(&importance, target.saturating_sub(already));
        let pruned = apply_plan(&model, &plan)?;
        let cfg = TrainConfig {
            epochs: sparsity.finetune_epochs,
            seed: crate::rng::derive_seed(train_cfg.seed, &[round as u64]),
            ..train_cfg.clone()
        };
        let (tuned, ft) = fine_tune(&pruned, train_set, val_set, &cfg)?;
        log::info!(
            "round {}: pruned {} channels, {} params, best epoch {}",
            round + 1,
            plan.pruned,
            tuned.param_count(),
            ft.best_epoch
        );
        reports.push(RoundReport {
            round: round + 1,
            pruned: plan.pruned,
            channels_remaining: prunable_channel_count(&tuned),
            params: tuned.param_count(),
            fine_tune: ft,
        });
        model = tuned;
    }
    Ok((model, reports))
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerPruneReport {
    pub layer: LayerId,
    pub channels_before: usize,
    pub channels_after: usize,
    pub min_abs_eta: f64,
    pub max_abs_eta: f64,
}

/// Per prunable layer: channel counts and the `|η|` range retained.
pub fn pruning_report(before: &TrainedModel, after: &TrainedModel) -> Vec<LayerPruneReport> {
    prunable_layers(before)
        .into_iter()
        .map(|id| {
            let eta = after.layer(id).bn.as_ref().unwrap().eta.data();
            let abs = eta.iter().map(|v| v.abs());
            LayerPruneReport {
                layer: id,
                channels_before: before.spec().layer(id).unwrap().out_channels,
                channels_after: after.spec().layer(id).unwrap().out_channels,
                min_abs_eta: abs.clone().fold(f64::INFINITY, f64::min),
                max_abs_eta: abs.fold(0.0, f64::max),
            }
        })
        .collect()
}

pub fn pruning_report_csv(rows: &[LayerPruneReport]) -> String {
    let mut out = String::from("layer,channels_before,channels_after,min_abs_eta_retained,max_abs_eta_retained\n");
    for r in rows {
        writeln!(
            out,
            "{},{},{},{:.9},{:.9}",
            r.layer, r.channels_before, r.channels_after, r.min_abs_eta, r.max_abs_eta
        )
        .unwrap();
    }
    out
}
