use crate::error::{Result, TensorError};
use crate::tape::{Op, Var};
use crate::tensor::Tensor;

pub const BN_EPSILON: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.1;

/// Per-channel batch-normalization parameters and running statistics.
///
/// `eta` is the learnable scale and `beta` the learnable shift; both are
/// trainable tensors of shape `[C]`.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchNormState {
    pub eta: Tensor,
    pub beta: Tensor,
    pub running_mean: Vec<f64>,
    pub running_var: Vec<f64>,
    pub eps: f64,
    pub momentum: f64,
}

/// Batch statistics measured by a training-mode forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchStats {
    pub mean: Vec<f64>,
    /// Biased (population) variance.
    pub var: Vec<f64>,
    pub count: usize,
}

impl BatchNormState {
    pub fn new(channels: usize) -> Self {
        BatchNormState {
            eta: Tensor::parameter(vec![channels], vec![1.0; channels]).unwrap(),
            beta: Tensor::parameter(vec![channels], vec![0.0; channels]).unwrap(),
            running_mean: vec![0.0; channels],
            running_var: vec![1.0; channels],
            eps: BN_EPSILON,
            momentum: BN_MOMENTUM,
        }
    }

    pub fn channels(&self) -> usize {
        self.eta.numel()
    }

    pub fn validate(&self) -> Result<()> {
        let c = self.channels();
        if self.beta.numel() != c || self.running_mean.len() != c || self.running_var.len() != c {
            return Err(TensorError::dim(
                "batch_norm",
                format!(
                    "state lengths disagree: eta {c}, beta {}, running_mean {}, running_var {}",
                    self.beta.numel(),
                    self.running_mean.len(),
                    self.running_var.len()
                ),
            ));
        }
        if !(self.eps > 0.0) {
            return Err(TensorError::invalid("batch_norm", "epsilon must be positive"));
        }
        Ok(())
    }

    /// Exponential moving average update; the running variance uses the
    /// unbiased estimate `var · m / (m − 1)`.
    pub fn update_running(&mut self, stats: &BatchStats) {
        let m = self.momentum;
        let unbias = stats.count as f64 / (stats.count as f64 - 1.0);
        for c in 0..self.channels() {
            self.running_mean[c] = (1.0 - m) * self.running_mean[c] + m * stats.mean[c];
            self.running_var[c] = (1.0 - m) * self.running_var[c] + m * stats.var[c] * unbias;
        }
    }

    /// Keeps only the channels whose mask entry is `true`.
    pub fn select_channels(&self, keep: &[bool]) -> Result<BatchNormState> {
        if keep.len() != self.channels() {
            return Err(TensorError::dim(
                "batch_norm",
                format!("mask length {} vs {} channels", keep.len(), self.channels()),
            ));
        }
        let pick = |v: &[f64]| -> Vec<f64> {
            v.iter().zip(keep).filter(|(_, &k)| k).map(|(x, _)| *x).collect()
        };
        let eta = pick(self.eta.data());
        let beta = pick(self.beta.data());
        let n = eta.len();
        Ok(BatchNormState {
            eta: Tensor::parameter(vec![n], eta)?,
            beta: Tensor::parameter(vec![n], beta)?,
            running_mean: pick(&self.running_mean),
            running_var: pick(&self.running_var),
            eps: self.eps,
            momentum: self.momentum,
        })
    }
}

pub(crate) struct BnRecord {
    pub input: usize,
    pub eta: usize,
    pub beta: usize,
    pub x_hat: Vec<f64>,
    pub inv_std: Vec<f64>,
    pub outer: usize,
    pub channels: usize,
    pub inner: usize,
    pub training: bool,
}

/// `eta · (x − μ) / sqrt(σ² + ε) + beta` per channel (axis 1).
///
/// In training mode μ and σ² are the batch statistics, which are returned so
/// the caller can fold them into the running estimates. In eval mode the
/// running estimates in `state` are used and the op is a fixed affine map.
pub fn batch_norm<'t>(
    x: Var<'t>,
    eta: Var<'t>,
    beta: Var<'t>,
    state: &BatchNormState,
    training: bool,
) -> Result<(Var<'t>, Option<BatchStats>)> {
    const OP: &str = "batch_norm";
    if !x.same_tape(&eta) || !x.same_tape(&beta) {
        return Err(TensorError::invalid(OP, "operands live on different tapes"));
    }
    state.validate()?;
    let shape = x.shape();
    if shape.len() < 2 {
        return Err(TensorError::dim(OP, format!("input needs a channel axis 1, got {shape:?}")));
    }
    let channels = shape[1];
    if channels != state.channels() || eta.shape() != [channels] || beta.shape() != [channels] {
        return Err(TensorError::dim(
            OP,
            format!(
                "input channels (axis 1) = {channels}, state has {}, eta {:?}, beta {:?}",
                state.channels(),
                eta.shape(),
                beta.shape()
            ),
        ));
    }
    let outer = shape[0];
    let inner: usize = shape[2..].iter().product();
    let count = outer * inner;
    if training && count < 2 {
        return Err(TensorError::invalid(
            OP,
            format!("training mode needs at least 2 values per channel, got {count}"),
        ));
    }
    let xv = x.value();
    let ev = eta.value();
    let bv = beta.value();
    let at = |o: usize, c: usize| (o * channels + c) * inner;

    let (mean, var) = if training {
        let mut mean = vec![0.0; channels];
        let mut var = vec![0.0; channels];
        for c in 0..channels {
            let mut s = 0.0;
            for o in 0..outer {
                s += xv[at(o, c)..at(o, c) + inner].iter().sum::<f64>();
            }
            let mu = s / count as f64;
            let mut sq = 0.0;
            for o in 0..outer {
                sq += xv[at(o, c)..at(o, c) + inner]
                    .iter()
                    .map(|v| (v - mu) * (v - mu))
                    .sum::<f64>();
            }
            mean[c] = mu;
            var[c] = sq / count as f64;
        }
        (mean, var)
    } else {
        (state.running_mean.clone(), state.running_var.clone())
    };

    let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + state.eps).sqrt()).collect();
    let mut x_hat = vec![0.0; xv.len()];
    let mut out = vec![0.0; xv.len()];
    for o in 0..outer {
        for c in 0..channels {
            let base = at(o, c);
            for i in base..base + inner {
                let h = (xv[i] - mean[c]) * inv_std[c];
                x_hat[i] = h;
                out[i] = ev[c] * h + bv[c];
            }
        }
    }

    let requires_grad = x.requires_grad() || eta.requires_grad() || beta.requires_grad();
    let rec = BnRecord {
        input: x.id(),
        eta: eta.id(),
        beta: beta.id(),
        x_hat,
        inv_std,
        outer,
        channels,
        inner,
        training,
    };
    let y = x.tape().push(shape, out, Op::BatchNorm(rec), requires_grad);
    let stats = training.then_some(BatchStats { mean, var, count });
    Ok((y, stats))
}

pub(crate) fn backward(
    rec: &BnRecord,
    g: &[f64],
    wants: &dyn Fn(usize) -> bool,
    eta: &[f64],
) -> Vec<(usize, Vec<f64>)> {
    let (outer, channels, inner) = (rec.outer, rec.channels, rec.inner);
    let at = |o: usize, c: usize| (o * channels + c) * inner;
    let mut sum_g = vec![0.0; channels];
    let mut sum_gx = vec![0.0; channels];
    for c in 0..channels {
        for o in 0..outer {
            let base = at(o, c);
            for i in base..base + inner {
                sum_g[c] += g[i];
                sum_gx[c] += g[i] * rec.x_hat[i];
            }
        }
    }
    let mut out = Vec::with_capacity(3);
    if wants(rec.input) {
        let mut dx = vec![0.0; g.len()];
        let m = (outer * inner) as f64;
        for o in 0..outer {
            for c in 0..channels {
                let base = at(o, c);
                let k = eta[c] * rec.inv_std[c];
                for i in base..base + inner {
                    dx[i] = if rec.training {
                        k * (g[i] - sum_g[c] / m - rec.x_hat[i] * sum_gx[c] / m)
                    } else {
                        k * g[i]
                    };
                }
            }
        }
        out.push((rec.input, dx));
    }
    if wants(rec.eta) {
        out.push((rec.eta, sum_gx));
    }
    if wants(rec.beta) {
        out.push((rec.beta, sum_g));
    }
    out
}
