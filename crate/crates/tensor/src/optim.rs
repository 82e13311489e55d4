use crate::error::{Result, TensorError};
use crate::tensor::Tensor;

/// Applies one update to every parameter that carries a gradient.
pub trait Optimizer {
    fn step(&mut self, params: &mut [&mut Tensor]) -> Result<()>;
    fn learning_rate(&self) -> f64;
}

/// Plain gradient descent: `p ← p − lr · g`.
#[derive(Debug, Clone)]
pub struct Sgd {
    pub lr: f64,
}

impl Optimizer for Sgd {
    fn step(&mut self, params: &mut [&mut Tensor]) -> Result<()> {
        for p in params.iter_mut() {
            let Some(g) = p.grad().map(<[f64]>::to_vec) else { continue };
            for (w, g) in p.data_mut().iter_mut().zip(&g) {
                *w -= self.lr * g;
            }
        }
        Ok(())
    }

    fn learning_rate(&self) -> f64 {
        self.lr
    }
}

/// Moment accumulators for [`adam_step`]. Moments are created lazily on the
/// first step and must keep matching the parameter shapes afterwards.
#[derive(Debug, Clone)]
pub struct AdamState {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub step: u64,
    first: Vec<Vec<f64>>,
    second: Vec<Vec<f64>>,
}

impl AdamState {
    pub fn new(lr: f64) -> Self {
        AdamState {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            first: Vec::new(),
            second: Vec::new(),
        }
    }

    pub fn first_moments(&self) -> &[Vec<f64>] {
        &self.first
    }

    pub fn second_moments(&self) -> &[Vec<f64>] {
        &self.second
    }
}

/// Bias-corrected Adam update.
pub fn adam_step(params: &mut [&mut Tensor], state: &mut AdamState) -> Result<()> {
    if state.first.is_empty() {
        state.first = params.iter().map(|p| vec![0.0; p.numel()]).collect();
        state.second = state.first.clone();
    }
    if state.first.len() != params.len()
        || state.first.iter().zip(params.iter()).any(|(m, p)| m.len() != p.numel())
    {
        return Err(TensorError::invalid(
            "adam_step",
            "parameter set changed since the optimizer was created",
        ));
    }
    state.step += 1;
    let t = state.step as i32;
    let c1 = 1.0 - state.beta1.powi(t);
    let c2 = 1.0 - state.beta2.powi(t);
    let (b1, b2) = (state.beta1, state.beta2);
    for (i, p) in params.iter_mut().enumerate() {
        let Some(g) = p.grad().map(<[f64]>::to_vec) else { continue };
        let m = &mut state.first[i];
        let v = &mut state.second[i];
        for (j, w) in p.data_mut().iter_mut().enumerate() {
            m[j] = b1 * m[j] + (1.0 - b1) * g[j];
            v[j] = b2 * v[j] + (1.0 - b2) * g[j] * g[j];
            let m_hat = m[j] / c1;
            let v_hat = v[j] / c2;
            *w -= state.lr * m_hat / (v_hat.sqrt() + state.eps);
        }
    }
    Ok(())
}

#[derive(Debug, Clone)]
pub struct Adam {
    pub state: AdamState,
}

impl Adam {
    pub fn new(lr: f64) -> Self {
        Adam {
            state: AdamState::new(lr),
        }
    }
}

impl Optimizer for Adam {
    fn step(&mut self, params: &mut [&mut Tensor]) -> Result<()> {
        adam_step(params, &mut self.state)
    }

    fn learning_rate(&self) -> f64 {
        self.state.lr
    }
}
