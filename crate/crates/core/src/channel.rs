//! Quantize / M-QAM / fading / demodulate chain and the analog training path.
//!
//! Constellation layout: an `L × L` grid (`L = √M`) of odd integers
//! `{−(L−1), …, −1, 1, …, L−1}` on both axes, scaled to unit average power.
//! Index `j` lives in grid row `r = j / L` (imaginary coordinate, bottom to
//! top) and column `j % L` on even rows or `L − 1 − j % L` on odd rows
//! (real coordinate, left to right). Consecutive indices are therefore always
//! grid neighbours, and index 0 is the bottom-left corner.

use jscc_tensor::{add, Tensor, Var};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::model::TrainedModel;
use crate::rng::{derive_seed, rng_for};

pub const SUPPORTED_ORDERS: [usize; 4] = [4, 16, 64, 256];

/// Channel gains with magnitude below this are redrawn.
pub const GAIN_FLOOR: f64 = 1e-6;

/// Transmit power constraint `P`.
pub const TX_POWER: f64 = 1.0;

const GAIN_STREAM: u64 = 1;
const NOISE_STREAM: u64 = 2;

fn check_order(m: usize) -> Result<()> {
    if SUPPORTED_ORDERS.contains(&m) {
        Ok(())
    } else {
        Err(Error::Chain(format!(
            "unsupported modulation order {m}; expected one of {SUPPORTED_ORDERS:?}"
        )))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Constellation {
    order: usize,
    side: usize,
    points: Vec<Complex64>,
}

impl Constellation {
    pub fn new(order: usize) -> Result<Self> {
        check_order(order)?;
        let side = (order as f64).sqrt().round() as usize;
        let norm = (2.0 * (side * side - 1) as f64 / 3.0).sqrt();
        let coord = |i: usize| (2 * i) as f64 - (side - 1) as f64;
        let points = (0..order)
            .map(|j| {
                let (r, c) = Self::grid_position(side, j);
                Complex64::new(coord(c), coord(r)) / norm
            })
            .collect();
        Ok(Constellation { order, side, points })
    }

    fn grid_position(side: usize, j: usize) -> (usize, usize) {
        let r = j / side;
        let c = if r % 2 == 0 { j % side } else { side - 1 - j % side };
        (r, c)
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn side(&self) -> usize {
        self.side
    }

    pub fn points(&self) -> &[Complex64] {
        &self.points
    }

    pub fn point(&self, j: usize) -> Complex64 {
        self.points[j]
    }

    /// `(row, column)` of index `j` on the grid.
    pub fn position(&self, j: usize) -> (usize, usize) {
        Self::grid_position(self.side, j)
    }

    /// Minimum-distance index; ties go to the lower index.
    pub fn nearest(&self, y: Complex64) -> usize {
        let mut best = 0;
        let mut best_d = f64::INFINITY;
        for (j, p) in self.points.iter().enumerate() {
            let d = (y - p).norm_sqr();
            if d < best_d {
                best_d = d;
                best = j;
            }
        }
        best
    }
}

/// `floor(z·M)`, with 1.0 clamped to `M − 1`.
pub fn quantize_indices(z: &[f64], m: usize) -> Result<Vec<usize>> {
    check_order(m)?;
    z.iter()
        .enumerate()
        .map(|(i, &v)| {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::Chain(format!("feature {i} = {v} outside [0, 1]")));
            }
            Ok(((v * m as f64).floor() as usize).min(m - 1))
        })
        .collect()
}

/// Uniform `M`-level quantizer `z̄ = floor(z·M)/M`.
pub fn quantize(z: &[f64], m: usize) -> Result<Vec<f64>> {
    Ok(quantize_indices(z, m)?
        .into_iter()
        .map(|j| j as f64 / m as f64)
        .collect())
}

/// A block of transmitted symbols with the power-normalization factor that
/// was applied to the raw constellation points.
#[derive(Debug, Clone, PartialEq)]
pub struct ModulatedBlock {
    pub symbols: Vec<Complex64>,
    pub scale: f64,
}

/// Maps lattice values onto constellation indices `z̄·M`.
pub fn lattice_indices(z_bar: &[f64], m: usize) -> Result<Vec<usize>> {
    check_order(m)?;
    z_bar
        .iter()
        .enumerate()
        .map(|(i, &v)| {
            let t = v * m as f64;
            if t.fract() != 0.0 || t < 0.0 || t >= m as f64 {
                return Err(Error::Chain(format!(
                    "value {v} at position {i} is not on the {m}-level lattice"
                )));
            }
            Ok(t as usize)
        })
        .collect()
}

/// Maps indices to points and rescales the block to average power `P`.
pub fn modulate_indices(indices: &[usize], constellation: &Constellation) -> Result<ModulatedBlock> {
    if indices.is_empty() {
        return Err(Error::Chain("cannot modulate an empty block".into()));
    }
    if let Some(&j) = indices.iter().find(|&&j| j >= constellation.order()) {
        return Err(Error::Chain(format!("index {j} outside constellation")));
    }
    let raw: Vec<Complex64> = indices.iter().map(|&j| constellation.point(j)).collect();
    let power = raw.iter().map(|s| s.norm_sqr()).sum::<f64>() / raw.len() as f64;
    let scale = TX_POWER.sqrt() / power.sqrt();
    Ok(ModulatedBlock {
        symbols: raw.into_iter().map(|s| s * scale).collect(),
        scale,
    })
}

/// `s_i = C[z̄_i·M]`, then block power normalization.
pub fn modulate(z_bar: &[f64], constellation: &Constellation) -> Result<ModulatedBlock> {
    let indices = lattice_indices(z_bar, constellation.order())?;
    modulate_indices(&indices, constellation)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Fading {
    /// `h = 1`.
    None,
    /// One Rayleigh gain per transmitted block.
    SlowRayleigh,
    /// An independent Rayleigh gain per symbol.
    FastRayleigh,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelModel {
    pub fading: Fading,
    /// `+∞` gives a noiseless channel.
    pub snr_db: f64,
}

impl ChannelModel {
    pub fn rayleigh(snr_db: f64) -> Self {
        ChannelModel {
            fading: Fading::SlowRayleigh,
            snr_db,
        }
    }

    pub fn noiseless() -> Self {
        ChannelModel {
            fading: Fading::None,
            snr_db: f64::INFINITY,
        }
    }

    /// `σ² = P / 10^(SNR/10)`.
    pub fn noise_var(&self) -> f64 {
        TX_POWER / 10f64.powf(self.snr_db / 10.0)
    }
}

fn rayleigh_gain<R: Rng>(rng: &mut R, resampled: &mut usize) -> Complex64 {
    let half = Normal::new(0.0, 0.5f64.sqrt()).unwrap();
    loop {
        let h = Complex64::new(half.sample(rng), half.sample(rng));
        if h.norm() >= GAIN_FLOOR {
            return h;
        }
        *resampled += 1;
        log::warn!("channel gain |h| = {:.3e} below floor; redrawing", h.norm());
    }
}

/// Concrete draw of a channel for one block: gains and a noise seed.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelRealization {
    /// One gain (block fading) or one per symbol.
    pub gains: Vec<Complex64>,
    pub noise_var: f64,
    pub seed: u64,
    /// Number of gains redrawn because they fell below [`GAIN_FLOOR`].
    pub resampled: usize,
}

impl ChannelRealization {
    pub fn sample(model: &ChannelModel, len: usize, seed: u64) -> Self {
        let mut rng = rng_for(seed, &[GAIN_STREAM]);
        let mut resampled = 0;
        let gains = match model.fading {
            Fading::None => vec![Complex64::new(1.0, 0.0)],
            Fading::SlowRayleigh => vec![rayleigh_gain(&mut rng, &mut resampled)],
            Fading::FastRayleigh => (0..len).map(|_| rayleigh_gain(&mut rng, &mut resampled)).collect(),
        };
        ChannelRealization {
            gains,
            noise_var: model.noise_var(),
            seed,
            resampled,
        }
    }

    /// Fixed block gain, for controlled experiments.
    pub fn with_gain(h: Complex64, noise_var: f64, seed: u64) -> Self {
        ChannelRealization {
            gains: vec![h],
            noise_var,
            seed,
            resampled: 0,
        }
    }

    pub fn gain(&self, i: usize) -> Complex64 {
        if self.gains.len() == 1 {
            self.gains[0]
        } else {
            self.gains[i]
        }
    }

    fn check_len(&self, len: usize) -> Result<()> {
        if self.gains.len() != 1 && self.gains.len() != len {
            return Err(Error::Chain(format!(
                "realization carries {} gains for a block of {len} symbols",
                self.gains.len()
            )));
        }
        Ok(())
    }

    /// Complex Gaussian noise with variance `σ²` per symbol; deterministic in
    /// the realization's seed.
    pub fn noise(&self, len: usize) -> Vec<Complex64> {
        if self.noise_var == 0.0 {
            return vec![Complex64::new(0.0, 0.0); len];
        }
        let mut rng = rng_for(self.seed, &[NOISE_STREAM]);
        let normal = Normal::new(0.0, (self.noise_var / 2.0).sqrt()).unwrap();
        (0..len)
            .map(|_| Complex64::new(normal.sample(&mut rng), normal.sample(&mut rng)))
            .collect()
    }
}

/// `y = h⊙s + n`.
pub fn transmit(s: &[Complex64], channel: &ChannelRealization) -> Result<Vec<Complex64>> {
    channel.check_len(s.len())?;
    let noise = channel.noise(s.len());
    Ok(s.iter()
        .zip(noise)
        .enumerate()
        .map(|(i, (&s, n))| channel.gain(i) * s + n)
        .collect())
}

/// `ỹ = y ⊘ h` with perfect channel knowledge.
pub fn equalize(y: &[Complex64], channel: &ChannelRealization) -> Result<Vec<Complex64>> {
    channel.check_len(y.len())?;
    if let Some(h) = channel.gains.iter().find(|h| h.norm() < GAIN_FLOOR) {
        return Err(Error::Chain(format!(
            "channel gain |h| = {:.3e} below floor {GAIN_FLOOR:e}; realization must be redrawn",
            h.norm()
        )));
    }
    Ok(y.iter().enumerate().map(|(i, &y)| y / channel.gain(i)).collect())
}

/// Undoes the block scale and returns nearest-point indices.
pub fn demodulate_indices(y_tilde: &[Complex64], scale: f64, constellation: &Constellation) -> Vec<usize> {
    y_tilde.iter().map(|&y| constellation.nearest(y / scale)).collect()
}

/// `ẑ_i = argmin_j |ỹ_i/scale − C_j|² / M`.
pub fn demodulate(y_tilde: &[Complex64], scale: f64, constellation: &Constellation) -> Vec<f64> {
    let m = constellation.order() as f64;
    demodulate_indices(y_tilde, scale, constellation)
        .into_iter()
        .map(|j| j as f64 / m)
        .collect()
}

/// Real part of the equalized noise `n⊘h` for a block of `len` real features.
/// Each feature rides the in-phase component of one symbol.
pub fn analog_noise(len: usize, channel: &ChannelRealization) -> Result<Vec<f64>> {
    channel.check_len(len)?;
    if channel.noise_var == 0.0 {
        return Ok(vec![0.0; len]);
    }
    let noise = channel.noise(len);
    Ok(noise.iter().enumerate().map(|(i, n)| (n / channel.gain(i)).re).collect())
}

/// `z̃ = z + n⊘h` on plain values.
pub fn analog_path(z: &[f64], channel: &ChannelRealization) -> Result<Vec<f64>> {
    let noise = analog_noise(z.len(), channel)?;
    Ok(z.iter().zip(noise).map(|(z, n)| z + n).collect())
}

/// Differentiable analog channel over a feature batch `[N, …]` with one
/// realization per image. The noise enters as a constant, so gradients pass
/// through unchanged.
pub fn analog_channel<'t>(z: Var<'t>, channels: &[ChannelRealization]) -> Result<Var<'t>> {
    let shape = z.shape();
    let n = shape[0];
    if channels.len() != n {
        return Err(Error::Chain(format!(
            "{} channel realizations for a batch of {n}",
            channels.len()
        )));
    }
    let k = shape[1..].iter().product::<usize>();
    let mut noise = Vec::with_capacity(n * k);
    for ch in channels {
        noise.extend(analog_noise(k, ch)?);
    }
    let noise = z.tape().constant(&Tensor::new(shape, noise)?);
    Ok(add(z, noise)?)
}

/// Per-image statistics of one pass through the digital chain.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainDiagnostics {
    /// Mean and max of `|z̄ − z|`.
    pub quant_mean_abs: f64,
    pub quant_max_abs: f64,
    /// Mean and max of `|ẑ − z̄|`.
    pub demod_mean_abs: f64,
    pub demod_max_abs: f64,
    pub symbol_error_rate: f64,
    pub gain_abs: f64,
    pub resampled: usize,
}

fn mean_max_abs(a: &[f64], b: &[f64]) -> (f64, f64) {
    let mut sum = 0.0;
    let mut max = 0.0f64;
    for (x, y) in a.iter().zip(b) {
        let d = (x - y).abs();
        sum += d;
        max = max.max(d);
    }
    (sum / a.len() as f64, max)
}

/// Result of sending one feature block through quantize → modulate →
/// channel → equalize → demodulate.
#[derive(Debug, Clone)]
pub struct BlockOutcome {
    pub z_bar: Vec<f64>,
    pub z_hat: Vec<f64>,
    pub diagnostics: ChainDiagnostics,
}

pub fn digital_block(z: &[f64], constellation: &Constellation, channel: &ChannelRealization) -> Result<BlockOutcome> {
    let m = constellation.order();
    let sent = quantize_indices(z, m)?;
    let z_bar: Vec<f64> = sent.iter().map(|&j| j as f64 / m as f64).collect();
    let block = modulate_indices(&sent, constellation)?;
    let y = transmit(&block.symbols, channel)?;
    let y_tilde = equalize(&y, channel)?;
    let received = demodulate_indices(&y_tilde, block.scale, constellation);
    let z_hat: Vec<f64> = received.iter().map(|&j| j as f64 / m as f64).collect();
    let errors = sent.iter().zip(&received).filter(|(a, b)| a != b).count();
    let (quant_mean_abs, quant_max_abs) = mean_max_abs(&z_bar, z);
    let (demod_mean_abs, demod_max_abs) = mean_max_abs(&z_hat, &z_bar);
    let gain_abs = channel.gains.iter().map(|h| h.norm()).sum::<f64>() / channel.gains.len() as f64;
    Ok(BlockOutcome {
        z_bar,
        z_hat,
        diagnostics: ChainDiagnostics {
            quant_mean_abs,
            quant_max_abs,
            demod_mean_abs,
            demod_max_abs,
            symbol_error_rate: errors as f64 / z.len() as f64,
            gain_abs,
            resampled: channel.resampled,
        },
    })
}

/// Realization for image `index` of a batch evaluated under `seed`.
pub fn image_channel(model: &ChannelModel, len: usize, seed: u64, index: usize) -> ChannelRealization {
    ChannelRealization::sample(model, len, derive_seed(seed, &[index as u64]))
}

fn per_image<F>(z: &Tensor, f: F) -> Result<Vec<Vec<f64>>>
where
    F: Fn(usize, &[f64]) -> Result<Vec<f64>>,
{
    let n = z.shape()[0];
    let k = z.numel() / n;
    z.data().chunks(k).enumerate().map(|(i, row)| f(i, row)).collect()
}

/// Encoder → digital chain → decoder for an image batch. Image `i` sees the
/// realization `image_channel(channel, k, seed, i)`.
pub fn digital_inference(
    model: &TrainedModel,
    x: &Tensor,
    m: usize,
    channel: &ChannelModel,
    seed: u64,
) -> Result<(Tensor, Vec<ChainDiagnostics>)> {
    let constellation = Constellation::new(m)?;
    let z = model.encode(x)?;
    let k = model.spec().feature_len;
    let outcomes = z
        .data()
        .chunks(k)
        .enumerate()
        .map(|(i, row)| digital_block(row, &constellation, &image_channel(channel, k, seed, i)))
        .collect::<Result<Vec<_>>>()?;
    let mut rows = Vec::with_capacity(z.numel());
    let mut diagnostics = Vec::with_capacity(outcomes.len());
    for o in outcomes {
        rows.push(o.z_hat);
        diagnostics.push(o.diagnostics);
    }
    let z_hat = Tensor::new(z.shape().to_vec(), rows.concat())?;
    Ok((model.decode(&z_hat)?, diagnostics))
}

/// Encoder → analog channel → decoder, with the same per-image realizations
/// as [`digital_inference`].
pub fn analog_inference(model: &TrainedModel, x: &Tensor, channel: &ChannelModel, seed: u64) -> Result<Tensor> {
    let z = model.encode(x)?;
    let k = model.spec().feature_len;
    let rows = per_image(&z, |i, row| analog_path(row, &image_channel(channel, k, seed, i)))?;
    let z_tilde = Tensor::new(z.shape().to_vec(), rows.concat())?;
    model.decode(&z_tilde)
}
