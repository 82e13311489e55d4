//! PSNR and SSIM on 8-bit scale images.
//!
//! Images are flat row-major `[C, H, W]` slices with values in `[0, 255]`.

use crate::error::{Error, Result};

pub const MAX_PIXEL: f64 = 255.0;

fn check_pair(x: &[f64], y: &[f64]) -> Result<()> {
    if x.len() != y.len() {
        return Err(Error::Metrics(format!("image sizes differ: {} vs {}", x.len(), y.len())));
    }
    if x.is_empty() {
        return Err(Error::Metrics("empty image".into()));
    }
    Ok(())
}

pub fn mse(x: &[f64], y: &[f64]) -> Result<f64> {
    check_pair(x, y)?;
    Ok(x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / x.len() as f64)
}

/// `10·log10(255² / MSE)`; identical images give `+∞`.
pub fn psnr(x: &[f64], y: &[f64]) -> Result<f64> {
    let e = mse(x, y)?;
    if e == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (MAX_PIXEL * MAX_PIXEL / e).log10())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SsimWindow {
    /// Statistics over each whole channel.
    Global,
    /// Sliding `size × size` Gaussian window (valid positions only).
    Gaussian { size: usize, sigma: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SsimConfig {
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
    pub window: SsimWindow,
}

impl SsimConfig {
    pub fn global() -> Self {
        SsimConfig {
            window: SsimWindow::Global,
            ..Self::default()
        }
    }
}

impl Default for SsimConfig {
    fn default() -> Self {
        let c1 = (0.01 * MAX_PIXEL).powi(2);
        let c2 = (0.03 * MAX_PIXEL).powi(2);
        SsimConfig {
            c1,
            c2,
            c3: c2 / 2.0,
            window: SsimWindow::Gaussian { size: 11, sigma: 1.5 },
        }
    }
}

/// Weighted first and second moments of a pair of patches.
#[derive(Debug, Clone, Copy)]
struct Moments {
    mu_x: f64,
    mu_y: f64,
    var_x: f64,
    var_y: f64,
    cov: f64,
}

impl Moments {
    fn product_form(&self, cfg: &SsimConfig) -> f64 {
        let num = (2.0 * self.mu_x * self.mu_y + cfg.c1) * (2.0 * self.cov + cfg.c2);
        let den = (self.mu_x * self.mu_x + self.mu_y * self.mu_y + cfg.c1) * (self.var_x + self.var_y + cfg.c2);
        num / den
    }
}

fn weighted_moments(x: &[f64], y: &[f64], w: &[f64]) -> Moments {
    let mut mu_x = 0.0;
    let mut mu_y = 0.0;
    for ((a, b), w) in x.iter().zip(y).zip(w) {
        mu_x += w * a;
        mu_y += w * b;
    }
    let (mut var_x, mut var_y, mut cov) = (0.0, 0.0, 0.0);
    for ((a, b), w) in x.iter().zip(y).zip(w) {
        let (da, db) = (a - mu_x, b - mu_y);
        var_x += w * da * da;
        var_y += w * db * db;
        cov += w * da * db;
    }
    Moments {
        mu_x,
        mu_y,
        var_x,
        var_y,
        cov,
    }
}

fn gaussian_window(size: usize, sigma: f64) -> Vec<f64> {
    let c = (size as f64 - 1.0) / 2.0;
    let g: Vec<f64> = (0..size)
        .map(|i| (-((i as f64 - c).powi(2)) / (2.0 * sigma * sigma)).exp())
        .collect();
    let mut w: Vec<f64> = g.iter().flat_map(|a| g.iter().map(move |b| a * b)).collect();
    let total: f64 = w.iter().sum();
    w.iter_mut().for_each(|v| *v /= total);
    w
}

fn check_dims(x: &[f64], dims: (usize, usize, usize)) -> Result<()> {
    let (c, h, w) = dims;
    if c * h * w != x.len() {
        return Err(Error::Metrics(format!(
            "dims {c}x{h}x{w} do not describe {} values",
            x.len()
        )));
    }
    Ok(())
}

/// SSIM averaged over channels (and window positions), using the product
/// form with `C3 = C2/2`.
pub fn ssim(x: &[f64], y: &[f64], dims: (usize, usize, usize), cfg: &SsimConfig) -> Result<f64> {
    check_pair(x, y)?;
    check_dims(x, dims)?;
    let (c, h, w) = dims;
    let plane = h * w;
    match cfg.window {
        SsimWindow::Global => {
            let uniform = vec![1.0 / plane as f64; plane];
            let total: f64 = (0..c)
                .map(|ch| {
                    let r = ch * plane..(ch + 1) * plane;
                    weighted_moments(&x[r.clone()], &y[r], &uniform).product_form(cfg)
                })
                .sum();
            Ok(total / c as f64)
        }
        SsimWindow::Gaussian { size, sigma } => {
            if size > h || size > w {
                return Err(Error::Metrics(format!(
                    "{size}x{size} window larger than {h}x{w} image"
                )));
            }
            let weights = gaussian_window(size, sigma);
            let mut px = vec![0.0; size * size];
            let mut py = vec![0.0; size * size];
            let mut total = 0.0;
            let mut count = 0usize;
            for ch in 0..c {
                let base = ch * plane;
                for oy in 0..=h - size {
                    for ox in 0..=w - size {
                        for dy in 0..size {
                            let row = base + (oy + dy) * w + ox;
                            px[dy * size..(dy + 1) * size].copy_from_slice(&x[row..row + size]);
                            py[dy * size..(dy + 1) * size].copy_from_slice(&y[row..row + size]);
                        }
                        total += weighted_moments(&px, &py, &weights).product_form(cfg);
                        count += 1;
                    }
                }
            }
            Ok(total / count as f64)
        }
    }
}

/// Luminance, contrast and structure terms of a single-channel image in
/// global mode.
pub fn ssim_components(x: &[f64], y: &[f64], cfg: &SsimConfig) -> Result<(f64, f64, f64)> {
    check_pair(x, y)?;
    let uniform = vec![1.0 / x.len() as f64; x.len()];
    let m = weighted_moments(x, y, &uniform);
    let (sx, sy) = (m.var_x.sqrt(), m.var_y.sqrt());
    let l = (2.0 * m.mu_x * m.mu_y + cfg.c1) / (m.mu_x * m.mu_x + m.mu_y * m.mu_y + cfg.c1);
    let c = (2.0 * sx * sy + cfg.c2) / (m.var_x + m.var_y + cfg.c2);
    let s = (m.cov + cfg.c3) / (sx * sy + cfg.c3);
    Ok((l, c, s))
}

/// Test-set averages. PSNR is averaged in dB over finite values; identical
/// pairs are counted separately.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BatchMetrics {
    pub mean_psnr: f64,
    pub mean_ssim: f64,
    pub count: usize,
    pub infinite_psnr: usize,
}

pub fn batch_metrics(pairs: &[(f64, f64)]) -> Result<BatchMetrics> {
    if pairs.is_empty() {
        return Err(Error::Metrics("no image pairs to average".into()));
    }
    let finite: Vec<f64> = pairs.iter().map(|p| p.0).filter(|v| v.is_finite()).collect();
    let mean_psnr = if finite.is_empty() {
        f64::INFINITY
    } else {
        finite.iter().sum::<f64>() / finite.len() as f64
    };
    Ok(BatchMetrics {
        mean_psnr,
        mean_ssim: pairs.iter().map(|p| p.1).sum::<f64>() / pairs.len() as f64,
        count: pairs.len(),
        infinite_psnr: pairs.len() - finite.len(),
    })
}

/// PSNR and SSIM of every image in a pair of `[N, C, H, W]` batches with
/// values in `[0, 1]`; both are rescaled to `[0, 255]` first.
pub fn image_pairs(
    x: &[f64],
    y: &[f64],
    dims: (usize, usize, usize),
    cfg: &SsimConfig,
) -> Result<Vec<(f64, f64)>> {
    check_pair(x, y)?;
    let n = dims.0 * dims.1 * dims.2;
    if x.len() % n != 0 {
        return Err(Error::Metrics(format!("batch of {} values is not a multiple of {n}", x.len())));
    }
    x.chunks(n)
        .zip(y.chunks(n))
        .map(|(a, b)| {
            let a: Vec<f64> = a.iter().map(|v| v * MAX_PIXEL).collect();
            let b: Vec<f64> = b.iter().map(|v| v * MAX_PIXEL).collect();
            Ok((psnr(&a, &b)?, ssim(&a, &b, dims, cfg)?))
        })
        .collect()
}
