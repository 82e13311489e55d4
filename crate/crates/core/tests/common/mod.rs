//! Independent reference implementations shared by the integration tests.
#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::function::erf::erfc;

pub const PEAK: f64 = 255.0;

pub fn random_vec(n: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| rng.random::<f64>()).collect()
}

/// `10·log10(255² / MSE)` evaluated term by term.
pub fn psnr_reference(x: &[f64], y: &[f64]) -> f64 {
    let mut sq = 0.0;
    for i in 0..x.len() {
        sq += (x[i] - y[i]).powi(2);
    }
    let mse = sq / x.len() as f64;
    10.0 * (PEAK * PEAK / mse).log10()
}

/// Luminance × contrast × structure over a whole plane with
/// `C1 = (0.01·255)²`, `C2 = (0.03·255)²`, `C3 = C2/2`.
pub fn ssim_plane_reference(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let vx = x.iter().map(|a| (a - mx).powi(2)).sum::<f64>() / n;
    let vy = y.iter().map(|b| (b - my).powi(2)).sum::<f64>() / n;
    let cxy = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum::<f64>() / n;
    let c1 = (0.01 * PEAK).powi(2);
    let c2 = (0.03 * PEAK).powi(2);
    let c3 = c2 / 2.0;
    let (sx, sy) = (vx.sqrt(), vy.sqrt());
    let l = (2.0 * mx * my + c1) / (mx * mx + my * my + c1);
    let c = (2.0 * sx * sy + c2) / (vx + vy + c2);
    let s = (cxy + c3) / (sx * sy + c3);
    l * c * s
}

/// Channel-averaged global SSIM of planar images.
pub fn ssim_reference(x: &[f64], y: &[f64], channels: usize) -> f64 {
    let plane = x.len() / channels;
    (0..channels)
        .map(|c| ssim_plane_reference(&x[c * plane..(c + 1) * plane], &y[c * plane..(c + 1) * plane]))
        .sum::<f64>()
        / channels as f64
}

/// All 16 codewords of the Hamming(7,4) code spanned by `generator`.
pub fn codebook(generator: &[[u8; 7]; 4]) -> Vec<([u8; 4], [u8; 7])> {
    (0..16u8)
        .map(|m| {
            let d = [m >> 3 & 1, m >> 2 & 1, m >> 1 & 1, m & 1];
            let mut c = [0u8; 7];
            for (row, &bit) in generator.iter().zip(&d) {
                for j in 0..7 {
                    c[j] ^= row[j] & bit;
                }
            }
            (d, c)
        })
        .collect()
}

/// `Q(x) = ½·erfc(x/√2)`.
pub fn q_function(x: f64) -> f64 {
    0.5 * erfc(x / std::f64::consts::SQRT_2)
}

/// QPSK symbol error rate with per-symbol Rayleigh fading at mean SNR
/// `snr`: `E[2Q(√γ) − Q(√γ)²]` over `γ ~ Exp(snr)`, by composite Simpson.
pub fn qpsk_rayleigh_ser(snr: f64) -> f64 {
    let upper = 40.0 * snr;
    let n = 200_000;
    let h = upper / n as f64;
    let f = |g: f64| {
        let p = q_function(g.sqrt());
        (2.0 * p - p * p) * (-g / snr).exp() / snr
    };
    let mut sum = f(0.0) + f(upper);
    for i in 1..n {
        sum += f(i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
    }
    sum * h / 3.0
}
