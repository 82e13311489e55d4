mod common;

use jscc_core::metrics::{batch_metrics, image_pairs, psnr, ssim, ssim_components, SsimConfig};
use proptest::prelude::*;

const DIMS: (usize, usize, usize) = (3, 16, 16);
const LEN: usize = 3 * 16 * 16;

fn scaled(v: Vec<f64>) -> Vec<f64> {
    v.into_iter().map(|a| a * 255.0).collect()
}

fn noisy(x: &[f64], amount: f64, seed: u64) -> Vec<f64> {
    let n = common::random_vec(x.len(), seed);
    x.iter().zip(n).map(|(a, b)| (a + amount * (b - 0.5) * 255.0).clamp(0.0, 255.0)).collect()
}

#[test]
fn matches_scalar_reference_on_random_pairs() {
    let cfg = SsimConfig::global();
    for i in 0..50 {
        let x = scaled(common::random_vec(LEN, 2 * i));
        let y = noisy(&x, 0.05 + 0.01 * i as f64, 2 * i + 1);
        let p = psnr(&x, &y).unwrap();
        let s = ssim(&x, &y, DIMS, &cfg).unwrap();
        assert!((p - common::psnr_reference(&x, &y)).abs() < 1e-9);
        assert!((s - common::ssim_reference(&x, &y, 3)).abs() < 1e-9);
    }
}

#[test]
fn product_form_equals_component_form() {
    let cfg = SsimConfig::global();
    for i in 0..20 {
        let x = scaled(common::random_vec(256, 100 + i));
        let y = noisy(&x, 0.3, 200 + i);
        let (l, c, s) = ssim_components(&x, &y, &cfg).unwrap();
        let product = ssim(&x, &y, (1, 16, 16), &cfg).unwrap();
        assert!((l * c * s - product).abs() < 1e-12);
    }
}

#[test]
fn identical_images() {
    let x = scaled(common::random_vec(LEN, 5));
    assert_eq!(psnr(&x, &x).unwrap(), f64::INFINITY);
    for cfg in [SsimConfig::global(), SsimConfig::default()] {
        assert!((ssim(&x, &x, DIMS, &cfg).unwrap() - 1.0).abs() < 1e-12);
    }
}

#[test]
fn more_noise_lowers_both_metrics() {
    let x = scaled(common::random_vec(LEN, 6));
    let mut last = (f64::INFINITY, 1.0 + 1e-12);
    for amount in [0.02, 0.1, 0.3, 0.6] {
        let y = noisy(&x, amount, 7);
        let p = psnr(&x, &y).unwrap();
        let s = ssim(&x, &y, DIMS, &SsimConfig::default()).unwrap();
        assert!(p < last.0 && s < last.1, "amount {amount}: ({p}, {s}) after {last:?}");
        last = (p, s);
    }
}

#[test]
fn batch_average_is_in_db() {
    let x = common::random_vec(2 * LEN, 8);
    let mut y = x.clone();
    y[..LEN].iter_mut().for_each(|v| *v = (*v + 0.01).min(1.0));
    y[LEN..].iter_mut().for_each(|v| *v = (*v + 0.1).min(1.0));
    let pairs = image_pairs(&x, &y, DIMS, &SsimConfig::default()).unwrap();
    let b = batch_metrics(&pairs).unwrap();
    assert!((b.mean_psnr - (pairs[0].0 + pairs[1].0) / 2.0).abs() < 1e-12);
    assert_eq!(b.count, 2);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn symmetric_and_bounded(seed in any::<u64>(), amount in 0.01f64..1.0) {
        let x = scaled(common::random_vec(LEN, seed));
        let y = noisy(&x, amount, seed ^ 1);
        for cfg in [SsimConfig::global(), SsimConfig::default()] {
            let a = ssim(&x, &y, DIMS, &cfg).unwrap();
            let b = ssim(&y, &x, DIMS, &cfg).unwrap();
            prop_assert!((a - b).abs() < 1e-12);
            prop_assert!((-1.0..=1.0).contains(&a));
        }
        prop_assert_eq!(psnr(&x, &y).unwrap(), psnr(&y, &x).unwrap());
    }

    #[test]
    fn global_mode_ignores_pixel_order(seed in any::<u64>(), shift in 1usize..255) {
        let x = scaled(common::random_vec(LEN, seed));
        let y = noisy(&x, 0.2, seed ^ 2);
        let permute = |v: &[f64]| -> Vec<f64> {
            v.chunks(256).flat_map(|p| (0..256).map(move |i| p[(i * 7 + shift) % 256])).collect()
        };
        let cfg = SsimConfig::global();
        let a = ssim(&x, &y, DIMS, &cfg).unwrap();
        let b = ssim(&permute(&x), &permute(&y), DIMS, &cfg).unwrap();
        prop_assert!((a - b).abs() < 1e-12);
        prop_assert!((psnr(&x, &y).unwrap() - psnr(&permute(&x), &permute(&y)).unwrap()).abs() < 1e-9);
    }
}
