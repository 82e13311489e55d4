//! Convolutions against brute-force loop references.

use jscc_tensor::{conv2d, conv2d_transpose, Tape, Tensor};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
}

/// Direct definition: every output position sums over every kernel tap.
fn naive_conv(x: &Tensor, k: &Tensor, stride: usize, pad: usize) -> Vec<f64> {
    let (xs, ks) = (x.shape(), k.shape());
    let (n, ci, h, w) = (xs[0], xs[1], xs[2] as isize, xs[3] as isize);
    let (co, kh, kw) = (ks[0], ks[2], ks[3]);
    let oh = ((h as usize + 2 * pad - kh) / stride) + 1;
    let ow = ((w as usize + 2 * pad - kw) / stride) + 1;
    let mut out = vec![0.0; n * co * oh * ow];
    for b in 0..n {
        for o in 0..co {
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut acc = 0.0;
                    for c in 0..ci {
                        for ky in 0..kh {
                            for kx in 0..kw {
                                let iy = (oy * stride + ky) as isize - pad as isize;
                                let ix = (ox * stride + kx) as isize - pad as isize;
                                if iy < 0 || ix < 0 || iy >= h || ix >= w {
                                    continue;
                                }
                                let xi = ((b * ci + c) * h as usize + iy as usize) * w as usize + ix as usize;
                                let ki = ((o * ci + c) * kh + ky) * kw + kx;
                                acc += x.data()[xi] * k.data()[ki];
                            }
                        }
                    }
                    out[((b * co + o) * oh + oy) * ow + ox] = acc;
                }
            }
        }
    }
    out
}

/// Scatter definition of the transposed convolution.
fn naive_conv_transpose(x: &Tensor, k: &Tensor, stride: usize, pad: usize, out_pad: usize) -> Vec<f64> {
    let (xs, ks) = (x.shape(), k.shape());
    let (n, ci, h, w) = (xs[0], xs[1], xs[2], xs[3]);
    let (co, kh, kw) = (ks[1], ks[2], ks[3]);
    let oh = (h - 1) * stride + kh + out_pad - 2 * pad;
    let ow = (w - 1) * stride + kw + out_pad - 2 * pad;
    let mut out = vec![0.0; n * co * oh * ow];
    for b in 0..n {
        for c in 0..ci {
            for iy in 0..h {
                for ix in 0..w {
                    for o in 0..co {
                        for ky in 0..kh {
                            for kx in 0..kw {
                                let oy = (iy * stride + ky) as isize - pad as isize;
                                let ox = (ix * stride + kx) as isize - pad as isize;
                                if oy < 0 || ox < 0 || oy >= oh as isize || ox >= ow as isize {
                                    continue;
                                }
                                let v = x.data()[((b * ci + c) * h + iy) * w + ix]
                                    * k.data()[((c * co + o) * kh + ky) * kw + kx];
                                out[((b * co + o) * oh + oy as usize) * ow + ox as usize] += v;
                            }
                        }
                    }
                }
            }
        }
    }
    out
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

#[test]
fn strided_padded_conv_matches_loops() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let x = random(&[1, 2, 5, 5], &mut rng);
    let k = random(&[3, 2, 3, 3], &mut rng);
    let tape = Tape::new();
    let y = conv2d(tape.constant(&x), tape.constant(&k), 2, 1).unwrap();
    assert_eq!(y.shape(), vec![1, 3, 3, 3]);
    assert!(max_abs_diff(&y.value(), &naive_conv(&x, &k, 2, 1)) <= 1e-12);
}

#[test]
fn stride_two_upsample_matches_loops() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let x = random(&[1, 1, 2, 2], &mut rng);
    let k = random(&[1, 1, 3, 3], &mut rng);
    let tape = Tape::new();
    let y = conv2d_transpose(tape.constant(&x), tape.constant(&k), 2, 1, 1).unwrap();
    assert_eq!(y.shape(), vec![1, 1, 4, 4]);
    assert!(max_abs_diff(&y.value(), &naive_conv_transpose(&x, &k, 2, 1, 1)) <= 1e-12);
}

#[test]
fn desk_decoder_geometry_matches_loops() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let x = random(&[2, 3, 4, 4], &mut rng);
    let k = random(&[3, 2, 5, 5], &mut rng);
    let tape = Tape::new();
    let y = conv2d_transpose(tape.constant(&x), tape.constant(&k), 2, 2, 1).unwrap();
    assert_eq!(y.shape(), vec![2, 2, 8, 8]);
    assert!(max_abs_diff(&y.value(), &naive_conv_transpose(&x, &k, 2, 2, 1)) <= 1e-12);
}

fn geometry() -> impl Strategy<Value = (usize, usize, usize, usize, usize, usize, usize, usize, usize)> {
    (1usize..3, 1usize..4, 1usize..4, 1usize..9, 1usize..9, 1usize..6, 1usize..6, 1usize..4, 0usize..3)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn conv_transpose_is_adjoint_of_conv(
        (n, ci, co, h, w, kh, kw, stride, pad) in geometry(),
        seed in any::<u64>(),
    ) {
        prop_assume!(kh <= h + 2 * pad && kw <= w + 2 * pad);
        let oh = (h + 2 * pad - kh) / stride + 1;
        let ow = (w + 2 * pad - kw) / stride + 1;
        // The transposed output must land back on (h, w).
        let out_pad_h = h + 2 * pad - ((oh - 1) * stride + kh);
        let out_pad_w = w + 2 * pad - ((ow - 1) * stride + kw);
        prop_assume!(out_pad_h == out_pad_w && out_pad_h < stride);

        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = random(&[n, ci, h, w], &mut rng);
        let k = random(&[co, ci, kh, kw], &mut rng);
        let y = random(&[n, co, oh, ow], &mut rng);
        let tape = Tape::new();
        let cx = conv2d(tape.constant(&x), tape.constant(&k), stride, pad).unwrap();
        let ty = conv2d_transpose(tape.constant(&y), tape.constant(&k), stride, pad, out_pad_h).unwrap();
        prop_assert_eq!(ty.shape(), vec![n, ci, h, w]);
        let lhs: f64 = cx.value().iter().zip(y.data()).map(|(a, b)| a * b).sum();
        let rhs: f64 = x.data().iter().zip(ty.value().iter()).map(|(a, b)| a * b).sum();
        prop_assert!((lhs - rhs).abs() <= 1e-10, "{} vs {}", lhs, rhs);
        prop_assert!(max_abs_diff(&cx.value(), &naive_conv(&x, &k, stride, pad)) <= 1e-12);
    }
}
