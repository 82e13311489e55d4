//! Gray-labelled square QAM for bit pipelines.
//!
//! The first half of each symbol's bits selects the in-phase level and the
//! second half the quadrature level; along each axis the levels
//! `−(L−1), …, L−1` carry consecutive Gray codes, so neighbouring points
//! differ in one bit.

use num_complex::Complex64;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct GrayQam {
    order: usize,
    axis_bits: usize,
    norm: f64,
}

fn gray(n: usize) -> usize {
    n ^ (n >> 1)
}

fn gray_inverse(mut g: usize) -> usize {
    let mut n = 0;
    while g != 0 {
        n ^= g;
        g >>= 1;
    }
    n
}

impl GrayQam {
    pub fn new(order: usize) -> Result<Self> {
        if !crate::channel::SUPPORTED_ORDERS.contains(&order) {
            return Err(Error::Chain(format!("unsupported modulation order {order}")));
        }
        let axis_bits = order.trailing_zeros() as usize / 2;
        let side = 1usize << axis_bits;
        Ok(GrayQam {
            order,
            axis_bits,
            norm: (2.0 * (side * side - 1) as f64 / 3.0).sqrt(),
        })
    }

    pub fn bits_per_symbol(&self) -> usize {
        2 * self.axis_bits
    }

    pub fn order(&self) -> usize {
        self.order
    }

    fn level(&self, label: usize) -> f64 {
        let side = 1usize << self.axis_bits;
        (2 * gray_inverse(label)) as f64 - (side - 1) as f64
    }

    fn label(&self, v: f64) -> usize {
        let side = 1usize << self.axis_bits;
        let idx = ((v + (side - 1) as f64) / 2.0).round().clamp(0.0, (side - 1) as f64) as usize;
        gray(idx)
    }

    /// Maps bits to unit-average-power symbols, zero-padding the tail.
    pub fn modulate(&self, bits: &[u8]) -> Vec<Complex64> {
        let b = self.bits_per_symbol();
        bits.chunks(b)
            .map(|chunk| {
                let mut word = 0usize;
                for i in 0..b {
                    word = word << 1 | *chunk.get(i).unwrap_or(&0) as usize;
                }
                let i_label = word >> self.axis_bits;
                let q_label = word & ((1 << self.axis_bits) - 1);
                Complex64::new(self.level(i_label), self.level(q_label)) / self.norm
            })
            .collect()
    }

    /// Hard decisions per axis (minimum distance on a square grid).
    pub fn demodulate(&self, symbols: &[Complex64]) -> Vec<u8> {
        let b = self.bits_per_symbol();
        let mut out = Vec::with_capacity(symbols.len() * b);
        for s in symbols {
            let s = s * self.norm;
            let word = self.label(s.re) << self.axis_bits | self.label(s.im);
            for i in (0..b).rev() {
                out.push((word >> i & 1) as u8);
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roundtrip_all_words() {
        for m in crate::channel::SUPPORTED_ORDERS {
            let q = GrayQam::new(m).unwrap();
            let b = q.bits_per_symbol();
            let bits: Vec<u8> = (0..m).flat_map(|w| (0..b).rev().map(move |i| (w >> i & 1) as u8)).collect();
            let symbols = q.modulate(&bits);
            assert_eq!(q.demodulate(&symbols), bits);
            let power = symbols.iter().map(|s| s.norm_sqr()).sum::<f64>() / m as f64;
            assert!((power - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn neighbours_differ_in_one_bit() {
        let q = GrayQam::new(64).unwrap();
        for n in 0..7 {
            let v = (2 * n) as f64 - 7.0;
            assert_eq!((q.label(v) ^ q.label(v + 2.0)).count_ones(), 1);
            assert_eq!(q.level(q.label(v)), v);
        }
    }
}
