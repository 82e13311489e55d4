//! Block-DCT source coder with fixed-length coefficient fields.
//!
//! Each 8×8 block of each colour plane (8-bit scale, level-shifted by −128)
//! is transformed and every coefficient `(u, v)` is quantized with step
//! `Δ = LUMA[u, v] / q`. A coefficient whose amplitude bound `A` (1024 for DC,
//! 512 for AC) satisfies `Δ ≥ A` is dropped. The others are clamped to
//! `[−r, r]`, `r = floor(A/Δ)`, and stored offset-binary in
//! `ceil(log2(2r + 1))` bits, so the stream length depends only on the image
//! size and `q`.
//!
//! Stream: magic u16, width u16, height u16, channels u8, q as f32 bits,
//! payload bit count u32, payload, CRC-32 of the payload bytes. Fields are
//! written most significant bit first.

use super::dct;
use crate::error::CodecError;

pub const MAGIC: u16 = 0x4A44;
pub const CHANNELS: usize = 3;
pub const HEADER_BITS: usize = 16 + 16 + 16 + 8 + 32 + 32;
pub const CRC_BITS: usize = 32;
const DC_BOUND: f64 = 1024.0;
const AC_BOUND: f64 = 512.0;

/// Standard JPEG luminance quantization table, row-major.
pub const LUMA: [f64; 64] = [
    16.0, 11.0, 10.0, 16.0, 24.0, 40.0, 51.0, 61.0, //
    12.0, 12.0, 14.0, 19.0, 26.0, 58.0, 60.0, 55.0, //
    14.0, 13.0, 16.0, 24.0, 40.0, 57.0, 69.0, 56.0, //
    14.0, 17.0, 22.0, 29.0, 51.0, 87.0, 80.0, 62.0, //
    18.0, 22.0, 37.0, 56.0, 68.0, 109.0, 103.0, 77.0, //
    24.0, 35.0, 55.0, 64.0, 81.0, 104.0, 113.0, 92.0, //
    49.0, 64.0, 78.0, 87.0, 103.0, 121.0, 120.0, 101.0, //
    72.0, 92.0, 95.0, 98.0, 112.0, 100.0, 103.0, 99.0,
];

#[derive(Debug, Clone, Copy, PartialEq)]
struct Field {
    step: f64,
    range: i64,
    bits: usize,
}

fn fields(q: f64) -> [Field; 64] {
    std::array::from_fn(|i| {
        let step = LUMA[i] / q;
        let bound = if i == 0 { DC_BOUND } else { AC_BOUND };
        let range = (bound / step).floor() as i64;
        let bits = if range == 0 {
            0
        } else {
            (usize::BITS - (2 * range as usize).leading_zeros()) as usize
        };
        Field { step, range, bits }
    })
}

fn check_dims(width: usize, height: usize) -> Result<(), CodecError> {
    if width == 0 || height == 0 || width % dct::N != 0 || height % dct::N != 0 || width > 0xFFFF || height > 0xFFFF {
        return Err(CodecError::Dimensions(width, height));
    }
    Ok(())
}

pub fn payload_bits(width: usize, height: usize, q: f64) -> usize {
    let per_block: usize = fields(q).iter().map(|f| f.bits).sum();
    CHANNELS * (width / dct::N) * (height / dct::N) * per_block
}

/// Total stream length in bits for an image size and quality.
pub fn stream_bits(width: usize, height: usize, q: f64) -> usize {
    HEADER_BITS + payload_bits(width, height, q) + CRC_BITS
}

struct BitWriter(Vec<u8>);

impl BitWriter {
    fn put(&mut self, value: u64, bits: usize) {
        for i in (0..bits).rev() {
            self.0.push((value >> i & 1) as u8);
        }
    }
}

struct BitReader<'a> {
    bits: &'a [u8],
    pos: usize,
}

impl BitReader<'_> {
    fn get(&mut self, bits: usize) -> Result<u64, CodecError> {
        if self.pos + bits > self.bits.len() {
            return Err(CodecError::Truncated {
                needed: self.pos + bits,
                available: self.bits.len(),
            });
        }
        let v = self.bits[self.pos..self.pos + bits]
            .iter()
            .fold(0u64, |acc, &b| acc << 1 | (b & 1) as u64);
        self.pos += bits;
        Ok(v)
    }
}

fn pack_bytes(bits: &[u8]) -> Vec<u8> {
    bits.chunks(8)
        .map(|c| c.iter().enumerate().fold(0u8, |acc, (i, &b)| acc | (b & 1) << (7 - i)))
        .collect()
}

/// Encodes a planar `[3, H, W]` image with values in `[0, 1]`.
pub fn source_encode(image: &[f64], width: usize, height: usize, q: f64) -> Result<Vec<u8>, CodecError> {
    check_dims(width, height)?;
    if image.len() != CHANNELS * width * height {
        return Err(CodecError::Header(format!(
            "{} values for a {width}x{height} RGB image",
            image.len()
        )));
    }
    let fields = fields(q);
    let mut payload = BitWriter(Vec::with_capacity(payload_bits(width, height, q)));
    for c in 0..CHANNELS {
        let plane = &image[c * width * height..(c + 1) * width * height];
        for by in (0..height).step_by(dct::N) {
            for bx in (0..width).step_by(dct::N) {
                let block: [f64; 64] =
                    std::array::from_fn(|i| plane[(by + i / 8) * width + bx + i % 8] * 255.0 - 128.0);
                let coeffs = dct::forward(&block);
                for (f, &x) in fields.iter().zip(&coeffs) {
                    if f.bits > 0 {
                        let idx = (x / f.step).round().clamp(-f.range as f64, f.range as f64) as i64;
                        payload.put((idx + f.range) as u64, f.bits);
                    }
                }
            }
        }
    }
    let mut out = BitWriter(Vec::with_capacity(stream_bits(width, height, q)));
    out.put(MAGIC as u64, 16);
    out.put(width as u64, 16);
    out.put(height as u64, 16);
    out.put(CHANNELS as u64, 8);
    out.put((q as f32).to_bits() as u64, 32);
    out.put(payload.0.len() as u64, 32);
    let crc = crc32fast::hash(&pack_bytes(&payload.0));
    out.0.extend(payload.0);
    out.put(crc as u64, 32);
    Ok(out.0)
}

/// Decodes a stream produced by [`source_encode`] for the expected size and
/// quality. Any header mismatch or checksum failure is an error.
pub fn source_decode(stream: &[u8], width: usize, height: usize, q: f64) -> Result<Vec<f64>, CodecError> {
    check_dims(width, height)?;
    let mut r = BitReader { bits: stream, pos: 0 };
    let magic = r.get(16)? as u32;
    if magic != MAGIC as u32 {
        return Err(CodecError::BadMagic(magic));
    }
    let (w, h, ch) = (r.get(16)? as usize, r.get(16)? as usize, r.get(8)? as usize);
    if (w, h, ch) != (width, height, CHANNELS) {
        return Err(CodecError::Header(format!(
            "stream describes {w}x{h}x{ch}, expected {width}x{height}x{CHANNELS}"
        )));
    }
    let q_bits = r.get(32)? as u32;
    if q_bits != (q as f32).to_bits() {
        return Err(CodecError::Header(format!(
            "stream quality {} differs from {q}",
            f32::from_bits(q_bits)
        )));
    }
    let len = r.get(32)? as usize;
    let expected = payload_bits(width, height, q);
    if len != expected {
        return Err(CodecError::Header(format!("payload of {len} bits, expected {expected}")));
    }
    let start = r.pos;
    r.get(len)?;
    let payload = &stream[start..start + len];
    let crc = r.get(32)? as u32;
    if crc != crc32fast::hash(&pack_bytes(payload)) {
        return Err(CodecError::Checksum);
    }
    let fields = fields(q);
    let mut p = BitReader { bits: payload, pos: 0 };
    let mut out = vec![0.0; CHANNELS * width * height];
    for c in 0..CHANNELS {
        let plane = &mut out[c * width * height..(c + 1) * width * height];
        for by in (0..height).step_by(dct::N) {
            for bx in (0..width).step_by(dct::N) {
                let mut coeffs = [0.0; 64];
                for (f, x) in fields.iter().zip(coeffs.iter_mut()) {
                    if f.bits > 0 {
                        let idx = (p.get(f.bits)? as i64 - f.range).clamp(-f.range, f.range);
                        *x = idx as f64 * f.step;
                    }
                }
                let block = dct::inverse(&coeffs);
                for (i, v) in block.iter().enumerate() {
                    plane[(by + i / 8) * width + bx + i % 8] = ((v + 128.0) / 255.0).clamp(0.0, 1.0);
                }
            }
        }
    }
    Ok(out)
}

/// Largest quality whose stream fits in `budget` bits, by bisection over
/// `q ∈ [2⁻⁶, 2⁸]`. `None` if even the coarsest setting does not fit.
pub fn quality_for_budget(width: usize, height: usize, budget: usize) -> Option<f64> {
    let fits = |q: f64| stream_bits(width, height, q) <= budget;
    let (mut lo, mut hi) = (1.0 / 64.0, 256.0);
    if !fits(lo) {
        return None;
    }
    if fits(hi) {
        return Some(hi);
    }
    for _ in 0..60 {
        let mid = (lo * hi).sqrt();
        if fits(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    // The header stores q as f32; round down so the stored value still fits.
    let q = lo as f32;
    let q = if fits(q as f64) { q } else { f32::from_bits(q.to_bits() - 1) };
    Some(q as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::synthetic_scene;
    use crate::metrics::psnr;

    fn to255(v: &[f64]) -> Vec<f64> {
        v.iter().map(|x| x * 255.0).collect()
    }

    #[test]
    fn deterministic_length() {
        let a = synthetic_scene(32, 32, 1).data;
        let b = synthetic_scene(32, 32, 2).data;
        let sa = source_encode(&a, 32, 32, 1.0).unwrap();
        let sb = source_encode(&b, 32, 32, 1.0).unwrap();
        assert_eq!(sa.len(), sb.len());
        assert_eq!(sa.len(), stream_bits(32, 32, 1.0));
        assert_eq!(sa, source_encode(&a, 32, 32, 1.0).unwrap());
    }

    #[test]
    fn high_quality_roundtrip() {
        let img = synthetic_scene(32, 32, 4).data;
        let s = source_encode(&img, 32, 32, 8.0).unwrap();
        let back = source_decode(&s, 32, 32, 8.0).unwrap();
        assert!(psnr(&to255(&img), &to255(&back)).unwrap() > 35.0);
    }

    #[test]
    fn corrupted_streams_fail() {
        let img = synthetic_scene(16, 16, 4).data;
        let s = source_encode(&img, 16, 16, 2.0).unwrap();
        let mut bad = s.clone();
        bad[3] ^= 1;
        assert!(matches!(source_decode(&bad, 16, 16, 2.0), Err(CodecError::BadMagic(_))));
        let mut bad = s.clone();
        bad[20] ^= 1;
        assert!(matches!(source_decode(&bad, 16, 16, 2.0), Err(CodecError::Header(_))));
        let mut bad = s.clone();
        bad[HEADER_BITS + 5] ^= 1;
        assert_eq!(source_decode(&bad, 16, 16, 2.0), Err(CodecError::Checksum));
        assert!(matches!(
            source_decode(&s[..s.len() - 1], 16, 16, 2.0),
            Err(CodecError::Truncated { .. })
        ));
        assert_eq!(source_decode(&s, 16, 12, 2.0), Err(CodecError::Dimensions(16, 12)));
    }

    #[test]
    fn budget_search_fits() {
        let budget = 4000;
        let q = quality_for_budget(32, 32, budget).unwrap();
        assert!(stream_bits(32, 32, q) <= budget);
        assert!(stream_bits(32, 32, q * 1.05) > budget);
        assert!(quality_for_budget(32, 32, 100).is_none());
    }
}
