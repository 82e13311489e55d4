//! Separate source and channel coding: block-DCT source code, optional
//! Hamming(7,4) channel code and Gray-labelled QAM. A failed source decode
//! yields the mid-gray image, which is what produces the cliff.

pub mod codec;
pub mod dct;
pub mod hamming;
pub mod qam;

use crate::channel::{equalize, transmit, ChannelModel, ChannelRealization};
use crate::error::{CodecError, Error, Result};
use qam::GrayQam;

/// Value every pixel takes when the source decoder fails.
pub const MID_GRAY: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ChannelCode {
    None,
    Hamming74,
}

impl ChannelCode {
    /// Coded bits needed for `bits` source bits.
    pub fn coded_len(self, bits: usize) -> usize {
        match self {
            ChannelCode::None => bits,
            ChannelCode::Hamming74 => bits.div_ceil(4) * 7,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeparateConfig {
    /// Quantization step divisor applied to the luminance table.
    pub quality: f64,
    pub code: ChannelCode,
    pub order: usize,
}

impl SeparateConfig {
    pub const DEFAULT_ORDER: usize = 16;

    pub fn validate(&self) -> Result<()> {
        if !(self.quality > 0.0 && self.quality.is_finite()) {
            return Err(Error::Config(format!("quality must be positive, got {}", self.quality)));
        }
        GrayQam::new(self.order)?;
        Ok(())
    }

    /// Highest quality whose coded stream fits in `symbols` channel uses.
    pub fn for_budget(width: usize, height: usize, symbols: usize, code: ChannelCode, order: usize) -> Result<Self> {
        let per_symbol = GrayQam::new(order)?.bits_per_symbol();
        let coded_budget = symbols * per_symbol;
        let source_budget = match code {
            ChannelCode::None => coded_budget,
            ChannelCode::Hamming74 => coded_budget / 7 * 4,
        };
        let quality = codec::quality_for_budget(width, height, source_budget).ok_or_else(|| {
            Error::Config(format!(
                "{symbols} symbols of {order}-QAM cannot carry a {width}x{height} image"
            ))
        })?;
        Ok(SeparateConfig { quality, code, order })
    }

    /// Channel symbols used for one image.
    pub fn symbols(&self, width: usize, height: usize) -> Result<usize> {
        let per_symbol = GrayQam::new(self.order)?.bits_per_symbol();
        let bits = self.code.coded_len(codec::stream_bits(width, height, self.quality));
        Ok(bits.div_ceil(per_symbol))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SeparateOutcome {
    /// Planar `[3, H, W]` reconstruction in `[0, 1]`.
    pub reconstruction: Vec<f64>,
    /// Fraction of coded bits flipped by the channel.
    pub channel_ber: f64,
    /// Fraction of source bits still wrong after channel decoding.
    pub residual_ber: f64,
    pub corrected_blocks: usize,
    pub symbols: usize,
    /// Why the source decoder rejected the stream, if it did.
    pub failure: Option<CodecError>,
    pub gain_abs: f64,
}

impl SeparateOutcome {
    pub fn decoded(&self) -> bool {
        self.failure.is_none()
    }
}

fn error_fraction(a: &[u8], b: &[u8]) -> f64 {
    if a.is_empty() {
        return 0.0;
    }
    a.iter().zip(b).filter(|(x, y)| x != y).count() as f64 / a.len() as f64
}

/// Source-decodes a received stream, substituting the mid-gray image when
/// decoding fails.
pub fn reconstruct(stream: &[u8], width: usize, height: usize, quality: f64) -> (Vec<f64>, Option<CodecError>) {
    match codec::source_decode(stream, width, height, quality) {
        Ok(x) => (x, None),
        Err(e) => (vec![MID_GRAY; codec::CHANNELS * width * height], Some(e)),
    }
}

/// Runs one planar `[3, H, W]` image through the full pipeline over a
/// channel drawn from `model` with `seed`.
pub fn separate_transmit(
    image: &[f64],
    width: usize,
    height: usize,
    cfg: &SeparateConfig,
    model: &ChannelModel,
    seed: u64,
) -> Result<SeparateOutcome> {
    cfg.validate()?;
    let qam = GrayQam::new(cfg.order)?;
    let source = codec::source_encode(image, width, height, cfg.quality)?;
    let coded = match cfg.code {
        ChannelCode::None => source.clone(),
        ChannelCode::Hamming74 => hamming::encode(&source),
    };
    let symbols = qam.modulate(&coded);
    let realization = ChannelRealization::sample(model, symbols.len(), seed);
    let y = transmit(&symbols, &realization)?;
    let received = qam.demodulate(&equalize(&y, &realization)?);
    let received = &received[..coded.len()];
    let (decoded, corrected_blocks) = match cfg.code {
        ChannelCode::None => (received.to_vec(), 0),
        ChannelCode::Hamming74 => hamming::decode(received),
    };
    let decoded = &decoded[..source.len()];
    let (reconstruction, failure) = reconstruct(decoded, width, height, cfg.quality);
    let gain_abs = realization.gains.iter().map(|h| h.norm()).sum::<f64>() / realization.gains.len() as f64;
    Ok(SeparateOutcome {
        reconstruction,
        channel_ber: error_fraction(&coded, received),
        residual_ber: error_fraction(&source, decoded),
        corrected_blocks,
        symbols: symbols.len(),
        failure,
        gain_abs,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::synthetic_scene;

    fn cfg() -> SeparateConfig {
        SeparateConfig {
            quality: 1.0,
            code: ChannelCode::Hamming74,
            order: 16,
        }
    }

    #[test]
    fn noiseless_matches_source_roundtrip() {
        let img = synthetic_scene(32, 32, 3).data;
        let c = cfg();
        let out = separate_transmit(&img, 32, 32, &c, &ChannelModel::noiseless(), 1).unwrap();
        let direct = codec::source_decode(&codec::source_encode(&img, 32, 32, c.quality).unwrap(), 32, 32, c.quality)
            .unwrap();
        assert!(out.decoded());
        assert_eq!(out.reconstruction, direct);
        assert_eq!(out.channel_ber, 0.0);
        assert_eq!(out.symbols, c.symbols(32, 32).unwrap());
    }

    #[test]
    fn hopeless_channel_falls_back_to_gray() {
        let img = synthetic_scene(32, 32, 3).data;
        let out = separate_transmit(&img, 32, 32, &cfg(), &ChannelModel::rayleigh(-10.0), 5).unwrap();
        assert!(!out.decoded());
        assert!(out.reconstruction.iter().all(|&v| v == MID_GRAY));
        assert!(out.channel_ber > 0.05);
    }

    #[test]
    fn budget_respected() {
        for code in [ChannelCode::None, ChannelCode::Hamming74] {
            let c = SeparateConfig::for_budget(32, 32, 512, code, 16).unwrap();
            assert!(c.symbols(32, 32).unwrap() <= 512, "{code:?}");
        }
        assert!(SeparateConfig::for_budget(32, 32, 4, ChannelCode::None, 16).is_err());
    }

    #[test]
    fn deterministic_in_seed() {
        let img = synthetic_scene(32, 32, 8).data;
        let m = ChannelModel::rayleigh(12.0);
        let a = separate_transmit(&img, 32, 32, &cfg(), &m, 77).unwrap();
        let b = separate_transmit(&img, 32, 32, &cfg(), &m, 77).unwrap();
        assert_eq!(a, b);
    }
}
