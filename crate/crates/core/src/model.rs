//! Convolutional JSCC encoder/decoder.
//!
//! The encoder maps an image `[N, C, H, W]` in `[0, 1]` to a feature map
//! whose final sigmoid keeps every entry in `(0, 1)`. Features are flattened
//! per image in channel-major order (`c`, then `y`, then `x`), giving `k`
//! real values per image; each becomes one channel symbol. The decoder
//! mirrors the encoder with transposed convolutions and ends in a sigmoid
//! whose output times 255 is the reconstructed 8-bit image.

use std::fmt;

use jscc_tensor::conv::{conv_out_len, conv_transpose_out_len};
use jscc_tensor::{
    batch_norm, conv2d, conv2d_transpose, relu, reshape, sigmoid, BatchNormState, BatchStats, Tape,
    Tensor, Var,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LayerKind {
    Conv,
    TransposedConv,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Sigmoid,
    Identity,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LayerSpec {
    pub kind: LayerKind,
    pub kernel: (usize, usize),
    pub in_channels: usize,
    pub out_channels: usize,
    pub stride: usize,
    pub padding: usize,
    /// Only meaningful for transposed convolutions.
    pub output_padding: usize,
    pub has_bn: bool,
    pub activation: Activation,
}

impl LayerSpec {
    /// Hidden convolution: BN + ReLU.
    pub fn conv(in_channels: usize, out_channels: usize, kernel: usize, stride: usize, padding: usize) -> Self {
        LayerSpec {
            kind: LayerKind::Conv,
            kernel: (kernel, kernel),
            in_channels,
            out_channels,
            stride,
            padding,
            output_padding: 0,
            has_bn: true,
            activation: Activation::Relu,
        }
    }

    /// Hidden transposed convolution: BN + ReLU.
    pub fn transposed(
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
        output_padding: usize,
    ) -> Self {
        LayerSpec {
            kind: LayerKind::TransposedConv,
            kernel: (kernel, kernel),
            in_channels,
            out_channels,
            stride,
            padding,
            output_padding,
            has_bn: true,
            activation: Activation::Relu,
        }
    }

    /// Turns a hidden layer into an output layer: no BN, sigmoid.
    pub fn sigmoid_output(mut self) -> Self {
        self.has_bn = false;
        self.activation = Activation::Sigmoid;
        self
    }

    pub fn weight_shape(&self) -> Vec<usize> {
        let (kh, kw) = self.kernel;
        match self.kind {
            LayerKind::Conv => vec![self.out_channels, self.in_channels, kh, kw],
            LayerKind::TransposedConv => vec![self.in_channels, self.out_channels, kh, kw],
        }
    }

    pub fn param_count(&self) -> usize {
        let weights = self.out_channels * self.in_channels * self.kernel.0 * self.kernel.1;
        weights + if self.has_bn { 2 * self.out_channels } else { 0 }
    }

    pub fn output_hw(&self, h: usize, w: usize) -> Option<(usize, usize)> {
        let (kh, kw) = self.kernel;
        match self.kind {
            LayerKind::Conv => Some((
                conv_out_len(h, kh, self.stride, self.padding)?,
                conv_out_len(w, kw, self.stride, self.padding)?,
            )),
            LayerKind::TransposedConv => Some((
                conv_transpose_out_len(h, kh, self.stride, self.padding, self.output_padding)?,
                conv_transpose_out_len(w, kw, self.stride, self.padding, self.output_padding)?,
            )),
        }
    }

    /// Multiply-accumulates of the weight layer. A convolution performs one
    /// kernel volume per output pixel; a transposed convolution scatters one
    /// kernel volume per input pixel. BN and activations are not counted.
    pub fn macs(&self, in_hw: (usize, usize), out_hw: (usize, usize)) -> u64 {
        let volume = (self.in_channels * self.out_channels * self.kernel.0 * self.kernel.1) as u64;
        let positions = match self.kind {
            LayerKind::Conv => out_hw.0 * out_hw.1,
            LayerKind::TransposedConv => in_hw.0 * in_hw.1,
        };
        volume * positions as u64
    }

    fn validate(&self, id: LayerId) -> Result<()> {
        if self.out_channels == 0 || self.in_channels == 0 {
            return Err(Error::Model(format!("{id}: channel counts must be at least 1")));
        }
        if self.kernel.0 == 0 || self.kernel.1 == 0 || self.stride == 0 {
            return Err(Error::Model(format!("{id}: kernel dims and stride must be at least 1")));
        }
        if self.has_bn && self.activation == Activation::Sigmoid {
            return Err(Error::Model(format!("{id}: sigmoid output layers carry no BN")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Section {
    Encoder,
    Decoder,
}

/// Position of a layer; ordering is encoder first, then decoder.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct LayerId {
    pub section: Section,
    pub index: usize,
}

impl LayerId {
    pub fn encoder(index: usize) -> Self {
        LayerId {
            section: Section::Encoder,
            index,
        }
    }

    pub fn decoder(index: usize) -> Self {
        LayerId {
            section: Section::Decoder,
            index,
        }
    }
}

impl fmt::Display for LayerId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let tag = match self.section {
            Section::Encoder => "enc",
            Section::Decoder => "dec",
        };
        write!(f, "{tag}{}", self.index + 1)
    }
}

/// Activation shape `(channels, height, width)` entering and leaving a layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LayerShape {
    pub id: LayerId,
    pub input: (usize, usize, usize),
    pub output: (usize, usize, usize),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ModelSpec {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    pub encoder: Vec<LayerSpec>,
    pub decoder: Vec<LayerSpec>,
    /// Declared feature length `k`; must equal the encoder output size.
    pub feature_len: usize,
}

pub const DESK_WIDTHS: [usize; 3] = [8, 16, 32];

impl ModelSpec {
    /// Desk-scale architecture for 32×32×3 inputs: two stride-2 and two
    /// stride-1 5×5 convolutions, an 8×8×`feature_channels` feature map, and
    /// a mirrored decoder. `feature_channels = 32` gives k/n = 2/3 and
    /// `16` gives 1/3.
    pub fn desk(feature_channels: usize) -> Self {
        ModelSpec::desk_with_widths(DESK_WIDTHS, feature_channels)
    }

    pub fn desk_with_widths(widths: [usize; 3], feature_channels: usize) -> Self {
        let [a, b, c] = widths;
        let encoder = vec![
            LayerSpec::conv(3, a, 5, 2, 2),
            LayerSpec::conv(a, b, 5, 2, 2),
            LayerSpec::conv(b, c, 5, 1, 2),
            LayerSpec::conv(c, feature_channels, 5, 1, 2).sigmoid_output(),
        ];
        let decoder = vec![
            LayerSpec::transposed(feature_channels, c, 5, 1, 2, 0),
            LayerSpec::transposed(c, b, 5, 1, 2, 0),
            LayerSpec::transposed(b, a, 5, 2, 2, 1),
            LayerSpec::transposed(a, 3, 5, 2, 2, 1).sigmoid_output(),
        ];
        ModelSpec {
            height: 32,
            width: 32,
            channels: 3,
            encoder,
            decoder,
            feature_len: feature_channels * 8 * 8,
        }
    }

    /// Source dimension `n = H·W·C`.
    pub fn source_dim(&self) -> usize {
        self.height * self.width * self.channels
    }

    /// Bandwidth compression ratio `k / n`.
    pub fn bandwidth_ratio(&self) -> f64 {
        self.feature_len as f64 / self.source_dim() as f64
    }

    pub fn layer_specs(&self) -> impl Iterator<Item = (LayerId, &LayerSpec)> {
        let enc = self.encoder.iter().enumerate().map(|(i, l)| (LayerId::encoder(i), l));
        let dec = self.decoder.iter().enumerate().map(|(i, l)| (LayerId::decoder(i), l));
        enc.chain(dec)
    }

    pub fn layer(&self, id: LayerId) -> Option<&LayerSpec> {
        match id.section {
            Section::Encoder => self.encoder.get(id.index),
            Section::Decoder => self.decoder.get(id.index),
        }
    }

    pub(crate) fn layer_mut(&mut self, id: LayerId) -> Option<&mut LayerSpec> {
        match id.section {
            Section::Encoder => self.encoder.get_mut(id.index),
            Section::Decoder => self.decoder.get_mut(id.index),
        }
    }

    /// The layer consuming `id`'s output, if any. The encoder's last layer
    /// feeds the decoder's first through the channel.
    pub fn next_layer(&self, id: LayerId) -> Option<LayerId> {
        match id.section {
            Section::Encoder if id.index + 1 < self.encoder.len() => Some(LayerId::encoder(id.index + 1)),
            Section::Encoder => (!self.decoder.is_empty()).then(|| LayerId::decoder(0)),
            Section::Decoder => (id.index + 1 < self.decoder.len()).then(|| LayerId::decoder(id.index + 1)),
        }
    }

    /// Shapes through the whole autoencoder, checking channel continuity.
    pub fn layer_shapes(&self) -> Result<Vec<LayerShape>> {
        if self.encoder.is_empty() || self.decoder.is_empty() {
            return Err(Error::Model("encoder and decoder need at least one layer".into()));
        }
        let mut shapes = Vec::new();
        let mut cur = (self.channels, self.height, self.width);
        for (id, layer) in self.layer_specs() {
            layer.validate(id)?;
            if layer.in_channels != cur.0 {
                return Err(Error::Model(format!(
                    "{id}: expects {} input channels but receives {}",
                    layer.in_channels, cur.0
                )));
            }
            let (h, w) = layer
                .output_hw(cur.1, cur.2)
                .ok_or_else(|| Error::Model(format!("{id}: kernel does not fit {}x{} input", cur.1, cur.2)))?;
            let out = (layer.out_channels, h, w);
            shapes.push(LayerShape {
                id,
                input: cur,
                output: out,
            });
            cur = out;
        }
        Ok(shapes)
    }

    /// `(C, H, W)` of the encoder's output map.
    pub fn feature_shape(&self) -> Result<(usize, usize, usize)> {
        let shapes = self.layer_shapes()?;
        Ok(shapes[self.encoder.len() - 1].output)
    }

    pub fn validate(&self) -> Result<()> {
        let shapes = self.layer_shapes()?;
        let last_enc = self.encoder.last().unwrap();
        let last_dec = self.decoder.last().unwrap();
        if last_enc.activation != Activation::Sigmoid || last_dec.activation != Activation::Sigmoid {
            return Err(Error::Model("encoder and decoder must both end in a sigmoid".into()));
        }
        let (c, h, w) = shapes[self.encoder.len() - 1].output;
        if c * h * w != self.feature_len {
            return Err(Error::Model(format!(
                "declared k = {} but encoder produces {c}x{h}x{w} = {}",
                self.feature_len,
                c * h * w
            )));
        }
        let out = shapes.last().unwrap().output;
        if out != (self.channels, self.height, self.width) {
            return Err(Error::Model(format!(
                "decoder output {out:?} differs from input {:?}",
                (self.channels, self.height, self.width)
            )));
        }
        Ok(())
    }

    pub fn param_count(&self) -> usize {
        self.layer_specs().map(|(_, l)| l.param_count()).sum()
    }

    pub fn macs(&self) -> Result<u64> {
        Ok(self
            .layer_shapes()?
            .iter()
            .map(|s| {
                let l = self.layer(s.id).unwrap();
                l.macs((s.input.1, s.input.2), (s.output.1, s.output.2))
            })
            .sum())
    }
}

/// Closed-form parameter and multiply-accumulate counts.
pub fn count_params_and_macs(model: &TrainedModel) -> Result<(usize, u64)> {
    Ok((model.spec.param_count(), model.spec.macs()?))
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerParams {
    pub weight: Tensor,
    pub bn: Option<BatchNormState>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamRole {
    Weight,
    Eta,
    Beta,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ParamRef {
    pub layer: LayerId,
    pub role: ParamRole,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// BN uses batch statistics; parameters are tracked for gradients.
    Train,
    /// BN uses running statistics; nothing is tracked.
    Eval,
}

/// Output of a forward pass over one section.
pub struct Pass<'t> {
    pub output: Var<'t>,
    /// Parameter leaves in [`TrainedModel::param_refs`] order (restricted to
    /// the section that ran). Empty in eval mode.
    pub bound: Vec<(ParamRef, Var<'t>)>,
    pub bn_stats: Vec<(LayerId, BatchStats)>,
}

/// Architecture plus learned weights (`θ` for the encoder, `φ` for the
/// decoder) and per-layer BN state.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainedModel {
    spec: ModelSpec,
    encoder: Vec<LayerParams>,
    decoder: Vec<LayerParams>,
}

impl TrainedModel {
    /// Seeded Kaiming-normal initialisation: `std = gain / sqrt(fan_in)`
    /// with gain √2 before ReLU and 1 before the sigmoid, where `fan_in`
    /// counts kernel taps reaching one output position. BN starts at
    /// `eta = 1`, `beta = 0`.
    pub fn init(spec: ModelSpec, seed: u64) -> Result<Self> {
        spec.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut make = |layer: &LayerSpec| -> Result<LayerParams> {
            let shape = layer.weight_shape();
            let taps = (layer.in_channels * layer.kernel.0 * layer.kernel.1) as f64;
            let fan_in = match layer.kind {
                LayerKind::Conv => taps,
                LayerKind::TransposedConv => taps / (layer.stride * layer.stride) as f64,
            };
            let gain: f64 = if layer.activation == Activation::Relu { 2.0 } else { 1.0 };
            let normal = Normal::new(0.0, (gain / fan_in).sqrt()).unwrap();
            let n = shape.iter().product();
            let data = (0..n).map(|_| normal.sample(&mut rng)).collect();
            Ok(LayerParams {
                weight: Tensor::parameter(shape, data)?,
                bn: layer.has_bn.then(|| BatchNormState::new(layer.out_channels)),
            })
        };
        let encoder = spec.encoder.iter().map(&mut make).collect::<Result<Vec<_>>>()?;
        let decoder = spec.decoder.iter().map(&mut make).collect::<Result<Vec<_>>>()?;
        Ok(TrainedModel {
            spec,
            encoder,
            decoder,
        })
    }

    pub fn from_parts(spec: ModelSpec, encoder: Vec<LayerParams>, decoder: Vec<LayerParams>) -> Result<Self> {
        spec.validate()?;
        let model = TrainedModel {
            spec,
            encoder,
            decoder,
        };
        model.check_params()?;
        Ok(model)
    }

    pub(crate) fn check_params(&self) -> Result<()> {
        if self.encoder.len() != self.spec.encoder.len() || self.decoder.len() != self.spec.decoder.len() {
            return Err(Error::Model("layer count differs from spec".into()));
        }
        for (id, layer) in self.spec.layer_specs() {
            let p = self.layer(id);
            if p.weight.shape() != layer.weight_shape().as_slice() {
                return Err(Error::Model(format!(
                    "{id}: weight shape {:?} differs from spec {:?}",
                    p.weight.shape(),
                    layer.weight_shape()
                )));
            }
            match (&p.bn, layer.has_bn) {
                (Some(bn), true) => {
                    bn.validate()?;
                    if bn.channels() != layer.out_channels {
                        return Err(Error::Model(format!(
                            "{id}: BN has {} channels, layer has {}",
                            bn.channels(),
                            layer.out_channels
                        )));
                    }
                }
                (None, false) => {}
                _ => return Err(Error::Model(format!("{id}: BN presence differs from spec"))),
            }
        }
        Ok(())
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub(crate) fn spec_mut(&mut self) -> &mut ModelSpec {
        &mut self.spec
    }

    pub fn layer(&self, id: LayerId) -> &LayerParams {
        match id.section {
            Section::Encoder => &self.encoder[id.index],
            Section::Decoder => &self.decoder[id.index],
        }
    }

    pub fn layer_mut(&mut self, id: LayerId) -> &mut LayerParams {
        match id.section {
            Section::Encoder => &mut self.encoder[id.index],
            Section::Decoder => &mut self.decoder[id.index],
        }
    }

    pub fn layers(&self) -> impl Iterator<Item = (LayerId, &LayerSpec, &LayerParams)> {
        self.spec.layer_specs().map(move |(id, spec)| (id, spec, self.layer(id)))
    }

    /// Every trainable tensor: per layer the weight, then `eta` and `beta`.
    pub fn param_refs(&self) -> Vec<ParamRef> {
        let mut refs = Vec::new();
        for (id, spec) in self.spec.layer_specs() {
            refs.push(ParamRef {
                layer: id,
                role: ParamRole::Weight,
            });
            if spec.has_bn {
                refs.push(ParamRef {
                    layer: id,
                    role: ParamRole::Eta,
                });
                refs.push(ParamRef {
                    layer: id,
                    role: ParamRole::Beta,
                });
            }
        }
        refs
    }

    /// Mutable parameters in [`param_refs`](Self::param_refs) order.
    pub fn params_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out = Vec::new();
        for layer in self.encoder.iter_mut().chain(self.decoder.iter_mut()) {
            out.push(&mut layer.weight);
            if let Some(bn) = &mut layer.bn {
                out.push(&mut bn.eta);
                out.push(&mut bn.beta);
            }
        }
        out
    }

    pub fn param_count(&self) -> usize {
        self.spec.param_count()
    }

    fn run_section<'t>(&self, section: Section, x: Var<'t>, mode: Mode) -> Result<Pass<'t>> {
        let tape = x.tape();
        let specs = match section {
            Section::Encoder => &self.spec.encoder,
            Section::Decoder => &self.spec.decoder,
        };
        let track = mode == Mode::Train;
        let leaf = |t: &Tensor| if track { tape.param(t) } else { tape.constant(t) };
        let mut bound = Vec::new();
        let mut bn_stats = Vec::new();
        let mut h = x;
        for (index, spec) in specs.iter().enumerate() {
            let id = LayerId { section, index };
            let params = self.layer(id);
            let w = leaf(&params.weight);
            if track {
                bound.push((
                    ParamRef {
                        layer: id,
                        role: ParamRole::Weight,
                    },
                    w,
                ));
            }
            h = match spec.kind {
                LayerKind::Conv => conv2d(h, w, spec.stride, spec.padding)?,
                LayerKind::TransposedConv => {
                    conv2d_transpose(h, w, spec.stride, spec.padding, spec.output_padding)?
                }
            };
            if let Some(bn) = &params.bn {
                let eta = leaf(&bn.eta);
                let beta = leaf(&bn.beta);
                if track {
                    bound.push((
                        ParamRef {
                            layer: id,
                            role: ParamRole::Eta,
                        },
                        eta,
                    ));
                    bound.push((
                        ParamRef {
                            layer: id,
                            role: ParamRole::Beta,
                        },
                        beta,
                    ));
                }
                let (y, stats) = batch_norm(h, eta, beta, bn, track)?;
                if let Some(stats) = stats {
                    bn_stats.push((id, stats));
                }
                h = y;
            }
            h = match spec.activation {
                Activation::Relu => relu(h),
                Activation::Sigmoid => sigmoid(h),
                Activation::Identity => h,
            };
        }
        Ok(Pass {
            output: h,
            bound,
            bn_stats,
        })
    }

    fn check_images(&self, shape: &[usize]) -> Result<()> {
        let s = &self.spec;
        if shape.len() != 4 || shape[1..] != [s.channels, s.height, s.width] {
            return Err(Error::Model(format!(
                "image batch {shape:?} does not match [N, {}, {}, {}]",
                s.channels, s.height, s.width
            )));
        }
        Ok(())
    }

    /// Encoder forward pass on a tape; output is `[N, C_k, H_k, W_k]`.
    pub fn encoder_pass<'t>(&self, x: Var<'t>, mode: Mode) -> Result<Pass<'t>> {
        self.check_images(&x.shape())?;
        self.run_section(Section::Encoder, x, mode)
    }

    /// Decoder forward pass on a tape from `[N, k]` or `[N, C_k, H_k, W_k]`.
    pub fn decoder_pass<'t>(&self, z: Var<'t>, mode: Mode) -> Result<Pass<'t>> {
        let (c, h, w) = self.spec.feature_shape()?;
        let shape = z.shape();
        let per_image: usize = shape[1..].iter().product();
        if shape.len() < 2 || per_image != self.spec.feature_len {
            return Err(Error::Model(format!(
                "feature batch {shape:?} does not carry k = {} values per image",
                self.spec.feature_len
            )));
        }
        let z = if shape.len() == 4 { z } else { reshape(z, vec![shape[0], c, h, w])? };
        self.run_section(Section::Decoder, z, mode)
    }

    /// `z = E_θ(x)` in eval mode, flattened to `[N, k]`.
    pub fn encode(&self, x: &Tensor) -> Result<Tensor> {
        if x.data().iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::Model("image values must lie in [0, 1]".into()));
        }
        let tape = Tape::new();
        let pass = self.encoder_pass(tape.constant(x), Mode::Eval)?;
        let n = x.shape()[0];
        Ok(pass.output.to_tensor().reshape(vec![n, self.spec.feature_len])?)
    }

    /// `x̂ = D_φ(ẑ)` in eval mode; values in `(0, 1)`.
    pub fn decode(&self, z_hat: &Tensor) -> Result<Tensor> {
        let tape = Tape::new();
        let pass = self.decoder_pass(tape.constant(z_hat), Mode::Eval)?;
        Ok(pass.output.to_tensor())
    }

    /// Folds training-mode batch statistics into the running estimates.
    pub fn apply_bn_stats(&mut self, stats: &[(LayerId, BatchStats)]) {
        for (id, s) in stats {
            if let Some(bn) = &mut self.layer_mut(*id).bn {
                bn.update_running(s);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn desk_spec_ratios() {
        let two_thirds = ModelSpec::desk(32);
        two_thirds.validate().unwrap();
        assert_eq!(two_thirds.source_dim(), 3072);
        assert_eq!(two_thirds.feature_len, 2048);
        assert!((two_thirds.bandwidth_ratio() - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(two_thirds.feature_shape().unwrap(), (32, 8, 8));
        let third = ModelSpec::desk(16);
        third.validate().unwrap();
        assert!((third.bandwidth_ratio() - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn single_conv_param_counts() {
        let l = LayerSpec::conv(3, 16, 5, 1, 2).sigmoid_output();
        assert_eq!(l.param_count(), 1200);
        let with_bn = LayerSpec { has_bn: true, ..l };
        assert_eq!(with_bn.param_count(), 1232);
    }

    #[test]
    fn declared_k_must_match() {
        let mut spec = ModelSpec::desk(32);
        spec.feature_len = 1000;
        assert!(spec.validate().is_err());
    }

    #[test]
    fn encoder_must_end_in_sigmoid() {
        let mut spec = ModelSpec::desk(32);
        spec.encoder[3].activation = Activation::Identity;
        assert!(spec.validate().is_err());
    }

    #[test]
    fn layer_ids_order_and_display() {
        let spec = ModelSpec::desk(32);
        let ids: Vec<String> = spec.layer_specs().map(|(id, _)| id.to_string()).collect();
        assert_eq!(ids, ["enc1", "enc2", "enc3", "enc4", "dec1", "dec2", "dec3", "dec4"]);
        assert_eq!(spec.next_layer(LayerId::encoder(3)), Some(LayerId::decoder(0)));
        assert_eq!(spec.next_layer(LayerId::decoder(3)), None);
    }

    #[test]
    fn encode_rejects_wrong_dims_and_range() {
        let model = TrainedModel::init(ModelSpec::desk(32), 0).unwrap();
        assert!(model.encode(&Tensor::zeros(vec![1, 3, 16, 16])).is_err());
        assert!(model.encode(&Tensor::full(vec![1, 3, 32, 32], 1.5)).is_err());
        assert!(model.decode(&Tensor::zeros(vec![1, 100])).is_err());
    }
}
