//! Binary model container.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic      4 bytes  "JSCC"
//! version    u16      FORMAT_VERSION
//! height, width, channels, feature_len, encoder layers, decoder layers: u32 each
//! per layer  kind u8 (0 conv, 1 transposed), kh, kw, in, out, stride,
//!            padding, output_padding: u32; has_bn u8; activation u8
//!            (0 relu, 1 sigmoid, 2 identity)
//! per layer  weight blob; if has_bn: eta, beta, running_mean, running_var
//!            blobs, then eps f64, momentum f64
//! blob       u64 count followed by count f64 values
//! ```

use std::fs;
use std::path::Path;

use jscc_tensor::{BatchNormState, Tensor};

use crate::error::{ContainerError, Error, Result};
use crate::model::{Activation, LayerKind, LayerParams, LayerSpec, ModelSpec, TrainedModel};

pub const MAGIC: &[u8; 4] = b"JSCC";
pub const FORMAT_VERSION: u16 = 1;

struct Writer(Vec<u8>);

impl Writer {
    fn u8(&mut self, v: u8) {
        self.0.push(v);
    }
    fn u32(&mut self, v: usize) {
        self.0.extend((v as u32).to_le_bytes());
    }
    fn f64(&mut self, v: f64) {
        self.0.extend(v.to_le_bytes());
    }
    fn blob(&mut self, values: &[f64]) {
        self.0.extend((values.len() as u64).to_le_bytes());
        for v in values {
            self.f64(*v);
        }
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &'static str) -> std::result::Result<&'a [u8], ContainerError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or(ContainerError::Truncated { what })?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }
    fn u8(&mut self, what: &'static str) -> std::result::Result<u8, ContainerError> {
        Ok(self.take(1, what)?[0])
    }
    fn u16(&mut self, what: &'static str) -> std::result::Result<u16, ContainerError> {
        Ok(u16::from_le_bytes(self.take(2, what)?.try_into().unwrap()))
    }
    fn u32(&mut self, what: &'static str) -> std::result::Result<usize, ContainerError> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()) as usize)
    }
    fn f64(&mut self, what: &'static str) -> std::result::Result<f64, ContainerError> {
        Ok(f64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }
    fn blob(&mut self, what: &'static str) -> std::result::Result<Vec<f64>, ContainerError> {
        let n = u64::from_le_bytes(self.take(8, what)?.try_into().unwrap()) as usize;
        let raw = self.take(n.checked_mul(8).ok_or(ContainerError::Truncated { what })?, what)?;
        Ok(raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect())
    }
}

fn write_layer_spec(w: &mut Writer, l: &LayerSpec) {
    w.u8(match l.kind {
        LayerKind::Conv => 0,
        LayerKind::TransposedConv => 1,
    });
    for v in [
        l.kernel.0,
        l.kernel.1,
        l.in_channels,
        l.out_channels,
        l.stride,
        l.padding,
        l.output_padding,
    ] {
        w.u32(v);
    }
    w.u8(l.has_bn as u8);
    w.u8(match l.activation {
        Activation::Relu => 0,
        Activation::Sigmoid => 1,
        Activation::Identity => 2,
    });
}

fn read_layer_spec(r: &mut Reader<'_>) -> std::result::Result<LayerSpec, ContainerError> {
    const WHAT: &str = "layer table";
    let kind = match r.u8(WHAT)? {
        0 => LayerKind::Conv,
        1 => LayerKind::TransposedConv,
        k => return Err(ContainerError::Malformed(format!("unknown layer kind {k}"))),
    };
    let mut f = [0usize; 7];
    for v in f.iter_mut() {
        *v = r.u32(WHAT)?;
    }
    let has_bn = match r.u8(WHAT)? {
        0 => false,
        1 => true,
        b => return Err(ContainerError::Malformed(format!("bad BN flag {b}"))),
    };
    let activation = match r.u8(WHAT)? {
        0 => Activation::Relu,
        1 => Activation::Sigmoid,
        2 => Activation::Identity,
        a => return Err(ContainerError::Malformed(format!("unknown activation {a}"))),
    };
    Ok(LayerSpec {
        kind,
        kernel: (f[0], f[1]),
        in_channels: f[2],
        out_channels: f[3],
        stride: f[4],
        padding: f[5],
        output_padding: f[6],
        has_bn,
        activation,
    })
}

pub fn to_bytes(model: &TrainedModel) -> Vec<u8> {
    let spec = model.spec();
    let mut w = Writer(MAGIC.to_vec());
    w.0.extend(FORMAT_VERSION.to_le_bytes());
    for v in [
        spec.height,
        spec.width,
        spec.channels,
        spec.feature_len,
        spec.encoder.len(),
        spec.decoder.len(),
    ] {
        w.u32(v);
    }
    for (_, l) in spec.layer_specs() {
        write_layer_spec(&mut w, l);
    }
    for (_, _, p) in model.layers() {
        w.blob(p.weight.data());
        if let Some(bn) = &p.bn {
            w.blob(bn.eta.data());
            w.blob(bn.beta.data());
            w.blob(&bn.running_mean);
            w.blob(&bn.running_var);
            w.f64(bn.eps);
            w.f64(bn.momentum);
        }
    }
    w.0
}

pub fn from_bytes(bytes: &[u8]) -> Result<TrainedModel> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(4, "magic")? != MAGIC {
        return Err(ContainerError::BadMagic.into());
    }
    let version = r.u16("version")?;
    if version != FORMAT_VERSION {
        return Err(ContainerError::Version {
            found: version,
            expected: FORMAT_VERSION,
        }
        .into());
    }
    let mut head = [0usize; 6];
    for v in head.iter_mut() {
        *v = r.u32("header")?;
    }
    let [height, width, channels, feature_len, n_enc, n_dec] = head;
    let encoder = (0..n_enc).map(|_| read_layer_spec(&mut r)).collect::<std::result::Result<Vec<_>, _>>()?;
    let decoder = (0..n_dec).map(|_| read_layer_spec(&mut r)).collect::<std::result::Result<Vec<_>, _>>()?;
    let spec = ModelSpec {
        height,
        width,
        channels,
        encoder,
        decoder,
        feature_len,
    };
    let mut read_params = |l: &LayerSpec| -> Result<LayerParams> {
        let weight = Tensor::parameter(l.weight_shape(), r.blob("weights")?)
            .map_err(|e| ContainerError::Malformed(e.to_string()))?;
        let bn = if l.has_bn {
            let eta = r.blob("batch-norm scale")?;
            let beta = r.blob("batch-norm shift")?;
            let running_mean = r.blob("running mean")?;
            let running_var = r.blob("running variance")?;
            let eps = r.f64("batch-norm epsilon")?;
            let momentum = r.f64("batch-norm momentum")?;
            if eta.is_empty() {
                return Err(ContainerError::Malformed("empty batch-norm layer".into()).into());
            }
            let param = |v: Vec<f64>| {
                Tensor::parameter(vec![v.len()], v).map_err(|e| ContainerError::Malformed(e.to_string()))
            };
            Some(BatchNormState {
                eta: param(eta)?,
                beta: param(beta)?,
                running_mean,
                running_var,
                eps,
                momentum,
            })
        } else {
            None
        };
        Ok(LayerParams { weight, bn })
    };
    let enc_params = spec.encoder.iter().map(&mut read_params).collect::<Result<Vec<_>>>()?;
    let dec_params = spec.decoder.iter().map(&mut read_params).collect::<Result<Vec<_>>>()?;
    if r.pos != bytes.len() {
        return Err(ContainerError::Malformed(format!("{} trailing bytes", bytes.len() - r.pos)).into());
    }
    TrainedModel::from_parts(spec, enc_params, dec_params).map_err(|e| match e {
        Error::Model(m) => ContainerError::Malformed(m).into(),
        other => other,
    })
}

pub fn save_model(model: &TrainedModel, path: &Path) -> Result<()> {
    fs::write(path, to_bytes(model)).map_err(|e| Error::io(path, e))
}

pub fn load_model(path: &Path) -> Result<TrainedModel> {
    from_bytes(&fs::read(path).map_err(|e| Error::io(path, e))?)
}
