//! Factorial evaluation of trained models and the separate baseline.

use std::path::Path;

use rayon::prelude::*;

use crate::baseline::{separate_transmit, SeparateConfig};
use crate::channel::{analog_inference, digital_inference, ChainDiagnostics, ChannelModel, Fading};
use crate::dataset::ImageSet;
use crate::error::{Error, Result};
use crate::metrics::{batch_metrics, image_pairs, BatchMetrics, SsimConfig};
use crate::model::{count_params_and_macs, TrainedModel};
use crate::rng::{derive_seed, tag};

/// Images evaluated per inference call; also the unit of seed derivation.
pub const CHUNK: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Scheme {
    Analog,
    Digital(usize),
    Separate(SeparateConfig),
}

impl Scheme {
    pub fn name(&self) -> &'static str {
        match self {
            Scheme::Analog => "analog",
            Scheme::Digital(_) => "digital",
            Scheme::Separate(_) => "separate",
        }
    }

    fn order_label(&self) -> String {
        match self {
            Scheme::Analog => "analog".into(),
            Scheme::Digital(m) => m.to_string(),
            Scheme::Separate(c) => c.order.to_string(),
        }
    }
}

/// Seed shared by every cell at one SNR, so analog, digital and separate
/// cells see the same fading gains image by image.
pub fn cell_seed(master: u64, snr_db: f64) -> u64 {
    derive_seed(master, &[tag("sweep"), snr_db.to_bits()])
}

/// Seed of the channel seen by image `i` of a cell.
pub fn image_seed(cell: u64, i: usize) -> u64 {
    derive_seed(derive_seed(cell, &[(i / CHUNK) as u64]), &[(i % CHUNK) as u64])
}

/// One row of `records.csv`.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentRecord {
    pub model: String,
    pub scheme: String,
    pub gamma: Option<f64>,
    /// Modulation order, or `"analog"`.
    pub m: String,
    pub snr_db: f64,
    pub seed: u64,
    pub psnr: Option<f64>,
    pub ssim: Option<f64>,
    pub ser: Option<f64>,
    pub ber: Option<f64>,
    /// Fraction of images the baseline decoded without falling back.
    pub decoded: Option<f64>,
    pub params: Option<usize>,
    pub macs: Option<u64>,
    pub status: String,
}

pub const RECORD_HEADER: [&str; 14] = [
    "model", "scheme", "gamma", "m", "snr_db", "seed", "psnr", "ssim", "ser", "ber", "decoded", "params", "macs",
    "status",
];

/// Per-image chain statistics, one row of `diagnostics.csv`.
#[derive(Debug, Clone, PartialEq)]
pub struct DiagnosticRow {
    pub model: String,
    pub scheme: String,
    pub m: usize,
    pub snr_db: f64,
    pub image: usize,
    pub chain: Option<ChainDiagnostics>,
    pub bit_error_rate: Option<f64>,
    pub decoded: Option<bool>,
    pub gain_abs: f64,
}

pub const DIAGNOSTIC_HEADER: [&str; 14] = [
    "model",
    "scheme",
    "m",
    "snr_db",
    "image",
    "quant_mean_abs",
    "quant_max_abs",
    "demod_mean_abs",
    "demod_max_abs",
    "symbol_error_rate",
    "bit_error_rate",
    "gain_abs",
    "resampled",
    "decoded",
];

pub(crate) fn fmt_f64(v: f64) -> String {
    if v.is_infinite() {
        if v > 0.0 { "inf" } else { "-inf" }.into()
    } else {
        format!("{v:.6}")
    }
}

fn fmt_opt<T>(v: Option<T>, f: impl Fn(T) -> String) -> String {
    v.map(f).unwrap_or_default()
}

fn parse_opt<T: std::str::FromStr>(s: &str) -> Result<Option<T>> {
    if s.is_empty() {
        return Ok(None);
    }
    s.parse()
        .map(Some)
        .map_err(|_| Error::Config(format!("bad record field `{s}`")))
}

fn parse_f64(s: &str) -> Result<Option<f64>> {
    match s {
        "inf" => Ok(Some(f64::INFINITY)),
        "-inf" => Ok(Some(f64::NEG_INFINITY)),
        _ => parse_opt(s),
    }
}

impl ExperimentRecord {
    pub fn fields(&self) -> [String; 14] {
        [
            self.model.clone(),
            self.scheme.clone(),
            fmt_opt(self.gamma, |g| format!("{g:.2}")),
            self.m.clone(),
            fmt_f64(self.snr_db),
            self.seed.to_string(),
            fmt_opt(self.psnr, fmt_f64),
            fmt_opt(self.ssim, fmt_f64),
            fmt_opt(self.ser, fmt_f64),
            fmt_opt(self.ber, fmt_f64),
            fmt_opt(self.decoded, fmt_f64),
            fmt_opt(self.params, |p| p.to_string()),
            fmt_opt(self.macs, |p| p.to_string()),
            self.status.clone(),
        ]
    }

    pub fn from_fields(f: &csv::StringRecord) -> Result<Self> {
        if f.len() != RECORD_HEADER.len() {
            return Err(Error::Config(format!("record with {} fields", f.len())));
        }
        Ok(ExperimentRecord {
            model: f[0].to_string(),
            scheme: f[1].to_string(),
            gamma: parse_f64(&f[2])?,
            m: f[3].to_string(),
            snr_db: parse_f64(&f[4])?.ok_or_else(|| Error::Config("record without SNR".into()))?,
            seed: parse_opt(&f[5])?.unwrap_or(0),
            psnr: parse_f64(&f[6])?,
            ssim: parse_f64(&f[7])?,
            ser: parse_f64(&f[8])?,
            ber: parse_f64(&f[9])?,
            decoded: parse_f64(&f[10])?,
            params: parse_opt(&f[11])?,
            macs: parse_opt(&f[12])?,
            status: f[13].to_string(),
        })
    }

    pub fn is_ok(&self) -> bool {
        self.status == "ok"
    }
}

impl DiagnosticRow {
    fn fields(&self) -> [String; 14] {
        let c = self.chain.as_ref();
        [
            self.model.clone(),
            self.scheme.clone(),
            self.m.to_string(),
            fmt_f64(self.snr_db),
            self.image.to_string(),
            fmt_opt(c.map(|c| c.quant_mean_abs), fmt_f64),
            fmt_opt(c.map(|c| c.quant_max_abs), fmt_f64),
            fmt_opt(c.map(|c| c.demod_mean_abs), fmt_f64),
            fmt_opt(c.map(|c| c.demod_max_abs), fmt_f64),
            fmt_opt(c.map(|c| c.symbol_error_rate), fmt_f64),
            fmt_opt(self.bit_error_rate, fmt_f64),
            fmt_f64(self.gain_abs),
            fmt_opt(c.map(|c| c.resampled), |r| r.to_string()),
            fmt_opt(self.decoded, |d| d.to_string()),
        ]
    }
}

fn write_rows(path: &Path, header: &[&str], rows: impl Iterator<Item = Vec<String>>) -> Result<()> {
    let io = |e: csv::Error| Error::Config(format!("{}: {e}", path.display()));
    let mut w = csv::Writer::from_path(path).map_err(io)?;
    w.write_record(header).map_err(io)?;
    for r in rows {
        w.write_record(&r).map_err(io)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn write_records(path: &Path, records: &[ExperimentRecord]) -> Result<()> {
    write_rows(path, &RECORD_HEADER, records.iter().map(|r| r.fields().to_vec()))
}

pub fn read_records(path: &Path) -> Result<Vec<ExperimentRecord>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    r.records()
        .map(|row| {
            let row = row.map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
            ExperimentRecord::from_fields(&row)
        })
        .collect()
}

pub fn write_diagnostics(path: &Path, rows: &[DiagnosticRow]) -> Result<()> {
    write_rows(path, &DIAGNOSTIC_HEADER, rows.iter().map(|r| r.fields().to_vec()))
}

/// Metrics of one cell.
#[derive(Debug, Clone, PartialEq)]
pub struct CellResult {
    pub metrics: BatchMetrics,
    pub ser: Option<f64>,
    pub ber: Option<f64>,
    pub decoded: Option<f64>,
    pub diagnostics: Vec<DiagnosticRow>,
}

fn mean(v: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = v.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    s / n as f64
}

/// Evaluates one model (or the baseline, which ignores `model`) on every
/// image of `data` through `scheme` at one channel. Image `i` sees the
/// channel seeded by [`image_seed`]`(seed, i)`.
pub fn evaluate_cell(
    model: Option<&TrainedModel>,
    data: &ImageSet,
    scheme: Scheme,
    channel: &ChannelModel,
    seed: u64,
    label: &str,
) -> Result<CellResult> {
    let ssim_cfg = SsimConfig::default();
    let dims = data.dims();
    let mut pairs = Vec::with_capacity(data.len());
    let mut diagnostics = Vec::new();
    let mut ser = None;
    let mut ber = None;
    let mut decoded = None;
    let idx: Vec<usize> = (0..data.len()).collect();
    match scheme {
        Scheme::Analog | Scheme::Digital(_) => {
            let model = model.ok_or_else(|| Error::Config("JSCC cell without a model".into()))?;
            for (c, chunk) in idx.chunks(CHUNK).enumerate() {
                let x = data.batch(chunk)?;
                let chunk_seed = derive_seed(seed, &[c as u64]);
                let out = match scheme {
                    Scheme::Digital(m) => {
                        let (out, diag) = digital_inference(model, &x, m, channel, chunk_seed)?;
                        for (j, d) in diag.into_iter().enumerate() {
                            diagnostics.push(DiagnosticRow {
                                model: label.into(),
                                scheme: scheme.name().into(),
                                m,
                                snr_db: channel.snr_db,
                                image: chunk[j],
                                gain_abs: d.gain_abs,
                                chain: Some(d),
                                bit_error_rate: None,
                                decoded: None,
                            });
                        }
                        out
                    }
                    _ => analog_inference(model, &x, channel, chunk_seed)?,
                };
                pairs.extend(image_pairs(x.data(), out.data(), dims, &ssim_cfg)?);
            }
            if let Scheme::Digital(_) = scheme {
                ser = Some(mean(diagnostics.iter().map(|d| d.chain.as_ref().unwrap().symbol_error_rate)));
            }
        }
        Scheme::Separate(cfg) => {
            let mut recon = Vec::with_capacity(data.data().len());
            for &i in &idx {
                let out = separate_transmit(data.image(i), data.width, data.height, &cfg, channel, image_seed(seed, i))?;
                diagnostics.push(DiagnosticRow {
                    model: label.into(),
                    scheme: scheme.name().into(),
                    m: cfg.order,
                    snr_db: channel.snr_db,
                    image: i,
                    chain: None,
                    bit_error_rate: Some(out.channel_ber),
                    decoded: Some(out.decoded()),
                    gain_abs: out.gain_abs,
                });
                recon.extend(out.reconstruction);
            }
            pairs = image_pairs(data.data(), &recon, dims, &ssim_cfg)?;
            ber = Some(mean(diagnostics.iter().map(|d| d.bit_error_rate.unwrap())));
            decoded = Some(mean(diagnostics.iter().map(|d| d.decoded.unwrap() as u8 as f64)));
        }
    }
    Ok(CellResult {
        metrics: batch_metrics(&pairs)?,
        ser,
        ber,
        decoded,
        diagnostics,
    })
}

/// A model entering the sweep. `model = None` marks an artifact that could
/// not be loaded; its cells become warning rows.
#[derive(Debug, Clone)]
pub struct SweepModel {
    pub label: String,
    pub gamma: Option<f64>,
    pub model: Option<TrainedModel>,
}

#[derive(Debug, Clone)]
pub struct SweepPlan {
    pub orders: Vec<usize>,
    pub snrs_db: Vec<f64>,
    pub fading: Fading,
    pub baseline: Option<SeparateConfig>,
    pub seed: u64,
}

enum Cell<'a> {
    Model(&'a SweepModel, Scheme, f64),
    Baseline(SeparateConfig, f64),
}

/// Runs every (model, scheme, SNR) cell in parallel. Output order and
/// values do not depend on the number of worker threads.
pub fn sweep(
    models: &[SweepModel],
    data: &ImageSet,
    plan: &SweepPlan,
) -> Result<(Vec<ExperimentRecord>, Vec<DiagnosticRow>)> {
    let mut cells = Vec::new();
    for m in models {
        let schemes = std::iter::once(Scheme::Analog).chain(plan.orders.iter().map(|&o| Scheme::Digital(o)));
        for scheme in schemes {
            for &snr in &plan.snrs_db {
                cells.push(Cell::Model(m, scheme, snr));
            }
        }
    }
    if let Some(b) = plan.baseline {
        for &snr in &plan.snrs_db {
            cells.push(Cell::Baseline(b, snr));
        }
    }
    let results: Vec<Result<(ExperimentRecord, Vec<DiagnosticRow>)>> = cells
        .par_iter()
        .map(|cell| {
            let (label, gamma, scheme, snr, model) = match cell {
                Cell::Model(m, s, snr) => (m.label.as_str(), m.gamma, *s, *snr, Some(m)),
                Cell::Baseline(b, snr) => ("separate", None, Scheme::Separate(*b), *snr, None),
            };
            let mut record = ExperimentRecord {
                model: label.into(),
                scheme: scheme.name().into(),
                gamma,
                m: scheme.order_label(),
                snr_db: snr,
                seed: plan.seed,
                psnr: None,
                ssim: None,
                ser: None,
                ber: None,
                decoded: None,
                params: None,
                macs: None,
                status: "ok".into(),
            };
            let trained = match model {
                Some(SweepModel { model: None, .. }) => {
                    log::warn!("model `{label}` missing; skipping {} at {snr} dB", scheme.name());
                    record.status = "skipped: model missing".into();
                    return Ok((record, Vec::new()));
                }
                Some(SweepModel { model: Some(t), .. }) => {
                    let (p, m) = count_params_and_macs(t)?;
                    record.params = Some(p);
                    record.macs = Some(m);
                    Some(t)
                }
                None => None,
            };
            let channel = ChannelModel {
                fading: plan.fading,
                snr_db: snr,
            };
            let r = evaluate_cell(trained, data, scheme, &channel, cell_seed(plan.seed, snr), label)?;
            record.psnr = Some(r.metrics.mean_psnr);
            record.ssim = Some(r.metrics.mean_ssim);
            record.ser = r.ser;
            record.ber = r.ber;
            record.decoded = r.decoded;
            Ok((record, r.diagnostics))
        })
        .collect();
    let mut records = Vec::with_capacity(results.len());
    let mut diagnostics = Vec::new();
    for r in results {
        let (rec, diag) = r?;
        records.push(rec);
        diagnostics.extend(diag);
    }
    Ok((records, diagnostics))
}
