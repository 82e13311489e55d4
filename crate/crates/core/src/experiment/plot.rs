//! Tidy per-figure CSV files derived from sweep records.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use super::sweep::{fmt_f64, ExperimentRecord};
use crate::error::{Error, Result};

/// Pruning rate the `fig5-*` files are restricted to.
pub const FIG5_GAMMA: f64 = 0.7;

#[derive(Debug, Clone, PartialEq)]
pub struct PlotOptions {
    pub train_snr_db: f64,
    /// Labels of the two models in `fig7-compare`.
    pub compare: Option<(String, String)>,
}

fn write(path: &Path, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    let err = |e: csv::Error| Error::Config(format!("{}: {e}", path.display()));
    let mut w = csv::Writer::from_path(path).map_err(err)?;
    w.write_record(header).map_err(err)?;
    for r in rows {
        w.write_record(r).map_err(err)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn same_gamma(a: Option<f64>, b: f64) -> bool {
    a.is_some_and(|g| (g - b).abs() < 1e-9)
}

fn curve_rows(records: &[&ExperimentRecord], value: fn(&ExperimentRecord) -> Option<f64>) -> Vec<Vec<String>> {
    records
        .iter()
        .map(|r| {
            vec![
                r.model.clone(),
                r.scheme.clone(),
                r.gamma.map(|g| format!("{g:.2}")).unwrap_or_default(),
                r.m.clone(),
                fmt_f64(r.snr_db),
                r.seed.to_string(),
                value(r).map(fmt_f64).unwrap_or_default(),
            ]
        })
        .collect()
}

const CURVE_HEADER: [&str; 7] = ["model", "scheme", "gamma", "m", "snr_db", "seed", "value"];

/// Writes `fig4-psnr.csv`, `fig4-ssim.csv`, `fig5-psnr.csv`, `fig5-ssim.csv`,
/// `fig7-compare.csv` and `table2.csv` into `dir` and returns their paths.
pub fn emit_plotdata(records: &[ExperimentRecord], dir: &Path, opts: &PlotOptions) -> Result<Vec<PathBuf>> {
    let ok: Vec<&ExperimentRecord> = records.iter().filter(|r| r.is_ok()).collect();
    let fig4: Vec<&ExperimentRecord> = ok
        .iter()
        .copied()
        .filter(|r| r.gamma.is_some() || r.scheme == "separate")
        .collect();
    let fig5: Vec<&ExperimentRecord> = ok.iter().copied().filter(|r| same_gamma(r.gamma, FIG5_GAMMA)).collect();
    let psnr = |r: &ExperimentRecord| r.psnr;
    let ssim = |r: &ExperimentRecord| r.ssim;
    let mut written = Vec::new();
    let mut emit = |name: &str, header: &[&str], rows: Vec<Vec<String>>| -> Result<()> {
        let path = dir.join(name);
        write(&path, header, &rows)?;
        written.push(path);
        Ok(())
    };
    emit("fig4-psnr.csv", &CURVE_HEADER, curve_rows(&fig4, psnr))?;
    emit("fig4-ssim.csv", &CURVE_HEADER, curve_rows(&fig4, ssim))?;
    emit("fig5-psnr.csv", &CURVE_HEADER, curve_rows(&fig5, psnr))?;
    emit("fig5-ssim.csv", &CURVE_HEADER, curve_rows(&fig5, ssim))?;

    let compare: Vec<Vec<String>> = match &opts.compare {
        Some((pruned, unpruned)) => ok
            .iter()
            .filter(|r| r.scheme == "analog" && (&r.model == pruned || &r.model == unpruned))
            .map(|r| {
                vec![
                    r.model.clone(),
                    r.params.map(|p| p.to_string()).unwrap_or_default(),
                    fmt_f64(r.snr_db),
                    r.seed.to_string(),
                    r.psnr.map(fmt_f64).unwrap_or_default(),
                    r.ssim.map(fmt_f64).unwrap_or_default(),
                ]
            })
            .collect(),
        None => Vec::new(),
    };
    emit(
        "fig7-compare.csv",
        &["model", "params", "snr_db", "seed", "psnr", "ssim"],
        compare,
    )?;

    // One row per pruning rate: analog path at the training SNR, averaged
    // over seeds.
    let mut table: BTreeMap<i64, (f64, usize, u64, Vec<f64>, Vec<f64>)> = BTreeMap::new();
    for r in ok
        .iter()
        .filter(|r| r.scheme == "analog" && r.snr_db == opts.train_snr_db && r.gamma.is_some())
    {
        let g = r.gamma.unwrap();
        let e = table
            .entry((g * 1e6).round() as i64)
            .or_insert((g, r.params.unwrap_or(0), r.macs.unwrap_or(0), Vec::new(), Vec::new()));
        e.3.extend(r.psnr);
        e.4.extend(r.ssim);
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let rows = table
        .values()
        .map(|(g, p, m, ps, ss)| {
            vec![
                format!("{g:.2}"),
                p.to_string(),
                m.to_string(),
                fmt_f64(mean(ps)),
                fmt_f64(mean(ss)),
            ]
        })
        .collect();
    emit("table2.csv", &["gamma", "params", "macs", "psnr", "ssim"], rows)?;
    Ok(written)
}
