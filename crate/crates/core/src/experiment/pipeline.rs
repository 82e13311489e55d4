//! Seeded orchestration: pretrain → sparse train → per-γ prune and
//! fine-tune → sweep → plot data. Every stage reads and writes artifacts in
//! the output directory so the CLI can run them one at a time.

use std::fs;
use std::path::{Path, PathBuf};

use super::config::RunConfig;
use super::plot::{emit_plotdata, PlotOptions};
use super::sweep::{
    cell_seed, evaluate_cell, sweep, write_diagnostics, write_records, ExperimentRecord, Scheme, SweepModel,
    SweepPlan,
};
use crate::baseline::SeparateConfig;
use crate::channel::ChannelModel;
use crate::container::{load_model, save_model};
use crate::dataset::{ingest_dataset, synthetic_corpus, ImageSet};
use crate::error::{Error, Result};
use crate::model::{count_params_and_macs, ModelSpec, TrainedModel};
use crate::pruning::{prune_and_fine_tune, pruning_report, pruning_report_csv, SparsityConfig};
use crate::rng::{derive_seed, tag};
use crate::train::{pretrain, sparse_train, TrainConfig, TrainReport};

pub const PRETRAINED: &str = "pretrained";
pub const SPARSE: &str = "sparse";
pub const COMPARE: &str = "compare";

/// Label of the model pruned at rate `gamma`, e.g. `g0.50`.
pub fn gamma_label(gamma: f64) -> String {
    format!("g{gamma:.2}")
}

pub fn model_path(dir: &Path, label: &str) -> PathBuf {
    dir.join(format!("model-{label}.jscc"))
}

#[derive(Debug, Clone)]
pub struct Corpus {
    pub train: ImageSet,
    /// Held-out images for checkpoint selection and the sweep.
    pub holdout: ImageSet,
}

/// Loads the configured dataset (or a synthetic one) and holds out the
/// first `holdout` images.
pub fn load_corpus(cfg: &RunConfig) -> Result<Corpus> {
    let all = match &cfg.dataset {
        Some(dir) => ingest_dataset(dir, cfg.width, cfg.height)?,
        None => synthetic_corpus(cfg.synthetic_images, cfg.width, cfg.height, tag("synthetic"))?,
    };
    let (holdout, train) = all.split(cfg.holdout)?;
    Ok(Corpus { train, holdout })
}

/// Training settings for one stage; each stage draws its own seed.
pub fn stage_config(cfg: &RunConfig, stage: &str, epochs: usize, lambda: f64) -> TrainConfig {
    TrainConfig {
        epochs,
        batch_size: cfg.batch_size,
        learning_rate: cfg.learning_rate,
        snr_db: cfg.train_snr_db,
        fading: cfg.fading,
        lambda,
        seed: derive_seed(cfg.seed, &[tag(stage)]),
        ..TrainConfig::default()
    }
}

pub fn sparsity_config(cfg: &RunConfig, gamma: f64) -> SparsityConfig {
    SparsityConfig {
        lambda: cfg.lambda,
        sparse_epochs: cfg.sparse_epochs,
        pruning_rounds: cfg.pruning_rounds,
        finetune_epochs: cfg.finetune_epochs,
        gamma,
    }
}

/// Validation metrics recorded for a model: the analog path at the
/// training SNR on the held-out set, through the same cell evaluation and
/// seed as the sweep.
pub fn validation_metrics(model: &TrainedModel, holdout: &ImageSet, cfg: &RunConfig) -> Result<(f64, f64)> {
    let channel = ChannelModel {
        fading: cfg.fading,
        snr_db: cfg.train_snr_db,
    };
    let r = evaluate_cell(
        Some(model),
        holdout,
        Scheme::Analog,
        &channel,
        cell_seed(cfg.seed, cfg.train_snr_db),
        "validation",
    )?;
    Ok((r.metrics.mean_psnr, r.metrics.mean_ssim))
}

/// Accumulates `training.csv` rows: stage, round, epoch, train MSE, and
/// validation MSE where one was measured.
#[derive(Debug, Default, Clone)]
pub struct TrainingLog {
    rows: Vec<[String; 5]>,
}

impl TrainingLog {
    fn add(&mut self, stage: &str, round: usize, report: &TrainReport, val: Option<&[f64]>) {
        for (e, loss) in report.epoch_losses.iter().enumerate() {
            let v = val.and_then(|v| v.get(e + 1)).map(|v| format!("{v:.8}")).unwrap_or_default();
            self.rows
                .push([stage.into(), round.to_string(), (e + 1).to_string(), format!("{loss:.8}"), v]);
        }
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut s = String::from("stage,round,epoch,train_mse,val_mse\n");
        for r in &self.rows {
            s += &r.join(",");
            s.push('\n');
        }
        fs::write(path, s).map_err(|e| Error::io(path, e))
    }
}

/// Summary of one saved model, a row of `models.csv`.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelSummary {
    pub label: String,
    pub gamma: Option<f64>,
    pub feature_len: usize,
    pub params: usize,
    pub macs: u64,
    pub val_psnr: f64,
    pub val_ssim: f64,
}

impl ModelSummary {
    pub fn new(label: &str, gamma: Option<f64>, model: &TrainedModel, corpus: &Corpus, cfg: &RunConfig) -> Result<Self> {
        let (params, macs) = count_params_and_macs(model)?;
        let (val_psnr, val_ssim) = validation_metrics(model, &corpus.holdout, cfg)?;
        Ok(ModelSummary {
            label: label.into(),
            gamma,
            feature_len: model.spec().feature_len,
            params,
            macs,
            val_psnr,
            val_ssim,
        })
    }
}

pub fn write_model_summaries(path: &Path, rows: &[ModelSummary]) -> Result<()> {
    let mut s = String::from("model,gamma,feature_len,params,macs,val_psnr,val_ssim\n");
    for r in rows {
        s += &format!(
            "{},{},{},{},{},{:.6},{:.6}\n",
            r.label,
            r.gamma.map(|g| format!("{g:.2}")).unwrap_or_default(),
            r.feature_len,
            r.params,
            r.macs,
            r.val_psnr,
            r.val_ssim
        );
    }
    fs::write(path, s).map_err(|e| Error::io(path, e))
}

fn save(model: &TrainedModel, dir: &Path, label: &str) -> Result<()> {
    save_model(model, &model_path(dir, label))
}

/// Pretraining followed by sparse training. Saves both checkpoints and
/// returns the sparse one.
pub fn train_stage(cfg: &RunConfig, corpus: &Corpus, log: &mut TrainingLog) -> Result<TrainedModel> {
    let mut model = TrainedModel::init(cfg.model_spec(), derive_seed(cfg.seed, &[tag("init")]))?;
    let report = pretrain(&mut model, &corpus.train, &stage_config(cfg, "pretrain", cfg.pretrain_epochs, 0.0))
        .map_err(|e| e.in_stage("pretrain"))?;
    log.add("pretrain", 0, &report, None);
    save(&model, &cfg.output, PRETRAINED)?;
    let report = sparse_train(
        &mut model,
        &corpus.train,
        &stage_config(cfg, "sparse", cfg.sparse_epochs, cfg.lambda),
    )
    .map_err(|e| e.in_stage("sparse training"))?;
    log.add("sparse", 0, &report, None);
    save(&model, &cfg.output, SPARSE)?;
    Ok(model)
}

/// One prune / fine-tune branch per configured γ, all starting from the
/// same sparse checkpoint. `γ = 0` keeps the sparse model as is.
pub fn prune_stage(
    cfg: &RunConfig,
    corpus: &Corpus,
    sparse: &TrainedModel,
    log: &mut TrainingLog,
) -> Result<Vec<(f64, TrainedModel)>> {
    let mut out = Vec::new();
    for &gamma in &cfg.gammas {
        let label = gamma_label(gamma);
        let train_cfg = stage_config(cfg, &format!("finetune-{label}"), cfg.finetune_epochs, 0.0);
        let (model, rounds) = prune_and_fine_tune(
            sparse,
            &sparsity_config(cfg, gamma),
            &train_cfg,
            &corpus.train,
            &corpus.holdout,
        )
        .map_err(|e| e.in_stage(format!("prune {label}")))?;
        for r in &rounds {
            log.add(&format!("finetune-{label}"), r.round, &r.fine_tune.train, Some(&r.fine_tune.val_mse));
        }
        let report = pruning_csv_path(&cfg.output, &label);
        fs::write(&report, pruning_report_csv(&pruning_report(sparse, &model))).map_err(|e| Error::io(&report, e))?;
        save(&model, &cfg.output, &label)?;
        out.push((gamma, model));
    }
    Ok(out)
}

fn pruning_csv_path(dir: &Path, label: &str) -> PathBuf {
    dir.join(format!("pruning-{label}.csv"))
}

/// Unpruned architecture at `feature_channels` whose hidden widths are a
/// common rescaling of `base`, chosen to bring the parameter count closest
/// to `target`.
pub fn matched_spec(cfg: &RunConfig, feature_channels: usize, target: usize) -> Result<ModelSpec> {
    let mut best: Option<(usize, ModelSpec)> = None;
    for step in 1..=256 {
        let s = step as f64 / 64.0;
        let widths = cfg.widths.map(|w| ((w as f64 * s).round() as usize).max(1));
        let mut c = cfg.clone();
        c.widths = widths;
        c.feature_channels = feature_channels;
        let spec = c.model_spec();
        let diff = spec.param_count().abs_diff(target);
        if best.as_ref().is_none_or(|(d, _)| diff < *d) {
            best = Some((diff, spec));
        }
    }
    let spec = best.unwrap().1;
    spec.validate()?;
    Ok(spec)
}

/// Trains the unpruned comparison model for as many epochs as the pruned
/// branch received in total.
pub fn compare_stage(cfg: &RunConfig, corpus: &Corpus, target_params: usize, log: &mut TrainingLog) -> Result<TrainedModel> {
    let spec = matched_spec(cfg, cfg.compare_feature_channels, target_params)?;
    let epochs = cfg.pretrain_epochs + cfg.sparse_epochs + cfg.pruning_rounds * cfg.finetune_epochs;
    let mut model = TrainedModel::init(spec, derive_seed(cfg.seed, &[tag("init-compare")]))?;
    let report = pretrain(&mut model, &corpus.train, &stage_config(cfg, COMPARE, epochs, 0.0))
        .map_err(|e| e.in_stage("compare training"))?;
    log.add(COMPARE, 0, &report, None);
    save(&model, &cfg.output, COMPARE)?;
    Ok(model)
}

/// SNR list of the sweep: the configured values plus the training SNR.
pub fn sweep_snrs(cfg: &RunConfig) -> Vec<f64> {
    let mut snrs = cfg.snrs_db.clone();
    if !snrs.contains(&cfg.train_snr_db) {
        snrs.push(cfg.train_snr_db);
    }
    snrs.sort_by(f64::total_cmp);
    snrs
}

/// Baseline sized to the channel uses of the unpruned model.
pub fn baseline_config(cfg: &RunConfig) -> Result<Option<SeparateConfig>> {
    if !cfg.baseline {
        return Ok(None);
    }
    let symbols = cfg.model_spec().feature_len;
    SeparateConfig::for_budget(cfg.width, cfg.height, symbols, cfg.baseline_code, cfg.baseline_order).map(Some)
}

/// Loads the models the sweep covers from the output directory; missing
/// files become `model: None`.
pub fn load_sweep_models(cfg: &RunConfig) -> Vec<SweepModel> {
    let mut labels: Vec<(String, Option<f64>)> = cfg.gammas.iter().map(|&g| (gamma_label(g), Some(g))).collect();
    if cfg.compare {
        labels.push((COMPARE.into(), None));
    }
    labels
        .into_iter()
        .map(|(label, gamma)| {
            let model = match load_model(&model_path(&cfg.output, &label)) {
                Ok(m) => Some(m),
                Err(e) => {
                    log::warn!("cannot load model `{label}`: {e}");
                    None
                }
            };
            SweepModel { label, gamma, model }
        })
        .collect()
}

pub fn plot_options(cfg: &RunConfig) -> PlotOptions {
    PlotOptions {
        train_snr_db: cfg.train_snr_db,
        compare: cfg.compare.then(|| (gamma_label(cfg.compare_gamma), COMPARE.to_string())),
    }
}

fn thread_pool(cfg: &RunConfig) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.threads)
        .build()
        .map_err(|e| Error::Config(format!("cannot start sweep workers: {e}")))
}

/// Sweeps `models` on the held-out set and writes `records.csv`,
/// `diagnostics.csv` and the plot files.
pub fn sweep_stage(cfg: &RunConfig, corpus: &Corpus, models: &[SweepModel]) -> Result<Vec<ExperimentRecord>> {
    let plan = SweepPlan {
        orders: cfg.orders.clone(),
        snrs_db: sweep_snrs(cfg),
        fading: cfg.fading,
        baseline: baseline_config(cfg)?,
        seed: cfg.seed,
    };
    let (records, diagnostics) = thread_pool(cfg)?
        .install(|| sweep(models, &corpus.holdout, &plan))
        .map_err(|e| e.in_stage("sweep"))?;
    write_records(&cfg.output.join("records.csv"), &records)?;
    write_diagnostics(&cfg.output.join("diagnostics.csv"), &diagnostics)?;
    emit_plotdata(&records, &cfg.output, &plot_options(cfg))?;
    Ok(records)
}

#[derive(Debug, Clone)]
pub struct Artifacts {
    pub models: Vec<ModelSummary>,
    pub records: Vec<ExperimentRecord>,
}

pub fn prepare_output(cfg: &RunConfig) -> Result<()> {
    fs::create_dir_all(&cfg.output).map_err(|e| Error::io(&cfg.output, e))?;
    let path = cfg.output.join("config.txt");
    fs::write(&path, cfg.to_text()).map_err(|e| Error::io(&path, e))
}

/// Runs every stage. On failure the training log gathered so far is still
/// written before the error is returned.
pub fn run_pipeline(cfg: &RunConfig) -> Result<Artifacts> {
    cfg.validate()?;
    prepare_output(cfg)?;
    let corpus = load_corpus(cfg).map_err(|e| e.in_stage("ingest"))?;
    let mut log = TrainingLog::default();
    let result = run_stages(cfg, &corpus, &mut log);
    log.write(&cfg.output.join("training.csv"))?;
    result
}

fn run_stages(cfg: &RunConfig, corpus: &Corpus, log: &mut TrainingLog) -> Result<Artifacts> {
    let sparse = train_stage(cfg, corpus, log)?;
    let pruned = prune_stage(cfg, corpus, &sparse, log)?;
    let mut summaries = Vec::new();
    let mut sweep_models = Vec::new();
    for (gamma, model) in &pruned {
        let label = gamma_label(*gamma);
        summaries.push(ModelSummary::new(&label, Some(*gamma), model, corpus, cfg)?);
        sweep_models.push(SweepModel {
            label,
            gamma: Some(*gamma),
            model: Some(model.clone()),
        });
    }
    if cfg.compare {
        let target = match pruned.iter().find(|(g, _)| (g - cfg.compare_gamma).abs() < 1e-9) {
            Some((_, m)) => m.param_count(),
            None => {
                return Err(Error::Config(format!(
                    "comparison needs gamma {} in `gammas`",
                    cfg.compare_gamma
                )))
            }
        };
        let model = compare_stage(cfg, corpus, target, log)?;
        summaries.push(ModelSummary::new(COMPARE, None, &model, corpus, cfg)?);
        sweep_models.push(SweepModel {
            label: COMPARE.into(),
            gamma: None,
            model: Some(model),
        });
    }
    write_model_summaries(&cfg.output.join("models.csv"), &summaries)?;
    let records = sweep_stage(cfg, corpus, &sweep_models)?;
    Ok(Artifacts {
        models: summaries,
        records,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matched_spec_lands_near_target() {
        let cfg = RunConfig::default();
        let target = ModelSpec::desk(32).param_count() / 2;
        let spec = matched_spec(&cfg, 16, target).unwrap();
        assert_eq!(spec.feature_len, 16 * 64);
        let rel = spec.param_count().abs_diff(target) as f64 / target as f64;
        assert!(rel < 0.05, "{} vs {target}", spec.param_count());
    }

    #[test]
    fn sweep_snrs_include_training_snr() {
        let cfg = RunConfig::default();
        let snrs = sweep_snrs(&cfg);
        assert_eq!(snrs.len(), 10);
        assert_eq!(*snrs.last().unwrap(), 25.0);
    }
}
