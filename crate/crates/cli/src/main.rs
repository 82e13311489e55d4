use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};

use jscc_core::channel::{ChannelModel, SUPPORTED_ORDERS};
use jscc_core::container::{load_model, save_model};
use jscc_core::dataset::{synthetic_scene, write_ppm};
use jscc_core::experiment::pipeline::{
    self, gamma_label, load_corpus, load_sweep_models, model_path, plot_options, prepare_output, stage_config,
    ModelSummary, TrainingLog, SPARSE,
};
use jscc_core::experiment::sweep::{cell_seed, evaluate_cell, read_records, Scheme};
use jscc_core::experiment::{emit_plotdata, run_pipeline, RunConfig};
use jscc_core::train::fine_tune;

#[derive(Parser)]
#[command(name = "jscc", version, about = "Lightweight deep JSCC image transmission experiments")]
struct Cli {
    /// Run configuration (flat key = value file).
    #[arg(short, long, global = true)]
    config: Option<PathBuf>,
    /// Override a configuration key, e.g. `--set seed=3`. Repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Pretrain and sparse-train the model.
    Train,
    /// Prune the sparse checkpoint at every configured rate, with fine-tuning.
    Prune,
    /// Fine-tune a saved model and keep the best validation checkpoint.
    Finetune {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        epochs: Option<usize>,
    },
    /// Evaluate one model at one channel setting.
    Eval {
        #[arg(long)]
        model: PathBuf,
        /// `analog` or a QAM order.
        #[arg(long, default_value = "analog")]
        scheme: String,
        #[arg(long)]
        snr: f64,
    },
    /// Evaluate every saved model across schemes and SNRs.
    Sweep,
    /// Regenerate the per-figure CSV files from `records.csv`.
    Report,
    /// Run the full pipeline: train, prune, sweep and report.
    Run,
    /// Write a synthetic PPM corpus.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 700)]
        count: usize,
        #[arg(long, default_value_t = 32)]
        size: usize,
    },
}

fn load_config(cli: &Cli) -> Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    for kv in &cli.overrides {
        let Some((k, v)) = kv.split_once('=') else {
            bail!("override `{kv}` is not KEY=VALUE");
        };
        cfg.set(k, v)?;
    }
    cfg.apply_env();
    cfg.validate()?;
    Ok(cfg)
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    if let Command::Synth { out, count, size } = &cli.command {
        std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
        for i in 0..*count {
            let img = synthetic_scene(*size, *size, i as u64);
            write_ppm(&img, &out.join(format!("synth_{i:05}.ppm")))?;
        }
        println!("wrote {count} images to {}", out.display());
        return Ok(());
    }
    let cfg = load_config(&cli)?;
    prepare_output(&cfg)?;
    match &cli.command {
        Command::Run => {
            let art = run_pipeline(&cfg)?;
            for m in &art.models {
                println!(
                    "{:>8}  params {:>7}  MACs {:>9}  val PSNR {:.2} dB  SSIM {:.4}",
                    m.label, m.params, m.macs, m.val_psnr, m.val_ssim
                );
            }
            println!("{} records written to {}", art.records.len(), cfg.output.display());
        }
        Command::Train => {
            let corpus = load_corpus(&cfg)?;
            let mut log = TrainingLog::default();
            let result = pipeline::train_stage(&cfg, &corpus, &mut log);
            log.write(&cfg.output.join("training.csv"))?;
            let model = result?;
            let s = ModelSummary::new(SPARSE, None, &model, &corpus, &cfg)?;
            println!("sparse model: {} params, val PSNR {:.2} dB", s.params, s.val_psnr);
        }
        Command::Prune => {
            let corpus = load_corpus(&cfg)?;
            let sparse = load_model(&model_path(&cfg.output, SPARSE)).context("run `jscc train` first")?;
            let mut log = TrainingLog::default();
            let result = pipeline::prune_stage(&cfg, &corpus, &sparse, &mut log);
            log.write(&cfg.output.join("pruning-training.csv"))?;
            let mut summaries = Vec::new();
            for (gamma, model) in result? {
                let s = ModelSummary::new(&gamma_label(gamma), Some(gamma), &model, &corpus, &cfg)?;
                println!("{}: {} params, val PSNR {:.2} dB", s.label, s.params, s.val_psnr);
                summaries.push(s);
            }
            pipeline::write_model_summaries(&cfg.output.join("models.csv"), &summaries)?;
        }
        Command::Finetune { model, out, epochs } => {
            let corpus = load_corpus(&cfg)?;
            let m = load_model(model)?;
            let tcfg = stage_config(&cfg, "finetune", epochs.unwrap_or(cfg.finetune_epochs), 0.0);
            let (best, report) = fine_tune(&m, &corpus.train, &corpus.holdout, &tcfg)?;
            save_model(&best, out)?;
            println!(
                "best epoch {} of {}, validation MSE {:.6}",
                report.best_epoch,
                report.val_mse.len() - 1,
                report.val_mse[report.best_epoch]
            );
        }
        Command::Eval { model, scheme, snr } => {
            let corpus = load_corpus(&cfg)?;
            let m = load_model(model)?;
            let scheme = match scheme.as_str() {
                "analog" => Scheme::Analog,
                s => match s.parse::<usize>() {
                    Ok(o) if SUPPORTED_ORDERS.contains(&o) => Scheme::Digital(o),
                    _ => bail!("scheme must be `analog` or one of {SUPPORTED_ORDERS:?}"),
                },
            };
            let channel = ChannelModel {
                fading: cfg.fading,
                snr_db: *snr,
            };
            let r = evaluate_cell(Some(&m), &corpus.holdout, scheme, &channel, cell_seed(cfg.seed, *snr), "eval")?;
            print!("PSNR {:.3} dB  SSIM {:.4}", r.metrics.mean_psnr, r.metrics.mean_ssim);
            if let Some(ser) = r.ser {
                print!("  SER {ser:.5}");
            }
            println!();
        }
        Command::Sweep => {
            let corpus = load_corpus(&cfg)?;
            let models = load_sweep_models(&cfg);
            let records = pipeline::sweep_stage(&cfg, &corpus, &models)?;
            let skipped = records.iter().filter(|r| !r.is_ok()).count();
            println!("{} records ({skipped} skipped) in {}", records.len(), cfg.output.display());
        }
        Command::Report => {
            let records = read_records(&cfg.output.join("records.csv")).context("run `jscc sweep` first")?;
            for f in emit_plotdata(&records, &cfg.output, &plot_options(&cfg))? {
                println!("{}", f.display());
            }
        }
        Command::Synth { .. } => unreachable!(),
    }
    Ok(())
}
