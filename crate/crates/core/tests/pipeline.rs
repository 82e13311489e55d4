use std::fs;
use std::path::Path;

use jscc_core::container::load_model;
use jscc_core::experiment::pipeline::{load_corpus, load_sweep_models, model_path, sweep_snrs, sweep_stage, COMPARE, SPARSE};
use jscc_core::experiment::sweep::read_records;
use jscc_core::experiment::{run_pipeline, RunConfig, OUTPUT_ENV};

fn tiny(dir: &Path) -> RunConfig {
    RunConfig {
        synthetic_images: 24,
        holdout: 8,
        feature_channels: 8,
        widths: [4, 8, 8],
        pretrain_epochs: 1,
        sparse_epochs: 1,
        pruning_rounds: 2,
        finetune_epochs: 1,
        batch_size: 4,
        learning_rate: 1e-3,
        lambda: 1e-3,
        gammas: vec![0.0, 0.2, 0.5],
        orders: vec![4, 256],
        snrs_db: vec![0.0, 12.0],
        compare_gamma: 0.5,
        compare_feature_channels: 4,
        seed: 5,
        output: dir.to_path_buf(),
        ..RunConfig::default()
    }
}

const CSVS: [&str; 9] = [
    "records.csv",
    "diagnostics.csv",
    "models.csv",
    "training.csv",
    "fig4-psnr.csv",
    "fig5-ssim.csv",
    "fig7-compare.csv",
    "table2.csv",
    "pruning-g0.50.csv",
];

#[test]
fn reruns_are_byte_identical_across_thread_counts() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let mut ca = tiny(a.path());
    ca.compare = true;
    ca.threads = 1;
    let mut cb = ca.clone();
    cb.output = b.path().to_path_buf();
    cb.threads = 2;
    run_pipeline(&ca).unwrap();
    run_pipeline(&cb).unwrap();
    for f in CSVS {
        let x = fs::read(a.path().join(f)).unwrap();
        let y = fs::read(b.path().join(f)).unwrap();
        assert!(!x.is_empty(), "{f} empty");
        assert_eq!(x, y, "{f} differs");
    }
}

#[test]
fn tiny_run_structure() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny(dir.path());
    let art = run_pipeline(&cfg).unwrap();

    // Factorial size: per model one analog row and one per order at each
    // SNR, plus the baseline at each SNR.
    let snrs = sweep_snrs(&cfg).len();
    assert_eq!(art.records.len(), cfg.gammas.len() * (1 + cfg.orders.len()) * snrs + snrs);
    assert!(art.records.iter().all(|r| r.is_ok()));
    let back = read_records(&dir.path().join("records.csv")).unwrap();
    assert_eq!(back.iter().map(|r| r.fields()).collect::<Vec<_>>(), art.records.iter().map(|r| r.fields()).collect::<Vec<_>>());

    // γ = 0 keeps the sparse checkpoint untouched.
    let sparse = load_model(&model_path(dir.path(), SPARSE)).unwrap();
    assert_eq!(load_model(&model_path(dir.path(), "g0.00")).unwrap(), sparse);
    let log = fs::read_to_string(dir.path().join("training.csv")).unwrap();
    assert!(!log.contains("finetune-g0.00"));
    assert!(log.contains("finetune-g0.50"));

    let params = |label: &str| art.models.iter().find(|m| m.label == label).unwrap().params;
    assert!(params("g0.50") < params("g0.20"));
    assert!(params("g0.20") < params("g0.00"));

    // The γ = 0 analog row at the training SNR reproduces validation PSNR.
    let row = art
        .records
        .iter()
        .find(|r| r.model == "g0.00" && r.scheme == "analog" && r.snr_db == cfg.train_snr_db)
        .unwrap();
    let summary = art.models.iter().find(|m| m.label == "g0.00").unwrap();
    let psnr = row.psnr.unwrap();
    assert!((psnr - summary.val_psnr).abs() < 0.01, "{psnr} vs {}", summary.val_psnr);
}

#[test]
fn missing_model_becomes_a_skipped_row() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = tiny(dir.path());
    cfg.gammas = vec![0.0];
    cfg.baseline = false;
    run_pipeline(&cfg).unwrap();
    cfg.compare = true;
    let corpus = load_corpus(&cfg).unwrap();
    let models = load_sweep_models(&cfg);
    assert!(models.iter().any(|m| m.label == COMPARE && m.model.is_none()));
    let records = sweep_stage(&cfg, &corpus, &models).unwrap();
    let skipped: Vec<_> = records.iter().filter(|r| !r.is_ok()).collect();
    assert_eq!(skipped.len(), (1 + cfg.orders.len()) * sweep_snrs(&cfg).len());
    assert!(skipped.iter().all(|r| r.model == COMPARE && r.status.contains("missing")));
}

#[test]
fn output_directory_follows_environment() {
    let dir = tempfile::tempdir().unwrap();
    let target = dir.path().join("from-env");
    std::env::set_var(OUTPUT_ENV, &target);
    let mut cfg = RunConfig::default();
    cfg.apply_env();
    std::env::remove_var(OUTPUT_ENV);
    assert_eq!(cfg.output, target);
}
