//! Flat `key = value` run configuration.
//!
//! Blank lines and lines starting with `#` are ignored. Lists are
//! comma-separated. Unknown keys are rejected. The output directory can be
//! overridden with the `JSCC_OUTPUT_DIR` environment variable.
//!
//! | key | default | meaning |
//! |-----|---------|---------|
//! | `dataset` | *(none)* | directory of PPM/PNG images; synthetic scenes if unset |
//! | `synthetic_images` | 700 | corpus size when `dataset` is unset |
//! | `holdout` | 100 | images held out for validation and the sweep |
//! | `width`, `height` | 32 | image size after resizing |
//! | `feature_channels` | 32 | encoder output channels (`k = 64·c` at 32×32) |
//! | `widths` | 8,16,32 | hidden layer widths |
//! | `seed` | 0 | master seed |
//! | `train_snr_db` | 25 | training SNR |
//! | `fading` | slow | `slow`, `fast` or `none` |
//! | `pretrain_epochs` | 10 | plain training before sparse training |
//! | `sparse_epochs` | 10 | sparse training epochs |
//! | `pruning_rounds` | 4 | prune / fine-tune rounds per pruning rate |
//! | `finetune_epochs` | 5 | fine-tune epochs per round |
//! | `batch_size` | 32 | |
//! | `learning_rate` | 1e-4 | Adam step size |
//! | `lambda` | 1e-5 | L1 weight on BN scales |
//! | `gammas` | 0,0.2,0.5,0.7,0.9 | global pruning rates |
//! | `orders` | 4,16,64,256 | QAM orders for the digital chain |
//! | `snrs_db` | 0,3,…,24 | sweep SNRs (`inf` allowed) |
//! | `compare` | false | also train an unpruned model of matched size |
//! | `compare_gamma` | 0.5 | pruned model the comparison is sized against |
//! | `compare_feature_channels` | 16 | feature channels of the comparison model |
//! | `baseline` | true | include separate-coding rows in the sweep |
//! | `baseline_order` | 16 | QAM order of the separate baseline |
//! | `baseline_code` | hamming | `hamming` or `none` |
//! | `threads` | 0 | sweep worker threads (0 = all cores) |
//! | `output` | runs/default | output directory |

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::baseline::{ChannelCode, SeparateConfig};
use crate::channel::{Fading, SUPPORTED_ORDERS};
use crate::error::{Error, Result};
use crate::model::{ModelSpec, DESK_WIDTHS};

pub const OUTPUT_ENV: &str = "JSCC_OUTPUT_DIR";

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub dataset: Option<PathBuf>,
    pub synthetic_images: usize,
    pub holdout: usize,
    pub width: usize,
    pub height: usize,
    pub feature_channels: usize,
    pub widths: [usize; 3],
    pub seed: u64,
    pub train_snr_db: f64,
    pub fading: Fading,
    pub pretrain_epochs: usize,
    pub sparse_epochs: usize,
    pub pruning_rounds: usize,
    pub finetune_epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub lambda: f64,
    pub gammas: Vec<f64>,
    pub orders: Vec<usize>,
    pub snrs_db: Vec<f64>,
    pub compare: bool,
    pub compare_gamma: f64,
    pub compare_feature_channels: usize,
    pub baseline: bool,
    pub baseline_order: usize,
    pub baseline_code: ChannelCode,
    pub threads: usize,
    pub output: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            dataset: None,
            synthetic_images: 700,
            holdout: 100,
            width: 32,
            height: 32,
            feature_channels: 32,
            widths: DESK_WIDTHS,
            seed: 0,
            train_snr_db: 25.0,
            fading: Fading::SlowRayleigh,
            pretrain_epochs: 10,
            sparse_epochs: 10,
            pruning_rounds: 4,
            finetune_epochs: 5,
            batch_size: 32,
            learning_rate: 1e-4,
            lambda: 1e-5,
            gammas: vec![0.0, 0.2, 0.5, 0.7, 0.9],
            orders: SUPPORTED_ORDERS.to_vec(),
            snrs_db: (0..=8).map(|i| 3.0 * i as f64).collect(),
            compare: false,
            compare_gamma: 0.5,
            compare_feature_channels: 16,
            baseline: true,
            baseline_order: SeparateConfig::DEFAULT_ORDER,
            baseline_code: ChannelCode::Hamming74,
            threads: 0,
            output: PathBuf::from("runs/default"),
        }
    }
}

fn parse_num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse()
        .map_err(|_| Error::Config(format!("`{key}`: cannot parse `{v}`")))
}

fn parse_f64(key: &str, v: &str) -> Result<f64> {
    match v.to_ascii_lowercase().as_str() {
        "inf" | "+inf" | "infinity" => Ok(f64::INFINITY),
        _ => parse_num(key, v),
    }
}

fn parse_list<T>(key: &str, v: &str, f: impl Fn(&str, &str) -> Result<T>) -> Result<Vec<T>> {
    v.split(',').map(str::trim).filter(|s| !s.is_empty()).map(|s| f(key, s)).collect()
}

fn parse_bool(key: &str, v: &str) -> Result<bool> {
    match v.to_ascii_lowercase().as_str() {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => Err(Error::Config(format!("`{key}`: expected a boolean, got `{v}`"))),
    }
}

fn fading_name(f: Fading) -> &'static str {
    match f {
        Fading::None => "none",
        Fading::SlowRayleigh => "slow",
        Fading::FastRayleigh => "fast",
    }
}

fn join<T: std::fmt::Display>(v: &[T]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
}

impl RunConfig {
    /// Applies one `key = value` setting.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        match key.trim() {
            "dataset" => self.dataset = (!v.is_empty()).then(|| PathBuf::from(v)),
            "synthetic_images" => self.synthetic_images = parse_num(key, v)?,
            "holdout" => self.holdout = parse_num(key, v)?,
            "width" => self.width = parse_num(key, v)?,
            "height" => self.height = parse_num(key, v)?,
            "feature_channels" => self.feature_channels = parse_num(key, v)?,
            "widths" => {
                let w: Vec<usize> = parse_list(key, v, parse_num)?;
                self.widths = w
                    .try_into()
                    .map_err(|_| Error::Config("`widths` needs exactly three values".into()))?;
            }
            "seed" => self.seed = parse_num(key, v)?,
            "train_snr_db" => self.train_snr_db = parse_f64(key, v)?,
            "fading" => {
                self.fading = match v {
                    "none" => Fading::None,
                    "slow" => Fading::SlowRayleigh,
                    "fast" => Fading::FastRayleigh,
                    _ => return Err(Error::Config(format!("`fading`: unknown model `{v}`"))),
                }
            }
            "pretrain_epochs" => self.pretrain_epochs = parse_num(key, v)?,
            "sparse_epochs" => self.sparse_epochs = parse_num(key, v)?,
            "pruning_rounds" => self.pruning_rounds = parse_num(key, v)?,
            "finetune_epochs" => self.finetune_epochs = parse_num(key, v)?,
            "batch_size" => self.batch_size = parse_num(key, v)?,
            "learning_rate" => self.learning_rate = parse_f64(key, v)?,
            "lambda" => self.lambda = parse_f64(key, v)?,
            "gammas" => self.gammas = parse_list(key, v, parse_f64)?,
            "orders" => self.orders = parse_list(key, v, parse_num)?,
            "snrs_db" => self.snrs_db = parse_list(key, v, parse_f64)?,
            "compare" => self.compare = parse_bool(key, v)?,
            "compare_gamma" => self.compare_gamma = parse_f64(key, v)?,
            "compare_feature_channels" => self.compare_feature_channels = parse_num(key, v)?,
            "baseline" => self.baseline = parse_bool(key, v)?,
            "baseline_order" => self.baseline_order = parse_num(key, v)?,
            "baseline_code" => {
                self.baseline_code = match v {
                    "hamming" => ChannelCode::Hamming74,
                    "none" => ChannelCode::None,
                    _ => return Err(Error::Config(format!("`baseline_code`: unknown code `{v}`"))),
                }
            }
            "threads" => self.threads = parse_num(key, v)?,
            "output" => self.output = PathBuf::from(v),
            other => return Err(Error::Config(format!("unknown key `{other}`"))),
        }
        Ok(())
    }

    /// Parses a config file body on top of the defaults.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = RunConfig::default();
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected `key = value`", n + 1)))?;
            cfg.set(k, v)
                .map_err(|e| Error::Config(format!("line {}: {e}", n + 1)))?;
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        RunConfig::parse(&text)
    }

    /// Replaces the output directory with `$JSCC_OUTPUT_DIR` when set.
    pub fn apply_env(&mut self) {
        if let Some(dir) = std::env::var_os(OUTPUT_ENV).filter(|d| !d.is_empty()) {
            self.output = PathBuf::from(dir);
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("synthetic_images", self.synthetic_images),
            ("holdout", self.holdout),
            ("width", self.width),
            ("height", self.height),
            ("feature_channels", self.feature_channels),
            ("pruning_rounds", self.pruning_rounds),
            ("batch_size", self.batch_size),
            ("compare_feature_channels", self.compare_feature_channels),
        ];
        for (k, v) in positive {
            if v == 0 {
                return Err(Error::Config(format!("`{k}` must be positive")));
            }
        }
        if self.widths.contains(&0) {
            return Err(Error::Config("`widths` must be positive".into()));
        }
        if !(self.learning_rate > 0.0) || !(self.lambda >= 0.0) {
            return Err(Error::Config("learning rate must be positive and lambda non-negative".into()));
        }
        if self.gammas.is_empty() || self.gammas.iter().any(|g| !(0.0..1.0).contains(g)) {
            return Err(Error::Config("`gammas` must be a non-empty list in [0, 1)".into()));
        }
        if let Some(m) = self.orders.iter().find(|m| !SUPPORTED_ORDERS.contains(m)) {
            return Err(Error::Config(format!("unsupported order {m} in `orders`")));
        }
        if !SUPPORTED_ORDERS.contains(&self.baseline_order) {
            return Err(Error::Config(format!("unsupported baseline order {}", self.baseline_order)));
        }
        if self.snrs_db.iter().any(|s| s.is_nan()) || self.train_snr_db.is_nan() {
            return Err(Error::Config("SNR values must be numbers".into()));
        }
        if !(0.0..1.0).contains(&self.compare_gamma) {
            return Err(Error::Config("`compare_gamma` must be in [0, 1)".into()));
        }
        if let Some(d) = &self.dataset {
            if !d.is_dir() {
                return Err(Error::Config(format!("dataset directory {} does not exist", d.display())));
            }
        }
        self.model_spec().validate()?;
        Ok(())
    }

    /// Architecture trained by the pipeline.
    pub fn model_spec(&self) -> ModelSpec {
        let mut spec = ModelSpec::desk_with_widths(self.widths, self.feature_channels);
        spec.height = self.height;
        spec.width = self.width;
        spec.feature_len = self.feature_channels * self.height.div_ceil(4) * self.width.div_ceil(4);
        spec
    }

    /// Canonical text form; parsing it gives back the same config.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let mut line = |k: &str, v: String| writeln!(s, "{k} = {v}").unwrap();
        line("dataset", self.dataset.as_ref().map(|d| d.display().to_string()).unwrap_or_default());
        line("synthetic_images", self.synthetic_images.to_string());
        line("holdout", self.holdout.to_string());
        line("width", self.width.to_string());
        line("height", self.height.to_string());
        line("feature_channels", self.feature_channels.to_string());
        line("widths", join(&self.widths));
        line("seed", self.seed.to_string());
        line("train_snr_db", self.train_snr_db.to_string());
        line("fading", fading_name(self.fading).to_string());
        line("pretrain_epochs", self.pretrain_epochs.to_string());
        line("sparse_epochs", self.sparse_epochs.to_string());
        line("pruning_rounds", self.pruning_rounds.to_string());
        line("finetune_epochs", self.finetune_epochs.to_string());
        line("batch_size", self.batch_size.to_string());
        line("learning_rate", self.learning_rate.to_string());
        line("lambda", self.lambda.to_string());
        line("gammas", join(&self.gammas));
        line("orders", join(&self.orders));
        line("snrs_db", join(&self.snrs_db));
        line("compare", self.compare.to_string());
        line("compare_gamma", self.compare_gamma.to_string());
        line("compare_feature_channels", self.compare_feature_channels.to_string());
        line("baseline", self.baseline.to_string());
        line("baseline_order", self.baseline_order.to_string());
        line(
            "baseline_code",
            match self.baseline_code {
                ChannelCode::Hamming74 => "hamming",
                ChannelCode::None => "none",
            }
            .to_string(),
        );
        line("threads", self.threads.to_string());
        line("output", self.output.display().to_string());
        s
    }
}
