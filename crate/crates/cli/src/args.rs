//! Command-line flags and the `--config` JSON file that can supply any of
//! them. Explicit flags win over the config file, which wins over
//! `GASGATE_SEED` and the built-in defaults.
//!
//! Flags the CLI cannot interpret are usage errors (exit 1); values the
//! library rejects surface as runtime errors (exit 2).

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use gasgate::data::{Attribute, FeatureSet, RatioDirection};
use gasgate::logistic::LogisticSettings;
use gasgate::model::{LearnerConfig, SvmConfig};
use gasgate::svm::{Kernel, PenaltyConfig, SmoSettings};
use serde::Deserialize;

pub const SEED_ENV: &str = "GASGATE_SEED";
const DEFAULT_SEED: u64 = 42;

/// Bad flag values; reported with exit code 1.
#[derive(Debug, thiserror::Error)]
#[error("{0}")]
pub struct UsageError(pub String);

pub fn usage(msg: impl Into<String>) -> UsageError {
    UsageError(msg.into())
}

#[derive(Debug, Parser)]
#[command(name = "gasgate", version, about = "Oil-gas explosion prediction with cost-sensitive SVM and logistic regression")]
pub struct Cli {
    /// JSON file supplying values for any flag (keys use underscores)
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a labeled CSV from the synthetic explosive region
    Gen(GenArgs),
    /// Fit normalization and a model on a CSV, write the model as JSON
    Train(TrainArgs),
    /// Apply a saved model to a CSV
    Predict(PredictArgs),
    /// Stratified v-fold cross-validation, optionally repeated
    Cv(CvArgs),
    /// Cross-validate the SVM over a grid of penalty ratios w1/w2
    Sweep(SweepArgs),
    /// Explosive HC intervals at fixed O2 from a logistic model
    Intervals(IntervalsArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Svm,
    #[value(alias = "logistic")]
    #[serde(alias = "logistic")]
    Lr,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KernelKind {
    Linear,
    #[value(alias = "polynomial")]
    #[serde(alias = "polynomial")]
    Poly,
    Rbf,
    Sigmoid,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RatioArg {
    O2OverHc,
    HcOverO2,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureArg {
    Hc,
    O2,
    Co,
    Co2,
    Ratio,
}

/// Everything a config file may set. Unknown keys are rejected.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub n: Option<usize>,
    pub seed: Option<u64>,
    pub noise: Option<f64>,
    pub positive_fraction: Option<f64>,
    pub natural_balance: Option<bool>,
    pub o2_band: Option<Vec<f64>>,
    pub region: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub data: Option<PathBuf>,
    pub model: Option<ModelKind>,
    pub model_file: Option<PathBuf>,
    pub kernel: Option<KernelKind>,
    pub kernel_gamma: Option<f64>,
    pub coef0: Option<f64>,
    pub degree: Option<u32>,
    pub c: Option<f64>,
    pub w1: Option<f64>,
    pub w2: Option<f64>,
    pub tol: Option<f64>,
    pub max_passes: Option<usize>,
    pub ridge: Option<f64>,
    pub lr_tol: Option<f64>,
    pub max_iter: Option<usize>,
    pub features: Option<Vec<FeatureArg>>,
    pub ratio: Option<RatioArg>,
    pub folds: Option<usize>,
    pub repeats: Option<usize>,
    pub folds_out: Option<PathBuf>,
    pub gamma_grid: Option<Vec<f64>>,
    pub base_w2: Option<f64>,
    pub csv_out: Option<PathBuf>,
    pub o2: Option<Vec<f64>>,
    pub hc_min: Option<f64>,
    pub hc_max: Option<f64>,
    pub grid_points: Option<usize>,
    pub root_tol: Option<f64>,
    pub profile_out: Option<PathBuf>,
}

impl ConfigFile {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| usage(format!("cannot read config {}: {e}", path.display())))?;
        let cfg = serde_json::from_str(&text).map_err(|e| usage(format!("config {}: {e}", path.display())))?;
        Ok(cfg)
    }
}

/// Flag, then config value, then fallback.
pub fn pick<T: Clone>(flag: &Option<T>, config: &Option<T>) -> Option<T> {
    flag.clone().or_else(|| config.clone())
}

fn required<T: Clone>(flag: &Option<T>, config: &Option<T>, name: &str) -> Result<T, UsageError> {
    pick(flag, config).ok_or_else(|| usage(format!("--{name} is required")))
}

pub fn required_path(flag: &Option<PathBuf>, config: &Option<PathBuf>, name: &str) -> Result<PathBuf, UsageError> {
    required(flag, config, name)
}

#[derive(Debug, Args)]
pub struct SeedArg {
    /// Random seed [default: $GASGATE_SEED or 42]
    #[arg(long)]
    pub seed: Option<u64>,
}

impl SeedArg {
    pub fn resolve(&self, cfg: &ConfigFile) -> Result<u64, UsageError> {
        if let Some(s) = pick(&self.seed, &cfg.seed) {
            return Ok(s);
        }
        match std::env::var(SEED_ENV) {
            Ok(v) => v
                .trim()
                .parse()
                .map_err(|_| usage(format!("{SEED_ENV} = `{v}` is not an unsigned integer"))),
            Err(_) => Ok(DEFAULT_SEED),
        }
    }
}

#[derive(Debug, Args)]
pub struct FeatureArgs {
    /// Attributes fed to the learners [default: hc,o2,ratio]
    #[arg(long, value_delimiter = ',')]
    pub features: Option<Vec<FeatureArg>>,
    /// Direction of the concentration ratio feature [default: o2-over-hc]
    #[arg(long)]
    pub ratio: Option<RatioArg>,
}

impl FeatureArgs {
    pub fn resolve(&self, cfg: &ConfigFile) -> Result<FeatureSet, UsageError> {
        let mut set = FeatureSet::default();
        if let Some(list) = pick(&self.features, &cfg.features) {
            if list.is_empty() {
                return Err(usage("--features must name at least one attribute"));
            }
            set.attributes = list
                .into_iter()
                .map(|f| match f {
                    FeatureArg::Hc => Attribute::Hc,
                    FeatureArg::O2 => Attribute::O2,
                    FeatureArg::Co => Attribute::Co,
                    FeatureArg::Co2 => Attribute::Co2,
                    FeatureArg::Ratio => Attribute::Ratio,
                })
                .collect();
        }
        if let Some(r) = pick(&self.ratio, &cfg.ratio) {
            set.ratio = match r {
                RatioArg::O2OverHc => RatioDirection::O2OverHc,
                RatioArg::HcOverO2 => RatioDirection::HcOverO2,
            };
        }
        Ok(set)
    }
}

#[derive(Debug, Args)]
pub struct KernelArgs {
    /// SVM kernel [default: rbf]
    #[arg(long)]
    pub kernel: Option<KernelKind>,
    /// Kernel gamma [default: 1 / number of features]
    #[arg(long)]
    pub kernel_gamma: Option<f64>,
    /// Kernel offset r for poly/sigmoid [default: 0]
    #[arg(long, allow_negative_numbers = true)]
    pub coef0: Option<f64>,
    /// Polynomial degree [default: 3]
    #[arg(long)]
    pub degree: Option<u32>,
    /// SMO stopping tolerance [default: 1e-3]
    #[arg(long)]
    pub tol: Option<f64>,
    /// SMO iteration cap in multiples of the sample count [default: 1000]
    #[arg(long)]
    pub max_passes: Option<usize>,
}

impl KernelArgs {
    pub fn resolve_kernel(&self, cfg: &ConfigFile, n_features: usize) -> anyhow::Result<Kernel> {
        let gamma = pick(&self.kernel_gamma, &cfg.kernel_gamma).unwrap_or(1.0 / n_features.max(1) as f64);
        let coef0 = pick(&self.coef0, &cfg.coef0).unwrap_or(0.0);
        let kernel = match pick(&self.kernel, &cfg.kernel).unwrap_or(KernelKind::Rbf) {
            KernelKind::Linear => Kernel::Linear,
            KernelKind::Poly => Kernel::Polynomial {
                gamma,
                coef0,
                degree: pick(&self.degree, &cfg.degree).unwrap_or(3),
            },
            KernelKind::Rbf => Kernel::Rbf { gamma },
            KernelKind::Sigmoid => Kernel::Sigmoid { gamma, coef0 },
        };
        kernel.validate()?;
        Ok(kernel)
    }

    pub fn resolve_smo(&self, cfg: &ConfigFile, seed: u64) -> SmoSettings {
        let defaults = SmoSettings::default();
        SmoSettings {
            tol: pick(&self.tol, &cfg.tol).unwrap_or(defaults.tol),
            max_passes: pick(&self.max_passes, &cfg.max_passes).unwrap_or(defaults.max_passes),
            seed,
            record_objective: false,
        }
    }
}

#[derive(Debug, Args)]
pub struct LearnerArgs {
    /// Learner
    #[arg(long)]
    pub model: Option<ModelKind>,
    #[command(flatten)]
    pub kernel: KernelArgs,
    /// Symmetric SVM penalty C (w1 = w2 = C) [default: 10]
    #[arg(long)]
    pub c: Option<f64>,
    /// SVM penalty on exploded samples [default: C]
    #[arg(long)]
    pub w1: Option<f64>,
    /// SVM penalty on non-exploded samples [default: C]
    #[arg(long)]
    pub w2: Option<f64>,
    /// Logistic ridge strength [default: 1e-6]
    #[arg(long)]
    pub ridge: Option<f64>,
    /// Logistic gradient-norm tolerance [default: 1e-6]
    #[arg(long)]
    pub lr_tol: Option<f64>,
    /// Logistic Newton iteration cap [default: 200]
    #[arg(long)]
    pub max_iter: Option<usize>,
}

impl LearnerArgs {
    pub fn resolve(&self, cfg: &ConfigFile, n_features: usize, seed: u64) -> anyhow::Result<LearnerConfig> {
        match required(&self.model, &cfg.model, "model")? {
            ModelKind::Svm => {
                let c = pick(&self.c, &cfg.c).unwrap_or(PenaltyConfig::default().positive);
                let w1 = pick(&self.w1, &cfg.w1).unwrap_or(c);
                let w2 = pick(&self.w2, &cfg.w2).unwrap_or(c);
                let penalties = PenaltyConfig::new(w1, w2)?;
                Ok(LearnerConfig::Svm(SvmConfig {
                    kernel: self.kernel.resolve_kernel(cfg, n_features)?,
                    penalties,
                    smo: self.kernel.resolve_smo(cfg, seed),
                }))
            }
            ModelKind::Lr => Ok(LearnerConfig::Logistic(self.resolve_logistic(cfg))),
        }
    }

    pub fn resolve_logistic(&self, cfg: &ConfigFile) -> LogisticSettings {
        let d = LogisticSettings::default();
        LogisticSettings {
            ridge: pick(&self.ridge, &cfg.ridge).unwrap_or(d.ridge),
            tol: pick(&self.lr_tol, &cfg.lr_tol).unwrap_or(d.tol),
            max_iter: pick(&self.max_iter, &cfg.max_iter).unwrap_or(d.max_iter),
        }
    }
}

#[derive(Debug, Args)]
pub struct GenArgs {
    /// Number of samples [default: 500]
    #[arg(long)]
    pub n: Option<usize>,
    #[command(flatten)]
    pub seed: SeedArg,
    /// Label-flip probability [default: 0]
    #[arg(long)]
    pub noise: Option<f64>,
    /// Share of exploded rows [default: 0.78]
    #[arg(long)]
    pub positive_fraction: Option<f64>,
    /// Keep the natural class share of the sampling box
    #[arg(long, conflicts_with = "positive_fraction")]
    pub natural_balance: bool,
    /// Restrict O2 sampling to LOW,HIGH
    #[arg(long, value_delimiter = ',', num_args = 1)]
    pub o2_band: Option<Vec<f64>>,
    /// Region JSON replacing the built-in explosive region
    #[arg(long)]
    pub region: Option<PathBuf>,
    /// Output CSV
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub learner: LearnerArgs,
    #[command(flatten)]
    pub features: FeatureArgs,
    #[command(flatten)]
    pub seed: SeedArg,
    /// Training CSV
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Output model JSON
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    /// Model JSON written by `train`
    #[arg(long)]
    pub model_file: Option<PathBuf>,
    /// CSV to score
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Output CSV [default: stdout]
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CvArgs {
    #[command(flatten)]
    pub learner: LearnerArgs,
    #[command(flatten)]
    pub features: FeatureArgs,
    #[command(flatten)]
    pub seed: SeedArg,
    /// Input CSV
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Number of folds v [default: 5]
    #[arg(long)]
    pub folds: Option<usize>,
    /// Repetitions with seeds seed, seed+1, ... [default: 10]
    #[arg(long)]
    pub repeats: Option<usize>,
    /// Summary CSV, one row per repeat
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Per-fold CSV
    #[arg(long)]
    pub folds_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub kernel: KernelArgs,
    #[command(flatten)]
    pub features: FeatureArgs,
    #[command(flatten)]
    pub seed: SeedArg,
    /// Input CSV
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Penalty ratios w1/w2 [default: 5,10,...,60]
    #[arg(long, value_delimiter = ',')]
    pub gamma_grid: Option<Vec<f64>>,
    /// w2; w1 = ratio * w2 [default: 1]
    #[arg(long)]
    pub base_w2: Option<f64>,
    /// Number of folds v [default: 5]
    #[arg(long)]
    pub folds: Option<usize>,
    /// TSV `gamma<TAB>type1<TAB>type2<TAB>whole`
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// CSV with confusion counts per ratio
    #[arg(long)]
    pub csv_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct IntervalsArgs {
    /// Logistic model JSON; when absent, one is fitted on --data
    #[arg(long)]
    pub model_file: Option<PathBuf>,
    /// CSV to fit a logistic model on when no --model-file is given
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[command(flatten)]
    pub features: FeatureArgs,
    /// Logistic ridge strength [default: 1e-6]
    #[arg(long)]
    pub ridge: Option<f64>,
    /// Logistic gradient-norm tolerance [default: 1e-6]
    #[arg(long)]
    pub lr_tol: Option<f64>,
    /// Logistic Newton iteration cap [default: 200]
    #[arg(long)]
    pub max_iter: Option<usize>,
    /// Oxygen levels [default: 15,16,18,20]
    #[arg(long, value_delimiter = ',')]
    pub o2: Option<Vec<f64>>,
    /// HC search range start [default: 0.1]
    #[arg(long)]
    pub hc_min: Option<f64>,
    /// HC search range end [default: 5]
    #[arg(long)]
    pub hc_max: Option<f64>,
    /// Grid points for bracketing the limits [default: 2000]
    #[arg(long)]
    pub grid_points: Option<usize>,
    /// Stop bisection when |p - 0.5| is below this [default: 1e-6]
    #[arg(long)]
    pub root_tol: Option<f64>,
    /// CSV `o2,lower,upper,present`
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// TSV `o2<TAB>hc<TAB>g<TAB>p` over the grid, for plotting
    #[arg(long)]
    pub profile_out: Option<PathBuf>,
}

impl IntervalsArgs {
    pub fn logistic_settings(&self, cfg: &ConfigFile) -> LogisticSettings {
        let learner = LearnerArgs {
            model: Some(ModelKind::Lr),
            kernel: KernelArgs {
                kernel: None,
                kernel_gamma: None,
                coef0: None,
                degree: None,
                tol: None,
                max_passes: None,
            },
            c: None,
            w1: None,
            w2: None,
            ridge: self.ridge,
            lr_tol: self.lr_tol,
            max_iter: self.max_iter,
        };
        learner.resolve_logistic(cfg)
    }
}
