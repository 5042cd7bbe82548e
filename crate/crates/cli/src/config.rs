//! Optional TOML configuration. Every key mirrors a command-line flag and a
//! flag given on the command line always wins.
//!
//! ```toml
//! m = 16
//! classifier = "svm"
//! extractor = "vortex"
//! seed_mode = "literal"
//! hidden = 1
//! ridge = 0.0
//! gap_layer = "last"
//! standardize = false
//! threads = 8
//!
//! [svm]
//! c = 1.0
//! seed = 0
//! scheme = "ovr"
//! tolerance = 1e-4
//! max_epochs = 20000
//! ```

use std::path::Path;
use std::str::FromStr;

use serde::Deserialize;

use vortex::bench::BenchConfig;
use vortex::classifiers::{ClassifierConfig, MulticlassScheme, SvmConfig};
use vortex::extractors::ExtractorConfig;
use vortex::{GapLayer, SeedMode, VortexConfig};

use crate::error::{CliError, CliResult};

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub m: Option<usize>,
    pub classifier: Option<String>,
    pub extractor: Option<String>,
    pub seed_mode: Option<String>,
    pub hidden: Option<usize>,
    pub ridge: Option<f64>,
    pub gap_layer: Option<String>,
    pub standardize: Option<bool>,
    pub threads: Option<usize>,
    #[serde(default)]
    pub svm: SvmFileConfig,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SvmFileConfig {
    pub c: Option<f64>,
    pub seed: Option<u64>,
    pub scheme: Option<String>,
    pub tolerance: Option<f64>,
    pub max_epochs: Option<usize>,
}

impl FileConfig {
    pub fn load(path: Option<&Path>) -> CliResult<Self> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::usage(format!("cannot read config {}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| CliError::usage(format!("config {}: {e}", path.display())))
    }
}

/// Encoder and classifier settings as given on the command line.
#[derive(Debug, Default, Clone, clap::Args)]
pub struct ModelFlags {
    /// Number of randomized autoencoders in the soup [default: 16]
    #[arg(long)]
    pub m: Option<usize>,
    /// Hidden units per autoencoder [default: 1]
    #[arg(long)]
    pub hidden: Option<usize>,
    /// Encoder seed layout: `literal` (encoder k starts at stream index k) or `disjoint`
    #[arg(long, value_name = "MODE")]
    pub seed_mode: Option<String>,
    /// Ridge penalty of the decoder solve [default: 0]
    #[arg(long)]
    pub ridge: Option<f64>,
    /// Layer pooled by the `gap` extractor: `last`, `all` or a 0-based index
    #[arg(long, value_name = "LAYER")]
    pub gap_layer: Option<String>,
    /// SVM penalty C [default: 1]
    #[arg(long)]
    pub svm_c: Option<f64>,
    /// Seed of the SVM coordinate order [default: 0]
    #[arg(long)]
    pub svm_seed: Option<u64>,
    /// Multiclass SVM scheme: `ovr` or `ovo` [default: ovr]
    #[arg(long)]
    pub scheme: Option<String>,
    /// z-score features with training statistics before fitting
    #[arg(long)]
    pub standardize: bool,
}

fn parse<T: FromStr<Err = String>>(what: &str, value: Option<&String>) -> CliResult<Option<T>> {
    value
        .map(|v| T::from_str(v).map_err(|e| CliError::usage(format!("--{what}: {e}"))))
        .transpose()
}

/// Flag value if present, else the config-file value, else the default.
pub fn pick<T: Clone>(flag: Option<T>, file: Option<T>, default: T) -> T {
    flag.or(file).unwrap_or(default)
}

impl ModelFlags {
    pub fn resolve(&self, file: &FileConfig) -> CliResult<BenchConfig> {
        let m = pick(self.m, file.m, 16);
        if m == 0 {
            return Err(CliError::usage("--m must be at least 1"));
        }
        let seed_mode = parse::<SeedMode>("seed-mode", self.seed_mode.as_ref().or(file.seed_mode.as_ref()))?;
        let gap_layer = parse::<GapLayer>("gap-layer", self.gap_layer.as_ref().or(file.gap_layer.as_ref()))?;
        let scheme = parse::<MulticlassScheme>("scheme", self.scheme.as_ref().or(file.svm.scheme.as_ref()))?;
        let ridge = pick(self.ridge, file.ridge, 0.0);
        if !(ridge.is_finite() && ridge >= 0.0) {
            return Err(CliError::usage(format!("--ridge must be finite and non-negative, got {ridge}")));
        }
        let c = pick(self.svm_c, file.svm.c, 1.0);
        if !(c.is_finite() && c > 0.0) {
            return Err(CliError::usage(format!("--svm-c must be positive, got {c}")));
        }
        let defaults = SvmConfig::default();
        Ok(BenchConfig {
            extractor: ExtractorConfig {
                vortex: VortexConfig {
                    m,
                    hidden: pick(self.hidden, file.hidden, 1),
                    seed_mode: seed_mode.unwrap_or_default(),
                    ridge,
                },
                gap_layer: gap_layer.unwrap_or_default(),
            },
            classifier: ClassifierConfig {
                svm: SvmConfig {
                    c,
                    tolerance: file.svm.tolerance.unwrap_or(defaults.tolerance),
                    max_epochs: file.svm.max_epochs.unwrap_or(defaults.max_epochs),
                    scheme: scheme.unwrap_or_default(),
                    seed: pick(self.svm_seed, file.svm.seed, 0),
                },
            },
            standardize: self.standardize || file.standardize.unwrap_or(false),
        })
    }
}
