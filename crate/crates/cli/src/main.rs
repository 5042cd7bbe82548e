//! `vortex`: encode token embeddings, run evaluation protocols, generate
//! synthetic data, and fit or apply saved classifiers.
//!
//! Exit codes: 0 success, 2 usage, 3 I/O, 4 file format, 5 manifest,
//! 6 encoding, 7 classifier.

mod commands;
mod config;
mod error;

use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use vortex::bench::SyntheticTextureSpec;

use commands::{EncodeArgs, EvalArgs, EvalMode};
use config::{pick, FileConfig, ModelFlags};
use error::{CliError, CliResult, Exit};

#[derive(Debug, Parser)]
#[command(name = "vortex", version, about = "Orderless randomized encodings of ViT token embeddings")]
struct Cli {
    /// Worker threads for encoding and fitting [default: all cores]
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// TOML file with defaults for any flag; flags on the command line win
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    /// More log output (-v info, -vv debug)
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    /// Only log errors
    #[arg(short, long, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Encode every record of a VTE file into a VTD descriptor file
    Encode {
        /// Input token embeddings (VTE)
        input: PathBuf,
        /// Output descriptors (VTD)
        #[arg(short, long)]
        output: PathBuf,
        /// Descriptor: vortex, cls or gap [default: vortex]
        #[arg(long)]
        extractor: Option<String>,
        /// Manifest supplying labels; records get label -1 without one
        #[arg(long)]
        manifest: Option<PathBuf>,
        #[command(flatten)]
        model: ModelFlags,
    },
    /// Fit and score a classifier on every fold of a split manifest
    Eval {
        /// Token embeddings (VTE) or precomputed descriptors (VTD)
        input: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
        /// knn, lda or svm [default: svm]
        #[arg(long)]
        classifier: Option<String>,
        /// vortex, cls or gap [default: vortex]
        #[arg(long)]
        extractor: Option<String>,
        /// Soup-size ablation averaged over knn, lda and svm, e.g. `1..31` or `1,2,4,8,16`
        #[arg(long, value_name = "LIST", value_parser = parse_soup_sizes, conflicts_with = "compare")]
        ablate_m: Option<SoupSizes>,
        /// Compare vortex, cls and gap with one classifier on identical folds
        #[arg(long)]
        compare: bool,
        /// Also write the report JSON here
        #[arg(long, value_name = "FILE")]
        report: Option<PathBuf>,
        /// Write a CSV table of the results here
        #[arg(long, value_name = "FILE")]
        csv: Option<PathBuf>,
        #[command(flatten)]
        model: ModelFlags,
    },
    /// Generate a seeded synthetic texture dataset (VTE + manifest)
    Synth(SynthArgs),
    /// Fit a classifier on the labeled records of a VTD file and save it
    Fit {
        /// Training descriptors (VTD); records labeled -1 are skipped
        input: PathBuf,
        /// Output model file
        #[arg(short, long)]
        output: PathBuf,
        /// knn, lda or svm [default: svm]
        #[arg(long)]
        classifier: Option<String>,
        #[command(flatten)]
        model: ModelFlags,
    },
    /// Predict every record of a VTD file with a saved model (CSV to stdout)
    Predict {
        input: PathBuf,
        #[arg(long)]
        model: PathBuf,
        /// Write the predictions here instead of stdout
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
}

#[derive(Debug, Clone)]
struct SoupSizes(Vec<usize>);

fn parse_soup_sizes(text: &str) -> Result<SoupSizes, String> {
    commands::parse_m_list(text).map(SoupSizes)
}

#[derive(Debug, Args)]
struct SynthArgs {
    /// Output directory for NAME.vte and NAME.manifest.json
    #[arg(short, long)]
    out_dir: PathBuf,
    #[arg(long, default_value = "synthetic")]
    name: String,
    /// Number of classes (at least 2)
    #[arg(short = 'C', long, default_value_t = 5)]
    classes: usize,
    #[arg(long, default_value_t = 8)]
    images_per_class: usize,
    /// Training images per class for the single split
    #[arg(long, default_value_t = 4)]
    train_per_class: usize,
    /// Use a stratified random k-fold split instead of a single split
    #[arg(long, value_name = "K")]
    folds: Option<usize>,
    #[arg(long, default_value_t = 3)]
    layers: usize,
    #[arg(long, default_value_t = 24)]
    tokens: usize,
    #[arg(long, default_value_t = 16)]
    dim: usize,
    #[arg(long, default_value_t = 3)]
    prototypes: usize,
    /// Standard deviation of Gaussian noise added to every token entry
    #[arg(long, default_value_t = 0.0)]
    noise: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Do not store CLS tokens
    #[arg(long)]
    no_cls: bool,
}

impl SynthArgs {
    fn spec(&self) -> SyntheticTextureSpec {
        SyntheticTextureSpec {
            dataset_name: self.name.clone(),
            classes: self.classes,
            images_per_class: self.images_per_class,
            train_per_class: self.train_per_class,
            layers: self.layers,
            tokens: self.tokens,
            dim: self.dim,
            prototypes_per_class: self.prototypes,
            noise: self.noise,
            seed: self.seed,
            include_cls: !self.no_cls,
            folds: self.folds,
        }
    }
}

fn init_logging(verbose: u8, quiet: bool) {
    let level = match (quiet, verbose) {
        (true, _) => "error",
        (false, 0) => "warn",
        (false, 1) => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();
}

fn print(text: &str) -> CliResult<()> {
    let mut out = std::io::stdout().lock();
    out.write_all(text.as_bytes())?;
    if !text.ends_with('\n') {
        out.write_all(b"\n")?;
    }
    Ok(())
}

fn run(cli: Cli) -> CliResult<()> {
    let file = FileConfig::load(cli.config.as_deref())?;
    if let Some(threads) = cli.threads.or(file.threads) {
        if threads == 0 {
            return Err(CliError::usage("--threads must be at least 1"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .map_err(|e| CliError::usage(format!("thread pool: {e}")))?;
    }
    let extractor_of = |flag: Option<String>| pick(flag, file.extractor.clone(), "vortex".to_string());
    let classifier_of = |flag: Option<String>| pick(flag, file.classifier.clone(), "svm".to_string());

    match cli.command {
        Command::Encode {
            input,
            output,
            extractor,
            manifest,
            model,
        } => {
            let extractor = extractor_of(extractor);
            commands::check_extractor(&extractor)?;
            let config = model.resolve(&file)?;
            let n = commands::encode(
                EncodeArgs {
                    input: &input,
                    output: &output,
                    extractor: &extractor,
                    manifest: manifest.as_deref(),
                },
                &config,
            )?;
            log::info!("wrote {n} descriptors to {}", output.display());
        }
        Command::Eval {
            input,
            manifest,
            classifier,
            extractor,
            ablate_m,
            compare,
            report,
            csv,
            model,
        } => {
            let classifier = classifier_of(classifier);
            let extractor = extractor_of(extractor);
            commands::check_classifier(&classifier)?;
            commands::check_extractor(&extractor)?;
            let config = model.resolve(&file)?;
            let mode = match (ablate_m, compare) {
                (Some(SoupSizes(m)), _) => EvalMode::Ablation(m),
                (None, true) => EvalMode::Compare,
                (None, false) => EvalMode::Single,
            };
            let stdout = commands::eval(
                EvalArgs {
                    input: &input,
                    manifest: &manifest,
                    classifier: &classifier,
                    extractor: &extractor,
                    mode,
                    report: report.as_deref(),
                    csv: csv.as_deref(),
                },
                &config,
            )?;
            print(&stdout)?;
        }
        Command::Synth(args) => {
            let (vte, manifest) = commands::synth(&args.spec(), &args.out_dir)?;
            print(&format!("{}\n{}", vte.display(), manifest.display()))?;
        }
        Command::Fit {
            input,
            output,
            classifier,
            model,
        } => {
            let classifier = classifier_of(classifier);
            commands::check_classifier(&classifier)?;
            let config = model.resolve(&file)?;
            let n = commands::fit(&input, &output, &classifier, &config)?;
            log::info!("fitted {classifier} on {n} descriptors; saved {}", output.display());
        }
        Command::Predict { input, model, output } => {
            let (csv, accuracy) = commands::predict(&input, &model)?;
            match output {
                Some(path) => std::fs::write(&path, csv)?,
                None => print(&csv)?,
            }
            if let Some(acc) = accuracy {
                log::info!("accuracy on labeled records: {acc:.4}");
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { Exit::Usage.into() } else { Exit::Ok.into() };
        }
    };
    init_logging(cli.verbose, cli.quiet);
    match run(cli) {
        Ok(()) => Exit::Ok.into(),
        Err(e) => {
            eprintln!("error: {e}");
            e.exit.into()
        }
    }
}
