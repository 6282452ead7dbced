//! `cdae` — train and evaluate cascade-decoder autoencoders on 28x28
//! grayscale image datasets.

mod convert;
mod report;
mod selftest;

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand, ValueEnum};

use cdae_core::cascade::{load_bundle, save_bundle, Arch, CascadeModel};
use cdae_core::data::{load_registry, Dataset};
use cdae_core::train::{evaluate, train, History, TrainConfig};
use cdae_core::{sample, Error, Real};

#[derive(Parser)]
#[command(
    name = "cdae",
    version,
    about = "Cascade-decoder autoencoders: training, evaluation and SSIM reporting"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Precision {
    F32,
    F64,
}

#[derive(Args, Clone)]
struct TrainOpts {
    /// Training epochs
    #[arg(long, default_value_t = 100)]
    epochs: usize,
    /// Minibatch size
    #[arg(long, default_value_t = 100)]
    batch: usize,
    /// Learning rate
    #[arg(long, default_value_t = 2.0e-4)]
    lr: f64,
    /// Latent dimension
    #[arg(long, default_value_t = 30)]
    latent_dim: usize,
    /// Serial decoder count (defaults to 3; single-stage architectures use 1)
    #[arg(long)]
    decoders: Option<usize>,
    /// Weight of the reconstruction penalty in adversarial objectives
    #[arg(long, default_value_t = 10.0)]
    lambda: f64,
    /// Scalar precision of the training run
    #[arg(long, value_enum, default_value_t = Precision::F64)]
    precision: Precision,
    /// Output directory for run artifacts
    #[arg(long, default_value = "runs")]
    out: PathBuf,
    /// Dataset root; falls back to $CDAE_DATA_DIR, then ./data
    #[arg(long)]
    data_dir: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Train one architecture on one dataset and save the model bundle
    Train {
        /// Architecture name (AE, GCDAE, RCDAE, ACDAE, RACDAE, AAE,
        /// GCDAAE, RCDAAE, ACDAAE, RACDAAE, CDVAE, CDWAE)
        #[arg(long)]
        arch: String,
        /// Dataset name from the registry, or "sample" for the
        /// embedded excerpt
        #[arg(long)]
        dataset: String,
        /// Master seed for init, shuffling and sampling
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[command(flatten)]
        opts: TrainOpts,
    },
    /// Evaluate a saved model bundle on a dataset's test split
    Eval {
        /// Path to a model bundle directory
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        dataset: String,
        #[arg(long)]
        data_dir: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = Precision::F64)]
        precision: Precision,
    },
    /// Train a plan of (architecture × dataset × seed) runs and write
    /// the SSIM/ΔSSIM report, plot data and sample grids
    Report {
        /// Architectures (repeatable or comma-separated); must include
        /// AE, the ΔSSIM baseline
        #[arg(long = "arch", value_delimiter = ',', required = true)]
        archs: Vec<String>,
        /// Datasets (repeatable or comma-separated)
        #[arg(long = "dataset", value_delimiter = ',', required = true)]
        datasets: Vec<String>,
        /// Seeds (repeatable or comma-separated)
        #[arg(long = "seed", value_delimiter = ',', default_value = "0")]
        seeds: Vec<u64>,
        /// Parallel runs
        #[arg(long, default_value_t = 1)]
        jobs: usize,
        #[command(flatten)]
        opts: TrainOpts,
    },
    /// Convert a recognized source layout into IDX dataset files
    ConvertDataset {
        /// Source directory
        source: PathBuf,
        /// Layout of the source
        #[arg(long, value_enum)]
        layout: convert::Layout,
        /// Registry name to write (e.g. fmnist)
        #[arg(long)]
        name: String,
        /// Destination dataset root
        #[arg(long, default_value = "data")]
        out_dir: PathBuf,
        /// Per-class training images for class-json sources
        #[arg(long, default_value_t = 6000)]
        train_per_class: usize,
        /// Per-class test images for class-json sources
        #[arg(long, default_value_t = 1000)]
        test_per_class: usize,
    },
    /// Run the built-in verification suite (gradient checks and
    /// metric oracles)
    Selftest,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) | Error::Spec(_) | Error::UnknownDataset { .. } | Error::Metric(_) => 2,
        Error::Data { .. }
        | Error::IdxFormat { .. }
        | Error::Checkpoint(_)
        | Error::Io(_)
        | Error::Json(_) => 3,
        Error::Diverged { .. } => 4,
        _ => 1,
    }
}

fn dispatch(cli: Cli) -> cdae_core::Result<()> {
    match cli.command {
        Command::Train {
            arch,
            dataset,
            seed,
            opts,
        } => match opts.precision {
            Precision::F64 => cmd_train::<f64>(&arch, &dataset, seed, &opts),
            Precision::F32 => cmd_train::<f32>(&arch, &dataset, seed, &opts),
        },
        Command::Eval {
            model,
            dataset,
            data_dir,
            precision,
        } => match precision {
            Precision::F64 => cmd_eval::<f64>(&model, &dataset, &data_dir),
            Precision::F32 => cmd_eval::<f32>(&model, &dataset, &data_dir),
        },
        Command::Report {
            archs,
            datasets,
            seeds,
            jobs,
            opts,
        } => match opts.precision {
            Precision::F64 => report::cmd_report::<f64>(&archs, &datasets, &seeds, jobs, &opts),
            Precision::F32 => report::cmd_report::<f32>(&archs, &datasets, &seeds, jobs, &opts),
        },
        Command::ConvertDataset {
            source,
            layout,
            name,
            out_dir,
            train_per_class,
            test_per_class,
        } => {
            let (train, test) = convert::convert(
                layout,
                &source,
                &name,
                &out_dir,
                train_per_class,
                test_per_class,
            )?;
            println!(
                "wrote {train} training and {test} test images to {}",
                out_dir.join(&name).display()
            );
            Ok(())
        }
        Command::Selftest => {
            let failures = selftest::run();
            if failures == 0 {
                Ok(())
            } else {
                eprintln!("selftest: {failures} check(s) failed");
                std::process::exit(1);
            }
        }
    }
}

fn data_root(flag: &Option<PathBuf>) -> PathBuf {
    flag.clone()
        .or_else(|| std::env::var_os("CDAE_DATA_DIR").map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("data"))
}

fn load_dataset_pair(name: &str, root: &Path) -> cdae_core::Result<(Dataset, Dataset)> {
    if name == "sample" {
        return Ok((sample::train(), sample::test()));
    }
    let pair = load_registry(name, root)?;
    for w in &pair.warnings {
        eprintln!("warning: {w}");
    }
    Ok((pair.train, pair.test))
}

/// Stage count: an explicit flag wins; single-stage architectures
/// default to 1, cascades to 3.
fn resolve_stages(arch: Arch, flag: Option<usize>) -> usize {
    flag.unwrap_or(if arch.forces_single_stage() { 1 } else { 3 })
}

fn build_config(arch: Arch, opts: &TrainOpts) -> TrainConfig {
    TrainConfig {
        epochs: opts.epochs,
        stages: resolve_stages(arch, opts.decoders),
        batch_size: opts.batch,
        learning_rate: opts.lr,
        latent_dim: opts.latent_dim,
        lambda: opts.lambda,
        ..TrainConfig::default()
    }
}

fn effective_config_json<T: Real>(
    arch: Arch,
    dataset: &str,
    config: &TrainConfig,
) -> serde_json::Value {
    let mut v = serde_json::to_value(config).expect("config serializes");
    let obj = v.as_object_mut().unwrap();
    obj.insert("arch".into(), arch.name().into());
    obj.insert("dataset".into(), dataset.into());
    obj.insert("precision".into(), T::NAME.into());
    v
}

struct RunOutput<T> {
    model: CascadeModel<T>,
    history: History,
    ssim: f64,
    run_dir: PathBuf,
}

/// Trains one run, evaluates it and writes the run directory
/// (config.json, training_log.csv, model bundle).
fn run_single<T: Real>(
    arch: Arch,
    dataset_name: &str,
    train_set: &Dataset,
    test_set: &Dataset,
    opts: &TrainOpts,
    seed: u64,
) -> cdae_core::Result<RunOutput<T>> {
    let mut config = build_config(arch, opts);
    config.seed = seed;
    config.validate()?;
    let mut model: CascadeModel<T> = CascadeModel::build(
        arch,
        config.stages,
        config.latent_dim,
        train_set.image_dim(),
        config.seed,
    )?;
    let history = train(&mut model, train_set, &config)?;
    let ssim = evaluate(&model, test_set)?;

    let run_dir = opts
        .out
        .join(format!("{}-{}-s{}", arch.name(), dataset_name, seed));
    std::fs::create_dir_all(&run_dir)?;
    std::fs::write(run_dir.join("training_log.csv"), history.to_csv())?;
    std::fs::write(
        run_dir.join("config.json"),
        serde_json::to_string_pretty(&effective_config_json::<T>(arch, dataset_name, &config))?,
    )?;
    save_bundle(&model, &run_dir.join("model"))?;
    Ok(RunOutput {
        model,
        history,
        ssim,
        run_dir,
    })
}

fn cmd_train<T: Real>(
    arch: &str,
    dataset: &str,
    seed: u64,
    opts: &TrainOpts,
) -> cdae_core::Result<()> {
    let arch = Arch::from_str(arch)?;
    let root = data_root(&opts.data_dir);
    let (train_set, test_set) = load_dataset_pair(dataset, &root)?;
    let out = run_single::<T>(arch, dataset, &train_set, &test_set, opts, seed)?;
    let last = out.history.records.last().expect("at least one record");
    println!(
        "trained {} on {dataset}: final stage loss {:.6}, test ssim {:.5}",
        arch.name(),
        last.loss,
        out.ssim
    );
    println!("artifacts in {}", out.run_dir.display());
    Ok(())
}

fn cmd_eval<T: Real>(
    model_dir: &Path,
    dataset: &str,
    data_dir: &Option<PathBuf>,
) -> cdae_core::Result<()> {
    let model: CascadeModel<T> = load_bundle(model_dir)?;
    let root = data_root(data_dir);
    let (_, test_set) = load_dataset_pair(dataset, &root)?;
    let s = evaluate(&model, &test_set)?;
    println!("ssim {s:.5}");
    Ok(())
}
