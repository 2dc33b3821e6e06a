//! Batch front end: train detector, recognizer, and classifier models,
//! apply them to single images, and score them on labeled datasets.
//!
//! Exit codes: 0 success (including help and version), 1 usage problem,
//! 2 data or model problem. Every run with the same arguments, inputs,
//! and seeds writes byte-identical model files and reports.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand, ValueEnum};
use facekit::eval::{self, PcaTrainer, RandomProjectionTrainer, SomTrainer, SvmTrainer};
use facekit::som::DEFAULT_CLOSE_MATCH_THRESHOLD;
use facekit::svm::{DEFAULT_C, DEFAULT_TOL};
use facekit::{
    Dataset, Error, EvalReport, GrayImage, KernelSpec, Predictor, ReportFormat, Result,
    SomDetector, SomTrainConfig, SubspaceModel, SvmImageModel, Trainer, FACE_SIZE,
};

#[derive(Parser)]
#[command(name = "facekit", version, about = "Face detection and recognition toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a patch-map detector on every .pgm under a directory
    SomTrain(SomTrainArgs),
    /// Match segmented objects in an image against a trained detector
    SomMatch(ModelImageArgs),
    /// Train a subspace nearest-neighbor recognizer on a class tree
    RecTrain(RecTrainArgs),
    /// Predict the class of an image with a trained recognizer
    RecPredict(ModelImageArgs),
    /// Train a multiclass kernel SVM on a class tree
    SvmTrain(SvmTrainArgs),
    /// Predict the class of an image with a trained SVM
    SvmPredict(ModelImageArgs),
    /// Score a method on a class tree under a chosen protocol
    Evaluate(EvaluateArgs),
}

#[derive(Args)]
struct SomTrainArgs {
    /// Directory searched recursively for .pgm training images
    #[arg(long)]
    data: PathBuf,
    /// Where to write the detector model
    #[arg(long)]
    out: PathBuf,
    /// Initial learning rate
    #[arg(long, default_value_t = 0.9)]
    alpha: f64,
    /// Initial neighborhood radius in grid cells
    #[arg(long, default_value_t = 4)]
    dist: u32,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Mismatch count at which a close match becomes dissimilar
    #[arg(long, default_value_t = DEFAULT_CLOSE_MATCH_THRESHOLD)]
    m: usize,
}

#[derive(Args)]
struct ModelImageArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    image: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum RecMethod {
    /// Seeded Gaussian random projection
    Rp,
    /// Principal component basis
    Pca,
}

#[derive(Args)]
struct RecTrainArgs {
    /// Class tree: one subdirectory per class holding .pgm images
    #[arg(long)]
    data: PathBuf,
    #[arg(long, value_enum)]
    method: RecMethod,
    /// Subspace dimension
    #[arg(long)]
    dim: usize,
    #[arg(long)]
    out: PathBuf,
    /// Basis seed; pca ignores it
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Clone, Copy, ValueEnum)]
enum KernelArg {
    Linear,
    /// Quadratic polynomial (x.y + 1)^2
    Poly2,
    Rbf,
}

#[derive(Args)]
struct SvmTrainArgs {
    /// Class tree: one subdirectory per class holding .pgm images
    #[arg(long)]
    data: PathBuf,
    #[arg(long, value_enum)]
    kernel: KernelArg,
    /// Soft-margin penalty
    #[arg(long)]
    c: f64,
    /// Rbf width; defaults to 1 / input dimension
    #[arg(long)]
    gamma: Option<f64>,
    /// Convergence tolerance on the optimality gap
    #[arg(long, default_value_t = DEFAULT_TOL)]
    tol: f64,
    /// Project onto this many principal components before training
    #[arg(long)]
    pca_dim: Option<usize>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum EvalMethod {
    /// Per-class detectors, least mismatches wins
    Som,
    /// Random projection (dim 100) + nearest neighbor
    Rp,
    /// Principal components (dim 20) + nearest neighbor
    Pca,
    /// Quadratic-kernel SVM on raw pixels, C = 1
    Svm,
    /// Quadratic-kernel SVM on 20 principal components, C = 1
    PcaSvm,
}

#[derive(Clone, Copy, ValueEnum)]
enum ProtocolArg {
    /// Leave one out
    Loo,
    /// Stratified holdout
    Holdout,
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Text,
    Csv,
    Json,
}

#[derive(Args)]
struct EvaluateArgs {
    /// Class tree: one subdirectory per class holding .pgm images
    #[arg(long)]
    data: PathBuf,
    #[arg(long, value_enum)]
    method: EvalMethod,
    #[arg(long, value_enum)]
    protocol: ProtocolArg,
    #[arg(long, value_enum, default_value_t = FormatArg::Text)]
    format: FormatArg,
    /// Seed for training randomness and the holdout split
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Test fraction per class; holdout only
    #[arg(long, default_value_t = 0.3)]
    fraction: f64,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            // clap exits with 2 by default; here 2 means a data or model
            // problem, so help and version leave with 0 and everything
            // else argument-shaped leaves with 1.
            let code = match err.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = err.print();
            return ExitCode::from(code);
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(exit_code(&err))
        }
    }
}

/// Bad flag values surface as usage errors; anything involving the data
/// or a model file does not.
fn exit_code(err: &Error) -> u8 {
    match err {
        Error::InvalidParameter(_) => 1,
        _ => 2,
    }
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::SomTrain(args) => som_train(args),
        Command::SomMatch(args) => som_match(args),
        Command::RecTrain(args) => rec_train(args),
        Command::RecPredict(args) => rec_predict(args),
        Command::SvmTrain(args) => svm_train(args),
        Command::SvmPredict(args) => svm_predict(args),
        Command::Evaluate(args) => evaluate(args),
    }
}

fn som_train(args: SomTrainArgs) -> Result<()> {
    let mut paths = Vec::new();
    collect_pgms(&args.data, &mut paths)?;
    let images: Vec<GrayImage> = paths
        .iter()
        .map(GrayImage::load_pgm)
        .collect::<Result<_>>()?;
    let cfg = SomTrainConfig {
        alpha0: args.alpha,
        dist0: args.dist,
        num_iter: images.len().max(1) as u32,
        seed: args.seed,
    };
    let detector = SomDetector::train(&images, cfg, args.m)?;
    write_atomic(&args.out, &detector.to_json())
}

fn som_match(args: ModelImageArgs) -> Result<()> {
    let detector = SomDetector::from_json(&read(&args.model)?)?;
    let image = GrayImage::load_pgm(&args.image)?;
    for (_, verdict) in detector.match_objects(&image)? {
        println!("{}", verdict.kind);
    }
    Ok(())
}

fn rec_train(args: RecTrainArgs) -> Result<()> {
    let ds = Dataset::load(&args.data)?;
    let samples: Vec<_> = ds.samples().iter().collect();
    let model = match args.method {
        RecMethod::Rp => RandomProjectionTrainer {
            dim: args.dim,
            seed: args.seed,
        }
        .train(&samples)?,
        RecMethod::Pca => PcaTrainer { dim: args.dim }.train(&samples)?,
    };
    write_atomic(&args.out, &model.to_json())
}

fn rec_predict(args: ModelImageArgs) -> Result<()> {
    let model = SubspaceModel::from_json(&read(&args.model)?)?;
    let image = GrayImage::load_pgm(&args.image)?;
    println!("{}", model.predict(&image)?);
    Ok(())
}

fn svm_train(args: SvmTrainArgs) -> Result<()> {
    let kernel = match args.kernel {
        KernelArg::Linear | KernelArg::Poly2 if args.gamma.is_some() => {
            return Err(Error::InvalidParameter(
                "--gamma only applies to the rbf kernel".into(),
            ));
        }
        KernelArg::Linear => KernelSpec::Linear,
        KernelArg::Poly2 => KernelSpec::quadratic(),
        KernelArg::Rbf => {
            let dim = args.pca_dim.unwrap_or(FACE_SIZE * FACE_SIZE);
            KernelSpec::Rbf {
                gamma: args.gamma.unwrap_or(1.0 / dim as f64),
            }
        }
    };
    let ds = Dataset::load(&args.data)?;
    let images: Vec<GrayImage> = ds.samples().iter().map(|s| s.image.clone()).collect();
    let labels: Vec<String> = ds.samples().iter().map(|s| s.label.clone()).collect();
    let model = SvmImageModel::fit(&images, &labels, kernel, args.c, args.tol, args.pca_dim)?;
    write_atomic(&args.out, &model.to_json())
}

fn svm_predict(args: ModelImageArgs) -> Result<()> {
    let model = SvmImageModel::from_json(&read(&args.model)?)?;
    let image = GrayImage::load_pgm(&args.image)?;
    println!("{}", model.predict(&image)?);
    Ok(())
}

fn evaluate(args: EvaluateArgs) -> Result<()> {
    let ds = Dataset::load(&args.data)?;
    let report = match args.method {
        EvalMethod::Som => run_protocol(
            &ds,
            &SomTrainer {
                seed: args.seed,
                ..SomTrainer::default()
            },
            &args,
        )?,
        EvalMethod::Rp => run_protocol(
            &ds,
            &RandomProjectionTrainer {
                dim: 100,
                seed: args.seed,
            },
            &args,
        )?,
        EvalMethod::Pca => run_protocol(&ds, &PcaTrainer { dim: 20 }, &args)?,
        EvalMethod::Svm => run_protocol(&ds, &SvmTrainer::quadratic(DEFAULT_C, None), &args)?,
        EvalMethod::PcaSvm => {
            run_protocol(&ds, &SvmTrainer::quadratic(DEFAULT_C, Some(20)), &args)?
        }
    };
    let format = match args.format {
        FormatArg::Text => ReportFormat::Text,
        FormatArg::Csv => ReportFormat::Csv,
        FormatArg::Json => ReportFormat::Json,
    };
    print!("{}", report.render(format));
    Ok(())
}

fn run_protocol<T: eval::Trainer>(
    ds: &Dataset,
    trainer: &T,
    args: &EvaluateArgs,
) -> Result<EvalReport> {
    match args.protocol {
        ProtocolArg::Loo => eval::leave_one_out(ds, trainer),
        ProtocolArg::Holdout => eval::holdout(ds, args.fraction, args.seed, trainer),
    }
}

/// Depth-first .pgm collection in sorted order, so corpus order never
/// depends on directory enumeration order.
fn collect_pgms(dir: &Path, out: &mut Vec<PathBuf>) -> Result<()> {
    let mut entries: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .map(|entry| entry.map(|e| e.path()))
        .collect::<std::io::Result<_>>()
        .map_err(|e| Error::io(dir, e))?;
    entries.sort();
    for path in entries {
        if path.is_dir() {
            collect_pgms(&path, out)?;
        } else if path.extension() == Some(std::ffi::OsStr::new("pgm")) {
            out.push(path);
        }
    }
    Ok(())
}

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

/// Writes through a temp file in the target directory so a failed run
/// never leaves a partial model behind.
fn write_atomic(path: &Path, contents: &str) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut file = tempfile::NamedTempFile::new_in(dir).map_err(|e| Error::io(dir, e))?;
    file.write_all(contents.as_bytes())
        .map_err(|e| Error::io(path, e))?;
    file.persist(path).map_err(|e| Error::io(path, e.error))?;
    Ok(())
}
