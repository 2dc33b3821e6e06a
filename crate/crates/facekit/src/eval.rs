//! Dataset ingestion and accuracy protocols.
//!
//! A dataset is a directory with one subdirectory per class, each holding
//! PGM files. Two protocols are provided: leave-one-out (train on all
//! samples but one, repeated for every sample) and a seeded stratified
//! holdout split. Both produce an [`EvalReport`] that renders to text, CSV,
//! or versioned JSON.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imaging::{GrayImage, FACE_SIZE};
use crate::som::{SomDetector, SomTrainConfig, DEFAULT_CLOSE_MATCH_THRESHOLD};
use crate::subspace::{image_vector, ProjectionBasis, SubspaceModel};
use crate::svm::{KernelSpec, SvmImageModel, DEFAULT_TOL};

const REPORT_VERSION: u32 = 1;

/// One labeled image with its source path.
#[derive(Clone, Debug)]
pub struct Sample {
    pub image: GrayImage,
    pub label: String,
    pub path: PathBuf,
}

/// Immutable labeled corpus. Class list is sorted and deduplicated; every
/// listed class has at least one sample.
#[derive(Clone, Debug)]
pub struct Dataset {
    samples: Vec<Sample>,
    classes: Vec<String>,
}

impl Dataset {
    pub fn from_samples(samples: Vec<Sample>) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::Dataset("dataset contains no samples".into()));
        }
        let mut classes: Vec<String> = samples.iter().map(|s| s.label.clone()).collect();
        classes.sort();
        classes.dedup();
        Ok(Dataset { samples, classes })
    }

    /// Loads `root/<class>/<file>.pgm` with classes and files in
    /// lexicographic order, so the same tree always yields the same sample
    /// order. Non-PGM files are ignored; an undecodable PGM aborts the load
    /// with its path.
    pub fn load(root: &Path) -> Result<Self> {
        let entries = std::fs::read_dir(root).map_err(|e| Error::io(root, e))?;
        let mut class_dirs: Vec<(String, PathBuf)> = Vec::new();
        for entry in entries {
            let entry = entry.map_err(|e| Error::io(root, e))?;
            let path = entry.path();
            if !path.is_dir() {
                continue;
            }
            let label = entry
                .file_name()
                .into_string()
                .map_err(|_| Error::Dataset(format!("{}: non-UTF-8 directory name", path.display())))?;
            class_dirs.push((label, path));
        }
        if class_dirs.is_empty() {
            return Err(Error::Dataset(format!(
                "{}: no class subdirectories found",
                root.display()
            )));
        }
        class_dirs.sort();

        let mut samples = Vec::new();
        for (label, dir) in &class_dirs {
            let mut files: Vec<PathBuf> = Vec::new();
            let entries = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
            for entry in entries {
                let entry = entry.map_err(|e| Error::io(dir, e))?;
                let path = entry.path();
                if path.is_file() && path.extension() == Some(std::ffi::OsStr::new("pgm")) {
                    files.push(path);
                }
            }
            if files.is_empty() {
                return Err(Error::Dataset(format!(
                    "{}: class directory holds no .pgm files",
                    dir.display()
                )));
            }
            files.sort();
            for path in files {
                let image = GrayImage::load_pgm(&path).map_err(|e| match e {
                    Error::Io { .. } => e,
                    other => Error::Dataset(format!("{}: {other}", path.display())),
                })?;
                samples.push(Sample {
                    image,
                    label: label.clone(),
                    path,
                });
            }
        }
        Dataset::from_samples(samples)
    }

    pub fn samples(&self) -> &[Sample] {
        &self.samples
    }

    pub fn classes(&self) -> &[String] {
        &self.classes
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

/// Trained classifier used by the protocols.
pub trait Predictor {
    fn predict(&self, image: &GrayImage) -> Result<String>;
}

/// Recognizer factory. Protocols call `train` once per fold, so trainers
/// must be shareable across fold threads.
pub trait Trainer: Sync {
    type Model: Predictor;

    fn train(&self, samples: &[&Sample]) -> Result<Self::Model>;
}

/// Evaluation protocol recorded on a report.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Protocol {
    LeaveOneOut,
    Holdout { fraction: f64, seed: u64 },
}

/// Per-class tally; `accuracy` rounds to 4 decimals, matching the rendered
/// formats.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ClassTally {
    pub label: String,
    pub correct: usize,
    pub total: usize,
}

impl ClassTally {
    pub fn accuracy(&self) -> f64 {
        ratio4(self.correct, self.total)
    }
}

fn ratio4(num: usize, den: usize) -> f64 {
    if den == 0 {
        return 0.0;
    }
    (num as f64 / den as f64 * 10000.0).round() / 10000.0
}

/// Output encoding for [`EvalReport::render`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ReportFormat {
    Text,
    Csv,
    Json,
}

/// Accuracy summary: per-class tallies plus a confusion matrix whose rows
/// are actual classes and columns predicted classes, both in class-list
/// order.
///
/// Wall time is carried for diagnostics but deliberately left out of every
/// rendered format, so identical runs produce byte-identical reports.
#[derive(Clone, Debug, PartialEq)]
pub struct EvalReport {
    protocol: Protocol,
    per_class: Vec<ClassTally>,
    confusion: Vec<Vec<usize>>,
    wall_seconds: f64,
}

impl EvalReport {
    /// Builds a report from a confusion matrix over `labels` (sorted,
    /// unique). Tallies are derived, so the row-sum invariant holds by
    /// construction.
    pub fn from_parts(
        protocol: Protocol,
        labels: Vec<String>,
        confusion: Vec<Vec<usize>>,
        wall_seconds: f64,
    ) -> Result<Self> {
        if labels.is_empty() {
            return Err(Error::InvalidReport("no classes".into()));
        }
        if labels.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidReport(
                "class labels must be sorted and unique".into(),
            ));
        }
        if confusion.len() != labels.len() || confusion.iter().any(|r| r.len() != labels.len()) {
            return Err(Error::InvalidReport(format!(
                "confusion matrix must be {n}x{n}",
                n = labels.len()
            )));
        }
        let per_class = labels
            .iter()
            .zip(&confusion)
            .enumerate()
            .map(|(i, (label, row))| {
                let total = row.iter().sum();
                if total == 0 {
                    return Err(Error::InvalidReport(format!(
                        "class {label} has no test samples"
                    )));
                }
                Ok(ClassTally {
                    label: label.clone(),
                    correct: row[i],
                    total,
                })
            })
            .collect::<Result<_>>()?;
        Ok(EvalReport {
            protocol,
            per_class,
            confusion,
            wall_seconds,
        })
    }

    pub fn protocol(&self) -> Protocol {
        self.protocol
    }

    pub fn per_class(&self) -> &[ClassTally] {
        &self.per_class
    }

    pub fn confusion(&self) -> &[Vec<usize>] {
        &self.confusion
    }

    pub fn wall_seconds(&self) -> f64 {
        self.wall_seconds
    }

    pub fn correct(&self) -> usize {
        self.per_class.iter().map(|t| t.correct).sum()
    }

    pub fn total(&self) -> usize {
        self.per_class.iter().map(|t| t.total).sum()
    }

    pub fn overall_accuracy(&self) -> f64 {
        ratio4(self.correct(), self.total())
    }

    pub fn render(&self, format: ReportFormat) -> String {
        match format {
            ReportFormat::Text => self.render_text(),
            ReportFormat::Csv => self.render_csv(),
            ReportFormat::Json => self.render_json(),
        }
    }

    fn protocol_line(&self) -> String {
        match self.protocol {
            Protocol::LeaveOneOut => "leave-one-out".into(),
            Protocol::Holdout { fraction, seed } => {
                format!("holdout (fraction {fraction:.2}, seed {seed})")
            }
        }
    }

    fn render_text(&self) -> String {
        let label_w = self
            .per_class
            .iter()
            .map(|t| t.label.len())
            .chain(["class".len(), "overall".len()])
            .max()
            .unwrap();
        let count_w = |header: &str, counts: &mut dyn Iterator<Item = usize>| {
            counts
                .map(|c| c.to_string().len())
                .chain([header.len()])
                .max()
                .unwrap()
        };
        let correct_w = count_w(
            "correct",
            &mut self.per_class.iter().map(|t| t.correct).chain([self.correct()]),
        );
        let total_w = count_w(
            "total",
            &mut self.per_class.iter().map(|t| t.total).chain([self.total()]),
        );
        let acc_w = "accuracy".len();

        let mut out = String::new();
        let _ = writeln!(out, "protocol: {}", self.protocol_line());
        let _ = writeln!(
            out,
            "{:<label_w$}  {:>correct_w$}  {:>total_w$}  {:>acc_w$}",
            "class", "correct", "total", "accuracy"
        );
        for t in &self.per_class {
            let _ = writeln!(
                out,
                "{:<label_w$}  {:>correct_w$}  {:>total_w$}  {:>acc_w$.4}",
                t.label,
                t.correct,
                t.total,
                t.accuracy()
            );
        }
        let _ = writeln!(
            out,
            "{:<label_w$}  {:>correct_w$}  {:>total_w$}  {:>acc_w$.4}",
            "overall",
            self.correct(),
            self.total(),
            self.overall_accuracy()
        );

        let _ = writeln!(out);
        let _ = writeln!(out, "confusion (rows actual, columns predicted)");
        let row_w = self.per_class.iter().map(|t| t.label.len()).max().unwrap();
        let col_ws: Vec<usize> = (0..self.per_class.len())
            .map(|j| {
                self.confusion
                    .iter()
                    .map(|row| row[j].to_string().len())
                    .chain([self.per_class[j].label.len()])
                    .max()
                    .unwrap()
            })
            .collect();
        let _ = write!(out, "{:<row_w$}", "");
        for (j, t) in self.per_class.iter().enumerate() {
            let _ = write!(out, "  {:>w$}", t.label, w = col_ws[j]);
        }
        let _ = writeln!(out);
        for (t, row) in self.per_class.iter().zip(&self.confusion) {
            let _ = write!(out, "{:<row_w$}", t.label);
            for (j, count) in row.iter().enumerate() {
                let _ = write!(out, "  {:>w$}", count, w = col_ws[j]);
            }
            let _ = writeln!(out);
        }
        out
    }

    fn render_csv(&self) -> String {
        let mut out = String::from("class,accuracy\n");
        for t in &self.per_class {
            let _ = writeln!(out, "{},{:.4}", t.label, t.accuracy());
        }
        let _ = writeln!(out, "overall,{:.4}", self.overall_accuracy());
        out
    }

    fn render_json(&self) -> String {
        let protocol = match self.protocol {
            Protocol::LeaveOneOut => ProtocolDoc {
                kind: "leave-one-out".into(),
                fraction: None,
                seed: None,
            },
            Protocol::Holdout { fraction, seed } => ProtocolDoc {
                kind: "holdout".into(),
                fraction: Some(fraction),
                seed: Some(seed),
            },
        };
        let doc = ReportDoc {
            version: REPORT_VERSION,
            protocol,
            classes: self
                .per_class
                .iter()
                .map(|t| ClassDoc {
                    label: t.label.clone(),
                    correct: t.correct,
                    total: t.total,
                    accuracy: t.accuracy(),
                })
                .collect(),
            confusion: self.confusion.clone(),
            overall: OverallDoc {
                correct: self.correct(),
                total: self.total(),
                accuracy: self.overall_accuracy(),
            },
        };
        let mut json = serde_json::to_string_pretty(&doc).expect("report serialization");
        json.push('\n');
        json
    }

    /// Parses a rendered JSON report. Wall time is not part of the rendered
    /// form, so it comes back as 0; everything else round-trips
    /// byte-identically.
    pub fn from_json(json: &str) -> Result<Self> {
        let doc: ReportDoc = serde_json::from_str(json)?;
        if doc.version != REPORT_VERSION {
            return Err(Error::ModelVersion {
                found: doc.version,
                expected: REPORT_VERSION,
            });
        }
        let protocol = match (doc.protocol.kind.as_str(), doc.protocol.fraction, doc.protocol.seed)
        {
            ("leave-one-out", None, None) => Protocol::LeaveOneOut,
            ("holdout", Some(fraction), Some(seed)) => Protocol::Holdout { fraction, seed },
            _ => {
                return Err(Error::InvalidReport(format!(
                    "malformed protocol record of kind {:?}",
                    doc.protocol.kind
                )))
            }
        };
        let labels: Vec<String> = doc.classes.iter().map(|c| c.label.clone()).collect();
        let report = EvalReport::from_parts(protocol, labels, doc.confusion, 0.0)?;
        for (tally, stated) in report.per_class.iter().zip(&doc.classes) {
            if tally.correct != stated.correct
                || tally.total != stated.total
                || tally.accuracy() != stated.accuracy
            {
                return Err(Error::InvalidReport(format!(
                    "class {} tallies disagree with the confusion matrix",
                    stated.label
                )));
            }
        }
        if report.correct() != doc.overall.correct
            || report.total() != doc.overall.total
            || report.overall_accuracy() != doc.overall.accuracy
        {
            return Err(Error::InvalidReport(
                "overall tallies disagree with the confusion matrix".into(),
            ));
        }
        Ok(report)
    }
}

#[derive(Serialize, Deserialize)]
struct ReportDoc {
    version: u32,
    protocol: ProtocolDoc,
    classes: Vec<ClassDoc>,
    confusion: Vec<Vec<usize>>,
    overall: OverallDoc,
}

#[derive(Serialize, Deserialize)]
struct ProtocolDoc {
    kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    fraction: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
}

#[derive(Serialize, Deserialize)]
struct ClassDoc {
    label: String,
    correct: usize,
    total: usize,
    accuracy: f64,
}

#[derive(Serialize, Deserialize)]
struct OverallDoc {
    correct: usize,
    total: usize,
    accuracy: f64,
}

fn class_index(classes: &[String], label: &str) -> Result<usize> {
    classes
        .binary_search_by(|c| c.as_str().cmp(label))
        .map_err(|_| Error::Dataset(format!("prediction {label:?} is not a dataset class")))
}

fn build_report(
    ds: &Dataset,
    outcomes: &[(usize, String)],
    protocol: Protocol,
    wall_seconds: f64,
) -> Result<EvalReport> {
    let n = ds.classes.len();
    let mut confusion = vec![vec![0usize; n]; n];
    for (sample_idx, predicted) in outcomes {
        let actual = class_index(&ds.classes, &ds.samples[*sample_idx].label)?;
        let predicted = class_index(&ds.classes, predicted)?;
        confusion[actual][predicted] += 1;
    }
    EvalReport::from_parts(protocol, ds.classes.clone(), confusion, wall_seconds)
}

fn fold_error(fold: usize, source: Error) -> Error {
    Error::Fold {
        fold,
        source: Box::new(source),
    }
}

/// Leave-one-out protocol: one fold per sample, trained on all the others.
/// Folds run in parallel; tallies and errors are merged in fold order, so
/// the outcome is deterministic.
pub fn leave_one_out<T: Trainer>(ds: &Dataset, trainer: &T) -> Result<EvalReport> {
    if ds.len() < 2 {
        return Err(Error::Dataset(
            "leave-one-out needs at least two samples".into(),
        ));
    }
    let started = Instant::now();
    let outcomes: Vec<Result<String>> = (0..ds.len())
        .into_par_iter()
        .map(|fold| {
            let train_set: Vec<&Sample> = ds
                .samples
                .iter()
                .enumerate()
                .filter(|(i, _)| *i != fold)
                .map(|(_, s)| s)
                .collect();
            let model = trainer
                .train(&train_set)
                .map_err(|e| fold_error(fold, e))?;
            model
                .predict(&ds.samples[fold].image)
                .map_err(|e| fold_error(fold, e))
        })
        .collect();
    let mut labeled = Vec::with_capacity(outcomes.len());
    for (fold, outcome) in outcomes.into_iter().enumerate() {
        labeled.push((fold, outcome?));
    }
    build_report(ds, &labeled, Protocol::LeaveOneOut, started.elapsed().as_secs_f64())
}

/// Seeded stratified holdout: per class, `round(fraction * n)` samples go
/// to the test side and the rest train, erroring if either side of any
/// class would be empty.
pub fn holdout<T: Trainer>(
    ds: &Dataset,
    fraction: f64,
    seed: u64,
    trainer: &T,
) -> Result<EvalReport> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "holdout fraction {fraction} outside (0, 1)"
        )));
    }
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut train_idx: Vec<usize> = Vec::new();
    let mut test_idx: Vec<usize> = Vec::new();
    for class in &ds.classes {
        let mut members: Vec<usize> = ds
            .samples
            .iter()
            .enumerate()
            .filter(|(_, s)| &s.label == class)
            .map(|(i, _)| i)
            .collect();
        let n_test = (fraction * members.len() as f64).round() as usize;
        if n_test == 0 || n_test >= members.len() {
            return Err(Error::UnstratifiableClass {
                label: class.clone(),
                size: members.len(),
                fraction,
            });
        }
        members.shuffle(&mut rng);
        test_idx.extend_from_slice(&members[..n_test]);
        train_idx.extend_from_slice(&members[n_test..]);
    }
    // Dataset order within each split keeps order-sensitive trainers
    // (nearest-neighbor tie rules) deterministic.
    train_idx.sort_unstable();
    test_idx.sort_unstable();

    let train_set: Vec<&Sample> = train_idx.iter().map(|&i| &ds.samples[i]).collect();
    let model = trainer.train(&train_set)?;
    let mut outcomes = Vec::with_capacity(test_idx.len());
    for &i in &test_idx {
        outcomes.push((i, model.predict(&ds.samples[i].image)?));
    }
    build_report(
        ds,
        &outcomes,
        Protocol::Holdout { fraction, seed },
        started.elapsed().as_secs_f64(),
    )
}

fn vectorize(samples: &[&Sample]) -> Result<(Vec<Vec<f64>>, Vec<String>)> {
    let vectors = samples
        .iter()
        .map(|s| image_vector(&s.image))
        .collect::<Result<_>>()?;
    let labels = samples.iter().map(|s| s.label.clone()).collect();
    Ok((vectors, labels))
}

/// Nearest-neighbor recognizer over a seeded random projection.
#[derive(Clone, Copy, Debug)]
pub struct RandomProjectionTrainer {
    pub dim: usize,
    pub seed: u64,
}

impl Trainer for RandomProjectionTrainer {
    type Model = SubspaceModel;

    fn train(&self, samples: &[&Sample]) -> Result<SubspaceModel> {
        let (vectors, labels) = vectorize(samples)?;
        let basis = ProjectionBasis::random(FACE_SIZE * FACE_SIZE, self.dim, self.seed)?;
        SubspaceModel::fit(basis, &vectors, &labels)
    }
}

/// Nearest-neighbor recognizer over principal components of the training
/// fold.
#[derive(Clone, Copy, Debug)]
pub struct PcaTrainer {
    pub dim: usize,
}

impl Trainer for PcaTrainer {
    type Model = SubspaceModel;

    fn train(&self, samples: &[&Sample]) -> Result<SubspaceModel> {
        let (vectors, labels) = vectorize(samples)?;
        let basis = ProjectionBasis::pca(&vectors, self.dim)?;
        SubspaceModel::fit(basis, &vectors, &labels)
    }
}

impl Predictor for SubspaceModel {
    fn predict(&self, image: &GrayImage) -> Result<String> {
        let v = image_vector(image)?;
        let (label, _) = self.nearest_neighbor(&v)?;
        Ok(label.to_string())
    }
}

/// One detector per class; prediction picks the class whose detector
/// reports the fewest patch mismatches, ties going to the smallest label.
#[derive(Clone, Copy, Debug)]
pub struct SomTrainer {
    pub alpha0: f64,
    pub dist0: u32,
    pub seed: u64,
}

impl Default for SomTrainer {
    fn default() -> Self {
        SomTrainer {
            alpha0: 0.9,
            dist0: 4,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug)]
pub struct SomClassifier {
    classes: Vec<String>,
    detectors: Vec<SomDetector>,
}

impl SomClassifier {
    pub fn classes(&self) -> &[String] {
        &self.classes
    }

    pub fn detectors(&self) -> &[SomDetector] {
        &self.detectors
    }
}

impl Trainer for SomTrainer {
    type Model = SomClassifier;

    fn train(&self, samples: &[&Sample]) -> Result<SomClassifier> {
        let mut classes: Vec<String> = samples.iter().map(|s| s.label.clone()).collect();
        classes.sort();
        classes.dedup();
        if classes.is_empty() {
            return Err(Error::EmptyTrainingSet);
        }
        let detectors = classes
            .iter()
            .map(|class| {
                let images: Vec<GrayImage> = samples
                    .iter()
                    .filter(|s| &s.label == class)
                    .map(|s| s.image.clone())
                    .collect();
                let cfg = SomTrainConfig {
                    alpha0: self.alpha0,
                    dist0: self.dist0,
                    num_iter: images.len().max(1) as u32,
                    seed: self.seed,
                };
                SomDetector::train(&images, cfg, DEFAULT_CLOSE_MATCH_THRESHOLD)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(SomClassifier { classes, detectors })
    }
}

impl Predictor for SomClassifier {
    fn predict(&self, image: &GrayImage) -> Result<String> {
        let mut best = 0usize;
        let mut best_mismatches = usize::MAX;
        for (i, det) in self.detectors.iter().enumerate() {
            let mismatches = det.window_mismatches(image)?;
            if mismatches < best_mismatches {
                best = i;
                best_mismatches = mismatches;
            }
        }
        Ok(self.classes[best].clone())
    }
}

/// One-vs-rest SVM recognizer, optionally over principal components.
#[derive(Clone, Copy, Debug)]
pub struct SvmTrainer {
    pub kernel: KernelSpec,
    pub c: f64,
    pub tol: f64,
    pub pca_dim: Option<usize>,
}

impl SvmTrainer {
    /// Quadratic-kernel trainer, the combination used for the bundled
    /// recognition comparisons.
    pub fn quadratic(c: f64, pca_dim: Option<usize>) -> Self {
        SvmTrainer {
            kernel: KernelSpec::quadratic(),
            c,
            tol: DEFAULT_TOL,
            pca_dim,
        }
    }
}

impl Trainer for SvmTrainer {
    type Model = SvmImageModel;

    fn train(&self, samples: &[&Sample]) -> Result<SvmImageModel> {
        let images: Vec<GrayImage> = samples.iter().map(|s| s.image.clone()).collect();
        let labels: Vec<String> = samples.iter().map(|s| s.label.clone()).collect();
        SvmImageModel::fit(&images, &labels, self.kernel, self.c, self.tol, self.pca_dim)
    }
}

impl Predictor for SvmImageModel {
    fn predict(&self, image: &GrayImage) -> Result<String> {
        SvmImageModel::predict(self, image).map(str::to_string)
    }
}
