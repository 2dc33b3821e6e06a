//! Soft-margin kernel SVMs: a batch SMO solver, an online process/reprocess
//! learner, one-vs-rest multiclass wrapping, and the image pipeline that
//! chains projection, scaling, and the multiclass machine.

mod online;
mod smo;

pub use online::OnlineSvm;
pub use smo::SmoSummary;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::FeatureNormalization;
use crate::imaging::GrayImage;
use crate::subspace::{image_vector, BasisKind, ProjectionBasis};

/// Default box constraint.
pub const DEFAULT_C: f64 = 1.0;
/// Default KKT tolerance.
pub const DEFAULT_TOL: f64 = 1e-3;

const MODEL_VERSION: u32 = 1;

/// Kernel family and hyperparameters.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum KernelSpec {
    Linear,
    Polynomial { degree: u32, offset: f64 },
    Rbf { gamma: f64 },
}

impl KernelSpec {
    /// The quadratic kernel `(x.y + 1)^2`.
    pub fn quadratic() -> Self {
        KernelSpec::Polynomial {
            degree: 2,
            offset: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            KernelSpec::Linear => Ok(()),
            KernelSpec::Polynomial { degree, offset } => {
                if degree == 0 {
                    Err(Error::InvalidParameter("polynomial degree must be >= 1".into()))
                } else if !offset.is_finite() {
                    Err(Error::InvalidParameter("polynomial offset must be finite".into()))
                } else {
                    Ok(())
                }
            }
            KernelSpec::Rbf { gamma } => {
                if gamma > 0.0 && gamma.is_finite() {
                    Ok(())
                } else {
                    Err(Error::InvalidParameter(format!("rbf gamma {gamma} must be > 0")))
                }
            }
        }
    }

    /// Kernel value; the inputs must have equal dimension.
    pub fn eval(&self, x: &[f64], y: &[f64]) -> Result<f64> {
        if x.len() != y.len() {
            return Err(Error::DimensionMismatch {
                expected: x.len(),
                actual: y.len(),
            });
        }
        Ok(self.eval_unchecked(x, y))
    }

    pub(crate) fn eval_unchecked(&self, x: &[f64], y: &[f64]) -> f64 {
        match *self {
            KernelSpec::Linear => dot(x, y),
            KernelSpec::Polynomial { degree, offset } => (dot(x, y) + offset).powi(degree as i32),
            KernelSpec::Rbf { gamma } => {
                let d2: f64 = x
                    .iter()
                    .zip(y)
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum();
                (-gamma * d2).exp()
            }
        }
    }
}

fn dot(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| a * b).sum()
}

/// A trained binary machine: `f(x) = sum_s dual_s K(sv_s, x) + b` with
/// `dual_s = alpha_s y_s`. Vectors with zero alpha are not stored.
#[derive(Clone, Debug, PartialEq)]
pub struct SvmModel {
    kernel: KernelSpec,
    c: f64,
    dim: usize,
    support_vectors: Vec<Vec<f64>>,
    dual_coefs: Vec<f64>,
    bias: f64,
}

impl SvmModel {
    pub fn from_parts(
        kernel: KernelSpec,
        c: f64,
        dim: usize,
        support_vectors: Vec<Vec<f64>>,
        dual_coefs: Vec<f64>,
        bias: f64,
    ) -> Result<Self> {
        kernel.validate()?;
        if !(c > 0.0) {
            return Err(Error::InvalidParameter(format!("C {c} must be > 0")));
        }
        if support_vectors.len() != dual_coefs.len() {
            return Err(Error::DimensionMismatch {
                expected: support_vectors.len(),
                actual: dual_coefs.len(),
            });
        }
        for sv in &support_vectors {
            if sv.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    actual: sv.len(),
                });
            }
            if sv.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite);
            }
        }
        // Tiny slack over C absorbs clipping round-off.
        if dual_coefs
            .iter()
            .any(|&a| a == 0.0 || !a.is_finite() || a.abs() > c * (1.0 + 1e-9))
        {
            return Err(Error::InvalidModel(
                "dual coefficients must be nonzero and bounded by C".into(),
            ));
        }
        if !bias.is_finite() {
            return Err(Error::NonFinite);
        }
        Ok(SvmModel {
            kernel,
            c,
            dim,
            support_vectors,
            dual_coefs,
            bias,
        })
    }

    pub fn kernel(&self) -> KernelSpec {
        self.kernel
    }

    pub fn c(&self) -> f64 {
        self.c
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn support_vectors(&self) -> &[Vec<f64>] {
        &self.support_vectors
    }

    pub fn dual_coefs(&self) -> &[f64] {
        &self.dual_coefs
    }

    pub fn bias(&self) -> f64 {
        self.bias
    }

    /// `f(x)`; an empty support set degenerates to the bias.
    pub fn decision_value(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                actual: x.len(),
            });
        }
        let mut f = self.bias;
        for (sv, &d) in self.support_vectors.iter().zip(&self.dual_coefs) {
            f += d * self.kernel.eval_unchecked(sv, x);
        }
        Ok(f)
    }

    /// Sign classification; 0 maps to +1.
    pub fn predict_sign(&self, x: &[f64]) -> Result<f64> {
        Ok(if self.decision_value(x)? >= 0.0 { 1.0 } else { -1.0 })
    }
}

/// Value of the soft-margin dual `sum alpha - 1/2 sum_ij alpha_i alpha_j
/// y_i y_j K_ij` at the model's multipliers (non-support points add zero).
pub fn dual_objective(model: &SvmModel) -> f64 {
    let mut linear = 0.0;
    let mut quad = 0.0;
    for (i, (svi, &di)) in model
        .support_vectors
        .iter()
        .zip(&model.dual_coefs)
        .enumerate()
    {
        linear += di.abs();
        for (svj, &dj) in model.support_vectors.iter().zip(&model.dual_coefs).take(i) {
            quad += 2.0 * di * dj * model.kernel.eval_unchecked(svi, svj);
        }
        quad += di * di * model.kernel.eval_unchecked(svi, svi);
    }
    linear - 0.5 * quad
}

/// Trains a binary soft-margin SVM by sequential minimal optimization with
/// maximal-violating-pair selection. Labels must be -1 or +1 with both
/// classes present.
pub fn smo_train(
    points: &[Vec<f64>],
    labels: &[f64],
    kernel: KernelSpec,
    c: f64,
    tol: f64,
) -> Result<(SvmModel, SmoSummary)> {
    let dim = validate_problem(points, labels, kernel, c, tol)?;
    let gram = smo::Gram::build(points, kernel);
    let outcome = smo::solve(&gram, labels, c, tol);
    Ok((
        assemble_model(points, labels, &outcome.alphas, kernel, c, dim, outcome.bias)?,
        outcome.summary,
    ))
}

fn assemble_model(
    points: &[Vec<f64>],
    labels: &[f64],
    alphas: &[f64],
    kernel: KernelSpec,
    c: f64,
    dim: usize,
    bias: f64,
) -> Result<SvmModel> {
    let mut support_vectors = Vec::new();
    let mut dual_coefs = Vec::new();
    for ((p, &y), &a) in points.iter().zip(labels).zip(alphas) {
        if a > 0.0 {
            support_vectors.push(p.clone());
            dual_coefs.push(a * y);
        }
    }
    SvmModel::from_parts(kernel, c, dim, support_vectors, dual_coefs, bias)
}

fn validate_geometry(points: &[Vec<f64>], kernel: KernelSpec, c: f64, tol: f64) -> Result<usize> {
    kernel.validate()?;
    if !(c > 0.0) {
        return Err(Error::InvalidParameter(format!("C {c} must be > 0")));
    }
    if !(tol > 0.0) {
        return Err(Error::InvalidParameter(format!("tol {tol} must be > 0")));
    }
    if points.is_empty() {
        return Err(Error::EmptyTrainingSet);
    }
    let dim = points[0].len();
    for p in points {
        if p.len() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                actual: p.len(),
            });
        }
        if p.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite);
        }
    }
    Ok(dim)
}

fn validate_problem(
    points: &[Vec<f64>],
    labels: &[f64],
    kernel: KernelSpec,
    c: f64,
    tol: f64,
) -> Result<usize> {
    let dim = validate_geometry(points, kernel, c, tol)?;
    if points.len() != labels.len() {
        return Err(Error::DimensionMismatch {
            expected: points.len(),
            actual: labels.len(),
        });
    }
    for &y in labels {
        if y != 1.0 && y != -1.0 {
            return Err(Error::InvalidLabel(y));
        }
    }
    if labels.iter().all(|&y| y == labels[0]) {
        return Err(Error::SingleClass);
    }
    Ok(dim)
}

/// One binary machine per class, trained class-versus-rest in sorted label
/// order.
#[derive(Clone, Debug, PartialEq)]
pub struct MulticlassModel {
    classes: Vec<String>,
    models: Vec<SvmModel>,
}

impl MulticlassModel {
    pub fn from_parts(classes: Vec<String>, models: Vec<SvmModel>) -> Result<Self> {
        if classes.len() != models.len() {
            return Err(Error::InvalidModel(
                "one binary model per class is required".into(),
            ));
        }
        if classes.is_empty() {
            return Err(Error::SingleClass);
        }
        Ok(MulticlassModel { classes, models })
    }

    pub fn classes(&self) -> &[String] {
        &self.classes
    }

    pub fn models(&self) -> &[SvmModel] {
        &self.models
    }

    pub fn decision_values(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.models.iter().map(|m| m.decision_value(x)).collect()
    }

    /// Label with the largest decision value; ties go to the smallest label
    /// (classes are kept sorted).
    pub fn predict(&self, x: &[f64]) -> Result<&str> {
        let values = self.decision_values(x)?;
        let mut best = 0;
        for (i, v) in values.iter().enumerate() {
            if *v > values[best] {
                best = i;
            }
        }
        Ok(&self.classes[best])
    }
}

/// Trains a one-vs-rest multiclass SVM. The kernel matrix is shared across
/// the per-class binary problems.
pub fn ovr_train(
    points: &[Vec<f64>],
    labels: &[String],
    kernel: KernelSpec,
    c: f64,
    tol: f64,
) -> Result<MulticlassModel> {
    if points.len() != labels.len() {
        return Err(Error::DimensionMismatch {
            expected: points.len(),
            actual: labels.len(),
        });
    }
    let mut classes: Vec<String> = labels.to_vec();
    classes.sort();
    classes.dedup();
    if classes.len() < 2 {
        return Err(Error::SingleClass);
    }
    let dim = validate_geometry(points, kernel, c, tol)?;
    let gram = smo::Gram::build(points, kernel);
    let models = classes
        .iter()
        .map(|class| {
            let y: Vec<f64> = labels
                .iter()
                .map(|l| if l == class { 1.0 } else { -1.0 })
                .collect();
            let outcome = smo::solve(&gram, &y, c, tol);
            assemble_model(points, &y, &outcome.alphas, kernel, c, dim, outcome.bias)
        })
        .collect::<Result<_>>()?;
    MulticlassModel::from_parts(classes, models)
}

/// End-to-end image classifier: canonical vectorization, optional PCA
/// projection, min-max scaling, then the one-vs-rest machine.
#[derive(Clone, Debug, PartialEq)]
pub struct SvmImageModel {
    basis: Option<ProjectionBasis>,
    scaler: FeatureNormalization,
    multiclass: MulticlassModel,
}

impl SvmImageModel {
    /// Trains the pipeline. With `pca_dim` set, images are projected onto
    /// that many principal components before scaling and training.
    pub fn fit(
        images: &[GrayImage],
        labels: &[String],
        kernel: KernelSpec,
        c: f64,
        tol: f64,
        pca_dim: Option<usize>,
    ) -> Result<Self> {
        if images.is_empty() {
            return Err(Error::EmptyTrainingSet);
        }
        let vectors: Vec<Vec<f64>> = images.iter().map(image_vector).collect::<Result<_>>()?;
        let basis = match pca_dim {
            Some(d) => Some(ProjectionBasis::pca(&vectors, d)?),
            None => None,
        };
        let inputs: Vec<Vec<f64>> = match &basis {
            Some(b) => vectors.iter().map(|v| b.project(v)).collect::<Result<_>>()?,
            None => vectors,
        };
        let scaler = FeatureNormalization::fit(inputs.iter().map(Vec::as_slice))?;
        let scaled: Vec<Vec<f64>> = inputs
            .iter()
            .map(|v| scaler.apply(v))
            .collect::<Result<_>>()?;
        let multiclass = ovr_train(&scaled, labels, kernel, c, tol)?;
        Ok(SvmImageModel {
            basis,
            scaler,
            multiclass,
        })
    }

    pub fn basis(&self) -> Option<&ProjectionBasis> {
        self.basis.as_ref()
    }

    pub fn multiclass(&self) -> &MulticlassModel {
        &self.multiclass
    }

    pub fn predict(&self, image: &GrayImage) -> Result<&str> {
        let v = image_vector(image)?;
        let projected = match &self.basis {
            Some(b) => b.project(&v)?,
            None => v,
        };
        let scaled = self.scaler.apply(&projected)?;
        self.multiclass.predict(&scaled)
    }

    pub fn to_json(&self) -> String {
        let first = &self.multiclass.models[0];
        serde_json::to_string_pretty(&SvmDoc {
            version: MODEL_VERSION,
            kernel: first.kernel,
            c: first.c,
            dim: first.dim,
            scaler: self.scaler.clone(),
            basis: self.basis.as_ref().map(BasisDoc::from_basis),
            classes: self.multiclass.classes.clone(),
            models: self
                .multiclass
                .models
                .iter()
                .map(|m| BinaryDoc {
                    support_vectors: m.support_vectors.clone(),
                    dual_coefs: m.dual_coefs.clone(),
                    bias: m.bias,
                })
                .collect(),
        })
        .expect("serializable by construction")
    }

    pub fn from_json(json: &str) -> Result<Self> {
        let doc: SvmDoc = serde_json::from_str(json)?;
        if doc.version != MODEL_VERSION {
            return Err(Error::ModelVersion {
                found: doc.version,
                expected: MODEL_VERSION,
            });
        }
        if doc.scaler.dim() != doc.dim {
            return Err(Error::InvalidModel("scaler arity disagrees with dim".into()));
        }
        let basis = doc.basis.map(BasisDoc::into_basis).transpose()?;
        if let Some(b) = &basis {
            if b.d_out() != doc.dim {
                return Err(Error::InvalidModel(
                    "basis output dimension disagrees with dim".into(),
                ));
            }
        }
        let models = doc
            .models
            .into_iter()
            .map(|m| {
                SvmModel::from_parts(
                    doc.kernel,
                    doc.c,
                    doc.dim,
                    m.support_vectors,
                    m.dual_coefs,
                    m.bias,
                )
            })
            .collect::<Result<_>>()?;
        Ok(SvmImageModel {
            basis,
            scaler: doc.scaler,
            multiclass: MulticlassModel::from_parts(doc.classes, models)?,
        })
    }
}

#[derive(Serialize, Deserialize)]
struct SvmDoc {
    version: u32,
    kernel: KernelSpec,
    c: f64,
    dim: usize,
    scaler: FeatureNormalization,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    basis: Option<BasisDoc>,
    classes: Vec<String>,
    models: Vec<BinaryDoc>,
}

#[derive(Serialize, Deserialize)]
struct BinaryDoc {
    support_vectors: Vec<Vec<f64>>,
    dual_coefs: Vec<f64>,
    bias: f64,
}

#[derive(Serialize, Deserialize)]
struct BasisDoc {
    kind: BasisKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
    d_in: usize,
    d_out: usize,
    mean: Vec<f64>,
    matrix: Vec<Vec<f64>>,
}

impl BasisDoc {
    fn from_basis(basis: &ProjectionBasis) -> Self {
        BasisDoc {
            kind: basis.kind(),
            seed: basis.seed(),
            d_in: basis.d_in(),
            d_out: basis.d_out(),
            mean: basis.mean().to_vec(),
            matrix: basis
                .matrix()
                .column_iter()
                .map(|c| c.iter().copied().collect())
                .collect(),
        }
    }

    fn into_basis(self) -> Result<ProjectionBasis> {
        if self.matrix.len() != self.d_out || self.matrix.iter().any(|c| c.len() != self.d_in) {
            return Err(Error::InvalidModel("matrix shape disagrees with header".into()));
        }
        let matrix = DMatrix::from_iterator(
            self.d_in,
            self.d_out,
            self.matrix.iter().flatten().copied(),
        );
        ProjectionBasis::from_parts(self.kind, self.seed, self.mean, matrix)
    }
}
