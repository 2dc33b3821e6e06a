//! Subspace recognizers: project vectorized windows through a Gaussian
//! random matrix or a PCA eigenbasis, then classify by nearest neighbor
//! against the projected training gallery.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imaging::{GrayImage, FACE_SIZE};

/// Eigenvalues at or below this fraction of the Gram trace are treated as
/// numerically zero and excluded from the basis.
pub const DEGENERATE_EIGENVALUE_FRACTION: f64 = 1e-12;

const MODEL_VERSION: u32 = 1;

/// Flattens an image into the canonical 10000-dimensional row-major vector,
/// resizing to the canonical window first.
pub fn image_vector(img: &GrayImage) -> Result<Vec<f64>> {
    Ok(img
        .resize_nearest(FACE_SIZE, FACE_SIZE)?
        .pixels()
        .to_vec())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BasisKind {
    Random,
    Pca,
}

/// A `d_in x d_out` projection. `mean` is the zero vector for random bases
/// and the corpus mean for PCA.
#[derive(Clone, Debug, PartialEq)]
pub struct ProjectionBasis {
    kind: BasisKind,
    seed: Option<u64>,
    mean: Vec<f64>,
    matrix: DMatrix<f64>,
}

impl ProjectionBasis {
    /// I.i.d. standard normal entries drawn column by column from a
    /// ChaCha8 stream seeded with `seed` (ziggurat sampling). Entries are
    /// stored unscaled; distance-preserving embeddings multiply projections
    /// by `1/sqrt(d_out)` externally.
    pub fn random(d_in: usize, d_out: usize, seed: u64) -> Result<Self> {
        check_dims(d_in, d_out)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let matrix = DMatrix::from_iterator(
            d_in,
            d_out,
            (0..d_in * d_out).map(|_| StandardNormal.sample(&mut rng)),
        );
        Ok(ProjectionBasis {
            kind: BasisKind::Random,
            seed: Some(seed),
            mean: vec![0.0; d_in],
            matrix,
        })
    }

    /// PCA eigenbasis computed through the n x n Gram matrix of the
    /// mean-centered corpus: eigenpairs of A'A, sorted by eigenvalue
    /// descending, mapped up by `normalize(A v)`. Centering spends one
    /// degree of freedom, so at most `n - 1` components exist.
    pub fn pca(vectors: &[Vec<f64>], d_out: usize) -> Result<Self> {
        Ok(Self::pca_with_spectrum(vectors, d_out)?.0)
    }

    /// Like [`ProjectionBasis::pca`] but also returns the full descending
    /// eigenvalue spectrum of the centered Gram matrix.
    pub fn pca_with_spectrum(vectors: &[Vec<f64>], d_out: usize) -> Result<(Self, Vec<f64>)> {
        let n = vectors.len();
        if n < 2 {
            return Err(Error::InsufficientRank {
                requested: d_out,
                available: 0,
            });
        }
        let d_in = vectors[0].len();
        check_dims(d_in, d_out)?;
        if d_out > n - 1 {
            return Err(Error::InsufficientRank {
                requested: d_out,
                available: n - 1,
            });
        }
        for v in vectors {
            if v.len() != d_in {
                return Err(Error::DimensionMismatch {
                    expected: d_in,
                    actual: v.len(),
                });
            }
            if v.iter().any(|x| !x.is_finite()) {
                return Err(Error::NonFinite);
            }
        }

        let mut mean = vec![0.0; d_in];
        for v in vectors {
            for (m, x) in mean.iter_mut().zip(v) {
                *m += x;
            }
        }
        for m in &mut mean {
            *m /= n as f64;
        }

        let a = DMatrix::from_fn(d_in, n, |i, j| vectors[j][i] - mean[i]);
        let gram = a.tr_mul(&a);
        let trace = gram.trace();
        let eig = SymmetricEigen::new(gram);

        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&i, &j| {
            eig.eigenvalues[j]
                .partial_cmp(&eig.eigenvalues[i])
                .expect("symmetric eigenvalues are finite")
        });
        let spectrum: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i]).collect();

        let threshold = DEGENERATE_EIGENVALUE_FRACTION * trace;
        let available = spectrum.iter().filter(|&&l| l > threshold).count();
        if d_out > available {
            return Err(Error::InsufficientRank {
                requested: d_out,
                available,
            });
        }

        let mut matrix = DMatrix::zeros(d_in, d_out);
        for (col, &idx) in order[..d_out].iter().enumerate() {
            let u = &a * eig.eigenvectors.column(idx);
            let norm = u.norm();
            matrix.set_column(col, &(u / norm));
        }
        Ok((
            ProjectionBasis {
                kind: BasisKind::Pca,
                seed: None,
                mean,
                matrix,
            },
            spectrum,
        ))
    }

    /// Assembles a basis from raw parts, validating the shape rules
    /// (finite entries, `d_out <= d_in`, seed present exactly for random).
    pub fn from_parts(
        kind: BasisKind,
        seed: Option<u64>,
        mean: Vec<f64>,
        matrix: DMatrix<f64>,
    ) -> Result<Self> {
        check_dims(matrix.nrows(), matrix.ncols())?;
        if mean.len() != matrix.nrows() {
            return Err(Error::DimensionMismatch {
                expected: matrix.nrows(),
                actual: mean.len(),
            });
        }
        if matrix.iter().any(|v| !v.is_finite()) || mean.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite);
        }
        match (kind, seed) {
            (BasisKind::Random, None) => {
                return Err(Error::InvalidModel("random basis requires a seed".into()))
            }
            (BasisKind::Pca, Some(_)) => {
                return Err(Error::InvalidModel("pca basis carries no seed".into()))
            }
            _ => {}
        }
        Ok(ProjectionBasis {
            kind,
            seed,
            mean,
            matrix,
        })
    }

    pub fn kind(&self) -> BasisKind {
        self.kind
    }

    pub fn seed(&self) -> Option<u64> {
        self.seed
    }

    pub fn d_in(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn d_out(&self) -> usize {
        self.matrix.ncols()
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    /// `matrix' (x - mean)`.
    pub fn project(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.d_in() {
            return Err(Error::DimensionMismatch {
                expected: self.d_in(),
                actual: x.len(),
            });
        }
        let centered = DVector::from_fn(self.d_in(), |i, _| x[i] - self.mean[i]);
        Ok(self.matrix.tr_mul(&centered).as_slice().to_vec())
    }
}

fn check_dims(d_in: usize, d_out: usize) -> Result<()> {
    if d_out == 0 || d_in == 0 || d_out > d_in {
        return Err(Error::InvalidParameter(format!(
            "projection dims must satisfy 1 <= d_out <= d_in, got {d_out} and {d_in}"
        )));
    }
    Ok(())
}

/// A projection basis plus the projected, labeled gallery.
#[derive(Clone, Debug, PartialEq)]
pub struct SubspaceModel {
    basis: ProjectionBasis,
    gallery: Vec<Vec<f64>>,
    labels: Vec<String>,
}

#[derive(Serialize, Deserialize)]
struct SubspaceDoc {
    version: u32,
    kind: BasisKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
    d_in: usize,
    d_out: usize,
    mean: Vec<f64>,
    matrix: Vec<Vec<f64>>,
    gallery: Vec<Vec<f64>>,
    labels: Vec<String>,
}

impl SubspaceModel {
    /// Projects every training vector through `basis` and stores it with
    /// its label; gallery order follows input order.
    pub fn fit(basis: ProjectionBasis, vectors: &[Vec<f64>], labels: &[String]) -> Result<Self> {
        if vectors.is_empty() {
            return Err(Error::EmptyTrainingSet);
        }
        if vectors.len() != labels.len() {
            return Err(Error::DimensionMismatch {
                expected: vectors.len(),
                actual: labels.len(),
            });
        }
        let gallery = vectors
            .iter()
            .map(|v| basis.project(v))
            .collect::<Result<_>>()?;
        Ok(SubspaceModel {
            basis,
            gallery,
            labels: labels.to_vec(),
        })
    }

    pub fn basis(&self) -> &ProjectionBasis {
        &self.basis
    }

    pub fn gallery(&self) -> &[Vec<f64>] {
        &self.gallery
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    /// Projects the query and returns the label and Euclidean distance of
    /// the nearest gallery vector; ties go to the earliest insertion.
    pub fn nearest_neighbor(&self, x: &[f64]) -> Result<(&str, f64)> {
        if self.gallery.is_empty() {
            return Err(Error::EmptyGallery);
        }
        let q = self.basis.project(x)?;
        let mut best = 0;
        let mut best_d2 = f64::INFINITY;
        for (i, g) in self.gallery.iter().enumerate() {
            let d2: f64 = g.iter().zip(&q).map(|(a, b)| (a - b) * (a - b)).sum();
            if d2 < best_d2 {
                best_d2 = d2;
                best = i;
            }
        }
        Ok((&self.labels[best], best_d2.sqrt()))
    }

    pub fn to_json(&self) -> String {
        let matrix = self
            .basis
            .matrix
            .column_iter()
            .map(|c| c.iter().copied().collect())
            .collect();
        serde_json::to_string_pretty(&SubspaceDoc {
            version: MODEL_VERSION,
            kind: self.basis.kind,
            seed: self.basis.seed,
            d_in: self.basis.d_in(),
            d_out: self.basis.d_out(),
            mean: self.basis.mean.clone(),
            matrix,
            gallery: self.gallery.clone(),
            labels: self.labels.clone(),
        })
        .expect("serializable by construction")
    }

    pub fn from_json(json: &str) -> Result<Self> {
        let doc: SubspaceDoc = serde_json::from_str(json)?;
        if doc.version != MODEL_VERSION {
            return Err(Error::ModelVersion {
                found: doc.version,
                expected: MODEL_VERSION,
            });
        }
        if doc.matrix.len() != doc.d_out || doc.matrix.iter().any(|c| c.len() != doc.d_in) {
            return Err(Error::InvalidModel("matrix shape disagrees with header".into()));
        }
        let matrix = DMatrix::from_iterator(
            doc.d_in,
            doc.d_out,
            doc.matrix.iter().flatten().copied(),
        );
        let basis = ProjectionBasis::from_parts(doc.kind, doc.seed, doc.mean, matrix)?;
        if doc.gallery.len() != doc.labels.len() {
            return Err(Error::InvalidModel("gallery and labels differ in length".into()));
        }
        if doc.gallery.iter().any(|g| g.len() != doc.d_out) {
            return Err(Error::InvalidModel("gallery vector has wrong dimension".into()));
        }
        Ok(SubspaceModel {
            basis,
            gallery: doc.gallery,
            labels: doc.labels,
        })
    }
}
