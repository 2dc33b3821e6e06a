//! Face detection and recognition toolkit.
//!
//! Three families of algorithms share one image pipeline:
//!
//! * [`som`]: grids of self-organizing maps trained on fixed image patches,
//!   used to judge whether a window looks like the trained object class.
//! * [`subspace`]: random-projection and PCA embeddings with a
//!   nearest-neighbor gallery for identification.
//! * [`svm`]: soft-margin kernel SVMs, trained either in batch (SMO) or
//!   online one point at a time, wrapped into one-vs-rest multiclass models.
//!
//! [`imaging`] and [`features`] supply the shared front end (PGM decoding,
//! segmentation, patch descriptors), [`eval`] the experiment harness, and
//! [`synthetic`] a deterministic labeled corpus for end-to-end tests.

pub mod error;
pub mod eval;
pub mod features;
pub mod imaging;
pub mod som;
pub mod subspace;
pub mod svm;
pub mod synthetic;

pub use error::{Error, Result};
pub use eval::{Dataset, EvalReport, Predictor, Protocol, ReportFormat, Sample, Trainer};
pub use features::{FeatureNormalization, PatchFeatureVector};
pub use imaging::{BoundingBox, GrayImage, Patch, FACE_SIZE, PATCH_SIZE};
pub use som::{MatchVerdict, SomDetector, SomGrid, SomTrainConfig, VerdictKind};
pub use subspace::{BasisKind, ProjectionBasis, SubspaceModel};
pub use svm::{KernelSpec, MulticlassModel, OnlineSvm, SvmImageModel, SvmModel};
