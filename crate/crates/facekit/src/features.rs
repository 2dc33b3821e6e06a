//! Per-patch descriptors: mean grayness, a scalar DFT statistic, and a
//! 2-bin intensity histogram, plus the min-max normalization applied before
//! any of them feed a learner.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imaging::{Patch, PATCH_PIXELS, PATCH_SIZE};

/// Descriptor dimensionality: mean + DFT statistic + 2 histogram bins.
pub const DESCRIPTOR_DIM: usize = 4;

/// Raw 4-dimensional patch descriptor.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PatchFeatureVector {
    pub mean_gray: f64,
    pub fft_stat: f64,
    pub hist: [f64; 2],
}

impl PatchFeatureVector {
    pub fn to_array(self) -> [f64; DESCRIPTOR_DIM] {
        [self.mean_gray, self.fft_stat, self.hist[0], self.hist[1]]
    }

    pub fn from_array(a: [f64; DESCRIPTOR_DIM]) -> Self {
        PatchFeatureVector {
            mean_gray: a[0],
            fft_stat: a[1],
            hist: [a[2], a[3]],
        }
    }
}

/// Arithmetic mean of all 400 pixels.
pub fn mean_grayness(p: &Patch) -> f64 {
    p.pixels().iter().sum::<f64>() / PATCH_PIXELS as f64
}

/// Mean magnitude of the 399 non-DC coefficients of the patch's 2-D DFT,
/// divided by the pixel count. A unit impulse scores 1/400; any constant
/// patch scores 0. Computed by separable direct summation.
pub fn fft_statistic(p: &Patch) -> f64 {
    const N: usize = PATCH_SIZE;
    let mut tw_re = [0.0f64; N];
    let mut tw_im = [0.0f64; N];
    for (k, (re, im)) in tw_re.iter_mut().zip(tw_im.iter_mut()).enumerate() {
        let theta = -2.0 * PI * k as f64 / N as f64;
        *re = theta.cos();
        *im = theta.sin();
    }
    let px = p.pixels();
    // Row pass: R[i][v] = sum_j x(i,j) e^{-2pi i v j / N}.
    let mut row_re = [[0.0f64; N]; N];
    let mut row_im = [[0.0f64; N]; N];
    for i in 0..N {
        for v in 0..N {
            let (mut re, mut im) = (0.0, 0.0);
            for j in 0..N {
                let k = (v * j) % N;
                let x = px[i * N + j];
                re += x * tw_re[k];
                im += x * tw_im[k];
            }
            row_re[i][v] = re;
            row_im[i][v] = im;
        }
    }
    // Column pass plus magnitude accumulation, DC term skipped.
    let mut sum = 0.0;
    for u in 0..N {
        for v in 0..N {
            if u == 0 && v == 0 {
                continue;
            }
            let (mut re, mut im) = (0.0, 0.0);
            for i in 0..N {
                let k = (u * i) % N;
                re += row_re[i][v] * tw_re[k] - row_im[i][v] * tw_im[k];
                im += row_re[i][v] * tw_im[k] + row_im[i][v] * tw_re[k];
            }
            sum += re.hypot(im);
        }
    }
    sum / (N * N - 1) as f64 / (N * N) as f64
}

/// Fraction of pixels below 128 and at or above 128.
pub fn gray_histogram(p: &Patch) -> [f64; 2] {
    let low = p.pixels().iter().filter(|&&v| v < 128.0).count();
    let n = PATCH_PIXELS as f64;
    [low as f64 / n, (PATCH_PIXELS - low) as f64 / n]
}

/// Unnormalized descriptor of a patch.
pub fn raw_descriptor(p: &Patch) -> PatchFeatureVector {
    PatchFeatureVector {
        mean_gray: mean_grayness(p),
        fft_stat: fft_statistic(p),
        hist: gray_histogram(p),
    }
}

/// Descriptor after min-max normalization. `norm` must be 4-dimensional.
pub fn patch_descriptor(p: &Patch, norm: &FeatureNormalization) -> PatchFeatureVector {
    assert_eq!(norm.dim(), DESCRIPTOR_DIM, "normalization has wrong arity");
    let raw = raw_descriptor(p).to_array();
    let mut out = [0.0; DESCRIPTOR_DIM];
    for (d, o) in out.iter_mut().enumerate() {
        *o = norm.apply_dim(d, raw[d]);
    }
    PatchFeatureVector::from_array(out)
}

/// Per-dimension min-max map fitted on a training corpus and then frozen.
/// Dimensions with zero range map every value to 0.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureNormalization {
    mins: Vec<f64>,
    maxs: Vec<f64>,
}

impl FeatureNormalization {
    /// The no-op map: min 0, max 1 in every dimension.
    pub fn identity(dim: usize) -> Self {
        FeatureNormalization {
            mins: vec![0.0; dim],
            maxs: vec![1.0; dim],
        }
    }

    /// Records per-dimension min and max over the rows.
    pub fn fit<'a, I>(rows: I) -> Result<Self>
    where
        I: IntoIterator<Item = &'a [f64]>,
    {
        let mut it = rows.into_iter();
        let first = it.next().ok_or(Error::EmptyTrainingSet)?;
        if first.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite);
        }
        let mut mins = first.to_vec();
        let mut maxs = first.to_vec();
        for row in it {
            if row.len() != mins.len() {
                return Err(Error::DimensionMismatch {
                    expected: mins.len(),
                    actual: row.len(),
                });
            }
            if row.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite);
            }
            for (d, &v) in row.iter().enumerate() {
                mins[d] = mins[d].min(v);
                maxs[d] = maxs[d].max(v);
            }
        }
        Ok(FeatureNormalization { mins, maxs })
    }

    pub fn dim(&self) -> usize {
        self.mins.len()
    }

    fn apply_dim(&self, d: usize, v: f64) -> f64 {
        let range = self.maxs[d] - self.mins[d];
        if range > 0.0 {
            (v - self.mins[d]) / range
        } else {
            0.0
        }
    }

    pub fn apply(&self, v: &[f64]) -> Result<Vec<f64>> {
        if v.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                actual: v.len(),
            });
        }
        Ok(v.iter()
            .enumerate()
            .map(|(d, &x)| self.apply_dim(d, x))
            .collect())
    }
}
