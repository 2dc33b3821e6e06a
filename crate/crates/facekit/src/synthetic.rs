//! Deterministic synthetic face corpus for end-to-end tests and demos.
//!
//! Each class is a smooth 100x100 template: a coarse grid of seeded random
//! control values, bilinearly interpolated across the image. Samples add
//! per-pixel Gaussian noise to their class template, clip to [0, 255], and
//! round to integers so the images survive PGM round trips unchanged.

use std::path::{Path, PathBuf};

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::eval::{Dataset, Sample};
use crate::imaging::{GrayImage, FACE_SIZE};

pub const CLASS_COUNT: usize = 10;
pub const SAMPLES_PER_CLASS: usize = 10;

/// Control grid resolution; 6x6 keeps templates smooth at 100x100.
const CONTROL_POINTS: usize = 6;
/// Control values stay inside [60, 196] so noise rarely clips.
const CONTROL_LOW: f64 = 60.0;
const CONTROL_HIGH: f64 = 196.0;
const NOISE_SIGMA: f64 = 10.0;

fn bilinear(grid: &[[f64; CONTROL_POINTS]; CONTROL_POINTS], row: usize, col: usize) -> f64 {
    let scale = (CONTROL_POINTS - 1) as f64 / (FACE_SIZE - 1) as f64;
    let u = row as f64 * scale;
    let v = col as f64 * scale;
    let i0 = u.floor() as usize;
    let j0 = v.floor() as usize;
    let i1 = (i0 + 1).min(CONTROL_POINTS - 1);
    let j1 = (j0 + 1).min(CONTROL_POINTS - 1);
    let fu = u - i0 as f64;
    let fv = v - j0 as f64;
    grid[i0][j0] * (1.0 - fu) * (1.0 - fv)
        + grid[i1][j0] * fu * (1.0 - fv)
        + grid[i0][j1] * (1.0 - fu) * fv
        + grid[i1][j1] * fu * fv
}

/// Generates the corpus: [`CLASS_COUNT`] classes named `class0` ... with
/// [`SAMPLES_PER_CLASS`] samples each, all drawn from one seeded stream so
/// the whole dataset is a pure function of `seed`.
pub fn generate(seed: u64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, NOISE_SIGMA).expect("valid sigma");
    let mut samples = Vec::with_capacity(CLASS_COUNT * SAMPLES_PER_CLASS);
    for class in 0..CLASS_COUNT {
        let mut grid = [[0.0f64; CONTROL_POINTS]; CONTROL_POINTS];
        for row in grid.iter_mut() {
            for cell in row.iter_mut() {
                *cell = rng.random_range(CONTROL_LOW..=CONTROL_HIGH);
            }
        }
        let template: Vec<f64> = (0..FACE_SIZE * FACE_SIZE)
            .map(|i| bilinear(&grid, i / FACE_SIZE, i % FACE_SIZE))
            .collect();
        let label = format!("class{class}");
        for index in 0..SAMPLES_PER_CLASS {
            let data: Vec<f64> = template
                .iter()
                .map(|&t| (t + noise.sample(&mut rng)).clamp(0.0, 255.0).round())
                .collect();
            let image = GrayImage::new(FACE_SIZE, FACE_SIZE, data)
                .expect("generated pixels are valid samples");
            samples.push(Sample {
                image,
                label: label.clone(),
                path: PathBuf::from(format!("{label}/sample{index:02}.pgm")),
            });
        }
    }
    Dataset::from_samples(samples).expect("generator produces a nonempty corpus")
}

/// Writes a dataset as the directory tree [`Dataset::load`] reads:
/// `root/<label>/<file>.pgm`, file names taken from each sample's path.
pub fn write_dataset(ds: &Dataset, root: &Path) -> Result<()> {
    for sample in ds.samples() {
        let name = sample
            .path
            .file_name()
            .ok_or_else(|| Error::Dataset(format!("sample path {:?} has no file name", sample.path)))?;
        let dir = root.join(&sample.label);
        std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        sample.image.save_pgm(&dir.join(name))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn generator_is_deterministic() {
        let a = generate(7);
        let b = generate(7);
        assert_eq!(a.len(), b.len());
        for (x, y) in a.samples().iter().zip(b.samples()) {
            assert_eq!(x.image, y.image);
            assert_eq!(x.label, y.label);
            assert_eq!(x.path, y.path);
        }
    }

    #[test]
    fn generator_seeds_differ() {
        let a = generate(0);
        let b = generate(1);
        assert!(a
            .samples()
            .iter()
            .zip(b.samples())
            .any(|(x, y)| x.image != y.image));
    }

    #[test]
    fn corpus_shape_and_labels() {
        let ds = generate(0);
        assert_eq!(ds.len(), CLASS_COUNT * SAMPLES_PER_CLASS);
        assert_eq!(ds.classes().len(), CLASS_COUNT);
        assert_eq!(ds.classes()[0], "class0");
        assert_eq!(ds.classes()[9], "class9");
        for sample in ds.samples() {
            assert_eq!(sample.image.width(), FACE_SIZE);
            assert_eq!(sample.image.height(), FACE_SIZE);
        }
    }

    #[test]
    fn pixels_are_integral_and_in_range() {
        let ds = generate(3);
        for sample in ds.samples() {
            for &v in sample.image.pixels() {
                assert!((0.0..=255.0).contains(&v));
                assert_eq!(v, v.round());
            }
        }
    }

    #[test]
    fn same_class_is_tighter_than_cross_class() {
        let ds = generate(0);
        let dist = |a: &GrayImage, b: &GrayImage| -> f64 {
            a.pixels()
                .iter()
                .zip(b.pixels())
                .map(|(x, y)| (x - y) * (x - y))
                .sum()
        };
        let s = ds.samples();
        // Samples 0 and 1 share class0's template; every 10th sample after
        // that starts a new class.
        let within = dist(&s[0].image, &s[1].image);
        for class in 1..CLASS_COUNT {
            let across = dist(&s[0].image, &s[class * SAMPLES_PER_CLASS].image);
            assert!(
                within < across,
                "class0 noise ({within:.0}) should be smaller than template gap ({across:.0})"
            );
        }
    }

    #[test]
    fn written_tree_reloads_identically() {
        let ds = generate(11);
        let dir = tempfile::tempdir().unwrap();
        write_dataset(&ds, dir.path()).unwrap();
        let reloaded = Dataset::load(dir.path()).unwrap();
        assert_eq!(reloaded.len(), ds.len());
        for (orig, back) in ds.samples().iter().zip(reloaded.samples()) {
            assert_eq!(orig.image, back.image);
            assert_eq!(orig.label, back.label);
        }
    }
}
