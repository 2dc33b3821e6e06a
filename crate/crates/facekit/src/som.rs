//! Patch-grid self-organizing-map detector: one 5x5 SOM per patch position
//! of the canonical window, trained competitively, then matched by comparing
//! winner indices against stored reference winners.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{patch_descriptor, raw_descriptor, FeatureNormalization, DESCRIPTOR_DIM};
use crate::imaging::{detect_regions, BoundingBox, GrayImage, FACE_SIZE, PATCH_COUNT};

/// Neurons per grid side.
pub const GRID_SIDE: usize = 5;
/// Neurons per grid.
pub const GRID_NEURONS: usize = GRID_SIDE * GRID_SIDE;
/// Default mismatch threshold separating close matches from dissimilar ones.
pub const DEFAULT_CLOSE_MATCH_THRESHOLD: usize = 10;

const MODEL_VERSION: u32 = 1;

/// A 5x5 grid of 4-dimensional weight vectors. Neuron `i` sits at grid
/// coordinates `(i / 5, i % 5)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SomGrid {
    weights: Vec<[f64; DESCRIPTOR_DIM]>,
}

impl SomGrid {
    pub fn from_weights(weights: Vec<[f64; DESCRIPTOR_DIM]>) -> Result<Self> {
        if weights.len() != GRID_NEURONS {
            return Err(Error::DimensionMismatch {
                expected: GRID_NEURONS,
                actual: weights.len(),
            });
        }
        if weights.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite);
        }
        Ok(SomGrid { weights })
    }

    pub fn weights(&self) -> &[[f64; DESCRIPTOR_DIM]] {
        &self.weights
    }

    /// Index of the neuron nearest to `w` in Euclidean distance; ties go to
    /// the smallest index.
    pub fn find_winner(&self, w: &[f64; DESCRIPTOR_DIM]) -> usize {
        let mut best = 0;
        let mut best_d2 = f64::INFINITY;
        for (i, n) in self.weights.iter().enumerate() {
            let d2: f64 = n.iter().zip(w).map(|(a, b)| (a - b) * (a - b)).sum();
            if d2 < best_d2 {
                best_d2 = d2;
                best = i;
            }
        }
        best
    }

    /// Moves every neuron within Chebyshev grid distance `dist` of the
    /// winner toward `w` by a factor `alpha`.
    pub fn update_neighborhood(
        &mut self,
        winner: usize,
        w: &[f64; DESCRIPTOR_DIM],
        alpha: f64,
        dist: u32,
    ) {
        let (wr, wc) = (winner / GRID_SIDE, winner % GRID_SIDE);
        for (i, n) in self.weights.iter_mut().enumerate() {
            let (r, c) = (i / GRID_SIDE, i % GRID_SIDE);
            let cheb = r.abs_diff(wr).max(c.abs_diff(wc));
            if cheb as u32 <= dist {
                for (nv, wv) in n.iter_mut().zip(w) {
                    *nv += alpha * (*wv - *nv);
                }
            }
        }
    }

    fn distance_to_winner(&self, w: &[f64; DESCRIPTOR_DIM]) -> f64 {
        let n = &self.weights[self.find_winner(w)];
        n.iter()
            .zip(w)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }
}

/// Training schedule: learning rate and neighborhood radius with their
/// multiplicative decay.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SomTrainConfig {
    pub alpha0: f64,
    pub dist0: u32,
    pub num_iter: u32,
    pub seed: u64,
}

impl SomTrainConfig {
    /// Default schedule for a corpus of `n_images`: one epoch per image.
    pub fn for_corpus(n_images: usize, seed: u64) -> Self {
        SomTrainConfig {
            alpha0: 0.9,
            dist0: 4,
            num_iter: n_images.max(1) as u32,
            seed,
        }
    }

    /// `num_iter / ln(dist0 + 1)`; infinite when `dist0` is 0, which freezes
    /// the radius at 0.
    pub fn time_constant(&self) -> f64 {
        f64::from(self.num_iter) / f64::from(self.dist0 + 1).ln()
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha0 > 0.0 && self.alpha0 <= 1.0) {
            return Err(Error::InvalidParameter(format!(
                "alpha0 {} outside (0, 1]",
                self.alpha0
            )));
        }
        if self.num_iter == 0 {
            return Err(Error::InvalidParameter("num_iter must be >= 1".into()));
        }
        Ok(())
    }
}

/// Learning rate and radius after a number of decay steps.
///
/// Step `e` (1-based) multiplies alpha by `exp(-e/num_iter)` and the radius
/// by `exp(-e/time_constant)`, re-rounding the radius to an integer half-up.
pub fn decay_schedule(cfg: &SomTrainConfig, epoch: u32) -> (f64, u32) {
    let mut state = DecayState::new(cfg);
    for _ in 0..epoch {
        state.step(cfg);
    }
    (state.alpha, state.dist)
}

struct DecayState {
    alpha: f64,
    dist: u32,
    epoch: u32,
}

impl DecayState {
    fn new(cfg: &SomTrainConfig) -> Self {
        DecayState {
            alpha: cfg.alpha0,
            dist: cfg.dist0,
            epoch: 0,
        }
    }

    fn step(&mut self, cfg: &SomTrainConfig) {
        self.epoch += 1;
        let e = f64::from(self.epoch);
        self.alpha *= (-e / f64::from(cfg.num_iter)).exp();
        let decayed = f64::from(self.dist) * (-e / cfg.time_constant()).exp();
        // round() is half away from zero, which is half-up for nonnegatives.
        self.dist = decayed.round().max(0.0) as u32;
    }
}

/// Verdict for one matched window.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum VerdictKind {
    ExactMatch,
    CloseMatch,
    Dissimilar,
}

impl std::fmt::Display for VerdictKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            VerdictKind::ExactMatch => "exact match",
            VerdictKind::CloseMatch => "close match",
            VerdictKind::Dissimilar => "dissimilar",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct MatchVerdict {
    pub kind: VerdictKind,
    pub mismatches: usize,
}

impl MatchVerdict {
    /// Zero mismatches is an exact match, fewer than `m` a close match,
    /// anything else dissimilar.
    pub fn from_mismatches(mismatches: usize, m: usize) -> Self {
        let kind = if mismatches == 0 {
            VerdictKind::ExactMatch
        } else if mismatches < m {
            VerdictKind::CloseMatch
        } else {
            VerdictKind::Dissimilar
        };
        MatchVerdict { kind, mismatches }
    }
}

/// Result of training: mean quantization error before the first epoch and
/// after the last, both over the whole training corpus.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrainStats {
    pub initial_qe: f64,
    pub final_qe: f64,
}

/// The full detector: 25 per-patch grids, their reference winners, and the
/// frozen descriptor normalization.
#[derive(Clone, Debug, PartialEq)]
pub struct SomDetector {
    config: SomTrainConfig,
    maps: Vec<SomGrid>,
    reference_winners: Vec<usize>,
    norm: FeatureNormalization,
    m: usize,
}

#[derive(Serialize, Deserialize)]
struct SomDoc {
    version: u32,
    config: SomTrainConfig,
    maps: Vec<SomGrid>,
    reference_winners: Vec<usize>,
    normalization: FeatureNormalization,
    m: usize,
}

impl SomDetector {
    /// Trains on a corpus of similar objects. Images are resized to the
    /// canonical window; weight init and per-epoch image choice come from
    /// one seeded stream, so equal seeds give bit-identical detectors.
    pub fn train(images: &[GrayImage], cfg: SomTrainConfig, m: usize) -> Result<Self> {
        Ok(Self::train_with_stats(images, cfg, m)?.0)
    }

    pub fn train_with_stats(
        images: &[GrayImage],
        cfg: SomTrainConfig,
        m: usize,
    ) -> Result<(Self, TrainStats)> {
        if images.is_empty() {
            return Err(Error::EmptyTrainingSet);
        }
        cfg.validate()?;
        if m > PATCH_COUNT {
            return Err(Error::InvalidParameter(format!(
                "close-match threshold {m} exceeds {PATCH_COUNT} patches"
            )));
        }

        let raw: Vec<Vec<[f64; DESCRIPTOR_DIM]>> = images
            .iter()
            .map(|img| {
                let canon = img.resize_nearest(FACE_SIZE, FACE_SIZE)?;
                Ok(canon
                    .split_patches()?
                    .iter()
                    .map(|p| raw_descriptor(p).to_array())
                    .collect())
            })
            .collect::<Result<_>>()?;
        let norm = FeatureNormalization::fit(
            raw.iter().flatten().map(|d| &d[..]),
        )?;
        let descriptors: Vec<Vec<[f64; DESCRIPTOR_DIM]>> = raw
            .iter()
            .map(|img| {
                img.iter()
                    .map(|d| {
                        let n = norm.apply(d).expect("arity fixed at fit");
                        [n[0], n[1], n[2], n[3]]
                    })
                    .collect()
            })
            .collect();

        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let mut maps: Vec<SomGrid> = (0..PATCH_COUNT)
            .map(|_| SomGrid {
                weights: (0..GRID_NEURONS)
                    .map(|_| std::array::from_fn(|_| rng.random::<f64>()))
                    .collect(),
            })
            .collect();

        let initial_qe = quantization_error(&maps, &descriptors);

        let mut state = DecayState::new(&cfg);
        for _ in 0..cfg.num_iter {
            let t = rng.random_range(0..images.len());
            for (map, w) in maps.iter_mut().zip(&descriptors[t]) {
                let winner = map.find_winner(w);
                map.update_neighborhood(winner, w, state.alpha, state.dist);
            }
            state.step(&cfg);
        }

        let final_qe = quantization_error(&maps, &descriptors);

        // Reference winner of a map: most common winner across the corpus,
        // ties to the smallest neuron index.
        let reference_winners = (0..PATCH_COUNT)
            .map(|p| {
                let mut counts = [0usize; GRID_NEURONS];
                for img in &descriptors {
                    counts[maps[p].find_winner(&img[p])] += 1;
                }
                counts
                    .iter()
                    .enumerate()
                    .max_by(|(ia, ca), (ib, cb)| ca.cmp(cb).then(ib.cmp(ia)))
                    .map(|(i, _)| i)
                    .unwrap()
            })
            .collect();

        Ok((
            SomDetector {
                config: cfg,
                maps,
                reference_winners,
                norm,
                m,
            },
            TrainStats {
                initial_qe,
                final_qe,
            },
        ))
    }

    pub fn config(&self) -> &SomTrainConfig {
        &self.config
    }

    pub fn maps(&self) -> &[SomGrid] {
        &self.maps
    }

    pub fn reference_winners(&self) -> &[usize] {
        &self.reference_winners
    }

    pub fn close_match_threshold(&self) -> usize {
        self.m
    }

    /// Winner indices of an arbitrary window, resized to canonical size.
    pub fn window_winners(&self, window: &GrayImage) -> Result<Vec<usize>> {
        let canon = window.resize_nearest(FACE_SIZE, FACE_SIZE)?;
        let patches = canon.split_patches()?;
        Ok(self
            .maps
            .iter()
            .zip(&patches)
            .map(|(map, p)| map.find_winner(&patch_descriptor(p, &self.norm).to_array()))
            .collect())
    }

    /// Number of patch positions whose winner differs from the reference.
    pub fn window_mismatches(&self, window: &GrayImage) -> Result<usize> {
        Ok(self
            .window_winners(window)?
            .iter()
            .zip(&self.reference_winners)
            .filter(|(a, b)| a != b)
            .count())
    }

    pub fn window_verdict(&self, window: &GrayImage) -> Result<MatchVerdict> {
        Ok(MatchVerdict::from_mismatches(
            self.window_mismatches(window)?,
            self.m,
        ))
    }

    /// Segments the test image and judges every detected region. An image
    /// with no large-enough foreground regions yields an empty list.
    pub fn match_objects(&self, test: &GrayImage) -> Result<Vec<(BoundingBox, MatchVerdict)>> {
        detect_regions(test)
            .into_iter()
            .map(|r| {
                let window = test.crop(r.bbox)?;
                Ok((r.bbox, self.window_verdict(&window)?))
            })
            .collect()
    }

    /// Mean distance from each training-style descriptor to its winning
    /// neuron, over all patches of all given images.
    pub fn quantization_error(&self, images: &[GrayImage]) -> Result<f64> {
        if images.is_empty() {
            return Err(Error::EmptyTrainingSet);
        }
        let descriptors: Vec<Vec<[f64; DESCRIPTOR_DIM]>> = images
            .iter()
            .map(|img| {
                let canon = img.resize_nearest(FACE_SIZE, FACE_SIZE)?;
                Ok(canon
                    .split_patches()?
                    .iter()
                    .map(|p| patch_descriptor(p, &self.norm).to_array())
                    .collect())
            })
            .collect::<Result<_>>()?;
        Ok(quantization_error(&self.maps, &descriptors))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&SomDoc {
            version: MODEL_VERSION,
            config: self.config,
            maps: self.maps.clone(),
            reference_winners: self.reference_winners.clone(),
            normalization: self.norm.clone(),
            m: self.m,
        })
        .expect("serializable by construction")
    }

    pub fn from_json(json: &str) -> Result<Self> {
        let doc: SomDoc = serde_json::from_str(json)?;
        if doc.version != MODEL_VERSION {
            return Err(Error::ModelVersion {
                found: doc.version,
                expected: MODEL_VERSION,
            });
        }
        if doc.maps.len() != PATCH_COUNT || doc.reference_winners.len() != PATCH_COUNT {
            return Err(Error::InvalidModel(format!(
                "expected {PATCH_COUNT} maps and reference winners"
            )));
        }
        if doc.maps.iter().any(|g| g.weights.len() != GRID_NEURONS) {
            return Err(Error::InvalidModel(format!(
                "every map needs {GRID_NEURONS} neurons"
            )));
        }
        if doc.reference_winners.iter().any(|&w| w >= GRID_NEURONS) {
            return Err(Error::InvalidModel("reference winner out of range".into()));
        }
        if doc.normalization.dim() != DESCRIPTOR_DIM || doc.m > PATCH_COUNT {
            return Err(Error::InvalidModel("bad normalization arity or threshold".into()));
        }
        Ok(SomDetector {
            config: doc.config,
            maps: doc.maps,
            reference_winners: doc.reference_winners,
            norm: doc.normalization,
            m: doc.m,
        })
    }
}

fn quantization_error(maps: &[SomGrid], descriptors: &[Vec<[f64; DESCRIPTOR_DIM]>]) -> f64 {
    let mut sum = 0.0;
    let mut count = 0usize;
    for img in descriptors {
        for (map, w) in maps.iter().zip(img) {
            sum += map.distance_to_winner(w);
            count += 1;
        }
    }
    sum / count as f64
}
