//! Grayscale image handling: binary PGM I/O, resizing, thresholding,
//! connected-component region extraction, and fixed-grid patch splitting.

use std::path::Path;

use crate::error::{Error, Result};

/// Side length of the canonical window every detector and recognizer consumes.
pub const FACE_SIZE: usize = 100;
/// Side length of one analysis patch; `FACE_SIZE` must be a multiple of it.
pub const PATCH_SIZE: usize = 20;
/// Patches per canonical window (5x5 grid).
pub const PATCH_COUNT: usize = (FACE_SIZE / PATCH_SIZE) * (FACE_SIZE / PATCH_SIZE);
/// Pixels in one patch.
pub const PATCH_PIXELS: usize = PATCH_SIZE * PATCH_SIZE;
/// Foreground regions smaller than one patch carry too little texture to
/// classify and are dropped during detection.
pub const MIN_REGION_AREA: usize = PATCH_PIXELS;

/// Grayscale image with `f64` samples in `[0, 255]`, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct GrayImage {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl GrayImage {
    /// Builds an image from row-major samples, validating shape and range.
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidImage(
                "width and height must be nonzero".into(),
            ));
        }
        let expected = width
            .checked_mul(height)
            .ok_or_else(|| Error::InvalidImage("dimensions overflow".into()))?;
        if data.len() != expected {
            return Err(Error::DimensionMismatch {
                expected,
                actual: data.len(),
            });
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite);
        }
        if data.iter().any(|&v| !(0.0..=255.0).contains(&v)) {
            return Err(Error::InvalidImage(
                "sample outside [0, 255]".into(),
            ));
        }
        Ok(GrayImage {
            width,
            height,
            data,
        })
    }

    pub fn zeros(width: usize, height: usize) -> Self {
        GrayImage {
            width,
            height,
            data: vec![0.0; width * height],
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[f64] {
        &self.data
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        assert!(row < self.height && col < self.width, "pixel out of bounds");
        self.data[row * self.width + col]
    }

    pub fn set(&mut self, row: usize, col: usize, value: f64) {
        assert!(row < self.height && col < self.width, "pixel out of bounds");
        assert!((0.0..=255.0).contains(&value), "sample outside [0, 255]");
        self.data[row * self.width + col] = value;
    }

    /// Decodes a binary (`P5`) PGM. Maxval must be at most 255.
    pub fn from_pgm_bytes(bytes: &[u8]) -> Result<Self> {
        let mut cur = Cursor { bytes, pos: 0 };
        if !bytes.starts_with(b"P5") {
            return Err(Error::PgmParse {
                offset: 0,
                reason: "expected binary PGM magic \"P5\"".into(),
            });
        }
        if bytes
            .get(2)
            .is_some_and(|b| !b.is_ascii_whitespace() && *b != b'#')
        {
            return Err(Error::PgmParse {
                offset: 2,
                reason: "expected whitespace after magic".into(),
            });
        }
        cur.pos = 2;
        let (width, _) = cur.read_uint("width")?;
        let (height, _) = cur.read_uint("height")?;
        let (maxval, maxval_at) = cur.read_uint("maxval")?;
        if width == 0 || height == 0 {
            return Err(Error::PgmParse {
                offset: maxval_at,
                reason: format!("invalid dimensions {width}x{height}"),
            });
        }
        if maxval == 0 || maxval > 255 {
            return Err(Error::PgmParse {
                offset: maxval_at,
                reason: format!("maxval {maxval} outside 1..=255"),
            });
        }
        // Exactly one whitespace byte separates the header from the raster.
        match bytes.get(cur.pos) {
            Some(b) if b.is_ascii_whitespace() => cur.pos += 1,
            _ => {
                return Err(Error::PgmParse {
                    offset: cur.pos,
                    reason: "expected single whitespace byte before raster".into(),
                })
            }
        }
        let n = width * height;
        let raster = &bytes[cur.pos..];
        if raster.len() < n {
            return Err(Error::PgmParse {
                offset: bytes.len(),
                reason: format!("raster truncated: expected {n} bytes, found {}", raster.len()),
            });
        }
        let mut data = Vec::with_capacity(n);
        for (i, &b) in raster[..n].iter().enumerate() {
            if usize::from(b) > maxval {
                return Err(Error::PgmParse {
                    offset: cur.pos + i,
                    reason: format!("sample {b} exceeds maxval {maxval}"),
                });
            }
            data.push(f64::from(b));
        }
        Ok(GrayImage {
            width,
            height,
            data,
        })
    }

    pub fn load_pgm(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_pgm_bytes(&bytes)
    }

    /// Encodes as binary PGM with maxval 255; samples round to nearest.
    pub fn to_pgm_bytes(&self) -> Vec<u8> {
        let mut out = format!("P5\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.extend(self.data.iter().map(|&v| v.round().clamp(0.0, 255.0) as u8));
        out
    }

    pub fn save_pgm(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_pgm_bytes()).map_err(|e| Error::io(path, e))
    }

    /// Nearest-neighbor resize: output pixel `(i, j)` copies input pixel
    /// `(floor(i*h/out_h), floor(j*w/out_w))`.
    pub fn resize_nearest(&self, out_width: usize, out_height: usize) -> Result<GrayImage> {
        if out_width == 0 || out_height == 0 {
            return Err(Error::ZeroResizeTarget);
        }
        let mut data = Vec::with_capacity(out_width * out_height);
        for i in 0..out_height {
            let src_row = i * self.height / out_height;
            for j in 0..out_width {
                let src_col = j * self.width / out_width;
                data.push(self.data[src_row * self.width + src_col]);
            }
        }
        Ok(GrayImage {
            width: out_width,
            height: out_height,
            data,
        })
    }

    /// Extracts the inclusive box `b` as a new image.
    pub fn crop(&self, b: BoundingBox) -> Result<GrayImage> {
        if b.top > b.bottom || b.left > b.right {
            return Err(Error::InvalidImage(format!(
                "degenerate box {b:?}"
            )));
        }
        if b.bottom >= self.height || b.right >= self.width {
            return Err(Error::InvalidImage(format!(
                "box {b:?} exceeds {}x{} image",
                self.width, self.height
            )));
        }
        let mut data = Vec::with_capacity(b.width() * b.height());
        for row in b.top..=b.bottom {
            let start = row * self.width + b.left;
            data.extend_from_slice(&self.data[start..start + b.width()]);
        }
        Ok(GrayImage {
            width: b.width(),
            height: b.height(),
            data,
        })
    }

    /// Splits a canonical 100x100 window into 25 patches of 20x20, ordered
    /// row-major over the patch grid.
    pub fn split_patches(&self) -> Result<Vec<Patch>> {
        if self.width != FACE_SIZE || self.height != FACE_SIZE {
            return Err(Error::WrongImageSize {
                expected_width: FACE_SIZE,
                expected_height: FACE_SIZE,
                width: self.width,
                height: self.height,
            });
        }
        let grid = FACE_SIZE / PATCH_SIZE;
        let mut patches = Vec::with_capacity(PATCH_COUNT);
        for pr in 0..grid {
            for pc in 0..grid {
                let mut data = [0.0; PATCH_PIXELS];
                for r in 0..PATCH_SIZE {
                    let src = (pr * PATCH_SIZE + r) * self.width + pc * PATCH_SIZE;
                    data[r * PATCH_SIZE..(r + 1) * PATCH_SIZE]
                        .copy_from_slice(&self.data[src..src + PATCH_SIZE]);
                }
                patches.push(Patch { data });
            }
        }
        Ok(patches)
    }
}

/// One 20x20 patch, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct Patch {
    data: [f64; PATCH_PIXELS],
}

impl Patch {
    pub fn new(data: [f64; PATCH_PIXELS]) -> Self {
        Patch { data }
    }

    pub fn pixels(&self) -> &[f64; PATCH_PIXELS] {
        &self.data
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        assert!(row < PATCH_SIZE && col < PATCH_SIZE, "pixel out of bounds");
        self.data[row * PATCH_SIZE + col]
    }
}

/// BT.601 luma of an RGB triple, clamped to `[0, 255]`.
pub fn luma(r: f64, g: f64, b: f64) -> f64 {
    (0.299 * r + 0.587 * g + 0.114 * b).clamp(0.0, 255.0)
}

/// Inclusive pixel box: `bottom` and `right` are inside the region.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BoundingBox {
    pub top: usize,
    pub left: usize,
    pub bottom: usize,
    pub right: usize,
}

impl BoundingBox {
    pub fn width(&self) -> usize {
        self.right - self.left + 1
    }

    pub fn height(&self) -> usize {
        self.bottom - self.top + 1
    }
}

/// Binary foreground mask, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct Mask {
    width: usize,
    height: usize,
    data: Vec<bool>,
}

impl Mask {
    pub fn new(width: usize, height: usize, data: Vec<bool>) -> Result<Self> {
        if data.len() != width * height {
            return Err(Error::DimensionMismatch {
                expected: width * height,
                actual: data.len(),
            });
        }
        Ok(Mask {
            width,
            height,
            data,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn get(&self, row: usize, col: usize) -> bool {
        self.data[row * self.width + col]
    }
}

/// Connected foreground region.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Region {
    pub bbox: BoundingBox,
    pub area: usize,
}

/// Threshold maximizing between-class variance over the 256-bin histogram
/// (bin `min(floor(v), 255)`). Ties resolve to the smallest threshold; an
/// empty class contributes zero variance.
pub fn otsu_threshold(image: &GrayImage) -> u8 {
    let mut hist = [0usize; 256];
    for &v in image.pixels() {
        hist[(v.floor() as usize).min(255)] += 1;
    }
    let total = image.pixels().len() as f64;
    let total_sum: f64 = hist
        .iter()
        .enumerate()
        .map(|(b, &c)| b as f64 * c as f64)
        .sum();

    let mut best_t = 0u8;
    let mut best_var = f64::NEG_INFINITY;
    let mut n0 = 0.0;
    let mut sum0 = 0.0;
    for t in 0..256 {
        n0 += hist[t] as f64;
        sum0 += t as f64 * hist[t] as f64;
        let n1 = total - n0;
        let var = if n0 == 0.0 || n1 == 0.0 {
            0.0
        } else {
            let mu0 = sum0 / n0;
            let mu1 = (total_sum - sum0) / n1;
            (n0 / total) * (n1 / total) * (mu0 - mu1) * (mu0 - mu1)
        };
        if var > best_var {
            best_var = var;
            best_t = t as u8;
        }
    }
    best_t
}

/// Marks pixels whose histogram bin exceeds the threshold as foreground.
pub fn foreground_mask(image: &GrayImage, threshold: u8) -> Mask {
    let data = image
        .pixels()
        .iter()
        .map(|&v| (v.floor() as usize).min(255) > usize::from(threshold))
        .collect();
    Mask {
        width: image.width(),
        height: image.height(),
        data,
    }
}

/// 4-connected foreground components, sorted by area (largest first), then
/// top, then left.
pub fn connected_components(mask: &Mask) -> Vec<Region> {
    let (w, h) = (mask.width, mask.height);
    let mut seen = vec![false; w * h];
    let mut regions = Vec::new();
    let mut stack = Vec::new();
    for start in 0..w * h {
        if !mask.data[start] || seen[start] {
            continue;
        }
        seen[start] = true;
        stack.push(start);
        let mut area = 0usize;
        let (mut top, mut left, mut bottom, mut right) = (h, w, 0, 0);
        while let Some(idx) = stack.pop() {
            area += 1;
            let (row, col) = (idx / w, idx % w);
            top = top.min(row);
            bottom = bottom.max(row);
            left = left.min(col);
            right = right.max(col);
            let mut visit = |n: usize| {
                if mask.data[n] && !seen[n] {
                    seen[n] = true;
                    stack.push(n);
                }
            };
            if row > 0 {
                visit(idx - w);
            }
            if row + 1 < h {
                visit(idx + w);
            }
            if col > 0 {
                visit(idx - 1);
            }
            if col + 1 < w {
                visit(idx + 1);
            }
        }
        regions.push(Region {
            bbox: BoundingBox {
                top,
                left,
                bottom,
                right,
            },
            area,
        });
    }
    regions.sort_by(|a, b| {
        b.area
            .cmp(&a.area)
            .then(a.bbox.top.cmp(&b.bbox.top))
            .then(a.bbox.left.cmp(&b.bbox.left))
    });
    regions
}

/// Full detection front end: Otsu threshold, foreground components, regions
/// below `MIN_REGION_AREA` dropped.
pub fn detect_regions(image: &GrayImage) -> Vec<Region> {
    let t = otsu_threshold(image);
    let mask = foreground_mask(image, t);
    connected_components(&mask)
        .into_iter()
        .filter(|r| r.area >= MIN_REGION_AREA)
        .collect()
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Cursor<'_> {
    /// Skips whitespace and `#` comments (which run to end of line).
    fn skip_separators(&mut self) {
        loop {
            while self
                .bytes
                .get(self.pos)
                .is_some_and(u8::is_ascii_whitespace)
            {
                self.pos += 1;
            }
            if self.bytes.get(self.pos) == Some(&b'#') {
                while self
                    .bytes
                    .get(self.pos)
                    .is_some_and(|&b| b != b'\n' && b != b'\r')
                {
                    self.pos += 1;
                }
            } else {
                return;
            }
        }
    }

    /// Reads an ASCII decimal field; returns the value and its start offset.
    fn read_uint(&mut self, what: &str) -> Result<(usize, usize)> {
        self.skip_separators();
        let start = self.pos;
        let mut value = 0usize;
        let mut digits = 0usize;
        while let Some(&b) = self.bytes.get(self.pos) {
            if !b.is_ascii_digit() {
                break;
            }
            value = value
                .checked_mul(10)
                .and_then(|v| v.checked_add(usize::from(b - b'0')))
                .ok_or_else(|| Error::PgmParse {
                    offset: start,
                    reason: format!("{what} overflows"),
                })?;
            digits += 1;
            self.pos += 1;
        }
        if digits == 0 {
            return Err(Error::PgmParse {
                offset: start,
                reason: format!("expected {what}"),
            });
        }
        Ok((value, start))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn image_from_u8(width: usize, height: usize, vals: &[u8]) -> GrayImage {
        GrayImage::new(width, height, vals.iter().map(|&v| f64::from(v)).collect()).unwrap()
    }

    #[test]
    fn pgm_round_trip_checkerboard() {
        let vals: Vec<u8> = (0..16)
            .map(|i| if (i / 4 + i % 4) % 2 == 0 { 0 } else { 255 })
            .collect();
        let img = image_from_u8(4, 4, &vals);
        let back = GrayImage::from_pgm_bytes(&img.to_pgm_bytes()).unwrap();
        assert_eq!(back, img);
    }

    #[test]
    fn pgm_accepts_comments_and_odd_whitespace() {
        let bytes = b"P5 # magic\n# a comment line\n 2\t2 #dims\n255\n\x01\x02\x03\x04";
        let img = GrayImage::from_pgm_bytes(bytes).unwrap();
        assert_eq!(img.width(), 2);
        assert_eq!(img.height(), 2);
        assert_eq!(img.pixels(), &[1.0, 2.0, 3.0, 4.0]);
    }

    #[test]
    fn pgm_single_pixel() {
        let img = GrayImage::from_pgm_bytes(b"P5\n1 1\n255\n\x7f").unwrap();
        assert_eq!(img.pixels(), &[127.0]);
    }

    #[test]
    fn pgm_rejects_color_magic() {
        let err = GrayImage::from_pgm_bytes(b"P6\n1 1\n255\n\x00\x00\x00").unwrap_err();
        match err {
            Error::PgmParse { offset, .. } => assert_eq!(offset, 0),
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn pgm_rejects_wide_maxval() {
        let err = GrayImage::from_pgm_bytes(b"P5\n1 1\n65535\n\x00\x00").unwrap_err();
        match err {
            Error::PgmParse { offset, reason } => {
                assert_eq!(offset, 7);
                assert!(reason.contains("65535"));
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn pgm_reports_truncated_raster_offset() {
        let bytes = b"P5\n2 2\n255\n\x01\x02";
        let err = GrayImage::from_pgm_bytes(bytes).unwrap_err();
        match err {
            Error::PgmParse { offset, reason } => {
                assert_eq!(offset, bytes.len());
                assert!(reason.contains("expected 4 bytes, found 2"));
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn pgm_rejects_sample_above_maxval() {
        let err = GrayImage::from_pgm_bytes(b"P5\n2 1\n100\n\x10\xc8").unwrap_err();
        match err {
            Error::PgmParse { offset, reason } => {
                assert_eq!(offset, 12);
                assert!(reason.contains("200 exceeds maxval 100"));
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn pgm_rejects_missing_dimension() {
        let err = GrayImage::from_pgm_bytes(b"P5\n3\n").unwrap_err();
        match err {
            Error::PgmParse { reason, .. } => assert!(reason.contains("height")),
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn luma_matches_weighted_sum() {
        assert!((luma(255.0, 0.0, 0.0) - 76.245).abs() < 1e-9);
        assert!((luma(153.0, 153.0, 153.0) - 153.0).abs() < 1e-9);
        assert_eq!(luma(255.0, 255.0, 255.0), 255.0);
    }

    #[test]
    fn resize_identity_is_noop() {
        let img = image_from_u8(3, 2, &[1, 2, 3, 4, 5, 6]);
        assert_eq!(img.resize_nearest(3, 2).unwrap(), img);
    }

    #[test]
    fn resize_upscale_replicates_with_floor() {
        let img = image_from_u8(2, 2, &[10, 20, 30, 40]);
        let up = img.resize_nearest(4, 4).unwrap();
        let expect: Vec<f64> = [10, 10, 20, 20, 10, 10, 20, 20, 30, 30, 40, 40, 30, 30, 40, 40]
            .iter()
            .map(|&v| f64::from(v))
            .collect();
        assert_eq!(up.pixels(), &expect[..]);
    }

    #[test]
    fn resize_downscale_picks_floor_source() {
        let vals: Vec<u8> = (0..16).collect();
        let img = image_from_u8(4, 4, &vals);
        let down = img.resize_nearest(2, 2).unwrap();
        assert_eq!(down.pixels(), &[0.0, 2.0, 8.0, 10.0]);
    }

    #[test]
    fn crop_is_inclusive() {
        let vals: Vec<u8> = (0..12).collect();
        let img = image_from_u8(4, 3, &vals);
        let b = BoundingBox {
            top: 1,
            left: 1,
            bottom: 2,
            right: 3,
        };
        let c = img.crop(b).unwrap();
        assert_eq!(c.width(), 3);
        assert_eq!(c.height(), 2);
        assert_eq!(c.pixels(), &[5.0, 6.0, 7.0, 9.0, 10.0, 11.0]);
    }

    #[test]
    fn crop_rejects_out_of_bounds() {
        let img = GrayImage::zeros(4, 4);
        let b = BoundingBox {
            top: 0,
            left: 0,
            bottom: 4,
            right: 1,
        };
        assert!(img.crop(b).is_err());
    }

    #[test]
    fn split_patches_covers_grid_row_major() {
        let mut img = GrayImage::zeros(FACE_SIZE, FACE_SIZE);
        for row in 0..FACE_SIZE {
            for col in 0..FACE_SIZE {
                let p = (row / PATCH_SIZE) * 5 + col / PATCH_SIZE;
                img.set(row, col, p as f64);
            }
        }
        let patches = img.split_patches().unwrap();
        assert_eq!(patches.len(), PATCH_COUNT);
        for (i, patch) in patches.iter().enumerate() {
            assert!(patch.pixels().iter().all(|&v| v == i as f64));
        }
    }

    #[test]
    fn split_patches_rejects_other_sizes() {
        assert!(GrayImage::zeros(99, 100).split_patches().is_err());
    }

    #[test]
    fn otsu_bimodal_separates_modes() {
        let mut vals = vec![10u8; 50];
        vals.extend(vec![200u8; 50]);
        let img = image_from_u8(10, 10, &vals);
        let t = otsu_threshold(&img);
        assert_eq!(t, otsu_oracle(&img));
        assert!((10..200).contains(&t));
        let mask = foreground_mask(&img, t);
        assert_eq!(mask.data.iter().filter(|&&f| f).count(), 50);
    }

    #[test]
    fn otsu_constant_image_picks_zero() {
        let img = image_from_u8(4, 4, &[77; 16]);
        assert_eq!(otsu_threshold(&img), 0);
    }

    #[test]
    fn components_orders_by_area_then_position() {
        // 8x8: a 3x3 blob at (0,0), a 2x2 at (0,5), a 2x2 at (5,0).
        let mut data = vec![false; 64];
        for r in 0..3 {
            for c in 0..3 {
                data[r * 8 + c] = true;
            }
        }
        for r in 0..2 {
            for c in 5..7 {
                data[r * 8 + c] = true;
            }
        }
        for r in 5..7 {
            for c in 0..2 {
                data[r * 8 + c] = true;
            }
        }
        let mask = Mask::new(8, 8, data).unwrap();
        let regions = connected_components(&mask);
        assert_eq!(regions.len(), 3);
        assert_eq!(regions[0].area, 9);
        assert_eq!((regions[1].bbox.top, regions[1].bbox.left), (0, 5));
        assert_eq!((regions[2].bbox.top, regions[2].bbox.left), (5, 0));
    }

    #[test]
    fn diagonal_touch_is_not_connected() {
        let mask = Mask::new(2, 2, vec![true, false, false, true]).unwrap();
        assert_eq!(connected_components(&mask).len(), 2);
    }

    #[test]
    fn detect_regions_drops_small_blobs() {
        // One 25x25 bright square and one 5x5 speck on black.
        let mut img = GrayImage::zeros(60, 60);
        for r in 10..35 {
            for c in 10..35 {
                img.set(r, c, 200.0);
            }
        }
        for r in 50..55 {
            for c in 50..55 {
                img.set(r, c, 200.0);
            }
        }
        let regions = detect_regions(&img);
        assert_eq!(regions.len(), 1);
        assert_eq!(
            regions[0].bbox,
            BoundingBox {
                top: 10,
                left: 10,
                bottom: 34,
                right: 34
            }
        );
        assert_eq!(regions[0].area, 625);
    }

    /// Direct recomputation of the between-class variance for every t.
    fn otsu_oracle(image: &GrayImage) -> u8 {
        let mut hist = [0usize; 256];
        for &v in image.pixels() {
            hist[(v.floor() as usize).min(255)] += 1;
        }
        let total = image.pixels().len() as f64;
        let mut best = (0u8, f64::NEG_INFINITY);
        for t in 0..256usize {
            let n0: usize = hist[..=t].iter().sum();
            let n1: usize = hist[t + 1..].iter().sum();
            let var = if n0 == 0 || n1 == 0 {
                0.0
            } else {
                let mu0 = hist[..=t]
                    .iter()
                    .enumerate()
                    .map(|(b, &c)| b as f64 * c as f64)
                    .sum::<f64>()
                    / n0 as f64;
                let mu1 = hist[t + 1..]
                    .iter()
                    .enumerate()
                    .map(|(b, &c)| (b + t + 1) as f64 * c as f64)
                    .sum::<f64>()
                    / n1 as f64;
                (n0 as f64 / total) * (n1 as f64 / total) * (mu0 - mu1) * (mu0 - mu1)
            };
            if var > best.1 {
                best = (t as u8, var);
            }
        }
        best.0
    }

    /// Union-find reimplementation of component extraction.
    fn components_oracle(mask: &Mask) -> Vec<Region> {
        let (w, h) = (mask.width(), mask.height());
        let mut parent: Vec<usize> = (0..w * h).collect();
        fn find(parent: &mut Vec<usize>, mut x: usize) -> usize {
            while parent[x] != x {
                parent[x] = parent[parent[x]];
                x = parent[x];
            }
            x
        }
        for row in 0..h {
            for col in 0..w {
                if !mask.get(row, col) {
                    continue;
                }
                let idx = row * w + col;
                if row > 0 && mask.get(row - 1, col) {
                    let (a, b) = (find(&mut parent, idx), find(&mut parent, idx - w));
                    parent[a] = b;
                }
                if col > 0 && mask.get(row, col - 1) {
                    let (a, b) = (find(&mut parent, idx), find(&mut parent, idx - 1));
                    parent[a] = b;
                }
            }
        }
        let mut by_root: std::collections::HashMap<usize, Region> = std::collections::HashMap::new();
        for row in 0..h {
            for col in 0..w {
                if !mask.get(row, col) {
                    continue;
                }
                let root = find(&mut parent, row * w + col);
                let r = by_root.entry(root).or_insert(Region {
                    bbox: BoundingBox {
                        top: row,
                        left: col,
                        bottom: row,
                        right: col,
                    },
                    area: 0,
                });
                r.area += 1;
                r.bbox.top = r.bbox.top.min(row);
                r.bbox.bottom = r.bbox.bottom.max(row);
                r.bbox.left = r.bbox.left.min(col);
                r.bbox.right = r.bbox.right.max(col);
            }
        }
        let mut regions: Vec<Region> = by_root.into_values().collect();
        regions.sort_by(|a, b| {
            b.area
                .cmp(&a.area)
                .then(a.bbox.top.cmp(&b.bbox.top))
                .then(a.bbox.left.cmp(&b.bbox.left))
        });
        regions
    }

    proptest! {
        #[test]
        fn otsu_matches_exhaustive_oracle(
            vals in proptest::collection::vec(0u8..=255, 1..400),
        ) {
            let w = vals.len();
            let img = image_from_u8(w, 1, &vals);
            prop_assert_eq!(otsu_threshold(&img), otsu_oracle(&img));
        }

        #[test]
        fn components_match_union_find_oracle(
            bits in proptest::collection::vec(any::<bool>(), 1..256),
            w in 1usize..16,
        ) {
            let h = bits.len() / w;
            prop_assume!(h > 0);
            let mask = Mask::new(w, h, bits[..w * h].to_vec()).unwrap();
            prop_assert_eq!(connected_components(&mask), components_oracle(&mask));
        }

        #[test]
        fn pgm_round_trip_preserves_integer_images(
            vals in proptest::collection::vec(0u8..=255, 1..200),
        ) {
            let img = image_from_u8(vals.len(), 1, &vals);
            let back = GrayImage::from_pgm_bytes(&img.to_pgm_bytes()).unwrap();
            prop_assert_eq!(back, img);
        }
    }
}
