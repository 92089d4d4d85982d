//! Image slices, binary masks and per-pixel features.
//!
//! A pixel is addressed by `(col, row)`; all buffers are row-major.

use crate::error::{Error, Result};

/// Number of features per pixel: normalized column, normalized row, normalized intensity.
pub const NUM_FEATURES: usize = 3;

/// A feature vector as fed to the forests.
pub type Features = [f64; NUM_FEATURES];

/// One grayscale slice.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ImageSlice {
    width: usize,
    height: usize,
    bit_depth: u8,
    intensities: Vec<u16>,
}

impl ImageSlice {
    pub fn new(width: usize, height: usize, bit_depth: u8, intensities: Vec<u16>) -> Result<Self> {
        if bit_depth != 8 && bit_depth != 16 {
            return Err(Error::invalid(format!("bit depth must be 8 or 16, got {bit_depth}")));
        }
        if intensities.len() != width * height {
            return Err(Error::invalid(format!(
                "slice buffer holds {} values, expected {}x{}",
                intensities.len(),
                width,
                height
            )));
        }
        let max_allowed = ((1u32 << bit_depth) - 1) as u16;
        if let Some(v) = intensities.iter().find(|&&v| v > max_allowed) {
            return Err(Error::invalid(format!(
                "intensity {v} exceeds {bit_depth}-bit range"
            )));
        }
        Ok(ImageSlice {
            width,
            height,
            bit_depth,
            intensities,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn bit_depth(&self) -> u8 {
        self.bit_depth
    }

    pub fn intensities(&self) -> &[u16] {
        &self.intensities
    }

    pub fn get(&self, col: usize, row: usize) -> u16 {
        self.intensities[row * self.width + col]
    }

    pub fn max_intensity(&self) -> u16 {
        self.intensities.iter().copied().max().unwrap_or(0)
    }
}

/// An ordered stack of equally sized slices; the first is the labeled one.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CineStack {
    slices: Vec<ImageSlice>,
}

impl CineStack {
    pub fn new(slices: Vec<ImageSlice>) -> Result<Self> {
        if slices.len() < 2 {
            return Err(Error::invalid(format!(
                "a stack needs at least 2 slices, got {}",
                slices.len()
            )));
        }
        let first = &slices[0];
        for (i, s) in slices.iter().enumerate().skip(1) {
            if s.width != first.width || s.height != first.height || s.bit_depth != first.bit_depth {
                return Err(Error::invalid(format!(
                    "slice {} is {}x{} at {} bits, slice 0 is {}x{} at {} bits",
                    i, s.width, s.height, s.bit_depth, first.width, first.height, first.bit_depth
                )));
            }
        }
        Ok(CineStack { slices })
    }

    pub fn slices(&self) -> &[ImageSlice] {
        &self.slices
    }

    pub fn len(&self) -> usize {
        self.slices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slices.is_empty()
    }

    pub fn width(&self) -> usize {
        self.slices[0].width
    }

    pub fn height(&self) -> usize {
        self.slices[0].height
    }

    /// Largest intensity over all slices, at least 1.
    pub fn max_intensity(&self) -> u16 {
        self.slices
            .iter()
            .map(ImageSlice::max_intensity)
            .max()
            .unwrap_or(0)
            .max(1)
    }
}

/// Per-pixel foreground/background labeling. `true` is the region of interest.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct BinaryMask {
    width: usize,
    height: usize,
    bits: Vec<bool>,
}

impl BinaryMask {
    pub fn new(width: usize, height: usize, bits: Vec<bool>) -> Result<Self> {
        if bits.len() != width * height {
            return Err(Error::invalid(format!(
                "mask buffer holds {} values, expected {}x{}",
                bits.len(),
                width,
                height
            )));
        }
        Ok(BinaryMask { width, height, bits })
    }

    pub fn empty(width: usize, height: usize) -> Self {
        BinaryMask {
            width,
            height,
            bits: vec![false; width * height],
        }
    }

    pub fn full(width: usize, height: usize) -> Self {
        BinaryMask {
            width,
            height,
            bits: vec![true; width * height],
        }
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        let mut bits = Vec::with_capacity(width * height);
        for r in 0..height {
            for c in 0..width {
                bits.push(f(c, r));
            }
        }
        BinaryMask { width, height, bits }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn get(&self, col: usize, row: usize) -> bool {
        self.bits[row * self.width + col]
    }

    /// Like [`get`](Self::get) but `false` outside the image.
    pub fn get_signed(&self, col: i64, row: i64) -> bool {
        col >= 0
            && row >= 0
            && (col as usize) < self.width
            && (row as usize) < self.height
            && self.bits[row as usize * self.width + col as usize]
    }

    pub fn set(&mut self, col: usize, row: usize, value: bool) {
        self.bits[row * self.width + col] = value;
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.bits.iter().any(|&b| b)
    }

    pub fn same_shape(&self, other: &BinaryMask) -> bool {
        self.width == other.width && self.height == other.height
    }

    pub fn intersection_count(&self, other: &BinaryMask) -> usize {
        self.bits
            .iter()
            .zip(&other.bits)
            .filter(|(&a, &b)| a && b)
            .count()
    }

    /// True when every foreground pixel of `self` is foreground in `other`.
    pub fn is_subset_of(&self, other: &BinaryMask) -> bool {
        self.bits.iter().zip(&other.bits).all(|(&a, &b)| !a || b)
    }

    /// Foreground pixels as `(col, row)`, row-major.
    pub fn foreground(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        let w = self.width;
        self.bits
            .iter()
            .enumerate()
            .filter(|(_, &b)| b)
            .map(move |(i, _)| (i % w, i / w))
    }

    pub fn complement(&self) -> BinaryMask {
        BinaryMask {
            width: self.width,
            height: self.height,
            bits: self.bits.iter().map(|b| !b).collect(),
        }
    }
}

/// One row of a feature matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PixelSample {
    pub x_norm: f64,
    pub y_norm: f64,
    pub intensity_norm: f64,
    pub label: Option<bool>,
}

impl PixelSample {
    pub fn features(&self) -> Features {
        [self.x_norm, self.y_norm, self.intensity_norm]
    }
}

/// Feature rows, optionally tied to the slice shape they came from.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    rows: Vec<PixelSample>,
    shape: Option<(usize, usize)>,
}

impl FeatureMatrix {
    /// Rows not tied to any slice (toy data, tests).
    pub fn from_rows(rows: Vec<PixelSample>) -> Self {
        FeatureMatrix { rows, shape: None }
    }

    pub fn from_labeled(points: &[(Features, bool)]) -> Self {
        FeatureMatrix::from_rows(
            points
                .iter()
                .map(|&(f, l)| PixelSample {
                    x_norm: f[0],
                    y_norm: f[1],
                    intensity_norm: f[2],
                    label: Some(l),
                })
                .collect(),
        )
    }

    pub fn rows(&self) -> &[PixelSample] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// `(width, height)` of the originating slice, if any.
    pub fn shape(&self) -> Option<(usize, usize)> {
        self.shape
    }

    /// Feature vectors paired with labels; errors if any row is unlabeled.
    pub fn labeled(&self) -> Result<Vec<(Features, bool)>> {
        self.rows
            .iter()
            .enumerate()
            .map(|(i, r)| {
                r.label
                    .map(|l| (r.features(), l))
                    .ok_or_else(|| Error::invalid(format!("row {i} has no label")))
            })
            .collect()
    }
}

/// Build one feature row per pixel, row-major.
pub fn extract_features(slice: &ImageSlice, stack_max_intensity: u16) -> Result<FeatureMatrix> {
    let (w, h) = (slice.width(), slice.height());
    if w == 0 || h == 0 {
        return Err(Error::invalid("slice has zero area"));
    }
    if w == 1 || h == 1 {
        return Err(Error::invalid(format!(
            "slice is {w}x{h}; coordinate normalization needs at least 2 pixels per side"
        )));
    }
    if stack_max_intensity == 0 {
        return Err(Error::invalid("stack max intensity must be at least 1"));
    }
    if slice.max_intensity() > stack_max_intensity {
        return Err(Error::invalid(format!(
            "slice intensity {} exceeds stack max {}",
            slice.max_intensity(),
            stack_max_intensity
        )));
    }
    let sx = (w - 1) as f64;
    let sy = (h - 1) as f64;
    let si = f64::from(stack_max_intensity);
    let mut rows = Vec::with_capacity(w * h);
    for r in 0..h {
        for c in 0..w {
            rows.push(PixelSample {
                x_norm: c as f64 / sx,
                y_norm: r as f64 / sy,
                intensity_norm: f64::from(slice.get(c, r)) / si,
                label: None,
            });
        }
    }
    Ok(FeatureMatrix {
        rows,
        shape: Some((w, h)),
    })
}

pub fn attach_labels(features: &FeatureMatrix, mask: &BinaryMask) -> Result<FeatureMatrix> {
    if features.shape != Some((mask.width(), mask.height())) {
        return Err(Error::invalid(format!(
            "features of shape {:?} cannot take labels from a {}x{} mask",
            features.shape,
            mask.width(),
            mask.height()
        )));
    }
    let rows = features
        .rows
        .iter()
        .zip(mask.bits())
        .map(|(r, &b)| PixelSample {
            label: Some(b),
            ..*r
        })
        .collect();
    Ok(FeatureMatrix {
        rows,
        shape: features.shape,
    })
}

/// Threshold class probabilities: foreground where `P(fg) >= P(bg)`, i.e. `p >= 0.5`.
pub fn decide_mask(prob_lv: &[f64], width: usize, height: usize) -> Result<BinaryMask> {
    if prob_lv.len() != width * height {
        return Err(Error::invalid(format!(
            "{} probabilities for a {}x{} mask",
            prob_lv.len(),
            width,
            height
        )));
    }
    if let Some((i, p)) = prob_lv
        .iter()
        .enumerate()
        .find(|(_, p)| !(0.0..=1.0).contains(*p))
    {
        return Err(Error::invalid(format!("probability {p} at index {i} outside [0,1]")));
    }
    BinaryMask::new(width, height, prob_lv.iter().map(|&p| p >= 0.5).collect())
}

pub fn mask_union(a: &BinaryMask, b: &BinaryMask) -> Result<BinaryMask> {
    if !a.same_shape(b) {
        return Err(Error::invalid(format!(
            "cannot union {}x{} with {}x{}",
            a.width, a.height, b.width, b.height
        )));
    }
    BinaryMask::new(
        a.width,
        a.height,
        a.bits.iter().zip(&b.bits).map(|(&x, &y)| x || y).collect(),
    )
}
