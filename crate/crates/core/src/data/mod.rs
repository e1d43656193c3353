//! Labeled page images, patch sampling and dataset manifests.

mod io;
mod manifest;
mod synth;

pub use io::{load_image, load_labels, load_pixels, save_gray_png, save_label_png, save_rgb_png};
pub use manifest::{Dataset, DatasetManifest, ImageEntry};
pub use synth::{synth_document, SynthParams, CLASS_NAMES};

use std::path::PathBuf;

use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng::RngStream;
use crate::tensor::Vector;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DataError {
    #[error("{path}: {message}")]
    Io { path: PathBuf, message: String },
    #[error("{path}: unsupported image: {detail}")]
    Unsupported { path: PathBuf, detail: String },
    #[error("pixel grid is {pixels:?} but label grid is {labels:?}")]
    SizeMismatch {
        pixels: (usize, usize),
        labels: (usize, usize),
    },
    #[error("class ids not dense: {missing} absent below max id {max}")]
    ClassesNotDense { missing: usize, max: usize },
    #[error("pixel value {value} at index {index} outside [0, 1]")]
    PixelOutOfRange { index: usize, value: f64 },
    #[error("expected {expected} values, got {got}")]
    BadLength { expected: usize, got: usize },
    #[error("channels must be 1 or 3, got {0}")]
    BadChannels(usize),
    #[error("patch width must be odd, got {0}")]
    EvenPatchWidth(usize),
    #[error("image {width}x{height} is smaller than patch width {w}")]
    ImageTooSmall { width: usize, height: usize, w: usize },
    #[error("at least one sample must be requested")]
    NoSamples,
    #[error("requested {requested} distinct centers but only {available} exist")]
    NotEnoughCenters { requested: usize, available: usize },
    #[error("class count must be in 2..=5, got {0}")]
    BadClassCount(usize),
    #[error("page {width}x{height} is below the 32x32 minimum")]
    PageTooSmall { width: usize, height: usize },
    #[error("invalid scaling range [{lo}, {hi}]")]
    BadScaling { lo: f64, hi: f64 },
    #[error("manifest: {0}")]
    Manifest(String),
}

/// A page with per-pixel class labels. Pixels are row-major with channels
/// interleaved, intensities in [0, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledImage {
    width: usize,
    height: usize,
    channels: usize,
    pixels: Vec<f64>,
    labels: Vec<usize>,
    classes: usize,
}

impl LabeledImage {
    pub fn new(
        width: usize,
        height: usize,
        channels: usize,
        pixels: Vec<f64>,
        labels: Vec<usize>,
    ) -> Result<Self, DataError> {
        if channels != 1 && channels != 3 {
            return Err(DataError::BadChannels(channels));
        }
        if pixels.len() != width * height * channels {
            return Err(DataError::BadLength {
                expected: width * height * channels,
                got: pixels.len(),
            });
        }
        if labels.len() != width * height {
            return Err(DataError::BadLength {
                expected: width * height,
                got: labels.len(),
            });
        }
        if let Some((index, &value)) = pixels.iter().enumerate().find(|(_, v)| !(0.0..=1.0).contains(*v)) {
            return Err(DataError::PixelOutOfRange { index, value });
        }
        let classes = dense_class_count(&labels)?;
        Ok(LabeledImage {
            width,
            height,
            channels,
            pixels,
            labels,
            classes,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    /// Number of distinct class ids, which are exactly `0..classes`.
    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn pixels(&self) -> &[f64] {
        &self.pixels
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn pixel(&self, x: usize, y: usize, c: usize) -> f64 {
        self.pixels[(y * self.width + x) * self.channels + c]
    }

    pub fn label(&self, x: usize, y: usize) -> usize {
        self.labels[y * self.width + x]
    }

    /// Pixel count per class.
    pub fn class_histogram(&self) -> Vec<usize> {
        let mut h = vec![0; self.classes];
        for &l in &self.labels {
            h[l] += 1;
        }
        h
    }
}

fn dense_class_count(labels: &[usize]) -> Result<usize, DataError> {
    let max = labels.iter().copied().max().unwrap_or(0);
    let mut seen = vec![false; max + 1];
    for &l in labels {
        seen[l] = true;
    }
    match seen.iter().filter(|s| !**s).count() {
        0 => Ok(max + 1),
        missing => Err(DataError::ClassesNotDense { missing, max }),
    }
}

/// Affine map from intensities in [0, 1] to network inputs in `[lo, hi]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PatchScaling {
    pub lo: f64,
    pub hi: f64,
}

impl Default for PatchScaling {
    fn default() -> Self {
        PatchScaling { lo: -0.95, hi: 0.95 }
    }
}

impl PatchScaling {
    pub fn new(lo: f64, hi: f64) -> Result<Self, DataError> {
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(DataError::BadScaling { lo, hi });
        }
        Ok(PatchScaling { lo, hi })
    }

    pub fn scale(&self, v: f64) -> f64 {
        self.lo + (self.hi - self.lo) * v
    }

    pub fn unscale(&self, s: f64) -> f64 {
        (s - self.lo) / (self.hi - self.lo)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PatchSource {
    pub image: usize,
    pub x: usize,
    pub y: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PatchSample {
    pub patch: Vector,
    pub label: usize,
    pub source: PatchSource,
}

fn check_geometry(img: &LabeledImage, w: usize) -> Result<(), DataError> {
    if w.is_multiple_of(2) {
        return Err(DataError::EvenPatchWidth(w));
    }
    if img.width < w || img.height < w {
        return Err(DataError::ImageTooSmall {
            width: img.width,
            height: img.height,
            w,
        });
    }
    Ok(())
}

/// Number of valid patch centers along x and y.
pub fn center_grid(img: &LabeledImage, w: usize) -> Result<(usize, usize), DataError> {
    check_geometry(img, w)?;
    Ok((img.width - w + 1, img.height - w + 1))
}

/// The `w×w` window centered on `(x, y)`, row-major with channels
/// interleaved, scaled into the network input range. The center must lie at
/// least `w/2` pixels from every border.
pub fn extract_patch(img: &LabeledImage, x: usize, y: usize, w: usize, scaling: PatchScaling) -> Vector {
    let mut out = Vec::with_capacity(w * w * img.channels);
    extract_into(img, x, y, w, scaling, &mut out);
    Vector::from_vec_unchecked(out)
}

pub(crate) fn extract_into(
    img: &LabeledImage,
    x: usize,
    y: usize,
    w: usize,
    scaling: PatchScaling,
    out: &mut Vec<f64>,
) {
    let r = w / 2;
    let row_len = w * img.channels;
    for yy in y - r..=y + r {
        let start = (yy * img.width + x - r) * img.channels;
        out.extend(img.pixels[start..start + row_len].iter().map(|&v| scaling.scale(v)));
    }
}

fn sample_at(img: &LabeledImage, image: usize, x: usize, y: usize, w: usize, scaling: PatchScaling) -> PatchSample {
    PatchSample {
        patch: extract_patch(img, x, y, w, scaling),
        label: img.label(x, y),
        source: PatchSource { image, x, y },
    }
}

/// `n` patches with centers drawn uniformly (with replacement) over the
/// valid positions of `img`.
pub fn sample_patches(
    img: &LabeledImage,
    image: usize,
    n: usize,
    w: usize,
    scaling: PatchScaling,
    rng: &mut RngStream,
) -> Result<Vec<PatchSample>, DataError> {
    if n == 0 {
        return Err(DataError::NoSamples);
    }
    let (nx, ny) = center_grid(img, w)?;
    let r = w / 2;
    Ok((0..n)
        .map(|_| {
            let x = r + rng.gen_range(0..nx);
            let y = r + rng.gen_range(0..ny);
            sample_at(img, image, x, y, w, scaling)
        })
        .collect())
}

/// `n` patches at pairwise distinct centers, in draw order.
pub fn sample_distinct_patches(
    img: &LabeledImage,
    image: usize,
    n: usize,
    w: usize,
    scaling: PatchScaling,
    rng: &mut RngStream,
) -> Result<Vec<PatchSample>, DataError> {
    if n == 0 {
        return Err(DataError::NoSamples);
    }
    let (nx, ny) = center_grid(img, w)?;
    if n > nx * ny {
        return Err(DataError::NotEnoughCenters {
            requested: n,
            available: nx * ny,
        });
    }
    let r = w / 2;
    Ok(index::sample(rng, nx * ny, n)
        .into_iter()
        .map(|i| sample_at(img, image, r + i % nx, r + i / nx, w, scaling))
        .collect())
}

/// Endless stream of patches: each draw picks an image uniformly, then a
/// center uniformly within it.
#[derive(Debug, Clone)]
pub struct PatchStream<'a> {
    images: &'a [LabeledImage],
    grids: Vec<(usize, usize)>,
    w: usize,
    scaling: PatchScaling,
    rng: RngStream,
}

impl<'a> PatchStream<'a> {
    pub fn new(images: &'a [LabeledImage], w: usize, scaling: PatchScaling, rng: RngStream) -> Result<Self, DataError> {
        if images.is_empty() {
            return Err(DataError::NoSamples);
        }
        let grids = images.iter().map(|img| center_grid(img, w)).collect::<Result<_, _>>()?;
        Ok(PatchStream {
            images,
            grids,
            w,
            scaling,
            rng,
        })
    }
}

impl Iterator for PatchStream<'_> {
    type Item = PatchSample;

    fn next(&mut self) -> Option<PatchSample> {
        let k = if self.images.len() == 1 {
            0
        } else {
            self.rng.gen_range(0..self.images.len())
        };
        let (nx, ny) = self.grids[k];
        let r = self.w / 2;
        let x = r + self.rng.gen_range(0..nx);
        let y = r + self.rng.gen_range(0..ny);
        Some(sample_at(&self.images[k], k, x, y, self.w, self.scaling))
    }
}
