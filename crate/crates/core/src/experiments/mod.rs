//! Studies: PCA-vs-Xavier training comparison, feature stability, feature
//! and activation-map rendering.

mod compare;
mod render;
mod stability;

pub use compare::{
    median, run_comparison, Comparison, ComparisonConfig, ComparisonReport, ComparisonSummary, InitMethod, RunResult,
    RunSummary, ScheduleSpec,
};
pub use render::{plot_lines, render_activation_map, render_features, Series, TileShape, GRID_FEATURES};
pub use stability::{stability_study, StabilityCondition, StabilityConfig, StabilityReport};

use std::fs;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::autoencoder::InitError;
use crate::data::{
    save_gray_png, save_label_png, synth_document, DataError, Dataset, DatasetManifest, ImageEntry, SynthParams,
    CLASS_NAMES,
};
use crate::neural::NeuralError;
use crate::pca::PcaError;
use crate::tensor::TensorError;
use crate::RngStream;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ExperimentError {
    #[error("config: {0}")]
    Config(String),
    #[error("render: {0}")]
    Render(String),
    #[error("{path}: {message}")]
    Io { path: PathBuf, message: String },
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Init(#[from] InitError),
    #[error(transparent)]
    Neural(#[from] NeuralError),
    #[error(transparent)]
    Pca(#[from] PcaError),
    #[error(transparent)]
    Tensor(#[from] TensorError),
}

impl ExperimentError {
    pub(crate) fn io(path: &Path, e: impl std::fmt::Display) -> Self {
        ExperimentError::Io {
            path: path.to_path_buf(),
            message: e.to_string(),
        }
    }
}

pub(crate) fn write_file(path: &Path, bytes: &[u8]) -> Result<(), ExperimentError> {
    fs::write(path, bytes).map_err(|e| ExperimentError::io(path, e))
}

/// Parameters of a generated dataset.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SynthDatasetSpec {
    pub seed: u64,
    pub classes: usize,
    pub patch_w: usize,
    pub train_pages: usize,
    pub test_pages: usize,
    pub width: usize,
    pub height: usize,
}

impl Default for SynthDatasetSpec {
    fn default() -> Self {
        let page = SynthParams::default();
        SynthDatasetSpec {
            seed: 0,
            classes: page.classes,
            patch_w: 13,
            train_pages: 2,
            test_pages: 1,
            width: page.width,
            height: page.height,
        }
    }
}

fn page_name(role: &str, i: usize) -> ImageEntry {
    ImageEntry {
        image: PathBuf::from(format!("{role}_{i:02}.png")),
        labels: PathBuf::from(format!("{role}_{i:02}_labels.png")),
    }
}

/// Generates pages in memory. Page `k` (train pages first) is drawn from
/// sub-stream `k` of the seed, so train and test pages never coincide.
pub fn synth_dataset(spec: SynthDatasetSpec) -> Result<Dataset, ExperimentError> {
    let params = SynthParams {
        width: spec.width,
        height: spec.height,
        classes: spec.classes,
    };
    let page = |k: usize| synth_document(params, &mut RngStream::new(spec.seed).split(k as u64));
    let train = (0..spec.train_pages).map(page).collect::<Result<Vec<_>, _>>()?;
    let test = (0..spec.test_pages)
        .map(|i| page(spec.train_pages + i))
        .collect::<Result<Vec<_>, _>>()?;
    let manifest = DatasetManifest {
        train: (0..spec.train_pages).map(|i| page_name("train", i)).collect(),
        test: (0..spec.test_pages).map(|i| page_name("test", i)).collect(),
        patch_w: spec.patch_w,
        channels: 1,
        classes: CLASS_NAMES[..spec.classes].iter().map(|s| s.to_string()).collect(),
        seed: spec.seed,
    };
    Ok(Dataset::new(manifest, train, test)?)
}

/// Writes every page, its label map and `manifest.json` into `dir`, and
/// returns the manifest path.
pub fn write_dataset(dataset: &Dataset, dir: &Path) -> Result<PathBuf, ExperimentError> {
    fs::create_dir_all(dir).map_err(|e| ExperimentError::io(dir, e))?;
    let m = &dataset.manifest;
    for (entries, pages) in [(&m.train, &dataset.train), (&m.test, &dataset.test)] {
        for (e, img) in entries.iter().zip(pages) {
            save_gray_png(img, &dir.join(&e.image))?;
            save_label_png(img, &dir.join(&e.labels))?;
        }
    }
    let path = dir.join("manifest.json");
    m.write(&path)?;
    Ok(path)
}

#[cfg(test)]
pub(crate) fn synth_dataset_in_memory(
    seed: u64,
    classes: usize,
    patch_w: usize,
    train_pages: usize,
    test_pages: usize,
    (width, height): (usize, usize),
) -> Result<Dataset, ExperimentError> {
    synth_dataset(SynthDatasetSpec {
        seed,
        classes,
        patch_w,
        train_pages,
        test_pages,
        width,
        height,
    })
}
