use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{load_image, DataError, LabeledImage};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImageEntry {
    pub image: PathBuf,
    pub labels: PathBuf,
}

/// Train/test page lists plus patch geometry. Relative paths are resolved
/// against the manifest's directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub train: Vec<ImageEntry>,
    pub test: Vec<ImageEntry>,
    pub patch_w: usize,
    pub channels: usize,
    pub classes: Vec<String>,
    pub seed: u64,
}

impl DatasetManifest {
    pub fn validate(&self) -> Result<(), DataError> {
        let bad = |m: &str| Err(DataError::Manifest(m.to_string()));
        if self.train.is_empty() {
            return bad("no training images");
        }
        if self.test.is_empty() {
            return bad("no test images");
        }
        if self.patch_w.is_multiple_of(2) {
            return Err(DataError::EvenPatchWidth(self.patch_w));
        }
        if self.channels != 1 && self.channels != 3 {
            return Err(DataError::BadChannels(self.channels));
        }
        if self.classes.len() < 2 {
            return bad("at least two class names are required");
        }
        let train: HashSet<&Path> = self.train.iter().map(|e| e.image.as_path()).collect();
        if let Some(e) = self.test.iter().find(|e| train.contains(e.image.as_path())) {
            return Err(DataError::Manifest(format!(
                "{} is listed in both train and test",
                e.image.display()
            )));
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self, DataError> {
        let m: DatasetManifest = serde_json::from_str(text).map_err(|e| DataError::Manifest(e.to_string()))?;
        m.validate()?;
        Ok(m)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("manifest serializes")
    }

    pub fn read(path: &Path) -> Result<Self, DataError> {
        let text = fs::read_to_string(path).map_err(|e| DataError::Io {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        Self::from_json(&text)
    }

    pub fn write(&self, path: &Path) -> Result<(), DataError> {
        fs::write(path, self.to_json() + "\n").map_err(|e| DataError::Io {
            path: path.to_path_buf(),
            message: e.to_string(),
        })
    }
}

/// A manifest with all of its pages loaded.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub manifest: DatasetManifest,
    pub train: Vec<LabeledImage>,
    pub test: Vec<LabeledImage>,
}

impl Dataset {
    pub fn new(
        manifest: DatasetManifest,
        train: Vec<LabeledImage>,
        test: Vec<LabeledImage>,
    ) -> Result<Self, DataError> {
        manifest.validate()?;
        for img in train.iter().chain(&test) {
            if img.classes() > manifest.classes.len() {
                return Err(DataError::Manifest(format!(
                    "a page uses {} classes but the manifest names {}",
                    img.classes(),
                    manifest.classes.len()
                )));
            }
            if img.channels() != manifest.channels {
                return Err(DataError::BadChannels(img.channels()));
            }
        }
        Ok(Dataset { manifest, train, test })
    }

    pub fn load(manifest_path: &Path) -> Result<Self, DataError> {
        let manifest = DatasetManifest::read(manifest_path)?;
        let base = manifest_path.parent().unwrap_or(Path::new("."));
        let load = |entries: &[ImageEntry]| {
            entries
                .iter()
                .map(|e| load_image(&base.join(&e.image), &base.join(&e.labels), manifest.channels))
                .collect::<Result<Vec<_>, _>>()
        };
        let train = load(&manifest.train)?;
        let test = load(&manifest.test)?;
        Dataset::new(manifest, train, test)
    }

    pub fn classes(&self) -> usize {
        self.manifest.classes.len()
    }
}
