//! How much the PCA features move between sample sets and pages.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::time::Instant;

use serde::Serialize;

use super::render::{render_features, TileShape};
use super::{write_file, ExperimentError};
use crate::autoencoder::{build_stack, LevelSpec, StackOptions, StackedAutoEncoder};
use crate::data::{sample_distinct_patches, save_rgb_png, LabeledImage, PatchScaling};
use crate::neural::Activation;
use crate::pca::{match_components, ComponentMatch};
use crate::tensor::Matrix;
use crate::RngStream;

#[derive(Debug, Clone, PartialEq)]
pub struct StabilityConfig {
    /// Sample counts; every page gets one condition per count.
    pub counts: Vec<usize>,
    /// Input width followed by the width of each level.
    pub levels: Vec<usize>,
    pub activation: Activation,
    pub seed: u64,
    /// Leading components compared between conditions.
    pub top: usize,
    /// Relative eigenvalue gap below which a reference component is skipped.
    pub min_gap: f64,
    pub record_timing: bool,
}

impl Default for StabilityConfig {
    fn default() -> Self {
        StabilityConfig {
            counts: vec![500, 5000, 10_000],
            levels: vec![169, 50, 30, 9],
            activation: Activation::Tanh,
            seed: 0,
            top: 3,
            min_gap: 0.01,
            record_timing: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StabilityCondition {
    pub page: usize,
    pub count: usize,
    pub init_ms: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StabilityReport {
    pub conditions: Vec<StabilityCondition>,
    pub stacks: Vec<StackedAutoEncoder>,
    /// `matches[i][j]`: first-level components of condition `i` paired with
    /// those of condition `j`.
    pub matches: Vec<Vec<Vec<ComponentMatch>>>,
    /// Mean matched |cosine| per condition pair; 0 when nothing matched.
    pub similarity: Matrix,
    pub patch_w: usize,
    pub channels: usize,
}

/// Fits one stack per (page, count). Within a page the sample sets are
/// disjoint: one draw of distinct centers is split in order of `counts`.
pub fn stability_study(
    pages: &[LabeledImage],
    patch_w: usize,
    cfg: &StabilityConfig,
) -> Result<StabilityReport, ExperimentError> {
    if pages.is_empty() || cfg.counts.is_empty() {
        return Err(ExperimentError::Config(
            "stability needs at least one page and one count".into(),
        ));
    }
    if cfg.levels.len() < 2 {
        return Err(ExperimentError::Config(
            "levels need an input width and one level".into(),
        ));
    }
    if let Some(&c) = cfg.counts.iter().find(|&&c| c <= cfg.levels[1]) {
        return Err(ExperimentError::Config(format!(
            "count {c} must exceed the first level width {}",
            cfg.levels[1]
        )));
    }
    let channels = pages[0].channels();
    if cfg.levels[0] != patch_w * patch_w * channels {
        return Err(ExperimentError::Config(format!(
            "levels start at {} but patches have {} values",
            cfg.levels[0],
            patch_w * patch_w * channels
        )));
    }
    let specs = LevelSpec::chain(&cfg.levels, cfg.activation).1;
    let total: usize = cfg.counts.iter().sum();
    let mut conditions = Vec::new();
    let mut stacks = Vec::new();
    for (p, page) in pages.iter().enumerate() {
        let mut rng = RngStream::new(cfg.seed).split(p as u64);
        let draw = sample_distinct_patches(page, p, total, patch_w, PatchScaling::default(), &mut rng)?;
        let mut offset = 0;
        for &count in &cfg.counts {
            let cols: Vec<&[f64]> = draw[offset..offset + count]
                .iter()
                .map(|s| s.patch.as_slice())
                .collect();
            offset += count;
            let data = Matrix::from_columns(&cols)?;
            let start = Instant::now();
            let stack = build_stack(&data, &specs, &StackOptions::default(), &mut RngStream::new(cfg.seed))?;
            let init_ms = if cfg.record_timing {
                start.elapsed().as_millis() as u64
            } else {
                0
            };
            conditions.push(StabilityCondition {
                page: p,
                count,
                init_ms,
            });
            stacks.push(stack);
        }
    }
    let n = stacks.len();
    let mut similarity = Matrix::zeros(n, n);
    let mut matches = Vec::with_capacity(n);
    for i in 0..n {
        let mut row = Vec::with_capacity(n);
        for j in 0..n {
            let m = match_components(
                &stacks[i].levels()[0].pca,
                &stacks[j].levels()[0].pca,
                cfg.top,
                cfg.min_gap,
            );
            if !m.is_empty() {
                similarity.set(i, j, m.iter().map(|c| c.abs_cosine).sum::<f64>() / m.len() as f64);
            }
            row.push(m);
        }
        matches.push(row);
    }
    Ok(StabilityReport {
        conditions,
        stacks,
        matches,
        similarity,
        patch_w,
        channels,
    })
}

impl StabilityReport {
    pub fn condition_index(&self, page: usize, count: usize) -> Option<usize> {
        self.conditions.iter().position(|c| c.page == page && c.count == count)
    }

    pub fn similarity_csv(&self) -> String {
        let names: Vec<String> = self
            .conditions
            .iter()
            .map(|c| format!("p{}_n{}", c.page, c.count))
            .collect();
        let mut s = format!("condition,{}\n", names.join(","));
        for (i, name) in names.iter().enumerate() {
            s.push_str(name);
            for j in 0..names.len() {
                let _ = write!(s, ",{}", self.similarity.get(i, j));
            }
            s.push('\n');
        }
        s
    }

    pub fn matches_csv(&self) -> String {
        let mut s = String::from("reference,other,reference_component,other_component,abs_cosine\n");
        for (i, row) in self.matches.iter().enumerate() {
            for (j, ms) in row.iter().enumerate() {
                for m in ms {
                    let _ = writeln!(s, "{i},{j},{},{},{}", m.reference, m.other, m.abs_cosine);
                }
            }
        }
        s
    }

    /// `similarity.csv`, `matches.csv`, `conditions.json` and one feature
    /// grid per condition and level. Deeper levels are drawn through the
    /// product of the encoder weights down to the input.
    pub fn write(&self, out: &Path, enhance: bool) -> Result<(), ExperimentError> {
        fs::create_dir_all(out).map_err(|e| ExperimentError::io(out, e))?;
        write_file(&out.join("similarity.csv"), self.similarity_csv().as_bytes())?;
        write_file(&out.join("matches.csv"), self.matches_csv().as_bytes())?;
        let json = serde_json::to_string_pretty(&self.conditions).expect("conditions serialize");
        write_file(&out.join("conditions.json"), (json + "\n").as_bytes())?;
        let shape = TileShape::square(self.patch_w, self.channels);
        for (c, stack) in self.conditions.iter().zip(&self.stacks) {
            for level in 0..stack.levels().len() {
                let img = render_features(&stack.input_space_features(level)?, shape, enhance)?;
                save_rgb_png(
                    &img,
                    &out.join(format!("features_p{}_n{}_level{level}.png", c.page, c.count)),
                )?;
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{synth_document, SynthParams};

    fn cfg() -> StabilityConfig {
        StabilityConfig {
            counts: vec![200, 600],
            levels: vec![25, 6, 3],
            record_timing: false,
            ..StabilityConfig::default()
        }
    }

    fn pages() -> Vec<LabeledImage> {
        (0..2)
            .map(|s| {
                synth_document(
                    SynthParams {
                        width: 64,
                        height: 64,
                        classes: 3,
                    },
                    &mut RngStream::new(s),
                )
                .unwrap()
            })
            .collect()
    }

    #[test]
    fn conditions_and_self_similarity() {
        let r = stability_study(&pages(), 5, &cfg()).unwrap();
        assert_eq!(r.conditions.len(), 4);
        assert_eq!(r.condition_index(1, 600), Some(3));
        for i in 0..4 {
            assert!((r.similarity.get(i, i) - 1.0).abs() < 1e-12);
            for m in &r.matches[i][i] {
                assert_eq!(m.reference, m.other);
            }
        }
        for i in 0..4 {
            for j in 0..4 {
                assert!((0.0..=1.0 + 1e-12).contains(&r.similarity.get(i, j)));
            }
        }
    }

    #[test]
    fn identical_sample_sets_give_identical_stacks() {
        let a = stability_study(&pages(), 5, &cfg()).unwrap();
        let b = stability_study(&pages(), 5, &cfg()).unwrap();
        assert_eq!(a.stacks, b.stacks);
        assert_eq!(a.similarity_csv(), b.similarity_csv());
    }

    #[test]
    fn rejects_counts_below_level_width() {
        let mut c = cfg();
        c.counts = vec![6];
        assert!(stability_study(&pages(), 5, &c).is_err());
        let mut c = cfg();
        c.levels = vec![24, 6];
        assert!(stability_study(&pages(), 5, &c).is_err());
    }

    #[test]
    fn writes_outputs() {
        let r = stability_study(&pages()[..1], 5, &cfg()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        r.write(dir.path(), true).unwrap();
        for name in [
            "similarity.csv",
            "matches.csv",
            "conditions.json",
            "features_p0_n200_level0.png",
            "features_p0_n600_level1.png",
        ] {
            assert!(dir.path().join(name).exists(), "{name}");
        }
        let csv = fs::read_to_string(dir.path().join("similarity.csv")).unwrap();
        assert!(csv.starts_with("condition,p0_n200,p0_n600\np0_n200,"));
    }
}
