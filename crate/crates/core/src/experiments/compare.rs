//! PCA-initialized versus Xavier-initialized networks trained on one shared
//! sample sequence.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::render::{plot_lines, Series};
use super::{write_file, ExperimentError};
use crate::autoencoder::{build_stack, to_classifier_with, LevelSpec, StackOptions};
use crate::data::{save_rgb_png, Dataset, PatchSample, PatchScaling, PatchStream};
use crate::neural::{
    train_sgd, Activation, EvalSchedule, LabeledBatch, Network, TrainOptions, TrainingLog, XavierBound,
};
use crate::tensor::Matrix;
use crate::{par, Execution, RngStream};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InitMethod {
    Pca,
    Xavier,
}

impl InitMethod {
    pub fn name(self) -> &'static str {
        match self {
            InitMethod::Pca => "pca",
            InitMethod::Xavier => "xavier",
        }
    }
}

impl std::str::FromStr for InitMethod {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "pca" => Ok(InitMethod::Pca),
            "xavier" => Ok(InitMethod::Xavier),
            other => Err(format!("unknown init method {other:?} (expected pca or xavier)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScheduleSpec {
    #[default]
    Short,
    Long,
    Custom {
        total: usize,
        eval_every: usize,
    },
}

impl ScheduleSpec {
    pub fn schedule(self) -> EvalSchedule {
        match self {
            ScheduleSpec::Short => EvalSchedule::SHORT,
            ScheduleSpec::Long => EvalSchedule::LONG,
            ScheduleSpec::Custom { total, eval_every } => EvalSchedule { total, eval_every },
        }
    }
}

impl std::str::FromStr for ScheduleSpec {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "short" => Ok(ScheduleSpec::Short),
            "long" => Ok(ScheduleSpec::Long),
            other => {
                let bad = || format!("unknown schedule {other:?} (expected short, long or TOTAL/EVERY)");
                let (total, every) = other.split_once('/').ok_or_else(bad)?;
                Ok(ScheduleSpec::Custom {
                    total: total.trim().parse().map_err(|_| bad())?,
                    eval_every: every.trim().parse().map_err(|_| bad())?,
                })
            }
        }
    }
}

fn default_runs() -> usize {
    8
}
fn default_levels() -> Vec<usize> {
    vec![169, 50, 30, 9]
}
fn default_activation() -> Activation {
    Activation::Tanh
}
fn default_rate() -> f64 {
    0.01
}
fn default_pca_samples() -> usize {
    5000
}
fn default_test_samples() -> usize {
    10_000
}
fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ComparisonConfig {
    /// Resolved against the config file's directory when relative.
    pub manifest: PathBuf,
    #[serde(default = "default_runs")]
    pub runs: usize,
    #[serde(default)]
    pub schedule: ScheduleSpec,
    /// Input width followed by the width of each hidden level.
    #[serde(default = "default_levels")]
    pub levels: Vec<usize>,
    #[serde(default = "default_activation")]
    pub activation: Activation,
    #[serde(default = "default_rate")]
    pub learning_rate: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_pca_samples")]
    pub pca_samples: usize,
    #[serde(default = "default_test_samples")]
    pub test_samples: usize,
    #[serde(default = "default_true")]
    pub record_timing: bool,
    #[serde(default)]
    pub xavier_bound: XavierBound,
}

impl ComparisonConfig {
    pub fn new(manifest: impl Into<PathBuf>) -> Self {
        ComparisonConfig {
            manifest: manifest.into(),
            runs: default_runs(),
            schedule: ScheduleSpec::default(),
            levels: default_levels(),
            activation: default_activation(),
            learning_rate: default_rate(),
            seed: 0,
            pca_samples: default_pca_samples(),
            test_samples: default_test_samples(),
            record_timing: true,
            xavier_bound: XavierBound::default(),
        }
    }

    pub fn validate(&self) -> Result<(), ExperimentError> {
        let bad = |m: String| Err(ExperimentError::Config(m));
        if self.runs == 0 {
            return bad("runs must be at least 1".into());
        }
        self.schedule.schedule().validate()?;
        if self.levels.len() < 2 || self.levels.contains(&0) {
            return bad(format!(
                "levels {:?} need an input width and at least one positive level",
                self.levels
            ));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate >= 0.0) {
            return bad(format!(
                "learning rate {} is not a finite non-negative number",
                self.learning_rate
            ));
        }
        if self.pca_samples <= self.levels[1] {
            return bad(format!(
                "pca_samples {} must exceed the first level width {}",
                self.pca_samples, self.levels[1]
            ));
        }
        if self.test_samples == 0 {
            return bad("test_samples must be positive".into());
        }
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self, ExperimentError> {
        let text = fs::read_to_string(path).map_err(|e| ExperimentError::io(path, e))?;
        let mut cfg: ComparisonConfig =
            serde_json::from_str(&text).map_err(|e| ExperimentError::Config(format!("{}: {e}", path.display())))?;
        if cfg.manifest.is_relative() {
            cfg.manifest = path.parent().unwrap_or(Path::new(".")).join(&cfg.manifest);
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn level_specs(&self) -> Vec<LevelSpec> {
        LevelSpec::chain(&self.levels, self.activation).1
    }

    /// Seed of run `r`; both methods share it.
    pub fn run_seed(&self, run: usize) -> u64 {
        self.seed.wrapping_add(run as u64)
    }
}

// Sub-stream ids. The shared ones derive from the base seed, the others
// from the run seed.
const STREAM_TRAIN: u64 = 0;
const STREAM_TEST: u64 = 1;
const STREAM_PCA: u64 = 2;
const STREAM_WEIGHTS: u64 = 3;
const STREAM_STACK: u64 = 4;

fn hash_sample(h: &mut Sha256, s: &PatchSample) {
    for v in s.patch.iter() {
        h.update(v.to_le_bytes());
    }
    h.update((s.label as u64).to_le_bytes());
}

fn hex(digest: &[u8]) -> String {
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

/// Shared state of a comparison: the data and the fixed test set.
pub struct Comparison<'a> {
    cfg: ComparisonConfig,
    dataset: &'a Dataset,
    scaling: PatchScaling,
    test: LabeledBatch,
    test_hash: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunResult {
    pub method: InitMethod,
    pub run: usize,
    #[serde(skip)]
    pub log: TrainingLog,
    /// SHA-256 over the training samples the run consumed.
    pub sequence_hash: String,
    pub init_ms: u64,
}

impl RunResult {
    pub fn final_accuracy(&self) -> Option<f64> {
        self.log.final_accuracy()
    }

    pub fn samples_to_90(&self) -> Option<usize> {
        self.log.samples_to_reach(0.9)
    }

    /// Mean per-sample RBE over the first evaluation window.
    pub fn first_window_rbe_mean(&self) -> Option<f64> {
        self.log.rows.first().filter(|r| r.rbe_count > 0).map(|r| r.rbe_mean())
    }
}

impl<'a> Comparison<'a> {
    pub fn new(cfg: ComparisonConfig, dataset: &'a Dataset) -> Result<Self, ExperimentError> {
        cfg.validate()?;
        let m = &dataset.manifest;
        let input = m.patch_w * m.patch_w * m.channels;
        if cfg.levels[0] != input {
            return Err(ExperimentError::Config(format!(
                "levels start at {} but {}x{} patches with {} channel(s) have {input} values",
                cfg.levels[0], m.patch_w, m.patch_w, m.channels
            )));
        }
        let scaling = PatchScaling::default();
        let stream = PatchStream::new(
            &dataset.test,
            m.patch_w,
            scaling,
            RngStream::new(cfg.seed).split(STREAM_TEST),
        )?;
        let mut h = Sha256::new();
        let mut data = Vec::with_capacity(cfg.test_samples * input);
        let mut labels = Vec::with_capacity(cfg.test_samples);
        for s in stream.take(cfg.test_samples) {
            hash_sample(&mut h, &s);
            data.extend_from_slice(s.patch.as_slice());
            labels.push(s.label);
        }
        let test = LabeledBatch::new(Matrix::new(cfg.test_samples, input, data)?, labels)?;
        Ok(Comparison {
            cfg,
            dataset,
            scaling,
            test,
            test_hash: hex(&h.finalize()),
        })
    }

    pub fn config(&self) -> &ComparisonConfig {
        &self.cfg
    }

    pub fn test_set(&self) -> &LabeledBatch {
        &self.test
    }

    /// The training sequence shared by every run.
    pub fn training_stream(&self) -> PatchStream<'a> {
        PatchStream::new(
            &self.dataset.train,
            self.dataset.manifest.patch_w,
            self.scaling,
            RngStream::new(self.cfg.seed).split(STREAM_TRAIN),
        )
        .expect("geometry checked when the test set was drawn")
    }

    /// Initial network of one run.
    pub fn initial_network(&self, method: InitMethod, run: usize) -> Result<Network, ExperimentError> {
        let seed = self.cfg.run_seed(run);
        let classes = self.dataset.classes();
        let mut weights_rng = RngStream::new(seed).split(STREAM_WEIGHTS);
        match method {
            InitMethod::Xavier => Ok(Network::xavier(
                &self.cfg.levels,
                classes,
                self.cfg.activation,
                self.cfg.xavier_bound,
                &mut weights_rng,
            )?),
            InitMethod::Pca => {
                let samples: Vec<PatchSample> = PatchStream::new(
                    &self.dataset.train,
                    self.dataset.manifest.patch_w,
                    self.scaling,
                    RngStream::new(seed).split(STREAM_PCA),
                )?
                .take(self.cfg.pca_samples)
                .collect();
                let cols: Vec<&[f64]> = samples.iter().map(|s| s.patch.as_slice()).collect();
                let data = Matrix::from_columns(&cols)?;
                let stack = build_stack(
                    &data,
                    &self.cfg.level_specs(),
                    &StackOptions::default(),
                    &mut RngStream::new(seed).split(STREAM_STACK),
                )?;
                Ok(to_classifier_with(
                    &stack,
                    classes,
                    self.cfg.xavier_bound,
                    &mut weights_rng,
                )?)
            }
        }
    }

    /// Initializes and trains one network. Divergence ends the run early and
    /// is recorded in the log rather than returned as an error.
    pub fn run_one(&self, method: InitMethod, run: usize) -> Result<RunResult, ExperimentError> {
        let start = Instant::now();
        let mut net = self.initial_network(method, run)?;
        let init_ms = if self.cfg.record_timing {
            start.elapsed().as_millis() as u64
        } else {
            0
        };
        let schedule = self.cfg.schedule.schedule();
        let opts = TrainOptions {
            rate: self.cfg.learning_rate,
            record_timing: self.cfg.record_timing,
        };
        let mut h = Sha256::new();
        let samples = self
            .training_stream()
            .take(schedule.total)
            .inspect(|s| hash_sample(&mut h, s))
            .map(|s| (s.patch, s.label));
        let mut log = match train_sgd(&mut net, samples, &schedule, &self.test, &opts) {
            Ok(log) => log,
            Err(f) => {
                let mut log = f.partial;
                log.failure = Some(f.error.to_string());
                log
            }
        };
        log.method = method.name().to_string();
        log.seed = self.cfg.run_seed(run);
        Ok(RunResult {
            method,
            run,
            log,
            sequence_hash: hex(&h.finalize()),
            init_ms,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparisonReport {
    pub config: ComparisonConfig,
    pub test_set_hash: String,
    pub runs: Vec<RunResult>,
}

/// Aggregates written to `summary.json`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparisonSummary {
    pub fair: bool,
    pub test_set_hash: String,
    pub median_samples_to_90: BTreeMap<String, Option<f64>>,
    pub median_final_accuracy: BTreeMap<String, Option<f64>>,
    /// Runs (paired by index) where the PCA first-window mean RBE is larger.
    pub rbe_pairs_pca_greater: usize,
    pub rbe_pairs: usize,
    pub max_first_window_rbe_ratio: Option<f64>,
    pub runs: Vec<RunSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunSummary {
    pub method: InitMethod,
    pub run: usize,
    pub seed: u64,
    pub final_accuracy: Option<f64>,
    pub samples_to_90: Option<usize>,
    pub first_window_rbe_sum: Option<f64>,
    pub first_window_rbe_count: Option<usize>,
    pub first_window_rbe_mean: Option<f64>,
    pub init_ms: u64,
    pub sequence_hash: String,
    pub failure: Option<String>,
}

/// Median of the values; `None` for an empty slice.
pub fn median(values: &[f64]) -> Option<f64> {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    match n {
        0 => None,
        _ if n % 2 == 1 => Some(v[n / 2]),
        _ => Some((v[n / 2 - 1] + v[n / 2]) / 2.0),
    }
}

impl ComparisonReport {
    pub fn of(&self, method: InitMethod) -> impl Iterator<Item = &RunResult> {
        self.runs.iter().filter(move |r| r.method == method)
    }

    pub fn fair(&self) -> bool {
        self.runs.windows(2).all(|w| w[0].sequence_hash == w[1].sequence_hash)
    }

    /// Median samples to reach 90% of the run's own final accuracy.
    pub fn median_samples_to_90(&self, method: InitMethod) -> Option<f64> {
        let v: Vec<f64> = self
            .of(method)
            .filter_map(|r| r.samples_to_90())
            .map(|s| s as f64)
            .collect();
        median(&v)
    }

    /// Paired first-window RBE means, (PCA, Xavier) per run index.
    pub fn rbe_pairs(&self) -> Vec<(f64, f64)> {
        let xavier: BTreeMap<usize, f64> = self
            .of(InitMethod::Xavier)
            .filter_map(|r| Some((r.run, r.first_window_rbe_mean()?)))
            .collect();
        self.of(InitMethod::Pca)
            .filter_map(|r| Some((r.first_window_rbe_mean()?, *xavier.get(&r.run)?)))
            .collect()
    }

    pub fn summary(&self) -> ComparisonSummary {
        let methods = [InitMethod::Pca, InitMethod::Xavier];
        let pairs = self.rbe_pairs();
        ComparisonSummary {
            fair: self.fair(),
            test_set_hash: self.test_set_hash.clone(),
            median_samples_to_90: methods
                .iter()
                .map(|&m| (m.name().to_string(), self.median_samples_to_90(m)))
                .collect(),
            median_final_accuracy: methods
                .iter()
                .map(|&m| {
                    let v: Vec<f64> = self.of(m).filter_map(|r| r.final_accuracy()).collect();
                    (m.name().to_string(), median(&v))
                })
                .collect(),
            rbe_pairs_pca_greater: pairs.iter().filter(|(p, x)| p > x).count(),
            rbe_pairs: pairs.len(),
            max_first_window_rbe_ratio: pairs.iter().map(|(p, x)| p / x).reduce(f64::max),
            runs: self
                .runs
                .iter()
                .map(|r| {
                    let first = r.log.rows.first();
                    RunSummary {
                        method: r.method,
                        run: r.run,
                        seed: r.log.seed,
                        final_accuracy: r.final_accuracy(),
                        samples_to_90: r.samples_to_90(),
                        first_window_rbe_sum: first.map(|f| f.rbe_sum),
                        first_window_rbe_count: first.map(|f| f.rbe_count),
                        first_window_rbe_mean: r.first_window_rbe_mean(),
                        init_ms: r.init_ms,
                        sequence_hash: r.sequence_hash.clone(),
                        failure: r.log.failure.clone(),
                    }
                })
                .collect(),
        }
    }

    pub fn csv_name(r: &RunResult) -> String {
        format!("{}_run{}.csv", r.method.name(), r.run)
    }

    /// Per-run CSVs, `summary.json`, and `accuracy.png` / `rbe.png` plots
    /// (PCA in red, Xavier in blue).
    pub fn write(&self, out: &Path) -> Result<(), ExperimentError> {
        fs::create_dir_all(out).map_err(|e| ExperimentError::io(out, e))?;
        for r in &self.runs {
            write_file(&out.join(Self::csv_name(r)), r.log.to_csv().as_bytes())?;
        }
        let summary = serde_json::to_string_pretty(&self.summary()).expect("summary serializes");
        write_file(&out.join("summary.json"), (summary + "\n").as_bytes())?;
        let color = |m: InitMethod| {
            if m == InitMethod::Pca {
                [200, 30, 30]
            } else {
                [30, 60, 200]
            }
        };
        let curves = |f: &dyn Fn(&crate::neural::LogRow) -> f64| -> Vec<Series> {
            self.runs
                .iter()
                .map(|r| Series {
                    points: r.log.rows.iter().map(|row| (row.samples_seen as f64, f(row))).collect(),
                    color: color(r.method),
                })
                .collect()
        };
        save_rgb_png(
            &plot_lines(&curves(&|r| r.accuracy), 640, 400),
            &out.join("accuracy.png"),
        )?;
        save_rgb_png(
            &plot_lines(&curves(&|r| r.rbe_log_sum()), 640, 400),
            &out.join("rbe.png"),
        )?;
        Ok(())
    }
}

/// Trains `cfg.runs` networks per method on the shared sequence. Runs are
/// independent and execute in parallel under `exec`; the report lists PCA
/// runs first, each method ordered by run index.
pub fn run_comparison(
    cfg: &ComparisonConfig,
    dataset: &Dataset,
    exec: Execution,
) -> Result<ComparisonReport, ExperimentError> {
    let cmp = Comparison::new(cfg.clone(), dataset)?;
    let jobs: Vec<(InitMethod, usize)> = [InitMethod::Pca, InitMethod::Xavier]
        .iter()
        .flat_map(|&m| (0..cfg.runs).map(move |r| (m, r)))
        .collect();
    let runs = par::map_collect(exec, &jobs, |&(m, r)| cmp.run_one(m, r))
        .into_iter()
        .collect::<Result<Vec<_>, _>>()?;
    Ok(ComparisonReport {
        config: cfg.clone(),
        test_set_hash: cmp.test_hash.clone(),
        runs,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::experiments::synth_dataset_in_memory;

    fn small_cfg() -> ComparisonConfig {
        ComparisonConfig {
            runs: 2,
            schedule: ScheduleSpec::Custom {
                total: 600,
                eval_every: 100,
            },
            levels: vec![25, 8, 4],
            pca_samples: 300,
            test_samples: 200,
            record_timing: false,
            ..ComparisonConfig::new("unused")
        }
    }

    fn dataset() -> Dataset {
        synth_dataset_in_memory(5, 3, 5, 1, 1, (64, 64)).unwrap()
    }

    #[test]
    fn config_json_defaults() {
        let cfg: ComparisonConfig = serde_json::from_str(r#"{"manifest": "m.json"}"#).unwrap();
        assert_eq!(cfg.runs, 8);
        assert_eq!(cfg.schedule.schedule(), EvalSchedule::SHORT);
        assert_eq!(cfg.levels, vec![169, 50, 30, 9]);
        assert_eq!(cfg.learning_rate, 0.01);
        let custom: ComparisonConfig =
            serde_json::from_str(r#"{"manifest": "m", "schedule": {"custom": {"total": 10, "eval_every": 5}}}"#)
                .unwrap();
        assert_eq!(
            custom.schedule.schedule(),
            EvalSchedule {
                total: 10,
                eval_every: 5
            }
        );
        assert!(serde_json::from_str::<ComparisonConfig>(r#"{"manifest": "m", "bogus": 1}"#).is_err());
    }

    #[test]
    fn config_validation() {
        let mut c = small_cfg();
        c.runs = 0;
        assert!(c.validate().is_err());
        let mut c = small_cfg();
        c.schedule = ScheduleSpec::Custom {
            total: 10,
            eval_every: 3,
        };
        assert!(c.validate().is_err());
        let mut c = small_cfg();
        c.pca_samples = 8;
        assert!(c.validate().is_err());
        let mut c = small_cfg();
        c.levels = vec![24, 8];
        assert!(Comparison::new(c, &dataset()).is_err());
    }

    #[test]
    fn runs_share_the_sequence_and_are_reproducible() {
        let ds = dataset();
        let a = run_comparison(&small_cfg(), &ds, Execution::default()).unwrap();
        assert_eq!(a.runs.len(), 4);
        assert!(a.fair());
        for r in &a.runs {
            assert_eq!(r.log.rows.len(), 6);
            assert!(r.log.failure.is_none());
            assert!(r.log.rows.iter().all(|row| (0.0..=1.0).contains(&row.accuracy)));
        }
        let b = run_comparison(&small_cfg(), &ds, Execution::Sequential).unwrap();
        for (x, y) in a.runs.iter().zip(&b.runs) {
            assert_eq!(x.log.to_csv(), y.log.to_csv());
        }
        // Different run seeds give different initial networks.
        assert_ne!(a.runs[0].log.rows, a.runs[1].log.rows);
        let s = a.summary();
        assert!(s.fair);
        assert_eq!(s.rbe_pairs, 2);
    }

    #[test]
    fn divergence_is_confined_to_its_run() {
        let ds = dataset();
        let mut cfg = small_cfg();
        cfg.learning_rate = f64::MAX;
        let report = run_comparison(&cfg, &ds, Execution::Sequential).unwrap();
        assert!(report.runs.iter().any(|r| r.log.failure.is_some()));
    }

    #[test]
    fn written_outputs() {
        let ds = dataset();
        let report = run_comparison(&small_cfg(), &ds, Execution::Sequential).unwrap();
        let dir = tempfile::tempdir().unwrap();
        report.write(dir.path()).unwrap();
        for name in [
            "pca_run0.csv",
            "xavier_run1.csv",
            "summary.json",
            "accuracy.png",
            "rbe.png",
        ] {
            assert!(dir.path().join(name).exists(), "{name}");
        }
        let csv = fs::read_to_string(dir.path().join("pca_run0.csv")).unwrap();
        assert!(csv.starts_with("samples_seen,test_accuracy,rbe_log_sum,wall_clock_ms\n100,"));
        let summary: serde_json::Value =
            serde_json::from_str(&fs::read_to_string(dir.path().join("summary.json")).unwrap()).unwrap();
        assert_eq!(summary["fair"], true);
        assert_eq!(summary["runs"].as_array().unwrap().len(), 4);
    }

    #[test]
    fn median_of_even_and_odd() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), Some(2.0));
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), Some(2.5));
        assert_eq!(median(&[]), None);
    }

    #[test]
    fn method_and_schedule_parse() {
        assert_eq!("pca".parse::<InitMethod>(), Ok(InitMethod::Pca));
        assert!("lda".parse::<InitMethod>().is_err());
        assert_eq!("long".parse::<ScheduleSpec>(), Ok(ScheduleSpec::Long));
        assert_eq!(
            "2000/100".parse::<ScheduleSpec>(),
            Ok(ScheduleSpec::Custom {
                total: 2000,
                eval_every: 100
            })
        );
        assert!("2000".parse::<ScheduleSpec>().is_err());
        assert!("x/100".parse::<ScheduleSpec>().is_err());
    }
}
