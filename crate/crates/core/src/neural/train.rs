use std::fmt::Write as _;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::network::{evaluate, rbe, LabeledBatch, Network};
use super::NeuralError;

/// Total number of training samples and the evaluation interval.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvalSchedule {
    pub total: usize,
    pub eval_every: usize,
}

impl EvalSchedule {
    /// 50'000 samples, evaluated every 100.
    pub const SHORT: EvalSchedule = EvalSchedule {
        total: 50_000,
        eval_every: 100,
    };
    /// 2'000'000 samples, evaluated every 10'000.
    pub const LONG: EvalSchedule = EvalSchedule {
        total: 2_000_000,
        eval_every: 10_000,
    };

    pub fn new(total: usize, eval_every: usize) -> Result<Self, NeuralError> {
        let s = EvalSchedule { total, eval_every };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<(), NeuralError> {
        if self.total == 0 || self.eval_every == 0 || !self.total.is_multiple_of(self.eval_every) {
            return Err(NeuralError::BadSchedule {
                total: self.total,
                eval_every: self.eval_every,
            });
        }
        Ok(())
    }

    pub fn eval_points(&self) -> usize {
        self.total / self.eval_every
    }

    pub fn by_name(name: &str) -> Option<EvalSchedule> {
        match name {
            "short" => Some(Self::SHORT),
            "long" => Some(Self::LONG),
            _ => None,
        }
    }
}

/// One evaluation point.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LogRow {
    pub samples_seen: usize,
    pub accuracy: f64,
    /// Sum of per-sample RBE over the window ending at `samples_seen`.
    pub rbe_sum: f64,
    /// Samples in the window whose RBE was defined.
    pub rbe_count: usize,
    pub wall_ms: u64,
}

impl LogRow {
    /// `log10` of the windowed RBE sum; NaN when no sample had a defined RBE.
    pub fn rbe_log_sum(&self) -> f64 {
        if self.rbe_count == 0 {
            f64::NAN
        } else {
            self.rbe_sum.log10()
        }
    }

    pub fn rbe_mean(&self) -> f64 {
        self.rbe_sum / self.rbe_count as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrainingLog {
    pub method: String,
    pub seed: u64,
    pub rows: Vec<LogRow>,
    /// Set when the run aborted; `rows` then holds the points logged before.
    pub failure: Option<String>,
}

pub const CSV_HEADER: &str = "samples_seen,test_accuracy,rbe_log_sum,wall_clock_ms";

impl TrainingLog {
    pub fn new(method: impl Into<String>, seed: u64) -> Self {
        TrainingLog {
            method: method.into(),
            seed,
            rows: Vec::new(),
            failure: None,
        }
    }

    pub fn final_accuracy(&self) -> Option<f64> {
        self.rows.last().map(|r| r.accuracy)
    }

    /// First `samples_seen` at which accuracy reaches `fraction` of the final accuracy.
    pub fn samples_to_reach(&self, fraction: f64) -> Option<usize> {
        let target = fraction * self.final_accuracy()?;
        self.rows.iter().find(|r| r.accuracy >= target).map(|r| r.samples_seen)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from(CSV_HEADER);
        s.push('\n');
        for r in &self.rows {
            let _ = writeln!(s, "{},{},{},{}", r.samples_seen, r.accuracy, r.rbe_log_sum(), r.wall_ms);
        }
        s
    }
}

/// A run that stopped early, with what it logged until then.
#[derive(Debug, Clone, PartialEq, Error)]
#[error("{error}")]
pub struct TrainFailure {
    pub error: NeuralError,
    pub partial: TrainingLog,
}

/// Knobs of [`train_sgd`] beyond the data and the schedule.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainOptions {
    pub rate: f64,
    /// Record wall-clock milliseconds; when false the column is written as 0
    /// so that logs are byte-reproducible.
    pub record_timing: bool,
}

impl Default for TrainOptions {
    fn default() -> Self {
        TrainOptions {
            rate: 0.01,
            record_timing: true,
        }
    }
}

/// One pass of per-sample SGD over `samples`, evaluating on `test` every
/// `schedule.eval_every` samples.
///
/// Each sample's RBE is taken from the backward pass that precedes its
/// update and summed over the evaluation window.
#[allow(clippy::result_large_err)]
pub fn train_sgd<I, V>(
    net: &mut Network,
    samples: I,
    schedule: &EvalSchedule,
    test: &LabeledBatch,
    opts: &TrainOptions,
) -> Result<TrainingLog, TrainFailure>
where
    I: IntoIterator<Item = (V, usize)>,
    V: AsRef<[f64]>,
{
    let mut log = TrainingLog::new("", 0);
    let fail = |error: NeuralError, log: TrainingLog| TrainFailure { error, partial: log };
    if !(opts.rate >= 0.0 && opts.rate.is_finite()) {
        return Err(fail(NeuralError::InvalidRate(opts.rate), log));
    }
    if let Err(e) = schedule.validate() {
        return Err(fail(e, log));
    }

    let start = Instant::now();
    let mut window_sum = 0.0;
    let mut window_count = 0usize;
    let mut seen = 0usize;
    for (x, label) in samples.into_iter().take(schedule.total) {
        let (loss, trace) = match net.sgd_step(x.as_ref(), label, opts.rate) {
            Ok(r) => r,
            Err(e) => return Err(fail(e, log)),
        };
        if !loss.is_finite() {
            return Err(fail(NeuralError::Divergence { sample_index: seen }, log));
        }
        if let Ok(r) = rbe(&trace) {
            window_sum += r;
            window_count += 1;
        }
        seen += 1;
        if seen.is_multiple_of(schedule.eval_every) {
            let accuracy = match evaluate(net, test) {
                Ok(a) => a,
                Err(e) => return Err(fail(e, log)),
            };
            log.rows.push(LogRow {
                samples_seen: seen,
                accuracy,
                rbe_sum: window_sum,
                rbe_count: window_count,
                wall_ms: if opts.record_timing {
                    start.elapsed().as_millis() as u64
                } else {
                    0
                },
            });
            window_sum = 0.0;
            window_count = 0;
        }
    }
    if seen < schedule.total {
        return Err(fail(
            NeuralError::ShortSequence {
                expected: schedule.total,
                got: seen,
            },
            log,
        ));
    }
    Ok(log)
}
