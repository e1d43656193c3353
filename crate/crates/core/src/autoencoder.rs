//! Auto-encoders constructed analytically from PCA.
//!
//! An encoder built from a PCA model `(m, R)` with activation `f` uses
//! `W = R` and `b = −R·m`, so that `f(b + W·x) = f(R·(x − m))` for every
//! input. The matching decoder `(W₂, b₂)` is the least-squares solution of
//! `W₂·y + b₂ ≈ f⁻¹(x)` over a set of fitting samples, where `y` are the
//! encoded samples. Levels are stacked greedily: each level's PCA is fitted
//! on the codes produced by the previous level.

use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::neural::{xavier_init_with, Activation, Layer, Network, NeuralError, XavierBound};
use crate::pca::{PcaError, PcaModel};
use crate::rng::RngStream;
use crate::tensor::{self, dot, Matrix, TensorError, Vector};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum InitError {
    #[error(
        "relu encoders leave about half of the features inactive per sample \
         (each has a 50% activation probability); enable the sign-duplication workaround"
    )]
    ReluWithoutWorkaround,
    #[error("decoder activation {0} has no inverse")]
    NotInvertible(Activation),
    #[error("sample value {value} at (row {row}, column {column}) is outside the open range of {activation}")]
    OutOfRange {
        value: f64,
        row: usize,
        column: usize,
        activation: Activation,
    },
    #[error("decoder fit needs at least {needed} samples, got {got}")]
    TooFewSamples { needed: usize, got: usize },
    #[error("encoded samples are rank-deficient (column {column}); use more or more diverse samples")]
    RankDeficientCodes { column: usize },
    #[error("dimension mismatch: expected {expected}, got {got} ({context})")]
    DimensionMismatch {
        expected: usize,
        got: usize,
        context: &'static str,
    },
    #[error("a stack needs at least one level")]
    NoLevels,
    #[error("level {level}: {source}")]
    AtLevel {
        level: usize,
        #[source]
        source: Box<InitError>,
    },
    #[error(transparent)]
    Pca(#[from] PcaError),
    #[error(transparent)]
    Neural(#[from] NeuralError),
    #[error(transparent)]
    Tensor(#[from] TensorError),
}

impl InitError {
    fn at_level(self, level: usize) -> InitError {
        InitError::AtLevel {
            level,
            source: Box::new(self),
        }
    }
}

/// Builds the encoder layer equal to the activated PCA `f(R·(x − m))`.
///
/// `relu` is only accepted with `duplicate_negated`, which appends the
/// negation of the first component (and its bias) as an extra unit so that
/// every sample activates at least one of the pair.
pub fn encoder_from_pca(model: &PcaModel, activation: Activation, duplicate_negated: bool) -> Result<Layer, InitError> {
    if !activation.is_strictly_monotonic() && !duplicate_negated {
        return Err(InitError::ReluWithoutWorkaround);
    }
    let r = model.components();
    let mut bias: Vec<f64> = (0..r.rows()).map(|i| -dot(r.row(i), model.mean())).collect();
    let weights = if duplicate_negated {
        let mut data = r.as_slice().to_vec();
        data.extend(r.row(0).iter().map(|w| -w));
        bias.push(-bias[0]);
        Matrix::new(r.rows() + 1, r.cols(), data)?
    } else {
        r.clone()
    };
    Ok(Layer::new(weights, Vector::new(bias)?, activation)?)
}

/// `f(W·X + b)` for samples stored one per column; column `j` of the result
/// equals `encoder.forward(X[:, j])` bit for bit.
pub fn encode_columns(encoder: &Layer, samples: &Matrix) -> Result<Matrix, InitError> {
    if samples.rows() != encoder.in_dim() {
        return Err(InitError::DimensionMismatch {
            expected: encoder.in_dim(),
            got: samples.rows(),
            context: "encoder input rows",
        });
    }
    let mut z = tensor::matmul(encoder.weights(), samples)?;
    let f = encoder.activation();
    for i in 0..z.rows() {
        let b = encoder.bias()[i];
        for v in z.row_mut(i) {
            *v = f.apply(*v + b);
        }
    }
    Ok(z)
}

/// Least-squares decoder for `encoder` over `samples` (one per column).
///
/// Solves `W₂⁺ · [Y; 1] ≈ f⁻¹(X)` where `Y` are the encoded samples and
/// `f = activation`; the last column of `W₂⁺` becomes the bias.
pub fn decoder_fit(encoder: &Layer, samples: &Matrix, activation: Activation) -> Result<Layer, InitError> {
    if !activation.is_invertible() {
        return Err(InitError::NotInvertible(activation));
    }
    let (d, n) = samples.shape();
    let k = encoder.out_dim();
    if d != encoder.in_dim() {
        return Err(InitError::DimensionMismatch {
            expected: encoder.in_dim(),
            got: d,
            context: "decoder fitting samples must have the encoder's input dimension",
        });
    }
    if n < k + 1 {
        return Err(InitError::TooFewSamples { needed: k + 1, got: n });
    }
    let mut targets = vec![0.0; n * d];
    for row in 0..d {
        for (column, &value) in samples.row(row).iter().enumerate() {
            targets[column * d + row] = activation.inverse(value).ok_or(InitError::OutOfRange {
                value,
                row,
                column,
                activation,
            })?;
        }
    }
    let codes = encode_columns(encoder, samples)?;
    let mut design = vec![0.0; n * (k + 1)];
    for s in 0..n {
        for c in 0..k {
            design[s * (k + 1) + c] = codes.get(c, s);
        }
        design[s * (k + 1) + k] = 1.0;
    }
    let a = Matrix::new(n, k + 1, design)?;
    let b = Matrix::new(n, d, targets)?;
    let sol = match tensor::lstsq(&a, &b) {
        Ok(s) => s,
        Err(TensorError::RankDeficient { column, .. }) => return Err(InitError::RankDeficientCodes { column }),
        Err(e) => return Err(e.into()),
    };
    // sol is (k+1) × d: rows 0..k hold W₂ᵀ, row k holds b₂.
    let mut w2 = vec![0.0; d * k];
    for c in 0..k {
        for (i, &v) in sol.row(c).iter().enumerate() {
            w2[i * k + c] = v;
        }
    }
    Ok(Layer::new(
        Matrix::new(d, k, w2)?,
        Vector::new(sol.row(k).to_vec())?,
        activation,
    )?)
}

/// Sum over samples and outputs of `(W₂·y + b₂ − f⁻¹(x))²`: the quantity
/// [`decoder_fit`] minimizes.
pub fn decoder_objective(encoder: &Layer, decoder: &Layer, samples: &Matrix) -> Result<f64, InitError> {
    let codes = encode_columns(encoder, samples)?;
    let f = decoder.activation();
    let mut total = 0.0;
    for s in 0..samples.cols() {
        let z = decoder.pre_activation(&codes.column(s))?;
        for (i, zi) in z.iter().enumerate() {
            let x = samples.get(i, s);
            let target = f.inverse(x).ok_or(InitError::OutOfRange {
                value: x,
                row: i,
                column: s,
                activation: f,
            })?;
            total += (zi - target).powi(2);
        }
    }
    Ok(total)
}

/// Number of components kept and activation of one level.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LevelSpec {
    pub kept: usize,
    pub activation: Activation,
}

impl LevelSpec {
    pub fn new(kept: usize, activation: Activation) -> Self {
        LevelSpec { kept, activation }
    }

    /// Level specs from a width list `input, w1, w2, ...` with one activation.
    /// Returns the input dimension and the specs.
    pub fn chain(widths: &[usize], activation: Activation) -> (usize, Vec<LevelSpec>) {
        let input = widths.first().copied().unwrap_or(0);
        let specs = widths.iter().skip(1).map(|&k| LevelSpec::new(k, activation)).collect();
        (input, specs)
    }
}

/// Where the decoder fitting samples come from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecoderSamples {
    /// The first level inputs (in data order) lying inside the decoder's range.
    #[default]
    Real,
    /// Uniform random vectors spanning the observed range of the level input.
    Random,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StackOptions {
    /// Fit on a seeded uniform subsample when the data has more columns.
    pub pca_sample_cap: Option<usize>,
    pub decoder_samples: DecoderSamples,
    /// Allow relu encoders by duplicating the first component negated.
    pub relu_duplicate: bool,
}

impl Default for StackOptions {
    fn default() -> Self {
        StackOptions {
            pca_sample_cap: None,
            decoder_samples: DecoderSamples::Real,
            relu_duplicate: false,
        }
    }
}

/// Decoder fitting sample count for a level with `code_dim` outputs.
pub fn decoder_sample_count(code_dim: usize, available: usize) -> usize {
    (4 * code_dim + 1).min(available)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AutoEncoderLevel {
    pub encoder: Layer,
    pub decoder: Layer,
    /// The PCA the encoder was built from.
    pub pca: PcaModel,
}

impl AutoEncoderLevel {
    pub fn reconstruct(&self, x: &[f64]) -> Result<Vector, InitError> {
        Ok(self.decoder.forward(&self.encoder.forward(x)?)?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "StackRecord", into = "StackRecord")]
pub struct StackedAutoEncoder {
    levels: Vec<AutoEncoderLevel>,
}

#[derive(Serialize, Deserialize)]
struct StackRecord {
    levels: Vec<AutoEncoderLevel>,
}

impl From<StackedAutoEncoder> for StackRecord {
    fn from(s: StackedAutoEncoder) -> Self {
        StackRecord { levels: s.levels }
    }
}

impl TryFrom<StackRecord> for StackedAutoEncoder {
    type Error = InitError;
    fn try_from(r: StackRecord) -> Result<Self, Self::Error> {
        StackedAutoEncoder::new(r.levels)
    }
}

impl StackedAutoEncoder {
    pub fn new(levels: Vec<AutoEncoderLevel>) -> Result<Self, InitError> {
        if levels.is_empty() {
            return Err(InitError::NoLevels);
        }
        for (i, l) in levels.iter().enumerate() {
            let shapes_ok = l.encoder.out_dim() == l.decoder.in_dim() && l.decoder.out_dim() == l.encoder.in_dim();
            if !shapes_ok {
                return Err(InitError::DimensionMismatch {
                    expected: l.encoder.out_dim(),
                    got: l.decoder.in_dim(),
                    context: "decoder must mirror its encoder",
                }
                .at_level(i));
            }
            if i > 0 && levels[i - 1].encoder.out_dim() != l.encoder.in_dim() {
                return Err(InitError::DimensionMismatch {
                    expected: levels[i - 1].encoder.out_dim(),
                    got: l.encoder.in_dim(),
                    context: "encoder dims must chain",
                }
                .at_level(i));
            }
        }
        Ok(StackedAutoEncoder { levels })
    }

    pub fn levels(&self) -> &[AutoEncoderLevel] {
        &self.levels
    }

    pub fn input_dim(&self) -> usize {
        self.levels[0].encoder.in_dim()
    }

    pub fn code_dim(&self) -> usize {
        self.levels.last().unwrap().encoder.out_dim()
    }

    /// Output of the last encoder.
    pub fn encode(&self, x: &[f64]) -> Result<Vector, InitError> {
        let mut a = Vector::new(x.to_vec())?;
        for l in &self.levels {
            a = l.encoder.forward(&a)?;
        }
        Ok(a)
    }

    /// Encodes through every level, then decodes back down to the input space.
    pub fn reconstruct(&self, x: &[f64]) -> Result<Vector, InitError> {
        let mut a = self.encode(x)?;
        for l in self.levels.iter().rev() {
            a = l.decoder.forward(&a)?;
        }
        Ok(a)
    }

    /// Rows of the composed linear map from the input to level `level`'s
    /// units, ignoring the nonlinearities: `W_level · … · W_0`. Used to draw
    /// deep features as input-space images.
    pub fn input_space_features(&self, level: usize) -> Result<Matrix, InitError> {
        let mut m = self.levels[0].encoder.weights().clone();
        for l in self.levels.iter().take(level + 1).skip(1) {
            m = tensor::matmul(l.encoder.weights(), &m)?;
        }
        Ok(m)
    }
}

fn subsample_columns(data: &Matrix, cap: usize, rng: &mut RngStream) -> Matrix {
    let mut idx = index::sample(rng, data.cols(), cap).into_vec();
    idx.sort_unstable();
    data.select_columns(&idx)
}

fn decoder_inputs(
    current: &Matrix,
    code_dim: usize,
    activation: Activation,
    mode: DecoderSamples,
    rng: &mut RngStream,
) -> Result<Matrix, InitError> {
    let want = decoder_sample_count(code_dim, current.cols());
    match mode {
        DecoderSamples::Real => {
            let inside = (0..current.cols())
                .filter(|&j| (0..current.rows()).all(|i| activation.in_range(current.get(i, j))))
                .take(want)
                .collect::<Vec<_>>();
            if inside.len() < code_dim + 1 {
                return Err(InitError::TooFewSamples {
                    needed: code_dim + 1,
                    got: inside.len(),
                });
            }
            Ok(current.select_columns(&inside))
        }
        DecoderSamples::Random => {
            let lo = current.as_slice().iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = current.as_slice().iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let count = 4 * code_dim + 1;
            let data: Vec<f64> = (0..current.rows() * count)
                .map(|_| if hi > lo { rng.gen_range(lo..hi) } else { lo })
                .collect();
            Ok(Matrix::new(current.rows(), count, data)?)
        }
    }
}

/// Greedy layer-wise construction of a stacked auto-encoder over `data`
/// (one sample per column).
///
/// No randomness is consumed unless the data is subsampled or random
/// decoder samples are requested.
pub fn build_stack(
    data: &Matrix,
    specs: &[LevelSpec],
    opts: &StackOptions,
    rng: &mut RngStream,
) -> Result<StackedAutoEncoder, InitError> {
    if specs.is_empty() {
        return Err(InitError::NoLevels);
    }
    let mut current = match opts.pca_sample_cap {
        Some(cap) if data.cols() > cap => subsample_columns(data, cap, rng),
        _ => data.clone(),
    };
    let mut levels = Vec::with_capacity(specs.len());
    for (i, spec) in specs.iter().enumerate() {
        let level = (|| {
            let pca = PcaModel::fit(&current, spec.kept)?;
            let encoder = encoder_from_pca(&pca, spec.activation, opts.relu_duplicate)?;
            let dec_act = if spec.activation.is_invertible() {
                spec.activation
            } else {
                Activation::Identity
            };
            let fit_on = decoder_inputs(&current, encoder.out_dim(), dec_act, opts.decoder_samples, rng)?;
            let decoder = decoder_fit(&encoder, &fit_on, dec_act)?;
            let next = encode_columns(&encoder, &current)?;
            Ok((AutoEncoderLevel { encoder, decoder, pca }, next))
        })()
        .map_err(|e: InitError| e.at_level(i))?;
        levels.push(level.0);
        current = level.1;
    }
    StackedAutoEncoder::new(levels)
}

/// Encoder layers of `stack` topped by an Xavier-initialized linear head of
/// width `classes`. Decoders are dropped.
pub fn to_classifier(stack: &StackedAutoEncoder, classes: usize, rng: &mut RngStream) -> Result<Network, InitError> {
    to_classifier_with(stack, classes, XavierBound::default(), rng)
}

pub fn to_classifier_with(
    stack: &StackedAutoEncoder,
    classes: usize,
    rule: XavierBound,
    rng: &mut RngStream,
) -> Result<Network, InitError> {
    if classes < 2 {
        return Err(InitError::DimensionMismatch {
            expected: 2,
            got: classes,
            context: "a classifier needs at least two classes",
        });
    }
    let layers = stack.levels.iter().map(|l| l.encoder.clone()).collect();
    let head = xavier_init_with(stack.code_dim(), classes, Activation::Identity, rule, rng);
    Ok(Network::new(layers, head)?)
}
