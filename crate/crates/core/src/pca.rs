//! Principal component analysis: fit, forward transform and inverse.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::tensor::{self, dot, Matrix, TensorError, Vector};

/// Every eigenvalue below this counts as zero variance.
const DEGENERATE_EIGENVALUE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PcaError {
    #[error("kept = {kept} out of range 1..={input_dim}")]
    KeptOutOfRange { kept: usize, input_dim: usize },
    #[error("degenerate data: all covariance eigenvalues are below {DEGENERATE_EIGENVALUE:e}")]
    DegenerateData,
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error(transparent)]
    Tensor(#[from] TensorError),
}

/// A fitted PCA: mean `m`, component rows `R` and their eigenvalues.
///
/// Rows of `components` are orthonormal. Each row is sign-normalized so that
/// its entry of largest magnitude is positive.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "PcaRecord", into = "PcaRecord")]
pub struct PcaModel {
    mean: Vector,
    components: Matrix,
    eigenvalues: Vector,
}

impl PcaModel {
    /// Fits a PCA on `samples` (one sample per column) keeping the leading
    /// `kept` components.
    pub fn fit(samples: &Matrix, kept: usize) -> Result<PcaModel, PcaError> {
        let input_dim = samples.rows();
        if kept == 0 || kept > input_dim {
            return Err(PcaError::KeptOutOfRange { kept, input_dim });
        }
        let (mean, cov) = tensor::mean_and_covariance(samples)?;
        let eig = tensor::sym_eig(&cov)?;
        if eig.eigenvalues.iter().all(|&l| l < DEGENERATE_EIGENVALUE) {
            return Err(PcaError::DegenerateData);
        }

        let mut pairs: Vec<(f64, Vec<f64>)> = (0..input_dim)
            .map(|i| {
                let mut v = eig.eigenvectors.column(i).into_vec();
                normalize_sign(&mut v);
                (eig.eigenvalues[i], v)
            })
            .collect();
        // Descending eigenvalue; exact ties ordered by the first component
        // where the sign-normalized vectors differ (larger first).
        pairs.sort_by(|(la, va), (lb, vb)| {
            lb.total_cmp(la).then_with(|| {
                va.iter()
                    .zip(vb)
                    .find(|(x, y)| x != y)
                    .map_or(std::cmp::Ordering::Equal, |(x, y)| y.total_cmp(x))
            })
        });
        pairs.truncate(kept);

        let eigenvalues = pairs.iter().map(|(l, _)| *l).collect();
        let rows: Vec<Vec<f64>> = pairs.into_iter().map(|(_, v)| v).collect();
        Ok(PcaModel {
            mean,
            components: Matrix::from_rows(&rows)?,
            eigenvalues: Vector::from_vec_unchecked(eigenvalues),
        })
    }

    pub fn mean(&self) -> &Vector {
        &self.mean
    }

    /// The component matrix `R`, one component per row.
    pub fn components(&self) -> &Matrix {
        &self.components
    }

    pub fn eigenvalues(&self) -> &Vector {
        &self.eigenvalues
    }

    pub fn input_dim(&self) -> usize {
        self.components.cols()
    }

    pub fn kept(&self) -> usize {
        self.components.rows()
    }

    /// `R · (x − m)`.
    pub fn transform(&self, x: &[f64]) -> Result<Vector, PcaError> {
        self.check_dim(self.input_dim(), x.len())?;
        let centered: Vec<f64> = x.iter().zip(self.mean.iter()).map(|(a, m)| a - m).collect();
        Ok(self.components.mul_vec(&centered)?)
    }

    /// `Rᵀ · y + m`; the exact inverse of [`transform`](Self::transform) at full
    /// rank and the orthogonal projection onto the kept subspace otherwise.
    pub fn inverse(&self, y: &[f64]) -> Result<Vector, PcaError> {
        self.check_dim(self.kept(), y.len())?;
        let mut x = self.components.tr_mul_vec(y)?;
        for (xi, m) in x.as_mut_slice().iter_mut().zip(self.mean.iter()) {
            *xi += m;
        }
        Ok(x)
    }

    fn check_dim(&self, expected: usize, got: usize) -> Result<(), PcaError> {
        if expected == got {
            Ok(())
        } else {
            Err(PcaError::DimensionMismatch { expected, got })
        }
    }
}

pub fn pca_fit(samples: &Matrix, kept: usize) -> Result<PcaModel, PcaError> {
    PcaModel::fit(samples, kept)
}

pub fn pca_transform(model: &PcaModel, x: &[f64]) -> Result<Vector, PcaError> {
    model.transform(x)
}

pub fn pca_inverse(model: &PcaModel, y: &[f64]) -> Result<Vector, PcaError> {
    model.inverse(y)
}

/// Flips `v` so its entry of largest magnitude (first on ties) is positive.
fn normalize_sign(v: &mut [f64]) {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if x.abs() > v[best].abs() {
            best = i;
        }
    }
    if v.get(best).is_some_and(|x| *x < 0.0) {
        for x in v.iter_mut() {
            *x = -*x;
        }
    }
}

/// One matched pair between two component sets.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ComponentMatch {
    pub reference: usize,
    pub other: usize,
    pub abs_cosine: f64,
}

/// Greedily pairs the first `top` rows of `reference` with rows of `other`
/// by largest |cosine| and returns the pairs ordered by reference index.
///
/// Reference components whose eigenvalue is within `min_gap` (relative) of a
/// neighbour are skipped: their identity is ill-posed.
pub fn match_components(reference: &PcaModel, other: &PcaModel, top: usize, min_gap: f64) -> Vec<ComponentMatch> {
    let top_ref = top.min(reference.kept());
    let top_other = top.min(other.kept());
    let lam = reference.eigenvalues();
    let well_separated = |i: usize| {
        let gap_ok = |j: usize| {
            let scale = lam[i].abs().max(lam[j].abs());
            scale == 0.0 || (lam[i] - lam[j]).abs() / scale >= min_gap
        };
        (i == 0 || gap_ok(i - 1)) && (i + 1 >= reference.kept() || gap_ok(i + 1))
    };

    let mut candidates = Vec::new();
    for i in (0..top_ref).filter(|&i| well_separated(i)) {
        let a = reference.components().row(i);
        for j in 0..top_other {
            let b = other.components().row(j);
            let cos = dot(a, b) / (dot(a, a).sqrt() * dot(b, b).sqrt());
            candidates.push(ComponentMatch {
                reference: i,
                other: j,
                abs_cosine: cos.abs(),
            });
        }
    }
    candidates.sort_by(|p, q| {
        q.abs_cosine
            .total_cmp(&p.abs_cosine)
            .then(p.reference.cmp(&q.reference))
            .then(p.other.cmp(&q.other))
    });
    let mut used_ref = vec![false; top_ref];
    let mut used_other = vec![false; top_other];
    let mut out = Vec::new();
    for c in candidates {
        if !used_ref[c.reference] && !used_other[c.other] {
            used_ref[c.reference] = true;
            used_other[c.other] = true;
            out.push(c);
        }
    }
    out.sort_by_key(|c| c.reference);
    out
}

#[derive(Serialize, Deserialize)]
struct PcaRecord {
    input_dim: usize,
    kept: usize,
    mean: Vec<f64>,
    eigenvalues: Vec<f64>,
    components: Vec<Vec<f64>>,
}

impl From<PcaModel> for PcaRecord {
    fn from(m: PcaModel) -> Self {
        PcaRecord {
            input_dim: m.input_dim(),
            kept: m.kept(),
            components: (0..m.kept()).map(|i| m.components.row(i).to_vec()).collect(),
            mean: m.mean.into_vec(),
            eigenvalues: m.eigenvalues.into_vec(),
        }
    }
}

impl TryFrom<PcaRecord> for PcaModel {
    type Error = PcaError;
    fn try_from(r: PcaRecord) -> Result<Self, Self::Error> {
        let components = if r.components.is_empty() {
            Matrix::zeros(0, r.input_dim)
        } else {
            Matrix::from_rows(&r.components)?
        };
        let model = PcaModel {
            mean: Vector::new(r.mean)?,
            components,
            eigenvalues: Vector::new(r.eigenvalues)?,
        };
        if model.input_dim() != r.input_dim || model.mean.dim() != r.input_dim {
            return Err(PcaError::DimensionMismatch {
                expected: r.input_dim,
                got: model.mean.dim(),
            });
        }
        if model.kept() != r.kept || model.eigenvalues.dim() != r.kept {
            return Err(PcaError::DimensionMismatch {
                expected: r.kept,
                got: model.kept(),
            });
        }
        Ok(model)
    }
}
