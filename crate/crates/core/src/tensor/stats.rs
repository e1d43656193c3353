use super::{dot, Matrix, TensorError, Vector};
use crate::par::{self, Execution};

/// Column mean and sample covariance (denominator `n - 1`) of `samples`,
/// which holds one sample per column.
pub fn mean_and_covariance(samples: &Matrix) -> Result<(Vector, Matrix), TensorError> {
    mean_and_covariance_with(samples, Execution::default())
}

pub fn mean_and_covariance_with(samples: &Matrix, exec: Execution) -> Result<(Vector, Matrix), TensorError> {
    let (d, n) = samples.shape();
    if n < 2 {
        return Err(TensorError::TooFewSamples(n));
    }
    let inv_n = 1.0 / n as f64;
    let mean: Vec<f64> = (0..d).map(|i| samples.row(i).iter().sum::<f64>() * inv_n).collect();

    // Row i of the centered data holds feature i across all samples, so each
    // covariance entry is a dot product of two contiguous rows.
    let mut centered = samples.as_slice().to_vec();
    for (i, m) in mean.iter().enumerate() {
        for x in &mut centered[i * n..(i + 1) * n] {
            *x -= m;
        }
    }
    let denom = 1.0 / (n - 1) as f64;
    let mut cov = vec![0.0; d * d];
    par::for_each_chunk_mut(exec, &mut cov, d, |i, out_row| {
        let ri = &centered[i * n..(i + 1) * n];
        for (j, out) in out_row.iter_mut().enumerate().skip(i) {
            *out = dot(ri, &centered[j * n..(j + 1) * n]) * denom;
        }
    });
    for i in 0..d {
        for j in 0..i {
            cov[i * d + j] = cov[j * d + i];
        }
    }
    Ok((Vector::from_vec_unchecked(mean), Matrix::from_vec_unchecked(d, d, cov)))
}
