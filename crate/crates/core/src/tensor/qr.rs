use super::{dot, Matrix, TensorError};

/// Relative pivot threshold below which a column counts as dependent.
const RANK_TOL: f64 = 1e-12;

/// Least-squares solution of `a · x ≈ b` via Householder QR.
///
/// Returns the `a.cols × b.cols` matrix minimizing the Frobenius norm of the
/// residual. Requires `a.rows ≥ a.cols` and full column rank.
pub fn lstsq(a: &Matrix, b: &Matrix) -> Result<Matrix, TensorError> {
    let (m, n) = a.shape();
    if b.rows() != m {
        return Err(TensorError::DimensionMismatch {
            left: a.shape(),
            right: b.shape(),
            context: "lstsq: a.rows must equal b.rows",
        });
    }
    if m < n {
        return Err(TensorError::Underdetermined { rows: m, cols: n });
    }
    let k = b.cols();

    // Work column-major on A so each reflector touches contiguous memory.
    let mut qa: Vec<Vec<f64>> = (0..n).map(|j| a.column(j).into_vec()).collect();
    let mut qb: Vec<Vec<f64>> = (0..k).map(|j| b.column(j).into_vec()).collect();
    let mut diag = vec![0.0; n];

    for j in 0..n {
        let col = &qa[j][j..];
        let norm = dot(col, col).sqrt();
        if norm == 0.0 {
            diag[j] = 0.0;
            continue;
        }
        // Reflector v = x + sign(x0)·‖x‖·e0, applied as H = I - 2vvᵀ/(vᵀv).
        let alpha = if col[0] >= 0.0 { -norm } else { norm };
        let mut v = col.to_vec();
        v[0] -= alpha;
        let vtv = dot(&v, &v);
        diag[j] = alpha;
        qa[j][j] = alpha;
        for x in &mut qa[j][j + 1..] {
            *x = 0.0;
        }
        if vtv == 0.0 {
            continue;
        }
        for c in qa.iter_mut().skip(j + 1).chain(qb.iter_mut()) {
            let tail = &mut c[j..];
            let f = 2.0 * dot(&v, tail) / vtv;
            for (t, vi) in tail.iter_mut().zip(&v) {
                *t -= f * vi;
            }
        }
    }

    let largest = diag.iter().fold(0.0f64, |acc, d| acc.max(d.abs()));
    for (column, &pivot) in diag.iter().enumerate() {
        if pivot.abs() <= RANK_TOL * largest || pivot == 0.0 {
            return Err(TensorError::RankDeficient {
                column,
                pivot: pivot.abs(),
                largest,
            });
        }
    }

    // Back substitution R x = (Qᵀ b)[..n], one right-hand side at a time.
    let mut x = Matrix::zeros(n, k);
    for (c, rhs) in qb.iter().enumerate() {
        for i in (0..n).rev() {
            let mut s = rhs[i];
            for (j, col) in qa.iter().enumerate().skip(i + 1) {
                s -= col[i] * x.get(j, c);
            }
            x.set(i, c, s / qa[i][i]);
        }
    }
    Ok(x)
}
