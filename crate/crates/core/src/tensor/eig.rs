use super::{Matrix, TensorError, Vector};

/// Sweep limit used by [`sym_eig`].
pub const MAX_SWEEPS: usize = 100;

const SYMMETRY_TOL: f64 = 1e-9;

/// Eigen-decomposition of a symmetric matrix.
///
/// `eigenvalues` are sorted in descending order and column `i` of
/// `eigenvectors` is the unit eigenvector paired with eigenvalue `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct EigResult {
    pub eigenvalues: Vector,
    pub eigenvectors: Matrix,
}

/// Symmetric eigen-decomposition by cyclic Jacobi rotations.
pub fn sym_eig(a: &Matrix) -> Result<EigResult, TensorError> {
    sym_eig_with_limit(a, MAX_SWEEPS)
}

pub fn sym_eig_with_limit(a: &Matrix, max_sweeps: usize) -> Result<EigResult, TensorError> {
    let (rows, cols) = a.shape();
    if rows != cols {
        return Err(TensorError::NotSquare { rows, cols });
    }
    let n = rows;
    let scale = a.max_abs().max(1.0);
    for i in 0..n {
        for j in i + 1..n {
            let diff = (a.get(i, j) - a.get(j, i)).abs();
            if diff > SYMMETRY_TOL * scale {
                return Err(TensorError::NotSymmetric { i, j, diff });
            }
        }
    }

    let mut m = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            m[i * n + j] = 0.5 * (a.get(i, j) + a.get(j, i));
        }
    }
    // v is stored transposed (row k = eigenvector k) so rotations touch contiguous rows.
    let mut vt = Matrix::identity(n).into_vec();

    // Converged once a full sweep finds every off-diagonal entry negligible.
    let mut converged = false;
    for _ in 0..max_sweeps {
        let mut rotations = 0usize;
        for p in 0..n {
            for q in p + 1..n {
                rotations += usize::from(rotate(&mut m, &mut vt, n, p, q));
            }
        }
        if rotations == 0 {
            converged = true;
            break;
        }
    }
    if !converged && !off_diagonal_negligible(&m, n) {
        return Err(TensorError::NoConvergence { sweeps: max_sweeps });
    }

    let mut order: Vec<usize> = (0..n).collect();
    // Stable sort keeps index order among exactly tied eigenvalues.
    order.sort_by(|&i, &j| m[j * n + j].total_cmp(&m[i * n + i]));

    let eigenvalues: Vec<f64> = order.iter().map(|&i| m[i * n + i]).collect();
    let mut vectors = vec![0.0; n * n];
    for (col, &k) in order.iter().enumerate() {
        let v = &vt[k * n..(k + 1) * n];
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        for (row, x) in v.iter().enumerate() {
            vectors[row * n + col] = x / norm;
        }
    }
    Ok(EigResult {
        eigenvalues: Vector::from_vec_unchecked(eigenvalues),
        eigenvectors: Matrix::from_vec_unchecked(n, n, vectors),
    })
}

/// An off-diagonal entry is negligible when adding a hundredfold of it to
/// both diagonal entries leaves them unchanged in floating point.
fn negligible(apq: f64, app: f64, aqq: f64) -> bool {
    let g = 100.0 * apq.abs();
    app.abs() + g == app.abs() && aqq.abs() + g == aqq.abs()
}

fn off_diagonal_negligible(m: &[f64], n: usize) -> bool {
    (0..n).all(|p| (p + 1..n).all(|q| negligible(m[p * n + q], m[p * n + p], m[q * n + q])))
}

/// Applies the rotation zeroing `m[p][q]`: `m <- Jᵀ m J`, `v <- v J`.
/// Returns false when the entry was already negligible.
fn rotate(m: &mut [f64], vt: &mut [f64], n: usize, p: usize, q: usize) -> bool {
    let apq = m[p * n + q];
    let app = m[p * n + p];
    let aqq = m[q * n + q];
    if negligible(apq, app, aqq) {
        m[p * n + q] = 0.0;
        m[q * n + p] = 0.0;
        return false;
    }
    let theta = (aqq - app) / (2.0 * apq);
    let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
    let c = 1.0 / (t * t + 1.0).sqrt();
    let s = t * c;

    // Columns p and q.
    for k in 0..n {
        let mkp = m[k * n + p];
        let mkq = m[k * n + q];
        m[k * n + p] = c * mkp - s * mkq;
        m[k * n + q] = s * mkp + c * mkq;
    }
    // Rows p and q.
    let (lo, hi) = m.split_at_mut(q * n);
    let row_p = &mut lo[p * n..(p + 1) * n];
    let row_q = &mut hi[..n];
    for (mp, mq) in row_p.iter_mut().zip(row_q.iter_mut()) {
        let (x, y) = (*mp, *mq);
        *mp = c * x - s * y;
        *mq = s * x + c * y;
    }
    m[p * n + q] = 0.0;
    m[q * n + p] = 0.0;

    let (lo, hi) = vt.split_at_mut(q * n);
    let vp = &mut lo[p * n..(p + 1) * n];
    let vq = &mut hi[..n];
    for (a, b) in vp.iter_mut().zip(vq.iter_mut()) {
        let (x, y) = (*a, *b);
        *a = c * x - s * y;
        *b = s * x + c * y;
    }
    true
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::matmul;
    use proptest::prelude::*;

    fn residual(a: &Matrix, eig: &EigResult, i: usize) -> f64 {
        let v = eig.eigenvectors.column(i);
        let av = a.mul_vec(&v).unwrap();
        av.iter()
            .zip(v.iter())
            .map(|(x, y)| (x - eig.eigenvalues[i] * y).powi(2))
            .sum::<f64>()
            .sqrt()
    }

    #[test]
    fn identity_has_unit_eigenvalues() {
        let eig = sym_eig(&Matrix::identity(2)).unwrap();
        assert_eq!(eig.eigenvalues.as_slice(), &[1.0, 1.0]);
        let vtv = matmul(&eig.eigenvectors.transpose(), &eig.eigenvectors).unwrap();
        assert!(vtv.max_abs_diff(&Matrix::identity(2)) < 1e-12);
    }

    #[test]
    fn diagonal_matrix() {
        let a = Matrix::from_rows(&[[2.0, 0.0], [0.0, 1.0]]).unwrap();
        let eig = sym_eig(&a).unwrap();
        assert_eq!(eig.eigenvalues.as_slice(), &[2.0, 1.0]);
        assert_eq!(
            eig.eigenvectors
                .column(0)
                .as_slice()
                .iter()
                .map(|x| x.abs())
                .collect::<Vec<_>>(),
            vec![1.0, 0.0]
        );
        assert_eq!(
            eig.eigenvectors
                .column(1)
                .as_slice()
                .iter()
                .map(|x| x.abs())
                .collect::<Vec<_>>(),
            vec![0.0, 1.0]
        );
    }

    #[test]
    fn swap_matrix_hand_solved() {
        // Characteristic polynomial λ² - 1: eigenpairs 1 ↔ (1,1)/√2, -1 ↔ (1,-1)/√2.
        let a = Matrix::from_rows(&[[0.0, 1.0], [1.0, 0.0]]).unwrap();
        let eig = sym_eig(&a).unwrap();
        assert!((eig.eigenvalues[0] - 1.0).abs() < 1e-14);
        assert!((eig.eigenvalues[1] + 1.0).abs() < 1e-14);
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let v0 = eig.eigenvectors.column(0);
        let v1 = eig.eigenvectors.column(1);
        assert!((v0[0].abs() - h).abs() < 1e-12 && v0[0] * v0[1] > 0.0);
        assert!((v1[0].abs() - h).abs() < 1e-12 && v1[0] * v1[1] < 0.0);
        for i in 0..2 {
            assert!(residual(&a, &eig, i) < 1e-10);
        }
    }

    #[test]
    fn rejects_non_square_and_asymmetric() {
        assert!(matches!(
            sym_eig(&Matrix::zeros(2, 3)),
            Err(TensorError::NotSquare { rows: 2, cols: 3 })
        ));
        let a = Matrix::from_rows(&[[1.0, 2.0], [0.0, 1.0]]).unwrap();
        assert!(matches!(sym_eig(&a), Err(TensorError::NotSymmetric { .. })));
    }

    #[test]
    fn reports_sweep_count_when_not_converged() {
        let a = Matrix::from_rows(&[[1.0, 0.5, 0.2], [0.5, 2.0, 0.3], [0.2, 0.3, 3.0]]).unwrap();
        assert_eq!(sym_eig_with_limit(&a, 0), Err(TensorError::NoConvergence { sweeps: 0 }));
    }

    fn symmetric(n: usize) -> impl Strategy<Value = Matrix> {
        proptest::collection::vec(-5.0f64..5.0, n * n).prop_map(move |d| {
            let a = Matrix::new(n, n, d).unwrap();
            let mut s = Matrix::zeros(n, n);
            for i in 0..n {
                for j in 0..n {
                    s.set(i, j, a.get(i, j) + a.get(j, i));
                }
            }
            s
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn reconstruction_and_orthonormality(a in symmetric(10)) {
            let eig = sym_eig(&a).unwrap();
            let v = &eig.eigenvectors;
            let n = a.rows();
            let mut vd = v.clone();
            for i in 0..n {
                for j in 0..n {
                    vd.set(i, j, v.get(i, j) * eig.eigenvalues[j]);
                }
            }
            let rec = matmul(&vd, &v.transpose()).unwrap();
            prop_assert!(rec.max_abs_diff(&a) < 1e-7);
            let vtv = matmul(&v.transpose(), v).unwrap();
            prop_assert!(vtv.max_abs_diff(&Matrix::identity(n)) < 1e-8);
            for i in 0..n {
                let norm = v.column(i).l2_norm();
                prop_assert!((norm - 1.0).abs() < 1e-10);
                prop_assert!(residual(&a, &eig, i) < 1e-8);
                if i > 0 {
                    prop_assert!(eig.eigenvalues[i - 1] >= eig.eigenvalues[i]);
                }
            }
        }
    }
}
