//! Small dense linear algebra: LU determinants, the adjugate, and the
//! adjugate-vector product used by the mixing step.
//!
//! The adjugate is always formed from determinants, never from an inverse,
//! so it stays exact (up to rounding) when the matrix is singular.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Determinant of a column-major `m`×`m` buffer, destroying the buffer.
///
/// Gaussian elimination with partial (row) pivoting.
fn lu_det_in_place(a: &mut [f64], m: usize) -> f64 {
    debug_assert_eq!(a.len(), m * m);
    let mut det = 1.0;
    for k in 0..m {
        let mut piv = k;
        let mut best = a[k + k * m].abs();
        for i in k + 1..m {
            let v = a[i + k * m].abs();
            if v > best {
                best = v;
                piv = i;
            }
        }
        if best == 0.0 {
            return 0.0;
        }
        if piv != k {
            for j in k..m {
                a.swap(k + j * m, piv + j * m);
            }
            det = -det;
        }
        let pivot = a[k + k * m];
        det *= pivot;
        for i in k + 1..m {
            let f = a[i + k * m] / pivot;
            if f != 0.0 {
                for j in k + 1..m {
                    a[i + j * m] -= f * a[k + j * m];
                }
            }
        }
    }
    det
}

/// Sum of `ln|u_kk|` over the LU factors and the sign of the determinant.
fn lu_log_det_in_place(a: &mut [f64], m: usize) -> (f64, f64) {
    let mut sign = 1.0;
    let mut log = 0.0;
    for k in 0..m {
        let mut piv = k;
        let mut best = a[k + k * m].abs();
        for i in k + 1..m {
            let v = a[i + k * m].abs();
            if v > best {
                best = v;
                piv = i;
            }
        }
        if best == 0.0 {
            return (0.0, f64::NEG_INFINITY);
        }
        if piv != k {
            for j in k..m {
                a.swap(k + j * m, piv + j * m);
            }
            sign = -sign;
        }
        let pivot = a[k + k * m];
        if pivot < 0.0 {
            sign = -sign;
        }
        log += pivot.abs().ln();
        for i in k + 1..m {
            let f = a[i + k * m] / pivot;
            if f != 0.0 {
                for j in k + 1..m {
                    a[i + j * m] -= f * a[k + j * m];
                }
            }
        }
    }
    (sign, log)
}

pub fn determinant(m: &DMatrix<f64>) -> f64 {
    assert!(m.is_square(), "determinant of non-square matrix");
    let n = m.nrows();
    let mut buf = m.as_slice().to_vec();
    lu_det_in_place(&mut buf, n)
}

/// `ln|det M|`; `-inf` for a singular matrix. Immune to the over/underflow
/// that the plain product of pivots suffers for large or tiny matrices.
pub fn log_abs_determinant(m: &DMatrix<f64>) -> f64 {
    assert!(m.is_square(), "determinant of non-square matrix");
    let n = m.nrows();
    let mut buf = m.as_slice().to_vec();
    lu_log_det_in_place(&mut buf, n).1
}

/// Transposed cofactor matrix. Each minor's determinant comes from LU, so
/// `M * adj(M) = det(M) * I` holds for singular `M` as well.
pub fn adjugate(m: &DMatrix<f64>) -> DMatrix<f64> {
    assert!(m.is_square(), "adjugate of non-square matrix");
    let n = m.nrows();
    if n == 0 {
        return DMatrix::zeros(0, 0);
    }
    if n == 1 {
        return DMatrix::from_element(1, 1, 1.0);
    }
    let k = n - 1;
    let mut minor = vec![0.0; k * k];
    let mut adj = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            // minor with row i and column j removed, column-major
            let mut idx = 0;
            for c in (0..n).filter(|&c| c != j) {
                for r in (0..n).filter(|&r| r != i) {
                    minor[idx] = m[(r, c)];
                    idx += 1;
                }
            }
            let sign = if (i + j) % 2 == 0 { 1.0 } else { -1.0 };
            adj[(j, i)] = sign * lu_det_in_place(&mut minor, k);
        }
    }
    adj
}

/// `adj(M) * v` without forming the adjugate: entry `i` is the determinant of
/// `M` with column `i` replaced by `v` (Cramer's identity, valid for any `M`).
pub fn adjugate_mul(m: &DMatrix<f64>, v: &DVector<f64>) -> DVector<f64> {
    assert!(m.is_square(), "adjugate of non-square matrix");
    let n = m.nrows();
    assert_eq!(v.len(), n, "adjugate_mul dimension mismatch");
    let mut out = DVector::zeros(n);
    if n == 1 {
        out[0] = v[0];
        return out;
    }
    let src = m.as_slice();
    let mut buf = vec![0.0; n * n];
    for i in 0..n {
        buf.copy_from_slice(src);
        buf[i * n..(i + 1) * n].copy_from_slice(v.as_slice());
        out[i] = lu_det_in_place(&mut buf, n);
    }
    out
}

/// `adj(M) * B` column by column.
pub fn adjugate_mul_mat(m: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(m.nrows(), b.ncols());
    for (j, col) in b.column_iter().enumerate() {
        out.set_column(j, &adjugate_mul(m, &col.into_owned()));
    }
    out
}

pub fn inverse(m: &DMatrix<f64>, what: &'static str) -> Result<DMatrix<f64>> {
    m.clone().lu().try_inverse().ok_or(Error::Singular(what))
}

/// 2-norm condition number from the singular values; `inf` when singular.
pub fn condition_number(m: &DMatrix<f64>) -> f64 {
    let sv = m.clone().singular_values();
    let max = sv.iter().cloned().fold(0.0, f64::max);
    let min = sv.iter().cloned().fold(f64::INFINITY, f64::min);
    if min == 0.0 || !min.is_finite() {
        f64::INFINITY
    } else {
        max / min
    }
}

/// Observer shift matrix: ones on the first superdiagonal.
pub fn shift_matrix(n: usize) -> DMatrix<f64> {
    DMatrix::from_fn(n, n, |i, j| if j == i + 1 { 1.0 } else { 0.0 })
}

pub fn basis(n: usize, i: usize) -> DVector<f64> {
    let mut e = DVector::zeros(n);
    e[i] = 1.0;
    e
}
