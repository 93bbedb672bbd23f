//! Dense SPD linear algebra backing likelihood evaluation and prediction.

use serde::{Deserialize, Serialize};

use crate::{Error, Result, Scalar};

/// Dense row-major matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix<F> {
    data: Vec<F>,
    rows: usize,
    cols: usize,
}

impl<F: Scalar> Matrix<F> {
    pub fn from_rows(rows: Vec<Vec<F>>) -> Result<Self> {
        let nrows = rows.len();
        let ncols = rows.first().map(|r| r.len()).unwrap_or(0);
        let mut data = Vec::with_capacity(nrows * ncols);
        for r in &rows {
            if r.len() != ncols {
                return Err(Error::DimensionMismatch {
                    expected: ncols,
                    got: r.len(),
                });
            }
            data.extend_from_slice(r);
        }
        Ok(Self {
            data,
            rows: nrows,
            cols: ncols,
        })
    }

    pub fn from_flat(data: Vec<F>, rows: usize, cols: usize) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::DimensionMismatch {
                expected: rows * cols,
                got: data.len(),
            });
        }
        Ok(Self { data, rows, cols })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            data: vec![F::zero(); rows * cols],
            rows,
            cols,
        }
    }

    pub fn nrows(&self) -> usize {
        self.rows
    }

    pub fn ncols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[F] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn get(&self, i: usize, j: usize) -> F {
        self.data[i * self.cols + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: F) {
        self.data[i * self.cols + j] = v;
    }

    pub fn data(&self) -> &[F] {
        &self.data
    }

    pub fn to_rows(&self) -> Vec<Vec<F>> {
        (0..self.rows).map(|i| self.row(i).to_vec()).collect()
    }

    pub fn iter_rows(&self) -> impl Iterator<Item = &[F]> {
        (0..self.rows).map(move |i| self.row(i))
    }
}

/// Lower-triangular Cholesky factor of a symmetric positive-definite matrix.
///
/// Invariants: entries above the diagonal are exactly zero and every
/// diagonal entry is strictly positive.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CholeskyFactor<F> {
    l: Vec<F>,
    n: usize,
}

impl<F: Scalar> CholeskyFactor<F> {
    pub fn dim(&self) -> usize {
        self.n
    }

    /// Entry `L[i][j]`; zero above the diagonal.
    pub fn get(&self, i: usize, j: usize) -> F {
        if j > i {
            F::zero()
        } else {
            self.l[i * self.n + j]
        }
    }
}

/// Factorizes a symmetric matrix `A = L * L^T`. Only the lower triangle of
/// `A` is read; symmetry is the caller's responsibility.
///
/// Fails with [`Error::NotPositiveDefinite`] carrying the pivot index when a
/// diagonal pivot is non-positive, which signals the caller to increase the
/// nugget.
pub fn cholesky<F: Scalar>(a: &Matrix<F>) -> Result<CholeskyFactor<F>> {
    let n = a.nrows();
    if a.ncols() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: a.ncols(),
        });
    }
    if n == 0 {
        return Err(Error::EmptyInput);
    }
    let mut l = vec![F::zero(); n * n];
    for j in 0..n {
        for i in j..n {
            let mut sum = a.get(i, j);
            for k in 0..j {
                sum = sum - l[i * n + k] * l[j * n + k];
            }
            if i == j {
                if sum <= F::zero() {
                    return Err(Error::NotPositiveDefinite { pivot: j });
                }
                l[j * n + j] = sum.sqrt();
            } else {
                l[i * n + j] = sum / l[j * n + j];
            }
        }
    }
    Ok(CholeskyFactor { l, n })
}

/// Solves `(L * L^T) x = b` by forward then back substitution.
pub fn solve_chol<F: Scalar>(f: &CholeskyFactor<F>, b: &[F]) -> Result<Vec<F>> {
    let n = f.n;
    if b.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: b.len(),
        });
    }
    // forward: L z = b
    let mut z = vec![F::zero(); n];
    for i in 0..n {
        let mut sum = b[i];
        for k in 0..i {
            sum = sum - f.l[i * n + k] * z[k];
        }
        z[i] = sum / f.l[i * n + i];
    }
    // back: L^T x = z
    let mut x = vec![F::zero(); n];
    for i in (0..n).rev() {
        let mut sum = z[i];
        for k in i + 1..n {
            sum = sum - f.l[k * n + i] * x[k];
        }
        x[i] = sum / f.l[i * n + i];
    }
    Ok(x)
}

/// `ln det(A) = 2 * sum_i ln L[i][i]`.
pub fn log_det<F: Scalar>(f: &CholeskyFactor<F>) -> F {
    let mut s = F::zero();
    for i in 0..f.n {
        s = s + f.l[i * f.n + i].ln();
    }
    s + s
}

pub fn dot<F: Scalar>(a: &[F], b: &[F]) -> F {
    debug_assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b)
        .fold(F::zero(), |acc, (&x, &y)| acc + x * y)
}
