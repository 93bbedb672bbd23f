//! Gaussian product correlation kernel and correlation matrix assembly.
//!
//! The kernel is `exp(-sum_j theta_j * |x_i_j - x_j_j|^p_j)` with one
//! activity parameter theta per dimension; on [0,1]-scaled inputs the fitted
//! theta double as feature-importance scores.

use serde::{Deserialize, Serialize};

use crate::linalg::Matrix;
use crate::{c, Error, Result, Scalar};

pub const DEFAULT_THETA_LO: f64 = 1e-4;
pub const DEFAULT_THETA_HI: f64 = 1e2;

/// Per-dimension kernel hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelParams<F> {
    /// Activity parameter per dimension, positive.
    pub theta: Vec<F>,
    /// Exponent per dimension, in (0, 2]. Defaults to 2 everywhere.
    pub p: Vec<F>,
}

impl<F: Scalar> KernelParams<F> {
    /// Params with the given theta and every exponent fixed at 2.
    pub fn new(theta: Vec<F>) -> Self {
        let k = theta.len();
        Self {
            theta,
            p: vec![c(2.0); k],
        }
    }

    pub fn with_p(theta: Vec<F>, p: Vec<F>) -> Result<Self> {
        if theta.len() != p.len() {
            return Err(Error::DimensionMismatch {
                expected: theta.len(),
                got: p.len(),
            });
        }
        Ok(Self { theta, p })
    }

    pub fn dim(&self) -> usize {
        self.theta.len()
    }
}

/// Correlation matrix over training points, diagonal `1 + nugget`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CorrelationMatrix<F> {
    psi: Matrix<F>,
    nugget: F,
}

impl<F: Scalar> CorrelationMatrix<F> {
    pub fn dim(&self) -> usize {
        self.psi.nrows()
    }

    pub fn nugget(&self) -> F {
        self.nugget
    }

    pub fn get(&self, i: usize, j: usize) -> F {
        self.psi.get(i, j)
    }

    pub fn matrix(&self) -> &Matrix<F> {
        &self.psi
    }
}

#[inline]
fn pow_abs<F: Scalar>(h: F, p: F) -> F {
    let h = h.abs();
    // p = 2 fast path; the general branch goes through exp(p ln h).
    if p == c(2.0) {
        h * h
    } else if h == F::zero() {
        F::zero()
    } else {
        (p * h.ln()).exp()
    }
}

/// Gaussian product correlation between two points.
pub fn correlate<F: Scalar>(xi: &[F], xj: &[F], params: &KernelParams<F>) -> Result<F> {
    let k = params.dim();
    if xi.len() != k {
        return Err(Error::DimensionMismatch {
            expected: k,
            got: xi.len(),
        });
    }
    if xj.len() != k {
        return Err(Error::DimensionMismatch {
            expected: k,
            got: xj.len(),
        });
    }
    let mut s = F::zero();
    for j in 0..k {
        s = s + params.theta[j] * pow_abs(xi[j] - xj[j], params.p[j]);
    }
    Ok((-s).exp())
}

/// Assembles the n x n correlation matrix over the rows of `x`.
///
/// The upper triangle is computed and mirrored, so the result is symmetric
/// by construction.
pub fn build_matrix<F: Scalar>(
    x: &Matrix<F>,
    params: &KernelParams<F>,
    nugget: F,
) -> Result<CorrelationMatrix<F>> {
    let n = x.nrows();
    if n < 2 {
        return Err(Error::TooFewPoints(n));
    }
    let mut psi = Matrix::zeros(n, n);
    let diag = F::one() + nugget;
    for i in 0..n {
        psi.set(i, i, diag);
        for j in i + 1..n {
            let v = correlate(x.row(i), x.row(j), params)?;
            psi.set(i, j, v);
            psi.set(j, i, v);
        }
    }
    Ok(CorrelationMatrix { psi, nugget })
}

/// Correlation vector between each training row and a prediction point.
pub fn build_vector<F: Scalar>(
    x: &Matrix<F>,
    xstar: &[F],
    params: &KernelParams<F>,
) -> Result<Vec<F>> {
    (0..x.nrows())
        .map(|i| correlate(x.row(i), xstar, params))
        .collect()
}
