//! Test-only oracles, independent of the library's solve paths.

use gforse::kernel::{self, KernelParams};
use gforse::linalg::Matrix;

/// Concentrated log-likelihood via Gauss-Jordan inversion and a
/// pivoted-elimination determinant.
pub fn brute_force_logl(
    x: &Matrix<f64>,
    y: &[f64],
    params: &KernelParams<f64>,
    nugget: f64,
) -> (f64, f64, f64) {
    let n = x.nrows();
    let psi = kernel::build_matrix(x, params, nugget).unwrap();
    let a = psi.matrix().to_rows();
    let inv = gauss_jordan_inverse(&a);
    let det = lu_det(&a);
    let ones = vec![1.0; n];
    let quad = |u: &[f64], v: &[f64]| {
        let mut s = 0.0;
        for i in 0..n {
            for j in 0..n {
                s += u[i] * inv[i][j] * v[j];
            }
        }
        s
    };
    let mu = quad(&ones, y) / quad(&ones, &ones);
    let r: Vec<f64> = y.iter().map(|v| v - mu).collect();
    let s2 = quad(&r, &r) / n as f64;
    let ll = -0.5 * n as f64 * s2.ln() - 0.5 * det.ln();
    (ll, mu, s2)
}

fn gauss_jordan_inverse(a: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = a.len();
    let mut m: Vec<Vec<f64>> = a
        .iter()
        .enumerate()
        .map(|(i, row)| {
            let mut r = row.clone();
            r.extend((0..n).map(|j| if i == j { 1.0 } else { 0.0 }));
            r
        })
        .collect();
    for col in 0..n {
        let piv = (col..n)
            .max_by(|&i, &j| m[i][col].abs().partial_cmp(&m[j][col].abs()).unwrap())
            .unwrap();
        m.swap(col, piv);
        let p = m[col][col];
        for k in 0..2 * n {
            m[col][k] /= p;
        }
        for row in 0..n {
            if row != col {
                let f = m[row][col];
                for k in 0..2 * n {
                    m[row][k] -= f * m[col][k];
                }
            }
        }
    }
    m.into_iter().map(|r| r[n..].to_vec()).collect()
}

fn lu_det(a: &[Vec<f64>]) -> f64 {
    let n = a.len();
    let mut m: Vec<Vec<f64>> = a.to_vec();
    let mut det = 1.0;
    for col in 0..n {
        let piv = (col..n)
            .max_by(|&i, &j| m[i][col].abs().partial_cmp(&m[j][col].abs()).unwrap())
            .unwrap();
        if piv != col {
            m.swap(col, piv);
            det = -det;
        }
        det *= m[col][col];
        for row in col + 1..n {
            let f = m[row][col] / m[col][col];
            for k in col..n {
                m[row][k] -= f * m[col][k];
            }
        }
    }
    det
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

fn log_likelihood(x: &Matrix<f64>, y: &[f64], beta: &[f64]) -> f64 {
    let n = x.nrows();
    let k = x.ncols();
    let mut ll = 0.0;
    for i in 0..n {
        let mut eta = beta[0];
        for j in 0..k {
            eta += beta[j + 1] * x.get(i, j);
        }
        let lse = if eta > 0.0 {
            eta + (-eta).exp().ln_1p()
        } else {
            eta.exp().ln_1p()
        };
        ll += y[i] * eta - lse;
    }
    ll
}

/// Logistic maximum log-likelihood by plain gradient ascent with
/// backtracking; intentionally avoids the library's IRLS path.
fn gradient_ascent_logl(x: &Matrix<f64>, y: &[f64]) -> f64 {
    let n = x.nrows();
    let k = x.ncols();
    let p = k + 1;
    let mut beta = vec![0.0; p];
    let mut ll = log_likelihood(x, y, &beta);
    for _ in 0..5000 {
        let mut grad = vec![0.0; p];
        for i in 0..n {
            let mut eta = beta[0];
            for j in 0..k {
                eta += beta[j + 1] * x.get(i, j);
            }
            let resid = y[i] - sigmoid(eta);
            grad[0] += resid;
            for j in 0..k {
                grad[j + 1] += resid * x.get(i, j);
            }
        }
        let gnorm: f64 = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
        if gnorm < 1e-9 {
            break;
        }
        let mut step = 4.0 / n as f64;
        let mut improved = false;
        for _ in 0..50 {
            let cand: Vec<f64> = beta.iter().zip(&grad).map(|(b, g)| b + step * g).collect();
            let cand_ll = log_likelihood(x, y, &cand);
            if cand_ll > ll {
                beta = cand;
                ll = cand_ll;
                improved = true;
                break;
            }
            step *= 0.5;
        }
        if !improved {
            break;
        }
    }
    ll
}

/// Likelihood-ratio statistic of the full logistic model against the
/// intercept-only null (closed form).
pub fn likelihood_ratio_statistic(x: &Matrix<f64>, y: &[f64]) -> f64 {
    let n = y.len() as f64;
    let p = y.iter().sum::<f64>() / n;
    let ll_null = n * (p * p.ln() + (1.0 - p) * (1.0 - p).ln());
    let ll_full = gradient_ascent_logl(x, y);
    2.0 * (ll_full - ll_null)
}
