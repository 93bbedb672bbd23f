//! Preprocessing and surrogate-fidelity evaluation: min-max normalization,
//! RMSE, Pearson correlation and the RMSE(r) report cell.

use serde::{Deserialize, Serialize};

use crate::kriging::KrigingModel;
use crate::linalg::Matrix;
use crate::{c, Error, Result, Scalar};

/// Per-column scaling learned from the training design, plus the response
/// centering. Constant columns are recorded and dropped.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScalingRecord<F> {
    /// (original column index, min, max) for every retained column.
    pub columns: Vec<(usize, F, F)>,
    /// Original indices of dropped constant columns.
    pub dropped: Vec<usize>,
    pub response_center: F,
    pub response_scale: F,
}

impl<F: Scalar> ScalingRecord<F> {
    /// Maps one raw feature row onto the retained, [0,1]-scaled columns.
    /// Values outside the training range map outside [0,1] on purpose.
    pub fn apply_row(&self, raw: &[F]) -> Result<Vec<F>> {
        let need = self
            .columns
            .iter()
            .map(|&(i, _, _)| i)
            .chain(self.dropped.iter().copied())
            .max()
            .map(|m| m + 1)
            .unwrap_or(0);
        if raw.len() < need {
            return Err(Error::DimensionMismatch {
                expected: need,
                got: raw.len(),
            });
        }
        Ok(self
            .columns
            .iter()
            .map(|&(i, min, max)| (raw[i] - min) / (max - min))
            .collect())
    }

    /// Inverse of the column map, for the retained columns only.
    pub fn invert_row(&self, scaled: &[F]) -> Result<Vec<F>> {
        if scaled.len() != self.columns.len() {
            return Err(Error::DimensionMismatch {
                expected: self.columns.len(),
                got: scaled.len(),
            });
        }
        Ok(self
            .columns
            .iter()
            .zip(scaled)
            .map(|(&(_, min, max), &v)| min + v * (max - min))
            .collect())
    }

    pub fn standardize_response(&self, y: F) -> F {
        (y - self.response_center) / self.response_scale
    }

    pub fn destandardize_response(&self, z: F) -> F {
        self.response_center + z * self.response_scale
    }
}

/// Min-max normalizes each column to [0,1]; constant columns are dropped and
/// recorded. The response fields of the record start at identity (0, 1).
pub fn normalize<F: Scalar>(x: &Matrix<F>) -> Result<(Matrix<F>, ScalingRecord<F>)> {
    let n = x.nrows();
    if n < 2 {
        return Err(Error::TooFewPoints(n));
    }
    let k = x.ncols();
    let mut columns = Vec::new();
    let mut dropped = Vec::new();
    for j in 0..k {
        let mut min = x.get(0, j);
        let mut max = min;
        for i in 1..n {
            let v = x.get(i, j);
            if v < min {
                min = v;
            }
            if v > max {
                max = v;
            }
        }
        if max > min {
            columns.push((j, min, max));
        } else {
            dropped.push(j);
        }
    }
    if columns.is_empty() {
        return Err(Error::AllColumnsConstant);
    }
    let record = ScalingRecord {
        columns,
        dropped,
        response_center: F::zero(),
        response_scale: F::one(),
    };
    let mut out = Matrix::zeros(n, record.columns.len());
    for i in 0..n {
        let row = record.apply_row(x.row(i))?;
        for (j, v) in row.into_iter().enumerate() {
            out.set(i, j, v);
        }
    }
    Ok((out, record))
}

/// Centers and scales the response to mean 0, sd 1, recording the transform.
pub fn standardize_response<F: Scalar>(record: &mut ScalingRecord<F>, y: &[F]) -> Result<Vec<F>> {
    if y.is_empty() {
        return Err(Error::EmptyInput);
    }
    let n = c::<F>(y.len() as f64);
    let mean = y.iter().fold(F::zero(), |a, &v| a + v) / n;
    let var = y
        .iter()
        .fold(F::zero(), |a, &v| a + (v - mean) * (v - mean))
        / n;
    let sd = var.sqrt();
    record.response_center = mean;
    record.response_scale = if sd > F::zero() { sd } else { F::one() };
    Ok(y.iter().map(|&v| record.standardize_response(v)).collect())
}

pub fn rmse<F: Scalar>(a: &[F], b: &[F]) -> Result<F> {
    if a.is_empty() {
        return Err(Error::EmptyInput);
    }
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            expected: a.len(),
            got: b.len(),
        });
    }
    let n = c::<F>(a.len() as f64);
    let ss = a
        .iter()
        .zip(b)
        .fold(F::zero(), |acc, (&x, &y)| acc + (x - y) * (x - y));
    Ok((ss / n).sqrt())
}

pub fn pearson_r<F: Scalar>(a: &[F], b: &[F]) -> Result<F> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            expected: a.len(),
            got: b.len(),
        });
    }
    if a.len() < 2 {
        return Err(Error::TooFewPoints(a.len()));
    }
    let n = c::<F>(a.len() as f64);
    let ma = a.iter().fold(F::zero(), |s, &v| s + v) / n;
    let mb = b.iter().fold(F::zero(), |s, &v| s + v) / n;
    let mut sab = F::zero();
    let mut saa = F::zero();
    let mut sbb = F::zero();
    for (&x, &y) in a.iter().zip(b) {
        let dx = x - ma;
        let dy = y - mb;
        sab = sab + dx * dy;
        saa = saa + dx * dx;
        sbb = sbb + dy * dy;
    }
    if saa == F::zero() || sbb == F::zero() {
        return Err(Error::ConstantVector);
    }
    Ok(sab / (saa.sqrt() * sbb.sqrt()))
}

/// Predicts over `x_eval` (raw units), inverts the response scaling, and
/// returns (rmse, r) against the black-box responses in original units.
pub fn fidelity_report<F: Scalar>(
    model: &KrigingModel<F>,
    record: &ScalingRecord<F>,
    x_eval_raw: &Matrix<F>,
    y_blackbox: &[F],
) -> Result<(F, F)> {
    if x_eval_raw.nrows() != y_blackbox.len() {
        return Err(Error::DimensionMismatch {
            expected: x_eval_raw.nrows(),
            got: y_blackbox.len(),
        });
    }
    let mut preds = Vec::with_capacity(y_blackbox.len());
    for row in x_eval_raw.iter_rows() {
        let scaled = record.apply_row(row)?;
        let z = model.predict_mean(&scaled)?;
        preds.push(record.destandardize_response(z));
    }
    Ok((rmse(&preds, y_blackbox)?, pearson_r(&preds, y_blackbox)?))
}

/// Formats a fidelity pair the way the report tables print it, e.g.
/// `0.022(0.99)`.
pub fn fidelity_cell<F: Scalar>(rmse: F, r: F) -> String {
    format!(
        "{:.3}({:.2})",
        rmse.to_f64().unwrap_or(f64::NAN),
        r.to_f64().unwrap_or(f64::NAN)
    )
}
