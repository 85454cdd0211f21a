use serde::{Deserialize, Serialize};

use super::NumericsError;
use crate::par;

// Below this many multiply-adds a product stays on the calling thread.
const PAR_MIN_WORK: usize = 1 << 15;

/// Dense row-major matrix of `f64`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn filled(rows: usize, cols: usize, value: f64) -> Self {
        Self {
            rows,
            cols,
            data: vec![value; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self, NumericsError> {
        if data.len() != rows * cols {
            return Err(NumericsError::ShapeMismatch {
                op: "from_vec",
                left: (rows, cols),
                right: (data.len(), 1),
            });
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self, NumericsError> {
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            if r.len() != cols {
                return Err(NumericsError::ShapeMismatch {
                    op: "from_rows",
                    left: (rows.len(), cols),
                    right: (1, r.len()),
                });
            }
            data.extend_from_slice(r);
        }
        Ok(Self {
            rows: rows.len(),
            cols,
            data,
        })
    }

    pub fn scalar(v: f64) -> Self {
        Self {
            rows: 1,
            cols: 1,
            data: vec![v],
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    pub(crate) fn ensure_finite(self, op: &'static str) -> Result<Self, NumericsError> {
        if self.is_finite() {
            Ok(self)
        } else {
            Err(NumericsError::NonFiniteValue { op })
        }
    }

    pub fn transpose(&self) -> Matrix {
        let mut out = Matrix::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                out.data[c * self.rows + r] = self.data[r * self.cols + c];
            }
        }
        out
    }

    fn check_matmul(&self, other: &Matrix) -> Result<(), NumericsError> {
        if self.cols != other.rows {
            return Err(NumericsError::ShapeMismatch {
                op: "matmul",
                left: self.shape(),
                right: other.shape(),
            });
        }
        Ok(())
    }

    /// `self · other`, rows computed in parallel when the feature is on.
    pub fn matmul(&self, other: &Matrix) -> Result<Matrix, NumericsError> {
        self.check_matmul(other)?;
        if self.rows * self.cols * other.cols < PAR_MIN_WORK {
            return self.matmul_seq(other);
        }
        let mut out = Matrix::zeros(self.rows, other.cols);
        par::for_each_row(&mut out.data, other.cols, |i, row| {
            matmul_row(self.row(i), other, row)
        });
        Ok(out)
    }

    /// Single-threaded `self · other`.
    pub fn matmul_seq(&self, other: &Matrix) -> Result<Matrix, NumericsError> {
        self.check_matmul(other)?;
        let mut out = Matrix::zeros(self.rows, other.cols);
        par::for_each_row_seq(&mut out.data, other.cols, |i, row| {
            matmul_row(self.row(i), other, row)
        });
        Ok(out)
    }

    /// `selfᵀ · other` without materialising the transpose.
    pub fn t_matmul(&self, other: &Matrix) -> Result<Matrix, NumericsError> {
        if self.rows != other.rows {
            return Err(NumericsError::ShapeMismatch {
                op: "t_matmul",
                left: self.shape(),
                right: other.shape(),
            });
        }
        let mut out = Matrix::zeros(self.cols, other.cols);
        let (k, n) = (self.rows, other.cols);
        let body = |i: usize, row: &mut [f64]| {
            for r in 0..k {
                let a = self.data[r * self.cols + i];
                if a != 0.0 {
                    let b = other.row(r);
                    for (o, &bv) in row.iter_mut().zip(b) {
                        *o += a * bv;
                    }
                }
            }
        };
        if k * self.cols * n < PAR_MIN_WORK {
            par::for_each_row_seq(&mut out.data, n, body);
        } else {
            par::for_each_row(&mut out.data, n, body);
        }
        Ok(out)
    }

    /// `self · otherᵀ` without materialising the transpose.
    pub fn matmul_t(&self, other: &Matrix) -> Result<Matrix, NumericsError> {
        if self.cols != other.cols {
            return Err(NumericsError::ShapeMismatch {
                op: "matmul_t",
                left: self.shape(),
                right: other.shape(),
            });
        }
        let mut out = Matrix::zeros(self.rows, other.rows);
        let body = |i: usize, row: &mut [f64]| {
            let a = self.row(i);
            for (j, o) in row.iter_mut().enumerate() {
                *o = dot(a, other.row(j));
            }
        };
        if self.rows * self.cols * other.rows < PAR_MIN_WORK {
            par::for_each_row_seq(&mut out.data, other.rows, body);
        } else {
            par::for_each_row(&mut out.data, other.rows, body);
        }
        Ok(out)
    }

    pub fn add(&self, other: &Matrix) -> Result<Matrix, NumericsError> {
        self.zip_with(other, "add", |a, b| a + b)
    }

    pub fn hadamard(&self, other: &Matrix) -> Result<Matrix, NumericsError> {
        self.zip_with(other, "hadamard", |a, b| a * b)
    }

    fn zip_with(
        &self,
        other: &Matrix,
        op: &'static str,
        f: impl Fn(f64, f64) -> f64,
    ) -> Result<Matrix, NumericsError> {
        if self.shape() != other.shape() {
            return Err(NumericsError::ShapeMismatch {
                op,
                left: self.shape(),
                right: other.shape(),
            });
        }
        Ok(Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    pub fn add_assign(&mut self, other: &Matrix) {
        debug_assert_eq!(self.shape(), other.shape());
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    pub fn scale(&self, c: f64) -> Matrix {
        self.map(|x| x * c)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Matrix {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&x| f(x)).collect(),
        }
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn frobenius_sq(&self) -> f64 {
        self.data.iter().map(|x| x * x).sum()
    }

    pub fn max_abs_diff(&self, other: &Matrix) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

fn matmul_row(a: &[f64], b: &Matrix, out: &mut [f64]) {
    for (k, &av) in a.iter().enumerate() {
        if av == 0.0 {
            continue;
        }
        for (o, &bv) in out.iter_mut().zip(b.row(k)) {
            *o += av * bv;
        }
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Numerically stable softmax (max subtraction).
pub fn softmax(x: &[f64]) -> Result<Vec<f64>, NumericsError> {
    if x.iter().any(|v| !v.is_finite()) {
        return Err(NumericsError::NonFiniteValue { op: "softmax" });
    }
    let max = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = x.iter().map(|v| (v - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    Ok(exps.into_iter().map(|e| e / total).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn identity_matmul() {
        let m = Matrix::from_rows(&[vec![1.5, -2.0], vec![3.0, 4.25]]).unwrap();
        assert_eq!(Matrix::identity(2).matmul(&m).unwrap(), m);
        assert_eq!(m.matmul(&Matrix::identity(2)).unwrap(), m);
    }

    #[test]
    fn matmul_shape_mismatch() {
        let a = Matrix::zeros(2, 3);
        assert!(matches!(
            a.matmul(&Matrix::zeros(2, 3)),
            Err(NumericsError::ShapeMismatch { .. })
        ));
    }

    #[test]
    fn transposed_products_agree() {
        let a = Matrix::from_rows(&[vec![1.0, 2.0, 3.0], vec![4.0, 5.0, 6.0]]).unwrap();
        let b = Matrix::from_rows(&[vec![0.5, -1.0], vec![2.0, 0.0]]).unwrap();
        assert_eq!(a.t_matmul(&b).unwrap(), a.transpose().matmul(&b).unwrap());
        let c = Matrix::from_rows(&[vec![1.0, 0.0, -1.0]]).unwrap();
        assert_eq!(a.matmul_t(&c).unwrap(), a.matmul(&c.transpose()).unwrap());
        assert_eq!(a.matmul(&a.transpose()).unwrap(), a.matmul_seq(&a.transpose()).unwrap());
    }

    #[test]
    fn softmax_cases() {
        let s = softmax(&[0.0, 0.0, 0.0]).unwrap();
        for v in &s {
            assert!((v - 1.0 / 3.0).abs() < 1e-15);
        }
        let s = softmax(&[1000.0, 0.0, 0.0]).unwrap();
        assert!((s[0] - 1.0).abs() < 1e-12);
        assert!(s.iter().all(|v| v.is_finite()));
        assert!(softmax(&[f64::NAN, 0.0]).is_err());
    }

    #[test]
    fn softmax_matches_direct_evaluation() {
        // direct exp/sum without max subtraction is exact enough at this scale
        let x = [1.0f64, 2.0, 3.0];
        let z: f64 = x.iter().map(|v| v.exp()).sum();
        let oracle: Vec<f64> = x.iter().map(|v| v.exp() / z).collect();
        // frozen reference values: e^k / (e + e^2 + e^3)
        let frozen = [0.09003057317038046, 0.24472847105479765, 0.6652409557748219];
        let got = softmax(&x).unwrap();
        for i in 0..3 {
            assert!((got[i] - oracle[i]).abs() < 1e-15);
            assert!((got[i] - frozen[i]).abs() < 1e-15);
        }
    }

    proptest! {
        #[test]
        fn softmax_shift_invariant(
            x in proptest::collection::vec(-50f64..50.0, 1..8),
            c in -100f64..100.0,
        ) {
            let a = softmax(&x).unwrap();
            let shifted: Vec<f64> = x.iter().map(|v| v + c).collect();
            let b = softmax(&shifted).unwrap();
            let total: f64 = a.iter().sum();
            prop_assert!((total - 1.0).abs() < 1e-9);
            for (p, q) in a.iter().zip(&b) {
                prop_assert!((p - q).abs() < 1e-9);
                prop_assert!(*p > 0.0);
            }
        }
    }
}
