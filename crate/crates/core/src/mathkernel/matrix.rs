use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Dense row-major f64 matrix. Batch dimension, where present, is the
/// leading (row) dimension.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::ShapeMismatch {
                context: "Matrix::from_vec",
                expected: format!("{} values ({rows}x{cols})", rows * cols),
                got: format!("{}", data.len()),
            });
        }
        Ok(Matrix { rows, cols, data })
    }

    /// Uniform init in `[-range, range]`.
    pub fn uniform<R: Rng>(rows: usize, cols: usize, range: f64, rng: &mut R) -> Self {
        let data = (0..rows * cols)
            .map(|_| rng.random_range(-range..=range))
            .collect();
        Matrix { rows, cols, data }
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

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn fill(&mut self, v: f64) {
        self.data.iter_mut().for_each(|x| *x = v);
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    pub fn check_finite(&self, context: &'static str) -> Result<()> {
        if self.is_finite() {
            Ok(())
        } else {
            Err(Error::NonFinite(context))
        }
    }

    fn check_same_shape(&self, other: &Matrix, context: &'static str) -> Result<()> {
        if self.shape() != other.shape() {
            return Err(Error::ShapeMismatch {
                context,
                expected: format!("{:?}", self.shape()),
                got: format!("{:?}", other.shape()),
            });
        }
        Ok(())
    }

    /// `self (m×k) · otherᵀ` where `other` is `(n×k)`; result `(m×n)`.
    ///
    /// This is the layout used for activations: `x (B×I) · Wᵀ (I×H)` with
    /// `W` stored `(H×I)`.
    pub fn matmul_nt(&self, other: &Matrix) -> Result<Matrix> {
        if self.cols != other.cols {
            return Err(Error::ShapeMismatch {
                context: "matmul_nt",
                expected: format!("inner dim {}", self.cols),
                got: format!("{}", other.cols),
            });
        }
        let mut out = Matrix::zeros(self.rows, other.rows);
        for i in 0..self.rows {
            let a = self.row(i);
            let orow = out.row_mut(i);
            for (j, o) in orow.iter_mut().enumerate() {
                let b = other.row(j);
                let mut acc = 0.0;
                for k in 0..a.len() {
                    acc += a[k] * b[k];
                }
                *o = acc;
            }
        }
        Ok(out)
    }

    /// `self (m×k) · other (k×n)`; result `(m×n)`.
    pub fn matmul_nn(&self, other: &Matrix) -> Result<Matrix> {
        if self.cols != other.rows {
            return Err(Error::ShapeMismatch {
                context: "matmul_nn",
                expected: format!("inner dim {}", self.cols),
                got: format!("{}", other.rows),
            });
        }
        let mut out = Matrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            let a = self.row(i);
            for (k, &av) in a.iter().enumerate() {
                if av == 0.0 {
                    continue;
                }
                let b = other.row(k);
                let orow = &mut out.data[i * other.cols..(i + 1) * other.cols];
                for (o, &bv) in orow.iter_mut().zip(b.iter()) {
                    *o += av * bv;
                }
            }
        }
        Ok(out)
    }

    /// Accumulate `selfᵀ (k×m) · other (m... )`: given `self (m×k)` and
    /// `other (m×n)`, adds `(k×n)` into `acc`. Used for weight gradients
    /// `dW += dPreᵀ · X`.
    pub fn matmul_tn_acc(&self, other: &Matrix, acc: &mut Matrix) -> Result<()> {
        if self.rows != other.rows {
            return Err(Error::ShapeMismatch {
                context: "matmul_tn_acc",
                expected: format!("outer dim {}", self.rows),
                got: format!("{}", other.rows),
            });
        }
        if acc.shape() != (self.cols, other.cols) {
            return Err(Error::ShapeMismatch {
                context: "matmul_tn_acc accumulator",
                expected: format!("{:?}", (self.cols, other.cols)),
                got: format!("{:?}", acc.shape()),
            });
        }
        for m in 0..self.rows {
            let a = self.row(m);
            let b = other.row(m);
            for (k, &av) in a.iter().enumerate() {
                if av == 0.0 {
                    continue;
                }
                let arow = &mut acc.data[k * b.len()..(k + 1) * b.len()];
                for (o, &bv) in arow.iter_mut().zip(b.iter()) {
                    *o += av * bv;
                }
            }
        }
        Ok(())
    }

    /// Adds `bias` to every row; `bias.len()` must equal `cols`.
    pub fn add_row_bias(&mut self, bias: &[f64]) -> Result<()> {
        if bias.len() != self.cols {
            return Err(Error::ShapeMismatch {
                context: "add_row_bias",
                expected: format!("{}", self.cols),
                got: format!("{}", bias.len()),
            });
        }
        for r in 0..self.rows {
            let row = &mut self.data[r * self.cols..(r + 1) * self.cols];
            for (x, b) in row.iter_mut().zip(bias.iter()) {
                *x += b;
            }
        }
        Ok(())
    }

    pub fn add_assign(&mut self, other: &Matrix) -> Result<()> {
        self.check_same_shape(other, "add_assign")?;
        for (a, b) in self.data.iter_mut().zip(other.data.iter()) {
            *a += b;
        }
        Ok(())
    }

    /// Elementwise map into a new matrix.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> Matrix {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&x| f(x)).collect(),
        }
    }

    /// Elementwise product into a new matrix.
    pub fn hadamard(&self, other: &Matrix) -> Result<Matrix> {
        self.check_same_shape(other, "hadamard")?;
        let data = self
            .data
            .iter()
            .zip(other.data.iter())
            .map(|(a, b)| a * b)
            .collect();
        Ok(Matrix {
            rows: self.rows,
            cols: self.cols,
            data,
        })
    }

    /// Column sums (used for bias gradients over a batch).
    pub fn col_sums(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.cols];
        for r in 0..self.rows {
            for (o, &v) in out.iter_mut().zip(self.row(r).iter()) {
                *o += v;
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn matmul_shapes_and_values() {
        let a = Matrix::from_vec(2, 3, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        let w = Matrix::from_vec(2, 3, vec![1.0, 0.0, -1.0, 0.5, 0.5, 0.5]).unwrap();
        // a · wᵀ
        let out = a.matmul_nt(&w).unwrap();
        assert_eq!(out.shape(), (2, 2));
        assert_relative_eq!(out.get(0, 0), 1.0 - 3.0);
        assert_relative_eq!(out.get(0, 1), 0.5 * (1.0 + 2.0 + 3.0));
        assert_relative_eq!(out.get(1, 0), 4.0 - 6.0);
    }

    #[test]
    fn matmul_nn_matches_nt_via_transpose() {
        let a = Matrix::from_vec(2, 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let b = Matrix::from_vec(2, 2, vec![5.0, 6.0, 7.0, 8.0]).unwrap();
        let nn = a.matmul_nn(&b).unwrap();
        assert_relative_eq!(nn.get(0, 0), 19.0);
        assert_relative_eq!(nn.get(0, 1), 22.0);
        assert_relative_eq!(nn.get(1, 0), 43.0);
        assert_relative_eq!(nn.get(1, 1), 50.0);
    }

    #[test]
    fn tn_accumulates_weight_gradient() {
        let dpre = Matrix::from_vec(2, 2, vec![1.0, 0.0, 0.0, 1.0]).unwrap();
        let x = Matrix::from_vec(2, 3, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        let mut acc = Matrix::zeros(2, 3);
        dpre.matmul_tn_acc(&x, &mut acc).unwrap();
        assert_eq!(acc.row(0), &[1.0, 2.0, 3.0]);
        assert_eq!(acc.row(1), &[4.0, 5.0, 6.0]);
        // Accumulation, not overwrite.
        dpre.matmul_tn_acc(&x, &mut acc).unwrap();
        assert_eq!(acc.row(0), &[2.0, 4.0, 6.0]);
    }

    #[test]
    fn from_vec_rejects_bad_length() {
        assert!(Matrix::from_vec(2, 2, vec![1.0]).is_err());
    }
}
