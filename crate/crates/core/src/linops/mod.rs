//! Matrix-free linear operators.
//!
//! Every operator knows its shape and can apply itself and its adjoint
//! without materialising a matrix. Images are vectorised column-major: pixel
//! `(r, c)` of a `d1 x d2` image lives at index `r + c * d1`.

mod basic;
mod fourier;
mod grid;
mod haar;
pub(crate) mod norm;

use std::fmt;
use std::io::Write;
use std::sync::Arc;

use nalgebra::DMatrix;

use crate::error::{check_len, Result};

pub use basic::{BlockRowOperator, DenseOperator, Identity, SkewCoupling, Transposed};
pub use fourier::PartialFourier;
pub use grid::{make_difference_matrix, make_tv_operator, Difference, TotalVariation};
pub use haar::{make_haar_undecimated, UndecimatedHaar};
pub use norm::{op_norm_sq_est, NormEstimate};

pub use fourier::make_partial_fourier;

/// A real linear map `R^cols -> R^rows` together with its adjoint.
///
/// Implementations are immutable after construction and may be shared across
/// threads. The `*_into` methods assume correctly sized buffers; the checked
/// entry points are [`apply`] and [`adjoint_apply`].
pub trait LinearOperator: Send + Sync + fmt::Debug {
    fn rows(&self) -> usize;
    fn cols(&self) -> usize;
    fn label(&self) -> String;

    fn forward_into(&self, u: &[f64], out: &mut [f64]);
    fn adjoint_into(&self, w: &[f64], out: &mut [f64]);

    fn forward(&self, u: &[f64]) -> Vec<f64> {
        assert_eq!(
            u.len(),
            self.cols(),
            "{}: forward input length",
            self.label()
        );
        let mut out = vec![0.0; self.rows()];
        self.forward_into(u, &mut out);
        out
    }

    fn adjoint(&self, w: &[f64]) -> Vec<f64> {
        assert_eq!(
            w.len(),
            self.rows(),
            "{}: adjoint input length",
            self.label()
        );
        let mut out = vec![0.0; self.cols()];
        self.adjoint_into(w, &mut out);
        out
    }
}

pub type OperatorRef = Arc<dyn LinearOperator>;

/// Forward image of `u`, with the input length checked.
pub fn apply(op: &dyn LinearOperator, u: &[f64]) -> Result<Vec<f64>> {
    check_len("operator input", op.cols(), u.len())?;
    Ok(op.forward(u))
}

/// Adjoint image of `w`, with the input length checked.
pub fn adjoint_apply(op: &dyn LinearOperator, w: &[f64]) -> Result<Vec<f64>> {
    check_len("adjoint input", op.rows(), w.len())?;
    Ok(op.adjoint(w))
}

/// Materialise an operator column by column. Meant for small operators.
pub fn to_dense(op: &dyn LinearOperator) -> DMatrix<f64> {
    let (m, n) = (op.rows(), op.cols());
    let mut dense = DMatrix::zeros(m, n);
    let mut e = vec![0.0; n];
    let mut col = vec![0.0; m];
    for j in 0..n {
        e[j] = 1.0;
        op.forward_into(&e, &mut col);
        for i in 0..m {
            dense[(i, j)] = col[i];
        }
        e[j] = 0.0;
    }
    dense
}

/// Write the dense realisation of `op` as row-major CSV.
pub fn write_dense_csv<W: Write>(op: &dyn LinearOperator, mut w: W) -> Result<()> {
    let dense = to_dense(op);
    for i in 0..dense.nrows() {
        let row: Vec<String> = (0..dense.ncols())
            .map(|j| format!("{}", dense[(i, j)]))
            .collect();
        writeln!(w, "{}", row.join(","))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn checked_apply_reports_sizes() {
        let id = Identity::new(3);
        assert_eq!(apply(&id, &[1.0, 2.0, 3.0]).unwrap(), vec![1.0, 2.0, 3.0]);
        assert!(apply(&id, &[1.0]).is_err());
        assert_eq!(
            adjoint_apply(&Identity::new(2), &[4.0, 5.0]).unwrap(),
            vec![4.0, 5.0]
        );
        assert!(adjoint_apply(&id, &[1.0; 4]).is_err());
    }

    #[test]
    fn dense_csv_is_row_major() {
        let d = make_difference_matrix(2).unwrap();
        let mut buf = Vec::new();
        write_dense_csv(&d, &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "1,-1\n-1,1\n");
    }
}
