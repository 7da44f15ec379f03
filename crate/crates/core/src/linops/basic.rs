use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use super::{LinearOperator, OperatorRef};
use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct Identity {
    n: usize,
}

impl Identity {
    pub fn new(n: usize) -> Self {
        Identity { n }
    }
}

impl LinearOperator for Identity {
    fn rows(&self) -> usize {
        self.n
    }
    fn cols(&self) -> usize {
        self.n
    }
    fn label(&self) -> String {
        format!("I_{}", self.n)
    }
    fn forward_into(&self, u: &[f64], out: &mut [f64]) {
        out.copy_from_slice(u);
    }
    fn adjoint_into(&self, w: &[f64], out: &mut [f64]) {
        out.copy_from_slice(w);
    }
}

/// An explicit matrix.
#[derive(Debug, Clone)]
pub struct DenseOperator {
    matrix: DMatrix<f64>,
    label: String,
}

impl DenseOperator {
    pub fn new(matrix: DMatrix<f64>) -> Self {
        let label = format!("dense_{}x{}", matrix.nrows(), matrix.ncols());
        DenseOperator { matrix, label }
    }

    pub fn from_row_slice(rows: usize, cols: usize, data: &[f64]) -> Result<Self> {
        if rows == 0 || cols == 0 || data.len() != rows * cols {
            return Err(Error::invalid(format!(
                "dense operator {rows}x{cols} needs {} entries, got {}",
                rows * cols,
                data.len()
            )));
        }
        Ok(Self::new(DMatrix::from_row_slice(rows, cols, data)))
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }
}

impl LinearOperator for DenseOperator {
    fn rows(&self) -> usize {
        self.matrix.nrows()
    }
    fn cols(&self) -> usize {
        self.matrix.ncols()
    }
    fn label(&self) -> String {
        self.label.clone()
    }
    fn forward_into(&self, u: &[f64], out: &mut [f64]) {
        let r = &self.matrix * DVector::from_column_slice(u);
        out.copy_from_slice(r.as_slice());
    }
    fn adjoint_into(&self, w: &[f64], out: &mut [f64]) {
        let r = self.matrix.tr_mul(&DVector::from_column_slice(w));
        out.copy_from_slice(r.as_slice());
    }
}

/// The adjoint of another operator, viewed as an operator in its own right.
#[derive(Debug, Clone)]
pub struct Transposed(pub OperatorRef);

impl LinearOperator for Transposed {
    fn rows(&self) -> usize {
        self.0.cols()
    }
    fn cols(&self) -> usize {
        self.0.rows()
    }
    fn label(&self) -> String {
        format!("{}^T", self.0.label())
    }
    fn forward_into(&self, u: &[f64], out: &mut [f64]) {
        self.0.adjoint_into(u, out)
    }
    fn adjoint_into(&self, w: &[f64], out: &mut [f64]) {
        self.0.forward_into(w, out)
    }
}

/// `A = [A_1 ... A_s]` acting on the stacked vector `(x_1, ..., x_s)`.
#[derive(Debug, Clone)]
pub struct BlockRowOperator {
    blocks: Vec<OperatorRef>,
    offsets: Vec<usize>,
}

impl BlockRowOperator {
    pub fn new(blocks: Vec<OperatorRef>) -> Result<Self> {
        let first = blocks
            .first()
            .ok_or_else(|| Error::invalid("block row needs at least one block"))?;
        let m = first.rows();
        let mut offsets = vec![0];
        for (i, b) in blocks.iter().enumerate() {
            if b.rows() != m {
                return Err(Error::invalid(format!(
                    "block {i} ({}) has {} rows, expected {m}",
                    b.label(),
                    b.rows()
                )));
            }
            offsets.push(offsets[i] + b.cols());
        }
        Ok(BlockRowOperator { blocks, offsets })
    }

    pub fn blocks(&self) -> &[OperatorRef] {
        &self.blocks
    }

    pub fn block_sizes(&self) -> Vec<usize> {
        self.blocks.iter().map(|b| b.cols()).collect()
    }
}

impl LinearOperator for BlockRowOperator {
    fn rows(&self) -> usize {
        self.blocks[0].rows()
    }
    fn cols(&self) -> usize {
        *self.offsets.last().unwrap()
    }
    fn label(&self) -> String {
        let names: Vec<String> = self.blocks.iter().map(|b| b.label()).collect();
        format!("[{}]", names.join(" "))
    }
    fn forward_into(&self, u: &[f64], out: &mut [f64]) {
        out.fill(0.0);
        let mut tmp = vec![0.0; out.len()];
        for (i, b) in self.blocks.iter().enumerate() {
            b.forward_into(&u[self.offsets[i]..self.offsets[i + 1]], &mut tmp);
            for (o, t) in out.iter_mut().zip(&tmp) {
                *o += t;
            }
        }
    }
    fn adjoint_into(&self, w: &[f64], out: &mut [f64]) {
        for (i, b) in self.blocks.iter().enumerate() {
            b.adjoint_into(w, &mut out[self.offsets[i]..self.offsets[i + 1]]);
        }
    }
}

/// The skew-symmetric coupling `S_A = [[0, -A^T], [A, 0]]` on `v = (x, y)`.
#[derive(Debug, Clone)]
pub struct SkewCoupling {
    a: OperatorRef,
}

impl SkewCoupling {
    pub fn new(a: OperatorRef) -> Self {
        SkewCoupling { a }
    }

    pub fn from_blocks(blocks: Vec<OperatorRef>) -> Result<Self> {
        Ok(Self::new(Arc::new(BlockRowOperator::new(blocks)?)))
    }
}

impl LinearOperator for SkewCoupling {
    fn rows(&self) -> usize {
        self.a.rows() + self.a.cols()
    }
    fn cols(&self) -> usize {
        self.rows()
    }
    fn label(&self) -> String {
        format!("S({})", self.a.label())
    }
    fn forward_into(&self, v: &[f64], out: &mut [f64]) {
        let n = self.a.cols();
        let (x, y) = v.split_at(n);
        let (ox, oy) = out.split_at_mut(n);
        self.a.adjoint_into(y, ox);
        for o in ox.iter_mut() {
            *o = -*o;
        }
        self.a.forward_into(x, oy);
    }
    fn adjoint_into(&self, w: &[f64], out: &mut [f64]) {
        self.forward_into(w, out);
        for o in out.iter_mut() {
            *o = -*o;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linops::to_dense;
    use crate::vecops::dot;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_dense(rng: &mut ChaCha8Rng, m: usize, n: usize) -> OperatorRef {
        let data: Vec<f64> = (0..m * n).map(|_| rng.random_range(-1.0..1.0)).collect();
        Arc::new(DenseOperator::from_row_slice(m, n, &data).unwrap())
    }

    #[test]
    fn block_row_sums_block_images() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a1 = random_dense(&mut rng, 4, 2);
        let a2 = random_dense(&mut rng, 4, 3);
        let row = BlockRowOperator::new(vec![a1.clone(), a2.clone()]).unwrap();
        let u: Vec<f64> = (0..5).map(|_| rng.random_range(-1.0..1.0)).collect();
        let got = row.forward(&u);
        let want: Vec<f64> = a1
            .forward(&u[..2])
            .iter()
            .zip(a2.forward(&u[2..]))
            .map(|(p, q)| p + q)
            .collect();
        for (g, w) in got.iter().zip(&want) {
            assert!((g - w).abs() < 1e-14);
        }
    }

    #[test]
    fn block_row_rejects_ragged_rows() {
        let a = Arc::new(Identity::new(2)) as OperatorRef;
        let b = Arc::new(Identity::new(3)) as OperatorRef;
        assert!(BlockRowOperator::new(vec![a, b]).is_err());
        assert!(BlockRowOperator::new(vec![]).is_err());
    }

    #[test]
    fn skew_coupling_is_skew() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let s = SkewCoupling::from_blocks(vec![
            random_dense(&mut rng, 3, 2),
            random_dense(&mut rng, 3, 2),
        ])
        .unwrap();
        for _ in 0..100 {
            let v: Vec<f64> = (0..7).map(|_| rng.random_range(-3.0..3.0)).collect();
            assert!(dot(&v, &s.forward(&v)).abs() < 1e-10);
        }
        let dense = to_dense(&s);
        assert!((&dense + dense.transpose()).amax() < 1e-15);
    }

    #[test]
    fn transposed_swaps_roles() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let a = random_dense(&mut rng, 3, 2);
        let t = Transposed(a.clone());
        assert_eq!((t.rows(), t.cols()), (2, 3));
        assert_eq!(to_dense(&t), to_dense(a.as_ref()).transpose());
    }
}
