//! The two-step iteration.
//!
//! [`Stepper`] runs one Gauss-Seidel sweep of any [`Family`] matrix-free.
//! [`DenseReference`] runs the same iteration straight from an assembled
//! `{M0, M1, M2}` and is used to cross-check the steppers on small problems.

mod dense;
mod solve;
mod spec;
mod state;
mod stepper;

use std::sync::{Arc, OnceLock};

use crate::error::{check_len, Error, Result};
use crate::linops::{op_norm_sq_est, OperatorRef};
use crate::prox::ProxFunction;
use crate::vecops::{axpy, norm};

pub use dense::{build_e, build_r, generic_two_step_dense, DenseReference};
pub use solve::{kkt_residual, solve, Control, SolveOutcome, StopCriteria, StopReason};
pub use spec::{AlgorithmSpec, BaseFamily, Family, InnerSolverConfig};
pub use state::IterateState;
pub use stepper::{step, StepInfo, Stepper};

const NORM_TOL: f64 = 1e-12;
const NORM_MAX_ITER: usize = 20_000;

/// One term `f_i(x_i)` with its coupling operator `A_i`.
#[derive(Debug, Clone)]
pub struct Block {
    pub f: Arc<dyn ProxFunction>,
    pub a: OperatorRef,
}

impl Block {
    pub fn new(f: Arc<dyn ProxFunction>, a: OperatorRef) -> Self {
        Block { f, a }
    }

    pub fn dim(&self) -> usize {
        self.a.cols()
    }
}

/// `min Σ f_i(x_i)  s.t.  Σ A_i x_i = b`.
#[derive(Debug)]
pub struct BlockProblem {
    blocks: Vec<Block>,
    b: Vec<f64>,
    norms_sq: Vec<OnceLock<f64>>,
}

impl BlockProblem {
    pub fn new(blocks: Vec<Block>, b: Vec<f64>) -> Result<Self> {
        if blocks.is_empty() {
            return Err(Error::invalid("problem needs at least one block"));
        }
        let m = b.len();
        for (i, blk) in blocks.iter().enumerate() {
            check_len("operator rows", m, blk.a.rows())?;
            if blk.f.dim() != blk.a.cols() {
                return Err(Error::invalid(format!(
                    "block {i}: function dimension {} does not match operator columns {}",
                    blk.f.dim(),
                    blk.a.cols()
                )));
            }
        }
        let norms_sq = blocks.iter().map(|_| OnceLock::new()).collect();
        Ok(BlockProblem {
            blocks,
            b,
            norms_sq,
        })
    }

    /// Supply known `‖A_i‖²` values instead of estimating them.
    pub fn with_block_norms_sq(self, norms_sq: &[f64]) -> Result<Self> {
        check_len("block norms", self.blocks.len(), norms_sq.len())?;
        for (cell, &v) in self.norms_sq.iter().zip(norms_sq) {
            let _ = cell.set(v);
        }
        Ok(self)
    }

    pub fn s(&self) -> usize {
        self.blocks.len()
    }

    pub fn m(&self) -> usize {
        self.b.len()
    }

    pub fn n(&self) -> usize {
        self.blocks.iter().map(Block::dim).sum()
    }

    pub fn sizes(&self) -> Vec<usize> {
        self.blocks.iter().map(Block::dim).collect()
    }

    pub fn blocks(&self) -> &[Block] {
        &self.blocks
    }

    pub fn block(&self, i: usize) -> &Block {
        &self.blocks[i]
    }

    pub fn operators(&self) -> Vec<OperatorRef> {
        self.blocks.iter().map(|b| b.a.clone()).collect()
    }

    pub fn rhs(&self) -> &[f64] {
        &self.b
    }

    /// `‖A_i‖²`, estimated once by power iteration and cached.
    pub fn block_norm_sq(&self, i: usize) -> f64 {
        *self.norms_sq[i].get_or_init(|| {
            op_norm_sq_est(self.blocks[i].a.as_ref(), NORM_TOL, NORM_MAX_ITER)
                .map(|e| e.value)
                .unwrap_or(f64::NAN)
        })
    }

    /// `Σ f_i(x_i)`.
    pub fn objective(&self, x: &[Vec<f64>]) -> f64 {
        self.blocks.iter().zip(x).map(|(b, xi)| b.f.value(xi)).sum()
    }

    /// `Σ A_i x_i − b`.
    pub fn constraint_residual(&self, x: &[Vec<f64>]) -> Vec<f64> {
        let mut r: Vec<f64> = self.b.iter().map(|v| -v).collect();
        let mut tmp = vec![0.0; self.m()];
        for (blk, xi) in self.blocks.iter().zip(x) {
            blk.a.forward_into(xi, &mut tmp);
            axpy(1.0, &tmp, &mut r);
        }
        r
    }

    pub fn feasibility(&self, x: &[Vec<f64>]) -> f64 {
        norm(&self.constraint_residual(x))
    }
}
