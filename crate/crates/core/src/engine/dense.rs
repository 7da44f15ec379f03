use nalgebra::{DMatrix, DVector};

use super::stepper::inner_prox_gradient;
use super::{AlgorithmSpec, BlockProblem, InnerSolverConfig, IterateState, StepInfo};
use crate::conditionm::{build_matrix_set, MatrixSet};
use crate::error::{Error, Result};
use crate::linops::to_dense;

/// Diagonal of `R = diag(β/α_1 1, …, β/α_s 1, 1/β 1)`.
pub fn build_r(problem: &BlockProblem, alphas: &[f64], beta: f64) -> Vec<f64> {
    let mut r = Vec::with_capacity(problem.n() + problem.m());
    for (n, a) in problem.sizes().into_iter().zip(alphas) {
        r.extend(std::iter::repeat_n(beta / a, n));
    }
    r.extend(std::iter::repeat_n(1.0 / beta, problem.m()));
    r
}

/// `E = [[I, −P⁻¹Aᵀ], [βA, I]]` with `P = diag(β/α_i 1)`.
pub fn build_e(problem: &BlockProblem, alphas: &[f64], beta: f64) -> DMatrix<f64> {
    let (n, m) = (problem.n(), problem.m());
    let mut e = DMatrix::identity(n + m, n + m);
    let mut at = 0;
    for (blk, a) in problem.blocks().iter().zip(alphas) {
        let d = to_dense(blk.a.as_ref());
        let ni = d.ncols();
        e.view_mut((at, n), (ni, m))
            .copy_from(&(d.transpose() * (-a / beta)));
        e.view_mut((n, at), (m, ni)).copy_from(&(d * beta));
        at += ni;
    }
    e
}

#[derive(Debug, Clone)]
enum BlockSolve {
    Explicit,
    /// Diagonal block equals `−α_j A_jᵀA_j`; keeps `A_jᵀA_j`.
    Implicit {
        gram: DMatrix<f64>,
        alpha: f64,
    },
}

/// The iteration `v^{k+1} = T((E − R⁻¹M0) v^{k+1} + R⁻¹M1 v^k + R⁻¹M2 v^{k−1})`
/// evaluated with dense matrices.
///
/// The `y` row must not depend on `y^{k+1}` itself. After substituting it
/// into the `x` rows, the remaining `x` system must be block lower triangular
/// with every diagonal block either zero (closed-form prox) or
/// `−α_j A_jᵀA_j` (solved by inner iterations).
#[derive(Debug, Clone)]
pub struct DenseReference {
    n: usize,
    starts: Vec<usize>,
    sizes: Vec<usize>,
    rinv: DVector<f64>,
    m1: DMatrix<f64>,
    m2: DMatrix<f64>,
    l_xy: DMatrix<f64>,
    l_yx: DMatrix<f64>,
    l_tilde: DMatrix<f64>,
    solves: Vec<BlockSolve>,
    beta: f64,
}

fn structure_tol(m: &DMatrix<f64>) -> f64 {
    1e-9 * m.amax().max(1.0)
}

impl DenseReference {
    pub fn new(
        ms: &MatrixSet,
        problem: &BlockProblem,
        r: &[f64],
        e: &DMatrix<f64>,
    ) -> Result<Self> {
        let (n, m) = (problem.n(), problem.m());
        let dim = n + m;
        if ms.dim() != dim || r.len() != dim || e.nrows() != dim || e.ncols() != dim {
            return Err(Error::invalid(format!(
                "dense reference needs {dim}x{dim} matrices and a length-{dim} R"
            )));
        }
        if r.iter().any(|v| !(*v > 0.0)) {
            return Err(Error::invalid("R must have a positive diagonal"));
        }
        let rinv = DVector::from_iterator(dim, r.iter().map(|v| 1.0 / v));
        let l = e - DMatrix::from_diagonal(&rinv) * &ms.m0;
        let l_yy = l.view((n, n), (m, m)).into_owned();
        if l_yy.amax() > structure_tol(&l) {
            return Err(Error::Structure(
                "the y row of E - R^-1 M0 depends on y itself".into(),
            ));
        }
        let l_xy = l.view((0, n), (n, m)).into_owned();
        let l_yx = l.view((n, 0), (m, n)).into_owned();
        let l_tilde = l.view((0, 0), (n, n)).into_owned() + &l_xy * &l_yx;
        let tol = structure_tol(&l_tilde);

        let sizes = problem.sizes();
        let mut starts = Vec::with_capacity(sizes.len());
        let mut at = 0;
        for &ni in &sizes {
            starts.push(at);
            at += ni;
        }
        let beta = 1.0 / r[n];
        let mut solves = Vec::with_capacity(sizes.len());
        for (j, (&sj, &nj)) in starts.iter().zip(&sizes).enumerate() {
            let upper = l_tilde.view((sj, sj + nj), (nj, n - sj - nj));
            if upper.amax() > tol {
                return Err(Error::Structure(format!(
                    "block {j} depends on later blocks of the new iterate"
                )));
            }
            let diag = l_tilde.view((sj, sj), (nj, nj)).into_owned();
            if diag.amax() <= tol {
                solves.push(BlockSolve::Explicit);
                continue;
            }
            let a = to_dense(problem.block(j).a.as_ref());
            let gram = a.transpose() * &a;
            let alpha = beta / r[sj];
            if (&diag + &gram * alpha).amax() <= tol {
                solves.push(BlockSolve::Implicit { gram, alpha });
            } else {
                return Err(Error::Structure(format!(
                    "diagonal block {j} is neither zero nor -alpha A^T A"
                )));
            }
        }
        Ok(DenseReference {
            n,
            starts,
            sizes,
            rinv,
            m1: ms.m1.clone(),
            m2: ms.m2.clone(),
            l_xy,
            l_yx,
            l_tilde,
            solves,
            beta,
        })
    }

    /// Assemble the matrix set, `R` and `E` for `spec` and validate them.
    pub fn for_spec(problem: &BlockProblem, spec: &AlgorithmSpec) -> Result<Self> {
        spec.validate(problem.s())?;
        let dense: Vec<DMatrix<f64>> = problem
            .blocks()
            .iter()
            .map(|b| to_dense(b.a.as_ref()))
            .collect();
        let ms = build_matrix_set(&spec.family, &dense, &spec.alphas, spec.beta)?;
        let r = build_r(problem, &spec.alphas, spec.beta);
        let e = build_e(problem, &spec.alphas, spec.beta);
        Self::new(&ms, problem, &r, &e)
    }

    pub fn step(
        &self,
        problem: &BlockProblem,
        state: &IterateState,
        inner: &InnerSolverConfig,
    ) -> (IterateState, StepInfo) {
        let n = self.n;
        let v = DVector::from_vec(state.v());
        let vp = DVector::from_vec(state.prev_v());
        let c = (&self.m1 * &v + &self.m2 * &vp).component_mul(&self.rinv);
        let gamma_y = self.rinv[n];
        let b = DVector::from_column_slice(problem.rhs());
        let cy = c.rows(n, problem.m()) - b * gamma_y;
        let ct = c.rows(0, n) + &self.l_xy * &cy;

        let mut info = StepInfo::default();
        let mut xn = DVector::zeros(n);
        for (j, solve) in self.solves.iter().enumerate() {
            let (sj, nj) = (self.starts[j], self.sizes[j]);
            let mut arg = ct.rows(sj, nj).into_owned();
            if sj > 0 {
                arg += self.l_tilde.view((sj, 0), (nj, sj)) * xn.rows(0, sj);
            }
            let gamma = self.rinv[sj];
            let f = problem.block(j).f.as_ref();
            let xj = match solve {
                BlockSolve::Explicit => f.prox(arg.as_slice(), gamma),
                BlockSolve::Implicit { gram, alpha } => {
                    let (xj, its, ok) = inner_prox_gradient(
                        f,
                        |u, out| {
                            let g = gram * DVector::from_column_slice(u);
                            out.copy_from_slice(g.as_slice());
                        },
                        arg.as_slice(),
                        &state.x[j],
                        *alpha,
                        self.beta,
                        problem.block_norm_sq(j),
                        inner,
                    );
                    info.inner_iterations += its;
                    info.inner_unconverged += usize::from(!ok);
                    xj
                }
            };
            xn.rows_mut(sj, nj).copy_from_slice(&xj);
        }
        let yn = &self.l_yx * &xn + cy;

        let x: Vec<Vec<f64>> = self
            .starts
            .iter()
            .zip(&self.sizes)
            .map(|(&sj, &nj)| xn.as_slice()[sj..sj + nj].to_vec())
            .collect();
        let next = IterateState {
            x,
            y: yn.as_slice().to_vec(),
            prev_x: state.x.clone(),
            prev_y: state.y.clone(),
            k: state.k + 1,
            ax: None,
            prev_ax: None,
        };
        (next, info)
    }
}

/// One step of the dense reference iteration.
pub fn generic_two_step_dense(
    ms: &MatrixSet,
    problem: &BlockProblem,
    state: &IterateState,
    r: &[f64],
    e: &DMatrix<f64>,
    inner: &InnerSolverConfig,
) -> Result<(IterateState, StepInfo)> {
    let engine = DenseReference::new(ms, problem, r, e)?;
    Ok(engine.step(problem, state, inner))
}
