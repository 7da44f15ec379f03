#![allow(dead_code)]

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use twostep::conditionm::{mtilde_norm, scaled_stack_norm};
use twostep::engine::{BaseFamily, Block, BlockProblem, Family};
use twostep::linops::{op_norm_sq_est, DenseOperator, OperatorRef};
use twostep::prox::{BoxIndicator, GroupL2Ball, ProxFunction, WeightedL1, Zero};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn dense(rows: usize, cols: usize, data: &[f64]) -> OperatorRef {
    Arc::new(DenseOperator::from_row_slice(rows, cols, data).unwrap())
}

/// `min |x1| + |x2| + |x3|  s.t.  x1 + 2 x2 + 3 x3 = 3`; solution `(0, 0, 1)`,
/// multiplier `y = −1/3`.
pub fn lp_instance() -> BlockProblem {
    let blocks = [1.0, 2.0, 3.0]
        .iter()
        .map(|&c| {
            let f: Arc<dyn ProxFunction> = Arc::new(WeightedL1::uniform(1, 1.0).unwrap());
            Block::new(f, dense(1, 1, &[c]))
        })
        .collect();
    BlockProblem::new(blocks, vec![3.0]).unwrap()
}

pub fn random_prox(rng: &mut ChaCha8Rng, n: usize) -> Arc<dyn ProxFunction> {
    match rng.random_range(0..4) {
        0 => {
            Arc::new(WeightedL1::new((0..n).map(|_| rng.random_range(0.0..1.0)).collect()).unwrap())
        }
        1 => Arc::new(
            BoxIndicator::new((0..n).map(|_| rng.random_range(0.1..2.0)).collect()).unwrap(),
        ),
        2 if n.is_multiple_of(2) => {
            Arc::new(GroupL2Ball::new(n / 2, rng.random_range(0.2..2.0)).unwrap())
        }
        _ => Arc::new(Zero::new(n)),
    }
}

/// Random 3-block problem with `n_i ≤ 4`, `m ≤ 6`.
pub fn random_instance(rng: &mut ChaCha8Rng) -> BlockProblem {
    let m = rng.random_range(2..=6);
    let blocks = (0..3)
        .map(|_| {
            let n = rng.random_range(1..=4);
            let data: Vec<f64> = (0..m * n).map(|_| rng.random_range(-1.0..1.0)).collect();
            Block::new(random_prox(rng, n), dense(m, n, &data))
        })
        .collect();
    let b = (0..m).map(|_| rng.random_range(-1.0..1.0)).collect();
    BlockProblem::new(blocks, b).unwrap()
}

pub fn random_state(rng: &mut ChaCha8Rng, problem: &BlockProblem) -> twostep::engine::IterateState {
    let mut draw = |n: usize| -> Vec<f64> { (0..n).map(|_| rng.random_range(-1.0..1.0)).collect() };
    let x: Vec<Vec<f64>> = problem.sizes().into_iter().map(&mut draw).collect();
    let y = draw(problem.m());
    let px: Vec<Vec<f64>> = problem.sizes().into_iter().map(&mut draw).collect();
    let py = draw(problem.m());
    twostep::engine::IterateState::with_history(problem, x, y, px, py).unwrap()
}

pub fn all_families() -> Vec<Family> {
    vec![
        Family::PdPrimalFirst,
        Family::PdDualFirst,
        Family::TwoStepImplicit,
        Family::TwoStepExplicit,
        Family::LadmmDirect,
        Family::DiagRelaxed { theta: 0.4 },
        Family::DiagExplicit,
        Family::OffDiag {
            base: BaseFamily::Implicit,
            theta: 0.3,
        },
        Family::OffDiag {
            base: BaseFamily::Explicit,
            theta: 0.3,
        },
        Family::Hybrid {
            implicit_blocks: [1].into_iter().collect(),
        },
    ]
}

/// Step sizes that keep the iteration well behaved: the closed-form bound
/// scaled by `safety` where one exists, otherwise the explicit bound.
pub fn reasonable_alphas(family: &Family, problem: &BlockProblem, safety: f64) -> Vec<f64> {
    let ops = problem.operators();
    if family.is_primal_dual() {
        let n = scaled_stack_norm(&ops, &vec![1.0; ops.len()]).value;
        return vec![safety / (n * n); ops.len()];
    }
    let mt = mtilde_norm(&ops).unwrap().value;
    ops.iter()
        .map(|a| {
            let nsq = op_norm_sq_est(a.as_ref(), 1e-12, 10_000).unwrap().value;
            let bound = if family.block_is_implicit(0) && !matches!(family, Family::Hybrid { .. }) {
                1.0 / (2.0 * mt).max(1e-3)
            } else {
                1.0 / (nsq + 2.0 * mt)
            };
            safety * bound
        })
        .collect()
}
