use super::BlockProblem;
use crate::error::{check_len, Error, Result};
use crate::vecops::{dist_sq, stack};

/// `v^k = (x_1, …, x_s, y)` together with `v^{k−1}`.
///
/// The state also caches the images `A_i x_i` of both iterates so a sweep
/// does not recompute them; the cache is dropped whenever the iterates are
/// replaced from outside.
#[derive(Debug, Clone)]
pub struct IterateState {
    pub(crate) x: Vec<Vec<f64>>,
    pub(crate) y: Vec<f64>,
    pub(crate) prev_x: Vec<Vec<f64>>,
    pub(crate) prev_y: Vec<f64>,
    pub(crate) k: usize,
    pub(crate) ax: Option<Vec<Vec<f64>>>,
    pub(crate) prev_ax: Option<Vec<Vec<f64>>>,
}

impl IterateState {
    /// Zero start with `v^0 = v^1`.
    pub fn zeros(problem: &BlockProblem) -> Self {
        let x: Vec<Vec<f64>> = problem.sizes().iter().map(|&n| vec![0.0; n]).collect();
        Self::build(x.clone(), vec![0.0; problem.m()], x, vec![0.0; problem.m()])
    }

    /// Start from `(x, y)` with the previous iterate equal to it.
    pub fn new(problem: &BlockProblem, x: Vec<Vec<f64>>, y: Vec<f64>) -> Result<Self> {
        Self::with_history(problem, x.clone(), y.clone(), x, y)
    }

    /// Start from an explicit pair of iterates.
    pub fn with_history(
        problem: &BlockProblem,
        x: Vec<Vec<f64>>,
        y: Vec<f64>,
        prev_x: Vec<Vec<f64>>,
        prev_y: Vec<f64>,
    ) -> Result<Self> {
        check_shapes(problem, &x, &y)?;
        check_shapes(problem, &prev_x, &prev_y)?;
        Ok(Self::build(x, y, prev_x, prev_y))
    }

    fn build(x: Vec<Vec<f64>>, y: Vec<f64>, prev_x: Vec<Vec<f64>>, prev_y: Vec<f64>) -> Self {
        IterateState {
            x,
            y,
            prev_x,
            prev_y,
            k: 0,
            ax: None,
            prev_ax: None,
        }
    }

    pub fn x(&self) -> &[Vec<f64>] {
        &self.x
    }
    pub fn y(&self) -> &[f64] {
        &self.y
    }
    pub fn prev_x(&self) -> &[Vec<f64>] {
        &self.prev_x
    }
    pub fn prev_y(&self) -> &[f64] {
        &self.prev_y
    }
    /// Number of sweeps taken since construction.
    pub fn k(&self) -> usize {
        self.k
    }

    /// Stacked `v^k`.
    pub fn v(&self) -> Vec<f64> {
        let mut v = stack(self.x.iter().map(Vec::as_slice));
        v.extend_from_slice(&self.y);
        v
    }

    /// Stacked `v^{k−1}`.
    pub fn prev_v(&self) -> Vec<f64> {
        let mut v = stack(self.prev_x.iter().map(Vec::as_slice));
        v.extend_from_slice(&self.prev_y);
        v
    }

    /// `‖v^k − v^{k−1}‖²`.
    pub fn step_norm_sq(&self) -> f64 {
        let xs: f64 = self
            .x
            .iter()
            .zip(&self.prev_x)
            .map(|(a, b)| dist_sq(a, b))
            .sum();
        xs + dist_sq(&self.y, &self.prev_y)
    }

    /// Overwrite the previous iterate with the current one.
    pub fn pin_memory(&mut self) {
        self.prev_x.clone_from(&self.x);
        self.prev_y.clone_from(&self.y);
        self.prev_ax.clone_from(&self.ax);
    }

    /// Rebuild a state of the same shape from a stacked `v`, with `v^{k-1} = v^k`.
    pub fn from_stacked(problem: &BlockProblem, v: &[f64]) -> Result<Self> {
        check_len("stacked iterate", problem.n() + problem.m(), v.len())?;
        let mut at = 0;
        let mut x = Vec::with_capacity(problem.s());
        for n in problem.sizes() {
            x.push(v[at..at + n].to_vec());
            at += n;
        }
        Self::new(problem, x, v[at..].to_vec())
    }

    pub(crate) fn ensure_images(&mut self, problem: &BlockProblem) {
        if self.ax.is_none() {
            self.ax = Some(images(problem, &self.x));
        }
        if self.prev_ax.is_none() {
            self.prev_ax = Some(images(problem, &self.prev_x));
        }
    }
}

pub(crate) fn images(problem: &BlockProblem, x: &[Vec<f64>]) -> Vec<Vec<f64>> {
    problem
        .blocks()
        .iter()
        .zip(x)
        .map(|(b, xi)| b.a.forward(xi))
        .collect()
}

fn check_shapes(problem: &BlockProblem, x: &[Vec<f64>], y: &[f64]) -> Result<()> {
    if x.len() != problem.s() {
        return Err(Error::DimensionMismatch {
            what: "number of blocks",
            expected: problem.s(),
            got: x.len(),
        });
    }
    for (xi, n) in x.iter().zip(problem.sizes()) {
        check_len("block iterate", n, xi.len())?;
    }
    check_len("dual iterate", problem.m(), y.len())
}

impl IterateState {
    pub(crate) fn check(&self, problem: &BlockProblem) -> Result<()> {
        check_shapes(problem, &self.x, &self.y)?;
        check_shapes(problem, &self.prev_x, &self.prev_y)
    }
}
