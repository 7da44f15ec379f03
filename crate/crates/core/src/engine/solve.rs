use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::{AlgorithmSpec, BlockProblem, IterateState, Stepper};
use crate::diagnostics::{IterRecord, RunTrace};
use crate::error::{Error, Result};
use crate::vecops::{dist, norm, relative_change};

/// Distance of `(x, y)` from the fixed-point characterisation of a solution:
/// `Σ_i ‖x_i − prox_{(α_i/β) f_i}(x_i − (α_i/β) A_iᵀ y)‖ + β ‖Σ A_i x_i − b‖`.
pub fn kkt_residual(
    problem: &BlockProblem,
    state: &IterateState,
    alphas: &[f64],
    beta: f64,
) -> Result<f64> {
    if alphas.len() != problem.s() {
        return Err(Error::DimensionMismatch {
            what: "alphas",
            expected: problem.s(),
            got: alphas.len(),
        });
    }
    if alphas.iter().any(|a| !(*a > 0.0)) || !(beta > 0.0) {
        return Err(Error::invalid("step sizes and beta must be positive"));
    }
    let mut total = 0.0;
    for ((blk, xi), a) in problem.blocks().iter().zip(&state.x).zip(alphas) {
        let g = blk.a.adjoint(&state.y);
        let gamma = a / beta;
        let arg: Vec<f64> = xi.iter().zip(&g).map(|(x, g)| x - gamma * g).collect();
        total += dist(xi, &blk.f.prox(&arg, gamma));
    }
    Ok(total + beta * norm(&problem.constraint_residual(&state.x)))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StopCriteria {
    pub max_iter: usize,
    /// Stop once `‖y^k − y^{k−1}‖ / ‖y^k‖` drops below this.
    #[serde(default)]
    pub eps2_tol: Option<f64>,
    /// Stop once the KKT residual drops below this.
    #[serde(default)]
    pub kkt_tol: Option<f64>,
    /// Record the KKT residual every iteration even without `kkt_tol`.
    #[serde(default = "yes")]
    pub track_kkt: bool,
}

fn yes() -> bool {
    true
}

impl Default for StopCriteria {
    fn default() -> Self {
        StopCriteria {
            max_iter: 1000,
            eps2_tol: None,
            kkt_tol: None,
            track_kkt: true,
        }
    }
}

impl StopCriteria {
    pub fn iterations(max_iter: usize) -> Self {
        StopCriteria {
            max_iter,
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    MaxIter,
    Eps2,
    Kkt,
    Hook,
}

/// Returned by a per-iteration hook.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Control {
    Continue,
    Stop,
}

#[derive(Debug, Clone)]
pub struct SolveOutcome {
    pub state: IterateState,
    pub trace: RunTrace,
    pub converged: bool,
    pub reason: StopReason,
}

/// Iterate until a stopping rule fires.
///
/// `hook` sees the state after every iteration and may add fields to the
/// record (the MRI driver fills in its image metrics this way) or stop the
/// run.
pub fn solve<H>(
    problem: &BlockProblem,
    spec: &AlgorithmSpec,
    mut state: IterateState,
    stop: &StopCriteria,
    mut hook: H,
) -> Result<SolveOutcome>
where
    H: FnMut(&IterateState, &mut IterRecord) -> Control,
{
    let mut stepper = Stepper::new(problem, spec)?;
    state.check(problem)?;
    let mut trace = RunTrace::default();
    let start = Instant::now();
    let mut reason = StopReason::MaxIter;
    for _ in 0..stop.max_iter {
        let info = stepper.advance(&mut state);
        let kkt = if stop.track_kkt || stop.kkt_tol.is_some() {
            Some(kkt_residual(problem, &state, &spec.alphas, spec.beta)?)
        } else {
            None
        };
        let mut rec = IterRecord {
            k: state.k,
            step_norm_sq: state.step_norm_sq(),
            kkt,
            objective: problem.objective(&state.x),
            eps1: None,
            eps2: relative_change(&state.y, &state.prev_y),
            psnr: None,
            seconds: 0.0,
            inner_iterations: info.inner_iterations,
        };
        trace.inner_unconverged += info.inner_unconverged;
        let control = hook(&state, &mut rec);
        rec.seconds = start.elapsed().as_secs_f64();
        let hit_kkt = matches!((stop.kkt_tol, rec.kkt), (Some(t), Some(v)) if v <= t);
        let hit_eps2 = matches!((stop.eps2_tol, rec.eps2), (Some(t), Some(v)) if v <= t);
        trace.records.push(rec);
        if hit_kkt {
            reason = StopReason::Kkt;
            break;
        }
        if hit_eps2 {
            reason = StopReason::Eps2;
            break;
        }
        if control == Control::Stop {
            reason = StopReason::Hook;
            break;
        }
    }
    Ok(SolveOutcome {
        state,
        trace,
        converged: matches!(reason, StopReason::Kkt | StopReason::Eps2),
        reason,
    })
}
