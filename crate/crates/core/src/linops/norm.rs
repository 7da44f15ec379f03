//! Spectral-norm estimation by power iteration on `A^T A`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::LinearOperator;
use crate::error::{Error, Result};
use crate::vecops::{dot, norm, scale};

const START_SEED: u64 = 0x5eed_0f_a11;

/// Estimate of `||A||_2^2`. `converged` is false when `max_iter` ran out
/// before the Rayleigh quotient settled; the value is still the last iterate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormEstimate {
    pub value: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Deterministic start: all ones plus a small fixed perturbation so that the
/// vector is not orthogonal to the top singular vector by symmetry.
pub(crate) fn start_vector(n: usize) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(START_SEED);
    (0..n)
        .map(|_| 1.0 + 0.1 * rng.random_range(-1.0..1.0))
        .collect()
}

/// Power iteration for the largest eigenvalue of a symmetric positive
/// semidefinite map given as a closure.
pub(crate) fn power_iteration<F>(n: usize, tol: f64, max_iter: usize, mut apply: F) -> NormEstimate
where
    F: FnMut(&[f64], &mut [f64]),
{
    let mut v = start_vector(n);
    let nv = norm(&v);
    scale(1.0 / nv, &mut v);
    let mut w = vec![0.0; n];
    let mut lambda = 0.0;
    for it in 1..=max_iter {
        apply(&v, &mut w);
        let next = dot(&v, &w);
        let nw = norm(&w);
        if nw == 0.0 {
            return NormEstimate {
                value: 0.0,
                iterations: it,
                converged: true,
            };
        }
        let settled = it > 1 && (next - lambda).abs() <= tol * next.abs();
        lambda = next;
        if settled {
            return NormEstimate {
                value: lambda,
                iterations: it,
                converged: true,
            };
        }
        for (vi, wi) in v.iter_mut().zip(&w) {
            *vi = wi / nw;
        }
    }
    NormEstimate {
        value: lambda,
        iterations: max_iter,
        converged: false,
    }
}

/// Estimate `||op||_2^2`, stopping once the relative change of the Rayleigh
/// quotient of `op^T op` is at most `tol`.
pub fn op_norm_sq_est(op: &dyn LinearOperator, tol: f64, max_iter: usize) -> Result<NormEstimate> {
    if !(tol > 0.0) {
        return Err(Error::invalid(format!(
            "tolerance must be positive, got {tol}"
        )));
    }
    if max_iter == 0 {
        return Err(Error::invalid("max_iter must be positive"));
    }
    let mut tmp = vec![0.0; op.rows()];
    Ok(power_iteration(op.cols(), tol, max_iter, |v, out| {
        op.forward_into(v, &mut tmp);
        op.adjoint_into(&tmp, out);
    }))
}
