//! Two-step fixed-point proximity algorithms for multi-block separable convex
//! problems
//!
//! ```text
//! min  f_1(x_1) + ... + f_s(x_s)   subject to   A_1 x_1 + ... + A_s x_s = b
//! ```
//!
//! The crate is organised bottom-up:
//!
//! - [`linops`]: matrix-free linear operators (difference, total-variation,
//!   undecimated Haar, partial Fourier) with adjoints and norm estimation.
//! - [`prox`]: closed-form proximity operators and projections.
//! - [`conditionm`]: dense assembly of the `{M0, M1, M2}` splitting matrices,
//!   the Condition-M certificate and analytic step-size bounds.
//! - [`engine`]: the two-step iteration, both as a dense reference engine and
//!   as matrix-free steppers for every algorithm family, plus the KKT residual.
//! - [`diagnostics`]: run traces, ergodic rate reports and the partial
//!   primal-dual gap.
//! - [`mri`]: the sparse-MRI reconstruction experiment (phantom, radial mask,
//!   dual problem, metrics and benchmark tables).
//!
//! With the default `parallel` feature the image-sized operators split their
//! work across a rayon pool; without it every loop runs sequentially and the
//! results are bit-identical.

pub mod conditionm;
pub mod diagnostics;
pub mod engine;
mod error;
pub mod linops;
pub mod mri;
pub mod parallel;
pub mod prox;
pub mod vecops;

pub use error::{Error, Result};
