use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Which diagonal treatment a two-step family starts from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaseFamily {
    Implicit,
    Explicit,
}

/// Members of the algorithm family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case", deny_unknown_fields)]
pub enum Family {
    /// One-step primal-dual, x first then an extrapolated y.
    PdPrimalFirst,
    /// One-step primal-dual, y first then x with an extrapolated y
    /// (Jacobi-type linearised ADMM).
    #[serde(alias = "jladmm")]
    PdDualFirst,
    /// Gauss-Seidel sweep with the block's own coupling kept implicit; each
    /// block subproblem is solved by inner iterations.
    TwoStepImplicit,
    /// Fully explicit two-step sweep.
    #[serde(alias = "2sfppa")]
    TwoStepExplicit,
    /// Direct multi-block linearised ADMM (one-step, no extrapolation).
    #[serde(alias = "ladmm")]
    LadmmDirect,
    /// Implicit sweep with prox centre `x^k + θ (x^k − x^{k−1})`.
    DiagRelaxed { theta: f64 },
    /// Explicit sweep whose own-block term is `A_j (2 x_j^k − x_j^{k−1})`.
    DiagExplicit,
    /// Lower blocks coupled through `(1+θ) x^{k+1} − θ x^k`, upper blocks
    /// through `(2+θ) x^k − (1+θ) x^{k−1}`.
    OffDiag { base: BaseFamily, theta: f64 },
    /// Implicit treatment for the listed blocks (0-based), explicit for the rest.
    Hybrid { implicit_blocks: BTreeSet<usize> },
}

impl Family {
    pub fn tag(&self) -> &'static str {
        match self {
            Family::PdPrimalFirst => "pd_primal_first",
            Family::PdDualFirst => "pd_dual_first",
            Family::TwoStepImplicit => "two_step_implicit",
            Family::TwoStepExplicit => "two_step_explicit",
            Family::LadmmDirect => "ladmm_direct",
            Family::DiagRelaxed { .. } => "diag_relaxed",
            Family::DiagExplicit => "diag_explicit",
            Family::OffDiag { .. } => "offdiag",
            Family::Hybrid { .. } => "hybrid",
        }
    }

    pub fn is_primal_dual(&self) -> bool {
        matches!(self, Family::PdPrimalFirst | Family::PdDualFirst)
    }

    /// Whether block `j` (of `s`) is updated implicitly.
    pub fn block_is_implicit(&self, j: usize) -> bool {
        match self {
            Family::TwoStepImplicit | Family::DiagRelaxed { .. } => true,
            Family::OffDiag { base, .. } => *base == BaseFamily::Implicit,
            Family::Hybrid { implicit_blocks } => implicit_blocks.contains(&j),
            _ => false,
        }
    }

    pub fn theta(&self) -> Option<f64> {
        match self {
            Family::DiagRelaxed { theta } | Family::OffDiag { theta, .. } => Some(*theta),
            _ => None,
        }
    }

    pub fn validate(&self, s: usize) -> Result<()> {
        if let Some(theta) = self.theta() {
            if !(0.0..1.0).contains(&theta) {
                return Err(Error::invalid(format!(
                    "theta must lie in [0, 1), got {theta}"
                )));
            }
        }
        if let Family::Hybrid { implicit_blocks } = self {
            if let Some(&j) = implicit_blocks.iter().find(|&&j| j >= s) {
                return Err(Error::invalid(format!(
                    "hybrid block index {j} out of range for {s} blocks"
                )));
            }
        }
        Ok(())
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Family::DiagRelaxed { theta } => write!(f, "diag_relaxed(theta={theta})"),
            Family::OffDiag { base, theta } => write!(f, "offdiag({base:?}, theta={theta})"),
            Family::Hybrid { implicit_blocks } => write!(f, "hybrid(implicit={implicit_blocks:?})"),
            other => f.write_str(other.tag()),
        }
    }
}

/// Inner proximal-gradient iterations for implicit block subproblems.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InnerSolverConfig {
    pub max_inner: usize,
    pub inner_tol: f64,
}

impl Default for InnerSolverConfig {
    fn default() -> Self {
        InnerSolverConfig {
            max_inner: 500,
            inner_tol: 1e-10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AlgorithmSpec {
    pub family: Family,
    pub alphas: Vec<f64>,
    pub beta: f64,
    #[serde(default)]
    pub inner: InnerSolverConfig,
}

impl AlgorithmSpec {
    pub fn new(family: Family, alphas: Vec<f64>, beta: f64) -> Self {
        AlgorithmSpec {
            family,
            alphas,
            beta,
            inner: InnerSolverConfig::default(),
        }
    }

    pub fn with_inner(mut self, inner: InnerSolverConfig) -> Self {
        self.inner = inner;
        self
    }

    pub fn validate(&self, s: usize) -> Result<()> {
        if self.alphas.len() != s {
            return Err(Error::DimensionMismatch {
                what: "alphas",
                expected: s,
                got: self.alphas.len(),
            });
        }
        if let Some(a) = self.alphas.iter().find(|a| !(**a > 0.0 && a.is_finite())) {
            return Err(Error::invalid(format!(
                "step sizes must be positive, got {a}"
            )));
        }
        if !(self.beta > 0.0 && self.beta.is_finite()) {
            return Err(Error::invalid(format!(
                "beta must be positive, got {}",
                self.beta
            )));
        }
        if self.inner.max_inner == 0 || !(self.inner.inner_tol > 0.0) {
            return Err(Error::invalid("inner solver settings must be positive"));
        }
        self.family.validate(s)
    }
}
