//! Condition-M: assembling `{M0, M1, M2}` and checking that a two-step
//! iteration built from them converges.
//!
//! A set passes when `M0 = M1 + M2`, `H = M0 + M2` is symmetric positive
//! definite, and `‖H^{-1/2} M2 H^{-1/2}‖₂ < 1/2`. The dense check is meant for
//! small instances; [`certify_step_sizes`] applies the closed-form step-size
//! bounds that cover large ones.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::Serialize;

use crate::engine::Family;
use crate::error::{Error, Result};
use crate::linops::norm::power_iteration;
use crate::linops::{op_norm_sq_est, to_dense, NormEstimate, OperatorRef};

/// Absolute tolerance on `max |M0 − M1 − M2|`.
pub const ADDITIVITY_TOL: f64 = 1e-10;
/// Relative tolerance on `max |H − Hᵀ|`.
pub const SYMMETRY_TOL: f64 = 1e-10;
/// `H` counts as positive definite when `λ_min > PD_FLOOR · ‖H‖₂`.
pub const PD_FLOOR: f64 = 1e-12;
/// Largest `n + m` for which the certifier falls back to a dense check.
pub const DENSE_CHECK_LIMIT: usize = 500;

/// Power iteration approaches norms from below; certification inflates
/// every estimate by this relative margin so that it errs on the safe side.
pub const CERT_MARGIN: f64 = 1e-8;

const NORM_TOL: f64 = 1e-12;
const NORM_MAX_ITER: usize = 20_000;

#[derive(Debug, Clone, PartialEq)]
pub struct MatrixSet {
    pub m0: DMatrix<f64>,
    pub m1: DMatrix<f64>,
    pub m2: DMatrix<f64>,
}

impl MatrixSet {
    pub fn new(m0: DMatrix<f64>, m1: DMatrix<f64>, m2: DMatrix<f64>) -> Result<Self> {
        let n = m0.nrows();
        for (name, m) in [("M0", &m0), ("M1", &m1), ("M2", &m2)] {
            if m.nrows() != n || m.ncols() != n {
                return Err(Error::invalid(format!(
                    "{name} is {}x{}, expected {n}x{n}",
                    m.nrows(),
                    m.ncols()
                )));
            }
        }
        Ok(MatrixSet { m0, m1, m2 })
    }

    pub fn dim(&self) -> usize {
        self.m0.nrows()
    }

    /// Multiply all three matrices by `c`.
    pub fn scaled(&self, c: f64) -> Self {
        MatrixSet {
            m0: &self.m0 * c,
            m1: &self.m1 * c,
            m2: &self.m2 * c,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ConditionMReport {
    pub additivity_error: f64,
    #[serde(skip)]
    pub h: DMatrix<f64>,
    pub h_min_eigenvalue: f64,
    /// `‖H^{-1/2} M2 H^{-1/2}‖₂`; infinite when `H` is not positive definite.
    pub contraction_norm: f64,
    pub passed: bool,
}

pub fn check_condition_m(ms: &MatrixSet) -> Result<ConditionMReport> {
    let additivity_error = (&ms.m0 - &ms.m1 - &ms.m2).amax();
    let h = &ms.m0 + &ms.m2;
    let asym = (&h - h.transpose()).amax();
    let scale = h.amax().max(1.0);
    if asym > SYMMETRY_TOL * scale {
        return Err(Error::Structure(format!(
            "H = M0 + M2 is not symmetric (max |H - H^T| = {asym:e})"
        )));
    }
    let sym = (&h + h.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);
    let h_min_eigenvalue = eig.eigenvalues.min();
    let h_norm = eig.eigenvalues.amax();
    let pd = h_min_eigenvalue > PD_FLOOR * h_norm;
    let contraction_norm = if pd {
        let inv_sqrt = DMatrix::from_diagonal(&eig.eigenvalues.map(|l| 1.0 / l.sqrt()));
        let root = &eig.eigenvectors * inv_sqrt * eig.eigenvectors.transpose();
        let c = &root * &ms.m2 * &root;
        c.singular_values().max()
    } else {
        f64::INFINITY
    };
    Ok(ConditionMReport {
        additivity_error,
        passed: additivity_error <= ADDITIVITY_TOL && pd && contraction_norm < 0.5,
        h,
        h_min_eigenvalue,
        contraction_norm,
    })
}

fn offsets(blocks: &[DMatrix<f64>]) -> (Vec<usize>, usize) {
    let mut off = vec![0];
    for a in blocks {
        off.push(off.last().unwrap() + a.ncols());
    }
    let n = *off.last().unwrap();
    (off, n)
}

/// Dense `{M0, M1, M2}` for `family` on the given coupling blocks.
pub fn build_matrix_set(
    family: &Family,
    a_blocks: &[DMatrix<f64>],
    alphas: &[f64],
    beta: f64,
) -> Result<MatrixSet> {
    let s = a_blocks.len();
    if s == 0 {
        return Err(Error::invalid("need at least one block"));
    }
    if alphas.len() != s {
        return Err(Error::DimensionMismatch {
            what: "alphas",
            expected: s,
            got: alphas.len(),
        });
    }
    if alphas.iter().any(|a| !(*a > 0.0)) || !(beta > 0.0) {
        return Err(Error::invalid("step sizes and beta must be positive"));
    }
    family.validate(s)?;
    let m = a_blocks[0].nrows();
    if a_blocks.iter().any(|a| a.nrows() != m) {
        return Err(Error::invalid("all blocks must share the same row count"));
    }
    let (off, n) = offsets(a_blocks);
    let dim = n + m;
    let gram = |i: usize, j: usize| a_blocks[i].transpose() * &a_blocks[j];

    if family.is_primal_dual() {
        let sign = if *family == Family::PdPrimalFirst {
            -1.0
        } else {
            1.0
        };
        let mut z = DMatrix::zeros(dim, dim);
        for i in 0..s {
            let ni = a_blocks[i].ncols();
            for k in 0..ni {
                z[(off[i] + k, off[i] + k)] = beta / alphas[i];
            }
            z.view_mut((off[i], n), (ni, m))
                .copy_from(&(a_blocks[i].transpose() * sign));
            z.view_mut((n, off[i]), (m, ni))
                .copy_from(&(&a_blocks[i] * sign));
        }
        for k in 0..m {
            z[(n + k, n + k)] = 1.0 / beta;
        }
        return MatrixSet::new(z.clone(), z, DMatrix::zeros(dim, dim));
    }

    let mut m0 = DMatrix::zeros(dim, dim);
    let mut m2 = DMatrix::zeros(dim, dim);
    for k in 0..m {
        m0[(n + k, n + k)] = 1.0 / beta;
    }
    let (theta, lower) = match family {
        Family::OffDiag { theta, .. } => (*theta, true),
        _ => (0.0, false),
    };
    let one_step = *family == Family::LadmmDirect;
    for i in 0..s {
        let ni = a_blocks[i].ncols();
        let mut diag = DMatrix::<f64>::identity(ni, ni) * (beta / alphas[i]);
        if !family.block_is_implicit(i) {
            diag -= gram(i, i) * beta;
        }
        m0.view_mut((off[i], off[i]), (ni, ni)).copy_from(&diag);
        match family {
            Family::DiagRelaxed { theta } => {
                let d = DMatrix::<f64>::identity(ni, ni) * (-theta * beta / alphas[i]);
                m2.view_mut((off[i], off[i]), (ni, ni)).copy_from(&d);
            }
            Family::DiagExplicit => {
                m2.view_mut((off[i], off[i]), (ni, ni))
                    .copy_from(&(gram(i, i) * beta));
            }
            _ => {}
        }
        for j in 0..s {
            let nj = a_blocks[j].ncols();
            if j > i {
                m0.view_mut((off[i], off[j]), (ni, nj))
                    .copy_from(&(gram(i, j) * -beta));
                if !one_step {
                    m2.view_mut((off[i], off[j]), (ni, nj))
                        .copy_from(&(gram(i, j) * ((1.0 + theta) * beta)));
                }
            } else if j < i && lower {
                m0.view_mut((off[i], off[j]), (ni, nj))
                    .copy_from(&(gram(i, j) * (theta * beta)));
            }
        }
    }
    let m1 = &m0 - &m2;
    MatrixSet::new(m0, m1, m2)
}

/// `‖M̃₂‖₂` for the strictly block-upper operator with blocks `A_iᵀ A_j`
/// (`i < j`), by power iteration. Exactly zero for a single block.
pub fn mtilde_norm(a_ops: &[OperatorRef]) -> Result<NormEstimate> {
    mtilde_norm_with(a_ops, NORM_TOL, NORM_MAX_ITER)
}

pub fn mtilde_norm_with(a_ops: &[OperatorRef], tol: f64, max_iter: usize) -> Result<NormEstimate> {
    if a_ops.is_empty() {
        return Err(Error::invalid("need at least one block"));
    }
    let m = a_ops[0].rows();
    if a_ops.iter().any(|a| a.rows() != m) {
        return Err(Error::invalid("all blocks must share the same row count"));
    }
    if a_ops.len() == 1 {
        return Ok(NormEstimate {
            value: 0.0,
            iterations: 0,
            converged: true,
        });
    }
    let sizes: Vec<usize> = a_ops.iter().map(|a| a.cols()).collect();
    let n: usize = sizes.iter().sum();
    let mut mid = vec![0.0; n];
    let est = power_iteration(n, tol, max_iter, |v, out| {
        mtilde_apply(a_ops, &sizes, v, &mut mid);
        mtilde_apply_t(a_ops, &sizes, &mid, out);
    });
    Ok(NormEstimate {
        value: est.value.max(0.0).sqrt(),
        ..est
    })
}

/// `(M̃₂ v)_i = A_iᵀ Σ_{j>i} A_j v_j`
fn mtilde_apply(a_ops: &[OperatorRef], sizes: &[usize], v: &[f64], out: &mut [f64]) {
    let m = a_ops[0].rows();
    let s = a_ops.len();
    let starts = starts(sizes);
    let mut acc = vec![0.0; m];
    let mut tmp = vec![0.0; m];
    for i in (0..s).rev() {
        let (lo, hi) = (starts[i], starts[i] + sizes[i]);
        a_ops[i].adjoint_into(&acc, &mut out[lo..hi]);
        a_ops[i].forward_into(&v[lo..hi], &mut tmp);
        for (a, t) in acc.iter_mut().zip(&tmp) {
            *a += t;
        }
    }
}

/// `(M̃₂ᵀ z)_j = A_jᵀ Σ_{i<j} A_i z_i`
fn mtilde_apply_t(a_ops: &[OperatorRef], sizes: &[usize], z: &[f64], out: &mut [f64]) {
    let m = a_ops[0].rows();
    let starts = starts(sizes);
    let mut acc = vec![0.0; m];
    let mut tmp = vec![0.0; m];
    for j in 0..a_ops.len() {
        let (lo, hi) = (starts[j], starts[j] + sizes[j]);
        a_ops[j].adjoint_into(&acc, &mut out[lo..hi]);
        a_ops[j].forward_into(&z[lo..hi], &mut tmp);
        for (a, t) in acc.iter_mut().zip(&tmp) {
            *a += t;
        }
    }
}

fn starts(sizes: &[usize]) -> Vec<usize> {
    let mut at = 0;
    sizes
        .iter()
        .map(|n| {
            let s = at;
            at += n;
            s
        })
        .collect()
}

/// `‖A Q‖₂` with `Q = diag(√α_i I)`, via power iteration on `Σ α_i A_i A_iᵀ`.
pub fn scaled_stack_norm(a_ops: &[OperatorRef], alphas: &[f64]) -> NormEstimate {
    let m = a_ops[0].rows();
    let est = power_iteration(m, NORM_TOL, NORM_MAX_ITER, |w, out| {
        out.fill(0.0);
        for (a, &al) in a_ops.iter().zip(alphas) {
            let t = a.forward(&a.adjoint(w));
            for (o, v) in out.iter_mut().zip(&t) {
                *o += al * v;
            }
        }
    });
    NormEstimate {
        value: est.value.max(0.0).sqrt(),
        ..est
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CertStatus {
    /// Every block is strictly inside a bound that implies Condition-M.
    Certified,
    /// At least one block violates its bound.
    Rejected,
    /// No bound is available for this family at this size.
    NoGuarantee,
    /// Outside the theory, but within the `α_i ≤ 1/‖A_i‖²` rule used in
    /// practice for the MRI experiment.
    PaperPractical,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CertMethod {
    AnalyticBound,
    PrimalDualNorm,
    DenseConditionM,
    None,
}

#[derive(Debug, Clone, Serialize)]
pub struct StepSizeCertificate {
    pub family: String,
    pub status: CertStatus,
    pub method: CertMethod,
    pub alphas: Vec<f64>,
    pub beta: f64,
    pub mtilde_norm: f64,
    pub block_norms_sq: Vec<f64>,
    /// Upper bound on each `α_i` (empty when the method has no per-block bound).
    pub per_block_bounds: Vec<f64>,
    pub violated_blocks: Vec<usize>,
    /// `‖A Q‖₂` for the primal-dual families.
    pub pd_norm: Option<f64>,
    pub safety_factor: Option<f64>,
    pub dense_report: Option<ConditionMReport>,
    pub norms_converged: bool,
    pub note: String,
}

impl StepSizeCertificate {
    pub fn is_certified(&self) -> bool {
        self.status == CertStatus::Certified
    }
}

/// Per-block analytic bounds for the families that have them.
fn analytic_bounds(family: &Family, norms_sq: &[f64], mt: f64) -> Option<Vec<f64>> {
    let implicit = |_: usize| 1.0 / (2.0 * mt);
    let explicit = |i: usize| 1.0 / (norms_sq[i] + 2.0 * mt);
    let s = norms_sq.len();
    match family {
        Family::TwoStepImplicit => Some((0..s).map(implicit).collect()),
        Family::TwoStepExplicit => Some((0..s).map(explicit).collect()),
        Family::Hybrid { implicit_blocks } => Some(
            (0..s)
                .map(|i| {
                    if implicit_blocks.contains(&i) {
                        implicit(i)
                    } else {
                        explicit(i)
                    }
                })
                .collect(),
        ),
        _ => None,
    }
}

fn validate_inputs(a_ops: &[OperatorRef], alphas: &[f64], beta: f64) -> Result<()> {
    if a_ops.is_empty() {
        return Err(Error::invalid("need at least one block"));
    }
    if alphas.len() != a_ops.len() {
        return Err(Error::DimensionMismatch {
            what: "alphas",
            expected: a_ops.len(),
            got: alphas.len(),
        });
    }
    if alphas.iter().any(|a| !(*a > 0.0)) || !(beta > 0.0) {
        return Err(Error::invalid("step sizes and beta must be positive"));
    }
    Ok(())
}

fn block_norms(a_ops: &[OperatorRef]) -> Result<(Vec<f64>, bool)> {
    let mut ok = true;
    let mut out = Vec::with_capacity(a_ops.len());
    for a in a_ops {
        let e = op_norm_sq_est(a.as_ref(), NORM_TOL, NORM_MAX_ITER)?;
        ok &= e.converged;
        out.push(e.value);
    }
    Ok((out, ok))
}

/// Check `alphas` against the step-size condition that applies to `family`.
pub fn certify_step_sizes(
    family: &Family,
    a_ops: &[OperatorRef],
    alphas: &[f64],
    beta: f64,
) -> Result<StepSizeCertificate> {
    validate_inputs(a_ops, alphas, beta)?;
    family.validate(a_ops.len())?;
    let (norms_sq, mut converged) = block_norms(a_ops)?;
    let mt = mtilde_norm(a_ops)?;
    converged &= mt.converged;
    let mut cert = StepSizeCertificate {
        family: family.to_string(),
        status: CertStatus::NoGuarantee,
        method: CertMethod::None,
        alphas: alphas.to_vec(),
        beta,
        mtilde_norm: mt.value,
        block_norms_sq: norms_sq.clone(),
        per_block_bounds: Vec::new(),
        violated_blocks: Vec::new(),
        pd_norm: None,
        safety_factor: None,
        dense_report: None,
        norms_converged: converged,
        note: String::new(),
    };

    if family.is_primal_dual() {
        let e = scaled_stack_norm(a_ops, alphas);
        cert.norms_converged &= e.converged;
        cert.method = CertMethod::PrimalDualNorm;
        cert.pd_norm = Some(e.value);
        if e.value * (1.0 + CERT_MARGIN) < 1.0 {
            cert.status = CertStatus::Certified;
        } else {
            cert.status = CertStatus::Rejected;
            cert.violated_blocks = (0..a_ops.len()).collect();
            cert.note = format!("||A Q||_2 = {:.6} is not below 1", e.value);
        }
        return Ok(cert);
    }

    let inflated: Vec<f64> = norms_sq.iter().map(|v| v * (1.0 + CERT_MARGIN)).collect();
    if let Some(bounds) = analytic_bounds(family, &inflated, mt.value * (1.0 + CERT_MARGIN)) {
        cert.method = CertMethod::AnalyticBound;
        cert.violated_blocks = alphas
            .iter()
            .zip(&bounds)
            .enumerate()
            .filter(|(_, (a, b))| !(**a < **b))
            .map(|(i, _)| i)
            .collect();
        cert.per_block_bounds = bounds;
        cert.status = if cert.violated_blocks.is_empty() {
            CertStatus::Certified
        } else {
            CertStatus::Rejected
        };
        return Ok(cert);
    }

    if *family == Family::LadmmDirect {
        cert.note = "direct multi-block LADMM has no convergence guarantee".into();
        return Ok(cert);
    }

    let n: usize = a_ops.iter().map(|a| a.cols()).sum();
    let dim = n + a_ops[0].rows();
    if dim > DENSE_CHECK_LIMIT {
        cert.note = format!("no closed-form bound; n + m = {dim} is too large for a dense check");
        return Ok(cert);
    }
    let dense: Vec<DMatrix<f64>> = a_ops.iter().map(|a| to_dense(a.as_ref())).collect();
    let ms = build_matrix_set(family, &dense, alphas, beta)?;
    cert.method = CertMethod::DenseConditionM;
    match check_condition_m(&ms) {
        Ok(report) => {
            cert.status = if report.passed {
                CertStatus::Certified
            } else {
                cert.violated_blocks = (0..a_ops.len()).collect();
                CertStatus::Rejected
            };
            cert.dense_report = Some(report);
        }
        Err(e) => {
            cert.status = CertStatus::Rejected;
            cert.note = e.to_string();
        }
    }
    Ok(cert)
}

/// Like [`certify_step_sizes`], but a rejected configuration that still
/// satisfies `α_i ≤ 1/‖A_i‖²` for every block is reported as
/// [`CertStatus::PaperPractical`] rather than rejected.
pub fn assess_practical(
    family: &Family,
    a_ops: &[OperatorRef],
    alphas: &[f64],
    beta: f64,
) -> Result<StepSizeCertificate> {
    let mut cert = certify_step_sizes(family, a_ops, alphas, beta)?;
    if cert.status == CertStatus::Certified {
        return Ok(cert);
    }
    let practical = alphas
        .iter()
        .zip(&cert.block_norms_sq)
        .all(|(a, n)| *a * *n <= 1.0 + 1e-9);
    if practical {
        cert.status = CertStatus::PaperPractical;
        cert.note = "alpha_i <= 1/||A_i||^2 holds for every block; this rule is used in \
                     practice but is not covered by the convergence theory"
            .into();
    }
    Ok(cert)
}

/// `safety ×` the family's per-block bound.
pub fn suggest_step_sizes(
    family: &Family,
    a_ops: &[OperatorRef],
    beta: f64,
    safety: f64,
) -> Result<Vec<f64>> {
    if !(safety > 0.0 && safety < 1.0) {
        return Err(Error::invalid(format!(
            "safety must lie in (0, 1), got {safety}"
        )));
    }
    validate_inputs(a_ops, &vec![1.0; a_ops.len()], beta)?;
    family.validate(a_ops.len())?;
    let s = a_ops.len();
    if family.is_primal_dual() {
        let e = scaled_stack_norm(a_ops, &vec![1.0; s]);
        if e.value == 0.0 {
            return Err(Error::UnboundedStepSize { block: 0 });
        }
        let n = e.value * (1.0 + CERT_MARGIN);
        return Ok(vec![safety / (n * n); s]);
    }
    let (norms_sq, _) = block_norms(a_ops)?;
    let inflated: Vec<f64> = norms_sq.iter().map(|v| v * (1.0 + CERT_MARGIN)).collect();
    let mt = mtilde_norm(a_ops)?.value * (1.0 + CERT_MARGIN);
    let bounds = analytic_bounds(family, &inflated, mt).ok_or_else(|| {
        Error::invalid(format!(
            "family {family} has no closed-form step-size bound"
        ))
    })?;
    bounds
        .iter()
        .enumerate()
        .map(|(i, b)| {
            if b.is_finite() {
                Ok(safety * b)
            } else {
                Err(Error::UnboundedStepSize { block: i })
            }
        })
        .collect()
}

/// `safety / ‖A_i‖²` for every block: the rule used for the MRI runs.
pub fn practical_step_sizes(norms_sq: &[f64], safety: f64) -> Vec<f64> {
    norms_sq.iter().map(|n| safety / n).collect()
}
