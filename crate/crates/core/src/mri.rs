//! Sparse-MRI reconstruction by total-variation plus wavelet regularisation,
//! solved through its three-block dual
//!
//! ```text
//! min ι_{S1}(x1) + ι_{S2}(x2) + ⟨b, x3⟩   s.t.   Bᵀx1 + Wᵀx2 + Kᵀx3 = 0
//! ```
//!
//! where `B` is the periodic gradient, `W` the undecimated Haar transform and
//! `K` the radially undersampled Fourier transform. The image is recovered as
//! `u = −y`.

use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::sync::Arc;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::diagnostics::{IterRecord, RunTrace};
use crate::engine::{
    solve, AlgorithmSpec, Block, BlockProblem, Control, Family, IterateState, StopCriteria,
};
use crate::error::{Error, Result};
use crate::linops::{
    make_haar_undecimated, make_partial_fourier, make_tv_operator, op_norm_sq_est, LinearOperator,
    OperatorRef, PartialFourier, TotalVariation, Transposed, UndecimatedHaar,
};
use crate::parallel::map_ordered;
use crate::prox::{tv_value, BoxIndicator, GroupL2Ball, LinearFunctional, ProxFunction};
use crate::vecops::{dist, norm, relative_change, sub};

const NORM_TOL: f64 = 1e-12;
const NORM_MAX_ITER: usize = 5000;

/// Modified Shepp-Logan ellipses: intensity, semi-axes `(a, b)`, centre
/// `(x0, y0)` and rotation in degrees.
const SHEPP_LOGAN: [[f64; 6]; 10] = [
    [1.0, 0.69, 0.92, 0.0, 0.0, 0.0],
    [-0.8, 0.6624, 0.874, 0.0, -0.0184, 0.0],
    [-0.2, 0.11, 0.31, 0.22, 0.0, -18.0],
    [-0.2, 0.16, 0.41, -0.22, 0.0, 18.0],
    [0.1, 0.21, 0.25, 0.0, 0.35, 0.0],
    [0.1, 0.046, 0.046, 0.0, 0.1, 0.0],
    [0.1, 0.046, 0.046, 0.0, -0.1, 0.0],
    [0.1, 0.046, 0.023, -0.08, -0.605, 0.0],
    [0.1, 0.023, 0.023, 0.0, -0.606, 0.0],
    [0.1, 0.023, 0.046, 0.06, -0.605, 0.0],
];

fn ellipse_sum(x: f64, y: f64) -> f64 {
    let mut v = 0.0;
    for &[a, ax, ay, x0, y0, deg] in &SHEPP_LOGAN {
        let (s, c) = deg.to_radians().sin_cos();
        let (dx, dy) = (x - x0, y - y0);
        let p = dx * c + dy * s;
        let q = -dx * s + dy * c;
        if (p / ax).powi(2) + (q / ay).powi(2) <= 1.0 {
            v += a;
        }
    }
    v
}

/// Shepp-Logan phantom sampled at pixel centres of `[−1, 1]²`, column-major.
///
/// Row 0 is the top of the image (`y = 1`), column 0 the left edge.
pub fn shepp_logan(d1: usize, d2: usize) -> Result<Vec<f64>> {
    if d1 < 16 || d2 < 16 {
        return Err(Error::invalid(format!(
            "phantom needs at least 16x16 pixels, got {d1}x{d2}"
        )));
    }
    let mut u = vec![0.0; d1 * d2];
    for c in 0..d2 {
        let x = -1.0 + (2 * c + 1) as f64 / d2 as f64;
        for r in 0..d1 {
            let y = 1.0 - (2 * r + 1) as f64 / d1 as f64;
            u[r + c * d1] = ellipse_sum(x, y);
        }
    }
    Ok(u)
}

/// Union of `n_lines` digital lines through DC at angles `lπ / n_lines`.
///
/// Lines are rasterised on the centred frequency grid (one sample per column
/// for lines closer to horizontal, one per row otherwise), then wrapped to
/// standard DFT order and returned as sorted column-major indices.
pub fn radial_mask(d1: usize, d2: usize, n_lines: usize) -> Result<Vec<usize>> {
    if n_lines == 0 || d1 == 0 || d2 == 0 {
        return Err(Error::invalid(
            "radial mask needs at least one line and a non-empty grid",
        ));
    }
    let (h1, h2) = ((d1 / 2) as i64, (d2 / 2) as i64);
    let (n1, n2) = (d1 as i64, d2 as i64);
    let mut hit = vec![false; d1 * d2];
    let mut mark = |r: i64, c: i64| {
        if (-h1..n1 - h1).contains(&r) && (-h2..n2 - h2).contains(&c) {
            let (kr, kc) = (r.rem_euclid(n1) as usize, c.rem_euclid(n2) as usize);
            hit[kr + kc * d1] = true;
        }
    };
    for l in 0..n_lines {
        let theta = std::f64::consts::PI * l as f64 / n_lines as f64;
        let (s, c) = theta.sin_cos();
        if c.abs() >= s.abs() {
            let slope = s / c * d1 as f64 / d2 as f64;
            for col in -h2..n2 - h2 {
                mark((col as f64 * slope).round() as i64, col);
            }
        } else {
            let slope = c / s * d2 as f64 / d1 as f64;
            for row in -h1..n1 - h1 {
                mark(row, (row as f64 * slope).round() as i64);
            }
        }
    }
    Ok(hit
        .iter()
        .enumerate()
        .filter_map(|(i, &h)| h.then_some(i))
        .collect())
}

/// How block 1 is initialised.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum X1Init {
    /// `x1⁰ = B Kᵀ b`.
    GradientOfBackprojection,
    Zero,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MriConfig {
    pub d1: usize,
    pub d2: usize,
    pub n_lines: usize,
    /// TV weight; also the radius of `S1`.
    pub mu: f64,
    /// `Λ` on the low-pass wavelet band.
    pub lambda_lowpass: f64,
    /// `Λ` on the three high-pass bands.
    pub lambda_highpass: f64,
    /// Step sizes for every family. When absent each family uses its
    /// published defaults, see [`default_alphas`].
    pub alphas: Option<Vec<f64>>,
    pub beta: f64,
    /// Data-misfit penalty in `ε1`.
    pub tau: f64,
    pub max_iter: usize,
    /// LADMM iterations used to estimate `F*`; `10 · max_iter` when absent.
    pub fstar_iters: Option<usize>,
    pub eps1_tols: Vec<f64>,
    pub eps2_tols: Vec<f64>,
    pub x1_init: X1Init,
    /// Peak intensity of the phantom; 255 gives an 8-bit range.
    pub intensity_scale: f64,
}

impl Default for MriConfig {
    fn default() -> Self {
        MriConfig {
            d1: 64,
            d2: 64,
            n_lines: 9,
            mu: 3.0,
            lambda_lowpass: 0.0,
            lambda_highpass: 0.5,
            alphas: None,
            beta: 1.0,
            tau: 1000.0,
            max_iter: 3000,
            fstar_iters: None,
            eps1_tols: vec![1e-4, 1e-5, 1e-6],
            eps2_tols: vec![5e-5, 5e-6, 5e-7],
            x1_init: X1Init::GradientOfBackprojection,
            intensity_scale: 255.0,
        }
    }
}

impl MriConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.mu > 0.0) {
            return Err(Error::invalid("mu must be positive"));
        }
        if !(self.lambda_lowpass >= 0.0 && self.lambda_highpass >= 0.0) {
            return Err(Error::invalid("lambda values must be nonnegative"));
        }
        if !(self.beta > 0.0) || !(self.tau >= 0.0) {
            return Err(Error::invalid("beta must be positive and tau nonnegative"));
        }
        if let Some(a) = &self.alphas {
            if a.len() != 3 || a.iter().any(|v| !(*v > 0.0)) {
                return Err(Error::invalid("alphas must be three positive numbers"));
            }
        }
        if !(self.intensity_scale > 0.0) {
            return Err(Error::invalid("intensity_scale must be positive"));
        }
        if self.max_iter == 0 {
            return Err(Error::invalid("max_iter must be positive"));
        }
        Ok(())
    }

    pub fn fstar_iterations(&self) -> usize {
        self.fstar_iters.unwrap_or(10 * self.max_iter)
    }
}

/// Everything derived from an [`MriConfig`]: operators, phantom, mask, data
/// and the assembled dual problem.
#[derive(Debug)]
pub struct MriInstance {
    pub cfg: MriConfig,
    pub tv: Arc<TotalVariation>,
    pub haar: Arc<UndecimatedHaar>,
    pub fourier: Arc<PartialFourier>,
    pub phantom: Vec<f64>,
    pub b: Vec<f64>,
    pub problem: BlockProblem,
    /// Measured `‖B‖², ‖W‖², ‖K‖²`.
    pub norms_sq: [f64; 3],
    lambdas: Vec<f64>,
}

/// Radii of `S2`: `lambda_lowpass` on the first `d` entries, `lambda_highpass`
/// on the rest.
pub fn wavelet_weights(cfg: &MriConfig) -> Vec<f64> {
    let d = cfg.d1 * cfg.d2;
    let mut w = vec![cfg.lambda_lowpass; d];
    w.resize(4 * d, cfg.lambda_highpass);
    w
}

/// The three-block dual problem for data `b` sampled on `mask`.
pub fn build_dual_problem(cfg: &MriConfig, mask: &[usize], b: &[f64]) -> Result<BlockProblem> {
    let tv = make_tv_operator(cfg.d1, cfg.d2)?;
    let haar = make_haar_undecimated(cfg.d1, cfg.d2)?;
    let fourier = make_partial_fourier(cfg.d1, cfg.d2, mask)?;
    assemble(cfg, Arc::new(tv), Arc::new(haar), Arc::new(fourier), b)
}

fn assemble(
    cfg: &MriConfig,
    tv: OperatorRef,
    haar: OperatorRef,
    fourier: OperatorRef,
    b: &[f64],
) -> Result<BlockProblem> {
    cfg.validate()?;
    if b.len() != fourier.rows() {
        return Err(Error::DimensionMismatch {
            what: "measured data",
            expected: fourier.rows(),
            got: b.len(),
        });
    }
    let d = cfg.d1 * cfg.d2;
    let f1: Arc<dyn ProxFunction> = Arc::new(GroupL2Ball::new(d, cfg.mu)?);
    let f2: Arc<dyn ProxFunction> = Arc::new(BoxIndicator::new(wavelet_weights(cfg))?);
    let f3: Arc<dyn ProxFunction> = Arc::new(LinearFunctional::new(b.to_vec())?);
    let blocks = vec![
        Block::new(f1, Arc::new(Transposed(tv))),
        Block::new(f2, Arc::new(Transposed(haar))),
        Block::new(f3, Arc::new(Transposed(fourier))),
    ];
    BlockProblem::new(blocks, vec![0.0; d])
}

impl MriInstance {
    /// Phantom, radial mask and noiseless samples `b = K u★`.
    pub fn new(cfg: MriConfig) -> Result<Self> {
        cfg.validate()?;
        let phantom: Vec<f64> = shepp_logan(cfg.d1, cfg.d2)?
            .into_iter()
            .map(|v| v * cfg.intensity_scale)
            .collect();
        let mask = radial_mask(cfg.d1, cfg.d2, cfg.n_lines)?;
        let fourier = make_partial_fourier(cfg.d1, cfg.d2, &mask)?;
        let b = fourier.forward(&phantom);
        Self::with_data(cfg, phantom, &mask, b)
    }

    /// Use a given ground truth, mask and data instead of the defaults.
    pub fn with_data(
        cfg: MriConfig,
        phantom: Vec<f64>,
        mask: &[usize],
        b: Vec<f64>,
    ) -> Result<Self> {
        cfg.validate()?;
        let d = cfg.d1 * cfg.d2;
        if phantom.len() != d {
            return Err(Error::DimensionMismatch {
                what: "ground truth",
                expected: d,
                got: phantom.len(),
            });
        }
        let tv = Arc::new(make_tv_operator(cfg.d1, cfg.d2)?);
        let haar = Arc::new(make_haar_undecimated(cfg.d1, cfg.d2)?);
        let fourier = Arc::new(make_partial_fourier(cfg.d1, cfg.d2, mask)?);
        let problem = assemble(&cfg, tv.clone(), haar.clone(), fourier.clone(), &b)?;
        let ops: [&dyn LinearOperator; 3] = [tv.as_ref(), haar.as_ref(), fourier.as_ref()];
        let mut norms_sq = [0.0; 3];
        for (n, op) in norms_sq.iter_mut().zip(ops) {
            *n = op_norm_sq_est(op, NORM_TOL, NORM_MAX_ITER)?.value;
        }
        let problem = problem.with_block_norms_sq(&norms_sq)?;
        let lambdas = wavelet_weights(&cfg);
        Ok(MriInstance {
            cfg,
            tv,
            haar,
            fourier,
            phantom,
            b,
            problem,
            norms_sq,
            lambdas,
        })
    }

    pub fn d(&self) -> usize {
        self.cfg.d1 * self.cfg.d2
    }

    pub fn mask(&self) -> &[usize] {
        self.fourier.mask()
    }

    /// Fraction of the frequency grid that is sampled.
    pub fn sampling_ratio(&self) -> f64 {
        self.mask().len() as f64 / self.d() as f64
    }

    /// `F(u) = μ‖u‖_TV + ‖ΛWu‖₁`.
    pub fn objective(&self, u: &[f64]) -> Result<f64> {
        let tv = tv_value(&self.tv, u)?;
        let wu = self.haar.forward(u);
        let l1: f64 = wu.iter().zip(&self.lambdas).map(|(v, l)| l * v.abs()).sum();
        Ok(self.cfg.mu * tv + l1)
    }

    /// `F(u) + τ‖Ku − b‖`.
    pub fn penalized_objective(&self, u: &[f64]) -> Result<f64> {
        let misfit = dist(&self.fourier.forward(u), &self.b);
        Ok(self.objective(u)? + self.cfg.tau * misfit)
    }

    /// Starting point: `x1⁰` per [`X1Init`], everything else zero, no
    /// history.
    pub fn initial_state(&self) -> IterateState {
        let mut st = IterateState::zeros(&self.problem);
        if self.cfg.x1_init == X1Init::GradientOfBackprojection {
            let x1 = self.tv.forward(&self.fourier.adjoint(&self.b));
            let mut x = st.x().to_vec();
            x[0] = x1;
            st = IterateState::new(&self.problem, x, vec![0.0; self.d()])
                .expect("shapes come from the problem");
        }
        st
    }

    /// Step sizes for `family`: the configured override or the published
    /// defaults.
    pub fn alphas_for(&self, family: &Family) -> Vec<f64> {
        self.cfg
            .alphas
            .clone()
            .unwrap_or_else(|| default_alphas(family, &self.norms_sq))
    }

    pub fn spec_for(&self, family: &Family) -> AlgorithmSpec {
        AlgorithmSpec::new(family.clone(), self.alphas_for(family), self.cfg.beta)
    }
}

/// `1/8` for every block under the Jacobi scheme; otherwise
/// `(1/8, 0.999999/‖W‖², 0.999999/‖K‖²)`.
pub fn default_alphas(family: &Family, norms_sq: &[f64; 3]) -> Vec<f64> {
    if *family == Family::PdDualFirst {
        vec![0.125; 3]
    } else {
        vec![0.125, 0.999999 / norms_sq[1], 0.999999 / norms_sq[2]]
    }
}

/// Short label used in reports.
pub fn family_label(family: &Family) -> String {
    match family {
        Family::PdDualFirst => "JLADMM".into(),
        Family::LadmmDirect => "LADMM".into(),
        Family::TwoStepExplicit => "2SFPPA".into(),
        other => other.to_string(),
    }
}

/// `10 log₁₀(255 √d / ‖u − u★‖)` with `d = len(u)`; `+∞` when `u = u★`.
pub fn psnr(u: &[f64], u_star: &[f64]) -> Result<f64> {
    crate::error::check_len("image", u_star.len(), u.len())?;
    let err = dist(u, u_star);
    if err == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (255.0 * (u.len() as f64).sqrt() / err).log10())
}

/// `(F(u) + τ‖Ku − b‖ − F*) / F*`.
pub fn eps1(inst: &MriInstance, u: &[f64], f_star: f64) -> Result<f64> {
    if !(f_star > 0.0) {
        return Err(Error::invalid(format!("F* must be positive, got {f_star}")));
    }
    Ok((inst.penalized_objective(u)? - f_star) / f_star)
}

/// `‖y − y_prev‖ / ‖y‖`; `None` when `y = 0`.
pub fn eps2(y: &[f64], y_prev: &[f64]) -> Option<f64> {
    relative_change(y, y_prev)
}

/// Estimate `F*` as the penalised objective after `iters` LADMM iterations.
pub fn estimate_fstar(inst: &MriInstance, iters: usize) -> Result<f64> {
    let spec = inst.spec_for(&Family::LadmmDirect);
    let stop = StopCriteria {
        max_iter: iters,
        track_kkt: false,
        ..StopCriteria::default()
    };
    let out = solve(&inst.problem, &spec, inst.initial_state(), &stop, |_, _| {
        Control::Continue
    })?;
    let u: Vec<f64> = out.state.y().iter().map(|v| -v).collect();
    inst.penalized_objective(&u)
}

/// The explicit two-step sweep written out for this problem, step by step.
#[derive(Debug, Clone)]
pub struct Algorithm1<'a> {
    inst: &'a MriInstance,
    alphas: [f64; 3],
    beta: f64,
    pub x1: Vec<f64>,
    pub x2: Vec<f64>,
    pub x3: Vec<f64>,
    pub x2_prev: Vec<f64>,
    pub x3_prev: Vec<f64>,
    pub y: Vec<f64>,
    pub y_prev: Vec<f64>,
    pub k: usize,
}

impl<'a> Algorithm1<'a> {
    pub fn new(inst: &'a MriInstance, alphas: [f64; 3], beta: f64) -> Self {
        let st = inst.initial_state();
        let (p, m) = (inst.fourier.rows(), inst.d());
        Algorithm1 {
            inst,
            alphas,
            beta,
            x1: st.x()[0].clone(),
            x2: vec![0.0; 4 * m],
            x3: vec![0.0; p],
            x2_prev: vec![0.0; 4 * m],
            x3_prev: vec![0.0; p],
            y: vec![0.0; m],
            y_prev: vec![0.0; m],
            k: 0,
        }
    }

    pub fn step(&mut self) {
        let inst = self.inst;
        let (b_op, w_op, k_op) = (&inst.tv, &inst.haar, &inst.fourier);
        let [a1, a2, a3] = self.alphas;
        let beta = self.beta;
        let ext = |cur: &[f64], prev: &[f64]| -> Vec<f64> {
            cur.iter().zip(prev).map(|(c, p)| 2.0 * c - p).collect()
        };
        let y_scaled: Vec<f64> = self.y.iter().map(|v| v / beta).collect();

        let bt_x1 = b_op.adjoint(&self.x1);
        let wt_x2 = w_op.adjoint(&self.x2);
        let wt_ext = w_op.adjoint(&ext(&self.x2, &self.x2_prev));
        let kt_x3 = k_op.adjoint(&self.x3);
        let kt_ext = k_op.adjoint(&ext(&self.x3, &self.x3_prev));

        // step 1
        let r: Vec<f64> = (0..bt_x1.len())
            .map(|i| bt_x1[i] + wt_ext[i] + kt_ext[i] + y_scaled[i])
            .collect();
        let g = b_op.forward(&r);
        let arg: Vec<f64> = self.x1.iter().zip(&g).map(|(x, g)| x - a1 * g).collect();
        let x1 = inst.problem.block(0).f.prox(&arg, a1 / beta);
        let bt_x1_new = b_op.adjoint(&x1);

        // step 2
        let r: Vec<f64> = (0..r.len())
            .map(|i| bt_x1_new[i] + wt_x2[i] + kt_ext[i] + y_scaled[i])
            .collect();
        let g = w_op.forward(&r);
        let arg: Vec<f64> = self.x2.iter().zip(&g).map(|(x, g)| x - a2 * g).collect();
        let x2 = inst.problem.block(1).f.prox(&arg, a2 / beta);
        let wt_x2_new = w_op.adjoint(&x2);

        // step 3
        let r: Vec<f64> = (0..r.len())
            .map(|i| bt_x1_new[i] + wt_x2_new[i] + kt_x3[i] + y_scaled[i])
            .collect();
        let g = k_op.forward(&r);
        let x3: Vec<f64> = self
            .x3
            .iter()
            .zip(&g)
            .zip(&inst.b)
            .map(|((x, g), b)| x - a3 * g - a3 / beta * b)
            .collect();
        let kt_x3_new = k_op.adjoint(&x3);

        // step 4
        let y: Vec<f64> = (0..self.y.len())
            .map(|i| self.y[i] + beta * (bt_x1_new[i] + wt_x2_new[i] + kt_x3_new[i]))
            .collect();

        self.x1 = x1;
        self.x2_prev = std::mem::replace(&mut self.x2, x2);
        self.x3_prev = std::mem::replace(&mut self.x3, x3);
        self.y_prev = std::mem::replace(&mut self.y, y);
        self.k += 1;
    }

    /// Current image `u = −y`.
    pub fn image(&self) -> Vec<f64> {
        self.y.iter().map(|v| -v).collect()
    }
}

/// Run the explicit sweep for `max_iter` iterations, recording `ε2`, PSNR and
/// the objective. Returns `u = −y` and the trace.
pub fn algorithm1_run(
    inst: &MriInstance,
    alphas: [f64; 3],
    beta: f64,
    max_iter: usize,
) -> Result<(Vec<f64>, RunTrace)> {
    let mut alg = Algorithm1::new(inst, alphas, beta);
    let mut trace = RunTrace::default();
    let start = Instant::now();
    for _ in 0..max_iter {
        alg.step();
        let u = alg.image();
        trace.records.push(IterRecord {
            k: alg.k,
            objective: inst.objective(&u)?,
            eps2: eps2(&alg.y, &alg.y_prev),
            psnr: Some(psnr(&u, &inst.phantom)?),
            seconds: start.elapsed().as_secs_f64(),
            ..IterRecord::default()
        });
    }
    Ok((alg.image(), trace))
}

/// One family's run inside [`benchmark`].
#[derive(Debug, Clone, Serialize)]
pub struct FamilyRun {
    pub family: Family,
    pub label: String,
    pub alphas: Vec<f64>,
    #[serde(skip)]
    pub trace: RunTrace,
    #[serde(skip)]
    pub image: Vec<f64>,
    pub iterations: usize,
    pub final_eps1: Option<f64>,
    pub final_psnr: Option<f64>,
    pub feasibility: f64,
}

/// First iteration at which a metric falls below a tolerance.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TableEntry {
    pub family: String,
    pub epsilon: f64,
    pub iterations: Option<usize>,
    pub psnr_db: Option<f64>,
    pub seconds: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct BenchmarkReport {
    pub f_star: f64,
    pub sampling_ratio: f64,
    pub runs: Vec<FamilyRun>,
    /// Keyed on `ε1`.
    pub eps1_table: Vec<TableEntry>,
    /// Keyed on `ε2`.
    pub eps2_table: Vec<TableEntry>,
}

impl BenchmarkReport {
    pub fn entry(&self, eps1: bool, family: &str, epsilon: f64) -> Option<&TableEntry> {
        let table = if eps1 {
            &self.eps1_table
        } else {
            &self.eps2_table
        };
        table
            .iter()
            .find(|e| e.family == family && e.epsilon == epsilon)
    }
}

/// Run one family from the standard start, filling `ε1`, `ε2` and PSNR into
/// the trace. Stops at `max_iter` or once every tolerance has been met.
pub fn run_family(
    inst: &MriInstance,
    family: &Family,
    f_star: f64,
    max_iter: usize,
) -> Result<FamilyRun> {
    let spec = inst.spec_for(family);
    let min1 = inst
        .cfg
        .eps1_tols
        .iter()
        .cloned()
        .fold(f64::INFINITY, f64::min);
    let min2 = inst
        .cfg
        .eps2_tols
        .iter()
        .cloned()
        .fold(f64::INFINITY, f64::min);
    let (mut hit1, mut hit2) = (false, false);
    let mut failure = None;
    let stop = StopCriteria {
        max_iter,
        track_kkt: false,
        ..StopCriteria::default()
    };
    let out = solve(
        &inst.problem,
        &spec,
        inst.initial_state(),
        &stop,
        |st, rec| {
            let u: Vec<f64> = st.y().iter().map(|v| -v).collect();
            match (eps1(inst, &u, f_star), psnr(&u, &inst.phantom)) {
                (Ok(e1), Ok(p)) => {
                    rec.eps1 = Some(e1);
                    rec.psnr = Some(p);
                    hit1 |= e1 < min1;
                    hit2 |= rec.eps2.is_some_and(|e| e < min2);
                }
                (Err(e), _) | (_, Err(e)) => {
                    failure = Some(e);
                    return Control::Stop;
                }
            }
            if hit1 && hit2 {
                Control::Stop
            } else {
                Control::Continue
            }
        },
    )?;
    if let Some(e) = failure {
        return Err(e);
    }
    let image: Vec<f64> = out.state.y().iter().map(|v| -v).collect();
    let last = out.trace.last().cloned().unwrap_or_default();
    Ok(FamilyRun {
        family: family.clone(),
        label: family_label(family),
        alphas: spec.alphas,
        iterations: out.state.k(),
        final_eps1: last.eps1,
        final_psnr: last.psnr,
        feasibility: norm(&inst.problem.constraint_residual(out.state.x())),
        trace: out.trace,
        image,
    })
}

/// First record where `metric < eps`.
pub fn first_below(
    trace: &RunTrace,
    label: &str,
    eps: f64,
    metric: impl Fn(&IterRecord) -> Option<f64>,
) -> TableEntry {
    let hit = trace
        .records
        .iter()
        .find(|r| metric(r).is_some_and(|v| v < eps));
    TableEntry {
        family: label.to_string(),
        epsilon: eps,
        iterations: hit.map(|r| r.k),
        psnr_db: hit.and_then(|r| r.psnr),
        seconds: hit.map(|r| r.seconds),
    }
}

/// Compare families at the configured tolerances. Runs may execute
/// concurrently; each run is sequential in its own right.
pub fn benchmark(inst: &MriInstance, families: &[Family], f_star: f64) -> Result<BenchmarkReport> {
    let max_iter = inst.cfg.max_iter;
    let runs: Vec<FamilyRun> = map_ordered(families.to_vec(), |f| {
        run_family(inst, &f, f_star, max_iter)
    })
    .into_iter()
    .collect::<Result<_>>()?;
    let mut eps1_table = Vec::new();
    let mut eps2_table = Vec::new();
    for run in &runs {
        for &eps in &inst.cfg.eps1_tols {
            eps1_table.push(first_below(&run.trace, &run.label, eps, |r| r.eps1));
        }
        for &eps in &inst.cfg.eps2_tols {
            eps2_table.push(first_below(&run.trace, &run.label, eps, |r| r.eps2));
        }
    }
    Ok(BenchmarkReport {
        f_star,
        sampling_ratio: inst.sampling_ratio(),
        runs,
        eps1_table,
        eps2_table,
    })
}

/// CSV with header `family,epsilon,iterations,psnr_db,seconds`. Misses are
/// written as `-`; `seconds` is blanked when `with_seconds` is false.
pub fn write_table_csv<W: Write>(table: &[TableEntry], mut w: W, with_seconds: bool) -> Result<()> {
    writeln!(w, "family,epsilon,iterations,psnr_db,seconds")?;
    for e in table {
        let dash = || "-".to_string();
        let it = e.iterations.map(|v| v.to_string()).unwrap_or_else(dash);
        let ps = e.psnr_db.map(|v| format!("{v:.4}")).unwrap_or_else(dash);
        let sec = match (e.seconds, with_seconds) {
            (Some(s), true) => format!("{s:.3}"),
            (Some(_), false) => String::new(),
            (None, _) => dash(),
        };
        writeln!(w, "{},{:e},{},{},{}", e.family, e.epsilon, it, ps, sec)?;
    }
    Ok(())
}

/// Per-iteration plot data: `k,eps1,eps2,psnr,objective,seconds`.
pub fn write_metrics_csv<W: Write>(trace: &RunTrace, mut w: W, with_seconds: bool) -> Result<()> {
    writeln!(w, "k,eps1,eps2,psnr,objective,seconds")?;
    let o = |v: Option<f64>| v.map(|v| format!("{v:e}")).unwrap_or_default();
    for r in &trace.records {
        let sec = if with_seconds {
            format!("{:.6}", r.seconds)
        } else {
            String::new()
        };
        writeln!(
            w,
            "{},{},{},{},{:e},{}",
            r.k,
            o(r.eps1),
            o(r.eps2),
            o(r.psnr),
            r.objective,
            sec
        )?;
    }
    Ok(())
}

/// Binary 8-bit PGM, rows top to bottom. Intensities are clamped to
/// `[0, white]` and scaled to `0..=255`.
pub fn write_pgm<W: Write>(u: &[f64], d1: usize, d2: usize, white: f64, mut w: W) -> Result<()> {
    crate::error::check_len("image", d1 * d2, u.len())?;
    if !(white > 0.0) {
        return Err(Error::invalid("white level must be positive"));
    }
    write!(w, "P5\n{d2} {d1}\n255\n")?;
    let mut buf = Vec::with_capacity(d1 * d2);
    for r in 0..d1 {
        for c in 0..d2 {
            buf.push((u[r + c * d1].clamp(0.0, white) / white * 255.0).round() as u8);
        }
    }
    w.write_all(&buf)?;
    Ok(())
}

/// Image as `d1` lines of `d2` comma-separated values.
pub fn write_image_csv<W: Write>(u: &[f64], d1: usize, d2: usize, mut w: W) -> Result<()> {
    crate::error::check_len("image", d1 * d2, u.len())?;
    for r in 0..d1 {
        let row: Vec<String> = (0..d2).map(|c| format!("{:e}", u[r + c * d1])).collect();
        writeln!(w, "{}", row.join(","))?;
    }
    Ok(())
}

/// One index per line, ascending.
pub fn write_mask<W: Write>(mask: &[usize], mut w: W) -> Result<()> {
    for i in mask {
        writeln!(w, "{i}")?;
    }
    Ok(())
}

pub fn read_mask(path: &Path) -> Result<Vec<usize>> {
    let f = fs::File::open(path)?;
    let mut out = Vec::new();
    for line in BufReader::new(f).lines() {
        let line = line?;
        let t = line.trim();
        if t.is_empty() {
            continue;
        }
        out.push(
            t.parse()
                .map_err(|_| Error::invalid(format!("bad mask entry {t:?}")))?,
        );
    }
    Ok(out)
}

/// Difference between the recovered image and the ground truth.
pub fn error_image(inst: &MriInstance, u: &[f64]) -> Vec<f64> {
    sub(u, &inst.phantom)
}
