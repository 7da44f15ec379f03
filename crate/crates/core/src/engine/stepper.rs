use super::{AlgorithmSpec, BlockProblem, Family, InnerSolverConfig, IterateState};
use crate::error::Result;
use crate::prox::ProxFunction;
use crate::vecops::{axpy, dist};

/// Bookkeeping from one sweep.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct StepInfo {
    pub inner_iterations: usize,
    /// Implicit block solves that hit `max_inner` before reaching `inner_tol`.
    pub inner_unconverged: usize,
}

#[derive(Debug, Clone, Copy)]
enum Diag {
    Implicit,
    /// `A_j (c x_j^k + d x_j^{k−1})` enters the block's own residual.
    Explicit(f64, f64),
}

/// Coefficients of a Gauss-Seidel sweep:
/// prox centre `c0 x_j^k + c1 x_j^{k−1}`, earlier blocks through
/// `l0 A_i x_i^{k+1} + l1 A_i x_i^k`, later blocks through
/// `u0 A_i x_i^k + u1 A_i x_i^{k−1}`.
#[derive(Debug, Clone)]
struct Sweep {
    center: (f64, f64),
    lower: (f64, f64),
    upper: (f64, f64),
    diag: Vec<Diag>,
}

#[derive(Debug, Clone)]
enum Kind {
    PrimalFirst,
    DualFirst,
    Sweep(Sweep),
}

fn plan(family: &Family, s: usize) -> Kind {
    let diag_of = |j: usize| {
        if family.block_is_implicit(j) {
            Diag::Implicit
        } else {
            Diag::Explicit(1.0, 0.0)
        }
    };
    let base = Sweep {
        center: (1.0, 0.0),
        lower: (1.0, 0.0),
        upper: (2.0, -1.0),
        diag: (0..s).map(diag_of).collect(),
    };
    match family {
        Family::PdPrimalFirst => Kind::PrimalFirst,
        Family::PdDualFirst => Kind::DualFirst,
        Family::TwoStepImplicit | Family::TwoStepExplicit | Family::Hybrid { .. } => {
            Kind::Sweep(base)
        }
        Family::LadmmDirect => Kind::Sweep(Sweep {
            upper: (1.0, 0.0),
            ..base
        }),
        Family::DiagRelaxed { theta } => Kind::Sweep(Sweep {
            center: (1.0 + theta, -theta),
            ..base
        }),
        Family::DiagExplicit => Kind::Sweep(Sweep {
            diag: vec![Diag::Explicit(2.0, -1.0); s],
            ..base
        }),
        Family::OffDiag { theta, .. } => Kind::Sweep(Sweep {
            lower: (1.0 + theta, -theta),
            upper: (2.0 + theta, -(1.0 + theta)),
            ..base
        }),
    }
}

/// Matrix-free sweeps for one (problem, spec) pair.
#[derive(Debug)]
pub struct Stepper<'a> {
    problem: &'a BlockProblem,
    spec: &'a AlgorithmSpec,
    kind: Kind,
    work: Vec<f64>,
}

impl<'a> Stepper<'a> {
    pub fn new(problem: &'a BlockProblem, spec: &'a AlgorithmSpec) -> Result<Self> {
        spec.validate(problem.s())?;
        Ok(Stepper {
            problem,
            spec,
            kind: plan(&spec.family, problem.s()),
            work: vec![0.0; problem.m()],
        })
    }

    /// Advance `state` by one iteration.
    pub fn advance(&mut self, state: &mut IterateState) -> StepInfo {
        state.ensure_images(self.problem);
        let (new_x, new_y, new_ax, info) = match &self.kind {
            Kind::PrimalFirst => self.primal_first(state),
            Kind::DualFirst => self.dual_first(state),
            Kind::Sweep(sw) => {
                let sw = sw.clone();
                self.sweep(&sw, state)
            }
        };
        state.prev_x = std::mem::replace(&mut state.x, new_x);
        state.prev_y = std::mem::replace(&mut state.y, new_y);
        state.prev_ax = state.ax.replace(new_ax);
        state.k += 1;
        info
    }

    fn prox_step(&self, j: usize) -> f64 {
        self.spec.alphas[j] / self.spec.beta
    }

    fn primal_first(
        &mut self,
        st: &IterateState,
    ) -> (Vec<Vec<f64>>, Vec<f64>, Vec<Vec<f64>>, StepInfo) {
        let p = self.problem;
        let beta = self.spec.beta;
        let ax = st.ax.as_ref().unwrap();
        let mut new_x = Vec::with_capacity(p.s());
        let mut new_ax = Vec::with_capacity(p.s());
        for (j, blk) in p.blocks().iter().enumerate() {
            let g = blk.a.adjoint(&st.y);
            let gamma = self.prox_step(j);
            let arg: Vec<f64> = st.x[j].iter().zip(&g).map(|(x, g)| x - gamma * g).collect();
            let xj = blk.f.prox(&arg, gamma);
            new_ax.push(blk.a.forward(&xj));
            new_x.push(xj);
        }
        let mut y = st.y.clone();
        axpy(-beta, p.rhs(), &mut y);
        for (na, a) in new_ax.iter().zip(ax) {
            for ((yi, n), o) in y.iter_mut().zip(na).zip(a) {
                *yi += beta * (2.0 * n - o);
            }
        }
        (new_x, y, new_ax, StepInfo::default())
    }

    fn dual_first(
        &mut self,
        st: &IterateState,
    ) -> (Vec<Vec<f64>>, Vec<f64>, Vec<Vec<f64>>, StepInfo) {
        let p = self.problem;
        let beta = self.spec.beta;
        let ax = st.ax.as_ref().unwrap();
        let mut r: Vec<f64> = p.rhs().iter().map(|v| -v).collect();
        for a in ax {
            axpy(1.0, a, &mut r);
        }
        let mut y = st.y.clone();
        axpy(beta, &r, &mut y);
        let z: Vec<f64> = y.iter().zip(&st.y).map(|(n, o)| 2.0 * n - o).collect();
        let mut new_x = Vec::with_capacity(p.s());
        let mut new_ax = Vec::with_capacity(p.s());
        for (j, blk) in p.blocks().iter().enumerate() {
            let g = blk.a.adjoint(&z);
            let gamma = self.prox_step(j);
            let arg: Vec<f64> = st.x[j].iter().zip(&g).map(|(x, g)| x - gamma * g).collect();
            let xj = blk.f.prox(&arg, gamma);
            new_ax.push(blk.a.forward(&xj));
            new_x.push(xj);
        }
        (new_x, y, new_ax, StepInfo::default())
    }

    fn sweep(
        &mut self,
        sw: &Sweep,
        st: &IterateState,
    ) -> (Vec<Vec<f64>>, Vec<f64>, Vec<Vec<f64>>, StepInfo) {
        let p = self.problem;
        let beta = self.spec.beta;
        let ax = st.ax.as_ref().unwrap();
        let pax = st.prev_ax.as_ref().unwrap();
        let s = p.s();
        let mut info = StepInfo::default();
        let mut new_x: Vec<Vec<f64>> = Vec::with_capacity(s);
        let mut new_ax: Vec<Vec<f64>> = Vec::with_capacity(s);
        for j in 0..s {
            let blk = p.block(j);
            let alpha = self.spec.alphas[j];
            let w = &mut self.work;
            for (wi, (yi, bi)) in w.iter_mut().zip(st.y.iter().zip(p.rhs())) {
                *wi = yi / beta - bi;
            }
            for i in 0..j {
                combine(w, sw.lower, &new_ax[i], &ax[i]);
            }
            if let Diag::Explicit(c, d) = sw.diag[j] {
                combine(w, (c, d), &ax[j], &pax[j]);
            }
            for i in j + 1..s {
                combine(w, sw.upper, &ax[i], &pax[i]);
            }
            let g = blk.a.adjoint(w);
            let (c0, c1) = sw.center;
            let arg: Vec<f64> = st.x[j]
                .iter()
                .zip(&st.prev_x[j])
                .zip(&g)
                .map(|((x, xp), g)| c0 * x + c1 * xp - alpha * g)
                .collect();
            let xj = match sw.diag[j] {
                Diag::Explicit(..) => blk.f.prox(&arg, alpha / beta),
                Diag::Implicit => {
                    let a = &blk.a;
                    let mut tmp = vec![0.0; p.m()];
                    let (xj, its, ok) = inner_prox_gradient(
                        blk.f.as_ref(),
                        |u, out| {
                            a.forward_into(u, &mut tmp);
                            a.adjoint_into(&tmp, out);
                        },
                        &arg,
                        &st.x[j],
                        alpha,
                        beta,
                        p.block_norm_sq(j),
                        &self.spec.inner,
                    );
                    info.inner_iterations += its;
                    info.inner_unconverged += usize::from(!ok);
                    xj
                }
            };
            new_ax.push(blk.a.forward(&xj));
            new_x.push(xj);
        }
        let mut y = st.y.clone();
        axpy(-beta, p.rhs(), &mut y);
        for a in &new_ax {
            axpy(beta, a, &mut y);
        }
        (new_x, y, new_ax, info)
    }
}

/// `w += c a + d b`
fn combine(w: &mut [f64], (c, d): (f64, f64), a: &[f64], b: &[f64]) {
    for ((wi, ai), bi) in w.iter_mut().zip(a).zip(b) {
        *wi += c * ai + d * bi;
    }
}

/// Solve `x = prox_{(α/β) f}(r − α AᵀA x)` by proximal gradient on
/// `f(x) + (β/2α)‖x − r‖² + (β/2)‖Ax‖²`, starting from `x0`.
///
/// Returns the iterate, the number of inner steps and whether `inner_tol`
/// was reached.
#[allow(clippy::too_many_arguments)]
pub(crate) fn inner_prox_gradient<G>(
    f: &dyn ProxFunction,
    mut gram: G,
    r: &[f64],
    x0: &[f64],
    alpha: f64,
    beta: f64,
    norm_sq: f64,
    cfg: &InnerSolverConfig,
) -> (Vec<f64>, usize, bool)
where
    G: FnMut(&[f64], &mut [f64]),
{
    let t = 1.0 / (beta * norm_sq + beta / alpha);
    let mut x = x0.to_vec();
    let mut ata = vec![0.0; x.len()];
    let mut z = vec![0.0; x.len()];
    let mut next = vec![0.0; x.len()];
    for it in 1..=cfg.max_inner {
        gram(&x, &mut ata);
        for i in 0..x.len() {
            let grad = beta / alpha * (x[i] - r[i]) + beta * ata[i];
            z[i] = x[i] - t * grad;
        }
        f.prox_into(&z, t, &mut next);
        let delta = dist(&next, &x);
        std::mem::swap(&mut x, &mut next);
        if delta <= cfg.inner_tol {
            return (x, it, true);
        }
    }
    (x, cfg.max_inner, false)
}

/// One iteration of `spec` on `state`.
pub fn step(
    problem: &BlockProblem,
    spec: &AlgorithmSpec,
    state: &mut IterateState,
) -> Result<StepInfo> {
    let mut stepper = Stepper::new(problem, spec)?;
    state.check(problem)?;
    Ok(stepper.advance(state))
}
