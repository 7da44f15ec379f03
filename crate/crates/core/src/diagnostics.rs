//! Run traces and empirical convergence-rate checks.
//!
//! With `a^k = ‖v^{k+1} − v^k‖²`, a convergent two-step iteration has
//! `Σ_{i≤k} a^i` bounded (so the running mean decays like `1/k`) and
//! `k · min_{i≤k} a^i → 0`. The partial primal-dual gap of the ergodic mean
//! decays like `1/K`.

use std::io::Write;

use serde::Serialize;

use crate::engine::{BlockProblem, IterateState};
use crate::error::{check_len, Error, Result};
use crate::vecops::{dot, norm};

/// Shortest trace [`rate_report`] accepts.
pub const MIN_RATE_LEN: usize = 100;
/// Slope of `c_k = Σ_{i≤k} a^i` over the last decade still counted as bounded.
pub const BOUNDED_SLOPE: f64 = 0.1;
/// Step norms at or below this fraction of the largest one are roundoff: the
/// iteration has stopped moving to machine precision.
pub const ROUNDOFF_FLOOR: f64 = 1e-28;
/// Gap values below this are treated as numerical noise around zero.
pub const GAP_NOISE: f64 = 1e-8;

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct IterRecord {
    pub k: usize,
    pub step_norm_sq: f64,
    pub kkt: Option<f64>,
    pub objective: f64,
    pub eps1: Option<f64>,
    pub eps2: Option<f64>,
    pub psnr: Option<f64>,
    pub seconds: f64,
    pub inner_iterations: usize,
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct RunTrace {
    pub records: Vec<IterRecord>,
    /// Implicit block solves that stopped at the inner iteration cap.
    pub inner_unconverged: usize,
}

fn opt(v: Option<f64>) -> String {
    v.map(fmt_f64).unwrap_or_default()
}

fn fmt_f64(v: f64) -> String {
    if v.is_infinite() {
        if v > 0.0 {
            "inf".into()
        } else {
            "-inf".into()
        }
    } else {
        format!("{v:e}")
    }
}

impl RunTrace {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn last(&self) -> Option<&IterRecord> {
        self.records.last()
    }

    pub fn step_norms(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.step_norm_sq).collect()
    }

    /// CSV with one row per iteration. `with_seconds = false` drops the only
    /// column that varies between identical runs.
    pub fn write_csv<W: Write>(&self, mut w: W, with_seconds: bool) -> Result<()> {
        let mut header = "k,step_norm_sq,kkt,objective,eps1,eps2,psnr".to_string();
        if with_seconds {
            header.push_str(",seconds");
        }
        writeln!(w, "{header}")?;
        for r in &self.records {
            write!(
                w,
                "{},{},{},{},{},{},{}",
                r.k,
                fmt_f64(r.step_norm_sq),
                opt(r.kkt),
                fmt_f64(r.objective),
                opt(r.eps1),
                opt(r.eps2),
                opt(r.psnr)
            )?;
            if with_seconds {
                write!(w, ",{:.6}", r.seconds)?;
            }
            writeln!(w)?;
        }
        Ok(())
    }
}

/// `v̄_K = (v^2 + … + v^{K+1}) / K` from a history starting at `v^0`.
pub fn ergodic_average(history: &[Vec<f64>]) -> Result<Vec<f64>> {
    if history.len() < 3 {
        return Err(Error::InsufficientHistory(format!(
            "the ergodic mean needs v^0, v^1 and at least v^2; got {} iterates",
            history.len()
        )));
    }
    let mut acc = ErgodicMean::new(history[0].len());
    for v in &history[2..] {
        acc.push(v)?;
    }
    Ok(acc.mean().unwrap())
}

/// Streaming arithmetic mean, for histories too long to keep.
#[derive(Debug, Clone)]
pub struct ErgodicMean {
    sum: Vec<f64>,
    count: usize,
}

impl ErgodicMean {
    pub fn new(dim: usize) -> Self {
        ErgodicMean {
            sum: vec![0.0; dim],
            count: 0,
        }
    }

    pub fn push(&mut self, v: &[f64]) -> Result<()> {
        check_len("iterate", self.sum.len(), v.len())?;
        for (s, x) in self.sum.iter_mut().zip(v) {
            *s += x;
        }
        self.count += 1;
        Ok(())
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn mean(&self) -> Option<Vec<f64>> {
        (self.count > 0).then(|| self.sum.iter().map(|s| s / self.count as f64).collect())
    }
}

/// Least-squares slope of `log y` against `log k` over `k ∈ [⌈K/10⌉, K]`,
/// skipping nonpositive values. `NaN` if fewer than two points remain.
pub fn last_decade_slope(ks: &[f64], ys: &[f64]) -> f64 {
    let Some(&kmax) = ks.last() else {
        return f64::NAN;
    };
    let pts: Vec<(f64, f64)> = ks
        .iter()
        .zip(ys)
        .filter(|(k, y)| **k >= kmax / 10.0 && **y > 0.0 && y.is_finite())
        .map(|(k, y)| (k.ln(), y.ln()))
        .collect();
    if pts.len() < 2 {
        return f64::NAN;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    if sxx == 0.0 {
        f64::NAN
    } else {
        sxy / sxx
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct RateReport {
    pub a: Vec<f64>,
    /// `(1/k) Σ_{i≤k} a^i`
    pub ergodic: Vec<f64>,
    /// `c_k = k · ergodic_k = Σ_{i≤k} a^i`
    pub cumulative: Vec<f64>,
    /// `k · min_{i≤k} a^i`
    pub runmin: Vec<f64>,
    pub ergodic_slope: f64,
    pub cumulative_slope: f64,
    pub runmin_slope: f64,
    /// `c_k` does not grow over the last decade.
    pub bounded: bool,
    /// `k · min a^i` decreases over the last decade, or the step norms have
    /// reached the roundoff floor.
    pub vanishing: bool,
}

/// Rate diagnostics for the step-norm sequence `a^1, a^2, …`.
pub fn rate_report(a: &[f64]) -> Result<RateReport> {
    if a.len() < MIN_RATE_LEN {
        return Err(Error::InsufficientHistory(format!(
            "rate report needs at least {MIN_RATE_LEN} iterations, got {}",
            a.len()
        )));
    }
    if a.iter().any(|v| !(*v >= 0.0)) {
        return Err(Error::invalid("step norms must be nonnegative"));
    }
    let mut ergodic = Vec::with_capacity(a.len());
    let mut cumulative = Vec::with_capacity(a.len());
    let mut runmin = Vec::with_capacity(a.len());
    let mut sum = 0.0;
    let mut min = f64::INFINITY;
    for (i, &v) in a.iter().enumerate() {
        let k = (i + 1) as f64;
        sum += v;
        min = min.min(v);
        cumulative.push(sum);
        ergodic.push(sum / k);
        runmin.push(k * min);
    }
    let ks: Vec<f64> = (1..=a.len()).map(|k| k as f64).collect();
    let ergodic_slope = last_decade_slope(&ks, &ergodic);
    let cumulative_slope = last_decade_slope(&ks, &cumulative);
    let runmin_slope = last_decade_slope(&ks, &runmin);
    let first = a.len() / 10;
    let c_last = *cumulative.last().unwrap();
    let no_growth = c_last - cumulative[first] <= 1e-12 * c_last.max(f64::MIN_POSITIVE);
    let bounded = no_growth || cumulative_slope <= BOUNDED_SLOPE;
    let r_last = *runmin.last().unwrap();
    let a_max = a.iter().cloned().fold(0.0, f64::max);
    let stalled = min <= ROUNDOFF_FLOOR * a_max;
    let vanishing = r_last == 0.0 || stalled || (runmin_slope < 0.0 && r_last < runmin[first]);
    Ok(RateReport {
        a: a.to_vec(),
        ergodic,
        cumulative,
        runmin,
        ergodic_slope,
        cumulative_slope,
        runmin_slope,
        bounded,
        vanishing,
    })
}

/// Reference point and optional dual ball for the partial gap.
#[derive(Debug, Clone)]
pub struct GapQuery {
    pub x_ref: Vec<Vec<f64>>,
    pub y_ref: Vec<f64>,
    /// Radius of the ball over which the dual side is maximised; `0` means
    /// the dual side is evaluated at `y_ref`.
    pub rho: f64,
    pub center: Vec<f64>,
}

impl GapQuery {
    pub fn at(x_ref: Vec<Vec<f64>>, y_ref: Vec<f64>) -> Self {
        let m = y_ref.len();
        GapQuery {
            x_ref,
            y_ref,
            rho: 0.0,
            center: vec![0.0; m],
        }
    }

    pub fn from_state(state: &IterateState) -> Self {
        Self::at(state.x().to_vec(), state.y().to_vec())
    }
}

/// `G(v, v') = Φ(v) − Φ(v') + ⟨v', S_A v⟩` with `Φ(v) = Σ f_i(x_i) + ⟨b, y⟩`,
/// i.e. `Σ f_i(x_i) − Σ f_i(x'_i) + ⟨y', Ax − b⟩ − ⟨y, Ax' − b⟩`.
///
/// With `rho > 0` the `y'` terms are replaced by their supremum over the
/// ball `‖y' − center‖ ≤ rho`, namely `⟨center, Ax − b⟩ + rho ‖Ax − b‖`.
/// Returns `+∞` when `Φ(v)` is infinite.
pub fn partial_gap(x: &[Vec<f64>], y: &[f64], q: &GapQuery, problem: &BlockProblem) -> Result<f64> {
    if x.len() != problem.s() || q.x_ref.len() != problem.s() {
        return Err(Error::invalid(
            "iterate and reference must have one entry per block",
        ));
    }
    check_len("dual iterate", problem.m(), y.len())?;
    check_len("dual reference", problem.m(), q.y_ref.len())?;
    if !(q.rho >= 0.0) {
        return Err(Error::invalid("dual ball radius must be nonnegative"));
    }
    let fx = problem.objective(x);
    if !fx.is_finite() {
        return Ok(f64::INFINITY);
    }
    let fref = problem.objective(&q.x_ref);
    let r = problem.constraint_residual(x);
    let r_ref = problem.constraint_residual(&q.x_ref);
    let dual = if q.rho > 0.0 {
        check_len("ball center", problem.m(), q.center.len())?;
        dot(&q.center, &r) + q.rho * norm(&r)
    } else {
        dot(&q.y_ref, &r)
    };
    Ok(fx - fref + dual - dot(y, &r_ref))
}

/// Gap of the ergodic mean against a fixed reference, sampled on a grid of `K`.
#[derive(Debug, Clone)]
pub struct GapTracker {
    sizes: Vec<usize>,
    mean: ErgodicMean,
    checkpoints: Vec<usize>,
    pub ks: Vec<usize>,
    pub gaps: Vec<f64>,
}

impl GapTracker {
    /// Checkpoints at roughly `per_decade` log-spaced values of `K` up to `max_k`.
    pub fn new(problem: &BlockProblem, max_k: usize, per_decade: usize) -> Self {
        let mut cps: Vec<usize> = Vec::new();
        let steps = ((max_k.max(1) as f64).log10() * per_decade as f64).ceil() as usize;
        for i in 0..=steps {
            let k = 10f64.powf(i as f64 / per_decade as f64).round() as usize;
            let k = k.clamp(1, max_k.max(1));
            if cps.last() != Some(&k) {
                cps.push(k);
            }
        }
        GapTracker {
            sizes: problem.sizes(),
            mean: ErgodicMean::new(problem.n() + problem.m()),
            checkpoints: cps,
            ks: Vec::new(),
            gaps: Vec::new(),
        }
    }

    /// Feed the state after each sweep (the first call supplies `v^2`).
    pub fn observe(
        &mut self,
        state: &IterateState,
        q: &GapQuery,
        problem: &BlockProblem,
    ) -> Result<()> {
        self.mean.push(&state.v())?;
        let k = self.mean.count();
        if self.checkpoints.binary_search(&k).is_ok() {
            let v = self.mean.mean().unwrap();
            let mut at = 0;
            let mut x = Vec::with_capacity(self.sizes.len());
            for &n in &self.sizes {
                x.push(v[at..at + n].to_vec());
                at += n;
            }
            let g = partial_gap(&x, &v[at..], q, problem)?;
            self.ks.push(k);
            self.gaps.push(g);
        }
        Ok(())
    }

    pub fn report(&self) -> GapRateReport {
        gap_rate_from(&self.ks, &self.gaps)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct GapRateReport {
    pub ks: Vec<usize>,
    pub gaps: Vec<f64>,
    /// Least-squares slope of `log G` against `log K` over the last decade.
    pub slope: f64,
    /// `K · G(v̄_K)` does not grow over the last decade.
    pub k_times_gap_bounded: bool,
    /// Some gap fell below `−GAP_NOISE`: the reference is not a saddle point.
    pub negative: bool,
}

fn gap_rate_from(ks: &[usize], gaps: &[f64]) -> GapRateReport {
    let kf: Vec<f64> = ks.iter().map(|&k| k as f64).collect();
    let slope = last_decade_slope(&kf, gaps);
    let kg: Vec<f64> = kf.iter().zip(gaps).map(|(k, g)| k * g.max(0.0)).collect();
    let k_times_gap_bounded = match kg.last() {
        None => false,
        Some(&last) => {
            let kmax = *kf.last().unwrap();
            let start = kf.iter().position(|&k| k >= kmax / 10.0).unwrap_or(0);
            last <= kg[start..].iter().cloned().fold(0.0, f64::max) * (1.0 + 1e-9) + GAP_NOISE
                && last <= kg[start] * 10.0 + GAP_NOISE
        }
    };
    GapRateReport {
        ks: ks.to_vec(),
        gaps: gaps.to_vec(),
        slope,
        k_times_gap_bounded,
        negative: gaps.iter().any(|g| *g < -GAP_NOISE),
    }
}

/// Gap of the ergodic means `v̄_K` of a stored history `v^0, v^1, …` against
/// the query reference, for every `K` in `ks`.
pub fn gap_rate_check(
    history: &[Vec<f64>],
    ks: &[usize],
    q: &GapQuery,
    problem: &BlockProblem,
) -> Result<GapRateReport> {
    let kmax = ks.iter().copied().max().unwrap_or(0);
    if kmax == 0 || history.len() < kmax + 2 {
        return Err(Error::InsufficientHistory(format!(
            "need v^0 .. v^{} for K up to {kmax}, got {} iterates",
            kmax + 1,
            history.len()
        )));
    }
    let sizes = problem.sizes();
    let mut mean = ErgodicMean::new(problem.n() + problem.m());
    let mut gaps = Vec::with_capacity(ks.len());
    let mut sorted = ks.to_vec();
    sorted.sort_unstable();
    sorted.dedup();
    let mut next = sorted.iter().peekable();
    for v in &history[2..kmax + 2] {
        mean.push(v)?;
        if next.peek() == Some(&&mean.count()) {
            next.next();
            let vbar = mean.mean().unwrap();
            let mut at = 0;
            let mut x = Vec::with_capacity(sizes.len());
            for &n in &sizes {
                x.push(vbar[at..at + n].to_vec());
                at += n;
            }
            gaps.push(partial_gap(&x, &vbar[at..], q, problem)?);
        }
    }
    Ok(gap_rate_from(&sorted, &gaps))
}

/// CSV columns `k, a_k, ergodic, runmin, gap` (gap only where sampled).
pub fn write_rate_csv<W: Write>(
    report: &RateReport,
    gap: Option<&GapRateReport>,
    mut w: W,
) -> Result<()> {
    writeln!(w, "k,a_k,ergodic,runmin,gap")?;
    for i in 0..report.a.len() {
        let k = i + 1;
        let g = gap
            .and_then(|g| g.ks.iter().position(|&kk| kk == k).map(|p| g.gaps[p]))
            .map(fmt_f64)
            .unwrap_or_default();
        writeln!(
            w,
            "{k},{},{},{},{g}",
            fmt_f64(report.a[i]),
            fmt_f64(report.ergodic[i]),
            fmt_f64(report.runmin[i])
        )?;
    }
    Ok(())
}
