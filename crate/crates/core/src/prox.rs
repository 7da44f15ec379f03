//! Proximity operators and projections.
//!
//! `prox_{γf}(u) = argmin_x ½‖x − u‖² + γ f(x)`. Indicator functions report
//! `0` inside their set and `f64::INFINITY` outside.

use std::fmt;

use crate::error::{check_len, Error, Result};
use crate::linops::{LinearOperator, TotalVariation};

/// Relative slack used when deciding membership for indicator values.
const MEMBERSHIP_TOL: f64 = 1e-9;

pub trait ProxFunction: Send + Sync + fmt::Debug {
    fn dim(&self) -> usize;
    fn label(&self) -> String;
    /// Write `prox_{γ f}(u)` into `out`.
    fn prox_into(&self, u: &[f64], gamma: f64, out: &mut [f64]);
    fn value(&self, x: &[f64]) -> f64;

    fn prox(&self, u: &[f64], gamma: f64) -> Vec<f64> {
        let mut out = vec![0.0; u.len()];
        self.prox_into(u, gamma, &mut out);
        out
    }
}

fn check_gamma(gamma: f64) -> Result<()> {
    if gamma > 0.0 && gamma.is_finite() {
        Ok(())
    } else {
        Err(Error::invalid(format!(
            "prox step must be positive, got {gamma}"
        )))
    }
}

fn soft(u: f64, t: f64) -> f64 {
    if u > t {
        u - t
    } else if u < -t {
        u + t
    } else {
        0.0
    }
}

fn clamp_radius(v: f64, r: f64) -> f64 {
    if r == 0.0 {
        0.0
    } else {
        v.clamp(-r, r)
    }
}

/// Componentwise soft threshold at `γ w_j`.
pub fn prox_weighted_l1(u: &[f64], gamma: f64, weights: &[f64]) -> Result<Vec<f64>> {
    check_gamma(gamma)?;
    check_len("weights", u.len(), weights.len())?;
    if weights.iter().any(|&w| !(w >= 0.0)) {
        return Err(Error::invalid("weights must be nonnegative"));
    }
    Ok(u.iter()
        .zip(weights)
        .map(|(&x, &w)| soft(x, gamma * w))
        .collect())
}

/// Project every pair `(y_i, y_{d+i})` onto the disk of radius `mu`.
pub fn project_group_l2_ball(y: &[f64], mu: f64, d: usize) -> Result<Vec<f64>> {
    if !(mu > 0.0) {
        return Err(Error::invalid(format!(
            "ball radius must be positive, got {mu}"
        )));
    }
    check_len("paired vector", 2 * d, y.len())?;
    let mut out = y.to_vec();
    project_pairs(&mut out, mu);
    Ok(out)
}

fn project_pairs(y: &mut [f64], mu: f64) {
    let d = y.len() / 2;
    let (a, b) = y.split_at_mut(d);
    for (p, q) in a.iter_mut().zip(b.iter_mut()) {
        let n = p.hypot(*q);
        if n > mu {
            let s = mu / n;
            *p *= s;
            *q *= s;
        }
    }
}

/// Clamp `y_j` to `[-r_j, r_j]`; zero radii give exactly zero.
pub fn project_box(y: &[f64], radii: &[f64]) -> Result<Vec<f64>> {
    check_len("radii", y.len(), radii.len())?;
    if radii.iter().any(|&r| !(r >= 0.0)) {
        return Err(Error::invalid("box radii must be nonnegative"));
    }
    Ok(y.iter()
        .zip(radii)
        .map(|(&v, &r)| clamp_radius(v, r))
        .collect())
}

/// `y − γ b`, the prox of `γ ⟨b, ·⟩`.
pub fn prox_linear_shift(y: &[f64], gamma: f64, b: &[f64]) -> Result<Vec<f64>> {
    check_gamma(gamma)?;
    check_len("shift", y.len(), b.len())?;
    Ok(y.iter().zip(b).map(|(v, bi)| v - gamma * bi).collect())
}

/// `Σ_i ‖(y_i, y_{d+i})‖`.
pub fn group_l2_value(y: &[f64]) -> Result<f64> {
    if !y.len().is_multiple_of(2) {
        return Err(Error::invalid(format!(
            "paired vector must have even length, got {}",
            y.len()
        )));
    }
    let d = y.len() / 2;
    Ok(y[..d].iter().zip(&y[d..]).map(|(p, q)| p.hypot(*q)).sum())
}

/// Isotropic total variation `ψ(B u)`.
pub fn tv_value(b: &TotalVariation, u: &[f64]) -> Result<f64> {
    check_len("image", b.cols(), u.len())?;
    group_l2_value(&b.forward(u))
}

/// `x ↦ Σ w_j |x_j|`.
#[derive(Debug, Clone)]
pub struct WeightedL1 {
    weights: Vec<f64>,
}

impl WeightedL1 {
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() || weights.iter().any(|&w| !(w >= 0.0)) {
            return Err(Error::invalid("weights must be nonempty and nonnegative"));
        }
        Ok(WeightedL1 { weights })
    }

    pub fn uniform(n: usize, w: f64) -> Result<Self> {
        Self::new(vec![w; n])
    }
}

impl ProxFunction for WeightedL1 {
    fn dim(&self) -> usize {
        self.weights.len()
    }
    fn label(&self) -> String {
        "weighted_l1".into()
    }
    fn prox_into(&self, u: &[f64], gamma: f64, out: &mut [f64]) {
        for ((o, &x), &w) in out.iter_mut().zip(u).zip(&self.weights) {
            *o = soft(x, gamma * w);
        }
    }
    fn value(&self, x: &[f64]) -> f64 {
        x.iter().zip(&self.weights).map(|(v, w)| w * v.abs()).sum()
    }
}

/// Indicator of `{y ∈ R^{2d} : ‖(y_i, y_{d+i})‖ ≤ μ for all i}`.
#[derive(Debug, Clone)]
pub struct GroupL2Ball {
    d: usize,
    mu: f64,
}

impl GroupL2Ball {
    pub fn new(d: usize, mu: f64) -> Result<Self> {
        if d == 0 || !(mu > 0.0) {
            return Err(Error::invalid("group ball needs d > 0 and mu > 0"));
        }
        Ok(GroupL2Ball { d, mu })
    }

    pub fn radius(&self) -> f64 {
        self.mu
    }
}

impl ProxFunction for GroupL2Ball {
    fn dim(&self) -> usize {
        2 * self.d
    }
    fn label(&self) -> String {
        format!("ball_pairs(mu={})", self.mu)
    }
    fn prox_into(&self, u: &[f64], _gamma: f64, out: &mut [f64]) {
        out.copy_from_slice(u);
        project_pairs(out, self.mu);
    }
    fn value(&self, x: &[f64]) -> f64 {
        let lim = self.mu * (1.0 + MEMBERSHIP_TOL);
        let d = self.d;
        if x[..d].iter().zip(&x[d..]).all(|(p, q)| p.hypot(*q) <= lim) {
            0.0
        } else {
            f64::INFINITY
        }
    }
}

/// Indicator of the box `{|y_j| ≤ r_j}`.
#[derive(Debug, Clone)]
pub struct BoxIndicator {
    radii: Vec<f64>,
}

impl BoxIndicator {
    pub fn new(radii: Vec<f64>) -> Result<Self> {
        if radii.is_empty() || radii.iter().any(|&r| !(r >= 0.0)) {
            return Err(Error::invalid("box radii must be nonempty and nonnegative"));
        }
        Ok(BoxIndicator { radii })
    }

    pub fn radii(&self) -> &[f64] {
        &self.radii
    }
}

impl ProxFunction for BoxIndicator {
    fn dim(&self) -> usize {
        self.radii.len()
    }
    fn label(&self) -> String {
        "box".into()
    }
    fn prox_into(&self, u: &[f64], _gamma: f64, out: &mut [f64]) {
        for ((o, &v), &r) in out.iter_mut().zip(u).zip(&self.radii) {
            *o = clamp_radius(v, r);
        }
    }
    fn value(&self, x: &[f64]) -> f64 {
        let inside = x
            .iter()
            .zip(&self.radii)
            .all(|(v, r)| v.abs() <= r + MEMBERSHIP_TOL * (1.0 + r));
        if inside {
            0.0
        } else {
            f64::INFINITY
        }
    }
}

/// `x ↦ ⟨c, x⟩`.
#[derive(Debug, Clone)]
pub struct LinearFunctional {
    c: Vec<f64>,
}

impl LinearFunctional {
    pub fn new(c: Vec<f64>) -> Result<Self> {
        if c.is_empty() {
            return Err(Error::invalid("linear functional needs a nonempty vector"));
        }
        Ok(LinearFunctional { c })
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.c
    }
}

impl ProxFunction for LinearFunctional {
    fn dim(&self) -> usize {
        self.c.len()
    }
    fn label(&self) -> String {
        "linear".into()
    }
    fn prox_into(&self, u: &[f64], gamma: f64, out: &mut [f64]) {
        for ((o, &v), &c) in out.iter_mut().zip(u).zip(&self.c) {
            *o = v - gamma * c;
        }
    }
    fn value(&self, x: &[f64]) -> f64 {
        x.iter().zip(&self.c).map(|(a, b)| a * b).sum()
    }
}

/// Indicator of a single point.
#[derive(Debug, Clone)]
pub struct PointIndicator {
    point: Vec<f64>,
}

impl PointIndicator {
    pub fn new(point: Vec<f64>) -> Result<Self> {
        if point.is_empty() {
            return Err(Error::invalid("point indicator needs a nonempty point"));
        }
        Ok(PointIndicator { point })
    }
}

impl ProxFunction for PointIndicator {
    fn dim(&self) -> usize {
        self.point.len()
    }
    fn label(&self) -> String {
        "point".into()
    }
    fn prox_into(&self, _u: &[f64], _gamma: f64, out: &mut [f64]) {
        out.copy_from_slice(&self.point);
    }
    fn value(&self, x: &[f64]) -> f64 {
        let same = x
            .iter()
            .zip(&self.point)
            .all(|(a, b)| (a - b).abs() <= MEMBERSHIP_TOL * (1.0 + b.abs()));
        if same {
            0.0
        } else {
            f64::INFINITY
        }
    }
}

#[derive(Debug, Clone)]
pub struct Zero {
    n: usize,
}

impl Zero {
    pub fn new(n: usize) -> Self {
        Zero { n }
    }
}

impl ProxFunction for Zero {
    fn dim(&self) -> usize {
        self.n
    }
    fn label(&self) -> String {
        "zero".into()
    }
    fn prox_into(&self, u: &[f64], _gamma: f64, out: &mut [f64]) {
        out.copy_from_slice(u);
    }
    fn value(&self, _x: &[f64]) -> f64 {
        0.0
    }
}
