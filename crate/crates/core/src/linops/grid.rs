//! Periodic finite differences on vectors and column-major images.

use super::LinearOperator;
use crate::error::{Error, Result};
use crate::parallel::for_each_chunk_mut;

/// Circulant first difference `(Du)_i = u_i - u_{i-1}` with `u_{-1} = u_{r-1}`.
#[derive(Debug, Clone)]
pub struct Difference {
    r: usize,
}

pub fn make_difference_matrix(r: usize) -> Result<Difference> {
    if r < 2 {
        return Err(Error::invalid(format!(
            "difference operator needs r >= 2, got {r}"
        )));
    }
    Ok(Difference { r })
}

impl LinearOperator for Difference {
    fn rows(&self) -> usize {
        self.r
    }
    fn cols(&self) -> usize {
        self.r
    }
    fn label(&self) -> String {
        format!("D_{}", self.r)
    }
    fn forward_into(&self, u: &[f64], out: &mut [f64]) {
        let r = self.r;
        out[0] = u[0] - u[r - 1];
        for i in 1..r {
            out[i] = u[i] - u[i - 1];
        }
    }
    fn adjoint_into(&self, w: &[f64], out: &mut [f64]) {
        let r = self.r;
        for i in 0..r - 1 {
            out[i] = w[i] - w[i + 1];
        }
        out[r - 1] = w[r - 1] - w[0];
    }
}

/// Discrete gradient of a `d1 x d2` image: vertical differences (within each
/// column) stacked on top of horizontal differences, both periodic.
#[derive(Debug, Clone)]
pub struct TotalVariation {
    d1: usize,
    d2: usize,
}

pub fn make_tv_operator(d1: usize, d2: usize) -> Result<TotalVariation> {
    if d1 < 2 || d2 < 2 {
        return Err(Error::invalid(format!(
            "TV operator needs d1, d2 >= 2, got {d1}x{d2}"
        )));
    }
    Ok(TotalVariation { d1, d2 })
}

impl TotalVariation {
    pub fn dims(&self) -> (usize, usize) {
        (self.d1, self.d2)
    }
}

impl LinearOperator for TotalVariation {
    fn rows(&self) -> usize {
        2 * self.d1 * self.d2
    }
    fn cols(&self) -> usize {
        self.d1 * self.d2
    }
    fn label(&self) -> String {
        format!("B_{}x{}", self.d1, self.d2)
    }

    fn forward_into(&self, u: &[f64], out: &mut [f64]) {
        let (d1, d2) = (self.d1, self.d2);
        let d = d1 * d2;
        let (vert, horiz) = out.split_at_mut(d);
        for_each_chunk_mut(vert, d1, |c, col| {
            let uc = &u[c * d1..(c + 1) * d1];
            col[0] = uc[0] - uc[d1 - 1];
            for r in 1..d1 {
                col[r] = uc[r] - uc[r - 1];
            }
        });
        for_each_chunk_mut(horiz, d1, |c, col| {
            let prev = if c == 0 { d2 - 1 } else { c - 1 };
            let uc = &u[c * d1..(c + 1) * d1];
            let up = &u[prev * d1..(prev + 1) * d1];
            for r in 0..d1 {
                col[r] = uc[r] - up[r];
            }
        });
    }

    fn adjoint_into(&self, w: &[f64], out: &mut [f64]) {
        let (d1, d2) = (self.d1, self.d2);
        let d = d1 * d2;
        let (wv, wh) = w.split_at(d);
        for_each_chunk_mut(out, d1, |c, col| {
            let next = if c + 1 == d2 { 0 } else { c + 1 };
            let vc = &wv[c * d1..(c + 1) * d1];
            let hc = &wh[c * d1..(c + 1) * d1];
            let hn = &wh[next * d1..(next + 1) * d1];
            for r in 0..d1 - 1 {
                col[r] = vc[r] - vc[r + 1];
            }
            col[d1 - 1] = vc[d1 - 1] - vc[0];
            for r in 0..d1 {
                col[r] += hc[r] - hn[r];
            }
        });
    }
}
