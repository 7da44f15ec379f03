//! Single-level undecimated 2-D Haar transform with periodic boundary.
//!
//! Filters are `(u_r + u_{r-1}) / 2` and `(u_r - u_{r-1}) / 2` along each
//! axis. Output blocks are ordered LL, LH, HL, HH where the first letter is
//! the vertical (within-column) filter and the second the horizontal one.

use super::LinearOperator;
use crate::error::{Error, Result};
use crate::parallel::for_each_chunk_mut;

#[derive(Debug, Clone)]
pub struct UndecimatedHaar {
    d1: usize,
    d2: usize,
}

pub fn make_haar_undecimated(d1: usize, d2: usize) -> Result<UndecimatedHaar> {
    if d1 < 2 || d2 < 2 || !d1.is_multiple_of(2) || !d2.is_multiple_of(2) {
        return Err(Error::invalid(format!(
            "undecimated Haar needs even dimensions, got {d1}x{d2}"
        )));
    }
    Ok(UndecimatedHaar { d1, d2 })
}

impl UndecimatedHaar {
    pub fn dims(&self) -> (usize, usize) {
        (self.d1, self.d2)
    }

    fn vertical(&self, u: &[f64], sign: f64, out: &mut [f64]) {
        let d1 = self.d1;
        for_each_chunk_mut(out, d1, |c, col| {
            let uc = &u[c * d1..(c + 1) * d1];
            col[0] = 0.5 * (uc[0] + sign * uc[d1 - 1]);
            for r in 1..d1 {
                col[r] = 0.5 * (uc[r] + sign * uc[r - 1]);
            }
        });
    }

    fn vertical_t(&self, w: &[f64], sign: f64, out: &mut [f64]) {
        let d1 = self.d1;
        for_each_chunk_mut(out, d1, |c, col| {
            let wc = &w[c * d1..(c + 1) * d1];
            for r in 0..d1 - 1 {
                col[r] += 0.5 * (wc[r] + sign * wc[r + 1]);
            }
            col[d1 - 1] += 0.5 * (wc[d1 - 1] + sign * wc[0]);
        });
    }

    fn horizontal(&self, u: &[f64], sign: f64, out: &mut [f64]) {
        let (d1, d2) = (self.d1, self.d2);
        for_each_chunk_mut(out, d1, |c, col| {
            let p = if c == 0 { d2 - 1 } else { c - 1 };
            let uc = &u[c * d1..(c + 1) * d1];
            let up = &u[p * d1..(p + 1) * d1];
            for r in 0..d1 {
                col[r] = 0.5 * (uc[r] + sign * up[r]);
            }
        });
    }

    fn horizontal_t(&self, w: &[f64], sign: f64, out: &mut [f64]) {
        let (d1, d2) = (self.d1, self.d2);
        for_each_chunk_mut(out, d1, |c, col| {
            let nx = if c + 1 == d2 { 0 } else { c + 1 };
            let wc = &w[c * d1..(c + 1) * d1];
            let wn = &w[nx * d1..(nx + 1) * d1];
            for r in 0..d1 {
                col[r] += 0.5 * (wc[r] + sign * wn[r]);
            }
        });
    }
}

impl LinearOperator for UndecimatedHaar {
    fn rows(&self) -> usize {
        4 * self.d1 * self.d2
    }
    fn cols(&self) -> usize {
        self.d1 * self.d2
    }
    fn label(&self) -> String {
        format!("W_{}x{}", self.d1, self.d2)
    }

    fn forward_into(&self, u: &[f64], out: &mut [f64]) {
        let d = self.cols();
        let mut lo = vec![0.0; d];
        let mut hi = vec![0.0; d];
        self.vertical(u, 1.0, &mut lo);
        self.vertical(u, -1.0, &mut hi);
        let (ll, rest) = out.split_at_mut(d);
        let (lh, rest) = rest.split_at_mut(d);
        let (hl, hh) = rest.split_at_mut(d);
        self.horizontal(&lo, 1.0, ll);
        self.horizontal(&lo, -1.0, lh);
        self.horizontal(&hi, 1.0, hl);
        self.horizontal(&hi, -1.0, hh);
    }

    fn adjoint_into(&self, w: &[f64], out: &mut [f64]) {
        let d = self.cols();
        let mut lo = vec![0.0; d];
        let mut hi = vec![0.0; d];
        self.horizontal_t(&w[..d], 1.0, &mut lo);
        self.horizontal_t(&w[d..2 * d], -1.0, &mut lo);
        self.horizontal_t(&w[2 * d..3 * d], 1.0, &mut hi);
        self.horizontal_t(&w[3 * d..], -1.0, &mut hi);
        out.fill(0.0);
        self.vertical_t(&lo, 1.0, out);
        self.vertical_t(&hi, -1.0, out);
    }
}
