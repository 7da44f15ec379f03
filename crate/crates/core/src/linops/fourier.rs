//! Undersampled orthonormal 2-D DFT with real-valued output.

use std::fmt;
use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use super::LinearOperator;
use crate::error::{Error, Result};
use crate::parallel::for_each_chunk_mut;

/// Columns transformed per work item.
const COLS_PER_TASK: usize = 16;

/// `K u = P F u` where `F` is the orthonormal 2-D DFT and `P` keeps the
/// frequencies in the mask. The complex samples are returned as all real
/// parts followed by all imaginary parts, so `rows = 2 |mask|`.
///
/// Mask entries are column-major indices `kr + kc * d1` in standard DFT
/// order (DC at 0). They are stored sorted, which fixes the row order.
pub struct PartialFourier {
    d1: usize,
    d2: usize,
    mask: Vec<usize>,
    fwd1: Arc<dyn Fft<f64>>,
    fwd2: Arc<dyn Fft<f64>>,
    inv1: Arc<dyn Fft<f64>>,
    inv2: Arc<dyn Fft<f64>>,
}

impl fmt::Debug for PartialFourier {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("PartialFourier")
            .field("d1", &self.d1)
            .field("d2", &self.d2)
            .field("samples", &self.mask.len())
            .finish()
    }
}

pub fn make_partial_fourier(d1: usize, d2: usize, mask: &[usize]) -> Result<PartialFourier> {
    if d1 == 0 || d2 == 0 {
        return Err(Error::invalid("partial Fourier needs positive dimensions"));
    }
    if mask.is_empty() {
        return Err(Error::invalid("partial Fourier mask is empty"));
    }
    let d = d1 * d2;
    let mut sorted = mask.to_vec();
    sorted.sort_unstable();
    if let Some(&bad) = sorted.iter().find(|&&i| i >= d) {
        return Err(Error::invalid(format!(
            "mask index {bad} out of range for a {d1}x{d2} grid"
        )));
    }
    if sorted.windows(2).any(|w| w[0] == w[1]) {
        return Err(Error::invalid("mask contains duplicate indices"));
    }
    let mut planner = FftPlanner::new();
    Ok(PartialFourier {
        d1,
        d2,
        mask: sorted,
        fwd1: planner.plan_fft_forward(d1),
        fwd2: planner.plan_fft_forward(d2),
        inv1: planner.plan_fft_inverse(d1),
        inv2: planner.plan_fft_inverse(d2),
    })
}

impl PartialFourier {
    pub fn dims(&self) -> (usize, usize) {
        (self.d1, self.d2)
    }

    pub fn mask(&self) -> &[usize] {
        &self.mask
    }

    /// Unnormalised 2-D transform of a column-major complex image, in place.
    fn transform(&self, buf: &mut [Complex64], inverse: bool) {
        let (d1, d2) = (self.d1, self.d2);
        let (f1, f2) = if inverse {
            (&self.inv1, &self.inv2)
        } else {
            (&self.fwd1, &self.fwd2)
        };
        run_batched(f1.as_ref(), buf, d1);
        let mut t = vec![Complex64::new(0.0, 0.0); buf.len()];
        transpose(buf, &mut t, d1, d2);
        run_batched(f2.as_ref(), &mut t, d2);
        transpose(&t, buf, d2, d1);
    }
}

fn run_batched(fft: &dyn Fft<f64>, buf: &mut [Complex64], len: usize) {
    let scratch_len = fft.get_inplace_scratch_len();
    for_each_chunk_mut(buf, len * COLS_PER_TASK, |_, chunk| {
        let mut scratch = vec![Complex64::new(0.0, 0.0); scratch_len];
        fft.process_with_scratch(chunk, &mut scratch);
    });
}

/// `src` is `rows x cols` column-major; `dst` receives the `cols x rows`
/// transpose, also column-major.
fn transpose(src: &[Complex64], dst: &mut [Complex64], rows: usize, cols: usize) {
    for_each_chunk_mut(dst, cols, |r, chunk| {
        for (c, v) in chunk.iter_mut().enumerate() {
            *v = src[r + c * rows];
        }
    });
}

impl LinearOperator for PartialFourier {
    fn rows(&self) -> usize {
        2 * self.mask.len()
    }
    fn cols(&self) -> usize {
        self.d1 * self.d2
    }
    fn label(&self) -> String {
        format!("K_{}x{}[{}]", self.d1, self.d2, self.mask.len())
    }

    fn forward_into(&self, u: &[f64], out: &mut [f64]) {
        let mut buf: Vec<Complex64> = u.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        self.transform(&mut buf, false);
        let s = 1.0 / (self.cols() as f64).sqrt();
        let p = self.mask.len();
        let (re, im) = out.split_at_mut(p);
        for (t, &idx) in self.mask.iter().enumerate() {
            re[t] = buf[idx].re * s;
            im[t] = buf[idx].im * s;
        }
    }

    fn adjoint_into(&self, w: &[f64], out: &mut [f64]) {
        let p = self.mask.len();
        let mut buf = vec![Complex64::new(0.0, 0.0); self.cols()];
        for (t, &idx) in self.mask.iter().enumerate() {
            buf[idx] = Complex64::new(w[t], w[p + t]);
        }
        self.transform(&mut buf, true);
        let s = 1.0 / (self.cols() as f64).sqrt();
        for (o, z) in out.iter_mut().zip(&buf) {
            *o = z.re * s;
        }
    }
}
