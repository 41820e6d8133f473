//! Linear operators for the forward model `H = G ∘ Kπ`.
//!
//! Both factors are zero-padded "same" convolutions on a length-`n` grid, so
//! `H` is square and its adjoint is the matching pair of correlations.

use std::sync::Arc;

use crate::error::{check_len, Error, Result};
use crate::sigmodel::SampledKernel;

/// A real linear map with an explicit adjoint.
pub trait LinearOperator: Send + Sync {
    fn dim_in(&self) -> usize;
    fn dim_out(&self) -> usize;

    /// `out = A x`. `out` is overwritten.
    fn apply_into(&self, x: &[f64], out: &mut [f64]);

    /// `out = Aᵀ y`. `out` is overwritten.
    fn apply_adjoint_into(&self, y: &[f64], out: &mut [f64]);

    fn apply(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim_out()];
        self.apply_into(x, &mut out);
        out
    }

    fn apply_adjoint(&self, y: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim_in()];
        self.apply_adjoint_into(y, &mut out);
        out
    }

    /// `out = AᵀA x`.
    fn apply_gram_into(&self, x: &[f64], out: &mut [f64]) {
        let ax = self.apply(x);
        self.apply_adjoint_into(&ax, out);
    }
}

impl<T: LinearOperator + ?Sized> LinearOperator for Arc<T> {
    fn dim_in(&self) -> usize {
        (**self).dim_in()
    }
    fn dim_out(&self) -> usize {
        (**self).dim_out()
    }
    fn apply_into(&self, x: &[f64], out: &mut [f64]) {
        (**self).apply_into(x, out)
    }
    fn apply_adjoint_into(&self, y: &[f64], out: &mut [f64]) {
        (**self).apply_adjoint_into(y, out)
    }
    fn apply_gram_into(&self, x: &[f64], out: &mut [f64]) {
        (**self).apply_gram_into(x, out)
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Identity on `R^n`.
#[derive(Debug, Clone, Copy)]
pub struct Identity(pub usize);

impl LinearOperator for Identity {
    fn dim_in(&self) -> usize {
        self.0
    }
    fn dim_out(&self) -> usize {
        self.0
    }
    fn apply_into(&self, x: &[f64], out: &mut [f64]) {
        out.copy_from_slice(x);
    }
    fn apply_adjoint_into(&self, y: &[f64], out: &mut [f64]) {
        out.copy_from_slice(y);
    }
}

/// Diagonal scaling.
#[derive(Debug, Clone)]
pub struct Diagonal(pub Vec<f64>);

impl LinearOperator for Diagonal {
    fn dim_in(&self) -> usize {
        self.0.len()
    }
    fn dim_out(&self) -> usize {
        self.0.len()
    }
    fn apply_into(&self, x: &[f64], out: &mut [f64]) {
        for ((o, d), v) in out.iter_mut().zip(&self.0).zip(x) {
            *o = d * v;
        }
    }
    fn apply_adjoint_into(&self, y: &[f64], out: &mut [f64]) {
        self.apply_into(y, out)
    }
}

/// Zero-padded "same" convolution with a short filter.
///
/// Tap `k` sits at relative position `offset + k`, so a unit impulse at index
/// `j` produces `taps[k]` at index `j + offset + k`.
#[derive(Debug, Clone, PartialEq)]
pub struct Conv1d {
    n: usize,
    taps: Vec<f64>,
    offset: isize,
}

impl Conv1d {
    pub fn new(n: usize, taps: Vec<f64>, offset: isize) -> Self {
        Self { n, taps, offset }
    }

    pub fn taps(&self) -> &[f64] {
        &self.taps
    }

    pub fn offset(&self) -> isize {
        self.offset
    }

    /// Output index range `[lo, hi)` touched by tap `k`, and its source shift.
    #[inline]
    fn span(&self, k: usize) -> (isize, usize, usize) {
        let shift = self.offset + k as isize;
        let n = self.n as isize;
        let lo = shift.max(0).min(n) as usize;
        let hi = (n + shift).clamp(0, n) as usize;
        (shift, lo, hi)
    }
}

impl LinearOperator for Conv1d {
    fn dim_in(&self) -> usize {
        self.n
    }
    fn dim_out(&self) -> usize {
        self.n
    }

    fn apply_into(&self, x: &[f64], out: &mut [f64]) {
        out.fill(0.0);
        for (k, &t) in self.taps.iter().enumerate() {
            if t == 0.0 {
                continue;
            }
            let (shift, lo, hi) = self.span(k);
            if lo >= hi {
                continue;
            }
            let src = &x[(lo as isize - shift) as usize..(hi as isize - shift) as usize];
            for (o, s) in out[lo..hi].iter_mut().zip(src) {
                *o += t * s;
            }
        }
    }

    fn apply_adjoint_into(&self, y: &[f64], out: &mut [f64]) {
        out.fill(0.0);
        for (k, &t) in self.taps.iter().enumerate() {
            if t == 0.0 {
                continue;
            }
            let (shift, lo, hi) = self.span(k);
            if lo >= hi {
                continue;
            }
            let dst = &mut out[(lo as isize - shift) as usize..(hi as isize - shift) as usize];
            for (o, s) in dst.iter_mut().zip(&y[lo..hi]) {
                *o += t * s;
            }
        }
    }
}

/// Unit-sum Gaussian blur taps of width `sigma` on the integer grid, with
/// radius `ceil(4 sigma)`.
pub fn gaussian_blur_taps(sigma: f64) -> Result<(Vec<f64>, isize)> {
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(Error::spec(format!("blur width must be positive, got {sigma}")));
    }
    let radius = (4.0 * sigma).ceil().max(1.0) as isize;
    let mut taps: Vec<f64> = (-radius..=radius)
        .map(|k| (-(k as f64).powi(2) / (2.0 * sigma * sigma)).exp())
        .collect();
    let total: f64 = taps.iter().sum();
    taps.iter_mut().for_each(|t| *t /= total);
    Ok((taps, -radius))
}

pub fn gaussian_blur(n: usize, sigma: f64) -> Result<Conv1d> {
    let (taps, offset) = gaussian_blur_taps(sigma)?;
    Ok(Conv1d::new(n, taps, offset))
}

/// `H = G ∘ Kπ` acting on spike vectors, with a cached spectral norm.
#[derive(Debug, Clone)]
pub struct ForwardModel {
    kernel: SampledKernel,
    sigma_g: f64,
    peak: Conv1d,
    blur: Conv1d,
    norm: f64,
}

pub const NORM_TOL: f64 = 1e-8;
pub const NORM_MAX_ITER: usize = 5000;

impl ForwardModel {
    pub fn new(kernel: SampledKernel, sigma_g: f64, n: usize) -> Result<Self> {
        let peak = Conv1d::new(n, kernel.taps.clone(), kernel.offset);
        let blur = gaussian_blur(n, sigma_g)?;
        Self::from_parts(kernel, sigma_g, peak, blur)
    }

    /// Builds the model from explicit convolutions (used for identity blurs
    /// and tests).
    pub fn from_parts(kernel: SampledKernel, sigma_g: f64, peak: Conv1d, blur: Conv1d) -> Result<Self> {
        check_len(peak.n, blur.n)?;
        let mut model = Self {
            kernel,
            sigma_g,
            peak,
            blur,
            norm: 0.0,
        };
        model.norm = estimate_operator_norm(&model, NORM_TOL, NORM_MAX_ITER)?;
        Ok(model)
    }

    pub fn n(&self) -> usize {
        self.peak.n
    }

    pub fn kernel(&self) -> &SampledKernel {
        &self.kernel
    }

    pub fn sigma_g(&self) -> f64 {
        self.sigma_g
    }

    pub fn peak_conv(&self) -> &Conv1d {
        &self.peak
    }

    pub fn blur(&self) -> &Conv1d {
        &self.blur
    }

    /// Cached estimate of `‖H‖₂`.
    pub fn norm(&self) -> f64 {
        self.norm
    }

    /// Restored peak signal `Kπ x`.
    pub fn peak_signal(&self, x: &[f64]) -> Vec<f64> {
        self.peak.apply(x)
    }
}

impl LinearOperator for ForwardModel {
    fn dim_in(&self) -> usize {
        self.n()
    }
    fn dim_out(&self) -> usize {
        self.n()
    }
    fn apply_into(&self, x: &[f64], out: &mut [f64]) {
        let mut tmp = vec![0.0; self.n()];
        self.peak.apply_into(x, &mut tmp);
        self.blur.apply_into(&tmp, out);
    }
    fn apply_adjoint_into(&self, y: &[f64], out: &mut [f64]) {
        let mut tmp = vec![0.0; self.n()];
        self.blur.apply_adjoint_into(y, &mut tmp);
        self.peak.apply_adjoint_into(&tmp, out);
    }
    fn apply_gram_into(&self, x: &[f64], out: &mut [f64]) {
        let mut a = vec![0.0; self.n()];
        let mut b = vec![0.0; self.n()];
        self.peak.apply_into(x, &mut a);
        self.blur.apply_into(&a, &mut b);
        self.blur.apply_adjoint_into(&b, &mut a);
        self.peak.apply_adjoint_into(&a, out);
    }
}

/// Spectral norm of `op` by power iteration on `AᵀA`.
///
/// Iterates the Rayleigh quotient until successive eigenvalue estimates
/// differ by less than `tol` (relative) and returns its square root.
pub fn estimate_operator_norm(op: &dyn LinearOperator, tol: f64, max_iter: usize) -> Result<f64> {
    let n = op.dim_in();
    if n == 0 {
        return Ok(0.0);
    }
    // deterministic start with a little variation so it is never orthogonal
    // to a sign-alternating dominant vector
    let mut v: Vec<f64> = (0..n).map(|i| 1.0 + ((i * 7919) % 13) as f64 / 50.0).collect();
    let s = norm2(&v);
    v.iter_mut().for_each(|e| *e /= s);

    let mut w = vec![0.0; n];
    let mut lambda = 0.0;
    for it in 0..max_iter {
        op.apply_gram_into(&v, &mut w);
        let next = dot(&v, &w);
        let wn = norm2(&w);
        if wn == 0.0 {
            return Ok(0.0);
        }
        if it > 0 && (next - lambda).abs() <= tol * next.abs() {
            return Ok(next.max(0.0).sqrt());
        }
        lambda = next;
        for (a, b) in v.iter_mut().zip(&w) {
            *a = b / wn;
        }
    }
    Err(Error::NonConvergence {
        iterations: max_iter,
        last_estimate: lambda.max(0.0).sqrt(),
    })
}
