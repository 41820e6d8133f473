use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Below this asymmetry the Gaussian limit is used directly.
pub const GAUSSIAN_LIMIT_A: f64 = 1e-8;
/// Hard cap on kernel half-width, in units of `sigma_f`.
pub const MAX_HALF_WIDTH_SIGMAS: f64 = 12.0;
pub const DEFAULT_TRUNC_EPS: f64 = 1e-4;

/// Fraser-Suzuki peak shape parameters on the integer sample grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    pub sigma_f: f64,
    pub a: f64,
    pub center: f64,
    pub trunc_eps: f64,
}

impl KernelSpec {
    pub fn new(sigma_f: f64, a: f64) -> Self {
        Self {
            sigma_f,
            a,
            center: 0.0,
            trunc_eps: DEFAULT_TRUNC_EPS,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma_f > 0.0 && self.sigma_f.is_finite()) {
            return Err(Error::spec(format!("sigma_f must be positive, got {}", self.sigma_f)));
        }
        if !(self.a >= 0.0 && self.a.is_finite()) {
            return Err(Error::spec(format!("asymmetry a must be >= 0, got {}", self.a)));
        }
        if !(self.trunc_eps > 0.0 && self.trunc_eps < 1.0) {
            return Err(Error::spec(format!("trunc_eps must lie in (0,1), got {}", self.trunc_eps)));
        }
        if !self.center.is_finite() {
            return Err(Error::spec("kernel center must be finite"));
        }
        Ok(())
    }

    /// Left end of the admissible domain, `m - sigma_f / a` (−∞ in the
    /// Gaussian limit).
    pub fn domain_start(&self) -> f64 {
        if self.a < GAUSSIAN_LIMIT_A {
            f64::NEG_INFINITY
        } else {
            self.center - self.sigma_f / self.a
        }
    }

    /// Unnormalized shape value at `x`; zero outside the admissible domain.
    pub fn shape(&self, x: f64) -> f64 {
        let u = (x - self.center) / self.sigma_f;
        if self.a < GAUSSIAN_LIMIT_A {
            return (-0.5 * u * u).exp();
        }
        let au = self.a * u;
        if au <= -1.0 {
            return 0.0;
        }
        let l = au.ln_1p();
        (-(l * l) / (2.0 * self.a * self.a)).exp()
    }
}

/// Peak kernel sampled on integer offsets, scaled to unit maximum.
///
/// `taps[k]` is the kernel value at grid offset `offset + k` from the spike.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampledKernel {
    pub taps: Vec<f64>,
    pub offset: isize,
}

impl SampledKernel {
    /// Unit impulse (identity convolution).
    pub fn impulse() -> Self {
        Self {
            taps: vec![1.0],
            offset: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.taps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.taps.is_empty()
    }

    /// Grid offsets covered by the taps.
    pub fn offsets(&self) -> impl Iterator<Item = isize> + '_ {
        (0..self.taps.len()).map(move |k| self.offset + k as isize)
    }
}

/// Samples the Fraser-Suzuki kernel on the integer grid around `center`.
///
/// Each side is walked outward until a tap drops below `trunc_eps` (that tap
/// is kept), the half-width cap of `12 sigma_f` is reached, or the domain
/// bound `m - sigma_f/a` is crossed, in which case a single zero tap marks
/// the boundary.
pub fn sample_kernel(spec: &KernelSpec) -> Result<SampledKernel> {
    spec.validate()?;
    let m = spec.center;
    let cap = MAX_HALF_WIDTH_SIGMAS * spec.sigma_f;
    let bound = spec.domain_start();

    let mut start = m.round();
    if start <= bound {
        start = bound.floor() + 1.0;
    }

    let mut right = Vec::new();
    let mut x = start + 1.0;
    while x - m <= cap {
        let v = spec.shape(x);
        right.push(v);
        if v < spec.trunc_eps {
            break;
        }
        x += 1.0;
    }

    let mut left = Vec::new();
    let mut x = start - 1.0;
    while m - x <= cap {
        if x <= bound {
            left.push(0.0);
            break;
        }
        let v = spec.shape(x);
        left.push(v);
        if v < spec.trunc_eps {
            break;
        }
        x -= 1.0;
    }

    let offset = start as isize - left.len() as isize;
    let mut taps: Vec<f64> = left.into_iter().rev().collect();
    taps.push(spec.shape(start));
    taps.extend(right);

    let peak = taps.iter().cloned().fold(0.0, f64::max);
    if peak <= 0.0 {
        return Err(Error::spec("kernel has no positive sample on the grid"));
    }
    taps.iter_mut().for_each(|t| *t /= peak);
    Ok(SampledKernel { taps, offset })
}
