use super::cg::{conjugate_gradient, CgTrace};
use super::SolveOutput;
use crate::error::{check_len, Error, Result};
use crate::operators::LinearOperator;

/// Half-quadratic solver for `½‖Hx − z‖² + Σ ψ(xᵢ)` with the hybrid penalty
///
/// `ψ(t) = λ₁δ₁(|t| − δ₁ log(|t|/δ₁ + 1)) + λ₂ (δ₂²/2) log(1 + t²/δ₂)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HqConfig {
    pub lambda1: f64,
    pub lambda2: f64,
    pub delta1: f64,
    pub delta2: f64,
    pub max_iter: usize,
    pub cg_iters: usize,
    /// Stop once `‖∇F‖∞` falls below this.
    pub tol: f64,
}

impl Default for HqConfig {
    fn default() -> Self {
        Self {
            lambda1: 0.1,
            lambda2: 0.1,
            delta1: 1.0,
            delta2: 1.0,
            max_iter: 5000,
            cg_iters: 20,
            tol: 1e-7,
        }
    }
}

impl HqConfig {
    pub fn penalty(lambda1: f64, lambda2: f64, delta1: f64, delta2: f64) -> Self {
        Self {
            lambda1,
            lambda2,
            delta1,
            delta2,
            ..Self::default()
        }
    }

    pub fn with_iterations(mut self, max_iter: usize, cg_iters: usize, tol: f64) -> Self {
        self.max_iter = max_iter;
        self.cg_iters = cg_iters;
        self.tol = tol;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let nonneg = |v: f64| v >= 0.0 && v.is_finite();
        let pos = |v: f64| v > 0.0 && v.is_finite();
        if !(nonneg(self.lambda1) && nonneg(self.lambda2)) {
            return Err(Error::spec("lambda1 and lambda2 must be >= 0"));
        }
        if !(pos(self.delta1) && pos(self.delta2)) {
            return Err(Error::spec("delta1 and delta2 must be > 0"));
        }
        if self.cg_iters == 0 {
            return Err(Error::spec("at least one CG iteration is required"));
        }
        Ok(())
    }
}

/// `ψ(t)`, implemented exactly as printed (`t²/δ₂`, not `t²/δ₂²`).
pub fn hq_penalty(t: f64, cfg: &HqConfig) -> f64 {
    let a = t.abs();
    cfg.lambda1 * cfg.delta1 * (a - cfg.delta1 * (a / cfg.delta1).ln_1p())
        + cfg.lambda2 * 0.5 * cfg.delta2 * cfg.delta2 * (t * t / cfg.delta2).ln_1p()
}

/// `ψ'(t) = λ₁δ₁ t/(|t| + δ₁) + λ₂δ₂ t/(1 + t²/δ₂)`.
pub fn hq_penalty_derivative(t: f64, cfg: &HqConfig) -> f64 {
    t * hq_weight(t, cfg)
}

/// Half-quadratic weight `ω(t) = ψ'(t)/t`, extended by continuity at 0.
pub fn hq_weight(t: f64, cfg: &HqConfig) -> f64 {
    cfg.lambda1 * cfg.delta1 / (t.abs() + cfg.delta1) + cfg.lambda2 * cfg.delta2 / (1.0 + t * t / cfg.delta2)
}

pub fn hq_objective(op: &dyn LinearOperator, x: &[f64], z: &[f64], cfg: &HqConfig) -> f64 {
    let hx = op.apply(x);
    let fit: f64 = hx.iter().zip(z).map(|(a, b)| (a - b) * (a - b)).sum();
    0.5 * fit + x.iter().map(|&t| hq_penalty(t, cfg)).sum::<f64>()
}

/// `∇F(x) = Hᵀ(Hx − z) + ψ'(x)`.
pub fn hq_gradient(op: &dyn LinearOperator, x: &[f64], z: &[f64], cfg: &HqConfig) -> Vec<f64> {
    let mut r = op.apply(x);
    for (ri, zi) in r.iter_mut().zip(z) {
        *ri -= zi;
    }
    let mut g = op.apply_adjoint(&r);
    for (gi, &t) in g.iter_mut().zip(x) {
        *gi += hq_penalty_derivative(t, cfg);
    }
    g
}

/// One majorize-minimize step: `cg_iters` CG iterations on
/// `(HᵀH + diag ω(x)) x⁺ = Hᵀz`, warm-started at `x`. Returns `x⁺` and the
/// weights used.
pub fn hq_step(
    op: &dyn LinearOperator,
    htz: &[f64],
    x: &[f64],
    cfg: &HqConfig,
    trace: Option<&mut CgTrace>,
) -> (Vec<f64>, Vec<f64>) {
    let omega: Vec<f64> = x.iter().map(|&t| hq_weight(t, cfg)).collect();
    let apply = |v: &[f64], out: &mut [f64]| {
        op.apply_gram_into(v, out);
        for ((o, w), vi) in out.iter_mut().zip(&omega).zip(v) {
            *o += w * vi;
        }
    };
    let next = conjugate_gradient(&apply, htz, x, cfg.cg_iters, trace);
    (next, omega)
}

/// Runs half-quadratic iterations from zero until `‖∇F‖∞ < tol`.
///
/// The trace holds `F(x_k)`, which the majorization guarantees is
/// non-increasing.
pub fn hq_solve(op: &dyn LinearOperator, z: &[f64], cfg: &HqConfig) -> Result<SolveOutput> {
    cfg.validate()?;
    check_len(op.dim_out(), z.len())?;
    let htz = op.apply_adjoint(z);
    let mut x = vec![0.0; op.dim_in()];
    let mut trace = vec![hq_objective(op, &x, z, cfg)];
    let mut converged = false;
    let mut iterations = 0;
    while iterations < cfg.max_iter {
        let (next, _) = hq_step(op, &htz, &x, cfg, None);
        x = next;
        iterations += 1;
        let f = hq_objective(op, &x, z, cfg);
        let prev = *trace.last().unwrap();
        if !f.is_finite() || f - prev > 1e-10 * prev.abs() {
            return Err(Error::Divergence {
                iteration: iterations,
                previous: prev,
                current: f,
            });
        }
        trace.push(f);
        let g = hq_gradient(op, &x, z, cfg);
        if g.iter().all(|v| v.abs() < cfg.tol) {
            converged = true;
            break;
        }
    }
    Ok(SolveOutput {
        x,
        trace,
        iterations,
        converged,
    })
}
