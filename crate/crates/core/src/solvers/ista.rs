use super::{l1_norm, relative_change, shrink, SolveOutput};
use crate::error::{check_len, Error, Result};
use crate::operators::LinearOperator;

/// Iterative soft-thresholding for `½‖Hx − z‖² + χ‖x‖₁`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IstaConfig {
    pub chi: f64,
    pub gamma: f64,
    pub max_iter: usize,
    pub tol: f64,
}

impl IstaConfig {
    pub const DEFAULT_MAX_ITER: usize = 10_000;
    pub const DEFAULT_TOL: f64 = 1e-8;

    /// Step `γ = 1/L²` for an operator of norm `L`.
    pub fn for_norm(op_norm: f64, chi: f64) -> Result<Self> {
        Self::new(chi, 1.0 / (op_norm * op_norm), op_norm)
    }

    /// Checks `χ > 0` and `0 < γ ≤ 1/L²`.
    pub fn new(chi: f64, gamma: f64, op_norm: f64) -> Result<Self> {
        let cfg = Self {
            chi,
            gamma,
            max_iter: Self::DEFAULT_MAX_ITER,
            tol: Self::DEFAULT_TOL,
        };
        cfg.validate()?;
        if !(op_norm > 0.0) || gamma * op_norm * op_norm > 1.0 + 1e-12 {
            return Err(Error::spec(format!(
                "ISTA step {gamma} exceeds 1/L² for L = {op_norm}"
            )));
        }
        Ok(cfg)
    }

    pub fn with_iterations(mut self, max_iter: usize, tol: f64) -> Self {
        self.max_iter = max_iter;
        self.tol = tol;
        self
    }

    fn validate(&self) -> Result<()> {
        if !(self.chi > 0.0 && self.chi.is_finite()) {
            return Err(Error::spec(format!("chi must be > 0, got {}", self.chi)));
        }
        if !(self.gamma > 0.0 && self.gamma.is_finite()) {
            return Err(Error::spec(format!("gamma must be > 0, got {}", self.gamma)));
        }
        Ok(())
    }
}

/// Intermediates of one ISTA iteration from `x`.
#[derive(Debug, Clone)]
pub struct IstaStep {
    /// `H x − z`.
    pub residual: Vec<f64>,
    /// `Hᵀ(H x − z)`.
    pub grad: Vec<f64>,
    /// Pre-threshold point `x − γ ∇`.
    pub v: Vec<f64>,
    /// Threshold `γ χ`.
    pub theta: f64,
}

/// `x⁺ = S(x − γ Hᵀ(Hx − z), γχ)`.
pub fn ista_step(op: &dyn LinearOperator, x: &[f64], z: &[f64], gamma: f64, chi: f64) -> (Vec<f64>, IstaStep) {
    let mut residual = op.apply(x);
    for (r, zi) in residual.iter_mut().zip(z) {
        *r -= zi;
    }
    let grad = op.apply_adjoint(&residual);
    let v: Vec<f64> = x.iter().zip(&grad).map(|(xi, g)| xi - gamma * g).collect();
    let theta = gamma * chi;
    let next = v.iter().map(|&vi| shrink(vi, theta)).collect();
    (next, IstaStep { residual, grad, v, theta })
}

pub fn ista_objective(op: &dyn LinearOperator, x: &[f64], z: &[f64], chi: f64) -> f64 {
    let hx = op.apply(x);
    let fit: f64 = hx.iter().zip(z).map(|(a, b)| (a - b) * (a - b)).sum();
    0.5 * fit + chi * l1_norm(x)
}

/// Runs ISTA from `x_0 = 0`.
///
/// The trace holds `F(x_k)`; an increase beyond `1e-10` relative is reported
/// as [`Error::Divergence`].
pub fn ista_solve(op: &dyn LinearOperator, z: &[f64], cfg: &IstaConfig) -> Result<SolveOutput> {
    cfg.validate()?;
    check_len(op.dim_out(), z.len())?;
    let mut x = vec![0.0; op.dim_in()];
    let mut trace = Vec::with_capacity(cfg.max_iter.min(1 << 16) + 1);
    let mut converged = false;
    let mut iterations = 0;

    while iterations < cfg.max_iter {
        let (next, step) = ista_step(op, &x, z, cfg.gamma, cfg.chi);
        let fit: f64 = step.residual.iter().map(|r| r * r).sum();
        let f = 0.5 * fit + cfg.chi * l1_norm(&x);
        check_descent(&trace, f, iterations)?;
        trace.push(f);
        iterations += 1;
        let change = relative_change(&next, &x);
        x = next;
        if change < cfg.tol {
            converged = true;
            break;
        }
    }
    let f = ista_objective(op, &x, z, cfg.chi);
    check_descent(&trace, f, iterations)?;
    trace.push(f);
    Ok(SolveOutput {
        x,
        trace,
        iterations,
        converged,
    })
}

fn check_descent(trace: &[f64], current: f64, iteration: usize) -> Result<()> {
    if let Some(&previous) = trace.last() {
        if !current.is_finite() || current - previous > 1e-10 * previous.abs() {
            return Err(Error::Divergence {
                iteration,
                previous,
                current,
            });
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operators::{Diagonal, Identity};

    #[test]
    fn zero_data_gives_zero() {
        let cfg = IstaConfig::for_norm(1.0, 0.1).unwrap();
        let out = ista_solve(&Identity(5), &[0.0; 5], &cfg).unwrap();
        assert_eq!(out.x, vec![0.0; 5]);
        assert!(out.converged);
    }

    #[test]
    fn identity_gives_soft_threshold() {
        let cfg = IstaConfig::for_norm(1.0, 0.1).unwrap();
        let z = [1.0, -0.05, 0.3];
        let out = ista_solve(&Identity(3), &z, &cfg).unwrap();
        let want = [0.9, 0.0, 0.2];
        for (a, b) in out.x.iter().zip(want) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn step_rule_enforced() {
        assert!(IstaConfig::new(0.1, 0.5, 2.0).is_err());
        assert!(IstaConfig::new(0.1, 0.25, 2.0).is_ok());
        assert!(IstaConfig::new(0.0, 0.25, 2.0).is_err());
    }

    #[test]
    fn oversized_step_is_caught() {
        let mut cfg = IstaConfig::for_norm(3.0, 0.01).unwrap();
        cfg.gamma = 1.0; // 9x too large for ‖H‖ = 3
        let err = ista_solve(&Diagonal(vec![3.0, 3.0]), &[1.0, 2.0], &cfg).unwrap_err();
        assert!(matches!(err, Error::Divergence { .. }));
    }
}
