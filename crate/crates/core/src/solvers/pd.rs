use super::{l1_norm, relative_change, shrink, SolveOutput};
use crate::error::{check_len, Error, Result};
use crate::operators::{norm2, LinearOperator};

/// Chambolle-Pock for `min ‖x‖₁ s.t. ‖Hx − z‖ ≤ ρ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PdConfig {
    pub rho: f64,
    pub tau: f64,
    pub sigma: f64,
    pub max_iter: usize,
    pub tol: f64,
}

impl PdConfig {
    pub const DEFAULT_MAX_ITER: usize = 50_000;
    pub const DEFAULT_TOL: f64 = 1e-8;
    /// Iterations between two infeasibility checks.
    pub const STAGNATION_WINDOW: usize = 2000;

    /// `τ = σ = 0.99 / L`.
    pub fn for_norm(op_norm: f64, rho: f64) -> Result<Self> {
        let step = 0.99 / op_norm;
        Self::new(rho, step, step, op_norm)
    }

    pub fn new(rho: f64, tau: f64, sigma: f64, op_norm: f64) -> Result<Self> {
        let cfg = Self {
            rho,
            tau,
            sigma,
            max_iter: Self::DEFAULT_MAX_ITER,
            tol: Self::DEFAULT_TOL,
        };
        cfg.validate()?;
        if tau * sigma * op_norm * op_norm > 1.0 + 1e-12 {
            return Err(Error::spec(format!(
                "step product τσL² = {} exceeds 1",
                tau * sigma * op_norm * op_norm
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
        if !(self.rho >= 0.0 && self.rho.is_finite()) {
            return Err(Error::spec(format!("rho must be >= 0, got {}", self.rho)));
        }
        if !(self.tau > 0.0 && self.sigma > 0.0 && self.tau.is_finite() && self.sigma.is_finite()) {
            return Err(Error::spec("primal and dual steps must be positive"));
        }
        Ok(())
    }
}

/// Primal, dual and over-relaxed iterates.
#[derive(Debug, Clone, PartialEq)]
pub struct PdState {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub x_bar: Vec<f64>,
}

impl PdState {
    pub fn zeros(n_in: usize, n_out: usize) -> Self {
        Self {
            x: vec![0.0; n_in],
            y: vec![0.0; n_out],
            x_bar: vec![0.0; n_in],
        }
    }
}

/// Intermediates of one primal-dual iteration.
#[derive(Debug, Clone)]
pub struct PdStep {
    /// `H x̄`.
    pub h_xbar: Vec<f64>,
    /// Dual pre-prox point `w = y + σ H x̄`.
    pub w: Vec<f64>,
    /// Ball projection of `w / σ`.
    pub proj: Vec<f64>,
    /// `‖w/σ − z‖`.
    pub dist: f64,
    /// Whether `w/σ` was outside the ball.
    pub outside: bool,
    /// `Hᵀ y⁺`.
    pub ht_y: Vec<f64>,
    /// Primal pre-threshold point `x − τ Hᵀ y⁺`.
    pub v: Vec<f64>,
}

/// One Chambolle-Pock iteration.
///
/// The dual prox of the ball indicator uses Moreau's identity,
/// `y⁺ = w − σ P_B(w/σ)`.
pub fn pd_step(
    op: &dyn LinearOperator,
    z: &[f64],
    rho: f64,
    tau: f64,
    sigma: f64,
    state: &PdState,
) -> (PdState, PdStep) {
    let h_xbar = op.apply(&state.x_bar);
    let w: Vec<f64> = state.y.iter().zip(&h_xbar).map(|(y, h)| y + sigma * h).collect();
    let diff: Vec<f64> = w.iter().zip(z).map(|(wi, zi)| wi / sigma - zi).collect();
    let dist = norm2(&diff);
    let outside = dist > rho;
    let proj: Vec<f64> = if outside {
        let s = rho / dist;
        z.iter().zip(&diff).map(|(zi, d)| zi + s * d).collect()
    } else {
        w.iter().map(|wi| wi / sigma).collect()
    };
    let y: Vec<f64> = w.iter().zip(&proj).map(|(wi, p)| wi - sigma * p).collect();
    let ht_y = op.apply_adjoint(&y);
    let v: Vec<f64> = state.x.iter().zip(&ht_y).map(|(x, g)| x - tau * g).collect();
    let x: Vec<f64> = v.iter().map(|&vi| shrink(vi, tau)).collect();
    let x_bar = x.iter().zip(&state.x).map(|(n, o)| 2.0 * n - o).collect();
    (
        PdState { x, y, x_bar },
        PdStep {
            h_xbar,
            w,
            proj,
            dist,
            outside,
            ht_y,
            v,
        },
    )
}

pub fn constraint_violation(op: &dyn LinearOperator, x: &[f64], z: &[f64], rho: f64) -> f64 {
    let hx = op.apply(x);
    let r: f64 = hx.iter().zip(z).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
    (r - rho).max(0.0)
}

/// Runs primal-dual iterations from zero.
///
/// Stops once the primal change and the constraint violation are both below
/// `tol`. The trace holds `‖x_k‖₁`. A violation that stops improving while
/// the dual iterate keeps growing for three consecutive windows is reported
/// as [`Error::Infeasible`].
pub fn primal_dual_solve(op: &dyn LinearOperator, z: &[f64], cfg: &PdConfig) -> Result<SolveOutput> {
    cfg.validate()?;
    check_len(op.dim_out(), z.len())?;
    let mut state = PdState::zeros(op.dim_in(), op.dim_out());
    let mut trace = vec![0.0];
    let mut converged = false;
    let mut iterations = 0;
    let mut last_check: Option<(f64, f64)> = None;
    let mut stagnant = 0;

    while iterations < cfg.max_iter {
        let (next, _) = pd_step(op, z, cfg.rho, cfg.tau, cfg.sigma, &state);
        iterations += 1;
        let change = relative_change(&next.x, &state.x);
        state = next;
        trace.push(l1_norm(&state.x));
        if change < cfg.tol {
            let viol = constraint_violation(op, &state.x, z, cfg.rho);
            if viol <= cfg.tol {
                converged = true;
                break;
            }
        }
        if iterations % PdConfig::STAGNATION_WINDOW == 0 {
            let viol = constraint_violation(op, &state.x, z, cfg.rho);
            let ynorm = norm2(&state.y);
            if let Some((pv, py)) = last_check {
                if viol > 1e-3 && viol >= 0.999 * pv && ynorm > py {
                    stagnant += 1;
                } else {
                    stagnant = 0;
                }
            }
            if stagnant >= 3 {
                return Err(Error::Infeasible {
                    violation: viol,
                    iterations,
                });
            }
            last_check = Some((viol, ynorm));
        }
    }
    Ok(SolveOutput {
        x: state.x,
        trace,
        iterations,
        converged,
    })
}
