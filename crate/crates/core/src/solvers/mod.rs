//! Classical iterative solvers for the three restoration problems:
//!
//! - ISTA for `min ½‖Hx − z‖² + χ‖x‖₁`,
//! - Chambolle-Pock primal-dual for `min ‖x‖₁ s.t. ‖Hx − z‖ ≤ ρ`,
//! - half-quadratic majorize-minimize for `min ½‖Hx − z‖² + Σ ψ(xᵢ)`.
//!
//! The single-iteration kernels are shared with the unrolled networks so a
//! network with frozen parameters replays the classical iterations exactly.

pub mod cg;
mod hq;
mod ista;
mod pd;

pub use cg::{conjugate_gradient, CgTrace};
pub use hq::{hq_gradient, hq_objective, hq_penalty, hq_penalty_derivative, hq_solve, hq_step, hq_weight, HqConfig};
pub use ista::{ista_objective, ista_solve, ista_step, IstaConfig, IstaStep};
pub use pd::{constraint_violation, pd_step, primal_dual_solve, PdConfig, PdState, PdStep};

use crate::operators::norm2;

/// Result of a classical solve.
#[derive(Debug, Clone)]
pub struct SolveOutput {
    pub x: Vec<f64>,
    /// Objective value at `x_0, x_1, …` (problem-specific; see each solver).
    pub trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

/// `sign(vᵢ) · max(|vᵢ| − θ, 0)`.
pub fn soft_threshold(v: &[f64], theta: f64) -> Vec<f64> {
    v.iter().map(|&x| shrink(x, theta)).collect()
}

#[inline]
pub fn shrink(x: f64, theta: f64) -> f64 {
    if x > theta {
        x - theta
    } else if x < -theta {
        x + theta
    } else {
        0.0
    }
}

/// Euclidean projection of `v` onto the ball `{u : ‖u − center‖ ≤ rho}`.
pub fn project_l2_ball(v: &[f64], center: &[f64], rho: f64) -> Vec<f64> {
    let diff: Vec<f64> = v.iter().zip(center).map(|(a, c)| a - c).collect();
    let r = norm2(&diff);
    if r <= rho {
        return v.to_vec();
    }
    let scale = rho / r;
    center.iter().zip(&diff).map(|(c, d)| c + scale * d).collect()
}

pub fn l1_norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v.abs()).sum()
}

pub(crate) fn relative_change(new: &[f64], old: &[f64]) -> f64 {
    let diff: f64 = new.iter().zip(old).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
    diff / norm2(old).max(1.0)
}
