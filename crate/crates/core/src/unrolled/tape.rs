//! Reverse-mode differentiation through recorded layers.

use std::sync::Arc;

use super::{sigmoid, Variant};
use crate::error::{check_len, Result};
use crate::operators::{dot, ForwardModel, LinearOperator};
use crate::solvers::{CgTrace, HqConfig, IstaStep, PdState, PdStep};

/// What one layer kept from its forward pass.
#[derive(Debug, Clone)]
pub enum LayerTape {
    Ista {
        x_in: Vec<f64>,
        step: IstaStep,
        gamma: f64,
        chi: f64,
    },
    Pd {
        state_in: PdState,
        step: PdStep,
        tau: f64,
        sigma: f64,
        rho: f64,
    },
    Hq {
        x_in: Vec<f64>,
        omega: Vec<f64>,
        cg: CgTrace,
        penalty: HqConfig,
    },
}

/// Forward record of a whole network.
#[derive(Debug, Clone)]
pub struct Tape {
    variant: Variant,
    z: Vec<f64>,
    layers: Vec<LayerTape>,
    op: Arc<ForwardModel>,
}

/// Loss gradient with respect to the natural (positive) parameters, laid out
/// like [`super::UnrolledModel::flat_params`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub natural: Vec<f64>,
}

impl Gradients {
    /// Chain rule through softplus: `∂L/∂u = ∂L/∂v · sigmoid(u)`.
    pub fn unconstrained(&self, flat_params: &[f64]) -> Vec<f64> {
        self.natural.iter().zip(flat_params).map(|(g, &u)| g * sigmoid(u)).collect()
    }
}

impl Tape {
    pub(crate) fn new(variant: Variant, z: Vec<f64>, layers: Vec<LayerTape>, op: Arc<ForwardModel>) -> Self {
        Self { variant, z, layers, op }
    }

    pub fn variant(&self) -> Variant {
        self.variant
    }

    pub fn layers(&self) -> &[LayerTape] {
        &self.layers
    }

    /// Distance of the recorded pass to the nearest non-smooth point: a
    /// soft-threshold input at `±θ`, a dual point on the ball boundary, or
    /// (for half-quadratic layers past the first) an input coordinate at 0.
    pub fn kink_margin(&self) -> f64 {
        let mut m = f64::INFINITY;
        for (k, l) in self.layers.iter().enumerate() {
            match l {
                LayerTape::Ista { step, .. } => {
                    for v in &step.v {
                        m = m.min((v.abs() - step.theta).abs());
                    }
                }
                LayerTape::Pd { step, tau, rho, .. } => {
                    for v in &step.v {
                        m = m.min((v.abs() - tau).abs());
                    }
                    m = m.min((step.dist - rho).abs());
                }
                LayerTape::Hq { x_in, .. } if k > 0 => {
                    for t in x_in {
                        m = m.min(t.abs());
                    }
                }
                LayerTape::Hq { .. } => {}
            }
        }
        m
    }

    /// Which branch each non-smooth operation took.
    pub fn active_pattern(&self) -> Vec<bool> {
        let mut out = Vec::new();
        for (k, l) in self.layers.iter().enumerate() {
            match l {
                LayerTape::Ista { step, .. } => out.extend(step.v.iter().map(|v| v.abs() > step.theta)),
                LayerTape::Pd { step, tau, .. } => {
                    out.extend(step.v.iter().map(|v| v.abs() > *tau));
                    out.push(step.outside);
                }
                LayerTape::Hq { x_in, .. } if k > 0 => out.extend(x_in.iter().map(|t| *t > 0.0)),
                LayerTape::Hq { .. } => {}
            }
        }
        out
    }

    /// Gradient of a loss given `∂L/∂p̂`.
    pub fn backward(&self, p_bar: &[f64]) -> Result<Gradients> {
        check_len(self.op.n(), p_bar.len())?;
        let x_bar = self.op.peak_conv().apply_adjoint(p_bar);
        self.backward_x(&x_bar)
    }

    /// Gradient of a loss given `∂L/∂x̂`.
    pub fn backward_x(&self, x_bar: &[f64]) -> Result<Gradients> {
        check_len(self.op.n(), x_bar.len())?;
        let w = self.variant.layer_width();
        let k = self.layers.len();
        let mut natural = vec![0.0; k * w + self.variant.shared_width()];
        let op: &dyn LinearOperator = self.op.as_ref();

        let mut xb = x_bar.to_vec();
        // dual and over-relaxed adjoints, primal-dual only
        let mut yb = vec![0.0; op.dim_out()];
        let mut xrb = vec![0.0; op.dim_in()];

        for (idx, layer) in self.layers.iter().enumerate().rev() {
            let g = &mut natural[idx * w..(idx + 1) * w];
            match layer {
                LayerTape::Ista { step, gamma, chi, .. } => {
                    xb = ista_layer_back(op, step, *gamma, *chi, &xb, g);
                }
                LayerTape::Pd {
                    step,
                    tau,
                    sigma,
                    rho,
                    ..
                } => {
                    let mut rho_bar = 0.0;
                    let back = PdBack {
                        op,
                        z: &self.z,
                        step,
                        tau: *tau,
                        sigma: *sigma,
                        rho: *rho,
                    };
                    let (x_in, y_in, xr_in) = back.run(&xb, &yb, &xrb, g, &mut rho_bar);
                    xb = x_in;
                    yb = y_in;
                    xrb = xr_in;
                    let last = natural.len() - 1;
                    natural[last] += rho_bar;
                }
                LayerTape::Hq {
                    x_in,
                    omega,
                    cg,
                    penalty,
                } => {
                    xb = hq_layer_back(op, x_in, omega, cg, penalty, &xb, g);
                }
            }
        }
        Ok(Gradients { natural })
    }
}

fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

fn axpy(y: &mut [f64], a: f64, x: &[f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

/// Reverse rule of `S(v, θ)`; the derivative at `|v| = θ` is taken as 0.
/// Returns `(v̄, θ̄)`.
pub fn soft_threshold_vjp(v: &[f64], theta: f64, out_bar: &[f64]) -> (Vec<f64>, f64) {
    let mut vb = vec![0.0; v.len()];
    let mut theta_bar = 0.0;
    for i in 0..v.len() {
        if v[i].abs() > theta {
            vb[i] = out_bar[i];
            theta_bar -= sign(v[i]) * out_bar[i];
        }
    }
    (vb, theta_bar)
}

/// Reverse rule of the projection onto `{u : ‖u − c‖ ≤ ρ}`. Outside the
/// ball the Jacobian is `(ρ/r)(I − uuᵀ)` and `∂P/∂ρ = u`. Returns `(q̄, ρ̄)`.
pub fn ball_projection_vjp(q: &[f64], center: &[f64], rho: f64, out_bar: &[f64]) -> (Vec<f64>, f64) {
    let diff: Vec<f64> = q.iter().zip(center).map(|(a, c)| a - c).collect();
    let r = dot(&diff, &diff).sqrt();
    if r <= rho {
        return (out_bar.to_vec(), 0.0);
    }
    let u: Vec<f64> = diff.iter().map(|d| d / r).collect();
    let ua = dot(&u, out_bar);
    let scale = rho / r;
    let qb = out_bar.iter().zip(&u).map(|(a, ui)| scale * (a - ui * ua)).collect();
    (qb, ua)
}

/// Reverse rule of `ω(t)`. Returns `t̄` and `[λ̄₁, λ̄₂, δ̄₁, δ̄₂]`.
pub fn hq_weight_vjp(t: f64, p: &HqConfig, omega_bar: f64) -> (f64, [f64; 4]) {
    let (l1, l2, d1, d2) = (p.lambda1, p.lambda2, p.delta1, p.delta2);
    let a = t.abs() + d1;
    let q = 1.0 + t * t / d2;
    let g = [
        omega_bar * d1 / a,
        omega_bar * d2 / q,
        omega_bar * l1 * t.abs() / (a * a),
        omega_bar * (l2 / q + l2 * t * t / (d2 * q * q)),
    ];
    let dt = -l1 * d1 * sign(t) / (a * a) - 2.0 * l2 * t / (q * q);
    (omega_bar * dt, g)
}

/// Reverse rule of a recorded fixed-iteration CG run on `A x = b` from `x0`,
/// taken through the recurrences exactly as executed.
///
/// Returns `(x̄0, b̄)`. Every product `A v` met on the way is reported to
/// `on_product(ā, v)`, i.e. `Ā += ā vᵀ`, so the caller can route the
/// gradient into whatever parameterizes `A`.
pub fn cg_vjp(
    apply_a: &dyn Fn(&[f64], &mut [f64]),
    x0: &[f64],
    cg: &CgTrace,
    x_bar: &[f64],
    on_product: &mut dyn FnMut(&[f64], &[f64]),
) -> (Vec<f64>, Vec<f64>) {
    let n = x0.len();
    let mut tmp = vec![0.0; n];
    // x_{j+1} = x_j + α_j d_j leaves x̄ unchanged through the loop
    let xb = x_bar;
    let mut rb = vec![0.0; n]; // adjoint of r_{j+1}, then of r_j
    let mut db = vec![0.0; n]; // adjoint of d_{j+1}
    let mut rrb_next = 0.0; // adjoint of rr_{j+1}
    for j in (0..cg.steps()).rev() {
        let (d, ad, r1) = (&cg.d[j], &cg.ad[j], &cg.r[j + 1]);
        let (alpha, beta, rr, rr1, dad) = (cg.alpha[j], cg.beta[j], cg.rr[j], cg.rr[j + 1], cg.dad[j]);

        // d_{j+1} = r_{j+1} + β_j d_j
        axpy(&mut rb, 1.0, &db);
        let beta_bar = dot(&db, d);
        let mut dbj: Vec<f64> = db.iter().map(|v| beta * v).collect();

        // β_j = rr_{j+1} / rr_j
        rrb_next += beta_bar / rr;
        let mut rrb = -beta_bar * rr1 / (rr * rr);

        // rr_{j+1} = ‖r_{j+1}‖²
        axpy(&mut rb, 2.0 * rrb_next, r1);

        // r_{j+1} = r_j − α_j A d_j
        let mut alpha_bar = -dot(&rb, ad);
        let mut adb: Vec<f64> = rb.iter().map(|v| -alpha * v).collect();

        // x_{j+1} = x_j + α_j d_j
        alpha_bar += dot(xb, d);
        axpy(&mut dbj, alpha, xb);

        // α_j = rr_j / dAd_j
        rrb += alpha_bar / dad;
        let dad_bar = -alpha_bar * rr / (dad * dad);

        // dAd_j = ⟨d_j, A d_j⟩
        axpy(&mut dbj, dad_bar, ad);
        axpy(&mut adb, dad_bar, d);

        // A d_j, with A symmetric
        apply_a(&adb, &mut tmp);
        axpy(&mut dbj, 1.0, &tmp);
        on_product(&adb, d);

        db = dbj;
        rrb_next = rrb;
    }
    // d_0 = r_0, rr_0 = ‖r_0‖²
    axpy(&mut rb, 1.0, &db);
    axpy(&mut rb, 2.0 * rrb_next, &cg.r[0]);

    // r_0 = b − A x_0
    apply_a(&rb, &mut tmp);
    let x0b: Vec<f64> = xb.iter().zip(&tmp).map(|(x, a)| x - a).collect();
    let neg: Vec<f64> = rb.iter().map(|v| -v).collect();
    on_product(&neg, x0);
    (x0b, rb)
}

/// Adjoint of `x' = S(x − γ Hᵀ(Hx − z), γχ)`. Writes `[γ̄, χ̄]` into `g`.
fn ista_layer_back(op: &dyn LinearOperator, step: &IstaStep, gamma: f64, chi: f64, xb: &[f64], g: &mut [f64]) -> Vec<f64> {
    let (vb, theta_bar) = soft_threshold_vjp(&step.v, step.theta, xb);
    g[0] += -dot(&vb, &step.grad) + theta_bar * chi;
    g[1] += theta_bar * gamma;
    let mut gram = vec![0.0; vb.len()];
    op.apply_gram_into(&vb, &mut gram);
    vb.iter().zip(&gram).map(|(v, h)| v - gamma * h).collect()
}

struct PdBack<'a> {
    op: &'a dyn LinearOperator,
    z: &'a [f64],
    step: &'a PdStep,
    tau: f64,
    sigma: f64,
    rho: f64,
}

impl PdBack<'_> {
    /// Adjoint of one primal-dual layer. Takes the adjoints of `(x', y', x̄')`
    /// and returns those of `(x, y, x̄)`; writes `[τ̄, σ̄]` into `g`.
    fn run(
        &self,
        xb_out: &[f64],
        yb_out: &[f64],
        xrb_out: &[f64],
        g: &mut [f64],
        rho_bar: &mut f64,
    ) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let (op, st, s) = (self.op, self.step, self.sigma);

        // x̄' = 2x' − x
        let xb_tot: Vec<f64> = xb_out.iter().zip(xrb_out).map(|(a, r)| a + 2.0 * r).collect();
        let mut x_in: Vec<f64> = xrb_out.iter().map(|r| -r).collect();

        // x' = S(v, τ)
        let (vb, mut tau_bar) = soft_threshold_vjp(&st.v, self.tau, &xb_tot);

        // v = x − τ Hᵀy'
        axpy(&mut x_in, 1.0, &vb);
        tau_bar -= dot(&vb, &st.ht_y);
        let hv = op.apply(&vb);
        let yb: Vec<f64> = yb_out.iter().zip(&hv).map(|(y, h)| y - self.tau * h).collect();

        // y' = w − σ P(q), q = w/σ
        let q: Vec<f64> = st.w.iter().map(|w| w / s).collect();
        let pb: Vec<f64> = yb.iter().map(|y| -s * y).collect();
        let (qb, rb) = ball_projection_vjp(&q, self.z, self.rho, &pb);
        *rho_bar += rb;
        let wb: Vec<f64> = yb.iter().zip(&qb).map(|(y, q)| y + q / s).collect();
        let mut sigma_bar = -dot(&yb, &st.proj) - dot(&qb, &q) / s;

        // w = y + σ H x̄
        sigma_bar += dot(&wb, &st.h_xbar);
        let xr_in: Vec<f64> = op.apply_adjoint(&wb).into_iter().map(|v| s * v).collect();
        g[0] += tau_bar;
        g[1] += sigma_bar;
        (x_in, wb, xr_in)
    }
}

/// Adjoint of one half-quadratic layer: the weights `ω(x)` followed by the
/// recorded CG iterations on `(HᵀH + diag ω) x' = Hᵀz` from `x`. Writes
/// `[λ̄₁, λ̄₂, δ̄₁, δ̄₂]` into `g`.
fn hq_layer_back(
    op: &dyn LinearOperator,
    x_in: &[f64],
    omega: &[f64],
    cg: &CgTrace,
    p: &HqConfig,
    xb_out: &[f64],
    g: &mut [f64],
) -> Vec<f64> {
    let n = x_in.len();
    let apply_a = |v: &[f64], out: &mut [f64]| {
        op.apply_gram_into(v, out);
        for i in 0..n {
            out[i] += omega[i] * v[i];
        }
    };
    let mut omega_bar = vec![0.0; n];
    let (mut x0b, _) = cg_vjp(&apply_a, x_in, cg, xb_out, &mut |ab, v| {
        for i in 0..n {
            omega_bar[i] += ab[i] * v[i];
        }
    });
    for i in 0..n {
        let (tb, pg) = hq_weight_vjp(x_in[i], p, omega_bar[i]);
        x0b[i] += tb;
        for (gk, v) in g.iter_mut().zip(pg) {
            *gk += v;
        }
    }
    x0b
}
