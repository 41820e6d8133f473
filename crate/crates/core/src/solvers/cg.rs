//! Fixed-iteration conjugate gradient with an optional recording of every
//! intermediate, so the iterations can be differentiated in reverse.

use crate::operators::dot;

/// Intermediates of one CG run. Index `j` runs over executed steps.
#[derive(Debug, Clone, Default)]
pub struct CgTrace {
    /// `r_0 … r_steps`.
    pub r: Vec<Vec<f64>>,
    /// `d_0 … d_{steps-1}`.
    pub d: Vec<Vec<f64>>,
    /// `A d_j`.
    pub ad: Vec<Vec<f64>>,
    pub alpha: Vec<f64>,
    pub beta: Vec<f64>,
    /// `⟨r_j, r_j⟩` for `j = 0 … steps`.
    pub rr: Vec<f64>,
    /// `⟨d_j, A d_j⟩`.
    pub dad: Vec<f64>,
    /// Set when a direction with `⟨d, A d⟩ ≤ 0` was met.
    pub negative_curvature: bool,
}

impl CgTrace {
    pub fn steps(&self) -> usize {
        self.alpha.len()
    }
}

/// Runs `iters` CG steps on `A x = b` from `x0`.
///
/// Stops early only on an exactly zero residual or non-positive curvature;
/// both leave the remaining steps as no-ops.
pub fn conjugate_gradient(
    apply_a: &dyn Fn(&[f64], &mut [f64]),
    b: &[f64],
    x0: &[f64],
    iters: usize,
    mut trace: Option<&mut CgTrace>,
) -> Vec<f64> {
    let n = b.len();
    let mut x = x0.to_vec();
    let mut ad = vec![0.0; n];
    apply_a(&x, &mut ad);
    let mut r: Vec<f64> = b.iter().zip(&ad).map(|(b, a)| b - a).collect();
    let mut d = r.clone();
    let mut rr = dot(&r, &r);
    if let Some(t) = trace.as_deref_mut() {
        t.r.push(r.clone());
        t.rr.push(rr);
    }

    for _ in 0..iters {
        if rr == 0.0 {
            break;
        }
        apply_a(&d, &mut ad);
        let dad = dot(&d, &ad);
        if dad <= 0.0 || !dad.is_finite() {
            if let Some(t) = trace.as_deref_mut() {
                t.negative_curvature = true;
            }
            break;
        }
        let alpha = rr / dad;
        for i in 0..n {
            x[i] += alpha * d[i];
            r[i] -= alpha * ad[i];
        }
        let rr_next = dot(&r, &r);
        let beta = rr_next / rr;
        if let Some(t) = trace.as_deref_mut() {
            t.d.push(d.clone());
            t.ad.push(ad.clone());
            t.alpha.push(alpha);
            t.beta.push(beta);
            t.dad.push(dad);
            t.r.push(r.clone());
            t.rr.push(rr_next);
        }
        for i in 0..n {
            d[i] = r[i] + beta * d[i];
        }
        rr = rr_next;
    }
    x
}
