//! Property suites shared by the regular tests and the acceptance runner.
//! Each returns a one-line summary on success and the first violation
//! otherwise.
#![allow(dead_code)]

use clarabel::algebra::CscMatrix;
use clarabel::solver::{DefaultSettingsBuilder, DefaultSolver, IPSolver, SolverStatus, SupportedConeT};
use peakunroll::operators::{ForwardModel, LinearOperator};
use peakunroll::solvers::{
    constraint_violation, hq_gradient, hq_penalty, hq_penalty_derivative, hq_solve, ista_solve, l1_norm,
    primal_dual_solve, soft_threshold, HqConfig, IstaConfig, PdConfig,
};
use peakunroll::unrolled::{ModelInit, Variant};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::common::*;

pub type Outcome = Result<String, String>;

pub const SIZES: [usize; 2] = [16, 64];
pub const SEEDS: u64 = 100;

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        let ok: bool = $cond;
        if !ok {
            return Err(format!($($fmt)+));
        }
    };
}

pub fn dense(op: &ForwardModel) -> Vec<Vec<f64>> {
    let n = op.n();
    // rows of H
    let cols: Vec<Vec<f64>> = (0..n)
        .map(|j| {
            let mut e = vec![0.0; n];
            e[j] = 1.0;
            op.apply(&e)
        })
        .collect();
    (0..n).map(|i| (0..n).map(|j| cols[j][i]).collect()).collect()
}

/// `min ‖x‖₁ s.t. ‖Hx − z‖ ≤ ρ` as an SOCP over `(x, t)`.
pub fn l1_ball_reference(h: &[Vec<f64>], z: &[f64], rho: f64) -> f64 {
    let n = z.len();
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut b = Vec::new();
    // t − x ≥ 0 and t + x ≥ 0
    for i in 0..n {
        let mut r = vec![0.0; 2 * n];
        r[i] = 1.0;
        r[n + i] = -1.0;
        rows.push(r);
        b.push(0.0);
    }
    for i in 0..n {
        let mut r = vec![0.0; 2 * n];
        r[i] = -1.0;
        r[n + i] = -1.0;
        rows.push(r);
        b.push(0.0);
    }
    // (ρ, Hx − z) in the second-order cone
    rows.push(vec![0.0; 2 * n]);
    b.push(rho);
    for i in 0..n {
        let mut r = vec![0.0; 2 * n];
        for j in 0..n {
            r[j] = -h[i][j];
        }
        rows.push(r);
        b.push(-z[i]);
    }
    let a = CscMatrix::from(rows.iter().map(|r| r.iter()));
    let p = CscMatrix::zeros((2 * n, 2 * n));
    let mut q = vec![0.0; n];
    q.extend(vec![1.0; n]);
    let cones = [SupportedConeT::NonnegativeConeT(2 * n), SupportedConeT::SecondOrderConeT(n + 1)];
    let settings = DefaultSettingsBuilder::default()
        .verbose(false)
        .tol_gap_abs(1e-10)
        .tol_gap_rel(1e-10)
        .tol_feas(1e-10)
        .build()
        .unwrap();
    let mut solver = DefaultSolver::new(&p, &q, &a, &b, &cones, settings).unwrap();
    solver.solve();
    assert!(
        matches!(solver.solution.status, SolverStatus::Solved | SolverStatus::AlmostSolved),
        "{:?}",
        solver.solution.status
    );
    l1_norm(&solver.solution.x[..n])
}

/// Monotone objective and a converged fixed point.
pub fn ista_suite() -> Outcome {
    let mut worst = 0.0f64;
    for n in SIZES {
        for seed in 0..SEEDS {
            let (spec, rec) = instance(n, seed, 0);
            let op = forward(&spec);
            let cfg = IstaConfig::for_norm(op.norm(), ModelInit::DEFAULT_CHI)
                .unwrap()
                .with_iterations(200_000, 1e-12);
            let out = ista_solve(op.as_ref(), &rec.z, &cfg).map_err(|e| e.to_string())?;
            ensure!(out.converged, "ISTA n={n} seed={seed} did not converge");
            for w in out.trace.windows(2) {
                ensure!(w[1] <= w[0] + 1e-13 * w[0].abs(), "ISTA n={n} seed={seed}: {} -> {}", w[0], w[1]);
            }
            let mut r = op.apply(&out.x);
            for (a, b) in r.iter_mut().zip(&rec.z) {
                *a -= b;
            }
            let g = op.apply_adjoint(&r);
            let v: Vec<f64> = out.x.iter().zip(&g).map(|(x, g)| x - cfg.gamma * g).collect();
            let fp = soft_threshold(&v, cfg.gamma * cfg.chi);
            let res: f64 = fp.iter().zip(&out.x).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
            ensure!(res < 1e-8, "ISTA n={n} seed={seed}: fixed-point residual {res:e}");
            worst = worst.max(res);
        }
    }
    Ok(format!("ISTA monotone on {} instances, worst residual {worst:.1e}", 2 * SEEDS))
}

/// Feasible and ℓ1-optimal against an interior-point SOCP solve.
pub fn pd_suite() -> Outcome {
    let (mut worst_v, mut worst_gap) = (0.0f64, 0.0f64);
    for n in SIZES {
        for seed in 0..SEEDS {
            let (spec, rec) = instance(n, seed, 0);
            let op = forward(&spec);
            let rho = ModelInit::defaults(spec.sigma_e, n).rho;
            let cfg = PdConfig::for_norm(op.norm(), rho).unwrap().with_iterations(400_000, 1e-11);
            let out = primal_dual_solve(op.as_ref(), &rec.z, &cfg).map_err(|e| e.to_string())?;
            let viol = constraint_violation(op.as_ref(), &out.x, &rec.z, rho);
            ensure!(viol <= 1e-6, "PD n={n} seed={seed}: violation {viol:e}");
            let reference = l1_ball_reference(&dense(&op), &rec.z, rho);
            let gap = (l1_norm(&out.x) - reference).abs();
            ensure!(gap <= 1e-4, "PD n={n} seed={seed}: ℓ1 gap {gap:e}");
            worst_v = worst_v.max(viol);
            worst_gap = worst_gap.max(gap);
        }
    }
    Ok(format!("PD worst violation {worst_v:.1e}, worst ℓ1 gap {worst_gap:.1e}"))
}

/// Stationary end point with a monotone objective.
pub fn hq_suite() -> Outcome {
    let mut worst = 0.0f64;
    for n in SIZES {
        for seed in 0..SEEDS {
            let (spec, rec) = instance(n, seed, 0);
            let op = forward(&spec);
            let cfg = HqConfig::default();
            let out = hq_solve(op.as_ref(), &rec.z, &cfg).map_err(|e| e.to_string())?;
            ensure!(out.converged, "HQ n={n} seed={seed} did not converge");
            for w in out.trace.windows(2) {
                ensure!(w[1] <= w[0] + 1e-10 * w[0].abs(), "HQ n={n} seed={seed}: objective rose");
            }
            let g = hq_gradient(op.as_ref(), &out.x, &rec.z, &cfg);
            let gmax = g.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            ensure!(gmax < 1e-6, "HQ n={n} seed={seed}: ‖∇F‖∞ = {gmax:e}");
            worst = worst.max(gmax);
        }
    }
    Ok(format!("HQ worst ‖∇F‖∞ {worst:.1e}"))
}

/// Closed-form ψ' against central differences of ψ at random points.
pub fn penalty_derivative_check(points: usize, seed: u64) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for _ in 0..points {
        let sign = if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
        let t = sign * rng.gen_range(0.01..8.0);
        let cfg = HqConfig::penalty(
            rng.gen_range(0.0..2.0),
            rng.gen_range(0.0..2.0),
            rng.gen_range(0.05..3.0),
            rng.gen_range(0.05..3.0),
        );
        let h = 1e-6 * f64::abs(t).max(1e-2);
        let fd = (hq_penalty(t + h, &cfg) - hq_penalty(t - h, &cfg)) / (2.0 * h);
        let an = hq_penalty_derivative(t, &cfg);
        let rel = (fd - an).abs() / an.abs().max(1e-3);
        ensure!(rel <= 1e-6, "ψ'({t}) = {an} vs finite difference {fd}");
        worst = worst.max(rel);
    }
    Ok(format!("ψ' worst relative error {worst:.1e} over {points} points"))
}

/// K classical iterations computed by the standalone solvers.
pub fn classical(variant: Variant, k: usize, spec: &peakunroll::sigmodel::DatasetSpec, z: &[f64]) -> Vec<f64> {
    let op = forward(spec);
    let l = op.norm();
    let init = ModelInit::defaults(spec.sigma_e, spec.n);
    match variant {
        Variant::Ista => {
            let cfg = IstaConfig::for_norm(l, init.chi).unwrap().with_iterations(k, 0.0);
            ista_solve(op.as_ref(), z, &cfg).unwrap().x
        }
        Variant::Pd => {
            let cfg = PdConfig::for_norm(l, init.rho).unwrap().with_iterations(k, 0.0);
            primal_dual_solve(op.as_ref(), z, &cfg).unwrap().x
        }
        Variant::Hq => {
            let cfg = HqConfig::default().with_iterations(k, init.cg_iters, 0.0);
            hq_solve(op.as_ref(), z, &cfg).unwrap().x
        }
    }
}

/// Frozen classical defaults replay the classical iterations.
pub fn equivalence_suite(seeds: u64) -> Outcome {
    let mut worst = 0.0f64;
    for variant in Variant::ALL {
        for k in [1, 4, 8] {
            for seed in 0..seeds {
                let (spec, rec) = instance(64, seed, 0);
                let model = default_model(variant, k, &spec, ModelInit::DEFAULT_CG_ITERS);
                let (x, p, _) = model.forward(&rec.z).map_err(|e| e.to_string())?;
                let want = classical(variant, k, &spec, &rec.z);
                for (a, b) in x.iter().zip(&want) {
                    ensure!((a - b).abs() <= 1e-12, "{variant} K={k} seed={seed}: {a} vs {b}");
                    worst = worst.max((a - b).abs());
                }
                ensure!(p == model.op().peak_signal(&x), "{variant} K={k}: p̂ ≠ Kπx̂");
            }
        }
    }
    Ok(format!("3 variants × K∈{{1,4,8}} × {seeds} seeds, worst |Δ| {worst:.1e}"))
}

/// Audited configurations: (variant, K, CG iterations).
pub const AUDITS: [(Variant, usize, usize); 4] =
    [(Variant::Ista, 2, 5), (Variant::Pd, 3, 5), (Variant::Hq, 1, 5), (Variant::Hq, 2, 4)];

pub fn gradient_audit(probes_wanted: usize) -> Outcome {
    let mut parts = Vec::new();
    for (variant, k, cg) in AUDITS {
        let (probes, skipped) = gradient_probes(variant, k, cg, probes_wanted, 11);
        ensure!(
            probes.len() == probes_wanted,
            "{variant} K={k}: only {} probes ({skipped} skipped)",
            probes.len()
        );
        let worst = probes.iter().map(|p| p.rel_err).fold(0.0, f64::max);
        ensure!(
            worst < 1e-4,
            "{variant} K={k}: {:?}",
            probes.iter().max_by(|a, b| a.rel_err.total_cmp(&b.rel_err)).unwrap()
        );
        let informative = probes.iter().filter(|p| p.analytic.abs() > 1e-6).count();
        ensure!(informative >= 10, "{variant} K={k}: only {informative} informative probes");
        parts.push(format!("{variant} K={k}: worst {worst:.1e} ({skipped} kink skips)"));
    }
    Ok(parts.join("; "))
}
