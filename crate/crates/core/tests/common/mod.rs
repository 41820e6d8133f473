//! Fixtures shared by the integration suites.
#![allow(dead_code)]

use std::sync::Arc;

use peakunroll::operators::ForwardModel;
use peakunroll::sigmodel::{DatasetSpec, RecordGenerator, SignalTriple, Split};
use peakunroll::unrolled::{LayerParams, ModelInit, UnrolledModel, Variant};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// D0-like spec at a small length.
pub fn small_spec(n: usize, seed: u64) -> DatasetSpec {
    let spikes = (n / 16).max(1);
    DatasetSpec {
        n,
        p_over_n: spikes as f64 / n as f64,
        d_min: 3,
        sigma_f: 0.5,
        a: 0.2,
        sigma_e: 0.02,
        sigma_g: 1.0,
        seed,
        count_train: 8,
        count_val: 4,
        count_test: 4,
    }
}

pub fn forward(spec: &DatasetSpec) -> Arc<ForwardModel> {
    Arc::new(spec.forward_model().unwrap())
}

/// Record `index` of the training split of `small_spec(n, seed)`.
pub fn instance(n: usize, seed: u64, index: usize) -> (DatasetSpec, SignalTriple) {
    let spec = small_spec(n, seed);
    let rec = RecordGenerator::new(&spec).unwrap().record(Split::Train, index).unwrap();
    (spec, rec)
}

pub fn default_model(variant: Variant, k: usize, spec: &DatasetSpec, cg_iters: usize) -> UnrolledModel {
    let init = ModelInit {
        cg_iters,
        ..ModelInit::defaults(spec.sigma_e, spec.n)
    };
    UnrolledModel::new(variant, k, forward(spec), init).unwrap()
}

/// Natural parameters of `model` with each value scaled by `exp(U(lo, hi))`.
pub fn jitter(model: &UnrolledModel, rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> Vec<f64> {
    model
        .natural_params()
        .into_iter()
        .map(|v| v * rng.gen_range(lo..hi).exp())
        .collect()
}

/// Rebuilds a model of the same shape from a flat natural parameter vector.
pub fn with_natural(model: &UnrolledModel, flat: &[f64]) -> UnrolledModel {
    let v = model.variant();
    let w = v.layer_width();
    let layers = (0..model.k())
        .map(|k| {
            let p = &flat[k * w..(k + 1) * w];
            match v {
                Variant::Ista => LayerParams::Ista { gamma: p[0], chi: p[1] },
                Variant::Pd => LayerParams::Pd { tau: p[0], sigma: p[1] },
                Variant::Hq => LayerParams::Hq {
                    lambda1: p[0],
                    lambda2: p[1],
                    delta1: p[2],
                    delta2: p[3],
                },
            }
        })
        .collect();
    let shared = flat[model.k() * w..].to_vec();
    UnrolledModel::from_natural(v, layers, shared, model.cg_iters(), model.op().clone()).unwrap()
}

/// `(1/n)‖p̂ − p‖²`.
pub fn peak_loss(model: &UnrolledModel, rec: &SignalTriple) -> f64 {
    let (_, p, _) = model.infer(&rec.z).unwrap();
    p.iter().zip(&rec.p).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / p.len() as f64
}

#[derive(Debug, Clone, Copy)]
pub struct Probe {
    pub variant: Variant,
    pub param: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub rel_err: f64,
}

/// Relative error with an absolute floor for gradients that vanish.
pub const GRAD_FLOOR: f64 = 1e-8;
pub const FD_STEP: f64 = 1e-5;
pub const KINK_MARGIN: f64 = 1e-6;

/// Reverse-mode vs central finite differences on random (instance,
/// parameter) pairs at `n = 16`. Probes within `KINK_MARGIN` of a
/// non-smooth point, or whose branch pattern changes across `±h`, are
/// skipped. Returns the accepted probes and the skip count.
pub fn gradient_probes(variant: Variant, k: usize, cg_iters: usize, wanted: usize, seed: u64) -> (Vec<Probe>, usize) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    let mut skipped = 0;
    let mut attempt = 0u64;
    while out.len() < wanted && attempt < 50 * wanted as u64 {
        attempt += 1;
        let (spec, rec) = instance(16, seed.wrapping_mul(1000).wrapping_add(attempt), 0);
        let base = default_model(variant, k, &spec, cg_iters);
        let params = jitter(&base, &mut rng, -0.5, 1.0);
        let model = with_natural(&base, &params);
        let i = rng.gen_range(0..params.len());

        let (_, p, tape) = model.forward(&rec.z).unwrap();
        let n = p.len() as f64;
        let pb: Vec<f64> = p.iter().zip(&rec.p).map(|(a, b)| 2.0 * (a - b) / n).collect();
        let analytic = tape.backward(&pb).unwrap().natural[i];

        let mut plus = params.clone();
        plus[i] += FD_STEP;
        let mut minus = params.clone();
        minus[i] -= FD_STEP;
        if minus[i] <= 0.0 {
            skipped += 1;
            continue;
        }
        let mp = with_natural(&base, &plus);
        let mm = with_natural(&base, &minus);
        let tp = mp.forward(&rec.z).unwrap().2;
        let tm = mm.forward(&rec.z).unwrap().2;
        let kinky = tape.kink_margin() < KINK_MARGIN
            || tp.active_pattern() != tape.active_pattern()
            || tm.active_pattern() != tape.active_pattern();
        if kinky {
            skipped += 1;
            continue;
        }
        let numeric = (peak_loss(&mp, &rec) - peak_loss(&mm, &rec)) / (2.0 * FD_STEP);
        let rel_err = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(GRAD_FLOOR);
        out.push(Probe {
            variant,
            param: i,
            analytic,
            numeric,
            rel_err,
        });
    }
    (out, skipped)
}
