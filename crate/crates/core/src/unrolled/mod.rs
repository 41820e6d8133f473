//! K-layer unrolled restoration networks.
//!
//! Each layer runs one iteration of the matching classical solver with its
//! own hyperparameters. Parameters are stored unconstrained and mapped
//! through softplus, so they stay strictly positive under any first-order
//! update. With the classical defaults a network reproduces K iterations of
//! its solver exactly.

mod checkpoint;
mod tape;
mod train;

pub use checkpoint::{forward_fingerprint, Checkpoint, CHECKPOINT_FORMAT};
pub use tape::{ball_projection_vjp, cg_vjp, hq_weight_vjp, soft_threshold_vjp, Gradients, LayerTape, Tape};
pub use train::{loss_and_grad, mean_loss, train, Adam, EpochStats, History, LossTarget, TrainConfig};

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::operators::{ForwardModel, LinearOperator};
use crate::solvers::{hq_step, ista_step, pd_step, CgTrace, HqConfig, PdState};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Variant {
    #[serde(rename = "u-ista")]
    Ista,
    #[serde(rename = "u-pd")]
    Pd,
    #[serde(rename = "u-hq")]
    Hq,
}

impl Variant {
    pub const ALL: [Variant; 3] = [Variant::Hq, Variant::Ista, Variant::Pd];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Ista => "u-ista",
            Variant::Pd => "u-pd",
            Variant::Hq => "u-hq",
        }
    }

    /// Learnable values per layer.
    pub fn layer_width(self) -> usize {
        match self {
            Variant::Ista => 2,
            Variant::Pd => 2,
            Variant::Hq => 4,
        }
    }

    /// Learnable values shared by all layers.
    pub fn shared_width(self) -> usize {
        match self {
            Variant::Pd => 1,
            _ => 0,
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "u-ista" => Ok(Variant::Ista),
            "u-pd" => Ok(Variant::Pd),
            "u-hq" => Ok(Variant::Hq),
            _ => Err(Error::spec(format!("unknown unrolled variant {s:?}"))),
        }
    }
}

/// `log(1 + eᵘ)`.
pub fn softplus(u: f64) -> f64 {
    if u > 30.0 {
        u + (-u).exp().ln_1p()
    } else {
        u.exp().ln_1p()
    }
}

/// Inverse of [`softplus`] for `v > 0`.
pub fn softplus_inv(v: f64) -> f64 {
    if v > 30.0 {
        v + (-(-v).exp_m1()).ln()
    } else {
        v.exp_m1().ln()
    }
}

/// Derivative of [`softplus`].
pub fn sigmoid(u: f64) -> f64 {
    if u >= 0.0 {
        1.0 / (1.0 + (-u).exp())
    } else {
        let e = u.exp();
        e / (1.0 + e)
    }
}

/// Lower clamp for unconstrained parameters; keeps softplus away from 0.
pub const MIN_UNCONSTRAINED: f64 = -500.0;

/// Initial values for the learnable parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelInit {
    pub chi: f64,
    pub rho: f64,
    pub lambda1: f64,
    pub lambda2: f64,
    pub delta1: f64,
    pub delta2: f64,
    pub cg_iters: usize,
}

impl ModelInit {
    pub const DEFAULT_CHI: f64 = 0.01;
    pub const DEFAULT_CG_ITERS: usize = 20;

    /// Classical defaults with `ρ = σ_e √n`.
    pub fn defaults(sigma_e: f64, n: usize) -> Self {
        Self {
            chi: Self::DEFAULT_CHI,
            rho: sigma_e * (n as f64).sqrt(),
            lambda1: 0.1,
            lambda2: 0.1,
            delta1: 1.0,
            delta2: 1.0,
            cg_iters: Self::DEFAULT_CG_ITERS,
        }
    }
}

/// An unrolled network bound to its forward model.
#[derive(Debug, Clone)]
pub struct UnrolledModel {
    variant: Variant,
    /// Unconstrained parameters, one row per layer.
    layers: Vec<Vec<f64>>,
    /// Unconstrained shared parameters.
    shared: Vec<f64>,
    cg_iters: usize,
    op: Arc<ForwardModel>,
}

/// Natural (positive) parameters of one layer.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LayerParams {
    Ista { gamma: f64, chi: f64 },
    Pd { tau: f64, sigma: f64 },
    Hq { lambda1: f64, lambda2: f64, delta1: f64, delta2: f64 },
}

impl LayerParams {
    fn values(&self) -> Vec<f64> {
        match *self {
            LayerParams::Ista { gamma, chi } => vec![gamma, chi],
            LayerParams::Pd { tau, sigma } => vec![tau, sigma],
            LayerParams::Hq {
                lambda1,
                lambda2,
                delta1,
                delta2,
            } => vec![lambda1, lambda2, delta1, delta2],
        }
    }
}

impl UnrolledModel {
    /// Network whose every layer starts at the classical default step sizes.
    pub fn new(variant: Variant, k: usize, op: Arc<ForwardModel>, init: ModelInit) -> Result<Self> {
        let l = op.norm();
        let layer = match variant {
            Variant::Ista => LayerParams::Ista {
                gamma: 1.0 / (l * l),
                chi: init.chi,
            },
            Variant::Pd => LayerParams::Pd {
                tau: 0.99 / l,
                sigma: 0.99 / l,
            },
            Variant::Hq => LayerParams::Hq {
                lambda1: init.lambda1,
                lambda2: init.lambda2,
                delta1: init.delta1,
                delta2: init.delta2,
            },
        };
        let shared = match variant {
            Variant::Pd => vec![init.rho],
            _ => vec![],
        };
        Self::from_natural(variant, vec![layer; k], shared, init.cg_iters, op)
    }

    pub fn from_natural(
        variant: Variant,
        layers: Vec<LayerParams>,
        shared: Vec<f64>,
        cg_iters: usize,
        op: Arc<ForwardModel>,
    ) -> Result<Self> {
        let rows = layers
            .iter()
            .map(|p| {
                let matches = matches!(
                    (variant, p),
                    (Variant::Ista, LayerParams::Ista { .. })
                        | (Variant::Pd, LayerParams::Pd { .. })
                        | (Variant::Hq, LayerParams::Hq { .. })
                );
                if !matches {
                    return Err(Error::spec(format!("layer parameters do not match {variant}")));
                }
                p.values().into_iter().map(to_unconstrained).collect()
            })
            .collect::<Result<Vec<Vec<f64>>>>()?;
        let shared = shared.into_iter().map(to_unconstrained).collect::<Result<Vec<f64>>>()?;
        Self::from_unconstrained(variant, rows, shared, cg_iters, op)
    }

    pub fn from_unconstrained(
        variant: Variant,
        layers: Vec<Vec<f64>>,
        shared: Vec<f64>,
        cg_iters: usize,
        op: Arc<ForwardModel>,
    ) -> Result<Self> {
        if layers.iter().any(|r| r.len() != variant.layer_width()) || shared.len() != variant.shared_width() {
            return Err(Error::spec(format!("parameter shape does not match {variant}")));
        }
        if layers.iter().flatten().chain(&shared).any(|v| !v.is_finite()) {
            return Err(Error::spec("non-finite parameter"));
        }
        if variant == Variant::Hq && cg_iters == 0 {
            return Err(Error::spec("at least one CG iteration is required"));
        }
        Ok(Self {
            variant,
            layers,
            shared,
            cg_iters,
            op,
        })
    }

    pub fn variant(&self) -> Variant {
        self.variant
    }

    pub fn k(&self) -> usize {
        self.layers.len()
    }

    pub fn cg_iters(&self) -> usize {
        self.cg_iters
    }

    pub fn op(&self) -> &Arc<ForwardModel> {
        &self.op
    }

    pub fn unconstrained_layers(&self) -> &[Vec<f64>] {
        &self.layers
    }

    pub fn unconstrained_shared(&self) -> &[f64] {
        &self.shared
    }

    pub fn layer_params(&self, k: usize) -> LayerParams {
        let v: Vec<f64> = self.layers[k].iter().map(|&u| softplus(u)).collect();
        match self.variant {
            Variant::Ista => LayerParams::Ista { gamma: v[0], chi: v[1] },
            Variant::Pd => LayerParams::Pd { tau: v[0], sigma: v[1] },
            Variant::Hq => LayerParams::Hq {
                lambda1: v[0],
                lambda2: v[1],
                delta1: v[2],
                delta2: v[3],
            },
        }
    }

    /// Shared `ρ` of a primal-dual network.
    pub fn rho(&self) -> Option<f64> {
        self.shared.first().map(|&u| softplus(u))
    }

    /// All natural parameter values, layer by layer then shared.
    pub fn natural_params(&self) -> Vec<f64> {
        self.flat_params().into_iter().map(softplus).collect()
    }

    pub fn param_count(&self) -> usize {
        self.layers.len() * self.variant.layer_width() + self.shared.len()
    }

    /// Unconstrained parameters, layer by layer then shared.
    pub fn flat_params(&self) -> Vec<f64> {
        self.layers.iter().flatten().chain(&self.shared).copied().collect()
    }

    pub fn set_flat_params(&mut self, flat: &[f64]) -> Result<()> {
        check_len(self.param_count(), flat.len())?;
        let w = self.variant.layer_width();
        for (k, row) in self.layers.iter_mut().enumerate() {
            row.copy_from_slice(&flat[k * w..(k + 1) * w]);
        }
        let off = self.layers.len() * w;
        self.shared.copy_from_slice(&flat[off..]);
        Ok(())
    }

    /// Runs the K layers from zero and records a tape for [`Tape::backward`].
    pub fn forward(&self, z: &[f64]) -> Result<(Vec<f64>, Vec<f64>, Tape)> {
        let (x, tape) = self.run(z, true)?;
        let p = self.op.peak_signal(&x);
        Ok((x, p, tape.expect("tape requested")))
    }

    /// Forward pass without recording, with its wall-clock duration.
    pub fn infer(&self, z: &[f64]) -> Result<(Vec<f64>, Vec<f64>, Duration)> {
        let start = Instant::now();
        let (x, _) = self.run(z, false)?;
        let p = self.op.peak_signal(&x);
        Ok((x, p, start.elapsed()))
    }

    fn run(&self, z: &[f64], record: bool) -> Result<(Vec<f64>, Option<Tape>)> {
        let n = self.op.n();
        check_len(n, z.len())?;
        let op: &dyn LinearOperator = self.op.as_ref();
        let mut layers = Vec::with_capacity(if record { self.k() } else { 0 });
        let finite = |v: &[f64], layer: usize| -> Result<()> {
            if v.iter().all(|x| x.is_finite()) {
                Ok(())
            } else {
                Err(Error::NonFinite { layer })
            }
        };

        let x = match self.variant {
            Variant::Ista => {
                let mut x = vec![0.0; n];
                for k in 0..self.k() {
                    let LayerParams::Ista { gamma, chi } = self.layer_params(k) else {
                        unreachable!()
                    };
                    let (next, step) = ista_step(op, &x, z, gamma, chi);
                    // thresholding would silently map NaN to 0
                    finite(&step.v, k)?;
                    finite(&next, k)?;
                    if record {
                        layers.push(LayerTape::Ista {
                            x_in: std::mem::take(&mut x),
                            step,
                            gamma,
                            chi,
                        });
                    }
                    x = next;
                }
                x
            }
            Variant::Pd => {
                let rho = self.rho().expect("pd has rho");
                let mut state = PdState::zeros(n, n);
                for k in 0..self.k() {
                    let LayerParams::Pd { tau, sigma } = self.layer_params(k) else {
                        unreachable!()
                    };
                    let (next, step) = pd_step(op, z, rho, tau, sigma, &state);
                    finite(&step.v, k)?;
                    finite(&next.x, k)?;
                    finite(&next.y, k)?;
                    if record {
                        layers.push(LayerTape::Pd {
                            state_in: state,
                            step,
                            tau,
                            sigma,
                            rho,
                        });
                    }
                    state = next;
                }
                state.x
            }
            Variant::Hq => {
                let htz = op.apply_adjoint(z);
                let mut x = vec![0.0; n];
                for k in 0..self.k() {
                    let LayerParams::Hq {
                        lambda1,
                        lambda2,
                        delta1,
                        delta2,
                    } = self.layer_params(k)
                    else {
                        unreachable!()
                    };
                    let cfg = HqConfig::penalty(lambda1, lambda2, delta1, delta2)
                        .with_iterations(1, self.cg_iters, 0.0);
                    let mut cg = CgTrace::default();
                    let (next, omega) = hq_step(op, &htz, &x, &cfg, record.then_some(&mut cg));
                    finite(&next, k)?;
                    if record {
                        layers.push(LayerTape::Hq {
                            x_in: std::mem::take(&mut x),
                            omega,
                            cg,
                            penalty: cfg,
                        });
                    }
                    x = next;
                }
                x
            }
        };
        let tape = record.then(|| Tape::new(self.variant, z.to_vec(), layers, self.op.clone()));
        Ok((x, tape))
    }
}

fn to_unconstrained(v: f64) -> Result<f64> {
    if !(v > 0.0 && v.is_finite()) {
        return Err(Error::spec(format!("learnable parameters must be positive, got {v}")));
    }
    Ok(softplus_inv(v))
}
