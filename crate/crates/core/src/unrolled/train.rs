use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{UnrolledModel, MIN_UNCONSTRAINED};
use crate::error::{Error, Result};
use crate::sigmodel::SignalTriple;

/// What the training loss compares.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LossTarget {
    /// `(1/n)‖Kπ x̂ − p‖²`.
    #[default]
    Peaks,
    /// `(1/n)‖x̂ − s‖²`.
    Spikes,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub loss: LossTarget,
    /// Seeds the per-epoch shuffle.
    pub seed: u64,
    /// Stop after this many epochs without a validation improvement.
    pub patience: Option<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 200,
            batch_size: 16,
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            loss: LossTarget::Peaks,
            seed: 0,
            patience: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::spec("batch size must be positive"));
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::spec("learning rate must be finite and >= 0"));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) || !(self.eps > 0.0) {
            return Err(Error::spec("invalid Adam moments"));
        }
        Ok(())
    }
}

/// Plain Adam on a flat parameter vector.
#[derive(Debug, Clone)]
pub struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
}

impl Adam {
    pub fn new(dim: usize, cfg: &TrainConfig) -> Self {
        Self {
            m: vec![0.0; dim],
            v: vec![0.0; dim],
            t: 0,
            lr: cfg.learning_rate,
            beta1: cfg.beta1,
            beta2: cfg.beta2,
            eps: cfg.eps,
        }
    }

    pub fn step(&mut self, params: &mut [f64], grad: &[f64]) {
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t);
        let c2 = 1.0 - self.beta2.powi(self.t);
        for i in 0..params.len() {
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * grad[i];
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * grad[i] * grad[i];
            let mh = self.m[i] / c1;
            let vh = self.v[i] / c2;
            params[i] -= self.lr * mh / (vh.sqrt() + self.eps);
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct History {
    /// Validation loss of the initial parameters.
    pub initial_val_loss: f64,
    pub epochs: Vec<EpochStats>,
    /// Epoch whose parameters were kept; 0 means the initial ones.
    pub best_epoch: usize,
    pub best_val_loss: f64,
}

fn record_loss(x_hat: &[f64], p_hat: &[f64], rec: &SignalTriple, target: LossTarget) -> (f64, Vec<f64>) {
    let (est, truth) = match target {
        LossTarget::Peaks => (p_hat, &rec.p),
        LossTarget::Spikes => (x_hat, &rec.s),
    };
    let n = truth.len() as f64;
    let diff: Vec<f64> = est.iter().zip(truth.iter()).map(|(a, b)| a - b).collect();
    let loss = diff.iter().map(|d| d * d).sum::<f64>() / n;
    let grad = diff.iter().map(|d| 2.0 * d / n).collect();
    (loss, grad)
}

/// Loss of one record and its gradient with respect to the unconstrained
/// parameters.
pub fn loss_and_grad(model: &UnrolledModel, rec: &SignalTriple, target: LossTarget) -> Result<(f64, Vec<f64>)> {
    let (x, p, tape) = model.forward(&rec.z)?;
    let (loss, g) = record_loss(&x, &p, rec, target);
    let grads = match target {
        LossTarget::Peaks => tape.backward(&g)?,
        LossTarget::Spikes => tape.backward_x(&g)?,
    };
    Ok((loss, grads.unconstrained(&model.flat_params())))
}

/// Mean loss over `records`.
pub fn mean_loss(model: &UnrolledModel, records: &[SignalTriple], target: LossTarget) -> Result<f64> {
    let losses: Vec<f64> = records
        .par_iter()
        .map(|rec| {
            let (x, p, _) = model.infer(&rec.z)?;
            Ok(record_loss(&x, &p, rec, target).0)
        })
        .collect::<Result<_>>()?;
    Ok(losses.iter().sum::<f64>() / losses.len().max(1) as f64)
}

/// Trains with Adam on shuffled mini-batches.
///
/// Per-record gradients are computed in parallel and summed in record order,
/// so results do not depend on the thread count. The parameters with the
/// lowest validation loss (the initial ones included) are returned.
pub fn train(
    mut model: UnrolledModel,
    train_set: &[SignalTriple],
    val_set: &[SignalTriple],
    cfg: &TrainConfig,
) -> Result<(UnrolledModel, History)> {
    cfg.validate()?;
    if train_set.is_empty() {
        return Err(Error::spec("empty training set"));
    }
    let eval = |m: &UnrolledModel| -> Result<f64> {
        if val_set.is_empty() {
            Ok(f64::NAN)
        } else {
            mean_loss(m, val_set, cfg.loss)
        }
    };

    let mut params = model.flat_params();
    let mut adam = Adam::new(params.len(), cfg);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..train_set.len()).collect();

    let initial = eval(&model)?;
    let mut history = History {
        initial_val_loss: initial,
        epochs: Vec::with_capacity(cfg.epochs),
        best_epoch: 0,
        best_val_loss: initial,
    };
    let mut best = params.clone();
    let mut stale = 0;

    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for (batch, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let abort = || Error::TrainingAborted { epoch, batch };
            let results: Vec<(f64, Vec<f64>)> = chunk
                .par_iter()
                .map(|&i| loss_and_grad(&model, &train_set[i], cfg.loss))
                .collect::<Result<_>>()
                .map_err(|e| match e {
                    Error::NonFinite { .. } => abort(),
                    other => other,
                })?;
            let mut grad = vec![0.0; params.len()];
            for (loss, g) in &results {
                if !loss.is_finite() || g.iter().any(|v| !v.is_finite()) {
                    return Err(abort());
                }
                epoch_loss += loss;
                for (a, b) in grad.iter_mut().zip(g) {
                    *a += b;
                }
            }
            let scale = 1.0 / chunk.len() as f64;
            grad.iter_mut().for_each(|g| *g *= scale);
            adam.step(&mut params, &grad);
            for p in params.iter_mut() {
                *p = p.max(MIN_UNCONSTRAINED);
            }
            model.set_flat_params(&params)?;
        }
        let train_loss = epoch_loss / train_set.len() as f64;
        let val_loss = eval(&model)?;
        history.epochs.push(EpochStats {
            epoch,
            train_loss,
            val_loss,
        });
        // a NaN validation loss (no validation set) keeps the final epoch
        if val_loss < history.best_val_loss || history.best_val_loss.is_nan() {
            history.best_val_loss = val_loss;
            history.best_epoch = epoch;
            best.clone_from(&params);
            stale = 0;
        } else {
            stale += 1;
            if cfg.patience.is_some_and(|p| stale >= p) {
                break;
            }
        }
    }
    model.set_flat_params(&best)?;
    Ok((model, history))
}
