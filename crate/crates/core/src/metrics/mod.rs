//! Restoration quality measures.
//!
//! Global measures (MSE, SNR, truncated SNR) compare the clean peak signal
//! `p` with a restoration `p̂`. Peak-morphology measures use oracle supports
//! taken from the ground truth: each peak's height, trapezoid area and
//! location are read on the truth and on `p̂` over the same index range and
//! aggregated with a normalized mean absolute error.

mod eval;
mod hal;

pub use eval::{
    evaluate_dataset, score_record, EvalConfig, Evaluation, MeanStd, MetricRow, PeakRow, RecordMetrics,
    Restorer, METRIC_CSV_HEADER, SCATTER_CSV_HEADER,
};
pub use hal::{
    extract_hal, extract_supports, overlap_ratio, trapezoid, Hal, PeakReport, PeakSupport,
    DEFAULT_THETA, OVERLAP_THRESHOLD,
};

use crate::error::{check_len, Error, Result};

/// How the truncated SNR turns its energy ratio into decibels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TsnrConvention {
    /// `10·log10(Σ p² / Σ e²)`, which coincides with SNR on the full support.
    #[default]
    EnergyRatio,
    /// `20·log10(Σ p² / Σ e²)`.
    Literal,
}

/// `(1/n) ‖p − p̂‖²`.
pub fn mse(p: &[f64], p_hat: &[f64]) -> Result<f64> {
    check_len(p.len(), p_hat.len())?;
    if p.is_empty() {
        return Err(Error::EmptySupport);
    }
    Ok(sq_err(p.iter().zip(p_hat)) / p.len() as f64)
}

/// `20·log10(‖p‖ / ‖p − p̂‖)` in dB; `+∞` when `p̂ = p`.
pub fn snr(p: &[f64], p_hat: &[f64]) -> Result<f64> {
    check_len(p.len(), p_hat.len())?;
    let signal: f64 = p.iter().map(|v| v * v).sum();
    if signal == 0.0 {
        return Err(Error::ZeroReference);
    }
    let err = sq_err(p.iter().zip(p_hat));
    if err == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (signal / err).log10())
}

/// SNR restricted to the index set `support`.
pub fn tsnr(p: &[f64], p_hat: &[f64], support: &[usize], convention: TsnrConvention) -> Result<f64> {
    check_len(p.len(), p_hat.len())?;
    if support.is_empty() {
        return Err(Error::EmptySupport);
    }
    let signal: f64 = support.iter().map(|&i| p[i] * p[i]).sum();
    if signal == 0.0 {
        return Err(Error::ZeroReference);
    }
    let err = sq_err(support.iter().map(|&i| (&p[i], &p_hat[i])));
    if err == 0.0 {
        return Ok(f64::INFINITY);
    }
    let ratio = (signal / err).log10();
    Ok(match convention {
        TsnrConvention::EnergyRatio => 10.0 * ratio,
        TsnrConvention::Literal => 20.0 * ratio,
    })
}

/// `Σ|tⱼ − eⱼ| / Σ|tⱼ|`.
pub fn nmae(truth: &[f64], est: &[f64]) -> Result<f64> {
    check_len(truth.len(), est.len())?;
    let den: f64 = truth.iter().map(|v| v.abs()).sum();
    if truth.is_empty() || den == 0.0 {
        return Err(Error::ZeroDenominator);
    }
    let num: f64 = truth.iter().zip(est).map(|(t, e)| (t - e).abs()).sum();
    Ok(num / den)
}

fn sq_err<'a>(pairs: impl Iterator<Item = (&'a f64, &'a f64)>) -> f64 {
    pairs.map(|(a, b)| (a - b) * (a - b)).sum()
}
