use std::fmt::Write as _;

use rayon::prelude::*;
use serde::Serialize;

use super::hal::{extract_supports, peak_reports, PeakReport, DEFAULT_THETA};
use super::{mse, nmae, snr, tsnr, TsnrConvention};
use crate::error::{Error, Result};
use crate::sigmodel::{SampledKernel, SignalTriple};

/// Anything that maps an observed record to a restored peak signal `p̂`.
pub trait Restorer: Sync {
    fn name(&self) -> &str;
    fn restore(&self, record: &SignalTriple) -> Result<Vec<f64>>;
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalConfig {
    pub theta: f64,
    pub tsnr: TsnrConvention,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            theta: DEFAULT_THETA,
            tsnr: TsnrConvention::EnergyRatio,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RecordMetrics {
    pub mse: f64,
    pub snr: f64,
    pub tsnr: f64,
    pub nmae_h: f64,
    pub nmae_a: f64,
    pub nmae_l: f64,
}

/// One peak of one record, for scatter diagnostics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PeakRow {
    pub record: usize,
    pub report: PeakReport,
}

impl PeakRow {
    pub fn id(&self) -> String {
        format!("{}-{}", self.record, self.report.support.peak)
    }

    pub fn height_error(&self) -> f64 {
        self.report.estimate.height - self.report.support.truth.height
    }
}

/// Scores one restoration against its ground truth.
pub fn score_record(
    record: &SignalTriple,
    p_hat: &[f64],
    kernel: &SampledKernel,
    cfg: &EvalConfig,
) -> Result<(RecordMetrics, Vec<PeakReport>)> {
    let supports = extract_supports(&record.p, &record.peaks, kernel, cfg.theta)?;
    let reports = peak_reports(p_hat, &supports)?;
    let mut union: Vec<usize> = supports.iter().flat_map(|s| s.indices()).collect();
    union.sort_unstable();
    union.dedup();

    let col = |f: &dyn Fn(&PeakReport) -> (f64, f64)| -> (Vec<f64>, Vec<f64>) { reports.iter().map(f).unzip() };
    let (th, eh) = col(&|r| (r.support.truth.height, r.estimate.height));
    let (ta, ea) = col(&|r| (r.support.truth.area, r.estimate.area));
    let (tl, el) = col(&|r| (r.support.truth.location as f64, r.estimate.location as f64));

    let metrics = RecordMetrics {
        mse: mse(&record.p, p_hat)?,
        snr: snr(&record.p, p_hat)?,
        tsnr: tsnr(&record.p, p_hat, &union, cfg.tsnr)?,
        nmae_h: nmae(&th, &eh)?,
        nmae_a: nmae(&ta, &ea)?,
        nmae_l: nmae(&tl, &el)?,
    };
    Ok((metrics, reports))
}

#[derive(Debug, Clone, Default)]
pub struct Evaluation {
    pub records: Vec<RecordMetrics>,
    pub peaks: Vec<PeakRow>,
}

/// Scores `restorer` on every record. Records are processed in parallel and
/// collected in index order.
pub fn evaluate_dataset(
    restorer: &dyn Restorer,
    records: &[SignalTriple],
    kernel: &SampledKernel,
    cfg: &EvalConfig,
) -> Result<Evaluation> {
    let scored: Vec<(RecordMetrics, Vec<PeakReport>)> = records
        .par_iter()
        .enumerate()
        .map(|(index, rec)| {
            restorer
                .restore(rec)
                .and_then(|p_hat| score_record(rec, &p_hat, kernel, cfg))
                .map_err(|e| Error::Record {
                    index,
                    source: Box::new(e),
                })
        })
        .collect::<Result<_>>()?;
    let mut out = Evaluation::default();
    for (record, (m, reports)) in scored.into_iter().enumerate() {
        out.records.push(m);
        out.peaks
            .extend(reports.into_iter().map(|report| PeakRow { record, report }));
    }
    Ok(out)
}

/// Mean and population standard deviation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
}

impl MeanStd {
    pub fn of(values: impl IntoIterator<Item = f64>) -> Self {
        let v: Vec<f64> = values.into_iter().collect();
        if v.is_empty() {
            return Self {
                mean: f64::NAN,
                std: f64::NAN,
            };
        }
        let n = v.len() as f64;
        let mean = v.iter().sum::<f64>() / n;
        if !mean.is_finite() {
            return Self { mean, std: f64::NAN };
        }
        let var = v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
        Self { mean, std: var.sqrt() }
    }
}

pub const METRIC_CSV_HEADER: &str = "dataset,method,mse_mean,mse_std,snr_mean,snr_std,tsnr_mean,tsnr_std,\
nmae_h_mean,nmae_h_std,nmae_a_mean,nmae_a_std,nmae_l_mean,nmae_l_std";

pub const SCATTER_CSV_HEADER: &str = "peak_id,true_h,est_h,overlap_ratio,overlap_class";

/// One line of the metric table.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricRow {
    pub dataset: String,
    pub method: String,
    pub mse: MeanStd,
    pub snr: MeanStd,
    pub tsnr: MeanStd,
    pub nmae_h: MeanStd,
    pub nmae_a: MeanStd,
    pub nmae_l: MeanStd,
}

impl MetricRow {
    /// Column order of the CSV, paired with whether larger is better.
    pub const COLUMNS: [(&'static str, bool); 6] = [
        ("mse", false),
        ("snr", true),
        ("tsnr", true),
        ("nmae_h", false),
        ("nmae_a", false),
        ("nmae_l", false),
    ];

    pub fn columns(&self) -> [MeanStd; 6] {
        [self.mse, self.snr, self.tsnr, self.nmae_h, self.nmae_a, self.nmae_l]
    }

    pub fn to_csv(&self) -> String {
        let mut s = format!("{},{}", self.dataset, self.method);
        for c in self.columns() {
            let _ = write!(s, ",{},{}", c.mean, c.std);
        }
        s
    }

    pub fn from_csv(line: &str) -> Option<Self> {
        let f: Vec<&str> = line.trim().split(',').collect();
        if f.len() != 14 {
            return None;
        }
        let num = |i: usize| f[i].parse::<f64>().ok();
        let ms = |i: usize| {
            Some(MeanStd {
                mean: num(i)?,
                std: num(i + 1)?,
            })
        };
        Some(Self {
            dataset: f[0].to_string(),
            method: f[1].to_string(),
            mse: ms(2)?,
            snr: ms(4)?,
            tsnr: ms(6)?,
            nmae_h: ms(8)?,
            nmae_a: ms(10)?,
            nmae_l: ms(12)?,
        })
    }
}

impl Evaluation {
    pub fn summary(&self, dataset: &str, method: &str) -> MetricRow {
        let col = |f: fn(&RecordMetrics) -> f64| MeanStd::of(self.records.iter().map(f));
        MetricRow {
            dataset: dataset.to_string(),
            method: method.to_string(),
            mse: col(|r| r.mse),
            snr: col(|r| r.snr),
            tsnr: col(|r| r.tsnr),
            nmae_h: col(|r| r.nmae_h),
            nmae_a: col(|r| r.nmae_a),
            nmae_l: col(|r| r.nmae_l),
        }
    }

    pub fn scatter_csv(&self) -> String {
        let mut s = String::from(SCATTER_CSV_HEADER);
        s.push('\n');
        for row in &self.peaks {
            let r = &row.report;
            let class = if r.is_overlapping() { "overlapping" } else { "isolated" };
            let _ = writeln!(
                s,
                "{},{},{},{},{}",
                row.id(),
                r.support.truth.height,
                r.estimate.height,
                r.overlap_ratio,
                class
            );
        }
        s
    }
}
