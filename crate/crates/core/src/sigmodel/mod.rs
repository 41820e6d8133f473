//! Seeded simulation of sparse chromatographic signals.
//!
//! A record is a spike train `s`, its clean peak signal `p = Kπ s` and a
//! degraded observation `z = G p + e`. Every record draws from its own
//! ChaCha8 stream keyed by `(seed, split, index)`, so a dataset is bitwise
//! reproducible no matter how many threads generate it.

mod dataset;
mod kernel;

pub use dataset::{
    generate_dataset, generate_split, load_dataset, read_records, write_records, Dataset, Manifest,
    SplitEntry, FORMAT_VERSION, MAGIC,
};
pub use kernel::{sample_kernel, KernelSpec, SampledKernel, DEFAULT_TRUNC_EPS, GAUSSIAN_LIMIT_A};

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::operators::{gaussian_blur, Conv1d, LinearOperator};

/// Rejection-sampling budget per requested spike.
pub const PLACEMENT_BUDGET_PER_SPIKE: usize = 1000;

/// One spike of the ground-truth train.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Peak {
    pub position: usize,
    pub amplitude: f64,
}

/// Ground truth and observation for one simulated signal.
#[derive(Debug, Clone, PartialEq)]
pub struct SignalTriple {
    pub s: Vec<f64>,
    pub p: Vec<f64>,
    pub z: Vec<f64>,
    pub peaks: Vec<Peak>,
}

impl SignalTriple {
    pub fn n(&self) -> usize {
        self.s.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Val, Split::Test];

    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }

    fn stream_tag(self) -> u64 {
        match self {
            Split::Train => 1,
            Split::Val => 2,
            Split::Test => 3,
        }
    }
}

/// Generation parameters of one benchmark dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSpec {
    pub n: usize,
    pub p_over_n: f64,
    pub d_min: usize,
    pub sigma_f: f64,
    pub a: f64,
    pub sigma_e: f64,
    pub sigma_g: f64,
    pub seed: u64,
    pub count_train: usize,
    pub count_val: usize,
    pub count_test: usize,
}

pub const PRESET_NAMES: [&str; 7] = ["D0", "D1", "D2", "D3", "D4", "D5", "D6"];

impl DatasetSpec {
    /// Built-in benchmark rows D0-D6 at `n = 2000`, blur width 1 and
    /// 1000/200/200 records.
    pub fn preset(name: &str) -> Option<Self> {
        let (p_over_n, d_min, a, sigma_e) = match name {
            "D0" => (0.015, 5, 0.2, 0.02),
            "D1" => (0.03, 3, 0.2, 0.02),
            "D2" => (0.045, 1, 0.2, 0.02),
            "D3" => (0.015, 5, 0.4, 0.02),
            "D4" => (0.015, 5, 0.6, 0.02),
            "D5" => (0.03, 3, 0.2, 0.04),
            "D6" => (0.03, 3, 0.2, 0.06),
            _ => return None,
        };
        Some(Self {
            n: 2000,
            p_over_n,
            d_min,
            sigma_f: 0.5,
            a,
            sigma_e,
            sigma_g: 1.0,
            seed: 0,
            count_train: 1000,
            count_val: 200,
            count_test: 200,
        })
    }

    /// Number of spikes, `round(p_over_n * n)`.
    pub fn spike_count(&self) -> usize {
        (self.p_over_n * self.n as f64).round() as usize
    }

    pub fn count(&self, split: Split) -> usize {
        match split {
            Split::Train => self.count_train,
            Split::Val => self.count_val,
            Split::Test => self.count_test,
        }
    }

    pub fn kernel_spec(&self) -> KernelSpec {
        KernelSpec::new(self.sigma_f, self.a)
    }

    /// The forward model `H = G ∘ Kπ` these records were degraded with.
    pub fn forward_model(&self) -> Result<crate::operators::ForwardModel> {
        let kernel = sample_kernel(&self.kernel_spec())?;
        crate::operators::ForwardModel::new(kernel, self.sigma_g, self.n)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::spec("n must be >= 1"));
        }
        if !(self.p_over_n > 0.0 && self.p_over_n < 1.0) {
            return Err(Error::spec(format!("p_over_n must lie in (0,1), got {}", self.p_over_n)));
        }
        if self.d_min == 0 {
            return Err(Error::spec("d_min must be >= 1"));
        }
        if !(self.sigma_e >= 0.0 && self.sigma_e.is_finite()) {
            return Err(Error::spec(format!("sigma_e must be >= 0, got {}", self.sigma_e)));
        }
        if !(self.sigma_g > 0.0 && self.sigma_g.is_finite()) {
            return Err(Error::spec(format!("sigma_g must be > 0, got {}", self.sigma_g)));
        }
        self.kernel_spec().validate()?;
        let p = self.spike_count();
        if p * self.d_min > self.n {
            return Err(Error::spec(format!(
                "{p} spikes with d_min={} do not fit in n={}",
                self.d_min, self.n
            )));
        }
        Ok(())
    }
}

/// Deterministic generator for record `index` of `split`.
///
/// ChaCha8 keyed by `seed`, with the 64-bit stream id `(split tag << 40) | index`.
pub fn record_rng(seed: u64, split: Split, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream((split.stream_tag() << 40) | index as u64);
    rng
}

/// Draws `count` spike positions at pairwise distance `>= d_min` by rejection
/// sampling, then one `|N(0,1)|` amplitude per spike in ascending position
/// order.
pub fn generate_spike_train<R: Rng + ?Sized>(
    n: usize,
    count: usize,
    d_min: usize,
    rng: &mut R,
) -> Result<(Vec<f64>, Vec<Peak>)> {
    if count * d_min > n {
        return Err(Error::spec(format!(
            "{count} spikes with d_min={d_min} do not fit in n={n}"
        )));
    }
    let budget = PLACEMENT_BUDGET_PER_SPIKE * count;
    let mut positions: Vec<usize> = Vec::with_capacity(count);
    let mut attempts = 0;
    while positions.len() < count {
        if attempts >= budget {
            return Err(Error::Placement {
                requested: count,
                placed: positions.len(),
                d_min,
                attempts,
            });
        }
        attempts += 1;
        let cand = rng.gen_range(0..n);
        if positions.iter().all(|&q| q.abs_diff(cand) >= d_min) {
            positions.push(cand);
        }
    }
    positions.sort_unstable();

    let mut s = vec![0.0; n];
    let peaks = positions
        .into_iter()
        .map(|position| {
            let g: f64 = rng.sample(StandardNormal);
            let amplitude = g.abs();
            s[position] = amplitude;
            Peak { position, amplitude }
        })
        .collect();
    Ok((s, peaks))
}

/// `z = G p + e` with unit-sum Gaussian blur of width `sigma_g` and i.i.d.
/// `N(0, sigma_e²)` noise.
pub fn degrade<R: Rng + ?Sized>(p: &[f64], sigma_g: f64, sigma_e: f64, rng: &mut R) -> Result<Vec<f64>> {
    let blur = gaussian_blur(p.len(), sigma_g)?;
    degrade_with(p, &blur, sigma_e, rng)
}

pub fn degrade_with<R: Rng + ?Sized>(p: &[f64], blur: &Conv1d, sigma_e: f64, rng: &mut R) -> Result<Vec<f64>> {
    if !(sigma_e >= 0.0 && sigma_e.is_finite()) {
        return Err(Error::spec(format!("sigma_e must be >= 0, got {sigma_e}")));
    }
    if p.iter().any(|v| !v.is_finite()) {
        return Err(Error::spec("signal contains non-finite values"));
    }
    let mut z = blur.apply(p);
    if sigma_e > 0.0 {
        for v in z.iter_mut() {
            let e: f64 = rng.sample(StandardNormal);
            *v += sigma_e * e;
        }
    }
    Ok(z)
}

/// Generator for one dataset: kernel and blur are sampled once and shared.
#[derive(Debug, Clone)]
pub struct RecordGenerator {
    spec: DatasetSpec,
    peak: Conv1d,
    blur: Conv1d,
}

impl RecordGenerator {
    pub fn new(spec: &DatasetSpec) -> Result<Self> {
        spec.validate()?;
        let kernel = sample_kernel(&spec.kernel_spec())?;
        Ok(Self {
            spec: spec.clone(),
            peak: Conv1d::new(spec.n, kernel.taps, kernel.offset),
            blur: gaussian_blur(spec.n, spec.sigma_g)?,
        })
    }

    pub fn record(&self, split: Split, index: usize) -> Result<SignalTriple> {
        let mut rng = record_rng(self.spec.seed, split, index);
        let (s, peaks) =
            generate_spike_train(self.spec.n, self.spec.spike_count(), self.spec.d_min, &mut rng)?;
        let p = self.peak.apply(&s);
        let z = degrade_with(&p, &self.blur, self.spec.sigma_e, &mut rng)?;
        Ok(SignalTriple { s, p, z, peaks })
    }
}
