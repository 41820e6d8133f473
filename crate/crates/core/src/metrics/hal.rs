use serde::Serialize;

use crate::error::{check_len, Error, Result};
use crate::sigmodel::{Peak, SampledKernel};

/// Support threshold as a fraction of the true peak height.
pub const DEFAULT_THETA: f64 = 1.0 / 20.0;
/// Overlap fraction above which a peak counts as overlapping.
pub const OVERLAP_THRESHOLD: f64 = 0.30;

/// Height, trapezoid area and location of one peak.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Hal {
    pub height: f64,
    pub area: f64,
    pub location: usize,
}

/// Oracle support `start..=end` of peak `peak`, with the truth HAL read from
/// the isolated convolved peak.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PeakSupport {
    pub peak: usize,
    pub start: usize,
    pub end: usize,
    pub theta: f64,
    pub truth: Hal,
}

impl PeakSupport {
    pub fn len(&self) -> usize {
        self.end - self.start + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn indices(&self) -> std::ops::RangeInclusive<usize> {
        self.start..=self.end
    }
}

/// Truth and estimate HAL of one peak plus its overlap fraction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PeakReport {
    pub support: PeakSupport,
    pub estimate: Hal,
    pub overlap_ratio: f64,
}

impl PeakReport {
    pub fn is_overlapping(&self) -> bool {
        self.overlap_ratio > OVERLAP_THRESHOLD
    }
}

/// Unit-spacing trapezoid rule.
pub fn trapezoid(values: &[f64]) -> f64 {
    values.windows(2).map(|w| 0.5 * (w[0] + w[1])).sum()
}

/// Smallest index of the maximum.
fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Oracle supports of every peak of a ground-truth record.
///
/// Each peak is rendered in isolation (`amplitude · kernel`, clipped to the
/// grid); its height and location are the maximum and first argmax of that
/// isolated peak, and its support is the maximal contiguous range around the
/// location where the isolated peak exceeds `theta · height`.
pub fn extract_supports(
    p_truth: &[f64],
    peaks: &[Peak],
    kernel: &SampledKernel,
    theta: f64,
) -> Result<Vec<PeakSupport>> {
    if !(theta > 0.0 && theta < 1.0) {
        return Err(Error::spec(format!("support threshold must lie in (0,1), got {theta}")));
    }
    let n = p_truth.len();
    peaks
        .iter()
        .enumerate()
        .map(|(j, pk)| {
            // isolated peak on its clipped footprint
            let lo = (pk.position as isize + kernel.offset).max(0);
            let hi = (pk.position as isize + kernel.offset + kernel.taps.len() as isize).min(n as isize);
            if lo >= hi {
                return Err(Error::EmptySupport);
            }
            let (lo, hi) = (lo as usize, hi as usize);
            let iso: Vec<f64> = (lo..hi)
                .map(|i| {
                    let k = (i as isize - pk.position as isize - kernel.offset) as usize;
                    pk.amplitude * kernel.taps[k]
                })
                .collect();
            let m = argmax(&iso);
            let height = iso[m];
            let cut = theta * height;
            if !(height > 0.0) {
                return Err(Error::EmptySupport);
            }
            let mut a = m;
            while a > 0 && iso[a - 1] > cut {
                a -= 1;
            }
            let mut b = m;
            while b + 1 < iso.len() && iso[b + 1] > cut {
                b += 1;
            }
            Ok(PeakSupport {
                peak: j,
                start: lo + a,
                end: lo + b,
                theta,
                truth: Hal {
                    height,
                    area: trapezoid(&iso[a..=b]),
                    location: lo + m,
                },
            })
        })
        .collect()
}

/// HAL of a restored signal on the oracle supports.
pub fn extract_hal(p_hat: &[f64], supports: &[PeakSupport]) -> Result<Vec<Hal>> {
    supports
        .iter()
        .map(|s| {
            if s.end >= p_hat.len() {
                return Err(Error::LengthMismatch {
                    expected: s.end + 1,
                    got: p_hat.len(),
                });
            }
            let seg = &p_hat[s.indices()];
            let m = argmax(seg);
            Ok(Hal {
                height: seg[m],
                area: trapezoid(seg),
                location: s.start + m,
            })
        })
        .collect()
}

/// Fraction of each support shared with the union of the other supports.
pub fn overlap_ratio(supports: &[PeakSupport]) -> Vec<f64> {
    let Some(extent) = supports.iter().map(|s| s.end + 1).max() else {
        return Vec::new();
    };
    let mut cover = vec![0u32; extent];
    for s in supports {
        for i in s.indices() {
            cover[i] += 1;
        }
    }
    supports
        .iter()
        .map(|s| {
            let shared = s.indices().filter(|&i| cover[i] >= 2).count();
            shared as f64 / s.len() as f64
        })
        .collect()
}

pub(crate) fn peak_reports(p_hat: &[f64], supports: &[PeakSupport]) -> Result<Vec<PeakReport>> {
    let est = extract_hal(p_hat, supports)?;
    let ov = overlap_ratio(supports);
    check_len(supports.len(), est.len())?;
    Ok(supports
        .iter()
        .zip(est)
        .zip(ov)
        .map(|((&support, estimate), overlap_ratio)| PeakReport {
            support,
            estimate,
            overlap_ratio,
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operators::{Conv1d, LinearOperator};
    use crate::sigmodel::{sample_kernel, KernelSpec};

    fn support(start: usize, end: usize) -> PeakSupport {
        PeakSupport {
            peak: 0,
            start,
            end,
            theta: DEFAULT_THETA,
            truth: Hal {
                height: 1.0,
                area: 1.0,
                location: start,
            },
        }
    }

    fn render(n: usize, peaks: &[Peak], k: &SampledKernel) -> Vec<f64> {
        let mut s = vec![0.0; n];
        for p in peaks {
            s[p.position] = p.amplitude;
        }
        Conv1d::new(n, k.taps.clone(), k.offset).apply(&s)
    }

    #[test]
    fn trapezoid_triangle() {
        assert_eq!(trapezoid(&[0.0, 1.0, 0.0]), 1.0);
        assert_eq!(trapezoid(&[2.0]), 0.0);
    }

    #[test]
    fn gaussian_support_width() {
        // exp(-t²/2) > 1/20  <=>  |t| < sqrt(2 ln 20) ≈ 2.448
        let k = sample_kernel(&KernelSpec::new(1.0, 0.0)).unwrap();
        let peaks = [Peak {
            position: 20,
            amplitude: 1.0,
        }];
        let p = render(41, &peaks, &k);
        let s = extract_supports(&p, &peaks, &k, DEFAULT_THETA).unwrap();
        let half = (2.0 * 20f64.ln()).sqrt().floor() as usize;
        assert_eq!(half, 2);
        assert_eq!((s[0].start, s[0].end), (20 - half, 20 + half));
        assert_eq!(s[0].truth.location, 20);
        assert_eq!(s[0].truth.height, 1.0);
        for i in s[0].indices() {
            assert!(p[i] > DEFAULT_THETA * s[0].truth.height);
        }
    }

    #[test]
    fn high_threshold_shrinks_to_argmax() {
        let k = sample_kernel(&KernelSpec::new(1.0, 0.3)).unwrap();
        let peaks = [Peak {
            position: 10,
            amplitude: 2.0,
        }];
        let p = render(30, &peaks, &k);
        let s = extract_supports(&p, &peaks, &k, 0.999).unwrap();
        assert_eq!((s[0].start, s[0].end), (10, 10));
    }

    #[test]
    fn oracle_round_trip_and_zero_estimate() {
        let k = sample_kernel(&KernelSpec::new(0.5, 0.2)).unwrap();
        let peaks = [
            Peak { position: 5, amplitude: 1.3 },
            Peak { position: 30, amplitude: 0.4 },
            Peak { position: 55, amplitude: 2.2 },
        ];
        let p = render(64, &peaks, &k);
        let s = extract_supports(&p, &peaks, &k, DEFAULT_THETA).unwrap();
        let est = extract_hal(&p, &s).unwrap();
        for (sj, e) in s.iter().zip(&est) {
            assert_eq!(sj.truth, *e);
        }
        for w in s.windows(2) {
            assert!(w[0].end < w[1].start);
        }
        let zero = extract_hal(&vec![0.0; 64], &s).unwrap();
        assert!(zero.iter().all(|h| h.height == 0.0 && h.area == 0.0));
        assert_eq!(overlap_ratio(&s), vec![0.0; 3]);
    }

    #[test]
    fn overlap_examples() {
        let a = support(0, 9);
        let b = support(5, 14);
        assert_eq!(overlap_ratio(&[a, b]), vec![0.5, 0.5]);
        assert_eq!(overlap_ratio(&[a, a]), vec![1.0, 1.0]);
        assert_eq!(overlap_ratio(&[a, support(20, 25)]), vec![0.0, 0.0]);
        let c = support(8, 30);
        let r = overlap_ratio(&[a, b, c]);
        let r2 = overlap_ratio(&[c, a, b]);
        assert_eq!((r[0], r[1], r[2]), (r2[1], r2[2], r2[0]));
        assert!(r.iter().all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn rejects_bad_theta() {
        let k = SampledKernel::impulse();
        let peaks = [Peak { position: 0, amplitude: 1.0 }];
        assert!(extract_supports(&[1.0], &peaks, &k, 0.0).is_err());
        assert!(extract_supports(&[1.0], &peaks, &k, 1.0).is_err());
    }
}
