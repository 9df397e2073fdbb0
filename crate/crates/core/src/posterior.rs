//! Reduction of a chain trace to a single dilatation point.
//!
//! Changepoints from every stored state are pooled into a location
//! histogram. Peaks are local maxima of its 3-bin moving average that reach
//! 5% of the highest smoothed value, thinned to at least 10 mm apart. When
//! two or more peaks remain the most proximal one is discarded (it marks the
//! end of cartilage support, not disease) and the highest of the rest is
//! the call.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sampler::{run_chain, ChainTrace, SamplerConfig};
use crate::segment_model::{ChainState, PriorSpec};
use crate::series_prep::LogDiffSeries;

pub const SMOOTH_WINDOW: usize = 3;
/// Peaks below this fraction of the smoothed maximum are ignored.
pub const PEAK_FLOOR: f64 = 0.05;
/// Minimum distance between retained peaks, in grid steps (mm).
pub const PEAK_SEPARATION: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorHistogram {
    pub mass: Vec<f64>,
    pub origin_mm: f64,
    /// No stored state contained a changepoint; `mass` is all zero.
    pub empty: bool,
}

impl PosteriorHistogram {
    /// Normalise raw non-negative weights.
    pub fn from_weights(weights: Vec<f64>, origin_mm: f64) -> Self {
        let total: f64 = weights.iter().sum();
        if total > 0.0 {
            Self {
                mass: weights.into_iter().map(|w| w / total).collect(),
                origin_mm,
                empty: false,
            }
        } else {
            Self {
                mass: vec![0.0; weights.len()],
                origin_mm,
                empty: true,
            }
        }
    }

    pub fn with_origin(mut self, origin_mm: f64) -> Self {
        self.origin_mm = origin_mm;
        self
    }

    pub fn argmax(&self) -> Option<usize> {
        if self.empty {
            return None;
        }
        let mut best = 0;
        for (i, &m) in self.mass.iter().enumerate() {
            if m > self.mass[best] {
                best = i;
            }
        }
        Some(best)
    }
}

/// Pool changepoint locations over `states`.
pub fn histogram_of<'a>(states: impl IntoIterator<Item = &'a ChainState>, n: usize) -> PosteriorHistogram {
    let mut counts = vec![0.0; n];
    for s in states {
        for &c in &s.tau {
            counts[c] += 1.0;
        }
    }
    PosteriorHistogram::from_weights(counts, 0.0)
}

/// Marginal changepoint-location posterior pooled over all stored states.
pub fn pooled_histogram(trace: &ChainTrace, n: usize) -> Result<PosteriorHistogram> {
    if trace.samples.is_empty() {
        return Err(Error::EmptyTrace);
    }
    if let Some(c) = trace.samples.iter().flat_map(|s| &s.state.tau).find(|&&c| c >= n) {
        return Err(Error::InvalidState(format!(
            "changepoint {c} outside series of length {n}"
        )));
    }
    Ok(histogram_of(trace.samples.iter().map(|s| &s.state), n))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Peak {
    pub index: usize,
    pub location_mm: f64,
    /// Posterior mass within one bin of the peak.
    pub mass: f64,
}

/// Centered moving average; edges average the available window.
pub fn moving_average(values: &[f64], window: usize) -> Vec<f64> {
    let half = window / 2;
    let n = values.len();
    (0..n)
        .map(|i| {
            let lo = i.saturating_sub(half);
            let hi = (i + half + 1).min(n);
            values[lo..hi].iter().sum::<f64>() / (hi - lo) as f64
        })
        .collect()
}

pub fn find_peaks(hist: &PosteriorHistogram) -> Vec<Peak> {
    let raw = &hist.mass;
    let n = raw.len();
    if hist.empty || n == 0 {
        return Vec::new();
    }
    let smooth = moving_average(raw, SMOOTH_WINDOW);
    let top = smooth.iter().cloned().fold(0.0, f64::max);
    if top <= 0.0 {
        return Vec::new();
    }

    let mut candidates = Vec::new();
    let mut l = 0;
    while l < n {
        let mut r = l;
        while r + 1 < n && smooth[r + 1] == smooth[l] {
            r += 1;
        }
        let rises = l == 0 || smooth[l - 1] < smooth[l];
        let falls = r + 1 == n || smooth[r + 1] < smooth[r];
        if rises && falls && smooth[l] > 0.0 && smooth[l] >= PEAK_FLOOR * top {
            let mut at = l;
            for i in l..=r {
                if raw[i] > raw[at] {
                    at = i;
                }
            }
            let mass = raw[at.saturating_sub(1)..(at + 2).min(n)].iter().sum();
            candidates.push(Peak {
                index: at,
                location_mm: hist.origin_mm + at as f64,
                mass,
            });
        }
        l = r + 1;
    }

    candidates.sort_by(|a, b| b.mass.total_cmp(&a.mass).then(a.index.cmp(&b.index)));
    let mut kept: Vec<Peak> = Vec::new();
    for p in candidates {
        if kept.iter().all(|k| k.index.abs_diff(p.index) >= PEAK_SEPARATION) {
            kept.push(p);
        }
    }
    kept.sort_by_key(|p| p.index);
    kept
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DilatationCall {
    pub point_mm: f64,
    pub index: usize,
    pub peaks: Vec<Peak>,
    pub discarded_proximal_peak: Option<Peak>,
}

/// Apply the proximal-peak rule to peaks sorted by location.
pub fn call_from_peaks(peaks: &[Peak]) -> Result<DilatationCall> {
    let (discarded, rest) = match peaks.len() {
        0 => return Err(Error::NoCall("no changepoint detected".into())),
        1 => (None, peaks),
        _ => (Some(peaks[0]), &peaks[1..]),
    };
    let mut best = rest[0];
    for p in &rest[1..] {
        if p.mass > best.mass {
            best = *p;
        }
    }
    Ok(DilatationCall {
        point_mm: best.location_mm,
        index: best.index,
        peaks: peaks.to_vec(),
        discarded_proximal_peak: discarded,
    })
}

pub fn call_dilatation_point(hist: &PosteriorHistogram) -> Result<DilatationCall> {
    call_from_peaks(&find_peaks(hist))
}

/// Chain output, its location posterior and the resulting call. `call`
/// holds the no-call reason when the posterior has no usable peak.
#[derive(Debug, Clone)]
pub struct RjmhDetection {
    pub trace: ChainTrace,
    pub histogram: PosteriorHistogram,
    pub call: Result<DilatationCall>,
}

/// Run a chain on `y` and reduce it to a dilatation point.
pub fn rjmh_detect(y: &LogDiffSeries, priors: &PriorSpec, config: &SamplerConfig) -> Result<RjmhDetection> {
    let trace = run_chain(y, priors, config)?;
    let histogram = pooled_histogram(&trace, y.len())?.with_origin(y.origin_mm);
    let call = call_dilatation_point(&histogram);
    Ok(RjmhDetection { trace, histogram, call })
}
