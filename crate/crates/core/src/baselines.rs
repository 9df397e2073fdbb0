//! Conventional comparators: moving-mean thresholding and an exact
//! two-changepoint least-squares segmentation.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::series_prep::LogDiffSeries;

/// Width of the centered moving mean used by the threshold detector.
pub const THRESHOLD_WINDOW: usize = 5;
/// Minimum spacing between changepoints and to either end (samples = mm).
pub const MIN_DISTANCE: usize = 20;
/// Number of changepoints searched by the penalized-cost detector.
pub const PENALIZED_K: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaselineMethod {
    Threshold,
    PenalizedCost,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BaselineAux {
    Threshold {
        upper_quartile: f64,
        smoothed: Vec<f64>,
        exceeds: Vec<bool>,
        /// Proximal boundary of the exceedance run containing the call.
        run_start_mm: f64,
    },
    PenalizedCost {
        changepoints: [usize; 2],
        cost: f64,
        /// Best within-segment cost with 0, 1 and 2 changepoints.
        best_cost_by_k: [f64; 3],
        /// Largest penalty for which two changepoints remain optimal.
        beta_upper: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineCall {
    pub method: BaselineMethod,
    pub point_mm: f64,
    pub index: usize,
    pub aux: BaselineAux,
}

/// Linear-interpolation quantile between order statistics.
pub fn quantile(values: &[f64], p: f64) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let h = (v.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(v.len() - 1);
    v[lo] + (h - lo as f64) * (v[hi] - v[lo])
}

/// Smooth, then report the first index scanning from the distal end whose
/// smoothed value exceeds the upper quartile.
pub fn threshold_detect(y: &LogDiffSeries) -> Result<BaselineCall> {
    let n = y.len();
    if n < THRESHOLD_WINDOW {
        return Err(Error::InsufficientLength {
            required: THRESHOLD_WINDOW,
            actual: n,
        });
    }
    let smoothed = crate::posterior::moving_average(&y.y, THRESHOLD_WINDOW);
    let q3 = quantile(&smoothed, 0.75);
    let exceeds: Vec<bool> = smoothed.iter().map(|&v| v > q3).collect();
    let Some(index) = exceeds.iter().rposition(|&e| e) else {
        return Err(Error::NoCall("no smoothed value exceeds the upper quartile".into()));
    };
    let mut start = index;
    while start > 0 && exceeds[start - 1] {
        start -= 1;
    }
    Ok(BaselineCall {
        method: BaselineMethod::Threshold,
        point_mm: y.mm_at(index),
        index,
        aux: BaselineAux::Threshold {
            upper_quartile: q3,
            smoothed,
            exceeds,
            run_start_mm: y.mm_at(start),
        },
    })
}

/// Sum of squared deviations from the mean for every segment `[a, b)`
/// starting at `a`; `row[b - a - 1]` holds the cost of `[a, b)`.
fn costs_from(y: &[f64], a: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(y.len() - a);
    let (mut mean, mut m2) = (0.0, 0.0);
    for (k, &v) in y[a..].iter().enumerate() {
        let d = v - mean;
        mean += d / (k + 1) as f64;
        m2 += d * (v - mean);
        out.push(m2);
    }
    out
}

/// Exact search over changepoint pairs `(k1, k2)` with every segment at
/// least [`MIN_DISTANCE`] long, minimising the summed within-segment squared
/// deviation. Returns the more distal changepoint. Ties go to the
/// lexicographically smallest pair.
pub fn penalized_cost_detect(y: &LogDiffSeries) -> Result<BaselineCall> {
    let n = y.len();
    let required = MIN_DISTANCE * (PENALIZED_K + 1);
    if n < required {
        return Err(Error::InsufficientLength { required, actual: n });
    }
    let v = &y.y;
    let head = costs_from(v, 0);
    let tail: Vec<f64> = (0..n).map(|k| *costs_from(&v[k..], 0).last().unwrap()).collect();

    let mut best = (f64::INFINITY, 0, 0);
    for k1 in MIN_DISTANCE..=n - 2 * MIN_DISTANCE {
        let mid = costs_from(v, k1);
        let first = head[k1 - 1];
        for k2 in k1 + MIN_DISTANCE..=n - MIN_DISTANCE {
            let total = first + mid[k2 - k1 - 1] + tail[k2];
            if total < best.0 {
                best = (total, k1, k2);
            }
        }
    }
    let (cost, k1, k2) = best;

    let zero = head[n - 1];
    let one = (MIN_DISTANCE..=n - MIN_DISTANCE)
        .map(|k| head[k - 1] + tail[k])
        .fold(f64::INFINITY, f64::min);
    let beta_upper = ((zero - cost) / 2.0).min(one - cost).max(0.0);

    Ok(BaselineCall {
        method: BaselineMethod::PenalizedCost,
        point_mm: y.mm_at(k2),
        index: k2,
        aux: BaselineAux::PenalizedCost {
            changepoints: [k1, k2],
            cost,
            best_cost_by_k: [zero, one, cost],
            beta_upper,
        },
    })
}
