//! Simulated dilatation on healthy log-difference series and the
//! displacement sweep over onset position and magnitude.
//!
//! Onsets are given as `alpha` mm from the distal point. The logistic is
//! evaluated against distance from the carina, so the true changepoint sits
//! at `distal_mm - alpha` and the added term rises toward the distal end.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::StudentT;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baselines::{penalized_cost_detect, threshold_detect};
use crate::error::{Error, Result};
use crate::posterior::rjmh_detect;
use crate::sampler::{rng_for, SamplerConfig};
use crate::segment_model::PriorSpec;
use crate::series_prep::LogDiffSeries;

/// Logistic steepness (per mm).
pub const STEEPNESS: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogisticDilatation {
    /// Height of the logistic in log-area units.
    pub magnitude: f64,
    /// Onset distance from the distal point (mm).
    pub alpha: f64,
    pub steepness: f64,
}

impl LogisticDilatation {
    pub fn new(magnitude: f64, alpha: f64) -> Self {
        Self {
            magnitude,
            alpha,
            steepness: STEEPNESS,
        }
    }

    /// Value added at arc length `x` when the midpoint is at `x_alpha`.
    pub fn term(&self, x: f64, x_alpha: f64) -> f64 {
        self.magnitude / (1.0 + (-self.steepness * (x - x_alpha)).exp())
    }
}

/// Arc length (from the carina) of the logistic midpoint.
pub fn truth_mm(y: &LogDiffSeries, alpha: f64) -> f64 {
    y.mm_at(y.len() - 1) - alpha
}

pub fn apply_dilatation(y: &LogDiffSeries, d: &LogisticDilatation) -> Result<LogDiffSeries> {
    let extent = y.len().saturating_sub(1) as f64;
    if !(d.alpha > 0.0 && d.alpha < extent) {
        return Err(Error::Domain(format!(
            "alpha {} mm must lie inside the series extent (0, {extent}) mm",
            d.alpha
        )));
    }
    if !(d.magnitude >= 0.0 && d.magnitude.is_finite()) {
        return Err(Error::Domain(format!(
            "magnitude {} must be finite and non-negative",
            d.magnitude
        )));
    }
    if !(d.steepness > 0.0) {
        return Err(Error::Domain(format!("steepness {} must be positive", d.steepness)));
    }
    let x_alpha = truth_mm(y, d.alpha);
    let out =
        y.y.iter()
            .enumerate()
            .map(|(i, v)| v + d.term(y.mm_at(i), x_alpha))
            .collect();
    Ok(LogDiffSeries {
        y: out,
        origin_mm: y.origin_mm,
    })
}

/// Signed error, positive when the prediction lies distal of the truth.
pub fn displacement(predicted_mm: f64, truth_mm: f64) -> f64 {
    predicted_mm - truth_mm
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Detector {
    Rjmh,
    Threshold,
    PenalizedCost,
}

impl Detector {
    pub const ALL: [Detector; 3] = [Detector::Rjmh, Detector::Threshold, Detector::PenalizedCost];

    pub fn name(self) -> &'static str {
        match self {
            Detector::Rjmh => "rjmh",
            Detector::Threshold => "threshold",
            Detector::PenalizedCost => "penalized_cost",
        }
    }
}

impl fmt::Display for Detector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Detector {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "rjmh" => Ok(Detector::Rjmh),
            "threshold" => Ok(Detector::Threshold),
            "lavielle" | "penalized_cost" => Ok(Detector::PenalizedCost),
            other => Err(Error::InvalidConfig(format!(
                "unknown detector {other:?} (expected rjmh, threshold or lavielle)"
            ))),
        }
    }
}

/// Run one detector and return its point in mm. `Ok(None)` is a no-call.
pub fn detect_point(
    detector: Detector,
    y: &LogDiffSeries,
    priors: &PriorSpec,
    config: &SamplerConfig,
) -> Result<Option<f64>> {
    let point = match detector {
        Detector::Rjmh => rjmh_detect(y, priors, config)?.call.map(|c| c.point_mm),
        Detector::Threshold => threshold_detect(y).map(|c| c.point_mm),
        Detector::PenalizedCost => penalized_cost_detect(y).map(|c| c.point_mm),
    };
    match point {
        Ok(p) => Ok(Some(p)),
        Err(Error::NoCall(_)) => Ok(None),
        Err(e) => Err(e),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepGrid {
    pub alphas: Vec<f64>,
    pub magnitudes: Vec<f64>,
}

impl Default for SweepGrid {
    /// Onsets 10..=40 mm in 5 mm steps; magnitudes 0.30..=2.80 in 0.25 steps.
    fn default() -> Self {
        Self {
            alphas: (0..7).map(|k| 10.0 + 5.0 * k as f64).collect(),
            magnitudes: (0..11).map(|k| (30 + 25 * k) as f64 / 100.0).collect(),
        }
    }
}

impl SweepGrid {
    pub fn cell_count(&self) -> usize {
        self.alphas.len() * self.magnitudes.len()
    }
}

/// One (onset, magnitude, airway) run of a detector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRun {
    pub alpha_mm: f64,
    pub magnitude: f64,
    pub airway: usize,
    pub detector: Detector,
    pub truth_mm: f64,
    pub predicted_mm: Option<f64>,
    pub displacement_mm: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeatmapCell {
    pub alpha_mm: f64,
    pub magnitude: f64,
    pub detector: Detector,
    /// Indexed by airway; `None` marks a no-call.
    pub displacements: Vec<Option<f64>>,
    pub median_displacement: Option<f64>,
    pub median_abs_displacement: Option<f64>,
    pub n_calls: usize,
    pub n_nocalls: usize,
}

impl HeatmapCell {
    fn from_runs(alpha_mm: f64, magnitude: f64, detector: Detector, displacements: Vec<Option<f64>>) -> Self {
        let calls: Vec<f64> = displacements.iter().flatten().copied().collect();
        let abs: Vec<f64> = calls.iter().map(|d| d.abs()).collect();
        Self {
            alpha_mm,
            magnitude,
            detector,
            median_displacement: median(&calls),
            median_abs_displacement: median(&abs),
            n_calls: calls.len(),
            n_nocalls: displacements.len() - calls.len(),
            displacements,
        }
    }
}

/// Sample median; even counts average the two middle values.
pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let h = v.len() / 2;
    Some(if v.len() % 2 == 1 {
        v[h]
    } else {
        0.5 * (v[h - 1] + v[h])
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    /// Ordered by detector, then onset, then magnitude.
    pub cells: Vec<HeatmapCell>,
    pub runs: Vec<SweepRun>,
}

impl SweepResult {
    pub fn cells_for(&self, detector: Detector) -> impl Iterator<Item = &HeatmapCell> {
        self.cells.iter().filter(move |c| c.detector == detector)
    }
}

/// Per-run seed, decorrelated from neighbouring task indices.
pub fn task_seed(seed: u64, task: u64) -> u64 {
    let mut z = seed ^ task.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Augment every airway with every grid cell and run each detector.
/// Tasks run in parallel; results are keyed by position so the output does
/// not depend on scheduling. The chain seed of each task is derived from
/// `config.seed` and the task index.
pub fn run_sweep(
    grid: &SweepGrid,
    airways: &[LogDiffSeries],
    detectors: &[Detector],
    priors: &PriorSpec,
    config: &SamplerConfig,
) -> Result<SweepResult> {
    if airways.is_empty() {
        return Err(Error::InvalidConfig("sweep needs at least one airway".into()));
    }
    if detectors.is_empty() {
        return Err(Error::InvalidConfig("sweep needs at least one detector".into()));
    }
    config.validate()?;
    let mut detectors = detectors.to_vec();
    detectors.sort();
    detectors.dedup();

    let (na, nm, nw) = (grid.alphas.len(), grid.magnitudes.len(), airways.len());
    let tasks: Vec<(usize, usize, usize)> = (0..na)
        .flat_map(|a| (0..nm).flat_map(move |m| (0..nw).map(move |w| (a, m, w))))
        .collect();

    let per_task: Vec<Vec<SweepRun>> = tasks
        .par_iter()
        .enumerate()
        .map(|(t, &(a, m, w))| {
            let (alpha, magnitude) = (grid.alphas[a], grid.magnitudes[m]);
            let y = apply_dilatation(&airways[w], &LogisticDilatation::new(magnitude, alpha))?;
            let truth = truth_mm(&y, alpha);
            let cfg = SamplerConfig {
                seed: task_seed(config.seed, t as u64),
                ..config.clone()
            };
            detectors
                .iter()
                .map(|&detector| {
                    let predicted = detect_point(detector, &y, priors, &cfg)?;
                    Ok(SweepRun {
                        alpha_mm: alpha,
                        magnitude,
                        airway: w,
                        detector,
                        truth_mm: truth,
                        predicted_mm: predicted,
                        displacement_mm: predicted.map(|p| displacement(p, truth)),
                    })
                })
                .collect()
        })
        .collect::<Result<_>>()?;

    let mut cells = Vec::with_capacity(detectors.len() * na * nm);
    for (di, &detector) in detectors.iter().enumerate() {
        for a in 0..na {
            for m in 0..nm {
                let base = (a * nm + m) * nw;
                let disp = (0..nw).map(|w| per_task[base + w][di].displacement_mm).collect();
                cells.push(HeatmapCell::from_runs(
                    grid.alphas[a],
                    grid.magnitudes[m],
                    detector,
                    disp,
                ));
            }
        }
    }
    Ok(SweepResult {
        cells,
        runs: per_task.into_iter().flatten().collect(),
    })
}

pub const HEATMAP_HEADER: &str = "alpha_mm,magnitude,detector,median_displacement_mm,n_calls,n_nocalls";

/// Heatmap CSV; an all-no-call cell leaves the median empty.
pub fn heatmap_csv(cells: &[HeatmapCell]) -> String {
    let mut out = String::from(HEATMAP_HEADER);
    out.push('\n');
    for c in cells {
        let median = c.median_displacement.map(|m| format!("{m}")).unwrap_or_default();
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            c.alpha_mm, c.magnitude, c.detector, median, c.n_calls, c.n_nocalls
        ));
    }
    out
}

/// Healthy log-difference surrogate: scaled Student-t noise.
pub fn synthetic_airway<R: Rng + ?Sized>(n: usize, sigma: f64, nu: f64, rng: &mut R) -> Result<LogDiffSeries> {
    let t = StudentT::new(nu).map_err(|e| Error::Domain(format!("noise degrees of freedom: {e}")))?;
    Ok(LogDiffSeries::new((0..n).map(|_| sigma * rng.sample(t)).collect()))
}

/// `count` independent noise airways, each drawn from its own stream.
pub fn synthetic_airways(count: usize, n: usize, sigma: f64, nu: f64, seed: u64) -> Result<Vec<LogDiffSeries>> {
    (0..count)
        .map(|k| synthetic_airway(n, sigma, nu, &mut rng_for(seed, 1000 + k as u64)))
        .collect()
}
