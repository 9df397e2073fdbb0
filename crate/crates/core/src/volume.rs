//! Airway volumes by the composite trapezium rule and percentage volume
//! change between scans over three regions: carina to distal point, carina
//! to the dilatation point, and dilatation point to distal point.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::series_prep::{AlignedPair, AreaSeries};

const GRID_TOL: f64 = 1e-9;

fn grid_index(xs: &[f64], x: f64) -> Option<usize> {
    let i = xs.partition_point(|&v| v < x - GRID_TOL);
    (i < xs.len() && (xs[i] - x).abs() <= GRID_TOL).then_some(i)
}

/// Trapezium-rule integral of area over arc length on `[from_mm, to_mm]`.
/// Both bounds must coincide with sample positions.
pub fn trapezium_volume(series: &AreaSeries, from_mm: f64, to_mm: f64) -> Result<f64> {
    if !(from_mm < to_mm) {
        return Err(Error::Domain(format!(
            "volume bounds must satisfy from < to, got [{from_mm}, {to_mm}]"
        )));
    }
    let xs = series.arc_length();
    let lookup = |x: f64| grid_index(xs, x).ok_or_else(|| Error::Domain(format!("{x} mm is not a sample position")));
    let (a, b) = (lookup(from_mm)?, lookup(to_mm)?);
    Ok(panels(xs, series.area(), a, b))
}

/// Composite trapezium rule over paired samples.
pub fn trapezium_rule(xs: &[f64], ys: &[f64]) -> f64 {
    assert_eq!(xs.len(), ys.len(), "sample count mismatch");
    if xs.is_empty() {
        return 0.0;
    }
    panels(xs, ys, 0, xs.len() - 1)
}

fn panels(xs: &[f64], area: &[f64], a: usize, b: usize) -> f64 {
    (a..b)
        .map(|i| 0.5 * (area[i] + area[i + 1]) * (xs[i + 1] - xs[i]))
        .sum()
}

/// Percentage volume change from baseline to follow-up.
pub fn pvc(baseline: f64, followup: f64) -> f64 {
    100.0 * (followup - baseline) / baseline
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegionVolumes {
    /// Carina to distal point.
    pub total: f64,
    /// Carina to dilatation point.
    pub pre: f64,
    /// Dilatation point to distal point.
    pub post: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VolumeReport {
    pub carina_mm: f64,
    /// Dilatation point after snapping to the shared grid.
    pub t_mm: f64,
    pub distal_mm: f64,
    pub baseline: RegionVolumes,
    pub followup: RegionVolumes,
    pub pvc_total: f64,
    pub pvc_pre: f64,
    pub pvc_post: f64,
}

fn regions(series: &AreaSeries, t: usize) -> RegionVolumes {
    let (xs, area) = (series.arc_length(), series.area());
    let last = xs.len() - 1;
    RegionVolumes {
        total: panels(xs, area, 0, last),
        pre: panels(xs, area, 0, t),
        post: panels(xs, area, t, last),
    }
}

/// Region volumes and PVC for an aligned pair split at `t_mm`, which is
/// rounded to the nearest shared grid point.
pub fn volume_report(pair: &AlignedPair, t_mm: f64) -> Result<VolumeReport> {
    let xs = pair.baseline.arc_length();
    if xs != pair.followup.arc_length() {
        return Err(Error::InvalidSeries("aligned scans do not share a grid".into()));
    }
    let (carina, distal) = (xs[0], xs[xs.len() - 1]);
    if !(t_mm > carina && t_mm < distal) {
        return Err(Error::Domain(format!(
            "dilatation point {t_mm} mm must lie strictly inside ({carina}, {distal}) mm"
        )));
    }
    let t = xs
        .iter()
        .enumerate()
        .min_by(|a, b| (a.1 - t_mm).abs().total_cmp(&(b.1 - t_mm).abs()))
        .map(|(i, _)| i)
        .unwrap();
    if t == 0 || t == xs.len() - 1 {
        return Err(Error::Domain(format!(
            "dilatation point {t_mm} mm snaps onto an endpoint of the grid"
        )));
    }
    let b = regions(&pair.baseline, t);
    let f = regions(&pair.followup, t);
    Ok(VolumeReport {
        carina_mm: carina,
        t_mm: xs[t],
        distal_mm: distal,
        baseline: b,
        followup: f,
        pvc_total: pvc(b.total, f.total),
        pvc_pre: pvc(b.pre, f.pre),
        pvc_post: pvc(b.post, f.post),
    })
}

pub const REPORT_HEADER: &str = "airway,pvc_total,pvc_post,pvc_pre";

/// One row of the PVC table, percentages to one decimal place.
pub fn report_row(airway: &str, r: &VolumeReport) -> String {
    format!("{airway},{:.1},{:.1},{:.1}", r.pvc_total, r.pvc_post, r.pvc_pre)
}
