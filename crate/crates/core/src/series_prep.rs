//! Area-profile preparation: uniform resampling, pair registration and the
//! log-difference series consumed by the detectors.
//!
//! Index 0 of every series is the carina (proximal end); the last index is
//! the distal point.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Interpolated areas are clamped to this floor so logs stay finite.
pub const AREA_FLOOR: f64 = 1e-6;

/// Number of leading grid points used to register a pair.
pub const ALIGN_WINDOW: usize = 50;

/// Largest shift (mm) tried during registration.
pub const MAX_SHIFT: i32 = 5;

const GRID_TOL: f64 = 1e-9;

/// Cross-sectional area samples along an airway centreline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AreaSeries {
    arc_length: Vec<f64>,
    area: Vec<f64>,
}

impl AreaSeries {
    pub fn new(arc_length: Vec<f64>, area: Vec<f64>) -> Result<Self> {
        if arc_length.len() != area.len() {
            return Err(Error::InvalidSeries(format!(
                "{} arc lengths but {} areas",
                arc_length.len(),
                area.len()
            )));
        }
        if arc_length.len() < 2 {
            return Err(Error::InsufficientLength {
                required: 2,
                actual: arc_length.len(),
            });
        }
        if let Some(i) = arc_length.iter().position(|x| !x.is_finite() || *x < 0.0) {
            return Err(Error::InvalidSeries(format!(
                "arc length at sample {i} must be finite and non-negative"
            )));
        }
        if let Some(i) = arc_length.windows(2).position(|w| w[1] <= w[0]) {
            return Err(Error::InvalidSeries(format!(
                "arc lengths not strictly increasing at sample {}",
                i + 1
            )));
        }
        if let Some(i) = area.iter().position(|a| !a.is_finite() || *a <= 0.0) {
            return Err(Error::Domain(format!(
                "area at sample {i} is {} but must be strictly positive",
                area[i]
            )));
        }
        Ok(Self { arc_length, area })
    }

    /// Series sampled every 1 mm starting at `origin_mm`.
    pub fn on_grid(origin_mm: f64, area: Vec<f64>) -> Result<Self> {
        let arc = (0..area.len()).map(|i| origin_mm + i as f64).collect();
        Self::new(arc, area)
    }

    pub fn arc_length(&self) -> &[f64] {
        &self.arc_length
    }

    pub fn area(&self) -> &[f64] {
        &self.area
    }

    pub fn len(&self) -> usize {
        self.area.len()
    }

    pub fn is_empty(&self) -> bool {
        self.area.is_empty()
    }

    /// True when samples sit on consecutive integer millimetres.
    pub fn is_unit_grid(&self) -> bool {
        (self.arc_length[0] - self.arc_length[0].round()).abs() < GRID_TOL
            && self.arc_length.windows(2).all(|w| (w[1] - w[0] - 1.0).abs() < GRID_TOL)
    }

    fn slice(&self, start: usize, end: usize) -> Self {
        Self {
            arc_length: self.arc_length[start..end].to_vec(),
            area: self.area[start..end].to_vec(),
        }
    }
}

/// How a series was brought onto the 1 mm grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Interpolation {
    /// Not-a-knot cubic spline (four or more input samples).
    Cubic,
    /// Piecewise linear fallback for two or three input samples.
    Linear,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Resampled {
    pub series: AreaSeries,
    pub method: Interpolation,
    /// Number of grid values raised to [`AREA_FLOOR`].
    pub clamped: usize,
}

/// Resample onto the integer-millimetre grid spanning the input.
///
/// Uses a not-a-knot cubic spline, which reproduces cubic polynomials
/// exactly. Inputs with fewer than four samples fall back to linear
/// interpolation and are flagged through [`Resampled::method`].
pub fn resample_to_1mm(series: &AreaSeries) -> Result<Resampled> {
    let xs = series.arc_length();
    let ys = series.area();
    let first = (xs[0] - GRID_TOL).ceil();
    let last = (xs[xs.len() - 1] + GRID_TOL).floor();
    if last < first {
        return Err(Error::InsufficientLength { required: 1, actual: 0 });
    }
    let count = (last - first) as usize + 1;
    let grid: Vec<f64> = (0..count).map(|i| first + i as f64).collect();

    let (method, mut values) = if xs.len() >= 4 {
        let spline = CubicSpline::not_a_knot(xs, ys);
        (
            Interpolation::Cubic,
            grid.iter().map(|&x| spline.eval(x)).collect::<Vec<_>>(),
        )
    } else {
        (
            Interpolation::Linear,
            grid.iter().map(|&x| linear_eval(xs, ys, x)).collect(),
        )
    };

    let mut clamped = 0;
    for v in &mut values {
        if *v < AREA_FLOOR {
            *v = AREA_FLOOR;
            clamped += 1;
        }
    }
    Ok(Resampled {
        series: AreaSeries::new(grid, values)?,
        method,
        clamped,
    })
}

/// Locate the interval `[xs[i], xs[i+1]]` containing `x` (clamped to the ends).
fn interval_of(xs: &[f64], x: f64) -> usize {
    match xs.binary_search_by(|p| p.partial_cmp(&x).unwrap()) {
        Ok(i) => i.min(xs.len() - 2),
        Err(i) => i.saturating_sub(1).min(xs.len() - 2),
    }
}

fn exact_node(xs: &[f64], x: f64) -> Option<usize> {
    let i = interval_of(xs, x);
    if (xs[i] - x).abs() < GRID_TOL {
        Some(i)
    } else if (xs[i + 1] - x).abs() < GRID_TOL {
        Some(i + 1)
    } else {
        None
    }
}

fn linear_eval(xs: &[f64], ys: &[f64], x: f64) -> f64 {
    if let Some(k) = exact_node(xs, x) {
        return ys[k];
    }
    let i = interval_of(xs, x);
    let t = (x - xs[i]) / (xs[i + 1] - xs[i]);
    ys[i] + t * (ys[i + 1] - ys[i])
}

/// Piecewise cubic `y_i + b_i t + c_i t^2 + d_i t^3` on each interval.
struct CubicSpline<'a> {
    xs: &'a [f64],
    ys: &'a [f64],
    b: Vec<f64>,
    c: Vec<f64>,
    d: Vec<f64>,
}

impl<'a> CubicSpline<'a> {
    /// Requires at least four knots.
    fn not_a_knot(xs: &'a [f64], ys: &'a [f64]) -> Self {
        let n = xs.len();
        debug_assert!(n >= 4);
        let h: Vec<f64> = xs.windows(2).map(|w| w[1] - w[0]).collect();
        let slope: Vec<f64> = (0..n - 1).map(|i| (ys[i + 1] - ys[i]) / h[i]).collect();

        // Tridiagonal system in the interior second derivatives M_1..M_{n-2};
        // the end conditions (continuous third derivative at x_1 and x_{n-2})
        // eliminate M_0 and M_{n-1}.
        let k = n - 2;
        let mut sub = vec![0.0; k];
        let mut diag = vec![0.0; k];
        let mut sup = vec![0.0; k];
        let mut rhs = vec![0.0; k];
        for r in 0..k {
            let i = r + 1;
            sub[r] = h[i - 1];
            diag[r] = 2.0 * (h[i - 1] + h[i]);
            sup[r] = h[i];
            rhs[r] = 6.0 * (slope[i] - slope[i - 1]);
        }
        let (h0, h1) = (h[0], h[1]);
        diag[0] += h0 * (1.0 + h0 / h1);
        sup[0] -= h0 * h0 / h1;
        let (hp1, hp) = (h[n - 3], h[n - 2]);
        diag[k - 1] += hp * (1.0 + hp / hp1);
        sub[k - 1] -= hp * hp / hp1;

        let inner = solve_tridiagonal(&sub, &diag, &sup, &rhs);
        let mut m = vec![0.0; n];
        m[1..n - 1].copy_from_slice(&inner);
        m[0] = m[1] + h0 / h1 * (m[1] - m[2]);
        m[n - 1] = m[n - 2] + hp / hp1 * (m[n - 2] - m[n - 3]);

        let mut b = Vec::with_capacity(n - 1);
        let mut c = Vec::with_capacity(n - 1);
        let mut d = Vec::with_capacity(n - 1);
        for i in 0..n - 1 {
            b.push(slope[i] - h[i] * (2.0 * m[i] + m[i + 1]) / 6.0);
            c.push(m[i] / 2.0);
            d.push((m[i + 1] - m[i]) / (6.0 * h[i]));
        }
        Self { xs, ys, b, c, d }
    }

    fn eval(&self, x: f64) -> f64 {
        if let Some(k) = exact_node(self.xs, x) {
            return self.ys[k];
        }
        let i = interval_of(self.xs, x);
        let t = x - self.xs[i];
        self.ys[i] + t * (self.b[i] + t * (self.c[i] + t * self.d[i]))
    }
}

/// Thomas algorithm. `sub[0]` and `sup[last]` are ignored.
fn solve_tridiagonal(sub: &[f64], diag: &[f64], sup: &[f64], rhs: &[f64]) -> Vec<f64> {
    let k = diag.len();
    let mut c_star = vec![0.0; k];
    let mut d_star = vec![0.0; k];
    c_star[0] = sup[0] / diag[0];
    d_star[0] = rhs[0] / diag[0];
    for i in 1..k {
        let denom = diag[i] - sub[i] * c_star[i - 1];
        c_star[i] = if i + 1 < k { sup[i] / denom } else { 0.0 };
        d_star[i] = (rhs[i] - sub[i] * d_star[i - 1]) / denom;
    }
    let mut out = vec![0.0; k];
    out[k - 1] = d_star[k - 1];
    for i in (0..k - 1).rev() {
        out[i] = d_star[i] - c_star[i] * out[i + 1];
    }
    out
}

/// Baseline and shifted follow-up on a shared 1 mm grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlignedPair {
    pub baseline: AreaSeries,
    pub followup: AreaSeries,
    /// The follow-up was transformed as `f_F(x - shift_a)`.
    pub shift_a: i32,
    pub n: usize,
}

impl AlignedPair {
    /// Build a pair from areas that already share a grid starting at `origin_mm`.
    pub fn from_grid(origin_mm: f64, baseline: Vec<f64>, followup: Vec<f64>, shift_a: i32) -> Result<Self> {
        if baseline.len() != followup.len() {
            return Err(Error::InvalidSeries(format!(
                "aligned series differ in length ({} vs {})",
                baseline.len(),
                followup.len()
            )));
        }
        let n = baseline.len();
        Ok(Self {
            baseline: AreaSeries::on_grid(origin_mm, baseline)?,
            followup: AreaSeries::on_grid(origin_mm, followup)?,
            shift_a,
            n,
        })
    }

    pub fn origin_mm(&self) -> f64 {
        self.baseline.arc_length()[0]
    }
}

/// Mean squared log-ratio between the baseline window and the follow-up
/// window shifted by `a`, over their overlap.
pub fn alignment_objective(baseline: &[f64], followup: &[f64], a: i32) -> f64 {
    let w = ALIGN_WINDOW as i32;
    let lo = a.max(0);
    let hi = w.min(w + a);
    let mut sum = 0.0;
    for x in lo..hi {
        let r = baseline[x as usize].ln() - followup[(x - a) as usize].ln();
        sum += r * r;
    }
    sum / (hi - lo) as f64
}

/// Candidate shifts in tie-break order: 0, -1, 1, -2, 2, ...
fn shift_candidates() -> impl Iterator<Item = i32> {
    std::iter::once(0).chain((1..=MAX_SHIFT).flat_map(|k| [-k, k]))
}

/// Register the follow-up against the baseline by an integer shift and
/// truncate both to a common length.
pub fn align_pair(baseline: &AreaSeries, followup: &AreaSeries) -> Result<AlignedPair> {
    let required = ALIGN_WINDOW + MAX_SHIFT as usize;
    for s in [baseline, followup] {
        if s.len() < required {
            return Err(Error::InsufficientLength {
                required,
                actual: s.len(),
            });
        }
        if !s.is_unit_grid() {
            return Err(Error::InvalidSeries(
                "series must be resampled to the 1 mm grid before alignment".into(),
            ));
        }
    }

    let (b, f) = (baseline.area(), followup.area());
    let mut best = (0, f64::INFINITY);
    for a in shift_candidates() {
        let obj = alignment_objective(b, f, a);
        if obj < best.1 {
            best = (a, obj);
        }
    }
    let a = best.0;

    // Shifted follow-up g(x) = f(x - a) is defined where 0 <= x - a < len_f.
    let start = a.max(0) as usize;
    let end = (b.len() as i64).min(f.len() as i64 + a as i64) as usize;
    let n = end - start;
    let base = baseline.slice(start, end);
    let follow_area = f[(start as i64 - a as i64) as usize..(end as i64 - a as i64) as usize].to_vec();
    let follow = AreaSeries::new(base.arc_length().to_vec(), follow_area)?;
    Ok(AlignedPair {
        baseline: base,
        followup: follow,
        shift_a: a,
        n,
    })
}

/// `y = log(f_F) - log(f_B)` on the aligned grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogDiffSeries {
    pub y: Vec<f64>,
    /// Arc length (mm) of index 0.
    pub origin_mm: f64,
}

impl LogDiffSeries {
    pub fn new(y: Vec<f64>) -> Self {
        Self { y, origin_mm: 0.0 }
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn mm_at(&self, index: usize) -> f64 {
        self.origin_mm + index as f64
    }
}

pub fn log_difference(pair: &AlignedPair) -> LogDiffSeries {
    let y = pair
        .followup
        .area()
        .iter()
        .zip(pair.baseline.area())
        .map(|(f, b)| f.ln() - b.ln())
        .collect();
    LogDiffSeries {
        y,
        origin_mm: pair.origin_mm(),
    }
}
