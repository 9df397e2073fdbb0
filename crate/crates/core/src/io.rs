//! File formats: scan CSVs, aligned-pair JSON, trace JSON Lines and
//! detection records.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::baselines::{BaselineAux, BaselineCall};
use crate::error::{Error, Result};
use crate::posterior::{DilatationCall, PosteriorHistogram};
use crate::sampler::{ChainTrace, MoveCounts, MoveKind};
use crate::segment_model::SegmentParams;
use crate::series_prep::{AlignedPair, AreaSeries, Interpolation, LogDiffSeries};

pub const CSV_HEADER: [&str; 2] = ["arc_length_mm", "area_mm2"];

/// Parse a scan CSV with header `arc_length_mm,area_mm2`.
pub fn parse_area_csv<R: Read>(reader: R) -> Result<AreaSeries> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let header = rdr.headers().map_err(|e| csv_error(e, 1))?.clone();
    if header.iter().collect::<Vec<_>>() != CSV_HEADER {
        return Err(Error::Parse {
            line: 1,
            message: format!(
                "expected header {:?}, found {:?}",
                CSV_HEADER.join(","),
                header.iter().collect::<Vec<_>>().join(",")
            ),
        });
    }
    let (mut xs, mut ys) = (Vec::new(), Vec::new());
    let mut lines = Vec::new();
    for record in rdr.records() {
        let record = record.map_err(|e| csv_error(e, 0))?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        let field = |i: usize, name: &str| -> Result<f64> {
            let raw = record.get(i).unwrap_or("");
            raw.parse::<f64>().map_err(|_| Error::Parse {
                line,
                message: format!("{name} {raw:?} is not a number"),
            })
        };
        if record.len() != 2 {
            return Err(Error::Parse {
                line,
                message: format!("expected 2 fields, found {}", record.len()),
            });
        }
        xs.push(field(0, "arc length")?);
        ys.push(field(1, "area")?);
        lines.push(line);
    }
    // Report validation failures against the offending line.
    let sample_line = |msg: &str| -> Option<usize> {
        let tail = msg.split("sample ").nth(1)?;
        let idx: usize = tail.split(|c: char| !c.is_ascii_digit()).next()?.parse().ok()?;
        lines.get(idx).copied()
    };
    AreaSeries::new(xs, ys).map_err(|e| match &e {
        Error::InvalidSeries(m) | Error::Domain(m) => match sample_line(m) {
            Some(line) => Error::Parse {
                line,
                message: m.clone(),
            },
            None => e,
        },
        _ => e,
    })
}

fn csv_error(e: csv::Error, fallback_line: usize) -> Error {
    let line = e.position().map_or(fallback_line, |p| p.line() as usize);
    Error::Parse {
        line,
        message: e.to_string(),
    }
}

pub fn read_area_csv(path: &Path) -> Result<AreaSeries> {
    let file = std::fs::File::open(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    parse_area_csv(file)
}

pub fn write_area_csv<W: Write>(out: W, series: &AreaSeries) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CSV_HEADER).map_err(|e| Error::Io(e.to_string()))?;
    for (x, a) in series.arc_length().iter().zip(series.area()) {
        w.write_record([x.to_string(), a.to_string()])
            .map_err(|e| Error::Io(e.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

/// Aligned pair and its log-difference series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlignedRecord {
    pub shift_a: i32,
    pub n: usize,
    pub y: Vec<f64>,
    pub origin_mm: f64,
    pub baseline_area: Vec<f64>,
    pub followup_area: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub interpolation: Option<[Interpolation; 2]>,
    /// Resampled values raised to the area floor, per scan.
    #[serde(default)]
    pub clamped: [usize; 2],
}

impl AlignedRecord {
    pub fn from_pair(pair: &AlignedPair) -> Self {
        let y = crate::series_prep::log_difference(pair);
        Self {
            shift_a: pair.shift_a,
            n: pair.n,
            y: y.y,
            origin_mm: pair.origin_mm(),
            baseline_area: pair.baseline.area().to_vec(),
            followup_area: pair.followup.area().to_vec(),
            interpolation: None,
            clamped: [0, 0],
        }
    }

    pub fn pair(&self) -> Result<AlignedPair> {
        AlignedPair::from_grid(
            self.origin_mm,
            self.baseline_area.clone(),
            self.followup_area.clone(),
            self.shift_a,
        )
    }

    pub fn series(&self) -> LogDiffSeries {
        LogDiffSeries {
            y: self.y.clone(),
            origin_mm: self.origin_mm,
        }
    }

    fn check(&self) -> Result<()> {
        if self.y.len() != self.n {
            return Err(Error::InvalidSeries(format!(
                "record says n = {} but y has {} values",
                self.n,
                self.y.len()
            )));
        }
        if let Some(i) = self.y.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidSeries(format!("y[{i}] is not finite")));
        }
        Ok(())
    }
}

/// Read an aligned record. Bare `{shift_a, n, y}` records are accepted for
/// detection; volume computations need the area arrays as well.
pub fn read_aligned(path: &Path) -> Result<AlignedRecord> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    parse_aligned(&text)
}

pub fn parse_aligned(text: &str) -> Result<AlignedRecord> {
    #[derive(Deserialize)]
    struct Loose {
        shift_a: i32,
        n: usize,
        y: Vec<f64>,
        #[serde(default)]
        origin_mm: f64,
        #[serde(default)]
        baseline_area: Vec<f64>,
        #[serde(default)]
        followup_area: Vec<f64>,
        #[serde(default)]
        interpolation: Option<[Interpolation; 2]>,
        #[serde(default)]
        clamped: [usize; 2],
    }
    let l: Loose = serde_json::from_str(text).map_err(|e| Error::Parse {
        line: e.line(),
        message: e.to_string(),
    })?;
    let rec = AlignedRecord {
        shift_a: l.shift_a,
        n: l.n,
        y: l.y,
        origin_mm: l.origin_mm,
        baseline_area: l.baseline_area,
        followup_area: l.followup_area,
        interpolation: l.interpolation,
        clamped: l.clamped,
    };
    rec.check()?;
    Ok(rec)
}

/// One stored state as a JSON Lines record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub iter: usize,
    pub m: usize,
    pub tau: Vec<usize>,
    pub segments: Vec<SegmentParams>,
}

pub fn write_trace_jsonl<W: Write>(mut out: W, trace: &ChainTrace) -> Result<()> {
    for s in &trace.samples {
        let rec = TraceRecord {
            iter: s.iter,
            m: s.state.m(),
            tau: s.state.tau.clone(),
            segments: s.state.segments.clone(),
        };
        serde_json::to_writer(&mut out, &rec).map_err(|e| Error::Io(e.to_string()))?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MoveDiagnostics {
    pub dispatched: u64,
    pub accepted: u64,
    pub rejected: u64,
    pub inadmissible: u64,
    pub acceptance_rate: f64,
}

impl From<&MoveCounts> for MoveDiagnostics {
    fn from(c: &MoveCounts) -> Self {
        Self {
            dispatched: c.dispatched,
            accepted: c.accepted,
            rejected: c.rejected,
            inadmissible: c.inadmissible,
            acceptance_rate: c.acceptance_rate(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainDiagnostics {
    pub params: MoveDiagnostics,
    pub shift: MoveDiagnostics,
    pub birth: MoveDiagnostics,
    pub death: MoveDiagnostics,
    pub stored: usize,
    pub mean_m: f64,
    pub degenerate_init: bool,
}

impl ChainDiagnostics {
    pub fn of(trace: &ChainTrace) -> Self {
        let d = |k| MoveDiagnostics::from(trace.stats.get(k));
        let stored = trace.samples.len();
        let mean_m = if stored == 0 {
            0.0
        } else {
            trace.samples.iter().map(|s| s.state.m() as f64).sum::<f64>() / stored as f64
        };
        Self {
            params: d(MoveKind::Params),
            shift: d(MoveKind::Shift),
            birth: d(MoveKind::Birth),
            death: d(MoveKind::Death),
            stored,
            mean_m,
            degenerate_init: trace.degenerate_init,
        }
    }
}

/// Detector output shared by all methods. A no-call carries `reason` and
/// no point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionRecord {
    pub method: String,
    pub point_mm: Option<f64>,
    /// `[location_mm, mass]` in increasing location.
    pub peaks: Vec<[f64; 2]>,
    pub discarded: Option<[f64; 2]>,
    pub histogram: Option<Vec<f64>>,
    pub no_call: Option<String>,
    pub diagnostics: serde_json::Value,
}

impl DetectionRecord {
    pub fn rjmh(hist: &PosteriorHistogram, call: &Result<DilatationCall>, trace: &ChainTrace) -> Result<Self> {
        let diagnostics =
            serde_json::to_value(ChainDiagnostics::of(trace)).map_err(|e| Error::InvalidState(e.to_string()))?;
        let base = Self {
            method: "rjmh".into(),
            point_mm: None,
            peaks: Vec::new(),
            discarded: None,
            histogram: Some(hist.mass.clone()),
            no_call: None,
            diagnostics,
        };
        match call {
            Ok(c) => Ok(Self {
                point_mm: Some(c.point_mm),
                peaks: c.peaks.iter().map(|p| [p.location_mm, p.mass]).collect(),
                discarded: c.discarded_proximal_peak.map(|p| [p.location_mm, p.mass]),
                ..base
            }),
            Err(Error::NoCall(reason)) => Ok(Self {
                no_call: Some(reason.clone()),
                ..base
            }),
            Err(e) => Err(e.clone()),
        }
    }

    pub fn baseline(call: &BaselineCall) -> Result<Self> {
        let method = match call.aux {
            BaselineAux::Threshold { .. } => "threshold",
            BaselineAux::PenalizedCost { .. } => "penalized_cost",
        };
        Ok(Self {
            method: method.into(),
            point_mm: Some(call.point_mm),
            peaks: vec![[call.point_mm, 1.0]],
            discarded: None,
            histogram: None,
            no_call: None,
            diagnostics: serde_json::to_value(&call.aux).map_err(|e| Error::InvalidState(e.to_string()))?,
        })
    }

    pub fn no_call(method: &str, reason: String) -> Self {
        Self {
            method: method.into(),
            point_mm: None,
            peaks: Vec::new(),
            discarded: None,
            histogram: None,
            no_call: Some(reason),
            diagnostics: serde_json::Value::Null,
        }
    }
}

/// Pretty JSON with a trailing newline.
pub fn to_json<T: Serialize>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value).map_err(|e| Error::InvalidState(e.to_string()))?;
    s.push('\n');
    Ok(s)
}
