//! Python bindings. Structured results (traces, detections, sweeps, volume
//! reports) come back as plain dicts with the same layout as the CLI JSON.

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use airway_cpd_core::baselines::{penalized_cost_detect, threshold_detect, BaselineCall};
use airway_cpd_core::io::{self, DetectionRecord};
use airway_cpd_core::posterior::rjmh_detect;
use airway_cpd_core::sampler::{self, Likelihood};
use airway_cpd_core::segment_model::{self, PriorSpec};
use airway_cpd_core::series_prep::{self, AreaSeries, LogDiffSeries};
use airway_cpd_core::simulation::{self, Detector, LogisticDilatation, SweepGrid};
use airway_cpd_core::{volume, Error};

fn py_err(e: Error) -> PyErr {
    if e.is_internal() {
        PyRuntimeError::new_err(e.to_string())
    } else {
        PyValueError::new_err(e.to_string())
    }
}

fn to_py<T: serde::Serialize>(py: Python<'_>, value: &T) -> PyResult<Py<PyAny>> {
    let text = io::to_json(value).map_err(py_err)?;
    Ok(py.import("json")?.call_method1("loads", (text,))?.unbind())
}

fn series(y: Vec<f64>, origin_mm: f64) -> LogDiffSeries {
    LogDiffSeries { y, origin_mm }
}

/// Sampler settings. Defaults match the CLI.
#[pyclass(module = "airway_cpd", get_all, set_all, skip_from_py_object)]
#[derive(Clone)]
pub struct SamplerConfig {
    pub iterations: usize,
    pub burn_in_fraction: f64,
    pub thin: usize,
    pub k_max: usize,
    pub epsilon: f64,
    pub epsilon_sigma2: Option<f64>,
    pub epsilon_nu: Option<f64>,
    pub lambda_: f64,
    pub seed: u64,
    pub prior_mix: f64,
    /// Ignore the data and sample the prior.
    pub flat_likelihood: bool,
}

impl SamplerConfig {
    fn core(&self) -> sampler::SamplerConfig {
        sampler::SamplerConfig {
            iterations: self.iterations,
            burn_in_fraction: self.burn_in_fraction,
            thin: self.thin,
            k_max: self.k_max,
            epsilon: self.epsilon,
            epsilon_sigma2: self.epsilon_sigma2,
            epsilon_nu: self.epsilon_nu,
            lambda: self.lambda_,
            seed: self.seed,
            likelihood: if self.flat_likelihood {
                Likelihood::Flat
            } else {
                Likelihood::StudentT
            },
            prior_mix: self.prior_mix,
        }
    }
}

#[pymethods]
impl SamplerConfig {
    #[new]
    #[pyo3(signature = (
        iterations = 100_000,
        burn_in_fraction = 0.25,
        thin = 5,
        k_max = 10,
        epsilon = sampler::DEFAULT_EPSILON_MU,
        epsilon_sigma2 = Some(sampler::DEFAULT_EPSILON_SIGMA2),
        epsilon_nu = Some(sampler::DEFAULT_EPSILON_NU),
        lambda_ = 1.0,
        seed = 0,
        prior_mix = sampler::DEFAULT_PRIOR_MIX,
        flat_likelihood = false,
    ))]
    #[allow(clippy::too_many_arguments)]
    fn new(
        iterations: usize,
        burn_in_fraction: f64,
        thin: usize,
        k_max: usize,
        epsilon: f64,
        epsilon_sigma2: Option<f64>,
        epsilon_nu: Option<f64>,
        lambda_: f64,
        seed: u64,
        prior_mix: f64,
        flat_likelihood: bool,
    ) -> PyResult<Self> {
        let cfg = Self {
            iterations,
            burn_in_fraction,
            thin,
            k_max,
            epsilon,
            epsilon_sigma2,
            epsilon_nu,
            lambda_,
            seed,
            prior_mix,
            flat_likelihood,
        };
        cfg.core().validate().map_err(py_err)?;
        Ok(cfg)
    }

    fn __repr__(&self) -> String {
        format!(
            "SamplerConfig(iterations={}, k_max={}, epsilon={}, seed={})",
            self.iterations, self.k_max, self.epsilon, self.seed
        )
    }
}

fn config_or_default(config: Option<&SamplerConfig>) -> PyResult<sampler::SamplerConfig> {
    let cfg = config.map_or_else(sampler::SamplerConfig::default, SamplerConfig::core);
    cfg.validate().map_err(py_err)?;
    Ok(cfg)
}

/// A registered baseline/follow-up pair on a shared 1 mm grid.
#[pyclass(module = "airway_cpd", frozen)]
pub struct AlignedPair {
    inner: series_prep::AlignedPair,
}

#[pymethods]
impl AlignedPair {
    /// Build a pair directly from areas already on a shared 1 mm grid.
    #[staticmethod]
    #[pyo3(signature = (origin_mm, baseline, followup, shift_a = 0))]
    fn from_grid(origin_mm: f64, baseline: Vec<f64>, followup: Vec<f64>, shift_a: i32) -> PyResult<Self> {
        let inner = series_prep::AlignedPair::from_grid(origin_mm, baseline, followup, shift_a).map_err(py_err)?;
        Ok(Self { inner })
    }

    #[getter]
    fn shift_a(&self) -> i32 {
        self.inner.shift_a
    }

    #[getter]
    fn n(&self) -> usize {
        self.inner.n
    }

    #[getter]
    fn origin_mm(&self) -> f64 {
        self.inner.origin_mm()
    }

    #[getter]
    fn baseline_area(&self) -> Vec<f64> {
        self.inner.baseline.area().to_vec()
    }

    #[getter]
    fn followup_area(&self) -> Vec<f64> {
        self.inner.followup.area().to_vec()
    }

    /// `log(followup) - log(baseline)` per grid point.
    fn log_difference(&self) -> Vec<f64> {
        series_prep::log_difference(&self.inner).y
    }

    /// The aligned-record JSON written by `airway-cpd align`.
    fn to_json(&self) -> PyResult<String> {
        io::to_json(&io::AlignedRecord::from_pair(&self.inner)).map_err(py_err)
    }

    fn __repr__(&self) -> String {
        format!(
            "AlignedPair(n={}, shift_a={}, origin_mm={})",
            self.inner.n,
            self.inner.shift_a,
            self.inner.origin_mm()
        )
    }
}

/// Resample a scan onto the integer-millimetre grid.
/// Returns `(arc_length, area, interpolation)`.
#[pyfunction]
fn resample_to_1mm(arc_length: Vec<f64>, area: Vec<f64>) -> PyResult<(Vec<f64>, Vec<f64>, &'static str)> {
    let r = series_prep::resample_to_1mm(&AreaSeries::new(arc_length, area).map_err(py_err)?).map_err(py_err)?;
    let method = match r.method {
        series_prep::Interpolation::Cubic => "cubic",
        series_prep::Interpolation::Linear => "linear",
    };
    Ok((r.series.arc_length().to_vec(), r.series.area().to_vec(), method))
}

/// Resample both scans and register the follow-up against the baseline.
#[pyfunction]
fn align(
    baseline_arc: Vec<f64>,
    baseline_area: Vec<f64>,
    followup_arc: Vec<f64>,
    followup_area: Vec<f64>,
) -> PyResult<AlignedPair> {
    let b =
        series_prep::resample_to_1mm(&AreaSeries::new(baseline_arc, baseline_area).map_err(py_err)?).map_err(py_err)?;
    let f =
        series_prep::resample_to_1mm(&AreaSeries::new(followup_arc, followup_area).map_err(py_err)?).map_err(py_err)?;
    let inner = series_prep::align_pair(&b.series, &f.series).map_err(py_err)?;
    Ok(AlignedPair { inner })
}

#[pyfunction]
fn student_t_logpdf(x: f64, mu: f64, sigma2: f64, nu: f64) -> f64 {
    segment_model::student_t_logpdf(x, mu, sigma2, nu)
}

/// Run the sampler and return the stored states and move statistics.
#[pyfunction]
#[pyo3(signature = (y, config = None, origin_mm = 0.0))]
fn run_chain(py: Python<'_>, y: Vec<f64>, config: Option<&SamplerConfig>, origin_mm: f64) -> PyResult<Py<PyAny>> {
    let cfg = config_or_default(config)?;
    let y = series(y, origin_mm);
    let trace = py
        .detach(|| sampler::run_chain(&y, &PriorSpec::default(), &cfg))
        .map_err(py_err)?;
    to_py(py, &trace)
}

/// Sample, build the changepoint posterior and call the dilatation point.
#[pyfunction]
#[pyo3(signature = (y, config = None, origin_mm = 0.0))]
fn detect_rjmh(py: Python<'_>, y: Vec<f64>, config: Option<&SamplerConfig>, origin_mm: f64) -> PyResult<Py<PyAny>> {
    let cfg = config_or_default(config)?;
    let y = series(y, origin_mm);
    let det = py
        .detach(|| rjmh_detect(&y, &PriorSpec::default(), &cfg))
        .map_err(py_err)?;
    let record = DetectionRecord::rjmh(&det.histogram, &det.call, &det.trace).map_err(py_err)?;
    to_py(py, &record)
}

fn baseline_record(method: &str, call: airway_cpd_core::Result<BaselineCall>) -> PyResult<DetectionRecord> {
    match call {
        Ok(c) => DetectionRecord::baseline(&c).map_err(py_err),
        Err(Error::NoCall(reason)) => Ok(DetectionRecord::no_call(method, reason)),
        Err(e) => Err(py_err(e)),
    }
}

/// Upper-quartile threshold baseline.
#[pyfunction]
#[pyo3(signature = (y, origin_mm = 0.0))]
fn detect_threshold(py: Python<'_>, y: Vec<f64>, origin_mm: f64) -> PyResult<Py<PyAny>> {
    let record = baseline_record("threshold", threshold_detect(&series(y, origin_mm)))?;
    to_py(py, &record)
}

/// Two-changepoint penalized least-squares baseline.
#[pyfunction]
#[pyo3(signature = (y, origin_mm = 0.0))]
fn detect_penalized_cost(py: Python<'_>, y: Vec<f64>, origin_mm: f64) -> PyResult<Py<PyAny>> {
    let record = baseline_record("penalized_cost", penalized_cost_detect(&series(y, origin_mm)))?;
    to_py(py, &record)
}

/// Add a logistic dilatation of `magnitude` starting `alpha_mm` from the
/// distal end.
#[pyfunction]
#[pyo3(signature = (y, magnitude, alpha_mm, origin_mm = 0.0))]
fn apply_dilatation(y: Vec<f64>, magnitude: f64, alpha_mm: f64, origin_mm: f64) -> PyResult<Vec<f64>> {
    let out = simulation::apply_dilatation(&series(y, origin_mm), &LogisticDilatation::new(magnitude, alpha_mm))
        .map_err(py_err)?;
    Ok(out.y)
}

/// Student-t noise series standing in for healthy airways.
#[pyfunction]
#[pyo3(signature = (count, length = 120, sigma = 0.1, nu = 10.0, seed = 0))]
fn synthetic_airways(count: usize, length: usize, sigma: f64, nu: f64, seed: u64) -> PyResult<Vec<Vec<f64>>> {
    let set = simulation::synthetic_airways(count, length, sigma, nu, seed).map_err(py_err)?;
    Ok(set.into_iter().map(|s| s.y).collect())
}

/// Displacement sweep. Returns `{"cells": [...], "runs": [...]}`.
#[pyfunction]
#[pyo3(signature = (airways, alphas = None, magnitudes = None, detectors = None, config = None))]
fn run_sweep(
    py: Python<'_>,
    airways: Vec<Vec<f64>>,
    alphas: Option<Vec<f64>>,
    magnitudes: Option<Vec<f64>>,
    detectors: Option<Vec<String>>,
    config: Option<&SamplerConfig>,
) -> PyResult<Py<PyAny>> {
    let cfg = config_or_default(config)?;
    let d = SweepGrid::default();
    let grid = SweepGrid {
        alphas: alphas.unwrap_or(d.alphas),
        magnitudes: magnitudes.unwrap_or(d.magnitudes),
    };
    let detectors: Vec<Detector> = match detectors {
        Some(names) => names
            .iter()
            .map(|n| n.parse::<Detector>().map_err(py_err))
            .collect::<PyResult<_>>()?,
        None => Detector::ALL.to_vec(),
    };
    let airways: Vec<LogDiffSeries> = airways.into_iter().map(LogDiffSeries::new).collect();
    let result = py
        .detach(|| simulation::run_sweep(&grid, &airways, &detectors, &PriorSpec::default(), &cfg))
        .map_err(py_err)?;
    to_py(py, &result)
}

/// Region volumes and percentage volume change at dilatation point `t_mm`.
#[pyfunction]
fn volume_report(py: Python<'_>, pair: &AlignedPair, t_mm: f64) -> PyResult<Py<PyAny>> {
    let report = volume::volume_report(&pair.inner, t_mm).map_err(py_err)?;
    to_py(py, &report)
}

#[pymodule]
fn airway_cpd(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add_class::<SamplerConfig>()?;
    m.add_class::<AlignedPair>()?;
    m.add_function(wrap_pyfunction!(resample_to_1mm, m)?)?;
    m.add_function(wrap_pyfunction!(align, m)?)?;
    m.add_function(wrap_pyfunction!(student_t_logpdf, m)?)?;
    m.add_function(wrap_pyfunction!(run_chain, m)?)?;
    m.add_function(wrap_pyfunction!(detect_rjmh, m)?)?;
    m.add_function(wrap_pyfunction!(detect_threshold, m)?)?;
    m.add_function(wrap_pyfunction!(detect_penalized_cost, m)?)?;
    m.add_function(wrap_pyfunction!(apply_dilatation, m)?)?;
    m.add_function(wrap_pyfunction!(synthetic_airways, m)?)?;
    m.add_function(wrap_pyfunction!(run_sweep, m)?)?;
    m.add_function(wrap_pyfunction!(volume_report, m)?)?;
    Ok(())
}
