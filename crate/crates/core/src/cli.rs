//! Command-line interface.
//!
//! Exit codes: 0 on success (a no-call is a success), 2 for usage or input
//! errors, 3 when an internal invariant breaks. Errors are printed to stderr
//! as a one-line JSON object.

use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::baselines::{penalized_cost_detect, threshold_detect};
use crate::error::{Error, Result};
use crate::io::{self, AlignedRecord, DetectionRecord};
use crate::posterior::rjmh_detect;
use crate::sampler::{Likelihood, SamplerConfig, DEFAULT_PRIOR_MIX};
use crate::segment_model::PriorSpec;
use crate::series_prep::{align_pair, resample_to_1mm, LogDiffSeries};
use crate::simulation::{heatmap_csv, run_sweep, synthetic_airways, Detector, SweepGrid, SweepResult};
use crate::volume::{report_row, volume_report, REPORT_HEADER};

#[derive(Debug, Parser)]
#[command(
    name = "airway-cpd",
    version,
    about = "Changepoint detection on airway area-change profiles"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Resample and register a baseline/follow-up pair of scan CSVs.
    Align {
        baseline: PathBuf,
        followup: PathBuf,
        #[command(flatten)]
        out: OutputArgs,
    },
    /// Locate the dilatation point in an aligned pair.
    Detect {
        aligned: PathBuf,
        #[arg(long, value_enum, default_value_t = Method::Rjmh)]
        method: Method,
        /// Also write the stored chain states as JSON Lines.
        #[arg(long)]
        trace: Option<PathBuf>,
        #[command(flatten)]
        sampler: SamplerArgs,
        #[command(flatten)]
        out: OutputArgs,
    },
    /// Displacement sweep over synthetic Student-t noise airways.
    Simulate {
        #[arg(long, default_value_t = 14)]
        airways: usize,
        /// Samples per airway (1 mm spacing).
        #[arg(long, default_value_t = 120)]
        length: usize,
        #[arg(long, default_value_t = 0.1)]
        noise_sigma: f64,
        #[arg(long, default_value_t = 10.0)]
        noise_nu: f64,
        #[command(flatten)]
        sweep: SweepArgs,
        #[command(flatten)]
        sampler: SamplerArgs,
        #[command(flatten)]
        out: OutputArgs,
    },
    /// Displacement sweep over the aligned records (*.json) in a directory.
    Evaluate {
        airway_dir: PathBuf,
        #[command(flatten)]
        sweep: SweepArgs,
        #[command(flatten)]
        sampler: SamplerArgs,
        #[command(flatten)]
        out: OutputArgs,
    },
    /// Region volumes and percentage volume change at a dilatation point.
    Volume {
        aligned: PathBuf,
        /// Dilatation point (mm from the carina).
        #[arg(long = "t", allow_negative_numbers = true)]
        t_mm: f64,
        /// Label for the `airway` column; defaults to the file stem.
        #[arg(long)]
        airway: Option<String>,
        #[command(flatten)]
        out: OutputArgs,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Method {
    Rjmh,
    Threshold,
    #[value(alias = "penalized-cost", alias = "penalized_cost")]
    Lavielle,
}

#[derive(Debug, Clone, Args)]
pub struct OutputArgs {
    /// Output file; standard output when omitted.
    #[arg(short, long)]
    pub output: Option<PathBuf>,
    /// Write a run manifest (inputs, configuration, version, timestamps).
    #[arg(long)]
    pub manifest: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct SamplerArgs {
    #[arg(long, default_value_t = 100_000, value_parser = clap::value_parser!(u64).range(1..))]
    pub iterations: u64,
    /// Fraction of iterations discarded as burn-in.
    #[arg(long = "burn-in", default_value_t = 0.25)]
    pub burn_in: f64,
    #[arg(long, default_value_t = 5, value_parser = clap::value_parser!(u64).range(1..))]
    pub thin: u64,
    #[arg(long, default_value_t = 10, value_parser = clap::value_parser!(u64).range(1..))]
    pub kmax: u64,
    /// Proposal scale. Alone it applies to mu, sigma2 and nu alike;
    /// without it the tuned per-coordinate defaults are used.
    #[arg(long)]
    pub epsilon: Option<f64>,
    #[arg(long)]
    pub epsilon_sigma2: Option<f64>,
    #[arg(long)]
    pub epsilon_nu: Option<f64>,
    #[arg(long, default_value_t = 1.0)]
    pub lambda: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Probability of drawing a new segment's mu and sigma2 from the prior
    /// in birth and death proposals.
    #[arg(long, default_value_t = DEFAULT_PRIOR_MIX)]
    pub prior_mix: f64,
}

impl SamplerArgs {
    pub fn config(&self) -> Result<SamplerConfig> {
        let d = SamplerConfig::default();
        let (epsilon, es2, enu) = match self.epsilon {
            Some(e) => (e, self.epsilon_sigma2, self.epsilon_nu),
            None => (
                d.epsilon,
                self.epsilon_sigma2.or(d.epsilon_sigma2),
                self.epsilon_nu.or(d.epsilon_nu),
            ),
        };
        let cfg = SamplerConfig {
            iterations: self.iterations as usize,
            burn_in_fraction: self.burn_in,
            thin: self.thin as usize,
            k_max: self.kmax as usize,
            epsilon,
            epsilon_sigma2: es2,
            epsilon_nu: enu,
            lambda: self.lambda,
            seed: self.seed,
            likelihood: Likelihood::StudentT,
            prior_mix: self.prior_mix,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Clone, Args)]
pub struct SweepArgs {
    /// Onsets in mm from the distal point, comma separated.
    #[arg(long, value_delimiter = ',', default_values_t = SweepGrid::default().alphas)]
    pub alphas: Vec<f64>,
    /// Logistic magnitudes (log-area units), comma separated.
    #[arg(long, value_delimiter = ',', default_values_t = SweepGrid::default().magnitudes)]
    pub magnitudes: Vec<f64>,
    /// Detectors to run: rjmh, threshold, lavielle.
    #[arg(long, value_delimiter = ',', default_values_t = vec!["rjmh".to_string(), "threshold".to_string(), "lavielle".to_string()])]
    pub detectors: Vec<String>,
    /// Also write every raw displacement as JSON.
    #[arg(long)]
    pub runs: Option<PathBuf>,
}

impl SweepArgs {
    fn grid(&self) -> SweepGrid {
        SweepGrid {
            alphas: self.alphas.clone(),
            magnitudes: self.magnitudes.clone(),
        }
    }

    fn detectors(&self) -> Result<Vec<Detector>> {
        self.detectors.iter().map(|d| d.parse()).collect()
    }
}

#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub inputs: Vec<String>,
    pub outputs: Vec<String>,
    pub config: serde_json::Value,
    pub tool_version: String,
    pub seed: Option<u64>,
    pub started_unix_s: f64,
    pub finished_unix_s: f64,
}

fn unix_now() -> f64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map_or(0.0, |d| d.as_secs_f64())
}

fn display(p: &Path) -> String {
    p.display().to_string()
}

fn emit(out: &OutputArgs, content: &str) -> Result<()> {
    match &out.output {
        Some(path) => std::fs::write(path, content).map_err(|e| Error::Io(format!("{}: {e}", path.display()))),
        None => {
            use std::io::Write;
            let mut stdout = std::io::stdout().lock();
            stdout.write_all(content.as_bytes())?;
            stdout.flush()?;
            Ok(())
        }
    }
}

fn write_file(path: &Path, content: &[u8]) -> Result<()> {
    std::fs::write(path, content).map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}

struct Outcome {
    primary: String,
    inputs: Vec<String>,
    extra_outputs: Vec<String>,
    config: serde_json::Value,
    seed: Option<u64>,
}

pub fn run(cli: Cli) -> Result<()> {
    let started = unix_now();
    let (name, out) = match &cli.command {
        Command::Align { out, .. } => ("align", out),
        Command::Detect { out, .. } => ("detect", out),
        Command::Simulate { out, .. } => ("simulate", out),
        Command::Evaluate { out, .. } => ("evaluate", out),
        Command::Volume { out, .. } => ("volume", out),
    };
    let outcome = match &cli.command {
        Command::Align { baseline, followup, .. } => cmd_align(baseline, followup)?,
        Command::Detect {
            aligned,
            method,
            trace,
            sampler,
            ..
        } => cmd_detect(aligned, *method, trace.as_deref(), sampler)?,
        Command::Simulate {
            airways,
            length,
            noise_sigma,
            noise_nu,
            sweep,
            sampler,
            ..
        } => {
            let cfg = sampler.config()?;
            let set = synthetic_airways(*airways, *length, *noise_sigma, *noise_nu, cfg.seed)?;
            let mut o = cmd_sweep(&set, sweep, &cfg)?;
            o.config["airways"] = serde_json::json!({
                "count": airways, "length": length, "noise_sigma": noise_sigma, "noise_nu": noise_nu
            });
            o
        }
        Command::Evaluate {
            airway_dir,
            sweep,
            sampler,
            ..
        } => {
            let cfg = sampler.config()?;
            let (paths, set) = load_airway_dir(airway_dir)?;
            let mut o = cmd_sweep(&set, sweep, &cfg)?;
            o.inputs = paths;
            o
        }
        Command::Volume {
            aligned, t_mm, airway, ..
        } => cmd_volume(aligned, *t_mm, airway.as_deref())?,
    };
    emit(out, &outcome.primary)?;
    if let Some(path) = &out.manifest {
        let mut outputs: Vec<String> = out.output.iter().map(|p| display(p)).collect();
        outputs.extend(outcome.extra_outputs);
        let manifest = RunManifest {
            command: name.into(),
            inputs: outcome.inputs,
            outputs,
            config: outcome.config,
            tool_version: env!("CARGO_PKG_VERSION").into(),
            seed: outcome.seed,
            started_unix_s: started,
            finished_unix_s: unix_now(),
        };
        write_file(path, io::to_json(&manifest)?.as_bytes())?;
    }
    Ok(())
}

fn cmd_align(baseline: &Path, followup: &Path) -> Result<Outcome> {
    let b = resample_to_1mm(&io::read_area_csv(baseline)?)?;
    let f = resample_to_1mm(&io::read_area_csv(followup)?)?;
    let pair = align_pair(&b.series, &f.series)?;
    let mut rec = AlignedRecord::from_pair(&pair);
    rec.interpolation = Some([b.method, f.method]);
    rec.clamped = [b.clamped, f.clamped];
    Ok(Outcome {
        primary: io::to_json(&rec)?,
        inputs: vec![display(baseline), display(followup)],
        extra_outputs: Vec::new(),
        config: serde_json::json!({}),
        seed: None,
    })
}

fn cmd_detect(aligned: &Path, method: Method, trace_path: Option<&Path>, sampler: &SamplerArgs) -> Result<Outcome> {
    let rec = io::read_aligned(aligned)?;
    let y = rec.series();
    let mut extra = Vec::new();
    let (record, config, seed) = match method {
        Method::Rjmh => {
            let cfg = sampler.config()?;
            let det = rjmh_detect(&y, &PriorSpec::default(), &cfg)?;
            if let Some(path) = trace_path {
                let mut buf = Vec::new();
                io::write_trace_jsonl(&mut buf, &det.trace)?;
                write_file(path, &buf)?;
                extra.push(display(path));
            }
            let record = DetectionRecord::rjmh(&det.histogram, &det.call, &det.trace)?;
            let config = serde_json::json!({ "sampler": cfg, "priors": PriorSpec::default() });
            (record, config, Some(cfg.seed))
        }
        Method::Threshold => (
            baseline_record("threshold", threshold_detect(&y))?,
            serde_json::json!({}),
            None,
        ),
        Method::Lavielle => (
            baseline_record("penalized_cost", penalized_cost_detect(&y))?,
            serde_json::json!({}),
            None,
        ),
    };
    let mut config = config;
    config["method"] = serde_json::json!(method.to_possible_value().map(|v| v.get_name().to_string()));
    Ok(Outcome {
        primary: io::to_json(&record)?,
        inputs: vec![display(aligned)],
        extra_outputs: extra,
        config,
        seed,
    })
}

fn baseline_record(method: &str, call: Result<crate::baselines::BaselineCall>) -> Result<DetectionRecord> {
    match call {
        Ok(c) => DetectionRecord::baseline(&c),
        Err(Error::NoCall(reason)) => Ok(DetectionRecord::no_call(method, reason)),
        Err(e) => Err(e),
    }
}

fn load_airway_dir(dir: &Path) -> Result<(Vec<String>, Vec<LogDiffSeries>)> {
    let entries = std::fs::read_dir(dir).map_err(|e| Error::Io(format!("{}: {e}", dir.display())))?;
    let mut paths: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(Error::InvalidConfig(format!(
            "no *.json airway records in {}",
            dir.display()
        )));
    }
    let series = paths
        .iter()
        .map(|p| io::read_aligned(p).map(|r| r.series()))
        .collect::<Result<_>>()?;
    Ok((paths.iter().map(|p| display(p)).collect(), series))
}

fn cmd_sweep(airways: &[LogDiffSeries], sweep: &SweepArgs, cfg: &SamplerConfig) -> Result<Outcome> {
    let grid = sweep.grid();
    let detectors = sweep.detectors()?;
    let result: SweepResult = run_sweep(&grid, airways, &detectors, &PriorSpec::default(), cfg)?;
    let mut extra = Vec::new();
    if let Some(path) = &sweep.runs {
        write_file(path, io::to_json(&result)?.as_bytes())?;
        extra.push(display(path));
    }
    Ok(Outcome {
        primary: heatmap_csv(&result.cells),
        inputs: Vec::new(),
        extra_outputs: extra,
        config: serde_json::json!({ "sampler": cfg, "grid": grid, "detectors": detectors }),
        seed: Some(cfg.seed),
    })
}

fn cmd_volume(aligned: &Path, t_mm: f64, airway: Option<&str>) -> Result<Outcome> {
    let rec = io::read_aligned(aligned)?;
    let report = volume_report(&rec.pair()?, t_mm)?;
    let label = airway.map(str::to_string).unwrap_or_else(|| {
        aligned
            .file_stem()
            .map_or_else(|| "airway".into(), |s| s.to_string_lossy().into_owned())
    });
    Ok(Outcome {
        primary: format!("{REPORT_HEADER}\n{}\n", report_row(&label, &report)),
        inputs: vec![display(aligned)],
        extra_outputs: Vec::new(),
        config: serde_json::json!({ "t_mm": t_mm, "report": report }),
        seed: None,
    })
}

pub fn exit_code(e: &Error) -> i32 {
    if e.is_internal() {
        3
    } else {
        2
    }
}

/// Parse arguments, run, and return the process exit code.
pub fn main_with<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            let msg = serde_json::json!({ "error": e.kind(), "message": e.to_string() });
            eprintln!("{msg}");
            exit_code(&e)
        }
    }
}
