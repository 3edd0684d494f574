//! Experiment presets: configuration, execution and the files they write.
//!
//! Every preset writes trajectory CSVs and a `diagnostics.json` into the
//! output directory. Runs are deterministic: identical configurations give
//! byte-identical files.

mod config;
mod trajectory_csv;

pub use config::{
    ConfigError, ConfigOverrides, DerivedConstants, ExperimentConfig, FieldError, Preset, EPSILON_RANGE, OUT_ENV,
};
pub use trajectory_csv::{
    csv_header, read_trajectory_csv, write_trajectory_csv, CsvError, TrajectoryTable, CSV_SCHEMA_LINE,
};

use std::collections::BTreeMap;
use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;
use thiserror::Error;

use crate::analysis::{
    circle_points, full_diagnostics, sigma_estimate, tracking_distance, unit_directions, AnalysisError,
    DiagnosticsReport, DiagnosticsSettings, SigmaEstimate, SigmaGrid, Verdict, SCHEMA_VERSION,
};
use crate::dynamics::{GradientFlowProblem, HeavyBallProblem, Problem, Run};
use crate::example_xy::{claims_check, envelope_constants, ClaimsReport, ExampleError};
use crate::objectives::{objective_by_name, CriticalClass};

/// Horizon over which heavy-ball and gradient-flow runs are compared.
pub const TRACKING_HORIZON: f64 = 5.0;
/// Required shrink factor of the tracking distance across the ladder.
pub const TRACKING_SHRINK: f64 = 5.0;
/// `σ` may exceed the median per-ε length by at most this factor.
pub const SIGMA_SPREAD: f64 = 3.0;
/// Allowed energy at the `xy = 1/2` crossing.
pub const CROSSING_ENERGY_CAP: f64 = 0.5 + 1e-3;

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("integration failed: {0}")]
    Integrator(String),
    #[error("cannot write output: {0}")]
    Io(String),
}

impl RunError {
    pub fn kind(&self) -> &'static str {
        match self {
            RunError::Config(_) => "config",
            RunError::Integrator(_) => "integrator",
            RunError::Io(_) => "io",
        }
    }
}

impl From<AnalysisError> for RunError {
    fn from(e: AnalysisError) -> Self {
        RunError::Integrator(e.to_string())
    }
}

impl From<ExampleError> for RunError {
    fn from(e: ExampleError) -> Self {
        match e {
            ExampleError::EpsilonTooLarge { .. } | ExampleError::InvalidParameter(_) => {
                RunError::Config(ConfigError::Invalid(vec![FieldError {
                    field: "epsilon".into(),
                    message: e.to_string(),
                }]))
            }
            other => RunError::Integrator(other.to_string()),
        }
    }
}

impl From<CsvError> for RunError {
    fn from(e: CsvError) -> Self {
        match e {
            CsvError::Ode(o) => RunError::Integrator(o.to_string()),
            other => RunError::Io(other.to_string()),
        }
    }
}

impl From<std::io::Error> for RunError {
    fn from(e: std::io::Error) -> Self {
        RunError::Io(e.to_string())
    }
}

/// What a preset produced.
#[derive(Debug, Clone)]
pub struct Outcome {
    pub files: Vec<PathBuf>,
    /// Check name to verdict, in name order.
    pub checks: BTreeMap<String, Verdict>,
}

impl Outcome {
    pub fn failed_checks(&self) -> Vec<String> {
        self.checks
            .iter()
            .filter(|(_, v)| **v == Verdict::Fail)
            .map(|(k, _)| k.clone())
            .collect()
    }

    pub fn passed(&self) -> bool {
        self.failed_checks().is_empty()
    }
}

/// Per-ε entry of an ε sweep.
#[derive(Debug, Clone, Serialize)]
pub struct SweepEntry {
    pub epsilon: f64,
    pub tracking_distance: f64,
    pub length: f64,
    pub report: DiagnosticsReport,
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepResult {
    /// Strictly decreasing.
    pub epsilons: Vec<f64>,
    pub entries: Vec<SweepEntry>,
    pub tracking_horizon: f64,
    pub median_length: f64,
    pub sigma: SigmaEstimate,
}

fn verdict(ok: bool) -> Verdict {
    if ok {
        Verdict::Pass
    } else {
        Verdict::Fail
    }
}

struct Writer {
    dir: PathBuf,
    files: Vec<PathBuf>,
}

impl Writer {
    fn new(dir: &Path) -> Result<Self, RunError> {
        fs::create_dir_all(dir)?;
        Ok(Self {
            dir: dir.to_path_buf(),
            files: Vec::new(),
        })
    }

    fn csv(&mut self, name: &str, run: &Run, samples: usize) -> Result<(), RunError> {
        let path = self.dir.join(name);
        let f = BufWriter::new(fs::File::create(&path)?);
        write_trajectory_csv(run, samples, f)?;
        self.files.push(path);
        Ok(())
    }

    fn json(&mut self, name: &str, value: &serde_json::Value) -> Result<(), RunError> {
        let path = self.dir.join(name);
        let mut text = serde_json::to_string_pretty(value).expect("json value");
        text.push('\n');
        fs::write(&path, text)?;
        self.files.push(path);
        Ok(())
    }
}

fn settings(cfg: &ExperimentConfig) -> DiagnosticsSettings {
    DiagnosticsSettings {
        region: Some(cfg.region()),
        tail_split: Some(cfg.tail_split),
        seed: u64::from(cfg.seed),
        ..Default::default()
    }
}

fn heavy_ball(cfg: &ExperimentConfig, epsilon: f64) -> Result<Problem, RunError> {
    let obj = objective_by_name(&cfg.objective).map_err(|e| RunError::Config(ConfigError::Parse(e.to_string())))?;
    let p = HeavyBallProblem::new(obj, epsilon, cfg.gamma, vec![cfg.a, -cfg.a], vec![cfg.b, cfg.b])
        .map_err(|e| RunError::Config(ConfigError::Parse(e.to_string())))?;
    Ok(Problem::HeavyBall(p))
}

fn gradient_flow(cfg: &ExperimentConfig) -> Result<Problem, RunError> {
    let obj = objective_by_name(&cfg.objective).map_err(|e| RunError::Config(ConfigError::Parse(e.to_string())))?;
    let p = GradientFlowProblem::new(obj, cfg.gamma, vec![cfg.a, -cfg.a])
        .map_err(|e| RunError::Config(ConfigError::Parse(e.to_string())))?;
    Ok(Problem::GradientFlow(p))
}

fn record_report(
    checks: &mut BTreeMap<String, Verdict>,
    prefix: &str,
    report: &DiagnosticsReport,
    only: Option<&[&str]>,
) {
    for (name, c) in report.checks() {
        if only.is_none_or(|o| o.contains(&name)) {
            checks.insert(format!("{prefix}{name}"), c.verdict);
        }
    }
}

fn header(cfg: &ExperimentConfig) -> serde_json::Value {
    json!({
        "schema_version": SCHEMA_VERSION,
        "preset": cfg.preset.name(),
        "config": cfg,
    })
}

fn finish(mut w: Writer, mut doc: serde_json::Value, checks: BTreeMap<String, Verdict>) -> Result<Outcome, RunError> {
    doc["checks"] = json!(checks);
    w.json("diagnostics.json", &doc)?;
    Ok(Outcome { files: w.files, checks })
}

/// Validates `cfg` and runs its preset, writing into `cfg.out`.
pub fn run(cfg: &ExperimentConfig) -> Result<Outcome, RunError> {
    cfg.validate()?;
    let w = Writer::new(Path::new(&cfg.out))?;
    match cfg.preset {
        Preset::Figure1 => run_figure1(cfg, w),
        Preset::Claims => run_claims(cfg, w),
        Preset::Diagnostics => run_diagnostics(cfg, w),
        Preset::Custom => run_custom(cfg, w),
        Preset::EpsilonSweep => run_sweep(cfg, w),
    }
}

const BASIC_CHECKS: [&str; 2] = ["dissipation", "energy_monotone"];

fn run_figure1(cfg: &ExperimentConfig, mut w: Writer) -> Result<Outcome, RunError> {
    let integ = cfg.integrator();
    let s = settings(cfg);
    let (hb_run, hb) = full_diagnostics(&heavy_ball(cfg, cfg.epsilon)?, &integ, &s)?;
    let (gf_run, gf) = full_diagnostics(&gradient_flow(cfg)?, &integ, &s)?;
    w.csv("heavy_ball.csv", &hb_run, cfg.samples)?;
    w.csv("gradient_flow.csv", &gf_run, cfg.samples)?;
    let split = hb.limit_point.classification == Some(CriticalClass::Hyperbola)
        && gf.limit_point.classification == Some(CriticalClass::Origin);
    let mut checks = BTreeMap::new();
    checks.insert("limit_splitting".to_string(), verdict(split));
    record_report(&mut checks, "heavy_ball.", &hb, Some(&BASIC_CHECKS));
    record_report(&mut checks, "gradient_flow.", &gf, Some(&BASIC_CHECKS));
    let mut doc = header(cfg);
    doc["heavy_ball"] = json!(hb);
    doc["gradient_flow"] = json!(gf);
    finish(w, doc, checks)
}

fn run_claims(cfg: &ExperimentConfig, mut w: Writer) -> Result<Outcome, RunError> {
    let init = cfg.example_init();
    let env = envelope_constants(&init)?;
    let run = init
        .heavy_ball()
        .simulate(&cfg.integrator(), false)
        .map_err(|e| RunError::Integrator(e.to_string()))?;
    w.csv("heavy_ball.csv", &run, cfg.samples)?;
    let report: ClaimsReport = claims_check(&run, &init, &env, cfg.claims_tol)?;
    let mut checks = BTreeMap::new();
    for v in &report.verdicts {
        let name = serde_json::to_value(v.claim).expect("claim name");
        checks.insert(format!("claim.{}", name.as_str().unwrap_or_default()), verdict(v.holds));
    }
    let crossing = match report.times.crossing {
        Some(t) => {
            let e = run.energy(t).map_err(|e| RunError::Integrator(e.to_string()))?;
            checks.insert("crossing_energy".into(), verdict(e <= CROSSING_ENERGY_CAP));
            json!({ "time": t, "energy": e, "cap": CROSSING_ENERGY_CAP })
        }
        None => {
            checks.insert("crossing_energy".into(), Verdict::Fail);
            serde_json::Value::Null
        }
    };
    checks.insert(
        "consistency_identity".into(),
        verdict(env.consistency_residual().abs() <= 1e-12),
    );
    let mut doc = header(cfg);
    doc["claims"] = json!(report);
    doc["crossing"] = crossing;
    doc["consistency_residual"] = json!(env.consistency_residual());
    finish(w, doc, checks)
}

fn run_diagnostics(cfg: &ExperimentConfig, mut w: Writer) -> Result<Outcome, RunError> {
    let (run, report) = full_diagnostics(&heavy_ball(cfg, cfg.epsilon)?, &cfg.integrator(), &settings(cfg))?;
    w.csv("heavy_ball.csv", &run, cfg.samples)?;
    let mut checks = BTreeMap::new();
    record_report(&mut checks, "", &report, None);
    let mut doc = header(cfg);
    doc["report"] = json!(report);
    finish(w, doc, checks)
}

fn run_custom(cfg: &ExperimentConfig, mut w: Writer) -> Result<Outcome, RunError> {
    let integ = cfg.integrator();
    let s = settings(cfg);
    let (hb_run, hb) = full_diagnostics(&heavy_ball(cfg, cfg.epsilon)?, &integ, &s)?;
    let (gf_run, gf) = full_diagnostics(&gradient_flow(cfg)?, &integ, &s)?;
    w.csv("heavy_ball.csv", &hb_run, cfg.samples)?;
    w.csv("gradient_flow.csv", &gf_run, cfg.samples)?;
    let mut checks = BTreeMap::new();
    record_report(&mut checks, "heavy_ball.", &hb, None);
    record_report(&mut checks, "gradient_flow.", &gf, None);
    let mut doc = header(cfg);
    doc["heavy_ball"] = json!(hb);
    doc["gradient_flow"] = json!(gf);
    finish(w, doc, checks)
}

/// Runs the ε ladder of `cfg` and collects tracking distances, per-ε
/// diagnostics and the `σ` estimate.
pub fn epsilon_sweep(cfg: &ExperimentConfig) -> Result<(SweepResult, Vec<Run>, Run), RunError> {
    let integ = cfg.integrator();
    let s = settings(cfg);
    let gf_run = gradient_flow(cfg)?
        .simulate(&integ, false)
        .map_err(|e| RunError::Integrator(e.to_string()))?;
    let horizon = TRACKING_HORIZON.min(cfg.horizon);
    let per_eps: Vec<Result<(Run, SweepEntry), RunError>> = cfg
        .epsilons
        .par_iter()
        .map(|&eps| {
            let (run, report) = full_diagnostics(&heavy_ball(cfg, eps)?, &integ, &s)?;
            let d = tracking_distance(&run, &gf_run, horizon)?;
            let entry = SweepEntry {
                epsilon: eps,
                tracking_distance: d,
                length: report.length,
                report,
            };
            Ok((run, entry))
        })
        .collect();
    let mut runs = Vec::new();
    let mut entries = Vec::new();
    for r in per_eps {
        let (run, e) = r?;
        runs.push(run);
        entries.push(e);
    }
    let mut lengths: Vec<f64> = entries.iter().map(|e| e.length).collect();
    lengths.sort_by(f64::total_cmp);
    let median_length = median(&lengths);

    let grid = SigmaGrid {
        starts: circle_points([cfg.a, -cfg.a], cfg.sigma_radius, cfg.sigma_starts),
        r0: (2.0f64).sqrt() * cfg.b,
        directions: unit_directions(cfg.sigma_directions),
        epsilons: cfg.epsilons.clone(),
        gamma: cfg.gamma,
        objective: objective_by_name(&cfg.objective).map_err(|e| RunError::Integrator(e.to_string()))?,
        config: integ,
        early_stop: true,
    };
    let sigma = sigma_estimate(&grid)?;
    let result = SweepResult {
        epsilons: cfg.epsilons.clone(),
        entries,
        tracking_horizon: horizon,
        median_length,
        sigma,
    };
    Ok((result, runs, gf_run))
}

fn median(sorted: &[f64]) -> f64 {
    let n = sorted.len();
    if n == 0 {
        return f64::NAN;
    }
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    }
}

/// Tracking distances strictly decrease along the ladder.
pub fn tracking_monotone(entries: &[SweepEntry]) -> bool {
    entries
        .windows(2)
        .all(|w| w[1].tracking_distance < w[0].tracking_distance)
}

/// The last tracking distance is at most the first divided by [`TRACKING_SHRINK`].
pub fn tracking_shrinks(entries: &[SweepEntry]) -> bool {
    match (entries.first(), entries.last()) {
        (Some(f), Some(l)) => l.tracking_distance <= f.tracking_distance / TRACKING_SHRINK,
        _ => false,
    }
}

fn run_sweep(cfg: &ExperimentConfig, mut w: Writer) -> Result<Outcome, RunError> {
    let (result, runs, gf_run) = epsilon_sweep(cfg)?;
    for (run, eps) in runs.iter().zip(&cfg.epsilons) {
        w.csv(&format!("heavy_ball_eps{eps}.csv"), run, cfg.samples)?;
    }
    w.csv("gradient_flow.csv", &gf_run, cfg.samples)?;
    let mut checks = BTreeMap::new();
    checks.insert(
        "tracking_monotone".to_string(),
        verdict(tracking_monotone(&result.entries)),
    );
    checks.insert(
        "tracking_shrinks".to_string(),
        verdict(tracking_shrinks(&result.entries)),
    );
    checks.insert(
        "sigma_spread".to_string(),
        verdict(result.sigma.sigma <= SIGMA_SPREAD * result.median_length),
    );
    for e in &result.entries {
        record_report(
            &mut checks,
            &format!("eps{}.", e.epsilon),
            &e.report,
            Some(&["dissipation", "energy_monotone", "length_tail"]),
        );
    }
    let mut doc = header(cfg);
    doc["sweep"] = json!(result);
    finish(w, doc, checks)
}
