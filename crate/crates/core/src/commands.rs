//! The `foliate`, `flow`, `sweep`, `stability` and `check` subcommands.
//!
//! A run directory holds `config.txt` (canonical effective configuration),
//! `reference.txt`, `trajectory.txt`, `snapshot.txt` and `outcome.txt`.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use crate::chart::{build_chart, FoliationChart};
use crate::config::{CheckName, RunConfig};
use crate::error::{Error, Result};
use crate::flow::{
    area_dissipation_check, area_monotonicity_check, height_band_check, mean_curvature_evolution_check,
    run_flow_with, volume_drift_check, FlowOutcome, FlowRecord, FlowState, FlowStatus,
    DISSIPATION_NOISE_FLOOR,
};
use crate::foliation::{
    average_mean_curvature_leaf, leaf_area, leaf_geometry, paper_average_formula, small_curvature_constants,
    ReferenceSurfaceData,
};
use crate::graph::{graph_geometry, theta_gradient_identity_check, GraphSurface};
use crate::io::{
    fmt_f64, leaf_csv, read_trajectory, reference_to_file, sweep_csv, write_text, write_trajectory, FieldFile,
    LeafRow, OutcomeSummary, SweepRow,
};
use crate::stability::{exponential_rate_check, lowest_eigenvalue, StabilityReport};

pub const CONFIG_FILE: &str = "config.txt";
pub const REFERENCE_FILE: &str = "reference.txt";
pub const TRAJECTORY_FILE: &str = "trajectory.txt";
pub const SNAPSHOT_FILE: &str = "snapshot.txt";
pub const OUTCOME_FILE: &str = "outcome.txt";
pub const LEAVES_FILE: &str = "leaves.csv";
pub const SWEEP_FILE: &str = "sweep.csv";
pub const STABILITY_FILE: &str = "stability.txt";
pub const EIGENFUNCTION_FILE: &str = "eigenfunction.txt";
pub const CHECKS_FILE: &str = "checks.txt";

/// Thresholds used by `check`.
pub const DISSIPATION_TOL: f64 = 5e-3;
pub const EQ_H_TOL: f64 = 1e-3;
pub const THETA_IDENTITY_TOL: f64 = 1e-3;
pub const HEIGHT_BAND_TOL: f64 = 1e-2;
/// Tolerance of the decay-rate comparison in `stability`.
pub const RATE_TOL: f64 = 0.1;

pub fn exit_code_for_status(status: FlowStatus) -> i32 {
    match status {
        FlowStatus::Converged => 0,
        FlowStatus::TMaxReached | FlowStatus::Stalled => 2,
        FlowStatus::GraphViolation | FlowStatus::StepFailure => 3,
    }
}

pub fn exit_code_for_error(err: &Error) -> i32 {
    match err {
        Error::GraphViolation { .. } | Error::StepFailure(_) => 3,
        Error::InvalidData(_)
        | Error::Domain { .. }
        | Error::Precondition(_)
        | Error::SingularDenominator { .. }
        | Error::InvalidSpec(_)
        | Error::Config(_)
        | Error::Parse { .. } => 4,
        Error::Io { .. } | Error::MissingArtifact(_) => 5,
        Error::IterationFailure { .. } | Error::InsufficientData(_) => 1,
    }
}

fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

fn require(dir: &Path, name: &str) -> Result<PathBuf> {
    let p = dir.join(name);
    if p.is_file() {
        Ok(p)
    } else {
        Err(Error::MissingArtifact(p))
    }
}

pub fn snapshot_file(t: f64, surface: &GraphSurface, h: f64) -> FieldFile {
    FieldFile::new(surface.grid)
        .with_scalar("t", t)
        .with_scalar("area", surface.area)
        .with_scalar("volume", surface.volume)
        .with_scalar("h", h)
        .with_field("u", surface.u.clone())
        .with_field("hmean", surface.hmean.clone())
        .with_field("theta", surface.theta.clone())
}

/// Per-leaf summaries over the configured heights.
pub fn cmd_foliate(cfg: &RunConfig) -> Result<Vec<LeafRow>> {
    cfg.validate()?;
    let data = cfg.reference_data()?;
    let (h0, k0) = data.curvature_averages();
    let mut rows = Vec::new();
    for r in cfg.r_values() {
        let leaf = leaf_geometry(&data, r)?;
        let mu_min = leaf.mu1.iter().chain(leaf.mu2.iter()).copied().fold(f64::INFINITY, f64::min);
        let mu_max = leaf.mu1.iter().chain(leaf.mu2.iter()).copied().fold(f64::NEG_INFINITY, f64::max);
        rows.push(LeafRow {
            r,
            area: leaf_area(&data, r),
            h_direct: average_mean_curvature_leaf(&data, r)?,
            h_formula: paper_average_formula(h0, k0, r).ok(),
            mu_min,
            mu_max,
        });
    }
    create_dir(&cfg.out)?;
    write_text(&cfg.out.join(CONFIG_FILE), &cfg.canonical())?;
    reference_to_file(&data).write(&cfg.out.join(REFERENCE_FILE))?;
    write_text(&cfg.out.join(LEAVES_FILE), &leaf_csv(&rows))?;
    Ok(rows)
}

fn write_run_files(dir: &Path, state: &FlowState) -> Result<()> {
    write_trajectory(&dir.join(TRAJECTORY_FILE), &state.history)?;
    snapshot_file(state.t, &state.surface, state.h).write(&dir.join(SNAPSHOT_FILE))
}

fn run_in_dir(cfg: &RunConfig, data: &ReferenceSurfaceData, chart: &FoliationChart, state: FlowState) -> Result<FlowOutcome> {
    let dir = &cfg.out;
    create_dir(dir)?;
    write_text(&dir.join(CONFIG_FILE), &cfg.canonical())?;
    reference_to_file(data).write(&dir.join(REFERENCE_FILE))?;
    let mut count = 0usize;
    let outcome = run_flow_with(chart, state, &cfg.flow, |st| {
        count += 1;
        if count % cfg.checkpoint_every == 0 {
            write_run_files(dir, st)?;
        }
        Ok(())
    })?;
    write_run_files(dir, &outcome.final_state)?;
    let summary = OutcomeSummary {
        status: outcome.status,
        c_limit: outcome.c_limit,
        t: outcome.final_state.t,
        steps: outcome.steps,
        max_volume_drift: outcome.max_volume_drift,
        detail: outcome.detail.clone(),
    };
    write_text(&dir.join(OUTCOME_FILE), &summary.to_text())?;
    Ok(outcome)
}

/// One flow from `u₀ = r + perturb·sin x`, or a continuation of the run in
/// `cfg.out` when `resume` is set.
pub fn cmd_flow(cfg: &RunConfig, resume: bool) -> Result<FlowOutcome> {
    cfg.validate()?;
    if resume {
        let dir = &cfg.out;
        let data = FieldFile::read(&require(dir, REFERENCE_FILE)?).and_then(|f| crate::io::reference_from_file(&f))?;
        let chart = build_chart(&data)?;
        let snap = FieldFile::read(&require(dir, SNAPSHOT_FILE)?)?;
        let t = snap.scalar("t")?;
        let surface = graph_geometry(&chart, snap.field("u")?)?;
        let mut state = FlowState::new(t, surface);
        state.history = read_trajectory(&require(dir, TRAJECTORY_FILE)?)?
            .into_iter()
            .filter(|r| r.t <= t)
            .collect();
        return run_in_dir(cfg, &data, &chart, state);
    }
    let data = cfg.reference_data()?;
    let chart = build_chart(&data)?;
    let u0 = cfg.initial_height(&data.grid, cfg.r);
    let state = FlowState::new(0.0, graph_geometry(&chart, &u0)?);
    run_in_dir(cfg, &data, &chart, state)
}

fn sweep_row(cfg: &RunConfig, data: &ReferenceSurfaceData, chart: &FoliationChart, k: usize, r: f64, beta: f64) -> SweepRow {
    let mut row_cfg = cfg.clone();
    row_cfg.r = r;
    row_cfg.sweep = None;
    row_cfg.out = cfg.out.join(format!("row_{k:03}"));
    let u0 = row_cfg.initial_height(&data.grid, r);
    let (lower, upper) = (2.0 * (r - beta).tanh(), 2.0 * (r + beta).tanh());
    let failed = |status: &str, u_min: f64, u_max: f64| SweepRow {
        r,
        c: None,
        lower,
        upper,
        status: status.into(),
        lambda_min: None,
        u_min,
        u_max,
    };
    let (lo, hi) = (
        u0.iter().copied().fold(f64::INFINITY, f64::min),
        u0.iter().copied().fold(f64::NEG_INFINITY, f64::max),
    );
    let surface = match graph_geometry(chart, &u0) {
        Ok(s) => s,
        Err(Error::GraphViolation { .. }) => return failed("graph_violation", lo, hi),
        Err(Error::StepFailure(_)) => return failed("step_failure", lo, hi),
        Err(_) => return failed("error", lo, hi),
    };
    let outcome = match run_in_dir(&row_cfg, data, chart, FlowState::new(0.0, surface)) {
        Ok(o) => o,
        Err(_) => return failed("error", lo, hi),
    };
    let hist = &outcome.final_state.history;
    let u_min = hist.iter().map(|x| x.u_min).fold(f64::INFINITY, f64::min);
    let u_max = hist.iter().map(|x| x.u_max).fold(f64::NEG_INFINITY, f64::max);
    let lambda_min = match outcome.status {
        FlowStatus::Converged => lowest_eigenvalue(&outcome.final_state.surface).ok().map(|r| r.lambda_min),
        _ => None,
    };
    SweepRow {
        r,
        c: outcome.c_limit,
        lower,
        upper,
        status: outcome.status.to_string(),
        lambda_min,
        u_min,
        u_max,
    }
}

/// Independent flows over the sweep heights, `jobs` at a time. Each row runs
/// in its own subdirectory; the table is written once all rows finish.
pub fn cmd_sweep(cfg: &RunConfig) -> Result<Vec<SweepRow>> {
    cfg.validate()?;
    let data = cfg.reference_data()?;
    let chart = build_chart(&data)?;
    let beta = small_curvature_constants(&data)?.beta;
    create_dir(&cfg.out)?;
    write_text(&cfg.out.join(CONFIG_FILE), &cfg.canonical())?;
    let mut rs: Vec<f64> = cfg.r_values();
    rs.sort_by(f64::total_cmp);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.jobs)
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    let rows: Vec<SweepRow> = pool.install(|| {
        rs.par_iter()
            .enumerate()
            .map(|(k, &r)| sweep_row(cfg, &data, &chart, k, r, beta))
            .collect()
    });
    write_text(&cfg.out.join(SWEEP_FILE), &sweep_csv(&rows))?;
    Ok(rows)
}

#[derive(Debug, Clone)]
pub struct StabilityOutput {
    pub report: StabilityReport,
    pub predicted_rate: f64,
    /// False when the chart is not Fuchsian: `L` is then a model operator.
    pub hyperbolic: bool,
}

/// Lowest eigenvalue of `L` on the final surface of run `run`, or on
/// `u₀ = r + perturb·sin x` when no run is given.
pub fn cmd_stability(cfg: &RunConfig, run: Option<&Path>) -> Result<StabilityOutput> {
    cfg.validate()?;
    let (data, u, history): (ReferenceSurfaceData, _, Option<Vec<FlowRecord>>) = match run {
        Some(dir) => {
            let data = crate::io::read_reference(&require(dir, REFERENCE_FILE)?)?;
            let snap = FieldFile::read(&require(dir, SNAPSHOT_FILE)?)?;
            let hist = read_trajectory(&require(dir, TRAJECTORY_FILE)?)?;
            (data, snap.field("u")?.clone(), Some(hist))
        }
        None => {
            let data = cfg.reference_data()?;
            let u = cfg.initial_height(&data.grid, cfg.r);
            (data, u, None)
        }
    };
    let chart = build_chart(&data)?;
    let surface = graph_geometry(&chart, &u)?;
    let mut report = lowest_eigenvalue(&surface)?;
    let predicted_rate = 2.0 * report.lambda_min;
    let mut rate_line = String::new();
    if let Some(hist) = &history {
        match exponential_rate_check(&report, hist, RATE_TOL) {
            Ok(rate) => {
                report.fitted_decay_rate = Some(rate.fitted_rate);
                writeln!(rate_line, "rate_check={}", if rate.passed { "pass" } else { "fail" }).unwrap();
                writeln!(rate_line, "records_used={}", rate.records_used).unwrap();
            }
            Err(Error::InsufficientData(msg)) => {
                writeln!(rate_line, "rate_check=insufficient-data").unwrap();
                writeln!(rate_line, "rate_note={msg}").unwrap();
            }
            Err(e) => return Err(e),
        }
    }
    let hyperbolic = chart.is_fuchsian();
    let mut text = String::new();
    writeln!(text, "lambda_min={}", fmt_f64(report.lambda_min)).unwrap();
    writeln!(text, "strictly_stable={}", report.strictly_stable).unwrap();
    writeln!(text, "fitted_decay_rate={}", report.fitted_decay_rate.map(fmt_f64).unwrap_or_default()).unwrap();
    writeln!(text, "predicted_rate={}", fmt_f64(predicted_rate)).unwrap();
    writeln!(text, "operator={}", if hyperbolic { "hyperbolic" } else { "model stability operator" }).unwrap();
    writeln!(text, "iterations={}", report.iterations).unwrap();
    writeln!(text, "residual={}", fmt_f64(report.residual)).unwrap();
    text.push_str(&rate_line);
    create_dir(&cfg.out)?;
    write_text(&cfg.out.join(STABILITY_FILE), &text)?;
    FieldFile::new(surface.grid)
        .with_scalar("lambda_min", report.lambda_min)
        .with_field("phi", report.eigenfunction.clone())
        .write(&cfg.out.join(EIGENFUNCTION_FILE))?;
    Ok(StabilityOutput {
        report,
        predicted_rate,
        hyperbolic,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CheckStatus {
    Pass,
    Fail,
    Skipped,
}

impl std::fmt::Display for CheckStatus {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            CheckStatus::Pass => "pass",
            CheckStatus::Fail => "fail",
            CheckStatus::Skipped => "skipped",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckResult {
    pub name: CheckName,
    pub status: CheckStatus,
    pub value: f64,
    pub threshold: f64,
    pub note: String,
}

fn verdict(ok: bool) -> CheckStatus {
    if ok {
        CheckStatus::Pass
    } else {
        CheckStatus::Fail
    }
}

/// Runs the diagnostics named in `checks` (all configured checks when empty)
/// on the run directory `dir` and writes `checks.txt` there.
pub fn cmd_check(dir: &Path, checks: &[CheckName]) -> Result<Vec<CheckResult>> {
    let cfg = RunConfig::read(&require(dir, CONFIG_FILE)?)?;
    let data = crate::io::read_reference(&require(dir, REFERENCE_FILE)?)?;
    let history = read_trajectory(&require(dir, TRAJECTORY_FILE)?)?;
    let snap = FieldFile::read(&require(dir, SNAPSHOT_FILE)?)?;
    let chart = build_chart(&data)?;
    let final_surface = graph_geometry(&chart, snap.field("u")?)?;
    let selected: Vec<CheckName> = if checks.is_empty() { cfg.checks.clone() } else { checks.to_vec() };

    let mut results = Vec::new();
    for name in selected {
        let res = match name {
            CheckName::VolumeDrift => {
                let rep = volume_drift_check(&history, cfg.flow.eps_volume_drift)?;
                CheckResult {
                    name,
                    status: verdict(rep.passed),
                    value: rep.max_relative_drift,
                    threshold: cfg.flow.eps_volume_drift,
                    note: String::new(),
                }
            }
            CheckName::AreaMonotone => {
                let tol = 1e-12 * history.first().map(|r| r.area).unwrap_or(1.0);
                let rep = area_monotonicity_check(&history, tol);
                CheckResult {
                    name,
                    status: verdict(rep.passed),
                    value: rep.max_increase.max(0.0),
                    threshold: tol,
                    note: String::new(),
                }
            }
            CheckName::AreaDissipation => match area_dissipation_check(&history, DISSIPATION_NOISE_FLOOR) {
                Ok(rep) if !rep.samples.is_empty() => CheckResult {
                    name,
                    status: verdict(rep.max_relative_residual <= DISSIPATION_TOL),
                    value: rep.max_relative_residual,
                    threshold: DISSIPATION_TOL,
                    note: format!("{} samples", rep.samples.len()),
                },
                Ok(_) | Err(Error::InsufficientData(_)) => CheckResult {
                    name,
                    status: CheckStatus::Pass,
                    value: 0.0,
                    threshold: DISSIPATION_TOL,
                    note: "no dissipation above the noise floor".into(),
                },
                Err(e) => return Err(e),
            },
            CheckName::EqH => {
                if chart.is_fuchsian() {
                    let u0 = cfg.initial_height(&data.grid, cfg.r);
                    let s0 = graph_geometry(&chart, &u0)?;
                    let rep = mean_curvature_evolution_check(&chart, &s0, cfg.dt_probe)?;
                    CheckResult {
                        name,
                        status: verdict(rep.max_residual <= EQ_H_TOL),
                        value: rep.max_residual,
                        threshold: EQ_H_TOL,
                        note: "initial surface".into(),
                    }
                } else {
                    CheckResult {
                        name,
                        status: CheckStatus::Skipped,
                        value: f64::NAN,
                        threshold: EQ_H_TOL,
                        note: "ambient not hyperbolic on this chart".into(),
                    }
                }
            }
            CheckName::ThetaIdentity => {
                let rep = theta_gradient_identity_check(&final_surface);
                CheckResult {
                    name,
                    status: verdict(rep.max_residual <= THETA_IDENTITY_TOL),
                    value: rep.max_residual,
                    threshold: THETA_IDENTITY_TOL,
                    note: "final surface".into(),
                }
            }
            CheckName::HeightBand => {
                let beta = small_curvature_constants(&data)?.beta;
                let rep = height_band_check(&history, cfg.r, beta, HEIGHT_BAND_TOL);
                let excess = (rep.lower - rep.min_u).max(rep.max_u - rep.upper).max(0.0);
                CheckResult {
                    name,
                    status: verdict(rep.within),
                    value: excess,
                    threshold: HEIGHT_BAND_TOL,
                    note: format!("band [{}, {}]", fmt_f64(rep.lower), fmt_f64(rep.upper)),
                }
            }
        };
        results.push(res);
    }
    let mut text = String::new();
    for r in &results {
        writeln!(
            text,
            "check={} status={} value={} threshold={} note={}",
            r.name,
            r.status,
            fmt_f64(r.value),
            fmt_f64(r.threshold),
            r.note.replace(' ', "_")
        )
        .unwrap();
    }
    write_text(&dir.join(CHECKS_FILE), &text)?;
    Ok(results)
}
