//! Volume-preserving mean curvature flow of graphs over the reference leaf.
//!
//! On the fixed grid the surface moves vertically. The normal speed is
//! `h − H`, so the height moves with `∂u/∂t = (h − H) W`, `W = 1/Θ`. Since
//! `W √det g = √det G`, the semi-discrete enclosed volume is conserved
//! exactly; the RK2 scheme keeps the fully discrete drift at `O(dt²)`.

use std::fmt;
use std::str::FromStr;

use ndarray::Zip;

use crate::chart::FoliationChart;
use crate::error::{Error, Result};
use crate::graph::{graph_geometry, GraphSurface};
use crate::grid::{max_abs, Field};
use crate::laplacian::{pcg, LaplaceBeltrami, SpectralSolver};

/// Relative area change over [`STALL_WINDOW`] steps below which a run that
/// has not met the convergence threshold, and whose sup-deviation did not
/// decrease over the same window, is declared stalled.
pub const STALL_TOLERANCE: f64 = 1e-14;
pub const STALL_WINDOW: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scheme {
    ExplicitRk2,
    SemiImplicit,
}

impl FromStr for Scheme {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "explicit-rk2" => Ok(Scheme::ExplicitRk2),
            "semi-implicit" => Ok(Scheme::SemiImplicit),
            other => Err(Error::Config(format!("unknown scheme '{other}'"))),
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Scheme::ExplicitRk2 => "explicit-rk2",
            Scheme::SemiImplicit => "semi-implicit",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlowConfig {
    /// Upper bound on the step; the explicit scheme also respects the
    /// parabolic bound from [`stable_dt`].
    pub dt_init: f64,
    pub cfl_safety: f64,
    pub t_max: f64,
    /// Threshold on `sup |H − h|`.
    pub eps_converge: f64,
    pub eps_volume_drift: f64,
    pub record_every: usize,
    pub scheme: Scheme,
}

impl Default for FlowConfig {
    fn default() -> Self {
        FlowConfig {
            dt_init: 1e-3,
            cfl_safety: 0.8,
            t_max: 50.0,
            eps_converge: 1e-6,
            eps_volume_drift: 1e-6,
            record_every: 10,
            scheme: Scheme::ExplicitRk2,
        }
    }
}

impl FlowConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(Error::Config(format!("{name} must be positive, got {v}")))
            }
        };
        positive("dt_init", self.dt_init)?;
        positive("t_max", self.t_max)?;
        positive("eps_converge", self.eps_converge)?;
        positive("eps_volume_drift", self.eps_volume_drift)?;
        if !(self.cfl_safety > 0.0 && self.cfl_safety <= 1.0) {
            return Err(Error::Config(format!("cfl_safety must lie in (0, 1], got {}", self.cfl_safety)));
        }
        if self.record_every == 0 {
            return Err(Error::Config("record_every must be at least 1".into()));
        }
        Ok(())
    }
}

/// One trajectory sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlowRecord {
    pub t: f64,
    pub area: f64,
    pub volume: f64,
    pub h: f64,
    /// `sup |H − h|`.
    pub sup_dev: f64,
    pub min_theta: f64,
    pub max_a2: f64,
    /// `∫ (H − h)² dμ`.
    pub dev_l2sq: f64,
    pub u_min: f64,
    pub u_max: f64,
}

impl FlowRecord {
    pub fn of(t: f64, surface: &GraphSurface) -> Self {
        let h = compute_average_mean_curvature(surface);
        let dev = surface.hmean.mapv(|x| x - h);
        FlowRecord {
            t,
            area: surface.area,
            volume: surface.volume,
            h,
            sup_dev: max_abs(&dev),
            min_theta: surface.min_theta(),
            max_a2: surface.max_a2(),
            dev_l2sq: surface.integrate(&dev.mapv(|x| x * x)),
            u_min: surface.u.iter().copied().fold(f64::INFINITY, f64::min),
            u_max: surface.u.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        }
    }
}

#[derive(Debug, Clone)]
pub struct FlowState {
    pub t: f64,
    pub surface: GraphSurface,
    pub h: f64,
    pub history: Vec<FlowRecord>,
}

impl FlowState {
    pub fn new(t: f64, surface: GraphSurface) -> Self {
        let h = compute_average_mean_curvature(&surface);
        FlowState {
            t,
            surface,
            h,
            history: Vec::new(),
        }
    }

    pub fn sup_dev(&self) -> f64 {
        self.surface.hmean.iter().fold(0.0_f64, |m, &x| m.max((x - self.h).abs()))
    }

    /// Appends a record for the current time unless one exists already.
    fn record(&mut self) -> bool {
        if self.history.last().is_none_or(|r| r.t < self.t) {
            self.history.push(FlowRecord::of(self.t, &self.surface));
            true
        } else {
            false
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FlowStatus {
    Converged,
    TMaxReached,
    /// Area stopped changing before the convergence threshold was met.
    Stalled,
    GraphViolation,
    StepFailure,
}

impl fmt::Display for FlowStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FlowStatus::Converged => "converged",
            FlowStatus::TMaxReached => "t_max_reached",
            FlowStatus::Stalled => "stalled",
            FlowStatus::GraphViolation => "graph_violation",
            FlowStatus::StepFailure => "step_failure",
        })
    }
}

impl FromStr for FlowStatus {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "converged" => Ok(FlowStatus::Converged),
            "t_max_reached" => Ok(FlowStatus::TMaxReached),
            "stalled" => Ok(FlowStatus::Stalled),
            "graph_violation" => Ok(FlowStatus::GraphViolation),
            "step_failure" => Ok(FlowStatus::StepFailure),
            other => Err(Error::Parse {
                context: "flow status".into(),
                detail: format!("unknown status '{other}'"),
            }),
        }
    }
}

#[derive(Debug, Clone)]
pub struct FlowOutcome {
    pub status: FlowStatus,
    pub final_state: FlowState,
    /// Limiting constant mean curvature, present iff converged.
    pub c_limit: Option<f64>,
    pub steps: usize,
    /// Largest `|V(t) − V(0)| / max(1, |V(0)|)` over the records.
    pub max_volume_drift: f64,
    /// Error message for graph violations and step failures.
    pub detail: Option<String>,
}

/// `h = ∫ H dμ / |S|`.
pub fn compute_average_mean_curvature(surface: &GraphSurface) -> f64 {
    surface.integrate(&surface.hmean) / surface.area
}

/// Vertical velocity `(h − H)/Θ`.
pub fn flow_velocity(surface: &GraphSurface) -> Field {
    let h = compute_average_mean_curvature(surface);
    Zip::from(&surface.hmean)
        .and(&surface.theta)
        .map_collect(|&hm, &th| (h - hm) / th)
}

/// Parabolic step bound `cfl · min(dx, dy)² / (2 D)` with the diffusion
/// estimate `D = 2 max λ_max(G⁻¹)`.
pub fn stable_dt(surface: &GraphSurface, cfl_safety: f64) -> f64 {
    let mut dmax = 0.0_f64;
    for iy in 0..surface.grid.ny {
        for ix in 0..surface.grid.nx {
            dmax = dmax.max(surface.inverse_metric(iy, ix).real_eigenvalues().1);
        }
    }
    let h = surface.grid.dx().min(surface.grid.dy());
    cfl_safety * h * h / (2.0 * 2.0 * dmax)
}

fn rk2_step(chart: &FoliationChart, surface: &GraphSurface, dt: f64) -> Result<GraphSurface> {
    let k1 = flow_velocity(surface);
    let mut u1 = surface.u.clone();
    u1.scaled_add(dt, &k1);
    let stage = graph_geometry(chart, &u1)?;
    let k2 = flow_velocity(&stage);
    let mut u = surface.u.clone();
    u.scaled_add(0.5 * dt, &k1);
    u.scaled_add(0.5 * dt, &k2);
    graph_geometry(chart, &u)
}

/// Linearly implicit Euler: `(I + dt K) δ = dt F` with `K = −div(a ∇)` and
/// `a = ½ tr G⁻¹` frozen at the current surface.
fn semi_implicit_step(chart: &FoliationChart, surface: &GraphSurface, dt: f64) -> Result<GraphSurface> {
    let grid = surface.grid;
    let rhs = flow_velocity(surface) * dt;
    let a = Field::from_shape_fn((grid.ny, grid.nx), |(iy, ix)| 0.5 * surface.inverse_metric(iy, ix).trace());
    let a_mean = a.mean().unwrap_or(1.0);
    let op = LaplaceBeltrami::from_coefficients(grid, grid.constant(1.0), &a, grid.zeros(), &a);
    let pre = SpectralSolver::new(&grid, dt * a_mean, dt * a_mean, 1.0);
    let dot = |p: &Field, q: &Field| p.iter().zip(q.iter()).map(|(x, y)| x * y).sum::<f64>();
    let (delta, stats) = pcg(
        |x| x - &(dt * &op.apply_weighted(x)),
        |r| pre.solve(r),
        dot,
        |f| f.clone(),
        &rhs,
        rhs.clone(),
        1e-10,
        500,
    );
    if !(stats.relative_residual <= 1e-8) {
        return Err(Error::StepFailure(format!(
            "implicit solve stalled at relative residual {:e} after {} iterations",
            stats.relative_residual, stats.iterations
        )));
    }
    graph_geometry(chart, &(&surface.u + &delta))
}

/// Surface after one step of size `dt` from `surface`.
pub fn advance(chart: &FoliationChart, surface: &GraphSurface, dt: f64, scheme: Scheme) -> Result<GraphSurface> {
    if !(dt.is_finite() && dt > 0.0) {
        return Err(Error::Precondition(format!("time step must be positive, got {dt}")));
    }
    match scheme {
        Scheme::ExplicitRk2 => rk2_step(chart, surface, dt),
        Scheme::SemiImplicit => semi_implicit_step(chart, surface, dt),
    }
}

/// Advances the state by `dt`. The history is carried over unchanged.
pub fn flow_step(state: FlowState, chart: &FoliationChart, dt: f64, scheme: Scheme) -> Result<FlowState> {
    let surface = advance(chart, &state.surface, dt, scheme)?;
    let h = compute_average_mean_curvature(&surface);
    Ok(FlowState {
        t: state.t + dt,
        surface,
        h,
        history: state.history,
    })
}

pub fn run_flow(chart: &FoliationChart, u0: &Field, config: &FlowConfig) -> Result<FlowOutcome> {
    config.validate()?;
    let surface = graph_geometry(chart, u0)?;
    run_flow_from(chart, FlowState::new(0.0, surface), config)
}

/// Continues a run from `state`. Volume drift is measured against the first
/// record of the state's history, or the state itself if it has none.
pub fn run_flow_from(chart: &FoliationChart, state: FlowState, config: &FlowConfig) -> Result<FlowOutcome> {
    run_flow_with(chart, state, config, |_| Ok(()))
}

/// [`run_flow_from`] with `on_record` called after every recorded sample
/// (including the first and the last).
pub fn run_flow_with(
    chart: &FoliationChart,
    mut state: FlowState,
    config: &FlowConfig,
    mut on_record: impl FnMut(&FlowState) -> Result<()>,
) -> Result<FlowOutcome> {
    config.validate()?;
    if state.record() {
        on_record(&state)?;
    }
    let v0 = state.history[0].volume;
    let mut steps = 0usize;
    let mut stall_ref = (state.surface.area, state.sup_dev());
    let mut detail = None;

    let status = loop {
        if state.sup_dev() <= config.eps_converge {
            break FlowStatus::Converged;
        }
        let remaining = config.t_max - state.t;
        if remaining <= 1e-12 * config.t_max {
            break FlowStatus::TMaxReached;
        }
        if steps > 0 && steps % STALL_WINDOW == 0 {
            let (area, dev) = (state.surface.area, state.sup_dev());
            if ((area - stall_ref.0) / area).abs() < STALL_TOLERANCE && dev >= stall_ref.1 {
                break FlowStatus::Stalled;
            }
            stall_ref = (area, dev);
        }
        let mut dt = config.dt_init.min(remaining);
        if config.scheme == Scheme::ExplicitRk2 {
            dt = dt.min(stable_dt(&state.surface, config.cfl_safety));
        }
        match advance(chart, &state.surface, dt, config.scheme) {
            Ok(next) => {
                state.h = compute_average_mean_curvature(&next);
                state.surface = next;
                state.t += dt;
            }
            Err(e @ (Error::GraphViolation { .. } | Error::StepFailure(_))) => {
                let status = if matches!(e, Error::GraphViolation { .. }) {
                    FlowStatus::GraphViolation
                } else {
                    FlowStatus::StepFailure
                };
                detail = Some(e.to_string());
                break status;
            }
            Err(e) => return Err(e),
        }
        steps += 1;
        if steps % config.record_every == 0 && state.record() {
            on_record(&state)?;
        }
    };
    if state.record() {
        on_record(&state)?;
    }
    Ok(finish(state, status, steps, v0, detail))
}

fn finish(state: FlowState, status: FlowStatus, steps: usize, v0: f64, detail: Option<String>) -> FlowOutcome {
    let max_volume_drift = state
        .history
        .iter()
        .map(|r| (r.volume - v0).abs() / v0.abs().max(1.0))
        .fold(0.0, f64::max);
    let c_limit = (status == FlowStatus::Converged).then_some(state.h);
    FlowOutcome {
        status,
        final_state: state,
        c_limit,
        steps,
        max_volume_drift,
        detail,
    }
}

/// Default floor on `∫(H − h)² dμ / |S|` below which a record is treated as
/// noise by the trajectory diagnostics.
pub const DISSIPATION_NOISE_FLOOR: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DissipationSample {
    pub t: f64,
    /// Centered difference of the area.
    pub area_rate: f64,
    /// `−∫(H − h)² dμ`.
    pub dissipation: f64,
    /// `(area_rate − dissipation) / |dissipation|`.
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DissipationReport {
    pub samples: Vec<DissipationSample>,
    pub max_relative_residual: f64,
}

/// Compares the three-point derivative of the recorded area with
/// `−∫(H − h)² dμ` at interior records whose dissipation exceeds
/// `noise_floor · |S|`.
pub fn area_dissipation_check(history: &[FlowRecord], noise_floor: f64) -> Result<DissipationReport> {
    if history.len() < 3 {
        return Err(Error::InsufficientData(format!(
            "area dissipation check needs 3 records, got {}",
            history.len()
        )));
    }
    let mut samples = Vec::new();
    for w in history.windows(3) {
        let (a, b, c) = (&w[0], &w[1], &w[2]);
        if b.dev_l2sq <= noise_floor * b.area {
            continue;
        }
        let (h1, h2) = (b.t - a.t, c.t - b.t);
        // second-order derivative on a nonuniform stencil
        let rate = (-h2 / (h1 * (h1 + h2))) * a.area
            + ((h2 - h1) / (h1 * h2)) * b.area
            + (h1 / (h2 * (h1 + h2))) * c.area;
        let dissipation = -b.dev_l2sq;
        samples.push(DissipationSample {
            t: b.t,
            area_rate: rate,
            dissipation,
            residual: (rate - dissipation) / dissipation.abs(),
        });
    }
    let max_relative_residual = samples.iter().map(|s| s.residual.abs()).fold(0.0, f64::max);
    Ok(DissipationReport {
        samples,
        max_relative_residual,
    })
}

#[derive(Debug, Clone)]
pub struct EvolutionCheckReport {
    /// `(H_after − H_before) / dt_probe`.
    pub observed: Field,
    /// `Δ_G H + (H − h)(|A|² − 2)` plus tangential transport of `H` by the
    /// vertical parametrization.
    pub predicted: Field,
    pub residual: Field,
    pub max_residual: f64,
    /// On Fuchsian charts: the residual once `−2` is replaced by the exact
    /// `Ric(ν, ν) = −2 + (1 − Θ²) sech² u` of `dr² + cosh² r |dx|²`, whose
    /// leaf-tangent planes have curvature `−tanh² r` rather than `−1`.
    pub max_residual_exact_ricci: Option<f64>,
}

/// One forward-Euler probe step compared with the evolution equation of the
/// mean curvature. Meaningful on Fuchsian charts, where the ambient
/// curvature is exactly −1.
pub fn mean_curvature_evolution_check(
    chart: &FoliationChart,
    surface: &GraphSurface,
    dt_probe: f64,
) -> Result<EvolutionCheckReport> {
    if !(dt_probe.is_finite() && dt_probe > 0.0) {
        return Err(Error::Precondition(format!("dt_probe must be positive, got {dt_probe}")));
    }
    let grid = surface.grid;
    let h = compute_average_mean_curvature(surface);
    let mut u = surface.u.clone();
    u.scaled_add(dt_probe, &flow_velocity(surface));
    let after = graph_geometry(chart, &u)?;
    let observed = (&after.hmean - &surface.hmean) / dt_probe;

    let lap = LaplaceBeltrami::new(surface).apply(&surface.hmean);
    let hx = crate::grid::diff_x(&grid, &surface.hmean);
    let hy = crate::grid::diff_y(&grid, &surface.hmean);
    let predicted = Field::from_shape_fn((grid.ny, grid.nx), |(iy, ix)| {
        let hm = surface.hmean[[iy, ix]];
        let w = 1.0 / surface.theta[[iy, ix]];
        let ginv = chart.metric(ix, iy, surface.u[[iy, ix]]).inverse();
        let tau = ginv.apply([surface.u_x[[iy, ix]], surface.u_y[[iy, ix]]]);
        let transport = (h - hm) / w * (tau[0] * hx[[iy, ix]] + tau[1] * hy[[iy, ix]]);
        lap[[iy, ix]] + (hm - h) * (surface.a2norm[[iy, ix]] - 2.0) + transport
    });
    let residual = &observed - &predicted;
    let max_residual = max_abs(&residual);
    let max_residual_exact_ricci = chart.is_fuchsian().then(|| {
        Zip::from(&residual)
            .and(&surface.hmean)
            .and(&surface.theta)
            .and(&surface.u)
            .fold(0.0_f64, |m, &res, &hm, &th, &u| {
                let c = u.cosh();
                m.max((res - (hm - h) * (1.0 - th * th) / (c * c)).abs())
            })
    });
    Ok(EvolutionCheckReport {
        observed,
        predicted,
        residual,
        max_residual,
        max_residual_exact_ricci,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HeightBandReport {
    pub lower: f64,
    pub upper: f64,
    pub min_u: f64,
    pub max_u: f64,
    pub within: bool,
}

/// Checks `r − 2β − tol ≤ u ≤ r + 2β + tol` at every record.
pub fn height_band_check(history: &[FlowRecord], r: f64, beta: f64, tol: f64) -> HeightBandReport {
    let (lower, upper) = (r - 2.0 * beta, r + 2.0 * beta);
    let min_u = history.iter().map(|x| x.u_min).fold(f64::INFINITY, f64::min);
    let max_u = history.iter().map(|x| x.u_max).fold(f64::NEG_INFINITY, f64::max);
    HeightBandReport {
        lower,
        upper,
        min_u,
        max_u,
        within: !history.is_empty() && min_u >= lower - tol && max_u <= upper + tol,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VolumeDriftReport {
    pub max_relative_drift: f64,
    pub passed: bool,
}

pub fn volume_drift_check(history: &[FlowRecord], eps_volume_drift: f64) -> Result<VolumeDriftReport> {
    let first = history
        .first()
        .ok_or_else(|| Error::InsufficientData("empty trajectory".into()))?;
    let v0 = first.volume;
    let max_relative_drift = history
        .iter()
        .map(|r| (r.volume - v0).abs() / v0.abs().max(1.0))
        .fold(0.0, f64::max);
    Ok(VolumeDriftReport {
        max_relative_drift,
        passed: max_relative_drift <= eps_volume_drift,
    })
}

/// Whether `c` lies in `[2 tanh(r − β) − tol, 2 tanh(r + β) + tol]`.
pub fn cmc_bound_check(c: f64, r: f64, beta: f64, tol: f64) -> bool {
    c >= 2.0 * (r - beta).tanh() - tol && c <= 2.0 * (r + beta).tanh() + tol
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AreaMonotonicityReport {
    pub max_increase: f64,
    pub passed: bool,
}

/// `|S_{t_{k+1}}| ≤ |S_{t_k}| + tol` for consecutive records.
pub fn area_monotonicity_check(history: &[FlowRecord], tol: f64) -> AreaMonotonicityReport {
    let max_increase = history.windows(2).map(|w| w[1].area - w[0].area).fold(f64::NEG_INFINITY, f64::max);
    AreaMonotonicityReport {
        max_increase,
        passed: history.len() < 2 || max_increase <= tol,
    }
}
