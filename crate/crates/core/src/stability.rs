//! The stability operator `L = −Δ − (|A|² − 2)` of a graph surface and its
//! lowest eigenvalue on functions of zero `dμ`-mean.
//!
//! The eigenvalue comes from shifted block inverse iteration with
//! Rayleigh–Ritz in the `dμ` inner product. Each inner solve is a projected conjugate-gradient iteration
//! preconditioned by the exact inverse of a constant-coefficient model of
//! the operator (applied by FFT).

use rand_core::{RngCore, SeedableRng};
use rand_xoshiro::SplitMix64;

use crate::error::{Error, Result};
use crate::flow::{FlowRecord, DISSIPATION_NOISE_FLOOR};
use crate::graph::GraphSurface;
use crate::grid::Field;
use crate::laplacian::{pcg, LaplaceBeltrami, SpectralSolver};

#[derive(Debug, Clone)]
pub struct StabilityReport {
    pub lambda_min: f64,
    /// Zero `dμ`-mean, unit `L²(dμ)` norm.
    pub eigenfunction: Field,
    pub fitted_decay_rate: Option<f64>,
    pub strictly_stable: bool,
    pub iterations: usize,
    /// `‖Lφ − λφ‖` in `L²(dμ)` after projection.
    pub residual: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EigenOptions {
    pub max_iterations: usize,
    /// Stop once the eigen-residual drops below this.
    pub residual_tol: f64,
    /// Relative residual of each inner solve.
    pub solve_tol: f64,
    pub max_solve_iterations: usize,
}

impl Default for EigenOptions {
    fn default() -> Self {
        EigenOptions {
            max_iterations: 500,
            residual_tol: 1e-8,
            solve_tol: 1e-10,
            max_solve_iterations: 2000,
        }
    }
}

/// Precomputed pieces of `L` on one surface.
pub struct StabilityOperator<'a> {
    surface: &'a GraphSurface,
    lb: LaplaceBeltrami,
    /// `2 − |A|²`.
    potential: Field,
    total_measure: f64,
}

impl<'a> StabilityOperator<'a> {
    pub fn new(surface: &'a GraphSurface) -> Self {
        StabilityOperator {
            surface,
            lb: LaplaceBeltrami::new(surface),
            potential: surface.a2norm.mapv(|a| 2.0 - a),
            total_measure: surface.integrate(&surface.grid.constant(1.0)),
        }
    }

    pub fn apply(&self, phi: &Field) -> Field {
        let mut out = -self.lb.apply(phi);
        out += &(&self.potential * phi);
        out
    }

    /// `∫ φ ψ dμ`.
    pub fn inner(&self, phi: &Field, psi: &Field) -> f64 {
        let w = &self.surface.area_element;
        let mut acc = 0.0;
        for ((a, b), c) in phi.iter().zip(psi.iter()).zip(w.iter()) {
            acc += a * b * c;
        }
        acc * self.surface.grid.cell_area()
    }

    /// Removes the `dμ`-mean.
    pub fn project(&self, phi: &Field) -> Field {
        let mean = self.surface.integrate(phi) / self.total_measure;
        phi - mean
    }

    pub fn rayleigh_quotient(&self, phi: &Field) -> f64 {
        self.inner(phi, &self.apply(phi)) / self.inner(phi, phi)
    }
}

/// `Lφ = −Δ_G φ − (|A|² − 2) φ`.
pub fn apply_stability_operator(surface: &GraphSurface, phi: &Field) -> Result<Field> {
    surface.grid.check_shape(phi, "phi")?;
    Ok(StabilityOperator::new(surface).apply(phi))
}

/// `φ − ∫φ dμ / ∫dμ`.
pub fn project_mean_zero(surface: &GraphSurface, phi: &Field) -> Field {
    StabilityOperator::new(surface).project(phi)
}

/// Width of the block iterated together; the rate is set by the gap to the
/// next eigenvalue past the block.
const BLOCK: usize = 4;

fn seed_block(surface: &GraphSurface) -> Vec<Field> {
    let g = surface.grid;
    let (kx, ky) = (2.0 * std::f64::consts::PI / g.lx, 2.0 * std::f64::consts::PI / g.ly);
    let mut rng = SplitMix64::seed_from_u64(0x5eed);
    let modes: [&dyn Fn(f64, f64) -> f64; BLOCK] = [
        &|x, y| (kx * x).cos() + 0.9 * (kx * x).sin() + 0.8 * (ky * y).cos() + 0.7 * (ky * y).sin() + 0.3 * (kx * x + ky * y).cos(),
        &|x, y| (kx * x).sin() - 0.6 * (ky * y).cos(),
        &|x, y| (ky * y).sin() + 0.5 * (kx * x).cos(),
        &|x, y| (kx * x - ky * y).cos() + 0.4 * (ky * y).cos(),
    ];
    modes
        .iter()
        .map(|f| {
            let mut phi = g.sample(f);
            for v in phi.iter_mut() {
                *v += 1e-3 * ((rng.next_u64() >> 11) as f64 / (1u64 << 53) as f64 - 0.5);
            }
            phi
        })
        .collect()
}

pub fn lowest_eigenvalue(surface: &GraphSurface) -> Result<StabilityReport> {
    lowest_eigenvalue_with(surface, &EigenOptions::default())
}

pub fn lowest_eigenvalue_with(surface: &GraphSurface, opts: &EigenOptions) -> Result<StabilityReport> {
    let op = StabilityOperator::new(surface);
    let grid = surface.grid;
    let weight = &surface.area_element;

    // L + σ ≥ ½ on the whole space.
    let vmin = op.potential.iter().copied().fold(f64::INFINITY, f64::min);
    let sigma = 0.5 - vmin;
    let shifted = |x: &Field| {
        let mut y = op.apply(x);
        y.scaled_add(sigma, x);
        y
    };

    let (a_bar, c_bar, _) = op.lb.mean_coefficients();
    let mass = {
        let m = weight * &op.potential.mapv(|v| v + sigma);
        m.mean().unwrap_or(1.0).max(1e-3)
    };
    let pre = SpectralSolver::new(&grid, a_bar, c_bar, mass);
    let precondition = |r: &Field| pre.solve(&(weight * r));
    let dot = |p: &Field, q: &Field| op.inner(p, q);
    let project = |p: &Field| op.project(p);

    // dμ-orthonormal basis by modified Gram–Schmidt, applied twice
    let orthonormalize = |mut xs: Vec<Field>| -> Vec<Field> {
        for _ in 0..2 {
            for i in 0..xs.len() {
                for j in 0..i {
                    let c = op.inner(&xs[i], &xs[j]);
                    let xj = xs[j].clone();
                    xs[i].scaled_add(-c, &xj);
                }
                let n = op.inner(&xs[i], &xs[i]).sqrt();
                xs[i] /= n;
            }
        }
        xs
    };

    let mut xs = orthonormalize(seed_block(surface).iter().map(|x| op.project(x)).collect());
    let mut ritz = vec![0.0; BLOCK];
    let mut lambda = f64::INFINITY;
    let mut last_change = f64::INFINITY;
    for it in 1..=opts.max_iterations {
        let mut ys = Vec::with_capacity(BLOCK);
        for (x, theta) in xs.iter().zip(&ritz) {
            let guess = x / (theta + sigma).max(0.5);
            let (y, stats) = pcg(
                shifted,
                precondition,
                dot,
                project,
                x,
                guess,
                opts.solve_tol,
                opts.max_solve_iterations,
            );
            if !(stats.relative_residual <= 100.0 * opts.solve_tol) {
                return Err(Error::IterationFailure {
                    iterations: it,
                    last_change: stats.relative_residual,
                });
            }
            ys.push(op.project(&y));
        }
        let ys = orthonormalize(ys);
        let lys: Vec<Field> = ys.iter().map(|y| op.project(&op.apply(y))).collect();
        let h = nalgebra::DMatrix::from_fn(BLOCK, BLOCK, |i, j| 0.5 * (op.inner(&ys[i], &lys[j]) + op.inner(&ys[j], &lys[i])));
        let eig = h.symmetric_eigen();
        let mut order: Vec<usize> = (0..BLOCK).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
        let rotate = |basis: &[Field], k: usize| {
            let mut out = grid.zeros();
            for (i, b) in basis.iter().enumerate() {
                out.scaled_add(eig.eigenvectors[(i, k)], b);
            }
            out
        };
        xs = order.iter().map(|&k| rotate(&ys, k)).collect();
        ritz = order.iter().map(|&k| eig.eigenvalues[k]).collect();

        let phi = &xs[0];
        let res = {
            let mut r = rotate(&lys, order[0]);
            r.scaled_add(-ritz[0], phi);
            op.inner(&r, &r).sqrt()
        };
        last_change = (ritz[0] - lambda).abs();
        lambda = ritz[0];
        if res <= opts.residual_tol {
            let eigenfunction = phi / op.inner(phi, phi).sqrt();
            return Ok(StabilityReport {
                lambda_min: lambda,
                eigenfunction,
                fitted_decay_rate: None,
                strictly_stable: lambda > 0.0,
                iterations: it,
                residual: res,
            });
        }
    }
    Err(Error::IterationFailure {
        iterations: opts.max_iterations,
        last_change,
    })
}

/// Records with `sup |H − h|` at or below this form the late-time window.
pub const LATE_TIME_SUP_DEV: f64 = 1e-2;
pub const MIN_FIT_RECORDS: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateReport {
    /// `−d/dt log ∫(H − h)² dμ` from a least-squares fit.
    pub fitted_rate: f64,
    /// `2 λ_min`.
    pub predicted_rate: f64,
    pub tolerance: f64,
    pub records_used: usize,
    pub passed: bool,
}

/// Least-squares slope of `y` against `x`.
pub fn least_squares_slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
    }
    sxy / sxx
}

/// Fits the decay of `∫(H − h)² dμ` over late-time records (those with
/// `sup |H − h| ≤ LATE_TIME_SUP_DEV` and above the noise floor) and compares
/// it with `2 λ_min`.
pub fn exponential_rate_check(report: &StabilityReport, history: &[FlowRecord], tolerance: f64) -> Result<RateReport> {
    let late: Vec<&FlowRecord> = history
        .iter()
        .filter(|r| r.sup_dev <= LATE_TIME_SUP_DEV && r.dev_l2sq > DISSIPATION_NOISE_FLOOR * r.area)
        .collect();
    if late.len() < MIN_FIT_RECORDS {
        return Err(Error::InsufficientData(format!(
            "{} late-time records above the noise floor, need {MIN_FIT_RECORDS}",
            late.len()
        )));
    }
    let t: Vec<f64> = late.iter().map(|r| r.t).collect();
    let y: Vec<f64> = late.iter().map(|r| r.dev_l2sq.ln()).collect();
    let fitted_rate = -least_squares_slope(&t, &y);
    let predicted_rate = 2.0 * report.lambda_min;
    Ok(RateReport {
        fitted_rate,
        predicted_rate,
        tolerance,
        records_used: late.len(),
        passed: fitted_rate >= predicted_rate - tolerance,
    })
}
