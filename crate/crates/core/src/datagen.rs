//! Synthetic reference surfaces with controlled curvature.
//!
//! Pseudo-random choices come from SplitMix64 seeded with `GeneratorSpec::seed`
//! as its initial state. Uniform doubles are `(next_u64 >> 11) * 2^-53`;
//! integers in `[-k, k]` are `floor(uniform * (2k + 1)) - k`. For each of the
//! fields `v`, `lam1`, `lam2` in that order and each mode in turn, the draws
//! are: `kx`, `ky` (redrawn together while both are zero), phase
//! `2π * uniform`, weight `0.5 + uniform`. Weights are normalized to sum to
//! one so every band-limited field is bounded by its amplitude.

use std::f64::consts::PI;

use rand_core::{RngCore, SeedableRng};
use rand_xoshiro::SplitMix64;

use crate::error::{Error, Result};
use crate::foliation::ReferenceSurfaceData;
use crate::grid::{Field, Grid};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GeneratorKind {
    Fuchsian,
    ConstantLambda,
    FourierBump,
}

impl std::str::FromStr for GeneratorKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fuchsian" => Ok(GeneratorKind::Fuchsian),
            "constant-lambda" => Ok(GeneratorKind::ConstantLambda),
            "fourier-bump" => Ok(GeneratorKind::FourierBump),
            other => Err(Error::InvalidSpec(format!("unknown generator '{other}'"))),
        }
    }
}

impl std::fmt::Display for GeneratorKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            GeneratorKind::Fuchsian => "fuchsian",
            GeneratorKind::ConstantLambda => "constant-lambda",
            GeneratorKind::FourierBump => "fourier-bump",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorSpec {
    pub kind: GeneratorKind,
    /// Constant principal curvatures for `constant-lambda`.
    pub lam1: f64,
    pub lam2: f64,
    /// Constant conformal factor for `constant-lambda`.
    pub v_const: f64,
    /// Bound on `|λ_j|` before trace normalization (`fourier-bump`).
    pub amplitude: f64,
    /// Bound on `|v|` (`fourier-bump`).
    pub v_amplitude: f64,
    pub modes: usize,
    pub max_wavenumber: usize,
    pub zero_mean_trace: bool,
    pub seed: u64,
}

impl Default for GeneratorSpec {
    fn default() -> Self {
        GeneratorSpec {
            kind: GeneratorKind::Fuchsian,
            lam1: 0.0,
            lam2: 0.0,
            v_const: 0.0,
            amplitude: 0.0,
            v_amplitude: 0.1,
            modes: 3,
            max_wavenumber: 2,
            zero_mean_trace: false,
            seed: 0,
        }
    }
}

impl GeneratorSpec {
    pub fn fuchsian() -> Self {
        GeneratorSpec::default()
    }

    pub fn constant_lambda(lam1: f64, lam2: f64) -> Self {
        GeneratorSpec {
            kind: GeneratorKind::ConstantLambda,
            lam1,
            lam2,
            ..GeneratorSpec::default()
        }
    }

    pub fn fourier_bump(amplitude: f64, seed: u64) -> Self {
        GeneratorSpec {
            kind: GeneratorKind::FourierBump,
            amplitude,
            seed,
            ..GeneratorSpec::default()
        }
    }

    pub fn with_zero_mean_trace(mut self) -> Self {
        self.zero_mean_trace = true;
        self
    }

    fn validate(&self) -> Result<()> {
        let in_unit = |a: f64| (0.0..1.0).contains(&a);
        match self.kind {
            GeneratorKind::Fuchsian => Ok(()),
            GeneratorKind::ConstantLambda => {
                if !(in_unit(self.lam1.abs()) && in_unit(self.lam2.abs())) || !self.v_const.is_finite() {
                    return Err(Error::InvalidSpec(format!(
                        "constant-lambda needs |lambda| < 1, got ({}, {})",
                        self.lam1, self.lam2
                    )));
                }
                Ok(())
            }
            GeneratorKind::FourierBump => {
                if !in_unit(self.amplitude) {
                    return Err(Error::InvalidSpec(format!("amplitude {} outside [0, 1)", self.amplitude)));
                }
                if !(self.v_amplitude.is_finite() && self.v_amplitude >= 0.0) {
                    return Err(Error::InvalidSpec(format!("conformal amplitude {}", self.v_amplitude)));
                }
                if self.modes == 0 || self.max_wavenumber == 0 {
                    return Err(Error::InvalidSpec("fourier-bump needs at least one mode and wavenumber".into()));
                }
                Ok(())
            }
        }
    }
}

struct Draws(SplitMix64);

impl Draws {
    fn uniform(&mut self) -> f64 {
        (self.0.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    fn int_symmetric(&mut self, k: usize) -> i64 {
        let span = (2 * k + 1) as f64;
        (self.uniform() * span).floor() as i64 - k as i64
    }
}

fn band_limited_field(grid: &Grid, draws: &mut Draws, modes: usize, kmax: usize) -> Field {
    let mut terms = Vec::with_capacity(modes);
    for _ in 0..modes {
        let (kx, ky) = loop {
            let kx = draws.int_symmetric(kmax);
            let ky = draws.int_symmetric(kmax);
            if kx != 0 || ky != 0 {
                break (kx, ky);
            }
        };
        let phase = 2.0 * PI * draws.uniform();
        let weight = 0.5 + draws.uniform();
        terms.push((kx as f64, ky as f64, phase, weight));
    }
    let total: f64 = terms.iter().map(|t| t.3).sum();
    let (wx, wy) = (2.0 * PI / grid.lx, 2.0 * PI / grid.ly);
    grid.sample(|x, y| {
        terms
            .iter()
            .map(|&(kx, ky, ph, w)| w / total * (kx * wx * x + ky * wy * y + ph).cos())
            .sum()
    })
}

pub fn generate(spec: &GeneratorSpec, nx: usize, ny: usize, lx: f64, ly: f64) -> Result<ReferenceSurfaceData> {
    spec.validate()?;
    let grid = Grid::new(nx, ny, lx, ly)?;
    let (v, mut lam1, mut lam2) = match spec.kind {
        GeneratorKind::Fuchsian => (grid.zeros(), grid.zeros(), grid.zeros()),
        GeneratorKind::ConstantLambda => (
            grid.constant(spec.v_const),
            grid.constant(spec.lam1),
            grid.constant(spec.lam2),
        ),
        GeneratorKind::FourierBump => {
            let kmax = spec.max_wavenumber.min(nx / 8).min(ny / 8).max(1);
            let mut draws = Draws(SplitMix64::seed_from_u64(spec.seed));
            let v = band_limited_field(&grid, &mut draws, spec.modes, kmax) * spec.v_amplitude;
            let l1 = band_limited_field(&grid, &mut draws, spec.modes, kmax) * spec.amplitude;
            let l2 = band_limited_field(&grid, &mut draws, spec.modes, kmax) * spec.amplitude;
            (v, l1, l2)
        }
    };
    if spec.zero_mean_trace {
        let e = v.mapv(|x| (2.0 * x).exp());
        let mean = grid.integrate_product(&(&lam1 + &lam2), &e) / grid.integrate(&e);
        lam1 -= 0.5 * mean;
        lam2 -= 0.5 * mean;
    }
    ReferenceSurfaceData::new(grid, v, lam1, lam2).map_err(|e| Error::InvalidSpec(format!("generated data rejected: {e}")))
}
