//! Periodic rectangular grid (a flat torus) and the scalar fields living on it.
//!
//! Fields are `Array2<f64>` with shape `(ny, nx)`: the row index is `iy`, the
//! column index is `ix`, so the flattened storage is row-major with
//! `idx = iy * nx + ix`.

use ndarray::Array2;

use crate::error::{Error, Result};

pub type Field = Array2<f64>;

/// Smallest admissible grid size in each direction.
pub const MIN_POINTS: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    pub nx: usize,
    pub ny: usize,
    pub lx: f64,
    pub ly: f64,
}

impl Grid {
    pub fn new(nx: usize, ny: usize, lx: f64, ly: f64) -> Result<Self> {
        if nx < MIN_POINTS || ny < MIN_POINTS {
            return Err(Error::InvalidData(format!(
                "grid {nx}x{ny} is smaller than the minimum {MIN_POINTS}x{MIN_POINTS}"
            )));
        }
        if !(lx.is_finite() && ly.is_finite() && lx > 0.0 && ly > 0.0) {
            return Err(Error::InvalidData(format!(
                "domain periods must be positive and finite, got {lx} x {ly}"
            )));
        }
        Ok(Grid { nx, ny, lx, ly })
    }

    /// Square `n x n` grid on the `2π x 2π` torus.
    pub fn square_2pi(n: usize) -> Result<Self> {
        Grid::new(n, n, 2.0 * std::f64::consts::PI, 2.0 * std::f64::consts::PI)
    }

    pub fn dx(&self) -> f64 {
        self.lx / self.nx as f64
    }

    pub fn dy(&self) -> f64 {
        self.ly / self.ny as f64
    }

    pub fn cell_area(&self) -> f64 {
        self.dx() * self.dy()
    }

    pub fn len(&self) -> usize {
        self.nx * self.ny
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn x(&self, ix: usize) -> f64 {
        ix as f64 * self.dx()
    }

    pub fn y(&self, iy: usize) -> f64 {
        iy as f64 * self.dy()
    }

    pub fn zeros(&self) -> Field {
        Array2::zeros((self.ny, self.nx))
    }

    pub fn constant(&self, value: f64) -> Field {
        Array2::from_elem((self.ny, self.nx), value)
    }

    /// Samples `f(x, y)` at every grid node.
    pub fn sample(&self, f: impl Fn(f64, f64) -> f64) -> Field {
        Array2::from_shape_fn((self.ny, self.nx), |(iy, ix)| f(self.x(ix), self.y(iy)))
    }

    pub fn check_shape(&self, field: &Field, name: &str) -> Result<()> {
        if field.dim() != (self.ny, self.nx) {
            return Err(Error::InvalidData(format!(
                "field {name} has shape {:?}, expected ({}, {})",
                field.dim(),
                self.ny,
                self.nx
            )));
        }
        Ok(())
    }

    /// Trapezoid rule over the periodic domain (equal weights).
    pub fn integrate(&self, field: &Field) -> f64 {
        field.sum() * self.cell_area()
    }

    /// Trapezoid rule of `a * b`.
    pub fn integrate_product(&self, a: &Field, b: &Field) -> f64 {
        a.iter().zip(b.iter()).map(|(x, y)| x * y).sum::<f64>() * self.cell_area()
    }

    pub(crate) fn neighbours(&self) -> Neighbours {
        Neighbours::new(self.nx, self.ny)
    }
}

/// Periodic index tables for stencils up to width two.
#[derive(Debug, Clone)]
pub(crate) struct Neighbours {
    pub xp: Vec<usize>,
    pub xm: Vec<usize>,
    pub xpp: Vec<usize>,
    pub xmm: Vec<usize>,
    pub yp: Vec<usize>,
    pub ym: Vec<usize>,
    pub ypp: Vec<usize>,
    pub ymm: Vec<usize>,
}

impl Neighbours {
    fn new(nx: usize, ny: usize) -> Self {
        let shift = |n: usize, k: isize| -> Vec<usize> {
            (0..n)
                .map(|i| ((i as isize + k).rem_euclid(n as isize)) as usize)
                .collect()
        };
        Neighbours {
            xp: shift(nx, 1),
            xm: shift(nx, -1),
            xpp: shift(nx, 2),
            xmm: shift(nx, -2),
            yp: shift(ny, 1),
            ym: shift(ny, -1),
            ypp: shift(ny, 2),
            ymm: shift(ny, -2),
        }
    }
}

/// Second-order periodic central difference in x.
pub fn diff_x(grid: &Grid, f: &Field) -> Field {
    let nb = grid.neighbours();
    let inv = 0.5 / grid.dx();
    Array2::from_shape_fn(f.dim(), |(iy, ix)| {
        (f[[iy, nb.xp[ix]]] - f[[iy, nb.xm[ix]]]) * inv
    })
}

/// Second-order periodic central difference in y.
pub fn diff_y(grid: &Grid, f: &Field) -> Field {
    let nb = grid.neighbours();
    let inv = 0.5 / grid.dy();
    Array2::from_shape_fn(f.dim(), |(iy, ix)| {
        (f[[nb.yp[iy], ix]] - f[[nb.ym[iy], ix]]) * inv
    })
}

/// dμ-weighted mean of `f`, the weight being an area-element field.
pub fn weighted_mean(grid: &Grid, f: &Field, weight: &Field) -> f64 {
    grid.integrate_product(f, weight) / grid.integrate(weight)
}

pub fn max_abs(f: &Field) -> f64 {
    f.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
}

/// Rolls a field by `(sx, sy)` grid points with periodic wrap-around.
pub fn roll(f: &Field, sx: usize, sy: usize) -> Field {
    let (ny, nx) = f.dim();
    Array2::from_shape_fn((ny, nx), |(iy, ix)| f[[(iy + ny - sy % ny) % ny, (ix + nx - sx % nx) % nx]])
}
