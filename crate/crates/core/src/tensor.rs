//! Small dense 2x2 tensors and fields of them.

use std::ops::{Add, Mul, Sub};

use crate::grid::{Field, Grid};

/// A 2x2 matrix stored row-major. Used for both symmetric (metric) and
/// general (shape operator) tensors.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Mat2 {
    pub m: [[f64; 2]; 2],
}

impl Mat2 {
    pub const IDENTITY: Mat2 = Mat2 {
        m: [[1.0, 0.0], [0.0, 1.0]],
    };

    pub fn new(a: f64, b: f64, c: f64, d: f64) -> Self {
        Mat2 { m: [[a, b], [c, d]] }
    }

    pub fn diag(a: f64, d: f64) -> Self {
        Mat2::new(a, 0.0, 0.0, d)
    }

    pub fn sym(xx: f64, xy: f64, yy: f64) -> Self {
        Mat2::new(xx, xy, xy, yy)
    }

    pub fn det(&self) -> f64 {
        self.m[0][0] * self.m[1][1] - self.m[0][1] * self.m[1][0]
    }

    pub fn trace(&self) -> f64 {
        self.m[0][0] + self.m[1][1]
    }

    pub fn inverse(&self) -> Mat2 {
        let d = self.det();
        Mat2::new(
            self.m[1][1] / d,
            -self.m[0][1] / d,
            -self.m[1][0] / d,
            self.m[0][0] / d,
        )
    }

    pub fn transpose(&self) -> Mat2 {
        Mat2::new(self.m[0][0], self.m[1][0], self.m[0][1], self.m[1][1])
    }

    pub fn scale(&self, s: f64) -> Mat2 {
        Mat2::new(
            s * self.m[0][0],
            s * self.m[0][1],
            s * self.m[1][0],
            s * self.m[1][1],
        )
    }

    pub fn apply(&self, v: [f64; 2]) -> [f64; 2] {
        [
            self.m[0][0] * v[0] + self.m[0][1] * v[1],
            self.m[1][0] * v[0] + self.m[1][1] * v[1],
        ]
    }

    /// Eigenvalues of a matrix with real spectrum, ascending.
    pub fn real_eigenvalues(&self) -> (f64, f64) {
        let t = 0.5 * self.trace();
        let disc = (t * t - self.det()).max(0.0).sqrt();
        (t - disc, t + disc)
    }

    pub fn max_abs_diff(&self, other: &Mat2) -> f64 {
        let mut out = 0.0_f64;
        for i in 0..2 {
            for j in 0..2 {
                out = out.max((self.m[i][j] - other.m[i][j]).abs());
            }
        }
        out
    }
}

impl Add for Mat2 {
    type Output = Mat2;
    fn add(self, o: Mat2) -> Mat2 {
        Mat2::new(
            self.m[0][0] + o.m[0][0],
            self.m[0][1] + o.m[0][1],
            self.m[1][0] + o.m[1][0],
            self.m[1][1] + o.m[1][1],
        )
    }
}

impl Sub for Mat2 {
    type Output = Mat2;
    fn sub(self, o: Mat2) -> Mat2 {
        self + o.scale(-1.0)
    }
}

impl Mul for Mat2 {
    type Output = Mat2;
    fn mul(self, o: Mat2) -> Mat2 {
        let mut r = [[0.0; 2]; 2];
        for (i, row) in r.iter_mut().enumerate() {
            for (j, v) in row.iter_mut().enumerate() {
                *v = self.m[i][0] * o.m[0][j] + self.m[i][1] * o.m[1][j];
            }
        }
        Mat2 { m: r }
    }
}

/// Field of 2x2 tensors, one per grid node, in the same `(iy, ix)` layout as
/// scalar fields.
#[derive(Debug, Clone)]
pub struct TensorField {
    pub xx: Field,
    pub xy: Field,
    pub yx: Field,
    pub yy: Field,
}

impl TensorField {
    pub fn from_fn(grid: &Grid, f: impl Fn(usize, usize) -> Mat2) -> Self {
        let mut out = TensorField {
            xx: grid.zeros(),
            xy: grid.zeros(),
            yx: grid.zeros(),
            yy: grid.zeros(),
        };
        for iy in 0..grid.ny {
            for ix in 0..grid.nx {
                out.set(iy, ix, f(iy, ix));
            }
        }
        out
    }

    pub fn at(&self, iy: usize, ix: usize) -> Mat2 {
        Mat2::new(
            self.xx[[iy, ix]],
            self.xy[[iy, ix]],
            self.yx[[iy, ix]],
            self.yy[[iy, ix]],
        )
    }

    pub fn set(&mut self, iy: usize, ix: usize, m: Mat2) {
        self.xx[[iy, ix]] = m.m[0][0];
        self.xy[[iy, ix]] = m.m[0][1];
        self.yx[[iy, ix]] = m.m[1][0];
        self.yy[[iy, ix]] = m.m[1][1];
    }
}
