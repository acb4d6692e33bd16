//! Normal-coordinate chart `(x¹, x², r)` around the reference surface with
//! ambient metric `dr² + g(x, r)`.

use crate::error::Result;
use crate::foliation::ReferenceSurfaceData;
use crate::grid::{diff_x, diff_y, Field, Grid};
use crate::tensor::Mat2;

/// Leaf metric and its first derivatives at one grid node and height.
#[derive(Debug, Clone, Copy)]
pub struct ChartPoint {
    pub g: Mat2,
    pub dg_dr: Mat2,
    pub dg_dx: Mat2,
    pub dg_dy: Mat2,
}

/// The ambient metric of the equidistant foliation, with spatial derivatives
/// of the reference fields cached (periodic central differences).
#[derive(Debug, Clone)]
pub struct FoliationChart {
    data: ReferenceSurfaceData,
    conformal: Field,
    v_x: Field,
    v_y: Field,
    l1_x: Field,
    l1_y: Field,
    l2_x: Field,
    l2_y: Field,
}

pub fn build_chart(data: &ReferenceSurfaceData) -> Result<FoliationChart> {
    data.validate()?;
    let grid = &data.grid;
    Ok(FoliationChart {
        conformal: data.conformal(),
        v_x: diff_x(grid, &data.v),
        v_y: diff_y(grid, &data.v),
        l1_x: diff_x(grid, &data.lam1),
        l1_y: diff_y(grid, &data.lam1),
        l2_x: diff_x(grid, &data.lam2),
        l2_y: diff_y(grid, &data.lam2),
        data: data.clone(),
    })
}

impl FoliationChart {
    pub fn data(&self) -> &ReferenceSurfaceData {
        &self.data
    }

    pub fn grid(&self) -> &Grid {
        &self.data.grid
    }

    /// True when the reference surface is flat and totally geodesic, so the
    /// ambient metric is `dr² + cosh²r |dx|²`.
    pub fn is_fuchsian(&self) -> bool {
        self.data.v.iter().all(|&v| v == 0.0)
            && self.data.lam1.iter().all(|&l| l == 0.0)
            && self.data.lam2.iter().all(|&l| l == 0.0)
    }

    /// Leaf metric at node `(ix, iy)` and height `r`.
    pub fn metric(&self, ix: usize, iy: usize, r: f64) -> Mat2 {
        self.eval(ix, iy, r).g
    }

    pub fn eval(&self, ix: usize, iy: usize, r: f64) -> ChartPoint {
        let e = self.conformal[[iy, ix]];
        let l1 = self.data.lam1[[iy, ix]];
        let l2 = self.data.lam2[[iy, ix]];
        let er = r.exp();
        let (c, s) = (0.5 * (er + 1.0 / er), 0.5 * (er - 1.0 / er));
        let (p1, p2) = (c + l1 * s, c + l2 * s);
        let (q1, q2) = (s + l1 * c, s + l2 * c);
        let g = Mat2::diag(e * p1 * p1, e * p2 * p2);
        let dg_dr = Mat2::diag(2.0 * e * p1 * q1, 2.0 * e * p2 * q2);
        let d_dk = |vk: f64, l1k: f64, l2k: f64| {
            Mat2::diag(
                2.0 * vk * e * p1 * p1 + 2.0 * e * p1 * s * l1k,
                2.0 * vk * e * p2 * p2 + 2.0 * e * p2 * s * l2k,
            )
        };
        ChartPoint {
            g,
            dg_dr,
            dg_dx: d_dk(self.v_x[[iy, ix]], self.l1_x[[iy, ix]], self.l2_x[[iy, ix]]),
            dg_dy: d_dk(self.v_y[[iy, ix]], self.l1_y[[iy, ix]], self.l2_y[[iy, ix]]),
        }
    }

    /// `∫₀^r √det g(x, s) ds` at node `(ix, iy)`, from the closed-form
    /// antiderivative of the leaf area element.
    pub fn column_volume(&self, ix: usize, iy: usize, r: f64) -> f64 {
        let e = self.conformal[[iy, ix]];
        let l1 = self.data.lam1[[iy, ix]];
        let l2 = self.data.lam2[[iy, ix]];
        let (tr, det) = (l1 + l2, l1 * l2);
        let sh2 = (2.0 * r).sinh();
        let sh = r.sinh();
        e * ((0.5 * r + 0.25 * sh2) + tr * 0.5 * sh * sh + det * (0.25 * sh2 - 0.5 * r))
    }

    /// `√det g(x, r)` at node `(ix, iy)`.
    pub fn area_element(&self, ix: usize, iy: usize, r: f64) -> f64 {
        let e = self.conformal[[iy, ix]];
        let l1 = self.data.lam1[[iy, ix]];
        let l2 = self.data.lam2[[iy, ix]];
        let (s, c) = (r.sinh(), r.cosh());
        e * (c + l1 * s) * (c + l2 * s)
    }
}
