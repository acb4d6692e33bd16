//! Discrete differential geometry of graph surfaces `{r = u(x)}` in the chart
//! metric `dr² + g(x, r)`.
//!
//! With `e_i = ∂_i + u_i ∂_r` the induced metric is `G = g + du ⊗ du`, the
//! upward unit normal has covector `(−du, 1)/W` with `W² = 1 + g^{ab}u_a u_b`,
//! and the second fundamental form is `h_ij = −ḡ(ν, ∇̄_{e_i} e_j)` with the
//! Christoffel symbols of `ḡ` assembled from `g`, `∂_r g` and `∂_x g`.
//! All spatial derivatives of `u` are second-order periodic central
//! differences.

use crate::chart::FoliationChart;
use crate::error::{Error, Result};
use crate::grid::{Field, Grid};
use crate::tensor::{Mat2, TensorField};

/// Smallest admissible `det G` before the surface counts as degenerate.
pub const DEGENERATE_DET: f64 = 1e-14;

/// A height field over the reference grid with its derived geometry.
#[derive(Debug, Clone)]
pub struct GraphSurface {
    pub grid: Grid,
    pub u: Field,
    pub u_x: Field,
    pub u_y: Field,
    /// Induced metric `G_ij`.
    pub metric: TensorField,
    pub second_fundamental: TensorField,
    /// Gradient function `Θ = ḡ(ν, ∂_r) = 1/W`.
    pub theta: Field,
    pub hmean: Field,
    pub a2norm: Field,
    /// `√det G`, the area element relative to `dx dy`.
    pub area_element: Field,
    pub area: f64,
    pub volume: f64,
}

impl GraphSurface {
    pub fn min_theta(&self) -> f64 {
        self.theta.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max_a2(&self) -> f64 {
        self.a2norm.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// `∫ f dμ` over the surface.
    pub fn integrate(&self, f: &Field) -> f64 {
        self.grid.integrate_product(f, &self.area_element)
    }

    pub fn inverse_metric(&self, iy: usize, ix: usize) -> Mat2 {
        self.metric.at(iy, ix).inverse()
    }
}

struct PointGeometry {
    g_ind: Mat2,
    h: Mat2,
    theta: f64,
    hmean: f64,
    a2: f64,
    sqrt_det: f64,
}

#[allow(clippy::too_many_arguments)]
fn point_geometry(
    chart: &FoliationChart,
    ix: usize,
    iy: usize,
    u: f64,
    du: [f64; 2],
    ddu: Mat2,
) -> std::result::Result<PointGeometry, String> {
    let p = chart.eval(ix, iy, u);
    let ginv = p.g.inverse();
    let gdu = ginv.apply(du);
    let q = du[0] * gdu[0] + du[1] * gdu[1];
    let w2 = 1.0 + q;
    let w = w2.sqrt();

    let g_ind = p.g + Mat2::new(du[0] * du[0], du[0] * du[1], du[1] * du[0], du[1] * du[1]);
    let det = g_ind.det();
    if !(det > DEGENERATE_DET) {
        return Err(format!("det G = {det:e}"));
    }
    let g_ind_inv = ginv - Mat2::new(gdu[0] * gdu[0], gdu[0] * gdu[1], gdu[1] * gdu[0], gdu[1] * gdu[1]).scale(1.0 / w2);

    // Lowered Christoffel symbols of the leaf metric at fixed r:
    // low[d][i][j] = ½(∂_i g_jd + ∂_j g_id − ∂_d g_ij).
    let dg = [p.dg_dx, p.dg_dy];
    let mut contracted = [[0.0; 2]; 2];
    for (i, row) in contracted.iter_mut().enumerate() {
        for (j, out) in row.iter_mut().enumerate() {
            let mut acc = 0.0;
            for d in 0..2 {
                let low = 0.5 * (dg[i].m[j][d] + dg[j].m[i][d] - dg[d].m[i][j]);
                acc += gdu[d] * low;
            }
            *out = acc;
        }
    }
    // m_i = u_c S^c_i with S = ½ g⁻¹ ∂_r g.
    let m = p.dg_dr.apply(gdu);
    let m = [0.5 * m[0], 0.5 * m[1]];

    let mut h = Mat2::default();
    for i in 0..2 {
        for j in 0..2 {
            let bracket = ddu.m[i][j] - 0.5 * p.dg_dr.m[i][j] - contracted[i][j] - (du[j] * m[i] + du[i] * m[j]);
            h.m[i][j] = -bracket / w;
        }
    }
    let shape = g_ind_inv * h;
    Ok(PointGeometry {
        g_ind,
        h,
        theta: 1.0 / w,
        hmean: shape.trace(),
        a2: (shape * shape).trace(),
        sqrt_det: det.sqrt(),
    })
}

/// Geometry of the graph `{r = u(x)}`.
pub fn graph_geometry(chart: &FoliationChart, u: &Field) -> Result<GraphSurface> {
    let grid = *chart.grid();
    grid.check_shape(u, "u")?;
    let nb = grid.neighbours();
    let (dx, dy) = (grid.dx(), grid.dy());
    let (inv2dx, inv2dy) = (0.5 / dx, 0.5 / dy);
    let (invdx2, invdy2, inv4dxdy) = (1.0 / (dx * dx), 1.0 / (dy * dy), 0.25 / (dx * dy));

    let mut out = GraphSurface {
        grid,
        u: u.clone(),
        u_x: grid.zeros(),
        u_y: grid.zeros(),
        metric: TensorField::from_fn(&grid, |_, _| Mat2::default()),
        second_fundamental: TensorField::from_fn(&grid, |_, _| Mat2::default()),
        theta: grid.zeros(),
        hmean: grid.zeros(),
        a2norm: grid.zeros(),
        area_element: grid.zeros(),
        area: 0.0,
        volume: 0.0,
    };

    if let Some(k) = u.iter().position(|v| !v.is_finite()) {
        return Err(Error::StepFailure(format!("non-finite height at ({}, {})", k % grid.nx, k / grid.nx)));
    }
    let mut area = 0.0;
    let mut volume = 0.0;
    for iy in 0..grid.ny {
        let (yp, ym) = (nb.yp[iy], nb.ym[iy]);
        for ix in 0..grid.nx {
            let (xp, xm) = (nb.xp[ix], nb.xm[ix]);
            let c = u[[iy, ix]];
            let ux = (u[[iy, xp]] - u[[iy, xm]]) * inv2dx;
            let uy = (u[[yp, ix]] - u[[ym, ix]]) * inv2dy;
            let uxx = (u[[iy, xp]] - 2.0 * c + u[[iy, xm]]) * invdx2;
            let uyy = (u[[yp, ix]] - 2.0 * c + u[[ym, ix]]) * invdy2;
            let uxy = (u[[yp, xp]] - u[[ym, xp]] - u[[yp, xm]] + u[[ym, xm]]) * inv4dxdy;
            let pg = point_geometry(chart, ix, iy, c, [ux, uy], Mat2::sym(uxx, uxy, uyy))
                .map_err(|detail| Error::GraphViolation { ix, iy, detail })?;
            if !(pg.theta > 0.0) || !pg.hmean.is_finite() {
                return Err(Error::GraphViolation {
                    ix,
                    iy,
                    detail: format!("theta = {}, H = {}", pg.theta, pg.hmean),
                });
            }
            out.u_x[[iy, ix]] = ux;
            out.u_y[[iy, ix]] = uy;
            out.metric.set(iy, ix, pg.g_ind);
            out.second_fundamental.set(iy, ix, pg.h);
            out.theta[[iy, ix]] = pg.theta;
            out.hmean[[iy, ix]] = pg.hmean;
            out.a2norm[[iy, ix]] = pg.a2;
            out.area_element[[iy, ix]] = pg.sqrt_det;
            area += pg.sqrt_det;
            volume += chart.column_volume(ix, iy, c);
        }
    }
    out.area = area * grid.cell_area();
    out.volume = volume * grid.cell_area();
    Ok(out)
}

/// Signed volume between the reference surface and the graph of `u`.
pub fn enclosed_volume(chart: &FoliationChart, u: &Field) -> Result<f64> {
    let grid = chart.grid();
    grid.check_shape(u, "u")?;
    let mut sum = 0.0;
    for ((iy, ix), &r) in u.indexed_iter() {
        sum += chart.column_volume(ix, iy, r);
    }
    Ok(sum * grid.cell_area())
}

/// Enclosed volume by per-column adaptive Simpson quadrature of the leaf
/// area element, independent of the closed-form antiderivative.
pub fn enclosed_volume_quadrature(chart: &FoliationChart, lower: &Field, upper: &Field, tol: f64) -> f64 {
    let grid = chart.grid();
    let mut sum = 0.0;
    for iy in 0..grid.ny {
        for ix in 0..grid.nx {
            let f = |r: f64| chart.area_element(ix, iy, r);
            sum += adaptive_simpson(&f, lower[[iy, ix]], upper[[iy, ix]], tol);
        }
    }
    sum * grid.cell_area()
}

pub fn adaptive_simpson(f: &impl Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    fn recurse(f: &impl Fn(f64) -> f64, a: f64, b: f64, fa: f64, fm: f64, fb: f64, whole: f64, tol: f64, depth: u32) -> f64 {
        let m = 0.5 * (a + b);
        let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
        let (flm, frm) = (f(lm), f(rm));
        let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
        let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
        let delta = left + right - whole;
        if depth == 0 || delta.abs() <= 15.0 * tol {
            return left + right + delta / 15.0;
        }
        recurse(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1) + recurse(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
    }
    if a == b {
        return 0.0;
    }
    let (fa, fb, fm) = (f(a), f(b), f(0.5 * (a + b)));
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    recurse(f, a, b, fa, fm, fb, whole, tol, 40)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThetaIdentityReport {
    /// `max |Θ − 1/√(1 + G^{ij} u_i u_j)|` over the grid.
    pub max_residual: f64,
}

/// Pointwise residual of `Θ = 1/√(1+|∇u|²)` with `|∇u|` measured in the
/// induced metric of the surface.
pub fn theta_identity_residual(surface: &GraphSurface) -> Field {
    let grid = surface.grid;
    let mut out = grid.zeros();
    for iy in 0..grid.ny {
        for ix in 0..grid.nx {
            let du = [surface.u_x[[iy, ix]], surface.u_y[[iy, ix]]];
            let ginv = surface.inverse_metric(iy, ix);
            let gu = ginv.apply(du);
            let norm2 = du[0] * gu[0] + du[1] * gu[1];
            out[[iy, ix]] = surface.theta[[iy, ix]] - 1.0 / (1.0 + norm2).sqrt();
        }
    }
    out
}

pub fn theta_gradient_identity_check(surface: &GraphSurface) -> ThetaIdentityReport {
    ThetaIdentityReport {
        max_residual: crate::grid::max_abs(&theta_identity_residual(surface)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chart::build_chart;
    use crate::datagen::{generate, GeneratorSpec};
    use crate::foliation::{mean_curvature_parallel, ReferenceSurfaceData};
    use crate::grid::{max_abs, roll};
    use approx::assert_abs_diff_eq;
    use std::f64::consts::PI;

    fn fuchsian_chart(n: usize) -> FoliationChart {
        build_chart(&ReferenceSurfaceData::fuchsian(Grid::square_2pi(n).unwrap())).unwrap()
    }

    #[test]
    fn flat_leaf_of_fuchsian_chart() {
        let chart = fuchsian_chart(16);
        let s = graph_geometry(&chart, &chart.grid().zeros()).unwrap();
        assert!(max_abs(&s.hmean) < 1e-15);
        assert!(max_abs(&s.a2norm) < 1e-15);
        assert_abs_diff_eq!(s.area, 4.0 * PI * PI, epsilon = 1e-12);
        assert_eq!(s.volume, 0.0);
        assert!(s.theta.iter().all(|&t| t == 1.0));
    }

    #[test]
    fn constant_height_reproduces_leaf() {
        let data = generate(&GeneratorSpec::fourier_bump(0.6, 7), 32, 32, 2.0 * PI, 2.0 * PI).unwrap();
        let chart = build_chart(&data).unwrap();
        for r in [-1.5, 0.4, 2.0] {
            let s = graph_geometry(&chart, &chart.grid().constant(r)).unwrap();
            for ((iy, ix), &h) in s.hmean.indexed_iter() {
                let exact = mean_curvature_parallel(data.lam1[[iy, ix]], data.lam2[[iy, ix]], r).unwrap();
                assert!((h - exact).abs() < 1e-12, "{h} vs {exact}");
            }
            assert!(s.theta.iter().all(|&t| t == 1.0));
        }
    }

    #[test]
    fn fuchsian_volume_closed_form() {
        let chart = fuchsian_chart(16);
        let r0 = 0.8_f64;
        let vol = enclosed_volume(&chart, &chart.grid().constant(r0)).unwrap();
        let exact = 4.0 * PI * PI * (r0 / 2.0 + (2.0 * r0).sinh() / 4.0);
        assert_abs_diff_eq!(vol, exact, epsilon = 1e-11);
        let quad = enclosed_volume_quadrature(&chart, &chart.grid().zeros(), &chart.grid().constant(r0), 1e-10);
        assert_abs_diff_eq!(quad, exact, epsilon = 1e-7);
        assert_eq!(enclosed_volume(&chart, &chart.grid().zeros()).unwrap(), 0.0);
    }

    #[test]
    fn fuchsian_volume_antisymmetry() {
        let chart = fuchsian_chart(16);
        let u = chart.grid().sample(|x, y| 0.3 + 0.2 * x.sin() * y.cos());
        let v1 = enclosed_volume(&chart, &u).unwrap();
        let v2 = enclosed_volume(&chart, &u.mapv(|z| -z)).unwrap();
        assert_abs_diff_eq!(v1, -v2, epsilon = 1e-12);
    }

    #[test]
    fn volume_additivity() {
        let data = generate(&GeneratorSpec::fourier_bump(0.5, 2), 16, 16, 5.0, 5.0).unwrap();
        let chart = build_chart(&data).unwrap();
        let u1 = chart.grid().sample(|x, y| 0.2 * (x + y).sin());
        let u2 = chart.grid().sample(|x, _| 1.0 + 0.3 * x.cos());
        let v1 = enclosed_volume(&chart, &u1).unwrap();
        let v2 = enclosed_volume(&chart, &u2).unwrap();
        let between = enclosed_volume_quadrature(&chart, &u1, &u2, 1e-11);
        assert_abs_diff_eq!(v1 + between, v2, epsilon = 1e-7);
    }

    #[test]
    fn shift_invariance() {
        let data = generate(&GeneratorSpec::fourier_bump(0.6, 5), 16, 16, 6.0, 6.0).unwrap();
        let u = data.grid.sample(|x, y| 0.5 + 0.1 * (x.sin() + (2.0 * y).cos()));
        let a = graph_geometry(&build_chart(&data).unwrap(), &u).unwrap();
        let shifted = ReferenceSurfaceData::new(
            data.grid,
            roll(&data.v, 3, 5),
            roll(&data.lam1, 3, 5),
            roll(&data.lam2, 3, 5),
        )
        .unwrap();
        let b = graph_geometry(&build_chart(&shifted).unwrap(), &roll(&u, 3, 5)).unwrap();
        assert!((a.area - b.area).abs() < 1e-12 * a.area);
        assert!((a.volume - b.volume).abs() < 1e-12 * a.volume.abs().max(1.0));
        assert!(max_abs(&(&roll(&a.hmean, 3, 5) - &b.hmean)) < 1e-12);
    }

    #[test]
    fn theta_identity_constant_height() {
        let chart = fuchsian_chart(16);
        let s = graph_geometry(&chart, &chart.grid().constant(0.7)).unwrap();
        assert_eq!(theta_gradient_identity_check(&s).max_residual, 0.0);
    }

    /// Residual of the identity when the gradient is measured with the
    /// induced metric, for u = 0.1 sin x over the Fuchsian chart. With
    /// q = u_x²/cosh²u it equals (1+q)^{-1/2} − ((1+q)/(1+2q))^{1/2}.
    fn continuum_theta_residual(x: f64) -> f64 {
        let u = 0.1 * x.sin();
        let q = (0.1 * x.cos()).powi(2) / u.cosh().powi(2);
        (1.0 + q).powf(-0.5) - ((1.0 + q) / (1.0 + 2.0 * q)).sqrt()
    }

    #[test]
    fn theta_identity_residual_bound_and_refinement() {
        let mut errors = Vec::new();
        for n in [32, 64, 128] {
            let chart = fuchsian_chart(n);
            let u = chart.grid().sample(|x, _| 0.1 * x.sin());
            let s = graph_geometry(&chart, &u).unwrap();
            let res = theta_identity_residual(&s);
            if n == 128 {
                assert!(crate::grid::max_abs(&res) < 1e-3);
            }
            let exact = chart.grid().sample(|x, _| continuum_theta_residual(x));
            errors.push(max_abs(&(&res - &exact)));
        }
        let order = (errors[1] / errors[2]).log2();
        assert!((1.7..2.3).contains(&order), "errors {errors:?}");
    }

    #[test]
    fn mean_curvature_of_small_sine_graph() {
        // Richardson-extrapolated fine-grid value as oracle; linearization
        // H ≈ −Δu + 2u about the flat leaf gives 3ε sin x at leading order.
        let eps = 0.01;
        let h_at = |n: usize| {
            let chart = fuchsian_chart(n);
            let u = chart.grid().sample(|x, _| eps * x.sin());
            let s = graph_geometry(&chart, &u).unwrap();
            s.hmean[[0, n / 4]]
        };
        let (h64, h128) = (h_at(64), h_at(128));
        let extrapolated = (4.0 * h128 - h64) / 3.0;
        assert!((extrapolated - 3.0 * eps).abs() < 3.0 * eps * eps);
        assert!((h128 - extrapolated).abs() < 1e-4);
    }

    #[test]
    fn second_fundamental_bounds() {
        let data = generate(&GeneratorSpec::fourier_bump(0.7, 13), 32, 32, 2.0 * PI, 2.0 * PI).unwrap();
        let chart = build_chart(&data).unwrap();
        let u = chart.grid().sample(|x, y| 0.8 + 0.3 * x.sin() * (2.0 * y).cos());
        let s = graph_geometry(&chart, &u).unwrap();
        for (a2, h) in s.a2norm.iter().zip(s.hmean.iter()) {
            assert!(*a2 >= h * h / 2.0 - 1e-10);
        }
        assert!(s.theta.iter().all(|&t| t > 0.0 && t <= 1.0 + 1e-12));
    }

    #[test]
    fn non_finite_height_is_step_failure() {
        let chart = fuchsian_chart(8);
        let mut u = chart.grid().zeros();
        u[[2, 2]] = f64::NAN;
        assert!(matches!(graph_geometry(&chart, &u), Err(Error::StepFailure(_))));
    }
}
