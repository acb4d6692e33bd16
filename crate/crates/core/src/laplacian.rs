//! Laplace–Beltrami operator of a graph surface's induced metric, and the
//! conjugate-gradient machinery shared by the stability solver and the
//! semi-implicit time stepper.
//!
//! The operator is discretized in divergence form,
//! `Δφ = (1/√G) ∂_i(√G G^{ij} ∂_j φ)`, with fourth-order staggered fluxes
//! for the `∂_x(a ∂_x)` and `∂_y(c ∂_y)` parts and fourth-order centered
//! differences for the mixed part. `√G Δ` is a symmetric matrix, so the
//! operator is self-adjoint in the `dμ`-weighted inner product and its only
//! null vectors are constants.

use std::sync::Arc;

use ndarray::Array2;
use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::grid::{Field, Grid, Neighbours};
use crate::graph::GraphSurface;

#[derive(Debug, Clone)]
pub struct LaplaceBeltrami {
    grid: Grid,
    nb: Neighbours,
    /// Area element `√G` at nodes.
    weight: Field,
    /// `√G G^{11}` at x-faces `i + ½` (stored at `i`).
    a_face: Field,
    /// `√G G^{22}` at y-faces `j + ½` (stored at `j`).
    c_face: Field,
    /// `√G G^{12}` at nodes.
    b_node: Field,
}

fn interp_face(f: [f64; 4]) -> f64 {
    (-f[0] + 9.0 * f[1] + 9.0 * f[2] - f[3]) / 16.0
}

impl LaplaceBeltrami {
    pub fn new(surface: &GraphSurface) -> Self {
        let grid = surface.grid;
        let mut a = grid.zeros();
        let mut b = grid.zeros();
        let mut c = grid.zeros();
        for iy in 0..grid.ny {
            for ix in 0..grid.nx {
                let w = surface.area_element[[iy, ix]];
                let inv = surface.inverse_metric(iy, ix);
                a[[iy, ix]] = w * inv.m[0][0];
                b[[iy, ix]] = w * inv.m[0][1];
                c[[iy, ix]] = w * inv.m[1][1];
            }
        }
        Self::from_coefficients(grid, surface.area_element.clone(), &a, b, &c)
    }

    /// Operator with node coefficients `a = √G G^{11}`, `b = √G G^{12}`,
    /// `c = √G G^{22}` and area element `weight`.
    pub fn from_coefficients(grid: Grid, weight: Field, a: &Field, b: Field, c: &Field) -> Self {
        let nb = grid.neighbours();
        let a_face = Array2::from_shape_fn((grid.ny, grid.nx), |(iy, ix)| {
            interp_face([a[[iy, nb.xm[ix]]], a[[iy, ix]], a[[iy, nb.xp[ix]]], a[[iy, nb.xpp[ix]]]])
        });
        let c_face = Array2::from_shape_fn((grid.ny, grid.nx), |(iy, ix)| {
            interp_face([c[[nb.ym[iy], ix]], c[[iy, ix]], c[[nb.yp[iy], ix]], c[[nb.ypp[iy], ix]]])
        });
        LaplaceBeltrami {
            grid,
            nb,
            weight,
            a_face,
            c_face,
            b_node: b,
        }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn weight(&self) -> &Field {
        &self.weight
    }

    /// `√G Δφ`, the symmetric form of the operator.
    pub fn apply_weighted(&self, phi: &Field) -> Field {
        let g = &self.grid;
        let nb = &self.nb;
        let (ny, nx) = (g.ny, g.nx);
        let sx = 1.0 / (24.0 * g.dx());
        let sy = 1.0 / (24.0 * g.dy());
        let cx = 1.0 / (12.0 * g.dx());
        let cy = 1.0 / (12.0 * g.dy());

        // staggered fluxes
        let mut fx = Array2::zeros((ny, nx));
        let mut fy = Array2::zeros((ny, nx));
        let mut dxphi = Array2::zeros((ny, nx));
        let mut dyphi = Array2::zeros((ny, nx));
        for iy in 0..ny {
            let (ym, yp, ypp, ymm) = (nb.ym[iy], nb.yp[iy], nb.ypp[iy], nb.ymm[iy]);
            for ix in 0..nx {
                let (xm, xp, xpp, xmm) = (nb.xm[ix], nb.xp[ix], nb.xpp[ix], nb.xmm[ix]);
                let p = phi[[iy, ix]];
                fx[[iy, ix]] = self.a_face[[iy, ix]]
                    * (phi[[iy, xm]] - 27.0 * p + 27.0 * phi[[iy, xp]] - phi[[iy, xpp]])
                    * sx;
                fy[[iy, ix]] = self.c_face[[iy, ix]]
                    * (phi[[ym, ix]] - 27.0 * p + 27.0 * phi[[yp, ix]] - phi[[ypp, ix]])
                    * sy;
                let b = self.b_node[[iy, ix]];
                dxphi[[iy, ix]] = b * (phi[[iy, xmm]] - 8.0 * phi[[iy, xm]] + 8.0 * phi[[iy, xp]] - phi[[iy, xpp]]) * cx;
                dyphi[[iy, ix]] = b * (phi[[ymm, ix]] - 8.0 * phi[[ym, ix]] + 8.0 * phi[[yp, ix]] - phi[[ypp, ix]]) * cy;
            }
        }
        let mut out = Array2::zeros((ny, nx));
        for iy in 0..ny {
            let (ym, yp, ymm) = (nb.ym[iy], nb.yp[iy], nb.ymm[iy]);
            let ypp = nb.ypp[iy];
            for ix in 0..nx {
                let (xm, xp, xmm, xpp) = (nb.xm[ix], nb.xp[ix], nb.xmm[ix], nb.xpp[ix]);
                let div_x = (fx[[iy, xmm]] - 27.0 * fx[[iy, xm]] + 27.0 * fx[[iy, ix]] - fx[[iy, xp]]) * sx;
                let div_y = (fy[[ymm, ix]] - 27.0 * fy[[ym, ix]] + 27.0 * fy[[iy, ix]] - fy[[yp, ix]]) * sy;
                // ∂_x(b ∂_y φ) + ∂_y(b ∂_x φ)
                let cross = (dyphi[[iy, xmm]] - 8.0 * dyphi[[iy, xm]] + 8.0 * dyphi[[iy, xp]] - dyphi[[iy, xpp]]) * cx
                    + (dxphi[[ymm, ix]] - 8.0 * dxphi[[ym, ix]] + 8.0 * dxphi[[yp, ix]] - dxphi[[ypp, ix]]) * cy;
                out[[iy, ix]] = div_x + div_y + cross;
            }
        }
        out
    }

    /// `Δφ` on the surface.
    pub fn apply(&self, phi: &Field) -> Field {
        self.apply_weighted(phi) / &self.weight
    }

    /// Diagonal of `−√G Δ` (the mixed part contributes nothing).
    pub fn weighted_diagonal(&self) -> Field {
        let g = &self.grid;
        let nb = &self.nb;
        let (sx2, sy2) = (1.0 / (576.0 * g.dx() * g.dx()), 1.0 / (576.0 * g.dy() * g.dy()));
        Array2::from_shape_fn((g.ny, g.nx), |(iy, ix)| {
            let a = &self.a_face;
            let c = &self.c_face;
            (a[[iy, nb.xmm[ix]]] + 729.0 * a[[iy, nb.xm[ix]]] + 729.0 * a[[iy, ix]] + a[[iy, nb.xp[ix]]]) * sx2
                + (c[[nb.ymm[iy], ix]] + 729.0 * c[[nb.ym[iy], ix]] + 729.0 * c[[iy, ix]] + c[[nb.yp[iy], ix]]) * sy2
        })
    }

    /// Mean face coefficients `(ā, c̄)` and mean weight, for building a
    /// constant-coefficient preconditioner.
    pub(crate) fn mean_coefficients(&self) -> (f64, f64, f64) {
        let n = self.grid.len() as f64;
        (self.a_face.sum() / n, self.c_face.sum() / n, self.weight.sum() / n)
    }
}

/// Symbol of `−D_s^T D_s` for the fourth-order staggered derivative on a
/// periodic grid with `n` points and spacing `h`, at integer wavenumber `k`.
pub(crate) fn staggered_symbol(k: usize, n: usize, h: f64) -> f64 {
    let theta = 2.0 * std::f64::consts::PI * k as f64 / n as f64;
    let s = (54.0 * (0.5 * theta).sin() - 2.0 * (1.5 * theta).sin()) / (24.0 * h);
    s * s
}

/// Exact inverse of `ā S_x + c̄ S_y + m` on the periodic grid via FFT, where
/// `S_x, S_y` are the constant-coefficient staggered second-difference
/// operators.
pub(crate) struct SpectralSolver {
    nx: usize,
    ny: usize,
    symbol: Array2<f64>,
    fwd_x: Arc<dyn Fft<f64>>,
    inv_x: Arc<dyn Fft<f64>>,
    fwd_y: Arc<dyn Fft<f64>>,
    inv_y: Arc<dyn Fft<f64>>,
}

impl SpectralSolver {
    pub fn new(grid: &Grid, a: f64, c: f64, mass: f64) -> Self {
        let mut planner = FftPlanner::new();
        let symbol = Array2::from_shape_fn((grid.ny, grid.nx), |(ky, kx)| {
            a * staggered_symbol(kx, grid.nx, grid.dx()) + c * staggered_symbol(ky, grid.ny, grid.dy()) + mass
        });
        SpectralSolver {
            nx: grid.nx,
            ny: grid.ny,
            symbol,
            fwd_x: planner.plan_fft_forward(grid.nx),
            inv_x: planner.plan_fft_inverse(grid.nx),
            fwd_y: planner.plan_fft_forward(grid.ny),
            inv_y: planner.plan_fft_inverse(grid.ny),
        }
    }

    pub fn solve(&self, rhs: &Field) -> Field {
        let (nx, ny) = (self.nx, self.ny);
        let mut buf: Vec<Complex64> = rhs.iter().map(|&x| Complex64::new(x, 0.0)).collect();
        for row in buf.chunks_mut(nx) {
            self.fwd_x.process(row);
        }
        let mut col = vec![Complex64::new(0.0, 0.0); ny];
        for ix in 0..nx {
            for iy in 0..ny {
                col[iy] = buf[iy * nx + ix];
            }
            self.fwd_y.process(&mut col);
            for iy in 0..ny {
                col[iy] /= self.symbol[[iy, ix]];
            }
            self.inv_y.process(&mut col);
            for iy in 0..ny {
                buf[iy * nx + ix] = col[iy];
            }
        }
        for row in buf.chunks_mut(nx) {
            self.inv_x.process(row);
        }
        let scale = 1.0 / (nx * ny) as f64;
        Array2::from_shape_vec((ny, nx), buf.into_iter().map(|z| z.re * scale).collect()).expect("shape")
    }
}

/// Outcome of a conjugate-gradient solve.
#[derive(Debug, Clone, Copy)]
pub struct CgStats {
    pub iterations: usize,
    pub relative_residual: f64,
}

/// Preconditioned conjugate gradients for `A x = b` with `A` self-adjoint and
/// positive definite in the inner product `dot`. `project` maps onto the
/// subspace the solve is restricted to (identity for unconstrained solves).
pub(crate) fn pcg(
    apply: impl Fn(&Field) -> Field,
    precondition: impl Fn(&Field) -> Field,
    dot: impl Fn(&Field, &Field) -> f64,
    project: impl Fn(&Field) -> Field,
    b: &Field,
    x0: Field,
    rel_tol: f64,
    max_iter: usize,
) -> (Field, CgStats) {
    let mut x = project(&x0);
    let mut r = b - &apply(&x);
    r = project(&r);
    let b_norm = dot(b, b).sqrt().max(f64::MIN_POSITIVE);
    let mut z = project(&precondition(&r));
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut res = dot(&r, &r).sqrt() / b_norm;
    let mut it = 0;
    while it < max_iter && res > rel_tol {
        let ap = project(&apply(&p));
        let alpha = rz / dot(&p, &ap);
        x.scaled_add(alpha, &p);
        r.scaled_add(-alpha, &ap);
        res = dot(&r, &r).sqrt() / b_norm;
        it += 1;
        if res <= rel_tol {
            break;
        }
        z = project(&precondition(&r));
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        p = &z + &(beta * &p);
    }
    (
        x,
        CgStats {
            iterations: it,
            relative_residual: res,
        },
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chart::build_chart;
    use crate::datagen::{generate, GeneratorSpec};
    use crate::foliation::ReferenceSurfaceData;
    use crate::graph::graph_geometry;
    use crate::grid::max_abs;
    use std::f64::consts::PI;

    fn flat(n: usize) -> GraphSurface {
        let chart = build_chart(&ReferenceSurfaceData::fuchsian(Grid::square_2pi(n).unwrap())).unwrap();
        graph_geometry(&chart, &chart.grid().zeros()).unwrap()
    }

    #[test]
    fn flat_fourier_modes_fourth_order() {
        let errs: Vec<f64> = [32, 64]
            .iter()
            .map(|&n| {
                let s = flat(n);
                let lb = LaplaceBeltrami::new(&s);
                let phi = s.grid.sample(|x, y| (2.0 * x).sin() * y.cos());
                let lap = lb.apply(&phi);
                max_abs(&(&lap + &(5.0 * &phi)))
            })
            .collect();
        let order = (errs[0] / errs[1]).log2();
        assert!((3.8..4.3).contains(&order), "{errs:?}");
    }

    #[test]
    fn constants_are_harmonic() {
        let data = generate(&GeneratorSpec::fourier_bump(0.6, 4), 32, 32, 2.0 * PI, 2.0 * PI).unwrap();
        let chart = build_chart(&data).unwrap();
        let u = chart.grid().sample(|x, y| 0.5 + 0.2 * (x + y).sin());
        let s = graph_geometry(&chart, &u).unwrap();
        let lb = LaplaceBeltrami::new(&s);
        assert!(max_abs(&lb.apply(&s.grid.constant(2.0))) < 1e-12);
    }

    #[test]
    fn nyquist_mode_is_not_null() {
        let s = flat(16);
        let lb = LaplaceBeltrami::new(&s);
        let phi = s.grid.sample(|x, _| (8.0 * x).cos());
        let lap = lb.apply(&phi);
        let ratio = lap[[0, 0]] / phi[[0, 0]];
        let expected = -staggered_symbol(8, 16, s.grid.dx());
        assert!((ratio - expected).abs() < 1e-9 * expected.abs());
        assert!(expected < -10.0);
    }

    #[test]
    fn spectral_solver_inverts_flat_operator() {
        let s = flat(32);
        let lb = LaplaceBeltrami::new(&s);
        let solver = SpectralSolver::new(&s.grid, 1.0, 1.0, 0.7);
        let rhs = s.grid.sample(|x, y| (x.sin() + (3.0 * y).cos()).exp());
        let x = solver.solve(&rhs);
        let back = &(-&lb.apply_weighted(&x)) + &(0.7 * &x);
        assert!(max_abs(&(&back - &rhs)) < 1e-10);
    }

    #[test]
    fn pcg_solves_variable_coefficient_system() {
        let data = generate(&GeneratorSpec::fourier_bump(0.6, 9), 32, 32, 2.0 * PI, 2.0 * PI).unwrap();
        let chart = build_chart(&data).unwrap();
        let u = chart.grid().sample(|x, y| 0.3 + 0.2 * x.sin() * y.cos());
        let s = graph_geometry(&chart, &u).unwrap();
        let lb = LaplaceBeltrami::new(&s);
        let apply = |x: &Field| &(-&lb.apply_weighted(x)) + &(0.5 * x);
        let (a, c, _) = lb.mean_coefficients();
        let pre = SpectralSolver::new(&s.grid, a, c, 0.5);
        let b = s.grid.sample(|x, y| (x - 2.0 * y).cos());
        let dot = |p: &Field, q: &Field| p.iter().zip(q.iter()).map(|(a, b)| a * b).sum::<f64>();
        let (x, stats) = pcg(apply, |r| pre.solve(r), dot, |f| f.clone(), &b, s.grid.zeros(), 1e-10, 500);
        assert!(stats.relative_residual <= 1e-10);
        assert!(stats.iterations < 60, "{stats:?}");
        assert!(max_abs(&(&apply(&x) - &b)) < 1e-8);
    }
}
