//! Closed-form geometry of the equidistant foliation `{S(r)}` around a
//! reference surface with principal curvatures in `(-1, 1)`.
//!
//! The reference surface carries an isothermal metric `e^{2v} I` and a
//! second fundamental form that is diagonal in the isothermal frame,
//! `A = diag(e^{2v} λ₁, e^{2v} λ₂)`. The leaf at signed distance `r` has
//!
//! ```text
//! g(x, r) = e^{2v} [cosh r I + sinh r e^{-2v} A]²
//! A(x, r) = e^{2v} [cosh r I + sinh r e^{-2v} A] [sinh r I + cosh r e^{-2v} A]
//! μ_j     = (tanh r + λ_j) / (1 + λ_j tanh r)
//! ```

use crate::error::{Error, Result};
use crate::grid::{Field, Grid};
use crate::tensor::{Mat2, TensorField};

/// Inputs must satisfy `|λ| <= CURVATURE_GUARD`.
pub const CURVATURE_GUARD: f64 = 1.0 - 1e-6;

/// Tolerance on `|∫(λ₁+λ₂) e^{2v} dx| / ∫ e^{2v} dx` for the zero-average
/// normalization.
pub const ZERO_TRACE_TOL: f64 = 1e-10;

/// The reference surface `S`: conformal factor and principal curvatures on a
/// periodic grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceSurfaceData {
    pub grid: Grid,
    pub v: Field,
    pub lam1: Field,
    pub lam2: Field,
}

impl ReferenceSurfaceData {
    pub fn new(grid: Grid, v: Field, lam1: Field, lam2: Field) -> Result<Self> {
        let data = ReferenceSurfaceData {
            grid,
            v,
            lam1,
            lam2,
        };
        data.validate()?;
        Ok(data)
    }

    /// Flat reference surface with vanishing second fundamental form.
    pub fn fuchsian(grid: Grid) -> Self {
        ReferenceSurfaceData {
            grid,
            v: grid.zeros(),
            lam1: grid.zeros(),
            lam2: grid.zeros(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        Grid::new(self.grid.nx, self.grid.ny, self.grid.lx, self.grid.ly)?;
        self.grid.check_shape(&self.v, "v")?;
        self.grid.check_shape(&self.lam1, "lam1")?;
        self.grid.check_shape(&self.lam2, "lam2")?;
        for (name, f) in [("v", &self.v), ("lam1", &self.lam1), ("lam2", &self.lam2)] {
            if let Some(bad) = f.iter().find(|x| !x.is_finite()) {
                return Err(Error::InvalidData(format!("non-finite value {bad} in {name}")));
            }
        }
        let alpha = self.max_abs_curvature();
        if alpha > CURVATURE_GUARD {
            return Err(Error::InvalidData(format!(
                "max |lambda| = {alpha} violates the small-curvature condition"
            )));
        }
        Ok(())
    }

    pub fn max_abs_curvature(&self) -> f64 {
        self.lam1
            .iter()
            .chain(self.lam2.iter())
            .fold(0.0_f64, |m, l| m.max(l.abs()))
    }

    /// `e^{2v}` at every node.
    pub fn conformal(&self) -> Field {
        self.v.mapv(|v| (2.0 * v).exp())
    }

    /// `∫(λ₁+λ₂) e^{2v} dx`, the total mean curvature of `S`.
    pub fn total_mean_curvature(&self) -> f64 {
        let e = self.conformal();
        let trace = &self.lam1 + &self.lam2;
        self.grid.integrate_product(&trace, &e)
    }

    /// Average mean curvature `h₀` and average extrinsic curvature `κ₀` of `S`.
    pub fn curvature_averages(&self) -> (f64, f64) {
        let e = self.conformal();
        let area = self.grid.integrate(&e);
        let trace = &self.lam1 + &self.lam2;
        let det = &self.lam1 * &self.lam2;
        (
            self.grid.integrate_product(&trace, &e) / area,
            self.grid.integrate_product(&det, &e) / area,
        )
    }

    pub(crate) fn point(&self, iy: usize, ix: usize) -> (f64, f64, f64) {
        (self.v[[iy, ix]], self.lam1[[iy, ix]], self.lam2[[iy, ix]])
    }
}

/// `α = max |λ_j|` and `β = artanh α`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SmallCurvatureConstants {
    pub alpha: f64,
    pub beta: f64,
}

impl SmallCurvatureConstants {
    /// Lower and upper bound `2 tanh(r ∓ β)` on the limiting constant
    /// mean curvature of the flow started at the leaf `S(r)`.
    pub fn cmc_bounds(&self, r: f64) -> (f64, f64) {
        (2.0 * (r - self.beta).tanh(), 2.0 * (r + self.beta).tanh())
    }

    /// Height band `[r - 2β, r + 2β]`.
    pub fn height_band(&self, r: f64) -> (f64, f64) {
        (r - 2.0 * self.beta, r + 2.0 * self.beta)
    }
}

/// Full geometry of one leaf `S(r)`.
#[derive(Debug, Clone)]
pub struct LeafGeometry {
    pub r: f64,
    pub g: TensorField,
    pub a2ff: TensorField,
    pub mu1: Field,
    pub mu2: Field,
    pub hmean: Field,
    pub area_element: Field,
}

fn check_lambda(l: f64) -> Result<()> {
    if !(l.abs() <= CURVATURE_GUARD) {
        return Err(Error::Domain {
            value: l,
            limit: CURVATURE_GUARD,
        });
    }
    Ok(())
}

/// `e^{-2v} A` in the isothermal frame; with diagonal storage this is
/// `diag(λ₁, λ₂)`.
fn reduced_shape(v: f64, lam1: f64, lam2: f64) -> Mat2 {
    let e = (2.0 * v).exp();
    let a = Mat2::diag(e * lam1, e * lam2);
    a.scale((-2.0 * v).exp())
}

/// Induced metric of `S(r)` at one point.
pub fn leaf_metric_at(v: f64, lam1: f64, lam2: f64, r: f64) -> Mat2 {
    let (s, c) = (r.sinh(), r.cosh());
    let b = Mat2::IDENTITY.scale(c) + reduced_shape(v, lam1, lam2).scale(s);
    (b * b).scale((2.0 * v).exp())
}

/// Second fundamental form of `S(r)` at one point.
pub fn leaf_second_fundamental_at(v: f64, lam1: f64, lam2: f64, r: f64) -> Mat2 {
    let (s, c) = (r.sinh(), r.cosh());
    let red = reduced_shape(v, lam1, lam2);
    let b = Mat2::IDENTITY.scale(c) + red.scale(s);
    let d = Mat2::IDENTITY.scale(s) + red.scale(c);
    (b * d).scale((2.0 * v).exp())
}

/// Area element of `S(r)` relative to `dx`:
/// `e^{2v}(cosh²r + (λ₁+λ₂) sinh r cosh r + λ₁λ₂ sinh²r)`.
pub fn leaf_area_element_at(v: f64, lam1: f64, lam2: f64, r: f64) -> f64 {
    let (s, c) = (r.sinh(), r.cosh());
    (2.0 * v).exp() * (c * c + (lam1 + lam2) * s * c + lam1 * lam2 * s * s)
}

pub fn parallel_metric(data: &ReferenceSurfaceData, r: f64) -> TensorField {
    TensorField::from_fn(&data.grid, |iy, ix| {
        let (v, l1, l2) = data.point(iy, ix);
        let g = leaf_metric_at(v, l1, l2, r);
        assert!(
            g.det() > 0.0 && g.m[0][0] > 0.0,
            "leaf metric degenerate at ({ix}, {iy}), r = {r}: corrupted reference data"
        );
        g
    })
}

pub fn parallel_second_fundamental(data: &ReferenceSurfaceData, r: f64) -> TensorField {
    TensorField::from_fn(&data.grid, |iy, ix| {
        let (v, l1, l2) = data.point(iy, ix);
        leaf_second_fundamental_at(v, l1, l2, r)
    })
}

/// Principal curvature of a leaf from one principal curvature of `S`.
fn shifted_curvature(lam: f64, t: f64) -> f64 {
    (t + lam) / (1.0 + lam * t)
}

/// Principal curvatures `μ₁, μ₂` of `S(r)` over a point with principal
/// curvatures `λ₁, λ₂` on `S`.
pub fn principal_curvatures(lam1: f64, lam2: f64, r: f64) -> Result<(f64, f64)> {
    check_lambda(lam1)?;
    check_lambda(lam2)?;
    let t = r.tanh();
    Ok((shifted_curvature(lam1, t), shifted_curvature(lam2, t)))
}

/// Mean curvature `H(x, r)` of the leaf as the single rational expression in
/// `tanh r`, `λ₁+λ₂` and `λ₁λ₂`.
pub fn mean_curvature_parallel(lam1: f64, lam2: f64, r: f64) -> Result<f64> {
    check_lambda(lam1)?;
    check_lambda(lam2)?;
    let t = r.tanh();
    let (tr, det) = (lam1 + lam2, lam1 * lam2);
    Ok((2.0 * (1.0 + det) * t + tr * (1.0 + t * t)) / (1.0 + tr * t + det * t * t))
}

pub fn leaf_geometry(data: &ReferenceSurfaceData, r: f64) -> Result<LeafGeometry> {
    data.validate()?;
    let grid = &data.grid;
    let mut mu1 = grid.zeros();
    let mut mu2 = grid.zeros();
    let mut hmean = grid.zeros();
    let mut area_element = grid.zeros();
    for iy in 0..grid.ny {
        for ix in 0..grid.nx {
            let (v, l1, l2) = data.point(iy, ix);
            let (m1, m2) = principal_curvatures(l1, l2, r)?;
            mu1[[iy, ix]] = m1;
            mu2[[iy, ix]] = m2;
            hmean[[iy, ix]] = m1 + m2;
            area_element[[iy, ix]] = leaf_area_element_at(v, l1, l2, r);
        }
    }
    Ok(LeafGeometry {
        r,
        g: parallel_metric(data, r),
        a2ff: parallel_second_fundamental(data, r),
        mu1,
        mu2,
        hmean,
        area_element,
    })
}

/// `|S(r)|` by the trapezoid rule.
pub fn leaf_area(data: &ReferenceSurfaceData, r: f64) -> f64 {
    let grid = &data.grid;
    let mut sum = 0.0;
    for iy in 0..grid.ny {
        for ix in 0..grid.nx {
            let (v, l1, l2) = data.point(iy, ix);
            sum += leaf_area_element_at(v, l1, l2, r);
        }
    }
    sum * grid.cell_area()
}

/// `d|S(r)|/dr = 2 sinh r cosh r ∫(1 + λ₁λ₂) dμ`, valid when `S` has zero
/// average mean curvature.
pub fn leaf_area_derivative(data: &ReferenceSurfaceData, r: f64) -> Result<f64> {
    let e = data.conformal();
    let area = data.grid.integrate(&e);
    let total = data.total_mean_curvature();
    if total.abs() > ZERO_TRACE_TOL * area {
        return Err(Error::Precondition(format!(
            "reference surface must have zero average mean curvature, ∫H dμ = {total:e}"
        )));
    }
    let one_plus_det = (&data.lam1 * &data.lam2).mapv(|k| 1.0 + k);
    Ok(2.0 * r.sinh() * r.cosh() * data.grid.integrate_product(&one_plus_det, &e))
}

/// Average mean curvature of `S(r)` as the direct ratio `∫H dμ(r) / |S(r)|`.
pub fn average_mean_curvature_leaf(data: &ReferenceSurfaceData, r: f64) -> Result<f64> {
    let grid = &data.grid;
    let (mut num, mut den) = (0.0, 0.0);
    for iy in 0..grid.ny {
        for ix in 0..grid.nx {
            let (v, l1, l2) = data.point(iy, ix);
            let (m1, m2) = principal_curvatures(l1, l2, r)?;
            let w = leaf_area_element_at(v, l1, l2, r);
            num += (m1 + m2) * w;
            den += w;
        }
    }
    Ok(num / den)
}

/// Mean curvature formula evaluated on the averages `h₀`, `κ₀` of `S`. Exact
/// only when `λ₁+λ₂` and `λ₁λ₂` are spatially constant; compare with
/// [`average_mean_curvature_leaf`] otherwise.
pub fn paper_average_formula(h0: f64, kappa0: f64, r: f64) -> Result<f64> {
    let t = r.tanh();
    let den = 1.0 + h0 * t + kappa0 * t * t;
    if !(den > 1e-12) {
        return Err(Error::SingularDenominator { value: den });
    }
    Ok((2.0 * (1.0 + kappa0) * t + h0 * (1.0 + t * t)) / den)
}

pub fn small_curvature_constants(data: &ReferenceSurfaceData) -> Result<SmallCurvatureConstants> {
    let alpha = data.max_abs_curvature();
    constants_from_alpha(alpha)
}

pub fn constants_from_alpha(alpha: f64) -> Result<SmallCurvatureConstants> {
    if !(0.0..=CURVATURE_GUARD).contains(&alpha) {
        return Err(Error::InvalidData(format!(
            "alpha = {alpha} outside [0, {CURVATURE_GUARD}]"
        )));
    }
    let beta = 0.5 * ((1.0 + alpha) / (1.0 - alpha)).ln();
    Ok(SmallCurvatureConstants { alpha, beta })
}

#[derive(Debug, Clone, PartialEq)]
pub struct NonsingularityReport {
    /// Minimum over samples and grid of `1 + (λ₁+λ₂) tanh r + λ₁λ₂ tanh² r`.
    pub min_value: f64,
    pub r_at_min: f64,
    pub all_positive: bool,
}

pub fn foliation_nonsingularity(data: &ReferenceSurfaceData, r_samples: &[f64]) -> NonsingularityReport {
    let mut min_value = f64::INFINITY;
    let mut r_at_min = f64::NAN;
    for &r in r_samples {
        let t = r.tanh();
        for (l1, l2) in data.lam1.iter().zip(data.lam2.iter()) {
            let q = 1.0 + (l1 + l2) * t + l1 * l2 * t * t;
            if q < min_value {
                min_value = q;
                r_at_min = r;
            }
        }
    }
    NonsingularityReport {
        min_value,
        r_at_min,
        all_positive: min_value > 0.0,
    }
}
