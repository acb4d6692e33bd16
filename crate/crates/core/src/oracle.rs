//! Independent reference computations used to check the closed forms and the
//! discretizations.

use crate::foliation::{leaf_metric_at, leaf_second_fundamental_at, ReferenceSurfaceData};
use crate::tensor::Mat2;

/// Roots of `det(A − μ g) = 0` for symmetric `g` (positive definite) and `A`,
/// ascending. Reduces to `L⁻¹ A L⁻ᵀ` with `g = L Lᵀ` and takes the symmetric
/// eigenvalues as center ± radius, which stays accurate for nearly equal roots.
pub fn generalized_eigenvalues(g: &Mat2, a: &Mat2) -> (f64, f64) {
    let l11 = g.m[0][0].sqrt();
    let l21 = g.m[1][0] / l11;
    let l22 = (g.m[1][1] - l21 * l21).sqrt();
    // C = L⁻¹ A L⁻ᵀ, symmetrized
    let a12 = 0.5 * (a.m[0][1] + a.m[1][0]);
    let c11 = a.m[0][0] / (l11 * l11);
    let c12 = (a12 - l21 * c11 * l11) / (l11 * l22);
    let c22 = (a.m[1][1] - 2.0 * l21 * a12 / l11 + l21 * l21 * c11) / (l22 * l22);
    let center = 0.5 * (c11 + c22);
    let radius = (0.5 * (c11 - c22)).hypot(c12);
    (center - radius, center + radius)
}

/// Principal curvatures of the leaf through `(v, λ₁, λ₂)` at height `r`,
/// computed numerically from the leaf metric and second fundamental form.
pub fn eigen_oracle_point(v: f64, lam1: f64, lam2: f64, r: f64) -> (f64, f64) {
    generalized_eigenvalues(&leaf_metric_at(v, lam1, lam2, r), &leaf_second_fundamental_at(v, lam1, lam2, r))
}

pub fn eigen_oracle(data: &ReferenceSurfaceData, ix: usize, iy: usize, r: f64) -> (f64, f64) {
    let (v, l1, l2) = data.point(iy, ix);
    eigen_oracle_point(v, l1, l2, r)
}

#[derive(Debug, Clone, PartialEq)]
pub enum ConvergenceOrder {
    Estimated(f64),
    /// Errors at rounding level or not monotonically decreasing.
    Indeterminate(String),
}

impl ConvergenceOrder {
    pub fn value(&self) -> Option<f64> {
        match self {
            ConvergenceOrder::Estimated(p) => Some(*p),
            ConvergenceOrder::Indeterminate(_) => None,
        }
    }
}

/// Errors below this are treated as rounding noise.
pub const ROUNDING_FLOOR: f64 = 1e-13;

/// Observed order from errors against a known reference on successively
/// halved grids, `log₂(e_h / e_{h/2})` for the last pair.
pub fn observed_order(errors: &[f64]) -> ConvergenceOrder {
    if errors.len() < 2 {
        return ConvergenceOrder::Indeterminate("need at least two levels".into());
    }
    if errors.iter().any(|e| !e.is_finite()) {
        return ConvergenceOrder::Indeterminate(format!("non-finite error in {errors:?}"));
    }
    if errors.iter().all(|&e| e.abs() < ROUNDING_FLOOR) {
        return ConvergenceOrder::Indeterminate(format!("errors at rounding level: {errors:?}"));
    }
    if errors.windows(2).any(|w| w[1].abs() >= w[0].abs()) {
        return ConvergenceOrder::Indeterminate(format!("non-monotone errors {errors:?}"));
    }
    let n = errors.len();
    ConvergenceOrder::Estimated((errors[n - 2].abs() / errors[n - 1].abs()).log2())
}

/// Richardson-style order from values of a quantity on three or more nested
/// grids: `log₂(|q_h − q_{h/2}| / |q_{h/2} − q_{h/4}|)` for the last triple.
pub fn refinement_oracle(values: &[f64]) -> ConvergenceOrder {
    if values.len() < 3 {
        return ConvergenceOrder::Indeterminate("need at least three levels".into());
    }
    let diffs: Vec<f64> = values.windows(2).map(|w| (w[1] - w[0]).abs()).collect();
    let scale = values.iter().fold(1.0_f64, |m, v| m.max(v.abs()));
    if diffs.iter().all(|&d| d < ROUNDING_FLOOR * scale) {
        return ConvergenceOrder::Indeterminate(format!("differences at rounding level: {diffs:?}"));
    }
    observed_order(&diffs)
}
