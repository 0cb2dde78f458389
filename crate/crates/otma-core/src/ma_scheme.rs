//! Interior discretizations of the Monge-Ampere operator.
//!
//! Two approximations of `det D^2 u` are provided. The monotone one takes the
//! minimum, over the orthogonal direction pairs of a wide stencil, of
//!
//! ```text
//!     max(D_{v1 v1} u, 0) * max(D_{v2 v2} u, 0) + min(D_{v1 v1} u, 0) + min(D_{v2 v2} u, 0),
//! ```
//!
//! which is nonincreasing in the center value and nondecreasing in every
//! neighbor, at the price of first-order (plus angular) accuracy. The accurate
//! one is the standard nine-point `D_xx u * D_yy u - (D_xy u)^2`, second-order
//! but not monotone. A filtered combination follows the accurate value
//! wherever the two agree to within a radius `r` and falls back to the
//! monotone value where they disagree, keeping the global stability of the
//! monotone scheme without giving up second-order consistency in smooth
//! regions.
//!
//! The full interior residual also carries the density ratio evaluated at the
//! centered gradient, a small elliptic regularization `delta * (D_xx + D_yy)`,
//! and the additive gauge pin `- u(x0)` that selects one solution of the
//! otherwise shift-invariant problem.

use crate::error::Result;
use crate::grid::{
    centered_first_difference, cross_difference, second_difference, Grid, GridFunction,
    StencilPair, StencilSet,
};
use crate::Vec2;

/// Scheme selection and tuning knobs shared by the interior discretization.
#[derive(Debug, Clone, Copy)]
pub struct SchemeParams {
    /// Requested weight of the elliptic regularization term. The solver may
    /// raise it to the stability threshold dictated by the density ratio's
    /// gradient dependence.
    pub delta: f64,
    /// Filter radius constant: the monotone fallback engages once the two
    /// discretizations disagree by more than `filter_c * (h + dtheta)`.
    pub filter_c: f64,
    /// When false, the accurate scheme and the filter are disabled and the
    /// monotone value is used everywhere.
    pub use_filter: bool,
}

impl Default for SchemeParams {
    fn default() -> Self {
        SchemeParams {
            delta: 0.0,
            filter_c: 10.0,
            use_filter: true,
        }
    }
}

impl SchemeParams {
    /// Filter radius for a given grid spacing and angular resolution.
    pub fn filter_radius(&self, h: f64, dtheta: f64) -> f64 {
        self.filter_c * (h + dtheta)
    }
}

/// Centered gradient approximation at an interior node.
pub fn centered_gradient(u: &GridFunction, grid: &Grid, node: (usize, usize)) -> Vec2 {
    Vec2::new(
        centered_first_difference(u, grid, node, 0),
        centered_first_difference(u, grid, node, 1),
    )
}

/// Monotone determinant contribution of a single orthogonal pair.
pub fn pair_det(u: &GridFunction, grid: &Grid, node: (usize, usize), pair: &StencilPair) -> f64 {
    let d1 = second_difference(u, grid, node, pair.first);
    let d2 = second_difference(u, grid, node, pair.second);
    d1.max(0.0) * d2.max(0.0) + d1.min(0.0) + d2.min(0.0)
}

/// Minimum of [`pair_det`] over the stencil, with the index of the minimizing
/// pair (used to freeze the active branch while assembling the Jacobian).
pub fn monotone_det(
    u: &GridFunction,
    grid: &Grid,
    node: (usize, usize),
    stencil: &StencilSet,
) -> (f64, usize) {
    debug_assert!(!stencil.pairs().is_empty());
    let mut best = f64::INFINITY;
    let mut arg = 0;
    for (k, pair) in stencil.pairs().iter().enumerate() {
        let g = pair_det(u, grid, node, pair);
        if g < best {
            best = g;
            arg = k;
        }
    }
    (best, arg)
}

/// Nine-point determinant `D_xx u * D_yy u - (D_xy u)^2`.
pub fn accurate_det(u: &GridFunction, grid: &Grid, node: (usize, usize)) -> f64 {
    let dxx = second_difference(u, grid, node, (1, 0));
    let dyy = second_difference(u, grid, node, (0, 1));
    let dxy = cross_difference(u, grid, node);
    dxx * dyy - dxy * dxy
}

/// Full monotone interior residual: determinant minimum, density ratio at the
/// centered gradient, regularization, and gauge pin. Returns the value and
/// the minimizing pair index.
pub fn monotone_ma<F>(
    u: &GridFunction,
    grid: &Grid,
    node: (usize, usize),
    stencil: &StencilSet,
    ratio: F,
    delta: f64,
    pin_value: f64,
) -> Result<(f64, usize)>
where
    F: FnOnce(Vec2) -> Result<f64>,
{
    let (det, arg) = monotone_det(u, grid, node, stencil);
    let rho = ratio(centered_gradient(u, grid, node))?;
    let lap =
        second_difference(u, grid, node, (1, 0)) + second_difference(u, grid, node, (0, 1));
    Ok((det - rho + delta * lap - pin_value, arg))
}

/// Full accurate interior residual (no regularization term; stabilization is
/// the filter's job).
pub fn accurate_ma<F>(
    u: &GridFunction,
    grid: &Grid,
    node: (usize, usize),
    ratio: F,
    pin_value: f64,
) -> Result<f64>
where
    F: FnOnce(Vec2) -> Result<f64>,
{
    let det = accurate_det(u, grid, node);
    let rho = ratio(centered_gradient(u, grid, node))?;
    Ok(det - rho - pin_value)
}

/// Filter transition: identity on `[-1, 1]`, linear return to zero on
/// `1 <= |s| <= 2`, zero beyond.
pub fn filter_s(s: f64) -> f64 {
    let a = s.abs();
    if a <= 1.0 {
        s
    } else if a >= 2.0 {
        0.0
    } else {
        s.signum() * (2.0 - a)
    }
}

/// Almost-everywhere derivative of [`filter_s`] (1, -1, or 0).
pub fn filter_s_deriv(s: f64) -> f64 {
    let a = s.abs();
    if a <= 1.0 {
        1.0
    } else if a < 2.0 {
        -1.0
    } else {
        0.0
    }
}

/// Blend of the two discretizations: equals `ma_s` when the schemes agree to
/// within `r`, equals `ma_m` when they disagree by `2r` or more, and
/// interpolates continuously in between.
pub fn filtered_ma(ma_m: f64, ma_s: f64, r: f64) -> f64 {
    debug_assert!(r > 0.0);
    ma_m + r * filter_s((ma_s - ma_m) / r)
}

/// Smoothed positive part `(a + sqrt(a^2 + eps^2)) / 2`, used only while
/// assembling Jacobians so Newton sees differentiable branch weights.
pub fn smooth_max(a: f64, eps: f64) -> f64 {
    0.5 * (a + (a * a + eps * eps).sqrt())
}

/// Derivative of [`smooth_max`] with respect to `a`.
pub fn smooth_max_deriv(a: f64, eps: f64) -> f64 {
    0.5 * (1.0 + a / (a * a + eps * eps).sqrt())
}

/// Derivative of the smoothed negative part `(a - sqrt(a^2 + eps^2)) / 2`.
pub fn smooth_min_deriv(a: f64, eps: f64) -> f64 {
    0.5 * (1.0 - a / (a * a + eps * eps).sqrt())
}

/// Sparse derivative row of a node-local operator: offsets relative to the
/// node paired with coefficients. Offsets may repeat; callers accumulate.
pub type LocalRow = Vec<((i64, i64), f64)>;

/// Derivative of the (smoothed) [`pair_det`] with respect to the grid values
/// it touches. `eps` controls the smoothing of the max/min branch weights.
pub fn pair_det_jacobian(
    u: &GridFunction,
    grid: &Grid,
    node: (usize, usize),
    pair: &StencilPair,
    eps: f64,
) -> LocalRow {
    let d1 = second_difference(u, grid, node, pair.first);
    let d2 = second_difference(u, grid, node, pair.second);
    // dG/dD1 and dG/dD2 for G = smax(D1) smax(D2) + smin(D1) + smin(D2).
    let m1 = smooth_max_deriv(d1, eps) * smooth_max(d2, eps) + smooth_min_deriv(d1, eps);
    let m2 = smooth_max(d1, eps) * smooth_max_deriv(d2, eps) + smooth_min_deriv(d2, eps);
    let mut row = LocalRow::with_capacity(5);
    for (dir, m) in [(pair.first, m1), (pair.second, m2)] {
        let w = 1.0 / ((dir.0 * dir.0 + dir.1 * dir.1) as f64 * grid.h() * grid.h());
        row.push((((dir.0) as i64, (dir.1) as i64), m * w));
        row.push((((-dir.0) as i64, (-dir.1) as i64), m * w));
        row.push(((0, 0), -2.0 * m * w));
    }
    row
}

/// Derivative row of [`accurate_det`].
pub fn accurate_det_jacobian(u: &GridFunction, grid: &Grid, node: (usize, usize)) -> LocalRow {
    let dxx = second_difference(u, grid, node, (1, 0));
    let dyy = second_difference(u, grid, node, (0, 1));
    let dxy = cross_difference(u, grid, node);
    let h2 = grid.h() * grid.h();
    let mut row = LocalRow::with_capacity(9);
    // d(det)/d(dxx) = dyy through the x-axis second difference.
    row.push(((1, 0), dyy / h2));
    row.push(((-1, 0), dyy / h2));
    row.push(((0, 0), -2.0 * dyy / h2));
    // d(det)/d(dyy) = dxx.
    row.push(((0, 1), dxx / h2));
    row.push(((0, -1), dxx / h2));
    row.push(((0, 0), -2.0 * dxx / h2));
    // d(det)/d(dxy) = -2 dxy through the four-point cross difference.
    let c = -2.0 * dxy / (4.0 * h2);
    row.push(((1, 1), c));
    row.push(((-1, -1), c));
    row.push(((1, -1), -c));
    row.push(((-1, 1), -c));
    row
}

/// Derivative row of the `delta`-weighted regularization Laplacian.
pub fn laplacian_jacobian(grid: &Grid, delta: f64) -> LocalRow {
    let w = delta / (grid.h() * grid.h());
    vec![
        ((1, 0), w),
        ((-1, 0), w),
        ((0, 1), w),
        ((0, -1), w),
        ((0, 0), -4.0 * w),
    ]
}
