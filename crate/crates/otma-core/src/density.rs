//! Source and target densities.
//!
//! Densities come in two flavors: analytic catalog entries (uniform on a
//! shape, affine, truncated Gaussian) and gridded data with bilinear
//! interpolation. Both are normalized to unit total mass by composite
//! trapezoid quadrature on their own sampling grids, rather than symbolically,
//! so that the two discretized masses stay compatible with each other.
//!
//! The discretized Monge-Ampere right-hand side is the ratio
//! `rho_x(x) / rho_y(pi_Y(p))`, where `pi_Y` clamps the gradient argument to
//! the closed target set. Clamping keeps the ratio defined while the Newton
//! iterates still overshoot the target.

use crate::error::{OtmaError, Result};
use crate::target::{closest_point, closest_point_jacobian, signed_distance, ConvexTarget};
use crate::{Mat2, Vec2};

/// Values of the target density below this floor abort the evaluation.
pub const DENSITY_FLOOR: f64 = 1e-10;

/// Support region of an analytic density. Unlike [`ConvexTarget`] this may be
/// non-convex (the two-piece half-disk source is the motivating case).
#[derive(Debug, Clone)]
pub enum SupportShape {
    /// Axis-aligned rectangle `[lo.x, hi.x] x [lo.y, hi.y]`.
    Rect { lo: Vec2, hi: Vec2 },
    /// Image of the closed unit disk under the matrix, centered at the origin.
    Ellipse(Mat2),
    /// Disk with center and radius.
    Circle { center: Vec2, radius: f64 },
    /// Convex polygon, counterclockwise.
    Polygon(Vec<Vec2>),
    /// Two half-disks of common radius, each cut by the vertical line through
    /// its own center: the left piece keeps `x < left_center.x`, the right
    /// piece keeps `x > right_center.x`.
    HalfDiskPair {
        left_center: Vec2,
        right_center: Vec2,
        radius: f64,
    },
}

impl SupportShape {
    /// True when the point lies in the (closed) support.
    pub fn contains(&self, p: Vec2) -> bool {
        match self {
            SupportShape::Rect { lo, hi } => {
                p.x >= lo.x && p.x <= hi.x && p.y >= lo.y && p.y <= hi.y
            }
            SupportShape::Ellipse(m) => match m.try_inverse() {
                Some(inv) => (inv * p).norm() <= 1.0,
                None => false,
            },
            SupportShape::Circle { center, radius } => (p - center).norm() <= *radius,
            SupportShape::Polygon(pts) => {
                let m = pts.len();
                (0..m).all(|k| {
                    let a = pts[k];
                    let b = pts[(k + 1) % m];
                    (b.x - a.x) * (p.y - a.y) - (b.y - a.y) * (p.x - a.x) >= 0.0
                })
            }
            SupportShape::HalfDiskPair {
                left_center,
                right_center,
                radius,
            } => {
                (p.x < left_center.x && (p - left_center).norm() < *radius)
                    || (p.x > right_center.x && (p - right_center).norm() < *radius)
            }
        }
    }

    /// Axis-aligned bounding box of the support.
    pub fn bbox(&self) -> (Vec2, Vec2) {
        match self {
            SupportShape::Rect { lo, hi } => (*lo, *hi),
            SupportShape::Ellipse(m) => {
                let ex = (m[(0, 0)] * m[(0, 0)] + m[(0, 1)] * m[(0, 1)]).sqrt();
                let ey = (m[(1, 0)] * m[(1, 0)] + m[(1, 1)] * m[(1, 1)]).sqrt();
                (Vec2::new(-ex, -ey), Vec2::new(ex, ey))
            }
            SupportShape::Circle { center, radius } => (
                Vec2::new(center.x - radius, center.y - radius),
                Vec2::new(center.x + radius, center.y + radius),
            ),
            SupportShape::Polygon(pts) => {
                let mut lo = Vec2::new(f64::INFINITY, f64::INFINITY);
                let mut hi = Vec2::new(f64::NEG_INFINITY, f64::NEG_INFINITY);
                for p in pts {
                    lo.x = lo.x.min(p.x);
                    lo.y = lo.y.min(p.y);
                    hi.x = hi.x.max(p.x);
                    hi.y = hi.y.max(p.y);
                }
                (lo, hi)
            }
            SupportShape::HalfDiskPair {
                left_center,
                right_center,
                radius,
            } => (
                Vec2::new(
                    left_center.x - radius,
                    left_center.y.min(right_center.y) - radius,
                ),
                Vec2::new(
                    right_center.x + radius,
                    left_center.y.max(right_center.y) + radius,
                ),
            ),
        }
    }
}

/// Analytic density catalog.
#[derive(Debug, Clone)]
pub enum AnalyticDensity {
    /// Constant on the support, zero outside.
    Uniform(SupportShape),
    /// `base + grad . y` on the support, zero outside. Must stay positive on
    /// the support.
    Affine {
        support: SupportShape,
        base: f64,
        grad: Vec2,
    },
    /// `exp(-|y - center|^2 / (2 sigma^2))` on the support, zero outside.
    GaussianTruncated {
        support: SupportShape,
        center: Vec2,
        sigma: f64,
    },
}

impl AnalyticDensity {
    pub fn support(&self) -> &SupportShape {
        match self {
            AnalyticDensity::Uniform(s) => s,
            AnalyticDensity::Affine { support, .. } => support,
            AnalyticDensity::GaussianTruncated { support, .. } => support,
        }
    }

    fn eval_raw(&self, p: Vec2) -> f64 {
        match self {
            AnalyticDensity::Uniform(s) => {
                if s.contains(p) {
                    1.0
                } else {
                    0.0
                }
            }
            AnalyticDensity::Affine { support, base, grad } => {
                if support.contains(p) {
                    base + grad.dot(&p)
                } else {
                    0.0
                }
            }
            AnalyticDensity::GaussianTruncated {
                support,
                center,
                sigma,
            } => {
                if support.contains(p) {
                    (-(p - center).norm_squared() / (2.0 * sigma * sigma)).exp()
                } else {
                    0.0
                }
            }
        }
    }

    /// Gradient of the raw density where it is smooth (zero for uniform).
    fn grad_raw(&self, p: Vec2) -> Vec2 {
        match self {
            AnalyticDensity::Uniform(_) => Vec2::zeros(),
            AnalyticDensity::Affine { support, grad, .. } => {
                if support.contains(p) {
                    *grad
                } else {
                    Vec2::zeros()
                }
            }
            AnalyticDensity::GaussianTruncated {
                support,
                center,
                sigma,
            } => {
                if support.contains(p) {
                    let v = self.eval_raw(p);
                    -(p - center) / (sigma * sigma) * v
                } else {
                    Vec2::zeros()
                }
            }
        }
    }
}

#[derive(Debug, Clone)]
enum DensityData {
    Analytic {
        f: AnalyticDensity,
        lo: Vec2,
        hi: Vec2,
        n: usize,
    },
    Gridded {
        lo: Vec2,
        hi: Vec2,
        nx: usize,
        ny: usize,
        values: Vec<f64>,
    },
}

/// A nonnegative density with an attached normalization factor and the
/// sampling grid used for its quadrature.
#[derive(Debug, Clone)]
pub struct Density {
    data: DensityData,
    norm: f64,
}

impl Density {
    /// Analytic density with the quadrature grid `n x n` over `[lo, hi]`.
    pub fn analytic(f: AnalyticDensity, lo: Vec2, hi: Vec2, n: usize) -> Result<Self> {
        if n < 2 || !(hi.x > lo.x) || !(hi.y > lo.y) {
            return Err(OtmaError::InvalidDiscretization(format!(
                "density sampling grid needs n >= 2 and a proper box, got n = {n}, [{:?}, {:?}]",
                (lo.x, lo.y),
                (hi.x, hi.y)
            )));
        }
        Ok(Density {
            data: DensityData::Analytic { f, lo, hi, n },
            norm: 1.0,
        })
    }

    /// Analytic density sampled over its own support bounding box.
    pub fn analytic_on_bbox(f: AnalyticDensity, n: usize) -> Result<Self> {
        let (lo, hi) = f.support().bbox();
        Density::analytic(f, lo, hi, n)
    }

    /// Gridded density with node values over `[lo, hi]`, bilinear in between.
    pub fn gridded(lo: Vec2, hi: Vec2, nx: usize, ny: usize, values: Vec<f64>) -> Result<Self> {
        if nx < 2 || ny < 2 || values.len() != nx * ny {
            return Err(OtmaError::InvalidDiscretization(format!(
                "gridded density needs nx, ny >= 2 and {} values, got {}",
                nx * ny,
                values.len()
            )));
        }
        if !(hi.x > lo.x) || !(hi.y > lo.y) {
            return Err(OtmaError::InvalidDiscretization(
                "gridded density box must have positive extent".into(),
            ));
        }
        if values.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(OtmaError::InvalidDiscretization(
                "gridded density values must be finite and nonnegative".into(),
            ));
        }
        Ok(Density {
            data: DensityData::Gridded {
                lo,
                hi,
                nx,
                ny,
                values,
            },
            norm: 1.0,
        })
    }

    /// Support shape, when the density is an analytic catalog entry.
    pub fn support_shape(&self) -> Option<&SupportShape> {
        match &self.data {
            DensityData::Analytic { f, .. } => Some(f.support()),
            DensityData::Gridded { .. } => None,
        }
    }

    /// Normalized density value at a point.
    pub fn eval(&self, p: Vec2) -> f64 {
        self.norm * self.eval_raw(p)
    }

    /// Normalized density gradient at a point (bilinear cells give their
    /// in-cell gradient; analytic entries their smooth gradient).
    pub fn grad(&self, p: Vec2) -> Vec2 {
        match &self.data {
            DensityData::Analytic { f, .. } => self.norm * f.grad_raw(p),
            DensityData::Gridded { .. } => self.norm * self.bilinear_grad(p),
        }
    }

    fn eval_raw(&self, p: Vec2) -> f64 {
        match &self.data {
            DensityData::Analytic { f, .. } => f.eval_raw(p),
            DensityData::Gridded { .. } => self.bilinear(p),
        }
    }

    fn cell_of(&self, p: Vec2) -> Option<(usize, usize, f64, f64, f64, f64)> {
        let DensityData::Gridded { lo, hi, nx, ny, .. } = &self.data else {
            return None;
        };
        if p.x < lo.x || p.x > hi.x || p.y < lo.y || p.y > hi.y {
            return None;
        }
        let hx = (hi.x - lo.x) / (*nx - 1) as f64;
        let hy = (hi.y - lo.y) / (*ny - 1) as f64;
        let fx = (p.x - lo.x) / hx;
        let fy = (p.y - lo.y) / hy;
        // Clamp the cell index, not the coordinate, so the top and right
        // edges interpolate inside the last cell (tx, ty up to 1).
        let i = (fx.floor() as usize).min(*nx - 2);
        let j = (fy.floor() as usize).min(*ny - 2);
        Some((i, j, fx - i as f64, fy - j as f64, hx, hy))
    }

    fn bilinear(&self, p: Vec2) -> f64 {
        let DensityData::Gridded { nx, values, .. } = &self.data else {
            unreachable!()
        };
        let Some((i, j, tx, ty, _, _)) = self.cell_of(p) else {
            return 0.0;
        };
        let v = |ii: usize, jj: usize| values[jj * nx + ii];
        (1.0 - tx) * (1.0 - ty) * v(i, j)
            + tx * (1.0 - ty) * v(i + 1, j)
            + (1.0 - tx) * ty * v(i, j + 1)
            + tx * ty * v(i + 1, j + 1)
    }

    fn bilinear_grad(&self, p: Vec2) -> Vec2 {
        let DensityData::Gridded { nx, values, .. } = &self.data else {
            unreachable!()
        };
        let Some((i, j, tx, ty, hx, hy)) = self.cell_of(p) else {
            return Vec2::zeros();
        };
        let v = |ii: usize, jj: usize| values[jj * nx + ii];
        let dx = ((1.0 - ty) * (v(i + 1, j) - v(i, j)) + ty * (v(i + 1, j + 1) - v(i, j + 1))) / hx;
        let dy = ((1.0 - tx) * (v(i, j + 1) - v(i, j)) + tx * (v(i + 1, j + 1) - v(i + 1, j))) / hy;
        Vec2::new(dx, dy)
    }

    /// Total mass by composite trapezoid quadrature on the density's grid,
    /// including the current normalization factor.
    pub fn mass(&self) -> f64 {
        match &self.data {
            DensityData::Analytic { f, lo, hi, n } => {
                let hx = (hi.x - lo.x) / (*n - 1) as f64;
                let hy = (hi.y - lo.y) / (*n - 1) as f64;
                let mut total = 0.0;
                for j in 0..*n {
                    for i in 0..*n {
                        let p = Vec2::new(lo.x + hx * i as f64, lo.y + hy * j as f64);
                        let wx = if i == 0 || i == *n - 1 { 0.5 } else { 1.0 };
                        let wy = if j == 0 || j == *n - 1 { 0.5 } else { 1.0 };
                        total += wx * wy * f.eval_raw(p);
                    }
                }
                self.norm * total * hx * hy
            }
            DensityData::Gridded {
                lo,
                hi,
                nx,
                ny,
                values,
            } => {
                let hx = (hi.x - lo.x) / (*nx - 1) as f64;
                let hy = (hi.y - lo.y) / (*ny - 1) as f64;
                let mut total = 0.0;
                for j in 0..*ny {
                    for i in 0..*nx {
                        let wx = if i == 0 || i == *nx - 1 { 0.5 } else { 1.0 };
                        let wy = if j == 0 || j == *ny - 1 { 0.5 } else { 1.0 };
                        total += wx * wy * values[j * nx + i];
                    }
                }
                self.norm * total * hx * hy
            }
        }
    }

    /// Returns the density rescaled to unit total mass.
    pub fn normalized(&self) -> Result<Density> {
        let m = self.mass();
        if !(m > 0.0) || !m.is_finite() {
            return Err(OtmaError::ZeroMass(m));
        }
        let mut out = self.clone();
        out.norm /= m;
        Ok(out)
    }
}

/// Rescales both densities to unit total mass via trapezoid quadrature on
/// their own grids.
pub fn normalize_masses(rho_x: &Density, rho_y: &Density) -> Result<(Density, Density)> {
    Ok((rho_x.normalized()?, rho_y.normalized()?))
}

/// Right-hand side ratio `rho_x(x) / rho_y(pi_Y(p))`, clamping the gradient
/// argument to the closed target. Errors when the denominator falls below
/// [`DENSITY_FLOOR`].
pub fn eval_ratio(
    rho_x: &Density,
    rho_y: &Density,
    x: Vec2,
    p: Vec2,
    target: &ConvexTarget,
) -> Result<f64> {
    ratio_from_value(rho_x.eval(x), rho_y, p, target)
}

/// Pulls a clamped point microscopically toward the target centroid before
/// the density lookup. The projection lands on the target's boundary polygon,
/// whose vertices sit exactly on curved support boundaries; without the
/// nudge, rounding can push the lookup an epsilon outside a truncated
/// density's support and hit the floor spuriously. The shift is far below
/// discretization scales, so it only selects the continuous-from-inside
/// extension on the closed support.
fn nudge_inward(q: Vec2, target: &ConvexTarget) -> Vec2 {
    q + 1e-9 * (target.centroid() - q)
}

/// [`eval_ratio`] with a precomputed source-density value at the node.
pub fn ratio_from_value(
    rho_x_at_node: f64,
    rho_y: &Density,
    p: Vec2,
    target: &ConvexTarget,
) -> Result<f64> {
    let q = nudge_inward(closest_point(p, target), target);
    let denom = rho_y.eval(q);
    if denom <= DENSITY_FLOOR {
        return Err(OtmaError::DensityFloor {
            value: denom,
            x: q.x,
            y: q.y,
            floor: DENSITY_FLOOR,
        });
    }
    Ok(rho_x_at_node / denom)
}

/// Ratio and its gradient with respect to the gradient argument `p`, with the
/// clamp's projection Jacobian chained in so Newton sees a derivative that is
/// consistent with the clamped evaluation.
pub fn ratio_with_gradient(
    rho_x_at_node: f64,
    rho_y: &Density,
    p: Vec2,
    target: &ConvexTarget,
) -> Result<(f64, Vec2)> {
    let q = nudge_inward(closest_point(p, target), target);
    let denom = rho_y.eval(q);
    if denom <= DENSITY_FLOOR {
        return Err(OtmaError::DensityFloor {
            value: denom,
            x: q.x,
            y: q.y,
            floor: DENSITY_FLOOR,
        });
    }
    let value = rho_x_at_node / denom;
    // The nudge scales derivatives by (1 - 1e-9); not worth chaining.
    let denom_grad = closest_point_jacobian(p, target).transpose() * rho_y.grad(q);
    let grad = -(rho_x_at_node / (denom * denom)) * denom_grad;
    Ok((value, grad))
}

/// Lipschitz bound `K = max rho_x * max |grad rho_y| / (min rho_y)^2` for the
/// gradient dependence of the ratio, with `grad rho_y` estimated by centered
/// finite differences on the target-side sampling grid. Only sample points
/// whose difference stencil stays inside the target contribute, so boundary
/// jumps of truncated densities do not pollute the estimate.
pub fn estimate_lipschitz(rho_x: &Density, rho_y: &Density, target: &ConvexTarget) -> f64 {
    let max_rho_x = sample_max(rho_x);
    let (lo, hi, n) = sampling_box(rho_y);
    let hx = (hi.x - lo.x) / (n - 1) as f64;
    let hy = (hi.y - lo.y) / (n - 1) as f64;
    let mut max_grad: f64 = 0.0;
    let mut min_val = f64::INFINITY;
    for j in 0..n {
        for i in 0..n {
            let p = Vec2::new(lo.x + hx * i as f64, lo.y + hy * j as f64);
            if signed_distance(p, target) > 0.0 {
                continue;
            }
            min_val = min_val.min(rho_y.eval(p));
            let xp = p + Vec2::new(hx, 0.0);
            let xm = p - Vec2::new(hx, 0.0);
            let yp = p + Vec2::new(0.0, hy);
            let ym = p - Vec2::new(0.0, hy);
            if [xp, xm, yp, ym]
                .iter()
                .all(|q| signed_distance(*q, target) <= 0.0)
            {
                let gx = (rho_y.eval(xp) - rho_y.eval(xm)) / (2.0 * hx);
                let gy = (rho_y.eval(yp) - rho_y.eval(ym)) / (2.0 * hy);
                max_grad = max_grad.max((gx * gx + gy * gy).sqrt());
            }
        }
    }
    if !min_val.is_finite() || min_val <= DENSITY_FLOOR || max_grad == 0.0 {
        return 0.0;
    }
    max_rho_x * max_grad / (min_val * min_val)
}

fn sample_max(rho: &Density) -> f64 {
    match &rho.data {
        DensityData::Analytic { f, lo, hi, n } => {
            let hx = (hi.x - lo.x) / (*n - 1) as f64;
            let hy = (hi.y - lo.y) / (*n - 1) as f64;
            let mut m: f64 = 0.0;
            for j in 0..*n {
                for i in 0..*n {
                    let p = Vec2::new(lo.x + hx * i as f64, lo.y + hy * j as f64);
                    m = m.max(rho.norm * f.eval_raw(p));
                }
            }
            m
        }
        DensityData::Gridded { values, .. } => {
            values.iter().fold(0.0_f64, |m, v| m.max(rho.norm * v))
        }
    }
}

fn sampling_box(rho: &Density) -> (Vec2, Vec2, usize) {
    match &rho.data {
        DensityData::Analytic { lo, hi, n, .. } => (*lo, *hi, *n),
        DensityData::Gridded { lo, hi, nx, ny, .. } => (*lo, *hi, (*nx).max(*ny)),
    }
}
