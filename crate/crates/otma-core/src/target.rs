//! Convex target geometry.
//!
//! The target set `Y` of the transport problem enters the discretization in
//! exactly three ways: through its support function `H*(n) = sup_{y in Y} n.y`,
//! through the signed distance `dist(p, Y)` (negative inside), and through the
//! Hamiltonian
//!
//! ```text
//!     H(p) = max_n ( p.n - H*(n) ),      |n| = 1,
//! ```
//!
//! which equals the signed distance when the max ranges over all unit
//! directions. Discretely the max ranges over a finite [`DirectionSet`] with
//! angular spacing `dalpha`.
//!
//! Targets are canonically stored as counterclockwise boundary point lists;
//! exact circle and ellipse paths exist so that tests can compare the polygon
//! code against closed forms.

use std::collections::HashMap;
use std::sync::{Mutex, OnceLock};

use crate::error::{OtmaError, Result};
use crate::{Mat2, Vec2};

/// Tolerance accepted on `||n| - 1|` for direction arguments.
const UNIT_TOL: f64 = 1e-9;
/// Dot products with magnitude below this are treated as exactly tangential.
const TANGENT_TOL: f64 = 1e-12;

/// Geometry variant of a [`ConvexTarget`].
#[derive(Debug, Clone)]
pub enum ShapeKind {
    /// Generic convex polygon; all queries use the stored boundary points.
    Polygon,
    /// Image of the closed unit disk under the matrix, centered at the origin.
    Ellipse(Mat2),
    /// Disk with the given center and radius.
    Circle { center: Vec2, radius: f64 },
}

/// A bounded convex target set in the plane.
///
/// Invariants maintained by the constructors: the boundary points are ordered
/// counterclockwise, consecutive edge cross products never go negative (convex,
/// collinear runs allowed), and the enclosed area is positive.
#[derive(Debug)]
pub struct ConvexTarget {
    boundary_points: Vec<Vec2>,
    shape_kind: ShapeKind,
    support_cache: Mutex<HashMap<(u64, u64), f64>>,
    diameter_cache: OnceLock<f64>,
    centroid_cache: OnceLock<Vec2>,
}

impl Clone for ConvexTarget {
    fn clone(&self) -> Self {
        ConvexTarget {
            boundary_points: self.boundary_points.clone(),
            shape_kind: self.shape_kind.clone(),
            support_cache: Mutex::new(HashMap::new()),
            diameter_cache: OnceLock::new(),
            centroid_cache: OnceLock::new(),
        }
    }
}

impl ConvexTarget {
    /// Builds a polygon target from counterclockwise boundary points.
    pub fn polygon(points: Vec<Vec2>) -> Result<Self> {
        if points.len() < 3 {
            return Err(OtmaError::InvalidTarget(format!(
                "polygon needs at least 3 points, got {}",
                points.len()
            )));
        }
        let scale = points
            .iter()
            .map(|p| p.x.abs().max(p.y.abs()))
            .fold(0.0, f64::max)
            .max(1e-30);
        let m = points.len();
        for k in 0..m {
            let d = points[(k + 1) % m] - points[k];
            if d.norm() <= 1e-14 * scale {
                return Err(OtmaError::InvalidTarget(format!(
                    "duplicate consecutive boundary points near ({}, {})",
                    points[k].x, points[k].y
                )));
            }
        }
        let area = polygon_area(&points);
        if area <= 1e-12 * scale * scale {
            return Err(OtmaError::InvalidTarget(format!(
                "boundary points must be counterclockwise with positive area (signed area {area})"
            )));
        }
        let cross_tol = -1e-9 * scale * scale;
        for k in 0..m {
            let a = points[k];
            let b = points[(k + 1) % m];
            let c = points[(k + 2) % m];
            let cr = cross(b - a, c - b);
            if cr < cross_tol {
                return Err(OtmaError::InvalidTarget(format!(
                    "reflex vertex at ({}, {}): edge cross product {cr}",
                    b.x, b.y
                )));
            }
        }
        Ok(ConvexTarget {
            boundary_points: points,
            shape_kind: ShapeKind::Polygon,
            support_cache: Mutex::new(HashMap::new()),
            diameter_cache: OnceLock::new(),
            centroid_cache: OnceLock::new(),
        })
    }

    /// Builds the ellipse `M . B1` (image of the unit disk), sampling its
    /// boundary at `samples` uniformly spaced parameter angles.
    pub fn ellipse(matrix: Mat2, samples: usize) -> Result<Self> {
        if matrix.determinant() <= 0.0 {
            return Err(OtmaError::InvalidTarget(format!(
                "ellipse matrix must have positive determinant, got {}",
                matrix.determinant()
            )));
        }
        if samples < 8 {
            return Err(OtmaError::InvalidTarget(format!(
                "ellipse boundary needs at least 8 samples, got {samples}"
            )));
        }
        let points = (0..samples)
            .map(|k| {
                let t = 2.0 * std::f64::consts::PI * k as f64 / samples as f64;
                matrix * Vec2::new(t.cos(), t.sin())
            })
            .collect();
        Ok(ConvexTarget {
            boundary_points: points,
            shape_kind: ShapeKind::Ellipse(matrix),
            support_cache: Mutex::new(HashMap::new()),
            diameter_cache: OnceLock::new(),
            centroid_cache: OnceLock::new(),
        })
    }

    /// Builds a disk target, sampling its boundary at `samples` angles.
    pub fn circle(center: Vec2, radius: f64, samples: usize) -> Result<Self> {
        if radius <= 0.0 {
            return Err(OtmaError::InvalidTarget(format!(
                "circle radius must be positive, got {radius}"
            )));
        }
        if samples < 8 {
            return Err(OtmaError::InvalidTarget(format!(
                "circle boundary needs at least 8 samples, got {samples}"
            )));
        }
        let points = (0..samples)
            .map(|k| {
                let t = 2.0 * std::f64::consts::PI * k as f64 / samples as f64;
                center + radius * Vec2::new(t.cos(), t.sin())
            })
            .collect();
        Ok(ConvexTarget {
            boundary_points: points,
            shape_kind: ShapeKind::Circle { center, radius },
            support_cache: Mutex::new(HashMap::new()),
            diameter_cache: OnceLock::new(),
            centroid_cache: OnceLock::new(),
        })
    }

    /// Axis-aligned square `[-half, half]^2` as a four-vertex polygon.
    pub fn square(half: f64) -> Result<Self> {
        ConvexTarget::polygon(vec![
            Vec2::new(-half, -half),
            Vec2::new(half, -half),
            Vec2::new(half, half),
            Vec2::new(-half, half),
        ])
    }

    /// Boundary points, counterclockwise.
    pub fn boundary_points(&self) -> &[Vec2] {
        &self.boundary_points
    }

    /// Shape variant used for exact query paths.
    pub fn shape_kind(&self) -> &ShapeKind {
        &self.shape_kind
    }

    /// True when the point lies in the closed target set.
    pub fn contains(&self, p: Vec2) -> bool {
        signed_distance(p, self) <= 1e-12 * (1.0 + self.diameter())
    }

    /// Area centroid of the stored boundary polygon.
    pub fn centroid(&self) -> Vec2 {
        *self.centroid_cache.get_or_init(|| match self.shape_kind {
            ShapeKind::Circle { center, .. } => center,
            ShapeKind::Ellipse(_) => Vec2::zeros(),
            ShapeKind::Polygon => {
                let pts = &self.boundary_points;
                let m = pts.len();
                let mut area2 = 0.0;
                let mut c = Vec2::zeros();
                for k in 0..m {
                    let a = pts[k];
                    let b = pts[(k + 1) % m];
                    let w = cross(a, b);
                    area2 += w;
                    c += w * (a + b);
                }
                c / (3.0 * area2)
            }
        })
    }

    /// Largest pairwise distance between boundary points.
    pub fn diameter(&self) -> f64 {
        *self.diameter_cache.get_or_init(|| {
            let pts = &self.boundary_points;
            let mut best: f64 = 0.0;
            for i in 0..pts.len() {
                for j in (i + 1)..pts.len() {
                    best = best.max((pts[i] - pts[j]).norm());
                }
            }
            best
        })
    }

    /// Largest distance from the centroid to a boundary point.
    pub fn circumradius(&self) -> f64 {
        let c = self.centroid();
        self.boundary_points
            .iter()
            .map(|p| (p - c).norm())
            .fold(0.0, f64::max)
    }

    /// Axis-aligned bounding box `(min, max)` of the boundary points.
    pub fn bbox(&self) -> (Vec2, Vec2) {
        let mut lo = Vec2::new(f64::INFINITY, f64::INFINITY);
        let mut hi = Vec2::new(f64::NEG_INFINITY, f64::NEG_INFINITY);
        for p in &self.boundary_points {
            lo.x = lo.x.min(p.x);
            lo.y = lo.y.min(p.y);
            hi.x = hi.x.max(p.x);
            hi.y = hi.y.max(p.y);
        }
        (lo, hi)
    }

    fn support_cached(&self, n: Vec2) -> f64 {
        let key = (n.x.to_bits(), n.y.to_bits());
        let mut cache = self
            .support_cache
            .lock()
            .unwrap_or_else(|e| e.into_inner());
        if let Some(&v) = cache.get(&key) {
            return v;
        }
        let v = self
            .boundary_points
            .iter()
            .map(|y| n.dot(y))
            .fold(f64::NEG_INFINITY, f64::max);
        cache.insert(key, v);
        v
    }
}

/// Support function `H*(n) = sup_{y in Y} n.y` of the target.
///
/// `direction` must be unit length within `1e-9`. Circle and ellipse targets
/// use the closed form; polygons take the max over boundary points.
pub fn support_function(direction: Vec2, target: &ConvexTarget) -> Result<f64> {
    if (direction.norm() - 1.0).abs() > UNIT_TOL {
        return Err(OtmaError::NonUnitDirection(direction.x, direction.y));
    }
    Ok(match target.shape_kind {
        ShapeKind::Circle { center, radius } => direction.dot(&center) + radius,
        ShapeKind::Ellipse(m) => (m.transpose() * direction).norm(),
        ShapeKind::Polygon => target.support_cached(direction),
    })
}

/// Signed distance from `point` to the target boundary: negative inside,
/// positive outside, zero on the boundary.
pub fn signed_distance(point: Vec2, target: &ConvexTarget) -> f64 {
    match target.shape_kind {
        ShapeKind::Circle { center, radius } => (point - center).norm() - radius,
        ShapeKind::Ellipse(m) => {
            let on_boundary = ellipse_boundary_closest(&m, point);
            let d = (point - on_boundary).norm();
            let inside = (m.try_inverse().expect("ellipse matrix is invertible") * point).norm()
                <= 1.0;
            if inside {
                -d
            } else {
                d
            }
        }
        ShapeKind::Polygon => {
            let pts = &target.boundary_points;
            let m = pts.len();
            let mut dist = f64::INFINITY;
            let mut inside = true;
            for k in 0..m {
                let a = pts[k];
                let b = pts[(k + 1) % m];
                dist = dist.min(point_segment_distance(point, a, b));
                if cross(b - a, point - a) < 0.0 {
                    inside = false;
                }
            }
            if inside {
                -dist
            } else {
                dist
            }
        }
    }
}

/// Closest point of the closed target set to `point` (the point itself when it
/// already lies inside).
pub fn closest_point(point: Vec2, target: &ConvexTarget) -> Vec2 {
    if signed_distance(point, target) <= 0.0 {
        return point;
    }
    match target.shape_kind {
        ShapeKind::Circle { center, radius } => {
            let d = point - center;
            let norm = d.norm();
            if norm <= 1e-300 {
                center + Vec2::new(radius, 0.0)
            } else {
                center + d * (radius / norm)
            }
        }
        ShapeKind::Ellipse(m) => ellipse_boundary_closest(&m, point),
        ShapeKind::Polygon => {
            let pts = &target.boundary_points;
            let m = pts.len();
            let mut best = pts[0];
            let mut best_d = f64::INFINITY;
            for k in 0..m {
                let q = project_on_segment(point, pts[k], pts[(k + 1) % m]);
                let d = (point - q).norm();
                if d < best_d {
                    best_d = d;
                    best = q;
                }
            }
            best
        }
    }
}

/// Derivative of [`closest_point`] with respect to the query point.
///
/// Identity inside the set; for outside points the projection flattens onto
/// the nearest edge (tangent rank-one matrix) or freezes at a vertex (zero).
/// Used to keep Jacobians consistent with the clamped density evaluation.
pub fn closest_point_jacobian(point: Vec2, target: &ConvexTarget) -> Mat2 {
    if signed_distance(point, target) <= 0.0 {
        return Mat2::identity();
    }
    match target.shape_kind {
        ShapeKind::Circle { center, radius } => {
            let d = point - center;
            let n = d.norm();
            if n <= 1e-300 {
                return Mat2::zeros();
            }
            let t = Vec2::new(-d.y, d.x) / n;
            (radius / n) * (t * t.transpose())
        }
        ShapeKind::Ellipse(_) => {
            let q = closest_point(point, target);
            let step = 1e-6 * (1.0 + point.norm());
            let dx = (closest_point(point + Vec2::new(step, 0.0), target) - q) / step;
            let dy = (closest_point(point + Vec2::new(0.0, step), target) - q) / step;
            Mat2::from_columns(&[dx, dy])
        }
        ShapeKind::Polygon => {
            let pts = &target.boundary_points;
            let m = pts.len();
            let mut best_d = f64::INFINITY;
            let mut best_j = Mat2::zeros();
            for k in 0..m {
                let a = pts[k];
                let b = pts[(k + 1) % m];
                let q = project_on_segment(point, a, b);
                let d = (point - q).norm();
                if d < best_d {
                    best_d = d;
                    let interior_hit = (q - a).norm() > 1e-12 && (q - b).norm() > 1e-12;
                    best_j = if interior_hit {
                        let t = (b - a).normalize();
                        t * t.transpose()
                    } else {
                        Mat2::zeros()
                    };
                }
            }
            best_j
        }
    }
}

/// Discrete Hamiltonian `max_n ( p.n - H*(n) )` over the direction set.
///
/// Converges to the signed distance to the target as `dalpha -> 0`.
pub fn hamiltonian(gradient: Vec2, target: &ConvexTarget, dirs: &DirectionSet) -> f64 {
    let mut best = f64::NEG_INFINITY;
    for &n in dirs.directions() {
        let v = gradient.dot(&n)
            - support_function(n, target).expect("direction sets hold unit vectors");
        best = best.max(v);
    }
    best
}

/// Like [`hamiltonian`], additionally returning the maximizing direction index.
pub fn hamiltonian_argmax(gradient: Vec2, target: &ConvexTarget, dirs: &DirectionSet) -> (f64, usize) {
    let mut best = f64::NEG_INFINITY;
    let mut arg = 0;
    for (k, &n) in dirs.directions().iter().enumerate() {
        let v = gradient.dot(&n)
            - support_function(n, target).expect("direction sets hold unit vectors");
        if v > best {
            best = v;
            arg = k;
        }
    }
    (best, arg)
}

/// Finite set of unit directions with bounded angular gaps.
#[derive(Debug, Clone)]
pub struct DirectionSet {
    dirs: Vec<Vec2>,
    dalpha: f64,
}

impl DirectionSet {
    /// Uniform sweep of the full circle with angular spacing at most `dalpha`.
    pub fn uniform(dalpha: f64) -> Result<Self> {
        DirectionSet::uniform_at(dalpha, 0.0)
    }

    /// Uniform sweep starting at angle `theta0`; useful for testing alignment
    /// sensitivity.
    pub fn uniform_at(dalpha: f64, theta0: f64) -> Result<Self> {
        if !(dalpha > 0.0) || dalpha > std::f64::consts::FRAC_PI_2 {
            return Err(OtmaError::InvalidDiscretization(format!(
                "direction spacing must lie in (0, pi/2], got {dalpha}"
            )));
        }
        let m = (2.0 * std::f64::consts::PI / dalpha).ceil() as usize;
        let step = 2.0 * std::f64::consts::PI / m as f64;
        let dirs = (0..m)
            .map(|k| {
                let t = theta0 + step * k as f64;
                Vec2::new(t.cos(), t.sin())
            })
            .collect();
        Ok(DirectionSet { dirs, dalpha: step })
    }

    /// Wraps an explicit direction list; callers must keep the vectors unit.
    pub fn from_directions(dirs: Vec<Vec2>, dalpha: f64) -> Result<Self> {
        if dirs.is_empty() {
            return Err(OtmaError::InvalidDiscretization(
                "direction set must not be empty".into(),
            ));
        }
        for n in &dirs {
            if (n.norm() - 1.0).abs() > UNIT_TOL {
                return Err(OtmaError::NonUnitDirection(n.x, n.y));
            }
        }
        Ok(DirectionSet { dirs, dalpha })
    }

    /// The stored unit directions.
    pub fn directions(&self) -> &[Vec2] {
        &self.dirs
    }

    /// Actual angular spacing of the generating sweep.
    pub fn dalpha(&self) -> f64 {
        self.dalpha
    }

    pub fn len(&self) -> usize {
        self.dirs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dirs.is_empty()
    }
}

/// Restricts a direction set to the open half-plane `n . n_x > 0`.
///
/// Dot products within `1e-12` of zero count as tangential and are dropped.
/// Errors when the normal is not unit length or nothing remains.
pub fn restrict_directions(dirs: &DirectionSet, outward_normal: Vec2) -> Result<DirectionSet> {
    if (outward_normal.norm() - 1.0).abs() > UNIT_TOL {
        return Err(OtmaError::NonUnitDirection(outward_normal.x, outward_normal.y));
    }
    let kept: Vec<Vec2> = dirs
        .dirs
        .iter()
        .copied()
        .filter(|n| n.dot(&outward_normal) > TANGENT_TOL)
        .collect();
    if kept.is_empty() {
        return Err(OtmaError::EmptyDirectionSet(
            outward_normal.x,
            outward_normal.y,
        ));
    }
    Ok(DirectionSet {
        dirs: kept,
        dalpha: dirs.dalpha,
    })
}

fn cross(a: Vec2, b: Vec2) -> f64 {
    a.x * b.y - a.y * b.x
}

fn polygon_area(points: &[Vec2]) -> f64 {
    let m = points.len();
    let mut twice = 0.0;
    for k in 0..m {
        twice += cross(points[k], points[(k + 1) % m]);
    }
    0.5 * twice
}

fn project_on_segment(p: Vec2, a: Vec2, b: Vec2) -> Vec2 {
    let ab = b - a;
    let len2 = ab.norm_squared();
    if len2 <= 1e-300 {
        return a;
    }
    let t = ((p - a).dot(&ab) / len2).clamp(0.0, 1.0);
    a + t * ab
}

fn point_segment_distance(p: Vec2, a: Vec2, b: Vec2) -> f64 {
    (p - project_on_segment(p, a, b)).norm()
}

/// Closest boundary point of the ellipse `M . B1` to `p`, found by a coarse
/// parameter sweep refined with ternary search. Accurate to roughly 1e-12 in
/// the parameter; intended for tests and clamping, not for hot loops.
fn ellipse_boundary_closest(m: &Mat2, p: Vec2) -> Vec2 {
    let point_at = |t: f64| m * Vec2::new(t.cos(), t.sin());
    let obj = |t: f64| (point_at(t) - p).norm_squared();
    const COARSE: usize = 256;
    let step = 2.0 * std::f64::consts::PI / COARSE as f64;
    let mut best_k = 0;
    let mut best_v = f64::INFINITY;
    for k in 0..COARSE {
        let v = obj(step * k as f64);
        if v < best_v {
            best_v = v;
            best_k = k;
        }
    }
    let mut lo = step * (best_k as f64 - 1.0);
    let mut hi = step * (best_k as f64 + 1.0);
    for _ in 0..100 {
        let m1 = lo + (hi - lo) / 3.0;
        let m2 = hi - (hi - lo) / 3.0;
        if obj(m1) <= obj(m2) {
            hi = m2;
        } else {
            lo = m1;
        }
    }
    point_at(0.5 * (lo + hi))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn unit_circle() -> ConvexTarget {
        ConvexTarget::circle(Vec2::zeros(), 1.0, 64).unwrap()
    }

    #[test]
    fn square_support_values() {
        let sq = ConvexTarget::square(0.5).unwrap();
        assert_eq!(support_function(Vec2::new(1.0, 0.0), &sq).unwrap(), 0.5);
        let d = std::f64::consts::FRAC_1_SQRT_2;
        assert_relative_eq!(
            support_function(Vec2::new(d, d), &sq).unwrap(),
            std::f64::consts::FRAC_1_SQRT_2,
            epsilon = 1e-12
        );
    }

    #[test]
    fn support_rejects_non_unit_directions() {
        let sq = ConvexTarget::square(0.5).unwrap();
        assert!(support_function(Vec2::new(1.0, 1.0), &sq).is_err());
        assert!(support_function(Vec2::new(0.0, 0.0), &sq).is_err());
    }

    #[test]
    fn ellipse_support_matches_dense_boundary_sampling() {
        // Exact value for the matrix [[0.6, 0.2], [0.2, 0.8]] in direction
        // (1,0) is |M^T n| = sqrt(0.36 + 0.04).
        let m = Mat2::new(0.6, 0.2, 0.2, 0.8);
        let ell = ConvexTarget::ellipse(m, 4096).unwrap();
        let n = Vec2::new(1.0, 0.0);
        let exact = support_function(n, &ell).unwrap();
        assert_relative_eq!(exact, 0.632_455_532_033_675_9, epsilon = 1e-12);

        // Independent oracle: the same boundary samples treated as a plain
        // polygon must agree up to the sampling gap.
        let poly = ConvexTarget::polygon(ell.boundary_points().to_vec()).unwrap();
        let sampled = support_function(n, &poly).unwrap();
        assert!(sampled <= exact + 1e-12);
        assert!(exact - sampled < 1e-6, "gap {}", exact - sampled);
    }

    #[test]
    fn circle_signed_distance_trivia() {
        let c = unit_circle();
        assert_relative_eq!(signed_distance(Vec2::new(2.0, 0.0), &c), 1.0);
        assert_relative_eq!(signed_distance(Vec2::zeros(), &c), -1.0);
    }

    #[test]
    fn polygon_signed_distance_square() {
        let sq = ConvexTarget::square(0.5).unwrap();
        assert_relative_eq!(signed_distance(Vec2::new(0.75, 0.0), &sq), 0.25);
        assert_relative_eq!(signed_distance(Vec2::new(0.0, 0.0), &sq), -0.5);
        assert_relative_eq!(signed_distance(Vec2::new(1.5, 1.5), &sq), 2.0_f64.sqrt());
    }

    #[test]
    fn polygon_distance_cross_validates_support_formula() {
        // For points outside a convex set the signed distance equals
        // sup_n (p.n - H*(n)); check the two independent code paths agree.
        let tri = ConvexTarget::polygon(vec![
            Vec2::new(-0.8, -0.5),
            Vec2::new(0.9, -0.4),
            Vec2::new(0.1, 0.9),
        ])
        .unwrap();
        let dirs = DirectionSet::uniform(1e-3).unwrap();
        for &p in &[
            Vec2::new(2.0, 0.3),
            Vec2::new(-1.5, 1.2),
            Vec2::new(0.0, -3.0),
            Vec2::new(1.4, 1.4),
        ] {
            let sd = signed_distance(p, &tri);
            let h = hamiltonian(p, &tri, &dirs);
            assert!(h <= sd + 1e-12);
            // At edge-projection points the angular net misses the kink of
            // the support function by up to dalpha/2, so agreement is only
            // first order in dalpha.
            let gap = 3.0 * dirs.dalpha() * tri.diameter();
            assert_relative_eq!(h, sd, epsilon = gap);
        }
    }

    #[test]
    fn ellipse_distance_reduces_to_circle() {
        let ell = ConvexTarget::ellipse(Mat2::identity() * 0.7, 64).unwrap();
        for &p in &[Vec2::new(1.3, 0.4), Vec2::new(0.1, -0.2), Vec2::new(-2.0, 1.0)] {
            let expect = p.norm() - 0.7;
            assert_relative_eq!(signed_distance(p, &ell), expect, epsilon = 1e-9);
        }
    }

    #[test]
    fn closest_point_projects_onto_boundary() {
        let sq = ConvexTarget::square(0.5).unwrap();
        let q = closest_point(Vec2::new(0.75, 0.1), &sq);
        assert_relative_eq!(q.x, 0.5);
        assert_relative_eq!(q.y, 0.1);
        let inside = Vec2::new(0.2, -0.3);
        assert_eq!(closest_point(inside, &sq), inside);
        let corner = closest_point(Vec2::new(2.0, 2.0), &sq);
        assert_relative_eq!(corner.x, 0.5);
        assert_relative_eq!(corner.y, 0.5);
    }

    #[test]
    fn restrict_keeps_strictly_inward_half_plane() {
        let axes = DirectionSet::uniform(std::f64::consts::FRAC_PI_2).unwrap();
        assert_eq!(axes.len(), 4);
        let kept = restrict_directions(&axes, Vec2::new(-1.0, 0.0)).unwrap();
        assert_eq!(kept.len(), 1);
        assert_relative_eq!(kept.directions()[0].x, -1.0);

        let compass = DirectionSet::uniform(std::f64::consts::FRAC_PI_4).unwrap();
        assert_eq!(compass.len(), 8);
        let kept = restrict_directions(&compass, Vec2::new(-1.0, 0.0)).unwrap();
        assert_eq!(kept.len(), 3);
        for n in kept.directions() {
            assert!(n.x < 0.0);
        }
    }

    #[test]
    fn restrict_count_for_pi_over_16_spacing() {
        let dirs = DirectionSet::uniform(std::f64::consts::PI / 16.0).unwrap();
        assert_eq!(dirs.len(), 32);
        for &normal in &[
            Vec2::new(1.0, 0.0),
            Vec2::new(0.3, 0.7),
            Vec2::new(-0.2, 0.9),
            Vec2::new(0.6, -0.5),
        ] {
            let n = normal.normalize();
            let kept = restrict_directions(&dirs, n).unwrap();
            assert!(
                (15..=17).contains(&kept.len()),
                "normal {n:?} kept {}",
                kept.len()
            );
        }
    }

    #[test]
    fn restrict_errors_on_bad_input() {
        let dirs = DirectionSet::uniform(0.1).unwrap();
        assert!(restrict_directions(&dirs, Vec2::new(0.5, 0.0)).is_err());
        let lone = DirectionSet::from_directions(vec![Vec2::new(1.0, 0.0)], 0.1).unwrap();
        assert!(restrict_directions(&lone, Vec2::new(-1.0, 0.0)).is_err());
    }

    #[test]
    fn direction_set_gaps_respect_dalpha() {
        for &da in &[0.7, 0.1, 0.0491] {
            let d = DirectionSet::uniform(da).unwrap();
            assert!(d.dalpha() <= da + 1e-15);
            for n in d.directions() {
                assert_relative_eq!(n.norm(), 1.0, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn hamiltonian_approximates_circle_distance() {
        let c = unit_circle();
        let dirs = DirectionSet::uniform(std::f64::consts::PI / 180.0).unwrap();
        let h = hamiltonian(Vec2::new(2.0, 0.0), &c, &dirs);
        assert!((h - 1.0).abs() <= 2e-4, "h = {h}");

        // Offset sweep, so no direction aligns exactly with the query.
        let dirs = DirectionSet::uniform_at(std::f64::consts::PI / 180.0, 0.123).unwrap();
        let h = hamiltonian(Vec2::new(2.0, 0.0), &c, &dirs);
        assert!((h - 1.0).abs() <= 2e-4, "h = {h}");
    }

    #[test]
    fn hamiltonian_growth_along_argmax_direction() {
        // Moving the gradient along its own maximizing direction raises the
        // Hamiltonian at unit rate (the obliqueness growth bound).
        let tri = ConvexTarget::polygon(vec![
            Vec2::new(-0.8, -0.5),
            Vec2::new(0.9, -0.4),
            Vec2::new(0.1, 0.9),
        ])
        .unwrap();
        let dirs = DirectionSet::uniform(std::f64::consts::PI / 180.0).unwrap();
        for &p in &[Vec2::new(0.0, 0.0), Vec2::new(1.4, -0.2), Vec2::new(-0.6, 0.8)] {
            let (h0, k) = hamiltonian_argmax(p, &tri, &dirs);
            let n = dirs.directions()[k];
            for &lambda in &[0.5, 1.0, 2.0] {
                let h1 = hamiltonian(p + lambda * n, &tri, &dirs);
                assert!(
                    h1 - h0 >= 0.99 * lambda,
                    "growth {} < {}",
                    h1 - h0,
                    0.99 * lambda
                );
            }
        }
    }

    #[test]
    fn polygon_constructor_rejects_bad_input() {
        assert!(ConvexTarget::polygon(vec![Vec2::zeros(), Vec2::new(1.0, 0.0)]).is_err());
        // Clockwise square.
        assert!(ConvexTarget::polygon(vec![
            Vec2::new(-0.5, -0.5),
            Vec2::new(-0.5, 0.5),
            Vec2::new(0.5, 0.5),
            Vec2::new(0.5, -0.5),
        ])
        .is_err());
        // Reflex quadrilateral.
        assert!(ConvexTarget::polygon(vec![
            Vec2::new(0.0, 0.0),
            Vec2::new(1.0, 0.0),
            Vec2::new(0.2, 0.2),
            Vec2::new(0.0, 1.0),
        ])
        .is_err());
    }

    #[test]
    fn centroid_and_diameter() {
        let sq = ConvexTarget::square(0.5).unwrap();
        let c = sq.centroid();
        assert_relative_eq!(c.x, 0.0, epsilon = 1e-14);
        assert_relative_eq!(c.y, 0.0, epsilon = 1e-14);
        assert_relative_eq!(sq.diameter(), 2.0_f64.sqrt(), epsilon = 1e-14);

        let shifted = ConvexTarget::circle(Vec2::new(0.3, -0.2), 0.85, 256).unwrap();
        let c = shifted.centroid();
        assert_relative_eq!(c.x, 0.3, epsilon = 1e-12);
        assert_relative_eq!(c.y, -0.2, epsilon = 1e-12);
    }
}
