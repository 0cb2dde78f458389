//! Exact discrete-assignment oracle.
//!
//! Small equal-mass point clouds sampled from the source and target supports
//! are matched by an exact quadratic-cost assignment solve. The atom
//! destinations give an independent, discretization-free reference against
//! which the continuum solver's map can be checked at coarse resolution.

use crate::density::SupportShape;
use crate::error::{OtmaError, Result};
use crate::grid::Grid;
use crate::solver::interpolate_map;
use crate::Vec2;

/// Equal-mass atomic measure: every point carries weight `1/m`.
#[derive(Debug, Clone)]
pub struct DiscreteMeasure {
    points: Vec<Vec2>,
}

/// Largest assignment the exact solver accepts; the cubic-time matching is
/// comfortable up to here and a mistake above it would silently burn hours.
pub const MAX_ASSIGNMENT_SIZE: usize = 400;

impl DiscreteMeasure {
    pub fn new(points: Vec<Vec2>) -> Result<Self> {
        if points.is_empty() {
            return Err(OtmaError::InvalidAssignment(
                "a discrete measure needs at least one atom".into(),
            ));
        }
        Ok(DiscreteMeasure { points })
    }

    pub fn points(&self) -> &[Vec2] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Common atom weight.
    pub fn weight(&self) -> f64 {
        1.0 / self.points.len() as f64
    }
}

/// Minimizes `sum_i w ||x_i - y_{sigma(i)}||^2` over permutations `sigma` by
/// the exact potential-based matching algorithm (cubic time). Returns the
/// permutation as `sigma[i] = matched target index`.
pub fn optimal_assignment(src: &DiscreteMeasure, dst: &DiscreteMeasure) -> Result<Vec<usize>> {
    if src.len() != dst.len() {
        return Err(OtmaError::InvalidAssignment(format!(
            "measures must have equal atom counts, got {} and {}",
            src.len(),
            dst.len()
        )));
    }
    if src.len() > MAX_ASSIGNMENT_SIZE {
        return Err(OtmaError::InvalidAssignment(format!(
            "assignment size {} exceeds the supported maximum {MAX_ASSIGNMENT_SIZE}",
            src.len()
        )));
    }
    let n = src.len();
    let cost: Vec<Vec<f64>> = src
        .points
        .iter()
        .map(|x| dst.points.iter().map(|y| (x - y).norm_squared()).collect())
        .collect();
    Ok(hungarian(&cost, n))
}

/// Row-potential Hungarian algorithm with the usual sentinel column 0.
fn hungarian(cost: &[Vec<f64>], n: usize) -> Vec<usize> {
    let mut u = vec![0.0f64; n + 1];
    let mut v = vec![0.0f64; n + 1];
    // p[j] = row currently matched to column j (0 = free).
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0usize;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0usize;
            for j in 1..=n {
                if !used[j] {
                    let cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        // Augment along the recorded alternating path.
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut sigma = vec![0usize; n];
    for j in 1..=n {
        if p[j] > 0 {
            sigma[p[j] - 1] = j - 1;
        }
    }
    sigma
}

/// Weighted quadratic transport cost of a given pairing.
pub fn assignment_cost(src: &DiscreteMeasure, dst: &DiscreteMeasure, sigma: &[usize]) -> f64 {
    let w = src.weight();
    src.points
        .iter()
        .zip(sigma)
        .map(|(x, &j)| w * (x - dst.points[j]).norm_squared())
        .sum()
}

/// Brute-force minimum over all permutations; a second-level check for tiny
/// instances.
pub fn exhaustive_assignment(src: &DiscreteMeasure, dst: &DiscreteMeasure) -> Result<Vec<usize>> {
    if src.len() != dst.len() {
        return Err(OtmaError::InvalidAssignment(format!(
            "measures must have equal atom counts, got {} and {}",
            src.len(),
            dst.len()
        )));
    }
    if src.len() > 8 {
        return Err(OtmaError::InvalidAssignment(format!(
            "exhaustive search is limited to 8 atoms, got {}",
            src.len()
        )));
    }
    let n = src.len();
    let mut perm: Vec<usize> = (0..n).collect();
    let mut best = perm.clone();
    let mut best_cost = assignment_cost(src, dst, &perm);
    // Heap's algorithm, iterative form.
    let mut c = vec![0usize; n];
    let mut i = 0;
    while i < n {
        if c[i] < i {
            if i % 2 == 0 {
                perm.swap(0, i);
            } else {
                perm.swap(c[i], i);
            }
            let cost = assignment_cost(src, dst, &perm);
            if cost < best_cost {
                best_cost = cost;
                best = perm.clone();
            }
            c[i] += 1;
            i = 0;
        } else {
            c[i] = 0;
            i += 1;
        }
    }
    Ok(best)
}

/// Equal-area polar stratification of the closed unit disk into exactly `m`
/// cells: concentric rings of equal radial width, each ring split into a
/// sector count proportional to its area (the outermost ring absorbs the
/// rounding remainder). Every atom sits at its cell's area-median radius on
/// the sector midline, so the pattern is a deterministic stratified grid of
/// the uniform disk density.
fn unit_disk_pattern(m: usize) -> Vec<Vec2> {
    assert!(m >= 1, "need at least one sample");
    let rings = ((m as f64 / std::f64::consts::PI).sqrt().round() as usize).max(1);
    let mut counts = vec![0usize; rings];
    let mut assigned = 0usize;
    for l in 0..rings - 1 {
        let ideal = (m * (2 * l + 1)) as f64 / (rings * rings) as f64;
        // Keep at least one cell for each ring still to come.
        let cap = m - assigned - (rings - 1 - l);
        counts[l] = (ideal.round() as usize).clamp(1, cap);
        assigned += counts[l];
    }
    counts[rings - 1] = m - assigned;
    let mut pts = Vec::with_capacity(m);
    for (l, &n) in counts.iter().enumerate() {
        if l == 0 && n == 1 {
            // A single-cell core is the whole inner disk; its centroid is the
            // origin rather than any positive area-median radius.
            pts.push(Vec2::zeros());
            continue;
        }
        let rho = (((l * l + (l + 1) * (l + 1)) as f64) / (2 * rings * rings) as f64).sqrt();
        for s in 0..n {
            let phi = 2.0 * std::f64::consts::PI * (s as f64 + 0.5) / n as f64;
            pts.push(rho * Vec2::new(phi.cos(), phi.sin()));
        }
    }
    pts
}

/// Deterministic `m`-atom quantization of the uniform density on a support
/// shape.
///
/// Shapes that are affine images of the unit disk (circles, ellipses, and the
/// two-lobe split support) reuse [`unit_disk_pattern`] pushed through their
/// own parametrization: linear maps send equal-area strata to equal-area
/// strata and centroids to centroids, so the image is again a stratified grid
/// sample of the uniform density on the shape.
///
/// For rectangles and polygons, candidate points are the centers of a fine
/// stratified grid over the bounding box kept when inside the shape; an
/// evenly thinned subset seeds Lloyd iterations (each atom moves to the
/// centroid of the candidates nearest to it), which spreads the atoms into a
/// near-centroidal layout. Centroids that leave a non-convex support are
/// snapped back to the nearest candidate, so every returned atom lies inside
/// the shape.
pub fn stratified_points(shape: &SupportShape, m: usize) -> Vec<Vec2> {
    assert!(m >= 1, "need at least one sample");
    match shape {
        SupportShape::Circle { center, radius } => {
            return unit_disk_pattern(m)
                .into_iter()
                .map(|p| center + *radius * p)
                .collect();
        }
        SupportShape::Ellipse(mat) => {
            return unit_disk_pattern(m).into_iter().map(|p| mat * p).collect();
        }
        SupportShape::HalfDiskPair {
            left_center,
            right_center,
            radius,
        } => {
            // Each lobe is a half-disk cut at its own center line, so the
            // disk strata with negative (resp. positive) abscissa transplant
            // onto the left (resp. right) lobe unchanged.
            return unit_disk_pattern(m)
                .into_iter()
                .map(|p| {
                    // An atom on or within rounding distance of the cut
                    // (the m = 1 core atom, or a ring atom at a right angle)
                    // would land outside both open lobes once translated;
                    // nudge it decisively into the side its sign picks.
                    let p = if p.x.abs() < 1e-12 {
                        Vec2::new(if p.x < 0.0 { -1e-12 } else { 1e-12 }, p.y)
                    } else {
                        p
                    };
                    *radius * p + if p.x < 0.0 { left_center } else { right_center }
                })
                .collect();
        }
        SupportShape::Rect { .. } | SupportShape::Polygon(_) => {}
    }
    let (lo, hi) = shape.bbox();
    let ext = hi - lo;
    let mut k = 5 * (m as f64).sqrt().ceil() as usize;
    let candidates = loop {
        let mut pts = Vec::new();
        for j in 0..k {
            for i in 0..k {
                let p = lo
                    + Vec2::new(
                        ext.x * (i as f64 + 0.5) / k as f64,
                        ext.y * (j as f64 + 0.5) / k as f64,
                    );
                if shape.contains(p) {
                    pts.push(p);
                }
            }
        }
        if pts.len() >= 64 * m || (pts.len() >= m && k > 4000) {
            break pts;
        }
        k += 1 + k / 4;
    };
    let mut atoms: Vec<Vec2> = (0..m)
        .map(|t| candidates[t * candidates.len() / m])
        .collect();
    let mut sums = vec![Vec2::zeros(); m];
    let mut counts = vec![0usize; m];
    for _ in 0..300 {
        sums.iter_mut().for_each(|s| *s = Vec2::zeros());
        counts.iter_mut().for_each(|c| *c = 0);
        for p in &candidates {
            let mut best = 0usize;
            let mut best_d = f64::INFINITY;
            for (c, a) in atoms.iter().enumerate() {
                let d = (p - a).norm_squared();
                if d < best_d {
                    best_d = d;
                    best = c;
                }
            }
            sums[best] += p;
            counts[best] += 1;
        }
        let mut moved = 0.0f64;
        for c in 0..m {
            if counts[c] == 0 {
                continue;
            }
            let mut next = sums[c] / counts[c] as f64;
            if !shape.contains(next) {
                next = *candidates
                    .iter()
                    .min_by(|a, b| {
                        (*a - next)
                            .norm_squared()
                            .total_cmp(&(*b - next).norm_squared())
                    })
                    .expect("candidate set is nonempty");
            }
            moved = moved.max((next - atoms[c]).norm());
            atoms[c] = next;
        }
        if moved < 1e-12 * ext.norm() {
            break;
        }
    }
    atoms
}

/// Samples `m` atoms from each support, matches them exactly, and returns
/// the largest distance between an atom's assigned destination and the
/// computed map (bilinearly interpolated) at that atom.
pub fn cross_validate(
    map: &[Vec2],
    grid: &Grid,
    source: &SupportShape,
    target: &SupportShape,
    m: usize,
) -> Result<f64> {
    let src = DiscreteMeasure::new(stratified_points(source, m))?;
    let dst = DiscreteMeasure::new(stratified_points(target, m))?;
    let sigma = optimal_assignment(&src, &dst)?;
    Ok(src
        .points()
        .iter()
        .enumerate()
        .map(|(i, &x)| (interpolate_map(map, grid, x) - dst.points()[sigma[i]]).norm())
        .fold(0.0f64, f64::max))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::GridFunction;
    use crate::solver::extract_map;
    use approx::assert_relative_eq;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn grid_cloud(n: usize, shift: Vec2) -> Vec<Vec2> {
        let mut pts = Vec::new();
        for j in 0..n {
            for i in 0..n {
                pts.push(Vec2::new(i as f64, j as f64) + shift);
            }
        }
        pts
    }

    #[test]
    fn matching_a_cloud_to_itself_is_the_identity() {
        let src = DiscreteMeasure::new(grid_cloud(3, Vec2::zeros())).unwrap();
        let sigma = optimal_assignment(&src, &src).unwrap();
        assert_eq!(sigma, (0..9).collect::<Vec<_>>());
        assert_relative_eq!(assignment_cost(&src, &src, &sigma), 0.0, epsilon = 1e-14);
    }

    #[test]
    fn translations_keep_the_identity_pairing() {
        let c = Vec2::new(0.7, -1.3);
        let src = DiscreteMeasure::new(grid_cloud(3, Vec2::zeros())).unwrap();
        let dst = DiscreteMeasure::new(grid_cloud(3, c)).unwrap();
        let sigma = optimal_assignment(&src, &dst).unwrap();
        assert_eq!(sigma, (0..9).collect::<Vec<_>>());
        assert_relative_eq!(
            assignment_cost(&src, &dst, &sigma),
            c.norm_squared(),
            epsilon = 1e-12
        );
    }

    #[test]
    fn common_translation_leaves_the_permutation_unchanged() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let pts: Vec<Vec2> = (0..6)
            .map(|_| Vec2::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
            .collect();
        let qts: Vec<Vec2> = (0..6)
            .map(|_| Vec2::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
            .collect();
        let c = Vec2::new(3.5, -2.25);
        let src = DiscreteMeasure::new(pts.clone()).unwrap();
        let dst = DiscreteMeasure::new(qts.clone()).unwrap();
        let src_t = DiscreteMeasure::new(pts.iter().map(|p| p + c).collect()).unwrap();
        let dst_t = DiscreteMeasure::new(qts.iter().map(|p| p + c).collect()).unwrap();
        let sigma = optimal_assignment(&src, &dst).unwrap();
        let sigma_t = optimal_assignment(&src_t, &dst_t).unwrap();
        assert_eq!(sigma, sigma_t);
    }

    #[test]
    fn quarter_turn_of_the_unit_square_costs_nothing() {
        // Rotating {0,1}^2 a quarter turn about its center permutes the four
        // corners, so the optimal assignment cost is zero; the exhaustive
        // search over all 24 pairings agrees.
        let src = DiscreteMeasure::new(grid_cloud(2, Vec2::zeros())).unwrap();
        let center = Vec2::new(0.5, 0.5);
        let rotated: Vec<Vec2> = src
            .points()
            .iter()
            .map(|p| {
                let d = p - center;
                center + Vec2::new(-d.y, d.x)
            })
            .collect();
        let dst = DiscreteMeasure::new(rotated).unwrap();
        let sigma = optimal_assignment(&src, &dst).unwrap();
        let sigma_x = exhaustive_assignment(&src, &dst).unwrap();
        let hungarian_cost = assignment_cost(&src, &dst, &sigma);
        let exhaustive_cost = assignment_cost(&src, &dst, &sigma_x);
        assert_relative_eq!(hungarian_cost, exhaustive_cost, epsilon = 1e-12);
        assert_relative_eq!(hungarian_cost, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn exact_matching_agrees_with_exhaustion_on_random_instances() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for _ in 0..300 {
            let m = rng.gen_range(2..=7);
            let pts: Vec<Vec2> = (0..m)
                .map(|_| Vec2::new(rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0)))
                .collect();
            let qts: Vec<Vec2> = (0..m)
                .map(|_| Vec2::new(rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0)))
                .collect();
            let src = DiscreteMeasure::new(pts).unwrap();
            let dst = DiscreteMeasure::new(qts).unwrap();
            let fast = assignment_cost(&src, &dst, &optimal_assignment(&src, &dst).unwrap());
            let slow = assignment_cost(&src, &dst, &exhaustive_assignment(&src, &dst).unwrap());
            assert_relative_eq!(fast, slow, epsilon = 1e-10, max_relative = 1e-10);
        }
    }

    #[test]
    fn optimal_pairings_are_cyclically_monotone() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let m = 40;
        let pts: Vec<Vec2> = (0..m)
            .map(|_| Vec2::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
            .collect();
        let qts: Vec<Vec2> = (0..m)
            .map(|_| Vec2::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
            .collect();
        let src = DiscreteMeasure::new(pts).unwrap();
        let dst = DiscreteMeasure::new(qts).unwrap();
        let sigma = optimal_assignment(&src, &dst).unwrap();
        for _ in 0..500 {
            let i = rng.gen_range(0..m);
            let j = rng.gen_range(0..m);
            let (xi, xj) = (src.points()[i], src.points()[j]);
            let (yi, yj) = (dst.points()[sigma[i]], dst.points()[sigma[j]]);
            let kept = (xi - yi).norm_squared() + (xj - yj).norm_squared();
            let swapped = (xi - yj).norm_squared() + (xj - yi).norm_squared();
            assert!(kept <= swapped + 1e-10);
        }
    }

    #[test]
    fn size_limits_are_enforced() {
        let a = DiscreteMeasure::new(vec![Vec2::zeros(); 3]).unwrap();
        let b = DiscreteMeasure::new(vec![Vec2::zeros(); 4]).unwrap();
        assert!(optimal_assignment(&a, &b).is_err());
        let big = DiscreteMeasure::new(vec![Vec2::zeros(); 401]).unwrap();
        assert!(optimal_assignment(&big, &big).is_err());
        let nine = DiscreteMeasure::new(vec![Vec2::zeros(); 9]).unwrap();
        assert!(exhaustive_assignment(&nine, &nine).is_err());
    }

    #[test]
    fn stratified_sampling_is_deterministic_and_inside() {
        let shape = SupportShape::Circle {
            center: Vec2::new(0.2, -0.1),
            radius: 0.7,
        };
        let a = stratified_points(&shape, 100);
        let b = stratified_points(&shape, 100);
        assert_eq!(a.len(), 100);
        for (p, q) in a.iter().zip(&b) {
            assert_eq!(p, q);
        }
        for p in &a {
            assert!(shape.contains(*p));
        }
        // The sample spreads over all four quadrants around the center.
        for (sx, sy) in [(1.0, 1.0), (1.0, -1.0), (-1.0, 1.0), (-1.0, -1.0)] {
            assert!(a
                .iter()
                .any(|p| sx * (p.x - 0.2) > 0.05 && sy * (p.y + 0.1) > 0.05));
        }
    }

    #[test]
    fn stratified_sampling_covers_both_split_lobes() {
        let shape = SupportShape::HalfDiskPair {
            left_center: Vec2::new(-0.2, 0.0),
            right_center: Vec2::new(0.1, 0.0),
            radius: 0.85,
        };
        let pts = stratified_points(&shape, 100);
        let left = pts.iter().filter(|p| p.x < -0.2).count();
        let right = pts.iter().filter(|p| p.x > 0.1).count();
        assert_eq!(left + right, 100);
        assert!(left >= 30 && right >= 30, "left {left}, right {right}");
    }

    #[test]
    fn cross_validation_of_an_exact_identity_map_is_tight() {
        let grid = Grid::new(-1.0, 1.0, 33).unwrap();
        let u = GridFunction::from_fn(&grid, |x| 0.5 * x.norm_squared());
        let map = extract_map(&u, &grid);
        let shape = SupportShape::Rect {
            lo: Vec2::new(-1.0, -1.0),
            hi: Vec2::new(1.0, 1.0),
        };
        let d = cross_validate(&map, &grid, &shape, &shape, 100).unwrap();
        assert!(d <= 1e-10, "discrepancy {d}");
    }
}
