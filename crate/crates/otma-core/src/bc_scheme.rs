//! Upwind discretizations of the Hamilton-Jacobi boundary condition.
//!
//! The second boundary value problem prescribes that the gradient maps the
//! source square onto the target set, which is imposed weakly through
//! `H(grad u) = 0` on the boundary, where `H` is the signed distance to the
//! target written as a supremum over unit directions:
//!
//! ```text
//!     H(p) = max_n ( n . p - H*(n) ),    H*(n) = sup_{y in Y} n . y.
//! ```
//!
//! At a boundary node only directions compatible with the available grid
//! neighbors are admissible: on an edge, directions within the outward
//! half-space (with a small angular margin); at a corner, directions in the
//! outward quadrant. For each admissible direction the advection `n . grad u`
//! is discretized with per-axis upwind differences (compact variant) or a
//! single interpolated step along `-n` (wide variant); both choices make every
//! neighbor coefficient nonpositive and the center coefficient nonnegative,
//! so the boundary rows are monotone.

use crate::error::{OtmaError, Result};
use crate::grid::{Grid, GridFunction};
use crate::ma_scheme::LocalRow;
use crate::target::{support_function, ConvexTarget, DirectionSet};
use crate::Vec2;

/// Components this close to zero are snapped to zero before upwinding, so a
/// direction that is tangential up to rounding never references a neighbor
/// outside the grid.
const SNAP_TOL: f64 = 1e-12;

/// Which boundary discretization to use.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BcKind {
    /// Per-axis upwind differences using only the nearest neighbors.
    Compact,
    /// One bilinear-interpolated step of length `h` along `-n`.
    Wide,
}

/// A single admissible direction with its precomputed support value.
#[derive(Debug, Clone, Copy)]
pub struct BcDirection {
    pub n: Vec2,
    pub support: f64,
}

/// Precomputed data for one boundary node: its outward normal and the
/// admissible directions with support values.
#[derive(Debug, Clone)]
pub struct BoundaryNodeContext {
    pub node: (usize, usize),
    pub normal: Vec2,
    pub dirs: Vec<BcDirection>,
}

/// Builds the contexts for every boundary node of the grid, in node order
/// (`i` fastest).
pub fn build_boundary_contexts(
    grid: &Grid,
    dirs: &DirectionSet,
    target: &ConvexTarget,
) -> Result<Vec<BoundaryNodeContext>> {
    let mut out = Vec::new();
    for (i, j) in grid.nodes() {
        let Some(normal) = grid.outward_normal(i, j) else {
            continue;
        };
        out.push(context_for_node(grid, (i, j), normal, dirs, target)?);
    }
    Ok(out)
}

fn context_for_node(
    grid: &Grid,
    node: (usize, usize),
    normal: Vec2,
    dirs: &DirectionSet,
    target: &ConvexTarget,
) -> Result<BoundaryNodeContext> {
    let (i, j) = node;
    let last = grid.n() - 1;
    let s1 = if i == 0 {
        -1.0
    } else if i == last {
        1.0
    } else {
        0.0
    };
    let s2 = if j == 0 {
        -1.0
    } else if j == last {
        1.0
    } else {
        0.0
    };
    let corner = s1 != 0.0 && s2 != 0.0;
    let margin = (dirs.dalpha() / 2.0).sin();
    let mut admissible = Vec::new();
    for &d in dirs.directions() {
        let keep = if corner {
            // Outward quadrant: both upwind differences must point inward.
            s1 * d.x >= -SNAP_TOL && s2 * d.y >= -SNAP_TOL
        } else {
            d.dot(&normal) > margin
        };
        if !keep {
            continue;
        }
        let mut n = d;
        if n.x.abs() <= SNAP_TOL {
            n.x = 0.0;
        }
        if n.y.abs() <= SNAP_TOL {
            n.y = 0.0;
        }
        let n = n.normalize();
        let support = support_function(n, target)?;
        admissible.push(BcDirection { n, support });
    }
    if admissible.is_empty() {
        return Err(OtmaError::EmptyDirectionSet(normal.x, normal.y));
    }
    Ok(BoundaryNodeContext {
        node,
        normal,
        dirs: admissible,
    })
}

/// Per-axis upwind advection `n . grad u` at the context's node. Components
/// point away from missing neighbors by construction of the admissible set.
fn compact_advection(u: &GridFunction, grid: &Grid, node: (usize, usize), n: Vec2) -> f64 {
    let (i, j) = node;
    let h = grid.h();
    let c = u[(i, j)];
    let mut adv = 0.0;
    if n.x > 0.0 {
        adv += n.x * (c - u[(i - 1, j)]) / h;
    } else if n.x < 0.0 {
        adv += -n.x * (c - u[(i + 1, j)]) / h;
    }
    if n.y > 0.0 {
        adv += n.y * (c - u[(i, j - 1)]) / h;
    } else if n.y < 0.0 {
        adv += -n.y * (c - u[(i, j + 1)]) / h;
    }
    adv
}

/// Bilinear interpolation of a grid function, clamped to the square.
pub fn bilinear_on_grid(u: &GridFunction, grid: &Grid, p: Vec2) -> f64 {
    let mut v = 0.0;
    for ((i, j), w) in bilinear_weights(grid, p) {
        v += w * u[(i, j)];
    }
    v
}

/// The four nodes and weights of the bilinear cell containing `p` (clamped).
pub fn bilinear_weights(grid: &Grid, p: Vec2) -> [((usize, usize), f64); 4] {
    let n = grid.n();
    let h = grid.h();
    let fx = ((p.x - grid.lower()) / h).clamp(0.0, (n - 1) as f64);
    let fy = ((p.y - grid.lower()) / h).clamp(0.0, (n - 1) as f64);
    let i = (fx.floor() as usize).min(n - 2);
    let j = (fy.floor() as usize).min(n - 2);
    let tx = fx - i as f64;
    let ty = fy - j as f64;
    [
        ((i, j), (1.0 - tx) * (1.0 - ty)),
        ((i + 1, j), tx * (1.0 - ty)),
        ((i, j + 1), (1.0 - tx) * ty),
        ((i + 1, j + 1), tx * ty),
    ]
}

fn wide_advection(u: &GridFunction, grid: &Grid, node: (usize, usize), n: Vec2) -> f64 {
    let h = grid.h();
    let foot = grid.pos(node.0, node.1) - h * n;
    (u[node] - bilinear_on_grid(u, grid, foot)) / h
}

/// Boundary residual `max_n ( advection - H*(n) )` at a context's node,
/// returning the value and the maximizing direction index.
pub fn hj_residual(
    u: &GridFunction,
    grid: &Grid,
    ctx: &BoundaryNodeContext,
    kind: BcKind,
) -> (f64, usize) {
    debug_assert!(!ctx.dirs.is_empty());
    let mut best = f64::NEG_INFINITY;
    let mut arg = 0;
    for (k, d) in ctx.dirs.iter().enumerate() {
        let adv = match kind {
            BcKind::Compact => compact_advection(u, grid, ctx.node, d.n),
            BcKind::Wide => wide_advection(u, grid, ctx.node, d.n),
        };
        let v = adv - d.support;
        if v > best {
            best = v;
            arg = k;
        }
    }
    (best, arg)
}

/// Derivative row of the residual's `which`-th direction (the active branch
/// frozen by the caller). Offsets are relative to the context's node.
pub fn hj_jacobian_row(
    grid: &Grid,
    ctx: &BoundaryNodeContext,
    kind: BcKind,
    which: usize,
) -> LocalRow {
    let h = grid.h();
    let n = ctx.dirs[which].n;
    let mut row = LocalRow::with_capacity(5);
    match kind {
        BcKind::Compact => {
            let mut center = 0.0;
            if n.x > 0.0 {
                center += n.x / h;
                row.push(((-1, 0), -n.x / h));
            } else if n.x < 0.0 {
                center += -n.x / h;
                row.push(((1, 0), n.x / h));
            }
            if n.y > 0.0 {
                center += n.y / h;
                row.push(((0, -1), -n.y / h));
            } else if n.y < 0.0 {
                center += -n.y / h;
                row.push(((0, 1), n.y / h));
            }
            row.push(((0, 0), center));
        }
        BcKind::Wide => {
            let (i, j) = ctx.node;
            let foot = grid.pos(i, j) - h * n;
            row.push(((0, 0), 1.0 / h));
            for ((fi, fj), w) in bilinear_weights(grid, foot) {
                if w != 0.0 {
                    row.push(((fi as i64 - i as i64, fj as i64 - j as i64), -w / h));
                }
            }
        }
    }
    row
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::target::signed_distance;
    use approx::assert_relative_eq;
    use std::f64::consts::PI;

    fn setup() -> (Grid, ConvexTarget, DirectionSet) {
        let grid = Grid::new(-1.0, 1.0, 5).unwrap();
        let target = ConvexTarget::square(0.5).unwrap();
        let dirs = DirectionSet::uniform(PI / 16.0).unwrap();
        (grid, target, dirs)
    }

    fn ctx_for(
        grid: &Grid,
        node: (usize, usize),
        dirs: &DirectionSet,
        target: &ConvexTarget,
    ) -> BoundaryNodeContext {
        let all = build_boundary_contexts(grid, dirs, target).unwrap();
        all.into_iter().find(|c| c.node == node).unwrap()
    }

    #[test]
    fn admissible_counts_on_edges_and_corners() {
        let (grid, target, dirs) = setup();
        // 32 uniform directions: an edge keeps the outward half minus the
        // two near-tangential ones, a corner keeps the closed quadrant.
        let edge = ctx_for(&grid, (4, 2), &dirs, &target);
        assert_eq!(edge.dirs.len(), 15);
        let corner = ctx_for(&grid, (4, 4), &dirs, &target);
        assert_eq!(corner.dirs.len(), 9);
        let corner2 = ctx_for(&grid, (0, 0), &dirs, &target);
        assert_eq!(corner2.dirs.len(), 9);
        // Snapping turns the exactly-tangential samples into axis vectors.
        assert!(corner
            .dirs
            .iter()
            .any(|d| d.n.x == 0.0 && (d.n.y - 1.0).abs() < 1e-15));
    }

    #[test]
    fn corner_directions_never_point_at_missing_neighbors() {
        let (grid, target, dirs) = setup();
        for node in [(0, 0), (4, 0), (0, 4), (4, 4)] {
            let ctx = ctx_for(&grid, node, &dirs, &target);
            let s1 = if node.0 == 0 { -1.0 } else { 1.0 };
            let s2 = if node.1 == 0 { -1.0 } else { 1.0 };
            for d in &ctx.dirs {
                assert!(s1 * d.n.x >= 0.0 && s2 * d.n.y >= 0.0, "{:?}", d.n);
            }
        }
    }

    #[test]
    fn residual_on_linear_data_matches_signed_distance() {
        // For u = p . x the upwind differences are exact, so the residual is
        // the discrete Hamiltonian of p; with the maximizer admissible it
        // matches the signed distance up to the angular resolution.
        let (grid, target, dirs) = setup();
        let u = GridFunction::from_fn(&grid, |x| 2.0 * x.x);
        let ctx = ctx_for(&grid, (4, 2), &dirs, &target);
        let (v, arg) = hj_residual(&u, &grid, &ctx, BcKind::Compact);
        assert_relative_eq!(v, 1.5, epsilon = 1e-12);
        assert_relative_eq!(signed_distance(Vec2::new(2.0, 0.0), &target), 1.5);
        assert_relative_eq!(ctx.dirs[arg].n.x, 1.0, epsilon = 1e-15);

        // Oblique gradient at the top-right corner: the maximizer is the
        // diagonal, giving the exact corner distance sqrt(2)/2.
        let u = GridFunction::from_fn(&grid, |x| x.x + x.y);
        let ctx = ctx_for(&grid, (4, 4), &dirs, &target);
        let (v, _) = hj_residual(&u, &grid, &ctx, BcKind::Compact);
        assert_relative_eq!(v, std::f64::consts::SQRT_2 / 2.0, epsilon = 1e-12);
    }

    #[test]
    fn residual_tracks_signed_distance_within_angular_resolution() {
        let (grid, target, dirs) = setup();
        let diam = target.diameter();
        for &(a, b) in &[(1.5, 0.4), (2.0, -0.9), (0.9, 0.1)] {
            let u = GridFunction::from_fn(&grid, |x| a * x.x + b * x.y);
            let ctx = ctx_for(&grid, (4, 2), &dirs, &target);
            let (v, _) = hj_residual(&u, &grid, &ctx, BcKind::Compact);
            let sd = signed_distance(Vec2::new(a, b), &target);
            assert!(
                (v - sd).abs() <= 2.0 * dirs.dalpha() * diam,
                "value {v} vs distance {sd}"
            );
        }
    }

    #[test]
    fn wide_and_compact_agree_on_linear_data() {
        let (grid, target, dirs) = setup();
        let u = GridFunction::from_fn(&grid, |x| 1.3 * x.x - 0.7 * x.y);
        for node in [(4, 2), (2, 0), (0, 3), (4, 4), (0, 0)] {
            let ctx = ctx_for(&grid, node, &dirs, &target);
            let (vc, _) = hj_residual(&u, &grid, &ctx, BcKind::Compact);
            let (vw, _) = hj_residual(&u, &grid, &ctx, BcKind::Wide);
            assert_relative_eq!(vc, vw, epsilon = 1e-12);
        }
    }

    #[test]
    fn residual_is_monotone_in_the_grid_values() {
        let (grid, target, dirs) = setup();
        let contexts = build_boundary_contexts(&grid, &dirs, &target).unwrap();
        let base = GridFunction::from_fn(&grid, |x| 0.8 * x.norm_squared() + 0.3 * x.x);
        for kind in [BcKind::Compact, BcKind::Wide] {
            for ctx in &contexts {
                let (v0, _) = hj_residual(&base, &grid, ctx, kind);
                for (i, j) in grid.nodes() {
                    let mut u = base.clone();
                    u[(i, j)] += 0.4;
                    let (v1, _) = hj_residual(&u, &grid, ctx, kind);
                    if (i, j) == ctx.node {
                        assert!(v1 >= v0 - 1e-12, "center bump decreased {:?}", ctx.node);
                    } else {
                        assert!(
                            v1 <= v0 + 1e-12,
                            "neighbor bump at {:?} raised the residual of {:?}",
                            (i, j),
                            ctx.node
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn jacobian_rows_match_finite_differences() {
        let (grid, target, dirs) = setup();
        let base = GridFunction::from_fn(&grid, |x| x.norm_squared() + 0.7 * x.x - 0.2 * x.y);
        for kind in [BcKind::Compact, BcKind::Wide] {
            for node in [(4, 2), (0, 0), (2, 4)] {
                let ctx = ctx_for(&grid, node, &dirs, &target);
                let (v0, arg) = hj_residual(&base, &grid, &ctx, kind);
                let row = hj_jacobian_row(&grid, &ctx, kind, arg);
                let t = 1e-7;
                let mut offsets: Vec<(i64, i64)> = row.iter().map(|(o, _)| *o).collect();
                offsets.sort();
                offsets.dedup();
                for off in offsets {
                    let target_node = (
                        (node.0 as i64 + off.0) as usize,
                        (node.1 as i64 + off.1) as usize,
                    );
                    let mut u = base.clone();
                    u[target_node] += t;
                    let (v1, arg1) = hj_residual(&u, &grid, &ctx, kind);
                    assert_eq!(arg1, arg, "active direction moved under a tiny bump");
                    let fd = (v1 - v0) / t;
                    let total: f64 =
                        row.iter().filter(|(o, _)| *o == off).map(|(_, c)| c).sum();
                    assert_relative_eq!(fd, total, epsilon = 1e-6, max_relative = 1e-6);
                }
            }
        }
    }

    #[test]
    fn jacobian_rows_annihilate_constants() {
        let (grid, target, dirs) = setup();
        let contexts = build_boundary_contexts(&grid, &dirs, &target).unwrap();
        for kind in [BcKind::Compact, BcKind::Wide] {
            for ctx in &contexts {
                for which in 0..ctx.dirs.len() {
                    let sum: f64 = hj_jacobian_row(&grid, ctx, kind, which)
                        .iter()
                        .map(|(_, c)| c)
                        .sum();
                    assert_relative_eq!(sum, 0.0, epsilon = 1e-12);
                }
            }
        }
    }

    #[test]
    fn contexts_cover_every_boundary_node() {
        let (grid, target, dirs) = setup();
        let contexts = build_boundary_contexts(&grid, &dirs, &target).unwrap();
        assert_eq!(contexts.len(), 16);
        assert!(contexts.iter().all(|c| c.normal.norm() > 0.99));
    }

    #[test]
    fn offset_targets_support_shifts_the_residual() {
        // Moving the target right by 0.3 lowers the residual of a rightward
        // gradient by exactly 0.3 (support of the shifted square).
        let grid = Grid::new(-1.0, 1.0, 5).unwrap();
        let dirs = DirectionSet::uniform(PI / 16.0).unwrap();
        let shifted = ConvexTarget::polygon(vec![
            Vec2::new(-0.2, -0.5),
            Vec2::new(0.8, -0.5),
            Vec2::new(0.8, 0.5),
            Vec2::new(-0.2, 0.5),
        ])
        .unwrap();
        let u = GridFunction::from_fn(&grid, |x| 2.0 * x.x);
        let ctx = ctx_for(&grid, (4, 2), &dirs, &shifted);
        let (v, _) = hj_residual(&u, &grid, &ctx, BcKind::Compact);
        assert_relative_eq!(v, 1.2, epsilon = 1e-12);
    }
}
