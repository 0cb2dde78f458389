//! Experiment catalog: canonical source/target pairs with their reference
//! maps, plus drivers that solve a single instance or sweep a refinement
//! table over grid size and target resolution.

use crate::bc_scheme::BcKind;
use crate::density::{AnalyticDensity, Density, SupportShape};
use crate::error::{OtmaError, Result};
use crate::grid::{Grid, GridFunction};
use crate::ma_scheme::SchemeParams;
use crate::solver::{extract_map, map_error, Problem, SolveParams, SolveReport};
use crate::target::{signed_distance, ConvexTarget, DirectionSet};
use crate::{Mat2, Vec2};
use std::f64::consts::PI;

/// Reference transport maps with known closed forms.
#[derive(Debug, Clone)]
pub enum ExactMap {
    Identity,
    /// `x -> A x` for a symmetric positive definite `A`.
    Linear(Mat2),
    /// Piecewise translation gluing two half-disks into one disk: each lobe
    /// translates onto the disk centered at the origin.
    SplitTranslation {
        left_center: Vec2,
        right_center: Vec2,
        radius: f64,
    },
}

impl ExactMap {
    /// Evaluates the reference map; `None` where it is not defined (outside
    /// the lobes of the split source).
    pub fn eval(&self, x: Vec2) -> Option<Vec2> {
        match self {
            ExactMap::Identity => Some(x),
            ExactMap::Linear(a) => Some(a * x),
            ExactMap::SplitTranslation {
                left_center,
                right_center,
                radius,
            } => {
                if x.x < left_center.x && (x - left_center).norm() < *radius {
                    Some(x - left_center)
                } else if x.x > right_center.x && (x - right_center).norm() < *radius {
                    Some(x - right_center)
                } else {
                    None
                }
            }
        }
    }
}

/// Target geometry that still needs a boundary resolution to become a
/// [`ConvexTarget`] and a support shape for its uniform density.
#[derive(Debug, Clone)]
pub enum TargetShape {
    Square { half: f64 },
    Ellipse(Mat2),
    Circle { center: Vec2, radius: f64 },
    Polygon(Vec<Vec2>),
    IcecreamCone,
    Bowl,
}

impl TargetShape {
    /// Materializes the target with `2 * ny` boundary samples on curved
    /// shapes; polygonal shapes keep their exact vertices.
    pub fn realize(&self, ny: usize) -> Result<(ConvexTarget, SupportShape)> {
        let samples = (2 * ny).max(8);
        match self {
            TargetShape::Square { half } => Ok((
                ConvexTarget::square(*half)?,
                SupportShape::Rect {
                    lo: Vec2::new(-half, -half),
                    hi: Vec2::new(*half, *half),
                },
            )),
            TargetShape::Ellipse(m) => Ok((
                ConvexTarget::ellipse(*m, samples)?,
                SupportShape::Ellipse(*m),
            )),
            TargetShape::Circle { center, radius } => Ok((
                ConvexTarget::circle(*center, *radius, samples)?,
                SupportShape::Circle {
                    center: *center,
                    radius: *radius,
                },
            )),
            TargetShape::Polygon(pts) => Ok((
                ConvexTarget::polygon(pts.clone())?,
                SupportShape::Polygon(pts.clone()),
            )),
            TargetShape::IcecreamCone => {
                let pts = icecream_cone_points(samples);
                Ok((
                    ConvexTarget::polygon(pts.clone())?,
                    SupportShape::Polygon(pts),
                ))
            }
            TargetShape::Bowl => {
                let pts = bowl_points(samples);
                Ok((
                    ConvexTarget::polygon(pts.clone())?,
                    SupportShape::Polygon(pts),
                ))
            }
        }
    }
}

/// Convex hull of the disk of radius 0.5 about (0, 0.3) and the tip
/// (0, -0.9): disk arc where the disk supports the direction, tip otherwise.
fn icecream_cone_points(samples: usize) -> Vec<Vec2> {
    let center = Vec2::new(0.0, 0.3);
    let r = 0.5;
    let tip = Vec2::new(0.0, -0.9);
    let mut pts: Vec<Vec2> = Vec::new();
    for k in 0..samples {
        let th = 2.0 * PI * (k as f64) / (samples as f64);
        let n = Vec2::new(th.cos(), th.sin());
        let p = if n.dot(&center) + r >= n.dot(&tip) {
            center + r * n
        } else {
            tip
        };
        if pts.last().map_or(true, |q| (q - p).norm() > 1e-12) {
            pts.push(p);
        }
    }
    dedup_wrap(pts)
}

/// Convex hull of the lower semicircle of radius 0.8 about (0, 0.2) and the
/// two upper corners (-0.8, 0.5), (0.8, 0.5).
fn bowl_points(samples: usize) -> Vec<Vec2> {
    let center = Vec2::new(0.0, 0.2);
    let r = 0.8;
    let mut candidates: Vec<Vec2> = Vec::new();
    let arc = 4 * samples;
    for k in 0..=arc {
        let phi = PI + PI * (k as f64) / (arc as f64);
        candidates.push(center + r * Vec2::new(phi.cos(), phi.sin()));
    }
    candidates.push(Vec2::new(0.8, 0.5));
    candidates.push(Vec2::new(-0.8, 0.5));
    let mut pts: Vec<Vec2> = Vec::new();
    for k in 0..samples {
        let th = 2.0 * PI * (k as f64) / (samples as f64);
        let n = Vec2::new(th.cos(), th.sin());
        let best = candidates
            .iter()
            .copied()
            .max_by(|a, b| n.dot(a).partial_cmp(&n.dot(b)).unwrap())
            .unwrap();
        if pts.last().map_or(true, |q| (q - best).norm() > 1e-12) {
            pts.push(best);
        }
    }
    dedup_wrap(pts)
}

fn dedup_wrap(mut pts: Vec<Vec2>) -> Vec<Vec2> {
    while pts.len() > 1 && (pts[0] - *pts.last().unwrap()).norm() <= 1e-12 {
        pts.pop();
    }
    pts
}

/// A named transport instance: square computational box, source density,
/// target geometry, and (when known) the exact map.
#[derive(Debug, Clone)]
pub struct ExperimentSpec {
    pub name: String,
    pub lo: f64,
    pub hi: f64,
    pub source: AnalyticDensity,
    pub target_shape: TargetShape,
    pub exact: Option<ExactMap>,
}

impl ExperimentSpec {
    /// Checks that the exact map (when present) sends sampled source-support
    /// points into the target, up to the target's boundary discretization.
    pub fn validate(&self) -> Result<()> {
        let Some(exact) = &self.exact else {
            return Ok(());
        };
        let (target, _) = self.target_shape.realize(128)?;
        let support = self.source.support();
        let tol = 1e-3 * (1.0 + target.diameter());
        let n = 41;
        for i in 0..n {
            for j in 0..n {
                let x = Vec2::new(
                    self.lo + (self.hi - self.lo) * (i as f64) / ((n - 1) as f64),
                    self.lo + (self.hi - self.lo) * (j as f64) / ((n - 1) as f64),
                );
                if !support.contains(x) {
                    continue;
                }
                if let Some(y) = exact.eval(x) {
                    let d = signed_distance(y, &target);
                    if d > tol {
                        return Err(OtmaError::InvalidTarget(format!(
                            "exact map sends {x:?} to {y:?}, outside the target by {d:.3e}"
                        )));
                    }
                }
            }
        }
        Ok(())
    }
}

/// Linear reference map between centered ellipses `Mx B_1 -> My B_1`: the
/// unique curl-free volume-scaling linear map, `A = My R(theta) Mx^{-1}`
/// with `tan(theta) = trace(Mx^{-1} My^{-1} J) / trace(Mx^{-1} My^{-1})`.
/// The tangent fixes `theta` only up to branch; the symmetry and positivity
/// of `A` (it is the gradient of a convex quadratic) select it.
pub fn exact_ellipse_map(mx: Mat2, my: Mat2) -> Result<Mat2> {
    for (name, m) in [("source", &mx), ("target", &my)] {
        let sym = (m[(0, 1)] - m[(1, 0)]).abs();
        if sym > 1e-12 || m[(0, 0)] <= 0.0 || m.determinant() <= 0.0 {
            return Err(OtmaError::InvalidTarget(format!(
                "{name} ellipse matrix must be symmetric positive definite, got {m:?}"
            )));
        }
    }
    let mxi = mx
        .try_inverse()
        .ok_or_else(|| OtmaError::InvalidTarget("source ellipse matrix is singular".into()))?;
    let myi = my
        .try_inverse()
        .ok_or_else(|| OtmaError::InvalidTarget("target ellipse matrix is singular".into()))?;
    let prod = mxi * myi;
    let j = Mat2::new(0.0, -1.0, 1.0, 0.0);
    let mut theta = ((prod * j).trace() / prod.trace()).atan();
    let build = |th: f64| my * Mat2::new(th.cos(), -th.sin(), th.sin(), th.cos()) * mxi;
    let scale = 1.0 + mx.norm() * myi.norm();
    let mut a = build(theta);
    if (a[(0, 1)] - a[(1, 0)]).abs() > 1e-10 * scale {
        theta = -theta;
        a = build(theta);
    }
    if a[(0, 0)] <= 0.0 {
        theta += PI;
        a = build(theta);
    }
    let symmetric = (a[(0, 1)] - a[(1, 0)]).abs() <= 1e-10 * scale;
    let spd = a[(0, 0)] > 0.0 && a.determinant() > 0.0;
    if !symmetric || !spd {
        return Err(OtmaError::EllipseMapBranch(format!(
            "no rotation branch yields a symmetric positive definite map (theta = {theta}, A = {a:?})"
        )));
    }
    Ok(a)
}

/// Source ellipse shape matrix used by [`ellipse_spec`].
pub fn ellipse_source_matrix() -> Mat2 {
    Mat2::new(0.8, 0.0, 0.0, 0.4)
}

/// Target ellipse shape matrix used by [`ellipse_spec`].
pub fn ellipse_target_matrix() -> Mat2 {
    Mat2::new(0.6, 0.2, 0.2, 0.8)
}

/// Uniform ellipse onto a rotated, sheared uniform ellipse; the exact map is
/// linear.
pub fn ellipse_spec() -> Result<ExperimentSpec> {
    let mx = ellipse_source_matrix();
    let my = ellipse_target_matrix();
    let a = exact_ellipse_map(mx, my)?;
    Ok(ExperimentSpec {
        name: "ellipse".into(),
        lo: -1.0,
        hi: 1.0,
        source: AnalyticDensity::Uniform(SupportShape::Ellipse(mx)),
        target_shape: TargetShape::Ellipse(my),
        exact: Some(ExactMap::Linear(a)),
    })
}

/// Two half-disks (cut from disks centered at (-0.2, 0) and (0.1, 0), radius
/// 0.85) onto the single disk of radius 0.85 at the origin; the exact map
/// translates each lobe onto the disk.
pub fn split_spec() -> ExperimentSpec {
    let left_center = Vec2::new(-0.2, 0.0);
    let right_center = Vec2::new(0.1, 0.0);
    let radius = 0.85;
    ExperimentSpec {
        name: "split".into(),
        lo: -1.1,
        hi: 1.1,
        source: AnalyticDensity::Uniform(SupportShape::HalfDiskPair {
            left_center,
            right_center,
            radius,
        }),
        target_shape: TargetShape::Circle {
            center: Vec2::new(0.0, 0.0),
            radius,
        },
        exact: Some(ExactMap::SplitTranslation {
            left_center,
            right_center,
            radius,
        }),
    }
}

/// Uniform square onto itself; the exact map is the identity.
pub fn identity_spec() -> ExperimentSpec {
    ExperimentSpec {
        name: "gallery:square".into(),
        lo: -1.0,
        hi: 1.0,
        source: AnalyticDensity::Uniform(SupportShape::Rect {
            lo: Vec2::new(-1.0, -1.0),
            hi: Vec2::new(1.0, 1.0),
        }),
        target_shape: TargetShape::Square { half: 1.0 },
        exact: Some(ExactMap::Identity),
    }
}

/// Names accepted by [`gallery_spec`].
pub const GALLERY_SHAPES: [&str; 6] = [
    "square",
    "circle",
    "triangle",
    "diamond",
    "icecream-cone",
    "bowl",
];

/// Uniform square onto a named convex shape. Only the square has an exact
/// map; the others are judged by pushforward containment.
pub fn gallery_spec(shape: &str) -> Result<ExperimentSpec> {
    if shape == "square" {
        return Ok(identity_spec());
    }
    let target_shape = match shape {
        "circle" => TargetShape::Circle {
            center: Vec2::new(0.0, 0.0),
            radius: 0.85,
        },
        "triangle" => TargetShape::Polygon(vec![
            Vec2::new(-0.9, -0.7),
            Vec2::new(0.9, -0.7),
            Vec2::new(0.0, 0.9),
        ]),
        "diamond" => TargetShape::Polygon(vec![
            Vec2::new(0.9, 0.0),
            Vec2::new(0.0, 0.9),
            Vec2::new(-0.9, 0.0),
            Vec2::new(0.0, -0.9),
        ]),
        "icecream-cone" | "cone" => TargetShape::IcecreamCone,
        "bowl" => TargetShape::Bowl,
        other => {
            return Err(OtmaError::Config(format!(
                "unknown gallery shape '{other}' (expected one of {GALLERY_SHAPES:?})"
            )))
        }
    };
    Ok(ExperimentSpec {
        name: format!("gallery:{shape}"),
        lo: -1.0,
        hi: 1.0,
        source: AnalyticDensity::Uniform(SupportShape::Rect {
            lo: Vec2::new(-1.0, -1.0),
            hi: Vec2::new(1.0, 1.0),
        }),
        target_shape,
        exact: None,
    })
}

/// Looks an experiment up by CLI name: `ellipse`, `split`, or
/// `gallery:<shape>`.
pub fn spec_by_name(name: &str) -> Result<ExperimentSpec> {
    match name {
        "ellipse" => ellipse_spec(),
        "split" => Ok(split_spec()),
        "identity" => Ok(identity_spec()),
        other => match other.strip_prefix("gallery:") {
            Some(shape) => gallery_spec(shape),
            None => Err(OtmaError::Config(format!(
                "unknown experiment '{other}' (expected ellipse, split, or gallery:<shape>)"
            ))),
        },
    }
}

/// Discretization and solver choices for one run.
#[derive(Debug, Clone)]
pub struct RunOptions {
    pub stencil_width: i32,
    /// Angular resolution of the boundary-condition direction set;
    /// `None` selects `pi / ny`.
    pub dalpha: Option<f64>,
    pub bc: BcKind,
    pub params: SchemeParams,
    pub solve: SolveParams,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions {
            stencil_width: 2,
            dalpha: None,
            bc: BcKind::Compact,
            params: SchemeParams::default(),
            solve: SolveParams::default(),
        }
    }
}

/// Everything produced by one solve.
#[derive(Debug)]
pub struct RunResult {
    pub problem: Problem,
    pub u: GridFunction,
    pub map: Vec<Vec2>,
    pub report: SolveReport,
    /// Max-norm map discrepancy on the source support, when an exact map
    /// exists.
    pub map_error: Option<f64>,
    pub dalpha: f64,
    pub nx: usize,
    pub ny: usize,
}

/// Builds the [`Problem`] for a spec without solving it; optional
/// replacement densities (for externally supplied data) stand in for the
/// spec's analytic ones.
pub fn build_problem_with(
    spec: &ExperimentSpec,
    nx: usize,
    ny: usize,
    opts: &RunOptions,
    rho_x_override: Option<&Density>,
    rho_y_override: Option<&Density>,
) -> Result<Problem> {
    let grid = Grid::new(spec.lo, spec.hi, nx)?;
    let rho_x = match rho_x_override {
        Some(d) => d.clone(),
        None => Density::analytic(
            spec.source.clone(),
            Vec2::new(spec.lo, spec.lo),
            Vec2::new(spec.hi, spec.hi),
            nx,
        )?,
    };
    let (target, support) = spec.target_shape.realize(ny)?;
    let rho_y = match rho_y_override {
        Some(d) => d.clone(),
        None => Density::analytic_on_bbox(AnalyticDensity::Uniform(support), ny.max(2))?,
    };
    let dalpha = opts.dalpha.unwrap_or(PI / ny as f64);
    let dirs = DirectionSet::uniform(dalpha)?;
    Problem::new(
        grid,
        opts.stencil_width,
        &rho_x,
        &rho_y,
        target,
        dirs,
        opts.bc,
        opts.params.clone(),
    )
}

/// Builds the [`Problem`] for a spec without solving it.
pub fn build_problem(
    spec: &ExperimentSpec,
    nx: usize,
    ny: usize,
    opts: &RunOptions,
) -> Result<Problem> {
    build_problem_with(spec, nx, ny, opts, None, None)
}

/// Largest grid solved from the default initial guess; finer grids are
/// warm-started from a coarser solve instead (see [`cascade_init`]).
const DIRECT_SOLVE_LIMIT: usize = 64;

/// Catmull-Rom interpolation of grid values at an arbitrary point, with
/// linear mirror extension past the edges. Bilinear lifting is useless as a
/// warm start here: it is flat inside each coarse cell, so the lifted iterate
/// presents zero axis curvature to the scheme; the cubic kernel reproduces
/// the coarse solution's second differences instead.
fn bicubic_on_grid(u: &GridFunction, grid: &Grid, p: Vec2) -> f64 {
    let n = grid.n() as i64;
    let h = grid.h();
    // Each out-of-range index resolves to a weighted pair of edge nodes
    // (linear mirror); corner ghosts compose the two axis resolutions.
    let resolve = |k: i64| -> [(usize, f64); 2] {
        if k < 0 {
            [(0, 2.0), (1, -1.0)]
        } else if k >= n {
            [((n - 1) as usize, 2.0), ((n - 2) as usize, -1.0)]
        } else {
            [(k as usize, 1.0), (0, 0.0)]
        }
    };
    let fetch = |i: i64, j: i64| -> f64 {
        let mut v = 0.0;
        for (a, wa) in resolve(i) {
            if wa == 0.0 {
                continue;
            }
            for (b, wb) in resolve(j) {
                if wb == 0.0 {
                    continue;
                }
                v += wa * wb * u[(a, b)];
            }
        }
        v
    };
    let cr = |vm1: f64, v0: f64, v1: f64, v2: f64, t: f64| -> f64 {
        0.5 * (2.0 * v0
            + (v1 - vm1) * t
            + (2.0 * vm1 - 5.0 * v0 + 4.0 * v1 - v2) * t * t
            + (3.0 * (v0 - v1) + v2 - vm1) * t * t * t)
    };
    let fx = ((p.x - grid.lower()) / h).clamp(0.0, (n - 1) as f64);
    let fy = ((p.y - grid.lower()) / h).clamp(0.0, (n - 1) as f64);
    let (ix, iy) = (
        (fx.floor() as i64).min(n - 2),
        (fy.floor() as i64).min(n - 2),
    );
    let (tx, ty) = (fx - ix as f64, fy - iy as f64);
    let mut rows = [0.0f64; 4];
    for (r, row) in rows.iter_mut().enumerate() {
        let j = iy - 1 + r as i64;
        *row = cr(
            fetch(ix - 1, j),
            fetch(ix, j),
            fetch(ix + 1, j),
            fetch(ix + 2, j),
            tx,
        );
    }
    cr(rows[0], rows[1], rows[2], rows[3], ty)
}

/// Coarse-to-fine continuation: solves the same problem on a half-resolution
/// grid (recursively) and lifts the potential to the requested grid by
/// bilinear interpolation. A cold start on a fine grid can wander into a
/// locally non-convex iterate that Newton cannot leave, and the monotone
/// relaxation moves too slowly at fine resolution to repair that within its
/// budget; the lifted coarse solution starts Newton inside its basin. Any
/// coarse-level failure falls back to the default initial guess.
fn cascade_init(
    spec: &ExperimentSpec,
    nx: usize,
    ny: usize,
    opts: &RunOptions,
    rho_x_override: Option<&Density>,
    rho_y_override: Option<&Density>,
    fine: &Grid,
) -> Option<GridFunction> {
    if nx <= DIRECT_SOLVE_LIMIT {
        return None;
    }
    let nc = nx.div_ceil(2);
    let problem = build_problem_with(spec, nc, ny, opts, rho_x_override, rho_y_override).ok()?;
    let init = cascade_init(spec, nc, ny, opts, rho_x_override, rho_y_override, problem.grid());
    let (u, report) = problem.solve(init.as_ref(), &opts.solve).ok()?;
    if std::env::var_os("OTMA_TRACE").is_some() {
        eprintln!(
            "trace cascade level n={nc} converged={} residual {:.3e} newton {} euler {}",
            report.converged, report.final_residual, report.iterations, report.euler_steps
        );
    }
    let coarse = problem.grid();
    let mut lifted = GridFunction::from_fn(fine, |x| bicubic_on_grid(&u, coarse, x));
    convexify(&mut lifted, fine);
    Some(lifted)
}

/// Repairs the small non-convex pockets a cubic lift leaves behind: the
/// interpolant overshoots across the curvature crease at the support
/// boundary, and the resulting negative-curvature dimples survive monotone
/// relaxation (whose clamped products do not see them) while stalling the
/// damped Newton iteration. Lowering every interior value onto the average
/// of its neighbors along each stencil direction wherever it pokes above
/// restores directional convexity; genuinely convex regions are untouched.
fn convexify(u: &mut GridFunction, grid: &Grid) {
    const DIRS: [(usize, usize); 4] = [(1, 0), (0, 1), (1, 1), (1, usize::MAX)];
    let n = grid.n();
    for _ in 0..64 {
        let mut worst = 0.0f64;
        for j in 1..n - 1 {
            for i in 1..n - 1 {
                let mut cap = f64::INFINITY;
                for &(di, dj) in &DIRS {
                    let (pj, mj) = if dj == usize::MAX {
                        (j - 1, j + 1)
                    } else {
                        (j + dj, j - dj)
                    };
                    let avg = 0.5 * (u[(i + di, pj)] + u[(i - di, mj)]);
                    cap = cap.min(avg);
                }
                let k = grid.idx(i, j);
                let v = u.values()[k];
                if v > cap {
                    worst = worst.max(v - cap);
                    u.values_mut()[k] = cap;
                }
            }
        }
        if worst < 1e-12 {
            break;
        }
    }
}

/// Solves one instance and measures the map against the exact reference when
/// one is available. Replacement densities disable the exact-map comparison:
/// the reference only describes the shipped pair.
pub fn run_with_overrides(
    spec: &ExperimentSpec,
    nx: usize,
    ny: usize,
    opts: &RunOptions,
    rho_x_override: Option<&Density>,
    rho_y_override: Option<&Density>,
) -> Result<RunResult> {
    let overridden = rho_x_override.is_some() || rho_y_override.is_some();
    let problem = build_problem_with(spec, nx, ny, opts, rho_x_override, rho_y_override)?;
    let init = cascade_init(
        spec,
        nx,
        ny,
        opts,
        rho_x_override,
        rho_y_override,
        problem.grid(),
    );
    let (u, report) = problem.solve(init.as_ref(), &opts.solve)?;
    let map = extract_map(&u, problem.grid());
    let support = spec.source.support().clone();
    let err = spec
        .exact
        .as_ref()
        .filter(|_| !overridden)
        .map(|exact| {
            map_error(&map, problem.grid(), |x| {
                if support.contains(x) {
                    exact.eval(x)
                } else {
                    None
                }
            })
        });
    let dalpha = opts.dalpha.unwrap_or(PI / ny as f64);
    Ok(RunResult {
        problem,
        u,
        map,
        report,
        map_error: err,
        dalpha,
        nx,
        ny,
    })
}

/// Solves one instance with the spec's own densities.
pub fn run_experiment(
    spec: &ExperimentSpec,
    nx: usize,
    ny: usize,
    opts: &RunOptions,
) -> Result<RunResult> {
    run_with_overrides(spec, nx, ny, opts, None, None)
}

/// Pushforward containment metric: the largest signed distance from a mapped
/// support node to the target (positive values are overshoots).
pub fn containment_metric(result: &RunResult, source: &AnalyticDensity) -> f64 {
    let grid = result.problem.grid();
    let support = source.support();
    let mut worst = f64::NEG_INFINITY;
    for (idx, (i, j)) in grid.nodes().enumerate() {
        if support.contains(grid.pos(i, j)) {
            worst = worst.max(signed_distance(result.map[idx], result.problem.target()));
        }
    }
    worst
}

/// Map-error table over a grid-size by target-resolution sweep. Failed or
/// non-converged cells hold NaN.
#[derive(Debug, Clone)]
pub struct ErrorTable {
    pub experiment: String,
    pub nx: Vec<usize>,
    pub ny: Vec<usize>,
    /// `errors[i][j]` pairs `nx[i]` with `ny[j]`.
    pub errors: Vec<Vec<f64>>,
    pub converged: Vec<Vec<bool>>,
    /// `(nx, ny, message)` for cells whose solve failed outright.
    pub failures: Vec<(usize, usize, String)>,
}

/// Sweeps the grid sizes and target resolutions; each cell is an independent
/// solve. Requires an experiment with an exact map.
pub fn run_table(
    spec: &ExperimentSpec,
    nx_list: &[usize],
    ny_list: &[usize],
    opts: &RunOptions,
) -> Result<ErrorTable> {
    if spec.exact.is_none() {
        return Err(OtmaError::Config(format!(
            "experiment '{}' has no exact map to tabulate against",
            spec.name
        )));
    }
    let mut errors = Vec::with_capacity(nx_list.len());
    let mut converged = Vec::with_capacity(nx_list.len());
    let mut failures = Vec::new();
    for &nx in nx_list {
        let mut row_err = Vec::with_capacity(ny_list.len());
        let mut row_conv = Vec::with_capacity(ny_list.len());
        for &ny in ny_list {
            match run_experiment(spec, nx, ny, opts) {
                Ok(res) if res.report.converged => {
                    row_err.push(res.map_error.unwrap_or(f64::NAN));
                    row_conv.push(true);
                }
                Ok(res) => {
                    row_err.push(f64::NAN);
                    row_conv.push(false);
                    failures.push((
                        nx,
                        ny,
                        format!(
                            "did not converge: residual {:.3e} after {} iterations",
                            res.report.final_residual, res.report.iterations
                        ),
                    ));
                }
                Err(e) => {
                    row_err.push(f64::NAN);
                    row_conv.push(false);
                    failures.push((nx, ny, e.to_string()));
                }
            }
        }
        errors.push(row_err);
        converged.push(row_conv);
    }
    Ok(ErrorTable {
        experiment: spec.name.clone(),
        nx: nx_list.to_vec(),
        ny: ny_list.to_vec(),
        errors,
        converged,
        failures,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn ellipse_map_identity_case() {
        let a = exact_ellipse_map(Mat2::identity(), Mat2::identity()).unwrap();
        assert_relative_eq!(a[(0, 0)], 1.0, epsilon = 1e-12);
        assert_relative_eq!(a[(0, 1)], 0.0, epsilon = 1e-12);
        assert_relative_eq!(a[(1, 0)], 0.0, epsilon = 1e-12);
        assert_relative_eq!(a[(1, 1)], 1.0, epsilon = 1e-12);
    }

    #[test]
    fn ellipse_map_reference_case_is_frozen() {
        let a = exact_ellipse_map(ellipse_source_matrix(), ellipse_target_matrix()).unwrap();
        assert_relative_eq!(a[(0, 0)], 0.7711538, epsilon = 1e-6);
        assert_relative_eq!(a[(0, 1)], 0.3482630, epsilon = 1e-6);
        assert_relative_eq!(a[(1, 0)], 0.3482630, epsilon = 1e-6);
        assert_relative_eq!(a[(1, 1)], 1.9403225, epsilon = 1e-6);
        assert_relative_eq!(a.determinant(), 1.375, epsilon = 1e-10);
        // Eigenvalues pin the shape beyond the entries.
        let tr = a.trace();
        let disc = (tr * tr - 4.0 * a.determinant()).sqrt();
        assert_relative_eq!(0.5 * (tr + disc), 2.0361983, epsilon = 1e-6);
        assert_relative_eq!(0.5 * (tr - disc), 0.6752780, epsilon = 1e-6);
    }

    #[test]
    fn ellipse_map_sends_boundary_to_boundary() {
        let mx = ellipse_source_matrix();
        let my = ellipse_target_matrix();
        let a = exact_ellipse_map(mx, my).unwrap();
        let myi = my.try_inverse().unwrap();
        for k in 0..1000 {
            let th = 2.0 * PI * (k as f64) / 1000.0;
            let x = mx * Vec2::new(th.cos(), th.sin());
            let y = a * x;
            assert_relative_eq!((myi * y).norm(), 1.0, epsilon = 1e-10);
        }
    }

    #[test]
    fn ellipse_map_scales_area_correctly() {
        let mx = Mat2::new(2.0, 0.0, 0.0, 1.0);
        let my = Mat2::new(1.0, 0.0, 0.0, 2.0);
        let a = exact_ellipse_map(mx, my).unwrap();
        assert_relative_eq!(a[(0, 1)], a[(1, 0)], epsilon = 1e-12);
        let area_x = PI * mx.determinant();
        let area_y = PI * my.determinant();
        assert_relative_eq!(a.determinant() * area_x, area_y, epsilon = 1e-10);
    }

    #[test]
    fn ellipse_map_rejects_asymmetric_input() {
        let bad = Mat2::new(1.0, 0.3, -0.3, 1.0);
        assert!(exact_ellipse_map(bad, Mat2::identity()).is_err());
    }

    #[test]
    fn split_map_translates_each_lobe() {
        let spec = split_spec();
        let exact = spec.exact.clone().unwrap();
        let left = Vec2::new(-0.5, 0.1);
        assert_relative_eq!(
            (exact.eval(left).unwrap() - Vec2::new(-0.3, 0.1)).norm(),
            0.0,
            epsilon = 1e-12
        );
        let right = Vec2::new(0.4, -0.2);
        assert_relative_eq!(
            (exact.eval(right).unwrap() - Vec2::new(0.3, -0.2)).norm(),
            0.0,
            epsilon = 1e-12
        );
        // The strip between the cut lines carries no source mass.
        assert!(exact.eval(Vec2::new(-0.05, 0.0)).is_none());
        assert!(exact.eval(Vec2::new(2.0, 0.0)).is_none());
    }

    #[test]
    fn shipped_specs_pass_validation() {
        ellipse_spec().unwrap().validate().unwrap();
        split_spec().validate().unwrap();
        identity_spec().validate().unwrap();
    }

    #[test]
    fn gallery_shapes_realize_as_convex_targets() {
        for name in GALLERY_SHAPES {
            let spec = gallery_spec(name).unwrap();
            let (target, support) = spec.target_shape.realize(32).unwrap();
            assert!(support.contains(target.centroid()), "{name}");
            let (lo, hi) = target.bbox();
            assert!(lo.x >= -1.0 - 1e-9 && hi.x <= 1.0 + 1e-9, "{name}");
            assert!(lo.y >= -1.0 - 1e-9 && hi.y <= 1.0 + 1e-9, "{name}");
        }
    }

    #[test]
    fn icecream_cone_keeps_its_tip() {
        let pts = icecream_cone_points(64);
        let tip = Vec2::new(0.0, -0.9);
        assert!(pts.iter().any(|p| (p - tip).norm() < 1e-12));
        // Strictly one copy of the tip after deduplication.
        assert_eq!(pts.iter().filter(|p| (*p - tip).norm() < 1e-12).count(), 1);
    }

    #[test]
    fn bowl_keeps_its_corners_and_rim() {
        let pts = bowl_points(64);
        for corner in [Vec2::new(0.8, 0.5), Vec2::new(-0.8, 0.5)] {
            assert!(pts.iter().any(|p| (p - corner).norm() < 1e-12));
        }
        let bottom = Vec2::new(0.0, -0.6);
        assert!(pts.iter().any(|p| (p - bottom).norm() < 1e-6));
    }

    #[test]
    fn unknown_names_are_rejected() {
        assert!(gallery_spec("pentagon").is_err());
        assert!(spec_by_name("sphere").is_err());
    }

    #[test]
    fn identity_run_recovers_the_identity() {
        let spec = identity_spec();
        let res = run_experiment(&spec, 17, 16, &RunOptions::default()).unwrap();
        assert!(res.report.converged);
        let h = res.problem.grid().h();
        let err = res.map_error.unwrap();
        assert!(err <= 2.0 * (h + res.dalpha), "{err}");
        let cont = containment_metric(&res, &spec.source);
        assert!(cont <= 2.0 * h, "containment {cont}");
    }

    #[test]
    fn table_records_failures_as_nan() {
        let spec = identity_spec();
        let opts = RunOptions {
            solve: SolveParams {
                max_newton: 0,
                max_euler: 0,
                ..SolveParams::default()
            },
            ..RunOptions::default()
        };
        let table = run_table(&spec, &[9], &[8], &opts).unwrap();
        assert!(table.errors[0][0].is_nan());
        assert!(!table.converged[0][0]);
        assert_eq!(table.failures.len(), 1);
    }

    #[test]
    fn table_requires_an_exact_map() {
        let spec = gallery_spec("circle").unwrap();
        assert!(run_table(&spec, &[9], &[8], &RunOptions::default()).is_err());
    }
}
