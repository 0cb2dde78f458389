//! Uniform square grid, wide difference stencils, and finite differences.
//!
//! The computational domain is always the square `[a, b]^2` discretized with
//! `n` nodes per side, spacing `h = (b - a) / (n - 1)`. Wide stencils collect
//! gcd-reduced integer directions together with their 90-degree rotations, so
//! each entry provides an orthogonal pair of second differences
//!
//! ```text
//!     D_vv u = ( u(x + v h) + u(x - v h) - 2 u(x) ) / (|v|^2 h^2).
//! ```
//!
//! Near the edge of the square, pairs whose offsets would leave the grid are
//! dropped (`trim_stencil`); the axis pair always survives at interior nodes,
//! so the trimmed stencil is never empty there.

use crate::error::{OtmaError, Result};
use crate::Vec2;

/// Classification of a grid node.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NodeClass {
    /// Strictly inside the square; carries the Monge-Ampere operator.
    Interior,
    /// On the edge of the square; carries the Hamilton-Jacobi condition.
    Boundary,
    /// Outside the active region. Never produced for the square domain, but
    /// kept so masked domains can reuse the vocabulary.
    Exterior,
}

/// Uniform grid over the square `[a, b]^2`.
#[derive(Debug, Clone, Copy)]
pub struct Grid {
    a: f64,
    b: f64,
    n: usize,
    h: f64,
}

impl Grid {
    /// Builds the grid with `n` nodes per side over `[a, b]^2`.
    pub fn new(a: f64, b: f64, n: usize) -> Result<Self> {
        if !(b > a) || !a.is_finite() || !b.is_finite() {
            return Err(OtmaError::InvalidDiscretization(format!(
                "grid bounds must satisfy a < b, got [{a}, {b}]"
            )));
        }
        if n < 3 {
            return Err(OtmaError::InvalidDiscretization(format!(
                "grid needs at least 3 nodes per side, got {n}"
            )));
        }
        Ok(Grid {
            a,
            b,
            n,
            h: (b - a) / (n - 1) as f64,
        })
    }

    pub fn lower(&self) -> f64 {
        self.a
    }

    pub fn upper(&self) -> f64 {
        self.b
    }

    /// Nodes per side.
    pub fn n(&self) -> usize {
        self.n
    }

    /// Grid spacing.
    pub fn h(&self) -> f64 {
        self.h
    }

    /// Total node count `n * n`.
    pub fn num_nodes(&self) -> usize {
        self.n * self.n
    }

    /// Flat index of node `(i, j)`; `i` runs along x, `j` along y.
    pub fn idx(&self, i: usize, j: usize) -> usize {
        debug_assert!(i < self.n && j < self.n);
        j * self.n + i
    }

    /// Inverse of [`Grid::idx`].
    pub fn node_of(&self, idx: usize) -> (usize, usize) {
        (idx % self.n, idx / self.n)
    }

    /// Physical coordinates of node `(i, j)`.
    pub fn pos(&self, i: usize, j: usize) -> Vec2 {
        Vec2::new(self.a + self.h * i as f64, self.a + self.h * j as f64)
    }

    /// Whether signed indices stay on the grid.
    pub fn in_bounds(&self, i: i64, j: i64) -> bool {
        i >= 0 && j >= 0 && (i as usize) < self.n && (j as usize) < self.n
    }

    /// Node classification; the square produces only interior and boundary.
    pub fn class(&self, i: usize, j: usize) -> NodeClass {
        if i == 0 || j == 0 || i == self.n - 1 || j == self.n - 1 {
            NodeClass::Boundary
        } else {
            NodeClass::Interior
        }
    }

    /// Outward unit normal for boundary nodes (diagonal at corners), `None`
    /// for interior nodes.
    pub fn outward_normal(&self, i: usize, j: usize) -> Option<Vec2> {
        let mut nx = 0.0;
        let mut ny = 0.0;
        if i == 0 {
            nx = -1.0;
        } else if i == self.n - 1 {
            nx = 1.0;
        }
        if j == 0 {
            ny = -1.0;
        } else if j == self.n - 1 {
            ny = 1.0;
        }
        if nx == 0.0 && ny == 0.0 {
            None
        } else {
            Some(Vec2::new(nx, ny).normalize())
        }
    }

    /// Iterator over all `(i, j)` nodes, `i` fastest.
    pub fn nodes(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        let n = self.n;
        (0..n).flat_map(move |j| (0..n).map(move |i| (i, j)))
    }
}

/// Scalar grid function stored node-by-node (same layout as [`Grid::idx`]).
#[derive(Debug, Clone, PartialEq)]
pub struct GridFunction {
    n: usize,
    values: Vec<f64>,
}

impl GridFunction {
    /// All-zero function on the grid.
    pub fn zeros(grid: &Grid) -> Self {
        GridFunction {
            n: grid.n(),
            values: vec![0.0; grid.num_nodes()],
        }
    }

    /// Samples `f` at every node.
    pub fn from_fn(grid: &Grid, mut f: impl FnMut(Vec2) -> f64) -> Self {
        let n = grid.n();
        let mut values = Vec::with_capacity(grid.num_nodes());
        for j in 0..n {
            for i in 0..n {
                values.push(f(grid.pos(i, j)));
            }
        }
        GridFunction { n, values }
    }

    /// Wraps an existing flat vector (length must be `n * n`).
    pub fn from_values(n: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != n * n {
            return Err(OtmaError::InvalidDiscretization(format!(
                "grid function needs {} values, got {}",
                n * n,
                values.len()
            )));
        }
        Ok(GridFunction { n, values })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    /// Max-norm over all nodes.
    pub fn norm_inf(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// True when every entry is finite.
    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }
}

impl std::ops::Index<(usize, usize)> for GridFunction {
    type Output = f64;
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.values[j * self.n + i]
    }
}

impl std::ops::IndexMut<(usize, usize)> for GridFunction {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.values[j * self.n + i]
    }
}

/// An orthogonal pair of grid directions used for directional second
/// differences. Both entries are gcd-reduced integer vectors of equal length;
/// the second is the 90-degree rotation of the first.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StencilPair {
    pub first: (i32, i32),
    pub second: (i32, i32),
}

/// The set of orthogonal direction pairs for a given stencil width, together
/// with the worst angular resolution `dtheta` of the direction inventory.
#[derive(Debug, Clone)]
pub struct StencilSet {
    width: i32,
    pairs: Vec<StencilPair>,
    dtheta: f64,
}

impl StencilSet {
    pub fn width(&self) -> i32 {
        self.width
    }

    pub fn pairs(&self) -> &[StencilPair] {
        &self.pairs
    }

    /// Largest angular gap between consecutive stencil directions (mod pi).
    pub fn dtheta(&self) -> f64 {
        self.dtheta
    }
}

/// Builds the wide stencil of the given width (1, 2, or 3).
///
/// Width 1 yields the axis and diagonal pairs (`dtheta = pi/4`); width 2 adds
/// the knight-move pairs (`dtheta = atan(1/2)`); width 3 refines further
/// (`dtheta = atan(1/3)`).
pub fn build_stencil(width: i32) -> Result<StencilSet> {
    if !(1..=3).contains(&width) {
        return Err(OtmaError::InvalidDiscretization(format!(
            "stencil width must be 1, 2, or 3, got {width}"
        )));
    }
    // First directions with angle in [0, pi/2); partners are their rotations.
    let mut firsts: Vec<(i32, i32)> = Vec::new();
    for p in 1..=width {
        for q in 0..=width {
            if gcd(p, q) == 1 {
                firsts.push((p, q));
            }
        }
    }
    firsts.sort_by(|a, b| {
        let ta = (a.1 as f64).atan2(a.0 as f64);
        let tb = (b.1 as f64).atan2(b.0 as f64);
        ta.partial_cmp(&tb).unwrap()
    });
    let pairs: Vec<StencilPair> = firsts
        .iter()
        .map(|&(p, q)| StencilPair {
            first: (p, q),
            second: (-q, p),
        })
        .collect();
    let dtheta = direction_resolution(&pairs);
    Ok(StencilSet {
        width,
        pairs,
        dtheta,
    })
}

/// Largest angular gap (mod pi) of the directions contained in `pairs`.
fn direction_resolution(pairs: &[StencilPair]) -> f64 {
    let mut angles: Vec<f64> = Vec::new();
    for p in pairs {
        for d in [p.first, p.second] {
            let mut t = (d.1 as f64).atan2(d.0 as f64);
            while t < 0.0 {
                t += std::f64::consts::PI;
            }
            while t >= std::f64::consts::PI {
                t -= std::f64::consts::PI;
            }
            angles.push(t);
        }
    }
    angles.sort_by(|a, b| a.partial_cmp(b).unwrap());
    angles.dedup_by(|a, b| (*a - *b).abs() < 1e-12);
    let mut gap: f64 = 0.0;
    for k in 0..angles.len() {
        let next = if k + 1 < angles.len() {
            angles[k + 1]
        } else {
            angles[0] + std::f64::consts::PI
        };
        gap = gap.max(next - angles[k]);
    }
    gap
}

/// Drops the pairs whose offsets leave the grid at node `(i, j)`.
///
/// The result keeps the original width label; `dtheta` reflects the surviving
/// directions. At interior nodes at least the axis pair survives.
pub fn trim_stencil(node: (usize, usize), stencil: &StencilSet, grid: &Grid) -> StencilSet {
    let (i, j) = node;
    let pairs: Vec<StencilPair> = stencil
        .pairs
        .iter()
        .copied()
        .filter(|p| {
            [p.first, p.second].iter().all(|&(a, b)| {
                grid.in_bounds(i as i64 + a as i64, j as i64 + b as i64)
                    && grid.in_bounds(i as i64 - a as i64, j as i64 - b as i64)
            })
        })
        .collect();
    let dtheta = if pairs.is_empty() {
        std::f64::consts::PI
    } else {
        direction_resolution(&pairs)
    };
    StencilSet {
        width: stencil.width,
        pairs,
        dtheta,
    }
}

/// Directional second difference `D_vv u` at node `(i, j)`.
///
/// The caller must ensure both offsets stay on the grid (guaranteed after
/// [`trim_stencil`]).
pub fn second_difference(
    u: &GridFunction,
    grid: &Grid,
    node: (usize, usize),
    direction: (i32, i32),
) -> f64 {
    let (i, j) = node;
    let (p, q) = direction;
    debug_assert!(grid.in_bounds(i as i64 + p as i64, j as i64 + q as i64));
    debug_assert!(grid.in_bounds(i as i64 - p as i64, j as i64 - q as i64));
    let plus = u[((i as i64 + p as i64) as usize, (j as i64 + q as i64) as usize)];
    let minus = u[((i as i64 - p as i64) as usize, (j as i64 - q as i64) as usize)];
    let center = u[(i, j)];
    let len2 = (p * p + q * q) as f64;
    (plus + minus - 2.0 * center) / (len2 * grid.h() * grid.h())
}

/// Centered first difference along `axis` (0 = x, 1 = y) at node `(i, j)`.
pub fn centered_first_difference(
    u: &GridFunction,
    grid: &Grid,
    node: (usize, usize),
    axis: usize,
) -> f64 {
    let (i, j) = node;
    let (plus, minus) = match axis {
        0 => (u[(i + 1, j)], u[(i - 1, j)]),
        1 => (u[(i, j + 1)], u[(i, j - 1)]),
        _ => panic!("axis must be 0 or 1"),
    };
    (plus - minus) / (2.0 * grid.h())
}

/// Four-point cross difference approximating `d2u/dxdy` at node `(i, j)`.
pub fn cross_difference(u: &GridFunction, grid: &Grid, node: (usize, usize)) -> f64 {
    let (i, j) = node;
    let h = grid.h();
    (u[(i + 1, j + 1)] + u[(i - 1, j - 1)] - u[(i + 1, j - 1)] - u[(i - 1, j + 1)])
        / (4.0 * h * h)
}

fn gcd(a: i32, b: i32) -> i32 {
    let (mut a, mut b) = (a.abs(), b.abs());
    while b != 0 {
        let t = a % b;
        a = b;
        b = t;
    }
    a
}
