//! Numerical optimal transport between two planar densities.
//!
//! The crate computes the optimal transport map with quadratic cost from a
//! source density `rho_x` to a target density `rho_y` supported on a convex
//! set `Y`. The map is recovered as the gradient of a convex potential `u`
//! solving the Monge-Ampere equation
//!
//! ```text
//!     det(D^2 u(x)) = rho_x(x) / rho_y(grad u(x)),
//! ```
//!
//! posed on a square that contains the support of `rho_x`, together with the
//! second boundary value condition `grad u(X) = Y`. The boundary condition is
//! imposed through a Hamilton-Jacobi equation `H(grad u) = 0` on the square's
//! edge, where `H` is the signed distance to the target expressed through its
//! support function.
//!
//! Interior nodes carry a monotone wide-stencil discretization of the
//! Monge-Ampere operator blended with a second-order nine-point scheme via a
//! filter; edge nodes carry an upwind discretization of `H`. The coupled
//! system is solved with a damped semi-smooth Newton method.
//!
//! Module map:
//!
//! * [`target`] — convex target geometry: support functions, signed
//!   distances, Hamiltonians, direction sets.
//! * [`grid`] — the uniform square grid, finite differences, wide stencils.
//! * [`density`] — source/target densities, normalization, the density ratio.
//! * [`ma_scheme`] — interior Monge-Ampere discretizations and the filter.
//! * [`bc_scheme`] — upwind Hamilton-Jacobi boundary discretizations.
//! * [`solver`] — residual/Jacobian assembly and the Newton loop.
//! * [`experiments`] — ready-made problem instances and convergence tables.
//! * [`oracle`] — discrete-assignment cross validation of computed maps.
//! * [`config`] — serializable run configuration.
//! * [`io`] — CSV/JSON readers and writers for grid data and reports.

pub mod bc_scheme;
pub mod config;
pub mod density;
pub mod error;
pub mod experiments;
pub mod grid;
pub mod io;
pub mod ma_scheme;
pub mod oracle;
pub mod solver;
pub mod sparse;
pub mod target;

pub use error::{OtmaError, Result};

/// 2D point / vector type used throughout the crate.
pub type Vec2 = nalgebra::Vector2<f64>;
/// 2x2 matrix type used throughout the crate.
pub type Mat2 = nalgebra::Matrix2<f64>;

pub use bc_scheme::{BcKind, BoundaryNodeContext};
pub use density::Density;
pub use grid::{Grid, GridFunction, NodeClass, StencilSet};
pub use ma_scheme::SchemeParams;
pub use oracle::DiscreteMeasure;
pub use solver::{Problem, SolveReport};
pub use target::{ConvexTarget, DirectionSet};
