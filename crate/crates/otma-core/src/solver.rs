//! Problem assembly and the damped Newton solver.
//!
//! A [`Problem`] couples the grid, the normalized densities, the convex
//! target, and the discretization choices into one nonlinear residual
//! `F[u] = 0`: the filtered (or pure monotone) Monge-Ampere operator at
//! interior nodes and the upwind Hamilton-Jacobi condition at boundary nodes.
//! Interior rows carry the additive gauge pin `- u(x0)`, which removes the
//! shift invariance without a Lagrange multiplier; boundary rows stay
//! shift-invariant, so the Jacobian times the all-ones vector is `-1` on
//! interior rows and `0` on boundary rows.
//!
//! The nonlinear solve is a semi-smooth Newton iteration: the active stencil
//! pair and the active boundary direction are frozen per node, max/min branch
//! weights are smoothed only inside the Jacobian, and steps are damped by
//! backtracking on the residual max-norm. When Newton cannot find a
//! descent step (singular Jacobian, linear-solver breakdown, or exhausted
//! backtracking), a monotone explicit Euler-type iteration lowers the
//! residual until Newton can take over again.

use crate::bc_scheme::{
    bilinear_weights, build_boundary_contexts, hj_jacobian_row, hj_residual, BcKind,
    BoundaryNodeContext,
};
use crate::density::{estimate_lipschitz, normalize_masses, ratio_from_value, ratio_with_gradient, Density};
use crate::error::{OtmaError, Result};
use crate::grid::{
    build_stencil, second_difference, trim_stencil, Grid, GridFunction, NodeClass, StencilSet,
};
use crate::ma_scheme::{
    accurate_det, accurate_det_jacobian, centered_gradient, filter_s, filter_s_deriv,
    laplacian_jacobian, monotone_det, pair_det_jacobian, SchemeParams,
};
use crate::sparse::{bicgstab, ilu0, CsrMatrix, IterParams, KrylovSolution};
use crate::target::{ConvexTarget, DirectionSet};
use crate::Vec2;
use rayon::prelude::*;
use serde::Serialize;
use std::time::Instant;

/// The assembled transport problem: immutable once built, shareable across
/// threads during residual and Jacobian assembly.
#[derive(Debug)]
pub struct Problem {
    grid: Grid,
    stencil: StencilSet,
    trimmed: Vec<Option<StencilSet>>,
    rho_y: Density,
    target: ConvexTarget,
    dirs: DirectionSet,
    contexts: Vec<BoundaryNodeContext>,
    context_of: Vec<usize>,
    rho_x_at: Vec<f64>,
    params: SchemeParams,
    bc: BcKind,
    delta: f64,
    lipschitz: f64,
    filter_r: f64,
    smoothing: f64,
    pin: usize,
}

/// Per-node active branches recorded while evaluating the residual, consumed
/// by the Jacobian so both linearize the same selection.
#[derive(Debug, Clone, Copy)]
enum Branch {
    Interior { argmin: usize, s_deriv: f64 },
    Boundary { argmax: usize },
}

/// Residual vector with the branch bookkeeping and its max-norm.
#[derive(Debug, Clone)]
pub struct Assembly {
    residual: Vec<f64>,
    branches: Vec<Branch>,
    norm: f64,
}

impl Assembly {
    pub fn residual(&self) -> &[f64] {
        &self.residual
    }

    pub fn norm_inf(&self) -> f64 {
        self.norm
    }
}

/// Stopping and fallback controls for [`Problem::solve`].
#[derive(Debug, Clone, Copy)]
pub struct SolveParams {
    /// Residual max-norm target; `None` selects `max(1e-8, h^2)`.
    pub tol: Option<f64>,
    pub max_newton: usize,
    pub max_euler: usize,
    pub linear: IterParams,
}

impl Default for SolveParams {
    fn default() -> Self {
        SolveParams {
            tol: None,
            max_newton: 200,
            max_euler: 10_000,
            linear: IterParams::default(),
        }
    }
}

/// Outcome diagnostics of one solve.
#[derive(Debug, Clone, Serialize)]
pub struct SolveReport {
    pub converged: bool,
    pub iterations: usize,
    pub euler_steps: usize,
    pub fallback_invocations: usize,
    pub final_residual: f64,
    pub tol: f64,
    pub damping: Vec<f64>,
    pub linear_iterations: usize,
    pub wall_time_s: f64,
    pub delta: f64,
    pub lipschitz: f64,
}

impl Problem {
    /// Builds the problem: normalizes both densities, estimates the ratio's
    /// gradient sensitivity to fix the regularization weight, and precomputes
    /// trimmed stencils and boundary direction sets.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        grid: Grid,
        stencil_width: i32,
        rho_x: &Density,
        rho_y: &Density,
        target: ConvexTarget,
        dirs: DirectionSet,
        bc: BcKind,
        params: SchemeParams,
    ) -> Result<Self> {
        let (rho_x, rho_y) = normalize_masses(rho_x, rho_y)?;
        let stencil = build_stencil(stencil_width)?;
        let lipschitz = estimate_lipschitz(&rho_x, &rho_y, &target);
        let h = grid.h();
        let delta = params.delta.max(1.1 * lipschitz * h);
        let contexts = build_boundary_contexts(&grid, &dirs, &target)?;
        let mut context_of = vec![usize::MAX; grid.num_nodes()];
        for (k, ctx) in contexts.iter().enumerate() {
            context_of[grid.idx(ctx.node.0, ctx.node.1)] = k;
        }
        let mut trimmed = vec![None; grid.num_nodes()];
        for (i, j) in grid.nodes() {
            if grid.class(i, j) == NodeClass::Interior {
                let t = trim_stencil((i, j), &stencil, &grid);
                debug_assert!(!t.pairs().is_empty());
                trimmed[grid.idx(i, j)] = Some(t);
            }
        }
        let rho_x_at: Vec<f64> = grid.nodes().map(|(i, j)| rho_x.eval(grid.pos(i, j))).collect();
        let filter_r = params.filter_radius(h, stencil.dtheta());
        let n = grid.n();
        Ok(Problem {
            grid,
            stencil,
            trimmed,
            rho_y,
            target,
            dirs,
            contexts,
            context_of,
            rho_x_at,
            params,
            bc,
            delta,
            lipschitz,
            filter_r,
            // Smoothing of the max/min branch weights inside the Jacobian:
            // small enough that the derivative mismatch near active-branch
            // switches stays well below the Newton contraction it protects.
            smoothing: 0.25 * h * h,
            pin: grid_idx_center(n),
        })
    }

    /// Moves the gauge pin to another node.
    pub fn with_pin(mut self, node: (usize, usize)) -> Self {
        self.pin = self.grid.idx(node.0, node.1);
        self
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn target(&self) -> &ConvexTarget {
        &self.target
    }

    pub fn direction_set(&self) -> &DirectionSet {
        &self.dirs
    }

    pub fn stencil(&self) -> &StencilSet {
        &self.stencil
    }

    /// Effective regularization weight (user request raised to the stability
    /// threshold `1.1 K h`).
    pub fn delta(&self) -> f64 {
        self.delta
    }

    /// Estimated ratio sensitivity `K`.
    pub fn lipschitz(&self) -> f64 {
        self.lipschitz
    }

    pub fn pin_node(&self) -> (usize, usize) {
        self.grid.node_of(self.pin)
    }

    /// Default residual tolerance `max(1e-8, h^2)`.
    pub fn default_tol(&self) -> f64 {
        (self.grid.h() * self.grid.h()).max(1e-8)
    }

    /// Default initial guess: a paraboloid centered on the square whose
    /// gradient sweeps a disk comparable to the target, shifted toward the
    /// target's centroid so early iterates rarely need the density clamp.
    pub fn default_init(&self) -> GridFunction {
        let yc = self.target.centroid();
        let reach = self
            .target
            .boundary_points()
            .iter()
            .map(|p| (p - yc).norm())
            .fold(0.0f64, f64::max);
        let halfwidth = 0.5 * (self.grid.upper() - self.grid.lower());
        let xc = 0.5 * (self.grid.upper() + self.grid.lower());
        let center = Vec2::new(xc, xc);
        let m = (reach / halfwidth).max(f64::MIN_POSITIVE);
        GridFunction::from_fn(&self.grid, |x| {
            let d = x - center;
            0.5 * m * d.norm_squared() + yc.dot(&d)
        })
    }

    fn interior_residual(
        &self,
        u: &GridFunction,
        node: (usize, usize),
        use_filter: bool,
    ) -> Result<(f64, Branch)> {
        let idx = self.grid.idx(node.0, node.1);
        let st = self.trimmed[idx]
            .as_ref()
            .expect("interior node has a trimmed stencil");
        let (det_m, argmin) = monotone_det(u, &self.grid, node, st);
        let lap = second_difference(u, &self.grid, node, (1, 0))
            + second_difference(u, &self.grid, node, (0, 1));
        let grad = centered_gradient(u, &self.grid, node);
        let ratio = ratio_from_value(self.rho_x_at[idx], &self.rho_y, grad, &self.target)?;
        let pin_value = u.values()[self.pin];
        let ma_m = det_m + self.delta * lap - ratio - pin_value;
        if !use_filter {
            return Ok((
                ma_m,
                Branch::Interior {
                    argmin,
                    s_deriv: 0.0,
                },
            ));
        }
        let ma_s = accurate_det(u, &self.grid, node) - ratio - pin_value;
        let s = (ma_s - ma_m) / self.filter_r;
        Ok((
            ma_m + self.filter_r * filter_s(s),
            Branch::Interior {
                argmin,
                s_deriv: filter_s_deriv(s),
            },
        ))
    }

    /// Evaluates the full residual, recording active branches per node.
    pub fn assemble(&self, u: &GridFunction) -> Result<Assembly> {
        let use_filter = self.params.use_filter;
        let n2 = self.grid.num_nodes();
        let entries: Result<Vec<(f64, Branch)>> = (0..n2)
            .into_par_iter()
            .map(|idx| {
                let (i, j) = self.grid.node_of(idx);
                if self.context_of[idx] != usize::MAX {
                    let ctx = &self.contexts[self.context_of[idx]];
                    let (v, argmax) = hj_residual(u, &self.grid, ctx, self.bc);
                    Ok((v, Branch::Boundary { argmax }))
                } else {
                    self.interior_residual(u, (i, j), use_filter)
                }
            })
            .collect();
        let entries = entries?;
        let mut residual = Vec::with_capacity(n2);
        let mut branches = Vec::with_capacity(n2);
        let mut norm = 0.0f64;
        for (v, b) in entries {
            if !v.is_finite() {
                return Err(OtmaError::SolverFailure(
                    "residual evaluation produced a non-finite value".into(),
                ));
            }
            norm = norm.max(v.abs());
            residual.push(v);
            branches.push(b);
        }
        Ok(Assembly {
            residual,
            branches,
            norm,
        })
    }

    /// Assembles the Jacobian with the branches frozen in `assembly`.
    pub fn jacobian(&self, u: &GridFunction, assembly: &Assembly) -> Result<CsrMatrix> {
        let n2 = self.grid.num_nodes();
        let rows: Result<Vec<Vec<(usize, f64)>>> = (0..n2)
            .into_par_iter()
            .map(|idx| {
                let node = self.grid.node_of(idx);
                match assembly.branches[idx] {
                    Branch::Boundary { argmax } => {
                        let ctx = &self.contexts[self.context_of[idx]];
                        Ok(self.localize(node, hj_jacobian_row(&self.grid, ctx, self.bc, argmax)))
                    }
                    Branch::Interior { argmin, s_deriv } => self.interior_row(u, node, argmin, s_deriv),
                }
            })
            .collect();
        Ok(CsrMatrix::from_rows(rows?))
    }

    fn interior_row(
        &self,
        u: &GridFunction,
        node: (usize, usize),
        argmin: usize,
        s_deriv: f64,
    ) -> Result<Vec<(usize, f64)>> {
        let idx = self.grid.idx(node.0, node.1);
        let st = self.trimmed[idx].as_ref().expect("interior stencil");
        let w_m = 1.0 - s_deriv;
        let w_s = s_deriv;
        let mut local: Vec<((i64, i64), f64)> = Vec::with_capacity(24);
        if w_m != 0.0 {
            for (off, c) in pair_det_jacobian(u, &self.grid, node, &st.pairs()[argmin], self.smoothing)
            {
                local.push((off, w_m * c));
            }
            for (off, c) in laplacian_jacobian(&self.grid, self.delta) {
                local.push((off, w_m * c));
            }
        }
        if w_s != 0.0 {
            for (off, c) in accurate_det_jacobian(u, &self.grid, node) {
                local.push((off, w_s * c));
            }
        }
        // The density ratio enters with weight one in both schemes; its
        // gradient couples to the four centered-difference neighbors.
        let grad = centered_gradient(u, &self.grid, node);
        let (_, g) = ratio_with_gradient(self.rho_x_at[idx], &self.rho_y, grad, &self.target)?;
        let inv2h = 1.0 / (2.0 * self.grid.h());
        local.push(((1, 0), -g.x * inv2h));
        local.push(((-1, 0), g.x * inv2h));
        local.push(((0, 1), -g.y * inv2h));
        local.push(((0, -1), g.y * inv2h));
        let mut row = self.localize(node, local);
        row.push((self.pin, -1.0));
        Ok(row)
    }

    fn localize(&self, node: (usize, usize), local: Vec<((i64, i64), f64)>) -> Vec<(usize, f64)> {
        local
            .into_iter()
            .map(|((di, dj), c)| {
                let i = (node.0 as i64 + di) as usize;
                let j = (node.1 as i64 + dj) as usize;
                (self.grid.idx(i, j), c)
            })
            .collect()
    }

    /// Damped Newton with Euler fallback. Returns the final iterate and a
    /// report; non-convergence is reported, not an error, while NaN states
    /// and density-floor violations abort.
    pub fn solve(&self, u_init: Option<&GridFunction>, sp: &SolveParams) -> Result<(GridFunction, SolveReport)> {
        let start = Instant::now();
        let tol = sp.tol.unwrap_or_else(|| self.default_tol());
        let mut u = match u_init {
            Some(u0) => u0.clone(),
            None => self.default_init(),
        };
        if !u.is_finite() {
            return Err(OtmaError::SolverFailure("initial guess is not finite".into()));
        }
        let mut asm = self.assemble(&u)?;
        let mut damping = Vec::new();
        let mut iterations = 0;
        let mut euler_steps = 0;
        let mut fallbacks = 0;
        let mut linear_iterations = 0;
        let lambda_min = 2.0f64.powi(-10);
        while iterations < sp.max_newton && asm.norm > tol {
            iterations += 1;
            let direction = self.newton_direction(&u, &asm, sp, &mut linear_iterations);
            let mut stepped = false;
            if let Some(d) = direction {
                let mut lambda = 1.0;
                while lambda >= lambda_min {
                    let mut cand = u.clone();
                    for (v, dv) in cand.values_mut().iter_mut().zip(&d) {
                        *v += lambda * dv;
                    }
                    match self.assemble(&cand) {
                        Ok(casm) if casm.norm <= (1.0 - 1e-4 * lambda) * asm.norm => {
                            u = cand;
                            asm = casm;
                            damping.push(lambda);
                            stepped = true;
                            break;
                        }
                        _ => lambda *= 0.5,
                    }
                }
            }
            if !stepped {
                if fallbacks >= 3 || euler_steps >= sp.max_euler {
                    break;
                }
                fallbacks += 1;
                let budget = sp.max_euler - euler_steps;
                let (nu, nasm, steps) = self.euler_phase(u, tol, budget)?;
                u = nu;
                asm = nasm;
                euler_steps += steps;
                if steps == 0 {
                    break;
                }
            }
        }
        let converged = asm.norm <= tol;
        let report = SolveReport {
            converged,
            iterations,
            euler_steps,
            fallback_invocations: fallbacks,
            final_residual: asm.norm,
            tol,
            damping,
            linear_iterations,
            wall_time_s: start.elapsed().as_secs_f64(),
            delta: self.delta,
            lipschitz: self.lipschitz,
        };
        Ok((u, report))
    }

    fn newton_direction(
        &self,
        u: &GridFunction,
        asm: &Assembly,
        sp: &SolveParams,
        linear_iterations: &mut usize,
    ) -> Option<Vec<f64>> {
        let trace = std::env::var_os("OTMA_TRACE").is_some();
        let mut jac = self.jacobian(u, asm).ok()?;
        // Equilibrate rows before factoring: interior rows scale like
        // curvature over h^2 while boundary and gauge rows are O(1), and
        // that spread degrades both the ILU(0) factors and the relative
        // residual the iteration stops on. Left scaling leaves the Newton
        // direction unchanged.
        let scale: Vec<f64> = jac
            .row_max_abs()
            .into_iter()
            .map(|m| if m > 0.0 { 1.0 / m } else { 1.0 })
            .collect();
        jac.scale_rows(&scale);
        let rhs: Vec<f64> = asm
            .residual
            .iter()
            .zip(&scale)
            .map(|(f, s)| -f * s)
            .collect();
        let zeros = vec![0.0; rhs.len()];
        // The direction only has to be good enough for the damped line
        // search, so an unconverged Krylov iterate is still accepted when its
        // relative residual is under the inexact-Newton forcing bound.
        const INEXACT_FORCING: f64 = 0.5;
        let usable =
            |s: &KrylovSolution| s.converged || s.rel_residual <= INEXACT_FORCING;
        let mut best: Option<KrylovSolution> = None;
        match ilu0(&jac) {
            Ok(pre) => match bicgstab(&jac, &rhs, &zeros, Some(&pre), sp.linear) {
                Ok(s) => best = Some(s),
                Err(e) => {
                    if trace {
                        eprintln!("trace linear: bicgstab failed: {e}");
                    }
                }
            },
            Err(e) => {
                if trace {
                    eprintln!("trace linear: ilu0 factorization failed: {e}");
                }
            }
        }
        if !best.as_ref().map_or(false, &usable) {
            // Rescue pass with a Levenberg-Marquardt shift. A warm-started
            // iterate can carry locally degenerate curvature whose
            // linearization is near-singular, stalling the Krylov iteration;
            // the shift pushes the factorization away from that null space.
            // Sized by the residual so it stays off the convergent path, and
            // never applied to a system the plain solve already handles.
            let mu = 0.1 * asm.norm.min(1.0);
            jac.shift_diagonal_signed(mu);
            let pre = ilu0(&jac).ok();
            match bicgstab(&jac, &rhs, &zeros, pre.as_ref(), sp.linear) {
                Ok(s) => {
                    if trace {
                        eprintln!(
                            "trace linear: shifted rescue (mu {:.3e}) relative residual {:.3e}",
                            mu, s.rel_residual
                        );
                    }
                    if usable(&s) {
                        best = Some(s);
                    }
                }
                Err(e) => {
                    if trace {
                        eprintln!("trace linear: shifted rescue failed: {e}");
                    }
                }
            }
        }
        let sol = best.filter(&usable)?;
        *linear_iterations += sol.iterations;
        if trace && !sol.converged {
            eprintln!(
                "trace linear: inexact direction accepted at relative residual {:.3e}",
                sol.rel_residual
            );
        }
        Some(sol.x)
    }

    /// Explicit relaxation of the configured residual: interior rows
    /// decrease in the center value, so they step along `+F`; boundary rows
    /// increase, so they step along `-F`. The step is shrunk whenever the
    /// residual norm fails to decrease and grown again after a run of
    /// accepted steps, so it rides near the stability bound.
    ///
    /// The gauge term is handled by projection rather than through the
    /// scheme: every interior row carries the anti-monotone `-u(pin)`
    /// coupling, so letting the pin value drift during relaxation would
    /// raise all interior residuals in lockstep and fight the descent;
    /// re-zeroing `u(pin)` after each step leaves the residual field itself
    /// untouched (all other terms are invariant under a constant shift).
    fn euler_phase(
        &self,
        mut u: GridFunction,
        tol: f64,
        budget: usize,
    ) -> Result<(GridFunction, Assembly, usize)> {
        let h = self.grid.h();
        let tau0 = 0.25 * h * h;
        let mut tau = tau0;
        let tau_min = tau0 / 1024.0;
        let shift = u.values()[self.pin];
        for v in u.values_mut() {
            *v -= shift;
        }
        let mut asm = self.assemble(&u)?;
        let mut steps = 0;
        let mut accepted_run = 0usize;
        while steps < budget && asm.norm > tol {
            steps += 1;
            let mut cand = u.clone();
            for (idx, v) in cand.values_mut().iter_mut().enumerate() {
                if self.context_of[idx] != usize::MAX {
                    *v -= tau * asm.residual[idx];
                } else {
                    *v += tau * asm.residual[idx];
                }
            }
            let shift = cand.values()[self.pin];
            for v in cand.values_mut() {
                *v -= shift;
            }
            match self.assemble(&cand) {
                Ok(casm) if casm.norm <= asm.norm * (1.0 + 1e-9) => {
                    u = cand;
                    asm = casm;
                    accepted_run += 1;
                    if accepted_run >= 8 {
                        accepted_run = 0;
                        tau = (1.5 * tau).min(64.0 * tau0);
                    }
                }
                Ok(_) => {
                    accepted_run = 0;
                    tau *= 0.5;
                    if tau < tau_min {
                        break;
                    }
                }
                Err(OtmaError::DensityFloor { .. }) | Err(OtmaError::SolverFailure(_)) => {
                    accepted_run = 0;
                    tau *= 0.5;
                    if tau < tau_min {
                        break;
                    }
                }
                Err(e) => return Err(e),
            }
        }
        Ok((u, asm, steps))
    }

    /// Discrete gradient: centered differences inside, second-order one-sided
    /// differences on the boundary.
    pub fn extract_map(&self, u: &GridFunction) -> Vec<Vec2> {
        extract_map(u, &self.grid)
    }
}

fn grid_idx_center(n: usize) -> usize {
    let c = n / 2;
    c * n + c
}

/// Discrete gradient field of `u`: centered differences at interior nodes,
/// one-sided second-order differences along constrained axes on the boundary.
pub fn extract_map(u: &GridFunction, grid: &Grid) -> Vec<Vec2> {
    let n = grid.n();
    let h = grid.h();
    let diff = |lo: usize, hi_flag: bool, get: &dyn Fn(usize) -> f64, k: usize| -> f64 {
        if k == 0 {
            (-3.0 * get(0) + 4.0 * get(1) - get(2)) / (2.0 * h)
        } else if hi_flag {
            (3.0 * get(lo) - 4.0 * get(lo - 1) + get(lo - 2)) / (2.0 * h)
        } else {
            (get(k + 1) - get(k - 1)) / (2.0 * h)
        }
    };
    let mut out = Vec::with_capacity(grid.num_nodes());
    for (i, j) in grid.nodes() {
        let gx = diff(n - 1, i == n - 1, &|k: usize| u[(k, j)], i);
        let gy = diff(n - 1, j == n - 1, &|k: usize| u[(i, k)], j);
        out.push(Vec2::new(gx, gy));
    }
    out
}

/// Maximum Euclidean discrepancy between the computed field and an exact map
/// over the nodes where the exact map is defined (the source support).
pub fn map_error<F>(map: &[Vec2], grid: &Grid, exact: F) -> f64
where
    F: Fn(Vec2) -> Option<Vec2>,
{
    let mut worst = 0.0f64;
    for (idx, (i, j)) in grid.nodes().enumerate() {
        if let Some(t) = exact(grid.pos(i, j)) {
            worst = worst.max((map[idx] - t).norm());
        }
    }
    worst
}

/// Bilinear interpolation of a node-based vector field at an arbitrary point.
pub fn interpolate_map(map: &[Vec2], grid: &Grid, p: Vec2) -> Vec2 {
    let mut v = Vec2::zeros();
    for ((i, j), w) in bilinear_weights(grid, p) {
        v += w * map[grid.idx(i, j)];
    }
    v
}
