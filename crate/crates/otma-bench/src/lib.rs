//! Shared setup for the solver kernel benchmarks: prebuilt problems and
//! representative iterates, kept out of the measurement loops.

use otma_core::experiments::{build_problem, ellipse_spec, RunOptions};
use otma_core::oracle::DiscreteMeasure;
use otma_core::solver::Problem;
use otma_core::{GridFunction, Vec2};

/// The standard anisotropic-ellipse instance at resolution `n`, paired with
/// a perturbed initial iterate so branch selection does real work.
pub fn ellipse_state(n: usize) -> (Problem, GridFunction) {
    let spec = ellipse_spec().expect("builtin spec");
    let problem = build_problem(&spec, n, n, &RunOptions::default()).expect("problem build");
    let mut u = problem.default_init();
    let bump =
        GridFunction::from_fn(problem.grid(), |x| 0.02 * (4.0 * x.x).sin() * (3.0 * x.y).cos());
    for (v, b) in u.values_mut().iter_mut().zip(bump.values()) {
        *v += b;
    }
    (problem, u)
}

/// Two deterministic point clouds of size `m` for assignment benchmarks.
pub fn assignment_clouds(m: usize) -> (DiscreteMeasure, DiscreteMeasure) {
    let lattice = |seed: f64| -> Vec<Vec2> {
        (0..m)
            .map(|k| {
                let t = k as f64 + seed;
                Vec2::new((t * 0.7391).sin(), (t * 1.383 + seed).cos())
            })
            .collect()
    };
    (
        DiscreteMeasure::new(lattice(0.0)).expect("cloud"),
        DiscreteMeasure::new(lattice(0.37)).expect("cloud"),
    )
}
