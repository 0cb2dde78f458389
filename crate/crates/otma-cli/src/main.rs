//! `otma` command line: solve transport experiments, sweep error tables,
//! and cross-check computed maps against a discrete assignment.

use clap::{Args, Parser, Subcommand, ValueEnum};
use otma_core::config::{DensityConfig, RunConfig};
use otma_core::density::Density;
use otma_core::experiments::{
    run_table, run_with_overrides, spec_by_name, ExperimentSpec, RunOptions, RunResult,
};
use otma_core::io::{
    write_error_csv, write_grid_csv, write_map_csv, write_report_json, write_table_csv,
};
use otma_core::ma_scheme::SchemeParams;
use otma_core::oracle::cross_validate;
use otma_core::solver::SolveParams;
use otma_core::sparse::IterParams;
use otma_core::{BcKind, OtmaError, Result};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "otma",
    version,
    about = "Optimal transport maps between planar densities via a monotone Monge-Ampere solver"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve one instance and write u.csv, map.csv, report.json (and
    /// error.csv when the experiment has a reference map).
    Run(RunArgs),
    /// Sweep grid sizes against target resolutions and write a map-error
    /// table. Requires an experiment with a reference map.
    Table(TableArgs),
    /// Solve one instance and report the worst mismatch between the
    /// computed map and an independent discrete assignment.
    Validate(ValidateArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum BcArg {
    Compact,
    Wide,
}

/// Flags shared by all subcommands; a JSON config file (--config) overrides
/// any of them.
#[derive(Args)]
struct SchemeArgs {
    /// Experiment name: ellipse, split, identity, or gallery:<shape> with
    /// shape one of square, circle, triangle, diamond, icecream-cone, bowl.
    #[arg(long, default_value = "ellipse")]
    experiment: String,
    /// Half-width of the interior difference stencil (directions per node
    /// grow with it).
    #[arg(long, default_value_t = 2)]
    stencil_width: i32,
    /// Angular spacing of the boundary direction set; defaults to pi / ny.
    #[arg(long)]
    dalpha: Option<f64>,
    /// Boundary discretization.
    #[arg(long, value_enum, default_value_t = BcArg::Compact)]
    bc: BcArg,
    /// Multiplier for the blending radius between the monotone and
    /// accurate interior schemes.
    #[arg(long, default_value_t = 10.0)]
    filter_c: f64,
    /// Uniform ellipticity shift; raised automatically when the target
    /// density demands more.
    #[arg(long, default_value_t = 0.0)]
    delta: f64,
    /// Disable the accurate-scheme blend and run the pure monotone scheme.
    #[arg(long)]
    monotone_only: bool,
    /// Residual max-norm target; defaults to max(1e-8, h^2).
    #[arg(long)]
    tol: Option<f64>,
    /// Newton iteration cap.
    #[arg(long, default_value_t = 200)]
    max_newton: usize,
    /// Step budget for the damped explicit fallback.
    #[arg(long, default_value_t = 10_000)]
    max_euler: usize,
    /// JSON config file; values present in it override these flags.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory (created if missing).
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    scheme: SchemeArgs,
    /// Grid nodes per side.
    #[arg(long, default_value_t = 64)]
    nx: usize,
    /// Target boundary resolution (samples = 2 ny, default dalpha = pi/ny).
    #[arg(long, default_value_t = 64)]
    ny: usize,
}

#[derive(Args)]
struct TableArgs {
    #[command(flatten)]
    scheme: SchemeArgs,
    /// Comma-separated grid sizes.
    #[arg(long, value_delimiter = ',', default_value = "32,64,128")]
    nx: Vec<usize>,
    /// Comma-separated target resolutions.
    #[arg(long, value_delimiter = ',', default_value = "8,16,32,64,128")]
    ny: Vec<usize>,
}

#[derive(Args)]
struct ValidateArgs {
    #[command(flatten)]
    scheme: SchemeArgs,
    /// Grid nodes per side.
    #[arg(long, default_value_t = 64)]
    nx: usize,
    /// Target boundary resolution.
    #[arg(long, default_value_t = 64)]
    ny: usize,
    /// Number of assignment atoms (capped at 400).
    #[arg(long, default_value_t = 100)]
    m: usize,
}

/// Flags and config file merged into one solve setup; config values win.
struct Session {
    spec: ExperimentSpec,
    opts: RunOptions,
    out: PathBuf,
    cfg_nx: Option<usize>,
    cfg_ny: Option<usize>,
    source_density: Option<DensityConfig>,
    target_density: Option<DensityConfig>,
}

fn resolve(scheme: &SchemeArgs) -> Result<Session> {
    let cfg = match &scheme.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    let name = cfg
        .experiment
        .clone()
        .unwrap_or_else(|| scheme.experiment.clone());
    let mut spec = spec_by_name(&name)?;
    if let Some(target) = &cfg.target {
        spec.target_shape = target.to_shape()?;
        // The reference map describes the stock target only.
        spec.exact = None;
        spec.name.push_str("+custom-target");
    }
    let bc = match cfg.bc.as_deref() {
        Some("compact") => BcKind::Compact,
        Some("wide") => BcKind::Wide,
        Some(other) => {
            return Err(OtmaError::Config(format!(
                "unknown bc '{other}' (expected compact or wide)"
            )))
        }
        None => match scheme.bc {
            BcArg::Compact => BcKind::Compact,
            BcArg::Wide => BcKind::Wide,
        },
    };
    let params = SchemeParams {
        delta: cfg.delta.unwrap_or(scheme.delta),
        filter_c: cfg.filter_c.unwrap_or(scheme.filter_c),
        use_filter: !cfg.monotone_only.unwrap_or(scheme.monotone_only),
    };
    let solve = SolveParams {
        tol: cfg.tol.or(scheme.tol),
        max_newton: cfg.max_newton.unwrap_or(scheme.max_newton),
        max_euler: cfg.max_euler.unwrap_or(scheme.max_euler),
        linear: IterParams::default(),
    };
    let opts = RunOptions {
        stencil_width: cfg.stencil_width.unwrap_or(scheme.stencil_width),
        dalpha: cfg.dalpha.or(scheme.dalpha),
        bc,
        params,
        solve,
    };
    Ok(Session {
        spec,
        opts,
        out: cfg.out.unwrap_or_else(|| scheme.out.clone()),
        cfg_nx: cfg.nx,
        cfg_ny: cfg.ny,
        source_density: cfg.source_density,
        target_density: cfg.target_density,
    })
}

impl Session {
    /// Builds the override densities at the resolved resolutions.
    fn densities(&self, nx: usize, ny: usize) -> Result<(Option<Density>, Option<Density>)> {
        let rho_x = self
            .source_density
            .as_ref()
            .map(|d| d.build(self.spec.lo, self.spec.hi, nx))
            .transpose()?;
        // Target densities are sampled over their own support box.
        let rho_y = self
            .target_density
            .as_ref()
            .map(|d| d.build(0.0, 0.0, ny))
            .transpose()?;
        Ok((rho_x, rho_y))
    }
}

fn write_outputs(dir: &Path, spec: &ExperimentSpec, res: &RunResult) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let grid = res.problem.grid();
    write_grid_csv(&dir.join("u.csv"), grid, &res.u)?;
    write_map_csv(&dir.join("map.csv"), grid, &res.map)?;
    write_report_json(&dir.join("report.json"), &res.report)?;
    // A per-node error field only makes sense when the reference comparison
    // actually ran (map_error is None under density overrides).
    if let (Some(exact), Some(_)) = (&spec.exact, res.map_error) {
        let support = spec.source.support();
        let errors: Vec<f64> = grid
            .nodes()
            .enumerate()
            .map(|(idx, (i, j))| {
                let x = grid.pos(i, j);
                let reference = if support.contains(x) {
                    exact.eval(x)
                } else {
                    None
                };
                match reference {
                    Some(y) => (res.map[idx] - y).norm(),
                    None => f64::NAN,
                }
            })
            .collect();
        write_error_csv(&dir.join("error.csv"), grid, &errors)?;
    }
    Ok(())
}

fn print_summary(spec: &ExperimentSpec, res: &RunResult) {
    let r = &res.report;
    println!(
        "{}: {}x{} grid, ny {}, dalpha {:.4}",
        spec.name, res.nx, res.nx, res.ny, res.dalpha
    );
    println!(
        "  converged: {} ({} Newton iterations, {} fallback steps, residual {:.3e}, tol {:.3e})",
        r.converged, r.iterations, r.euler_steps, r.final_residual, r.tol
    );
    if let Some(err) = res.map_error {
        println!("  map error: {err:.6e}");
    }
    println!("  wall time: {:.2} s", r.wall_time_s);
}

fn cmd_run(args: &RunArgs) -> Result<bool> {
    let session = resolve(&args.scheme)?;
    let nx = session.cfg_nx.unwrap_or(args.nx);
    let ny = session.cfg_ny.unwrap_or(args.ny);
    let (rho_x, rho_y) = session.densities(nx, ny)?;
    let res = run_with_overrides(
        &session.spec,
        nx,
        ny,
        &session.opts,
        rho_x.as_ref(),
        rho_y.as_ref(),
    )?;
    write_outputs(&session.out, &session.spec, &res)?;
    print_summary(&session.spec, &res);
    println!("  wrote {}", session.out.display());
    Ok(res.report.converged)
}

fn cmd_table(args: &TableArgs) -> Result<bool> {
    let session = resolve(&args.scheme)?;
    if session.source_density.is_some() || session.target_density.is_some() {
        return Err(OtmaError::Config(
            "table sweeps use the experiment's own densities; remove the density overrides".into(),
        ));
    }
    let nx_list = match session.cfg_nx {
        Some(n) => vec![n],
        None => args.nx.clone(),
    };
    let ny_list = match session.cfg_ny {
        Some(n) => vec![n],
        None => args.ny.clone(),
    };
    let table = run_table(&session.spec, &nx_list, &ny_list, &session.opts)?;
    std::fs::create_dir_all(&session.out)?;
    write_table_csv(&session.out.join("table.csv"), &table)?;

    print!("{:>6}", "nx\\ny");
    for ny in &table.ny {
        print!("  {ny:>10}");
    }
    println!();
    for (i, nx) in table.nx.iter().enumerate() {
        print!("{nx:>6}");
        for err in &table.errors[i] {
            print!("  {err:>10.4e}");
        }
        println!();
    }
    for (nx, ny, msg) in &table.failures {
        eprintln!("  failed at nx {nx}, ny {ny}: {msg}");
    }
    println!("  wrote {}", session.out.join("table.csv").display());
    Ok(table.failures.is_empty())
}

fn cmd_validate(args: &ValidateArgs) -> Result<bool> {
    let session = resolve(&args.scheme)?;
    let nx = session.cfg_nx.unwrap_or(args.nx);
    let ny = session.cfg_ny.unwrap_or(args.ny);
    let (rho_x, rho_y) = session.densities(nx, ny)?;
    let res = run_with_overrides(
        &session.spec,
        nx,
        ny,
        &session.opts,
        rho_x.as_ref(),
        rho_y.as_ref(),
    )?;
    let source_support = rho_x
        .as_ref()
        .and_then(|d| d.support_shape())
        .unwrap_or_else(|| session.spec.source.support())
        .clone();
    let (_, target_support) = session.spec.target_shape.realize(ny)?;
    let discrepancy = cross_validate(
        &res.map,
        res.problem.grid(),
        &source_support,
        &target_support,
        args.m,
    )?;
    print_summary(&session.spec, &res);
    println!(
        "  assignment discrepancy ({} atoms): {:.6e}",
        args.m, discrepancy
    );
    Ok(res.report.converged)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match &cli.command {
        Command::Run(args) => cmd_run(args),
        Command::Table(args) => cmd_table(args),
        Command::Validate(args) => cmd_validate(args),
    };
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("otma: solve did not converge");
            ExitCode::FAILURE
        }
        Err(e) => {
            eprintln!("otma: {e}");
            ExitCode::FAILURE
        }
    }
}
