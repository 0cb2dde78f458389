//! File formats: CSV for node-indexed fields and error tables, JSON for
//! solve reports, and a CSV reader for externally supplied gridded
//! densities.
//!
//! Node-indexed CSV files share one layout: a `i,j,x,y,...` header followed
//! by one row per node, `i` varying fastest, floats printed with 17
//! significant digits so a round trip is bit-exact.

use crate::density::Density;
use crate::error::{OtmaError, Result};
use crate::experiments::ErrorTable;
use crate::grid::{Grid, GridFunction};
use crate::solver::SolveReport;
use crate::Vec2;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

/// Writes a scalar grid function as `i,j,x,y,value` rows.
pub fn write_grid_csv(path: &Path, grid: &Grid, u: &GridFunction) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "i,j,x,y,value")?;
    for (i, j) in grid.nodes() {
        let p = grid.pos(i, j);
        writeln!(w, "{},{},{:.16e},{:.16e},{:.16e}", i, j, p.x, p.y, u[(i, j)])?;
    }
    Ok(())
}

/// Writes a map (vector field on nodes) as `i,j,x,y,Tx,Ty` rows.
pub fn write_map_csv(path: &Path, grid: &Grid, map: &[Vec2]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "i,j,x,y,Tx,Ty")?;
    for (idx, (i, j)) in grid.nodes().enumerate() {
        let p = grid.pos(i, j);
        writeln!(
            w,
            "{},{},{:.16e},{:.16e},{:.16e},{:.16e}",
            i, j, p.x, p.y, map[idx].x, map[idx].y
        )?;
    }
    Ok(())
}

/// Writes per-node error magnitudes (`NaN` marks nodes outside the measured
/// region) as `i,j,x,y,value` rows.
pub fn write_error_csv(path: &Path, grid: &Grid, errors: &[f64]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "i,j,x,y,value")?;
    for (idx, (i, j)) in grid.nodes().enumerate() {
        let p = grid.pos(i, j);
        writeln!(
            w,
            "{},{},{:.16e},{:.16e},{:.16e}",
            i, j, p.x, p.y, errors[idx]
        )?;
    }
    Ok(())
}

/// Writes the solve report as pretty-printed JSON.
pub fn write_report_json(path: &Path, report: &SolveReport) -> Result<()> {
    let file = File::create(path)?;
    serde_json::to_writer_pretty(BufWriter::new(file), report)?;
    Ok(())
}

/// Writes an error table with grid sizes as rows and target resolutions as
/// columns.
pub fn write_table_csv(path: &Path, table: &ErrorTable) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write!(w, "nx")?;
    for ny in &table.ny {
        write!(w, ",{ny}")?;
    }
    writeln!(w)?;
    for (row, nx) in table.nx.iter().enumerate() {
        write!(w, "{nx}")?;
        for val in &table.errors[row] {
            write!(w, ",{val:.6e}")?;
        }
        writeln!(w)?;
    }
    Ok(())
}

/// Reads a gridded density from `i,j,x,y,value` rows (the format written by
/// [`write_grid_csv`]). The node set must fill a complete `nx x ny` lattice.
pub fn read_density_csv(path: &Path) -> Result<Density> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)?;
    {
        let headers = rdr.headers()?;
        let expect = ["i", "j", "x", "y", "value"];
        if headers.len() != expect.len() || headers.iter().zip(expect).any(|(a, b)| a != b) {
            return Err(OtmaError::Config(format!(
                "density CSV must have header i,j,x,y,value, got {headers:?}"
            )));
        }
    }
    struct Row {
        i: usize,
        j: usize,
        x: f64,
        y: f64,
        value: f64,
    }
    let mut rows: Vec<Row> = Vec::new();
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let field = |k: usize| -> Result<&str> {
            rec.get(k).ok_or_else(|| {
                OtmaError::Config(format!("density CSV row {} is missing column {k}", line + 2))
            })
        };
        let parse_usize = |k: usize| -> Result<usize> {
            field(k)?.parse().map_err(|_| {
                OtmaError::Config(format!(
                    "density CSV row {}: cannot parse '{}' as an index",
                    line + 2,
                    rec.get(k).unwrap_or("")
                ))
            })
        };
        let parse_f64 = |k: usize| -> Result<f64> {
            field(k)?.parse().map_err(|_| {
                OtmaError::Config(format!(
                    "density CSV row {}: cannot parse '{}' as a number",
                    line + 2,
                    rec.get(k).unwrap_or("")
                ))
            })
        };
        rows.push(Row {
            i: parse_usize(0)?,
            j: parse_usize(1)?,
            x: parse_f64(2)?,
            y: parse_f64(3)?,
            value: parse_f64(4)?,
        });
    }
    if rows.is_empty() {
        return Err(OtmaError::Config("density CSV has no data rows".into()));
    }
    let nx = rows.iter().map(|r| r.i).max().unwrap() + 1;
    let ny = rows.iter().map(|r| r.j).max().unwrap() + 1;
    if rows.len() != nx * ny {
        return Err(OtmaError::Config(format!(
            "density CSV indices span {nx} x {ny} nodes but only {} rows are present",
            rows.len()
        )));
    }
    let mut lo = Vec2::new(f64::INFINITY, f64::INFINITY);
    let mut hi = Vec2::new(f64::NEG_INFINITY, f64::NEG_INFINITY);
    let mut values = vec![f64::NAN; nx * ny];
    for r in &rows {
        lo.x = lo.x.min(r.x);
        lo.y = lo.y.min(r.y);
        hi.x = hi.x.max(r.x);
        hi.y = hi.y.max(r.y);
        let slot = &mut values[r.j * nx + r.i];
        if !slot.is_nan() {
            return Err(OtmaError::Config(format!(
                "density CSV repeats node ({}, {})",
                r.i, r.j
            )));
        }
        *slot = r.value;
    }
    Density::gridded(lo, hi, nx, ny, values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use std::fs;

    fn tmp(name: &str) -> (tempfile::TempDir, std::path::PathBuf) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join(name);
        (dir, path)
    }

    #[test]
    fn grid_csv_round_trips_through_the_density_reader() {
        let grid = Grid::new(-1.0, 1.0, 9).unwrap();
        let u = GridFunction::from_fn(&grid, |p| (p.x + 1.5) * (p.y + 2.0) / 3.0);
        let (_dir, path) = tmp("u.csv");
        write_grid_csv(&path, &grid, &u).unwrap();
        let rho = read_density_csv(&path).unwrap();
        for (i, j) in grid.nodes() {
            let p = grid.pos(i, j);
            assert_relative_eq!(rho.eval(p), u[(i, j)], epsilon = 1e-14);
        }
    }

    #[test]
    fn grid_csv_has_the_documented_header_and_precision() {
        let grid = Grid::new(0.0, 1.0, 4).unwrap();
        let u = GridFunction::from_fn(&grid, |_| 1.0 / 3.0);
        let (_dir, path) = tmp("u.csv");
        write_grid_csv(&path, &grid, &u).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), "i,j,x,y,value");
        let first = lines.next().unwrap();
        assert!(
            first.ends_with("3.3333333333333331e-1"),
            "unexpected precision in '{first}'"
        );
    }

    #[test]
    fn map_csv_has_six_columns() {
        let grid = Grid::new(0.0, 1.0, 3).unwrap();
        let map = vec![Vec2::new(1.0, 2.0); grid.num_nodes()];
        let (_dir, path) = tmp("map.csv");
        write_map_csv(&path, &grid, &map).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), "i,j,x,y,Tx,Ty");
        assert_eq!(lines.next().unwrap().split(',').count(), 6);
        assert_eq!(text.lines().count(), 1 + grid.num_nodes());
    }

    #[test]
    fn error_csv_preserves_nan_markers() {
        let grid = Grid::new(0.0, 1.0, 3).unwrap();
        let mut errors = vec![0.25; grid.num_nodes()];
        errors[4] = f64::NAN;
        let (_dir, path) = tmp("error.csv");
        write_error_csv(&path, &grid, &errors).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        assert!(text.contains("NaN"));
    }

    #[test]
    fn report_json_is_parseable_and_complete() {
        let report = SolveReport {
            converged: true,
            iterations: 7,
            euler_steps: 0,
            fallback_invocations: 0,
            final_residual: 3.2e-9,
            tol: 1e-8,
            damping: vec![1.0, 0.5, 1.0],
            linear_iterations: 52,
            wall_time_s: 0.123,
            delta: 0.0,
            lipschitz: 0.0,
        };
        let (_dir, path) = tmp("report.json");
        write_report_json(&path, &report).unwrap();
        let value: serde_json::Value =
            serde_json::from_str(&fs::read_to_string(&path).unwrap()).unwrap();
        assert_eq!(value["converged"], serde_json::Value::Bool(true));
        assert_eq!(value["iterations"], 7);
        assert_eq!(value["damping"].as_array().unwrap().len(), 3);
    }

    #[test]
    fn table_csv_layout_is_rows_by_columns() {
        let table = ErrorTable {
            experiment: "demo".into(),
            nx: vec![32, 64],
            ny: vec![8, 16],
            errors: vec![vec![0.5, 0.25], vec![0.125, f64::NAN]],
            converged: vec![vec![true, true], vec![true, false]],
            failures: vec![],
        };
        let (_dir, path) = tmp("table.csv");
        write_table_csv(&path, &table).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "nx,8,16");
        assert!(lines[1].starts_with("32,5.000000e-1,2.500000e-1"));
        assert!(lines[2].starts_with("64,"));
        assert!(lines[2].contains("NaN"));
    }

    #[test]
    fn density_reader_rejects_malformed_input() {
        let (_dir, path) = tmp("bad.csv");
        fs::write(&path, "a,b,c\n1,2,3\n").unwrap();
        assert!(read_density_csv(&path).is_err());
        fs::write(&path, "i,j,x,y,value\n0,0,0.0,0.0,1.0\n").unwrap();
        // A single row cannot fill the 1 x 1 lattice requirement of nx,ny >= 2.
        assert!(read_density_csv(&path).is_err());
        fs::write(
            &path,
            "i,j,x,y,value\n0,0,0,0,1\n1,0,1,0,1\n0,1,0,1,1\n",
        )
        .unwrap();
        // Three rows cannot fill a 2 x 2 lattice.
        assert!(read_density_csv(&path).is_err());
    }
}
