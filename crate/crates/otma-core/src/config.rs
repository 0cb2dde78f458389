//! JSON run configuration.
//!
//! Every field is optional; values present in the file override the
//! corresponding command-line flags. Targets can be redefined from geometry
//! primitives, and densities can be swapped for named catalog entries or
//! gridded CSV data.

use crate::density::{AnalyticDensity, Density, SupportShape};
use crate::error::{OtmaError, Result};
use crate::experiments::{ellipse_source_matrix, ellipse_target_matrix, TargetShape};
use crate::io::read_density_csv;
use crate::{Mat2, Vec2};
use serde::Deserialize;
use std::path::{Path, PathBuf};

/// Optional overrides for one solve, read from a JSON file.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub experiment: Option<String>,
    pub nx: Option<usize>,
    pub ny: Option<usize>,
    pub stencil_width: Option<i32>,
    pub dalpha: Option<f64>,
    /// `"compact"` or `"wide"`.
    pub bc: Option<String>,
    pub filter_c: Option<f64>,
    pub delta: Option<f64>,
    pub monotone_only: Option<bool>,
    pub tol: Option<f64>,
    pub max_newton: Option<usize>,
    pub max_euler: Option<usize>,
    pub out: Option<PathBuf>,
    /// Replaces the experiment's target geometry.
    pub target: Option<TargetConfig>,
    /// Replaces the source density.
    pub source_density: Option<DensityConfig>,
    /// Replaces the target density.
    pub target_density: Option<DensityConfig>,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        let cfg = serde_json::from_reader(std::io::BufReader::new(file))?;
        Ok(cfg)
    }
}

/// Target geometry as written in config files.
#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum TargetConfig {
    Polygon { points: Vec<[f64; 2]> },
    Ellipse { matrix: [[f64; 2]; 2] },
    Circle { center: [f64; 2], radius: f64 },
}

impl TargetConfig {
    pub fn to_shape(&self) -> Result<TargetShape> {
        match self {
            TargetConfig::Polygon { points } => {
                if points.len() < 3 {
                    return Err(OtmaError::Config(format!(
                        "polygon target needs at least 3 points, got {}",
                        points.len()
                    )));
                }
                Ok(TargetShape::Polygon(
                    points.iter().map(|p| Vec2::new(p[0], p[1])).collect(),
                ))
            }
            TargetConfig::Ellipse { matrix } => {
                if (matrix[0][1] - matrix[1][0]).abs() > 1e-12 {
                    return Err(OtmaError::Config(
                        "ellipse target matrix must be symmetric".into(),
                    ));
                }
                Ok(TargetShape::Ellipse(Mat2::new(
                    matrix[0][0],
                    matrix[0][1],
                    matrix[1][0],
                    matrix[1][1],
                )))
            }
            TargetConfig::Circle { center, radius } => Ok(TargetShape::Circle {
                center: Vec2::new(center[0], center[1]),
                radius: *radius,
            }),
        }
    }
}

/// Density source as written in config files: a CSV file of gridded values
/// or a named analytic catalog entry.
#[derive(Debug, Clone, Deserialize)]
#[serde(rename_all = "lowercase", deny_unknown_fields)]
pub enum DensityConfig {
    Csv { path: PathBuf },
    Named { name: String },
}

impl DensityConfig {
    /// Builds the density; analytic entries are sampled on an `n x n` grid
    /// over `[lo, hi]^2` (pass the run box for sources, the support box is
    /// used when `lo >= hi` is given).
    pub fn build(&self, lo: f64, hi: f64, n: usize) -> Result<Density> {
        match self {
            DensityConfig::Csv { path } => read_density_csv(path),
            DensityConfig::Named { name } => {
                let f = density_by_name(name)?;
                if hi > lo {
                    Density::analytic(f, Vec2::new(lo, lo), Vec2::new(hi, hi), n.max(2))
                } else {
                    Density::analytic_on_bbox(f, n.max(2))
                }
            }
        }
    }
}

/// Named analytic densities usable from config files.
pub const DENSITY_CATALOG: [&str; 5] = [
    "uniform-square",
    "ellipse-source",
    "ellipse-target",
    "split-source",
    "circle",
];

/// Looks up a catalog entry by name.
pub fn density_by_name(name: &str) -> Result<AnalyticDensity> {
    match name {
        "uniform-square" => Ok(AnalyticDensity::Uniform(SupportShape::Rect {
            lo: Vec2::new(-1.0, -1.0),
            hi: Vec2::new(1.0, 1.0),
        })),
        "ellipse-source" => Ok(AnalyticDensity::Uniform(SupportShape::Ellipse(
            ellipse_source_matrix(),
        ))),
        "ellipse-target" => Ok(AnalyticDensity::Uniform(SupportShape::Ellipse(
            ellipse_target_matrix(),
        ))),
        "split-source" => Ok(AnalyticDensity::Uniform(SupportShape::HalfDiskPair {
            left_center: Vec2::new(-0.2, 0.0),
            right_center: Vec2::new(0.1, 0.0),
            radius: 0.85,
        })),
        "circle" => Ok(AnalyticDensity::Uniform(SupportShape::Circle {
            center: Vec2::new(0.0, 0.0),
            radius: 0.85,
        })),
        other => Err(OtmaError::Config(format!(
            "unknown density '{other}' (expected one of {DENSITY_CATALOG:?})"
        ))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use std::fs;

    #[test]
    fn full_config_parses() {
        let text = r#"{
            "experiment": "ellipse",
            "nx": 64,
            "ny": 64,
            "stencil_width": 3,
            "dalpha": 0.0491,
            "bc": "wide",
            "filter_c": 5.0,
            "delta": 0.01,
            "monotone_only": true,
            "tol": 1e-7,
            "max_newton": 50,
            "max_euler": 2000,
            "out": "/tmp/runs",
            "target": {"kind": "circle", "center": [0.0, 0.0], "radius": 0.85},
            "source_density": {"named": {"name": "uniform-square"}},
            "target_density": {"csv": {"path": "rho_y.csv"}}
        }"#;
        let cfg: RunConfig = serde_json::from_str(text).unwrap();
        assert_eq!(cfg.experiment.as_deref(), Some("ellipse"));
        assert_eq!(cfg.nx, Some(64));
        assert_eq!(cfg.bc.as_deref(), Some("wide"));
        assert_eq!(cfg.monotone_only, Some(true));
        assert!(matches!(cfg.target, Some(TargetConfig::Circle { .. })));
        assert!(matches!(
            cfg.source_density,
            Some(DensityConfig::Named { .. })
        ));
    }

    #[test]
    fn unknown_fields_are_rejected() {
        let text = r#"{"experiment": "ellipse", "grid_size": 64}"#;
        assert!(serde_json::from_str::<RunConfig>(text).is_err());
    }

    #[test]
    fn target_kinds_build_shapes() {
        let poly: TargetConfig = serde_json::from_str(
            r#"{"kind": "polygon", "points": [[0.9, 0.0], [0.0, 0.9], [-0.9, 0.0]]}"#,
        )
        .unwrap();
        assert!(matches!(
            poly.to_shape().unwrap(),
            TargetShape::Polygon(p) if p.len() == 3
        ));
        let ell: TargetConfig =
            serde_json::from_str(r#"{"kind": "ellipse", "matrix": [[0.6, 0.2], [0.2, 0.8]]}"#)
                .unwrap();
        assert!(matches!(ell.to_shape().unwrap(), TargetShape::Ellipse(_)));
        let bad: TargetConfig =
            serde_json::from_str(r#"{"kind": "ellipse", "matrix": [[0.6, 0.3], [0.2, 0.8]]}"#)
                .unwrap();
        assert!(bad.to_shape().is_err());
        let skinny: TargetConfig =
            serde_json::from_str(r#"{"kind": "polygon", "points": [[0.0, 0.0], [1.0, 0.0]]}"#)
                .unwrap();
        assert!(skinny.to_shape().is_err());
    }

    #[test]
    fn catalog_densities_normalize_to_unit_mass() {
        for name in DENSITY_CATALOG {
            let f = density_by_name(name).unwrap();
            let rho = Density::analytic_on_bbox(f, 201).unwrap().normalized().unwrap();
            assert_relative_eq!(rho.mass(), 1.0, epsilon = 1e-6);
        }
        assert!(density_by_name("gaussian").is_err());
    }

    #[test]
    fn csv_density_config_reads_files() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("rho.csv");
        fs::write(
            &path,
            "i,j,x,y,value\n0,0,0,0,1\n1,0,1,0,1\n0,1,0,1,1\n1,1,1,1,1\n",
        )
        .unwrap();
        let cfg = DensityConfig::Csv { path: path.clone() };
        let rho = cfg.build(0.0, 0.0, 0).unwrap();
        assert_relative_eq!(rho.eval(Vec2::new(0.5, 0.5)), 1.0, epsilon = 1e-12);
    }
}
