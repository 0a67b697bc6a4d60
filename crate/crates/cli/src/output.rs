use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use vsem_core::complex::io::{read_map, read_mesh, MeshFile};
use vsem_core::report::SolverReport;
use vsem_core::PiecewiseAffineMap;

use crate::error::CliError;

pub fn load_mesh(path: &Path) -> Result<MeshFile, CliError> {
    read_mesh(path).map_err(|source| CliError::Input {
        path: path.to_path_buf(),
        source,
    })
}

pub fn load_map(path: &Path) -> Result<PiecewiseAffineMap, CliError> {
    read_map(path).map_err(|source| CliError::Input {
        path: path.to_path_buf(),
        source,
    })
}

pub fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    fs::write(path, text).map_err(|source| CliError::Output {
        path: path.to_path_buf(),
        source,
    })
}

/// Writes to `path`, or to stdout when there is none.
pub fn emit(path: Option<&Path>, text: &str) -> Result<(), CliError> {
    match path {
        Some(p) => write_text(p, text),
        None => std::io::stdout()
            .write_all(text.as_bytes())
            .map_err(|source| CliError::Output {
                path: PathBuf::from("<stdout>"),
                source,
            }),
    }
}

/// Timings are dropped unless asked for, so reruns give identical bytes.
pub fn emit_report(mut report: SolverReport, path: Option<&Path>, timings: bool) -> Result<(), CliError> {
    if !timings {
        report.strip_timings();
    }
    emit(path, &report.to_json())
}

pub fn positive(name: &str, v: f64) -> Result<f64, CliError> {
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(CliError::Usage(format!("--{name} must be a positive number, got {v}")))
    }
}
