use std::path::PathBuf;

use clap::{Args, ValueEnum};
use vsem_core::complex::io::{format_map, format_mesh};
use vsem_core::protocol::{EllipsoidProtocol, PERTURBATION};
use vsem_core::report::unit_sphere_area;
use vsem_core::sphere::{parameterize_sphere, SphereInit, SpherePipelineConfig, DEFAULT_INTERIOR_RADIUS};
use vsem_core::{MeasuredComplex, PiecewiseAffineMap, SimplicialComplex};

use crate::error::{CliError, Outcome};
use crate::output::{emit_report, load_map, load_mesh, positive, write_text};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum InitKind {
    /// Dipole map from a Laplacian solve.
    Dirac,
    /// Dipole map improved by the stereographic iteration.
    Sem,
    /// Map read from `--init-file`.
    File,
    /// Exact ellipsoid map plus a seeded perturbation; needs `--axes`.
    Exact,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MeasureKind {
    /// Simplex volumes.
    Uniform,
    /// Simplex volumes times the mesh file's density block.
    File,
    /// Image volumes of the exact ellipsoid map; needs `--axes`.
    EllipsoidExact,
}

#[derive(Debug, Args)]
pub struct SphereArgs {
    mesh: PathBuf,
    /// Stop when the energy changes by at most this much. A huge value
    /// reports the initial map. Default 1e-8, or 1e-12 with
    /// `--measure ellipsoid-exact`.
    #[arg(long)]
    tol: Option<f64>,
    /// Stereographic disk radius of the SEM iteration.
    #[arg(long, default_value_t = DEFAULT_INTERIOR_RADIUS)]
    radius: f64,
    /// Default `exact` with `--measure ellipsoid-exact`, else `sem`.
    #[arg(long, value_enum)]
    init: Option<InitKind>,
    #[arg(long)]
    init_file: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "uniform")]
    measure: MeasureKind,
    /// Ellipsoid semi-axes, comma separated.
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    axes: Vec<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = PERTURBATION)]
    perturbation: f64,
    #[arg(long, default_value_t = 100)]
    max_iter: usize,
    /// Map file, one row per boundary vertex.
    #[arg(short, long)]
    output: Option<PathBuf>,
    /// JSON report; stdout when absent.
    #[arg(long)]
    report: Option<PathBuf>,
    /// Writes the boundary mesh that the map's rows refer to, with the
    /// measure used as its density.
    #[arg(long)]
    boundary_out: Option<PathBuf>,
    /// Keep stage timings in the report.
    #[arg(long)]
    timings: bool,
}

/// Masses scaled to a fixed total; the minimizer does not change.
fn scaled(complex: SimplicialComplex, mass: &[f64], total: f64) -> Result<MeasuredComplex, CliError> {
    let scale = total / mass.iter().sum::<f64>();
    Ok(MeasuredComplex::from_masses(complex, mass.iter().map(|m| m * scale).collect())?)
}

pub fn run(args: SphereArgs) -> Result<Outcome, CliError> {
    let tol_default = if args.measure == MeasureKind::EllipsoidExact { 1e-12 } else { 1e-8 };
    let tol = positive("tol", args.tol.unwrap_or(tol_default))?;
    positive("radius", args.radius)?;
    let init_kind = args.init.unwrap_or(if args.measure == MeasureKind::EllipsoidExact {
        InitKind::Exact
    } else {
        InitKind::Sem
    });
    if (init_kind == InitKind::File) != args.init_file.is_some() {
        return Err(CliError::Usage("--init file and --init-file go together".into()));
    }
    let needs_axes = init_kind == InitKind::Exact || args.measure == MeasureKind::EllipsoidExact;
    if needs_axes == args.axes.is_empty() {
        return Err(CliError::Usage(
            "--axes is required by, and only used with, --init exact or --measure ellipsoid-exact".into(),
        ));
    }

    let mesh = load_mesh(&args.mesh)?;
    let complex = mesh.complex;
    let n = complex.ambient_dim();
    let (boundary, parents) = if complex.top_dim() == n {
        if args.measure == MeasureKind::File {
            return Err(CliError::Usage(
                "--measure file needs a closed (n-1)-complex with a density block".into(),
            ));
        }
        let ext = complex.boundary_complex()?;
        (ext.boundary, Some(ext.boundary_vertices))
    } else if complex.top_dim() + 1 == n {
        (complex.clone(), None)
    } else {
        return Err(CliError::Usage(format!(
            "expected an n-complex or a closed (n-1)-complex, got {}-simplices in R^{n}",
            complex.top_dim()
        )));
    };

    let protocol = if needs_axes {
        Some(EllipsoidProtocol::new(&complex, &args.axes, args.perturbation, args.seed)?)
    } else {
        None
    };
    let target = unit_sphere_area(n);
    let measured = match args.measure {
        MeasureKind::Uniform => {
            let m = MeasuredComplex::uniform(boundary.clone())?;
            scaled(boundary.clone(), m.mass(), target)?
        }
        MeasureKind::File => {
            let density = mesh
                .density
                .ok_or_else(|| CliError::Usage("--measure file needs a density block in the mesh".into()))?;
            let m = MeasuredComplex::new(boundary.clone(), density)?;
            scaled(boundary.clone(), m.mass(), target)?
        }
        MeasureKind::EllipsoidExact => protocol.as_ref().expect("axes checked").boundary.clone(),
    };
    let init = match init_kind {
        InitKind::Dirac => SphereInit::Dirac,
        InitKind::Sem => SphereInit::Sem,
        InitKind::Exact => SphereInit::Map(protocol.as_ref().expect("axes checked").boundary_initial()),
        InitKind::File => {
            let path = args.init_file.as_ref().expect("checked above");
            let g = load_map(path)?;
            // Rows of the whole mesh are restricted to the boundary.
            SphereInit::Map(match &parents {
                Some(p) if g.rows() == complex.num_vertices() => {
                    PiecewiseAffineMap::from_fn(p.len(), g.dim(), |t, o| o.copy_from_slice(g.row(p[t])))
                }
                _ => g,
            })
        }
    };
    let cfg = SpherePipelineConfig {
        tol,
        radius: args.radius,
        max_newton_iter: args.max_iter,
        init,
        c_prime: (args.measure == MeasureKind::EllipsoidExact).then(|| measured.total_mass()),
        ..Default::default()
    };
    let (g, report) = parameterize_sphere(&measured, &cfg)?;

    if let Some(p) = &args.output {
        write_text(p, &format_map(&g))?;
    }
    if let Some(p) = &args.boundary_out {
        // The density block carries the measure so that `metrics` sees it.
        let density: Vec<f64> = (0..boundary.num_simplices())
            .map(|s| measured.mass()[s] / boundary.simplex_volume(s))
            .collect();
        write_text(p, &format_mesh(&boundary, Some(&density)))?;
    }
    let s = report.sphere.clone().expect("the pipeline sets sphere diagnostics");
    eprintln!(
        "sphere: {} vertices, epsilon {:.3e} (normalized {:.3e}), mean delta {:.3e}, sd delta {:.3e}, flips {}",
        g.rows(),
        s.epsilon,
        s.normalized_epsilon,
        s.mean_delta,
        s.sd_delta,
        report.flipped_simplices
    );
    let outcome = Outcome::warn_if(report.has_warnings() || report.flipped_simplices > 0);
    emit_report(report, args.report.as_deref(), args.timings)?;
    Ok(outcome)
}
