use std::path::PathBuf;

use clap::Args;
use vsem_core::ball::{parameterize_ball, BallPipelineConfig};
use vsem_core::complex::io::format_map;
use vsem_core::protocol::{EllipsoidProtocol, PERTURBATION};
use vsem_core::sphere::DEFAULT_INTERIOR_RADIUS;
use vsem_core::MeasuredComplex;

use crate::error::{CliError, Outcome};
use crate::output::{emit_report, load_mesh, positive, write_text};

#[derive(Debug, Args)]
pub struct BallArgs {
    mesh: PathBuf,
    /// Sphere stage energy-change tolerance. Default 1e-8, or 1e-12 with
    /// `--init-exact`.
    #[arg(long)]
    tol_boundary: Option<f64>,
    /// Interior stage gradient tolerance. Default 1e-6, or 1e-12 with
    /// `--init-exact`.
    #[arg(long)]
    tol_interior: Option<f64>,
    #[arg(long, default_value_t = DEFAULT_INTERIOR_RADIUS)]
    radius: f64,
    /// Skip the centering and principal-axis scaling of the boundary.
    #[arg(long)]
    no_pca: bool,
    /// Untangle inverted simplices after the interior solve (default).
    #[arg(long, overrides_with = "no_fix_orientation")]
    fix_orientation: bool,
    #[arg(long, overrides_with = "fix_orientation")]
    no_fix_orientation: bool,
    /// Ellipsoid protocol with these semi-axes: exact boundary measure and
    /// total volume, start from the perturbed exact map.
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    init_exact: Vec<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = PERTURBATION)]
    perturbation: f64,
    #[arg(long, default_value_t = 100)]
    max_iter: usize,
    #[arg(long, default_value_t = 100)]
    max_interior_iter: usize,
    #[arg(short, long)]
    output: Option<PathBuf>,
    /// JSON report; stdout when absent.
    #[arg(long)]
    report: Option<PathBuf>,
    #[arg(long)]
    timings: bool,
}

pub fn run(args: BallArgs) -> Result<Outcome, CliError> {
    let mesh = load_mesh(&args.mesh)?;
    let complex = mesh.complex;
    let exact = !args.init_exact.is_empty();
    let default_tol = |t: f64| if exact { 1e-12 } else { t };
    let defaults = BallPipelineConfig::default();
    let tol_boundary = positive("tol-boundary", args.tol_boundary.unwrap_or(default_tol(defaults.tol_boundary)))?;
    let tol_interior = positive("tol-interior", args.tol_interior.unwrap_or(default_tol(defaults.tol_interior)))?;
    positive("radius", args.radius)?;

    let mut cfg = if exact {
        EllipsoidProtocol::new(&complex, &args.init_exact, args.perturbation, args.seed)?
            .ball_config(tol_boundary, tol_interior)
    } else {
        BallPipelineConfig {
            tol_boundary,
            tol_interior,
            ..defaults
        }
    };
    cfg.radius = args.radius;
    cfg.pca = !args.no_pca;
    cfg.fix_orientation = !args.no_fix_orientation;
    cfg.max_newton_iter = args.max_iter;
    cfg.max_interior_iter = args.max_interior_iter;

    let measured = match mesh.density {
        Some(d) => MeasuredComplex::new(complex, d)?,
        None => MeasuredComplex::uniform(complex)?,
    };
    let out = parameterize_ball(&measured, &cfg)?;
    if let Some(p) = &args.output {
        write_text(p, &format_map(&out.map))?;
    }
    let report = out.report;
    let (s, b) = (
        report.sphere.clone().expect("sphere diagnostics"),
        report.ball.clone().expect("ball diagnostics"),
    );
    eprintln!(
        "sphere: epsilon {:.3e} (normalized {:.3e}); ball: epsilon {:.3e} (normalized {:.3e}), mean delta {:.3e}, sd delta {:.3e}, flips {}",
        s.epsilon,
        s.normalized_epsilon,
        b.epsilon,
        b.normalized_epsilon,
        b.mean_delta,
        b.sd_delta,
        report.flipped_simplices
    );
    let outcome = Outcome::warn_if(report.has_warnings() || report.flipped_simplices > 0);
    emit_report(report, args.report.as_deref(), args.timings)?;
    Ok(outcome)
}
