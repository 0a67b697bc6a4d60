use std::path::PathBuf;

use clap::{Args, ValueEnum};
use vsem_core::complex::io::{format_map, format_mesh};
use vsem_core::complex::{disk_twist_map, gen_ball_mesh, gen_blob_mesh, gen_ellipsoid_mesh};

use crate::error::{CliError, Outcome};
use crate::output::{emit, write_text};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Kind {
    /// Kuhn cube pushed onto the unit ball.
    Ball,
    /// Ball mesh scaled by `--axes`.
    Ellipsoid,
    /// Unit disk with the polar twist map written to `--map-out`.
    DiskTwistDemo,
    /// Ball mesh with a smooth radial bump of size `--amplitude`.
    Blob,
}

#[derive(Debug, Args)]
pub struct GenArgs {
    #[arg(value_enum)]
    kind: Kind,
    /// Dimension of `ball` and `blob` meshes.
    #[arg(long, default_value_t = 3)]
    dim: usize,
    /// Cube subdivisions per axis.
    #[arg(long, default_value_t = 8)]
    res: usize,
    /// Semi-axes of `ellipsoid`, comma separated.
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    axes: Vec<f64>,
    #[arg(long, default_value_t = 0.3, allow_negative_numbers = true)]
    amplitude: f64,
    /// Rate `k` of the twist `(r, t) -> (r, t + k r)`.
    #[arg(long, default_value_t = 1.0, allow_negative_numbers = true)]
    twist: f64,
    /// Mesh file; stdout when absent.
    #[arg(short, long)]
    output: Option<PathBuf>,
    #[arg(long)]
    map_out: Option<PathBuf>,
}

pub fn run(args: GenArgs) -> Result<Outcome, CliError> {
    if args.kind != Kind::Ellipsoid && !args.axes.is_empty() {
        return Err(CliError::Usage("--axes only applies to ellipsoid".into()));
    }
    if args.kind != Kind::DiskTwistDemo && args.map_out.is_some() {
        return Err(CliError::Usage("--map-out only applies to disk-twist-demo".into()));
    }
    let complex = match args.kind {
        Kind::Ball => gen_ball_mesh(args.dim, args.res)?,
        Kind::Ellipsoid => {
            if args.axes.is_empty() {
                return Err(CliError::Usage("ellipsoid needs --axes".into()));
            }
            gen_ellipsoid_mesh(&args.axes, args.res)?
        }
        Kind::DiskTwistDemo => gen_ball_mesh(2, args.res)?,
        Kind::Blob => gen_blob_mesh(args.dim, args.res, args.amplitude)?,
    };
    if args.kind == Kind::DiskTwistDemo {
        if !args.twist.is_finite() {
            return Err(CliError::Usage(format!("--twist must be finite, got {}", args.twist)));
        }
        let map = disk_twist_map(&complex, args.twist)?;
        if let Some(p) = &args.map_out {
            write_text(p, &format_map(&map))?;
        }
    }
    emit(args.output.as_deref(), &format_mesh(&complex, None))?;
    let summary = format!(
        "N={} m={} dim={} ambient={}",
        complex.num_vertices(),
        complex.num_simplices(),
        complex.top_dim(),
        complex.ambient_dim()
    );
    // Keep stdout clean when it carries the mesh.
    if args.output.is_some() {
        println!("{summary}");
    } else {
        eprintln!("{summary}");
    }
    Ok(Outcome::Success)
}
