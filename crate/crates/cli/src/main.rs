mod ball;
mod error;
mod gen;
mod metrics;
mod output;
mod sphere;

use std::process::ExitCode;

use clap::{Parser, Subcommand};

use crate::error::{CliError, Outcome};

/// Mass-preserving parameterizations of simplicial meshes onto the unit ball
/// and sphere.
#[derive(Parser)]
#[command(name = "vsem", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a generated test mesh.
    Gen(gen::GenArgs),
    /// Map a closed (n-1)-complex, or the boundary of an n-complex, onto the
    /// unit sphere.
    Sphere(sphere::SphereArgs),
    /// Map an n-complex with ball topology onto the unit n-ball.
    Ball(ball::BallArgs),
    /// Volume-ratio statistics and histogram of an existing map.
    Metrics(metrics::MetricsArgs),
}

fn run(cli: Cli) -> Result<Outcome, CliError> {
    match cli.command {
        Command::Gen(a) => gen::run(a),
        Command::Sphere(a) => sphere::run(a),
        Command::Ball(a) => ball::run(a),
        Command::Metrics(a) => metrics::run(a),
    }
}

fn main() -> ExitCode {
    // Usage errors exit with 2 inside clap.
    let cli = Cli::parse();
    match run(cli) {
        Ok(Outcome::Success) => ExitCode::SUCCESS,
        Ok(Outcome::Warning) => ExitCode::from(1),
        Err(e) => {
            eprintln!("vsem: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
