use std::fmt::Write as _;
use std::path::PathBuf;

use clap::Args;
use serde::Serialize;
use vsem_core::ball::count_flips;
use vsem_core::energy::diagnostics;
use vsem_core::report::{unit_ball_volume, unit_sphere_area, DiagnosticsSummary, REPORT_VERSION};
use vsem_core::sphere::flipped_cones;
use vsem_core::{Error, MeasuredComplex};

use crate::error::{CliError, Outcome};
use crate::output::{emit, load_map, load_mesh, write_text};

#[derive(Debug, Args)]
pub struct MetricsArgs {
    mesh: PathBuf,
    map: PathBuf,
    /// Histogram bins of `delta + 1`.
    #[arg(long, default_value_t = 64)]
    bins: usize,
    /// Histogram range `lo,hi`.
    #[arg(long, value_name = "LO,HI", value_delimiter = ',', default_values_t = [0.0, 2.0], allow_negative_numbers = true)]
    range: Vec<f64>,
    /// Per-simplex `simplex_id,delta_plus_1`.
    #[arg(long)]
    csv: Option<PathBuf>,
    /// JSON summary; stdout when absent.
    #[arg(long)]
    json: Option<PathBuf>,
}

/// Fixed-width bins over `[lo, hi]`; `hi` itself falls in the last bin.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Histogram {
    pub lo: f64,
    pub hi: f64,
    pub counts: Vec<u64>,
    pub underflow: u64,
    pub overflow: u64,
}

impl Histogram {
    pub fn new(lo: f64, hi: f64, bins: usize, values: impl IntoIterator<Item = f64>) -> Self {
        let mut h = Self {
            lo,
            hi,
            counts: vec![0; bins],
            underflow: 0,
            overflow: 0,
        };
        let width = (hi - lo) / bins as f64;
        for x in values {
            if x < lo {
                h.underflow += 1;
            } else if x > hi || x.is_nan() {
                h.overflow += 1;
            } else {
                let k = (((x - lo) / width) as usize).min(bins - 1);
                h.counts[k] += 1;
            }
        }
        h
    }
}

#[derive(Debug, Serialize)]
struct MetricsReport {
    report_version: u32,
    simplices: usize,
    /// `|B^n|` for an n-complex, `|S^(n-1)|` for a closed (n-1)-complex.
    target_measure: f64,
    summary: DiagnosticsSummary,
    sandwich_lower: f64,
    sandwich_upper: f64,
    flipped_simplices: usize,
    histogram: Histogram,
}

pub fn run(args: MetricsArgs) -> Result<Outcome, CliError> {
    let &[lo, hi] = args.range.as_slice() else {
        return Err(CliError::Usage("--range takes two values lo,hi".into()));
    };
    if !(lo < hi && lo.is_finite() && hi.is_finite()) || args.bins == 0 {
        return Err(CliError::Usage(format!(
            "need at least one bin over a finite range lo < hi, got {} bins over [{lo}, {hi}]",
            args.bins
        )));
    }
    let mesh = load_mesh(&args.mesh)?;
    let map = load_map(&args.map)?;
    let complex = mesh.complex;
    let n = complex.ambient_dim();
    map.check_rows(&complex)?;
    if map.dim() != n {
        return Err(Error::DimensionMismatch(format!("map has {} columns, mesh lives in R^{n}", map.dim())).into());
    }
    let (target, flips) = if complex.top_dim() == n {
        (unit_ball_volume(n), count_flips(&complex, &map))
    } else if complex.top_dim() + 1 == n {
        (unit_sphere_area(n), flipped_cones(&complex, &map).len())
    } else {
        return Err(CliError::Usage(format!(
            "metrics need an n-complex or an (n-1)-complex in R^n, got {}-simplices in R^{n}",
            complex.top_dim()
        )));
    };
    let measured = match mesh.density {
        Some(d) => MeasuredComplex::new(complex, d)?,
        None => MeasuredComplex::uniform(complex)?,
    };
    let d = diagnostics(&measured, &map)?;

    if let Some(p) = &args.csv {
        let mut csv = String::from("simplex_id,delta_plus_1\n");
        for (s, delta) in d.delta.iter().enumerate() {
            writeln!(csv, "{s},{}", delta + 1.0).unwrap();
        }
        write_text(p, &csv)?;
    }
    let report = MetricsReport {
        report_version: REPORT_VERSION,
        simplices: d.delta.len(),
        target_measure: target,
        summary: DiagnosticsSummary::new(&d, target),
        sandwich_lower: d.sandwich_lower,
        sandwich_upper: d.sandwich_upper,
        flipped_simplices: flips,
        histogram: Histogram::new(lo, hi, args.bins, d.delta.iter().map(|x| x + 1.0)),
    };
    let mut json = serde_json::to_string_pretty(&report).expect("reports serialize");
    json.push('\n');
    emit(args.json.as_deref(), &json)?;
    Ok(Outcome::Success)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn histogram_edges() {
        let h = Histogram::new(0.0, 2.0, 4, [-0.1, 0.0, 0.49, 0.5, 1.0, 2.0, 2.1, f64::NAN]);
        assert_eq!(h.counts, [2, 1, 1, 1]);
        assert_eq!((h.underflow, h.overflow), (1, 2));
    }

    #[test]
    fn histogram_conserves_count() {
        let xs: Vec<f64> = (0..1000).map(|i| -0.5 + 3.0 * i as f64 / 999.0).collect();
        let h = Histogram::new(0.0, 2.0, 64, xs.iter().copied());
        let total = h.counts.iter().sum::<u64>() + h.underflow + h.overflow;
        assert_eq!(total, 1000);
    }
}
