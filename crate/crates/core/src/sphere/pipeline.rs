use std::time::Instant;

use super::{
    dirac_map, flipped_cones, repair_sphere_flips, sem_iterate, solve_sphere, NewtonConfig, SemConfig,
    DEFAULT_INTERIOR_RADIUS,
};
use crate::complex::{MeasuredComplex, PiecewiseAffineMap};
use crate::energy::{diagnostics, vs_energy};
use crate::error::{Error, Result};
use crate::report::{unit_sphere_area, DiagnosticsSummary, SolverReport, StageReport};

/// Where the Newton stage starts.
#[derive(Debug, Clone)]
pub enum SphereInit {
    Dirac,
    /// Dirac map followed by SEM.
    Sem,
    Map(PiecewiseAffineMap),
}

#[derive(Debug, Clone)]
pub struct SpherePipelineConfig {
    /// Newton stopping tolerance on the energy change.
    pub tol: f64,
    pub radius: f64,
    pub sem_tol: f64,
    pub max_sem_iter: usize,
    pub max_newton_iter: usize,
    /// Rounds of fold repair after the initial map.
    pub max_repair_rounds: usize,
    pub init: SphereInit,
    /// Total image volume; defaults to that of the initial map.
    pub c_prime: Option<f64>,
}

impl Default for SpherePipelineConfig {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            radius: DEFAULT_INTERIOR_RADIUS,
            sem_tol: 1e-6,
            max_sem_iter: 100,
            max_newton_iter: 100,
            max_repair_rounds: 20,
            init: SphereInit::Sem,
            c_prime: None,
        }
    }
}

pub(crate) fn timed(mut stage: StageReport, start: Instant) -> StageReport {
    stage.seconds = Some(start.elapsed().as_secs_f64());
    stage
}

/// Spherical parameterization of a closed `(n-1)`-complex in `R^n`: initial
/// map, fold repair, constrained Newton. Stages go into `report`; errors are
/// tagged with the stage that raised them.
pub fn parameterize_sphere_into(
    measured: &MeasuredComplex,
    config: &SpherePipelineConfig,
    report: &mut SolverReport,
) -> Result<PiecewiseAffineMap> {
    for (name, v) in [("tol", config.tol), ("radius", config.radius), ("sem_tol", config.sem_tol)] {
        if !(v > 0.0) {
            return Err(Error::InvalidParameter(format!("{name} must be positive, got {v}")));
        }
    }
    let boundary = measured.complex();
    let n = boundary.ambient_dim();
    let mut g = match &config.init {
        SphereInit::Map(g) => {
            g.check_rows(boundary).map_err(Error::at("initial-map"))?;
            if g.dim() != n {
                return Err(Error::at("initial-map")(Error::DimensionMismatch(format!(
                    "initial map has {} columns, expected {n}",
                    g.dim()
                ))));
            }
            g.clone()
        }
        SphereInit::Dirac | SphereInit::Sem => {
            let start = Instant::now();
            let g = dirac_map(boundary).map_err(Error::at("dirac"))?;
            let mut st = StageReport::new("dirac", vs_energy(measured, &g).map_err(Error::at("dirac"))?);
            st.converged = true;
            st.set_value("flips", flipped_cones(boundary, &g).len() as f64);
            report.stages.push(timed(st, start));
            g
        }
    };
    if matches!(config.init, SphereInit::Sem) {
        let start = Instant::now();
        let sem_cfg = SemConfig {
            radius: config.radius,
            tol: config.sem_tol,
            max_iter: config.max_sem_iter,
        };
        let (out, st) = sem_iterate(measured, &g, &sem_cfg).map_err(Error::at("sem"))?;
        report.stages.push(timed(st, start));
        g = out;
    }
    if !matches!(config.init, SphereInit::Map(_)) {
        let start = Instant::now();
        let before = flipped_cones(boundary, &g).len();
        let mut st = StageReport::new("repair", vs_energy(measured, &g).map_err(Error::at("repair"))?);
        let left = repair_sphere_flips(boundary, &mut g, config.max_repair_rounds).map_err(Error::at("repair"))?;
        st.final_energy = vs_energy(measured, &g).map_err(Error::at("repair"))?;
        st.set_value("initial_flips", before as f64);
        st.set_value("final_flips", left as f64);
        st.converged = left == 0;
        if left > 0 {
            st.warnings.push(format!("{left} inverted simplices remain on the sphere"));
        }
        report.stages.push(timed(st, start));
    }

    let start = Instant::now();
    let newton_cfg = NewtonConfig {
        tol: config.tol,
        max_iter: config.max_newton_iter,
    };
    let (state, st) = solve_sphere(measured, &g, config.c_prime, &newton_cfg).map_err(Error::at("newton"))?;
    report.stages.push(timed(st, start));
    let d = diagnostics(measured, &state.g).map_err(Error::at("newton"))?;
    report.sphere = Some(DiagnosticsSummary::new(&d, unit_sphere_area(n)));
    Ok(state.g)
}

/// [`parameterize_sphere_into`] with a fresh report whose flip count is that
/// of the final map.
pub fn parameterize_sphere(
    measured: &MeasuredComplex,
    config: &SpherePipelineConfig,
) -> Result<(PiecewiseAffineMap, SolverReport)> {
    let mut report = SolverReport::default();
    let g = parameterize_sphere_into(measured, config, &mut report)?;
    report.flipped_simplices = flipped_cones(measured.complex(), &g).len();
    Ok((g, report))
}
