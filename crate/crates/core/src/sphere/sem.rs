use super::stereo::{stereo_unproject, StereoPoint};
use super::{check_sphere_complex, cone_orientation, reflect_last};
use crate::complex::{MeasuredComplex, PiecewiseAffineMap};
use crate::energy::{vs_energy, LaplacianPattern, SparseLaplacian};
use crate::error::{Error, Result};
use crate::linsolve::ReducedSolver;
use crate::report::{IterationRecord, StageReport};

pub const DEFAULT_INTERIOR_RADIUS: f64 = 1.2;

#[derive(Debug, Clone)]
pub struct SemConfig {
    /// Vertices with `|h| < radius` in the stereographic plane are solved for.
    pub radius: f64,
    /// Stop once the energy decrease falls to `tol` or below.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for SemConfig {
    fn default() -> Self {
        Self {
            radius: DEFAULT_INTERIOR_RADIUS,
            tol: 1e-10,
            max_iter: 100,
        }
    }
}

/// North-south alternating stretch-energy minimization on the sphere.
///
/// Inverting the plane, `h -> h / |h|^2`, is the same as reflecting the
/// sphere in its last coordinate, so the iteration keeps the spherical map
/// as its state and tracks the reflection parity. Iterations that raise the
/// energy are rejected and end the loop.
pub fn sem_iterate(
    measured: &MeasuredComplex,
    initial: &PiecewiseAffineMap,
    config: &SemConfig,
) -> Result<(PiecewiseAffineMap, StageReport)> {
    let boundary = measured.complex();
    check_sphere_complex(boundary)?;
    initial.check_rows(boundary)?;
    if !(config.radius > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "interior radius must be positive, got {}",
            config.radius
        )));
    }
    if initial.dim() != boundary.ambient_dim() {
        return Err(Error::DimensionMismatch(
            "initial map must live in the boundary's ambient space".into(),
        ));
    }

    let nv = boundary.num_vertices();
    let k = boundary.top_dim();
    let pattern = LaplacianPattern::new(boundary);
    let mut g = initial.clone();
    let mut energy = vs_energy(measured, &g)?;
    let mut report = StageReport::new("sem", energy);
    let mut reflected = false;
    let mut delta = f64::INFINITY;

    while delta > config.tol && report.iterations.len() < config.max_iter {
        let l = SparseLaplacian::stretch(&pattern, measured, &g)?;
        report.negative_weight_fraction = Some(l.negative_weight_fraction());

        let mut trial = g.clone();
        reflect_last(&mut trial);
        let mut h = vec![0.0; nv * k];
        let mut finite = vec![true; nv];
        let mut free = Vec::new();
        for i in 0..nv {
            match StereoPoint::from_sphere(trial.row(i)) {
                StereoPoint::Finite(p) => {
                    if p.iter().map(|x| x * x).sum::<f64>().sqrt() < config.radius {
                        free.push(i);
                    }
                    h[i * k..(i + 1) * k].copy_from_slice(&p);
                }
                StereoPoint::Infinity => finite[i] = false,
            }
        }
        if free.is_empty() {
            return Err(Error::EmptyInterior {
                radius: config.radius,
            });
        }
        if free.len() == nv {
            return Err(Error::InvalidParameter(format!(
                "every vertex lies inside radius {}; nothing is held fixed",
                config.radius
            )));
        }
        for &i in &free {
            if let Some(&(j, _)) = pattern.neighbors(i).iter().find(|(j, _)| !finite[*j]) {
                return Err(Error::InvalidParameter(format!(
                    "vertex {i} is solved for but its neighbor {j} sits at the projection pole"
                )));
            }
        }

        let solver = ReducedSolver::new(&pattern, &free)?;
        let factor = solver.factor(&l)?;
        let rhs = vec![0.0; nv * k];
        solver.solve(&l, &factor, &rhs, &mut h, k)?;
        for &i in &free {
            trial
                .row_mut(i)
                .copy_from_slice(&stereo_unproject(&h[i * k..(i + 1) * k]));
        }

        let mut record = IterationRecord {
            iteration: report.iterations.len() + 1,
            interior: Some(free.len()),
            ..Default::default()
        };
        let new_energy = match vs_energy(measured, &trial) {
            Ok(e) if e.is_finite() => e,
            _ => f64::INFINITY,
        };
        delta = energy - new_energy;
        record.energy = new_energy;
        record.delta_energy = delta;
        let (pos, neg) = cone_orientation(boundary, &trial);
        // `trial` carries one more reflection than `g`.
        record.flips = Some(if reflected { neg } else { pos });
        if !(delta > 0.0) {
            report.iterations.push(record);
            break;
        }
        record.accepted = true;
        report.iterations.push(record);
        g = trial;
        reflected = !reflected;
        energy = new_energy;
    }

    if reflected {
        reflect_last(&mut g);
    }
    report.final_energy = energy;
    report.converged = !(delta > config.tol);
    if report.iterations.len() >= config.max_iter && delta > config.tol {
        report
            .warnings
            .push(format!("iteration cap {} reached", config.max_iter));
    }
    Ok((g, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::complex::gen_ball_mesh;
    use crate::energy::diagnostics;
    use crate::sphere::{dirac_map, sphere_deviation};

    fn unit_sphere(res: usize) -> MeasuredComplex {
        let b = gen_ball_mesh(3, res).unwrap().boundary_complex().unwrap().boundary;
        MeasuredComplex::uniform(b).unwrap()
    }

    #[test]
    fn energy_decreases_from_dirac_map() {
        let m = unit_sphere(6);
        let g0 = dirac_map(m.complex()).unwrap();
        let eps0 = diagnostics(&m, &g0).unwrap().epsilon;
        let (g, rep) = sem_iterate(&m, &g0, &SemConfig::default()).unwrap();
        let trace = rep.energy_trace();
        assert!(trace.windows(2).all(|w| w[1] < w[0]), "{trace:?}");
        assert!(rep.accepted_iterations() > 0);
        assert!(sphere_deviation(&g) < 1e-12);
        let eps = diagnostics(&m, &g).unwrap().epsilon;
        assert!(eps < eps0, "{eps} vs {eps0}");
        assert_eq!(cone_orientation(m.complex(), &g).1, 0);
    }

    #[test]
    fn infinite_tolerance_returns_initial_map() {
        let m = unit_sphere(3);
        let g0 = dirac_map(m.complex()).unwrap();
        let cfg = SemConfig {
            tol: f64::INFINITY,
            ..Default::default()
        };
        let (g, rep) = sem_iterate(&m, &g0, &cfg).unwrap();
        assert!(rep.iterations.is_empty());
        assert_eq!(g, g0);
    }

    #[test]
    fn tiny_radius_is_an_error() {
        let m = unit_sphere(3);
        let g0 = dirac_map(m.complex()).unwrap();
        let cfg = SemConfig {
            radius: 1e-9,
            ..Default::default()
        };
        assert!(matches!(
            sem_iterate(&m, &g0, &cfg),
            Err(Error::EmptyInterior { .. })
        ));
    }
}
