//! Spherical parameterization of closed (n-1)-complexes: stereographic
//! utilities, the dipole initial map, the alternating SEM iteration and the
//! constrained Newton solver.

mod dirac;
mod newton;
mod pipeline;
pub(crate) use pipeline::timed;
mod sem;
mod stereo;

pub use dirac::{dirac_map, dirac_map_pinned, dirac_rhs, farthest_vertex, most_regular_simplex};
pub use newton::{
    fd_hessian, kkt_residual, newton_step, solve_sphere, FdHessian, KktResidual, KktState,
    NewtonConfig, NewtonStep, FD_STEP,
};
pub use pipeline::{parameterize_sphere, parameterize_sphere_into, SphereInit, SpherePipelineConfig};
pub use sem::{sem_iterate, SemConfig, DEFAULT_INTERIOR_RADIUS};
pub use stereo::{stereo_project, stereo_unproject, StereoPoint};

use crate::complex::{signed_volume_of, PiecewiseAffineMap, SimplicialComplex};
use crate::error::{Error, Result};
use crate::repair::{untangle, Chart};

/// Checks that `boundary` is a closed, connected complex of top dimension
/// at least 2 in codimension one, with sphere Euler characteristic.
pub(crate) fn check_sphere_complex(boundary: &SimplicialComplex) -> Result<()> {
    let k = boundary.top_dim();
    if boundary.ambient_dim() != k + 1 {
        return Err(Error::DimensionMismatch(format!(
            "sphere complexes need ambient dimension {} for top dimension {k}",
            k + 1
        )));
    }
    if k < 2 {
        return Err(Error::UnsupportedDimension(
            "spherical maps need a boundary of dimension at least 2".into(),
        ));
    }
    boundary.check_sphere_topology()
}

/// Counts image simplices whose cone over the origin is positively and
/// negatively oriented.
pub fn cone_orientation(boundary: &SimplicialComplex, map: &PiecewiseAffineMap) -> (usize, usize) {
    let dim = map.dim();
    let origin = vec![0.0; dim];
    let (mut pos, mut neg) = (0, 0);
    for simplex in boundary.simplices() {
        let mut pts: Vec<&[f64]> = Vec::with_capacity(simplex.len() + 1);
        pts.push(&origin);
        pts.extend(simplex.iter().map(|&v| map.row(v)));
        let vol = signed_volume_of(dim, &pts);
        if vol > 0.0 {
            pos += 1;
        } else if vol < 0.0 {
            neg += 1;
        }
    }
    (pos, neg)
}

/// Reflects the last coordinate when most cones are negatively oriented.
/// Returns whether the map was reflected.
pub(crate) fn orient_outward(boundary: &SimplicialComplex, map: &mut PiecewiseAffineMap) -> bool {
    let (pos, neg) = cone_orientation(boundary, map);
    if neg <= pos {
        return false;
    }
    reflect_last(map);
    true
}

pub(crate) fn reflect_last(map: &mut PiecewiseAffineMap) {
    let d = map.dim();
    for i in 0..map.rows() {
        map.row_mut(i)[d - 1] *= -1.0;
    }
}

/// Largest deviation of a row norm from 1.
pub fn sphere_deviation(map: &PiecewiseAffineMap) -> f64 {
    (0..map.rows())
        .map(|i| (map.row(i).iter().map(|x| x * x).sum::<f64>().sqrt() - 1.0).abs())
        .fold(0.0, f64::max)
}

/// Projects every row radially onto the unit sphere; returns the largest
/// correction.
pub fn normalize_rows(map: &mut PiecewiseAffineMap) -> f64 {
    let mut worst = 0.0f64;
    for i in 0..map.rows() {
        let row = map.row_mut(i);
        let r = row.iter().map(|x| x * x).sum::<f64>().sqrt();
        if r > 0.0 {
            worst = worst.max((r - 1.0).abs());
            row.iter_mut().for_each(|x| *x /= r);
        }
    }
    worst
}

/// Indices of boundary simplices whose cone over the origin is not
/// positively oriented.
pub fn flipped_cones(boundary: &SimplicialComplex, map: &PiecewiseAffineMap) -> Vec<usize> {
    let dim = map.dim();
    let origin = vec![0.0; dim];
    boundary
        .simplices()
        .enumerate()
        .filter(|(_, simplex)| {
            let mut pts: Vec<&[f64]> = Vec::with_capacity(simplex.len() + 1);
            pts.push(&origin);
            pts.extend(simplex.iter().map(|&v| map.row(v)));
            !(signed_volume_of(dim, &pts) > 0.0)
        })
        .map(|(s, _)| s)
        .collect()
}

/// Untangles inverted spherical simplices by re-embedding growing patches
/// around them in a stereographic chart. Returns the remaining count.
pub fn repair_sphere_flips(
    boundary: &SimplicialComplex,
    map: &mut PiecewiseAffineMap,
    max_rounds: usize,
) -> Result<usize> {
    let held = vec![false; map.rows()];
    untangle(boundary, map, &held, Chart::Sphere, max_rounds, |g| flipped_cones(boundary, g))?;
    Ok(flipped_cones(boundary, map).len())
}
