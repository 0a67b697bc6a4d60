//! The ellipsoid exactness protocol: a mesh of the ellipsoid with semi-axes
//! `a` has the exact mass-preserving map `f*(v) = v / a` onto the unit ball,
//! which lets the solvers be checked against a known optimum.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::ball::BallPipelineConfig;
use crate::complex::{MeasuredComplex, PiecewiseAffineMap, SimplicialComplex};
use crate::energy::image_volumes;
use crate::error::{Error, Result};
use crate::sphere::normalize_rows;

/// Default perturbation amplitude applied to the exact map.
pub const PERTURBATION: f64 = 1e-4;

fn check_axes(axes: &[f64], dim: usize) -> Result<()> {
    if axes.len() != dim {
        return Err(Error::DimensionMismatch(format!(
            "{} axes given for a mesh in R^{dim}",
            axes.len()
        )));
    }
    if let Some(a) = axes.iter().find(|a| !(**a > 0.0 && a.is_finite())) {
        return Err(Error::InvalidParameter(format!(
            "ellipsoid axes must be positive, got {a}"
        )));
    }
    Ok(())
}

/// `f*(v) = v / a` coordinatewise.
pub fn exact_ellipsoid_map(complex: &SimplicialComplex, axes: &[f64]) -> Result<PiecewiseAffineMap> {
    let dim = complex.ambient_dim();
    check_axes(axes, dim)?;
    Ok(PiecewiseAffineMap::from_fn(complex.num_vertices(), dim, |i, out| {
        for (c, o) in out.iter_mut().enumerate() {
            *o = complex.vertex(i)[c] / axes[c];
        }
    }))
}

/// Boundary complex measured by the image volumes of the exact map,
/// `mu'(t) = |f*(t)|`, so that `f*` restricted to the boundary is itself
/// mass-preserving and `C' = sum mu'`.
pub fn exact_boundary_measure(
    boundary: &SimplicialComplex,
    exact: &PiecewiseAffineMap,
) -> Result<MeasuredComplex> {
    let vols = image_volumes(boundary, exact)?;
    if let Some(s) = vols.iter().position(|v| !(*v > 0.0)) {
        return Err(Error::CollapsedImage(s));
    }
    MeasuredComplex::from_masses(boundary.clone(), vols)
}

/// Adds independent uniform noise in `[-amplitude, amplitude]` to every
/// coordinate from a ChaCha8 stream seeded with `seed`. Rows listed in
/// `sphere_rows` are projected back onto the unit sphere afterwards.
pub fn perturb(
    map: &PiecewiseAffineMap,
    amplitude: f64,
    seed: u64,
    sphere_rows: Option<&[usize]>,
) -> PiecewiseAffineMap {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = map.clone();
    if amplitude > 0.0 {
        for x in out.coords_mut() {
            *x += rng.random_range(-amplitude..=amplitude);
        }
    }
    if let Some(rows) = sphere_rows {
        let d = out.dim();
        let mut sub = PiecewiseAffineMap::from_fn(rows.len(), d, |t, o| o.copy_from_slice(out.row(rows[t])));
        normalize_rows(&mut sub);
        for (t, &i) in rows.iter().enumerate() {
            out.row_mut(i).copy_from_slice(sub.row(t));
        }
    }
    out
}

/// Inputs of an ellipsoid exactness run on a mesh of the ellipsoid (or of
/// its boundary) with semi-axes `axes`.
#[derive(Debug, Clone)]
pub struct EllipsoidProtocol {
    pub exact: PiecewiseAffineMap,
    /// Boundary complex measured by the exact image volumes.
    pub boundary: MeasuredComplex,
    /// Parent index of each boundary vertex.
    pub boundary_vertices: Vec<usize>,
    /// Perturbed exact map, boundary rows back on the unit sphere.
    pub initial: PiecewiseAffineMap,
}

impl EllipsoidProtocol {
    /// Accepts a full-dimensional complex or a closed codimension-one one.
    pub fn new(complex: &SimplicialComplex, axes: &[f64], amplitude: f64, seed: u64) -> Result<Self> {
        if !(amplitude >= 0.0 && amplitude.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "perturbation must be non-negative, got {amplitude}"
            )));
        }
        let exact = exact_ellipsoid_map(complex, axes)?;
        let (boundary, boundary_vertices) = if complex.top_dim() == complex.ambient_dim() {
            let ext = complex.boundary_complex()?;
            (ext.boundary, ext.boundary_vertices)
        } else {
            (complex.clone(), (0..complex.num_vertices()).collect())
        };
        let fb = restrict_rows(&exact, &boundary_vertices);
        let boundary = exact_boundary_measure(&boundary, &fb)?;
        let initial = perturb(&exact, amplitude, seed, Some(&boundary_vertices));
        Ok(Self {
            exact,
            boundary,
            boundary_vertices,
            initial,
        })
    }

    /// `C' = sum mu'`.
    pub fn c_prime(&self) -> f64 {
        self.boundary.total_mass()
    }

    pub fn boundary_initial(&self) -> PiecewiseAffineMap {
        restrict_rows(&self.initial, &self.boundary_vertices)
    }

    /// Ball pipeline settings for the protocol: exact boundary measure and
    /// `C'`, perturbed start, no PCA.
    pub fn ball_config(&self, tol_boundary: f64, tol_interior: f64) -> BallPipelineConfig {
        BallPipelineConfig {
            tol_boundary,
            tol_interior,
            pca: false,
            boundary_measure: Some(self.boundary.mass().to_vec()),
            c_prime: Some(self.c_prime()),
            initial_map: Some(self.initial.clone()),
            ..Default::default()
        }
    }
}

fn restrict_rows(map: &PiecewiseAffineMap, rows: &[usize]) -> PiecewiseAffineMap {
    PiecewiseAffineMap::from_fn(rows.len(), map.dim(), |t, o| o.copy_from_slice(map.row(rows[t])))
}
