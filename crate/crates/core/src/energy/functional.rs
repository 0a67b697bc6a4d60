use std::sync::Arc;

use rayon::prelude::*;

use super::laplacian::{LaplacianPattern, SparseLaplacian};
use crate::complex::{MeasuredComplex, PiecewiseAffineMap, SimplicialComplex};
use crate::error::{Error, Result};

/// Unsigned volume `|f(s)|` of every image simplex.
pub fn image_volumes(complex: &SimplicialComplex, map: &PiecewiseAffineMap) -> Result<Vec<f64>> {
    map.check_rows(complex)?;
    Ok((0..complex.num_simplices())
        .into_par_iter()
        .map(|s| map.view(complex.simplex(s)).volume())
        .collect())
}

pub fn total_image_volume(complex: &SimplicialComplex, map: &PiecewiseAffineMap) -> Result<f64> {
    Ok(image_volumes(complex, map)?.iter().sum())
}

/// `(1/k) trace(f^T L_D f)` with `L_D` the cotangent Laplacian of the
/// source complex.
pub fn dirichlet_energy(complex: &SimplicialComplex, map: &PiecewiseAffineMap) -> Result<f64> {
    map.check_rows(complex)?;
    let l = super::assemble_dirichlet_laplacian(complex)?;
    Ok(l.trace_form(map.coords(), map.dim()) / complex.top_dim() as f64)
}

/// Stretch factor `mu(s) / |f(s)|`.
pub fn stretch_factor(measured: &MeasuredComplex, map: &PiecewiseAffineMap, s: usize) -> Result<f64> {
    let complex = measured.complex();
    map.check_rows(complex)?;
    let vol = map.view(complex.simplex(s)).volume();
    if !(vol > 0.0) {
        return Err(Error::CollapsedImage(s));
    }
    Ok(measured.mass()[s] / vol)
}

/// `E_V(f) = sum_s |f(s)|^2 / mu(s)`.
pub fn vs_energy(measured: &MeasuredComplex, map: &PiecewiseAffineMap) -> Result<f64> {
    let vols = image_volumes(measured.complex(), map)?;
    Ok(energy_from_volumes(&vols, measured.mass()))
}

pub(crate) fn energy_from_volumes(vols: &[f64], mass: &[f64]) -> f64 {
    vols.iter().zip(mass).map(|(v, m)| v * v / m).sum()
}

/// The quadratic form `(1/k) trace(f^T L_V(f) f)`, equal to [`vs_energy`].
pub fn vs_energy_quadratic(measured: &MeasuredComplex, map: &PiecewiseAffineMap) -> Result<f64> {
    let l = super::assemble_vs_laplacian(measured, map)?;
    Ok(l.trace_form(map.coords(), map.dim()) / measured.complex().top_dim() as f64)
}

/// `grad E_V(f) = 2 L_V(f) f`.
pub fn vs_gradient(measured: &MeasuredComplex, map: &PiecewiseAffineMap) -> Result<PiecewiseAffineMap> {
    let l = super::assemble_vs_laplacian(measured, map)?;
    let mut g = l.apply_map(map);
    g.scale(2.0);
    Ok(g)
}

/// `grad |f(M)| = L_D(f) f`.
pub fn image_volume_gradient(
    complex: &SimplicialComplex,
    map: &PiecewiseAffineMap,
) -> Result<PiecewiseAffineMap> {
    let pattern: Arc<LaplacianPattern> = LaplacianPattern::new(complex);
    let l = SparseLaplacian::dirichlet(&pattern, complex, map)?;
    Ok(l.apply_map(map))
}
