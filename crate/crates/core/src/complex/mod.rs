//! Simplicial complexes embedded in `R^n`, piecewise affine maps on them, and
//! the measures carried by their top simplices.
//!
//! Storage is flat and row-major: vertex `i` occupies
//! `vertices[i * n..(i + 1) * n]` and simplex `s` occupies
//! `simplices[s * (k + 1)..(s + 1) * (k + 1)]`. Indices are 0-based.

mod generate;
mod geometry;
pub mod io;
mod topology;

pub use generate::{disk_twist_map, gen_ball_mesh, gen_blob_mesh, gen_ellipsoid_mesh};
pub use geometry::{
    barycentric_coords, gram_volume, signed_volume_of, LocalFrame, SimplexView,
};
pub use topology::{euler_characteristic, BoundaryExtraction, FacetIncidence};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct SimplicialComplex {
    ambient_dim: usize,
    top_dim: usize,
    vertices: Vec<f64>,
    simplices: Vec<usize>,
}

impl SimplicialComplex {
    /// Builds a complex after checking index ranges, repeated vertices and
    /// dimensions. Geometry is not inspected here.
    pub fn new(
        ambient_dim: usize,
        top_dim: usize,
        vertices: Vec<f64>,
        simplices: Vec<usize>,
    ) -> Result<Self> {
        if ambient_dim == 0 {
            return Err(Error::UnsupportedDimension("ambient dimension 0".into()));
        }
        if top_dim == 0 || top_dim > ambient_dim {
            return Err(Error::DimensionMismatch(format!(
                "top dimension {top_dim} must lie in 1..={ambient_dim}"
            )));
        }
        if vertices.len() % ambient_dim != 0 {
            return Err(Error::DimensionMismatch(format!(
                "{} coordinates is not a multiple of ambient dimension {ambient_dim}",
                vertices.len()
            )));
        }
        let width = top_dim + 1;
        if simplices.len() % width != 0 {
            return Err(Error::DimensionMismatch(format!(
                "{} simplex indices is not a multiple of {width}",
                simplices.len()
            )));
        }
        let count = vertices.len() / ambient_dim;
        for (s, simplex) in simplices.chunks_exact(width).enumerate() {
            for (a, &index) in simplex.iter().enumerate() {
                if index >= count {
                    return Err(Error::IndexOutOfRange {
                        simplex: s,
                        index,
                        count,
                    });
                }
                if simplex[..a].contains(&index) {
                    return Err(Error::RepeatedVertex { simplex: s, vertex: index });
                }
            }
        }
        Ok(Self {
            ambient_dim,
            top_dim,
            vertices,
            simplices,
        })
    }

    pub fn ambient_dim(&self) -> usize {
        self.ambient_dim
    }

    pub fn top_dim(&self) -> usize {
        self.top_dim
    }

    pub fn num_vertices(&self) -> usize {
        self.vertices.len() / self.ambient_dim
    }

    pub fn num_simplices(&self) -> usize {
        self.simplices.len() / (self.top_dim + 1)
    }

    pub fn vertex(&self, i: usize) -> &[f64] {
        &self.vertices[i * self.ambient_dim..(i + 1) * self.ambient_dim]
    }

    pub fn simplex(&self, s: usize) -> &[usize] {
        let w = self.top_dim + 1;
        &self.simplices[s * w..(s + 1) * w]
    }

    pub fn simplices(&self) -> impl ExactSizeIterator<Item = &[usize]> + '_ {
        self.simplices.chunks_exact(self.top_dim + 1)
    }

    pub fn vertex_coords(&self) -> &[f64] {
        &self.vertices
    }

    pub fn simplex_indices(&self) -> &[usize] {
        &self.simplices
    }

    /// Same connectivity, new vertex positions (possibly in another ambient
    /// dimension).
    pub fn with_vertices(&self, ambient_dim: usize, vertices: Vec<f64>) -> Result<Self> {
        if vertices.len() != ambient_dim * self.num_vertices() {
            return Err(Error::DimensionMismatch(format!(
                "expected {} coordinates, got {}",
                ambient_dim * self.num_vertices(),
                vertices.len()
            )));
        }
        if self.top_dim > ambient_dim {
            return Err(Error::DimensionMismatch(format!(
                "top dimension {} exceeds ambient dimension {ambient_dim}",
                self.top_dim
            )));
        }
        Ok(Self {
            ambient_dim,
            top_dim: self.top_dim,
            vertices,
            simplices: self.simplices.clone(),
        })
    }

    pub(crate) fn vertices_mut(&mut self) -> &mut [f64] {
        &mut self.vertices
    }

    pub(crate) fn flip_simplex(&mut self, s: usize) {
        let w = self.top_dim + 1;
        self.simplices.swap(s * w, s * w + 1);
    }

    /// Unsigned k-volume `sqrt(det(E^T E)) / k!` of simplex `s`.
    pub fn simplex_volume(&self, s: usize) -> f64 {
        self.view(s).volume()
    }

    /// Signed volume `det(E) / n!`; only defined when `k = n`.
    pub fn signed_volume(&self, s: usize) -> Result<f64> {
        if self.top_dim != self.ambient_dim {
            return Err(Error::DimensionMismatch(format!(
                "signed volume needs a full-dimensional simplex, have k = {} in R^{}",
                self.top_dim, self.ambient_dim
            )));
        }
        Ok(self.view(s).signed_volume())
    }

    pub fn total_volume(&self) -> f64 {
        (0..self.num_simplices()).map(|s| self.simplex_volume(s)).sum()
    }

    pub fn view(&self, s: usize) -> SimplexView<'_> {
        SimplexView::new(&self.vertices, self.ambient_dim, self.simplex(s))
    }

    /// Flips every negatively oriented top simplex of a full-dimensional
    /// complex. Returns the number of simplices flipped.
    pub fn normalize_orientation(&mut self) -> usize {
        if self.top_dim != self.ambient_dim {
            return 0;
        }
        let mut flipped = 0;
        for s in 0..self.num_simplices() {
            if self.view(s).signed_volume() < 0.0 {
                self.flip_simplex(s);
                flipped += 1;
            }
        }
        flipped
    }

    /// Rejects simplices whose volume is below `rel_tol` times the mean.
    pub fn check_nondegenerate(&self, rel_tol: f64) -> Result<()> {
        let m = self.num_simplices();
        if m == 0 {
            return Ok(());
        }
        let volumes: Vec<f64> = (0..m).map(|s| self.simplex_volume(s)).collect();
        let mean = volumes.iter().sum::<f64>() / m as f64;
        match volumes.iter().position(|&v| !(v > rel_tol * mean)) {
            Some(s) => Err(Error::DegenerateSimplex(s)),
            None => Ok(()),
        }
    }

    /// Vertex adjacency lists through edges of top simplices, sorted.
    pub fn vertex_neighbors(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.num_vertices()];
        for simplex in self.simplices() {
            for (a, &i) in simplex.iter().enumerate() {
                for &j in &simplex[a + 1..] {
                    adj[i].push(j);
                    adj[j].push(i);
                }
            }
        }
        for list in &mut adj {
            list.sort_unstable();
            list.dedup();
        }
        adj
    }
}

/// Per-vertex images of a piecewise affine map, one row per vertex.
#[derive(Debug, Clone, PartialEq)]
pub struct PiecewiseAffineMap {
    dim: usize,
    coords: Vec<f64>,
}

impl PiecewiseAffineMap {
    pub fn new(dim: usize, coords: Vec<f64>) -> Result<Self> {
        if dim == 0 || coords.len() % dim != 0 {
            return Err(Error::DimensionMismatch(format!(
                "{} coordinates do not form rows of width {dim}",
                coords.len()
            )));
        }
        Ok(Self { dim, coords })
    }

    pub fn zeros(rows: usize, dim: usize) -> Self {
        Self {
            dim,
            coords: vec![0.0; rows * dim],
        }
    }

    /// The inclusion of the complex's vertices into its ambient space.
    pub fn identity(complex: &SimplicialComplex) -> Self {
        Self {
            dim: complex.ambient_dim(),
            coords: complex.vertex_coords().to_vec(),
        }
    }

    pub fn from_fn(rows: usize, dim: usize, mut f: impl FnMut(usize, &mut [f64])) -> Self {
        let mut coords = vec![0.0; rows * dim];
        for (i, row) in coords.chunks_exact_mut(dim).enumerate() {
            f(i, row);
        }
        Self { dim, coords }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn rows(&self) -> usize {
        self.coords.len() / self.dim
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.coords[i * self.dim..(i + 1) * self.dim]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.coords[i * self.dim..(i + 1) * self.dim]
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    pub fn coords_mut(&mut self) -> &mut [f64] {
        &mut self.coords
    }

    pub fn into_coords(self) -> Vec<f64> {
        self.coords
    }

    pub fn check_rows(&self, complex: &SimplicialComplex) -> Result<()> {
        if self.rows() != complex.num_vertices() {
            return Err(Error::DimensionMismatch(format!(
                "map has {} rows but the complex has {} vertices",
                self.rows(),
                complex.num_vertices()
            )));
        }
        if self.dim < complex.top_dim() {
            return Err(Error::DimensionMismatch(format!(
                "map dimension {} is below the simplex dimension {}",
                self.dim,
                complex.top_dim()
            )));
        }
        Ok(())
    }

    /// View of the image of simplex `simplex` under this map.
    pub fn view<'a>(&'a self, simplex: &'a [usize]) -> SimplexView<'a> {
        SimplexView::new(&self.coords, self.dim, simplex)
    }

    pub fn scale(&mut self, c: f64) {
        self.coords.iter_mut().for_each(|x| *x *= c);
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        self.coords
            .iter()
            .zip(&other.coords)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

/// A complex together with a positive piecewise-constant density.
#[derive(Debug, Clone)]
pub struct MeasuredComplex {
    complex: SimplicialComplex,
    density: Vec<f64>,
    mass: Vec<f64>,
}

impl MeasuredComplex {
    pub fn new(complex: SimplicialComplex, density: Vec<f64>) -> Result<Self> {
        if density.len() != complex.num_simplices() {
            return Err(Error::DimensionMismatch(format!(
                "{} densities for {} simplices",
                density.len(),
                complex.num_simplices()
            )));
        }
        if let Some(s) = density.iter().position(|&r| !(r > 0.0 && r.is_finite())) {
            return Err(Error::InvalidMass {
                simplex: s,
                value: density[s],
            });
        }
        let mass = density
            .iter()
            .enumerate()
            .map(|(s, &r)| r * complex.simplex_volume(s))
            .collect::<Vec<_>>();
        if let Some(s) = mass.iter().position(|&m| !(m > 0.0)) {
            return Err(Error::InvalidMass {
                simplex: s,
                value: mass[s],
            });
        }
        Ok(Self {
            complex,
            density,
            mass,
        })
    }

    pub fn uniform(complex: SimplicialComplex) -> Result<Self> {
        let m = complex.num_simplices();
        Self::new(complex, vec![1.0; m])
    }

    /// Builds the measure from masses directly; the density is recovered as
    /// `mass / volume`.
    pub fn from_masses(complex: SimplicialComplex, mass: Vec<f64>) -> Result<Self> {
        if mass.len() != complex.num_simplices() {
            return Err(Error::DimensionMismatch(format!(
                "{} masses for {} simplices",
                mass.len(),
                complex.num_simplices()
            )));
        }
        let mut density = Vec::with_capacity(mass.len());
        for (s, &m) in mass.iter().enumerate() {
            let vol = complex.simplex_volume(s);
            if !(m > 0.0 && m.is_finite()) || !(vol > 0.0) {
                return Err(Error::InvalidMass { simplex: s, value: m });
            }
            density.push(m / vol);
        }
        Ok(Self {
            complex,
            density,
            mass,
        })
    }

    pub fn complex(&self) -> &SimplicialComplex {
        &self.complex
    }

    pub fn density(&self) -> &[f64] {
        &self.density
    }

    pub fn mass(&self) -> &[f64] {
        &self.mass
    }

    pub fn total_mass(&self) -> f64 {
        self.mass.iter().sum()
    }

    pub fn into_parts(self) -> (SimplicialComplex, Vec<f64>) {
        (self.complex, self.density)
    }
}
