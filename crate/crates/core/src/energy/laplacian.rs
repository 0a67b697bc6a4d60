use std::sync::Arc;

use rayon::prelude::*;

use crate::complex::{MeasuredComplex, PiecewiseAffineMap, SimplexView, SimplicialComplex};
use crate::error::{Error, Result};

/// Edge structure of a complex, shared by every Laplacian assembled on it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LaplacianPattern {
    num_vertices: usize,
    top_dim: usize,
    /// Sorted `(i, j)` with `i < j`.
    edges: Vec<(usize, usize)>,
    /// For simplex `s` and local pair `p` (in `local_pairs` order), the edge
    /// slot, stored at `s * pairs + p`.
    slots: Vec<usize>,
    /// Per-vertex list of `(neighbor, edge slot)`, sorted by neighbor.
    adjacency: Vec<Vec<(usize, usize)>>,
}

/// Local vertex pairs `(a, b)`, `a < b`, of a k-simplex in lexicographic
/// order.
pub fn local_pairs(k: usize) -> Vec<(usize, usize)> {
    let mut out = Vec::with_capacity(k * (k + 1) / 2);
    for a in 0..=k {
        for b in a + 1..=k {
            out.push((a, b));
        }
    }
    out
}

impl LaplacianPattern {
    pub fn new(complex: &SimplicialComplex) -> Arc<Self> {
        let k = complex.top_dim();
        let pairs = local_pairs(k);
        let mut edges: Vec<(usize, usize)> = Vec::with_capacity(complex.num_simplices() * pairs.len());
        for s in complex.simplices() {
            for &(a, b) in &pairs {
                let (i, j) = (s[a].min(s[b]), s[a].max(s[b]));
                edges.push((i, j));
            }
        }
        edges.sort_unstable();
        edges.dedup();
        let slots = complex
            .simplices()
            .flat_map(|s| {
                let edges = &edges;
                pairs.iter().map(move |&(a, b)| {
                    let key = (s[a].min(s[b]), s[a].max(s[b]));
                    edges.binary_search(&key).unwrap()
                })
            })
            .collect();
        let mut adjacency = vec![Vec::new(); complex.num_vertices()];
        for (e, &(i, j)) in edges.iter().enumerate() {
            adjacency[i].push((j, e));
            adjacency[j].push((i, e));
        }
        for list in &mut adjacency {
            list.sort_unstable();
        }
        Arc::new(Self {
            num_vertices: complex.num_vertices(),
            top_dim: k,
            edges,
            slots,
            adjacency,
        })
    }

    pub fn num_vertices(&self) -> usize {
        self.num_vertices
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn neighbors(&self, i: usize) -> &[(usize, usize)] {
        &self.adjacency[i]
    }

    pub fn simplex_slots(&self, s: usize) -> &[usize] {
        let p = self.top_dim * (self.top_dim + 1) / 2;
        &self.slots[s * p..(s + 1) * p]
    }

    fn matches(&self, complex: &SimplicialComplex) -> bool {
        let p = self.top_dim * (self.top_dim + 1) / 2;
        self.num_vertices == complex.num_vertices()
            && self.top_dim == complex.top_dim()
            && self.slots.len() == complex.num_simplices() * p
    }
}

/// Per-simplex cotangent weights `w~_ij = |s_ij| cot(theta_ij) / (k (k-1))`
/// for every local pair, along with the simplex volume. `None` when the
/// simplex is degenerate.
pub fn cotangent_weights(view: &SimplexView<'_>) -> Option<(Vec<f64>, f64)> {
    let frame = view.frame()?;
    let w = local_pairs(view.k())
        .into_iter()
        .map(|(a, b)| frame.weight(a, b))
        .collect();
    Some((w, frame.volume()))
}

/// Dihedral cotangents `cot(theta_ij)` for every local pair.
pub fn dihedral_cotangents(view: &SimplexView<'_>) -> Option<Vec<f64>> {
    let frame = view.frame()?;
    Some(
        local_pairs(view.k())
            .into_iter()
            .map(|(a, b)| frame.cot(a, b))
            .collect(),
    )
}

/// Symmetric weighted graph Laplacian `(Lx)_i = sum_j w_ij (x_i - x_j)`.
#[derive(Debug, Clone)]
pub struct SparseLaplacian {
    pattern: Arc<LaplacianPattern>,
    weights: Vec<f64>,
}

impl SparseLaplacian {
    pub fn from_weights(pattern: Arc<LaplacianPattern>, weights: Vec<f64>) -> Self {
        assert_eq!(pattern.edges.len(), weights.len());
        Self { pattern, weights }
    }

    /// Cotangent Laplacian of the image `map(complex)`, each simplex's
    /// contribution multiplied by `scale(s, image volume)`.
    fn assemble(
        pattern: &Arc<LaplacianPattern>,
        complex: &SimplicialComplex,
        coords: &[f64],
        dim: usize,
        degenerate: fn(usize) -> Error,
        scale: impl Fn(usize, f64) -> f64 + Sync,
    ) -> Result<Self> {
        if !pattern.matches(complex) {
            return Err(Error::DimensionMismatch(
                "Laplacian pattern was built for another complex".into(),
            ));
        }
        let k = complex.top_dim();
        let p = k * (k + 1) / 2;
        let mut local = vec![0.0; complex.num_simplices() * p];
        let failed = local
            .par_chunks_mut(p)
            .enumerate()
            .map(|(s, out)| {
                let view = SimplexView::new(coords, dim, complex.simplex(s));
                match cotangent_weights(&view) {
                    Some((w, vol)) => {
                        let c = scale(s, vol);
                        out.iter_mut().zip(w).for_each(|(o, x)| *o = c * x);
                        None
                    }
                    None => Some(s),
                }
            })
            .min_by_key(|s| s.unwrap_or(usize::MAX))
            .flatten();
        if let Some(s) = failed {
            return Err(degenerate(s));
        }
        let mut weights = vec![0.0; pattern.edges.len()];
        for (s, w) in local.chunks_exact(p).enumerate() {
            for (&slot, x) in pattern.simplex_slots(s).iter().zip(w) {
                weights[slot] += x;
            }
        }
        Ok(Self {
            pattern: Arc::clone(pattern),
            weights,
        })
    }

    /// `L_D(f)`: the cotangent Laplacian measured on the image of `map`.
    pub fn dirichlet(
        pattern: &Arc<LaplacianPattern>,
        complex: &SimplicialComplex,
        map: &PiecewiseAffineMap,
    ) -> Result<Self> {
        map.check_rows(complex)?;
        Self::assemble(pattern, complex, map.coords(), map.dim(), Error::CollapsedImage, |_, _| 1.0)
    }

    /// `L_V(f)`: image cotangent weights divided by the stretch factor
    /// `mu(s) / |f(s)|`.
    pub fn stretch(
        pattern: &Arc<LaplacianPattern>,
        measured: &MeasuredComplex,
        map: &PiecewiseAffineMap,
    ) -> Result<Self> {
        let complex = measured.complex();
        map.check_rows(complex)?;
        let mass = measured.mass();
        Self::assemble(pattern, complex, map.coords(), map.dim(), Error::CollapsedImage, |s, vol| {
            vol / mass[s]
        })
    }

    pub fn pattern(&self) -> &Arc<LaplacianPattern> {
        &self.pattern
    }

    pub fn num_vertices(&self) -> usize {
        self.pattern.num_vertices
    }

    /// Off-diagonal weight of each edge; the matrix entry is `-w_ij`.
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn diagonal(&self) -> Vec<f64> {
        let mut d = vec![0.0; self.num_vertices()];
        for (&(i, j), &w) in self.pattern.edges.iter().zip(&self.weights) {
            d[i] += w;
            d[j] += w;
        }
        d
    }

    /// Product with a row-major `N x cols` matrix.
    pub fn apply(&self, x: &[f64], cols: usize) -> Vec<f64> {
        assert_eq!(x.len(), self.num_vertices() * cols);
        let mut y = vec![0.0; x.len()];
        for (&(i, j), &w) in self.pattern.edges.iter().zip(&self.weights) {
            for c in 0..cols {
                let d = w * (x[i * cols + c] - x[j * cols + c]);
                y[i * cols + c] += d;
                y[j * cols + c] -= d;
            }
        }
        y
    }

    pub fn apply_map(&self, map: &PiecewiseAffineMap) -> PiecewiseAffineMap {
        PiecewiseAffineMap::new(map.dim(), self.apply(map.coords(), map.dim())).unwrap()
    }

    /// `trace(x^T L x) = sum_{i<j} w_ij |x_i - x_j|^2`.
    pub fn trace_form(&self, x: &[f64], cols: usize) -> f64 {
        self.pattern
            .edges
            .iter()
            .zip(&self.weights)
            .map(|(&(i, j), &w)| {
                let d2: f64 = (0..cols)
                    .map(|c| (x[i * cols + c] - x[j * cols + c]).powi(2))
                    .sum();
                w * d2
            })
            .sum()
    }

    /// Fraction of edges with a negative off-diagonal weight.
    pub fn negative_weight_fraction(&self) -> f64 {
        if self.weights.is_empty() {
            return 0.0;
        }
        self.weights.iter().filter(|&&w| w < 0.0).count() as f64 / self.weights.len() as f64
    }

    /// Matrix entries as `(row, col, value)`, diagonal included, both
    /// triangles.
    pub fn triplets(&self) -> Vec<(usize, usize, f64)> {
        let mut t = Vec::with_capacity(2 * self.weights.len() + self.num_vertices());
        for (i, d) in self.diagonal().into_iter().enumerate() {
            t.push((i, i, d));
        }
        for (&(i, j), &w) in self.pattern.edges.iter().zip(&self.weights) {
            t.push((i, j, -w));
            t.push((j, i, -w));
        }
        t
    }

    /// Dense row-major copy, for tests and small systems.
    pub fn to_dense(&self) -> Vec<f64> {
        let n = self.num_vertices();
        let mut a = vec![0.0; n * n];
        for (i, j, v) in self.triplets() {
            a[i * n + j] += v;
        }
        a
    }
}

pub fn assemble_dirichlet_laplacian(complex: &SimplicialComplex) -> Result<SparseLaplacian> {
    let pattern = LaplacianPattern::new(complex);
    let id = PiecewiseAffineMap::identity(complex);
    SparseLaplacian::assemble(
        &pattern,
        complex,
        id.coords(),
        id.dim(),
        Error::DegenerateSimplex,
        |_, _| 1.0,
    )
}

pub fn assemble_vs_laplacian(
    measured: &MeasuredComplex,
    map: &PiecewiseAffineMap,
) -> Result<SparseLaplacian> {
    let pattern = LaplacianPattern::new(measured.complex());
    SparseLaplacian::stretch(&pattern, measured, map)
}
