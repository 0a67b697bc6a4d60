use std::collections::{BTreeSet, VecDeque};

use super::SimplicialComplex;
use crate::error::{Error, Result};

/// Every (k-1)-facet of a complex with the top simplices containing it.
#[derive(Debug, Clone)]
pub struct FacetIncidence {
    /// Sorted vertex tuples, one per distinct facet, in lexicographic order.
    facets: Vec<Vec<usize>>,
    /// `(simplex, local index of the opposite vertex)` for each facet.
    owners: Vec<Vec<(usize, usize)>>,
}

impl FacetIncidence {
    pub fn new(complex: &SimplicialComplex) -> Self {
        let mut entries: Vec<(Vec<usize>, usize, usize)> = Vec::new();
        for (s, simplex) in complex.simplices().enumerate() {
            for i in 0..simplex.len() {
                let mut key: Vec<usize> = simplex
                    .iter()
                    .enumerate()
                    .filter(|&(a, _)| a != i)
                    .map(|(_, &v)| v)
                    .collect();
                key.sort_unstable();
                entries.push((key, s, i));
            }
        }
        entries.sort_unstable();
        let mut facets: Vec<Vec<usize>> = Vec::new();
        let mut owners: Vec<Vec<(usize, usize)>> = Vec::new();
        for (key, s, i) in entries {
            if facets.last() == Some(&key) {
                owners.last_mut().unwrap().push((s, i));
            } else {
                facets.push(key);
                owners.push(vec![(s, i)]);
            }
        }
        Self { facets, owners }
    }

    pub fn len(&self) -> usize {
        self.facets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.facets.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&[usize], &[(usize, usize)])> {
        self.facets
            .iter()
            .zip(&self.owners)
            .map(|(f, o)| (f.as_slice(), o.as_slice()))
    }

    /// Fails on the first facet shared by more than two simplices.
    pub fn check_manifold(&self) -> Result<()> {
        match self.iter().find(|(_, o)| o.len() > 2) {
            Some((f, o)) => Err(Error::NonManifoldFacet {
                facet: f.to_vec(),
                count: o.len(),
            }),
            None => Ok(()),
        }
    }
}

/// The boundary of a complex, reindexed onto its own vertices, together with
/// the boundary/interior split of the parent's vertex indices.
#[derive(Debug, Clone)]
pub struct BoundaryExtraction {
    /// Boundary complex; its vertex `t` is parent vertex `boundary_vertices[t]`.
    pub boundary: SimplicialComplex,
    /// Parent indices of boundary vertices, ascending.
    pub boundary_vertices: Vec<usize>,
    /// Parent indices of interior vertices, ascending.
    pub interior_vertices: Vec<usize>,
    /// Parent simplex owning each boundary facet.
    pub facet_parent: Vec<usize>,
}

impl BoundaryExtraction {
    /// Extracts the facets incident to exactly one top simplex. Facets are
    /// oriented so that, for a positively oriented full-dimensional parent,
    /// their induced orientation points outward.
    pub fn new(complex: &SimplicialComplex) -> Result<Self> {
        let k = complex.top_dim();
        if k < 2 {
            return Err(Error::UnsupportedDimension(format!(
                "boundary extraction needs simplex dimension at least 2, got {k}"
            )));
        }
        let incidence = FacetIncidence::new(complex);
        incidence.check_manifold()?;

        let mut faces: Vec<(usize, Vec<usize>)> = Vec::new();
        for (_, owners) in incidence.iter() {
            if let [(s, i)] = *owners {
                let simplex = complex.simplex(s);
                let mut face: Vec<usize> = simplex
                    .iter()
                    .enumerate()
                    .filter(|&(a, _)| a != i)
                    .map(|(_, &v)| v)
                    .collect();
                if i % 2 == 1 {
                    face.swap(0, 1);
                }
                faces.push((s, face));
            }
        }
        faces.sort_by_key(|(s, f)| (*s, f.clone()));

        let nv = complex.num_vertices();
        let mut on_boundary = vec![false; nv];
        for (_, f) in &faces {
            for &v in f {
                on_boundary[v] = true;
            }
        }
        let boundary_vertices: Vec<usize> = (0..nv).filter(|&v| on_boundary[v]).collect();
        let interior_vertices: Vec<usize> = (0..nv).filter(|&v| !on_boundary[v]).collect();
        let mut local = vec![usize::MAX; nv];
        for (t, &v) in boundary_vertices.iter().enumerate() {
            local[v] = t;
        }
        let n = complex.ambient_dim();
        let coords: Vec<f64> = boundary_vertices
            .iter()
            .flat_map(|&v| complex.vertex(v).iter().copied())
            .collect();
        let simplices: Vec<usize> = faces
            .iter()
            .flat_map(|(_, f)| f.iter().map(|&v| local[v]))
            .collect();
        let facet_parent = faces.iter().map(|(s, _)| *s).collect();
        let boundary = SimplicialComplex::new(n, k - 1, coords, simplices)?;
        Ok(Self {
            boundary,
            boundary_vertices,
            interior_vertices,
            facet_parent,
        })
    }
}

impl SimplicialComplex {
    pub fn boundary_complex(&self) -> Result<BoundaryExtraction> {
        BoundaryExtraction::new(self)
    }

    /// The (k-1)-simplices `t` with `[v, t]` a top simplex, each listed with
    /// sorted vertex indices.
    pub fn vertex_link(&self, v: usize) -> Vec<Vec<usize>> {
        let mut link: Vec<Vec<usize>> = self
            .simplices()
            .filter(|s| s.contains(&v))
            .map(|s| {
                let mut t: Vec<usize> = s.iter().copied().filter(|&u| u != v).collect();
                t.sort_unstable();
                t
            })
            .collect();
        link.sort();
        link
    }

    /// Number of connected components of the vertex adjacency graph, counting
    /// only vertices used by some simplex.
    pub fn connected_components(&self) -> usize {
        let adj = self.vertex_neighbors();
        let mut used = vec![false; self.num_vertices()];
        for s in self.simplices() {
            for &v in s {
                used[v] = true;
            }
        }
        let mut seen = vec![false; self.num_vertices()];
        let mut count = 0;
        for start in 0..self.num_vertices() {
            if !used[start] || seen[start] {
                continue;
            }
            count += 1;
            seen[start] = true;
            let mut queue = VecDeque::from([start]);
            while let Some(u) = queue.pop_front() {
                for &w in &adj[u] {
                    if !seen[w] {
                        seen[w] = true;
                        queue.push_back(w);
                    }
                }
            }
        }
        count
    }

    /// Checks that this closed (k)-complex is a plausible triangulated
    /// k-sphere: every facet shared by exactly two simplices, connected, and
    /// with the Euler characteristic `1 + (-1)^k`.
    pub fn check_sphere_topology(&self) -> Result<()> {
        let incidence = FacetIncidence::new(self);
        incidence.check_manifold()?;
        if let Some((f, _)) = incidence.iter().find(|(_, o)| o.len() != 2) {
            return Err(Error::Topology(format!("facet {f:?} is on a boundary")));
        }
        let comps = self.connected_components();
        if comps != 1 {
            return Err(Error::Topology(format!("{comps} connected components")));
        }
        let k = self.top_dim();
        let chi = euler_characteristic(self.simplices());
        let expect = if k % 2 == 0 { 2 } else { 0 };
        if chi != expect {
            return Err(Error::Topology(format!(
                "Euler characteristic {chi}, a {k}-sphere has {expect}"
            )));
        }
        Ok(())
    }
}

/// Alternating face count `V - E + F - ...` of the complex generated by the
/// given top simplices.
pub fn euler_characteristic<'a>(simplices: impl IntoIterator<Item = &'a [usize]>) -> i64 {
    let mut faces: BTreeSet<Vec<usize>> = BTreeSet::new();
    for s in simplices {
        let mut sorted = s.to_vec();
        sorted.sort_unstable();
        let w = sorted.len();
        for mask in 1u32..(1 << w) {
            let face: Vec<usize> = (0..w)
                .filter(|&a| mask & (1 << a) != 0)
                .map(|a| sorted[a])
                .collect();
            faces.insert(face);
        }
    }
    faces
        .iter()
        .map(|f| if f.len() % 2 == 1 { 1 } else { -1 })
        .sum()
}
