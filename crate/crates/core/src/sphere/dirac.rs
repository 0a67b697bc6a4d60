use std::collections::VecDeque;

use super::stereo::stereo_unproject;
use super::{check_sphere_complex, orient_outward};
use crate::complex::{PiecewiseAffineMap, SimplicialComplex};
use crate::energy::{assemble_dirichlet_laplacian, local_pairs};
use crate::error::{Error, Result};
use crate::linsolve::solve_pinned;

/// The simplex maximizing inradius / circumradius, lowest index on ties.
pub fn most_regular_simplex(boundary: &SimplicialComplex) -> Result<usize> {
    let mut best: Option<(usize, f64)> = None;
    for s in 0..boundary.num_simplices() {
        let frame = boundary.view(s).frame().ok_or(Error::DegenerateSimplex(s))?;
        let q = frame.inradius() / frame.circumradius();
        if best.is_none_or(|(_, b)| q > b) {
            best = Some((s, q));
        }
    }
    best.map(|(s, _)| s)
        .ok_or_else(|| Error::Topology("empty boundary complex".into()))
}

/// Right-hand side of the discrete dipole equation at simplex `tau`: rows of
/// the vertices of `tau` hold
/// `(1/|tau|) sum_{j != i} w~_ij (r_i - r_j)` in the simplex's QR frame,
/// all other rows are zero. Returns an `N x k` row-major array.
pub fn dirac_rhs(boundary: &SimplicialComplex, tau: usize) -> Result<Vec<f64>> {
    let k = boundary.top_dim();
    let view = boundary.view(tau);
    let frame = view.frame().ok_or(Error::DegenerateSimplex(tau))?;
    let r: Vec<Vec<f64>> = (0..=k).map(|i| frame.local_vertex(i)).collect();
    let mut b = vec![0.0; boundary.num_vertices() * k];
    let vol = frame.volume();
    for (a, c) in local_pairs(k) {
        let w = frame.weight(a, c);
        for d in 0..k {
            let diff = (r[a][d] - r[c][d]) * w / vol;
            b[view.indices()[a] * k + d] += diff;
            b[view.indices()[c] * k + d] -= diff;
        }
    }
    Ok(b)
}

/// Vertex farthest (in edge hops) from every vertex of `tau`, lowest index
/// on ties.
pub fn farthest_vertex(complex: &SimplicialComplex, tau: usize) -> usize {
    let adj = complex.vertex_neighbors();
    let mut dist = vec![usize::MAX; complex.num_vertices()];
    let mut queue = VecDeque::new();
    for &v in complex.simplex(tau) {
        dist[v] = 0;
        queue.push_back(v);
    }
    while let Some(u) = queue.pop_front() {
        for &w in &adj[u] {
            if dist[w] == usize::MAX {
                dist[w] = dist[u] + 1;
                queue.push_back(w);
            }
        }
    }
    let mut best = 0;
    for v in 0..dist.len() {
        if dist[v] != usize::MAX && (dist[best] == usize::MAX || dist[v] > dist[best]) {
            best = v;
        }
    }
    best
}

/// Spherical map from the dipole solution at the most regular simplex,
/// pinned at the vertex farthest from it.
pub fn dirac_map(boundary: &SimplicialComplex) -> Result<PiecewiseAffineMap> {
    check_sphere_complex(boundary)?;
    let tau = most_regular_simplex(boundary)?;
    let pin = farthest_vertex(boundary, tau);
    dirac_map_pinned(boundary, tau, pin)
}

/// The dipole map at `tau` with an explicit pinned vertex.
pub fn dirac_map_pinned(
    boundary: &SimplicialComplex,
    tau: usize,
    pin: usize,
) -> Result<PiecewiseAffineMap> {
    check_sphere_complex(boundary)?;
    let k = boundary.top_dim();
    let nv = boundary.num_vertices();
    if pin >= nv || tau >= boundary.num_simplices() {
        return Err(Error::InvalidParameter("pin or dipole simplex out of range".into()));
    }
    let l = assemble_dirichlet_laplacian(boundary)?;
    let b = dirac_rhs(boundary, tau)?;
    let mut h = solve_pinned(&l, &b, k, &[pin], &vec![0.0; k])?;

    // Centralization.
    for d in 0..k {
        let mean = (0..nv).map(|i| h[i * k + d]).sum::<f64>() / nv as f64;
        for i in 0..nv {
            h[i * k + d] -= mean;
        }
    }
    // The dipole has unit strength, so h is only meaningful up to scale.
    // Rescale to unit geometric-mean norm, which puts the median vertex near
    // the equator and makes antipodal symmetry exact for symmetric meshes.
    let logs: Vec<f64> = (0..nv)
        .map(|i| h[i * k..(i + 1) * k].iter().map(|x| x * x).sum::<f64>().sqrt())
        .filter(|&r| r > f64::MIN_POSITIVE)
        .map(f64::ln)
        .collect();
    if logs.is_empty() {
        return Err(Error::Singular { cond: f64::INFINITY });
    }
    let scale = (-logs.iter().sum::<f64>() / logs.len() as f64).exp();
    h.iter_mut().for_each(|x| *x *= scale);

    let mut g = PiecewiseAffineMap::from_fn(nv, k + 1, |i, out| {
        out.copy_from_slice(&stereo_unproject(&h[i * k..(i + 1) * k]));
    });
    orient_outward(boundary, &mut g);
    Ok(g)
}
