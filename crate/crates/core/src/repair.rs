//! Local untangling of folded maps by Tutte re-embedding: the vertices
//! within a few rings of the inverted simplices are placed by a
//! uniform-weight Laplacian solve with everything else held, and the ring
//! count grows until the fold is gone.

use crate::complex::{PiecewiseAffineMap, SimplicialComplex};
use crate::energy::{LaplacianPattern, SparseLaplacian};
use crate::error::Result;
use crate::linsolve::ReducedSolver;

/// Rings tried around the folded region before giving up.
pub const MAX_RINGS: usize = 6;

/// Vertices within `rings` edges of a seed.
pub(crate) fn ring_patch(adj: &[Vec<usize>], seeds: &[usize], rings: usize) -> Vec<bool> {
    let mut inside = vec![false; adj.len()];
    let mut front: Vec<usize> = seeds.to_vec();
    front.iter().for_each(|&v| inside[v] = true);
    for _ in 0..rings {
        let mut next = Vec::new();
        for &v in &front {
            for &w in &adj[v] {
                if !inside[w] {
                    inside[w] = true;
                    next.push(w);
                }
            }
        }
        front = next;
    }
    inside
}

/// Uniform-weight harmonic solve for the `free` rows of an `N x d` array.
pub(crate) fn tutte_solve(
    pattern: &std::sync::Arc<LaplacianPattern>,
    coords: &mut [f64],
    d: usize,
    free: &[usize],
) -> Result<()> {
    let l = SparseLaplacian::from_weights(pattern.clone(), vec![1.0; pattern.edges().len()]);
    let solver = ReducedSolver::new(pattern, free)?;
    let factor = solver.factor(&l)?;
    let rhs = vec![0.0; coords.len()];
    solver.solve(&l, &factor, &rhs, coords, d)
}

/// Orthonormal basis of the complement of the unit vector `c`.
fn complement_basis(c: &[f64]) -> Vec<Vec<f64>> {
    let d = c.len();
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(d - 1);
    let mut axes: Vec<usize> = (0..d).collect();
    // Start from the axes least aligned with c.
    axes.sort_by(|&a, &b| c[a].abs().total_cmp(&c[b].abs()));
    for &a in &axes {
        if basis.len() == d - 1 {
            break;
        }
        let mut v = vec![0.0; d];
        v[a] = 1.0;
        for u in std::iter::once(c).chain(basis.iter().map(|b| b.as_slice())) {
            let dot: f64 = v.iter().zip(u).map(|(x, y)| x * y).sum();
            v.iter_mut().zip(u).for_each(|(x, y)| *x -= dot * y);
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-6 {
            v.iter_mut().for_each(|x| *x /= norm);
            basis.push(v);
        }
    }
    basis
}

/// How a candidate patch is embedded: directly, or through a stereographic
/// chart of the unit sphere centered on the patch.
#[derive(Clone, Copy)]
pub(crate) enum Chart {
    Flat,
    Sphere,
}

/// Repeats patch re-embedding around the simplices reported by `flipped`
/// until none remain, `max_rounds` rounds pass, or no ring size up to
/// [`MAX_RINGS`] lowers the count. Vertices with `held[v]` never move.
/// Returns the number of accepted rounds.
pub(crate) fn untangle(
    complex: &SimplicialComplex,
    map: &mut PiecewiseAffineMap,
    held: &[bool],
    chart: Chart,
    max_rounds: usize,
    flipped: impl Fn(&PiecewiseAffineMap) -> Vec<usize>,
) -> Result<usize> {
    let adj = complex.vertex_neighbors();
    let pattern = LaplacianPattern::new(complex);
    let mut bad = flipped(map);
    let mut rounds = 0;
    while !bad.is_empty() && rounds < max_rounds {
        let mut seeds: Vec<usize> = bad.iter().flat_map(|&s| complex.simplex(s).iter().copied()).collect();
        seeds.sort_unstable();
        seeds.dedup();
        let mut improved = None;
        for rings in 1..=MAX_RINGS {
            let inside = ring_patch(&adj, &seeds, rings);
            let free: Vec<usize> = (0..map.rows()).filter(|&v| inside[v] && !held[v]).collect();
            if free.is_empty() || 2 * free.len() > map.rows() {
                break;
            }
            let Some(trial) = embed_patch(map, &pattern, &adj, &free, chart)? else {
                continue;
            };
            let now = flipped(&trial);
            if now.len() < bad.len() {
                improved = Some((trial, now));
                break;
            }
        }
        match improved {
            Some((trial, now)) => {
                *map = trial;
                bad = now;
                rounds += 1;
            }
            None => break,
        }
    }
    Ok(rounds)
}

fn embed_patch(
    map: &PiecewiseAffineMap,
    pattern: &std::sync::Arc<LaplacianPattern>,
    adj: &[Vec<usize>],
    free: &[usize],
    chart: Chart,
) -> Result<Option<PiecewiseAffineMap>> {
    let d = map.dim();
    let mut trial = map.clone();
    match chart {
        Chart::Flat => {
            tutte_solve(pattern, trial.coords_mut(), d, free)?;
        }
        Chart::Sphere => {
            let mut c = vec![0.0; d];
            for &v in free {
                c.iter_mut().zip(map.row(v)).for_each(|(a, x)| *a += x);
            }
            let norm = c.iter().map(|x| x * x).sum::<f64>().sqrt();
            if !(norm > 1e-12) {
                return Ok(None);
            }
            c.iter_mut().for_each(|x| *x /= norm);
            let basis = complement_basis(&c);
            let k = d - 1;
            // Chart rows are needed for the free vertices and their
            // neighbors; the others stay zero and are never read.
            let mut needed = vec![false; map.rows()];
            for &v in free {
                needed[v] = true;
                adj[v].iter().for_each(|&w| needed[w] = true);
            }
            let mut h = vec![0.0; map.rows() * k];
            for v in (0..map.rows()).filter(|&v| needed[v]) {
                let p = map.row(v);
                let denom = 1.0 + p.iter().zip(&c).map(|(x, y)| x * y).sum::<f64>();
                if !(denom > 1e-8) {
                    return Ok(None);
                }
                for (j, e) in basis.iter().enumerate() {
                    h[v * k + j] = p.iter().zip(e).map(|(x, y)| x * y).sum::<f64>() / denom;
                }
            }
            tutte_solve(pattern, &mut h, k, free)?;
            for &v in free {
                let hv = &h[v * k..(v + 1) * k];
                let r2: f64 = hv.iter().map(|x| x * x).sum();
                let row = trial.row_mut(v);
                for (a, x) in row.iter_mut().enumerate() {
                    let tangent: f64 = basis.iter().zip(hv).map(|(e, t)| e[a] * t).sum();
                    *x = ((1.0 - r2) * c[a] + 2.0 * tangent) / (1.0 + r2);
                }
            }
        }
    }
    Ok(Some(trial))
}
