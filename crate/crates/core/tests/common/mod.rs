//! Independent oracles shared by the integration tests. Volumes come from
//! nalgebra determinants of edge matrices, not from the library's frames.

#![allow(dead_code)]

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use vsem_core::complex::gen_ball_mesh;
use vsem_core::{MeasuredComplex, PiecewiseAffineMap, SimplicialComplex};

pub fn factorial(k: usize) -> f64 {
    (1..=k).map(|i| i as f64).product()
}

fn edge_matrix(points: &[&[f64]]) -> DMatrix<f64> {
    let n = points[0].len();
    let k = points.len() - 1;
    DMatrix::from_fn(n, k, |r, c| points[c + 1][r] - points[0][r])
}

/// `sqrt(det(E^T E)) / k!`.
pub fn volume(points: &[&[f64]]) -> f64 {
    let e = edge_matrix(points);
    let k = e.ncols();
    (e.transpose() * &e).determinant().max(0.0).sqrt() / factorial(k)
}

/// `det(E) / n!` for a full-dimensional simplex.
pub fn signed_volume(points: &[&[f64]]) -> f64 {
    let e = edge_matrix(points);
    assert_eq!(e.nrows(), e.ncols());
    e.determinant() / factorial(e.ncols())
}

pub fn image_points<'a>(complex: &'a SimplicialComplex, f: &'a PiecewiseAffineMap, s: usize) -> Vec<&'a [f64]> {
    complex.simplex(s).iter().map(|&v| f.row(v)).collect()
}

pub fn image_volumes(complex: &SimplicialComplex, f: &PiecewiseAffineMap) -> Vec<f64> {
    (0..complex.num_simplices())
        .map(|s| volume(&image_points(complex, f, s)))
        .collect()
}

pub fn energy(m: &MeasuredComplex, f: &PiecewiseAffineMap) -> f64 {
    image_volumes(m.complex(), f)
        .iter()
        .zip(m.mass())
        .map(|(v, mu)| v * v / mu)
        .sum()
}

/// `(E, C^2 / sum mu, eps, delta)` with `C` the total image volume.
pub fn gap(m: &MeasuredComplex, f: &PiecewiseAffineMap) -> (f64, f64, f64, Vec<f64>) {
    let vols = image_volumes(m.complex(), f);
    let c: f64 = vols.iter().sum();
    let total: f64 = m.mass().iter().sum();
    let e: f64 = vols.iter().zip(m.mass()).map(|(v, mu)| v * v / mu).sum();
    let bound = c * c / total;
    let delta = vols
        .iter()
        .zip(m.mass())
        .map(|(v, mu)| (v / c) / (mu / total) - 1.0)
        .collect();
    (e, bound, e - bound, delta)
}

/// Full-dimensional image simplices with non-positive signed volume.
pub fn count_inverted(complex: &SimplicialComplex, f: &PiecewiseAffineMap) -> usize {
    (0..complex.num_simplices())
        .filter(|&s| !(signed_volume(&image_points(complex, f, s)) > 0.0))
        .count()
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Ball mesh of dimension `n` with jittered vertices and a random density
/// in [0.5, 2].
pub fn random_measured(n: usize, res: usize, r: &mut ChaCha8Rng) -> MeasuredComplex {
    let base = gen_ball_mesh(n, res).unwrap();
    let h = 0.15 / res as f64;
    let coords: Vec<f64> = base.vertex_coords().iter().map(|x| x + r.random_range(-h..h)).collect();
    let c = base.with_vertices(n, coords).unwrap();
    let density = (0..c.num_simplices()).map(|_| r.random_range(0.5..2.0)).collect();
    MeasuredComplex::new(c, density).unwrap()
}

/// Random orientation-preserving map: a random linear map with positive
/// determinant plus small vertex noise, redrawn until no simplex inverts.
pub fn random_valid_map(complex: &SimplicialComplex, r: &mut ChaCha8Rng) -> PiecewiseAffineMap {
    let n = complex.ambient_dim();
    loop {
        let mut a = DMatrix::from_fn(n, n, |i, j| if i == j { 1.0 } else { 0.0 } + r.random_range(-0.4..0.4));
        if a.determinant() < 0.0 {
            a.row_mut(0).neg_mut();
        }
        let f = PiecewiseAffineMap::from_fn(complex.num_vertices(), n, |i, out| {
            let x = complex.vertex(i);
            for (row, o) in out.iter_mut().enumerate() {
                *o = (0..n).map(|c| a[(row, c)] * x[c]).sum::<f64>() + r.random_range(-0.02..0.02);
            }
        });
        if complex.top_dim() != n || count_inverted(complex, &f) == 0 {
            return f;
        }
    }
}

pub fn rel_diff(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(f64::MIN_POSITIVE)
}
