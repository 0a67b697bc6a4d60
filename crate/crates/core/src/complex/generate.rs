use super::{PiecewiseAffineMap, SimplicialComplex};
use crate::error::{Error, Result};

fn permutations(n: usize) -> Vec<Vec<usize>> {
    fn extend(prefix: &mut Vec<usize>, used: &mut [bool], out: &mut Vec<Vec<usize>>) {
        if prefix.len() == used.len() {
            out.push(prefix.clone());
            return;
        }
        for d in 0..used.len() {
            if !used[d] {
                used[d] = true;
                prefix.push(d);
                extend(prefix, used, out);
                prefix.pop();
                used[d] = false;
            }
        }
    }
    let mut out = Vec::new();
    extend(&mut Vec::new(), &mut vec![false; n], &mut out);
    out
}

fn is_odd(p: &[usize]) -> bool {
    let mut inversions = 0;
    for a in 0..p.len() {
        for b in a + 1..p.len() {
            if p[a] > p[b] {
                inversions += 1;
            }
        }
    }
    inversions % 2 == 1
}

fn check_params(n: usize, resolution: usize) -> Result<()> {
    if !(2..=4).contains(&n) {
        return Err(Error::UnsupportedDimension(format!(
            "mesh generation supports n in 2..=4, got {n}"
        )));
    }
    if resolution < 2 {
        return Err(Error::InvalidParameter(format!(
            "resolution must be at least 2, got {resolution}"
        )));
    }
    Ok(())
}

/// Kuhn triangulation of `[-1, 1]^n` with `resolution` cells per axis, each
/// cell's diagonal pointing away from the center. Every simplex is
/// positively oriented.
fn kuhn_cube(n: usize, resolution: usize) -> (Vec<f64>, Vec<usize>) {
    let side = resolution + 1;
    let nv = side.pow(n as u32);
    let mut vertices = Vec::with_capacity(nv * n);
    for v in 0..nv {
        let mut rem = v;
        for _ in 0..n {
            let a = rem % side;
            rem /= side;
            vertices.push(-1.0 + 2.0 * a as f64 / resolution as f64);
        }
    }
    let strides: Vec<usize> = (0..n).map(|d| side.pow(d as u32)).collect();
    let perms = permutations(n);
    let mut simplices = Vec::with_capacity(resolution.pow(n as u32) * perms.len() * (n + 1));
    for cell in 0..resolution.pow(n as u32) {
        let mut rem = cell;
        let mut base = 0;
        // Cells in the lower half along an axis are walked downwards from
        // their upper corner; the choice depends only on the layer along
        // that axis, so shared faces are split the same way on both sides.
        let mut down = vec![false; n];
        for (d, &stride) in strides.iter().enumerate() {
            let layer = rem % resolution;
            down[d] = 2 * layer + 1 < resolution;
            base += (layer + usize::from(down[d])) * stride;
            rem /= resolution;
        }
        let reflections = down.iter().filter(|&&x| x).count();
        for p in &perms {
            let start = simplices.len();
            let mut v = base;
            simplices.push(v);
            for &d in p {
                if down[d] {
                    v -= strides[d];
                } else {
                    v += strides[d];
                }
                simplices.push(v);
            }
            if is_odd(p) != (reflections % 2 == 1) {
                simplices.swap(start, start + 1);
            }
        }
    }
    (vertices, simplices)
}

/// Kuhn-triangulated cube pushed radially onto the unit ball: each vertex
/// `x` moves to `x |x|_inf / |x|_2`, so the cube's boundary lands on the
/// unit sphere.
pub fn gen_ball_mesh(n: usize, resolution: usize) -> Result<SimplicialComplex> {
    check_params(n, resolution)?;
    let (mut vertices, simplices) = kuhn_cube(n, resolution);
    for p in vertices.chunks_exact_mut(n) {
        let inf = p.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        let two = p.iter().map(|x| x * x).sum::<f64>().sqrt();
        if two > 0.0 {
            let c = inf / two;
            p.iter_mut().for_each(|x| *x *= c);
        }
    }
    let mut complex = SimplicialComplex::new(n, n, vertices, simplices)?;
    complex.normalize_orientation();
    Ok(complex)
}

pub fn gen_ellipsoid_mesh(axes: &[f64], resolution: usize) -> Result<SimplicialComplex> {
    if let Some(a) = axes.iter().find(|a| !(**a > 0.0 && a.is_finite())) {
        return Err(Error::InvalidParameter(format!(
            "ellipsoid axes must be positive, got {a}"
        )));
    }
    let mut complex = gen_ball_mesh(axes.len(), resolution)?;
    let n = axes.len();
    for p in complex.vertices_mut().chunks_exact_mut(n) {
        p.iter_mut().zip(axes).for_each(|(x, a)| *x *= a);
    }
    Ok(complex)
}

/// Ball mesh with a smooth star-shaped radial perturbation: the vertex `v`
/// moves to `v s(v / |v|)` where `s` is a low-degree polynomial in the unit
/// direction with relative amplitude `amplitude`.
pub fn gen_blob_mesh(n: usize, resolution: usize, amplitude: f64) -> Result<SimplicialComplex> {
    if !(0.0..0.5).contains(&amplitude) {
        return Err(Error::InvalidParameter(format!(
            "blob amplitude must lie in [0, 0.5), got {amplitude}"
        )));
    }
    let mut complex = gen_ball_mesh(n, resolution)?;
    for p in complex.vertices_mut().chunks_exact_mut(n) {
        let r = p.iter().map(|x| x * x).sum::<f64>().sqrt();
        if r == 0.0 {
            continue;
        }
        let u: Vec<f64> = p.iter().map(|x| x / r).collect();
        let last = u[n - 1];
        let shape = 0.6 * u[0] * u[1] + 0.4 * last * last * last + 0.3 * (u[0] * u[0] - u[1] * u[1]);
        let s = 1.0 + amplitude * shape;
        p.iter_mut().for_each(|x| *x *= s);
    }
    complex.normalize_orientation();
    Ok(complex)
}

/// Polar twist `(r, theta) -> (r, theta + k r)` of a planar mesh.
pub fn disk_twist_map(complex: &SimplicialComplex, k: f64) -> Result<PiecewiseAffineMap> {
    if complex.ambient_dim() != 2 {
        return Err(Error::DimensionMismatch(format!(
            "the twist map is planar, mesh lives in R^{}",
            complex.ambient_dim()
        )));
    }
    Ok(PiecewiseAffineMap::from_fn(complex.num_vertices(), 2, |i, out| {
        let v = complex.vertex(i);
        let r = v[0].hypot(v[1]);
        let (s, c) = (k * r).sin_cos();
        out[0] = c * v[0] - s * v[1];
        out[1] = s * v[0] + c * v[1];
    }))
}
