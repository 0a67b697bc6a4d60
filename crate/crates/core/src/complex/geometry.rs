use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Relative size below which a Gram-Schmidt pivot counts as zero.
pub(crate) const DEGENERACY_TOL: f64 = 1e-14;

/// Borrowed view of one simplex: its vertex indices into a flat, row-major
/// coordinate array of width `dim`.
#[derive(Debug, Clone, Copy)]
pub struct SimplexView<'a> {
    coords: &'a [f64],
    dim: usize,
    indices: &'a [usize],
}

impl<'a> SimplexView<'a> {
    pub fn new(coords: &'a [f64], dim: usize, indices: &'a [usize]) -> Self {
        Self {
            coords,
            dim,
            indices,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Simplex dimension `k` (number of vertices minus one).
    pub fn k(&self) -> usize {
        self.indices.len() - 1
    }

    pub fn point(&self, a: usize) -> &'a [f64] {
        let i = self.indices[a];
        &self.coords[i * self.dim..(i + 1) * self.dim]
    }

    pub fn indices(&self) -> &'a [usize] {
        self.indices
    }

    /// Edge matrix `E = [p_1 - p_0, ..., p_k - p_0]`, column-major.
    fn edges(&self) -> Vec<f64> {
        let (n, k) = (self.dim, self.k());
        let p0 = self.point(0);
        let mut e = vec![0.0; n * k];
        for j in 0..k {
            let pj = self.point(j + 1);
            for r in 0..n {
                e[j * n + r] = pj[r] - p0[r];
            }
        }
        e
    }

    pub fn frame(&self) -> Option<LocalFrame> {
        LocalFrame::from_edges(self.dim, self.k(), self.edges())
    }

    /// Unsigned k-volume; 0 for a degenerate simplex.
    pub fn volume(&self) -> f64 {
        if self.k() == 0 {
            return 1.0;
        }
        self.frame().map_or(0.0, |f| f.volume())
    }

    /// `det(E) / n!`. Panics unless `k == dim`.
    pub fn signed_volume(&self) -> f64 {
        let n = self.dim;
        assert_eq!(self.k(), n, "signed volume needs a full-dimensional simplex");
        let e = DMatrix::from_column_slice(n, n, &self.edges());
        e.determinant() / factorial(n)
    }
}

pub(crate) fn factorial(k: usize) -> f64 {
    (1..=k).map(|x| x as f64).product()
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// QR factorization `E = QR` of a simplex's edge matrix together with the
/// barycentric gradients expressed in the orthonormal frame `Q`.
#[derive(Debug, Clone)]
pub struct LocalFrame {
    n: usize,
    k: usize,
    /// `n x k`, column-major.
    q: Vec<f64>,
    /// `k x k` upper triangular, row-major.
    r: Vec<f64>,
    /// `(k + 1) x k`, row `i` is the gradient of barycentric coordinate `i`.
    grads: Vec<f64>,
    volume: f64,
}

impl LocalFrame {
    fn from_edges(n: usize, k: usize, e: Vec<f64>) -> Option<Self> {
        if k == 0 {
            return None;
        }
        let scale = (0..k)
            .map(|j| norm(&e[j * n..(j + 1) * n]))
            .fold(0.0, f64::max);
        if !(scale > 0.0) || !scale.is_finite() {
            return None;
        }
        let mut q = e;
        let mut r = vec![0.0; k * k];
        // Modified Gram-Schmidt with one reorthogonalization pass.
        for j in 0..k {
            for _ in 0..2 {
                for a in 0..j {
                    let (head, tail) = q.split_at_mut(j * n);
                    let qa = &head[a * n..(a + 1) * n];
                    let v = &mut tail[..n];
                    let c = dot(qa, v);
                    r[a * k + j] += c;
                    v.iter_mut().zip(qa).for_each(|(x, y)| *x -= c * y);
                }
            }
            let v = &mut q[j * n..(j + 1) * n];
            let len = norm(v);
            if !(len > DEGENERACY_TOL * scale) {
                return None;
            }
            r[j * k + j] = len;
            v.iter_mut().for_each(|x| *x /= len);
        }

        let volume = (0..k).map(|j| r[j * k + j]).product::<f64>() / factorial(k);

        // Row i (i >= 1) solves R^T g = e_{i-1}; row 0 is minus their sum.
        let mut grads = vec![0.0; (k + 1) * k];
        for i in 1..=k {
            let g = &mut grads[i * k..(i + 1) * k];
            for a in 0..k {
                let mut s = if a == i - 1 { 1.0 } else { 0.0 };
                for b in 0..a {
                    s -= r[b * k + a] * g[b];
                }
                g[a] = s / r[a * k + a];
            }
        }
        for a in 0..k {
            grads[a] = -(1..=k).map(|i| grads[i * k + a]).sum::<f64>();
        }
        Some(Self {
            n,
            k,
            q,
            r,
            grads,
            volume,
        })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn volume(&self) -> f64 {
        self.volume
    }

    /// Unit ambient direction of frame axis `d` (column `d` of `Q`).
    pub fn axis(&self, d: usize) -> &[f64] {
        &self.q[d * self.n..(d + 1) * self.n]
    }

    /// Barycentric gradient of vertex `i` in frame coordinates.
    pub fn grad_local(&self, i: usize) -> &[f64] {
        &self.grads[i * self.k..(i + 1) * self.k]
    }

    /// Barycentric gradient of vertex `i` in ambient coordinates, `Q g_i`.
    pub fn grad_ambient(&self, i: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.n];
        self.grad_ambient_into(i, &mut out);
        out
    }

    pub fn grad_ambient_into(&self, i: usize, out: &mut [f64]) {
        let g = self.grad_local(i);
        out.iter_mut().for_each(|x| *x = 0.0);
        for (a, &ga) in g.iter().enumerate() {
            let col = &self.q[a * self.n..(a + 1) * self.n];
            out.iter_mut().zip(col).for_each(|(x, c)| *x += ga * c);
        }
    }

    /// Vertex `i` in frame coordinates; vertex 0 is the origin.
    pub fn local_vertex(&self, i: usize) -> Vec<f64> {
        let k = self.k;
        if i == 0 {
            return vec![0.0; k];
        }
        (0..k).map(|a| self.r[a * k + (i - 1)]).collect()
    }

    /// Cotangent of the dihedral angle at the face opposite edge `[v_i, v_j]`,
    /// from the inward facet normals `n_i = g_i / |g_i|`.
    pub fn cot(&self, i: usize, j: usize) -> f64 {
        let (gi, gj) = (self.grad_local(i), self.grad_local(j));
        let cos = -dot(gi, gj) / (norm(gi) * norm(gj));
        let sin = (1.0 - cos * cos).max(0.0).sqrt();
        cos / sin
    }

    /// Per-simplex cotangent weight `-|s| g_i . g_j`, which equals
    /// `|s_ij| cot(theta_ij) / (k (k - 1))` with `s_ij` the face opposite the
    /// edge.
    pub fn weight(&self, i: usize, j: usize) -> f64 {
        -self.volume * dot(self.grad_local(i), self.grad_local(j))
    }

    /// Volume of the facet opposite vertex `i`.
    pub fn facet_volume(&self, i: usize) -> f64 {
        self.k as f64 * self.volume * norm(self.grad_local(i))
    }

    pub fn inradius(&self) -> f64 {
        1.0 / (0..=self.k).map(|i| norm(self.grad_local(i))).sum::<f64>()
    }

    pub fn circumradius(&self) -> f64 {
        // Circumcenter c solves r_i . c = |r_i|^2 / 2, i.e. R^T c = b.
        let k = self.k;
        let mut c = vec![0.0; k];
        for a in 0..k {
            let ra = self.local_vertex(a + 1);
            let mut s = 0.5 * dot(&ra, &ra);
            for b in 0..a {
                s -= self.r[b * k + a] * c[b];
            }
            c[a] = s / self.r[a * k + a];
        }
        norm(&c)
    }
}

/// Unsigned volume of the simplex spanned by `points` in `R^dim`.
pub fn gram_volume(dim: usize, points: &[&[f64]]) -> f64 {
    let coords: Vec<f64> = points.iter().flat_map(|p| p.iter().copied()).collect();
    let idx: Vec<usize> = (0..points.len()).collect();
    SimplexView::new(&coords, dim, &idx).volume()
}

/// Signed volume of the full-dimensional simplex spanned by `points`.
pub fn signed_volume_of(dim: usize, points: &[&[f64]]) -> f64 {
    let coords: Vec<f64> = points.iter().flat_map(|p| p.iter().copied()).collect();
    let idx: Vec<usize> = (0..points.len()).collect();
    SimplexView::new(&coords, dim, &idx).signed_volume()
}

/// Barycentric coordinates of `point` (projected onto the affine hull) with
/// respect to simplex `s` of `complex`.
pub fn barycentric_coords(
    complex: &super::SimplicialComplex,
    s: usize,
    point: &[f64],
) -> Result<Vec<f64>> {
    if point.len() != complex.ambient_dim() {
        return Err(Error::DimensionMismatch(format!(
            "point has {} coordinates, ambient dimension is {}",
            point.len(),
            complex.ambient_dim()
        )));
    }
    let view = complex.view(s);
    let frame = view.frame().ok_or(Error::DegenerateSimplex(s))?;
    let p0 = view.point(0);
    let d: Vec<f64> = point.iter().zip(p0).map(|(x, y)| x - y).collect();
    let k = frame.k();
    let mut alpha = vec![0.0; k + 1];
    for (i, a) in alpha.iter_mut().enumerate().skip(1) {
        let g = frame.grad_ambient(i);
        *a = dot(&g, &d);
    }
    alpha[0] = 1.0 - alpha[1..].iter().sum::<f64>();
    Ok(alpha)
}
