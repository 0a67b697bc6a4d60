//! Sparse solves: Laplacian systems with pinned rows, and bordered saddle
//! point systems.
//!
//! Factorizations are computed sequentially so that repeated runs produce
//! bit-identical results.

use std::sync::Once;

use faer::linalg::solvers::Solve;
use faer::sparse::linalg::solvers::{Llt, Lu, SymbolicLlt, SymbolicLu};
use faer::sparse::{Argsort, Pair, SparseColMat, SymbolicSparseColMat, Triplet};
use faer::{Mat, Par, Side};

use crate::energy::{LaplacianPattern, SparseLaplacian};
use crate::error::{Error, Result};

/// Above this many unknowns the pinned solve switches to preconditioned CG.
pub const ITERATIVE_THRESHOLD: usize = 200_000;

/// Condition estimate beyond which a factorization is treated as singular.
const SINGULAR_COND: f64 = 1e13;

fn sequential() {
    static INIT: Once = Once::new();
    INIT.call_once(|| faer::set_global_parallelism(Par::Seq));
}

fn probe_vector(n: usize) -> Vec<f64> {
    (0..n).map(|i| ((i + 1) as f64).sin()).collect()
}

/// Infinity norm; non-finite entries make it infinite.
fn inf_norm(x: &[f64]) -> f64 {
    x.iter().fold(0.0f64, |m, v| {
        if v.is_finite() {
            m.max(v.abs())
        } else {
            f64::INFINITY
        }
    })
}

/// Reduced Laplacian `L_FF` over a fixed set of free vertices, with its
/// symbolic Cholesky factorization computed once and reused for every
/// matrix sharing the pattern.
#[derive(Debug, Clone)]
pub struct ReducedSolver {
    n_free: usize,
    /// Global vertex index -> free index (`usize::MAX` when pinned).
    local: Vec<usize>,
    free: Vec<usize>,
    symbolic: SymbolicSparseColMat<usize>,
    argsort: Argsort<usize>,
    llt: Option<SymbolicLlt<usize>>,
    /// Edge slots of the lower-triangle off-diagonal entries, in the order
    /// they were handed to the symbolic constructor.
    edge_slots: Vec<usize>,
}

impl ReducedSolver {
    /// `free` lists the solved vertices; every other vertex is pinned.
    pub fn new(pattern: &LaplacianPattern, free: &[usize]) -> Result<Self> {
        sequential();
        let n = pattern.num_vertices();
        let mut local = vec![usize::MAX; n];
        for (t, &v) in free.iter().enumerate() {
            if v >= n || local[v] != usize::MAX {
                return Err(Error::InvalidParameter(format!(
                    "free vertex {v} is out of range or repeated"
                )));
            }
            local[v] = t;
        }
        let mut indices: Vec<Pair<usize, usize>> = (0..free.len()).map(|t| Pair::new(t, t)).collect();
        let mut edge_slots = Vec::new();
        for (e, &(i, j)) in pattern.edges().iter().enumerate() {
            let (a, b) = (local[i], local[j]);
            if a != usize::MAX && b != usize::MAX {
                indices.push(Pair::new(a.max(b), a.min(b)));
                edge_slots.push(e);
            }
        }
        let (symbolic, argsort) =
            SymbolicSparseColMat::try_new_from_indices(free.len(), free.len(), &indices)
                .map_err(|e| Error::InvalidParameter(format!("sparse pattern: {e:?}")))?;
        let llt = if free.len() <= ITERATIVE_THRESHOLD && !free.is_empty() {
            Some(
                SymbolicLlt::try_new(symbolic.as_ref(), Side::Lower)
                    .map_err(|e| Error::InvalidParameter(format!("symbolic factorization: {e:?}")))?,
            )
        } else {
            None
        };
        Ok(Self {
            n_free: free.len(),
            local,
            free: free.to_vec(),
            symbolic,
            argsort,
            llt,
            edge_slots,
        })
    }

    pub fn free(&self) -> &[usize] {
        &self.free
    }

    fn lower_values(&self, l: &SparseLaplacian) -> Vec<f64> {
        let diag = l.diagonal();
        let w = l.weights();
        self.free
            .iter()
            .map(|&v| diag[v])
            .chain(self.edge_slots.iter().map(|&e| -w[e]))
            .collect()
    }

    /// Factors `L_FF` for this Laplacian.
    pub fn factor(&self, l: &SparseLaplacian) -> Result<ReducedFactor> {
        if l.num_vertices() != self.local.len() {
            return Err(Error::DimensionMismatch(
                "Laplacian size differs from the solver's pattern".into(),
            ));
        }
        let values = self.lower_values(l);
        let mat = SparseColMat::new_from_argsort(self.symbolic.clone(), &self.argsort, &values)
            .map_err(|e| Error::InvalidParameter(format!("sparse assembly: {e:?}")))?;
        let norm = reduced_inf_norm(self, l);
        let kind = match &self.llt {
            Some(sym) => {
                let llt = Llt::try_new_with_symbolic(sym.clone(), mat.as_ref(), Side::Lower)
                    .map_err(|_| Error::Singular { cond: f64::INFINITY })?;
                FactorKind::Direct(llt)
            }
            None => FactorKind::Iterative,
        };
        let factor = ReducedFactor {
            kind,
            norm,
            n: self.n_free,
        };
        if matches!(factor.kind, FactorKind::Direct(_)) && self.n_free > 0 {
            let p = probe_vector(self.n_free);
            let x = factor.solve_reduced(self, l, &p, 1);
            let cond = inf_norm(&x) * norm / inf_norm(&p);
            if !(cond < SINGULAR_COND) {
                return Err(Error::Singular { cond });
            }
        }
        Ok(factor)
    }

    /// Solves `L_FF x_F = b_F - L_FP x_P` for every column. `rhs` and `x`
    /// are full `N x cols` row-major arrays; rows of `x` at pinned vertices
    /// hold the pinned values and are left untouched.
    pub fn solve(
        &self,
        l: &SparseLaplacian,
        factor: &ReducedFactor,
        rhs: &[f64],
        x: &mut [f64],
        cols: usize,
    ) -> Result<()> {
        let n = self.local.len();
        if rhs.len() != n * cols || x.len() != n * cols {
            return Err(Error::DimensionMismatch("right-hand side shape".into()));
        }
        let mut b = vec![0.0; self.n_free * cols];
        for (t, &v) in self.free.iter().enumerate() {
            b[t * cols..(t + 1) * cols].copy_from_slice(&rhs[v * cols..(v + 1) * cols]);
        }
        let w = l.weights();
        for (e, &(i, j)) in l.pattern().edges().iter().enumerate() {
            let (a, bb) = (self.local[i], self.local[j]);
            match (a != usize::MAX, bb != usize::MAX) {
                (true, false) => {
                    for c in 0..cols {
                        b[a * cols + c] += w[e] * x[j * cols + c];
                    }
                }
                (false, true) => {
                    for c in 0..cols {
                        b[bb * cols + c] += w[e] * x[i * cols + c];
                    }
                }
                _ => {}
            }
        }
        let sol = factor.solve_reduced(self, l, &b, cols);
        if sol.iter().any(|v| !v.is_finite()) {
            return Err(Error::Singular { cond: f64::INFINITY });
        }
        for (t, &v) in self.free.iter().enumerate() {
            x[v * cols..(v + 1) * cols].copy_from_slice(&sol[t * cols..(t + 1) * cols]);
        }
        Ok(())
    }

    /// Reduced product `L_FF y` for row-major `n_free x cols` data.
    fn apply_reduced(&self, l: &SparseLaplacian, y: &[f64], cols: usize) -> Vec<f64> {
        let diag = l.diagonal();
        let mut out = vec![0.0; y.len()];
        for (t, &v) in self.free.iter().enumerate() {
            for c in 0..cols {
                out[t * cols + c] = diag[v] * y[t * cols + c];
            }
        }
        let w = l.weights();
        for (e, &(i, j)) in l.pattern().edges().iter().enumerate() {
            let (a, b) = (self.local[i], self.local[j]);
            if a != usize::MAX && b != usize::MAX {
                for c in 0..cols {
                    out[a * cols + c] -= w[e] * y[b * cols + c];
                    out[b * cols + c] -= w[e] * y[a * cols + c];
                }
            }
        }
        out
    }
}

fn reduced_inf_norm(solver: &ReducedSolver, l: &SparseLaplacian) -> f64 {
    let diag = l.diagonal();
    let mut rows: Vec<f64> = solver.free.iter().map(|&v| diag[v].abs()).collect();
    let w = l.weights();
    for (e, &(i, j)) in l.pattern().edges().iter().enumerate() {
        let (a, b) = (solver.local[i], solver.local[j]);
        if a != usize::MAX && b != usize::MAX {
            rows[a] += w[e].abs();
            rows[b] += w[e].abs();
        }
    }
    inf_norm(&rows)
}

#[derive(Debug)]
enum FactorKind {
    Direct(Llt<usize, f64>),
    Iterative,
}

/// Numeric factorization of a reduced Laplacian.
#[derive(Debug)]
pub struct ReducedFactor {
    kind: FactorKind,
    norm: f64,
    n: usize,
}

impl ReducedFactor {
    pub fn is_iterative(&self) -> bool {
        matches!(self.kind, FactorKind::Iterative)
    }

    fn solve_reduced(&self, solver: &ReducedSolver, l: &SparseLaplacian, b: &[f64], cols: usize) -> Vec<f64> {
        match &self.kind {
            FactorKind::Direct(llt) => {
                let mut x = direct_solve(llt, b, self.n, cols);
                // One step of iterative refinement.
                let ax = solver.apply_reduced(l, &x, cols);
                let r: Vec<f64> = b.iter().zip(&ax).map(|(bi, ai)| bi - ai).collect();
                if inf_norm(&r) > 0.0 {
                    let dx = direct_solve(llt, &r, self.n, cols);
                    x.iter_mut().zip(dx).for_each(|(xi, d)| *xi += d);
                }
                x
            }
            FactorKind::Iterative => {
                let diag: Vec<f64> = {
                    let d = l.diagonal();
                    solver.free.iter().map(|&v| d[v]).collect()
                };
                let mut x = vec![0.0; b.len()];
                for c in 0..cols {
                    let bc: Vec<f64> = (0..self.n).map(|t| b[t * cols + c]).collect();
                    let xc = pcg(|y| solver.apply_reduced(l, y, 1), &diag, &bc, 1e-13, 20 * self.n + 100);
                    for t in 0..self.n {
                        x[t * cols + c] = xc[t];
                    }
                }
                x
            }
        }
    }

    /// Infinity norm of the reduced matrix.
    pub fn norm(&self) -> f64 {
        self.norm
    }
}

fn direct_solve<S: Solve<f64>>(solver: &S, b: &[f64], n: usize, cols: usize) -> Vec<f64> {
    let mut rhs = Mat::<f64>::from_fn(n, cols, |i, c| b[i * cols + c]);
    solver.solve_in_place(rhs.as_mut());
    let mut out = vec![0.0; n * cols];
    for i in 0..n {
        for c in 0..cols {
            out[i * cols + c] = rhs[(i, c)];
        }
    }
    out
}

/// Jacobi-preconditioned conjugate gradients.
fn pcg(apply: impl Fn(&[f64]) -> Vec<f64>, diag: &[f64], b: &[f64], rtol: f64, max_iter: usize) -> Vec<f64> {
    let n = b.len();
    let mut x = vec![0.0; n];
    let mut r = b.to_vec();
    let bnorm = r.iter().map(|v| v * v).sum::<f64>().sqrt();
    if bnorm == 0.0 {
        return x;
    }
    let mut z: Vec<f64> = r.iter().zip(diag).map(|(ri, d)| ri / d).collect();
    let mut p = z.clone();
    let mut rz: f64 = r.iter().zip(&z).map(|(a, b)| a * b).sum();
    for _ in 0..max_iter {
        let ap = apply(&p);
        let alpha = rz / p.iter().zip(&ap).map(|(a, b)| a * b).sum::<f64>();
        x.iter_mut().zip(&p).for_each(|(xi, pi)| *xi += alpha * pi);
        r.iter_mut().zip(&ap).for_each(|(ri, ai)| *ri -= alpha * ai);
        if r.iter().map(|v| v * v).sum::<f64>().sqrt() <= rtol * bnorm {
            break;
        }
        z = r.iter().zip(diag).map(|(ri, d)| ri / d).collect();
        let rz_new: f64 = r.iter().zip(&z).map(|(a, b)| a * b).sum();
        let beta = rz_new / rz;
        rz = rz_new;
        p.iter_mut().zip(&z).for_each(|(pi, zi)| *pi = zi + beta * *pi);
    }
    x
}

/// One-shot pinned solve: `x_P = pinned_values`, `[L x]_F = rhs_F`.
/// Returns the full `N x cols` solution.
pub fn solve_pinned(
    l: &SparseLaplacian,
    rhs: &[f64],
    cols: usize,
    pinned: &[usize],
    pinned_values: &[f64],
) -> Result<Vec<f64>> {
    let n = l.num_vertices();
    if pinned_values.len() != pinned.len() * cols {
        return Err(Error::DimensionMismatch("pinned values shape".into()));
    }
    let mut is_pinned = vec![false; n];
    for &p in pinned {
        if p >= n {
            return Err(Error::InvalidParameter(format!("pinned vertex {p} out of range")));
        }
        is_pinned[p] = true;
    }
    let free: Vec<usize> = (0..n).filter(|&v| !is_pinned[v]).collect();
    let solver = ReducedSolver::new(l.pattern(), &free)?;
    let factor = solver.factor(l)?;
    let mut x = vec![0.0; n * cols];
    for (t, &p) in pinned.iter().enumerate() {
        x[p * cols..(p + 1) * cols].copy_from_slice(&pinned_values[t * cols..(t + 1) * cols]);
    }
    solver.solve(l, &factor, rhs, &mut x, cols)?;
    Ok(x)
}

/// Solution of a bordered system `[[H, A], [A^T, 0]] [x; y] = rhs`.
#[derive(Debug, Clone)]
pub struct SaddleSolution {
    pub solution: Vec<f64>,
    /// Diagonal shift added to `H` to recover from near-singularity; zero
    /// when the plain system was solved.
    pub shift: f64,
    /// Relative residual `|K z - rhs|_inf / |rhs|_inf`.
    pub residual: f64,
}

/// Constraint columns with more entries than this fraction of `n` (and at
/// least [`DENSE_MIN`]) are eliminated by bordering instead of entering the
/// sparse factorization, where a dense row ruins the fill-reducing order.
const DENSE_FRACTION: f64 = 0.125;
const DENSE_MIN: usize = 16;

/// Factorization of the sparse part `K0` plus the bordering data of the
/// dense constraint columns `D`: `Y = K0^{-1} D` and `S = D^T Y`.
struct Bordered {
    lu: Lu<usize, f64>,
    sparse_size: usize,
    /// Positions of the sparse-part unknowns in the full system.
    sparse_pos: Vec<usize>,
    /// Positions of the dense multipliers in the full system.
    dense_pos: Vec<usize>,
    dense: Vec<Vec<(usize, f64)>>,
    y: Vec<Vec<f64>>,
    schur: Option<nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>>,
}

impl Bordered {
    fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        let b0: Vec<f64> = self.sparse_pos.iter().map(|&p| rhs[p]).collect();
        let z = direct_solve(&self.lu, &b0, self.sparse_size, 1);
        let mut out = vec![0.0; rhs.len()];
        let mut x0 = z.clone();
        if let Some(schur) = &self.schur {
            let r = nalgebra::DVector::from_fn(self.dense.len(), |c, _| {
                self.dense[c].iter().map(|&(i, v)| v * z[i]).sum::<f64>() - rhs[self.dense_pos[c]]
            });
            let mu = schur.solve(&r).unwrap_or_else(|| nalgebra::DVector::from_element(r.len(), f64::NAN));
            for (c, y) in self.y.iter().enumerate() {
                x0.iter_mut().zip(y).for_each(|(x, yi)| *x -= mu[c] * yi);
                out[self.dense_pos[c]] = mu[c];
            }
        }
        for (k, &p) in self.sparse_pos.iter().enumerate() {
            out[p] = x0[k];
        }
        out
    }
}

/// Solves the symmetric indefinite system with blocks `H` (given by
/// triplets, duplicates summed) and sparse constraint columns `A`.
///
/// The plain system is tried first; if it is numerically singular a small
/// diagonal shift is added to `H` and the solve repeated.
pub fn solve_saddle(
    n: usize,
    h: &[(usize, usize, f64)],
    constraints: &[Vec<(usize, f64)>],
    rhs: &[f64],
) -> Result<SaddleSolution> {
    sequential();
    let total = n + constraints.len();
    if rhs.len() != total {
        return Err(Error::DimensionMismatch(format!(
            "right-hand side has {} entries, system has {total}",
            rhs.len()
        )));
    }
    let is_dense: Vec<bool> = constraints
        .iter()
        .map(|c| c.len() >= DENSE_MIN && c.len() as f64 > DENSE_FRACTION * n as f64)
        .collect();
    let mut sparse_pos: Vec<usize> = (0..n).collect();
    let mut dense_pos = Vec::new();
    let mut dense = Vec::new();
    for (c, col) in constraints.iter().enumerate() {
        if is_dense[c] {
            dense_pos.push(n + c);
            dense.push(col.clone());
        } else {
            sparse_pos.push(n + c);
        }
    }
    let sparse_size = sparse_pos.len();

    // `entries` is the sparse part in its own numbering; `full` is the whole
    // matrix, used for residuals.
    let mut entries: Vec<Triplet<usize, usize, f64>> = Vec::with_capacity(h.len() + 2 * n);
    let mut full: Vec<Triplet<usize, usize, f64>> = Vec::with_capacity(h.len() + 2 * n);
    let mut hmax = 0.0f64;
    for &(i, j, v) in h {
        if i >= n || j >= n {
            return Err(Error::DimensionMismatch(format!("entry ({i}, {j}) outside H")));
        }
        if i == j {
            hmax = hmax.max(v.abs());
        }
        entries.push(Triplet::new(i, j, v));
        full.push(Triplet::new(i, j, v));
    }
    let mut slot = n;
    for (c, col) in constraints.iter().enumerate() {
        for &(i, v) in col {
            if i >= n {
                return Err(Error::DimensionMismatch(format!("constraint row {i} outside H")));
            }
            full.push(Triplet::new(i, n + c, v));
            full.push(Triplet::new(n + c, i, v));
            if !is_dense[c] {
                entries.push(Triplet::new(i, slot, v));
                entries.push(Triplet::new(slot, i, v));
            }
        }
        if !is_dense[c] {
            slot += 1;
        }
    }
    // Explicit diagonal slots keep the pattern fixed when a shift is added.
    let diag_start = entries.len();
    let full_diag_start = full.len();
    for i in 0..n {
        entries.push(Triplet::new(i, i, 0.0));
        full.push(Triplet::new(i, i, 0.0));
    }
    let dense: Vec<Vec<(usize, f64)>> = dense;

    let rhs_norm = inf_norm(rhs);
    if rhs_norm == 0.0 {
        return Ok(SaddleSolution {
            solution: vec![0.0; total],
            shift: 0.0,
            residual: 0.0,
        });
    }
    let assemble = |size: usize, t: &[Triplet<usize, usize, f64>]| {
        SparseColMat::<usize, f64>::try_new_from_triplets(size, size, t)
            .map_err(|e| Error::InvalidParameter(format!("sparse assembly: {e:?}")))
    };
    let plain_full = assemble(total, &full)?;

    let base_shift = 1e-10 * hmax.max(f64::MIN_POSITIVE);
    let mut last_cond = f64::INFINITY;
    for shift in [0.0, base_shift] {
        for e in &mut entries[diag_start..] {
            e.val = shift;
        }
        for e in &mut full[full_diag_start..] {
            e.val = shift;
        }
        let mat = assemble(sparse_size, &entries)?;
        let lu = match SymbolicLu::try_new(mat.symbolic())
            .ok()
            .and_then(|sym| Lu::try_new_with_symbolic(sym, mat.as_ref()).ok())
        {
            Some(lu) => lu,
            None => continue,
        };
        let norm = sparse_inf_norm(&mat);
        let p = probe_vector(sparse_size);
        let probe = direct_solve(&lu, &p, sparse_size, 1);
        let cond = inf_norm(&probe) * norm / inf_norm(&p);
        last_cond = cond;
        if !(cond < SINGULAR_COND) {
            continue;
        }
        let y: Vec<Vec<f64>> = dense
            .iter()
            .map(|col| {
                let mut b = vec![0.0; sparse_size];
                col.iter().for_each(|&(i, v)| b[i] = v);
                direct_solve(&lu, &b, sparse_size, 1)
            })
            .collect();
        let schur = if dense.is_empty() {
            None
        } else {
            let s = nalgebra::DMatrix::from_fn(dense.len(), dense.len(), |a, b| {
                dense[a].iter().map(|&(i, v)| v * y[b][i]).sum::<f64>()
            });
            let smax = s.abs().max();
            let lu = s.lu();
            let umin = (0..dense.len()).fold(f64::INFINITY, |m, k| m.min(lu.u()[(k, k)].abs()));
            if !(umin > smax / SINGULAR_COND) {
                last_cond = smax / umin;
                continue;
            }
            Some(lu)
        };
        let bordered = Bordered {
            lu,
            sparse_size,
            sparse_pos: sparse_pos.clone(),
            dense_pos: dense_pos.clone(),
            dense: dense.clone(),
            y,
            schur,
        };
        let shifted_full = if shift == 0.0 { plain_full.clone() } else { assemble(total, &full)? };
        let mut x = bordered.solve(rhs);
        let r = residual(&shifted_full, &x, rhs);
        if inf_norm(&r) > 0.0 {
            let dx = bordered.solve(&r);
            x.iter_mut().zip(dx).for_each(|(xi, d)| *xi += d);
        }
        // The reported residual is against the unshifted system.
        let rel = inf_norm(&residual(&plain_full, &x, rhs)) / rhs_norm;
        if !rel.is_finite() {
            continue;
        }
        return Ok(SaddleSolution {
            solution: x,
            shift,
            residual: rel,
        });
    }
    Err(Error::Singular { cond: last_cond })
}

fn sparse_inf_norm(mat: &SparseColMat<usize, f64>) -> f64 {
    let n = mat.nrows();
    let mut rows = vec![0.0; n];
    let (sym, vals) = (mat.symbolic(), mat.val());
    for c in 0..mat.ncols() {
        for (k, &r) in sym.row_idx_of_col_raw(c).iter().enumerate() {
            let start = sym.col_ptr()[c];
            rows[r] += vals[start + k].abs();
        }
    }
    inf_norm(&rows)
}

fn residual(mat: &SparseColMat<usize, f64>, x: &[f64], b: &[f64]) -> Vec<f64> {
    let mut r = b.to_vec();
    let (sym, vals) = (mat.symbolic(), mat.val());
    for c in 0..mat.ncols() {
        let start = sym.col_ptr()[c];
        for (k, &row) in sym.row_idx_of_col_raw(c).iter().enumerate() {
            r[row] -= vals[start + k] * x[c];
        }
    }
    r
}
