use std::sync::Arc;

use rayon::prelude::*;

use super::{check_sphere_complex, cone_orientation, normalize_rows};
use crate::complex::{MeasuredComplex, PiecewiseAffineMap, SimplexView, SimplicialComplex};
use crate::energy::{image_volumes, vs_energy, LaplacianPattern, SparseLaplacian};
use crate::error::{Error, Result};
use crate::linsolve::solve_saddle;
use crate::report::{IterationRecord, StageReport};

/// Central-difference step for the Hessian.
pub const FD_STEP: f64 = 1e-5;

const ARMIJO: f64 = 1e-4;
const BACKTRACK: f64 = 0.5;
const MIN_STEP: f64 = 1e-8;
/// Merit below this fraction of the energy-gradient norm counts as solved.
const MERIT_FLOOR: f64 = 1e-13;

/// Map on the sphere together with the Lagrange multipliers of the volume
/// constraint (`lambda`) and the unit-norm constraints (`s`).
#[derive(Debug, Clone)]
pub struct KktState {
    pub g: PiecewiseAffineMap,
    pub lambda: f64,
    pub s: Vec<f64>,
    /// Target total image volume.
    pub c_prime: f64,
}

/// The three KKT blocks: `2 L_V(g) g + lambda L_D(g) g + diag(s) g`,
/// `sum |g(t)| - C'` and `(|g_i|^2 - 1) / 2`.
#[derive(Debug, Clone)]
pub struct KktResidual {
    pub stationarity: PiecewiseAffineMap,
    pub volume: f64,
    pub sphere: Vec<f64>,
}

impl KktResidual {
    /// Flattened as `[vec(stationarity); volume; sphere]`, where `vec` stacks
    /// columns: entry `c * N + i` is coordinate `c` of vertex `i`.
    pub fn to_vec(&self) -> Vec<f64> {
        let mut out = column_major(&self.stationarity);
        out.push(self.volume);
        out.extend_from_slice(&self.sphere);
        out
    }

    pub fn norm(&self) -> f64 {
        self.to_vec().iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    pub fn inf_norm(&self) -> f64 {
        self.to_vec().iter().fold(0.0, |m, x| m.max(x.abs()))
    }
}

fn column_major(map: &PiecewiseAffineMap) -> Vec<f64> {
    let (n, d) = (map.rows(), map.dim());
    let mut out = vec![0.0; n * d];
    for i in 0..n {
        for c in 0..d {
            out[c * n + i] = map.row(i)[c];
        }
    }
    out
}

/// Pieces of the stationarity residual shared by the residual, the
/// multiplier fit and the Newton system.
struct Gradients {
    /// `2 L_V(g) g`.
    energy: PiecewiseAffineMap,
    /// `L_D(g) g`.
    volume: PiecewiseAffineMap,
    total_volume: f64,
}

fn gradients(
    pattern: &Arc<LaplacianPattern>,
    measured: &MeasuredComplex,
    g: &PiecewiseAffineMap,
) -> Result<Gradients> {
    let complex = measured.complex();
    let mut energy = SparseLaplacian::stretch(pattern, measured, g)?.apply_map(g);
    energy.scale(2.0);
    let volume = SparseLaplacian::dirichlet(pattern, complex, g)?.apply_map(g);
    let total_volume = image_volumes(complex, g)?.iter().sum();
    Ok(Gradients {
        energy,
        volume,
        total_volume,
    })
}

fn residual_from(grads: &Gradients, state: &KktState) -> KktResidual {
    let g = &state.g;
    let stationarity = PiecewiseAffineMap::from_fn(g.rows(), g.dim(), |i, out| {
        let (a, b, x) = (grads.energy.row(i), grads.volume.row(i), g.row(i));
        for c in 0..out.len() {
            out[c] = a[c] + state.lambda * b[c] + state.s[i] * x[c];
        }
    });
    let sphere = (0..g.rows())
        .map(|i| 0.5 * (g.row(i).iter().map(|x| x * x).sum::<f64>() - 1.0))
        .collect();
    KktResidual {
        stationarity,
        volume: grads.total_volume - state.c_prime,
        sphere,
    }
}

fn check_state(measured: &MeasuredComplex, state: &KktState) -> Result<()> {
    let complex = measured.complex();
    state.g.check_rows(complex)?;
    if state.g.dim() != complex.ambient_dim() || state.s.len() != complex.num_vertices() {
        return Err(Error::DimensionMismatch(
            "KKT state does not match the boundary complex".into(),
        ));
    }
    Ok(())
}

pub fn kkt_residual(measured: &MeasuredComplex, state: &KktState) -> Result<KktResidual> {
    check_state(measured, state)?;
    let pattern = LaplacianPattern::new(measured.complex());
    Ok(residual_from(&gradients(&pattern, measured, &state.g)?, state))
}

/// Multipliers minimizing the stationarity residual in the least-squares
/// sense. For fixed `lambda` the best `s_i` cancels the radial part of row
/// `i`, which leaves a one-dimensional problem for `lambda` on the
/// tangential parts.
fn fit_multipliers(grads: &Gradients, g: &PiecewiseAffineMap) -> (f64, Vec<f64>) {
    let n = g.rows();
    let tangential = |row: &[f64], x: &[f64]| -> Vec<f64> {
        let r2: f64 = x.iter().map(|v| v * v).sum();
        let t: f64 = row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>() / r2;
        row.iter().zip(x).map(|(a, b)| a - t * b).collect()
    };
    let (mut num, mut den) = (0.0, 0.0);
    for i in 0..n {
        let pa = tangential(grads.energy.row(i), g.row(i));
        let pb = tangential(grads.volume.row(i), g.row(i));
        num += pa.iter().zip(&pb).map(|(a, b)| a * b).sum::<f64>();
        den += pb.iter().map(|b| b * b).sum::<f64>();
    }
    let lambda = if den > 0.0 { -num / den } else { 0.0 };
    let s = (0..n)
        .map(|i| {
            let x = g.row(i);
            let r2: f64 = x.iter().map(|v| v * v).sum();
            let radial: f64 = (0..x.len())
                .map(|c| (grads.energy.row(i)[c] + lambda * grads.volume.row(i)[c]) * x[c])
                .sum();
            -radial / r2
        })
        .collect();
    (lambda, s)
}

impl KktState {
    /// State at `g` with least-squares multipliers and `C' = |g(M)|` unless
    /// given.
    pub fn new(measured: &MeasuredComplex, g: PiecewiseAffineMap, c_prime: Option<f64>) -> Result<Self> {
        let pattern = LaplacianPattern::new(measured.complex());
        let grads = gradients(&pattern, measured, &g)?;
        let (lambda, s) = fit_multipliers(&grads, &g);
        let state = Self {
            c_prime: c_prime.unwrap_or(grads.total_volume),
            g,
            lambda,
            s,
        };
        check_state(measured, &state)?;
        Ok(state)
    }
}

/// Sparse symmetric Hessian in `vec` (column-stacked) ordering.
#[derive(Debug, Clone)]
pub struct FdHessian {
    /// Number of rows, `N * dim`.
    pub size: usize,
    /// Symmetrized entries; duplicates are to be summed.
    pub triplets: Vec<(usize, usize, f64)>,
    /// Largest `|H_ab - H_ba|` of the per-simplex blocks before
    /// symmetrization, relative to the largest block entry.
    pub asymmetry: f64,
}

impl FdHessian {
    pub fn to_dense(&self) -> Vec<f64> {
        let mut h = vec![0.0; self.size * self.size];
        for &(i, j, v) in &self.triplets {
            h[i * self.size + j] += v;
        }
        h
    }

    pub fn max_diagonal(&self) -> f64 {
        let mut diag = vec![0.0; self.size];
        for &(i, j, v) in &self.triplets {
            if i == j {
                diag[i] += v;
            }
        }
        diag.iter().fold(0.0, |m, x| m.max(x.abs()))
    }
}

/// Hessian of `sum_t phi_t` by central differences of the per-simplex
/// gradients `local_grad(t, x)`, where `x` holds the simplex's vertex images
/// row by row and the result has the same layout.
pub(crate) fn fd_hessian_with<F>(
    complex: &SimplicialComplex,
    g: &PiecewiseAffineMap,
    local_grad: F,
) -> Result<FdHessian>
where
    F: Fn(usize, &[f64]) -> Result<Vec<f64>> + Sync,
{
    let (n, d) = (complex.num_vertices(), g.dim());
    let m = (complex.top_dim() + 1) * d;
    let blocks: Vec<Result<(Vec<f64>, f64)>> = (0..complex.num_simplices())
        .into_par_iter()
        .map(|t| {
            let mut x: Vec<f64> = complex.simplex(t).iter().flat_map(|&v| g.row(v).to_vec()).collect();
            let mut block = vec![0.0; m * m];
            for b in 0..m {
                let x0 = x[b];
                x[b] = x0 + FD_STEP;
                let plus = local_grad(t, &x)?;
                x[b] = x0 - FD_STEP;
                let minus = local_grad(t, &x)?;
                x[b] = x0;
                for a in 0..m {
                    block[a * m + b] = (plus[a] - minus[a]) / (2.0 * FD_STEP);
                }
            }
            let mut asym = 0.0f64;
            let scale = block.iter().fold(0.0f64, |s, v| s.max(v.abs()));
            for a in 0..m {
                for b in a + 1..m {
                    let (u, v) = (block[a * m + b], block[b * m + a]);
                    asym = asym.max((u - v).abs());
                    let mean = 0.5 * (u + v);
                    block[a * m + b] = mean;
                    block[b * m + a] = mean;
                }
            }
            Ok((block, if scale > 0.0 { asym / scale } else { 0.0 }))
        })
        .collect();

    let mut triplets = Vec::with_capacity(complex.num_simplices() * m * m);
    let mut asymmetry = 0.0f64;
    for (t, block) in blocks.into_iter().enumerate() {
        let (block, asym) = block?;
        asymmetry = asymmetry.max(asym);
        let verts = complex.simplex(t);
        for a in 0..m {
            let row = (a % d) * n + verts[a / d];
            for b in 0..m {
                let col = (b % d) * n + verts[b / d];
                triplets.push((row, col, block[a * m + b]));
            }
        }
    }
    Ok(FdHessian {
        size: n * d,
        triplets,
        asymmetry,
    })
}

/// Hessian of the Lagrangian with respect to the map: finite differences of
/// `(2|t|/mu(t) + lambda) grad|t|` per simplex, plus `diag(s)` on every
/// coordinate.
pub fn fd_hessian(measured: &MeasuredComplex, state: &KktState) -> Result<FdHessian> {
    check_state(measured, state)?;
    let complex = measured.complex();
    let (d, k) = (state.g.dim(), complex.top_dim());
    let local: Vec<usize> = (0..=k).collect();
    let mass = measured.mass();
    let lambda = state.lambda;
    let mut h = fd_hessian_with(complex, &state.g, |t, x| {
        let frame = SimplexView::new(x, d, &local)
            .frame()
            .ok_or(Error::CollapsedImage(t))?;
        let vol = frame.volume();
        let c = (2.0 * vol / mass[t] + lambda) * vol;
        let mut out = vec![0.0; x.len()];
        for i in 0..=k {
            frame.grad_ambient_into(i, &mut out[i * d..(i + 1) * d]);
        }
        out.iter_mut().for_each(|v| *v *= c);
        Ok(out)
    })?;
    let n = complex.num_vertices();
    for c in 0..d {
        for i in 0..n {
            h.triplets.push((c * n + i, c * n + i, state.s[i]));
        }
    }
    Ok(h)
}

/// Newton correction for `(g, lambda, s)`.
#[derive(Debug, Clone)]
pub struct NewtonStep {
    pub dg: PiecewiseAffineMap,
    pub dlambda: f64,
    pub ds: Vec<f64>,
    /// Diagonal shift the saddle solver needed, zero if none.
    pub shift: f64,
    /// Relative residual of the solved linear system.
    pub residual: f64,
}

impl NewtonStep {
    pub fn inf_norm(&self) -> f64 {
        self.dg
            .coords()
            .iter()
            .chain(&self.ds)
            .chain(std::iter::once(&self.dlambda))
            .fold(0.0, |m, x| m.max(x.abs()))
    }
}

/// Bordered system `[[H, b, C], [b^T, 0, 0], [C^T, 0, 0]]` with
/// `b = vec(L_D(g) g)` and `C = cdiag(g)` (column `i` holds `g_i` in the
/// rows of vertex `i`).
pub(crate) struct KktSystem {
    pub hessian: FdHessian,
    pub constraints: Vec<Vec<(usize, f64)>>,
    pub rhs: Vec<f64>,
}

fn kkt_system(
    pattern: &Arc<LaplacianPattern>,
    measured: &MeasuredComplex,
    state: &KktState,
) -> Result<(KktSystem, KktResidual)> {
    let grads = gradients(pattern, measured, &state.g)?;
    let res = residual_from(&grads, state);
    let hessian = fd_hessian(measured, state)?;
    let (n, d) = (state.g.rows(), state.g.dim());
    let mut constraints = Vec::with_capacity(n + 1);
    constraints.push(
        (0..d)
            .flat_map(|c| (0..n).map(move |i| (c, i)))
            .map(|(c, i)| (c * n + i, grads.volume.row(i)[c]))
            .collect(),
    );
    for i in 0..n {
        constraints.push((0..d).map(|c| (c * n + i, state.g.row(i)[c])).collect());
    }
    let rhs = res.to_vec().into_iter().map(|x| -x).collect();
    Ok((
        KktSystem {
            hessian,
            constraints,
            rhs,
        },
        res,
    ))
}

#[cfg(test)]
pub(crate) fn kkt_matrix_parts(measured: &MeasuredComplex, state: &KktState) -> Result<KktSystem> {
    check_state(measured, state)?;
    let pattern = LaplacianPattern::new(measured.complex());
    Ok(kkt_system(&pattern, measured, state)?.0)
}

/// Smallest diagonal shift added to the Hessian, relative to its largest
/// diagonal entry.
pub const PROXIMAL_SHIFT: f64 = 1e-8;

/// Rotations of the sphere leave the Lagrangian invariant, and the
/// minimizers can form a family beyond that, so the bordered matrix is
/// singular at a solution. The Hessian is shifted by
/// `max(PROXIMAL_SHIFT * max|H_ii|, |F|)`: the residual vanishes to first
/// order along the null directions, so steps there stay of the order of the
/// residual and the convergence rate is kept.
fn proximal_shift(h: &FdHessian, merit: f64) -> f64 {
    (PROXIMAL_SHIFT * h.max_diagonal()).max(merit)
}

fn solve_step(sys: &KktSystem, merit: f64, n: usize, d: usize) -> Result<NewtonStep> {
    let size = sys.hessian.size;
    let prox = proximal_shift(&sys.hessian, merit);
    let mut triplets = sys.hessian.triplets.clone();
    triplets.extend((0..size).map(|i| (i, i, prox)));
    let sol = solve_saddle(size, &triplets, &sys.constraints, &sys.rhs)?;
    let x = &sol.solution;
    let dg = PiecewiseAffineMap::from_fn(n, d, |i, out| {
        for c in 0..d {
            out[c] = x[c * n + i];
        }
    });
    Ok(NewtonStep {
        dg,
        dlambda: x[n * d],
        ds: x[n * d + 1..].to_vec(),
        shift: prox + sol.shift,
        residual: sol.residual,
    })
}

pub fn newton_step(measured: &MeasuredComplex, state: &KktState) -> Result<NewtonStep> {
    check_state(measured, state)?;
    let pattern = LaplacianPattern::new(measured.complex());
    let (sys, res) = kkt_system(&pattern, measured, state)?;
    solve_step(&sys, res.norm(), state.g.rows(), state.g.dim())
}

#[derive(Debug, Clone)]
pub struct NewtonConfig {
    /// Stop once `|E_old - E_new|` falls to `tol` or below.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for NewtonConfig {
    fn default() -> Self {
        Self {
            tol: 1e-12,
            max_iter: 100,
        }
    }
}

/// Constrained Newton iteration for the spherical problem: minimize `E_V`
/// subject to `|g(M)| = C'` and `|g_i| = 1`.
///
/// Steps are damped by backtracking on the 2-norm of the KKT residual, and
/// the map is projected back onto the sphere after every step. Steps that
/// invert more image simplices than the current iterate are rejected as
/// well. A failed line search ends the run with a warning and keeps the best
/// iterate.
pub fn solve_sphere(
    measured: &MeasuredComplex,
    initial: &PiecewiseAffineMap,
    c_prime: Option<f64>,
    config: &NewtonConfig,
) -> Result<(KktState, StageReport)> {
    let complex = measured.complex();
    check_sphere_complex(complex)?;
    initial.check_rows(complex)?;
    let mut g = initial.clone();
    let initial_correction = normalize_rows(&mut g);
    let pattern = LaplacianPattern::new(complex);
    let mut state = KktState::new(measured, g, c_prime)?;
    let mut energy = vs_energy(measured, &state.g)?;
    let mut report = StageReport::new("newton", energy);
    report.set_value("initial_renormalization", initial_correction);
    report.set_value("initial_lambda", state.lambda);

    let (mut sys, mut res) = kkt_system(&pattern, measured, &state)?;
    let mut merit = res.norm();
    let floor = MERIT_FLOOR * grad_scale(&pattern, measured, &state.g)?;
    report.set_value("initial_kkt", merit);
    let mut delta = energy;
    let mut flips = cone_orientation(complex, &state.g).1;

    while delta.abs() > config.tol && merit > floor && report.iterations.len() < config.max_iter {
        let (n, d) = (state.g.rows(), state.g.dim());
        let step = solve_step(&sys, merit, n, d)?;
        let mut alpha = 1.0;
        let mut record = IterationRecord {
            iteration: report.iterations.len() + 1,
            regularization: Some(step.shift),
            ..Default::default()
        };
        let accepted = loop {
            let mut trial = state.clone();
            trial
                .g
                .coords_mut()
                .iter_mut()
                .zip(step.dg.coords())
                .for_each(|(x, dx)| *x += alpha * dx);
            let correction = normalize_rows(&mut trial.g);
            trial.lambda += alpha * step.dlambda;
            trial.s.iter_mut().zip(&step.ds).for_each(|(x, dx)| *x += alpha * dx);
            let tflips = cone_orientation(complex, &trial.g).1;
            if tflips <= flips {
                if let Ok((tsys, tres)) = kkt_system(&pattern, measured, &trial) {
                    let tmerit = tres.norm();
                    if tmerit <= (1.0 - ARMIJO * alpha) * merit {
                        break Some((trial, tsys, tres, tmerit, correction, tflips));
                    }
                }
            }
            alpha *= BACKTRACK;
            if alpha < MIN_STEP {
                break None;
            }
        };
        match accepted {
            Some((trial, tsys, tres, tmerit, correction, tflips)) => {
                let new_energy = vs_energy(measured, &trial.g)?;
                delta = energy - new_energy;
                record.energy = new_energy;
                record.delta_energy = delta;
                record.accepted = true;
                record.merit = Some(tmerit);
                record.step = Some(alpha);
                record.renormalization = Some(correction);
                record.flips = Some(tflips);
                report.iterations.push(record);
                flips = tflips;
                state = trial;
                sys = tsys;
                res = tres;
                merit = tmerit;
                energy = new_energy;
            }
            None => {
                record.energy = energy;
                record.merit = Some(merit);
                record.step = Some(alpha);
                report.iterations.push(record);
                report.warnings.push(format!(
                    "line search failed (step below {MIN_STEP:e}); keeping the best iterate"
                ));
                break;
            }
        }
    }

    report.final_energy = energy;
    report.converged = report.warnings.is_empty() && (delta.abs() <= config.tol || merit <= floor);
    if report.warnings.is_empty() && !report.converged {
        report
            .warnings
            .push(format!("iteration cap {} reached", config.max_iter));
    }
    report.set_value("final_kkt", merit);
    report.set_value("final_kkt_inf", res.inf_norm());
    report.set_value("lambda", state.lambda);
    report.set_value("c_prime", state.c_prime);
    Ok((state, report))
}

fn grad_scale(
    pattern: &Arc<LaplacianPattern>,
    measured: &MeasuredComplex,
    g: &PiecewiseAffineMap,
) -> Result<f64> {
    let grads = gradients(pattern, measured, g)?;
    Ok(grads.energy.coords().iter().map(|x| x * x).sum::<f64>().sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::complex::gen_ball_mesh;
    use crate::energy::{assemble_dirichlet_laplacian, diagnostics};
    use nalgebra::{DMatrix, DVector};

    fn octahedron() -> MeasuredComplex {
        let v = vec![
            1., 0., 0., -1., 0., 0., 0., 1., 0., 0., -1., 0., 0., 0., 1., 0., 0., -1.,
        ];
        let f = vec![
            0, 2, 4, 2, 1, 4, 1, 3, 4, 3, 0, 4, 2, 0, 5, 1, 2, 5, 3, 1, 5, 0, 3, 5,
        ];
        MeasuredComplex::uniform(SimplicialComplex::new(3, 2, v, f).unwrap()).unwrap()
    }

    fn sphere(res: usize) -> MeasuredComplex {
        let b = gen_ball_mesh(3, res).unwrap().boundary_complex().unwrap().boundary;
        MeasuredComplex::uniform(b).unwrap()
    }

    /// A sphere map that is valid but far from optimal.
    fn skewed(m: &MeasuredComplex) -> PiecewiseAffineMap {
        let mut g = PiecewiseAffineMap::identity(m.complex());
        for i in 0..g.rows() {
            let r = g.row_mut(i);
            r[0] += 0.3 * r[1] * r[2];
            r[2] *= 1.2;
        }
        normalize_rows(&mut g);
        g
    }

    /// Breaks the symmetry of small meshes, where `L_D(g) g` can be radial
    /// and the constraint columns dependent.
    fn jiggled(m: &MeasuredComplex) -> PiecewiseAffineMap {
        let mut g = skewed(m);
        for i in 0..g.rows() {
            let r = g.row_mut(i);
            r[0] += 0.05 * ((3 * i + 1) as f64).sin();
            r[1] += 0.05 * ((5 * i + 2) as f64).cos();
        }
        normalize_rows(&mut g);
        g
    }

    fn lagrangian(m: &MeasuredComplex, st: &KktState, g: &PiecewiseAffineMap) -> f64 {
        let vols = image_volumes(m.complex(), g).unwrap();
        let e: f64 = vols.iter().zip(m.mass()).map(|(v, mu)| v * v / mu).sum();
        let sphere: f64 = (0..g.rows())
            .map(|i| st.s[i] * 0.5 * (g.row(i).iter().map(|x| x * x).sum::<f64>() - 1.0))
            .sum();
        e + st.lambda * (vols.iter().sum::<f64>() - st.c_prime) + sphere
    }

    #[test]
    fn residual_reduces_to_gradient_without_multipliers() {
        let m = sphere(3);
        let g = skewed(&m);
        let mut st = KktState::new(&m, g.clone(), None).unwrap();
        st.lambda = 0.0;
        st.s.iter_mut().for_each(|x| *x = 0.0);
        let r = kkt_residual(&m, &st).unwrap();
        let grad = crate::energy::vs_gradient(&m, &g).unwrap();
        assert!(r.stationarity.max_abs_diff(&grad) < 1e-13);
        assert!(r.sphere.iter().all(|x| x.abs() < 1e-15));
        assert!(r.volume.abs() < 1e-14);
    }

    #[test]
    fn hessian_matches_dense_fd_of_lagrangian() {
        let m = octahedron();
        let st = KktState::new(&m, jiggled(&m), Some(3.0)).unwrap();
        let h = fd_hessian(&m, &st).unwrap();
        assert!(h.asymmetry < 1e-4);
        let dense = h.to_dense();
        let (n, d) = (st.g.rows(), st.g.dim());
        let size = n * d;
        // Second differences of the Lagrangian itself, an independent route.
        let eps = 1e-4;
        let at = |pairs: &[(usize, f64)]| {
            let mut g = st.g.clone();
            for &(a, v) in pairs {
                g.row_mut(a % n)[a / n] += v;
            }
            lagrangian(&m, &st, &g)
        };
        let scale = dense.iter().fold(0.0f64, |s, x| s.max(x.abs()));
        for a in 0..size {
            for b in 0..size {
                let fd = (at(&[(a, eps), (b, eps)]) - at(&[(a, eps), (b, -eps)])
                    - at(&[(a, -eps), (b, eps)])
                    + at(&[(a, -eps), (b, -eps)]))
                    / (4.0 * eps * eps);
                assert!(
                    (fd - dense[a * size + b]).abs() < 1e-4 * scale,
                    "({a},{b}) fd {fd} vs {}",
                    dense[a * size + b]
                );
            }
        }
    }

    #[test]
    fn hessian_of_fixed_quadratic_is_exact() {
        let m = sphere(3);
        let complex = m.complex();
        let g = skewed(&m);
        let l = assemble_dirichlet_laplacian(complex).unwrap();
        let k = complex.top_dim();
        let d = g.dim();
        // phi_t(x) = 1/2 sum_{a<b} w^t_ab |x_a - x_b|^2 with the source cotangent
        // weights; the sum over simplices is 1/2 trace(g^T L_D g).
        let weights: Vec<Vec<f64>> = (0..complex.num_simplices())
            .map(|t| crate::energy::cotangent_weights(&complex.view(t)).unwrap().0)
            .collect();
        let pairs = crate::energy::local_pairs(k);
        let h = fd_hessian_with(complex, &g, |t, x| {
            let mut out = vec![0.0; x.len()];
            for (p, &(a, b)) in pairs.iter().enumerate() {
                for c in 0..d {
                    let diff = weights[t][p] * (x[a * d + c] - x[b * d + c]);
                    out[a * d + c] += diff;
                    out[b * d + c] -= diff;
                }
            }
            Ok(out)
        })
        .unwrap();
        let dense = h.to_dense();
        let lap = l.to_dense();
        let n = complex.num_vertices();
        for c in 0..d {
            for e in 0..d {
                for i in 0..n {
                    for j in 0..n {
                        let want = if c == e { lap[i * n + j] } else { 0.0 };
                        let got = dense[(c * n + i) * (n * d) + e * n + j];
                        assert!((want - got).abs() < 1e-7, "{want} vs {got}");
                    }
                }
            }
        }
    }

    #[test]
    fn hessian_respects_kronecker_pattern() {
        let m = sphere(3);
        let st = KktState::new(&m, skewed(&m), None).unwrap();
        let h = fd_hessian(&m, &st).unwrap();
        let n = m.complex().num_vertices();
        let adj = m.complex().vertex_neighbors();
        for &(r, c, _) in &h.triplets {
            let (i, j) = (r % n, c % n);
            assert!(i == j || adj[i].contains(&j));
        }
    }

    #[test]
    fn step_matches_dense_kkt_oracle() {
        let m = octahedron();
        let st = KktState::new(&m, jiggled(&m), Some(3.5)).unwrap();
        let step = newton_step(&m, &st).unwrap();
        let sys = kkt_matrix_parts(&m, &st).unwrap();
        let (n, d) = (st.g.rows(), st.g.dim());
        let total = n * d + 1 + n;
        assert_eq!(sys.rhs.len(), total);
        let mut k = DMatrix::<f64>::zeros(total, total);
        for &(i, j, v) in &sys.hessian.triplets {
            k[(i, j)] += v;
        }
        for i in 0..n * d {
            k[(i, i)] += step.shift;
        }
        for (c, col) in sys.constraints.iter().enumerate() {
            for &(i, v) in col {
                k[(i, n * d + c)] += v;
                k[(n * d + c, i)] += v;
            }
        }
        let x = k.lu().solve(&DVector::from_vec(sys.rhs.clone())).unwrap();
        let close = |a: f64, b: f64| (a - b).abs() < 1e-10 * b.abs().max(1.0);
        for i in 0..n {
            for c in 0..d {
                assert!(close(step.dg.row(i)[c], x[c * n + i]));
            }
        }
        assert!(close(step.dlambda, x[n * d]));
        for i in 0..n {
            assert!(close(step.ds[i], x[n * d + 1 + i]));
        }
    }

    #[test]
    fn newton_reduces_merit_and_energy_gap() {
        use crate::complex::gen_ellipsoid_mesh;
        use crate::protocol::{exact_boundary_measure, exact_ellipsoid_map, perturb};
        let axes = [0.8, 1.0, 1.2];
        let mesh = gen_ellipsoid_mesh(&axes, 5).unwrap();
        let ext = mesh.boundary_complex().unwrap();
        let exact = exact_ellipsoid_map(&ext.boundary, &axes).unwrap();
        let m = exact_boundary_measure(&ext.boundary, &exact).unwrap();
        let all: Vec<usize> = (0..exact.rows()).collect();
        let g1 = perturb(&exact, 1e-3, 11, Some(&all));
        let (st, rep) = solve_sphere(&m, &g1, Some(m.total_mass()), &NewtonConfig::default()).unwrap();
        let merits: Vec<f64> = std::iter::once(rep.value("initial_kkt").unwrap())
            .chain(rep.iterations.iter().filter(|r| r.accepted).map(|r| r.merit.unwrap()))
            .collect();
        assert!(merits.windows(2).all(|w| w[1] < w[0]), "{merits:?}");
        assert!(rep.converged, "{:?}", rep.warnings);
        let before = diagnostics(&m, &g1).unwrap().epsilon;
        let after = diagnostics(&m, &st.g).unwrap().epsilon;
        assert!(after < before, "{after} vs {before}");
        assert!(after.abs() < 1e-10, "{after}");
        assert!(rep.value("final_kkt_inf").unwrap() < 1e-8);
    }

    #[test]
    fn infinite_tolerance_is_a_no_op() {
        let m = sphere(3);
        let g = skewed(&m);
        let cfg = NewtonConfig {
            tol: f64::INFINITY,
            ..Default::default()
        };
        let (st, rep) = solve_sphere(&m, &g, None, &cfg).unwrap();
        assert!(rep.iterations.is_empty());
        assert!(st.g.max_abs_diff(&g) < 1e-15);
    }
}
