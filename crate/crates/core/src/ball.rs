//! The n-ball pipeline: boundary normalization, spherical boundary solve,
//! harmonic interior initialization, fixed-point interior iteration and an
//! orientation postprocess.

use std::time::Instant;

use nalgebra::{DMatrix, SymmetricEigen};

use crate::complex::{BoundaryExtraction, MeasuredComplex, PiecewiseAffineMap, SimplicialComplex};
use crate::energy::{diagnostics, image_volumes, vs_energy, LaplacianPattern, SparseLaplacian};
use crate::error::{Error, Result};
use crate::linsolve::ReducedSolver;
use crate::repair::{untangle, Chart};
use crate::sphere::timed;
use crate::report::{
    unit_ball_volume, unit_sphere_area, DiagnosticsSummary, IterationRecord, SolverReport, StageReport,
};
use crate::sphere::{parameterize_sphere_into, SphereInit, SpherePipelineConfig, DEFAULT_INTERIOR_RADIUS};

/// Singular values below this fraction of the largest mark the boundary as
/// flat.
const RANK_TOL: f64 = 1e-10;

#[derive(Debug, Clone)]
pub struct BallPipelineConfig {
    /// Newton stopping tolerance on the sphere energy change.
    pub tol_boundary: f64,
    /// Fixed-point stopping tolerance on the ball energy change.
    pub tol_interior: f64,
    /// Stereographic radius of the SEM solve set.
    pub radius: f64,
    pub sem_tol: f64,
    pub max_sem_iter: usize,
    pub max_newton_iter: usize,
    pub max_interior_iter: usize,
    /// Normalize the boundary by PCA before measuring it.
    pub pca: bool,
    pub fix_orientation: bool,
    pub max_fix_sweeps: usize,
    /// Boundary measure override, one mass per boundary simplex in the order
    /// of [`BoundaryExtraction`].
    pub boundary_measure: Option<Vec<f64>>,
    /// Total boundary image volume; defaults to that of the initial
    /// spherical map.
    pub c_prime: Option<f64>,
    /// Initial map of every vertex. Only the boundary rows are used; they
    /// seed the Newton solve in place of the Dirac and SEM stages.
    pub initial_map: Option<PiecewiseAffineMap>,
}

impl Default for BallPipelineConfig {
    fn default() -> Self {
        Self {
            tol_boundary: 1e-8,
            tol_interior: 1e-6,
            radius: DEFAULT_INTERIOR_RADIUS,
            sem_tol: 1e-6,
            max_sem_iter: 100,
            max_newton_iter: 100,
            max_interior_iter: 100,
            pca: true,
            fix_orientation: true,
            max_fix_sweeps: 20,
            boundary_measure: None,
            c_prime: None,
            initial_map: None,
        }
    }
}

impl BallPipelineConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("tol_boundary", self.tol_boundary),
            ("tol_interior", self.tol_interior),
            ("radius", self.radius),
            ("sem_tol", self.sem_tol),
        ] {
            if !(v > 0.0) {
                return Err(Error::InvalidParameter(format!("{name} must be positive, got {v}")));
            }
        }
        for (name, v) in [
            ("max_sem_iter", self.max_sem_iter),
            ("max_newton_iter", self.max_newton_iter),
            ("max_interior_iter", self.max_interior_iter),
        ] {
            if v == 0 {
                return Err(Error::InvalidParameter(format!("{name} must be at least 1")));
            }
        }
        Ok(())
    }
}

/// Affine normalization `U = (V - 1 c^T) X Lambda^{-1/2}` of a point set,
/// where `X Lambda X^T` is the eigendecomposition of the centered Gram
/// matrix. The columns of `U` are orthonormal.
#[derive(Debug, Clone)]
pub struct PcaTransform {
    pub dim: usize,
    pub center: Vec<f64>,
    /// `dim x dim`, column-major; column `j` is the `j`-th principal axis.
    pub axes: Vec<f64>,
    /// Eigenvalues of the centered Gram matrix, descending.
    pub eigenvalues: Vec<f64>,
    /// Normalized points, row-major.
    pub points: Vec<f64>,
}

pub fn pca_normalize_boundary(points: &[f64], dim: usize) -> Result<PcaTransform> {
    if dim == 0 || points.len() % dim != 0 {
        return Err(Error::DimensionMismatch("point array is not a whole number of rows".into()));
    }
    let m = points.len() / dim;
    if m <= dim {
        return Err(Error::RankDeficient { ratio: 0.0 });
    }
    let mut center = vec![0.0; dim];
    for p in points.chunks_exact(dim) {
        center.iter_mut().zip(p).for_each(|(c, x)| *c += x);
    }
    center.iter_mut().for_each(|c| *c /= m as f64);
    let centered = DMatrix::from_fn(m, dim, |i, j| points[i * dim + j] - center[j]);
    let gram = centered.transpose() * &centered;
    let eig = SymmetricEigen::new(gram);
    let mut order: Vec<usize> = (0..dim).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let eigenvalues: Vec<f64> = order.iter().map(|&j| eig.eigenvalues[j]).collect();
    let ratio = eigenvalues[dim - 1].max(0.0).sqrt() / eigenvalues[0].max(f64::MIN_POSITIVE).sqrt();
    if !(ratio > RANK_TOL) {
        return Err(Error::RankDeficient { ratio });
    }
    let mut axes = vec![0.0; dim * dim];
    for (col, &j) in order.iter().enumerate() {
        let v = eig.eigenvectors.column(j);
        // Fix the sign so the largest component is positive.
        let big = (0..dim).max_by(|&a, &b| v[a].abs().total_cmp(&v[b].abs())).unwrap();
        let sign = if v[big] < 0.0 { -1.0 } else { 1.0 };
        for r in 0..dim {
            axes[col * dim + r] = sign * v[r];
        }
    }
    let mut out = vec![0.0; m * dim];
    for i in 0..m {
        for col in 0..dim {
            let dot: f64 = (0..dim).map(|r| centered[(i, r)] * axes[col * dim + r]).sum();
            out[i * dim + col] = dot / eigenvalues[col].sqrt();
        }
    }
    Ok(PcaTransform {
        dim,
        center,
        axes,
        eigenvalues,
        points: out,
    })
}

/// Solves `[L_D]_II f_I = -[L_D]_IB f_B` with the source Dirichlet
/// Laplacian; boundary rows of `map` are kept.
pub fn harmonic_interior(
    complex: &SimplicialComplex,
    map: &PiecewiseAffineMap,
    interior: &[usize],
) -> Result<PiecewiseAffineMap> {
    map.check_rows(complex)?;
    let pattern = LaplacianPattern::new(complex);
    let id = PiecewiseAffineMap::identity(complex);
    let l = SparseLaplacian::dirichlet(&pattern, complex, &id).map_err(|e| match e {
        Error::CollapsedImage(s) => Error::DegenerateSimplex(s),
        other => other,
    })?;
    let solver = ReducedSolver::new(&pattern, interior)?;
    let factor = solver.factor(&l)?;
    let mut out = map.clone();
    let d = map.dim();
    let rhs = vec![0.0; map.rows() * d];
    solver.solve(&l, &factor, &rhs, out.coords_mut(), d)?;
    Ok(out)
}

#[derive(Debug, Clone)]
pub struct FixedPointConfig {
    /// Stop once the energy decrease falls to `tol` or below.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for FixedPointConfig {
    fn default() -> Self {
        Self {
            tol: 1e-12,
            max_iter: 100,
        }
    }
}

/// Largest entry of `[L_V(f) f]_I`.
pub fn interior_gradient(
    measured: &MeasuredComplex,
    map: &PiecewiseAffineMap,
    interior: &[usize],
) -> Result<f64> {
    let pattern = LaplacianPattern::new(measured.complex());
    let lf = SparseLaplacian::stretch(&pattern, measured, map)?.apply_map(map);
    Ok(interior
        .iter()
        .flat_map(|&i| lf.row(i).iter())
        .fold(0.0, |m, x| m.max(x.abs())))
}

/// Fixed-point iteration `[L_V(f)]_II f_I = -[L_V(f)]_IB f_B` with the
/// boundary rows held. An energy increase beyond rounding rejects the
/// iterate, keeps the previous one and raises a warning.
pub fn fixed_point_interior(
    measured: &MeasuredComplex,
    initial: &PiecewiseAffineMap,
    interior: &[usize],
    config: &FixedPointConfig,
) -> Result<(PiecewiseAffineMap, StageReport)> {
    let complex = measured.complex();
    initial.check_rows(complex)?;
    let pattern = LaplacianPattern::new(complex);
    let solver = ReducedSolver::new(&pattern, interior)?;
    let d = initial.dim();
    let mut f = initial.clone();
    let mut energy = vs_energy(measured, &f)?;
    let volume0: f64 = image_volumes(complex, &f)?.iter().sum();
    let mut report = StageReport::new("fixed-point", energy);
    let tol_grad = config.tol * energy;
    let mut delta = f64::INFINITY;
    let mut max_drift = 0.0f64;
    let rhs = vec![0.0; f.rows() * d];

    while delta > config.tol && report.iterations.len() < config.max_iter {
        let l = SparseLaplacian::stretch(&pattern, measured, &f)?;
        report.negative_weight_fraction = Some(l.negative_weight_fraction());
        let factor = solver.factor(&l)?;
        let mut trial = f.clone();
        solver.solve(&l, &factor, &rhs, trial.coords_mut(), d)?;
        let vols = image_volumes(complex, &trial)?;
        let new_energy = match vs_energy(measured, &trial) {
            Ok(e) if e.is_finite() => e,
            _ => f64::INFINITY,
        };
        delta = energy - new_energy;
        let mut record = IterationRecord {
            iteration: report.iterations.len() + 1,
            energy: new_energy,
            delta_energy: delta,
            flips: Some(count_flips(complex, &trial)),
            ..Default::default()
        };
        if delta < -1e-12 * energy || !new_energy.is_finite() {
            report.iterations.push(record);
            report.warnings.push(format!(
                "energy increased by {:.3e} at iteration {}; kept the previous iterate",
                -delta,
                report.iterations.len()
            ));
            break;
        }
        record.accepted = true;
        report.iterations.push(record);
        max_drift = max_drift.max((vols.iter().sum::<f64>() - volume0).abs() / volume0);
        f = trial;
        energy = new_energy;
    }
    report.final_energy = energy;
    report.converged = report.warnings.is_empty() && !(delta > config.tol);
    if report.warnings.is_empty() && !report.converged {
        report
            .warnings
            .push(format!("iteration cap {} reached", config.max_iter));
    }
    let lf = SparseLaplacian::stretch(&pattern, measured, &f)?.apply_map(&f);
    let grad = interior
        .iter()
        .flat_map(|&i| lf.row(i).iter())
        .fold(0.0f64, |m, x| m.max(x.abs()));
    report.set_value("interior_gradient", grad);
    report.set_value("gradient_tolerance", tol_grad);
    report.set_value("volume_drift", max_drift);
    Ok((f, report))
}

/// Image simplices that are not positively oriented. The source complex is
/// assumed to be positively oriented.
pub fn flipped_simplices(complex: &SimplicialComplex, map: &PiecewiseAffineMap) -> Vec<usize> {
    complex
        .simplices()
        .enumerate()
        .filter(|(_, s)| !(map.view(s).signed_volume() > 0.0))
        .map(|(i, _)| i)
        .collect()
}

pub fn count_flips(complex: &SimplicialComplex, map: &PiecewiseAffineMap) -> usize {
    flipped_simplices(complex, map).len()
}

#[derive(Debug, Clone, Default, serde::Serialize)]
pub struct OrientationFix {
    pub initial_flips: usize,
    pub final_flips: usize,
    /// Accepted patch re-embeddings.
    pub sweeps: usize,
    /// The whole map was mirrored and has been reflected back.
    pub unmirrored: bool,
    pub energy_before: f64,
    pub energy_after: f64,
}

/// Removes inverted image simplices: a globally mirrored map is reflected
/// first, then the interior around inverted simplices is re-embedded patch
/// by patch with the boundary held.
pub fn fix_orientation(
    measured: &MeasuredComplex,
    map: &PiecewiseAffineMap,
    interior: &[usize],
    max_sweeps: usize,
) -> Result<(PiecewiseAffineMap, OrientationFix)> {
    let complex = measured.complex();
    map.check_rows(complex)?;
    if complex.ambient_dim() != complex.top_dim() || map.dim() != complex.top_dim() {
        return Err(Error::DimensionMismatch(
            "orientation repair needs full-dimensional simplices".into(),
        ));
    }
    let mut f = map.clone();
    let mut flipped = flipped_simplices(complex, &f);
    let mut fix = OrientationFix {
        initial_flips: flipped.len(),
        energy_before: vs_energy(measured, &f)?,
        ..Default::default()
    };
    if 2 * flipped.len() > complex.num_simplices() {
        let d = f.dim();
        for i in 0..f.rows() {
            f.row_mut(i)[d - 1] *= -1.0;
        }
        fix.unmirrored = true;
        flipped = flipped_simplices(complex, &f);
    }
    let mut held = vec![true; f.rows()];
    for &v in interior {
        held[v] = false;
    }
    if !flipped.is_empty() {
        fix.sweeps = untangle(complex, &mut f, &held, Chart::Flat, max_sweeps, |g| flipped_simplices(complex, g))?;
        flipped = flipped_simplices(complex, &f);
    }
    fix.final_flips = flipped.len();
    fix.energy_after = vs_energy(measured, &f).unwrap_or(f64::INFINITY);
    Ok((f, fix))
}

/// Result of the full pipeline.
#[derive(Debug, Clone)]
pub struct BallParameterization {
    pub map: PiecewiseAffineMap,
    pub report: SolverReport,
    pub extraction: BoundaryExtraction,
    /// The boundary with the measure used for the spherical stage.
    pub boundary_measure: MeasuredComplex,
    pub pca: Option<PcaTransform>,
}


fn check_ball(complex: &SimplicialComplex) -> Result<BoundaryExtraction> {
    let n = complex.top_dim();
    if complex.ambient_dim() != n {
        return Err(Error::DimensionMismatch(format!(
            "ball maps need a full-dimensional complex, got {n}-simplices in R^{}",
            complex.ambient_dim()
        )));
    }
    if n < 3 {
        return Err(Error::UnsupportedDimension(format!(
            "the ball pipeline needs n >= 3, got {n}"
        )));
    }
    if complex.connected_components() != 1 {
        return Err(Error::Topology("the complex is not connected".into()));
    }
    let ext = BoundaryExtraction::new(complex)?;
    ext.boundary.check_sphere_topology()?;
    if ext.interior_vertices.is_empty() {
        return Err(Error::Topology("the complex has no interior vertex".into()));
    }
    Ok(ext)
}

/// Full n-ball pipeline. Errors are tagged with the stage that raised them.
pub fn parameterize_ball(measured: &MeasuredComplex, config: &BallPipelineConfig) -> Result<BallParameterization> {
    config.validate()?;
    let complex = measured.complex();
    let n = complex.ambient_dim();
    let ext = check_ball(complex).map_err(Error::at("topology"))?;
    let nb = ext.boundary_vertices.len();
    let mut report = SolverReport::default();

    // Boundary geometry and measure.
    let (geometry, pca) = if config.pca {
        let pts: Vec<f64> = ext.boundary.vertex_coords().to_vec();
        let t = pca_normalize_boundary(&pts, n).map_err(Error::at("pca"))?;
        let b = ext
            .boundary
            .with_vertices(n, t.points.clone())
            .map_err(Error::at("pca"))?;
        for (j, c) in t.center.iter().enumerate() {
            report.values.push((format!("pca_center_{j}"), *c));
        }
        for (j, e) in t.eigenvalues.iter().enumerate() {
            report.values.push((format!("pca_eigenvalue_{j}"), *e));
        }
        (b, Some(t))
    } else {
        (ext.boundary.clone(), None)
    };
    let boundary_measure = match &config.boundary_measure {
        Some(mass) => MeasuredComplex::from_masses(geometry.clone(), mass.clone()),
        None => {
            // Scaled to the sphere's area so that absolute tolerances mean
            // the same on every mesh; the minimizer does not change.
            let mass: Vec<f64> = (0..geometry.num_simplices()).map(|s| geometry.simplex_volume(s)).collect();
            let scale = unit_sphere_area(n) / mass.iter().sum::<f64>();
            MeasuredComplex::from_masses(geometry.clone(), mass.iter().map(|m| m * scale).collect())
        }
    }
    .map_err(Error::at("boundary-measure"))?;

    // Spherical boundary map.
    let init = match &config.initial_map {
        Some(f) => {
            f.check_rows(complex).map_err(Error::at("initial-map"))?;
            if f.dim() != n {
                return Err(Error::at("initial-map")(Error::DimensionMismatch(
                    "initial map has the wrong width".into(),
                )));
            }
            SphereInit::Map(PiecewiseAffineMap::from_fn(nb, n, |t, o| {
                o.copy_from_slice(f.row(ext.boundary_vertices[t]))
            }))
        }
        None => SphereInit::Sem,
    };
    let sphere_cfg = SpherePipelineConfig {
        tol: config.tol_boundary,
        radius: config.radius,
        sem_tol: config.sem_tol,
        max_sem_iter: config.max_sem_iter,
        max_newton_iter: config.max_newton_iter,
        max_repair_rounds: config.max_fix_sweeps,
        init,
        c_prime: config.c_prime,
    };
    let g = parameterize_sphere_into(&boundary_measure, &sphere_cfg, &mut report)?;

    // Interior initialization.
    let start = Instant::now();
    let mut f = PiecewiseAffineMap::zeros(complex.num_vertices(), n);
    for (t, &v) in ext.boundary_vertices.iter().enumerate() {
        f.row_mut(v).copy_from_slice(g.row(t));
    }
    let f = harmonic_interior(complex, &f, &ext.interior_vertices).map_err(Error::at("harmonic"))?;
    let e = vs_energy(measured, &f).map_err(Error::at("harmonic"))?;
    let mut st = StageReport::new("harmonic", e);
    st.converged = true;
    st.set_value("flips", count_flips(complex, &f) as f64);
    report.stages.push(timed(st, start));

    // Fixed-point interior iteration.
    let start = Instant::now();
    let fp_cfg = FixedPointConfig {
        tol: config.tol_interior,
        max_iter: config.max_interior_iter,
    };
    let (mut f, st) =
        fixed_point_interior(measured, &f, &ext.interior_vertices, &fp_cfg).map_err(Error::at("fixed-point"))?;
    report.stages.push(timed(st, start));

    if config.fix_orientation {
        let start = Instant::now();
        let (fixed, fix) = fix_orientation(measured, &f, &ext.interior_vertices, config.max_fix_sweeps)
            .map_err(Error::at("orientation"))?;
        let mut st = StageReport::new("orientation", fix.energy_before);
        st.final_energy = fix.energy_after;
        st.converged = fix.final_flips == 0;
        st.set_value("initial_flips", fix.initial_flips as f64);
        st.set_value("final_flips", fix.final_flips as f64);
        st.set_value("sweeps", fix.sweeps as f64);
        st.set_value("unmirrored", if fix.unmirrored { 1.0 } else { 0.0 });
        if fix.final_flips > 0 {
            st.warnings.push(format!(
                "{} inverted simplices remain after {} sweeps",
                fix.final_flips, fix.sweeps
            ));
        }
        report.stages.push(timed(st, start));
        f = fixed;
    }

    report.flipped_simplices = count_flips(complex, &f);
    if report.flipped_simplices > 0 && !config.fix_orientation {
        report
            .warnings
            .push(format!("{} inverted simplices in the final map", report.flipped_simplices));
    }
    let ball_diag = diagnostics(measured, &f).map_err(Error::at("diagnostics"))?;
    report.ball = Some(DiagnosticsSummary::new(&ball_diag, unit_ball_volume(n)));
    Ok(BallParameterization {
        map: f,
        report,
        extraction: ext,
        boundary_measure,
        pca,
    })
}
