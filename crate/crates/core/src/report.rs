//! Machine-readable solver reports.
//!
//! A report is a list of stage reports (one per solver stage run) plus the
//! final diagnostics. Wall-clock timings are stored but only serialized when
//! present, so callers who need byte-identical reruns can drop them with
//! [`SolverReport::strip_timings`].

use serde::Serialize;

use crate::energy::StretchDiagnostics;

pub const REPORT_VERSION: u32 = 1;

/// Volume of the unit n-ball, `pi^(n/2) / Gamma(n/2 + 1)`.
pub fn unit_ball_volume(n: usize) -> f64 {
    // Gamma(n/2 + 1) by the half-integer recursion from Gamma(1) and
    // Gamma(3/2).
    let mut gamma = if n % 2 == 0 { 1.0 } else { 0.5 * std::f64::consts::PI.sqrt() };
    let mut x = if n % 2 == 0 { 1.0 } else { 1.5 };
    while x < n as f64 / 2.0 + 1.0 {
        gamma *= x;
        x += 1.0;
    }
    std::f64::consts::PI.powf(n as f64 / 2.0) / gamma
}

/// Area of the unit (n-1)-sphere bounding the unit n-ball.
pub fn unit_sphere_area(n: usize) -> f64 {
    n as f64 * unit_ball_volume(n)
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub energy: f64,
    pub delta_energy: f64,
    pub accepted: bool,
    /// KKT residual 2-norm after the step (Newton only).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub merit: Option<f64>,
    /// Line-search step length (Newton only).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub step: Option<f64>,
    /// Largest sphere renormalization correction (Newton only).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub renormalization: Option<f64>,
    /// Diagonal shift used by the saddle solve (Newton only).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub regularization: Option<f64>,
    /// Size of the solved vertex set (SEM only).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub interior: Option<usize>,
    /// Flipped simplices after the step.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub flips: Option<usize>,
}

#[derive(Debug, Clone, Serialize)]
pub struct StageReport {
    pub stage: String,
    pub initial_energy: f64,
    pub final_energy: f64,
    pub iterations: Vec<IterationRecord>,
    pub converged: bool,
    pub warnings: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seconds: Option<f64>,
    /// Fraction of negative cotangent weights in the last assembled
    /// Laplacian.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub negative_weight_fraction: Option<f64>,
    /// Stage-specific scalars, e.g. the final KKT residual.
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub values: Vec<(String, f64)>,
}

impl StageReport {
    pub fn new(stage: &str, initial_energy: f64) -> Self {
        Self {
            stage: stage.to_string(),
            initial_energy,
            final_energy: initial_energy,
            iterations: Vec::new(),
            converged: false,
            warnings: Vec::new(),
            seconds: None,
            negative_weight_fraction: None,
            values: Vec::new(),
        }
    }

    pub fn accepted_iterations(&self) -> usize {
        self.iterations.iter().filter(|r| r.accepted).count()
    }

    /// Energies of the initial state and every accepted iterate.
    pub fn energy_trace(&self) -> Vec<f64> {
        std::iter::once(self.initial_energy)
            .chain(self.iterations.iter().filter(|r| r.accepted).map(|r| r.energy))
            .collect()
    }

    pub fn value(&self, key: &str) -> Option<f64> {
        self.values.iter().find(|(k, _)| k == key).map(|(_, v)| *v)
    }

    pub fn set_value(&mut self, key: &str, v: f64) {
        match self.values.iter_mut().find(|(k, _)| k == key) {
            Some(slot) => slot.1 = v,
            None => self.values.push((key.to_string(), v)),
        }
    }
}

/// Summary of [`StretchDiagnostics`] as written to reports.
#[derive(Debug, Clone, Serialize)]
pub struct DiagnosticsSummary {
    pub energy: f64,
    pub lower_bound: f64,
    pub epsilon: f64,
    /// `epsilon` with the total mass rescaled to the unit ball or sphere
    /// measure.
    pub normalized_epsilon: f64,
    pub mean_delta: f64,
    pub sd_delta: f64,
    pub max_abs_delta: f64,
    pub total_mass: f64,
    pub total_image_volume: f64,
}

impl DiagnosticsSummary {
    pub fn new(d: &StretchDiagnostics, target_measure: f64) -> Self {
        Self {
            energy: d.energy,
            lower_bound: d.lower_bound,
            epsilon: d.epsilon,
            normalized_epsilon: d.normalized_epsilon(target_measure),
            mean_delta: d.mean_delta,
            sd_delta: d.sd_delta,
            max_abs_delta: d.max_abs_delta,
            total_mass: d.total_mass,
            total_image_volume: d.total_image_volume,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SolverReport {
    pub report_version: u32,
    pub stages: Vec<StageReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sphere: Option<DiagnosticsSummary>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ball: Option<DiagnosticsSummary>,
    /// Simplices whose image is inverted in the final map.
    pub flipped_simplices: usize,
    pub warnings: Vec<String>,
    /// Extra provenance, e.g. the boundary normalization transform.
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub values: Vec<(String, f64)>,
}

impl Default for SolverReport {
    fn default() -> Self {
        Self {
            report_version: REPORT_VERSION,
            stages: Vec::new(),
            sphere: None,
            ball: None,
            flipped_simplices: 0,
            warnings: Vec::new(),
            values: Vec::new(),
        }
    }
}

impl SolverReport {
    pub fn stage(&self, name: &str) -> Option<&StageReport> {
        self.stages.iter().find(|s| s.stage == name)
    }

    pub fn has_warnings(&self) -> bool {
        !self.warnings.is_empty() || self.stages.iter().any(|s| !s.warnings.is_empty())
    }

    pub fn strip_timings(&mut self) {
        for s in &mut self.stages {
            s.seconds = None;
        }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("reports serialize");
        s.push('\n');
        s
    }
}
