use std::fmt::Write as _;

use serde::Serialize;

use super::functional::{energy_from_volumes, image_volumes};
use crate::complex::{MeasuredComplex, PiecewiseAffineMap};
use crate::error::{Error, Result};

/// Mass-preservation diagnostics of a map.
#[derive(Debug, Clone, Serialize)]
pub struct StretchDiagnostics {
    pub energy: f64,
    pub lower_bound: f64,
    pub epsilon: f64,
    pub mean_delta: f64,
    pub sd_delta: f64,
    pub max_abs_delta: f64,
    /// The volume normalization `C` used in the lower bound.
    pub c: f64,
    pub total_mass: f64,
    pub total_image_volume: f64,
    pub mass_min: f64,
    pub mass_max: f64,
    /// `mu_min (C / sum mu)^2 |delta|^2`.
    pub sandwich_lower: f64,
    /// `mu_max (C / sum mu)^2 |delta|^2`.
    pub sandwich_upper: f64,
    #[serde(skip)]
    pub image_volumes: Vec<f64>,
    #[serde(skip)]
    pub delta: Vec<f64>,
}

impl StretchDiagnostics {
    /// From image volumes and masses. `delta` is always formed with the total
    /// image volume; `c` only enters the lower bound.
    pub fn from_volumes(image_volumes: Vec<f64>, mass: &[f64], c: f64) -> Result<Self> {
        if !(c > 0.0) {
            return Err(Error::InvalidParameter(format!("C must be positive, got {c}")));
        }
        if image_volumes.len() != mass.len() || mass.is_empty() {
            return Err(Error::DimensionMismatch(format!(
                "{} image volumes for {} masses",
                image_volumes.len(),
                mass.len()
            )));
        }
        let m = mass.len() as f64;
        let total_mass: f64 = mass.iter().sum();
        let total_image_volume: f64 = image_volumes.iter().sum();
        let energy = energy_from_volumes(&image_volumes, mass);
        let lower_bound = c * c / total_mass;
        let delta: Vec<f64> = image_volumes
            .iter()
            .zip(mass)
            .map(|(v, mu)| (v / total_image_volume) / (mu / total_mass) - 1.0)
            .collect();
        let mean_delta = delta.iter().sum::<f64>() / m;
        let sd_delta = (delta.iter().map(|d| (d - mean_delta).powi(2)).sum::<f64>() / m).sqrt();
        let max_abs_delta = delta.iter().fold(0.0f64, |a, d| a.max(d.abs()));
        let norm2: f64 = delta.iter().map(|d| d * d).sum();
        let mass_min = mass.iter().copied().fold(f64::INFINITY, f64::min);
        let mass_max = mass.iter().copied().fold(0.0, f64::max);
        let scale = (c / total_mass).powi(2) * norm2;
        Ok(Self {
            energy,
            lower_bound,
            epsilon: energy - lower_bound,
            mean_delta,
            sd_delta,
            max_abs_delta,
            c,
            total_mass,
            total_image_volume,
            mass_min,
            mass_max,
            sandwich_lower: mass_min * scale,
            sandwich_upper: mass_max * scale,
            image_volumes,
            delta,
        })
    }

    /// `epsilon` rescaled as if the total mass were `target`, which is how
    /// results on meshes of different size are compared.
    pub fn normalized_epsilon(&self, target: f64) -> f64 {
        self.epsilon * self.total_mass / target
    }

    /// Whether `sandwich_lower <= epsilon <= sandwich_upper` up to an
    /// absolute slack of `rel_slack * energy`.
    pub fn sandwich_holds(&self, rel_slack: f64) -> bool {
        let slack = rel_slack * self.energy.abs();
        self.sandwich_lower <= self.epsilon + slack && self.epsilon <= self.sandwich_upper + slack
    }

    pub fn lower_bound_holds(&self, rel_slack: f64) -> bool {
        self.energy >= self.lower_bound - rel_slack * self.energy.abs()
    }
}

/// Diagnostics with `C = sum |f(s)|`.
pub fn diagnostics(measured: &MeasuredComplex, map: &PiecewiseAffineMap) -> Result<StretchDiagnostics> {
    let vols = image_volumes(measured.complex(), map)?;
    let c = vols.iter().sum();
    StretchDiagnostics::from_volumes(vols, measured.mass(), c)
}

pub fn diagnostics_with_c(
    measured: &MeasuredComplex,
    map: &PiecewiseAffineMap,
    c: f64,
) -> Result<StretchDiagnostics> {
    let vols = image_volumes(measured.complex(), map)?;
    StretchDiagnostics::from_volumes(vols, measured.mass(), c)
}

/// Per-simplex CSV: `simplex_id,volume,image_volume,mass,delta`.
pub fn diagnostics_csv(measured: &MeasuredComplex, diag: &StretchDiagnostics) -> String {
    let complex = measured.complex();
    let mut out = String::from("simplex_id,volume,image_volume,mass,delta\n");
    for s in 0..complex.num_simplices() {
        writeln!(
            out,
            "{s},{:.16e},{:.16e},{:.16e},{:.16e}",
            complex.simplex_volume(s),
            diag.image_volumes[s],
            measured.mass()[s],
            diag.delta[s]
        )
        .unwrap();
    }
    out
}
