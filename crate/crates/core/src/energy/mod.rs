//! Dirichlet and volumetric stretch energies, cotangent Laplacians and
//! mass-preservation diagnostics.

mod diagnostics;
mod functional;
mod laplacian;

pub use diagnostics::{diagnostics, diagnostics_csv, diagnostics_with_c, StretchDiagnostics};
pub use functional::{
    dirichlet_energy, image_volume_gradient, image_volumes, stretch_factor, total_image_volume,
    vs_energy, vs_energy_quadratic, vs_gradient,
};
pub use laplacian::{
    assemble_dirichlet_laplacian, assemble_vs_laplacian, cotangent_weights, dihedral_cotangents,
    local_pairs, LaplacianPattern, SparseLaplacian,
};
