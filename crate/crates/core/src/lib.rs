//! Mass-preserving parameterizations of simplicial n-manifolds onto the unit
//! n-ball and (n-1)-sphere by minimizing the discrete volumetric stretch
//! energy.

pub mod ball;
pub mod complex;
pub mod energy;
pub mod error;
pub mod linsolve;
pub mod protocol;
pub mod repair;
pub mod report;
pub mod sphere;

pub use complex::{MeasuredComplex, PiecewiseAffineMap, SimplicialComplex};
pub use error::{Error, Result};
