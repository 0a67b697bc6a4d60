use crate::error::{Error, Result};

/// A point of the extended plane `R^{n-1} + {inf}`.
#[derive(Debug, Clone, PartialEq)]
pub enum StereoPoint {
    Finite(Vec<f64>),
    Infinity,
}

impl StereoPoint {
    /// Projection from the north pole `(0, ..., 0, 1)`; the pole itself maps
    /// to [`StereoPoint::Infinity`].
    pub fn from_sphere(p: &[f64]) -> Self {
        let n = p.len();
        let last = p[n - 1];
        let head = &p[..n - 1];
        if last <= 0.0 {
            let d = 1.0 - last;
            return StereoPoint::Finite(head.iter().map(|x| x / d).collect());
        }
        // On the sphere 1 - x_n = |head|^2 / (1 + x_n), which avoids the
        // cancellation near the pole.
        let r2: f64 = head.iter().map(|x| x * x).sum();
        if r2 == 0.0 {
            return StereoPoint::Infinity;
        }
        let c = (1.0 + last) / r2;
        StereoPoint::Finite(head.iter().map(|x| x * c).collect())
    }

    /// Inverse projection onto the unit sphere in `R^{dim + 1}`.
    pub fn to_sphere(&self, plane_dim: usize) -> Vec<f64> {
        match self {
            StereoPoint::Finite(h) => stereo_unproject(h),
            StereoPoint::Infinity => {
                let mut p = vec![0.0; plane_dim + 1];
                p[plane_dim] = 1.0;
                p
            }
        }
    }

    pub fn norm(&self) -> f64 {
        match self {
            StereoPoint::Finite(h) => h.iter().map(|x| x * x).sum::<f64>().sqrt(),
            StereoPoint::Infinity => f64::INFINITY,
        }
    }
}

/// `Pi(f)_s = f^s / (1 - f^n)`; fails at the north pole.
pub fn stereo_project(p: &[f64]) -> Result<Vec<f64>> {
    if p.len() < 2 {
        return Err(Error::DimensionMismatch("stereographic projection needs n >= 2".into()));
    }
    match StereoPoint::from_sphere(p) {
        StereoPoint::Finite(h) => Ok(h),
        StereoPoint::Infinity => Err(Error::InvalidParameter(
            "the projection pole has no finite image".into(),
        )),
    }
}

/// `Pi^{-1}(h) = (2h, |h|^2 - 1) / (|h|^2 + 1)`.
pub fn stereo_unproject(h: &[f64]) -> Vec<f64> {
    let r2: f64 = h.iter().map(|x| x * x).sum();
    let d = r2 + 1.0;
    let mut p: Vec<f64> = h.iter().map(|x| 2.0 * x / d).collect();
    p.push((r2 - 1.0) / d);
    p
}
