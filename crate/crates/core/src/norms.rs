//! Spatial norms of spectral fields and the descriptors of time-weighted
//! mixed norms `||t^rho f(t)||_{L^{a'}(0,T; X)}`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::SpectralVectorField;

/// Spatial part of a mixed norm.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum SpatialNorm {
    /// `L^r`, `r = inf` allowed.
    Lp(f64),
    /// `H^{s'}` homogeneous, via Plancherel.
    HomSobolev(f64),
    /// `W^{beta, r}` with the Bessel potential `(1 - Delta)^{beta/2}`.
    InhomSobolev { beta: f64, r: f64 },
    /// `W^{eta, r}` homogeneous: `||Lambda^eta f||_{L^r}`.
    HomSobolevLp { eta: f64, r: f64 },
}

impl SpatialNorm {
    /// Same norm with zero-order Sobolev variants written as `L^r`.
    pub fn canonical(self) -> SpatialNorm {
        match self {
            SpatialNorm::InhomSobolev { beta, r } if beta == 0.0 => SpatialNorm::Lp(r),
            other => other,
        }
    }
}

/// `||t^weight f(t)||_{L^{temporal_exponent}(0, T; spatial)}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormSpec {
    pub temporal_exponent: f64,
    pub temporal_weight: f64,
    pub spatial: SpatialNorm,
}

impl NormSpec {
    pub fn new(temporal_exponent: f64, temporal_weight: f64, spatial: SpatialNorm) -> Self {
        NormSpec { temporal_exponent, temporal_weight, spatial }
    }

    /// Whether `t^{rho a'}` is integrable at `t = 0` (`rho >= 0` for `a' = inf`).
    pub fn weight_integrable_at_zero(&self) -> bool {
        if self.temporal_exponent.is_infinite() {
            self.temporal_weight >= 0.0
        } else {
            self.temporal_weight * self.temporal_exponent > -1.0
        }
    }
}

/// Composite cell-sum quadrature of `|f|^r` on the physical grid, with `|f|`
/// the pointwise Euclidean length; `r = inf` is the grid maximum.
pub fn lp_norm_physical(field: &SpectralVectorField, r: f64) -> f64 {
    let grid = field.grid();
    let phys = field.to_physical();
    let len = grid.len();
    let speed = |i: usize| phys.iter().map(|c| c[i] * c[i]).sum::<f64>().sqrt();
    if r.is_infinite() {
        return (0..len).map(speed).fold(0.0, f64::max);
    }
    let sum: f64 = (0..len).map(|i| speed(i).powf(r)).sum();
    (sum * grid.cell_volume()).powf(1.0 / r)
}

pub fn spatial_norm(field: &SpectralVectorField, spec: &SpatialNorm) -> Result<f64> {
    let mean_free = field.mean_magnitude() == 0.0;
    match spec.canonical() {
        SpatialNorm::Lp(r) => Ok(lp_norm_physical(field, r)),
        SpatialNorm::HomSobolev(order) => {
            if order < 0.0 && !mean_free {
                return Err(Error::NonzeroMean);
            }
            Ok(field.hom_sobolev_sq(order).sqrt())
        }
        SpatialNorm::InhomSobolev { beta, r } => Ok(lp_norm_physical(&field.bessel_power(beta), r)),
        SpatialNorm::HomSobolevLp { eta, r } => {
            if eta < 0.0 && !mean_free {
                return Err(Error::NonzeroMean);
            }
            if eta == 0.0 {
                let mut f = field.clone();
                f.zero_mean();
                return Ok(lp_norm_physical(&f, r));
            }
            Ok(lp_norm_physical(&field.fractional_power(eta), r))
        }
    }
}
