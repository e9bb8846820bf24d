//! The fractional heat semigroup `e^{-t(-Delta)^alpha}`: exact propagation,
//! heat-flow trajectories, and the slope experiments for the smoothing
//! estimate and for the moment scaling of the randomized flow.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::field::SpectralVectorField;
use crate::grid::Grid;
use crate::norms::{spatial_norm, NormSpec, SpatialNorm};
use crate::params::{derive_exponents, RegimeParams};
use crate::randomization::{randomize, PartitionOfUnity, RandomSpec};
use crate::stats::{geomspace, loglog_fit, LinearFit};
use crate::trajectory::{temporal_norm, trajectory_norm, Provenance, Trajectory};

/// `exp(-t |xi|^{2 alpha})` at every lattice frequency.
pub fn heat_symbol(grid: &Grid, t: f64, alpha: f64) -> Vec<f64> {
    grid.xi_sq_table().iter().map(|&k2| (-t * k2.powf(alpha)).exp()).collect()
}

pub fn heat_propagate(field: &SpectralVectorField, t: f64, alpha: f64) -> Result<SpectralVectorField> {
    if !(t >= 0.0) {
        return Err(Error::NegativeTime(t));
    }
    if t == 0.0 {
        return Ok(field.clone());
    }
    let sym = heat_symbol(field.grid(), t, alpha);
    Ok(field.with_multiplier(|i| sym[i]))
}

/// The free evolution of one datum, with `|xi|^{2 alpha}` cached.
#[derive(Debug, Clone)]
pub struct HeatFlow {
    datum: SpectralVectorField,
    alpha: f64,
    dissipation: Vec<f64>,
}

impl HeatFlow {
    pub fn new(datum: SpectralVectorField, alpha: f64) -> Self {
        let dissipation = datum.grid().xi_sq_table().iter().map(|k2| k2.powf(alpha)).collect();
        HeatFlow { datum, alpha, dissipation }
    }

    pub fn datum(&self) -> &SpectralVectorField {
        &self.datum
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn at(&self, t: f64) -> Result<SpectralVectorField> {
        if !(t >= 0.0) {
            return Err(Error::NegativeTime(t));
        }
        Ok(self.datum.with_multiplier(|i| (-t * self.dissipation[i]).exp()))
    }

    /// `||Lambda^eta h(t)||_{L^2}^2` straight from the spectrum.
    pub fn hom_sobolev_sq(&self, t: f64, eta: f64) -> f64 {
        let grid = self.datum.grid();
        let mut acc = 0.0;
        for i in 0..grid.len() {
            let k2 = grid.xi_sq(i);
            let w = if k2 == 0.0 {
                if eta == 0.0 {
                    1.0
                } else {
                    continue;
                }
            } else if eta == 0.0 {
                1.0
            } else {
                k2.powf(eta)
            };
            let m: f64 = self.datum.comps().iter().map(|c| c[i].norm_sqr()).sum();
            if m != 0.0 {
                acc += w * m * (-2.0 * t * self.dissipation[i]).exp();
            }
        }
        acc * grid.volume()
    }
}

pub fn heat_trajectory(datum: &SpectralVectorField, times: &[f64], alpha: f64) -> Result<Trajectory> {
    let flow = HeatFlow::new(datum.clone(), alpha);
    let fields = times.iter().map(|&t| flow.at(t)).collect::<Result<Vec<_>>>()?;
    Trajectory::new(times.to_vec(), fields, Provenance::HeatFlow)
}

/// Sampled spatial norms along a heat flow.
#[derive(Debug, Clone, Serialize)]
pub struct HeatFlowRecord {
    pub alpha: f64,
    pub times: Vec<f64>,
    pub norms: Vec<SpatialNorm>,
    /// `values[j][i]`: norm `i` at time `j`.
    pub values: Vec<Vec<f64>>,
}

pub fn heat_flow_record(
    datum: &SpectralVectorField,
    alpha: f64,
    times: &[f64],
    norms: &[SpatialNorm],
) -> Result<HeatFlowRecord> {
    if times.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::InvalidTrajectory("times not strictly increasing".into()));
    }
    let flow = HeatFlow::new(datum.clone(), alpha);
    let values = times
        .iter()
        .map(|&t| {
            let h = flow.at(t)?;
            norms.iter().map(|n| spatial_norm(&h, n)).collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(HeatFlowRecord { alpha, times: times.to_vec(), norms: norms.to_vec(), values })
}

/// Times where both the datum scale and the box are resolved:
/// `[dx^{2 alpha}, t_IR / 4]`.
pub fn resolved_window(grid: &Grid, alpha: f64) -> (f64, f64) {
    (grid.dx().powf(2.0 * alpha), 0.25 * grid.t_ir(alpha))
}

fn check_window(grid: &Grid, alpha: f64, lo: f64, hi: f64) -> Result<()> {
    let (min, max) = resolved_window(grid, alpha);
    if lo < min * (1.0 - 1e-12) || hi > max * (1.0 + 1e-12) || !(lo < hi) {
        return Err(Error::WindowOutsideResolved { lo, hi, min, max });
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct SmoothingFit {
    pub slope: f64,
    pub predicted: f64,
    pub r_squared: f64,
}

/// Exponent of the smoothing estimate, `-nu/(2 alpha) - (d/(2 alpha))(1/q - 1/p)`.
pub fn smoothing_exponent(d: usize, alpha: f64, nu: f64, p: f64, q: f64) -> f64 {
    -nu / (2.0 * alpha) - d as f64 / (2.0 * alpha) * (1.0 / q - 1.0 / p)
}

/// Mean-free Gaussian bump `exp(-|x - c|^2 / (2 w^2))` centred in the box,
/// carried by the first velocity component.
pub fn gaussian_bump(grid: &Grid, width: f64) -> Result<SpectralVectorField> {
    let centre = 0.5 * grid.box_length();
    let mut samples = vec![vec![0.0; grid.len()]; grid.d()];
    for (i, v) in samples[0].iter_mut().enumerate() {
        let x = grid.point(i);
        let r2: f64 = x[..grid.d()].iter().map(|c| (c - centre).powi(2)).sum();
        *v = (-r2 / (2.0 * width * width)).exp();
    }
    let mut f = SpectralVectorField::from_physical(grid, &samples)?;
    f.zero_mean();
    Ok(f)
}

/// Slope of `log ||Lambda^nu e^{-tL} f_t||_{L^p} / ||f_t||_{L^q}` against
/// `log t`, where `f_t` is a Gaussian whose width `4 t^{1/(2 alpha)}` follows
/// the parabolic scale (so the ratio is scale-invariant apart from the
/// predicted power of `t`). Sampled at 12 geometric times in the window.
pub fn smoothing_slope(
    alpha: f64,
    nu: f64,
    p: f64,
    q: f64,
    grid: &Grid,
    t_window: (f64, f64),
) -> Result<SmoothingFit> {
    if !(1.0 <= q && q <= p && nu >= 0.0) {
        return Err(Error::HypothesisViolation(format!("need 1 <= q <= p and nu >= 0 (nu={nu}, p={p}, q={q})")));
    }
    check_window(grid, alpha, t_window.0, t_window.1)?;
    let times = geomspace(t_window.0, t_window.1, 12);
    let ratios = times
        .iter()
        .map(|&t| {
            let f = gaussian_bump(grid, 4.0 * t.powf(1.0 / (2.0 * alpha)))?;
            let h = heat_propagate(&f, t, alpha)?;
            let num = spatial_norm(&h, &SpatialNorm::HomSobolevLp { eta: nu, r: p })?;
            let den = spatial_norm(&f, &SpatialNorm::Lp(q))?;
            Ok(num / den)
        })
        .collect::<Result<Vec<_>>>()?;
    let fit = loglog_fit(&times, &ratios).ok_or_else(|| Error::InvalidTrajectory("degenerate fit".into()))?;
    Ok(SmoothingFit { slope: fit.slope, predicted: smoothing_exponent(grid.d(), alpha, nu, p, q), r_squared: fit.r_squared })
}

/// Which case of the moment-scaling lemma a norm falls under.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum ScalingCase {
    /// `2 <= a', p <= r_s`, finite `a'`.
    Finite,
    /// `a' = inf`.
    Sup,
}

/// Check the hypotheses of the moment-scaling lemma and return its case and
/// the predicted exponent `sigma`.
pub fn scaling_hypotheses(regime: &RegimeParams, norm: &NormSpec) -> Result<(ScalingCase, f64)> {
    let (eta, p) = match norm.spatial {
        SpatialNorm::HomSobolevLp { eta, r } => (eta, r),
        SpatialNorm::HomSobolev(eta) => (eta, 2.0),
        SpatialNorm::Lp(r) => (0.0, r),
        SpatialNorm::InhomSobolev { .. } => {
            return Err(Error::HypothesisViolation("homogeneous spatial norm required".into()));
        }
    };
    let ex = derive_exponents(regime);
    let (alpha, s) = (regime.alpha(), regime.s());
    let (a_prime, rho) = (norm.temporal_exponent, norm.temporal_weight);
    let tol = 1e-12;
    if !(2.0 - tol <= p && p <= ex.r_s + tol) {
        return Err(Error::HypothesisViolation(format!("p = {p} outside [2, r_s = {}]", ex.r_s)));
    }
    let case = if a_prime.is_infinite() {
        if eta - 2.0 * alpha * rho > s + tol {
            return Err(Error::HypothesisViolation(format!("eta - 2 alpha rho = {} > s", eta - 2.0 * alpha * rho)));
        }
        ScalingCase::Sup
    } else {
        if !(2.0 - tol <= a_prime && a_prime <= ex.r_s + tol) {
            return Err(Error::HypothesisViolation(format!("a' = {a_prime} outside [2, r_s = {}]", ex.r_s)));
        }
        let lhs = eta - 2.0 * alpha * rho - 2.0 * alpha / a_prime;
        if lhs > s + tol {
            return Err(Error::HypothesisViolation(format!("eta - 2 alpha rho - 2 alpha / a' = {lhs} > s")));
        }
        if rho * a_prime <= -1.0 {
            return Err(Error::WeightNotIntegrable { rho, exponent: a_prime });
        }
        ScalingCase::Finite
    };
    Ok((case, ex.sigma(rho, a_prime, eta)))
}

#[derive(Debug, Clone, Serialize)]
pub struct MomentScaling {
    pub case: ScalingCase,
    pub sigma_predicted: f64,
    pub sigma_fitted: f64,
    pub fit: LinearFit,
    /// Moment order used, the smallest even integer `>= r_s`.
    pub moment_order: u32,
    /// `(T, (E ||h||^{2n})^{1/2n})`.
    pub moments: Vec<(f64, f64)>,
    /// Log-log slope of the empirical `P(||h|| >= lambda)` at the largest `T`.
    pub tail_slope: f64,
    pub tail_bound: f64,
    /// Spread of the norm across members at each `T` (max - min).
    pub member_spread: Vec<f64>,
}

/// Nodes on `[0, T]` graded towards 0 as `T (j / count)^2`.
pub fn graded_nodes(t_end: f64, count: usize) -> Vec<f64> {
    (0..=count).map(|j| t_end * (j as f64 / count as f64).powi(2)).collect()
}

const SCALING_NODES: usize = 64;

/// Monte Carlo check of `(E ||h^omega||^{2n})^{1/2n} ~ T^sigma` across the
/// supplied horizons; ensemble members `0..ensemble_size` of `spec`.
pub fn hflow_moment_scaling(
    regime: &RegimeParams,
    datum: &SpectralVectorField,
    partition: &PartitionOfUnity,
    spec: &RandomSpec,
    norm: &NormSpec,
    t_values: &[f64],
    ensemble_size: usize,
) -> Result<MomentScaling> {
    let (case, sigma) = scaling_hypotheses(regime, norm)?;
    let grid = datum.grid();
    let t_max = t_values.iter().cloned().fold(0.0, f64::max);
    check_window(grid, regime.alpha(), t_values.iter().cloned().fold(f64::INFINITY, f64::min), t_max)?;
    let order = derive_exponents(regime).moment_order();
    let alpha = regime.alpha();
    let plancherel = match norm.spatial {
        SpatialNorm::HomSobolevLp { eta, r } if r == 2.0 => Some(eta),
        SpatialNorm::HomSobolev(eta) => Some(eta),
        SpatialNorm::Lp(r) if r == 2.0 => Some(0.0),
        _ => None,
    };
    // norms[member][T]
    let norms: Vec<Vec<f64>> = (0..ensemble_size as u64)
        .into_par_iter()
        .map(|member| {
            let flow = HeatFlow::new(randomize(datum, partition, spec, member), alpha);
            t_values
                .iter()
                .map(|&t_end| {
                    let nodes = graded_nodes(t_end, SCALING_NODES);
                    match plancherel {
                        Some(eta) => {
                            let values: Vec<f64> = nodes.iter().map(|&t| flow.hom_sobolev_sq(t, eta).sqrt()).collect();
                            temporal_norm(&nodes, &values, norm.temporal_exponent, norm.temporal_weight)
                        }
                        None => {
                            let traj = heat_trajectory(flow.datum(), &nodes, alpha)?;
                            trajectory_norm(&traj, norm)
                        }
                    }
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    let moments: Vec<(f64, f64)> = t_values
        .iter()
        .enumerate()
        .map(|(j, &t)| {
            let m = norms.iter().map(|row| row[j].powi(order as i32)).sum::<f64>() / ensemble_size as f64;
            (t, m.powf(1.0 / order as f64))
        })
        .collect();
    let member_spread = (0..t_values.len())
        .map(|j| {
            let col = norms.iter().map(|row| row[j]);
            col.clone().fold(f64::NEG_INFINITY, f64::max) - col.fold(f64::INFINITY, f64::min)
        })
        .collect();
    let (ts, ms): (Vec<f64>, Vec<f64>) = moments.iter().cloned().unzip();
    let fit = loglog_fit(&ts, &ms).ok_or_else(|| Error::InvalidTrajectory("degenerate moment fit".into()))?;
    let last = t_values.iter().position(|&t| t == t_max).expect("max is an element");
    let column: Vec<f64> = norms.iter().map(|row| row[last]).collect();
    Ok(MomentScaling {
        case,
        sigma_predicted: sigma,
        sigma_fitted: fit.slope,
        fit,
        moment_order: order,
        moments,
        tail_slope: tail_slope(&column),
        tail_bound: -derive_exponents(regime).r_s,
        member_spread,
    })
}

/// Log-log slope of the empirical survival function between its median and
/// its 90% quantile (NaN when the sample is degenerate).
pub fn tail_slope(sample: &[f64]) -> f64 {
    let mut v = sample.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n < 8 || v[n / 2] <= 0.0 || v[n / 2] == v[n - 1] {
        return f64::NAN;
    }
    let lo = v[n / 2];
    let hi = v[(9 * n) / 10];
    if !(hi > lo) {
        return f64::NAN;
    }
    let lambdas = geomspace(lo, hi, 8);
    let surv: Vec<f64> = lambdas.iter().map(|&l| v.iter().filter(|&&x| x >= l).count() as f64 / n as f64).collect();
    loglog_fit(&lambdas, &surv).map_or(f64::NAN, |f| f.slope)
}
