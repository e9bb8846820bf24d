//! Duhamel integrals, the fixed-point operator
//! `K(w) = -int_0^t e^{-(t-s)L} B(w + h, w + h) ds`, and Picard iteration for
//! the short-time mild solution.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::field::SpectralVectorField;
use crate::nonlinearity::bilinear_b;
use crate::norms::SpatialNorm;
use crate::params::{classify_yspace, RegimeParams, YCase, YSpaceCase};
use crate::semigroup::{heat_trajectory, HeatFlow};
use crate::trajectory::{trajectory_norm, yspace_norm, Provenance, Trajectory};

/// `I(t_n) = int_0^{t_n} e^{-(t_n - s)L} F(s) ds` by the exponential
/// trapezoid rule: the kernel is exact, `F` is piecewise linear in time.
///
/// Uses the recursion `I_{n+1} = E I_n + dt/2 (E F_n + F_{n+1})` with
/// `E = e^{-dt L}`, which is the same sum written node by node.
pub fn duhamel_integrate(nodes: &[f64], integrand: &[SpectralVectorField], alpha: f64) -> Result<Vec<SpectralVectorField>> {
    if nodes.len() != integrand.len() || nodes.is_empty() {
        return Err(Error::NodeMismatch);
    }
    let grid = integrand[0].grid();
    let dissipation: Vec<f64> = grid.xi_sq_table().iter().map(|k2| k2.powf(alpha)).collect();
    let mut out = Vec::with_capacity(nodes.len());
    out.push(SpectralVectorField::zeros(grid));
    for j in 0..nodes.len() - 1 {
        let dt = nodes[j + 1] - nodes[j];
        let decay: Vec<f64> = dissipation.iter().map(|l| (-dt * l).exp()).collect();
        let mut next = out[j].clone();
        next.axpy(0.5 * dt, &integrand[j]);
        next.apply_multiplier(|i| decay[i]);
        next.axpy(0.5 * dt, &integrand[j + 1]);
        out.push(next);
    }
    Ok(out)
}

/// `M(f, g)(t_n) = int_0^{t_n} e^{-(t_n - s)L} B(f, g)(s) ds` on the shared nodes.
pub fn duhamel_bilinear(f: &Trajectory, g: &Trajectory, alpha: f64) -> Result<Trajectory> {
    if !f.same_nodes(g) {
        return Err(Error::NodeMismatch);
    }
    let integrand =
        f.fields().iter().zip(g.fields()).map(|(a, b)| bilinear_b(a, b)).collect::<Result<Vec<_>>>()?;
    let fields = duhamel_integrate(f.nodes(), &integrand, alpha)?;
    Trajectory::new(f.nodes().to_vec(), fields, Provenance::Picard)
}

/// `K(w) = -[M(w,w) + M(w,h) + M(h,w) + M(h,h)]`, evaluated as `-M(w+h, w+h)`.
pub fn apply_k(w: &Trajectory, h: &Trajectory, alpha: f64) -> Result<Trajectory> {
    if !w.same_nodes(h) {
        return Err(Error::NodeMismatch);
    }
    let integrand = w
        .fields()
        .iter()
        .zip(h.fields())
        .map(|(a, b)| {
            let u = a + b;
            let mut n = bilinear_b(&u, &u)?;
            n.scale(-1.0);
            Ok(n)
        })
        .collect::<Result<Vec<_>>>()?;
    let fields = duhamel_integrate(w.nodes(), &integrand, alpha)?;
    Trajectory::new(w.nodes().to_vec(), fields, Provenance::Picard)
}

/// Largest spatial exponent of the extra `Y4` norm accepted.
pub const Y4_EXPONENT_MAX: f64 = 1e3;

/// Norm used by the stopping rule.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum ResidualNorm {
    /// Sum of all components of the solution space.
    Full,
    /// Only the leading `L^a_T L^p_x` component.
    Leading,
}

#[derive(Debug, Clone)]
pub struct PicardConfig {
    pub tau: f64,
    /// Number of node times, `M + 1`; nodes are `tau (j/M)^2`.
    pub nodes: usize,
    pub max_iter: usize,
    pub tol: f64,
    pub case: YSpaceCase,
    pub residual_norm: ResidualNorm,
    pub alpha: f64,
}

impl PicardConfig {
    pub fn new(regime: &RegimeParams, tau: f64, nodes: usize) -> Self {
        PicardConfig {
            tau,
            nodes,
            max_iter: 50,
            tol: 1e-8,
            case: classify_yspace(regime),
            residual_norm: ResidualNorm::Full,
            alpha: regime.alpha(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tau > 0.0) || self.nodes < 16 || !(self.tol > 0.0) || self.max_iter == 0 {
            return Err(Error::InvalidConfig(format!(
                "picard needs tau > 0, nodes >= 16, tol > 0, max_iter >= 1 (tau={}, nodes={}, tol={})",
                self.tau, self.nodes, self.tol
            )));
        }
        // near the edge of the s-range the extra Y4 exponent blows up
        if self.case.case_id == YCase::Y4 {
            for spec in &self.case.norm_components[2..] {
                if let SpatialNorm::Lp(r) = spec.spatial {
                    if !(2.0..=Y4_EXPONENT_MAX).contains(&r) {
                        return Err(Error::HypothesisViolation(format!(
                            "extra Y4 exponent {r} outside [2, {Y4_EXPONENT_MAX}]"
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn node_times(&self) -> Vec<f64> {
        let m = (self.nodes - 1) as f64;
        (0..self.nodes).map(|j| self.tau * (j as f64 / m).powi(2)).collect()
    }

    pub fn norm(&self, traj: &Trajectory) -> Result<f64> {
        match self.residual_norm {
            ResidualNorm::Full => yspace_norm(traj, &self.case),
            ResidualNorm::Leading => trajectory_norm(traj, self.case.leading_component()),
        }
    }
}

#[derive(Debug, Clone)]
pub struct PicardResult {
    /// The last iterate, whose residual `||K(w) - w||` is the final entry of
    /// `residuals`.
    pub w: Trajectory,
    pub residuals: Vec<f64>,
    pub contraction_ratios: Vec<f64>,
    pub h_norm: f64,
    pub converged: bool,
}

impl PicardResult {
    pub fn iterations(&self) -> usize {
        self.residuals.len()
    }

    pub fn final_residual(&self) -> f64 {
        *self.residuals.last().expect("at least one iteration")
    }
}

/// Iterate `w <- K(w)` from `w = 0` on the nodes of `h`.
///
/// Stops when `||K(w) - w|| <= tol` (converged) or after `max_iter`
/// applications of `K`. A residual that grows three times in a row is
/// reported as divergence together with `||h||`.
pub fn picard_solve(h: &Trajectory, config: &PicardConfig) -> Result<PicardResult> {
    config.validate()?;
    let h_norm = config.norm(h)?;
    let mut w = Trajectory::zeros(h.grid(), h.nodes().to_vec(), Provenance::Picard)?;
    let mut residuals = Vec::new();
    let mut ratios = Vec::new();
    let mut growth = 0;
    for _ in 0..config.max_iter {
        let kw = apply_k(&w, h, config.alpha)?;
        let r = config.norm(&kw.difference(&w)?)?;
        if !r.is_finite() {
            return Err(Error::PicardDiverged { iterations: residuals.len() + 1, h_norm });
        }
        if let Some(&prev) = residuals.last() {
            let ratio = r / prev;
            ratios.push(ratio);
            growth = if ratio > 1.0 { growth + 1 } else { 0 };
        }
        residuals.push(r);
        if r <= config.tol {
            return Ok(PicardResult { w, residuals, contraction_ratios: ratios, h_norm, converged: true });
        }
        if growth >= 3 {
            return Err(Error::PicardDiverged { iterations: residuals.len(), h_norm });
        }
        w = kw;
    }
    Ok(PicardResult { w, residuals, contraction_ratios: ratios, h_norm, converged: false })
}

/// Picard iteration on the configured nodes for the heat flow `flow`.
pub fn picard_from_flow(flow: &HeatFlow, config: &PicardConfig) -> Result<(Trajectory, PicardResult)> {
    config.validate()?;
    let h = heat_trajectory(flow.datum(), &config.node_times(), flow.alpha())?;
    let res = picard_solve(&h, config)?;
    Ok((h, res))
}

/// Halve `tau` (at most `max_halvings` times) until Picard converges.
pub fn picard_auto_shrink(
    flow: &HeatFlow,
    config: &PicardConfig,
    max_halvings: usize,
) -> Result<(PicardConfig, Trajectory, PicardResult)> {
    let mut cfg = config.clone();
    let mut last_err = None;
    for _ in 0..=max_halvings {
        match picard_from_flow(flow, &cfg) {
            Ok((h, res)) if res.converged => return Ok((cfg, h, res)),
            Ok((_, res)) => {
                last_err = Some(Error::PicardDiverged { iterations: res.iterations(), h_norm: res.h_norm })
            }
            Err(e @ Error::PicardDiverged { .. }) => last_err = Some(e),
            Err(e) => return Err(e),
        }
        cfg.tau *= 0.5;
    }
    Err(last_err.expect("loop ran at least once"))
}

/// Empirical sample of the bilinear contraction constant:
/// `||K(w1) - K(w2)|| / (||w1 - w2|| (||w1|| + ||w2|| + ||h||))`.
pub fn contraction_probe(w1: &Trajectory, w2: &Trajectory, h: &Trajectory, config: &PicardConfig) -> Result<f64> {
    let diff = w1.difference(w2)?;
    let dn = config.norm(&diff)?;
    if dn == 0.0 {
        return Err(Error::IdenticalProbes);
    }
    let k1 = apply_k(w1, h, config.alpha)?;
    let k2 = apply_k(w2, h, config.alpha)?;
    let num = config.norm(&k1.difference(&k2)?)?;
    let den = dn * (config.norm(w1)? + config.norm(w2)? + config.norm(h)?);
    Ok(num / den)
}
