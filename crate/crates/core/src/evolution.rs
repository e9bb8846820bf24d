//! Exponential time stepping of `w = u - h`, where `h` is the exact heat
//! flow of the randomized datum, with a per-step energy ledger.
//!
//! The difference equation is `w' + L w = N(w, t)` with
//! `N = -B(w + h, w + h)` and `L = (-Delta)^alpha`. Setting `h = 0` gives
//! the full equation for `u`.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::SpectralVectorField;
use crate::grid::Grid;
use crate::nonlinearity::bilinear_b;
use crate::semigroup::HeatFlow;
use crate::trajectory::{Provenance, Trajectory};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    /// First order: `w+ = E w + dt phi1 N(w)`.
    ExpEuler,
    /// Second order two-stage exponential Runge–Kutta with midpoint stage.
    ExpMidpoint,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepperConfig {
    /// Smallest step; the step is `max(dt0, growth * t)`.
    pub dt0: f64,
    pub growth: f64,
    pub scheme: Scheme,
    /// Keep every `output_stride`-th step in the returned trajectory.
    pub output_stride: usize,
    /// Advisory bound `dt <= cfl * dx / max|u|`; exceedances are counted.
    pub cfl: f64,
    /// Test hook: drop the nonlinear term entirely.
    pub nonlinear: bool,
}

impl Default for StepperConfig {
    fn default() -> Self {
        StepperConfig { dt0: 1e-3, growth: 0.01, scheme: Scheme::ExpMidpoint, output_stride: 1, cfl: 1.0, nonlinear: true }
    }
}

impl StepperConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt0 > 0.0) || !(self.growth >= 0.0) || self.output_stride == 0 {
            return Err(Error::InvalidConfig("stepper needs dt0 > 0, growth >= 0, output_stride >= 1".into()));
        }
        Ok(())
    }

    pub fn step_size(&self, t: f64) -> f64 {
        self.dt0.max(self.growth * t)
    }
}

/// `phi_k(z) = sum_j z^j / (j + k)!` for small `|z|`.
fn phi_series(z: f64, k: u32) -> f64 {
    let mut term: f64 = (1..=k).map(f64::from).product::<f64>().recip();
    let mut acc = term;
    for j in 1..=14 {
        term *= z / f64::from(j + k);
        acc += term;
    }
    acc
}

fn phi1(z: f64) -> f64 {
    if z.abs() < 0.1 {
        phi_series(z, 1)
    } else {
        z.exp_m1() / z
    }
}

fn phi2(z: f64) -> f64 {
    if z.abs() < 0.1 {
        phi_series(z, 2)
    } else {
        (z.exp_m1() - z) / (z * z)
    }
}

/// Per-mode exponential integrator weights for one step size.
#[derive(Debug, Clone)]
struct StepCoefficients {
    dt: f64,
    e_full: Vec<f64>,
    e_half: Vec<f64>,
    phi1_half: Vec<f64>,
    phi1_full: Vec<f64>,
    phi2_full: Vec<f64>,
}

impl StepCoefficients {
    fn new(grid: &Grid, alpha: f64, dt: f64) -> Self {
        let l: Vec<f64> = grid.xi_sq_table().iter().map(|k2| k2.powf(alpha)).collect();
        let map = |f: &dyn Fn(f64) -> f64| l.iter().map(|&x| f(x)).collect::<Vec<f64>>();
        StepCoefficients {
            dt,
            e_full: map(&|x| (-dt * x).exp()),
            e_half: map(&|x| (-0.5 * dt * x).exp()),
            phi1_half: map(&|x| phi1(-0.5 * dt * x)),
            phi1_full: map(&|x| phi1(-dt * x)),
            phi2_full: map(&|x| phi2(-dt * x)),
        }
    }
}

/// Everything needed to evaluate the right-hand side.
#[derive(Debug, Clone, Copy)]
pub struct Dynamics<'a> {
    pub alpha: f64,
    /// Exact heat flow added to `w` inside the nonlinearity; `None` means `h = 0`.
    pub heat: Option<&'a HeatFlow>,
    pub nonlinear: bool,
}

impl Dynamics<'_> {
    pub fn heat_at(&self, grid: &Grid, t: f64) -> Result<SpectralVectorField> {
        match self.heat {
            Some(flow) => flow.at(t),
            None => Ok(SpectralVectorField::zeros(grid)),
        }
    }

    /// `N(w, t) = -B(w + h(t), w + h(t))`.
    pub fn rhs(&self, w: &SpectralVectorField, t: f64) -> Result<SpectralVectorField> {
        if !self.nonlinear {
            return Ok(SpectralVectorField::zeros(w.grid()));
        }
        let u = match self.heat {
            Some(flow) => w + &flow.at(t)?,
            None => w.clone(),
        };
        let mut n = bilinear_b(&u, &u)?;
        n.scale(-1.0);
        Ok(n)
    }
}

fn combine(parts: &[(&[f64], &SpectralVectorField, f64)], grid: &Grid) -> SpectralVectorField {
    let mut out = SpectralVectorField::zeros(grid);
    for (weights, field, scale) in parts {
        out.axpy(1.0, &field.with_multiplier(|i| scale * weights[i]));
    }
    out
}

fn step_with(
    state: &SpectralVectorField,
    t: f64,
    coeffs: &StepCoefficients,
    dynamics: &Dynamics<'_>,
    scheme: Scheme,
) -> Result<SpectralVectorField> {
    let grid = state.grid();
    let dt = coeffs.dt;
    let n0 = dynamics.rhs(state, t)?;
    let mut next = match scheme {
        Scheme::ExpEuler => combine(&[(&coeffs.e_full, state, 1.0), (&coeffs.phi1_full, &n0, dt)], grid),
        Scheme::ExpMidpoint => {
            let mid = combine(&[(&coeffs.e_half, state, 1.0), (&coeffs.phi1_half, &n0, 0.5 * dt)], grid);
            let n1 = dynamics.rhs(&mid, t + 0.5 * dt)?;
            let b1: Vec<f64> = coeffs.phi1_full.iter().zip(&coeffs.phi2_full).map(|(a, b)| a - 2.0 * b).collect();
            combine(
                &[(&coeffs.e_full, state, 1.0), (&b1, &n0, dt), (&coeffs.phi2_full, &n1, 2.0 * dt)],
                grid,
            )
        }
    };
    next.leray_project_in_place();
    if !next.is_finite() {
        return Err(Error::NonFinite { t: t + dt });
    }
    Ok(next)
}

/// One step of size `dt` from `(t, state)`.
pub fn step_w(
    state: &SpectralVectorField,
    t: f64,
    dt: f64,
    dynamics: &Dynamics<'_>,
    scheme: Scheme,
) -> Result<SpectralVectorField> {
    let coeffs = StepCoefficients::new(state.grid(), dynamics.alpha, dt);
    step_with(state, t, &coeffs, dynamics, scheme)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LedgerRow {
    pub t: f64,
    pub l2w_sq: f64,
    pub hal_w_sq: f64,
    pub flux_wwh: f64,
    pub flux_hwh: f64,
    /// `|d||w||^2 / dt + (D_n + D_{n+1}) - (F_n + F_{n+1})|` over the step
    /// ending at `t`, with `D = ||Lambda^alpha w||^2` and `F` the two fluxes
    /// (0 on the first row).
    pub energy_residual: f64,
}

/// Per-step record of the energy balance
/// `1/2 d/dt ||w||^2 + ||Lambda^alpha w||^2 = <B(w,w),h> + <B(h,w),h>`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EnergyLedger {
    pub rows: Vec<LedgerRow>,
}

impl EnergyLedger {
    pub fn record(&self, w: &SpectralVectorField, t: f64, dynamics: &Dynamics<'_>) -> Result<LedgerRow> {
        let l2w_sq = w.l2_sq();
        let hal_w_sq = w.hom_sobolev_sq(dynamics.alpha);
        let (flux_wwh, flux_hwh) = match dynamics.heat {
            Some(flow) if dynamics.nonlinear => {
                let h = flow.at(t)?;
                (bilinear_b(w, w)?.inner(&h), bilinear_b(&h, w)?.inner(&h))
            }
            _ => (0.0, 0.0),
        };
        let energy_residual = match self.rows.last() {
            Some(prev) => {
                let dt = t - prev.t;
                ((l2w_sq - prev.l2w_sq) / dt + (prev.hal_w_sq + hal_w_sq)
                    - (prev.flux_wwh + prev.flux_hwh + flux_wwh + flux_hwh))
                    .abs()
            }
            None => 0.0,
        };
        Ok(LedgerRow { t, l2w_sq, hal_w_sq, flux_wwh, flux_hwh, energy_residual })
    }

    pub fn push(&mut self, row: LedgerRow) {
        self.rows.push(row);
    }

    pub fn is_finite(&self) -> bool {
        self.rows.iter().all(|r| {
            [r.t, r.l2w_sq, r.hal_w_sq, r.flux_wwh, r.flux_hwh, r.energy_residual].iter().all(|v| v.is_finite())
        })
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut wtr = csv::Writer::from_path(path)?;
        for row in &self.rows {
            wtr.serialize(row)?;
        }
        wtr.flush()?;
        Ok(())
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        let mut rdr = csv::Reader::from_path(path)?;
        let rows = rdr.deserialize().collect::<std::result::Result<Vec<LedgerRow>, _>>()?;
        Ok(EnergyLedger { rows })
    }
}

/// A running simulation: current time, state and step count.
#[derive(Debug, Clone)]
pub struct Simulation {
    pub t: f64,
    pub w: SpectralVectorField,
    pub step: u64,
    coeffs: Option<StepCoefficients>,
    pub cfl_warnings: usize,
}

impl Simulation {
    pub fn new(initial: SpectralVectorField, t0: f64) -> Result<Self> {
        if !(t0 >= 0.0) {
            return Err(Error::NegativeTime(t0));
        }
        Ok(Simulation { t: t0, w: initial, step: 0, coeffs: None, cfl_warnings: 0 })
    }

    /// Advance by exactly `dt`.
    pub fn advance(&mut self, dt: f64, dynamics: &Dynamics<'_>, config: &StepperConfig) -> Result<()> {
        if self.coeffs.as_ref().is_none_or(|c| c.dt != dt) {
            self.coeffs = Some(StepCoefficients::new(self.w.grid(), dynamics.alpha, dt));
        }
        let coeffs = self.coeffs.as_ref().expect("set above");
        let speed = {
            let h = dynamics.heat_at(self.w.grid(), self.t)?;
            (&self.w + &h).max_speed()
        };
        if dynamics.nonlinear && speed > 0.0 && dt > config.cfl * self.w.grid().dx() / speed {
            self.cfl_warnings += 1;
        }
        self.w = step_with(&self.w, self.t, coeffs, dynamics, config.scheme)?;
        self.t += dt;
        self.step += 1;
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct SimulationOutput {
    pub trajectory: Trajectory,
    pub ledger: EnergyLedger,
    pub steps: u64,
    pub cfl_warnings: usize,
}

/// Integrate from `(t0, initial)` to `t_end` with the stepper's `dt(t)`
/// schedule, keeping every `output_stride`-th state and a ledger row per step.
pub fn simulate(
    initial: &SpectralVectorField,
    t0: f64,
    t_end: f64,
    config: &StepperConfig,
    dynamics: &Dynamics<'_>,
) -> Result<SimulationOutput> {
    config.validate()?;
    if !(t_end > t0) {
        return Err(Error::InvalidConfig(format!("t_end {t_end} must exceed t0 {t0}")));
    }
    let nodes = step_schedule(t0, t_end, config);
    simulate_on_nodes(initial, &nodes, config, dynamics)
}

/// Integrate through the prescribed node times, one step per interval.
pub fn simulate_on_nodes(
    initial: &SpectralVectorField,
    nodes: &[f64],
    config: &StepperConfig,
    dynamics: &Dynamics<'_>,
) -> Result<SimulationOutput> {
    simulate_observed(initial, nodes, config, dynamics, &mut |_, _| Ok(()))
}

/// Time nodes from `t0` to `t_end` following the stepper's `dt(t)` schedule.
pub fn step_schedule(t0: f64, t_end: f64, config: &StepperConfig) -> Vec<f64> {
    let mut nodes = Vec::new();
    let mut t = t0;
    while t < t_end {
        nodes.push(t);
        let dt = config.step_size(t);
        t = if t + dt >= t_end * (1.0 - 1e-12) { t_end } else { t + dt };
    }
    nodes.push(t_end);
    nodes
}

/// As [`simulate_on_nodes`], calling `observer(t, w)` at every node
/// (including the first).
pub fn simulate_observed(
    initial: &SpectralVectorField,
    nodes: &[f64],
    config: &StepperConfig,
    dynamics: &Dynamics<'_>,
    observer: &mut dyn FnMut(f64, &SpectralVectorField) -> Result<()>,
) -> Result<SimulationOutput> {
    config.validate()?;
    if nodes.len() < 2 || nodes.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::InvalidTrajectory("need increasing nodes".into()));
    }
    let mut sim = Simulation::new(initial.clone(), nodes[0])?;
    let mut ledger = EnergyLedger::default();
    ledger.push(ledger.record(&sim.w, sim.t, dynamics)?);
    observer(sim.t, &sim.w)?;
    let mut out_nodes = vec![sim.t];
    let mut out_fields = vec![sim.w.clone()];
    for (k, win) in nodes.windows(2).enumerate() {
        sim.advance(win[1] - win[0], dynamics, config)?;
        // land exactly on the node to avoid drift in the time axis
        sim.t = win[1];
        ledger.push(ledger.record(&sim.w, sim.t, dynamics)?);
        observer(sim.t, &sim.w)?;
        if (k + 1) % config.output_stride == 0 || k + 2 == nodes.len() {
            out_nodes.push(sim.t);
            out_fields.push(sim.w.clone());
        }
    }
    let trajectory = Trajectory::new(out_nodes, out_fields, Provenance::Evolution)?;
    Ok(SimulationOutput { trajectory, ledger, steps: sim.step, cfl_warnings: sim.cfl_warnings })
}

#[derive(Debug, Clone)]
pub struct GlueResult {
    pub trajectory: Trajectory,
    /// `max ||w1 - w2|| / ||w1||` over the shared nodes in `[tau/2, tau]`.
    pub discrepancy: f64,
    pub overlap_nodes: usize,
}

/// Join the short-time solution on `[0, tau]` with a long-time solution
/// started inside `[tau/2, tau]`, using the first on `[0, tau]`.
pub fn glue(w_picard: &Trajectory, w_long: &Trajectory) -> Result<GlueResult> {
    if w_picard.grid() != w_long.grid() {
        return Err(Error::GridMismatch);
    }
    let tau = w_picard.final_time();
    let mut discrepancy: f64 = 0.0;
    let mut overlap = 0;
    for (t, f) in w_long.nodes().iter().zip(w_long.fields()) {
        if *t < 0.5 * tau * (1.0 - 1e-12) || *t > tau * (1.0 + 1e-12) {
            continue;
        }
        if let Some(j) = w_picard.nodes().iter().position(|s| (s - t).abs() <= 1e-12 * tau) {
            let reference = &w_picard.fields()[j];
            let den = reference.l2_sq().sqrt();
            let num = (reference - f).l2_sq().sqrt();
            let rel = if den > 0.0 {
                num / den
            } else if num == 0.0 {
                0.0
            } else {
                f64::INFINITY
            };
            discrepancy = discrepancy.max(rel);
            overlap += 1;
        }
    }
    if overlap == 0 {
        return Err(Error::OverlapNotSampled);
    }
    let mut nodes = w_picard.nodes().to_vec();
    let mut fields = w_picard.fields().to_vec();
    for (t, f) in w_long.nodes().iter().zip(w_long.fields()) {
        if *t > tau * (1.0 + 1e-12) {
            nodes.push(*t);
            fields.push(f.clone());
        }
    }
    let trajectory = Trajectory::new(nodes, fields, Provenance::Evolution)?;
    Ok(GlueResult { trajectory, discrepancy, overlap_nodes: overlap })
}
