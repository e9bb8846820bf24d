//! Ensemble runs of the full pipeline (randomize, Picard on `[0, tau]`,
//! evolve to `t_max`) and the diagnostics read off them: log-log decay fits,
//! Fourier-splitting ball energies, the pointwise Fourier bound ratio and the
//! energy-derivative inequality monitor.

use std::collections::HashMap;
use std::f64::consts::E;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evolution::{simulate_observed, step_schedule, Dynamics, EnergyLedger, StepperConfig};
use crate::field::SpectralVectorField;
use crate::grid::Grid;
use crate::mild::{picard_auto_shrink, PicardConfig};
use crate::params::{decay_exponents, RegimeParams};
use crate::randomization::{build_partition, randomize, synthesize_datum, Distribution, PartitionOfUnity, RandomSpec};
use crate::semigroup::HeatFlow;
use crate::stats::{geomspace, linear_fit, loglog_fit, median};
use crate::trajectory::{temporal_norm, Provenance, Trajectory};

/// Consecutive ledger rows the energy inequality must hold for to fix `T0`.
pub const T0_RUN: usize = 20;

/// Fraction of the infrared time `m^{2 alpha}` usable for fits.
pub const IR_FRACTION: f64 = 0.25;

/// Radius law `g(t)` of the Fourier-splitting ball `|xi| <= g(t)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RadiusLaw {
    /// `(d / t)^{1 / 2 alpha}`.
    Algebraic,
    /// `(2 / t)^{1 / 2 alpha}`.
    SecondStage,
    /// `(2/3 t ln t)^{-1 / 2 alpha}`, defined for `t > e`.
    CriticalLog,
}

impl RadiusLaw {
    pub fn radius(&self, d: usize, alpha: f64, t: f64) -> Result<f64> {
        let e = 0.5 / alpha;
        match self {
            RadiusLaw::Algebraic if t > 0.0 => Ok((d as f64 / t).powf(e)),
            RadiusLaw::SecondStage if t > 0.0 => Ok((2.0 / t).powf(e)),
            RadiusLaw::CriticalLog if t > E => Ok((2.0 / 3.0 * t * t.ln()).powf(-e)),
            _ => Err(Error::InvalidTrajectory(format!("radius law {self:?} undefined at t = {t}"))),
        }
    }
}

/// `L^d sum_{|xi| <= radius} |coeff(xi)|^2`.
pub fn ball_energy(field: &SpectralVectorField, radius: f64) -> f64 {
    let grid = field.grid();
    let r2 = radius * radius;
    let mut acc = 0.0;
    for i in 0..grid.len() {
        if grid.xi_sq(i) <= r2 {
            acc += field.comps().iter().map(|c| c[i].norm_sqr()).sum::<f64>();
        }
    }
    acc * grid.volume()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecayFitResult {
    pub slope: f64,
    pub slope_stderr: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub window: (f64, f64),
    pub predicted: f64,
    pub points: usize,
}

/// Least squares of `log value` on `log t` over the points with `t` in
/// `window`; needs at least ten of them, all positive.
pub fn fit_decay(t: &[f64], values: &[f64], window: (f64, f64), predicted: f64) -> Result<DecayFitResult> {
    let (lo, hi) = window;
    let (mut x, mut y) = (Vec::new(), Vec::new());
    for (&ti, &vi) in t.iter().zip(values) {
        if ti >= lo * (1.0 - 1e-12) && ti <= hi * (1.0 + 1e-12) {
            if !(vi > 0.0) {
                return Err(Error::NonPositiveValue { t: ti, value: vi });
            }
            x.push(ti);
            y.push(vi);
        }
    }
    if x.len() < 10 {
        return Err(Error::EmptyWindow { lo, hi, count: x.len(), need: 10 });
    }
    let fit = loglog_fit(&x, &y).ok_or(Error::EmptyWindow { lo, hi, count: x.len(), need: 10 })?;
    Ok(DecayFitResult {
        slope: fit.slope,
        slope_stderr: fit.slope_stderr,
        intercept: fit.intercept,
        r_squared: fit.r_squared,
        window,
        predicted,
        points: fit.points,
    })
}

/// Per-seed slopes of one quantity and their median.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleFit {
    pub predicted: f64,
    pub per_seed: Vec<(u64, f64)>,
    pub median: f64,
}

impl EnsembleFit {
    pub fn from_slopes(predicted: f64, per_seed: Vec<(u64, f64)>) -> Self {
        let slopes: Vec<f64> = per_seed.iter().map(|p| p.1).collect();
        EnsembleFit { predicted, median: median(&slopes), per_seed }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplittingRow {
    pub t: f64,
    pub radius: f64,
    pub ball: f64,
    pub total: f64,
    pub ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplittingDiagnostic {
    pub law: RadiusLaw,
    pub rows: Vec<SplittingRow>,
    /// Slope of `log ||w||^2` against `log ln t` (critical regimes only).
    pub log_fit_slope: Option<f64>,
    pub log_fit_window: Option<(f64, f64)>,
}

/// Ball energies of `w` under the chosen radius law; at the critical order
/// `alpha = (d + 2)/4` also fits `log ||w||^2` against `log ln t`.
pub fn splitting_report(w: &Trajectory, regime: &RegimeParams, law: RadiusLaw) -> Result<SplittingDiagnostic> {
    if law == RadiusLaw::CriticalLog {
        if let Some(t) = w.nodes().iter().find(|&&t| t <= E) {
            return Err(Error::InvalidTrajectory(format!("critical-log radius needs t > e, got node {t}")));
        }
    }
    let mut rows = Vec::with_capacity(w.len());
    for (&t, f) in w.nodes().iter().zip(w.fields()) {
        let radius = law.radius(regime.d(), regime.alpha(), t)?;
        let ball = ball_energy(f, radius);
        let total = f.l2_sq();
        let ratio = if total > 0.0 { ball / total } else { 0.0 };
        rows.push(SplittingRow { t, radius, ball, total, ratio });
    }
    let (mut log_fit_slope, mut log_fit_window) = (None, None);
    if regime.is_critical() {
        let (x, y): (Vec<f64>, Vec<f64>) =
            rows.iter().filter(|r| r.t > E && r.total > 0.0).map(|r| (r.t.ln().ln(), r.total.ln())).unzip();
        if let Some(fit) = linear_fit(&x, &y) {
            log_fit_slope = Some(fit.slope);
            log_fit_window = Some((x[0].exp().exp(), x[x.len() - 1].exp().exp()));
        }
    }
    Ok(SplittingDiagnostic { law, rows, log_fit_slope, log_fit_window })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PointwiseReport {
    pub max_ratio: f64,
    pub at_time: f64,
    pub at_xi: f64,
    pub nodes_checked: usize,
}

/// `max R(t, xi)` with `R = |w^(t, xi)| / (|xi| (int_{T0}^t ||w||^2 + t^{1 + s/alpha}))`
/// over nodes `t > T0` and `xi != 0`. `w^` is the whole-space transform,
/// `L^d` times the box coefficient.
pub fn pointwise_bound_check(w: &Trajectory, regime: &RegimeParams, t0: f64) -> Result<PointwiseReport> {
    if w.final_time() <= t0 {
        return Err(Error::InvalidTrajectory(format!("trajectory ends at {} <= T0 = {t0}", w.final_time())));
    }
    let grid = w.grid();
    let vol = grid.volume();
    let expo = 1.0 + regime.s() / regime.alpha();
    let mut report = PointwiseReport { max_ratio: 0.0, at_time: f64::NAN, at_xi: f64::NAN, nodes_checked: 0 };
    // running trapezoid of ||w||^2 from T0 (interpolated linearly into the first cell)
    let energies: Vec<f64> = w.fields().iter().map(|f| f.l2_sq()).collect();
    let mut integral = 0.0;
    let mut prev: Option<(f64, f64)> = None;
    for (k, (&t, f)) in w.nodes().iter().zip(w.fields()).enumerate() {
        if t <= t0 {
            prev = Some((t, energies[k]));
            continue;
        }
        match prev {
            Some((tp, ep)) if tp < t0 => {
                let e0 = ep + (energies[k] - ep) * (t0 - tp) / (t - tp);
                integral += 0.5 * (e0 + energies[k]) * (t - t0);
            }
            Some((tp, ep)) => integral += 0.5 * (ep + energies[k]) * (t - tp),
            None => {}
        }
        prev = Some((t, energies[k]));
        let denom_t = integral + t.powf(expo);
        for i in 0..grid.len() {
            let xi = grid.xi_norm(i);
            if xi == 0.0 {
                continue;
            }
            let amp = vol * f.comps().iter().map(|c| c[i].norm_sqr()).sum::<f64>().sqrt();
            let r = amp / (xi * denom_t);
            if r > report.max_ratio {
                (report.max_ratio, report.at_time, report.at_xi) = (r, t, xi);
            }
        }
        report.nodes_checked += 1;
    }
    Ok(report)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyInequalityReport {
    /// Exponent `gamma` of the bound `d/dt ||w||^2 + ||Lambda^alpha w||^2 <= C t^gamma`.
    pub exponent: f64,
    pub c_fit: f64,
    pub calibration: (f64, f64),
    /// First `t >= e` after which the bound holds for [`T0_RUN`] consecutive rows.
    pub t0: Option<f64>,
    pub rows_after_t0: usize,
    pub fraction_holding: f64,
}

/// `-(d + 2)/(2 alpha) + 1 + 2 s / alpha`.
pub fn energy_inequality_exponent(regime: &RegimeParams) -> f64 {
    let (d, a, s) = (regime.d() as f64, regime.alpha(), regime.s());
    -(d + 2.0) / (2.0 * a) + 1.0 + 2.0 * s / a
}

/// Checks the energy-derivative inequality along the ledger. Each pair of
/// consecutive rows gives `Delta ||w||^2 / dt + mean ||Lambda^alpha w||^2`
/// at the interval midpoint; `C` is the largest ratio to `t^gamma` seen
/// inside `calibration`, and the bound is then tested on every later row.
pub fn energy_inequality_monitor(
    ledger: &EnergyLedger,
    regime: &RegimeParams,
    calibration: (f64, f64),
) -> Result<EnergyInequalityReport> {
    let gamma = energy_inequality_exponent(regime);
    let samples: Vec<(f64, f64)> = ledger
        .rows
        .windows(2)
        .map(|p| {
            let dt = p[1].t - p[0].t;
            let lhs = (p[1].l2w_sq - p[0].l2w_sq) / dt + 0.5 * (p[0].hal_w_sq + p[1].hal_w_sq);
            (0.5 * (p[0].t + p[1].t), lhs)
        })
        .collect();
    let calib: Vec<f64> = samples
        .iter()
        .filter(|(t, _)| *t >= calibration.0 && *t <= calibration.1)
        .map(|(t, v)| v / t.powf(gamma))
        .collect();
    if calib.is_empty() {
        return Err(Error::EmptyWindow { lo: calibration.0, hi: calibration.1, count: 0, need: 1 });
    }
    // a bound with nonpositive C would only say the left side is <= 0
    let c_fit = calib.iter().copied().fold(f64::MIN_POSITIVE, f64::max);
    let holds: Vec<(f64, bool)> = samples.iter().map(|(t, v)| (*t, *v <= c_fit * t.powf(gamma))).collect();
    let mut t0 = None;
    for (k, (t, _)) in holds.iter().enumerate() {
        if *t < E || k + T0_RUN > holds.len() {
            continue;
        }
        if holds[k..k + T0_RUN].iter().all(|h| h.1) {
            t0 = Some(*t);
            break;
        }
    }
    let (rows_after_t0, fraction_holding) = match t0 {
        Some(t0) => {
            let after: Vec<bool> = holds.iter().filter(|h| h.0 >= t0).map(|h| h.1).collect();
            let ok = after.iter().filter(|&&h| h).count();
            (after.len(), ok as f64 / after.len() as f64)
        }
        None => (0, 0.0),
    };
    Ok(EnergyInequalityReport { exponent: gamma, c_fit, calibration, t0, rows_after_t0, fraction_holding })
}

/// `[t_lo, t_hi]` for the decay fits, or `None` when it spans less than a
/// decade (under-resolved run).
pub fn fit_window(grid: &Grid, alpha: f64, t0: Option<f64>, requested: Option<(f64, f64)>, t_max: f64) -> Option<(f64, f64)> {
    let ir = IR_FRACTION * grid.t_ir(alpha);
    let (req_lo, req_hi) = requested.unwrap_or((E, ir));
    let lo = req_lo.max(E).max(t0.unwrap_or(E));
    let hi = req_hi.min(ir).min(t_max);
    (hi >= 10.0 * lo).then_some((lo, hi))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EnsembleConfig {
    pub regime: RegimeParams,
    pub n: usize,
    pub m: usize,
    pub amplitude: f64,
    pub distribution: Distribution,
    pub master_seed: u64,
    pub members: Vec<u64>,
    pub tau: f64,
    pub picard_nodes: usize,
    pub picard_tol: f64,
    pub picard_max_iter: usize,
    /// Halvings of `tau` allowed when Picard fails to converge.
    pub max_halvings: usize,
    pub stepper: StepperConfig,
    pub t_max: f64,
    pub outputs_per_decade: usize,
    pub fit_window: Option<(f64, f64)>,
    /// Calibration window of the energy-inequality constant.
    pub calibration: (f64, f64),
    pub radius: RadiusLaw,
}

impl EnsembleConfig {
    /// The reference regime defaults for `regime` on an `n^d` grid of box multiplier `m`.
    pub fn new(regime: RegimeParams, n: usize, m: usize) -> Self {
        EnsembleConfig {
            regime,
            n,
            m,
            amplitude: 1.0,
            distribution: Distribution::Gaussian,
            master_seed: 0,
            members: vec![0],
            tau: 0.1,
            picard_nodes: 33,
            picard_tol: 1e-8,
            picard_max_iter: 50,
            max_halvings: 4,
            stepper: StepperConfig::default(),
            t_max: 1000.0,
            outputs_per_decade: 20,
            fit_window: None,
            calibration: (E, 10.0 * E),
            radius: RadiusLaw::CriticalLog,
        }
    }

    pub fn grid(&self) -> Result<Grid> {
        Grid::new(self.regime.d(), self.n, self.m)
    }

    pub fn validate(&self) -> Result<()> {
        let grid = self.grid()?;
        self.stepper.validate()?;
        if !(self.amplitude > 0.0) || self.members.is_empty() || self.outputs_per_decade == 0 {
            return Err(Error::InvalidConfig("need amplitude > 0, at least one member, outputs_per_decade >= 1".into()));
        }
        if !(self.tau > 0.0 && self.tau < 1.0) || !(self.t_max > self.tau) {
            return Err(Error::InvalidConfig(format!("need 0 < tau < 1 and t_max > tau (tau={}, t_max={})", self.tau, self.t_max)));
        }
        if self.picard_nodes < 16 || !(self.picard_tol > 0.0) || self.picard_max_iter == 0 {
            return Err(Error::InvalidConfig("picard needs nodes >= 16, tol > 0, max_iter >= 1".into()));
        }
        if let Some((lo, hi)) = self.fit_window {
            let ir = IR_FRACTION * grid.t_ir(self.regime.alpha());
            if !(lo > 0.0 && hi > lo) || hi > ir * (1.0 + 1e-12) {
                return Err(Error::WindowOutsideResolved { lo, hi, min: 0.0, max: ir });
            }
        }
        if !(self.calibration.1 > self.calibration.0) {
            return Err(Error::InvalidConfig("calibration window is empty".into()));
        }
        Ok(())
    }

    pub fn picard_config(&self) -> PicardConfig {
        let mut pc = PicardConfig::new(&self.regime, self.tau, self.picard_nodes);
        pc.tol = self.picard_tol;
        pc.max_iter = self.picard_max_iter;
        pc
    }

    /// Log-spaced output times from `tau` to `t_max`.
    pub fn output_times(&self, tau: f64) -> Vec<f64> {
        let decades = (self.t_max / tau).log10();
        let count = (decades * self.outputs_per_decade as f64).ceil() as usize + 1;
        geomspace(tau, self.t_max, count.max(2))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeriesRow {
    pub t: f64,
    pub l2u_sq: f64,
    pub l2w_sq: f64,
    pub l2h_sq: f64,
}

/// Everything one pipeline instance produces.
#[derive(Debug, Clone)]
pub struct MemberRun {
    pub member: u64,
    /// `tau` actually used (after any halving).
    pub tau: f64,
    pub picard_iterations: usize,
    pub picard_residual: f64,
    /// Largest relative `L^2` gap between Picard and evolution on `[tau/2, tau]`.
    pub glue_discrepancy: f64,
    pub series: Vec<SeriesRow>,
    pub ledger: EnergyLedger,
    /// `w` at the output times `t >= e`.
    pub snapshots: Trajectory,
    pub cfl_warnings: usize,
    pub steps: usize,
}

/// Shared, member-independent inputs of an ensemble.
pub struct EnsembleSetup {
    pub grid: Grid,
    pub partition: PartitionOfUnity,
    pub datum: SpectralVectorField,
}

impl EnsembleSetup {
    pub fn new(config: &EnsembleConfig) -> Result<Self> {
        config.validate()?;
        let grid = config.grid()?;
        let partition = build_partition(&grid);
        let datum = synthesize_datum(&config.regime, &grid, config.amplitude);
        Ok(EnsembleSetup { grid, partition, datum })
    }
}

/// Merge two increasing lists, dropping near-duplicates.
fn merge_times(a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut all: Vec<f64> = a.iter().chain(b).copied().collect();
    all.sort_by(f64::total_cmp);
    let mut out: Vec<f64> = Vec::with_capacity(all.len());
    for t in all {
        match out.last() {
            Some(&p) if t - p <= 1e-9 * t.abs().max(1e-300) => {}
            _ => out.push(t),
        }
    }
    out
}

/// Node times of the evolution stage of a member run.
#[derive(Debug, Clone, PartialEq)]
pub struct EvolutionPlan {
    /// Index of the first Picard node in `[tau/2, tau]`, where evolution starts.
    pub start: usize,
    /// Remaining Picard nodes, then the `dt(t)` schedule, merged with `outputs`.
    pub nodes: Vec<f64>,
    /// Log-spaced times at which the norm series is recorded.
    pub outputs: Vec<f64>,
}

/// `picard_nodes` ends at the `tau` actually used.
pub fn plan_evolution(config: &EnsembleConfig, picard_nodes: &[f64]) -> EvolutionPlan {
    let tau = *picard_nodes.last().expect("non-empty node list");
    let start = picard_nodes.iter().position(|&t| t >= 0.5 * tau).expect("tau is a node");
    let outputs = config.output_times(tau);
    let tail = step_schedule(tau, config.t_max, &config.stepper);
    let nodes = merge_times(&merge_times(&picard_nodes[start..], &tail), &outputs);
    EvolutionPlan { start, nodes, outputs }
}

/// Norms of `u = w + h`, `w` and `h` at time `t`.
pub fn series_row(t: f64, w: &SpectralVectorField, flow: &HeatFlow) -> Result<SeriesRow> {
    let h = flow.at(t)?;
    Ok(SeriesRow { t, l2u_sq: (w + &h).l2_sq(), l2w_sq: w.l2_sq(), l2h_sq: h.l2_sq() })
}

/// Randomize, solve on `[0, tau]` by Picard, and evolve from the first
/// Picard node in `[tau/2, tau]` to `t_max`, stepping through the remaining
/// Picard nodes so the two solutions can be compared there.
pub fn run_member(config: &EnsembleConfig, setup: &EnsembleSetup, member: u64) -> Result<MemberRun> {
    let spec = RandomSpec::new(config.distribution, config.master_seed);
    let u0 = randomize(&setup.datum, &setup.partition, &spec, member);
    let alpha = config.regime.alpha();
    let flow = HeatFlow::new(u0, alpha);
    let (pc, _h, picard) = picard_auto_shrink(&flow, &config.picard_config(), config.max_halvings)?;
    let tau = pc.tau;
    let p_nodes = picard.w.nodes();
    let EvolutionPlan { start, nodes, outputs } = plan_evolution(config, p_nodes);

    let picard_at: HashMap<u64, usize> =
        p_nodes.iter().enumerate().skip(start).map(|(k, t)| (t.to_bits(), k)).collect();
    let mut out_iter = outputs.iter().peekable();
    let mut series = Vec::with_capacity(outputs.len());
    let (mut snap_t, mut snap_f) = (Vec::new(), Vec::new());
    let mut glue_discrepancy: f64 = 0.0;
    let dynamics = Dynamics { alpha, heat: Some(&flow), nonlinear: config.stepper.nonlinear };
    let mut stepper = config.stepper.clone();
    stepper.output_stride = usize::MAX;
    let mut observer = |t: f64, w: &SpectralVectorField| -> Result<()> {
        if let Some(&k) = picard_at.get(&t.to_bits()) {
            let reference = &picard.w.fields()[k];
            let den = reference.l2_sq().sqrt();
            let num = (reference - w).l2_sq().sqrt();
            glue_discrepancy = glue_discrepancy.max(if den > 0.0 { num / den } else { num });
        }
        while let Some(&&to) = out_iter.peek() {
            if to > t * (1.0 + 1e-9) {
                break;
            }
            out_iter.next();
            series.push(series_row(t, w, &flow)?);
            if t >= E && snap_t.last() != Some(&t) {
                snap_t.push(t);
                snap_f.push(w.clone());
            }
        }
        Ok(())
    };
    let run = simulate_observed(&picard.w.fields()[start], &nodes, &stepper, &dynamics, &mut observer)?;
    let snapshots = if snap_t.is_empty() {
        Trajectory::new(vec![run.trajectory.final_time()], vec![run.trajectory.fields().last().unwrap().clone()], Provenance::Evolution)?
    } else {
        Trajectory::new(snap_t, snap_f, Provenance::Evolution)?
    }
    .with_regime(config.regime);
    Ok(MemberRun {
        member,
        tau,
        picard_iterations: picard.iterations(),
        picard_residual: picard.final_residual(),
        glue_discrepancy,
        series,
        ledger: run.ledger,
        snapshots,
        cfl_warnings: run.cfl_warnings,
        steps: run.steps as usize,
    })
}

/// Per-seed diagnostics, computed from a [`MemberRun`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MemberSummary {
    pub member: u64,
    pub tau: f64,
    pub picard_iterations: usize,
    pub picard_residual: f64,
    pub glue_discrepancy: f64,
    pub steps: usize,
    pub cfl_warnings: usize,
    pub max_energy_residual: f64,
    pub energy_inequality: Option<EnergyInequalityReport>,
    /// `max(e, T0)` as used for the window.
    pub t_lo: f64,
    pub window: Option<(f64, f64)>,
    pub u_fit: Option<DecayFitResult>,
    pub w_fit: Option<DecayFitResult>,
    pub h_fit: Option<DecayFitResult>,
    pub pointwise: Option<PointwiseReport>,
    pub splitting: Option<SplittingDiagnostic>,
}

pub fn summarize_member(config: &EnsembleConfig, grid: &Grid, run: &MemberRun) -> Result<MemberSummary> {
    let regime = &config.regime;
    // runs ending before the calibration window carry no monitor
    let energy_inequality = match energy_inequality_monitor(&run.ledger, regime, config.calibration) {
        Ok(r) => Some(r),
        Err(Error::EmptyWindow { .. }) => None,
        Err(e) => return Err(e),
    };
    let t0 = energy_inequality.and_then(|r| r.t0);
    let window = fit_window(grid, regime.alpha(), t0, config.fit_window, config.t_max);
    let (u_pred, w_pred) = decay_exponents(regime);
    let h_pred = regime.s() / regime.alpha();
    let t: Vec<f64> = run.series.iter().map(|r| r.t).collect();
    let fit = |vals: Vec<f64>, pred: f64| window.map(|w| fit_decay(&t, &vals, w, pred)).transpose();
    let u_fit = fit(run.series.iter().map(|r| r.l2u_sq).collect(), u_pred)?;
    let w_fit = fit(run.series.iter().map(|r| r.l2w_sq).collect(), w_pred)?;
    let h_fit = fit(run.series.iter().map(|r| r.l2h_sq).collect(), h_pred)?;
    let t_lo = t0.unwrap_or(E).max(E);
    let pointwise = if run.snapshots.final_time() > t_lo {
        Some(pointwise_bound_check(&run.snapshots, regime, t_lo)?)
    } else {
        None
    };
    let splitting = {
        let keep: Vec<usize> = (0..run.snapshots.len()).filter(|&k| run.snapshots.nodes()[k] > E).collect();
        if keep.is_empty() {
            None
        } else {
            let tr = Trajectory::new(
                keep.iter().map(|&k| run.snapshots.nodes()[k]).collect(),
                keep.iter().map(|&k| run.snapshots.fields()[k].clone()).collect(),
                Provenance::Evolution,
            )?;
            Some(splitting_report(&tr, regime, config.radius)?)
        }
    };
    Ok(MemberSummary {
        member: run.member,
        tau: run.tau,
        picard_iterations: run.picard_iterations,
        picard_residual: run.picard_residual,
        glue_discrepancy: run.glue_discrepancy,
        steps: run.steps as usize,
        cfl_warnings: run.cfl_warnings,
        max_energy_residual: run.ledger.rows.iter().map(|r| r.energy_residual).fold(0.0, f64::max),
        energy_inequality,
        t_lo,
        window,
        u_fit,
        w_fit,
        h_fit,
        pointwise,
        splitting,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MemberOutcome {
    pub member: u64,
    pub summary: Option<MemberSummary>,
    pub error: Option<String>,
    #[serde(skip)]
    pub series: Vec<SeriesRow>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EnsembleReport {
    pub outcomes: Vec<MemberOutcome>,
    pub u: EnsembleFit,
    pub w: EnsembleFit,
    pub h: EnsembleFit,
}

impl EnsembleReport {
    pub fn from_outcomes(regime: &RegimeParams, outcomes: Vec<MemberOutcome>) -> Result<Self> {
        let (u_pred, w_pred) = decay_exponents(regime);
        let h_pred = regime.s() / regime.alpha();
        let collect = |pick: fn(&MemberSummary) -> Option<DecayFitResult>| -> Vec<(u64, f64)> {
            outcomes
                .iter()
                .filter_map(|o| o.summary.as_ref())
                .filter_map(|s| pick(s).map(|f| (s.member, f.slope)))
                .collect()
        };
        Ok(EnsembleReport {
            u: EnsembleFit::from_slopes(u_pred, collect(|s| s.u_fit)),
            w: EnsembleFit::from_slopes(w_pred, collect(|s| s.w_fit)),
            h: EnsembleFit::from_slopes(h_pred, collect(|s| s.h_fit)),
            outcomes,
        })
    }

    pub fn failed(&self) -> Vec<u64> {
        self.outcomes.iter().filter(|o| o.error.is_some()).map(|o| o.member).collect()
    }
}

/// Runs every member (in parallel on the current rayon pool); a failing
/// member is recorded with its error and does not stop the others.
pub fn run_ensemble(config: &EnsembleConfig) -> Result<EnsembleReport> {
    let setup = EnsembleSetup::new(config)?;
    let outcomes: Vec<MemberOutcome> = config
        .members
        .par_iter()
        .map(|&member| {
            match run_member(config, &setup, member).and_then(|run| Ok((summarize_member(config, &setup.grid, &run)?, run)))
            {
                Ok((summary, run)) => MemberOutcome { member, summary: Some(summary), error: None, series: run.series },
                Err(e) => MemberOutcome { member, summary: None, error: Some(e.to_string()), series: Vec::new() },
            }
        })
        .collect();
    EnsembleReport::from_outcomes(&config.regime, outcomes)
}

pub fn write_series_csv(path: &Path, rows: &[SeriesRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_series_csv(path: &Path) -> Result<Vec<SeriesRow>> {
    let mut r = csv::Reader::from_path(path)?;
    Ok(r.deserialize().collect::<std::result::Result<Vec<SeriesRow>, _>>()?)
}

/// One row per member: status, window and fitted slopes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub member: u64,
    pub status: String,
    pub tau: Option<f64>,
    pub t0: Option<f64>,
    pub t_lo: Option<f64>,
    pub t_hi: Option<f64>,
    pub slope_u: Option<f64>,
    pub slope_w: Option<f64>,
    pub slope_h: Option<f64>,
    pub glue_discrepancy: Option<f64>,
    pub energy_fraction: Option<f64>,
    pub pointwise_max: Option<f64>,
    pub log_slope: Option<f64>,
}

impl AggregateRow {
    pub fn from_outcome(o: &MemberOutcome) -> Self {
        let s = o.summary.as_ref();
        AggregateRow {
            member: o.member,
            status: match &o.error {
                Some(e) => format!("failed: {e}"),
                None if s.and_then(|s| s.window).is_none() => "under-resolved".into(),
                None => "ok".into(),
            },
            tau: s.map(|s| s.tau),
            t0: s.and_then(|s| s.energy_inequality).and_then(|r| r.t0),
            t_lo: s.and_then(|s| s.window).map(|w| w.0),
            t_hi: s.and_then(|s| s.window).map(|w| w.1),
            slope_u: s.and_then(|s| s.u_fit).map(|f| f.slope),
            slope_w: s.and_then(|s| s.w_fit).map(|f| f.slope),
            slope_h: s.and_then(|s| s.h_fit).map(|f| f.slope),
            glue_discrepancy: s.map(|s| s.glue_discrepancy),
            energy_fraction: s.and_then(|s| s.energy_inequality).map(|r| r.fraction_holding),
            pointwise_max: s.and_then(|s| s.pointwise).map(|p| p.max_ratio),
            log_slope: s.and_then(|s| s.splitting.as_ref()).and_then(|d| d.log_fit_slope),
        }
    }
}

pub fn write_aggregate_csv(path: &Path, report: &EnsembleReport) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for o in &report.outcomes {
        w.serialize(AggregateRow::from_outcome(o))?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_aggregate_csv(path: &Path) -> Result<Vec<AggregateRow>> {
    let mut r = csv::Reader::from_path(path)?;
    Ok(r.deserialize().collect::<std::result::Result<Vec<AggregateRow>, _>>()?)
}

/// `int ||w||^2 dt` over the series, for reports.
pub fn integrated_energy(series: &[SeriesRow]) -> Result<f64> {
    let t: Vec<f64> = series.iter().map(|r| r.t).collect();
    let v: Vec<f64> = series.iter().map(|r| r.l2w_sq).collect();
    temporal_norm(&t, &v, 1.0, 0.0)
}
