use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use gnse::checkpoint::{read_checkpoint, read_trajectory, write_checkpoint, write_trajectory};
use gnse::decay::{
    energy_inequality_monitor, fit_decay, fit_window, plan_evolution, read_series_csv, series_row, write_series_csv,
    DecayFitResult, EnsembleSetup, SeriesRow,
};
use gnse::evolution::{Dynamics, EnergyLedger, Simulation};
use gnse::mild::picard_auto_shrink;
use gnse::params::{classify_decay_ladder, classify_yspace, decay_exponents, derive_exponents, validate_regime};
use gnse::randomization::{randomize, RandomSpec};
use gnse::semigroup::HeatFlow;
use gnse::stats::median;
use gnse::trajectory::Provenance;
use gnse::{Error, SpectralVectorField};
use rayon::prelude::*;
use serde::Serialize;

use crate::config::RunConfig;
use crate::manifest::RunManifest;
use crate::{Cli, Command};

pub fn run(cli: Cli) -> Result<ExitCode> {
    match &cli.command {
        Command::Params { d, alpha, s } => return Ok(cmd_params(*d, *alpha, *s)),
        Command::Verify => return Ok(cmd_verify()),
        _ => {}
    }
    let Some(config_path) = &cli.config else { bail!("this command needs --config PATH") };
    let mut cfg = RunConfig::load(config_path)?;
    if let Some(seed) = cli.seed {
        cfg.randomization.master_seed = seed;
    }
    let out = output_dir(&cli, &cfg);
    std::fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
    let members = match cli.member {
        Some(m) => vec![m],
        None => cfg.members(),
    };
    let ctx = RunContext { cfg, out, members };
    let pool = rayon::ThreadPoolBuilder::new().num_threads(cli.jobs.max(1)).build()?;
    let started = Instant::now();
    let (name, results) = match &cli.command {
        Command::Randomize => ("randomize", pool.install(|| ctx.for_members(|m| ctx.randomize(m)))?),
        Command::Picard { ic } => ("picard", pool.install(|| ctx.for_members(|m| ctx.picard(m, ic.as_deref())))?),
        Command::Simulate { ic, picard, max_steps } => {
            if cli.resume.is_some() && ctx.members.len() != 1 {
                bail!("--resume needs a single --member");
            }
            let opts = SimulateOptions { ic: ic.clone(), picard: picard.clone(), resume: cli.resume.clone(), max_steps: *max_steps };
            ("simulate", pool.install(|| ctx.for_members(|m| ctx.simulate(m, &opts)))?)
        }
        Command::DecayFit { series } => ("decay-fit", vec![ctx.decay_fit(series)?]),
        Command::Params { .. } | Command::Verify => unreachable!("handled above"),
    };
    let mut manifest = RunManifest::load_or_default(&ctx.out)?;
    manifest.config = Some(ctx.cfg.clone());
    let mut failed = false;
    for r in &results {
        if let Some(m) = r.member {
            manifest.members.insert(m, r.status.clone());
        }
        failed |= r.failed;
        for a in &r.artifacts {
            manifest.add_artifact(&ctx.out, a);
        }
        println!("{}", r.status);
    }
    manifest.timings.insert(name.to_string(), started.elapsed().as_secs_f64());
    manifest.save(&ctx.out)?;
    Ok(if failed { ExitCode::from(1) } else { ExitCode::SUCCESS })
}

fn output_dir(cli: &Cli, cfg: &RunConfig) -> PathBuf {
    if let Some(p) = &cli.out {
        return p.clone();
    }
    if let Some(p) = std::env::var_os("GNSE_WORKDIR") {
        return PathBuf::from(p);
    }
    cfg.paths.workdir.clone().unwrap_or_else(|| PathBuf::from("."))
}

fn cmd_params(d: usize, alpha: f64, s: f64) -> ExitCode {
    let regime = match validate_regime(d, alpha, s) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("invalid regime: {e}");
            return ExitCode::from(1);
        }
    };
    let e = derive_exponents(&regime);
    let (u_slope, w_slope) = decay_exponents(&regime);
    println!("regime        d = {d}, alpha = {alpha}, s = {s}");
    for (name, v) in [("mu", e.mu), ("a", e.a), ("p", e.p), ("b", e.b), ("q", e.q), ("lambda", e.lambda), ("r_s", e.r_s)] {
        println!("{name:<13} {v:.6}");
    }
    println!("y_case        {}", classify_yspace(&regime).case_id);
    match classify_decay_ladder(&regime) {
        Ok(c) => {
            println!("ladder        A_{}^({}) (sigma_n = {:.6}, eta_n = {:.6})", c.n, c.branch.index(), c.sigma_n, c.eta_n);
            for st in &c.intermediate {
                println!("  passes      A_{}^(3), w_sq_slope {:.6}", st.n, st.w_slope);
            }
        }
        Err(Error::CriticalAlpha) => println!("ladder        critical (alpha = (d+2)/4)"),
        Err(err) => println!("ladder        unresolved: {err}"),
    }
    println!("u_sq_slope    {u_slope:.4}");
    println!("w_sq_slope    {w_slope:.4}");
    println!("h_sq_slope    {:.4}", s / alpha);
    ExitCode::SUCCESS
}

fn cmd_verify() -> ExitCode {
    let checks = gnse::verify::run_all();
    let mut ok = true;
    for c in &checks {
        ok &= c.passed;
        println!("{} {:<32} value {:.3e} tolerance {:.1e}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.value, c.tolerance);
    }
    if ok {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    }
}

/// What one member (or one whole-ensemble command) reports back.
struct MemberResult {
    member: Option<u64>,
    status: String,
    failed: bool,
    artifacts: Vec<PathBuf>,
}

struct RunContext {
    cfg: RunConfig,
    out: PathBuf,
    members: Vec<u64>,
}

struct SimulateOptions {
    ic: Option<PathBuf>,
    picard: Option<PathBuf>,
    resume: Option<PathBuf>,
    max_steps: Option<u64>,
}

fn u0_name(member: u64) -> String {
    format!("u0_m{member}.gnse")
}

fn picard_name(member: u64) -> String {
    format!("picard_m{member}.gnsetraj")
}

impl RunContext {
    fn for_members(&self, f: impl Fn(u64) -> Result<MemberResult> + Sync) -> Result<Vec<MemberResult>> {
        Ok(self
            .members
            .par_iter()
            .map(|&m| {
                f(m).unwrap_or_else(|e| MemberResult {
                    member: Some(m),
                    status: format!("member {m}: failed: {e:#}"),
                    failed: true,
                    artifacts: Vec::new(),
                })
            })
            .collect())
    }

    fn datum(&self, member: u64) -> Result<SpectralVectorField> {
        let setup = EnsembleSetup::new(&self.cfg.ensemble(vec![member]))?;
        let spec = RandomSpec::new(self.cfg.randomization.distribution, self.cfg.randomization.master_seed);
        Ok(randomize(&setup.datum, &setup.partition, &spec, member))
    }

    fn randomize(&self, member: u64) -> Result<MemberResult> {
        let u0 = self.datum(member)?;
        let path = self.out.join(u0_name(member));
        write_checkpoint(&path, &self.cfg.header(member, 0.0), &u0)?;
        Ok(MemberResult {
            member: Some(member),
            status: format!("member {member}: randomized (||u0||_L2^2 = {:.6e})", u0.l2_sq()),
            failed: false,
            artifacts: vec![path],
        })
    }

    fn load_u0(&self, member: u64, ic: Option<&Path>) -> Result<(SpectralVectorField, Vec<PathBuf>)> {
        let default = self.out.join(u0_name(member));
        let path = ic.map(Path::to_path_buf).unwrap_or(default);
        if !path.exists() && ic.is_none() {
            let r = self.randomize(member)?;
            return Ok((read_checkpoint(&path)?.1, r.artifacts));
        }
        let (header, u0) = read_checkpoint(&path).with_context(|| format!("reading {}", path.display()))?;
        header.check_matches(&self.cfg.header(member, 0.0))?;
        Ok((u0, Vec::new()))
    }

    fn picard(&self, member: u64, ic: Option<&Path>) -> Result<MemberResult> {
        let (u0, mut artifacts) = self.load_u0(member, ic)?;
        let ens = self.cfg.ensemble(vec![member]);
        let flow = HeatFlow::new(u0, self.cfg.regime.alpha);
        let (pc, _h, res) = picard_auto_shrink(&flow, &ens.picard_config(), ens.max_halvings)?;
        let traj_path = self.out.join(picard_name(member));
        write_trajectory(&traj_path, &self.cfg.header(member, 0.0), &res.w)?;
        let csv_path = self.out.join(format!("picard_residuals_m{member}.csv"));
        let mut w = csv::Writer::from_path(&csv_path)?;
        w.write_record(["iteration", "residual", "contraction_ratio"])?;
        for (k, r) in res.residuals.iter().enumerate() {
            let ratio = if k == 0 { String::new() } else { res.contraction_ratios[k - 1].to_string() };
            w.write_record([(k + 1).to_string(), r.to_string(), ratio])?;
        }
        w.flush()?;
        artifacts.extend([traj_path, csv_path]);
        Ok(MemberResult {
            member: Some(member),
            status: format!(
                "member {member}: picard converged in {} iterations, residual {:.3e}, tau {}",
                res.iterations(),
                res.final_residual(),
                pc.tau
            ),
            failed: false,
            artifacts,
        })
    }

    fn simulate(&self, member: u64, opts: &SimulateOptions) -> Result<MemberResult> {
        let (u0, mut artifacts) = self.load_u0(member, opts.ic.as_deref())?;
        let picard_path = opts.picard.clone().unwrap_or_else(|| self.out.join(picard_name(member)));
        if !picard_path.exists() && opts.picard.is_none() {
            artifacts.extend(self.picard(member, None)?.artifacts);
        }
        let (header, picard) = read_trajectory(&picard_path, Provenance::Picard)
            .with_context(|| format!("reading {}", picard_path.display()))?;
        header.check_matches(&self.cfg.header(member, 0.0))?;
        let ens = self.cfg.ensemble(vec![member]);
        let alpha = self.cfg.regime.alpha;
        let flow = HeatFlow::new(u0, alpha);
        let plan = plan_evolution(&ens, picard.nodes());
        let tau = picard.final_time();
        let nodes = &plan.nodes;

        let ledger_path = self.out.join(format!("ledger_m{member}.csv"));
        let series_path = self.out.join(format!("series_m{member}.csv"));
        let state_path = self.out.join(format!("state_m{member}.gnse"));
        let (mut k, w0, mut ledger, mut series) = match &opts.resume {
            Some(p) => {
                let (h, w) = read_checkpoint(p).with_context(|| format!("reading {}", p.display()))?;
                h.check_matches(&self.cfg.header(member, 0.0))?;
                let k = nodes
                    .iter()
                    .position(|t| t.to_bits() == h.time.to_bits())
                    .with_context(|| format!("resume time {} is not a node of this run", h.time))?;
                let mut ledger = EnergyLedger::read_csv(&ledger_path)?;
                ledger.rows.retain(|r| r.t <= h.time);
                if ledger.rows.last().map(|r| r.t.to_bits()) != Some(h.time.to_bits()) {
                    bail!("{} has no row at the resume time {}", ledger_path.display(), h.time);
                }
                let mut series = read_series_csv(&series_path)?;
                series.retain(|r| r.t <= h.time);
                (k, w, ledger, series)
            }
            None => (0, picard.fields()[plan.start].clone(), EnergyLedger::default(), Vec::new()),
        };
        let dynamics = Dynamics { alpha, heat: Some(&flow), nonlinear: true };
        let mut sim = Simulation::new(w0, nodes[k])?;
        let resumed_at = nodes[k];
        let mut outputs = plan.outputs.iter().copied().filter(|&to| opts.resume.is_none() || to > resumed_at * (1.0 + 1e-9)).peekable();
        let mut glue: f64 = 0.0;
        let mut record_outputs = |t: f64, w: &SpectralVectorField, series: &mut Vec<SeriesRow>| -> Result<()> {
            while let Some(&to) = outputs.peek() {
                if to > t * (1.0 + 1e-9) {
                    break;
                }
                outputs.next();
                series.push(series_row(t, w, &flow)?);
            }
            Ok(())
        };
        if opts.resume.is_none() {
            ledger.push(ledger.record(&sim.w, sim.t, &dynamics)?);
            record_outputs(sim.t, &sim.w, &mut series)?;
        }
        let save = |sim: &Simulation, ledger: &EnergyLedger, series: &[SeriesRow]| -> Result<()> {
            ledger.write_csv(&ledger_path)?;
            write_series_csv(&series_path, series)?;
            write_checkpoint(&state_path, &self.cfg.header(member, sim.t), &sim.w)?;
            Ok(())
        };
        let every = self.cfg.evolution.checkpoint_every.max(1);
        let mut interrupted = false;
        while k + 1 < nodes.len() {
            sim.advance(nodes[k + 1] - nodes[k], &dynamics, &ens.stepper)?;
            k += 1;
            sim.t = nodes[k];
            if !sim.w.is_finite() {
                return Err(Error::NonFinite { t: sim.t }.into());
            }
            ledger.push(ledger.record(&sim.w, sim.t, &dynamics)?);
            record_outputs(sim.t, &sim.w, &mut series)?;
            if sim.t <= tau {
                if let Some(j) = picard.nodes().iter().position(|s| s.to_bits() == sim.t.to_bits()) {
                    let reference = &picard.fields()[j];
                    glue = glue.max((reference - &sim.w).l2_sq().sqrt() / reference.l2_sq().sqrt().max(f64::MIN_POSITIVE));
                }
            }
            if opts.max_steps.is_some_and(|cap| k as u64 >= cap) {
                interrupted = true;
                break;
            }
            if k as u64 % every == 0 {
                save(&sim, &ledger, &series)?;
            }
        }
        save(&sim, &ledger, &series)?;
        artifacts.extend([ledger_path, series_path, state_path]);
        let status = if interrupted {
            format!("member {member}: interrupted at t = {} after step {k}; resume with --resume", sim.t)
        } else {
            let final_path = self.out.join(format!("final_m{member}.gnse"));
            write_checkpoint(&final_path, &self.cfg.header(member, sim.t), &sim.w)?;
            artifacts.push(final_path);
            let glue = if opts.resume.is_some() && resumed_at > tau { "n/a".to_string() } else { format!("{glue:.3e}") };
            format!(
                "member {member}: simulated to t = {} in {} steps, glue discrepancy {glue}, cfl warnings {}",
                sim.t, k, sim.cfl_warnings
            )
        };
        Ok(MemberResult { member: Some(member), status, failed: false, artifacts })
    }

    fn decay_fit(&self, series: &[PathBuf]) -> Result<MemberResult> {
        let paths: Vec<PathBuf> = if series.is_empty() {
            let mut found: Vec<PathBuf> = std::fs::read_dir(&self.out)?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| member_of(p).is_some())
                .collect();
            found.sort_by_key(|p| member_of(p));
            found
        } else {
            series.to_vec()
        };
        if paths.is_empty() {
            bail!("no series_m<member>.csv files in {}", self.out.display());
        }
        let regime = validate_regime(self.cfg.regime.d, self.cfg.regime.alpha, self.cfg.regime.s)?;
        let ens = self.cfg.ensemble(self.members.clone());
        let grid = ens.grid()?;
        let (u_pred, w_pred) = decay_exponents(&regime);
        let h_pred = regime.s() / regime.alpha();
        let mut members = Vec::new();
        for p in &paths {
            let member = member_of(p).with_context(|| format!("{}: expected a series_m<member>.csv name", p.display()))?;
            let rows = read_series_csv(p).with_context(|| format!("reading {}", p.display()))?;
            let ledger_path = p.with_file_name(format!("ledger_m{member}.csv"));
            let t0 = if ledger_path.exists() {
                let ledger = EnergyLedger::read_csv(&ledger_path)?;
                energy_inequality_monitor(&ledger, &regime, ens.calibration).ok().and_then(|r| r.t0)
            } else {
                None
            };
            let window = fit_window(&grid, regime.alpha(), t0, ens.fit_window, ens.t_max);
            let t: Vec<f64> = rows.iter().map(|r| r.t).collect();
            let fit = |v: Vec<f64>, pred: f64| window.map(|w| fit_decay(&t, &v, w, pred)).transpose();
            let status = match window {
                None => "under-resolved".to_string(),
                Some(_) => "ok".to_string(),
            };
            let (u, w, h) = match (
                fit(rows.iter().map(|r| r.l2u_sq).collect(), u_pred),
                fit(rows.iter().map(|r| r.l2w_sq).collect(), w_pred),
                fit(rows.iter().map(|r| r.l2h_sq).collect(), h_pred),
            ) {
                (Ok(u), Ok(w), Ok(h)) => (u, w, h),
                (u, w, h) => {
                    let err = [u.err(), w.err(), h.err()].into_iter().flatten().next().expect("one failed");
                    members.push(MemberFit { member, t0, window, u: None, w: None, h: None, status: format!("failed: {err}") });
                    continue;
                }
            };
            members.push(MemberFit { member, t0, window, u, w, h, status });
        }
        let slopes = |pick: fn(&MemberFit) -> Option<DecayFitResult>| -> Vec<f64> {
            members.iter().filter_map(|m| pick(m).map(|f| f.slope)).collect()
        };
        let (us, ws, hs) = (slopes(|m| m.u), slopes(|m| m.w), slopes(|m| m.h));
        let checks = Checks {
            u_median_within_0_1: !us.is_empty() && (median(&us) - u_pred).abs() <= 0.1,
            w_median_within_0_2: !ws.is_empty() && (median(&ws) - w_pred).abs() <= 0.2,
            h_every_seed_within_0_05: !hs.is_empty() && hs.iter().all(|s| (s - h_pred).abs() <= 0.05),
        };
        let report = DecayReport {
            regime: self.cfg.regime,
            predicted: Slopes { u_sq: u_pred, w_sq: w_pred, h_sq: h_pred },
            median: Slopes { u_sq: median(&us), w_sq: median(&ws), h_sq: median(&hs) },
            members,
            checks,
        };
        let text = serde_json::to_string_pretty(&report)?;
        let path = self.out.join("decay_report.json");
        gnse::checkpoint::write_atomic(&path, text.as_bytes())?;
        Ok(MemberResult { member: None, status: text, failed: false, artifacts: vec![path] })
    }
}

/// `series_m<k>.csv` -> `k`.
fn member_of(path: &Path) -> Option<u64> {
    let name = path.file_name()?.to_str()?;
    name.strip_prefix("series_m")?.strip_suffix(".csv")?.parse().ok()
}

#[derive(Serialize)]
struct MemberFit {
    member: u64,
    t0: Option<f64>,
    window: Option<(f64, f64)>,
    u: Option<DecayFitResult>,
    w: Option<DecayFitResult>,
    h: Option<DecayFitResult>,
    status: String,
}

#[derive(Serialize)]
struct Slopes {
    u_sq: f64,
    w_sq: f64,
    h_sq: f64,
}

#[derive(Serialize)]
struct Checks {
    u_median_within_0_1: bool,
    w_median_within_0_2: bool,
    h_every_seed_within_0_05: bool,
}

/// The structured `decay-fit` report (written as `decay_report.json`).
#[derive(Serialize)]
struct DecayReport {
    regime: crate::config::RegimeSection,
    predicted: Slopes,
    median: Slopes,
    members: Vec<MemberFit>,
    checks: Checks,
}
