//! The TOML run configuration. Sections mirror the library modules:
//!
//! ```toml
//! [regime]
//! d = 2
//! alpha = 1.0
//! s = -0.5
//!
//! [grid]
//! n = 256
//! m = 64
//!
//! [randomization]
//! distribution = "gaussian"   # gaussian | rademacher | unit
//! master_seed = 0
//! ensemble_size = 8
//! amplitude = 0.005
//!
//! [picard]
//! tau = 0.1
//! nodes = 33
//! tol = 1e-8
//! max_iter = 50
//! max_halvings = 4
//!
//! [evolution]
//! dt0 = 1e-3
//! growth = 0.01
//! scheme = "exp_midpoint"     # exp_midpoint | exp_euler
//! t_max = 1000.0
//! outputs_per_decade = 20
//! checkpoint_every = 200
//!
//! [decay]                     # optional
//! window = [2.718281828459045, 1000.0]
//! radius = "critical_log"     # algebraic | second_stage | critical_log
//!
//! [paths]                     # optional
//! workdir = "runs/reference"
//! ```

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use gnse::checkpoint::CheckpointHeader;
use gnse::decay::{EnsembleConfig, RadiusLaw};
use gnse::evolution::{Scheme, StepperConfig};
use gnse::params::validate_regime;
use gnse::randomization::Distribution;
use gnse::Grid;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub regime: RegimeSection,
    pub grid: GridSection,
    pub randomization: RandomizationSection,
    pub picard: PicardSection,
    pub evolution: EvolutionSection,
    #[serde(default)]
    pub decay: DecaySection,
    #[serde(default)]
    pub paths: PathsSection,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegimeSection {
    pub d: usize,
    pub alpha: f64,
    pub s: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    pub n: usize,
    pub m: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RandomizationSection {
    pub distribution: Distribution,
    pub master_seed: u64,
    pub ensemble_size: u64,
    pub amplitude: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PicardSection {
    pub tau: f64,
    pub nodes: usize,
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
    #[serde(default = "default_halvings")]
    pub max_halvings: usize,
}

fn default_tol() -> f64 {
    1e-8
}

fn default_max_iter() -> usize {
    50
}

fn default_halvings() -> usize {
    4
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvolutionSection {
    pub dt0: f64,
    #[serde(default)]
    pub growth: f64,
    #[serde(default = "default_scheme")]
    pub scheme: Scheme,
    pub t_max: f64,
    #[serde(default = "default_outputs")]
    pub outputs_per_decade: usize,
    #[serde(default = "default_checkpoint_every")]
    pub checkpoint_every: u64,
}

fn default_scheme() -> Scheme {
    Scheme::ExpMidpoint
}

fn default_outputs() -> usize {
    20
}

fn default_checkpoint_every() -> u64 {
    200
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DecaySection {
    pub window: Option<(f64, f64)>,
    #[serde(default = "default_radius")]
    pub radius: RadiusLaw,
}

fn default_radius() -> RadiusLaw {
    RadiusLaw::CriticalLog
}

impl Default for DecaySection {
    fn default() -> Self {
        DecaySection { window: None, radius: default_radius() }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PathsSection {
    pub workdir: Option<PathBuf>,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let cfg: RunConfig = toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Everything the library would reject later is rejected here.
    pub fn validate(&self) -> Result<()> {
        let r = &self.regime;
        validate_regime(r.d, r.alpha, r.s).context("[regime]")?;
        let grid = Grid::new(r.d, self.grid.n, self.grid.m).context("[grid]")?;
        if !(grid.dx().powf(2.0 * r.alpha) < 0.25 * grid.t_ir(r.alpha)) {
            anyhow::bail!("[grid] n = {} cannot resolve any time window for m = {}", self.grid.n, self.grid.m);
        }
        if self.randomization.ensemble_size == 0 {
            anyhow::bail!("[randomization] ensemble_size must be >= 1");
        }
        self.ensemble(vec![0]).validate().context("configuration")?;
        Ok(())
    }

    pub fn members(&self) -> Vec<u64> {
        (0..self.randomization.ensemble_size).collect()
    }

    pub fn ensemble(&self, members: Vec<u64>) -> EnsembleConfig {
        let regime = validate_regime(self.regime.d, self.regime.alpha, self.regime.s).expect("validated regime");
        let mut e = EnsembleConfig::new(regime, self.grid.n, self.grid.m);
        e.amplitude = self.randomization.amplitude;
        e.distribution = self.randomization.distribution;
        e.master_seed = self.randomization.master_seed;
        e.members = members;
        e.tau = self.picard.tau;
        e.picard_nodes = self.picard.nodes;
        e.picard_tol = self.picard.tol;
        e.picard_max_iter = self.picard.max_iter;
        e.max_halvings = self.picard.max_halvings;
        e.stepper = StepperConfig {
            dt0: self.evolution.dt0,
            growth: self.evolution.growth,
            scheme: self.evolution.scheme,
            ..StepperConfig::default()
        };
        e.t_max = self.evolution.t_max;
        e.outputs_per_decade = self.evolution.outputs_per_decade;
        e.fit_window = self.decay.window;
        e.radius = self.decay.radius;
        e
    }

    pub fn header(&self, member: u64, time: f64) -> CheckpointHeader {
        CheckpointHeader {
            d: self.regime.d,
            n: self.grid.n,
            m: self.grid.m,
            alpha: self.regime.alpha,
            s: self.regime.s,
            seed: self.randomization.master_seed,
            member,
            time,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub const SMALL: &str = r#"
[regime]
d = 2
alpha = 1.0
s = -0.5

[grid]
n = 32
m = 2

[randomization]
distribution = "gaussian"
master_seed = 5
ensemble_size = 2
amplitude = 1.0

[picard]
tau = 0.05
nodes = 17

[evolution]
dt0 = 0.01
t_max = 0.5
"#;

    #[test]
    fn parses_with_defaults() {
        let cfg: RunConfig = toml::from_str(SMALL).unwrap();
        cfg.validate().unwrap();
        assert_eq!(cfg.picard.tol, 1e-8);
        assert_eq!(cfg.evolution.scheme, Scheme::ExpMidpoint);
        assert_eq!(cfg.decay.radius, RadiusLaw::CriticalLog);
        assert_eq!(cfg.members(), vec![0, 1]);
        let e = cfg.ensemble(vec![1]);
        assert_eq!((e.n, e.m, e.master_seed, e.tau), (32, 2, 5, 0.05));
        let back: RunConfig = toml::from_str(&toml::to_string(&cfg).unwrap()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn rejects_inconsistencies() {
        let bad = |from: &str, to: &str| {
            let cfg: RunConfig = toml::from_str(&SMALL.replace(from, to)).unwrap();
            cfg.validate().unwrap_err().to_string()
        };
        assert!(bad("alpha = 1.0", "alpha = 0.5").contains("regime"));
        assert!(bad("s = -0.5", "s = -1.5").contains("regime"));
        assert!(bad("n = 32", "n = 48").contains("grid"));
        assert!(bad("n = 32", "n = 8").contains("grid"));
        assert!(!bad("tau = 0.05", "tau = 1.5").is_empty());
        assert!(!bad("nodes = 17", "nodes = 4").is_empty());
        assert!(!bad("t_max = 0.5", "t_max = 0.01").is_empty());
        assert!(!bad("ensemble_size = 2", "ensemble_size = 0").is_empty());
        assert!(toml::from_str::<RunConfig>(&SMALL.replace("dt0", "dt_zero")).is_err());
        let windowed = format!("{SMALL}\n[decay]\nwindow = [1.0, 100.0]\n");
        let cfg: RunConfig = toml::from_str(&windowed).unwrap();
        assert!(cfg.validate().is_err());
    }
}
