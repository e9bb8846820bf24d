//! Admissible regimes `(d, alpha, s)` and the closed-form exponent algebra
//! attached to them: the weight exponent `mu`, the Lebesgue exponents of the
//! solution spaces, the moment order `r_s`, the solution-space case table and
//! the decay ladder classification used for the difference `w = u - h`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::norms::{NormSpec, SpatialNorm};

/// Slack used to reject values sitting on an open interval endpoint.
pub const ENDPOINT_TOL: f64 = 1e-14;

/// Deepest ladder level searched by [`classify_decay_ladder`].
pub const LADDER_CAP: u32 = 40;

/// A validated `(d, alpha, s)` triple.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegimeParams {
    d: usize,
    alpha: f64,
    s: f64,
}

impl RegimeParams {
    pub fn d(&self) -> usize {
        self.d
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn s(&self) -> f64 {
        self.s
    }

    /// `(d + 2) / 4`, the largest admissible dissipation order.
    pub fn critical_alpha(&self) -> f64 {
        critical_alpha(self.d)
    }

    pub fn is_critical(&self) -> bool {
        (self.alpha - self.critical_alpha()).abs() <= ENDPOINT_TOL
    }

    /// Lower (open) endpoint of the admissible `s` interval.
    pub fn s_lower(&self) -> f64 {
        s_lower(self.alpha)
    }
}

pub fn critical_alpha(d: usize) -> f64 {
    (d as f64 + 2.0) / 4.0
}

/// `-alpha + (1 - alpha)_+`.
pub fn s_lower(alpha: f64) -> f64 {
    -alpha + (1.0 - alpha).max(0.0)
}

/// Checks `d >= 2`, `alpha in (1/2, (d+2)/4]` and `s in (-alpha + (1-alpha)_+, 0)`.
pub fn validate_regime(d: usize, alpha: f64, s: f64) -> Result<RegimeParams> {
    if d < 2 {
        return Err(Error::DimensionTooSmall(d));
    }
    let upper = critical_alpha(d);
    if !alpha.is_finite() || alpha <= 0.5 + ENDPOINT_TOL || alpha > upper + ENDPOINT_TOL {
        return Err(Error::AlphaOutOfRange { alpha, upper });
    }
    let lower = s_lower(alpha);
    if !s.is_finite() || s <= lower + ENDPOINT_TOL || s >= -ENDPOINT_TOL {
        return Err(Error::SOutOfRange { s, lower });
    }
    Ok(RegimeParams { d, alpha, s })
}

/// Exponents derived in closed form from a regime.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DerivedExponents {
    pub mu: f64,
    pub a: f64,
    pub b: f64,
    pub p: f64,
    pub q: f64,
    pub lambda: f64,
    /// Moment order; the random variables need `2n >= r_s`.
    pub r_s: f64,
    alpha: f64,
    s: f64,
}

impl DerivedExponents {
    /// Heat-flow moment scaling exponent
    /// `sigma = (s - (eta - 2 alpha rho - 2 alpha / a')) / (2 alpha)`;
    /// `a' = inf` drops the `2 alpha / a'` term.
    pub fn sigma(&self, rho: f64, a_prime: f64, eta: f64) -> f64 {
        let time_term = if a_prime.is_infinite() { 0.0 } else { 2.0 * self.alpha / a_prime };
        (self.s - (eta - 2.0 * self.alpha * rho - time_term)) / (2.0 * self.alpha)
    }

    /// Smallest even integer `2n >= r_s`.
    pub fn moment_order(&self) -> u32 {
        let n = (self.r_s / 2.0 - 1e-12).ceil().max(1.0) as u32;
        2 * n
    }
}

pub fn derive_exponents(regime: &RegimeParams) -> DerivedExponents {
    let d = regime.d as f64;
    let alpha = regime.alpha;
    let s = regime.s;
    let mu = (-s / alpha + 1.0 / (2.0 * alpha) - 1.0).max(0.0);
    let a = 4.0 * alpha / (2.0 * alpha * (mu + 1.0) - 1.0);
    let p = 2.0 * d / (2.0 * alpha * (1.0 - mu) - 1.0);
    let b = 4.0 * alpha / (1.0 - 2.0 * alpha * mu);
    let q = 2.0 * d / (d + 1.0 - 2.0 * alpha * (1.0 - mu));
    let lambda = 2.0 * d / (d + 1.0 - 2.0 * alpha * (mu + 1.0));
    DerivedExponents { mu, a, b, p, q, lambda, r_s: a.max(p), alpha, s }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum YCase {
    Y1,
    Y2,
    Y3,
    Y4,
}

impl std::fmt::Display for YCase {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let name = match self {
            YCase::Y1 => "Y1",
            YCase::Y2 => "Y2",
            YCase::Y3 => "Y3",
            YCase::Y4 => "Y4",
        };
        f.write_str(name)
    }
}

/// A solution-space case with every constituent mixed norm.
#[derive(Debug, Clone, PartialEq)]
pub struct YSpaceCase {
    pub case_id: YCase,
    pub norm_components: Vec<NormSpec>,
}

impl YSpaceCase {
    /// The leading `L^a_T L^p_x` component alone.
    pub fn leading_component(&self) -> &NormSpec {
        &self.norm_components[0]
    }
}

/// Which case of the four-branch table the regime falls in.
pub fn yspace_case_id(regime: &RegimeParams) -> YCase {
    let alpha = regime.alpha;
    let s = regime.s;
    if alpha > 1.0 {
        if s >= -1.0 {
            YCase::Y3
        } else {
            YCase::Y4
        }
    } else if alpha > 2.0 / 3.0 {
        if s >= -alpha / 2.0 {
            YCase::Y1
        } else {
            YCase::Y2
        }
    } else {
        YCase::Y1
    }
}

pub fn classify_yspace(regime: &RegimeParams) -> YSpaceCase {
    let ex = derive_exponents(regime);
    let alpha = regime.alpha;
    let (a, b, p, mu) = (ex.a, ex.b, ex.p, ex.mu);
    let lp = |t: f64, w: f64, r: f64| NormSpec::new(t, w, SpatialNorm::Lp(r));
    let bessel = |t: f64, w: f64, beta: f64, r: f64| NormSpec::new(t, w, SpatialNorm::InhomSobolev { beta, r });

    let mut comps = vec![lp(a, 0.0, p), lp(a, 0.0, ex.lambda), lp(a, 0.0, ex.q)];
    let case_id = yspace_case_id(regime);
    match case_id {
        YCase::Y1 => {
            comps.push(bessel(b, 0.0, 1.0 - alpha * (2.0 * mu + 1.0), p));
            let exponent = 8.0 * alpha / (1.0 - 2.0 * alpha * (mu - 1.0));
            let weight = (3.0 * mu + 1.0) / 4.0 - 1.0 / (8.0 * alpha);
            comps.push(bessel(exponent, weight, 0.5, p));
        }
        YCase::Y2 => {
            comps.push(bessel(a, 1.0 - 1.0 / (2.0 * alpha), 2.0 * alpha - 1.0, p));
        }
        YCase::Y3 | YCase::Y4 => {
            comps.push(lp(b, 0.0, p));
            comps.push(bessel(a, 1.0 / (2.0 * alpha), 1.0, p));
            if case_id == YCase::Y4 {
                comps.push(lp(a, 0.0, y4_extra_exponent(regime)));
            }
        }
    }
    YSpaceCase { case_id, norm_components: comps }
}

/// Spatial exponent `2d / (2 alpha (1 - mu) - 2s - 3)` of the extra `Y4` norm.
pub fn y4_extra_exponent(regime: &RegimeParams) -> f64 {
    let ex = derive_exponents(regime);
    2.0 * regime.d as f64 / (2.0 * regime.alpha * (1.0 - ex.mu) - 2.0 * regime.s - 3.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum XSpace {
    X1,
    X2,
}

/// Constituent norms of the auxiliary spaces `X1` and `X2`.
pub fn xspace_components(regime: &RegimeParams, which: XSpace) -> Vec<NormSpec> {
    let ex = derive_exponents(regime);
    let alpha = regime.alpha;
    match which {
        XSpace::X1 => {
            let t = 4.0 * alpha / (2.0 * alpha * (1.0 - ex.mu) - 1.0);
            vec![
                NormSpec::new(t, ex.mu, SpatialNorm::Lp(ex.p)),
                NormSpec::new(t, ex.mu, SpatialNorm::Lp(ex.q)),
            ]
        }
        XSpace::X2 => {
            let w = -regime.s / (2.0 * alpha);
            vec![
                NormSpec::new(f64::INFINITY, w, SpatialNorm::Lp(2.0)),
                NormSpec::new(2.0, w, SpatialNorm::InhomSobolev { beta: alpha, r: 2.0 }),
            ]
        }
    }
}

/// `sigma_n = (2^n - 2) / (2^n - 1)`.
pub fn ladder_sigma(n: u32) -> f64 {
    let p = 2f64.powi(n as i32);
    (p - 2.0) / (p - 1.0)
}

/// `eta_n = 2^{n+1} - 2`.
pub fn ladder_eta(n: u32) -> f64 {
    2f64.powi(n as i32 + 1) - 2.0
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LadderBranch {
    One,
    Two,
    Three,
}

impl LadderBranch {
    pub fn index(&self) -> u8 {
        match self {
            LadderBranch::One => 1,
            LadderBranch::Two => 2,
            LadderBranch::Three => 3,
        }
    }
}

/// A level `A_n^{(j)}` of the ladder and the `||w||^2` exponent it yields.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LadderStage {
    pub n: u32,
    pub branch: LadderBranch,
    pub w_slope: f64,
}

/// Terminal ladder class of a subcritical regime.
///
/// The sets with branch 1 and 2 tile the subcritical region; a branch-3 set
/// is the part of the region still waiting for the next level, so the
/// terminal class is always branch 1 or 2 and every branch-3 level the
/// regime passes through is listed in `intermediate`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecayLadderClass {
    pub n: u32,
    pub branch: LadderBranch,
    pub w_slope: f64,
    pub sigma_n: f64,
    pub eta_n: f64,
    pub intermediate: Vec<LadderStage>,
}

fn ladder_slope(d: usize, alpha: f64, s: f64, n: u32, branch: LadderBranch) -> f64 {
    let base = -(d as f64 + 2.0) / (2.0 * alpha) + 2.0;
    match branch {
        LadderBranch::One | LadderBranch::Two => base + 2.0 * s / alpha,
        LadderBranch::Three => (2f64.powi(n as i32 + 1) - 1.0) * base,
    }
}

/// Membership of `(alpha, s)` in `A_n^{(j)}`.
pub fn in_ladder_set(d: usize, alpha: f64, s: f64, n: u32, branch: LadderBranch) -> bool {
    let c = critical_alpha(d);
    let low = s_lower(alpha);
    let gap = alpha - c;
    let alpha_ok = alpha > 0.5 && alpha < c;
    if !alpha_ok || n == 0 {
        return false;
    }
    match branch {
        LadderBranch::One => {
            let lo = if n == 1 { 0.5 } else { ladder_sigma(n) * c };
            let hi = ladder_sigma(n + 1) * c;
            alpha > lo && alpha <= hi && s > low && s < ladder_eta(n - 1) * gap
        }
        LadderBranch::Two => {
            alpha > ladder_sigma(n + 1) * c && s >= ladder_eta(n) * gap && s < ladder_eta(n - 1) * gap
        }
        LadderBranch::Three => alpha > ladder_sigma(n + 1) * c && s > low && s < ladder_eta(n) * gap,
    }
}

pub fn classify_decay_ladder(regime: &RegimeParams) -> Result<DecayLadderClass> {
    if regime.is_critical() {
        return Err(Error::CriticalAlpha);
    }
    let (d, alpha, s) = (regime.d, regime.alpha, regime.s);
    let mut terminal = None;
    let mut intermediate = Vec::new();
    for n in 1..=LADDER_CAP {
        for branch in [LadderBranch::One, LadderBranch::Two] {
            if terminal.is_none() && in_ladder_set(d, alpha, s, n, branch) {
                terminal = Some((n, branch));
            }
        }
        if terminal.is_some() {
            break;
        }
        if in_ladder_set(d, alpha, s, n, LadderBranch::Three) {
            intermediate.push(LadderStage {
                n,
                branch: LadderBranch::Three,
                w_slope: ladder_slope(d, alpha, s, n, LadderBranch::Three),
            });
        }
    }
    let (n, branch) = terminal.ok_or_else(|| {
        Error::InvalidConfig(format!("regime (alpha = {alpha}, s = {s}) not resolved within {LADDER_CAP} ladder levels"))
    })?;
    Ok(DecayLadderClass {
        n,
        branch,
        w_slope: ladder_slope(d, alpha, s, n, branch),
        sigma_n: ladder_sigma(n),
        eta_n: ladder_eta(n),
        intermediate,
    })
}

/// Predicted log-log slopes of `||u(t)||^2` and `||w(t)||^2`.
pub fn decay_exponents(regime: &RegimeParams) -> (f64, f64) {
    let d = regime.d as f64;
    let alpha = regime.alpha;
    let s = regime.s;
    (s / alpha, -(d + 2.0) / (2.0 * alpha) + 2.0 + 2.0 * s / alpha)
}
