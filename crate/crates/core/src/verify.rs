//! A quick invariant suite, run by `gnse verify`: a few seconds of exact
//! checks that catch a broken build or platform before a long run.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::checkpoint::{decode, encode, CheckpointHeader};
use crate::field::test_fields::{random_div_free, random_field};
use crate::field::SpectralVectorField;
use crate::grid::Grid;
use crate::mild::{picard_from_flow, PicardConfig};
use crate::nonlinearity::bilinear_b;
use crate::params::{critical_alpha, derive_exponents, s_lower, validate_regime};
use crate::randomization::{build_partition, randomize, synthesize_datum, Distribution, RandomSpec};
use crate::semigroup::{heat_propagate, HeatFlow};

#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub value: f64,
    pub tolerance: f64,
}

fn check(name: &'static str, value: f64, tolerance: f64) -> Check {
    Check { name, passed: value.is_finite() && value <= tolerance, value, tolerance }
}

fn exponent_identities(samples: usize) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst: f64 = 0.0;
    for k in 0..samples {
        let d = 2 + k % 2;
        let alpha = 0.5 + (critical_alpha(d) - 0.5) * rng.random_range(1e-6..1.0);
        let lo = s_lower(alpha);
        let s = lo + (-lo) * rng.random_range(1e-6..1.0 - 1e-6);
        let Ok(regime) = validate_regime(d, alpha, s) else { continue };
        let e = derive_exponents(&regime);
        let ident = [
            1.0 / e.a + 1.0 / e.b - 0.5,
            1.0 / e.p + 1.0 / e.q - 0.5,
            2.0 * alpha / e.a + d as f64 / e.p - (2.0 * alpha - 1.0),
        ];
        worst = ident.iter().fold(worst, |m, v| m.max(v.abs()));
    }
    worst
}

fn taylor_green(grid: &Grid) -> SpectralVectorField {
    let mut samples = vec![vec![0.0; grid.len()]; 2];
    for i in 0..grid.len() {
        let x = grid.point(i);
        samples[0][i] = x[0].sin() * x[1].cos();
        samples[1][i] = -x[0].cos() * x[1].sin();
    }
    SpectralVectorField::from_physical(grid, &samples).expect("sizes match")
}

/// Runs every check; none of them panics on failure.
pub fn run_all() -> Vec<Check> {
    let mut out = Vec::new();
    let g = Grid::new(2, 64, 1).expect("valid grid");

    let f = random_field(&g, 1, false);
    let back = SpectralVectorField::from_physical(&g, &f.to_physical()).expect("sizes match");
    out.push(check("transform round trip", (&back - &f).l2_sq().sqrt() / f.l2_sq().sqrt(), 1e-12));

    let p = f.leray_project();
    out.push(check("leray idempotence", p.max_abs_diff(&p.leray_project()), 1e-12));
    out.push(check("leray divergence residual", p.divergence_residual(), 1e-12));
    let gradient_part = &f - &p;
    out.push(check("leray annihilates gradients", gradient_part.leray_project().max_speed(), 1e-12));

    let u = random_div_free(&g, 2);
    let v = random_div_free(&g, 3);
    let scale = u.l2_sq().sqrt() * v.l2_sq() * v.hom_sobolev_sq(1.0).sqrt() / g.volume().sqrt();
    let skew = bilinear_b(&u, &v).map(|b| b.inner(&v).abs() / scale).unwrap_or(f64::NAN);
    out.push(check("advection skew-symmetry", skew, 1e-11));
    let tg = taylor_green(&g);
    out.push(check("taylor-green self-interaction", bilinear_b(&tg, &tg).map(|b| b.max_speed()).unwrap_or(f64::NAN), 1e-12));

    out.push(check("exponent identities", exponent_identities(1000), 1e-12));

    let semigroup = (|| -> crate::Result<f64> {
        let a = heat_propagate(&heat_propagate(&u, 0.3, 0.8)?, 0.5, 0.8)?;
        let b = heat_propagate(&u, 0.8, 0.8)?;
        Ok(a.max_abs_diff(&b) / u.max_speed())
    })();
    out.push(check("heat semigroup law", semigroup.unwrap_or(f64::NAN), 1e-13));

    let regime = validate_regime(2, 1.0, -0.5).expect("reference regime");
    let small = Grid::new(2, 32, 2).expect("valid grid");
    let datum = synthesize_datum(&regime, &small, 1.0);
    let partition = build_partition(&small);
    let unit = randomize(&datum, &partition, &RandomSpec::new(Distribution::Unit, 0), 0);
    out.push(check("partition of unity", unit.max_abs_diff(&datum) / datum.max_speed(), 1e-14));

    let header = CheckpointHeader { d: 2, n: 32, m: 2, alpha: 1.0, s: -0.5, seed: 0, member: 0, time: 0.5 };
    let roundtrip = encode(&header, &datum)
        .and_then(|bytes| {
            let (h, f, _) = decode(&bytes)?;
            Ok(if h == header && encode(&h, &f)? == bytes { 0.0 } else { 1.0 })
        })
        .unwrap_or(f64::NAN);
    out.push(check("checkpoint round trip", roundtrip, 0.0));

    let gaussian = randomize(&datum, &partition, &RandomSpec::new(Distribution::Gaussian, 0), 0);
    let picard = picard_from_flow(&HeatFlow::new(&gaussian * 0.02, 1.0), &PicardConfig::new(&regime, 0.05, 17))
        .map(|(_, r)| if r.converged { r.final_residual() } else { f64::INFINITY })
        .unwrap_or(f64::NAN);
    out.push(check("picard converges", picard, 1e-8));
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn suite_passes() {
        for c in run_all() {
            assert!(c.passed, "{c:?}");
        }
    }

    #[test]
    fn failing_values_are_reported() {
        assert!(!check("x", f64::NAN, 1.0).passed);
        assert!(!check("x", 2.0, 1.0).passed);
        assert!(check("x", 0.0, 0.0).passed);
    }
}
