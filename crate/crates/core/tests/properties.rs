use gnse::checkpoint::{decode, encode, CheckpointHeader};
use gnse::decay::fit_decay;
use gnse::field::test_fields::{random_div_free, random_field};
use gnse::params::{
    classify_decay_ladder, critical_alpha, derive_exponents, s_lower, validate_regime, LadderBranch,
};
use gnse::randomization::{build_partition, randomize, synthesize_datum, Distribution, RandomSpec};
use gnse::semigroup::heat_propagate;
use gnse::stats::geomspace;
use gnse::Grid;
use proptest::prelude::*;

mod common;
use common::brute_force_ladder;

/// A point strictly inside the admissible region with `alpha < critical`.
fn subcritical(d: usize, fa: f64, fs: f64) -> (f64, f64) {
    let alpha = 0.5 + (critical_alpha(d) - 0.5) * fa;
    let lo = s_lower(alpha);
    (alpha, lo * (1.0 - fs))
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 256, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn exponent_identities(d in 2usize..=4, fa in 1e-6f64..=1.0, fs in 1e-6f64..0.999) {
        let alpha = 0.5 + (critical_alpha(d) - 0.5) * fa;
        let lo = s_lower(alpha);
        let s = lo * (1.0 - fs);
        let regime = validate_regime(d, alpha, s).unwrap();
        let e = derive_exponents(&regime);
        prop_assert!((1.0 / e.a + 1.0 / e.b - 0.5).abs() <= 1e-12);
        prop_assert!((1.0 / e.p + 1.0 / e.q - 0.5).abs() <= 1e-12);
        prop_assert!((2.0 * alpha / e.a + d as f64 / e.p - (2.0 * alpha - 1.0)).abs() <= 1e-12);
        prop_assert!(e.mu >= 0.0 && e.r_s >= e.a && e.r_s >= e.p);
        prop_assert!(e.moment_order() % 2 == 0 && e.moment_order() as f64 >= e.r_s - 1e-9);
    }

    #[test]
    fn ladder_matches_enumeration(d in 2usize..=3, fa in 1e-4f64..0.9999, fs in 1e-4f64..0.9999) {
        let (alpha, s) = subcritical(d, fa, fs);
        let regime = validate_regime(d, alpha, s).unwrap();
        let class = classify_decay_ladder(&regime).unwrap();
        let hits = brute_force_ladder(d, alpha, s, 40);
        prop_assert_eq!(hits.len(), 1, "{:?} at ({}, {})", hits, alpha, s);
        prop_assert_eq!((class.n, class.branch.index()), hits[0]);
        prop_assert!(class.branch != LadderBranch::Three);
        // branch-3 stages are the levels the regime passes on the way down
        prop_assert!(class.intermediate.iter().all(|st| st.n < class.n && st.branch == LadderBranch::Three));
        let direct = -(d as f64 + 2.0) / (2.0 * alpha) + 2.0 + 2.0 * s / alpha;
        prop_assert!((class.w_slope - direct).abs() <= 1e-12);
    }

    #[test]
    fn leray_is_an_orthogonal_projection(seed in any::<u64>(), d in 2usize..=3) {
        let g = Grid::new(d, if d == 2 { 32 } else { 8 }, 1).unwrap();
        let f = random_field(&g, seed, false);
        let p = f.leray_project();
        let scale = f.max_speed();
        prop_assert!(p.max_abs_diff(&p.leray_project()) <= 1e-12 * scale);
        prop_assert!(p.divergence_residual() <= 1e-12 * scale);
        let q = &f - &p;
        prop_assert!(p.inner(&q).abs() <= 1e-12 * f.l2_sq());
        prop_assert!(p.l2_sq() <= f.l2_sq() * (1.0 + 1e-14));
    }

    #[test]
    fn transform_round_trip(seed in any::<u64>(), m in 1usize..=3) {
        let g = Grid::new(2, 32, m).unwrap();
        let f = random_field(&g, seed, false);
        let back = gnse::SpectralVectorField::from_physical(&g, &f.to_physical()).unwrap();
        prop_assert!(back.max_abs_diff(&f) <= 1e-13 * f.max_speed());
    }

    #[test]
    fn multipliers_compose(seed in any::<u64>(), a in -2.0f64..2.0, b in -2.0f64..2.0) {
        let g = Grid::new(2, 32, 2).unwrap();
        let f = random_field(&g, seed, true);
        let two = f.fractional_power(a).fractional_power(b);
        let one = f.fractional_power(a + b);
        prop_assert!(two.max_abs_diff(&one) <= 1e-12 * one.max_speed().max(f.max_speed()));
        let bessel = f.bessel_power(a).bessel_power(-a);
        prop_assert!(bessel.max_abs_diff(&f) <= 1e-12 * f.max_speed());
    }

    #[test]
    fn heat_semigroup_and_dissipation(seed in any::<u64>(), alpha in 0.55f64..1.5, t1 in 0.0f64..0.5, t2 in 0.0f64..0.5) {
        let g = Grid::new(2, 32, 1).unwrap();
        let f = random_div_free(&g, seed);
        let split = heat_propagate(&heat_propagate(&f, t1, alpha).unwrap(), t2, alpha).unwrap();
        let whole = heat_propagate(&f, t1 + t2, alpha).unwrap();
        prop_assert!(split.max_abs_diff(&whole) <= 1e-13 * f.max_speed());
        let early = heat_propagate(&f, t1.min(t2), alpha).unwrap();
        let late = heat_propagate(&f, t1.max(t2), alpha).unwrap();
        prop_assert!(late.l2_sq() <= early.l2_sq() * (1.0 + 1e-14));
        prop_assert!(late.divergence_residual() <= 1e-12 * f.max_speed());
    }

    #[test]
    fn checkpoint_round_trip(seed in any::<u64>(), member in any::<u64>(), time in 0.0f64..1e3, alpha in 0.6f64..1.2) {
        let g = Grid::new(2, 16, 2).unwrap();
        let f = random_field(&g, seed, false);
        let header = CheckpointHeader { d: 2, n: 16, m: 2, alpha, s: -0.3, seed, member, time };
        let bytes = encode(&header, &f).unwrap();
        let (h, back, used) = decode(&bytes).unwrap();
        prop_assert_eq!(h, header);
        prop_assert_eq!(used, bytes.len());
        prop_assert_eq!(back.max_abs_diff(&f), 0.0);
    }

    #[test]
    fn fit_recovers_power_laws(slope in -3.0f64..1.0, amp in 1e-6f64..1e6, lo in 0.1f64..10.0) {
        let t = geomspace(lo, 100.0 * lo, 40);
        let v: Vec<f64> = t.iter().map(|&x| amp * x.powf(slope)).collect();
        let fit = fit_decay(&t, &v, (lo, 100.0 * lo), slope).unwrap();
        prop_assert!((fit.slope - slope).abs() <= 1e-10);
        prop_assert!((fit.intercept - amp.ln()).abs() <= 1e-8 * amp.ln().abs().max(1.0));
        prop_assert!(fit.points == 40);
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 16, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn partition_of_unity_and_member_streams(seed in any::<u64>(), m in 1usize..=4) {
        let regime = validate_regime(2, 1.0, -0.5).unwrap();
        let g = Grid::new(2, 32, m).unwrap();
        let datum = synthesize_datum(&regime, &g, 1.0);
        let partition = build_partition(&g);
        let unit = randomize(&datum, &partition, &RandomSpec::new(Distribution::Unit, seed), 0);
        prop_assert!(unit.max_abs_diff(&datum) <= 1e-14 * datum.max_speed());
        let spec = RandomSpec::new(Distribution::Rademacher, seed);
        let a = randomize(&datum, &partition, &spec, 3);
        let b = randomize(&datum, &partition, &spec, 3);
        prop_assert_eq!(a.max_abs_diff(&b), 0.0);
        prop_assert!(a.hermitian_defect() == 0.0);
        prop_assert!(a.divergence_residual() <= 1e-12 * datum.max_speed());
    }
}
