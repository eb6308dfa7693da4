use proptest::prelude::*;

use concmark::bounds::{
    beckner_envelope, beckner_restriction, covariance_envelope, entropic_envelope,
    log_laplace_chernoff, super_exp_exponent, ConcentrationEnvelope,
};
use concmark::chain::{
    phi_entropy_of, semigroup_evolve, stationary_measure, BirthDeathChain, Observable,
    PhiEntropyKind,
};
use concmark::constants::{miclo_delta, spectral_gap_exact};
use concmark::grid::{fmt_float, RGrid};
use concmark::lyapunov::{recipe_birth_death, BirthDeathCase};
use concmark::oracles::{exact_tail_discrete, fisher_variational_check};
use concmark::sim::empirical::clopper_pearson;

fn positive() -> impl Strategy<Value = f64> {
    (-4.0f64..4.0).prop_map(f64::exp)
}

fn envelope() -> impl Strategy<Value = ConcentrationEnvelope> {
    prop_oneof![
        (positive(), positive(), positive())
            .prop_map(|(r, a, b)| entropic_envelope(r, a, b).unwrap()),
        (positive(), positive(), positive())
            .prop_map(|(r, a, b)| covariance_envelope(r, a, b).unwrap()),
        (1.01f64..2.0, positive(), positive(), 0.001f64..1.0).prop_map(|(p, a, b, s)| {
            beckner_envelope(s * beckner_restriction(p, a, b), p, a, b).unwrap()
        }),
    ]
}

fn chain() -> impl Strategy<Value = BirthDeathChain> {
    prop_oneof![
        (0.1f64..0.85, 0u32..3).prop_map(|(p, n)| BirthDeathChain::geometric_n(p, n).unwrap()),
        (0.2f64..30.0).prop_map(|rate| BirthDeathChain::mm_infinity(rate).unwrap()),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn envelope_is_a_decreasing_probability(env in envelope(), r in 0.0f64..1e3, dr in 0.0f64..10.0) {
        let (b0, b1) = (env.bound(r), env.bound(r + dr));
        prop_assert!(b0 > 0.0 && b0 <= 1.0);
        prop_assert!(b1 <= b0);
        prop_assert!(env.exponent(r) >= 0.0);
    }

    #[test]
    fn envelope_is_continuous_at_the_window(env in envelope()) {
        let r = env.r_max.unwrap();
        let (below, above) = (env.exponent(r * (1.0 - 1e-9)), env.exponent(r * (1.0 + 1e-9)));
        prop_assert!((below - above).abs() <= 1e-7 * above);
    }

    #[test]
    fn chernoff_dominates_the_envelope(rho0 in positive(), a in positive(), b in positive(), r in 0.01f64..200.0) {
        let env = entropic_envelope(rho0, a, b).unwrap();
        let opt = log_laplace_chernoff(rho0, a, b, r).unwrap();
        let e = env.exponent(r);
        prop_assert!(opt.exponent >= e * (1.0 - 1e-9), "{} < {}", opt.exponent, e);
        prop_assert!(opt.lambda > 0.0 && opt.lambda <= 1.0 / a.sqrt());
    }

    #[test]
    fn quartic_term_slows_the_decay(rho0 in positive(), a in positive(), b in positive(), r in 0.01f64..1e3) {
        let with = super_exp_exponent(rho0, a, b, r).unwrap().exponent;
        let without = super_exp_exponent(rho0, 0.0, b, r).unwrap().exponent;
        let further = super_exp_exponent(rho0, a, b, r * 1.5).unwrap().exponent;
        prop_assert!(with >= 0.0);
        prop_assert!(with <= without * (1.0 + 1e-12));
        prop_assert!(further >= with);
    }

    #[test]
    fn stationary_measure_is_reversible(c in chain()) {
        let n = c.truncation_hint.min(300);
        let mu = stationary_measure(&c, n).unwrap();
        let w = mu.weights();
        prop_assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        for x in 0..n {
            let (up, down) = (w[x] * c.birth(x).unwrap(), w[x + 1] * c.death(x + 1).unwrap());
            prop_assert!((up - down).abs() <= 1e-12 * up.max(down).max(1e-300));
        }
    }

    #[test]
    fn miclo_bracket_holds(p in 0.05f64..0.95) {
        let c = BirthDeathChain::geometric_n(p, 0).unwrap();
        let m = miclo_delta(&c, 300).unwrap();
        let limit = (1.0 - p.sqrt()).powi(2);
        prop_assert!(m.gap_lower <= limit && limit <= m.gap_upper);
        let gap = spectral_gap_exact(&c, 300).unwrap().value;
        prop_assert!(m.gap_lower <= gap);
    }

    #[test]
    fn semigroup_is_a_contraction(c in chain(), t in 0.0f64..3.0, seed in 0u64..1000) {
        let n = 60;
        let c = c.truncate(n).unwrap();
        let mu = stationary_measure(&c, n).unwrap();
        let h0: Vec<f64> = (0..=n).map(|x| 1.0 + ((x as u64 * 2654435761 + seed) % 97) as f64 / 10.0).collect();
        let ht = semigroup_evolve(&c, &h0, t).unwrap();
        let (m0, mt) = (mu.mean_of(&h0), mu.mean_of(&ht));
        prop_assert!((m0 - mt).abs() <= 1e-9 * m0);
        let lo = h0.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = h0.iter().copied().fold(0.0, f64::max);
        prop_assert!(ht.iter().all(|v| *v >= lo * (1.0 - 1e-9) && *v <= hi * (1.0 + 1e-9)));
        let e0 = phi_entropy_of(&mu, &h0, PhiEntropyKind::XLogX).unwrap();
        let et = phi_entropy_of(&mu, &ht, PhiEntropyKind::XLogX).unwrap();
        prop_assert!(et <= e0 + 1e-10);
    }

    #[test]
    fn exact_tail_decreases(c in chain(), r in 0.0f64..20.0, dr in 0.0f64..5.0) {
        let mu = stationary_measure(&c, c.truncation_hint).unwrap();
        let t0 = exact_tail_discrete(&mu, &Observable::Identity, r).unwrap();
        let t1 = exact_tail_discrete(&mu, &Observable::Identity, r + dr).unwrap();
        prop_assert!(t1.value <= t0.value);
        prop_assert!(t0.upper() <= 1.0);
    }

    #[test]
    fn drift_integral_is_below_the_information(p in 0.15f64..0.8, n in 0u32..3, s in 0.02f64..0.95) {
        let c = BirthDeathChain::geometric_n(p, n).unwrap();
        let recipe = recipe_birth_death(&c, &BirthDeathCase::GeometricN { p, n, x0: None }).unwrap();
        let mu = stationary_measure(&c, c.truncation_hint).unwrap();
        let lambda = s * 2.0 / recipe.a.sqrt();
        let check = fisher_variational_check(&c, &mu, &Observable::Identity, lambda, &recipe.v).unwrap();
        prop_assert!(check.ok, "{check:?}");
    }

    #[test]
    fn clopper_pearson_brackets_the_frequency(n in 1u32..5000, frac in 0.0f64..=1.0) {
        let k = (frac * n as f64).floor();
        let (lo, hi) = clopper_pearson(k, n as f64, 0.99);
        let f = k / n as f64;
        prop_assert!(0.0 <= lo && lo <= f && f <= hi && hi <= 1.0);
    }

    #[test]
    fn grid_text_round_trips(r0 in 0.0f64..10.0, width in 0.01f64..100.0, steps in 2usize..500) {
        let g = RGrid::new(r0, r0 + width, steps).unwrap();
        let text = format!("{}:{}:{}", fmt_float(g.r0), fmt_float(g.r1), g.steps);
        prop_assert_eq!(text.parse::<RGrid>().unwrap(), g);
        let pts = g.points();
        prop_assert_eq!(pts.len(), steps);
        prop_assert!(pts.windows(2).all(|w| w[1] > w[0]));
    }
}
