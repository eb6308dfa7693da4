use std::f64::consts::PI;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use concmark::chain::{stationary_measure, BirthDeathChain, Observable};
use concmark::constants::spectral_gap_exact;
use concmark::oracles::{chi_square_tail, exact_tail_discrete};

/// erfc by its power series below 2 and a Lentz continued fraction above.
fn erfc(z: f64) -> f64 {
    if z < 2.0 {
        // erf(z) = 2/sqrt(pi) e^{-z^2} sum 2^n z^{2n+1} / (2n+1)!!
        let mut term = z;
        let mut sum = z;
        let mut n = 0.0;
        while term > 1e-18 * sum {
            n += 1.0;
            term *= 2.0 * z * z / (2.0 * n + 1.0);
            sum += term;
        }
        1.0 - 2.0 / PI.sqrt() * (-z * z).exp() * sum
    } else {
        // erfc(z) = e^{-z^2}/sqrt(pi) / (z + (1/2)/(z + 1/(z + (3/2)/(z + ...))))
        let tiny = 1e-300;
        let mut f = z;
        let mut c = z;
        let mut d = 0.0;
        for k in 1..500 {
            let a = k as f64 / 2.0;
            d = z + a * d;
            d = if d.abs() < tiny { tiny } else { d };
            c = z + a / c;
            c = if c.abs() < tiny { tiny } else { c };
            d = 1.0 / d;
            let delta = c * d;
            f *= delta;
            if (delta - 1.0).abs() < 1e-16 {
                break;
            }
        }
        (-z * z).exp() / (PI.sqrt() * f)
    }
}

/// `P(chi^2_d > t)` from the finite recursions for integer and half-integer
/// shape.
fn chi_square_survival(d: u32, t: f64) -> f64 {
    let x = t / 2.0;
    if d.is_multiple_of(2) {
        let mut term = 1.0;
        let mut sum = 1.0;
        for j in 1..d / 2 {
            term *= x / j as f64;
            sum += term;
        }
        (-x).exp() * sum
    } else {
        let mut gamma = PI.sqrt() / 2.0;
        let mut sum = 0.0;
        for j in 0..(d - 1) / 2 {
            sum += x.powf(j as f64 + 0.5) / gamma;
            gamma *= j as f64 + 1.5;
        }
        erfc(x.sqrt()) + (-x).exp() * sum
    }
}

fn chi_square_density(d: u32, t: f64) -> f64 {
    let s = d as f64 / 2.0;
    let mut gamma = if d.is_multiple_of(2) { 1.0 } else { PI.sqrt() };
    let mut k = if d.is_multiple_of(2) { 1.0 } else { 0.5 };
    while k < s {
        gamma *= k;
        k += 1.0;
    }
    (t.ln() * (s - 1.0) - t / 2.0).exp() / (2f64.powf(s) * gamma)
}

#[test]
fn chi_square_matches_recursions() {
    let mut worst = 0.0f64;
    for d in 1..=40u32 {
        for k in 0..=100 {
            let r = 4.0 * d as f64 * k as f64 / 100.0;
            let ours = chi_square_tail(d, r).unwrap();
            let reference = chi_square_survival(d, d as f64 + r);
            worst = worst.max((ours - reference).abs() / reference);
        }
    }
    assert!(worst < 1e-11, "relative error {worst:e}");
}

#[test]
fn chi_square_derivative_is_the_density() {
    for d in [1u32, 2, 5, 20] {
        for r in [0.3, 1.0, 4.0, 10.0] {
            let h = 1e-4;
            let slope = (chi_square_tail(d, r - h).unwrap() - chi_square_tail(d, r + h).unwrap())
                / (2.0 * h);
            let density = chi_square_density(d, d as f64 + r);
            assert!(
                (slope - density).abs() <= 1e-6 * density,
                "d = {d}, r = {r}"
            );
        }
    }
}

#[test]
fn chi_square_known_values() {
    assert!((chi_square_tail(2, 2.0).unwrap() - (-2.0f64).exp()).abs() < 1e-15);
    assert!((chi_square_tail(4, 0.0).unwrap() - 3.0 * (-2.0f64).exp()).abs() < 1e-15);
    assert!((chi_square_tail(1, 2.841458820694124).unwrap() - 0.05).abs() < 1e-12);
    assert!((chi_square_tail(3, -3.0).unwrap() - 1.0).abs() < 1e-15);
}

#[test]
fn poisson_tail_matches_direct_sum() {
    for rate in [0.5, 4.0, 25.0] {
        let chain = BirthDeathChain::mm_infinity(rate).unwrap();
        let mu = stationary_measure(&chain, chain.truncation_hint).unwrap();
        let mut pmf = vec![(-rate).exp()];
        for k in 1..=400 {
            let last = pmf[k - 1];
            pmf.push(last * rate / k as f64);
        }
        // levels off the lattice, so the computed mean cannot flip a tie
        for r in [0.05, 0.3, 1.2, 3.1, 7.7, 20.2] {
            let direct: f64 = pmf
                .iter()
                .enumerate()
                .filter(|(k, _)| *k as f64 - rate > r)
                .map(|(_, p)| p)
                .sum();
            let tail = exact_tail_discrete(&mu, &Observable::Identity, r).unwrap();
            assert!(
                (tail.value - direct).abs() <= 1e-13 + 1e-12 * direct,
                "rate {rate}, r {r}"
            );
            assert!(tail.widening < 1e-30);
        }
    }
}

#[test]
fn reflected_geometric_gap_closed_form() {
    // {0..N} with birth p, death 1 has eigenvalues 1 + p - 2 sqrt(p) cos(k pi / (N+1))
    for p in [0.1f64, 0.25, 0.5, 0.9] {
        for n in [1usize, 2, 10, 100, 400, 2000] {
            let chain = BirthDeathChain::geometric_n(p, 0).unwrap();
            let gap = spectral_gap_exact(&chain, n).unwrap().value;
            let closed = 1.0 + p - 2.0 * p.sqrt() * (PI / (n as f64 + 1.0)).cos();
            assert!(
                (gap - closed).abs() <= 1e-12 * closed,
                "p {p}, N {n}: {gap} vs {closed}"
            );
        }
    }
}

#[test]
fn gap_matches_dense_eigensolve() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..40 {
        let n = rng.random_range(1..40usize);
        let birth: Vec<f64> = (0..=n)
            .map(|x| {
                if x < n {
                    rng.random_range(0.05..5.0)
                } else {
                    0.0
                }
            })
            .collect();
        let death: Vec<f64> = (0..=n)
            .map(|x| {
                if x > 0 {
                    rng.random_range(0.05..5.0)
                } else {
                    0.0
                }
            })
            .collect();
        let chain = BirthDeathChain::tabulated(birth.clone(), death.clone()).unwrap();
        let gap = spectral_gap_exact(&chain, n).unwrap().value;

        // -L symmetrized by diag(sqrt(mu))
        let mut m = DMatrix::zeros(n + 1, n + 1);
        for x in 0..n {
            let off = -(birth[x] * death[x + 1]).sqrt();
            m[(x, x + 1)] = off;
            m[(x + 1, x)] = off;
            m[(x, x)] += birth[x];
            m[(x + 1, x + 1)] += death[x + 1];
        }
        let mut eig: Vec<f64> = m.symmetric_eigenvalues().iter().copied().collect();
        eig.sort_by(f64::total_cmp);
        assert!(eig[0].abs() < 1e-10);
        assert!(
            (gap - eig[1]).abs() <= 1e-9 * eig[1].max(1e-3),
            "N {n}: {gap} vs {}",
            eig[1]
        );
    }
}
