use gauss_quad::hermite::GaussHermite;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use std::collections::HashSet;
use std::num::NonZeroUsize;

use stratowave::combinatorics::*;
use stratowave::special::factorial;

/// Brute-force expansion along the first index, independent of the library.
fn matchings(idx: &[usize]) -> Vec<Vec<(usize, usize)>> {
    if idx.is_empty() {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for j in 1..idx.len() {
        let rest: Vec<usize> = idx[1..].iter().copied().filter(|&v| v != idx[j]).collect();
        for mut m in matchings(&rest) {
            m.insert(0, (idx[0], idx[j]));
            out.push(m);
        }
    }
    out
}

fn random_cov(n: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let a: Vec<Vec<f64>> = (0..n).map(|_| (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect();
    (0..n)
        .map(|i| (0..n).map(|j| (0..n).map(|k| a[i][k] * a[j][k]).sum()).collect())
        .collect()
}

/// Wick product `:Z_J:` by inversion of the product expansion:
/// `Σ_{partial matchings of J} (-1)^k ∏ C ∏ Z`.
fn wick(j: &[usize], z: &[f64], cov: &[Vec<f64>]) -> f64 {
    if j.is_empty() {
        return 1.0;
    }
    let first = j[0];
    let rest = &j[1..];
    let mut total = z[first] * wick(rest, z, cov);
    for (p, &m) in rest.iter().enumerate() {
        let mut smaller = rest.to_vec();
        smaller.remove(p);
        total -= cov[first][m] * wick(&smaller, z, cov);
    }
    total
}

#[test]
fn term_counts_match_enumeration() {
    for n in 1..=10 {
        let terms = enumerate_strato_terms(n).unwrap();
        assert_eq!(terms.len() as u64, involution_number(n));
        let counts = census_counts(n);
        assert_eq!(counts.iter().sum::<u64>(), involution_number(n));
        for (k, &c) in counts.iter().enumerate() {
            assert_eq!(terms.iter().filter(|t| t.k == k).count() as u64, c, "n = {n}, k = {k}");
            assert_eq!(c, term_count(n, k));
        }
        let unique: HashSet<_> = terms.iter().collect();
        assert_eq!(unique.len(), terms.len());
        assert!(terms.iter().all(|t| t.is_canonical() && t.is_partition()));
        assert!(terms.iter().all(|t| t.chaos_level() == t.unpaired.len()));
    }
    assert_eq!(
        (0..=10).map(involution_number).collect::<Vec<_>>(),
        vec![1, 1, 2, 4, 10, 26, 76, 232, 764, 2620, 9496]
    );
    assert!(matches!(
        enumerate_strato_terms(MAX_ENUMERATION + 1),
        Err(stratowave::Error::TooLarge { .. })
    ));
    assert!(enumerate_strato_terms(0).is_err());
}

#[test]
fn two_factor_expansion() {
    let terms = enumerate_strato_terms(2).unwrap();
    assert_eq!(terms.len(), 2);
    assert_eq!((terms[0].k, terms[0].unpaired.clone()), (0, vec![1, 2]));
    assert_eq!((terms[1].k, terms[1].pairs.clone()), (1, vec![(1, 2)]));
    let three = enumerate_strato_terms(3).unwrap();
    let singles: Vec<_> = three.iter().filter(|t| t.k == 1).map(|t| (t.unpaired[0], t.pairs[0])).collect();
    assert_eq!(singles, vec![(1, (2, 3)), (2, (1, 3)), (3, (1, 2))]);
}

#[test]
fn hermite_orthogonality() {
    let gh = GaussHermite::new(NonZeroUsize::new(40).unwrap());
    let sqrt_pi = std::f64::consts::PI.sqrt();
    for m in 0..=12 {
        for n in 0..=12 {
            let v = gh.integrate(|y| {
                let x = std::f64::consts::SQRT_2 * y;
                hermite_eval(m, x) * hermite_eval(n, x)
            }) / sqrt_pi;
            let want = if m == n { factorial(n) } else { 0.0 };
            let scale = (factorial(m) * factorial(n)).sqrt();
            assert!((v - want).abs() < 1e-10 * scale, "E[He_{m} He_{n}] = {v}");
        }
    }
}

#[test]
fn powers_expand_into_hermite_polynomials() {
    // With every factor equal to one standard normal, the expansion reads
    // x^n = Σ_terms He_{n-2k}(x).
    for n in 1..=9 {
        let terms = enumerate_strato_terms(n).unwrap();
        for x in [-2.3, -0.4, 0.0, 0.7, 1.9] {
            let sum: f64 = terms.iter().map(|t| hermite_eval(t.chaos_level(), x)).sum();
            let xn = f64::powi(x, n as i32);
            assert!((sum - xn).abs() < 1e-10 * (1.0 + xn.abs()), "n = {n}, x = {x}");
        }
    }
}

#[test]
fn product_formula_holds_pointwise_and_in_mean() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let n = 5;
    let terms = enumerate_strato_terms(n).unwrap();
    // correlated Gaussians from three underlying atoms
    let load: Vec<[f64; 3]> = (0..n).map(|_| [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)]).collect();
    let cov: Vec<Vec<f64>> = (0..n)
        .map(|i| (0..n).map(|j| (0..3).map(|k| load[i][k] * load[j][k]).sum()).collect())
        .collect();
    let gamma = |l: usize, m: usize| cov[l - 1][m - 1];

    let mut lhs_mean = 0.0;
    let mut wick_mean = vec![0.0; terms.len()];
    let samples = 40_000;
    for _ in 0..samples {
        let g: [f64; 3] = [rng.sample(StandardNormal), rng.sample(StandardNormal), rng.sample(StandardNormal)];
        let z: Vec<f64> = load.iter().map(|l| l[0] * g[0] + l[1] * g[1] + l[2] * g[2]).collect();
        let prod: f64 = z.iter().product();
        let mut rhs = 0.0;
        for (i, t) in terms.iter().enumerate() {
            let j: Vec<usize> = t.unpaired.iter().map(|&u| u - 1).collect();
            let w = wick(&j, &z, &cov);
            rhs += partial_pairing_weight(t, gamma, |_| 1.0) * w;
            wick_mean[i] += w / samples as f64;
        }
        assert!((rhs - prod).abs() < 1e-9 * (1.0 + prod.abs()));
        lhs_mean += prod / samples as f64;
    }
    // odd n: every term has a nonempty J, so the mean is zero
    assert!(lhs_mean.abs() < 0.2, "{lhs_mean}");
    for (t, m) in terms.iter().zip(&wick_mean) {
        assert!(m.abs() < 0.25, "E :Z_J: = {m} for {t:?}");
    }
}

#[test]
fn isserlis_matches_monte_carlo() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let n = 4;
    let load: Vec<[f64; 2]> = (0..n).map(|_| [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)]).collect();
    let cov: Vec<Vec<f64>> = (0..n)
        .map(|i| (0..n).map(|j| load[i][0] * load[j][0] + load[i][1] * load[j][1]).collect())
        .collect();
    let want = isserlis_expectation(&cov).unwrap();
    let (mut s, mut s2) = (0.0, 0.0);
    let m = 400_000;
    for _ in 0..m {
        let g: [f64; 2] = [rng.sample(StandardNormal), rng.sample(StandardNormal)];
        let p: f64 = load.iter().map(|l| l[0] * g[0] + l[1] * g[1]).product();
        s += p;
        s2 += p * p;
    }
    let mean = s / m as f64;
    let se = ((s2 / m as f64 - mean * mean) / m as f64).sqrt();
    assert!((mean - want).abs() < 4.0 * se, "{mean} ± {se} vs {want}");
}

#[test]
fn hafnian_of_ones_counts_matchings() {
    for n in [2usize, 4, 6, 8, 10, 12, 14] {
        let m = SymMatrix::from_rows(&vec![vec![1.0; n]; n]).unwrap();
        assert_eq!(hafnian(&m), stratowave::special::double_factorial_odd(n / 2) as f64);
    }
    assert_eq!(hafnian(&SymMatrix::zeros(3)), 0.0);
    assert_eq!(hafnian(&SymMatrix::zeros(0)), 1.0);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn pair_partitions_are_canonical_and_distinct(k in 0usize..6, offset in 0usize..5) {
        let idx: Vec<usize> = (1..=2 * k).map(|i| i + offset).collect();
        let parts = enumerate_pair_partitions(&idx).unwrap();
        prop_assert_eq!(parts.len() as u64, stratowave::special::double_factorial_odd(k));
        let unique: HashSet<_> = parts.iter().collect();
        prop_assert_eq!(unique.len(), parts.len());
        let brute: HashSet<Vec<(usize, usize)>> = matchings(&idx).into_iter().collect();
        for p in &parts {
            prop_assert!(p.pairs.iter().all(|&(l, m)| l < m));
            prop_assert!(p.pairs.windows(2).all(|w| w[0].0 < w[1].0));
            prop_assert!(brute.contains(&p.pairs));
        }
    }

    #[test]
    fn isserlis_matches_brute_force(seed in 0u64..10_000, half in 1usize..6) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = 2 * half;
        let cov = random_cov(n, &mut rng);
        let idx: Vec<usize> = (0..n).collect();
        let brute: f64 = matchings(&idx)
            .iter()
            .map(|m| m.iter().map(|&(a, b)| cov[a][b]).product::<f64>())
            .sum();
        let got = isserlis_expectation(&cov).unwrap();
        prop_assert!((got - brute).abs() <= 1e-10 * (1.0 + brute.abs()), "{} {}", got, brute);
        let odd = random_cov(n - 1, &mut rng);
        prop_assert_eq!(isserlis_expectation(&odd).unwrap(), 0.0);
    }

    #[test]
    fn product_expansion_inverts_wick(seed in 0u64..10_000, n in 1usize..7) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let cov = random_cov(n, &mut rng);
        let z: Vec<f64> = (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let terms = enumerate_strato_terms(n).unwrap();
        let rhs: f64 = terms
            .iter()
            .map(|t| {
                let j: Vec<usize> = t.unpaired.iter().map(|&u| u - 1).collect();
                partial_pairing_weight(t, |l, m| cov[l - 1][m - 1], |_| 1.0) * wick(&j, &z, &cov)
            })
            .sum();
        let prod: f64 = z.iter().product();
        prop_assert!((rhs - prod).abs() <= 1e-9 * (1.0 + prod.abs()));
    }
}
