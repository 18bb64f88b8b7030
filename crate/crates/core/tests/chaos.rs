use std::f64::consts::PI;

use stratowave::chaos::*;
use stratowave::picard::{apex_samples, GridSpec, PicardMoments};
use stratowave::special::{factorial, gamma};
use stratowave::stats::Accumulator;
use stratowave::{Dim, SpectralMeasure};

fn simpson_weights(n: usize) -> impl Fn(usize) -> f64 {
    move |i| if i == 0 || i == n { 1.0 } else if i % 2 == 1 { 4.0 } else { 2.0 }
}

/// `∫_{g_1 + g_2 <= t} sin(a g_1)/a · sin(b g_2)/b`, by Simpson in g_1 of the
/// closed-form inner integral `(1 - cos(b (t - g_1)))/b²`.
fn two_gap_oracle(t: f64, a: f64, b: f64) -> f64 {
    let n = 20_000;
    let h = t / n as f64;
    let w = simpson_weights(n);
    (0..=n)
        .map(|i| {
            let g = i as f64 * h;
            let s = if a == 0.0 { g } else { (a * g).sin() / a };
            let inner = if b == 0.0 { 0.5 * (t - g).powi(2) } else { (1.0 - (b * (t - g)).cos()) / (b * b) };
            w(i) * s * inner
        })
        .sum::<f64>()
        * h
        / 3.0
}

#[test]
fn first_order_kernel_is_plane_wave_response() {
    // f_1 = G(t - s, x - y) on (0, t): 𝓕 = e^{-iξx} (1 - cos(t|ξ|))/|ξ|².
    for (t, xi, x, eps) in [(1.0, [PI, 0.0], [0.3, 0.0], 0.0), (2.0, [0.5, -1.2], [1.0, 2.0], 0.1)] {
        let q = KernelQuery::new(t, x, vec![xi], eps);
        let v = fourier_fn(&q).unwrap();
        let a2 = xi[0] * xi[0] + xi[1] * xi[1];
        let modulus = (1.0 - (t * a2.sqrt()).cos()) / a2 * (-0.5 * eps * a2).exp();
        assert!((v.norm() - modulus).abs() < 1e-12, "{} {modulus}", v.norm());
        let phase = -(xi[0] * x[0] + xi[1] * x[1]);
        assert!((v.arg() - phase.sin().atan2(phase.cos())).abs() < 1e-10);
    }
    assert!(fourier_fn(&KernelQuery::new(1.0, [0.0; 2], vec![], 0.0)).is_err());
}

#[test]
fn two_gap_simplex_matches_quadrature() {
    for (t, a, b) in [(1.0, 0.0, 0.0), (1.0, PI, 0.0), (1.5, 2.0, 0.7), (3.0, 5.0, 5.0), (0.4, 30.0, 1.0)] {
        let got = simplex_gap_integral(t, &[a, b]).unwrap();
        let want = two_gap_oracle(t, a, b);
        assert!((got - want).abs() < 1e-10 * (1.0 + want.abs()), "t={t} a={a} b={b}: {got} {want}");
        let swapped = simplex_gap_integral(t, &[b, a]).unwrap();
        assert!((got - swapped).abs() < 1e-12 * (1.0 + got.abs()));
    }
    // all frequencies zero: t^{2n}/(2n)!
    for n in 1..=6 {
        let v = simplex_gap_integral(2.0, &vec![0.0; n]).unwrap();
        let want = 2f64.powi(2 * n as i32) / factorial(2 * n);
        assert!((v - want).abs() < 1e-12 * want);
    }
}

#[test]
fn order_one_norm_matches_picard_variance() {
    let m = SpectralMeasure::atom_fixture();
    let e = kernel_norm_sq(1, 1.0, [0.0, 0.0], &m, 0.0, &ChaosOptions::default()).unwrap();
    assert_eq!(e.stderr, 0.0);
    assert!((e.value - 4.0 / PI.powi(4)).abs() < 1e-10);
}

#[test]
fn order_two_norm_matches_picard_second_chaos() {
    // H_2 = v_2 - v_1 is the second chaos plus the n = 2 mean correction:
    // Var H_2 = 2! ‖f̃_2‖² and E H_2 = (π² - 4)/(2π⁴).
    let m = SpectralMeasure::atom_fixture();
    let t = 1.0;
    let norm2 = kernel_norm_sq(2, t, [0.0, 0.0], &m, 0.0, &ChaosOptions::default()).unwrap().value;
    let spec = GridSpec::new(Dim::One, t, [0.0, 0.0], 32, 65);
    let mut cfg = PicardMoments::new(3000, 77);
    cfg.n_iters = 2;
    let rows = apex_samples(&m, 0.0, &spec, &cfg).unwrap();
    let h2: Vec<f64> = rows.iter().map(|r| r[2] - r[1]).collect();
    let mean: Accumulator = h2.iter().copied().collect();
    let want_mean = (PI * PI - 4.0) / (2.0 * PI.powi(4));
    assert!((mean.mean - want_mean).abs() < 4.0 * mean.stderr() + 1e-3 * want_mean, "{} vs {want_mean}", mean.mean);
    let centred: Accumulator = h2.iter().map(|v| (v - want_mean).powi(2)).collect();
    let want_var = 2.0 * norm2;
    assert!(
        (centred.mean - want_var).abs() < 4.0 * centred.stderr() + 1e-3 * want_var,
        "{} ± {} vs {want_var}",
        centred.mean,
        centred.stderr()
    );
}

#[test]
fn norm_is_invariant_under_atom_order_and_translation() {
    let a = SpectralMeasure::atoms(Dim::Two, &[([1.0, 0.5], 0.3), ([-1.0, -0.5], 0.3), ([0.0, 2.0], 0.2), ([0.0, -2.0], 0.2)]).unwrap();
    let b = SpectralMeasure::atoms(Dim::Two, &[([0.0, -2.0], 0.2), ([-1.0, -0.5], 0.3), ([0.0, 2.0], 0.2), ([1.0, 0.5], 0.3)]).unwrap();
    let opts = ChaosOptions::default();
    for n in 1..=3 {
        let x = kernel_norm_sq(n, 1.2, [0.0, 0.0], &a, 0.05, &opts).unwrap().value;
        let y = kernel_norm_sq(n, 1.2, [0.7, -3.0], &b, 0.05, &opts).unwrap().value;
        assert!((x - y).abs() < 1e-12 * x, "n = {n}: {x} {y}");
    }
}

#[test]
fn sampled_symmetrization_agrees_with_exact() {
    let m = SpectralMeasure::symmetric_atoms(Dim::One, &[([1.0, 0.0], 0.6), ([2.5, 0.0], 0.4)]).unwrap();
    let exact = kernel_norm_sq(4, 1.0, [0.0, 0.0], &m, 0.0, &ChaosOptions { symmetrization: Symmetrization::Exact, ..Default::default() }).unwrap();
    let opts = ChaosOptions {
        symmetrization: Symmetrization::Sampled { n_perms: 64 },
        seed: 3,
        ..Default::default()
    };
    let sampled = kernel_norm_sq(4, 1.0, [0.0, 0.0], &m, 0.0, &opts).unwrap();
    assert!((sampled.value - exact.value).abs() < 4.0 * sampled.stderr + 1e-12, "{sampled:?} {exact:?}");
}

#[test]
fn skorohod_series_converges() {
    let m = SpectralMeasure::atom_fixture();
    let s = skorohod_second_moment(1.0, [0.0, 0.0], &m, 0.0, 8, &ChaosOptions::default()).unwrap();
    assert!(s.terms.iter().all(|e| e.value >= 0.0));
    let mut partial = 1.0;
    for e in &s.terms {
        assert!(partial + e.value >= partial);
        partial += e.value;
    }
    assert!((partial - s.value).abs() < 1e-12);
    assert!(s.tail_ratio < 1e-6, "tail ratio {}", s.tail_ratio);
    assert!(skorohod_second_moment(1.0, [0.0; 2], &m, 0.0, 0, &ChaosOptions::default()).is_err());
}

#[test]
fn mean_term_two_against_physical_oracle() {
    // Fixture: Γ(u) = ∫ G(u, z) cos(πz) dz = sin(πu)/π, so the n = 2 term
    // is ∫_0^1 (1-u)²/2 sin(πu)/π du = (π² - 4)/(2π⁴).
    let m = SpectralMeasure::atom_fixture();
    let n = 10_000;
    let h = 1.0 / n as f64;
    let w = simpson_weights(n);
    let oracle: f64 = (0..=n)
        .map(|i| {
            let u = i as f64 * h;
            w(i) * 0.5 * (1.0 - u).powi(2) * (PI * u).sin() / PI
        })
        .sum::<f64>()
        * h
        / 3.0;
    assert!((oracle - (PI * PI - 4.0) / (2.0 * PI.powi(4))).abs() < 1e-12);
    let spectral = stratonovich_mean_term(2, 1.0, &m, 0.0, &ChaosOptions::default()).unwrap();
    let physical = mean_term_two_physical(1.0, &m, 0.0).unwrap();
    assert!((spectral.value - oracle).abs() < 1e-10, "{spectral:?}");
    assert!((physical - oracle).abs() < 1e-10, "{physical}");

    let g = SpectralMeasure::gaussian(Dim::Two, 1.0, 1.5).unwrap();
    let opts = ChaosOptions { n_samples: 40_000, seed: 9, ..Default::default() };
    let spectral = stratonovich_mean_term(2, 1.0, &g, 0.05, &opts).unwrap();
    let physical = mean_term_two_physical(1.0, &g, 0.05).unwrap();
    assert!((spectral.value - physical).abs() < 4.0 * spectral.stderr + 1e-9, "{spectral:?} {physical}");
}

#[test]
fn mean_terms_decay() {
    let m = SpectralMeasure::atom_fixture();
    let s = stratonovich_mean_series(1.0, &m, 0.0, 8, &ChaosOptions::default()).unwrap();
    assert_eq!(s.terms.iter().map(|p| p.0).collect::<Vec<_>>(), vec![2, 4, 6, 8]);
    for w in s.terms.windows(2).skip(1) {
        let ratio = (w[1].1.value / w[0].1.value).abs();
        assert!(ratio < 1.0, "term {} / term {} = {ratio}", w[1].0, w[0].0);
    }
    assert!(s.value > 1.0);
    assert!(stratonovich_mean_series(1.0, &m, 0.0, 5, &ChaosOptions::default()).is_err());
}

#[test]
fn parseval_riesz_gaussian_bump() {
    // γ = c|x|^{-1/2}: ∫ A e^{-x²/2s²} c |x|^{-1/2} dx = A c (2s²)^{1/4} Γ(1/4).
    let m = SpectralMeasure::riesz(0.5, Dim::One).unwrap();
    let c = m.gamma_eval([1.0, 0.0]);
    let (a, s) = (1.3, 0.8);
    let phi = TestFunction::GaussianBump { amplitude: a, width: s };
    let (lhs, rhs) = parseval_check(&m, &phi).unwrap();
    let closed = a * c * (2.0 * s * s).powf(0.25) * gamma(0.25);
    assert!((lhs - closed).abs() < 1e-4 * closed, "{lhs} {closed}");
    assert!((rhs - closed).abs() < 1e-4 * closed, "{rhs} {closed}");
    let cone = TestFunction::ConeIndicator { amplitude: 1.0, radius: 1.0 };
    assert!(matches!(parseval_check(&m, &cone), Err(stratowave::Error::Unsupported(_))));
}

#[test]
fn parseval_atoms_cone_in_the_plane() {
    let m = SpectralMeasure::symmetric_atoms(Dim::Two, &[([1.0, 1.0], 0.5), ([0.0, 2.0], 0.5)]).unwrap();
    let phi = TestFunction::ConeIndicator { amplitude: 2.0, radius: 0.9 };
    let (lhs, rhs) = parseval_check(&m, &phi).unwrap();
    assert!((lhs - rhs).abs() < 1e-6 * (1.0 + rhs.abs()), "{lhs} {rhs}");
}

#[test]
fn census_rows_for_four_factors() {
    let rows = decomposition_census(4).unwrap();
    let flat: Vec<_> = rows.iter().map(|r| (r.k, r.chaos_level, r.term_count, r.label.as_str())).collect();
    assert_eq!(flat, vec![(0, 4, 1, "J_4"), (1, 2, 6, "M_4"), (2, 0, 3, "M_4")]);
    assert_eq!(decomposition_census(7).unwrap().iter().map(|r| r.term_count).sum::<u64>(), 232);
}

#[test]
fn tableau_tracks_active_pairs() {
    // pairs (1,3) and (2,4): pair i contributes its frequency on rows ℓ_i..m_i - 1
    let tab = ActiveSetTableau::new(4, &[(1, 3), (2, 4)]).unwrap();
    let sums = tab.partial_sums(&[[1.0, 0.0], [0.0, 10.0]]);
    assert_eq!(sums, vec![[1.0, 0.0], [1.0, 10.0], [0.0, 10.0], [0.0, 0.0]]);
    assert!(ActiveSetTableau::new(4, &[(1, 5)]).is_err());
}
