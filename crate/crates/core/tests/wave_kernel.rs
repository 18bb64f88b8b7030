use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::f64::consts::PI;

use stratowave::kernel::*;
use stratowave::suite::{ks_critical_1pct, ks_statistic};
use stratowave::Dim;

fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
    let n = n + n % 2;
    let h = (b - a) / n as f64;
    let mut s = f(a) + f(b);
    for i in 1..n {
        s += if i % 2 == 1 { 4.0 } else { 2.0 } * f(a + i as f64 * h);
    }
    s * h / 3.0
}

#[test]
fn mass_is_time() {
    for t in [0.1, 0.5, 1.0, 3.0, 10.0] {
        for dim in [Dim::One, Dim::Two] {
            assert_eq!(g_mass(t, dim).unwrap(), t);
            let q = g_mass_quadrature(t, dim).unwrap();
            assert!((q - t).abs() < 1e-10 * t, "{dim:?} t = {t}: {q}");
        }
    }
    assert!(g_mass(0.0, Dim::One).is_err());
    assert!(g_eval(-1.0, [0.0, 0.0], Dim::Two).is_err());
}

#[test]
fn plancherel_in_one_dimension() {
    // ∫ G(t,x)² dx = ¼ · 2t = t/2, and (2π)^{-1} ∫ sin²(tξ)/ξ² dξ.
    // Beyond L the integrand averages 1/(2ξ²), so the tail is 1/(2L) per side.
    for t in [0.5, 1.0, 2.0] {
        let physical = simpson(|x| g_eval(t, [x, 0.0], Dim::One).unwrap().powi(2), -t + 1e-12, t - 1e-12, 2000);
        let l = 400.0;
        let fourier = (2.0 * simpson(|xi| g_fourier(t, xi).powi(2), 0.0, l, 400_000) + 1.0 / l) / (2.0 * PI);
        assert!((physical - t / 2.0).abs() < 1e-9, "{physical}");
        assert!((fourier - t / 2.0).abs() < 1e-4, "t = {t}: {fourier} vs {}", t / 2.0);
    }
}

#[test]
fn fourier_matches_physical_transform() {
    // d = 1: ∫_{-t}^{t} ½ cos(ξx) dx = sin(tξ)/ξ.
    for (t, xi) in [(1.0, 0.3), (2.0, 5.0), (0.7, 1e-6)] {
        let direct = simpson(|x| 0.5 * (xi * x).cos(), -t, t, 4000);
        assert!((direct - g_fourier(t, xi)).abs() < 1e-10, "{direct} {}", g_fourier(t, xi));
    }
    // d = 2: 2π ∫_0^t ρ G J_0(|ξ|ρ) dρ, with ρ = t sin θ.
    for (t, xi) in [(1.0, 0.5), (1.5, 3.0)] {
        let direct = simpson(
            |th: f64| {
                let rho = t * th.sin();
                t * th.sin() * stratowave::special::bessel_j0(xi * rho)
            },
            0.0,
            0.5 * PI,
            4000,
        );
        assert!((direct - g_fourier(t, xi)).abs() < 1e-9, "{direct} {}", g_fourier(t, xi));
    }
}

#[test]
fn fourier_bound_on_grid() {
    let grid: Vec<[f64; 2]> = (0..100)
        .flat_map(|i| (0..100).map(move |j| [-50.0 + i as f64 * 100.0 / 99.0, -50.0 + j as f64 * 100.0 / 99.0]))
        .collect();
    for t in [0.5, 1.0, 10.0] {
        assert!(fg_bound_check(t, &grid));
    }
}

#[test]
fn unit_bump_laws() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let n = 100_000;
    let mut xs: Vec<f64> = (0..n).map(|_| sample_unit_bump(Dim::One, &mut rng)[0]).collect();
    let second = xs.iter().map(|x| x * x).sum::<f64>() / n as f64;
    assert!((second - 1.0 / 3.0).abs() < 4.0 * (4.0f64 / 45.0).sqrt() / (n as f64).sqrt());
    let d = ks_statistic(&mut xs, |x| (0.5 * (x + 1.0)).clamp(0.0, 1.0));
    assert!(d < ks_critical_1pct(n), "d = 1 KS {d}");

    let mut rs: Vec<f64> = (0..n)
        .map(|_| {
            let p = sample_unit_bump(Dim::Two, &mut rng);
            p[0].hypot(p[1])
        })
        .collect();
    // E R² = ∫_0^1 r³ (1 - r²)^{-1/2} dr = 2/3, Var R² = 8/15 - 4/9.
    let second = rs.iter().map(|r| r * r).sum::<f64>() / n as f64;
    assert!((second - 2.0 / 3.0).abs() < 4.0 * (8.0f64 / 15.0 - 4.0 / 9.0).sqrt() / (n as f64).sqrt());
    let d = ks_statistic(&mut rs, |r| 1.0 - (1.0 - r.clamp(0.0, 1.0).powi(2)).sqrt());
    assert!(d < ks_critical_1pct(n), "d = 2 KS {d}");
}

#[test]
fn convolution_closed_form_matches_quadrature() {
    for (a, b, w) in [(1.0, 0.5, 0.3), (0.4, 0.9, 0.2), (1.0, 1.0, 1.5), (0.7, 0.3, 0.5), (2.0, 0.5, 0.0)] {
        let closed = kernel_convolution(a, b, [w, 0.0], Dim::Two).unwrap();
        let quad = kernel_convolution_quadrature(a, b, [0.0, w]).unwrap();
        assert!((closed - quad).abs() < 1e-7 * (1.0 + closed), "a={a} b={b} w={w}: {closed} {quad}");
    }
    // d = 1 against a Riemann sum over y.
    let (a, b, w) = (0.8, 0.5, 0.6);
    let brute = simpson(
        |y| g_eval(a, [y, 0.0], Dim::One).unwrap() * g_eval(b, [w - y, 0.0], Dim::One).unwrap(),
        -1.0,
        1.0,
        200_000,
    );
    let closed = kernel_convolution(a, b, [w, 0.0], Dim::One).unwrap();
    assert!((closed - brute).abs() < 1e-4, "{closed} {brute}");
}

#[test]
fn convolution_mass_is_product() {
    // ∫ (G_a * G_b) = a b
    let (a, b) = (0.6, 0.9);
    let one = simpson(|w| kernel_convolution(a, b, [w, 0.0], Dim::One).unwrap(), -1.5, 1.5, 30_000);
    assert!((one - a * b).abs() < 1e-6, "{one}");
    let two = simpson(
        |w| 2.0 * PI * w * kernel_convolution(a, b, [w, 0.0], Dim::Two).unwrap(),
        1e-9,
        a + b,
        200_000,
    );
    assert!((two - a * b).abs() < 1e-3, "{two}");
}

#[test]
fn semigroup_constant_is_tight() {
    // The ratio lhs / (t² G(t-r, x-z)) is scale-invariant; sweep shapes.
    let mut worst = [0.0f64; 2];
    for (k, dim) in [Dim::One, Dim::Two].into_iter().enumerate() {
        for (r, t) in [(0.0, 1.0), (0.3, 1.0), (0.0, 2.5), (1.0, 1.5)] {
            for frac in [0.0, 0.2, 0.5, 0.8, 0.95] {
                let x = [frac * (t - r), 0.0];
                let c = semigroup_check(r, t, x, [0.0, 0.0], dim).unwrap();
                assert!(c.holds(), "{dim:?} r={r} t={t} frac={frac}: {c:?}");
                assert!(c.lhs.is_finite());
                worst[k] = worst[k].max(SEMIGROUP_CONSTANT * c.lhs / c.rhs_bound);
            }
        }
    }
    assert!(worst[0] <= 0.25 + 1e-8 && worst[0] > 0.2, "d = 1 max ratio {}", worst[0]);
    assert!(worst[1] <= SEMIGROUP_CONSTANT + 1e-8, "d = 2 max ratio {}", worst[1]);
    assert!(worst[1] >= 0.4999, "d = 2 max ratio {}", worst[1]);
}

#[test]
fn semigroup_rejects_outside_cone() {
    assert!(semigroup_check(0.5, 0.4, [0.0, 0.0], [0.0, 0.0], Dim::One).is_err());
    assert!(semigroup_check(0.0, 1.0, [1.0, 0.0], [0.0, 0.0], Dim::Two).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn kernel_is_radial_and_nonnegative(t in 0.05f64..5.0, x in -6.0f64..6.0, y in -6.0f64..6.0, th in 0.0f64..6.3) {
        let r = x.hypot(y);
        let g2 = g_eval(t, [x, y], Dim::Two).unwrap();
        let rot = g_eval(t, [r * th.cos(), r * th.sin()], Dim::Two).unwrap();
        prop_assert!(g2 >= 0.0);
        if (r - t).abs() > 1e-6 {
            prop_assert!((g2 - rot).abs() <= 1e-9 * (1.0 + g2));
        }
        let g1 = g_eval(t, [x, 0.0], Dim::One).unwrap();
        prop_assert_eq!(g1, g_eval(t, [-x, 0.0], Dim::One).unwrap());
        prop_assert!(g1 == 0.0 || g1 == 0.5);
        if r > t {
            prop_assert_eq!(g2, 0.0);
        }
    }

    #[test]
    fn fourier_is_even_and_bounded(t in 0.01f64..20.0, xi in -100.0f64..100.0) {
        let v = g_fourier(t, xi);
        prop_assert_eq!(v, g_fourier(t, -xi));
        prop_assert!(v.abs() <= t * (1.0 + 1e-12));
        prop_assert!(v.abs() <= fg_bound(t, xi));
    }

    #[test]
    fn fourier_series_branch_is_continuous(t in 0.1f64..5.0) {
        let a = FOURIER_SERIES_THRESHOLD / t;
        let below = g_fourier(t, a * (1.0 - 1e-9));
        let above = g_fourier(t, a * (1.0 + 1e-9));
        prop_assert!((below - above).abs() < 1e-12 * t);
    }

    #[test]
    fn convolution_is_symmetric(a in 0.05f64..2.0, b in 0.05f64..2.0, w in 0.0f64..3.0) {
        for dim in [Dim::One, Dim::Two] {
            let ab = kernel_convolution(a, b, [w, 0.0], dim).unwrap();
            let ba = kernel_convolution(b, a, [0.0, -w], dim).unwrap();
            prop_assert!(ab >= 0.0);
            if ab.is_finite() {
                prop_assert!((ab - ba).abs() <= 1e-12 * (1.0 + ab));
            }
        }
    }
}
