//! Special functions used by the covariance formulas.

use std::f64::consts::PI;

use crate::geometry::Dim;

pub fn gamma(x: f64) -> f64 {
    libm::tgamma(x)
}

pub fn ln_gamma(x: f64) -> f64 {
    libm::lgamma(x)
}

pub fn beta(a: f64, b: f64) -> f64 {
    (ln_gamma(a) + ln_gamma(b) - ln_gamma(a + b)).exp()
}

pub fn bessel_j0(x: f64) -> f64 {
    libm::j0(x)
}

pub fn factorial(n: usize) -> f64 {
    (1..=n).fold(1.0, |acc, k| acc * k as f64)
}

/// `(2k - 1)!!`, the number of perfect matchings of `2k` points.
pub fn double_factorial_odd(k: usize) -> u64 {
    (1..=k as u64).map(|i| 2 * i - 1).product()
}

pub fn binomial(n: usize, k: usize) -> u64 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    (0..k as u64).fold(1u64, |acc, i| acc * (n as u64 - i) / (i + 1))
}

/// Constant `K` with `∫ e^{-iξ·x} K |ξ|^{α-d} dξ = |x|^{-α}` on `R^d`.
pub fn riesz_spectral_constant(dim: Dim, alpha: f64) -> f64 {
    let d = dim.get() as f64;
    gamma(0.5 * (d - alpha)) / (PI.powf(0.5 * d) * 2f64.powf(alpha) * gamma(0.5 * alpha))
}

/// Kummer's confluent hypergeometric function `M(a, b, -x)` for `x >= 0`
/// and `b > a > 0`.
///
/// Small arguments use Kummer's transformation `e^{-x} M(b-a, b, x)`, whose
/// series has positive terms; large arguments use the algebraic asymptotic
/// expansion (the exponentially small companion is below double precision
/// there).
pub fn kummer_m_neg(a: f64, b: f64, x: f64) -> f64 {
    debug_assert!(x >= 0.0);
    if x < 60.0 {
        let c = b - a;
        let mut term = 1.0;
        let mut sum = 1.0;
        let mut k = 0.0;
        loop {
            term *= (c + k) / (b + k) * x / (k + 1.0);
            sum += term;
            k += 1.0;
            if term < 1e-17 * sum && k > x {
                break;
            }
        }
        (-x).exp() * sum
    } else {
        let prefactor = (ln_gamma(b) - ln_gamma(b - a)).exp() * x.powf(-a);
        let mut term: f64 = 1.0;
        let mut sum: f64 = 1.0;
        let mut k = 0.0;
        loop {
            let next = term * (a + k) * (a - b + 1.0 + k) / ((k + 1.0) * x);
            if next.abs() >= term.abs() || next.abs() < 1e-17 * sum.abs() {
                if next.abs() < term.abs() {
                    sum += next;
                }
                break;
            }
            term = next;
            sum += term;
            k += 1.0;
        }
        prefactor * sum
    }
}
