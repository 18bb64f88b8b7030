//! Fundamental solution `G(t, x)` of the wave equation in d = 1, 2.
//!
//! `G(t,x) = ½ 1_{|x|<t}` in d = 1 and `(2π)^{-1} (t² - |x|²)^{-1/2} 1_{|x|<t}`
//! in d = 2; in both cases `∫ G(t,x) dx = t` and `𝓕G(t,·)(ξ) = sin(t|ξ|)/|ξ|`.

use rand::Rng;
use std::f64::consts::{FRAC_1_PI, PI, SQRT_2};

use crate::error::{invalid, Result};
use crate::geometry::{norm, Dim, Vec2};
use crate::quad::{self, QuadOptions};

/// Below this value of `t|ξ|` the Fourier transform switches to its Taylor
/// series.
pub const FOURIER_SERIES_THRESHOLD: f64 = 1e-4;

/// Constant `C` in `∬ G_{t-s}(x-y) G_{s-r}(y-z) dy ds <= C t² G_{t-r}(x-z)`,
/// calibrated by the sweep in `tests/wave_kernel.rs` (observed maximum
/// ratio 0.5 in d = 2, 0.25 in d = 1) and fixed here.
pub const SEMIGROUP_CONSTANT: f64 = 0.5;

fn check_time(t: f64) -> Result<()> {
    if t.is_finite() && t > 0.0 {
        Ok(())
    } else {
        Err(invalid(format!("time must be positive, got {t}")))
    }
}

/// `G(t, x)`; `+∞` on the light cone `|x| = t` in d = 2.
pub fn g_eval(t: f64, x: Vec2, dim: Dim) -> Result<f64> {
    check_time(t)?;
    Ok(g_unchecked(t, norm(x), dim))
}

#[inline]
pub(crate) fn g_unchecked(t: f64, r: f64, dim: Dim) -> f64 {
    match dim {
        Dim::One => {
            if r < t {
                0.5
            } else {
                0.0
            }
        }
        Dim::Two => {
            if r < t {
                0.5 * FRAC_1_PI / ((t - r) * (t + r)).sqrt()
            } else if r == t {
                f64::INFINITY
            } else {
                0.0
            }
        }
    }
}

/// `𝓕G(t,·)(ξ) = sin(t|ξ|)/|ξ|` as a function of `|ξ|`, equal to `t` at 0.
#[inline]
pub fn g_fourier(t: f64, xi_norm: f64) -> f64 {
    let a = xi_norm.abs();
    let ta = t * a;
    if ta < FOURIER_SERIES_THRESHOLD {
        let ta2 = ta * ta;
        t * (1.0 - ta2 / 6.0 * (1.0 - ta2 / 20.0))
    } else {
        (ta).sin() / a
    }
}

pub fn g_fourier_vec(t: f64, xi: Vec2) -> f64 {
    g_fourier(t, norm(xi))
}

/// `∫ G(t, x) dx = t`.
pub fn g_mass(t: f64, _dim: Dim) -> Result<f64> {
    check_time(t)?;
    Ok(t)
}

/// The mass by quadrature of [`g_eval`]. In d = 2 the substitution
/// `r = t sin θ` removes the endpoint singularity:
/// `∫_0^t 2π r G dr = ∫_0^{π/2} t sin θ dθ`.
pub fn g_mass_quadrature(t: f64, dim: Dim) -> Result<f64> {
    check_time(t)?;
    let opts = QuadOptions {
        abs_tol: 1e-13,
        rel_tol: 1e-13,
        max_subdivisions: 200,
    };
    let v = match dim {
        Dim::One => quad::integrate(|x| g_unchecked(t, x.abs(), dim), -t, t, opts)?.value,
        Dim::Two => quad::integrate(
            |theta: f64| {
                let r = t * theta.sin();
                2.0 * PI * r * g_unchecked(t, r, dim) * t * theta.cos()
            },
            0.0,
            0.5 * PI,
            opts,
        )?
        .value,
    };
    Ok(v)
}

/// Radius of the d = 2 unit bump by CDF inversion:
/// `P(R <= r) = 1 - sqrt(1 - r²)`, so `R = sqrt(2u - u²)`.
pub fn unit_bump_radius(u: f64) -> f64 {
    (u * (2.0 - u)).max(0.0).sqrt()
}

/// Exact draw from the density `G(1, ·)`.
pub fn sample_unit_bump<R: Rng + ?Sized>(dim: Dim, rng: &mut R) -> Vec2 {
    match dim {
        Dim::One => [2.0 * rng.gen::<f64>() - 1.0, 0.0],
        Dim::Two => {
            let r = unit_bump_radius(rng.gen::<f64>());
            let theta = 2.0 * PI * rng.gen::<f64>();
            [r * theta.cos(), r * theta.sin()]
        }
    }
}

/// `2√2 (t ∨ 1) (1 + |ξ|²)^{-1/2}`.
pub fn fg_bound(t: f64, xi_norm: f64) -> f64 {
    2.0 * SQRT_2 * t.max(1.0) / (1.0 + xi_norm * xi_norm).sqrt()
}

/// True iff `|𝓕G(t,·)(ξ)|` respects [`fg_bound`] at every grid point.
pub fn fg_bound_check(t: f64, xi_grid: &[Vec2]) -> bool {
    xi_grid.iter().all(|&xi| {
        let r = norm(xi);
        g_fourier(t, r).abs() <= fg_bound(t, r)
    })
}

/// `(G_a * G_b)(w) = ∫ G(a, y) G(b, w - y) dy`.
pub fn kernel_convolution(a: f64, b: f64, w: Vec2, dim: Dim) -> Result<f64> {
    if a <= 0.0 || b <= 0.0 {
        return Ok(0.0);
    }
    let rw = norm(w);
    match dim {
        Dim::One => {
            let lo = (-a).max(rw - b);
            let hi = a.min(rw + b);
            Ok(0.25 * (hi - lo).max(0.0))
        }
        Dim::Two => {
            if rw >= a + b {
                return Ok(0.0);
            }
            if rw == 0.0 {
                // ½ ∫_0^{m²} du / sqrt((a² - u)(b² - u)) in closed form.
                let gap = ((a - b) * (a + b)).abs();
                return Ok(if gap == 0.0 {
                    f64::INFINITY
                } else {
                    0.5 * FRAC_1_PI * ((a + b) / gap.sqrt()).ln()
                });
            }
            // Hankel transform of sin(a|ξ|) sin(b|ξ|) / |ξ|².
            let arcosh_pos = |c: f64| if c > rw { (c / rw).acosh() } else { 0.0 };
            Ok(0.25 * FRAC_1_PI * (arcosh_pos(a + b) - arcosh_pos((a - b).abs())))
        }
    }
}

/// [`kernel_convolution`] in `d = 2` by direct polar quadrature; slow, kept
/// as an independent check of the closed form.
pub fn kernel_convolution_quadrature(a: f64, b: f64, w: Vec2) -> Result<f64> {
    if a <= 0.0 || b <= 0.0 || norm(w) >= a + b {
        return Ok(0.0);
    }
    convolution_2d(a, b, norm(w))
}

/// Complete elliptic integral of the first kind, `K(k)` with `m = k²`.
fn elliptic_k(m: f64) -> f64 {
    let (mut x, mut y) = (1.0f64, (1.0 - m).max(0.0).sqrt());
    while (x - y).abs() > 1e-15 * x {
        (x, y) = (0.5 * (x + y), (x * y).sqrt());
    }
    0.5 * PI / x
}

/// `∫_0^a ρ G(a, ρ) ∮ G(b, |w - ρ e_θ|) dθ dρ`. With `u = cos θ` the ring
/// integral is `(2π)^{-1} ∫ 2 du / sqrt(B (u - u₀)(1 - u²))` over
/// `u > u₀ = -A/B`, a complete elliptic integral; the radial integral is done
/// by quadrature with the substitution `ρ = L + (U - L)(1 - cos ψ)/2`.
fn convolution_2d(a: f64, b: f64, rw: f64) -> Result<f64> {
    let opts = QuadOptions {
        abs_tol: 1e-12,
        rel_tol: 1e-10,
        max_subdivisions: 2000,
    };
    let ring = |rho: f64| -> f64 {
        let big_a = b * b - rw * rw - rho * rho;
        let big_b = 2.0 * rho * rw;
        if big_b <= 0.0 {
            return if big_a > 0.0 { 1.0 / big_a.sqrt() } else { 0.0 };
        }
        let u0 = -big_a / big_b;
        let integral = if u0 >= 1.0 {
            0.0
        } else if u0 > -1.0 {
            // roots 1 > u0 > -1
            2.0 * elliptic_k(0.5 * (1.0 - u0)) / 2f64.sqrt()
        } else {
            // roots 1 > -1 >= u0
            2.0 * elliptic_k(2.0 / (1.0 - u0)) / (1.0 - u0).sqrt()
        };
        2.0 * integral / (big_b.sqrt() * 2.0 * PI)
    };
    let mut breaks = vec![0.0, a];
    for c in [(rw - b).abs(), rw + b] {
        if c > 0.0 && c < a {
            breaks.push(c);
        }
    }
    breaks.sort_by(f64::total_cmp);
    let mut total = 0.0;
    for w in breaks.windows(2) {
        let (lo, hi) = (w[0], w[1]);
        let f = |psi: f64| {
            let rho = lo + 0.5 * (hi - lo) * (1.0 - psi.cos());
            let g = 0.5 * FRAC_1_PI / ((a - rho) * (a + rho)).sqrt();
            let v = rho * g * ring(rho) * 0.5 * (hi - lo) * psi.sin();
            if v.is_finite() {
                v
            } else {
                0.0
            }
        };
        total += quad::integrate(f, 0.0, PI, opts)?.value;
    }
    Ok(total)
}

/// Outcome of [`semigroup_check`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SemigroupCheck {
    pub lhs: f64,
    pub lhs_error: f64,
    pub rhs_bound: f64,
}

impl SemigroupCheck {
    /// `lhs <= rhs_bound` up to the quadrature error of `lhs`.
    pub fn holds(&self) -> bool {
        self.lhs - self.lhs_error <= self.rhs_bound
    }
}

/// `lhs = ∫_r^t ∫ G(t-s, x-y) G(s-r, y-z) dy ds` against
/// `rhs_bound = SEMIGROUP_CONSTANT · t² · G(t-r, x-z)`.
pub fn semigroup_check(r: f64, t: f64, x: Vec2, z: Vec2, dim: Dim) -> Result<SemigroupCheck> {
    if !(r >= 0.0 && r < t && t.is_finite()) {
        return Err(invalid(format!("need 0 <= r < t, got r = {r}, t = {t}")));
    }
    let w = [x[0] - z[0], x[1] - z[1]];
    let rw = norm(w);
    if rw >= t - r {
        return Err(invalid("x - z must lie strictly inside the cone |x - z| < t - r"));
    }
    let opts = QuadOptions {
        abs_tol: 1e-10,
        rel_tol: 1e-9,
        max_subdivisions: 4000,
    };
    // The inner convolution has kinks (d = 1) or log singularities (d = 2)
    // where |a - b| = |w|, i.e. s = (t + r ± |w|)/2.
    let mut breaks = vec![r, t];
    for s in [0.5 * (t + r - rw), 0.5 * (t + r + rw)] {
        if s > r && s < t {
            breaks.push(s);
        }
    }
    breaks.sort_by(f64::total_cmp);
    breaks.dedup();
    let mut lhs = 0.0;
    let mut lhs_error = 0.0;
    for win in breaks.windows(2) {
        let res = quad::integrate(
            |s| match kernel_convolution(t - s, s - r, w, dim) {
                Ok(v) if v.is_finite() => v,
                _ => 0.0,
            },
            win[0],
            win[1],
            opts,
        )?;
        lhs += res.value;
        lhs_error += res.error;
    }
    let rhs_bound = SEMIGROUP_CONSTANT * t * t * g_unchecked(t - r, rw, dim);
    Ok(SemigroupCheck { lhs, lhs_error, rhs_bound })
}
