//! Noise families: covariance kernel `γ` and spectral measure `μ` with
//! `γ = 𝓕μ`, where `𝓕φ(ξ) = ∫ e^{-iξ·x} φ(x) dx` (no `2π` factors), so that
//! `⟨φ, ψ⟩_H = ∫ 𝓕φ(ξ) conj(𝓕ψ(ξ)) μ(dξ)`.
//!
//! A [`NoiseSample`] is a finite spectral realization of the mollified field
//! `Ẇ^ε`, whose covariance is `∫ e^{-ε|ξ|²} cos(ξ·(x-y)) μ(dξ)`.

use rand::Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{invalid, Error, Result};
use crate::exec::{stream_rng, tag};
use crate::geometry::{dot, norm, norm_sq, Dim, Vec2};
use crate::quad::{self, QuadOptions};
use crate::special;

/// Absolute tolerance of the spectral quadratures.
pub const SPECTRAL_ABS_TOL: f64 = 1e-9;

/// Two frequencies closer than this are treated as equal when pairing
/// atoms with their mirror images.
const ATOM_MATCH_TOL: f64 = 1e-12;

fn unit() -> f64 {
    1.0
}

/// One spectral atom `w δ_ξ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Atom {
    pub frequency: Vec<f64>,
    pub weight: f64,
}

/// Spectral measure of the noise, closed under `ξ ↦ -ξ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SpectralMeasure {
    /// `γ(x) = c |x|^{-α}`, `μ(dξ) = c K_{d,α} |ξ|^{α-d} dξ`.
    ///
    /// `K_{d,α}` is the exact Fourier constant when `α < d`. For
    /// `d <= α < d + 2` the measure is still tempered but `γ` is no longer a
    /// locally integrable function; `K` is then set to 1 and only spectral
    /// quantities are available.
    Riesz {
        alpha: f64,
        dim: Dim,
        #[serde(default = "unit")]
        c: f64,
    },
    /// Finite symmetric sum of atoms; `γ(x) = Σ w cos(ξ·x)`.
    SpectralAtoms { dim: Dim, atoms: Vec<Atom> },
    /// `μ = total_mass · N(0, bandwidth² I)`, so
    /// `γ(x) = total_mass · exp(-bandwidth² |x|² / 2)`.
    GaussianDensity {
        dim: Dim,
        total_mass: f64,
        bandwidth: f64,
    },
}

impl SpectralMeasure {
    pub fn riesz(alpha: f64, dim: Dim) -> Result<Self> {
        let m = SpectralMeasure::Riesz { alpha, dim, c: 1.0 };
        m.validate()?;
        Ok(m)
    }

    pub fn gaussian(dim: Dim, total_mass: f64, bandwidth: f64) -> Result<Self> {
        let m = SpectralMeasure::GaussianDensity {
            dim,
            total_mass,
            bandwidth,
        };
        m.validate()?;
        Ok(m)
    }

    /// Atoms given explicitly; the list must already be symmetric.
    pub fn atoms(dim: Dim, atoms: &[(Vec2, f64)]) -> Result<Self> {
        let atoms = atoms
            .iter()
            .map(|&(xi, w)| Atom {
                frequency: dim.coords(xi),
                weight: w,
            })
            .collect();
        let m = SpectralMeasure::SpectralAtoms { dim, atoms };
        m.validate()?;
        Ok(m)
    }

    /// Symmetrizes `half`: every `(ξ, w)` contributes `w/2` at `ξ` and `-ξ`
    /// (or `w` at `ξ = 0`).
    pub fn symmetric_atoms(dim: Dim, half: &[(Vec2, f64)]) -> Result<Self> {
        let mut atoms = Vec::with_capacity(2 * half.len());
        for &(xi, w) in half {
            if norm(xi) == 0.0 {
                atoms.push((xi, w));
            } else {
                atoms.push((xi, 0.5 * w));
                atoms.push(([-xi[0], -xi[1]], 0.5 * w));
            }
        }
        SpectralMeasure::atoms(dim, &atoms)
    }

    /// `½(δ_π + δ_{-π})` in one dimension, the exact-arithmetic fixture.
    pub fn atom_fixture() -> Self {
        SpectralMeasure::symmetric_atoms(Dim::One, &[([PI, 0.0], 1.0)]).expect("valid fixture")
    }

    /// The measure with no atoms (noise identically zero).
    pub fn zero(dim: Dim) -> Self {
        SpectralMeasure::SpectralAtoms { dim, atoms: vec![] }
    }

    pub fn dim(&self) -> Dim {
        match *self {
            SpectralMeasure::Riesz { dim, .. }
            | SpectralMeasure::SpectralAtoms { dim, .. }
            | SpectralMeasure::GaussianDensity { dim, .. } => dim,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            SpectralMeasure::Riesz { alpha, dim, c } => {
                let d = dim.get() as f64;
                if !(alpha.is_finite() && *alpha > 0.0 && *alpha < d + 2.0) {
                    return Err(invalid(format!("Riesz exponent must lie in (0, d + 2), got {alpha}")));
                }
                if !(c.is_finite() && *c > 0.0) {
                    return Err(invalid(format!("Riesz constant must be positive, got {c}")));
                }
            }
            SpectralMeasure::GaussianDensity {
                total_mass, bandwidth, ..
            } => {
                if !(total_mass.is_finite() && *total_mass > 0.0) {
                    return Err(invalid(format!("total_mass must be positive, got {total_mass}")));
                }
                if !(bandwidth.is_finite() && *bandwidth > 0.0) {
                    return Err(invalid(format!("bandwidth must be positive, got {bandwidth}")));
                }
            }
            SpectralMeasure::SpectralAtoms { dim, atoms } => {
                let pts = atoms
                    .iter()
                    .map(|a| {
                        if !(a.weight.is_finite() && a.weight > 0.0) {
                            return Err(invalid(format!("atom weights must be positive, got {}", a.weight)));
                        }
                        if a.frequency.iter().any(|v| !v.is_finite()) {
                            return Err(invalid("atom frequencies must be finite"));
                        }
                        Ok((dim.point(&a.frequency)?, a.weight))
                    })
                    .collect::<Result<Vec<_>>>()?;
                for (i, &(xi, w)) in pts.iter().enumerate() {
                    if pts[..i].iter().any(|&(other, _)| close(other, xi)) {
                        return Err(invalid(format!("duplicate atom at {:?}", dim.coords(xi))));
                    }
                    if norm(xi) == 0.0 {
                        continue;
                    }
                    let mirror = [-xi[0], -xi[1]];
                    match pts.iter().find(|&&(other, _)| close(other, mirror)) {
                        Some(&(_, wm)) if (wm - w).abs() <= 1e-12 * w => {}
                        Some(_) => {
                            return Err(invalid(format!(
                                "atom at {:?} and its mirror carry different weights",
                                dim.coords(xi)
                            )))
                        }
                        None => {
                            return Err(invalid(format!(
                                "spectral atoms must be symmetric: no mirror for {:?}",
                                dim.coords(xi)
                            )))
                        }
                    }
                }
            }
        }
        Ok(())
    }

    fn atom_points(&self) -> Vec<(Vec2, f64)> {
        match self {
            SpectralMeasure::SpectralAtoms { dim, atoms } => atoms
                .iter()
                .map(|a| (dim.point(&a.frequency).expect("validated atom"), a.weight))
                .collect(),
            _ => Vec::new(),
        }
    }

    /// Atoms as `(ξ, w)` pairs; empty for continuous measures.
    pub fn atom_list(&self) -> Vec<(Vec2, f64)> {
        self.atom_points()
    }

    pub fn is_atomic(&self) -> bool {
        matches!(self, SpectralMeasure::SpectralAtoms { .. })
    }

    /// `μ(R^d)`, infinite for the Riesz family.
    pub fn total_mass(&self) -> f64 {
        match self {
            SpectralMeasure::Riesz { .. } => f64::INFINITY,
            SpectralMeasure::SpectralAtoms { atoms, .. } => atoms.iter().map(|a| a.weight).sum(),
            SpectralMeasure::GaussianDensity { total_mass, .. } => *total_mass,
        }
    }

    /// `c K_{d,α}` for Riesz measures.
    pub(crate) fn riesz_density_constant(&self) -> Option<(f64, f64, Dim)> {
        match *self {
            SpectralMeasure::Riesz { alpha, dim, c } => {
                let k = if alpha < dim.get() as f64 {
                    special::riesz_spectral_constant(dim, alpha)
                } else {
                    1.0
                };
                Some((alpha, c * k, dim))
            }
            _ => None,
        }
    }

    /// Whether `γ` is a locally integrable function with `𝓕μ = γ`.
    pub fn has_physical_kernel(&self) -> bool {
        match *self {
            SpectralMeasure::Riesz { alpha, dim, .. } => alpha < dim.get() as f64,
            _ => true,
        }
    }

    /// Covariance kernel `γ(x)`; `+∞` at the Riesz singularity `x = 0`.
    pub fn gamma_eval(&self, x: Vec2) -> f64 {
        match *self {
            SpectralMeasure::Riesz { alpha, c, .. } => {
                let r = norm(x);
                if r == 0.0 {
                    f64::INFINITY
                } else {
                    c * r.powf(-alpha)
                }
            }
            SpectralMeasure::SpectralAtoms { .. } => self
                .atom_points()
                .iter()
                .map(|&(xi, w)| w * dot(xi, x).cos())
                .sum(),
            SpectralMeasure::GaussianDensity {
                total_mass, bandwidth, ..
            } => total_mass * (-0.5 * bandwidth * bandwidth * norm_sq(x)).exp(),
        }
    }

    /// `∫_{|ξ| <= cutoff} h(|ξ|) μ(dξ)`; `cutoff = None` means all of `R^d`.
    ///
    /// Riesz integrals use `u = r^α`, which turns `r^{α-1} dr` into
    /// `du / α` and removes the power singularity at the origin.
    pub fn radial_integral<F>(&self, h: F, cutoff: Option<f64>, opts: QuadOptions) -> Result<f64>
    where
        F: Fn(f64) -> f64,
    {
        match *self {
            SpectralMeasure::SpectralAtoms { .. } => Ok(self
                .atom_points()
                .iter()
                .filter(|(xi, _)| cutoff.map_or(true, |c| norm(*xi) <= c))
                .map(|&(xi, w)| w * h(norm(xi)))
                .sum()),
            SpectralMeasure::Riesz { .. } => {
                let (alpha, ck, dim) = self.riesz_density_constant().expect("riesz");
                let pref = ck * dim.sphere_area() / alpha;
                let g = |u: f64| {
                    if u <= 0.0 {
                        h(0.0)
                    } else {
                        h(u.powf(1.0 / alpha))
                    }
                };
                let r = match cutoff {
                    Some(c) => {
                        // Split at u = 1 so the adaptive rule sees both scales.
                        let top = c.powf(alpha);
                        if top <= 1.0 {
                            quad::integrate(&g, 0.0, top, opts)?.value
                        } else {
                            quad::integrate(&g, 0.0, 1.0, opts)?.value + quad::integrate(&g, 1.0, top, opts)?.value
                        }
                    }
                    None => quad::integrate(&g, 0.0, 1.0, opts)?.value + quad::integrate_to_infinity(&g, 1.0, opts)?.value,
                };
                Ok(pref * r)
            }
            SpectralMeasure::GaussianDensity {
                dim,
                total_mass,
                bandwidth,
            } => {
                let d = dim.get() as i32;
                let pref = total_mass * (2.0 * PI).powf(-0.5 * d as f64) * dim.sphere_area();
                let top = cutoff.map_or(40.0, |c| (c / bandwidth).min(40.0));
                let r = quad::integrate(
                    |s| h(bandwidth * s) * (-0.5 * s * s).exp() * s.powi(d - 1),
                    0.0,
                    top,
                    opts,
                )?;
                Ok(pref * r.value)
            }
        }
    }

    /// `E|Ẇ^ε(x)|² = ∫ e^{-ε|ξ|²} μ(dξ)`.
    pub fn mollified_variance(&self, eps: f64) -> Result<f64> {
        check_eps(eps)?;
        if eps == 0.0 && self.total_mass().is_infinite() {
            return Err(Error::InfiniteVariance(
                "the unmollified field of an infinite spectral measure has no pointwise variance".into(),
            ));
        }
        self.radial_integral(
            |r| (-eps * r * r).exp(),
            None,
            QuadOptions::with_abs_tol(SPECTRAL_ABS_TOL),
        )
    }

    /// Truncated `∫_{|ξ|<=cutoff} (1 + |ξ|²)^{-1/2} μ(dξ)`.
    pub fn condition_c_constant(&self, cutoff: f64) -> Result<f64> {
        check_cutoff(cutoff)?;
        self.radial_integral(
            |r| (1.0 + r * r).powf(-0.5),
            Some(cutoff),
            QuadOptions::with_abs_tol(SPECTRAL_ABS_TOL),
        )
    }

    /// Truncated `∫_{|ξ|<=cutoff} (1 + |ξ|²)^{-1} μ(dξ)`.
    pub fn condition_d_constant(&self, cutoff: f64) -> Result<f64> {
        check_cutoff(cutoff)?;
        self.radial_integral(
            |r| 1.0 / (1.0 + r * r),
            Some(cutoff),
            QuadOptions::with_abs_tol(SPECTRAL_ABS_TOL),
        )
    }

    /// Evaluator for the pairing covariance
    /// `(p_{2ε} * γ)(z) = ∫ e^{-ε|ξ|²} cos(ξ·z) μ(dξ)`.
    pub fn pairing_covariance(&self, eps: f64) -> Result<PairingCovariance> {
        check_eps(eps)?;
        Ok(match *self {
            SpectralMeasure::SpectralAtoms { .. } => PairingCovariance::Atoms(
                self.atom_points()
                    .into_iter()
                    .map(|(xi, w)| (xi, w * (-eps * norm_sq(xi)).exp()))
                    .collect(),
            ),
            SpectralMeasure::GaussianDensity {
                dim,
                total_mass,
                bandwidth,
            } => {
                let spread = 1.0 + 2.0 * eps * bandwidth * bandwidth;
                PairingCovariance::Gaussian {
                    scale: total_mass * spread.powf(-0.5 * dim.get() as f64),
                    rate: 0.5 * bandwidth * bandwidth / spread,
                }
            }
            SpectralMeasure::Riesz { alpha, dim, c } => {
                if alpha >= dim.get() as f64 {
                    return Err(Error::Unsupported(
                        "closed-form pairing covariance needs alpha < d; use the quadrature route".into(),
                    ));
                }
                if eps == 0.0 {
                    PairingCovariance::Riesz { c, alpha }
                } else {
                    let (_, ck, _) = self.riesz_density_constant().expect("riesz");
                    let d = dim.get() as f64;
                    PairingCovariance::RieszMollified {
                        scale: ck * PI.powf(0.5 * d) * special::gamma(0.5 * alpha) / special::gamma(0.5 * d)
                            * eps.powf(-0.5 * alpha),
                        a: 0.5 * alpha,
                        b: 0.5 * d,
                        inv_4eps: 0.25 / eps,
                    }
                }
            }
        })
    }

    /// The same covariance by spectral-domain quadrature
    /// (`cos` in d = 1, the Bessel function `J_0` after the angular
    /// integration in d = 2).
    pub fn pairing_covariance_quadrature(&self, eps: f64, z: Vec2) -> Result<f64> {
        check_eps(eps)?;
        if eps == 0.0 && self.total_mass().is_infinite() {
            return Err(Error::Unsupported(
                "oscillatory spectral integral without mollification".into(),
            ));
        }
        let rz = norm(z);
        let dim = self.dim();
        if self.is_atomic() {
            return Ok(self
                .atom_points()
                .iter()
                .map(|&(xi, w)| w * (-eps * norm_sq(xi)).exp() * dot(xi, z).cos())
                .sum());
        }
        let opts = QuadOptions {
            abs_tol: 1e-11,
            rel_tol: 1e-11,
            max_subdivisions: 20_000,
        };
        match dim {
            Dim::One => self.radial_integral(|r| (-eps * r * r).exp() * (r * rz).cos(), None, opts),
            Dim::Two => self.radial_integral(|r| (-eps * r * r).exp() * special::bessel_j0(r * rz), None, opts),
        }
    }

    /// Spectral realization of `Ẇ^ε`.
    ///
    /// Atoms give one mode per mirror pair and reproduce the covariance
    /// exactly. Continuous measures draw `n_freq` frequencies from the
    /// normalized `e^{-ε|ξ|²} μ(dξ)` with amplitudes `σ_k² = C_{μ,ε} / n_freq`,
    /// which is unbiased for the covariance at every `n_freq`.
    pub fn sample_noise(&self, eps: f64, n_freq: usize, seed: u64) -> Result<NoiseSample> {
        check_eps(eps)?;
        let dim = self.dim();
        let mut rng = stream_rng(seed, tag::NOISE, 0, 0);
        let mut modes: Vec<(Vec2, f64)> = Vec::new();
        match *self {
            SpectralMeasure::SpectralAtoms { .. } => {
                let pts = self.atom_points();
                let mut used = vec![false; pts.len()];
                for i in 0..pts.len() {
                    if used[i] {
                        continue;
                    }
                    used[i] = true;
                    let (xi, w) = pts[i];
                    let damp = (-eps * norm_sq(xi)).exp();
                    if norm(xi) == 0.0 {
                        modes.push((xi, (w * damp).sqrt()));
                        continue;
                    }
                    let j = (0..pts.len())
                        .find(|&j| !used[j] && close(pts[j].0, [-xi[0], -xi[1]]))
                        .expect("validated symmetric atoms");
                    used[j] = true;
                    let canonical = if xi[0] > 0.0 || (xi[0] == 0.0 && xi[1] > 0.0) {
                        xi
                    } else {
                        pts[j].0
                    };
                    modes.push((canonical, (2.0 * w * damp).sqrt()));
                }
            }
            SpectralMeasure::GaussianDensity { bandwidth, .. } => {
                require_freq(n_freq)?;
                let mass = self.mollified_variance(eps)?;
                let sd = bandwidth / (1.0 + 2.0 * eps * bandwidth * bandwidth).sqrt();
                let amp = (mass / n_freq as f64).sqrt();
                for _ in 0..n_freq {
                    let a: f64 = rng.sample(StandardNormal);
                    let b: f64 = if dim == Dim::Two { rng.sample(StandardNormal) } else { 0.0 };
                    modes.push(([sd * a, sd * b], amp));
                }
            }
            SpectralMeasure::Riesz { alpha, .. } => {
                require_freq(n_freq)?;
                if eps == 0.0 {
                    return Err(Error::InfiniteVariance(
                        "Riesz noise needs eps > 0 for a pointwise realization".into(),
                    ));
                }
                let mass = self.mollified_variance(eps)?;
                if !(mass > 0.0) {
                    return Err(Error::ZeroMass("mollified spectral measure".into()));
                }
                // |ξ|² ~ Gamma(α/2, rate ε) under the normalized e^{-ε|ξ|²} μ.
                let radius_sq = Gamma::new(0.5 * alpha, 1.0 / eps).map_err(|e| invalid(e.to_string()))?;
                let amp = (mass / n_freq as f64).sqrt();
                for _ in 0..n_freq {
                    let r = radius_sq.sample(&mut rng).sqrt();
                    modes.push((scale_dir(r, random_direction(dim, &mut rng)), amp));
                }
            }
        }
        let mut gauss_cos = Vec::with_capacity(modes.len());
        let mut gauss_sin = Vec::with_capacity(modes.len());
        for _ in &modes {
            gauss_cos.push(rng.sample(StandardNormal));
            gauss_sin.push(rng.sample(StandardNormal));
        }
        let (frequencies, amplitudes) = modes.into_iter().unzip();
        Ok(NoiseSample {
            dim,
            epsilon: eps,
            frequencies,
            amplitudes,
            gauss_cos,
            gauss_sin,
            seed,
        })
    }
}

fn close(a: Vec2, b: Vec2) -> bool {
    (a[0] - b[0]).abs() <= ATOM_MATCH_TOL * (1.0 + a[0].abs()) && (a[1] - b[1]).abs() <= ATOM_MATCH_TOL * (1.0 + a[1].abs())
}

fn check_eps(eps: f64) -> Result<()> {
    if eps.is_finite() && eps >= 0.0 {
        Ok(())
    } else {
        Err(invalid(format!("eps must be a non-negative finite number, got {eps}")))
    }
}

fn check_cutoff(cutoff: f64) -> Result<()> {
    if cutoff.is_finite() && cutoff > 0.0 {
        Ok(())
    } else {
        Err(invalid(format!("cutoff must be positive, got {cutoff}")))
    }
}

fn require_freq(n_freq: usize) -> Result<()> {
    if n_freq == 0 {
        Err(invalid("n_freq must be at least 1 for continuous spectral measures"))
    } else {
        Ok(())
    }
}

pub(crate) fn random_direction<R: Rng + ?Sized>(dim: Dim, rng: &mut R) -> Vec2 {
    match dim {
        Dim::One => {
            if rng.gen::<bool>() {
                [1.0, 0.0]
            } else {
                [-1.0, 0.0]
            }
        }
        Dim::Two => {
            let theta = 2.0 * PI * rng.gen::<f64>();
            [theta.cos(), theta.sin()]
        }
    }
}

fn scale_dir(r: f64, dir: Vec2) -> Vec2 {
    [r * dir[0], r * dir[1]]
}

/// Evaluator for `∫ e^{-ε|ξ|²} cos(ξ·z) μ(dξ)` with constants precomputed.
#[derive(Debug, Clone, PartialEq)]
pub enum PairingCovariance {
    Atoms(Vec<(Vec2, f64)>),
    Gaussian { scale: f64, rate: f64 },
    Riesz { c: f64, alpha: f64 },
    RieszMollified { scale: f64, a: f64, b: f64, inv_4eps: f64 },
}

impl PairingCovariance {
    /// Value at lag `z`; `+∞` at `z = 0` for unmollified Riesz noise.
    pub fn eval(&self, z: Vec2) -> f64 {
        match self {
            PairingCovariance::Atoms(atoms) => atoms.iter().map(|&(xi, w)| w * dot(xi, z).cos()).sum(),
            PairingCovariance::Gaussian { scale, rate } => scale * (-rate * norm_sq(z)).exp(),
            PairingCovariance::Riesz { c, alpha } => {
                let r = norm(z);
                if r == 0.0 {
                    f64::INFINITY
                } else {
                    c * r.powf(-alpha)
                }
            }
            PairingCovariance::RieszMollified { scale, a, b, inv_4eps } => {
                scale * special::kummer_m_neg(*a, *b, norm_sq(z) * inv_4eps)
            }
        }
    }
}

/// Finite spectral realization
/// `Ẇ^ε(x) = Σ_k σ_k (a_k cos(ξ_k·x) + b_k sin(ξ_k·x))`.
///
/// The mollification factor `e^{-ε|ξ_k|²/2}` is folded into the stored
/// amplitudes `σ_k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseSample {
    pub dim: Dim,
    pub epsilon: f64,
    pub frequencies: Vec<Vec2>,
    pub amplitudes: Vec<f64>,
    pub gauss_cos: Vec<f64>,
    pub gauss_sin: Vec<f64>,
    pub seed: u64,
}

impl NoiseSample {
    /// Realization with explicitly pinned modes and Gaussian coefficients.
    pub fn from_modes(dim: Dim, modes: &[(Vec2, f64)], gauss_cos: &[f64], gauss_sin: &[f64]) -> Result<Self> {
        if gauss_cos.len() != modes.len() || gauss_sin.len() != modes.len() {
            return Err(invalid("one (a, b) pair of Gaussian coefficients is needed per mode"));
        }
        Ok(NoiseSample {
            dim,
            epsilon: 0.0,
            frequencies: modes.iter().map(|m| m.0).collect(),
            amplitudes: modes.iter().map(|m| m.1).collect(),
            gauss_cos: gauss_cos.to_vec(),
            gauss_sin: gauss_sin.to_vec(),
            seed: 0,
        })
    }

    /// Identically zero realization.
    pub fn zero(dim: Dim) -> Self {
        NoiseSample {
            dim,
            epsilon: 0.0,
            frequencies: vec![],
            amplitudes: vec![],
            gauss_cos: vec![],
            gauss_sin: vec![],
            seed: 0,
        }
    }

    pub fn n_modes(&self) -> usize {
        self.frequencies.len()
    }

    #[inline]
    pub fn eval(&self, x: Vec2) -> f64 {
        let mut s = 0.0;
        for k in 0..self.frequencies.len() {
            let (sin, cos) = dot(self.frequencies[k], x).sin_cos();
            s += self.amplitudes[k] * (self.gauss_cos[k] * cos + self.gauss_sin[k] * sin);
        }
        s
    }

    /// Covariance of the field conditional on the sampled frequencies:
    /// `Σ σ_k² cos(ξ_k·(x - y))`.
    pub fn mode_covariance(&self, x: Vec2, y: Vec2) -> f64 {
        let z = [x[0] - y[0], x[1] - y[1]];
        self.frequencies
            .iter()
            .zip(&self.amplitudes)
            .map(|(&xi, &s)| s * s * dot(xi, z).cos())
            .sum()
    }

    /// Same modes with every Gaussian coefficient multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        let mut out = self.clone();
        out.gauss_cos.iter_mut().for_each(|a| *a *= factor);
        out.gauss_sin.iter_mut().for_each(|b| *b *= factor);
        out
    }

    /// `sup_x |Ẇ(x)| <= Σ σ_k sqrt(a_k² + b_k²)`.
    pub fn sup_bound(&self) -> f64 {
        (0..self.n_modes())
            .map(|k| self.amplitudes[k] * self.gauss_cos[k].hypot(self.gauss_sin[k]))
            .sum()
    }
}
