//! Picard iteration for the mollified equation on one noise realization,
//!
//! `v_{n+1}(t, x) = 1 + ∫_0^t ∫ G(t-s, x-y) v_n(s, y) Ẇ(y) dy ds`, `v_0 = 1`.
//!
//! The grid covers `[x_c - T, x_c + T]` per axis, which is exactly the
//! backward light cone of the apex `(T, x_c)`. Only values inside that cone
//! are exact discretizations; cones of other grid points are clipped at the
//! domain boundary.
//!
//! Time integrals use the trapezoid rule on the uniform time grid. In d = 1
//! the space integral over `|x - y| < t - s` is a difference of prefix
//! integrals of the piecewise-linear interpolant, with the fractional
//! boundary cells integrated exactly. In d = 2 the cone integral is written
//! with `y = x - τ sin φ e_θ`, `τ = t - s`, which turns the kernel into the
//! smooth weight `τ sin φ / (2π)`; it is evaluated with Gauss–Legendre nodes
//! in `φ`, the periodic trapezoid rule in `θ` and bilinear interpolation.

use serde::Serialize;
use std::f64::consts::PI;

use crate::error::{invalid, Error, Result};
use crate::exec::{derive_seed, map_indexed, Execution};
use crate::geometry::{Dim, Vec2};
use crate::noise::{NoiseSample, SpectralMeasure};
use crate::quad::gauss_legendre;
use crate::stats::{Accumulator, EstimatorResult};

/// Default Picard depth; the increments decay like `t^{2n}/(n!)^{3/2}`.
pub const DEFAULT_ITERS: usize = 12;

/// Uniform space-time grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GridSpec {
    pub t_max: f64,
    pub x_center: Vec2,
    /// Number of time steps; the grid has `n_t + 1` time levels.
    pub n_t: usize,
    /// Points per axis, odd so that `x_center` is a grid point.
    pub n_x: usize,
    pub dim: Dim,
    /// Gauss–Legendre nodes in `φ` (d = 2 only).
    pub n_phi: usize,
    /// Trapezoid nodes in `θ` (d = 2 only).
    pub n_theta: usize,
}

impl GridSpec {
    pub fn new(dim: Dim, t_max: f64, x_center: Vec2, n_t: usize, n_x: usize) -> Self {
        GridSpec {
            t_max,
            x_center,
            n_t,
            n_x,
            dim,
            n_phi: 8,
            n_theta: 16,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.t_max > 0.0 && self.t_max.is_finite()) {
            return Err(invalid(format!("t_max must be positive, got {}", self.t_max)));
        }
        if self.n_t < 1 {
            return Err(invalid("n_t must be at least 1"));
        }
        if self.n_x < 3 || self.n_x % 2 == 0 {
            return Err(invalid(format!("n_x must be odd and at least 3, got {}", self.n_x)));
        }
        if self.dim == Dim::Two && (self.n_phi == 0 || self.n_theta == 0) {
            return Err(invalid("n_phi and n_theta must be positive"));
        }
        if !(self.x_center[0].is_finite() && self.x_center[1].is_finite()) {
            return Err(invalid("x_center must be finite"));
        }
        Ok(())
    }

    pub fn dt(&self) -> f64 {
        self.t_max / self.n_t as f64
    }

    pub fn dx(&self) -> f64 {
        2.0 * self.t_max / (self.n_x - 1) as f64
    }

    pub fn time(&self, i: usize) -> f64 {
        i as f64 * self.dt()
    }

    /// Coordinate of index `j` along `axis`.
    pub fn coord(&self, axis: usize, j: usize) -> f64 {
        self.x_center[axis] - self.t_max + j as f64 * self.dx()
    }

    pub fn points_per_slice(&self) -> usize {
        match self.dim {
            Dim::One => self.n_x,
            Dim::Two => self.n_x * self.n_x,
        }
    }

    /// Spatial point of a flat slice index (row-major in d = 2).
    pub fn point(&self, k: usize) -> Vec2 {
        match self.dim {
            Dim::One => [self.coord(0, k), 0.0],
            Dim::Two => [self.coord(0, k / self.n_x), self.coord(1, k % self.n_x)],
        }
    }

    /// Flat index of `x_center`.
    pub fn center_index(&self) -> usize {
        let c = self.n_x / 2;
        match self.dim {
            Dim::One => c,
            Dim::Two => c * self.n_x + c,
        }
    }

    /// Half the resolution in time and space (used for error estimates).
    pub fn coarsened(&self) -> GridSpec {
        let mut g = *self;
        g.n_t = (self.n_t / 2).max(1);
        g.n_x = ((self.n_x - 1) / 2).max(2) / 2 * 2 + 1;
        g.n_phi = (self.n_phi / 2).max(2);
        g.n_theta = (self.n_theta / 2).max(4);
        g
    }
}

/// Values on all time levels; `values[i * points_per_slice + k]`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FieldGrid {
    pub spec: GridSpec,
    pub values: Vec<f64>,
}

impl FieldGrid {
    pub fn constant(spec: GridSpec, c: f64) -> Self {
        FieldGrid {
            spec,
            values: vec![c; (spec.n_t + 1) * spec.points_per_slice()],
        }
    }

    pub fn slice(&self, i: usize) -> &[f64] {
        let m = self.spec.points_per_slice();
        &self.values[i * m..(i + 1) * m]
    }

    pub fn get(&self, i: usize, k: usize) -> f64 {
        self.values[i * self.spec.points_per_slice() + k]
    }

    /// Value at `(t_max, x_center)`.
    pub fn apex(&self) -> f64 {
        self.get(self.spec.n_t, self.spec.center_index())
    }

    /// `sup |self - other|` over the backward cone of the apex.
    pub fn cone_sup_diff(&self, other: &FieldGrid) -> f64 {
        let s = &self.spec;
        let mut m: f64 = 0.0;
        for i in 0..=s.n_t {
            let reach = s.t_max - s.time(i) + 1e-12;
            for k in 0..s.points_per_slice() {
                let p = s.point(k);
                let r = (p[0] - s.x_center[0]).hypot(p[1] - s.x_center[1]);
                if r <= reach {
                    m = m.max((self.get(i, k) - other.get(i, k)).abs());
                }
            }
        }
        m
    }
}

/// Iterates `v_0 ≡ 1, v_1, …, v_{n_iters}`.
pub fn picard_run(noise: &NoiseSample, spec: &GridSpec, n_iters: usize) -> Result<Vec<FieldGrid>> {
    spec.validate()?;
    if n_iters == 0 {
        return Err(invalid("n_iters must be at least 1"));
    }
    if noise.dim != spec.dim {
        return Err(invalid("noise and grid dimensions differ"));
    }
    let w: Vec<f64> = (0..spec.points_per_slice()).map(|k| noise.eval(spec.point(k))).collect();
    let mut out = Vec::with_capacity(n_iters + 1);
    out.push(FieldGrid::constant(*spec, 1.0));
    let stepper = match spec.dim {
        Dim::One => Stepper::One,
        Dim::Two => Stepper::Two(ConeStencil::new(spec)),
    };
    for _ in 0..n_iters {
        let next = stepper.apply(out.last().expect("non-empty"), &w)?;
        out.push(next);
    }
    Ok(out)
}

enum Stepper {
    One,
    Two(ConeStencil),
}

impl Stepper {
    fn apply(&self, prev: &FieldGrid, w: &[f64]) -> Result<FieldGrid> {
        match self {
            Stepper::One => step_1d(prev, w),
            Stepper::Two(st) => step_2d(prev, w, st),
        }
    }
}

/// Trapezoid weights on levels `0..=i` with spacing `dt`.
fn trapezoid_weight(l: usize, i: usize, dt: f64) -> f64 {
    if l == 0 || l == i {
        0.5 * dt
    } else {
        dt
    }
}

fn non_finite(spec: &GridSpec, i: usize, k: usize, value: f64) -> Error {
    Error::NonFinite {
        t: spec.time(i),
        x: spec.dim.coords(spec.point(k)),
        value,
    }
}

/// Prefix integrals of the piecewise-linear interpolant of `f`.
fn prefix_integral(f: &[f64], h: f64, out: &mut Vec<f64>) {
    out.clear();
    out.push(0.0);
    for j in 1..f.len() {
        let p = out[j - 1] + 0.5 * h * (f[j - 1] + f[j]);
        out.push(p);
    }
}

/// `∫_{x_0}^{y}` of the interpolant, for `y` clamped to the grid.
fn prefix_at(f: &[f64], prefix: &[f64], x0: f64, h: f64, y: f64) -> f64 {
    let n = f.len();
    let u = ((y - x0) / h).clamp(0.0, (n - 1) as f64);
    let j = (u.floor() as usize).min(n - 2);
    let frac = (u - j as f64) * h;
    let slope = (f[j + 1] - f[j]) / h;
    prefix[j] + frac * f[j] + 0.5 * frac * frac * slope
}

fn step_1d(prev: &FieldGrid, w: &[f64]) -> Result<FieldGrid> {
    let spec = prev.spec;
    let (nt, nx) = (spec.n_t, spec.n_x);
    let (dt, h) = (spec.dt(), spec.dx());
    let x0 = spec.coord(0, 0);
    // f_l = v_n(t_l, ·) Ẇ and its prefix integrals, per level.
    let mut fs = Vec::with_capacity(nt + 1);
    let mut prefixes = Vec::with_capacity(nt + 1);
    for l in 0..=nt {
        let f: Vec<f64> = prev.slice(l).iter().zip(w).map(|(v, w)| v * w).collect();
        let mut p = Vec::with_capacity(nx);
        prefix_integral(&f, h, &mut p);
        fs.push(f);
        prefixes.push(p);
    }
    let mut out = FieldGrid::constant(spec, 1.0);
    for i in 1..=nt {
        let t = spec.time(i);
        for k in 0..nx {
            let x = spec.coord(0, k);
            let mut acc = 0.0;
            // The level l = i has an empty cone.
            for l in 0..i {
                let tau = t - spec.time(l);
                let hi = prefix_at(&fs[l], &prefixes[l], x0, h, x + tau);
                let lo = prefix_at(&fs[l], &prefixes[l], x0, h, x - tau);
                acc += trapezoid_weight(l, i, dt) * 0.5 * (hi - lo);
            }
            let v = 1.0 + acc;
            if !v.is_finite() {
                return Err(non_finite(&spec, i, k, v));
            }
            out.values[i * nx + k] = v;
        }
    }
    Ok(out)
}

/// Unit offsets `(sin φ_a cos θ_b, sin φ_a sin θ_b)` with weights
/// `w_a · sin φ_a · (2π / n_θ) / (2π)`.
struct ConeStencil {
    offsets: Vec<(Vec2, f64)>,
}

impl ConeStencil {
    fn new(spec: &GridSpec) -> Self {
        let rule = gauss_legendre(spec.n_phi);
        let mut offsets = Vec::with_capacity(spec.n_phi * spec.n_theta);
        for (phi, wphi) in rule.mapped(0.0, 0.5 * PI) {
            let s = phi.sin();
            for b in 0..spec.n_theta {
                let theta = 2.0 * PI * b as f64 / spec.n_theta as f64;
                offsets.push(([s * theta.cos(), s * theta.sin()], wphi * s / spec.n_theta as f64));
            }
        }
        ConeStencil { offsets }
    }
}

fn bilinear(f: &[f64], n: usize, origin: Vec2, h: f64, y: Vec2) -> f64 {
    let u = ((y[0] - origin[0]) / h).clamp(0.0, (n - 1) as f64);
    let v = ((y[1] - origin[1]) / h).clamp(0.0, (n - 1) as f64);
    let i = (u.floor() as usize).min(n - 2);
    let j = (v.floor() as usize).min(n - 2);
    let (a, b) = (u - i as f64, v - j as f64);
    let at = |i: usize, j: usize| f[i * n + j];
    (1.0 - a) * ((1.0 - b) * at(i, j) + b * at(i, j + 1)) + a * ((1.0 - b) * at(i + 1, j) + b * at(i + 1, j + 1))
}

fn step_2d(prev: &FieldGrid, w: &[f64], stencil: &ConeStencil) -> Result<FieldGrid> {
    let spec = prev.spec;
    let (nt, nx) = (spec.n_t, spec.n_x);
    let m = spec.points_per_slice();
    let (dt, h) = (spec.dt(), spec.dx());
    let origin = [spec.coord(0, 0), spec.coord(1, 0)];
    let fs: Vec<Vec<f64>> = (0..=nt)
        .map(|l| prev.slice(l).iter().zip(w).map(|(v, w)| v * w).collect())
        .collect();
    let mut out = FieldGrid::constant(spec, 1.0);
    for i in 1..=nt {
        let t = spec.time(i);
        for k in 0..m {
            let x = spec.point(k);
            let mut acc = 0.0;
            for l in 0..i {
                let tau = t - spec.time(l);
                let mut cone = 0.0;
                for &(off, wt) in &stencil.offsets {
                    let y = [x[0] - tau * off[0], x[1] - tau * off[1]];
                    cone += wt * bilinear(&fs[l], nx, origin, h, y);
                }
                acc += trapezoid_weight(l, i, dt) * tau * cone;
            }
            let v = 1.0 + acc;
            if !v.is_finite() {
                return Err(non_finite(&spec, i, k, v));
            }
            out.values[i * m + k] = v;
        }
    }
    Ok(out)
}

/// `H_n = v_n - v_{n-1}`, with `H_0 ≡ 1`.
pub fn chaos_increment(iterates: &[FieldGrid], n: usize) -> Result<FieldGrid> {
    if n >= iterates.len() {
        return Err(Error::IndexOutOfRange {
            index: n,
            len: iterates.len(),
        });
    }
    if n == 0 {
        return Ok(FieldGrid::constant(iterates[0].spec, 1.0));
    }
    let (a, b) = (&iterates[n], &iterates[n - 1]);
    Ok(FieldGrid {
        spec: a.spec,
        values: a.values.iter().zip(&b.values).map(|(x, y)| x - y).collect(),
    })
}

/// Apex value together with the discrepancy against a run at half the
/// resolution, used as the grid error bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ApexValue {
    pub value: f64,
    pub grid_error: f64,
}

/// `v_{n_iters}(t_max, x_center)` with its grid error bound.
pub fn apex_with_error(noise: &NoiseSample, spec: &GridSpec, n_iters: usize) -> Result<ApexValue> {
    let fine = picard_run(noise, spec, n_iters)?;
    let coarse = picard_run(noise, &spec.coarsened(), n_iters)?;
    let value = fine.last().expect("iterates").apex();
    let grid_error = (value - coarse.last().expect("iterates").apex()).abs();
    Ok(ApexValue { value, grid_error })
}

/// Sampling controls for [`moment_estimate`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PicardMoments {
    pub n_iters: usize,
    pub n_realizations: usize,
    pub seed: u64,
    /// Spectral modes per realization for continuous measures.
    pub n_freq: usize,
    pub exec: Execution,
}

impl PicardMoments {
    pub fn new(n_realizations: usize, seed: u64) -> Self {
        PicardMoments {
            n_iters: DEFAULT_ITERS,
            n_realizations,
            seed,
            n_freq: 256,
            exec: Execution::default(),
        }
    }
}

/// Apex values of every iterate, one row per noise realization; row `r`
/// uses the noise seed `derive_seed(seed, r)`.
pub fn apex_samples(measure: &SpectralMeasure, eps: f64, spec: &GridSpec, cfg: &PicardMoments) -> Result<Vec<Vec<f64>>> {
    if cfg.n_realizations < 2 {
        return Err(invalid("n_realizations must be at least 2"));
    }
    spec.validate()?;
    measure.validate()?;
    if measure.dim() != spec.dim {
        return Err(invalid("measure and grid dimensions differ"));
    }
    let rows = map_indexed(cfg.n_realizations, cfg.exec, |r| -> Result<Vec<f64>> {
        let noise = measure.sample_noise(eps, cfg.n_freq, derive_seed(cfg.seed, r as u64))?;
        let its = picard_run(&noise, spec, cfg.n_iters)?;
        Ok(its.iter().map(FieldGrid::apex).collect())
    });
    rows.into_iter().collect()
}

/// Mean and second moment of `v^ε(t_max, x_center)` over noise realizations.
pub fn moment_estimate(
    measure: &SpectralMeasure,
    eps: f64,
    spec: &GridSpec,
    cfg: &PicardMoments,
) -> Result<(EstimatorResult, EstimatorResult)> {
    let rows = apex_samples(measure, eps, spec, cfg)?;
    let last: Vec<f64> = rows.iter().map(|r| *r.last().expect("iterates")).collect();
    let mean: Accumulator = last.iter().copied().collect();
    let second: Accumulator = last.iter().map(|v| v * v).collect();
    Ok((
        EstimatorResult::from_accumulator(&mean, cfg.seed),
        EstimatorResult::from_accumulator(&second, cfg.seed),
    ))
}
