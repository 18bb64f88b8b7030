//! Monte Carlo over Poisson-interpolated paths.
//!
//! A path starts at the origin, jumps at the times of a rate-1 Poisson
//! process on `(0, t]`, and between jumps moves with constant velocity `U_i`
//! drawn from the density `G(1, ·)`. The solution of the mollified equation
//! is
//!
//! `v^ε(t, x) = e^t E[∏ (τ_i - τ_{i-1}) ∏ Ẇ^ε(x + X_{τ_i})]`,
//!
//! and its moments follow by Isserlis' theorem applied to the Gaussian
//! factors.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::combinatorics::{hafnian, SymMatrix};
use crate::error::{invalid, Error, Result};
use crate::exec::{chunks, map_indexed, stream_rng, tag, Execution};
use crate::geometry::{add, sub, Dim, Vec2};
use crate::kernel::sample_unit_bump;
use crate::noise::{NoiseSample, PairingCovariance, SpectralMeasure};
use crate::stats::{pairwise_merge, Accumulator, EstimatorResult};

/// Joint Isserlis reductions larger than this are scored as truncated.
pub const MAX_PAIRING_SIZE: usize = 24;

/// Re-draws allowed per chunk before a divergent covariance becomes an error.
const MAX_RESAMPLES_PER_CHUNK: u64 = 64;

/// One trajectory on `[0, t_horizon]`.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct JumpPath {
    pub t_horizon: f64,
    pub jump_times: Vec<f64>,
    /// `U_1, …, U_N`; `U_i` is the velocity on `(τ_{i-1}, τ_i]`.
    pub directions: Vec<Vec2>,
    /// `X_{τ_1}, …, X_{τ_N}` (the start `X_0 = 0` is implicit).
    pub positions: Vec<Vec2>,
}

impl JumpPath {
    pub fn n_jumps(&self) -> usize {
        self.jump_times.len()
    }

    /// `∏ (τ_i - τ_{i-1})` with `τ_0 = 0`.
    pub fn gap_product(&self) -> f64 {
        let mut prev = 0.0;
        let mut p = 1.0;
        for &tau in &self.jump_times {
            p *= tau - prev;
            prev = tau;
        }
        p
    }

    /// `∏ (τ_{i+1} - τ_i)` with `τ_{N+1} = t_horizon`. Same law as
    /// [`gap_product`](Self::gap_product) given `N`, since uniform spacings
    /// are exchangeable.
    pub fn forward_gap_product(&self) -> f64 {
        let n = self.n_jumps();
        (0..n)
            .map(|i| self.jump_times.get(i + 1).copied().unwrap_or(self.t_horizon) - self.jump_times[i])
            .product()
    }

    fn reset(&mut self, t: f64) {
        self.t_horizon = t;
        self.jump_times.clear();
        self.directions.clear();
        self.positions.clear();
    }

    fn push_jump(&mut self, tau: f64, u: Vec2) {
        let prev_t = self.jump_times.last().copied().unwrap_or(0.0);
        let prev_x = self.positions.last().copied().unwrap_or([0.0, 0.0]);
        let dt = tau - prev_t;
        self.jump_times.push(tau);
        self.directions.push(u);
        self.positions.push([prev_x[0] + dt * u[0], prev_x[1] + dt * u[1]]);
    }
}

/// Exact draw of the path on `[0, t]`.
///
/// # Panics
/// If `t` is not positive and finite.
pub fn sample_jump_path<R: Rng + ?Sized>(t: f64, dim: Dim, rng: &mut R) -> JumpPath {
    assert!(t > 0.0 && t.is_finite(), "path horizon must be positive, got {t}");
    let mut path = JumpPath::default();
    fill_path(&mut path, t, dim, usize::MAX, rng);
    path
}

/// Returns `false` as soon as a jump beyond `max_jumps` occurs; the path is
/// then incomplete.
fn fill_path<R: Rng + ?Sized>(path: &mut JumpPath, t: f64, dim: Dim, max_jumps: usize, rng: &mut R) -> bool {
    path.reset(t);
    let mut tau = 0.0;
    loop {
        // 1 - u lies in (0, 1], so the logarithm is finite.
        tau -= (1.0 - rng.gen::<f64>()).ln();
        if tau > t {
            return true;
        }
        if path.n_jumps() == max_jumps {
            return false;
        }
        let u = sample_unit_bump(dim, rng);
        path.push_jump(tau, u);
    }
}

/// Path conditioned on exactly `n` jumps in `(0, t]`: the jump times are
/// sorted uniforms.
pub fn sample_conditional_path<R: Rng + ?Sized>(t: f64, n: usize, dim: Dim, rng: &mut R) -> JumpPath {
    let mut path = JumpPath::default();
    fill_conditional(&mut path, t, n, dim, rng);
    path
}

fn fill_conditional<R: Rng + ?Sized>(path: &mut JumpPath, t: f64, n: usize, dim: Dim, rng: &mut R) {
    path.reset(t);
    let mut times: Vec<f64> = (0..n).map(|_| t * rng.gen::<f64>()).collect();
    times.sort_by(f64::total_cmp);
    for tau in times {
        let u = sample_unit_bump(dim, rng);
        path.push_jump(tau, u);
    }
}

/// Sampling controls shared by the estimators.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FkConfig {
    pub n_paths: usize,
    pub max_jumps: usize,
    pub seed: u64,
    /// Stratify by jump count instead of sampling `N_t` (single-path
    /// estimators only).
    pub stratified: bool,
    pub exec: Execution,
}

impl FkConfig {
    pub fn new(n_paths: usize, max_jumps: usize, seed: u64) -> Self {
        FkConfig {
            n_paths,
            max_jumps,
            seed,
            stratified: false,
            exec: Execution::default(),
        }
    }

    pub fn stratified(mut self, on: bool) -> Self {
        self.stratified = on;
        self
    }

    pub fn with_exec(mut self, exec: Execution) -> Self {
        self.exec = exec;
        self
    }

    fn validate(&self, t: f64) -> Result<()> {
        if !(t > 0.0 && t.is_finite()) {
            return Err(invalid(format!("t must be positive, got {t}")));
        }
        if self.n_paths < 2 {
            return Err(invalid("n_paths must be at least 2"));
        }
        if self.max_jumps == 0 {
            return Err(invalid("max_jumps must be at least 1"));
        }
        Ok(())
    }
}

enum Score {
    Value(f64),
    Truncated,
    /// Divergent covariance at coincident points; redraw.
    Resample,
}

struct Scratch {
    path: JumpPath,
    other: JumpPath,
    points: Vec<Vec2>,
    cov: SymMatrix,
}

impl Default for Scratch {
    fn default() -> Self {
        Scratch {
            path: JumpPath::default(),
            other: JumpPath::default(),
            points: Vec::new(),
            cov: SymMatrix::zeros(0),
        }
    }
}

struct Totals {
    acc: Accumulator,
    truncated: u64,
}

/// Runs `n` samples in fixed chunks, each on its own stream, and merges the
/// per-chunk accumulators in chunk order.
fn run_chunked<F>(n: usize, seed: u64, stream_tag: u64, stratum: u64, exec: Execution, score: F) -> Result<Totals>
where
    F: Fn(&mut ChaCha8Rng, &mut Scratch) -> Score + Sync + Send,
{
    let plan = chunks(n);
    let parts = map_indexed(plan.len(), exec, |c| -> Result<(Accumulator, u64, u64)> {
        let len = plan[c].1;
        let mut rng = stream_rng(seed, stream_tag, stratum, c as u64);
        let mut scratch = Scratch::default();
        let mut acc = Accumulator::default();
        let (mut truncated, mut resampled) = (0u64, 0u64);
        while (acc.n as usize) < len {
            match score(&mut rng, &mut scratch) {
                Score::Value(v) => acc.push(v),
                Score::Truncated => {
                    truncated += 1;
                    acc.push(0.0);
                }
                Score::Resample => {
                    resampled += 1;
                    if resampled > MAX_RESAMPLES_PER_CHUNK {
                        return Err(Error::InfiniteVariance(
                            "pairing covariance keeps diverging at coincident path points".into(),
                        ));
                    }
                }
            }
        }
        Ok((acc, truncated, resampled))
    });
    let parts = parts.into_iter().collect::<Result<Vec<_>>>()?;
    let resampled: u64 = parts.iter().map(|p| p.2).sum();
    if resampled > 0 {
        log::info!("resampled {resampled} paths with coincident points");
    }
    let accs: Vec<Accumulator> = parts.iter().map(|p| p.0).collect();
    Ok(Totals {
        acc: pairwise_merge(&accs),
        truncated: parts.iter().map(|p| p.1).sum(),
    })
}

fn finish(totals: Totals, seed: u64, max_jumps: usize) -> EstimatorResult {
    let mut r = EstimatorResult::from_accumulator(&totals.acc, seed);
    r.truncation_max_jumps = max_jumps;
    r.truncated_fraction = if totals.acc.n == 0 {
        0.0
    } else {
        totals.truncated as f64 / totals.acc.n as f64
    };
    r
}

/// `t^n / n!`, which equals `e^t P(N_t = n)`.
fn poisson_scale(t: f64, n: usize) -> f64 {
    (1..=n).fold(1.0, |acc, k| acc * t / k as f64)
}

/// `P(N_t > m)` for a rate-1 Poisson count.
pub fn poisson_tail(t: f64, m: usize) -> f64 {
    let mut term = (-t).exp();
    let mut cdf = term;
    for n in 1..=m {
        term *= t / n as f64;
        cdf += term;
    }
    (1.0 - cdf).max(0.0)
}

/// Samples per stratum `n = 1..=max_jumps`, proportional to
/// `e^{-t} t^n/n! · t^n` (at least 2 each).
pub fn stratum_allocation(t: f64, max_jumps: usize, n_paths: usize) -> Vec<(usize, usize)> {
    let weights: Vec<(usize, f64)> = (1..=max_jumps)
        .map(|n| (n, (-t).exp() * poisson_scale(t, n) * t.powi(n as i32)))
        .collect();
    let total: f64 = weights.iter().map(|p| p.1).sum();
    weights
        .into_iter()
        .map(|(n, w)| (n, ((n_paths as f64 * w / total).round() as usize).max(2)))
        .collect()
}

/// Stratified estimate: stratum 0 contributes exactly 1, strata
/// `1..=max_jumps` use conditional paths scaled by `t^n/n!`, and the Poisson
/// tail beyond `max_jumps` is dropped (reported as `truncated_fraction`).
fn stratified<F>(t: f64, dim: Dim, cfg: &FkConfig, stream_tag: u64, score: F) -> Result<EstimatorResult>
where
    F: Fn(&mut Scratch) -> Option<f64> + Sync + Send,
{
    let mut mean = 1.0;
    let mut var = 0.0;
    let mut n_samples = 0u64;
    for (n, m) in stratum_allocation(t, cfg.max_jumps, cfg.n_paths) {
        let totals = run_stratum(t, n, m, dim, cfg.seed, stream_tag, cfg.exec, &score)?;
        mean += totals.acc.mean;
        var += totals.acc.stderr().powi(2);
        n_samples += totals.acc.n;
    }
    Ok(EstimatorResult {
        mean,
        stderr: var.sqrt(),
        n_samples,
        seed: cfg.seed,
        truncation_max_jumps: cfg.max_jumps,
        truncated_fraction: poisson_tail(t, cfg.max_jumps),
    })
}

#[allow(clippy::too_many_arguments)]
fn run_stratum<F>(t: f64, n: usize, m: usize, dim: Dim, seed: u64, stream_tag: u64, exec: Execution, score: &F) -> Result<Totals>
where
    F: Fn(&mut Scratch) -> Option<f64> + Sync + Send,
{
    let scale = poisson_scale(t, n);
    run_chunked(m, seed, stream_tag, n as u64, exec, |rng, s| {
        fill_conditional(&mut s.path, t, n, dim, rng);
        match score(s) {
            Some(v) if v.is_finite() => Score::Value(scale * v),
            Some(_) => Score::Resample,
            None => Score::Truncated,
        }
    })
}

/// `∏ Δτ · ∏ Ẇ(x + X_{τ_i})`.
fn realization_weight(noise: &NoiseSample, x: Vec2, path: &JumpPath) -> f64 {
    let mut w = path.gap_product();
    for &p in &path.positions {
        w *= noise.eval(add(x, p));
    }
    w
}

/// Isserlis value of `∏ Ẇ` at `points`: zero for odd counts, `None` when
/// the reduction is too large, non-finite when the covariance diverges.
fn pairing_value(pc: &PairingCovariance, points: &[Vec2], cov: &mut SymMatrix) -> Option<f64> {
    let n = points.len();
    if n % 2 == 1 {
        return Some(0.0);
    }
    if n > MAX_PAIRING_SIZE {
        return None;
    }
    cov.reset(n);
    for i in 0..n {
        for j in 0..i {
            let c = pc.eval(sub(points[i], points[j]));
            if !c.is_finite() {
                return Some(f64::NAN);
            }
            cov.set(i, j, c);
        }
    }
    Some(hafnian(cov))
}

/// `v^ε(t, x)` for one fixed noise realization.
///
/// Paths with more than `max_jumps` jumps score 0 and are counted in
/// `truncated_fraction`; the dropped terms are of order
/// `t^{2n}/(2n)! · sup|Ẇ|^n`.
pub fn fk_realization(noise: &NoiseSample, t: f64, x: Vec2, cfg: &FkConfig) -> Result<EstimatorResult> {
    cfg.validate(t)?;
    let dim = noise.dim;
    if cfg.stratified {
        return stratified(t, dim, cfg, tag::FK_PATHS, |s| Some(realization_weight(noise, x, &s.path)));
    }
    let et = t.exp();
    let totals = run_chunked(cfg.n_paths, cfg.seed, tag::FK_PATHS, 0, cfg.exec, |rng, s| {
        if !fill_path(&mut s.path, t, dim, cfg.max_jumps, rng) {
            return Score::Truncated;
        }
        Score::Value(et * realization_weight(noise, x, &s.path))
    })?;
    Ok(finish(totals, cfg.seed, cfg.max_jumps))
}

/// Contribution of the paths with exactly `n` jumps,
/// `e^t E[1_{N_t = n} ∏ Δτ ∏ Ẇ(x + X_{τ_i})]`, from conditional paths.
pub fn fk_stratum(noise: &NoiseSample, t: f64, x: Vec2, n: usize, n_paths: usize, seed: u64, exec: Execution) -> Result<EstimatorResult> {
    FkConfig::new(n_paths, n.max(1), seed).validate(t)?;
    if n == 0 {
        return Ok(EstimatorResult {
            mean: 1.0,
            stderr: 0.0,
            n_samples: 0,
            seed,
            truncation_max_jumps: 0,
            truncated_fraction: 0.0,
        });
    }
    let score = |s: &mut Scratch| Some(realization_weight(noise, x, &s.path));
    let totals = run_stratum(t, n, n_paths, noise.dim, seed, tag::FK_PATHS, exec, &score)?;
    Ok(finish(totals, seed, n))
}

/// `e^t E[∏ (τ_{i+1} - τ_i) 1_{N_t = n}]` with `τ_{n+1} = t`, from
/// unconditioned paths; the exact value is `t^{2n}/(2n)!`.
pub fn poisson_simplex_estimate(t: f64, n: usize, n_paths: usize, seed: u64, exec: Execution) -> Result<EstimatorResult> {
    FkConfig::new(n_paths, n.max(1), seed).validate(t)?;
    let et = t.exp();
    let totals = run_chunked(n_paths, seed, tag::FK_PATHS, 0, exec, |rng, s| {
        // The directions are irrelevant here; d = 1 keeps them cheap.
        if !fill_path(&mut s.path, t, Dim::One, n, rng) || s.path.n_jumps() != n {
            return Score::Value(0.0);
        }
        Score::Value(et * s.path.forward_gap_product())
    })?;
    Ok(finish(totals, seed, n))
}

fn covariance_for(measure: &SpectralMeasure, eps: f64) -> Result<PairingCovariance> {
    measure.validate()?;
    if eps == 0.0 && measure.total_mass().is_infinite() && !measure.has_physical_kernel() {
        return Err(Error::InfiniteVariance(
            "unmollified covariance is not locally integrable".into(),
        ));
    }
    measure.pairing_covariance(eps)
}

/// `E[v^ε(t, x)]` by averaging `e^t ∏ Δτ · E_W[∏ Ẇ(x + X_{τ_i})]`, the inner
/// expectation evaluated exactly by Isserlis' theorem.
pub fn fk_mean(measure: &SpectralMeasure, eps: f64, t: f64, x: Vec2, cfg: &FkConfig) -> Result<EstimatorResult> {
    cfg.validate(t)?;
    let pc = covariance_for(measure, eps)?;
    let dim = measure.dim();
    // The mean is translation invariant; x only enters through the points.
    let score = |path: &JumpPath, points: &mut Vec<Vec2>, cov: &mut SymMatrix| {
        points.clear();
        points.extend(path.positions.iter().map(|&p| add(x, p)));
        pairing_value(&pc, points, cov).map(|h| if h == 0.0 { 0.0 } else { path.gap_product() * h })
    };
    if cfg.stratified {
        return stratified(t, dim, cfg, tag::FK_PATHS, |s| score(&s.path, &mut s.points, &mut s.cov));
    }
    let et = t.exp();
    let totals = run_chunked(cfg.n_paths, cfg.seed, tag::FK_PATHS, 0, cfg.exec, |rng, s| {
        if !fill_path(&mut s.path, t, dim, cfg.max_jumps, rng) {
            return Score::Truncated;
        }
        match score(&s.path, &mut s.points, &mut s.cov) {
            Some(v) if v.is_finite() => Score::Value(et * v),
            Some(_) => Score::Resample,
            None => Score::Truncated,
        }
    })?;
    Ok(finish(totals, cfg.seed, cfg.max_jumps))
}

/// `E[v^ε(t, x)²]` from pairs of independent paths, with Isserlis over the
/// union of both paths' evaluation points.
pub fn fk_second_moment(measure: &SpectralMeasure, eps: f64, t: f64, x: Vec2, cfg: &FkConfig) -> Result<EstimatorResult> {
    cfg.validate(t)?;
    if cfg.stratified {
        return Err(Error::Unsupported("stratification is implemented for single-path estimators".into()));
    }
    let pc = covariance_for(measure, eps)?;
    let dim = measure.dim();
    let e2t = (2.0 * t).exp();
    let totals = run_chunked(cfg.n_paths, cfg.seed, tag::FK_PAIRS, 0, cfg.exec, |rng, s| {
        let ok_a = fill_path(&mut s.path, t, dim, cfg.max_jumps, rng);
        let ok_b = fill_path(&mut s.other, t, dim, cfg.max_jumps, rng);
        if !(ok_a && ok_b) {
            return Score::Truncated;
        }
        s.points.clear();
        s.points.extend(s.path.positions.iter().chain(&s.other.positions).map(|&p| add(x, p)));
        match pairing_value(&pc, &s.points, &mut s.cov) {
            Some(0.0) => Score::Value(0.0),
            Some(h) if h.is_finite() => Score::Value(e2t * s.path.gap_product() * s.other.gap_product() * h),
            Some(_) => Score::Resample,
            None => Score::Truncated,
        }
    })?;
    Ok(finish(totals, cfg.seed, cfg.max_jumps))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exec::stream_rng;

    #[test]
    fn path_structure() {
        let mut rng = stream_rng(3, tag::TEST, 0, 0);
        for _ in 0..200 {
            let p = sample_jump_path(2.0, Dim::Two, &mut rng);
            assert!(p.jump_times.windows(2).all(|w| w[0] < w[1]));
            assert!(p.jump_times.iter().all(|&s| s > 0.0 && s <= 2.0));
            let mut prev_t = 0.0;
            let mut prev_x = [0.0, 0.0];
            for i in 0..p.n_jumps() {
                let dt = p.jump_times[i] - prev_t;
                let expect = [prev_x[0] + dt * p.directions[i][0], prev_x[1] + dt * p.directions[i][1]];
                assert!((expect[0] - p.positions[i][0]).abs() < 1e-14);
                assert!((expect[1] - p.positions[i][1]).abs() < 1e-14);
                prev_t = p.jump_times[i];
                prev_x = p.positions[i];
            }
            let g = p.gap_product();
            assert!(g > 0.0 && g <= 2f64.powi(p.n_jumps() as i32));
        }
    }

    #[test]
    fn gap_products() {
        let p = JumpPath {
            t_horizon: 1.0,
            jump_times: vec![0.2, 0.5, 0.9],
            directions: vec![[0.0; 2]; 3],
            positions: vec![[0.0; 2]; 3],
        };
        assert!((p.gap_product() - 0.2 * 0.3 * 0.4).abs() < 1e-15);
        assert!((p.forward_gap_product() - 0.3 * 0.4 * 0.1).abs() < 1e-15);
    }

    #[test]
    fn zero_noise_realization_is_one() {
        let noise = NoiseSample::zero(Dim::One);
        let r = fk_realization(&noise, 1.0, [0.0, 0.0], &FkConfig::new(20_000, 8, 1)).unwrap();
        assert!((r.mean - 1.0).abs() < 3.0 * r.stderr, "{r:?}");
        let s = fk_realization(&noise, 1.0, [0.0, 0.0], &FkConfig::new(2_000, 8, 1).stratified(true)).unwrap();
        assert_eq!(s.mean, 1.0);
        assert_eq!(s.stderr, 0.0);
    }

    #[test]
    fn small_time_mean_is_one() {
        let r = fk_mean(&SpectralMeasure::atom_fixture(), 0.0, 1e-3, [0.0, 0.0], &FkConfig::new(4_000, 8, 5)).unwrap();
        assert!((r.mean - 1.0).abs() < 3.0 * r.stderr + 1e-5, "{r:?}");
    }

    #[test]
    fn zero_measure_second_moment_is_one() {
        let m = SpectralMeasure::zero(Dim::One);
        let r = fk_second_moment(&m, 0.0, 1.0, [0.0, 0.0], &FkConfig::new(20_000, 8, 2)).unwrap();
        assert!((r.mean - 1.0).abs() < 3.0 * r.stderr + 1e-12, "{r:?}");
    }

    #[test]
    fn config_validation() {
        let noise = NoiseSample::zero(Dim::One);
        assert!(fk_realization(&noise, 1.0, [0.0; 2], &FkConfig::new(100, 0, 1)).is_err());
        assert!(fk_realization(&noise, 0.0, [0.0; 2], &FkConfig::new(100, 4, 1)).is_err());
        assert!(fk_realization(&noise, 1.0, [0.0; 2], &FkConfig::new(1, 4, 1)).is_err());
        let riesz = SpectralMeasure::riesz(1.5, Dim::One).unwrap();
        assert!(fk_mean(&riesz, 0.0, 1.0, [0.0; 2], &FkConfig::new(100, 4, 1)).is_err());
    }

    #[test]
    fn truncation_is_reported() {
        let noise = NoiseSample::zero(Dim::One);
        let r = fk_realization(&noise, 3.0, [0.0; 2], &FkConfig::new(50_000, 1, 9)).unwrap();
        let expected = poisson_tail(3.0, 1);
        let se = (expected * (1.0 - expected) / 50_000.0).sqrt();
        assert!((r.truncated_fraction - expected).abs() < 4.0 * se, "{r:?}");
    }

    #[test]
    fn thread_independent() {
        let noise = SpectralMeasure::atom_fixture().sample_noise(0.0, 0, 4).unwrap();
        let cfg = FkConfig::new(10_000, 8, 77);
        let a = fk_realization(&noise, 1.0, [0.1, 0.0], &cfg.with_exec(Execution::Parallel)).unwrap();
        let b = fk_realization(&noise, 1.0, [0.1, 0.0], &cfg.with_exec(Execution::Sequential)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn allocation_favours_low_strata() {
        let a = stratum_allocation(1.0, 8, 10_000);
        assert_eq!(a.len(), 8);
        assert!(a[0].1 > a[1].1 && a[1].1 > a[2].1);
        assert!(a.iter().all(|&(_, m)| m >= 2));
    }
}
