//! Cross-module invariant checks and the three-way reconciliation of the
//! Picard, Feynman-Kac and chaos routes.
//!
//! Every check returns a [`CheckOutcome`] instead of panicking, so the same
//! code backs the `verify` command and the acceptance tests.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::Serialize;
use std::f64::consts::PI;
use std::time::Instant;

use crate::chaos::{self, ChaosOptions};
use crate::combinatorics::{census_counts, involution_number, isserlis_expectation};
use crate::error::{invalid, Result};
use crate::exec::{derive_seed, map_indexed, stream_rng, tag, Execution};
use crate::feynman_kac::{self, FkConfig};
use crate::geometry::{Dim, Vec2};
use crate::kernel;
use crate::noise::SpectralMeasure;
use crate::picard::{self, GridSpec, PicardMoments};
use crate::special::factorial;
use crate::stats::{Accumulator, EstimatorResult};

/// Result of one named check.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckOutcome {
    pub id: usize,
    pub name: String,
    pub passed: bool,
    pub detail: String,
    pub seconds: f64,
}

impl std::fmt::Display for CheckOutcome {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "[{}] {:>2} {} ({:.2} s): {}",
            if self.passed { "PASS" } else { "FAIL" },
            self.id,
            self.name,
            self.seconds,
            self.detail
        )
    }
}

/// Runs `body`, then fails the check if it errored or overran `budget_s`.
fn timed<F>(id: usize, name: &str, budget_s: f64, body: F) -> CheckOutcome
where
    F: FnOnce() -> Result<(bool, String)>,
{
    let start = Instant::now();
    let res = body();
    let seconds = start.elapsed().as_secs_f64();
    let (mut passed, mut detail) = match res {
        Ok(r) => r,
        Err(e) => (false, format!("error: {e}")),
    };
    if seconds > budget_s {
        passed = false;
        detail = format!("{detail}; over the {budget_s} s budget");
    }
    CheckOutcome {
        id,
        name: name.to_string(),
        passed,
        detail,
        seconds,
    }
}

/// Per-k term counts for n = 1..=6 and involution-number totals up to 10.
pub fn census_check() -> CheckOutcome {
    timed(1, "term census", 1.0, || {
        let expected: [&[u64]; 6] = [&[1], &[1, 1], &[1, 3], &[1, 6, 3], &[1, 10, 15], &[1, 15, 45, 15]];
        for (i, want) in expected.iter().enumerate() {
            let n = i + 1;
            let got: Vec<u64> = chaos::decomposition_census(n)?.iter().map(|r| r.term_count).collect();
            if got != *want {
                return Ok((false, format!("n = {n}: got {got:?}, want {want:?}")));
            }
        }
        // a(n) = a(n-1) + (n-1) a(n-2)
        let mut a = [1u64, 1];
        for n in 1..=10usize {
            let total: u64 = census_counts(n).iter().sum();
            if n >= 2 {
                a = [a[1], a[1] + (n as u64 - 1) * a[0]];
            }
            if total != a[1] || involution_number(n) != a[1] {
                return Ok((false, format!("n = {n}: total {total}, want {}", a[1])));
            }
        }
        Ok((true, "rows for n <= 6 and totals for n <= 10 match".into()))
    })
}

/// Expansion along the first index: `E[Z_1 ⋯ Z_n] = Σ_j C_{1j} E[rest]`.
fn isserlis_recursive(cov: &[Vec<f64>], idx: &[usize]) -> f64 {
    match idx.len() {
        0 => 1.0,
        n if n % 2 == 1 => 0.0,
        _ => {
            let first = idx[0];
            (1..idx.len())
                .map(|j| {
                    let rest: Vec<usize> = idx[1..].iter().enumerate().filter(|&(k, _)| k + 1 != j).map(|(_, &v)| v).collect();
                    cov[first][idx[j]] * isserlis_recursive(cov, &rest)
                })
                .sum()
        }
    }
}

/// Isserlis' theorem against the recursive expansion (random symmetric
/// matrices) and Gaussian Monte Carlo (random PSD matrices).
pub fn isserlis_check(seed: u64, exec: Execution) -> CheckOutcome {
    timed(2, "Isserlis oracle", 30.0, || {
        let mut rng = stream_rng(seed, tag::TEST, 2, 0);
        let mut worst = 0.0f64;
        for k in 0..200 {
            let n = if k % 2 == 0 { 4 } else { 6 };
            let mut cov = vec![vec![0.0; n]; n];
            for i in 0..n {
                for j in i..n {
                    let v = 2.0 * rng.gen::<f64>() - 1.0;
                    cov[i][j] = v;
                    cov[j][i] = v;
                }
            }
            let got = isserlis_expectation(&cov)?;
            let want = isserlis_recursive(&cov, &(0..n).collect::<Vec<_>>());
            worst = worst.max((got - want).abs() / want.abs().max(1e-300));
        }
        if worst > 1e-12 {
            return Ok((false, format!("relative error {worst:e} against the recursion")));
        }
        const SAMPLES: usize = 1_000_000;
        let mut worst_z = 0.0f64;
        for inst in 0..10u64 {
            let n = if inst % 2 == 0 { 4 } else { 6 };
            let a: Vec<Vec<f64>> = (0..n).map(|_| (0..n).map(|_| rng.sample::<f64, _>(StandardNormal) / (n as f64).sqrt()).collect()).collect();
            // cov = A Aᵀ, sampled as Z = A g
            let cov: Vec<Vec<f64>> = (0..n).map(|i| (0..n).map(|j| (0..n).map(|k| a[i][k] * a[j][k]).sum()).collect()).collect();
            let exact = isserlis_expectation(&cov)?;
            let plan = crate::exec::chunks(SAMPLES);
            let parts = map_indexed(plan.len(), exec, |c| {
                let mut r = stream_rng(derive_seed(seed, inst), tag::TEST, 20, c as u64);
                let mut acc = Accumulator::default();
                let mut g = vec![0.0; n];
                for _ in 0..plan[c].1 {
                    g.iter_mut().for_each(|v| *v = r.sample(StandardNormal));
                    let prod: f64 = a.iter().map(|row| row.iter().zip(&g).map(|(x, y)| x * y).sum::<f64>()).product();
                    acc.push(prod);
                }
                acc
            });
            let acc = crate::stats::pairwise_merge(&parts);
            worst_z = worst_z.max((acc.mean - exact).abs() / acc.stderr());
        }
        Ok((
            worst_z <= 4.0,
            format!("max relative error {worst:.1e}; worst Monte Carlo deviation {worst_z:.2} stderr"),
        ))
    })
}

/// `e^t E[∏ Δτ 1_{N_t = n}] = t^{2n}/(2n)!` for t = 1, n = 1..=4.
pub fn poisson_simplex_check(seed: u64, exec: Execution) -> CheckOutcome {
    timed(3, "Poisson-simplex identity", 10.0, || {
        let mut worst = 0.0f64;
        for n in 1..=4usize {
            let est = feynman_kac::poisson_simplex_estimate(1.0, n, 1_000_000, derive_seed(seed, n as u64), exec)?;
            let exact = 1.0 / factorial(2 * n);
            worst = worst.max((est.mean - exact).abs() / est.stderr);
        }
        Ok((worst <= 3.0, format!("worst deviation {worst:.2} stderr")))
    })
}

/// Kolmogorov-Smirnov statistic of `samples` against `cdf`.
pub fn ks_statistic(samples: &mut [f64], cdf: impl Fn(f64) -> f64) -> f64 {
    samples.sort_by(f64::total_cmp);
    let n = samples.len() as f64;
    samples
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / n).max((i + 1) as f64 / n - f)
        })
        .fold(0.0, f64::max)
}

/// Asymptotic 1% critical value of the KS statistic.
pub fn ks_critical_1pct(n: usize) -> f64 {
    1.6276 / (n as f64).sqrt()
}

/// Mass, Fourier bound, unit-bump sampler and the semigroup closed form.
pub fn wave_kernel_check(seed: u64) -> CheckOutcome {
    timed(4, "wave kernel", 30.0, || {
        let mut notes = Vec::new();
        for dim in [Dim::One, Dim::Two] {
            for t in [0.5, 1.0, 3.0] {
                let m = kernel::g_mass_quadrature(t, dim)?;
                if (m - t).abs() > 1e-6 * t {
                    return Ok((false, format!("mass {m} at t = {t}, d = {}", dim.get())));
                }
            }
        }
        notes.push("mass ok".to_string());
        let grid: Vec<Vec2> = (0..100)
            .flat_map(|i| (0..100).map(move |j| [-50.0 + i as f64 + 0.37, -50.0 + j as f64 + 0.21]))
            .collect();
        for t in [0.5, 1.0, 10.0] {
            if !kernel::fg_bound_check(t, &grid) {
                return Ok((false, format!("Fourier bound fails at t = {t}")));
            }
        }
        notes.push("Fourier bound ok".into());
        let mut rng = stream_rng(seed, tag::TEST, 4, 0);
        let mut radii: Vec<f64> = (0..100_000)
            .map(|_| {
                let p = kernel::sample_unit_bump(Dim::Two, &mut rng);
                p[0].hypot(p[1])
            })
            .collect();
        let d = ks_statistic(&mut radii, |r| 1.0 - (1.0 - r.min(1.0).powi(2)).sqrt());
        let crit = ks_critical_1pct(radii.len());
        if d > crit {
            return Ok((false, format!("KS statistic {d:.4} above {crit:.4}")));
        }
        notes.push(format!("KS {d:.4} < {crit:.4}"));
        let sg = kernel::semigroup_check(0.0, 1.0, [0.0; 2], [0.0; 2], Dim::One)?;
        if (sg.lhs - 0.125).abs() > 1e-6 {
            return Ok((false, format!("semigroup lhs {} instead of 1/8", sg.lhs)));
        }
        notes.push(format!("semigroup lhs {:.9}", sg.lhs));
        Ok((true, notes.join("; ")))
    })
}

/// Settings for the three-way reconciliation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CompareParams {
    pub t: f64,
    pub x: Vec2,
    pub eps: f64,
    pub n_paths: usize,
    pub max_jumps: usize,
    pub n_realizations: usize,
    pub n_iters: usize,
    pub n_max: usize,
    pub n_t: usize,
    pub n_x: usize,
    pub n_freq: usize,
    pub seed: u64,
    #[serde(skip)]
    pub exec: Execution,
}

impl CompareParams {
    /// Settings for the atom fixture at `t = 1`.
    pub fn fixture_default(seed: u64) -> Self {
        CompareParams {
            t: 1.0,
            x: [0.0; 2],
            eps: 0.0,
            n_paths: 400_000,
            max_jumps: 40,
            n_realizations: 4000,
            n_iters: picard::DEFAULT_ITERS,
            n_max: 8,
            n_t: 32,
            n_x: 65,
            n_freq: 256,
            seed,
            exec: Execution::default(),
        }
    }

    fn grid(&self, dim: Dim) -> GridSpec {
        GridSpec::new(dim, self.t, self.x, self.n_t, self.n_x)
    }
}

/// One method's estimate of a moment.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MethodEstimate {
    pub quantity: String,
    pub method: String,
    pub mean: f64,
    pub stderr: f64,
}

/// `|Δ| / σ_combined` for one pair of methods.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PairwiseGap {
    pub quantity: String,
    pub a: String,
    pub b: String,
    pub delta: f64,
    pub sigma: f64,
    pub ratio: f64,
}

/// Estimates of `E[v]` and `E[v²]` from all three routes plus their gaps.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Reconciliation {
    pub estimates: Vec<MethodEstimate>,
    pub gaps: Vec<PairwiseGap>,
}

impl Reconciliation {
    pub fn worst_ratio(&self) -> f64 {
        self.gaps.iter().map(|g| g.ratio).fold(0.0, f64::max)
    }
}

fn estimate(quantity: &str, method: &str, mean: f64, stderr: f64) -> MethodEstimate {
    MethodEstimate {
        quantity: quantity.into(),
        method: method.into(),
        mean,
        stderr,
    }
}

/// Runs Picard, Feynman-Kac and chaos estimators on the same measure. The
/// chaos route gives the mean only; the second moments are compared
/// between Picard and Feynman-Kac.
pub fn reconcile(measure: &SpectralMeasure, p: &CompareParams) -> Result<Reconciliation> {
    if p.n_max % 2 == 1 {
        return Err(invalid("n_max must be even"));
    }
    let dim = measure.dim();
    let fk_cfg = FkConfig::new(p.n_paths, p.max_jumps, derive_seed(p.seed, 1)).with_exec(p.exec);
    let fk_mean = feynman_kac::fk_mean(measure, p.eps, p.t, p.x, &fk_cfg)?;
    let fk_cfg2 = FkConfig { seed: derive_seed(p.seed, 2), ..fk_cfg };
    let fk_second = feynman_kac::fk_second_moment(measure, p.eps, p.t, p.x, &fk_cfg2)?;
    let chaos_opts = ChaosOptions {
        seed: derive_seed(p.seed, 3),
        exec: p.exec,
        ..ChaosOptions::default()
    };
    let series = chaos::stratonovich_mean_series(p.t, measure, p.eps, p.n_max, &chaos_opts)?;
    let pm = PicardMoments {
        n_iters: p.n_iters,
        n_realizations: p.n_realizations,
        seed: derive_seed(p.seed, 4),
        n_freq: p.n_freq,
        exec: p.exec,
    };
    let (pic_mean, pic_second) = picard::moment_estimate(measure, p.eps, &p.grid(dim), &pm)?;

    let estimates = vec![
        estimate("mean", "picard", pic_mean.mean, pic_mean.stderr),
        estimate("mean", "feynman_kac", fk_mean.mean, fk_mean.stderr),
        estimate("mean", "chaos", series.value, series.stderr),
        estimate("second_moment", "picard", pic_second.mean, pic_second.stderr),
        estimate("second_moment", "feynman_kac", fk_second.mean, fk_second.stderr),
    ];
    let mut gaps = Vec::new();
    for (i, a) in estimates.iter().enumerate() {
        for b in &estimates[i + 1..] {
            if a.quantity != b.quantity {
                continue;
            }
            let sigma = a.stderr.hypot(b.stderr);
            gaps.push(PairwiseGap {
                quantity: a.quantity.clone(),
                a: a.method.clone(),
                b: b.method.clone(),
                delta: (a.mean - b.mean).abs(),
                sigma,
                ratio: EstimatorResult::z_score(a.mean, a.stderr, b.mean, b.stderr),
            });
        }
    }
    Ok(Reconciliation { estimates, gaps })
}

/// Per-realization agreement of Feynman-Kac and Picard on shared noise.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RealizationRow {
    pub seed: u64,
    pub fk: f64,
    pub fk_stderr: f64,
    pub picard: f64,
    pub grid_error: f64,
    pub agrees: bool,
}

pub fn realization_agreement(measure: &SpectralMeasure, p: &CompareParams, n_seeds: usize, n_paths: usize) -> Result<Vec<RealizationRow>> {
    let spec = p.grid(measure.dim());
    (0..n_seeds as u64)
        .map(|r| {
            let seed = derive_seed(p.seed, 100 + r);
            let noise = measure.sample_noise(p.eps, p.n_freq, seed)?;
            let cfg = FkConfig::new(n_paths, p.max_jumps, derive_seed(seed, 1)).with_exec(p.exec);
            let fk = feynman_kac::fk_realization(&noise, p.t, p.x, &cfg)?;
            let pic = picard::apex_with_error(&noise, &spec, p.n_iters)?;
            let agrees = (fk.mean - pic.value).abs() <= 3.0 * (fk.stderr + pic.grid_error);
            Ok(RealizationRow {
                seed,
                fk: fk.mean,
                fk_stderr: fk.stderr,
                picard: pic.value,
                grid_error: pic.grid_error,
                agrees,
            })
        })
        .collect()
}

/// The flagship cross-method check on the atom fixture.
pub fn reconciliation_check(seed: u64, exec: Execution) -> CheckOutcome {
    timed(5, "cross-method reconciliation", 600.0, || {
        let m = SpectralMeasure::atom_fixture();
        let p = CompareParams {
            exec,
            ..CompareParams::fixture_default(seed)
        };
        let rows = realization_agreement(&m, &p, 50, 20_000)?;
        let agree = rows.iter().filter(|r| r.agrees).count();
        let rec = reconcile(&m, &p)?;
        let worst = rec.worst_ratio();
        let summary = rec
            .gaps
            .iter()
            .map(|g| format!("{} {}/{} {:.2}σ", g.quantity, g.a, g.b, g.ratio))
            .collect::<Vec<_>>()
            .join(", ");
        Ok((
            agree >= 47 && worst <= 3.0,
            format!("{agree}/50 realizations agree; {summary}"),
        ))
    })
}

/// Norm of the first kernel, its Picard variance, and ε-monotonicity.
pub fn isometry_check(seed: u64, exec: Execution) -> CheckOutcome {
    timed(6, "chaos isometry", 60.0, || {
        let m = SpectralMeasure::atom_fixture();
        let opts = ChaosOptions {
            exec,
            ..ChaosOptions::default()
        };
        let exact = 4.0 / PI.powi(4);
        let n1 = chaos::kernel_norm_sq(1, 1.0, [0.0; 2], &m, 0.0, &opts)?.value;
        if (n1 - exact).abs() > 1e-10 {
            return Ok((false, format!("‖f_1‖² = {n1}, want {exact}")));
        }
        // H_1 = v_1 - v_0 is the first chaos; its variance is 1! ‖f_1‖².
        let spec = GridSpec::new(Dim::One, 1.0, [0.0; 2], 32, 65);
        let pm = PicardMoments {
            n_iters: 1,
            exec,
            ..PicardMoments::new(4000, derive_seed(seed, 6))
        };
        let rows = picard::apex_samples(&m, 0.0, &spec, &pm)?;
        let acc: Accumulator = rows.iter().map(|r| (r[1] - r[0]).powi(2)).collect();
        let z = (acc.mean - exact).abs() / acc.stderr();
        if z > 3.0 {
            return Ok((false, format!("Picard variance of H_1 {} is {z:.2} stderr from {exact}", acc.mean)));
        }
        let richer = SpectralMeasure::symmetric_atoms(Dim::One, &[([1.0, 0.0], 0.6), ([2.5, 0.0], 0.4)])?;
        for measure in [&m, &richer] {
            for n in 1..=4 {
                let mut prev = f64::INFINITY;
                for eps in [0.0, 0.1, 1.0] {
                    let v = chaos::kernel_norm_sq(n, 1.0, [0.0; 2], measure, eps, &opts)?.value;
                    if v > prev {
                        return Ok((false, format!("norm grows from {prev} to {v} at n = {n}, eps = {eps}")));
                    }
                    prev = v;
                }
            }
        }
        Ok((true, format!("‖f_1‖² exact; Picard H_1 variance within {z:.2} stderr; monotone in eps")))
    })
}

/// Classifies a sequence of truncated integrals over cutoffs `10¹..10⁴`.
fn growth_ratios(values: &[f64]) -> Vec<f64> {
    values
        .windows(3)
        .map(|w| (w[2] - w[1]) / (w[1] - w[0]))
        .collect()
}

/// Cauchy behaviour of (C) and (D) constants for convergent Riesz exponents
/// and unbounded growth for a divergent one.
pub fn condition_constants_check() -> CheckOutcome {
    timed(7, "condition constants", 10.0, || {
        let cutoffs = [1e1, 1e2, 1e3, 1e4];
        let c_good = SpectralMeasure::riesz(0.5, Dim::One)?;
        let c_bad = SpectralMeasure::riesz(1.2, Dim::One)?;
        let d_good = SpectralMeasure::riesz(1.5, Dim::Two)?;
        let eval = |f: &dyn Fn(f64) -> Result<f64>| cutoffs.iter().map(|&c| f(c)).collect::<Result<Vec<f64>>>();
        let good = eval(&|c| c_good.condition_c_constant(c))?;
        let bad = eval(&|c| c_bad.condition_c_constant(c))?;
        let dd = eval(&|c| d_good.condition_d_constant(c))?;
        let cauchy = |v: &[f64]| v.windows(2).all(|w| w[1] >= w[0]) && growth_ratios(v).iter().all(|&r| r < 0.5);
        let divergent = bad.windows(2).all(|w| w[1] > w[0]) && growth_ratios(&bad).iter().all(|&r| r > 1.0);
        let ok = cauchy(&good) && cauchy(&dd) && divergent;
        Ok((
            ok,
            format!(
                "(C) α=0.5 increment ratios {:?}; (C) α=1.2 ratios {:?}; (D) α=1.5 ratios {:?}",
                round(&growth_ratios(&good)),
                round(&growth_ratios(&bad)),
                round(&growth_ratios(&dd))
            ),
        ))
    })
}

fn round(v: &[f64]) -> Vec<f64> {
    v.iter().map(|x| (x * 1000.0).round() / 1000.0).collect()
}

/// Order-two mean term in physical and Fourier space.
pub fn duality_check() -> CheckOutcome {
    timed(8, "physical/spectral duality", 10.0, || {
        let m = SpectralMeasure::atom_fixture();
        let spectral = chaos::stratonovich_mean_term(2, 1.0, &m, 0.0, &ChaosOptions::default())?.value;
        let physical = chaos::mean_term_two_physical(1.0, &m, 0.0)?;
        let rel = (spectral - physical).abs() / spectral.abs();
        Ok((rel <= 1e-6, format!("spectral {spectral:.12}, physical {physical:.12}, relative gap {rel:.1e}")))
    })
}

/// Which checks [`run_suite`] executes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SuiteLevel {
    /// Everything except the reconciliation run.
    Quick,
    Full,
}

pub fn run_suite(level: SuiteLevel, seed: u64, exec: Execution) -> Vec<CheckOutcome> {
    let mut out = vec![
        census_check(),
        isserlis_check(seed, exec),
        poisson_simplex_check(seed, exec),
        wave_kernel_check(seed),
    ];
    if level == SuiteLevel::Full {
        out.push(reconciliation_check(seed, exec));
    }
    out.push(isometry_check(seed, exec));
    out.push(condition_constants_check());
    out.push(duality_check());
    out
}
