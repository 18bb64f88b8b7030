//! Fourier-domain chaos kernels and moment series.
//!
//! The order-`n` Skorohod kernel has Fourier transform
//!
//! `𝓕f_n(ξ_1..ξ_n) = e^{-i(Σξ_j)·x} ∫_{T_n(t)} ∏_j 𝓕G(t_{j+1} - t_j)(ξ_1 + … + ξ_j) dt`
//!
//! with `t_{n+1} = t`, and mollification multiplies it by
//! `exp(-(ε/2) Σ|ξ_j|²)`. The Stratonovich mean is the series of all full
//! pairings of the same product, where paired frequencies cancel: `η_i`
//! enters at the left index `ℓ_i` of its pair and leaves at `m_i`.
//!
//! Simplex integrals of products of gap functions are computed as iterated
//! convolutions `F_j(s) = ∫_0^s F_{j-1}(s - g) φ_j(g) dg`, `F_0 = 1`, whose
//! value `F_n(t)` is the simplex integral. Each `F_j` is carried on a
//! Chebyshev grid over `[0, t]`, which is spectrally accurate because the
//! gap functions `sin(a g)/a` are entire.

use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Beta, Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::{Arc, Mutex, OnceLock};

use crate::combinatorics::{enumerate_pair_partitions, enumerate_strato_terms, PairPartition};
use crate::error::{invalid, Error, Result};
use crate::exec::{chunks, map_indexed, stream_rng, tag, Execution};
use crate::geometry::{dot, norm, norm_sq, Dim, Vec2};
use crate::kernel::{g_fourier, g_unchecked};
use crate::noise::{random_direction, SpectralMeasure};
use crate::quad::{self, gauss_legendre, ChebGrid, QuadOptions};
use crate::special::{self, factorial};
use crate::stats::{pairwise_merge, Accumulator, Estimate};

/// Largest number of argument arrangements averaged exactly (`5!`).
pub const MAX_EXACT_ARRANGEMENTS: usize = 120;

const MIN_NODES: usize = 24;
const MAX_NODES: usize = 160;

/// Chebyshev degree for frequencies `a_j` on `[0, t]`.
fn nodes_for(t: f64, freqs: &[f64]) -> usize {
    let spread: f64 = freqs.iter().map(|a| a.abs()).sum();
    let m = (MIN_NODES as f64 + (0.75 * t * spread).ceil()).min(MAX_NODES as f64) as usize;
    m.div_ceil(8) * 8
}

/// Iterated-convolution evaluator for one `(t, degree)` pair.
struct SimplexIntegrator {
    m: usize,
    /// Gap `g_{mq}` and weight for GL node `q` on `[0, s_m]`.
    gaps: Vec<f64>,
    weights: Vec<f64>,
    /// Interpolation rows for `s_m - g_{mq}`, row-major `(m, q, l)`.
    interp: Vec<f64>,
}

impl SimplexIntegrator {
    fn new(t: f64, m: usize) -> Self {
        let grid = ChebGrid::new(0.0, t, m);
        let rule = gauss_legendre(m);
        let mut gaps = Vec::with_capacity(m * m);
        let mut weights = Vec::with_capacity(m * m);
        let mut interp = Vec::with_capacity(m * m * m);
        let mut row = Vec::with_capacity(m);
        for &s in &grid.nodes {
            for (g, w) in rule.mapped(0.0, s) {
                gaps.push(g);
                weights.push(w);
                grid.interp_row((s - g).max(0.0), &mut row);
                interp.extend_from_slice(&row);
            }
        }
        SimplexIntegrator {
            m,
            gaps,
            weights,
            interp,
        }
    }

    fn shared(t: f64, m: usize) -> Arc<SimplexIntegrator> {
        type Cache = Mutex<HashMap<(u64, usize), Arc<SimplexIntegrator>>>;
        static CACHE: OnceLock<Cache> = OnceLock::new();
        let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
        if let Some(s) = cache.lock().expect("simplex cache poisoned").get(&(t.to_bits(), m)) {
            return s.clone();
        }
        let built = Arc::new(SimplexIntegrator::new(t, m));
        cache
            .lock()
            .expect("simplex cache poisoned")
            .entry((t.to_bits(), m))
            .or_insert(built)
            .clone()
    }

    fn integrate(&self, freqs: &[f64]) -> f64 {
        let m = self.m;
        let mut f = vec![1.0; m];
        let mut next = vec![0.0; m];
        for &a in freqs {
            for (mi, out) in next.iter_mut().enumerate() {
                let mut acc = 0.0;
                for q in 0..m {
                    let idx = mi * m + q;
                    let row = &self.interp[idx * m..(idx + 1) * m];
                    let prev: f64 = row.iter().zip(&f).map(|(c, v)| c * v).sum();
                    acc += self.weights[idx] * g_fourier(self.gaps[idx], a) * prev;
                }
                *out = acc;
            }
            std::mem::swap(&mut f, &mut next);
        }
        // The last Chebyshev node is t itself.
        f[m - 1]
    }
}

/// `∫_{T_n(t)} ∏_{j=1}^n sin(a_j (t_{j+1} - t_j)) / a_j dt`, `t_{n+1} = t`.
pub fn simplex_gap_integral(t: f64, freqs: &[f64]) -> Result<f64> {
    if !(t > 0.0 && t.is_finite()) {
        return Err(invalid(format!("t must be positive, got {t}")));
    }
    if freqs.iter().any(|a| !a.is_finite()) {
        return Err(invalid("frequencies must be finite"));
    }
    if freqs.is_empty() {
        return Ok(1.0);
    }
    Ok(SimplexIntegrator::shared(t, nodes_for(t, freqs)).integrate(freqs))
}

/// Monte Carlo version of [`simplex_gap_integral`] over sorted uniforms,
/// with volume factor `t^n / n!`.
pub fn simplex_gap_integral_mc(t: f64, freqs: &[f64], n_samples: usize, seed: u64, exec: Execution) -> Result<Estimate> {
    if !(t > 0.0 && t.is_finite()) {
        return Err(invalid(format!("t must be positive, got {t}")));
    }
    if n_samples < 2 {
        return Err(invalid("n_samples must be at least 2"));
    }
    let n = freqs.len();
    let volume = t.powi(n as i32) / factorial(n);
    let plan = chunks(n_samples);
    let parts = map_indexed(plan.len(), exec, |c| {
        let mut rng = stream_rng(seed, tag::SIMPLEX_MC, n as u64, c as u64);
        let mut times = vec![0.0; n];
        let mut acc = Accumulator::default();
        for _ in 0..plan[c].1 {
            times.iter_mut().for_each(|s| *s = t * rng.gen::<f64>());
            times.sort_by(f64::total_cmp);
            let mut p = volume;
            for j in 0..n {
                let next = if j + 1 < n { times[j + 1] } else { t };
                p *= g_fourier(next - times[j], freqs[j]);
            }
            acc.push(p);
        }
        acc
    });
    let acc = pairwise_merge(&parts);
    Ok(Estimate {
        value: acc.mean,
        stderr: acc.stderr(),
    })
}

/// Arguments of [`fourier_fn`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelQuery {
    pub n: usize,
    pub t: f64,
    pub x: Vec2,
    pub frequencies: Vec<Vec2>,
    pub eps: f64,
}

impl KernelQuery {
    pub fn new(t: f64, x: Vec2, frequencies: Vec<Vec2>, eps: f64) -> Self {
        KernelQuery {
            n: frequencies.len(),
            t,
            x,
            frequencies,
            eps,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(invalid("kernel order must be at least 1"));
        }
        if self.frequencies.len() != self.n {
            return Err(invalid(format!(
                "expected {} frequencies, got {}",
                self.n,
                self.frequencies.len()
            )));
        }
        if !(self.eps >= 0.0 && self.eps.is_finite()) {
            return Err(invalid("eps must be non-negative"));
        }
        Ok(())
    }
}

/// `|ξ_1 + … + ξ_j|` for `j = 1..=n`.
fn partial_sum_norms(xs: &[Vec2], out: &mut Vec<f64>) {
    out.clear();
    let mut s = [0.0, 0.0];
    for xi in xs {
        s = [s[0] + xi[0], s[1] + xi[1]];
        out.push(norm(s));
    }
}

/// `𝓕f_n^ε(ξ_1, …, ξ_n)` (unsymmetrized).
pub fn fourier_fn(q: &KernelQuery) -> Result<Complex64> {
    q.validate()?;
    let mut a = Vec::with_capacity(q.n);
    partial_sum_norms(&q.frequencies, &mut a);
    let total = q.frequencies.iter().fold([0.0, 0.0], |s, xi| [s[0] + xi[0], s[1] + xi[1]]);
    let damp = (-0.5 * q.eps * q.frequencies.iter().map(|&xi| norm_sq(xi)).sum::<f64>()).exp();
    let simplex = simplex_gap_integral(q.t, &a)?;
    Ok(Complex64::from_polar(damp * simplex, -dot(total, q.x)))
}

/// How `𝓕f̃_n` averages over argument orders.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Symmetrization {
    /// Exact when at most [`MAX_EXACT_ARRANGEMENTS`] distinct orders exist,
    /// sampled otherwise.
    Auto,
    /// Always exact; an error when too many orders exist.
    Exact,
    Sampled { n_perms: usize },
}

/// Controls for the chaos-engine estimators.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChaosOptions {
    pub symmetrization: Symmetrization,
    /// Monte Carlo draws for continuous measures.
    pub n_samples: usize,
    pub seed: u64,
    pub exec: Execution,
}

impl Default for ChaosOptions {
    fn default() -> Self {
        ChaosOptions {
            symmetrization: Symmetrization::Auto,
            n_samples: 20_000,
            seed: 0,
            exec: Execution::default(),
        }
    }
}

/// Rearranges `v` into the next lexicographic permutation; `false` after the
/// last one.
fn next_permutation(v: &mut [usize]) -> bool {
    let n = v.len();
    if n < 2 {
        return false;
    }
    let mut i = n - 1;
    while i > 0 && v[i - 1] >= v[i] {
        i -= 1;
    }
    if i == 0 {
        return false;
    }
    let mut j = n - 1;
    while v[j] <= v[i - 1] {
        j -= 1;
    }
    v.swap(i - 1, j);
    v[i..].reverse();
    true
}

/// Number of distinct orders of a multiset given by its (sorted) labels.
fn arrangement_count(labels: &[usize]) -> f64 {
    let mut count = factorial(labels.len());
    let mut run = 1;
    for w in labels.windows(2) {
        if w[0] == w[1] {
            run += 1;
            count /= run as f64;
        } else {
            run = 1;
        }
    }
    count
}

/// `|𝓕f̃_n(ξ)|²` where `ξ_k = points[labels[k]]`; exact over distinct orders
/// or an unbiased pairwise estimate from sampled permutations.
fn symmetrized_sq(t: f64, x: Vec2, eps: f64, points: &[Vec2], labels: &[usize], sym: Symmetrization, seed: u64) -> Result<Estimate> {
    let count = arrangement_count(labels);
    let exact = match sym {
        Symmetrization::Exact => {
            if count > MAX_EXACT_ARRANGEMENTS as f64 {
                return Err(Error::TooLarge {
                    n: labels.len(),
                    max: 5,
                });
            }
            true
        }
        Symmetrization::Auto => count <= MAX_EXACT_ARRANGEMENTS as f64,
        Symmetrization::Sampled { .. } => false,
    };
    let eval = |order: &[usize]| -> Result<Complex64> {
        let q = KernelQuery::new(t, x, order.iter().map(|&k| points[k]).collect(), eps);
        fourier_fn(&q)
    };
    if exact {
        let mut order = labels.to_vec();
        order.sort_unstable();
        let mut sum = Complex64::new(0.0, 0.0);
        let mut k = 0usize;
        loop {
            sum += eval(&order)?;
            k += 1;
            if !next_permutation(&mut order) {
                break;
            }
        }
        return Ok(Estimate::exact((sum / k as f64).norm_sqr()));
    }
    let n_perms = match sym {
        Symmetrization::Sampled { n_perms } => n_perms,
        _ => 512,
    }
    .max(16);
    // Batch U-statistics: within a batch of b values, (|Σf|² - Σ|f|²)/(b(b-1))
    // is unbiased for |E f|².
    const BATCHES: usize = 8;
    let per = n_perms.div_ceil(BATCHES).max(2);
    let mut rng = stream_rng(seed, tag::PERMUTATIONS, labels.len() as u64, 0);
    let mut order = labels.to_vec();
    let mut batch_values = Accumulator::default();
    for _ in 0..BATCHES {
        let mut sum = Complex64::new(0.0, 0.0);
        let mut sq = 0.0;
        for _ in 0..per {
            for i in (1..order.len()).rev() {
                order.swap(i, rng.gen_range(0..=i));
            }
            let f = eval(&order)?;
            sum += f;
            sq += f.norm_sqr();
        }
        batch_values.push((sum.norm_sqr() - sq) / (per * (per - 1)) as f64);
    }
    Ok(Estimate {
        value: batch_values.mean,
        stderr: batch_values.stderr(),
    })
}

/// Multisets of size `n` over `0..k` as sorted label vectors.
fn multisets(k: usize, n: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut cur = Vec::with_capacity(n);
    fn rec(start: usize, k: usize, n: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == n {
            out.push(cur.clone());
            return;
        }
        for i in start..k {
            cur.push(i);
            rec(i, k, n, cur, out);
            cur.pop();
        }
    }
    rec(0, k, n, &mut cur, &mut out);
    out
}

/// Importance proposal for one frequency under a continuous measure.
enum Proposal {
    /// Draw from `N(0, b² I)`; weight is the total mass.
    Gaussian { bandwidth: f64, mass: f64 },
    /// `|ξ| ~ BetaPrime(α, 2)`, uniform direction.
    Riesz { beta: Beta<f64>, alpha: f64, pref: f64 },
}

impl Proposal {
    fn for_measure(measure: &SpectralMeasure) -> Result<Proposal> {
        match *measure {
            SpectralMeasure::GaussianDensity {
                total_mass, bandwidth, ..
            } => Ok(Proposal::Gaussian {
                bandwidth,
                mass: total_mass,
            }),
            SpectralMeasure::Riesz { alpha, dim, .. } => {
                let (_, ck, _) = measure.riesz_density_constant().expect("riesz");
                let beta = Beta::new(alpha, 2.0).map_err(|e| invalid(e.to_string()))?;
                Ok(Proposal::Riesz {
                    beta,
                    alpha,
                    pref: ck * dim.sphere_area() * special::beta(alpha, 2.0),
                })
            }
            SpectralMeasure::SpectralAtoms { .. } => Err(invalid("atoms are summed exactly")),
        }
    }

    /// A frequency and its weight `dμ / dq`.
    fn draw<R: Rng + ?Sized>(&self, dim: Dim, rng: &mut R) -> (Vec2, f64) {
        match self {
            Proposal::Gaussian { bandwidth, mass } => {
                let a: f64 = rng.sample(StandardNormal);
                let b: f64 = if dim == Dim::Two { rng.sample(StandardNormal) } else { 0.0 };
                ([bandwidth * a, bandwidth * b], *mass)
            }
            Proposal::Riesz { beta, alpha, pref } => {
                let b = beta.sample(rng);
                let r = b / (1.0 - b);
                let u = random_direction(dim, rng);
                ([r * u[0], r * u[1]], pref * (1.0 + r).powf(alpha + 2.0))
            }
        }
    }
}

fn check_time(t: f64) -> Result<()> {
    if t > 0.0 && t.is_finite() {
        Ok(())
    } else {
        Err(invalid(format!("t must be positive, got {t}")))
    }
}

fn check_eps(eps: f64) -> Result<()> {
    if eps >= 0.0 && eps.is_finite() {
        Ok(())
    } else {
        Err(invalid(format!("eps must be non-negative, got {eps}")))
    }
}

/// Riesz measures need Dalang's condition (`α < 2`) without mollification.
fn check_dalang(measure: &SpectralMeasure, eps: f64) -> Result<()> {
    if let SpectralMeasure::Riesz { alpha, .. } = *measure {
        if eps == 0.0 && alpha >= 2.0 {
            return Err(Error::InfiniteVariance(format!(
                "Riesz exponent {alpha} violates ∫(1+|ξ|²)^(-1) μ(dξ) < ∞"
            )));
        }
    }
    Ok(())
}

/// `‖f̃_n^ε(·, x; t)‖²_{H^{⊗n}} = ∫ |𝓕f̃_n^ε|² dμ^{⊗n}`: an exact finite sum
/// for atoms, importance-sampled Monte Carlo for continuous measures.
pub fn kernel_norm_sq(n: usize, t: f64, x: Vec2, measure: &SpectralMeasure, eps: f64, opts: &ChaosOptions) -> Result<Estimate> {
    check_time(t)?;
    check_eps(eps)?;
    measure.validate()?;
    check_dalang(measure, eps)?;
    if n == 0 {
        return Err(invalid("kernel order must be at least 1"));
    }
    let dim = measure.dim();
    if measure.is_atomic() {
        let atoms = measure.atom_list();
        if atoms.is_empty() {
            return Ok(Estimate::exact(0.0));
        }
        let points: Vec<Vec2> = atoms.iter().map(|a| a.0).collect();
        let sets = multisets(atoms.len(), n);
        let terms = map_indexed(sets.len(), opts.exec, |i| -> Result<(f64, f64)> {
            let labels = &sets[i];
            let weight: f64 = labels.iter().map(|&k| atoms[k].1).product();
            let mult = arrangement_count(labels);
            let seed = crate::exec::derive_seed(opts.seed, i as u64);
            let sq = symmetrized_sq(t, x, eps, &points, labels, opts.symmetrization, seed)?;
            Ok((mult * weight * sq.value, mult * weight * sq.stderr))
        });
        let mut value = 0.0;
        let mut var = 0.0;
        for term in terms {
            let (v, s) = term?;
            value += v;
            var += s * s;
        }
        return Ok(Estimate {
            value,
            stderr: var.sqrt(),
        });
    }
    let proposal = Proposal::for_measure(measure)?;
    let sym = match opts.symmetrization {
        Symmetrization::Exact if factorial(n) > MAX_EXACT_ARRANGEMENTS as f64 => {
            return Err(Error::TooLarge { n, max: 5 });
        }
        s => s,
    };
    let labels: Vec<usize> = (0..n).collect();
    let plan = chunks(opts.n_samples.max(2));
    let parts = map_indexed(plan.len(), opts.exec, |c| -> Result<Accumulator> {
        let mut rng = stream_rng(opts.seed, tag::SPECTRAL_MC, n as u64, c as u64);
        let mut acc = Accumulator::default();
        let mut points = vec![[0.0; 2]; n];
        for s in 0..plan[c].1 {
            let mut w = 1.0;
            for p in points.iter_mut() {
                let (xi, wi) = proposal.draw(dim, &mut rng);
                *p = xi;
                w *= wi;
            }
            let seed = crate::exec::derive_seed(opts.seed, (plan[c].0 + s) as u64);
            let sq = symmetrized_sq(t, x, eps, &points, &labels, sym, seed)?;
            acc.push(w * sq.value);
        }
        Ok(acc)
    });
    let parts = parts.into_iter().collect::<Result<Vec<_>>>()?;
    let acc = pairwise_merge(&parts);
    Ok(Estimate {
        value: acc.mean,
        stderr: acc.stderr(),
    })
}

/// Partial sums of `E[u(t, x)²] = 1 + Σ n! ‖f̃_n‖²`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SkorohodMoment {
    pub value: f64,
    pub stderr: f64,
    /// `n! ‖f̃_n‖²` for `n = 1..=n_max`.
    pub terms: Vec<Estimate>,
    /// Last term over the partial sum.
    pub tail_ratio: f64,
}

pub fn skorohod_second_moment(t: f64, x: Vec2, measure: &SpectralMeasure, eps: f64, n_max: usize, opts: &ChaosOptions) -> Result<SkorohodMoment> {
    if n_max == 0 {
        return Err(invalid("n_max must be at least 1"));
    }
    let mut terms = Vec::with_capacity(n_max);
    for n in 1..=n_max {
        let e = kernel_norm_sq(n, t, x, measure, eps, opts)?;
        let f = factorial(n);
        terms.push(Estimate {
            value: f * e.value,
            stderr: f * e.stderr,
        });
    }
    let value = 1.0 + terms.iter().map(|e| e.value).sum::<f64>();
    let stderr = terms.iter().map(|e| e.stderr * e.stderr).sum::<f64>().sqrt();
    let tail_ratio = terms.last().map_or(0.0, |e| e.value.abs() / value);
    Ok(SkorohodMoment {
        value,
        stderr,
        terms,
        tail_ratio,
    })
}

/// For a full pairing of `1..=n`, the pairs active at each position:
/// pair `i` is active at `j` when `ℓ_i <= j < m_i`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ActiveSetTableau {
    pub n: usize,
    pub pairs: Vec<(usize, usize)>,
    /// `rows[j - 1]` lists the active pair indices at position `j`.
    pub rows: Vec<Vec<usize>>,
}

impl ActiveSetTableau {
    pub fn new(n: usize, pairs: &[(usize, usize)]) -> Result<Self> {
        let mut seen = vec![false; n + 1];
        for &(l, m) in pairs {
            if !(1 <= l && l < m && m <= n) || seen[l] || seen[m] {
                return Err(invalid(format!("({l}, {m}) is not a valid pair of 1..={n}")));
            }
            seen[l] = true;
            seen[m] = true;
        }
        if seen[1..].iter().any(|s| !s) {
            return Err(invalid("pairs must cover every index"));
        }
        let rows = (1..=n)
            .map(|j| (0..pairs.len()).filter(|&i| pairs[i].0 <= j && j < pairs[i].1).collect())
            .collect();
        Ok(ActiveSetTableau {
            n,
            pairs: pairs.to_vec(),
            rows,
        })
    }

    /// `S_j = Σ_{i active at j} η_i` for `j = 1..=n`.
    pub fn partial_sums(&self, etas: &[Vec2]) -> Vec<Vec2> {
        self.rows
            .iter()
            .map(|row| row.iter().fold([0.0, 0.0], |s, &i| [s[0] + etas[i][0], s[1] + etas[i][1]]))
            .collect()
    }
}

/// Order-`n` term of the Stratonovich mean:
/// `Σ_pairings ∫ μ_ε^{⊗n/2}(dη) ∫_{T_n(t)} ∏_j 𝓕G(t_{j+1} - t_j)(S_j) dt`.
/// Zero for odd `n`.
pub fn stratonovich_mean_term(n: usize, t: f64, measure: &SpectralMeasure, eps: f64, opts: &ChaosOptions) -> Result<Estimate> {
    check_time(t)?;
    check_eps(eps)?;
    measure.validate()?;
    if n == 0 {
        return Ok(Estimate::exact(1.0));
    }
    if n % 2 == 1 {
        return Ok(Estimate::exact(0.0));
    }
    let indices: Vec<usize> = (1..=n).collect();
    let tableaux: Vec<ActiveSetTableau> = enumerate_pair_partitions(&indices)?
        .iter()
        .map(|p: &PairPartition| ActiveSetTableau::new(n, &p.pairs))
        .collect::<Result<_>>()?;
    let k = n / 2;
    let integral = |tab: &ActiveSetTableau, etas: &[Vec2], cache: &mut HashMap<Vec<u64>, f64>| -> Result<f64> {
        let a: Vec<f64> = tab.partial_sums(etas).into_iter().map(norm).collect();
        let key: Vec<u64> = a.iter().map(|v| v.to_bits()).collect();
        if let Some(&v) = cache.get(&key) {
            return Ok(v);
        }
        let v = simplex_gap_integral(t, &a)?;
        cache.insert(key, v);
        Ok(v)
    };
    if measure.is_atomic() {
        let atoms: Vec<(Vec2, f64)> = measure
            .atom_list()
            .into_iter()
            .map(|(xi, w)| (xi, w * (-eps * norm_sq(xi)).exp()))
            .collect();
        if atoms.is_empty() {
            return Ok(Estimate::exact(0.0));
        }
        let per_tableau = map_indexed(tableaux.len(), opts.exec, |i| -> Result<f64> {
            let tab = &tableaux[i];
            let mut cache = HashMap::new();
            let mut idx = vec![0usize; k];
            let mut total = 0.0;
            loop {
                let etas: Vec<Vec2> = idx.iter().map(|&a| atoms[a].0).collect();
                let w: f64 = idx.iter().map(|&a| atoms[a].1).product();
                total += w * integral(tab, &etas, &mut cache)?;
                // odometer over atoms^k
                let mut p = 0;
                loop {
                    if p == k {
                        return Ok(total);
                    }
                    idx[p] += 1;
                    if idx[p] < atoms.len() {
                        break;
                    }
                    idx[p] = 0;
                    p += 1;
                }
            }
        });
        let mut value = 0.0;
        for v in per_tableau {
            value += v?;
        }
        return Ok(Estimate::exact(value));
    }
    let proposal = Proposal::for_measure(measure)?;
    let dim = measure.dim();
    let plan = chunks(opts.n_samples.max(2));
    let parts = map_indexed(plan.len(), opts.exec, |c| -> Result<Accumulator> {
        let mut rng = stream_rng(opts.seed, tag::SPECTRAL_MC, 1000 + n as u64, c as u64);
        let mut acc = Accumulator::default();
        let mut cache = HashMap::new();
        let mut etas = vec![[0.0; 2]; k];
        for _ in 0..plan[c].1 {
            let mut w = 1.0;
            for e in etas.iter_mut() {
                let (xi, wi) = proposal.draw(dim, &mut rng);
                *e = xi;
                w *= wi * (-eps * norm_sq(xi)).exp();
            }
            cache.clear();
            let mut s = 0.0;
            for tab in &tableaux {
                s += integral(tab, &etas, &mut cache)?;
            }
            acc.push(w * s);
        }
        Ok(acc)
    });
    let parts = parts.into_iter().collect::<Result<Vec<_>>>()?;
    let acc = pairwise_merge(&parts);
    Ok(Estimate {
        value: acc.mean,
        stderr: acc.stderr(),
    })
}

/// Partial sums of the Stratonovich mean `E[v(t, x)]`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MeanSeries {
    pub value: f64,
    pub stderr: f64,
    /// `(n, term)` for even `n = 2..=n_max`.
    pub terms: Vec<(usize, Estimate)>,
}

pub fn stratonovich_mean_series(t: f64, measure: &SpectralMeasure, eps: f64, n_max: usize, opts: &ChaosOptions) -> Result<MeanSeries> {
    if n_max % 2 == 1 {
        return Err(invalid(format!("n_max must be even, got {n_max}")));
    }
    check_time(t)?;
    let mut terms = Vec::new();
    for n in (2..=n_max).step_by(2) {
        terms.push((n, stratonovich_mean_term(n, t, measure, eps, opts)?));
    }
    let value = 1.0 + terms.iter().map(|(_, e)| e.value).sum::<f64>();
    let stderr = terms.iter().map(|(_, e)| e.stderr * e.stderr).sum::<f64>().sqrt();
    Ok(MeanSeries { value, stderr, terms })
}

/// The `n = 2` mean term in physical space,
/// `∫_{T_2(t)} (t - t_2) ∫ G(t_2 - t_1, z) γ_ε(z) dz dt = ∫_0^t (t-u)²/2 Γ(u) du`
/// with `Γ(u) = ∫ G(u, z) γ_ε(z) dz` and `γ_ε = p_{2ε} * γ`.
pub fn mean_term_two_physical(t: f64, measure: &SpectralMeasure, eps: f64) -> Result<f64> {
    check_time(t)?;
    measure.validate()?;
    if eps == 0.0 && !measure.has_physical_kernel() {
        return Err(Error::Unsupported("γ is not a locally integrable function".into()));
    }
    let pc = measure.pairing_covariance(eps)?;
    let dim = measure.dim();
    let opts = QuadOptions {
        abs_tol: 1e-13,
        rel_tol: 1e-11,
        max_subdivisions: 4000,
    };
    let gamma_int = |u: f64| -> Result<f64> {
        if u <= 0.0 {
            return Ok(0.0);
        }
        match dim {
            // ½ ∫_{-u}^{u} γ = ∫_0^u γ for even γ
            Dim::One => Ok(quad::integrate(|z| pc.eval([z, 0.0]), 0.0, u, opts)?.value),
            // ρ = u sin φ: (2π)^{-1} ∫_0^{π/2} u sin φ ∮ γ(ρ e_θ) dθ dφ
            Dim::Two => {
                let inner = |phi: f64| -> f64 {
                    let rho = u * phi.sin();
                    let ring = quad::integrate(|th: f64| pc.eval([rho * th.cos(), rho * th.sin()]), 0.0, 2.0 * PI, opts)
                        .map(|r| r.value)
                        .unwrap_or(f64::NAN);
                    u * phi.sin() * ring / (2.0 * PI)
                };
                let r = quad::integrate(inner, 0.0, 0.5 * PI, opts)?;
                if r.value.is_nan() {
                    return Err(Error::Quadrature {
                        estimate: r.value,
                        error: r.error,
                        subdivisions: r.subdivisions,
                    });
                }
                Ok(r.value)
            }
        }
    };
    let mut failure = None;
    let r = quad::integrate(
        |u| match gamma_int(u) {
            Ok(g) => 0.5 * (t - u) * (t - u) * g,
            Err(e) => {
                failure.get_or_insert(e);
                0.0
            }
        },
        0.0,
        t,
        opts,
    )?;
    match failure {
        Some(e) => Err(e),
        None => Ok(r.value),
    }
}

/// One row of the term census of the `n`-fold product expansion.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct CensusRow {
    pub n: usize,
    pub k: usize,
    pub chaos_level: usize,
    pub term_count: u64,
    /// `J_n` (the Skorohod term) for `k = 0`, `M_n` (correction) otherwise.
    pub label: String,
}

pub fn decomposition_census(n: usize) -> Result<Vec<CensusRow>> {
    let terms = enumerate_strato_terms(n)?;
    Ok((0..=n / 2)
        .map(|k| CensusRow {
            n,
            k,
            chaos_level: n - 2 * k,
            term_count: terms.iter().filter(|t| t.k == k).count() as u64,
            label: if k == 0 { format!("J_{n}") } else { format!("M_{n}") },
        })
        .collect())
}

/// Radial test functions with closed-form Fourier transforms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TestFunction {
    /// `A exp(-|x|² / (2 s²))`.
    GaussianBump { amplitude: f64, width: f64 },
    /// `A 1{|x| < R}`.
    ConeIndicator { amplitude: f64, radius: f64 },
}

impl TestFunction {
    pub fn eval(&self, r: f64) -> f64 {
        match *self {
            TestFunction::GaussianBump { amplitude, width } => amplitude * (-0.5 * r * r / (width * width)).exp(),
            TestFunction::ConeIndicator { amplitude, radius } => {
                if r < radius {
                    amplitude
                } else {
                    0.0
                }
            }
        }
    }

    /// `𝓕φ` as a function of `|ξ|`.
    pub fn fourier(&self, xi: f64, dim: Dim) -> f64 {
        let d = dim.get() as i32;
        match *self {
            TestFunction::GaussianBump { amplitude, width } => {
                amplitude * (2.0 * PI * width * width).powf(0.5 * d as f64) * (-0.5 * width * width * xi * xi).exp()
            }
            TestFunction::ConeIndicator { amplitude, radius } => match dim {
                Dim::One => 2.0 * amplitude * g_fourier(radius, xi),
                Dim::Two => {
                    if xi * radius < 1e-8 {
                        amplitude * PI * radius * radius
                    } else {
                        2.0 * PI * amplitude * radius * libm::j1(radius * xi) / xi
                    }
                }
            },
        }
    }

    fn support(&self) -> f64 {
        match *self {
            TestFunction::GaussianBump { width, .. } => 12.0 * width,
            TestFunction::ConeIndicator { radius, .. } => radius,
        }
    }

    fn validate(&self) -> Result<()> {
        let (a, s) = match *self {
            TestFunction::GaussianBump { amplitude, width } => (amplitude, width),
            TestFunction::ConeIndicator { amplitude, radius } => (amplitude, radius),
        };
        if a.is_finite() && s > 0.0 && s.is_finite() {
            Ok(())
        } else {
            Err(invalid("test function needs a finite amplitude and positive scale"))
        }
    }
}

/// `(∫ φ γ dx, ∫ 𝓕φ dμ)`, each side by its own quadrature.
pub fn parseval_check(measure: &SpectralMeasure, phi: &TestFunction) -> Result<(f64, f64)> {
    measure.validate()?;
    phi.validate()?;
    if !measure.has_physical_kernel() {
        return Err(Error::Unsupported("γ is not a locally integrable function".into()));
    }
    if matches!(measure, SpectralMeasure::Riesz { .. }) && matches!(phi, TestFunction::ConeIndicator { .. }) {
        return Err(Error::Unsupported(
            "the Fourier side of an indicator against Riesz noise is only conditionally convergent".into(),
        ));
    }
    let dim = measure.dim();
    let opts = QuadOptions {
        abs_tol: 1e-12,
        rel_tol: 1e-11,
        max_subdivisions: 4000,
    };
    let top = phi.support();
    let lhs = match (measure, dim) {
        (SpectralMeasure::SpectralAtoms { .. }, Dim::One) => {
            2.0 * quad::integrate(|x| phi.eval(x) * measure.gamma_eval([x, 0.0]), 0.0, top, opts)?.value
        }
        (SpectralMeasure::SpectralAtoms { .. }, Dim::Two) => {
            let mut failure = None;
            let v = quad::integrate(
                |r| {
                    let ring = quad::integrate(|th: f64| measure.gamma_eval([r * th.cos(), r * th.sin()]), 0.0, 2.0 * PI, opts);
                    match ring {
                        Ok(q) => r * phi.eval(r) * q.value,
                        Err(e) => {
                            failure.get_or_insert(e);
                            0.0
                        }
                    }
                },
                0.0,
                top,
                opts,
            )?
            .value;
            if let Some(e) = failure {
                return Err(e);
            }
            v
        }
        _ => {
            let d = dim.get() as i32;
            dim.sphere_area()
                * quad::integrate(|r| r.powi(d - 1) * phi.eval(r) * measure.gamma_eval([r, 0.0]), 0.0, top, opts)?.value
        }
    };
    let rhs = measure.radial_integral(|r| phi.fourier(r, dim), None, opts)?;
    Ok((lhs, rhs))
}

/// `(t - |x|)`-weighted wave kernel used by the physical-space check.
#[doc(hidden)]
pub fn wave_kernel_at(t: f64, r: f64, dim: Dim) -> f64 {
    g_unchecked(t, r, dim)
}
