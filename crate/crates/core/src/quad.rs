//! Quadrature building blocks: adaptive Gauss-Kronrod, cached
//! Gauss-Legendre rules and Chebyshev interpolation grids.

use std::collections::{BinaryHeap, HashMap};
use std::num::NonZeroUsize;
use std::sync::{Arc, Mutex, OnceLock};

use gauss_quad::legendre::GaussLegendre;

use crate::error::{Error, Result};

/// Stopping rule for [`integrate`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadOptions {
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub max_subdivisions: usize,
}

impl Default for QuadOptions {
    fn default() -> Self {
        QuadOptions {
            abs_tol: 1e-9,
            rel_tol: 1e-12,
            max_subdivisions: 4000,
        }
    }
}

impl QuadOptions {
    pub fn with_abs_tol(abs_tol: f64) -> Self {
        QuadOptions {
            abs_tol,
            ..Default::default()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadResult {
    pub value: f64,
    pub error: f64,
    pub subdivisions: usize,
}

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_18,
    0.140_653_259_715_525_92,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_83,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

fn gk15<F: FnMut(f64) -> f64>(f: &mut F, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut kron = fc * WGK[7];
    let mut gauss = fc * WG[3];
    for i in 0..7 {
        let dx = h * XGK[i];
        let s = f(c - dx) + f(c + dx);
        kron += WGK[i] * s;
        if i % 2 == 1 {
            gauss += WG[i / 2] * s;
        }
    }
    (kron * h, ((kron - gauss) * h).abs())
}

struct Segment {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
}

impl PartialEq for Segment {
    fn eq(&self, other: &Self) -> bool {
        self.error == other.error
    }
}
impl Eq for Segment {}
impl PartialOrd for Segment {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Segment {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.error.total_cmp(&other.error)
    }
}

/// Globally adaptive G7-K15 integration of `f` over `[a, b]`.
///
/// The interval with the largest error estimate is bisected until the total
/// error is below `max(abs_tol, rel_tol * |I|)`. Failing to get there within
/// `max_subdivisions` is an error carrying the last estimate.
pub fn integrate<F: FnMut(f64) -> f64>(mut f: F, a: f64, b: f64, opts: QuadOptions) -> Result<QuadResult> {
    if a == b {
        return Ok(QuadResult {
            value: 0.0,
            error: 0.0,
            subdivisions: 0,
        });
    }
    let (v, e) = gk15(&mut f, a, b);
    let mut heap = BinaryHeap::new();
    heap.push(Segment { a, b, value: v, error: e });
    let mut total = v;
    let mut total_err = e;
    let mut subdivisions = 0;
    loop {
        if !total.is_finite() {
            return Err(Error::Quadrature {
                estimate: total,
                error: total_err,
                subdivisions,
            });
        }
        if total_err <= opts.abs_tol.max(opts.rel_tol * total.abs()) {
            return Ok(QuadResult {
                value: total,
                error: total_err,
                subdivisions,
            });
        }
        if subdivisions >= opts.max_subdivisions {
            return Err(Error::Quadrature {
                estimate: total,
                error: total_err,
                subdivisions,
            });
        }
        let seg = heap.pop().expect("heap is never empty");
        let mid = 0.5 * (seg.a + seg.b);
        let (lv, le) = gk15(&mut f, seg.a, mid);
        let (rv, re) = gk15(&mut f, mid, seg.b);
        total += lv + rv - seg.value;
        total_err += le + re - seg.error;
        heap.push(Segment { a: seg.a, b: mid, value: lv, error: le });
        heap.push(Segment { a: mid, b: seg.b, value: rv, error: re });
        subdivisions += 1;
        // Cancellation in the running sums can drift; resum occasionally.
        if subdivisions % 64 == 0 {
            total = heap.iter().map(|s| s.value).sum();
            total_err = heap.iter().map(|s| s.error).sum();
        }
    }
}

/// `∫_a^∞ f` through the map `x = a + s / (1 - s)`.
pub fn integrate_to_infinity<F: FnMut(f64) -> f64>(mut f: F, a: f64, opts: QuadOptions) -> Result<QuadResult> {
    integrate(
        |s| {
            if s >= 1.0 {
                return 0.0;
            }
            let one_minus = 1.0 - s;
            let x = a + s / one_minus;
            let v = f(x) / (one_minus * one_minus);
            if v.is_finite() {
                v
            } else {
                0.0
            }
        },
        0.0,
        1.0,
        opts,
    )
}

/// Gauss-Legendre nodes and weights on `[-1, 1]`.
#[derive(Debug, Clone)]
pub struct GlRule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GlRule {
    /// `∫_a^b f` with this rule.
    pub fn integrate<F: FnMut(f64) -> f64>(&self, a: f64, b: f64, mut f: F) -> f64 {
        let c = 0.5 * (a + b);
        let h = 0.5 * (b - a);
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&x, &w)| w * f(c + h * x))
            .sum::<f64>()
            * h
    }

    /// Nodes and weights mapped to `[a, b]`.
    pub fn mapped(&self, a: f64, b: f64) -> impl Iterator<Item = (f64, f64)> + '_ {
        let c = 0.5 * (a + b);
        let h = 0.5 * (b - a);
        self.nodes.iter().zip(&self.weights).map(move |(&x, &w)| (c + h * x, w * h))
    }
}

/// Shared Gauss-Legendre rule of the given degree.
pub fn gauss_legendre(degree: usize) -> Arc<GlRule> {
    static CACHE: OnceLock<Mutex<HashMap<usize, Arc<GlRule>>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    let mut guard = cache.lock().expect("quadrature cache poisoned");
    guard
        .entry(degree)
        .or_insert_with(|| {
            let deg = NonZeroUsize::new(degree.max(1)).expect("nonzero");
            let rule = GaussLegendre::new(deg);
            let (nodes, weights) = rule.as_node_weight_pairs().iter().copied().unzip();
            Arc::new(GlRule { nodes, weights })
        })
        .clone()
}

/// Chebyshev points of the second kind on `[a, b]` with barycentric
/// interpolation weights.
#[derive(Debug, Clone)]
pub struct ChebGrid {
    pub a: f64,
    pub b: f64,
    pub nodes: Vec<f64>,
    bary: Vec<f64>,
}

impl ChebGrid {
    pub fn new(a: f64, b: f64, n: usize) -> Self {
        assert!(n >= 2, "Chebyshev grid needs at least two nodes");
        let m = n - 1;
        let nodes = (0..n)
            .map(|k| {
                let x = -(std::f64::consts::PI * k as f64 / m as f64).cos();
                0.5 * (a + b) + 0.5 * (b - a) * x
            })
            .collect();
        let bary = (0..n)
            .map(|k| {
                let s = if k % 2 == 0 { 1.0 } else { -1.0 };
                if k == 0 || k == m {
                    0.5 * s
                } else {
                    s
                }
            })
            .collect();
        ChebGrid { a, b, nodes, bary }
    }

    /// Barycentric interpolation of nodal `values` at `x`.
    pub fn interp(&self, values: &[f64], x: f64) -> f64 {
        let mut num = 0.0;
        let mut den = 0.0;
        for ((&xk, &wk), &fk) in self.nodes.iter().zip(&self.bary).zip(values) {
            let d = x - xk;
            if d == 0.0 {
                return fk;
            }
            let c = wk / d;
            num += c * fk;
            den += c;
        }
        num / den
    }

    /// Coefficients `c_k` with `interp(values, x) = Σ c_k values[k]`.
    pub fn interp_row(&self, x: f64, row: &mut Vec<f64>) {
        row.clear();
        if let Some(k) = self.nodes.iter().position(|&xk| xk == x) {
            row.resize(self.nodes.len(), 0.0);
            row[k] = 1.0;
            return;
        }
        row.extend(self.nodes.iter().zip(&self.bary).map(|(&xk, &wk)| wk / (x - xk)));
        let den: f64 = row.iter().sum();
        row.iter_mut().for_each(|c| *c /= den);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gk_handles_smooth_and_singular() {
        let r = integrate(|x| x.sin(), 0.0, std::f64::consts::PI, QuadOptions::default()).unwrap();
        assert!((r.value - 2.0).abs() < 1e-12);
        let r = integrate(|x: f64| 1.0 / x.sqrt(), 0.0, 1.0, QuadOptions::with_abs_tol(1e-9)).unwrap();
        assert!((r.value - 2.0).abs() < 1e-8, "{r:?}");
    }

    #[test]
    fn gk_reports_failure() {
        let opts = QuadOptions {
            abs_tol: 1e-14,
            rel_tol: 0.0,
            max_subdivisions: 3,
        };
        match integrate(|x: f64| 1.0 / x.sqrt(), 0.0, 1.0, opts) {
            Err(Error::Quadrature { subdivisions, .. }) => assert_eq!(subdivisions, 3),
            other => panic!("expected failure, got {other:?}"),
        }
    }

    #[test]
    fn semi_infinite_gaussian() {
        let r = integrate_to_infinity(|x| (-x * x).exp(), 0.0, QuadOptions::default()).unwrap();
        assert!((r.value - std::f64::consts::PI.sqrt() / 2.0).abs() < 1e-10);
    }

    #[test]
    fn gauss_legendre_polynomial_exactness() {
        let rule = gauss_legendre(5);
        let v = rule.integrate(0.0, 2.0, |x| x.powi(9));
        assert!((v - 2f64.powi(10) / 10.0).abs() < 1e-10);
    }

    #[test]
    fn chebyshev_interpolates_entire_functions() {
        let g = ChebGrid::new(0.0, 2.0, 32);
        let vals: Vec<f64> = g.nodes.iter().map(|&x| (3.0 * x).sin()).collect();
        for x in [0.0, 0.3, 1.234, 2.0] {
            assert!((g.interp(&vals, x) - (3.0 * x).sin()).abs() < 1e-12);
        }
    }
}
