//! Pairings behind the product formula for first-order Wiener integrals and
//! behind Isserlis' theorem.
//!
//! A product of `n` centred Gaussian factors expands into terms indexed by
//! `k`, a set `J` of `n - 2k` unpaired indices and a perfect matching of the
//! remaining `2k` indices. Indices are 1-based throughout, matching the
//! usual `{1, …, n}` labelling.

use serde::Serialize;

use crate::error::{invalid, Error, Result};
use crate::special::{binomial, double_factorial_odd};

/// Largest `n` for which [`enumerate_strato_terms`] materializes the full
/// term list (`a(14) = 2 390 480`).
pub const MAX_ENUMERATION: usize = 14;

/// One term `(k, J, {I_1, …, I_k})` of the product expansion.
///
/// Canonical form: `J` ascending, every pair `(ℓ, m)` has `ℓ < m`, and pairs
/// are sorted by `ℓ`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize)]
pub struct StratoTerm {
    pub n: usize,
    pub k: usize,
    pub unpaired: Vec<usize>,
    pub pairs: Vec<(usize, usize)>,
}

impl StratoTerm {
    /// Chaos order `n - 2k` of the term.
    pub fn chaos_level(&self) -> usize {
        self.n - 2 * self.k
    }

    pub fn is_canonical(&self) -> bool {
        self.unpaired.windows(2).all(|w| w[0] < w[1])
            && self.pairs.iter().all(|&(l, m)| l < m)
            && self.pairs.windows(2).all(|w| w[0].0 < w[1].0)
    }

    /// Whether `J` and the pairs partition `{1, …, n}`.
    pub fn is_partition(&self) -> bool {
        let mut seen = vec![false; self.n + 1];
        let all = self
            .unpaired
            .iter()
            .copied()
            .chain(self.pairs.iter().flat_map(|&(l, m)| [l, m]));
        for i in all {
            if i == 0 || i > self.n || seen[i] {
                return false;
            }
            seen[i] = true;
        }
        seen[1..].iter().all(|&s| s)
    }
}

/// A perfect matching of an even-size index set.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize)]
pub struct PairPartition {
    pub pairs: Vec<(usize, usize)>,
}

impl PairPartition {
    /// The `k = n/2`, `J = ∅` term.
    pub fn as_term(&self) -> StratoTerm {
        StratoTerm {
            n: 2 * self.pairs.len(),
            k: self.pairs.len(),
            unpaired: vec![],
            pairs: self.pairs.clone(),
        }
    }
}

/// All perfect matchings of `indices` in canonical order.
pub fn enumerate_pair_partitions(indices: &[usize]) -> Result<Vec<PairPartition>> {
    if indices.len() % 2 == 1 {
        return Err(invalid(format!(
            "pair partitions need an even number of indices, got {}",
            indices.len()
        )));
    }
    let mut sorted = indices.to_vec();
    sorted.sort_unstable();
    if sorted.windows(2).any(|w| w[0] == w[1]) {
        return Err(invalid("indices must be distinct"));
    }
    if sorted.len() / 2 > MAX_ENUMERATION / 2 + 1 {
        return Err(Error::TooLarge {
            n: sorted.len(),
            max: MAX_ENUMERATION + 2,
        });
    }
    let mut out = Vec::with_capacity(double_factorial_odd(sorted.len() / 2) as usize);
    let mut current = Vec::with_capacity(sorted.len() / 2);
    matchings(&sorted, &mut current, &mut out);
    Ok(out)
}

fn matchings(rest: &[usize], current: &mut Vec<(usize, usize)>, out: &mut Vec<PairPartition>) {
    if rest.is_empty() {
        out.push(PairPartition { pairs: current.clone() });
        return;
    }
    let first = rest[0];
    for j in 1..rest.len() {
        current.push((first, rest[j]));
        let remaining: Vec<usize> = rest[1..j].iter().chain(&rest[j + 1..]).copied().collect();
        matchings(&remaining, current, out);
        current.pop();
    }
}

/// Increasing `size`-subsets of `{1, …, n}` in lexicographic order.
fn subsets(n: usize, size: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut cur = Vec::with_capacity(size);
    fn rec(start: usize, n: usize, size: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == size {
            out.push(cur.clone());
            return;
        }
        for i in start..=n {
            if n - i + 1 < size - cur.len() {
                break;
            }
            cur.push(i);
            rec(i + 1, n, size, cur, out);
            cur.pop();
        }
    }
    rec(1, n, size, &mut cur, &mut out);
    out
}

/// Complete term list of the expansion of `n` factors, grouped by `k`.
pub fn enumerate_strato_terms(n: usize) -> Result<Vec<StratoTerm>> {
    if n == 0 {
        return Err(invalid("n must be at least 1"));
    }
    if n > MAX_ENUMERATION {
        return Err(Error::TooLarge {
            n,
            max: MAX_ENUMERATION,
        });
    }
    let mut out = Vec::with_capacity(involution_number(n) as usize);
    for k in 0..=n / 2 {
        for unpaired in subsets(n, n - 2 * k) {
            let complement: Vec<usize> = (1..=n).filter(|i| !unpaired.contains(i)).collect();
            for p in enumerate_pair_partitions(&complement)? {
                out.push(StratoTerm {
                    n,
                    k,
                    unpaired: unpaired.clone(),
                    pairs: p.pairs,
                });
            }
        }
    }
    Ok(out)
}

/// `C(n, 2k) (2k)! / (2^k k!)`, the number of terms at pairing level `k`.
pub fn term_count(n: usize, k: usize) -> u64 {
    if 2 * k > n {
        return 0;
    }
    binomial(n, 2 * k) * double_factorial_odd(k)
}

/// Involution numbers `a(n) = a(n-1) + (n-1) a(n-2)`, `a(0) = a(1) = 1`.
pub fn involution_number(n: usize) -> u64 {
    let (mut prev, mut cur) = (1u64, 1u64);
    for m in 2..=n {
        let next = cur + (m as u64 - 1) * prev;
        prev = cur;
        cur = next;
    }
    cur
}

/// Dense symmetric matrix stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct SymMatrix {
    n: usize,
    data: Vec<f64>,
}

impl SymMatrix {
    /// Validates squareness and symmetry (relative tolerance 1e-12).
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        if rows.iter().any(|r| r.len() != n) {
            return Err(invalid("covariance matrix must be square"));
        }
        for i in 0..n {
            for j in 0..i {
                let (a, b) = (rows[i][j], rows[j][i]);
                if (a - b).abs() > 1e-12 * a.abs().max(b.abs()).max(1e-300) && a != b {
                    return Err(invalid(format!("covariance matrix is not symmetric at ({i}, {j})")));
                }
            }
        }
        Ok(SymMatrix {
            n,
            data: rows.iter().flatten().copied().collect(),
        })
    }

    pub fn zeros(n: usize) -> Self {
        SymMatrix { n, data: vec![0.0; n * n] }
    }

    pub fn size(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.n + j] = v;
        self.data[j * self.n + i] = v;
    }

    /// Resets to an `n × n` zero matrix, reusing the allocation.
    pub fn reset(&mut self, n: usize) {
        self.n = n;
        self.data.clear();
        self.data.resize(n * n, 0.0);
    }
}

/// `E[Z_1 ⋯ Z_n]` for a centred Gaussian vector with covariance `cov`:
/// the sum over perfect matchings of the products of paired covariances.
pub fn isserlis_expectation(cov: &[Vec<f64>]) -> Result<f64> {
    Ok(hafnian(&SymMatrix::from_rows(cov)?))
}

/// Sum over perfect matchings of `∏ m[ℓ][m]` (the hafnian); the diagonal is
/// never read. Small sizes expand recursively along the first index, larger
/// ones memoize over index subsets.
pub fn hafnian(m: &SymMatrix) -> f64 {
    let n = m.size();
    if n % 2 == 1 {
        return 0.0;
    }
    if n == 0 {
        return 1.0;
    }
    if n <= 10 {
        let mut idx: Vec<usize> = (0..n).collect();
        return hafnian_recursive(m, &mut idx);
    }
    assert!(n <= 28, "hafnian of size {n} is out of reach");
    let mut memo = vec![f64::NAN; 1 << n];
    memo[0] = 1.0;
    hafnian_memo(m, (1u32 << n) - 1, &mut memo)
}

fn hafnian_recursive(m: &SymMatrix, idx: &mut [usize]) -> f64 {
    match idx.len() {
        0 => 1.0,
        2 => m.get(idx[0], idx[1]),
        len => {
            let first = idx[0];
            let mut total = 0.0;
            for j in 1..len {
                let c = m.get(first, idx[j]);
                if c == 0.0 {
                    continue;
                }
                // Move the partner to slot 1 and recurse on the tail.
                idx.swap(1, j);
                total += c * hafnian_recursive(m, &mut idx[2..]);
                idx.swap(1, j);
            }
            total
        }
    }
}

fn hafnian_memo(m: &SymMatrix, mask: u32, memo: &mut [f64]) -> f64 {
    let cached = memo[mask as usize];
    if !cached.is_nan() {
        return cached;
    }
    let first = mask.trailing_zeros() as usize;
    let rest = mask & !(1 << first);
    let mut total = 0.0;
    let mut bits = rest;
    while bits != 0 {
        let j = bits.trailing_zeros() as usize;
        bits &= bits - 1;
        total += m.get(first, j) * hafnian_memo(m, rest & !(1 << j), memo);
    }
    memo[mask as usize] = total;
    total
}

/// Probabilists' Hermite polynomial `He_n(x)`.
pub fn hermite_eval(n: usize, x: f64) -> f64 {
    let (mut prev, mut cur) = (1.0, x);
    if n == 0 {
        return prev;
    }
    for k in 1..n {
        let next = x * cur - k as f64 * prev;
        prev = cur;
        cur = next;
    }
    cur
}

/// `∏_i γ(ℓ_i, m_i) · ∏_{j ∈ J} g(j)` for one term.
pub fn partial_pairing_weight<G, W>(term: &StratoTerm, gamma_at: G, gaussians: W) -> f64
where
    G: Fn(usize, usize) -> f64,
    W: Fn(usize) -> f64,
{
    let paired: f64 = term.pairs.iter().map(|&(l, m)| gamma_at(l, m)).product();
    let free: f64 = term.unpaired.iter().map(|&j| gaussians(j)).product();
    paired * free
}

/// Per-`k` term counts of the expansion of `n` factors.
pub fn census_counts(n: usize) -> Vec<u64> {
    (0..=n / 2).map(|k| term_count(n, k)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pair_partition_examples() {
        let p = enumerate_pair_partitions(&[1, 2]).unwrap();
        assert_eq!(p, vec![PairPartition { pairs: vec![(1, 2)] }]);
        assert_eq!(enumerate_pair_partitions(&[1, 2, 3, 4]).unwrap().len(), 3);
        assert_eq!(enumerate_pair_partitions(&[1, 2, 3, 4, 5, 6]).unwrap().len(), 15);
        assert!(enumerate_pair_partitions(&[1, 2, 3]).is_err());
        assert!(enumerate_pair_partitions(&[1, 1]).is_err());
        assert_eq!(enumerate_pair_partitions(&[]).unwrap().len(), 1);
    }

    #[test]
    fn pair_partitions_of_four_are_canonical() {
        let p = enumerate_pair_partitions(&[4, 3, 2, 1]).unwrap();
        let pairs: Vec<_> = p.into_iter().map(|p| p.pairs).collect();
        assert_eq!(
            pairs,
            vec![vec![(1, 2), (3, 4)], vec![(1, 3), (2, 4)], vec![(1, 4), (2, 3)]]
        );
    }

    #[test]
    fn strato_term_examples() {
        let counts = |n: usize| {
            let terms = enumerate_strato_terms(n).unwrap();
            (0..=n / 2).map(|k| terms.iter().filter(|t| t.k == k).count()).collect::<Vec<_>>()
        };
        assert_eq!(counts(4), vec![1, 6, 3]);
        assert_eq!(counts(5), vec![1, 10, 15]);
        assert_eq!(enumerate_strato_terms(6).unwrap().len(), 76);
        assert!(matches!(enumerate_strato_terms(15), Err(Error::TooLarge { .. })));
        assert!(enumerate_strato_terms(0).is_err());
    }

    #[test]
    fn involution_numbers() {
        let a: Vec<u64> = (1..=6).map(involution_number).collect();
        assert_eq!(a, vec![1, 2, 4, 10, 26, 76]);
        for n in 1..=10 {
            assert_eq!(census_counts(n).iter().sum::<u64>(), involution_number(n));
        }
    }

    #[test]
    fn isserlis_examples() {
        let c = 0.3;
        assert!((isserlis_expectation(&[vec![1.0, c], vec![c, 1.0]]).unwrap() - c).abs() < 1e-15);
        let three = vec![vec![1.0, 0.2, 0.1], vec![0.2, 1.0, 0.4], vec![0.1, 0.4, 1.0]];
        assert_eq!(isserlis_expectation(&three).unwrap(), 0.0);
        let ones = vec![vec![1.0; 4]; 4];
        assert_eq!(isserlis_expectation(&ones).unwrap(), 3.0);
        assert!(isserlis_expectation(&[vec![1.0, 0.0]]).is_err());
        assert!(isserlis_expectation(&[vec![1.0, 0.5], vec![0.4, 1.0]]).is_err());
    }

    #[test]
    fn memoized_hafnian_matches_recursion() {
        let n = 12;
        let mut m = SymMatrix::zeros(n);
        for i in 0..n {
            for j in 0..=i {
                m.set(i, j, ((i * 7 + j * 3) % 11) as f64 / 11.0 - 0.4);
            }
        }
        let mut idx: Vec<usize> = (0..n).collect();
        let rec = hafnian_recursive(&m, &mut idx);
        let memo = hafnian(&m);
        assert!((rec - memo).abs() < 1e-12 * rec.abs().max(1.0));
        // all-ones: (n-1)!!
        let mut ones = SymMatrix::zeros(n);
        for i in 0..n {
            for j in 0..n {
                ones.set(i, j, 1.0);
            }
        }
        assert_eq!(hafnian(&ones), double_factorial_odd(n / 2) as f64);
    }

    #[test]
    fn hermite_examples() {
        assert_eq!(hermite_eval(0, 3.7), 1.0);
        assert_eq!(hermite_eval(2, 0.0), -1.0);
        assert_eq!(hermite_eval(3, 2.0), 8.0 - 6.0);
        assert_eq!(hermite_eval(4, 1.0), 1.0 - 6.0 + 3.0);
    }

    #[test]
    fn partial_pairing_weight_examples() {
        let g = |j: usize| [0.0, 1.5, -2.0, 0.5][j];
        let gamma = |l: usize, m: usize| 0.1 * (l * 10 + m) as f64;
        let free = StratoTerm { n: 3, k: 0, unpaired: vec![1, 2, 3], pairs: vec![] };
        assert_eq!(partial_pairing_weight(&free, gamma, g), 1.5 * -2.0 * 0.5);
        let full = StratoTerm { n: 2, k: 1, unpaired: vec![], pairs: vec![(1, 2)] };
        assert!((partial_pairing_weight(&full, gamma, g) - 1.2).abs() < 1e-15);
        // n = 2: g1 g2 + γ12
        let sum: f64 = enumerate_strato_terms(2)
            .unwrap()
            .iter()
            .map(|t| partial_pairing_weight(t, gamma, g))
            .sum();
        assert!((sum - (1.5 * -2.0 + 1.2)).abs() < 1e-15);
    }

    #[test]
    fn terms_are_canonical_partitions_without_duplicates() {
        for n in 1..=8 {
            let terms = enumerate_strato_terms(n).unwrap();
            assert!(terms.iter().all(|t| t.is_canonical() && t.is_partition()));
            let unique: std::collections::HashSet<_> = terms.iter().collect();
            assert_eq!(unique.len(), terms.len());
        }
    }
}
