//! Hafnians of dense symmetric matrices and of the repeated-row matrices
//! `B_I` indexed by photon patterns.
//!
//! Three evaluation routes exist:
//!
//! * [`hafnian_matching_sum`]: direct recursion over perfect matchings,
//!   `(m-1)!!` terms. This is the reference.
//! * [`hafnian_inclusion_exclusion`]: the power-trace formula summed over
//!   subsets of row pairs, `O(m^4 2^(m/2))`.
//! * [`hafnian_repeated`]: the matching recursion with identical rows grouped
//!   and memoised per sub-pattern. The state space of `B_I` is the box
//!   `prod (i_k + 1)`, which is what makes `Haf(B_{J+J'})` tractable for the
//!   Monte Carlo variance sums.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, RwLock};

use crate::error::{Error, Result};
use crate::linalg::SymmetricMatrix;
use crate::multiindex::{enumerate_degree, MultiIndex};

/// Values with magnitude at or below this report sign 0.
pub const SIGN_ZERO_TOLERANCE: f64 = 1e-14;

/// Sizes up to this use the matching sum inside [`hafnian_dense`].
const MATCHING_SUM_MAX: usize = 10;

/// Reference hafnian: sum over perfect matchings, pairing the first
/// unmatched row with each remaining row in turn.
pub fn hafnian_matching_sum(a: &SymmetricMatrix) -> Result<f64> {
    let m = a.dim();
    if m % 2 == 1 {
        return Err(Error::OddSize(m));
    }
    let mut rows: Vec<usize> = (0..m).collect();
    Ok(pair_first(a, &mut rows))
}

fn pair_first(a: &SymmetricMatrix, rows: &mut Vec<usize>) -> f64 {
    if rows.is_empty() {
        return 1.0;
    }
    let first = rows.remove(0);
    let mut sum = 0.0;
    for pos in 0..rows.len() {
        let partner = rows.remove(pos);
        sum += a.get(first, partner) * pair_first(a, rows);
        rows.insert(pos, partner);
    }
    rows.insert(0, first);
    sum
}

/// Hafnian via inclusion-exclusion over subsets of the row pairs
/// `(0,1), (2,3), ...`:
///
/// `haf(A) = sum_S (-1)^(n-|S|) [x^n] exp( sum_j tr((XA)_S^j) x^j / (2j) )`
///
/// where `X` swaps the two rows inside each pair and `n = m/2`.
pub fn hafnian_inclusion_exclusion(a: &SymmetricMatrix) -> Result<f64> {
    let m = a.dim();
    if m % 2 == 1 {
        return Err(Error::OddSize(m));
    }
    let n = m / 2;
    if n == 0 {
        return Ok(1.0);
    }
    let mut total = 0.0;
    let mut rows = Vec::with_capacity(m);
    let mut c = Vec::with_capacity(m * m);
    for subset in 1u64..(1u64 << n) {
        rows.clear();
        for p in 0..n {
            if subset >> p & 1 == 1 {
                rows.push(2 * p);
                rows.push(2 * p + 1);
            }
        }
        let k = rows.len();
        // (XA)_S: row r of the block reads the partner row r ^ 1.
        c.clear();
        for &r in &rows {
            for &col in &rows {
                c.push(a.get(r ^ 1, col));
            }
        }
        let traces = power_traces(&c, k, n);
        let coeff = exp_series_coefficient(&traces, n);
        let size = subset.count_ones() as usize;
        if (n - size) % 2 == 0 {
            total += coeff;
        } else {
            total -= coeff;
        }
    }
    Ok(total)
}

/// `tr(C^j)` for `j = 1..=max_power`, C stored row-major k x k.
fn power_traces(c: &[f64], k: usize, max_power: usize) -> Vec<f64> {
    let mut traces = Vec::with_capacity(max_power);
    let mut power = c.to_vec();
    let mut next = vec![0.0; k * k];
    for j in 1..=max_power {
        traces.push((0..k).map(|i| power[i * k + i]).sum());
        if j == max_power {
            break;
        }
        for i in 0..k {
            for col in 0..k {
                let mut s = 0.0;
                for l in 0..k {
                    s += power[i * k + l] * c[l * k + col];
                }
                next[i * k + col] = s;
            }
        }
        std::mem::swap(&mut power, &mut next);
    }
    traces
}

/// `[x^n] exp(sum_j traces[j-1] x^j / (2j))`.
fn exp_series_coefficient(traces: &[f64], n: usize) -> f64 {
    let g: Vec<f64> =
        traces.iter().enumerate().map(|(j, t)| t / (2.0 * (j + 1) as f64)).collect();
    let mut e = vec![0.0; n + 1];
    e[0] = 1.0;
    for kk in 1..=n {
        let mut s = 0.0;
        for j in 1..=kk {
            s += j as f64 * g[j - 1] * e[kk - j];
        }
        e[kk] = s / kk as f64;
    }
    e[n]
}

/// Hafnian of an even-sized dense symmetric matrix; the empty matrix has
/// hafnian 1.
pub fn hafnian_dense(a: &SymmetricMatrix) -> Result<f64> {
    if a.dim() <= MATCHING_SUM_MAX {
        hafnian_matching_sum(a)
    } else {
        hafnian_inclusion_exclusion(a)
    }
}

/// The `|I| x |I|` matrix `B_I`: row/column `k` of `B` repeated `i_k` times.
pub fn expand(b: &SymmetricMatrix, index: &MultiIndex) -> Result<SymmetricMatrix> {
    check_index(b, index)?;
    let rows = index.expanded_rows();
    Ok(SymmetricMatrix::from_fn(rows.len(), |i, j| b.get(rows[i], rows[j])))
}

fn check_index(b: &SymmetricMatrix, index: &MultiIndex) -> Result<()> {
    if index.len() != b.dim() {
        return Err(Error::LengthMismatch { left: index.len(), right: b.dim() });
    }
    if index.degree() % 2 == 1 {
        return Err(Error::OddSize(index.degree() as usize));
    }
    Ok(())
}

/// Packed sub-pattern key: one byte per mode, up to 16 modes.
type PackedIndex = u128;

const MAX_PACKED_MODES: usize = 16;

fn pack(entries: &[u8]) -> PackedIndex {
    entries.iter().enumerate().fold(0u128, |acc, (k, &v)| acc | (v as u128) << (8 * k))
}

fn unpack(key: PackedIndex, n: usize) -> MultiIndex {
    MultiIndex::new((0..n).map(|k| ((key >> (8 * k)) & 0xff) as u32).collect())
}

fn to_bytes(index: &MultiIndex) -> Result<Vec<u8>> {
    if index.len() > MAX_PACKED_MODES {
        return Err(Error::invalid("multi-index", format!("at most {MAX_PACKED_MODES} modes")));
    }
    index
        .entries()
        .iter()
        .map(|&v| u8::try_from(v).map_err(|_| Error::invalid("multi-index", "entries must be < 256")))
        .collect()
}

/// Memo of `Haf(B_I)` for one matrix `B`, keyed by pattern.
#[derive(Debug, Default, Clone)]
pub struct HafnianTable {
    memo: HashMap<PackedIndex, f64>,
}

impl HafnianTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.memo.len()
    }

    pub fn is_empty(&self) -> bool {
        self.memo.is_empty()
    }

    /// `Haf(B_I)`; every sub-pattern visited is memoised.
    pub fn hafnian(&mut self, b: &SymmetricMatrix, index: &MultiIndex) -> Result<f64> {
        check_index(b, index)?;
        let mut bytes = to_bytes(index)?;
        Ok(self.recurse(b, &mut bytes, index.degree()))
    }

    // Pair one copy of the first occupied mode k with each remaining copy of
    // every mode j: Haf(B_I) = sum_j B[k][j] * (I - e_k)_j * Haf(B_{I-e_k-e_j}).
    fn recurse(&mut self, b: &SymmetricMatrix, idx: &mut [u8], degree: u32) -> f64 {
        if degree == 0 {
            return 1.0;
        }
        let key = pack(idx);
        if let Some(&v) = self.memo.get(&key) {
            return v;
        }
        let k = idx.iter().position(|&v| v > 0).expect("positive degree has an occupied mode");
        idx[k] -= 1;
        let mut sum = 0.0;
        for j in 0..idx.len() {
            let mult = idx[j];
            if mult == 0 {
                continue;
            }
            let bkj = b.get(k, j);
            if bkj == 0.0 {
                continue;
            }
            idx[j] -= 1;
            sum += bkj * mult as f64 * self.recurse(b, idx, degree - 2);
            idx[j] += 1;
        }
        idx[k] += 1;
        self.memo.insert(key, sum);
        sum
    }

    fn entries(&self, n: usize) -> impl Iterator<Item = (MultiIndex, f64)> + '_ {
        self.memo.iter().map(move |(&k, &v)| (unpack(k, n), v))
    }
}

/// `Haf(B_I)` through the grouped matching recursion, without any cache.
pub fn hafnian_repeated(b: &SymmetricMatrix, index: &MultiIndex) -> Result<f64> {
    HafnianTable::new().hafnian(b, index)
}

/// Thread-safe memo from (matrix fingerprint, pattern) to `Haf(B_I)`,
/// sharded per matrix so workers on different matrices never contend.
#[derive(Debug, Default)]
pub struct HafnianCache {
    shards: RwLock<HashMap<u64, Arc<Shard>>>,
}

#[derive(Debug)]
struct Shard {
    dim: usize,
    table: Mutex<HafnianTable>,
}

impl HafnianCache {
    pub fn new() -> Self {
        Self::default()
    }

    fn shard(&self, fingerprint: u64, dim: usize) -> Arc<Shard> {
        if let Some(s) = self.shards.read().expect("cache lock").get(&fingerprint) {
            return Arc::clone(s);
        }
        let mut guard = self.shards.write().expect("cache lock");
        Arc::clone(guard.entry(fingerprint).or_insert_with(|| {
            Arc::new(Shard { dim, table: Mutex::new(HafnianTable::new()) })
        }))
    }

    pub fn hafnian(&self, b: &SymmetricMatrix, index: &MultiIndex) -> Result<f64> {
        let shard = self.shard(b.fingerprint(), b.dim());
        let mut table = shard.table.lock().expect("cache lock");
        table.hafnian(b, index)
    }

    /// Seeds a value, e.g. from a persisted log.
    pub fn insert(&self, fingerprint: u64, index: &MultiIndex, value: f64) -> Result<()> {
        let bytes = to_bytes(index)?;
        let shard = self.shard(fingerprint, index.len());
        if shard.dim != index.len() {
            return Err(Error::LengthMismatch { left: index.len(), right: shard.dim });
        }
        shard.table.lock().expect("cache lock").memo.insert(pack(&bytes), value);
        Ok(())
    }

    /// Number of cached values across all matrices.
    pub fn len(&self) -> usize {
        self.shards
            .read()
            .expect("cache lock")
            .values()
            .map(|s| s.table.lock().expect("cache lock").len())
            .sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Snapshot of every cached value, sorted by fingerprint then pattern.
    pub fn entries(&self) -> Vec<(u64, MultiIndex, f64)> {
        let shards = self.shards.read().expect("cache lock");
        let mut out: Vec<(u64, MultiIndex, f64)> = shards
            .iter()
            .flat_map(|(&fp, s)| {
                let table = s.table.lock().expect("cache lock");
                table.entries(s.dim).map(|(i, v)| (fp, i, v)).collect::<Vec<_>>()
            })
            .collect();
        out.sort_by(|x, y| x.0.cmp(&y.0).then_with(|| x.1.cmp(&y.1)));
        out
    }
}

/// `Haf(B_I)`, memoised in `cache`.
pub fn hafnian_multiindex(b: &SymmetricMatrix, index: &MultiIndex, cache: &HafnianCache) -> Result<f64> {
    cache.hafnian(b, index)
}

/// Sign of `Haf(B_I)`, with magnitudes up to 1e-14 reported as 0.
pub fn hafnian_sign(b: &SymmetricMatrix, index: &MultiIndex, cache: &HafnianCache) -> Result<i8> {
    Ok(sign_of(hafnian_multiindex(b, index, cache)?))
}

pub(crate) fn sign_of(v: f64) -> i8 {
    if v.abs() <= SIGN_ZERO_TOLERANCE {
        0
    } else if v > 0.0 {
        1
    } else {
        -1
    }
}

/// `Haf((tB)_I) = t^K Haf(B_I)` for every `|I| = 2K`, in canonical pattern
/// order. Only the unscaled values go through the cache.
pub fn batch_hafnians_degree(
    b: &SymmetricMatrix,
    t: f64,
    k: u32,
    cache: &HafnianCache,
) -> Result<Vec<f64>> {
    let scale = t.powi(k as i32);
    enumerate_degree(b.dim(), 2 * k)
        .iter()
        .map(|i| Ok(scale * hafnian_multiindex(b, i, cache)?))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RngStream;

    fn mat(rows: &[&[f64]]) -> SymmetricMatrix {
        SymmetricMatrix::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
    }

    fn mi(v: &[u32]) -> MultiIndex {
        MultiIndex::new(v.to_vec())
    }

    fn example_4x4() -> SymmetricMatrix {
        // Off-diagonals a12..a34 = 1..6.
        mat(&[
            &[0.0, 1.0, 2.0, 3.0],
            &[1.0, 0.0, 4.0, 5.0],
            &[2.0, 4.0, 0.0, 6.0],
            &[3.0, 5.0, 6.0, 0.0],
        ])
    }

    #[test]
    fn dense_examples() {
        let two = mat(&[&[0.3, 0.7], &[0.7, 0.1]]);
        assert_eq!(hafnian_matching_sum(&two).unwrap(), 0.7);
        assert!((hafnian_inclusion_exclusion(&two).unwrap() - 0.7).abs() < 1e-15);
        assert_eq!(hafnian_dense(&example_4x4()).unwrap(), 28.0);
        assert!((hafnian_inclusion_exclusion(&example_4x4()).unwrap() - 28.0).abs() < 1e-12);
        let empty = SymmetricMatrix::identity(0);
        assert_eq!(hafnian_dense(&empty).unwrap(), 1.0);
        assert_eq!(hafnian_inclusion_exclusion(&empty).unwrap(), 1.0);
    }

    #[test]
    fn odd_sizes_rejected() {
        let three = SymmetricMatrix::identity(3);
        assert_eq!(hafnian_dense(&three), Err(Error::OddSize(3)));
        assert_eq!(hafnian_inclusion_exclusion(&three), Err(Error::OddSize(3)));
        let cache = HafnianCache::new();
        assert_eq!(
            hafnian_multiindex(&three, &mi(&[1, 0, 0]), &cache),
            Err(Error::OddSize(1))
        );
    }

    #[test]
    fn multiindex_examples() {
        let cache = HafnianCache::new();
        let beta = mat(&[&[0.37]]);
        assert_eq!(expand(&beta, &mi(&[2])).unwrap().rows(), vec![vec![0.37, 0.37]; 2]);
        assert_eq!(hafnian_multiindex(&beta, &mi(&[2]), &cache).unwrap(), 0.37);

        let b = mat(&[&[0.5, -0.2, 0.1], &[-0.2, 0.4, 0.05], &[0.1, 0.05, 0.3]]);
        assert_eq!(hafnian_multiindex(&b, &mi(&[0, 0, 0]), &cache).unwrap(), 1.0);
        let b2 = mat(&[&[0.9, 0.25], &[0.25, 0.1]]);
        assert_eq!(hafnian_multiindex(&b2, &mi(&[1, 1]), &cache).unwrap(), 0.25);
        assert!(hafnian_multiindex(&b2, &mi(&[1, 1, 0]), &cache).is_err());
    }

    #[test]
    fn sign_examples() {
        let cache = HafnianCache::new();
        let pos = mat(&[&[0.5, 0.2], &[0.2, 0.4]]);
        assert_eq!(hafnian_sign(&pos, &mi(&[0, 0]), &cache).unwrap(), 1);
        for i in enumerate_degree(2, 6) {
            assert_eq!(hafnian_sign(&pos, &i, &cache).unwrap(), 1);
        }
        let neg = mat(&[&[0.5, -0.4], &[-0.4, 0.6]]);
        assert_eq!(hafnian_sign(&neg, &mi(&[1, 1]), &cache).unwrap(), -1);
        let zero = mat(&[&[0.0, 0.3], &[0.3, 0.0]]);
        assert_eq!(hafnian_sign(&zero, &mi(&[2, 0]), &cache).unwrap(), 0);
    }

    #[test]
    fn routes_agree_on_random_matrices() {
        let mut rng = RngStream::new(7);
        for size in (2..=12).step_by(2) {
            for _ in 0..10 {
                let a = SymmetricMatrix::from_fn(size, |_, _| rng.normal());
                let reference = hafnian_matching_sum(&a).unwrap();
                let fast = hafnian_inclusion_exclusion(&a).unwrap();
                let scale = reference.abs().max(1e-12);
                assert!((reference - fast).abs() / scale < 1e-9, "size {size}: {reference} vs {fast}");
            }
        }
    }

    #[test]
    fn repeated_route_matches_expansion() {
        let mut rng = RngStream::new(8);
        for n in 1..=4 {
            let b = SymmetricMatrix::from_fn(n, |_, _| rng.normal() * 0.5);
            for deg in [0u32, 2, 4, 6, 8] {
                for i in enumerate_degree(n, deg) {
                    let expanded = hafnian_matching_sum(&expand(&b, &i).unwrap()).unwrap();
                    let grouped = hafnian_repeated(&b, &i).unwrap();
                    let tol = 1e-11 * expanded.abs().max(1.0);
                    assert!((expanded - grouped).abs() < tol, "{i}: {expanded} vs {grouped}");
                }
            }
        }
    }

    #[test]
    fn one_dimensional_double_factorial() {
        // Haf of the all-beta 2m x 2m matrix is (2m-1)!! beta^m.
        let b = mat(&[&[0.8]]);
        let mut df = 1.0;
        for m in 1..=10u32 {
            df *= (2 * m - 1) as f64;
            let v = hafnian_repeated(&b, &mi(&[2 * m])).unwrap();
            let expect = df * 0.8f64.powi(m as i32);
            assert!((v - expect).abs() < 1e-12 * expect);
        }
    }

    #[test]
    fn cache_hits_are_bit_identical() {
        let mut rng = RngStream::new(9);
        let b = SymmetricMatrix::from_fn(3, |_, _| rng.normal());
        let cache = HafnianCache::new();
        let idx = mi(&[3, 2, 3]);
        let first = hafnian_multiindex(&b, &idx, &cache).unwrap();
        assert!(!cache.is_empty());
        let second = hafnian_multiindex(&b, &idx, &cache).unwrap();
        assert_eq!(first.to_bits(), second.to_bits());
        assert_eq!(first.to_bits(), hafnian_repeated(&b, &idx).unwrap().to_bits());

        // Seeding a fresh cache from a snapshot reproduces the same values.
        let copy = HafnianCache::new();
        for (fp, i, v) in cache.entries() {
            copy.insert(fp, &i, v).unwrap();
        }
        assert_eq!(copy.len(), cache.len());
        assert_eq!(hafnian_multiindex(&b, &idx, &copy).unwrap().to_bits(), first.to_bits());
    }

    #[test]
    fn batch_small_case_and_scaling() {
        let cache = HafnianCache::new();
        let b = mat(&[&[0.6, 0.2], &[0.2, 0.3]]);
        // Canonical order: (0,2), (1,1), (2,0).
        assert_eq!(batch_hafnians_degree(&b, 1.0, 1, &cache).unwrap(), vec![0.3, 0.2, 0.6]);

        let mut rng = RngStream::new(10);
        let b = SymmetricMatrix::from_fn(3, |_, _| rng.normal() * 0.4);
        let k = 3;
        let t = 1.37;
        let scaled = batch_hafnians_degree(&b, t, k, &cache).unwrap();
        let direct = batch_hafnians_degree(&b.scaled(t), 1.0, k, &cache).unwrap();
        for (x, y) in scaled.iter().zip(&direct) {
            assert!((x - y).abs() <= 1e-12 * y.abs().max(1e-300));
        }
    }

    #[test]
    fn homogeneity_and_permutation_equivariance() {
        let mut rng = RngStream::new(11);
        let b = SymmetricMatrix::from_fn(4, |_, _| rng.normal() * 0.5);
        let idx = mi(&[2, 1, 0, 3]);
        let base = hafnian_repeated(&b, &idx).unwrap();
        let c = -0.7;
        let scaled = hafnian_repeated(&b.scaled(c), &idx).unwrap();
        let expect = c.powi(3) * base;
        assert!((scaled - expect).abs() <= 1e-12 * expect.abs());

        // result(i, j) = b(p[i], p[j]) pairs with entries i'_i = i_{p[i]}.
        let p = [2usize, 0, 3, 1];
        let permuted = b.permuted(&p);
        let idx_p = MultiIndex::new(p.iter().map(|&k| idx.entries()[k]).collect());
        let v = hafnian_repeated(&permuted, &idx_p).unwrap();
        assert!((v - base).abs() <= 1e-12 * base.abs());
    }
}
