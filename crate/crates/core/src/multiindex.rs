//! Photon-pattern multi-indices `I = (i_1, ..., i_N)`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "Vec<u32>", into = "Vec<u32>")]
pub struct MultiIndex {
    entries: Vec<u32>,
    degree: u32,
}

impl MultiIndex {
    pub fn new(entries: Vec<u32>) -> Self {
        let degree = entries.iter().sum();
        MultiIndex { entries, degree }
    }

    pub fn zero(n: usize) -> Self {
        Self::new(vec![0; n])
    }

    pub fn entries(&self) -> &[u32] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// |I|.
    pub fn degree(&self) -> u32 {
        self.degree
    }

    /// `I!` as an exact integer, or `None` if it does not fit in 128 bits.
    pub fn checked_factorial(&self) -> Option<u128> {
        self.entries.iter().try_fold(1u128, |acc, &i| {
            (2..=i as u128).try_fold(acc, |a, k| a.checked_mul(k))
        })
    }

    /// `I!` as a float: exact conversion when it fits, otherwise a running
    /// floating-point product.
    pub fn factorial(&self) -> f64 {
        match self.checked_factorial() {
            Some(v) => v as f64,
            None => self
                .entries
                .iter()
                .map(|&i| (2..=i).map(f64::from).product::<f64>())
                .product(),
        }
    }

    pub fn checked_add(&self, other: &MultiIndex) -> Result<MultiIndex> {
        if self.len() != other.len() {
            return Err(Error::LengthMismatch { left: self.len(), right: other.len() });
        }
        Ok(Self::new(self.entries.iter().zip(&other.entries).map(|(a, b)| a + b).collect()))
    }

    /// Row indices of `B_I`: mode `k` repeated `i_k` times.
    pub fn expanded_rows(&self) -> Vec<usize> {
        self.entries
            .iter()
            .enumerate()
            .flat_map(|(k, &c)| std::iter::repeat_n(k, c as usize))
            .collect()
    }
}

impl TryFrom<Vec<u32>> for MultiIndex {
    type Error = Error;
    fn try_from(v: Vec<u32>) -> Result<Self> {
        if v.is_empty() {
            return Err(Error::invalid("multi-index", "must have at least one entry"));
        }
        Ok(Self::new(v))
    }
}

impl From<MultiIndex> for Vec<u32> {
    fn from(m: MultiIndex) -> Self {
        m.entries
    }
}

impl fmt::Display for MultiIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (k, v) in self.entries.iter().enumerate() {
            if k > 0 {
                f.write_str(",")?;
            }
            write!(f, "{v}")?;
        }
        Ok(())
    }
}

impl FromStr for MultiIndex {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let entries = s
            .split(',')
            .map(|p| {
                p.trim().parse::<u32>().map_err(|_| {
                    Error::invalid("multi-index", format!("`{s}` is not a list like 2,0,1"))
                })
            })
            .collect::<Result<Vec<_>>>()?;
        MultiIndex::try_from(entries)
    }
}

/// All `I` in N^n with `|I| = degree`, in ascending lexicographic order.
pub fn enumerate_degree(n: usize, degree: u32) -> Vec<MultiIndex> {
    assert!(n >= 1, "a multi-index needs at least one mode");
    let mut out = Vec::with_capacity(binomial(degree as u64 + n as u64 - 1, n as u64 - 1) as usize);
    let mut cur = vec![0u32; n];
    fill(&mut cur, 0, degree, &mut out);
    out
}

fn fill(cur: &mut Vec<u32>, pos: usize, remaining: u32, out: &mut Vec<MultiIndex>) {
    if pos + 1 == cur.len() {
        cur[pos] = remaining;
        out.push(MultiIndex::new(cur.clone()));
        return;
    }
    for v in 0..=remaining {
        cur[pos] = v;
        fill(cur, pos + 1, remaining - v, out);
    }
}

pub fn binomial(n: u64, k: u64) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    (0..k as u128).fold(1u128, |acc, i| acc * (n as u128 - i) / (i + 1))
}

/// sigma(N, K) = #{ I in N^N : |I| = 2K }.
pub fn count_sigma(n: usize, k: u32) -> u128 {
    binomial(2 * k as u64 + n as u64 - 1, n as u64 - 1)
}
