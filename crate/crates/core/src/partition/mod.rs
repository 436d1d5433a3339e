//! Partitions of `n` units in canonical (first-appearance) label form.
//!
//! Equality of two [`Partition`] values is equality of their label strings,
//! which is exactly equality of the induced set partitions.

mod compare;
mod gibbs;

pub use compare::{adjusted_rand_index, partition_entropy, rand_index, variation_of_information};
pub use gibbs::{
    eppf_log_prob, expected_clusters, sample_partition, solve_theta, GibbsParams,
};

use std::collections::HashMap;
use std::hash::Hash;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default cap on `n` for [`enumerate_partitions`]; Bell(10) = 115975.
pub const DEFAULT_ENUMERATION_CAP: usize = 10;

/// A set partition of `n` units stored as canonical cluster labels.
///
/// `labels[0] == 0` and every new label is one more than the largest label
/// seen so far, so labels run over `0..k`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "Vec<u32>", into = "Vec<u32>")]
pub struct Partition {
    labels: Vec<u32>,
    k: usize,
}

impl Partition {
    /// Relabel by order of first appearance.
    pub fn canonicalize<L: Copy + Eq + Hash>(raw: &[L]) -> Result<Self> {
        if raw.is_empty() {
            return Err(Error::Empty("partition labels"));
        }
        let mut map: HashMap<L, u32> = HashMap::with_capacity(8);
        let labels: Vec<u32> = raw
            .iter()
            .map(|l| {
                let next = map.len() as u32;
                *map.entry(*l).or_insert(next)
            })
            .collect();
        let k = map.len();
        Ok(Self { labels, k })
    }

    /// Build from labels already known to be canonical. Checked in debug builds.
    pub(crate) fn from_canonical(labels: Vec<u32>) -> Self {
        let k = labels.iter().copied().max().map_or(0, |m| m as usize + 1);
        debug_assert!(is_canonical(&labels));
        Self { labels, k }
    }

    /// Canonicalize a dense label vector in place (labels `< n`), avoiding hashing.
    pub(crate) fn from_dense_labels(raw: &[usize]) -> Self {
        let mut map = vec![u32::MAX; raw.len().max(raw.iter().copied().max().map_or(0, |m| m + 1))];
        let mut next = 0u32;
        let labels = raw
            .iter()
            .map(|&l| {
                if map[l] == u32::MAX {
                    map[l] = next;
                    next += 1;
                }
                map[l]
            })
            .collect();
        Self {
            labels,
            k: next as usize,
        }
    }

    pub fn one_block(n: usize) -> Self {
        assert!(n > 0, "partition of zero units");
        Self {
            labels: vec![0; n],
            k: 1,
        }
    }

    pub fn singletons(n: usize) -> Self {
        assert!(n > 0, "partition of zero units");
        Self {
            labels: (0..n as u32).collect(),
            k: n,
        }
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.labels.len()
    }

    /// Number of blocks `k`.
    #[inline]
    pub fn num_blocks(&self) -> usize {
        self.k
    }

    #[inline]
    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    #[inline]
    pub fn label(&self, unit: usize) -> usize {
        self.labels[unit] as usize
    }

    pub fn block_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0usize; self.k];
        for &l in &self.labels {
            sizes[l as usize] += 1;
        }
        sizes
    }

    /// Unit indices of each block, blocks in label order.
    pub fn blocks(&self) -> Vec<Vec<usize>> {
        let mut blocks = vec![Vec::new(); self.k];
        for (i, &l) in self.labels.iter().enumerate() {
            blocks[l as usize].push(i);
        }
        blocks
    }

    #[inline]
    pub fn same_block(&self, i: usize, j: usize) -> bool {
        self.labels[i] == self.labels[j]
    }
}

fn is_canonical(labels: &[u32]) -> bool {
    let mut next = 0u32;
    for &l in labels {
        if l > next {
            return false;
        }
        if l == next {
            next += 1;
        }
    }
    !labels.is_empty()
}

impl TryFrom<Vec<u32>> for Partition {
    type Error = Error;

    fn try_from(labels: Vec<u32>) -> Result<Self> {
        if labels.is_empty() {
            return Err(Error::Empty("partition labels"));
        }
        if is_canonical(&labels) {
            Ok(Self::from_canonical(labels))
        } else {
            Self::canonicalize(&labels)
        }
    }
}

impl From<Partition> for Vec<u32> {
    fn from(p: Partition) -> Self {
        p.labels
    }
}

impl std::fmt::Display for Partition {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str("(")?;
        for (i, l) in self.labels.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            write!(f, "{l}")?;
        }
        f.write_str(")")
    }
}

/// All Bell(n) partitions of `n` units, in lexicographic order of canonical labels.
pub fn enumerate_partitions(n: usize) -> Result<Vec<Partition>> {
    enumerate_partitions_capped(n, DEFAULT_ENUMERATION_CAP)
}

pub fn enumerate_partitions_capped(n: usize, cap: usize) -> Result<Vec<Partition>> {
    if n == 0 {
        return Err(Error::Empty("partition of zero units"));
    }
    if n > cap {
        return Err(Error::EnumerationCap { n, cap });
    }
    // Restricted growth strings: a[0] = 0, a[i] <= 1 + max(a[..i]).
    let mut out = Vec::new();
    let mut a = vec![0u32; n];
    let mut max = vec![0u32; n];
    loop {
        out.push(Partition::from_canonical(a.clone()));
        let mut i = n - 1;
        loop {
            if i == 0 {
                return Ok(out);
            }
            if a[i] <= max[i - 1] {
                a[i] += 1;
                max[i] = max[i - 1].max(a[i]);
                for j in i + 1..n {
                    a[j] = 0;
                    max[j] = max[i];
                }
                break;
            }
            i -= 1;
        }
    }
}
