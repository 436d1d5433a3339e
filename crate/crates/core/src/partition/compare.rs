//! Pairwise comparison of partitions and block entropy.

use std::collections::HashMap;

use super::Partition;
use crate::error::{Error, Result};

struct Contingency {
    n: usize,
    /// Sum over cells of C(n_ij, 2).
    pairs_both: f64,
    pairs_left: f64,
    pairs_right: f64,
    cells: Vec<usize>,
    rows: Vec<usize>,
    cols: Vec<usize>,
}

#[inline]
fn choose2(m: usize) -> f64 {
    (m as f64) * (m as f64 - 1.0) / 2.0
}

fn contingency(p: &Partition, q: &Partition) -> Result<Contingency> {
    if p.n() != q.n() {
        return Err(Error::SizeMismatch {
            what: "partition sizes",
            left: p.n(),
            right: q.n(),
        });
    }
    let mut table: HashMap<(u32, u32), usize> = HashMap::new();
    for (&a, &b) in p.labels().iter().zip(q.labels()) {
        *table.entry((a, b)).or_default() += 1;
    }
    let rows = p.block_sizes();
    let cols = q.block_sizes();
    let cells: Vec<usize> = table.into_values().collect();
    Ok(Contingency {
        n: p.n(),
        pairs_both: cells.iter().map(|&c| choose2(c)).sum(),
        pairs_left: rows.iter().map(|&c| choose2(c)).sum(),
        pairs_right: cols.iter().map(|&c| choose2(c)).sum(),
        cells,
        rows,
        cols,
    })
}

fn need_pairs(n: usize) -> Result<()> {
    if n < 2 {
        return Err(Error::InvalidParameter(
            "pair-counting index needs at least two units".into(),
        ));
    }
    Ok(())
}

/// Fraction of unit pairs on which the two partitions agree.
pub fn rand_index(p: &Partition, q: &Partition) -> Result<f64> {
    let c = contingency(p, q)?;
    need_pairs(c.n)?;
    let total = choose2(c.n);
    Ok((total + 2.0 * c.pairs_both - c.pairs_left - c.pairs_right) / total)
}

/// Adjusted Rand index under the permutation (hypergeometric) model.
pub fn adjusted_rand_index(p: &Partition, q: &Partition) -> Result<f64> {
    let c = contingency(p, q)?;
    need_pairs(c.n)?;
    let total = choose2(c.n);
    let expected = c.pairs_left * c.pairs_right / total;
    let max = 0.5 * (c.pairs_left + c.pairs_right);
    if max == expected {
        // both one block or both all singletons
        return Ok(1.0);
    }
    Ok((c.pairs_both - expected) / (max - expected))
}

/// Variation of information in bits.
pub fn variation_of_information(p: &Partition, q: &Partition) -> Result<f64> {
    let c = contingency(p, q)?;
    let n = c.n as f64;
    let h = |counts: &[usize]| -> f64 {
        counts
            .iter()
            .map(|&m| {
                let f = m as f64 / n;
                -f * f.log2()
            })
            .sum()
    };
    // VI = 2 H(P,Q) - H(P) - H(Q)
    let vi = 2.0 * h(&c.cells) - h(&c.rows) - h(&c.cols);
    Ok(vi.max(0.0))
}

/// Shannon entropy (nats) of the block-size distribution.
pub fn partition_entropy(p: &Partition) -> f64 {
    let n = p.n() as f64;
    p.block_sizes()
        .into_iter()
        .map(|m| {
            let f = m as f64 / n;
            -f * f.ln()
        })
        .sum()
}
