//! Posterior summaries and decisions.
//!
//! Changepoint decisions threshold the posterior probabilities of change
//! `PPC_t = Pr(gamma_t = 1 | Y)`, with the threshold chosen to control the
//! Bayesian false discovery rate. Partitions are summarised per time by the
//! co-clustering matrix and a variation-of-information point estimate.
//!
//! Time sets in this module are 1-based, so changepoints lie in `2..=T` and
//! `ppc[k]` refers to time `k + 2`.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::partition::Partition;
use crate::sampler::ChainOutput;

/// Default FDR level for the non-marginal rule.
pub const DEFAULT_ZETA: f64 = 0.01;

/// `PPC_t` for times `2..=T`: the mean of the retained `gamma_t` draws.
pub fn compute_ppc(out: &ChainOutput) -> Result<Vec<f64>> {
    let d = out.num_draws();
    if d == 0 {
        return Err(Error::Empty("retained draws"));
    }
    Ok((1..out.horizon())
        .map(|t| (0..d).filter(|&k| out.gamma(k, t)).count() as f64 / d as f64)
        .collect())
}

/// Marginal Bayesian FDR of flagging every `PPC_t > h`.
pub fn bfdr(ppc: &[f64], h: f64) -> f64 {
    let (mut num, mut count) = (0.0, 0usize);
    for &p in ppc {
        if p > h {
            num += 1.0 - p;
            count += 1;
        }
    }
    num / count.max(1) as f64
}

/// `zeta`, or `zeta / 3` for the non-marginal rule (whose FDR is three times the marginal one).
pub fn effective_level(zeta: f64, nonmarginal: bool) -> f64 {
    if nonmarginal {
        zeta / 3.0
    } else {
        zeta
    }
}

/// Smallest `h` in `{0} ∪ {PPC values}` with `bfdr(ppc, h) <= level`; `1` if none.
///
/// `bfdr` is a step function of `h` changing only at PPC values, so the grid is exhaustive.
pub fn optimal_threshold(ppc: &[f64], zeta: f64, nonmarginal: bool) -> Result<f64> {
    if !(zeta > 0.0 && zeta < 1.0) {
        return Err(invalid(format!("FDR level must lie in (0, 1); got {zeta}")));
    }
    if let Some(p) = ppc.iter().find(|p| !(0.0..=1.0).contains(*p)) {
        return Err(invalid(format!("PPC value {p} outside [0, 1]")));
    }
    let level = effective_level(zeta, nonmarginal);
    let mut grid: Vec<f64> = ppc.to_vec();
    grid.push(0.0);
    grid.sort_by(f64::total_cmp);
    grid.dedup();
    Ok(grid
        .into_iter()
        .find(|&h| bfdr(ppc, h) <= level)
        .unwrap_or(1.0))
}

/// 1-based times `t` with `PPC_t > h`.
pub fn flagged_times(ppc: &[f64], h: f64) -> Vec<usize> {
    ppc.iter()
        .enumerate()
        .filter(|(_, &p)| p > h)
        .map(|(k, _)| k + 2)
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CompoundLoss {
    pub tpr: f64,
    pub er: f64,
    pub loss: f64,
}

/// True positive rate, windowed error rate and `-TPR + kappa * ER`.
///
/// `r` holds truths in `{0, 1}` or PPC values for the posterior expectation.
/// Each false detection is counted once for every window `{t-1, t, t+1}`
/// containing it. With no positive decisions all three are 0.
pub fn compound_loss(d: &[bool], r: &[f64], kappa: f64) -> Result<CompoundLoss> {
    if d.len() != r.len() {
        return Err(Error::SizeMismatch {
            what: "decisions vs truths",
            left: d.len(),
            right: r.len(),
        });
    }
    let positives = d.iter().filter(|&&x| x).count();
    if positives == 0 {
        return Ok(CompoundLoss {
            tpr: 0.0,
            er: 0.0,
            loss: 0.0,
        });
    }
    let dn = positives as f64;
    let hit: f64 = d.iter().zip(r).filter(|(&x, _)| x).map(|(_, &y)| y).sum();
    let miss: Vec<f64> = d
        .iter()
        .zip(r)
        .map(|(&x, &y)| if x { 1.0 - y } else { 0.0 })
        .collect();
    let m = miss.len();
    let left: f64 = miss[..m - 1].iter().sum();
    let centre: f64 = miss.iter().sum();
    let right: f64 = miss[1..].iter().sum();
    let tpr = hit / dn;
    let er = (left + centre + right) / dn;
    Ok(CompoundLoss {
        tpr,
        er,
        loss: -tpr + kappa * er,
    })
}

/// Symmetric `n × n` co-clustering probabilities, stored row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct SimilarityMatrix {
    n: usize,
    values: Vec<f64>,
}

impl SimilarityMatrix {
    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.n + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.n..(i + 1) * self.n]
    }
}

/// Distinct partitions with multiplicities, in canonical-label order.
fn tally<'a, I>(draws: I) -> Result<Vec<(&'a Partition, usize)>>
where
    I: IntoIterator<Item = &'a Partition>,
{
    let mut counts: BTreeMap<&Partition, usize> = BTreeMap::new();
    let mut n = None;
    for p in draws {
        if *n.get_or_insert(p.n()) != p.n() {
            return Err(Error::SizeMismatch {
                what: "units in partition draws",
                left: p.n(),
                right: n.unwrap_or(0),
            });
        }
        *counts.entry(p).or_default() += 1;
    }
    if counts.is_empty() {
        return Err(Error::Empty("partition draws"));
    }
    Ok(counts.into_iter().collect())
}

fn similarity_from_tally(tally: &[(&Partition, usize)]) -> SimilarityMatrix {
    let n = tally[0].0.n();
    let total: usize = tally.iter().map(|(_, c)| c).sum();
    let mut values = vec![0.0; n * n];
    for (p, c) in tally {
        let w = *c as f64 / total as f64;
        for block in p.blocks() {
            for &i in &block {
                for &j in &block {
                    values[i * n + j] += w;
                }
            }
        }
    }
    // exact unit diagonal regardless of rounding
    for i in 0..n {
        values[i * n + i] = 1.0;
    }
    SimilarityMatrix { n, values }
}

pub fn similarity_matrix<'a, I>(draws: I) -> Result<SimilarityMatrix>
where
    I: IntoIterator<Item = &'a Partition>,
{
    Ok(similarity_from_tally(&tally(draws)?))
}

/// Lower bound on the posterior expected variation of information (bits) of `c`.
pub fn vi_lower_bound(c: &Partition, sim: &SimilarityMatrix) -> Result<f64> {
    let n = c.n();
    if n != sim.n() {
        return Err(Error::SizeMismatch {
            what: "partition vs similarity matrix",
            left: n,
            right: sim.n(),
        });
    }
    let row_sums: Vec<f64> = (0..n).map(|i| sim.row(i).iter().sum()).collect();
    let mut acc = 0.0;
    for block in c.blocks() {
        let size = (block.len() as f64).log2();
        for &i in &block {
            let joint: f64 = block.iter().map(|&j| sim.get(i, j)).sum();
            acc += size + row_sums[i].log2() - 2.0 * joint.log2();
        }
    }
    Ok(acc / n as f64)
}

/// Sampled partition minimising [`vi_lower_bound`]; ties go to fewer blocks, then smaller labels.
pub fn vi_point_estimate<'a, I>(draws: I, sim: &SimilarityMatrix) -> Result<Partition>
where
    I: IntoIterator<Item = &'a Partition>,
{
    let t = tally(draws)?;
    vi_point_from_tally(&t, sim)
}

fn vi_point_from_tally(tally: &[(&Partition, usize)], sim: &SimilarityMatrix) -> Result<Partition> {
    let mut best: Option<(f64, &Partition)> = None;
    // tally is in canonical-label order, so strict improvement keeps the lexicographic tie-break
    for (p, _) in tally {
        let lb = vi_lower_bound(p, sim)?;
        let better = match best {
            None => true,
            Some((b, q)) => lb < b || (lb == b && p.num_blocks() < q.num_blocks()),
        };
        if better {
            best = Some((lb, p));
        }
    }
    Ok(best.map(|(_, p)| p.clone()).expect("non-empty tally"))
}

/// Confusion counts and rates over the `T - 1` decision times.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChangepointMetrics {
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
    pub tn: usize,
    pub specificity: f64,
    pub accuracy: f64,
    pub recall: f64,
    pub precision: f64,
    pub f1: f64,
    /// Area under the ROC curve over PPC thresholds; needs the PPC vector and both classes.
    pub auc: Option<f64>,
}

fn indicator(times: &[usize], horizon: usize, what: &'static str) -> Result<Vec<bool>> {
    let mut v = vec![false; horizon.saturating_sub(1)];
    for &t in times {
        if t < 2 || t > horizon {
            return Err(invalid(format!("{what} time {t} outside 2..={horizon}")));
        }
        v[t - 2] = true;
    }
    Ok(v)
}

/// Specificity, accuracy, recall, precision and F1 of detected versus true
/// changepoint times (1-based). Rates with an empty denominator are 1.
pub fn changepoint_metrics(detected: &[usize], truth: &[usize], horizon: usize) -> Result<ChangepointMetrics> {
    if horizon < 2 {
        return Err(invalid(format!("need at least two times; got {horizon}")));
    }
    let d = indicator(detected, horizon, "detected")?;
    let r = indicator(truth, horizon, "true")?;
    let (mut tp, mut fp, mut fn_, mut tn) = (0, 0, 0, 0);
    for (&x, &y) in d.iter().zip(&r) {
        match (x, y) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fn_ += 1,
            (false, false) => tn += 1,
        }
    }
    let ratio = |a: usize, b: usize| if b == 0 { 1.0 } else { a as f64 / b as f64 };
    let recall = ratio(tp, tp + fn_);
    let precision = ratio(tp, tp + fp);
    let f1 = if recall + precision > 0.0 {
        2.0 * recall * precision / (recall + precision)
    } else {
        0.0
    };
    Ok(ChangepointMetrics {
        tp,
        fp,
        fn_,
        tn,
        specificity: ratio(tn, tn + fp),
        accuracy: (tp + tn) as f64 / d.len() as f64,
        recall,
        precision,
        f1,
        auc: None,
    })
}

/// [`changepoint_metrics`] plus the ROC area of `ppc` against the truth.
pub fn changepoint_metrics_with_ppc(
    detected: &[usize],
    truth: &[usize],
    ppc: &[f64],
) -> Result<ChangepointMetrics> {
    let horizon = ppc.len() + 1;
    let mut m = changepoint_metrics(detected, truth, horizon)?;
    m.auc = roc_auc(ppc, &indicator(truth, horizon, "true")?)?;
    Ok(m)
}

/// Trapezoidal area under the ROC curve traced by flagging `ppc >= h` for every
/// distinct `h`. Ties move both rates at once, which scores them one half.
/// `None` without both classes.
pub fn roc_auc(ppc: &[f64], truth: &[bool]) -> Result<Option<f64>> {
    if ppc.len() != truth.len() {
        return Err(Error::SizeMismatch {
            what: "ppc vs truth",
            left: ppc.len(),
            right: truth.len(),
        });
    }
    let pos = truth.iter().filter(|&&x| x).count();
    let neg = truth.len() - pos;
    if pos == 0 || neg == 0 {
        return Ok(None);
    }
    let mut order: Vec<usize> = (0..ppc.len()).collect();
    order.sort_by(|&a, &b| ppc[b].total_cmp(&ppc[a]));
    let (mut tp, mut fp) = (0usize, 0usize);
    let (mut x0, mut y0) = (0.0, 0.0);
    let mut area = 0.0;
    let mut k = 0;
    while k < order.len() {
        let h = ppc[order[k]];
        while k < order.len() && ppc[order[k]] == h {
            if truth[order[k]] {
                tp += 1;
            } else {
                fp += 1;
            }
            k += 1;
        }
        let (x1, y1) = (fp as f64 / neg as f64, tp as f64 / pos as f64);
        area += (x1 - x0) * (y0 + y1) / 2.0;
        x0 = x1;
        y0 = y1;
    }
    Ok(Some(area))
}

/// Per-time summaries of a finished chain.
#[derive(Clone, Debug)]
pub struct PosteriorSummary {
    /// `PPC_t` for times `2..=T`.
    pub ppc: Vec<f64>,
    pub threshold: f64,
    /// 1-based times with `PPC_t > threshold`.
    pub flagged: Vec<usize>,
    pub similarity: Vec<SimilarityMatrix>,
    pub point_partitions: Vec<Partition>,
}

/// PPC, FDR threshold, flagged times, similarity matrices and VI point estimates.
pub fn summarize(out: &ChainOutput, zeta: f64, nonmarginal: bool) -> Result<PosteriorSummary> {
    let ppc = compute_ppc(out)?;
    let threshold = optimal_threshold(&ppc, zeta, nonmarginal)?;
    let flagged = flagged_times(&ppc, threshold);
    let per_time: Vec<(SimilarityMatrix, Partition)> = (0..out.horizon())
        .into_par_iter()
        .map(|t| {
            let tally = tally(out.partitions_at(t))?;
            let sim = similarity_from_tally(&tally);
            let point = vi_point_from_tally(&tally, &sim)?;
            Ok((sim, point))
        })
        .collect::<Result<_>>()?;
    let (similarity, point_partitions) = per_time.into_iter().unzip();
    Ok(PosteriorSummary {
        ppc,
        threshold,
        flagged,
        similarity,
        point_partitions,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::partition::{enumerate_partitions, sample_partition, variation_of_information, GibbsParams};
    use crate::rng::substream;
    use proptest::prelude::*;
    use rand::Rng;

    #[test]
    fn bfdr_examples() {
        assert_eq!(bfdr(&[0.1, 0.2], 0.5), 0.0);
        assert!((bfdr(&[0.99, 0.2, 0.95], 0.5) - 0.03).abs() < 1e-12);
        assert_eq!(bfdr(&[1.0, 1.0], 0.5), 0.0);
    }

    #[test]
    fn threshold_examples() {
        let ppc = [0.99, 0.2, 0.95];
        let h = optimal_threshold(&ppc, 0.05, false).unwrap();
        assert_eq!(h, 0.2);
        assert_eq!(flagged_times(&ppc, h), vec![2, 4]);
        assert_eq!(effective_level(DEFAULT_ZETA, true), 0.01 / 3.0);
        // nothing can be flagged at a level below every attainable FDR
        let h = optimal_threshold(&[0.5, 0.6], 0.01, true).unwrap();
        assert!(flagged_times(&[0.5, 0.6], h).is_empty());
        assert!(optimal_threshold(&ppc, 0.0, false).is_err());
        assert!(optimal_threshold(&[1.5], 0.1, false).is_err());
    }

    #[test]
    fn compound_loss_examples() {
        let l = compound_loss(&[true, false, true], &[1.0, 0.0, 0.0], 1.0).unwrap();
        assert_eq!((l.tpr, l.er, l.loss), (0.5, 1.0, 0.5));
        let perfect = compound_loss(&[true, false, true], &[1.0, 0.0, 1.0], 2.0).unwrap();
        assert_eq!(perfect.er, 0.0);
        assert_eq!(compound_loss(&[false; 3], &[0.5; 3], 1.0).unwrap().loss, 0.0);
        assert!(compound_loss(&[true], &[1.0, 0.0], 1.0).is_err());
    }

    #[test]
    fn expected_loss_is_plug_in() {
        // ER and TPR are linear in r, so averaging over gamma draws equals plugging in PPC
        let mut rng = substream(1, 0);
        let ppc: Vec<f64> = (0..8).map(|_| rng.random()).collect();
        let d: Vec<bool> = (0..8).map(|k| k % 3 != 1).collect();
        let draws = 200_000;
        let (mut tpr, mut er) = (0.0, 0.0);
        for _ in 0..draws {
            let r: Vec<f64> = ppc.iter().map(|&p| f64::from(u8::from(rng.random::<f64>() < p))).collect();
            let l = compound_loss(&d, &r, 1.0).unwrap();
            tpr += l.tpr;
            er += l.er;
        }
        let plug = compound_loss(&d, &ppc, 1.0).unwrap();
        assert!((tpr / draws as f64 - plug.tpr).abs() < 0.005);
        assert!((er / draws as f64 - plug.er).abs() < 0.01);
    }

    #[test]
    fn similarity_examples() {
        let p = Partition::canonicalize(&[0, 1, 0]).unwrap();
        let s = similarity_matrix([&p]).unwrap();
        assert_eq!(s.row(0), &[1.0, 0.0, 1.0]);
        assert_eq!(s.row(1), &[0.0, 1.0, 0.0]);
        let mut rng = substream(2, 0);
        let g = GibbsParams::crp(1.0).unwrap();
        let draws: Vec<Partition> = (0..40_000).map(|_| sample_partition(2, &g, &mut rng)).collect();
        let s = similarity_matrix(&draws).unwrap();
        assert!((s.get(0, 1) - 0.5).abs() < 0.01);
        assert_eq!(s.get(0, 1), s.get(1, 0));
        assert!(similarity_matrix(std::iter::empty()).is_err());
    }

    #[test]
    fn point_estimate_identical_draws() {
        let p = Partition::canonicalize(&[0, 0, 1, 2, 1]).unwrap();
        let draws = vec![p.clone(); 5];
        let s = similarity_matrix(&draws).unwrap();
        assert_eq!(vi_point_estimate(&draws, &s).unwrap(), p);
        assert!(vi_lower_bound(&p, &s).unwrap().abs() < 1e-12);
    }

    fn expected_vi(c: &Partition, draws: &[Partition]) -> f64 {
        draws.iter().map(|d| variation_of_information(c, d).unwrap()).sum::<f64>() / draws.len() as f64
    }

    #[test]
    fn point_estimate_two_candidates_matches_expected_vi() {
        let a = Partition::canonicalize(&[0, 0, 0, 1, 1, 1]).unwrap();
        let b = Partition::canonicalize(&[0, 0, 1, 1, 2, 2]).unwrap();
        for split in [1, 3, 7] {
            let mut draws = vec![a.clone(); split];
            draws.extend(vec![b.clone(); 10 - split]);
            let s = similarity_matrix(&draws).unwrap();
            let best = vi_point_estimate(&draws, &s).unwrap();
            let direct = if expected_vi(&a, &draws) <= expected_vi(&b, &draws) { &a } else { &b };
            assert_eq!(&best, direct, "split {split}");
        }
    }

    #[test]
    fn metrics_example() {
        let m = changepoint_metrics(&[10, 30], &[10, 20], 100).unwrap();
        assert_eq!((m.tp, m.fp, m.fn_, m.tn), (1, 1, 1, 96));
        assert_eq!((m.recall, m.precision, m.f1), (0.5, 0.5, 0.5));
        assert_eq!(m.specificity, 96.0 / 97.0);
        assert_eq!(m.accuracy, 97.0 / 99.0);
        let perfect = changepoint_metrics(&[4, 7], &[4, 7], 10).unwrap();
        for v in [perfect.specificity, perfect.accuracy, perfect.recall, perfect.precision, perfect.f1] {
            assert_eq!(v, 1.0);
        }
        let none = changepoint_metrics(&[], &[3], 10).unwrap();
        assert_eq!((none.recall, none.specificity, none.f1), (0.0, 1.0, 0.0));
        assert!(changepoint_metrics(&[1], &[3], 10).is_err());
        assert!(changepoint_metrics(&[11], &[3], 10).is_err());
    }

    #[test]
    fn auc_cases() {
        let truth = [true, false, false, true];
        assert_eq!(roc_auc(&[0.9, 0.1, 0.2, 0.8], &truth).unwrap(), Some(1.0));
        assert_eq!(roc_auc(&[0.1, 0.9, 0.8, 0.2], &truth).unwrap(), Some(0.0));
        assert_eq!(roc_auc(&[0.5; 4], &truth).unwrap(), Some(0.5));
        assert_eq!(roc_auc(&[0.5; 2], &[true, true]).unwrap(), None);
        let m = changepoint_metrics_with_ppc(&[2], &[2], &[0.9, 0.1]).unwrap();
        assert_eq!(m.auc, Some(1.0));
    }

    /// Mann-Whitney statistic with ties counted one half.
    fn auc_oracle(ppc: &[f64], truth: &[bool]) -> f64 {
        let (mut s, mut pairs) = (0.0, 0.0);
        for (i, &a) in ppc.iter().enumerate() {
            for (j, &b) in ppc.iter().enumerate() {
                if truth[i] && !truth[j] {
                    pairs += 1.0;
                    s += if a > b { 1.0 } else if a == b { 0.5 } else { 0.0 };
                }
            }
        }
        s / pairs
    }

    fn ppc_strategy() -> impl Strategy<Value = Vec<f64>> {
        // coarse grid so ties occur
        prop::collection::vec((0u32..=20).prop_map(|k| f64::from(k) / 20.0), 1..30)
    }

    proptest! {
        #[test]
        fn threshold_is_feasible_and_minimal(ppc in ppc_strategy(), zeta in 0.001f64..0.5, nm in any::<bool>()) {
            let h = optimal_threshold(&ppc, zeta, nm).unwrap();
            let level = effective_level(zeta, nm);
            prop_assert!(bfdr(&ppc, h) <= level);
            let mut grid = ppc.clone();
            grid.push(0.0);
            for g in grid {
                if g < h {
                    prop_assert!(bfdr(&ppc, g) > level);
                }
            }
        }

        #[test]
        fn nonmarginal_flags_subset(ppc in ppc_strategy(), zeta in 0.001f64..0.5) {
            let m = flagged_times(&ppc, optimal_threshold(&ppc, zeta, false).unwrap());
            let nm = flagged_times(&ppc, optimal_threshold(&ppc, zeta, true).unwrap());
            prop_assert!(nm.iter().all(|t| m.contains(t)));
        }

        #[test]
        fn error_rate_identity(bits in prop::collection::vec((any::<bool>(), any::<bool>()), 2..25)) {
            let d: Vec<bool> = bits.iter().map(|b| b.0).collect();
            let r: Vec<f64> = bits.iter().map(|b| f64::from(u8::from(b.1))).collect();
            let l = compound_loss(&d, &r, 1.0).unwrap();
            let dn = d.iter().filter(|&&x| x).count() as f64;
            let x: Vec<f64> = d.iter().zip(&r).map(|(&a, &b)| if a { 1.0 - b } else { 0.0 }).collect();
            let rhs = 3.0 * x.iter().sum::<f64>() - x[0] - x[x.len() - 1];
            prop_assert!((l.er * dn - rhs).abs() < 1e-9);
        }

        #[test]
        fn auc_in_unit_interval(ppc in ppc_strategy(), seed in any::<u64>()) {
            let mut rng = substream(seed, 0);
            let truth: Vec<bool> = ppc.iter().map(|_| rng.random::<bool>()).collect();
            if let Some(a) = roc_auc(&ppc, &truth).unwrap() {
                prop_assert!((0.0..=1.0).contains(&a));
                prop_assert!((a - auc_oracle(&ppc, &truth)).abs() < 1e-12);
            }
        }

        #[test]
        fn point_estimate_minimises_lower_bound(seed in any::<u64>()) {
            let mut rng = substream(seed, 0);
            let all = enumerate_partitions(4).unwrap();
            let draws: Vec<Partition> = (0..12).map(|_| all[rng.random_range(0..all.len())].clone()).collect();
            let s = similarity_matrix(&draws).unwrap();
            let best = vi_point_estimate(&draws, &s).unwrap();
            let lb = vi_lower_bound(&best, &s).unwrap();
            for p in &draws {
                prop_assert!(lb <= vi_lower_bound(p, &s).unwrap() + 1e-12);
            }
            for i in 0..4 {
                for j in 0..4 {
                    prop_assert_eq!(s.get(i, j), s.get(j, i));
                }
                prop_assert_eq!(s.get(i, i), 1.0);
            }
        }
    }
}
