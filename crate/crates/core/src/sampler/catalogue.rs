//! Per-time catalogues of posterior partition draws and the time-specific
//! marginal likelihoods `g_t = sum_pi p*(pi) p(Y_t | pi)`.

use std::collections::HashMap;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{log_marginal_into, ClusterStats, DataMatrix, ObsHyper};
use crate::num::log_sum_exp;
use crate::partition::{eppf_log_prob, sample_partition, GibbsParams, Partition};
use crate::rng::{substream, STREAM_CATALOGUE, STREAM_MARGINAL};

/// Index of a partition in a [`PartitionTable`].
pub type PartId = u32;

/// Interned partitions with their base-law log probabilities.
#[derive(Clone, Debug, Default)]
pub struct PartitionTable {
    parts: Vec<Partition>,
    ln_prior: Vec<f64>,
    index: HashMap<Partition, PartId>,
}

impl PartitionTable {
    pub fn intern(&mut self, p: Partition, base: &GibbsParams<f64>) -> PartId {
        if let Some(&id) = self.index.get(&p) {
            return id;
        }
        let id = PartId::try_from(self.parts.len()).expect("partition table overflow");
        self.ln_prior.push(eppf_log_prob(&p, base));
        self.index.insert(p.clone(), id);
        self.parts.push(p);
        id
    }

    pub fn lookup(&self, p: &Partition) -> Option<PartId> {
        self.index.get(p).copied()
    }

    #[inline]
    pub fn get(&self, id: PartId) -> &Partition {
        &self.parts[id as usize]
    }

    #[inline]
    pub fn ln_prior(&self, id: PartId) -> f64 {
        self.ln_prior[id as usize]
    }

    pub fn len(&self) -> usize {
        self.parts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.parts.is_empty()
    }
}

/// Settings of the auxiliary per-time chains that fill the catalogues.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CatalogueConfig {
    /// Sweeps discarded before recording.
    pub burnin: usize,
    /// Partitions recorded per time.
    pub size: usize,
    /// Sweeps between recorded partitions.
    pub thin: usize,
}

impl Default for CatalogueConfig {
    fn default() -> Self {
        Self {
            burnin: 500,
            size: 2000,
            thin: 1,
        }
    }
}

impl CatalogueConfig {
    /// Total auxiliary sweeps per time.
    pub fn aux_iters(&self) -> usize {
        self.burnin + self.size * self.thin
    }

    pub fn validate(&self) -> Result<()> {
        if self.size == 0 || self.thin == 0 {
            return Err(Error::Config(
                "catalogue size and thinning must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Catalogues `S_t` of posterior draws under independent per-time fits, plus `log g_t`.
///
/// Entries keep duplicates, so uniform selection from `S_t` samples the
/// per-time posterior `∝ p*(pi) p(Y_t | pi)`.
#[derive(Clone, Debug)]
pub struct Catalogue {
    table: PartitionTable,
    entries: Vec<Vec<PartId>>,
    /// Per-time `(id, count)` sorted by id.
    counts: Vec<Vec<(PartId, u32)>>,
    ln_g: Vec<f64>,
}

impl Catalogue {
    /// Assemble from per-time partition lists. Interning runs in time order so ids are deterministic.
    pub fn from_draws(per_time: Vec<Vec<Partition>>, base: &GibbsParams<f64>) -> Result<Self> {
        let mut table = PartitionTable::default();
        let mut entries = Vec::with_capacity(per_time.len());
        for draws in per_time {
            if draws.is_empty() {
                return Err(Error::Empty("catalogue"));
            }
            entries.push(draws.into_iter().map(|p| table.intern(p, base)).collect::<Vec<_>>());
        }
        Ok(Self::from_parts(table, entries))
    }

    fn from_parts(table: PartitionTable, entries: Vec<Vec<PartId>>) -> Self {
        let counts = entries
            .iter()
            .map(|e| {
                let mut ids = e.clone();
                ids.sort_unstable();
                let mut out: Vec<(PartId, u32)> = Vec::new();
                for id in ids {
                    match out.last_mut() {
                        Some((last, c)) if *last == id => *c += 1,
                        _ => out.push((id, 1)),
                    }
                }
                out
            })
            .collect();
        Self {
            table,
            entries,
            counts,
            ln_g: Vec::new(),
        }
    }

    pub fn set_ln_g(&mut self, ln_g: Vec<f64>) -> Result<()> {
        if ln_g.len() != self.entries.len() {
            return Err(Error::SizeMismatch {
                what: "marginal likelihoods vs catalogue times",
                left: ln_g.len(),
                right: self.entries.len(),
            });
        }
        self.ln_g = ln_g;
        Ok(())
    }

    pub fn horizon(&self) -> usize {
        self.entries.len()
    }

    pub fn table(&self) -> &PartitionTable {
        &self.table
    }

    pub(crate) fn into_table(self) -> PartitionTable {
        self.table
    }

    /// Raw entries of `S_t`.
    pub fn entries(&self, t: usize) -> &[PartId] {
        &self.entries[t]
    }

    /// Distinct partitions of `S_t` with their multiplicities, sorted by id.
    pub fn counts(&self, t: usize) -> &[(PartId, u32)] {
        &self.counts[t]
    }

    /// Multiplicity of `id` in `S_t`.
    pub fn count_of(&self, t: usize, id: PartId) -> u32 {
        let c = &self.counts[t];
        c.binary_search_by_key(&id, |&(i, _)| i)
            .map(|k| c[k].1)
            .unwrap_or(0)
    }

    /// `log g_t`; empty until [`Catalogue::set_ln_g`] has run.
    pub fn ln_g(&self) -> &[f64] {
        &self.ln_g
    }

    /// Uniform draw from `S_t`.
    #[inline]
    pub fn draw<R: Rng + ?Sized>(&self, t: usize, rng: &mut R) -> PartId {
        let e = &self.entries[t];
        e[rng.random_range(0..e.len())]
    }

    /// Stable digest of the catalogue contents, used to validate checkpoints.
    pub fn fingerprint(&self) -> u64 {
        // FNV-1a over sizes and ids; independent of hasher seeds.
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        let mut eat = |x: u64| {
            for b in x.to_le_bytes() {
                h ^= u64::from(b);
                h = h.wrapping_mul(0x0100_0000_01b3);
            }
        };
        eat(self.table.len() as u64);
        for e in &self.entries {
            eat(e.len() as u64);
            for &id in e {
                eat(u64::from(id));
            }
        }
        h
    }
}

/// Fill a catalogue for every time with a collapsed one-unit-at-a-time Gibbs sampler.
///
/// Each time uses its own sub-stream of `seed`, so the work parallelises
/// without affecting the output.
pub fn build_catalogue(
    data: &DataMatrix,
    hyper: &ObsHyper<f64>,
    base: &GibbsParams<f64>,
    cfg: &CatalogueConfig,
    seed: u64,
) -> Result<Catalogue> {
    cfg.validate()?;
    let per_time: Vec<Vec<Partition>> = (0..data.times())
        .into_par_iter()
        .map(|t| {
            let y = data.column(t);
            if is_degenerate(y) {
                log::warn!("data column at time {} is constant; catalogue will be prior-driven", t + 1);
            }
            let mut rng = substream(seed, STREAM_CATALOGUE + t as u64);
            let mut chain = AllocationChain::new(y, *hyper, *base);
            chain.run(cfg, &mut rng)
        })
        .collect();
    Catalogue::from_draws(per_time, base)
}

fn is_degenerate(y: &[f64]) -> bool {
    let first = y[0];
    let scale = y.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1.0);
    y.iter().all(|v| (v - first).abs() <= f64::EPSILON * scale)
}

/// Marginal conjugate allocation sampler for one time point.
pub(crate) struct AllocationChain<'a> {
    y: &'a [f64],
    hyper: ObsHyper<f64>,
    base: GibbsParams<f64>,
    slot: Vec<usize>,
    stats: Vec<ClusterStats<f64>>,
    active: Vec<usize>,
    free: Vec<usize>,
    weights: Vec<f64>,
}

impl<'a> AllocationChain<'a> {
    pub(crate) fn new(y: &'a [f64], hyper: ObsHyper<f64>, base: GibbsParams<f64>) -> Self {
        let n = y.len();
        Self {
            y,
            hyper,
            base,
            slot: vec![0; n],
            stats: vec![ClusterStats::from_values(y)],
            active: vec![0],
            free: Vec::new(),
            weights: Vec::new(),
        }
    }

    pub(crate) fn with_hyper(&mut self, hyper: ObsHyper<f64>) {
        self.hyper = hyper;
    }

    fn run<R: Rng + ?Sized>(&mut self, cfg: &CatalogueConfig, rng: &mut R) -> Vec<Partition> {
        for _ in 0..cfg.burnin {
            self.sweep(rng);
        }
        let mut out = Vec::with_capacity(cfg.size);
        for _ in 0..cfg.size {
            for _ in 0..cfg.thin {
                self.sweep(rng);
            }
            out.push(self.partition());
        }
        out
    }

    pub(crate) fn partition(&self) -> Partition {
        Partition::from_dense_labels(&self.slot)
    }

    pub(crate) fn sweep<R: Rng + ?Sized>(&mut self, rng: &mut R) {
        for i in 0..self.y.len() {
            self.reallocate(i, rng);
        }
    }

    fn reallocate<R: Rng + ?Sized>(&mut self, i: usize, rng: &mut R) {
        let y = self.y[i];
        let old = self.slot[i];
        self.stats[old].remove(y);
        if self.stats[old].count == 0 {
            let pos = self.active.iter().position(|&s| s == old).expect("active slot");
            self.active.swap_remove(pos);
            self.free.push(old);
        }
        let k = self.active.len();
        self.weights.clear();
        for &s in &self.active {
            let st = &self.stats[s];
            self.weights
                .push(self.base.ln_seat_existing(st.count) + self.hyper.ln_predictive(st.count, st.sum, y));
        }
        // the first seat is certain; avoids ln(theta) for negative theta
        let ln_new = if k == 0 { 0.0 } else { self.base.ln_seat_new(k) };
        self.weights.push(ln_new + self.hyper.ln_predictive(0, 0.0, y));
        let choice = sample_log_weights(&mut self.weights, rng).expect("finite seating weights");
        let target = if choice == k {
            let s = self.free.pop().unwrap_or_else(|| {
                self.stats.push(ClusterStats::default());
                self.stats.len() - 1
            });
            self.stats[s] = ClusterStats::default();
            self.active.push(s);
            s
        } else {
            self.active[choice]
        };
        self.stats[target].add(y);
        self.slot[i] = target;
    }

    /// Cluster sufficient statistics in canonical label order.
    pub(crate) fn canonical_stats(&self) -> Vec<ClusterStats<f64>> {
        let p = self.partition();
        let mut stats = vec![ClusterStats::default(); p.num_blocks()];
        for (&l, &v) in p.labels().iter().zip(self.y) {
            stats[l as usize].add(v);
        }
        stats
    }
}

/// Sample an index proportional to `exp(w)`; `w` is overwritten. `None` if every weight is `-inf`.
pub(crate) fn sample_log_weights<R: Rng + ?Sized>(w: &mut [f64], rng: &mut R) -> Option<usize> {
    let max = w.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return None;
    }
    let mut total = 0.0;
    for x in w.iter_mut() {
        *x = (*x - max).exp();
        total += *x;
    }
    let mut u = rng.random::<f64>() * total;
    for (k, &x) in w.iter().enumerate() {
        if u < x {
            return Some(k);
        }
        u -= x;
    }
    // rounding: fall back to the last positive weight
    w.iter().rposition(|&x| x > 0.0)
}

/// `log g_t` for every time from one shared sample of `samples` base-law partitions.
pub fn estimate_g(
    data: &DataMatrix,
    base: &GibbsParams<f64>,
    hyper: &ObsHyper<f64>,
    samples: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    if samples == 0 {
        return Err(Error::Empty("marginal likelihood sample"));
    }
    let mut rng = substream(seed, STREAM_MARGINAL);
    let prior: Vec<Partition> = (0..samples)
        .map(|_| sample_partition(data.n(), base, &mut rng))
        .collect();
    estimate_g_from_sample(data, hyper, &prior)
}

/// `log g_t = log mean_m p(Y_t | pi_m)` over the given prior partitions, for every `t`.
pub fn estimate_g_from_sample(
    data: &DataMatrix,
    hyper: &ObsHyper<f64>,
    prior: &[Partition],
) -> Result<Vec<f64>> {
    if prior.is_empty() {
        return Err(Error::Empty("marginal likelihood sample"));
    }
    if let Some(p) = prior.iter().find(|p| p.n() != data.n()) {
        return Err(Error::SizeMismatch {
            what: "prior partition vs unit count",
            left: p.n(),
            right: data.n(),
        });
    }
    let ln_m = (prior.len() as f64).ln();
    Ok((0..data.times())
        .into_par_iter()
        .map(|t| {
            let y = data.column(t);
            let mut scratch = Vec::new();
            let lls: Vec<f64> = prior
                .iter()
                .map(|p| log_marginal_into(y, p.labels(), hyper, &mut scratch))
                .collect();
            log_sum_exp(&lls) - ln_m
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::partition_log_marginal;
    use crate::partition::enumerate_partitions;

    fn hyper() -> ObsHyper<f64> {
        ObsHyper::new(0.3, 0.0, 1.0).unwrap()
    }

    fn exact_posterior(y: &[f64], base: &GibbsParams<f64>, h: &ObsHyper<f64>) -> Vec<(Partition, f64)> {
        let all = enumerate_partitions(y.len()).unwrap();
        let logs: Vec<f64> = all
            .iter()
            .map(|p| eppf_log_prob(p, base) + partition_log_marginal(y, p, h).unwrap())
            .collect();
        let z = log_sum_exp(&logs);
        all.into_iter().zip(logs).map(|(p, l)| (p, (l - z).exp())).collect()
    }

    fn catalogue_tv(y: &[f64], base: &GibbsParams<f64>, size: usize, seed: u64) -> f64 {
        let data = DataMatrix::from_columns(&[y.to_vec()]).unwrap();
        let cfg = CatalogueConfig { burnin: 200, size, thin: 1 };
        let cat = build_catalogue(&data, &hyper(), base, &cfg, seed).unwrap();
        let total = cat.entries(0).len() as f64;
        0.5 * exact_posterior(y, base, &hyper())
            .iter()
            .map(|(p, prob)| {
                let c = cat.table().lookup(p).map_or(0, |id| cat.count_of(0, id));
                (c as f64 / total - prob).abs()
            })
            .sum::<f64>()
    }

    #[test]
    fn catalogue_matches_two_unit_posterior() {
        let base = GibbsParams::crp(1.0).unwrap();
        assert!(catalogue_tv(&[0.1, 0.9], &base, 20_000, 1) <= 0.02);
    }

    #[test]
    fn catalogue_matches_five_unit_posterior() {
        let base = GibbsParams::new(0.5, 0.25).unwrap();
        let tv = catalogue_tv(&[0.1, 1.4, -0.3, 1.1, 0.2], &base, 20_000, 2);
        assert!(tv <= 0.05, "{tv}");
    }

    #[test]
    fn separated_groups_recovered() {
        let y: Vec<f64> = (0..12).map(|i| if i % 2 == 0 { -3.0 + 0.01 * i as f64 } else { 3.0 - 0.01 * i as f64 }).collect();
        let data = DataMatrix::from_columns(&[y]).unwrap();
        let base = GibbsParams::crp(1.0).unwrap();
        let h = ObsHyper::new(0.1, 0.0, 4.0).unwrap();
        let cat = build_catalogue(&data, &h, &base, &CatalogueConfig { burnin: 50, size: 500, thin: 1 }, 3).unwrap();
        let (mode, _) = cat.counts(0).iter().max_by_key(|(_, c)| *c).unwrap();
        let truth = Partition::canonicalize(&(0..12).map(|i| i % 2).collect::<Vec<_>>()).unwrap();
        assert_eq!(cat.table().get(*mode), &truth);
    }

    #[test]
    fn degenerate_column_is_not_an_error() {
        let data = DataMatrix::from_columns(&[vec![1.0; 4]]).unwrap();
        let base = GibbsParams::crp(1.0).unwrap();
        let cat = build_catalogue(&data, &hyper(), &base, &CatalogueConfig { burnin: 5, size: 10, thin: 1 }, 0);
        assert!(cat.is_ok());
    }

    #[test]
    fn marginal_estimate_two_units_exact() {
        // theta = 1: both partitions of two units have prior mass 1/2.
        let y = [0.2, -0.5];
        let data = DataMatrix::from_columns(&[y.to_vec()]).unwrap();
        let base = GibbsParams::crp(1.0).unwrap();
        let h = hyper();
        let exact = 0.5
            * (partition_log_marginal(&y, &Partition::one_block(2), &h).unwrap().exp()
                + partition_log_marginal(&y, &Partition::singletons(2), &h).unwrap().exp());
        let est = estimate_g(&data, &base, &h, 100_000, 5).unwrap()[0].exp();
        assert!(((est - exact) / exact).abs() < 0.01);
    }

    #[test]
    fn marginal_estimate_reuses_one_prior_sample() {
        let data = DataMatrix::from_columns(&[vec![0.1, 0.4, -1.0], vec![2.0, 2.1, -0.3]]).unwrap();
        let base = GibbsParams::crp(0.7).unwrap();
        let h = hyper();
        let mut rng = substream(9, STREAM_MARGINAL);
        let sample: Vec<Partition> = (0..500).map(|_| sample_partition(3, &base, &mut rng)).collect();
        let via_sample = estimate_g_from_sample(&data, &h, &sample).unwrap();
        assert_eq!(estimate_g(&data, &base, &h, 500, 9).unwrap(), via_sample);
        // each entry uses the same draws: per-time recomputation agrees exactly
        for t in 0..2 {
            let single = DataMatrix::from_columns(&[data.column(t).to_vec()]).unwrap();
            assert_eq!(estimate_g_from_sample(&single, &h, &sample).unwrap()[0], via_sample[t]);
        }
    }

    #[test]
    fn deterministic_and_thread_independent() {
        let data = DataMatrix::from_columns(&(0..6).map(|t| vec![t as f64, 0.5, -1.0, 2.0]).collect::<Vec<_>>()).unwrap();
        let base = GibbsParams::crp(1.0).unwrap();
        let cfg = CatalogueConfig { burnin: 10, size: 50, thin: 2 };
        let a = build_catalogue(&data, &hyper(), &base, &cfg, 42).unwrap();
        let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let b = pool.install(|| build_catalogue(&data, &hyper(), &base, &cfg, 42).unwrap());
        assert_eq!(a.fingerprint(), b.fingerprint());
        assert_eq!(a.entries(3), b.entries(3));
    }
}
