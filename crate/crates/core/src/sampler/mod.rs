//! Gibbs sampler for the local level dynamic partition model.
//!
//! A run proceeds in three stages:
//!
//! 1. [`build_catalogue`] fits an independent base-law mixture at every time
//!    and stores its posterior draws.
//! 2. [`estimate_g`] estimates the per-time marginal likelihoods from one
//!    shared prior sample.
//! 3. Repeated sweeps update `(pi_t, gamma_t)`, then `eta_t`, then reshuffle
//!    the partitions of the blocks of constant state induced by `gamma`.
//!
//! Every partition held by the chain is an entry of the catalogue's
//! [`PartitionTable`], so states are compact ids and likelihoods are cached
//! per `(id, t)`.

mod catalogue;
mod checkpoint;
mod hyper;
mod twoview;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Beta, Distribution};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::model::{log_marginal_into, ClusterStats, DataMatrix, ObsHyper};
use crate::partition::{GibbsParams, Partition};
use crate::rng::{substream, StreamRng, STREAM_CHAIN};

pub use catalogue::{
    build_catalogue, estimate_g, estimate_g_from_sample, Catalogue, CatalogueConfig, PartId,
    PartitionTable,
};
pub use checkpoint::{Checkpoint, CHECKPOINT_FORMAT, CHECKPOINT_VERSION};
pub use hyper::{estimate_hyper, InvGammaPrior, PrePhaseConfig};
pub use twoview::{run_two_view, TwoViewOutput};

pub(crate) use catalogue::{sample_log_weights, AllocationChain};

/// `Beta(a, b)` prior on every `eta_t`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BetaPrior {
    pub a: f64,
    pub b: f64,
}

impl Default for BetaPrior {
    fn default() -> Self {
        Self { a: 0.1, b: 0.9 }
    }
}

impl BetaPrior {
    pub fn new(a: f64, b: f64) -> Result<Self> {
        let p = Self { a, b };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.a > 0.0 && self.b > 0.0 && self.a.is_finite() && self.b.is_finite()) {
            return Err(invalid(format!(
                "beta prior needs positive finite a, b; got ({}, {})",
                self.a, self.b
            )));
        }
        Ok(())
    }

    pub fn mean(&self) -> f64 {
        self.a / (self.a + self.b)
    }
}

/// Model quantities held fixed during the chain.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub base: GibbsParams<f64>,
    pub hyper: ObsHyper<f64>,
    pub eta_prior: BetaPrior,
}

/// How candidates are weighted when reshuffling a multi-time block.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SirWeights {
    /// Full conditional at the candidate, no proposal correction.
    Literal,
    /// Full conditional over the catalogue-mixture proposal frequency, with
    /// the current value kept among the candidates.
    #[default]
    Corrected,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SweepOrder {
    #[default]
    Ascending,
    Random,
}

/// Sampler settings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SamplerConfig {
    /// Total sweeps, burn-in included.
    pub iterations: usize,
    pub burnin: usize,
    pub thin: usize,
    pub catalogue: CatalogueConfig,
    /// Prior partitions used to estimate `g_t`.
    pub marginal_samples: usize,
    /// Reshuffling candidates drawn per member time of a block.
    pub sir_candidates: usize,
    pub sir_weights: SirWeights,
    pub sweep_order: SweepOrder,
    /// Sweeps per block in blockwise mode; `None` runs in one block.
    pub block_iterations: Option<usize>,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            iterations: 10_000,
            burnin: 5_000,
            thin: 1,
            catalogue: CatalogueConfig::default(),
            marginal_samples: 10_000,
            sir_candidates: 50,
            sir_weights: SirWeights::default(),
            sweep_order: SweepOrder::default(),
            block_iterations: None,
        }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.iterations <= self.burnin {
            return Err(Error::Config(format!(
                "iterations ({}) must exceed burn-in ({})",
                self.iterations, self.burnin
            )));
        }
        if self.thin == 0 {
            return Err(Error::Config("thin must be at least 1".into()));
        }
        if self.marginal_samples == 0 {
            return Err(Error::Config("marginal sample count must be positive".into()));
        }
        if self.sir_candidates == 0 {
            return Err(Error::Config("SIR candidate count must be positive".into()));
        }
        if self.block_iterations == Some(0) {
            return Err(Error::Config("block size must be positive".into()));
        }
        self.catalogue.validate()
    }

    /// Number of retained draws, `(iterations - burnin) / thin`.
    pub fn retained(&self) -> usize {
        (self.iterations - self.burnin) / self.thin
    }

    fn keeps(&self, iteration: usize) -> bool {
        iteration > self.burnin && (iteration - self.burnin).is_multiple_of(self.thin)
    }
}

/// Current values of the chain. Index 0 of `gammas` and `etas` is a
/// placeholder: the first time always starts a block.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChainState {
    partitions: Vec<PartId>,
    gammas: Vec<bool>,
    etas: Vec<f64>,
}

impl ChainState {
    /// Build a state from explicit values; `gammas` and `etas` cover times `1..T` (0-based).
    pub fn new(partitions: Vec<PartId>, gammas: Vec<bool>, etas: Vec<f64>) -> Result<Self> {
        let t = partitions.len();
        if t == 0 {
            return Err(Error::Empty("chain state"));
        }
        for (what, len) in [("gammas", gammas.len()), ("etas", etas.len())] {
            if len + 1 != t {
                return Err(Error::SizeMismatch {
                    what,
                    left: len,
                    right: t - 1,
                });
            }
        }
        if let Some(e) = etas.iter().find(|e| !(**e > 0.0 && **e < 1.0)) {
            return Err(invalid(format!("eta must lie in (0, 1); got {e}")));
        }
        let mut g = vec![true];
        g.extend(gammas);
        let mut e = vec![0.5];
        e.extend(etas);
        Ok(Self {
            partitions,
            gammas: g,
            etas: e,
        })
    }

    pub fn horizon(&self) -> usize {
        self.partitions.len()
    }

    pub fn partitions(&self) -> &[PartId] {
        &self.partitions
    }

    /// `gamma_t` for 0-based `t >= 1`.
    pub fn gamma(&self, t: usize) -> bool {
        assert!(t >= 1, "gamma is defined from the second time on");
        self.gammas[t]
    }

    /// `eta_t` for 0-based `t >= 1`.
    pub fn eta(&self, t: usize) -> f64 {
        assert!(t >= 1, "eta is defined from the second time on");
        self.etas[t]
    }

    /// True when `gamma_t = 0` implies `pi_t = pi_{t-1}` everywhere.
    pub fn is_consistent(&self) -> bool {
        (1..self.horizon()).all(|t| self.gammas[t] || self.partitions[t] == self.partitions[t - 1])
    }

    /// Half-open time ranges of constant state induced by the runs of `gamma = 0`.
    pub fn blocks(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        let mut start = 0;
        for t in 1..self.horizon() {
            if self.gammas[t] {
                out.push((start, t));
                start = t;
            }
        }
        out.push((start, self.horizon()));
        out
    }
}

/// Lazily filled `ln p(Y_t | pi)` per partition id; NaN marks a missing entry.
#[derive(Clone, Debug, Default)]
struct LikelihoodCache {
    horizon: usize,
    rows: Vec<Option<Box<[f64]>>>,
}

impl LikelihoodCache {
    fn new(horizon: usize) -> Self {
        Self {
            horizon,
            rows: Vec::new(),
        }
    }

    fn slot(&mut self, id: PartId, t: usize) -> &mut f64 {
        let i = id as usize;
        if i >= self.rows.len() {
            self.rows.resize_with(i + 1, || None);
        }
        let row = self.rows[i].get_or_insert_with(|| vec![f64::NAN; self.horizon].into_boxed_slice());
        &mut row[t]
    }
}

/// Transition kernel: catalogue, model and the update steps.
pub struct Kernel<'a> {
    data: &'a DataMatrix,
    spec: ModelSpec,
    cfg: SamplerConfig,
    cat: Catalogue,
    cache: LikelihoodCache,
    scratch: Vec<ClusterStats<f64>>,
    weights: Vec<f64>,
    candidates: Vec<PartId>,
}

impl<'a> Kernel<'a> {
    /// Kernel over a prepared catalogue; `log g_t` must already be set.
    pub fn new(data: &'a DataMatrix, spec: ModelSpec, cfg: SamplerConfig, cat: Catalogue) -> Result<Self> {
        cfg.validate()?;
        spec.eta_prior.validate()?;
        if cat.horizon() != data.times() {
            return Err(Error::SizeMismatch {
                what: "catalogue times vs data times",
                left: cat.horizon(),
                right: data.times(),
            });
        }
        if cat.ln_g().len() != data.times() {
            return Err(Error::Empty("marginal likelihood estimates"));
        }
        Ok(Self {
            data,
            spec,
            cfg,
            cache: LikelihoodCache::new(data.times()),
            cat,
            scratch: Vec::new(),
            weights: Vec::new(),
            candidates: Vec::new(),
        })
    }

    /// Build catalogue and `g_t` from the data, then the kernel.
    pub fn prepare(data: &'a DataMatrix, spec: ModelSpec, cfg: SamplerConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let mut cat = build_catalogue(data, &spec.hyper, &spec.base, &cfg.catalogue, seed)?;
        cat.set_ln_g(estimate_g(data, &spec.base, &spec.hyper, cfg.marginal_samples, seed)?)?;
        Self::new(data, spec, cfg, cat)
    }

    pub fn catalogue(&self) -> &Catalogue {
        &self.cat
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn config(&self) -> &SamplerConfig {
        &self.cfg
    }

    /// `ln p(Y_t | pi)` for a table entry.
    pub fn log_likelihood(&mut self, id: PartId, t: usize) -> f64 {
        let slot = self.cache.slot(id, t);
        if slot.is_nan() {
            let p = self.cat.table().get(id);
            *slot = log_marginal_into(self.data.column(t), p.labels(), &self.spec.hyper, &mut self.scratch);
        }
        *slot
    }

    fn ln_prior(&self, id: PartId) -> f64 {
        self.cat.table().ln_prior(id)
    }

    /// Initial state: independent catalogue draws, `gamma` marking changes, `eta` at its prior mean.
    pub fn initial_state<R: Rng + ?Sized>(&self, rng: &mut R) -> ChainState {
        let horizon = self.data.times();
        let partitions: Vec<PartId> = (0..horizon).map(|t| self.cat.draw(t, rng)).collect();
        let gammas = (0..horizon)
            .map(|t| t == 0 || partitions[t] != partitions[t - 1])
            .collect();
        let eta0 = clamp_unit(self.spec.eta_prior.mean());
        ChainState {
            partitions,
            gammas,
            etas: vec![eta0; horizon],
        }
    }

    /// Update `pi_t` with `gamma_t` marginalised, conditioning on `gamma_{t+1}`.
    pub fn update_partition<R: Rng + ?Sized>(&mut self, state: &mut ChainState, t: usize, rng: &mut R) {
        let horizon = state.horizon();
        if t + 1 < horizon && !state.gammas[t + 1] {
            state.partitions[t] = state.partitions[t + 1];
            return;
        }
        if t == 0 {
            state.partitions[0] = self.cat.draw(0, rng);
            return;
        }
        let eta = state.etas[t];
        let prev = state.partitions[t - 1];
        let keep = (1.0 - eta).ln() + self.log_likelihood(prev, t);
        let fresh = eta.ln() + self.cat.ln_g()[t];
        // Pr(keep) = 1 / (1 + exp(fresh - keep))
        let p_keep = if keep == f64::NEG_INFINITY {
            0.0
        } else {
            1.0 / (1.0 + (fresh - keep).exp())
        };
        state.partitions[t] = if rng.random::<f64>() < p_keep {
            prev
        } else {
            self.cat.draw(t, rng)
        };
    }

    /// Draw `gamma_t` given `pi_t`, `pi_{t-1}` and `eta_t`.
    pub fn update_gamma<R: Rng + ?Sized>(&self, state: &mut ChainState, t: usize, rng: &mut R) {
        assert!(t >= 1, "gamma is defined from the second time on");
        let cur = state.partitions[t];
        state.gammas[t] = if cur != state.partitions[t - 1] {
            true
        } else {
            let eta = state.etas[t];
            let on = eta.ln() + self.ln_prior(cur);
            let off = (1.0 - eta).ln();
            rng.random::<f64>() < 1.0 / (1.0 + (off - on).exp())
        };
    }

    /// Conjugate `Beta(a + gamma_t, b + 1 - gamma_t)` draw of `eta_t`.
    pub fn update_eta<R: Rng + ?Sized>(&self, state: &mut ChainState, t: usize, rng: &mut R) {
        assert!(t >= 1, "eta is defined from the second time on");
        let g = f64::from(u8::from(state.gammas[t]));
        let BetaPrior { a, b } = self.spec.eta_prior;
        let draw = Beta::new(a + g, b + 1.0 - g)
            .expect("validated beta prior")
            .sample(rng);
        state.etas[t] = clamp_unit(draw);
    }

    /// Redraw the shared partition of every block of constant state.
    pub fn reshuffle<R: Rng + ?Sized>(&mut self, state: &mut ChainState, rng: &mut R) {
        for (start, end) in state.blocks() {
            let winner = if end - start == 1 {
                self.cat.draw(start, rng)
            } else {
                self.resample_block(state.partitions[start], start, end, rng)
            };
            state.partitions[start..end].fill(winner);
        }
    }

    fn block_log_target(&mut self, id: PartId, start: usize, end: usize) -> f64 {
        let mut acc = self.ln_prior(id);
        for l in start..end {
            acc += self.log_likelihood(id, l);
        }
        acc
    }

    fn resample_block<R: Rng + ?Sized>(&mut self, current: PartId, start: usize, end: usize, rng: &mut R) -> PartId {
        let m = self.cfg.sir_candidates;
        let mut cands = std::mem::take(&mut self.candidates);
        cands.clear();
        for l in start..end {
            for _ in 0..m {
                cands.push(self.cat.draw(l, rng));
            }
        }
        let corrected = self.cfg.sir_weights == SirWeights::Corrected;
        if corrected {
            cands.push(current);
        }
        // Collapse duplicates in a deterministic order; a candidate's total
        // weight is its multiplicity times its individual weight.
        cands.sort_unstable();
        let mut uniq: Vec<(PartId, u32)> = Vec::new();
        for &id in &cands {
            match uniq.last_mut() {
                Some((last, c)) if *last == id => *c += 1,
                _ => uniq.push((id, 1)),
            }
        }
        self.candidates = cands;
        let mut w = std::mem::take(&mut self.weights);
        w.clear();
        for &(id, mult) in &uniq {
            let mut lw = self.block_log_target(id, start, end) + f64::from(mult).ln();
            if corrected {
                lw -= self.ln_proposal(id, start, end);
            }
            w.push(lw);
        }
        let choice = sample_log_weights(&mut w, rng);
        self.weights = w;
        match choice {
            Some(k) => uniq[k].0,
            None => {
                log::warn!(
                    "all reshuffling weights underflowed for times {}..={}; keeping current partition",
                    start + 1,
                    end
                );
                current
            }
        }
    }

    /// `ln q(pi)` of the equal-share mixture of the member catalogues' empirical laws.
    /// Zero proposal mass gives `+inf`, so such a value receives no weight.
    fn ln_proposal(&self, id: PartId, start: usize, end: usize) -> f64 {
        let members = (end - start) as f64;
        let q: f64 = (start..end)
            .map(|l| f64::from(self.cat.count_of(l, id)) / self.cat.entries(l).len() as f64)
            .sum::<f64>()
            / members;
        if q > 0.0 {
            q.ln()
        } else {
            f64::INFINITY
        }
    }

    /// One full sweep: partitions and indicators, then `eta`, then reshuffling.
    pub fn sweep<R: Rng + ?Sized>(&mut self, state: &mut ChainState, order: &mut Vec<usize>, rng: &mut R) {
        let horizon = state.horizon();
        order.clear();
        order.extend(0..horizon);
        if self.cfg.sweep_order == SweepOrder::Random {
            order.shuffle(rng);
        }
        for &t in order.iter() {
            self.update_partition(state, t, rng);
            if t >= 1 {
                self.update_gamma(state, t, rng);
            }
        }
        debug_assert!(state.is_consistent());
        for t in 1..horizon {
            self.update_eta(state, t, rng);
        }
        self.reshuffle(state, rng);
        debug_assert!(state.is_consistent());
    }

    pub(crate) fn into_catalogue(self) -> Catalogue {
        self.cat
    }
}

fn clamp_unit(x: f64) -> f64 {
    x.clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON / 2.0)
}

/// Retained draws, stored flat in draw-major order.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub(crate) struct Retained {
    partitions: Vec<PartId>,
    gammas: Vec<bool>,
    etas: Vec<f64>,
    iterations: Vec<usize>,
}

impl Retained {
    fn push(&mut self, iteration: usize, s: &ChainState) {
        self.partitions.extend_from_slice(&s.partitions);
        self.gammas.extend_from_slice(&s.gammas[1..]);
        self.etas.extend_from_slice(&s.etas[1..]);
        self.iterations.push(iteration);
    }
}

/// Posterior draws of a finished chain.
#[derive(Clone, Debug)]
pub struct ChainOutput {
    n: usize,
    horizon: usize,
    seed: u64,
    config: SamplerConfig,
    table: PartitionTable,
    ln_g: Vec<f64>,
    draws: Retained,
}

impl ChainOutput {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn config(&self) -> &SamplerConfig {
        &self.config
    }

    pub fn table(&self) -> &PartitionTable {
        &self.table
    }

    pub fn ln_g(&self) -> &[f64] {
        &self.ln_g
    }

    pub fn num_draws(&self) -> usize {
        self.draws.iterations.len()
    }

    /// 1-based sweep index of each retained draw.
    pub fn iterations(&self) -> &[usize] {
        &self.draws.iterations
    }

    pub fn partition_id(&self, draw: usize, t: usize) -> PartId {
        self.draws.partitions[draw * self.horizon + t]
    }

    pub fn partition(&self, draw: usize, t: usize) -> &Partition {
        self.table.get(self.partition_id(draw, t))
    }

    /// `gamma_t` of a draw for 0-based `t >= 1`.
    pub fn gamma(&self, draw: usize, t: usize) -> bool {
        assert!(t >= 1 && t < self.horizon);
        self.draws.gammas[draw * (self.horizon - 1) + t - 1]
    }

    /// `eta_t` of a draw for 0-based `t >= 1`.
    pub fn eta(&self, draw: usize, t: usize) -> f64 {
        assert!(t >= 1 && t < self.horizon);
        self.draws.etas[draw * (self.horizon - 1) + t - 1]
    }

    /// Retained partitions at time `t`, one per draw.
    pub fn partitions_at(&self, t: usize) -> impl Iterator<Item = &Partition> + '_ {
        (0..self.num_draws()).map(move |d| self.partition(d, t))
    }

    pub(crate) fn intern(&mut self, p: Partition, base: &GibbsParams<f64>) -> PartId {
        self.table.intern(p, base)
    }
}

/// A chain in progress; supports running in blocks with checkpoints between them.
pub struct ChainRunner<'a> {
    kernel: Kernel<'a>,
    state: ChainState,
    rng: StreamRng,
    seed: u64,
    completed: usize,
    draws: Retained,
    order: Vec<usize>,
}

impl<'a> ChainRunner<'a> {
    pub fn new(data: &'a DataMatrix, spec: ModelSpec, cfg: SamplerConfig, seed: u64) -> Result<Self> {
        let kernel = Kernel::prepare(data, spec, cfg, seed)?;
        let mut rng = substream(seed, STREAM_CHAIN);
        let state = kernel.initial_state(&mut rng);
        Ok(Self {
            kernel,
            state,
            rng,
            seed,
            completed: 0,
            draws: Retained::default(),
            order: Vec::new(),
        })
    }

    /// Continue from a checkpoint written by a run with the same data, model and config.
    pub fn resume(data: &'a DataMatrix, spec: ModelSpec, cfg: SamplerConfig, cp: Checkpoint) -> Result<Self> {
        cp.check_compatible(data, &spec, &cfg)?;
        let kernel = Kernel::prepare(data, spec, cfg, cp.seed)?;
        if kernel.catalogue().fingerprint() != cp.catalogue_fingerprint {
            return Err(Error::Checkpoint("catalogue does not match the checkpoint".into()));
        }
        let table_len = kernel.catalogue().table().len();
        if cp.state.partitions.iter().any(|&id| id as usize >= table_len) {
            return Err(Error::Checkpoint("state refers to unknown partitions".into()));
        }
        Ok(Self {
            kernel,
            state: cp.state,
            rng: cp.rng,
            seed: cp.seed,
            completed: cp.completed,
            draws: cp.draws,
            order: Vec::new(),
        })
    }

    pub fn completed(&self) -> usize {
        self.completed
    }

    pub fn is_finished(&self) -> bool {
        self.completed >= self.kernel.cfg.iterations
    }

    pub fn state(&self) -> &ChainState {
        &self.state
    }

    pub fn kernel(&self) -> &Kernel<'a> {
        &self.kernel
    }

    /// Run up to `sweeps` more sweeps, stopping at the configured total.
    pub fn run(&mut self, sweeps: usize) {
        let stop = self.completed.saturating_add(sweeps).min(self.kernel.cfg.iterations);
        while self.completed < stop {
            self.kernel.sweep(&mut self.state, &mut self.order, &mut self.rng);
            self.completed += 1;
            if self.kernel.cfg.keeps(self.completed) {
                self.draws.push(self.completed, &self.state);
            }
        }
    }

    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint::capture(self)
    }

    pub fn finish(self) -> ChainOutput {
        let data = self.kernel.data;
        let cfg = self.kernel.cfg.clone();
        let cat = self.kernel.into_catalogue();
        let ln_g = cat.ln_g().to_vec();
        ChainOutput {
            n: data.n(),
            horizon: data.times(),
            seed: self.seed,
            config: cfg,
            table: cat.into_table(),
            ln_g,
            draws: self.draws,
        }
    }
}

/// Run the full sampler. In blockwise mode the iterations are split into blocks.
pub fn run_chain(data: &DataMatrix, spec: &ModelSpec, cfg: &SamplerConfig, seed: u64) -> Result<ChainOutput> {
    run_chain_with(data, spec, cfg, seed, |_| Ok(()))
}

/// Like [`run_chain`], calling `after_block` with the runner between blocks
/// (for example to write a checkpoint).
pub fn run_chain_with<F>(
    data: &DataMatrix,
    spec: &ModelSpec,
    cfg: &SamplerConfig,
    seed: u64,
    mut after_block: F,
) -> Result<ChainOutput>
where
    F: FnMut(&ChainRunner<'_>) -> Result<()>,
{
    let mut runner = ChainRunner::new(data, *spec, cfg.clone(), seed)?;
    let block = cfg.block_iterations.unwrap_or(cfg.iterations);
    while !runner.is_finished() {
        runner.run(block);
        log::debug!("completed {} of {} sweeps", runner.completed(), cfg.iterations);
        after_block(&runner)?;
    }
    Ok(runner.finish())
}
