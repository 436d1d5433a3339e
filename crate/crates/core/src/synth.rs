//! Synthetic scenarios with known partitions, and the series preprocessing pipeline.

use rand::seq::{index, SliceRandom};
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::model::DataMatrix;
use crate::partition::Partition;
use crate::rng::{substream, StreamRng, STREAM_SIMULATE};

/// Ground truth of a simulated data set. Times are 1-based.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub n: usize,
    pub horizon: usize,
    pub true_partitions: Vec<Partition>,
    /// Times `t >= 2` whose partition differs from time `t - 1`.
    pub true_changepoints: Vec<usize>,
    pub generator: Generator,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Generator {
    Independent {
        config: IndependentConfig,
        block_lengths: Vec<usize>,
    },
    Ar1 {
        config: Ar1Config,
    },
}

/// Changepoint times implied by a partition sequence.
pub fn changepoints_of(parts: &[Partition]) -> Vec<usize> {
    (1..parts.len())
        .filter(|&t| parts[t] != parts[t - 1])
        .map(|t| t + 1)
        .collect()
}

impl Scenario {
    /// True when the recorded changepoints match the partitions.
    pub fn is_consistent(&self) -> bool {
        self.true_partitions.len() == self.horizon
            && self.true_changepoints == changepoints_of(&self.true_partitions)
    }
}

/// Piecewise-constant partitions with independent cluster means at every time.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IndependentConfig {
    pub blocks: usize,
    pub min_block: usize,
    /// Standard deviation of the per-time cluster means around 0.
    pub mean_sd: f64,
    pub noise_var: f64,
}

impl Default for IndependentConfig {
    fn default() -> Self {
        Self {
            blocks: 9,
            min_block: 5,
            mean_sd: 2.0,
            noise_var: 0.01,
        }
    }
}

/// Balanced random split of `n` units into `k` groups.
fn random_split(n: usize, k: usize, rng: &mut StreamRng) -> Partition {
    let mut units: Vec<usize> = (0..n).collect();
    units.shuffle(rng);
    let mut labels = vec![0usize; n];
    for (pos, &u) in units.iter().enumerate() {
        labels[u] = pos % k;
    }
    Partition::canonicalize(&labels).expect("non-empty")
}

/// Nine blocks alternating two three-cluster configurations and one two-cluster configuration.
pub fn gen_independent(
    n: usize,
    horizon: usize,
    seed: u64,
    cfg: &IndependentConfig,
) -> Result<(DataMatrix, Scenario)> {
    if cfg.blocks < 2 || cfg.min_block == 0 {
        return Err(invalid("need at least two blocks of positive length"));
    }
    if horizon < cfg.blocks * cfg.min_block {
        return Err(invalid(format!(
            "T = {horizon} cannot hold {} blocks of at least {} times",
            cfg.blocks, cfg.min_block
        )));
    }
    if n < 6 {
        return Err(invalid(format!("need n >= 6 units for the cluster layouts; got {n}")));
    }
    if !(cfg.mean_sd > 0.0 && cfg.noise_var > 0.0) {
        return Err(invalid("mean sd and noise variance must be positive"));
    }
    let mut rng = substream(seed, STREAM_SIMULATE);

    // uniform composition: choose cut points among the spare times
    let spare = horizon - cfg.blocks * cfg.min_block;
    let mut cuts: Vec<usize> = index::sample(&mut rng, spare + cfg.blocks - 1, cfg.blocks - 1).into_vec();
    cuts.sort_unstable();
    let mut lengths = Vec::with_capacity(cfg.blocks);
    let mut prev = 0;
    for (k, &c) in cuts.iter().enumerate() {
        let extra = c - k - prev;
        lengths.push(cfg.min_block + extra);
        prev = c - k;
    }
    lengths.push(cfg.min_block + spare - prev);

    let a = random_split(n, 3, &mut rng);
    let mut b = random_split(n, 3, &mut rng);
    while b == a {
        b = random_split(n, 3, &mut rng);
    }
    let c = random_split(n, 2, &mut rng);
    let configs = [a, b, c];

    let mut parts = Vec::with_capacity(horizon);
    for (k, &len) in lengths.iter().enumerate() {
        parts.extend(std::iter::repeat_n(configs[k % 3].clone(), len));
    }

    let means = Normal::new(0.0, cfg.mean_sd).expect("positive sd");
    let noise = Normal::new(0.0, cfg.noise_var.sqrt()).expect("positive variance");
    let mut cols = Vec::with_capacity(horizon);
    for p in &parts {
        let mu: Vec<f64> = (0..p.num_blocks()).map(|_| means.sample(&mut rng)).collect();
        cols.push(
            p.labels()
                .iter()
                .map(|&l| mu[l as usize] + noise.sample(&mut rng))
                .collect::<Vec<_>>(),
        );
    }
    let data = DataMatrix::from_columns(&cols)?;
    let scenario = Scenario {
        n,
        horizon,
        true_changepoints: changepoints_of(&parts),
        true_partitions: parts,
        generator: Generator::Independent {
            config: cfg.clone(),
            block_lengths: lengths,
        },
        seed,
    };
    Ok((data, scenario))
}

/// Autoregressive scenario: one cluster except at times divisible by 5 (two
/// equal clusters) or by 9 (two unequal clusters).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Ar1Config {
    pub lambda: f64,
    /// Level shared by all units at single-cluster times.
    pub single_value: f64,
    /// Levels of the two equal clusters.
    pub equal_values: [f64; 2],
    /// Levels of the larger and smaller unequal clusters.
    pub unequal_values: [f64; 2],
    /// Share of units in the larger unequal cluster; must exceed 2/3.
    pub unequal_share: f64,
    pub noise_sd: f64,
}

impl Default for Ar1Config {
    fn default() -> Self {
        Self {
            lambda: 0.5,
            single_value: 0.0,
            equal_values: [-3.0, 3.0],
            unequal_values: [0.0, 4.0],
            unequal_share: 0.7,
            noise_sd: 1.0,
        }
    }
}

pub const AR1_DEFAULT_N: usize = 20;
pub const AR1_DEFAULT_T: usize = 30;

pub fn gen_ar1(n: usize, horizon: usize, seed: u64, cfg: &Ar1Config) -> Result<(DataMatrix, Scenario)> {
    if !(0.0..1.0).contains(&cfg.lambda) {
        return Err(invalid(format!("lambda must lie in [0, 1); got {}", cfg.lambda)));
    }
    if n < 4 || horizon == 0 {
        return Err(invalid(format!("need n >= 4 and T >= 1; got n = {n}, T = {horizon}")));
    }
    let large = (cfg.unequal_share * n as f64).round() as usize;
    if large * 3 <= 2 * n || large >= n {
        return Err(invalid(format!(
            "unequal share {} must give a larger cluster over twice the smaller for n = {n}",
            cfg.unequal_share
        )));
    }
    if !(cfg.noise_sd > 0.0) {
        return Err(invalid("noise sd must be positive"));
    }
    let mut rng = substream(seed, STREAM_SIMULATE);
    let noise = Normal::new(0.0, cfg.noise_sd).expect("positive sd");
    let mut level = vec![0.0; n];
    let mut y = vec![0.0; n];
    let mut cols = Vec::with_capacity(horizon);
    let mut parts = Vec::with_capacity(horizon);
    for t in 1..=horizon {
        let mut order: Vec<usize> = (0..n).collect();
        let split = if t % 5 == 0 {
            order.shuffle(&mut rng);
            Some((n / 2, cfg.equal_values))
        } else if t % 9 == 0 {
            order.shuffle(&mut rng);
            Some((large, cfg.unequal_values))
        } else {
            None
        };
        let mut labels = vec![0usize; n];
        match split {
            Some((first, values)) => {
                for (pos, &u) in order.iter().enumerate() {
                    let g = usize::from(pos >= first);
                    labels[u] = g;
                    level[u] = values[g];
                }
            }
            None => level.fill(cfg.single_value),
        }
        for i in 0..n {
            y[i] = cfg.lambda * y[i] + level[i] + noise.sample(&mut rng);
        }
        cols.push(y.clone());
        parts.push(Partition::canonicalize(&labels)?);
    }
    let data = DataMatrix::from_columns(&cols)?;
    let scenario = Scenario {
        n,
        horizon,
        true_changepoints: changepoints_of(&parts),
        true_partitions: parts,
        generator: Generator::Ar1 { config: cfg.clone() },
        seed,
    };
    Ok((data, scenario))
}

/// Settings of [`preprocess`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PreprocessConfig {
    pub stride: usize,
    /// 0-based position of the first kept point after smoothing.
    pub offset: usize,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        Self { stride: 5, offset: 0 }
    }
}

/// Two-point moving average.
pub fn moving_average(x: &[f64]) -> Vec<f64> {
    x.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect()
}

/// Every `stride`-th element starting at `offset`.
pub fn downsample(x: &[f64], stride: usize, offset: usize) -> Vec<f64> {
    x.iter().skip(offset).step_by(stride).copied().collect()
}

/// Smooth, downsample, square-root and standardise each unit's series.
pub fn preprocess(series: &[Vec<f64>], cfg: &PreprocessConfig) -> Result<DataMatrix> {
    if cfg.stride == 0 {
        return Err(invalid("stride must be positive"));
    }
    if series.is_empty() {
        return Err(Error::Empty("series"));
    }
    let mut rows = Vec::with_capacity(series.len());
    for (unit, s) in series.iter().enumerate() {
        if let Some(time) = s.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { unit, time });
        }
        let kept = downsample(&moving_average(s), cfg.stride, cfg.offset);
        if kept.len() < 2 {
            return Err(invalid(format!(
                "unit {unit}: series of length {} leaves fewer than two points",
                s.len()
            )));
        }
        let mut root = Vec::with_capacity(kept.len());
        for (time, &v) in kept.iter().enumerate() {
            if v < 0.0 {
                return Err(Error::NegativeValue { unit, time, value: v });
            }
            root.push(v.sqrt());
        }
        let m = root.len() as f64;
        let mean = root.iter().sum::<f64>() / m;
        let var = root.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (m - 1.0);
        if !(var > 0.0) {
            return Err(invalid(format!("unit {unit}: constant series cannot be standardised")));
        }
        let sd = var.sqrt();
        rows.push(root.into_iter().map(|v| (v - mean) / sd).collect());
    }
    DataMatrix::from_rows(&rows)
}
