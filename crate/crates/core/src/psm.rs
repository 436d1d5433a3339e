//! The partition state model prior: forward simulation, expected Rand index
//! diagnostics, and the hierarchical (multiview) representation.
//!
//! Times are 0-based here: a draw over `horizon` times has partitions at
//! `0..horizon` and changepoint indicators for times `1..horizon`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::num::Real;
use crate::partition::{adjusted_rand_index, rand_index, sample_partition, GibbsParams, Partition};

/// Changepoint probabilities, shared or one per time `1..horizon`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Etas {
    Shared(f64),
    PerTime(Vec<f64>),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PsmPrior {
    pub base: GibbsParams<f64>,
    pub etas: Etas,
}

impl PsmPrior {
    pub fn shared(base: GibbsParams<f64>, eta: f64) -> Result<Self> {
        check_prob(eta)?;
        Ok(Self {
            base,
            etas: Etas::Shared(eta),
        })
    }

    pub fn per_time(base: GibbsParams<f64>, etas: Vec<f64>) -> Result<Self> {
        for &e in &etas {
            check_prob(e)?;
        }
        Ok(Self {
            base,
            etas: Etas::PerTime(etas),
        })
    }

    /// Changepoint probability at time `t >= 1`.
    fn eta(&self, t: usize) -> f64 {
        match &self.etas {
            Etas::Shared(e) => *e,
            Etas::PerTime(v) => v[t - 1],
        }
    }
}

fn check_prob(eta: f64) -> Result<()> {
    if (0.0..=1.0).contains(&eta) {
        Ok(())
    } else {
        Err(invalid(format!("changepoint probability {eta} outside [0, 1]")))
    }
}

/// One joint draw of partitions and changepoint indicators.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PsmDraw {
    pub partitions: Vec<Partition>,
    /// `gammas[t - 1]` is the indicator at time `t`.
    pub gammas: Vec<bool>,
}

/// Simulate `horizon` partitions: copy the previous one unless a changepoint fires.
pub fn psm_forward<R: Rng + ?Sized>(
    n: usize,
    horizon: usize,
    prior: &PsmPrior,
    rng: &mut R,
) -> Result<PsmDraw> {
    if horizon == 0 || n == 0 {
        return Err(Error::Empty("horizon and unit count must be positive"));
    }
    if let Etas::PerTime(v) = &prior.etas {
        if v.len() + 1 != horizon {
            return Err(Error::SizeMismatch {
                what: "per-time changepoint probabilities vs horizon - 1",
                left: v.len(),
                right: horizon - 1,
            });
        }
    }
    let mut partitions = Vec::with_capacity(horizon);
    let mut gammas = Vec::with_capacity(horizon - 1);
    partitions.push(sample_partition(n, &prior.base, rng));
    for t in 1..horizon {
        let gamma = rng.random_bool(prior.eta(t));
        let next = if gamma {
            sample_partition(n, &prior.base, rng)
        } else {
            partitions[t - 1].clone()
        };
        gammas.push(gamma);
        partitions.push(next);
    }
    Ok(PsmDraw { partitions, gammas })
}

/// Expected Rand index between partitions `lag` steps apart under a shared `eta`.
///
/// `1 - 2 V22 (1 - V22) [1 - (1 - eta)^lag]`.
pub fn eri_closed_form<F: Real>(g: &GibbsParams<F>, eta: F, lag: usize) -> Result<F> {
    if lag == 0 {
        return Err(invalid("lag must be at least 1"));
    }
    if !(eta >= F::zero() && eta <= F::one()) {
        return Err(invalid(format!("changepoint probability {eta} outside [0, 1]")));
    }
    let v = g.v22();
    let lag = i32::try_from(lag).map_err(|_| invalid("lag too large"))?;
    let moved = F::one() - (F::one() - eta).powi(lag);
    Ok(F::one() - F::lit(2.0) * v * (F::one() - v) * moved)
}

/// Monte Carlo mean with its standard error.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    pub mean: f64,
    pub std_error: f64,
}

impl McEstimate {
    fn from_samples(xs: &[f64]) -> Self {
        let m = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / m;
        let var = if xs.len() > 1 {
            xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (m - 1.0)
        } else {
            0.0
        };
        Self {
            mean,
            std_error: (var / m).sqrt(),
        }
    }
}

/// Monte Carlo expected Rand index between times `t1 < t2`.
pub fn eri_monte_carlo<R: Rng + ?Sized>(
    n: usize,
    horizon: usize,
    prior: &PsmPrior,
    t1: usize,
    t2: usize,
    draws: usize,
    rng: &mut R,
) -> Result<McEstimate> {
    if !(t1 < t2 && t2 < horizon) {
        return Err(invalid(format!("need t1 < t2 < horizon, got {t1}, {t2}, {horizon}")));
    }
    if draws == 0 {
        return Err(Error::Empty("draw count"));
    }
    let mut values = Vec::with_capacity(draws);
    for _ in 0..draws {
        let d = psm_forward(n, t2 + 1, prior, rng)?;
        values.push(rand_index(&d.partitions[t1], &d.partitions[t2])?);
    }
    Ok(McEstimate::from_samples(&values))
}

/// `horizon x horizon` matrix of mean ARI between every pair of times.
pub fn lagged_ari_matrix<R: Rng + ?Sized>(
    n: usize,
    horizon: usize,
    prior: &PsmPrior,
    draws: usize,
    rng: &mut R,
) -> Result<Vec<Vec<f64>>> {
    if draws == 0 {
        return Err(Error::Empty("draw count"));
    }
    let mut acc = vec![vec![0.0; horizon]; horizon];
    for _ in 0..draws {
        let d = psm_forward(n, horizon, prior, rng)?;
        for i in 0..horizon {
            for j in i + 1..horizon {
                acc[i][j] += if d.partitions[i] == d.partitions[j] {
                    1.0
                } else {
                    adjusted_rand_index(&d.partitions[i], &d.partitions[j])?
                };
            }
        }
    }
    let m = draws as f64;
    for i in 0..horizon {
        acc[i][i] = 1.0;
        for j in i + 1..horizon {
            acc[i][j] /= m;
            acc[j][i] = acc[i][j];
        }
    }
    Ok(acc)
}

/// Per-view change probability of the hierarchical representation matching a
/// two-time joint with changepoint probability `eta`: `1 - sqrt(1 - eta)`.
pub fn eta_tilde_from_eta<F: Real>(eta: F) -> Result<F> {
    if !(eta >= F::zero() && eta <= F::one()) {
        return Err(invalid(format!("changepoint probability {eta} outside [0, 1]")));
    }
    Ok(F::one() - (F::one() - eta).sqrt())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MultiviewDraw {
    pub parent: Partition,
    pub children: Vec<Partition>,
    /// `true` where the child was redrawn instead of copying the parent.
    pub indicators: Vec<bool>,
}

/// Draw a parent partition and `views` children that copy it with probability `1 - eta_tilde`.
pub fn multiview_forward<R: Rng + ?Sized>(
    n: usize,
    views: usize,
    g: &GibbsParams<f64>,
    eta_tilde: f64,
    rng: &mut R,
) -> Result<MultiviewDraw> {
    if views < 2 {
        return Err(invalid("multiview model needs at least two views"));
    }
    check_prob(eta_tilde)?;
    let parent = sample_partition(n, g, rng);
    let mut children = Vec::with_capacity(views);
    let mut indicators = Vec::with_capacity(views);
    for _ in 0..views {
        let fresh = rng.random_bool(eta_tilde);
        children.push(if fresh {
            sample_partition(n, g, rng)
        } else {
            parent.clone()
        });
        indicators.push(fresh);
    }
    Ok(MultiviewDraw {
        parent,
        children,
        indicators,
    })
}
