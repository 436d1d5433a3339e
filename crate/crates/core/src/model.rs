//! Conjugate Normal-Normal observation model with cluster means integrated out.
//!
//! `y_i | beta ~ N(beta, tau2)` within a cluster and `beta ~ N(mu0, sigma02)`.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::num::Real;
use crate::partition::Partition;

/// Kernel variance `tau2`, base mean `mu0` and base variance `sigma02`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObsHyper<F> {
    tau2: F,
    mu0: F,
    sigma02: F,
}

impl<F: Real> ObsHyper<F> {
    pub fn new(tau2: F, mu0: F, sigma02: F) -> Result<Self> {
        if !(tau2 > F::zero() && tau2.is_finite()) {
            return Err(invalid(format!("kernel variance tau2 = {tau2} must be positive")));
        }
        if !(sigma02 > F::zero() && sigma02.is_finite()) {
            return Err(invalid(format!("base variance = {sigma02} must be positive")));
        }
        if !mu0.is_finite() {
            return Err(invalid("base mean must be finite"));
        }
        Ok(Self { tau2, mu0, sigma02 })
    }

    #[inline]
    pub fn tau2(&self) -> F {
        self.tau2
    }

    #[inline]
    pub fn mu0(&self) -> F {
        self.mu0
    }

    #[inline]
    pub fn sigma02(&self) -> F {
        self.sigma02
    }

    /// Posterior variance and mean of a cluster mean given `count` points summing to `sum`.
    #[inline]
    pub fn posterior_moments(&self, count: usize, sum: F) -> (F, F) {
        let n = F::from_count(count);
        let v = self.tau2 * self.sigma02 / (n * self.sigma02 + self.tau2);
        let m = v * (self.mu0 / self.sigma02 + sum / self.tau2);
        (v, m)
    }

    /// Log posterior-predictive density of one more point `y` for a cluster with the given stats.
    #[inline]
    pub fn ln_predictive(&self, count: usize, sum: F, y: F) -> F {
        let (v, m) = self.posterior_moments(count, sum);
        let var = v + self.tau2;
        let d = y - m;
        -F::lit(0.5) * ((F::TAU()) * var).ln() - d * d / (F::lit(2.0) * var)
    }
}

/// Mean of an inverse-gamma law with the given shape and scale (shape > 1).
pub fn inverse_gamma_mean(shape: f64, scale: f64) -> Result<f64> {
    if !(shape > 1.0 && scale > 0.0) {
        return Err(invalid(format!(
            "inverse-gamma mean needs shape > 1 and scale > 0, got ({shape}, {scale})"
        )));
    }
    Ok(scale / (shape - 1.0))
}

/// Sufficient statistics of one cluster.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct ClusterStats<F> {
    pub count: usize,
    pub sum: F,
    pub sumsq: F,
}

impl<F: Real> ClusterStats<F> {
    pub fn from_values(ys: &[F]) -> Self {
        let mut s = Self {
            count: 0,
            sum: F::zero(),
            sumsq: F::zero(),
        };
        for &y in ys {
            s.add(y);
        }
        s
    }

    #[inline]
    pub fn add(&mut self, y: F) {
        self.count += 1;
        self.sum = self.sum + y;
        self.sumsq = self.sumsq + y * y;
    }

    #[inline]
    pub fn remove(&mut self, y: F) {
        self.count -= 1;
        self.sum = self.sum - y;
        self.sumsq = self.sumsq - y * y;
    }

    /// Log marginal likelihood of the cluster; zero for an empty cluster.
    pub fn log_marginal(&self, h: &ObsHyper<F>) -> F {
        if self.count == 0 {
            return F::zero();
        }
        let n = F::from_count(self.count);
        let half = F::lit(0.5);
        let prec = n * h.sigma02 + h.tau2;
        // Centered at mu0: the marginal is N(y; mu0 1, tau2 I + sigma02 11').
        let centered_sum = self.sum - n * h.mu0;
        let centered_sq = self.sumsq - F::lit(2.0) * h.mu0 * self.sum + n * h.mu0 * h.mu0;
        let quad = (centered_sq - h.sigma02 * centered_sum * centered_sum / prec) / h.tau2;
        -half * n * (F::TAU() * h.tau2).ln() + half * (h.tau2 / prec).ln() - half * quad
    }
}

/// `log ∫ ∏ N(y_i; beta, tau2) N(beta; mu0, sigma02) dbeta` for one cluster.
pub fn cluster_log_marginal<F: Real>(ys: &[F], h: &ObsHyper<F>) -> Result<F> {
    if ys.is_empty() {
        return Err(Error::Empty("cluster"));
    }
    Ok(ClusterStats::from_values(ys).log_marginal(h))
}

/// Sum of cluster log marginals over the blocks of `p`.
pub fn partition_log_marginal<F: Real>(y: &[F], p: &Partition, h: &ObsHyper<F>) -> Result<F> {
    if y.len() != p.n() {
        return Err(Error::SizeMismatch {
            what: "data column vs partition",
            left: y.len(),
            right: p.n(),
        });
    }
    let mut stats = vec![ClusterStats::default(); p.num_blocks()];
    Ok(log_marginal_into(y, p.labels(), h, &mut stats))
}

/// Allocation-free variant for the samplers; `stats` is scratch space.
pub(crate) fn log_marginal_into<F: Real>(
    y: &[F],
    labels: &[u32],
    h: &ObsHyper<F>,
    stats: &mut Vec<ClusterStats<F>>,
) -> F {
    stats.clear();
    for (&l, &v) in labels.iter().zip(y) {
        let l = l as usize;
        if l >= stats.len() {
            stats.resize(l + 1, ClusterStats::default());
        }
        stats[l].add(v);
    }
    stats.iter().map(|s| s.log_marginal(h)).sum()
}

/// Draw each block mean from its conjugate posterior `N(m_j, v_j)`.
pub fn sample_cluster_means<R: Rng + ?Sized>(
    y: &[f64],
    p: &Partition,
    h: &ObsHyper<f64>,
    rng: &mut R,
) -> Result<Vec<f64>> {
    if y.len() != p.n() {
        return Err(Error::SizeMismatch {
            what: "data column vs partition",
            left: y.len(),
            right: p.n(),
        });
    }
    let mut stats = vec![ClusterStats::<f64>::default(); p.num_blocks()];
    for (&l, &v) in p.labels().iter().zip(y) {
        stats[l as usize].add(v);
    }
    Ok(stats
        .iter()
        .map(|s| {
            let (v, m) = h.posterior_moments(s.count, s.sum);
            Normal::new(m, v.sqrt()).expect("finite moments").sample(rng)
        })
        .collect())
}

/// Observations `Y[i, t]` of `n` units over `T` times, stored time-major.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DataMatrix {
    n: usize,
    t: usize,
    values: Vec<f64>,
}

impl DataMatrix {
    /// Build from per-unit rows (`rows[i][t]`).
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        if n == 0 {
            return Err(Error::Empty("data matrix"));
        }
        let t = rows[0].len();
        if t == 0 {
            return Err(Error::Empty("data matrix"));
        }
        let mut values = vec![0.0; n * t];
        for (i, row) in rows.iter().enumerate() {
            if row.len() != t {
                return Err(Error::SizeMismatch {
                    what: "row length",
                    left: row.len(),
                    right: t,
                });
            }
            for (time, &v) in row.iter().enumerate() {
                if !v.is_finite() {
                    return Err(Error::NonFinite { unit: i, time });
                }
                values[time * n + i] = v;
            }
        }
        Ok(Self { n, t, values })
    }

    /// Build from per-time columns (`cols[t][i]`).
    pub fn from_columns(cols: &[Vec<f64>]) -> Result<Self> {
        let t = cols.len();
        if t == 0 || cols[0].is_empty() {
            return Err(Error::Empty("data matrix"));
        }
        let n = cols[0].len();
        let mut values = Vec::with_capacity(n * t);
        for (time, col) in cols.iter().enumerate() {
            if col.len() != n {
                return Err(Error::SizeMismatch {
                    what: "column length",
                    left: col.len(),
                    right: n,
                });
            }
            if let Some(unit) = col.iter().position(|v| !v.is_finite()) {
                return Err(Error::NonFinite { unit, time });
            }
            values.extend_from_slice(col);
        }
        Ok(Self { n, t, values })
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.n
    }

    /// Number of time points `T`.
    #[inline]
    pub fn times(&self) -> usize {
        self.t
    }

    /// The `n` observations at time `t` (0-based).
    #[inline]
    pub fn column(&self, t: usize) -> &[f64] {
        &self.values[t * self.n..(t + 1) * self.n]
    }

    #[inline]
    pub fn get(&self, unit: usize, t: usize) -> f64 {
        self.values[t * self.n + unit]
    }

    pub fn row(&self, unit: usize) -> Vec<f64> {
        (0..self.t).map(|t| self.get(unit, t)).collect()
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        (0..self.n).map(|i| self.row(i)).collect()
    }
}
