//! CRP and two-parameter CRP (Pitman-Yor) partition laws.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::Partition;
use crate::error::{invalid, Error, Result};
use crate::num::{ln_rising, Real};

/// Concentration `theta` and discount `sigma` of a Gibbs-type partition law.
///
/// `sigma == 0` is the Chinese restaurant process; `0 < sigma < 1` its
/// two-parameter version. Requires `theta > -sigma`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GibbsParams<F> {
    theta: F,
    sigma: F,
}

impl<F: Real> GibbsParams<F> {
    pub fn new(theta: F, sigma: F) -> Result<Self> {
        if !(sigma >= F::zero() && sigma < F::one()) {
            return Err(invalid(format!("discount sigma = {sigma} not in [0, 1)")));
        }
        if !(theta > -sigma) || !theta.is_finite() {
            return Err(invalid(format!(
                "concentration theta = {theta} must exceed -sigma = {}",
                -sigma
            )));
        }
        Ok(Self { theta, sigma })
    }

    pub fn crp(theta: F) -> Result<Self> {
        Self::new(theta, F::zero())
    }

    #[inline]
    pub fn theta(&self) -> F {
        self.theta
    }

    #[inline]
    pub fn sigma(&self) -> F {
        self.sigma
    }

    /// `V_{2,2}`: prior probability that two units sit apart.
    pub fn v22(&self) -> F {
        (self.theta + self.sigma) / (self.theta + F::one())
    }

    /// Log predictive weight of joining a block that currently has `size` units.
    #[inline]
    pub fn ln_seat_existing(&self, size: usize) -> F {
        (F::from_count(size) - self.sigma).ln()
    }

    /// Log predictive weight of opening a new block when `k` blocks exist.
    #[inline]
    pub fn ln_seat_new(&self, k: usize) -> F {
        (self.theta + F::from_count(k) * self.sigma).ln()
    }
}

/// Log EPPF: `log V_{n,k} + sum_j log[(1 - sigma)_{n_j - 1}]`.
pub fn eppf_log_prob<F: Real>(p: &Partition, g: &GibbsParams<F>) -> F {
    let n = p.n();
    let k = p.num_blocks();
    let (theta, sigma) = (g.theta, g.sigma);
    let ln_v = if sigma == F::zero() {
        F::from_count(k) * theta.ln() - ln_rising(theta, n)
    } else {
        let num: F = (1..k).map(|j| (theta + F::from_count(j) * sigma).ln()).sum();
        num - ln_rising(theta + F::one(), n - 1)
    };
    let blocks: F = p
        .block_sizes()
        .into_iter()
        .map(|s| ln_rising(F::one() - sigma, s - 1))
        .sum();
    ln_v + blocks
}

/// Draw from the partition law by sequential seating.
pub fn sample_partition<R: Rng + ?Sized>(n: usize, g: &GibbsParams<f64>, rng: &mut R) -> Partition {
    assert!(n > 0, "partition of zero units");
    let mut labels = Vec::with_capacity(n);
    let mut sizes: Vec<usize> = Vec::new();
    for i in 0..n {
        let k = sizes.len();
        // total weight i + theta
        let total = i as f64 + g.theta;
        let mut u = rng.random::<f64>() * total;
        let mut chosen = k;
        for (j, &s) in sizes.iter().enumerate() {
            let w = s as f64 - g.sigma;
            if u < w {
                chosen = j;
                break;
            }
            u -= w;
        }
        if chosen == k {
            sizes.push(1);
        } else {
            sizes[chosen] += 1;
        }
        labels.push(chosen as u32);
    }
    Partition::from_canonical(labels)
}

/// Prior expected number of blocks among `n` units.
pub fn expected_clusters<F: Real>(n: usize, theta: F, sigma: F) -> F {
    if sigma == F::zero() {
        (0..n).map(|i| theta / (theta + F::from_count(i))).sum()
    } else {
        // (theta + sigma)_n / (theta + 1)_{n-1}, factor by factor.
        let ln_ratio = (theta + sigma).ln()
            + (1..n)
                .map(|i| {
                    let i = F::from_count(i);
                    (theta + sigma + i).ln() - (theta + i).ln()
                })
                .sum::<F>();
        (ln_ratio.exp() - theta) / sigma
    }
}

/// Concentration giving `expected` prior blocks among `n` units, by bisection.
pub fn solve_theta<F: Real>(n: usize, expected: F, sigma: F) -> Result<F> {
    let nf = F::from_count(n);
    if !(expected > F::one() && expected < nf) {
        return Err(Error::Unattainable {
            target: expected.to_f64().unwrap_or(f64::NAN),
            lo: 1.0,
            hi: n as f64,
        });
    }
    GibbsParams::new(F::one(), sigma)?;
    let f = |th: F| expected_clusters(n, th, sigma) - expected;
    let mut lo = -sigma + F::lit(1e-8);
    let mut hi = F::lit(1e4);
    let mut expansions = 0;
    while f(hi) < F::zero() {
        hi = hi * F::lit(10.0);
        expansions += 1;
        if expansions > 30 || !hi.is_finite() {
            return Err(Error::Unattainable {
                target: expected.to_f64().unwrap_or(f64::NAN),
                lo: 1.0,
                hi: n as f64,
            });
        }
    }
    if f(lo) > F::zero() {
        return Err(Error::Unattainable {
            target: expected.to_f64().unwrap_or(f64::NAN),
            lo: expected_clusters(n, lo, sigma).to_f64().unwrap_or(f64::NAN),
            hi: n as f64,
        });
    }
    let tol = F::lit(1e-10).max(F::epsilon() * F::lit(8.0));
    for _ in 0..300 {
        let mid = lo + (hi - lo) / F::lit(2.0);
        if f(mid) < F::zero() {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < tol * (F::one() + mid.abs()) {
            break;
        }
    }
    Ok(lo + (hi - lo) / F::lit(2.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::partition::enumerate_partitions;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::collections::HashMap;

    fn prob(raw: &[u32], theta: f64, sigma: f64) -> f64 {
        let p = Partition::canonicalize(raw).unwrap();
        eppf_log_prob(&p, &GibbsParams::new(theta, sigma).unwrap()).exp()
    }

    #[test]
    fn eppf_hand_values() {
        assert!((prob(&[0, 0], 1.0, 0.0) - 0.5).abs() < 1e-15);
        assert!((prob(&[0, 1, 2], 1.0, 0.0) - 1.0 / 6.0).abs() < 1e-15);
        assert!((prob(&[0, 1], 1.0, 0.25) - 0.625).abs() < 1e-15);
    }

    #[test]
    fn eppf_sums_to_one() {
        for &(theta, sigma) in &[(1.0, 0.0), (0.5, 0.0), (1.0, 0.25), (0.32, 0.0), (-0.07, 0.25)] {
            let g = GibbsParams::<f64>::new(theta, sigma).unwrap();
            for n in 1..=6 {
                let total: f64 = enumerate_partitions(n)
                    .unwrap()
                    .iter()
                    .map(|p| eppf_log_prob(p, &g).exp())
                    .sum();
                assert!((total - 1.0).abs() < 1e-12, "n={n} theta={theta} sigma={sigma}");
            }
        }
    }

    #[test]
    fn eppf_generic_f32() {
        let g = GibbsParams::<f32>::new(1.0, 0.25).unwrap();
        let total: f32 = enumerate_partitions(4)
            .unwrap()
            .iter()
            .map(|p| eppf_log_prob(p, &g).exp())
            .sum();
        assert!((total - 1.0).abs() < 1e-5);
    }

    #[test]
    fn parameter_validation() {
        assert!(GibbsParams::new(0.0, 0.0).is_err());
        assert!(GibbsParams::new(-0.3, 0.25).is_err());
        assert!(GibbsParams::new(-0.07, 0.25).is_ok());
        assert!(GibbsParams::new(1.0, 1.0).is_err());
        assert!(GibbsParams::new(1.0, -0.1).is_err());
    }

    fn tv_against_eppf(n: usize, theta: f64, sigma: f64, draws: usize, seed: u64) -> f64 {
        let g = GibbsParams::<f64>::new(theta, sigma).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut counts: HashMap<Partition, usize> = HashMap::new();
        for _ in 0..draws {
            *counts.entry(sample_partition(n, &g, &mut rng)).or_default() += 1;
        }
        0.5 * enumerate_partitions(n)
            .unwrap()
            .iter()
            .map(|p| {
                let emp = *counts.get(p).unwrap_or(&0) as f64 / draws as f64;
                (emp - eppf_log_prob(p, &g).exp()).abs()
            })
            .sum::<f64>()
    }

    #[test]
    fn sampler_matches_eppf() {
        assert_eq!(
            sample_partition(1, &GibbsParams::crp(1.0).unwrap(), &mut ChaCha8Rng::seed_from_u64(0)),
            Partition::one_block(1)
        );
        assert!(tv_against_eppf(4, 1.0, 0.0, 1_000_000, 11) <= 0.005);
        assert!(tv_against_eppf(4, 0.5, 0.25, 1_000_000, 12) <= 0.005);
        assert!(tv_against_eppf(5, 0.32, 0.0, 1_000_000, 13) <= 0.005);
    }

    #[test]
    fn expected_clusters_matches_enumeration() {
        for &(theta, sigma) in &[(1.0, 0.0), (0.3, 0.25), (-0.07, 0.25)] {
            let g = GibbsParams::<f64>::new(theta, sigma).unwrap();
            let n = 6;
            let exact: f64 = enumerate_partitions(n)
                .unwrap()
                .iter()
                .map(|p| p.num_blocks() as f64 * eppf_log_prob(p, &g).exp())
                .sum();
            assert!((expected_clusters(n, theta, sigma) - exact).abs() < 1e-12);
        }
    }

    #[test]
    fn solve_theta_reference_values() {
        let cases = [
            (20, 0.0, 0.32),
            (20, 0.25, -0.07),
            (8, 0.0, 0.49),
            (2312, 0.0, 0.12),
        ];
        for (n, sigma, want) in cases {
            let th = solve_theta(n, 2.0f64, sigma).unwrap();
            assert!((th - want).abs() <= 0.005, "n={n} sigma={sigma}: {th}");
            assert!((expected_clusters(n, th, sigma) - 2.0).abs() < 1e-5);
        }
        assert!(solve_theta(20, 1.0f64, 0.0).is_err());
        assert!(solve_theta(20, 20.0f64, 0.0).is_err());
    }
}
