//! Optional pre-phase that learns `tau2` and `sigma02` before the main chain.
//!
//! Independent per-time mixtures are run with explicit block means so the
//! inverse-gamma priors on both variances are conditionally conjugate. The
//! returned values are posterior means over the retained pre-phase sweeps and
//! stay fixed during the main chain.

use rand_distr::{Distribution, Gamma, Normal};
use serde::{Deserialize, Serialize};

use super::AllocationChain;
use crate::error::{invalid, Error, Result};
use crate::model::{DataMatrix, ObsHyper};
use crate::partition::GibbsParams;
use crate::rng::{substream, StreamRng, STREAM_HYPER};

/// `InvGamma(shape, scale)`, with mean `scale / (shape - 1)` for `shape > 1`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct InvGammaPrior {
    pub shape: f64,
    pub scale: f64,
}

impl InvGammaPrior {
    pub fn validate(&self) -> Result<()> {
        if !(self.shape > 0.0 && self.scale > 0.0 && self.shape.is_finite() && self.scale.is_finite()) {
            return Err(invalid(format!(
                "inverse-gamma prior needs positive shape and scale; got ({}, {})",
                self.shape, self.scale
            )));
        }
        Ok(())
    }

    fn sample(&self, extra_shape: f64, extra_scale: f64, rng: &mut StreamRng) -> f64 {
        let g = Gamma::new(self.shape + extra_shape, 1.0 / (self.scale + extra_scale))
            .expect("validated inverse-gamma parameters");
        1.0 / g.sample(rng)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PrePhaseConfig {
    pub iterations: usize,
    pub burnin: usize,
}

impl Default for PrePhaseConfig {
    fn default() -> Self {
        Self {
            iterations: 400,
            burnin: 200,
        }
    }
}

/// Posterior means of `tau2` and `sigma02` under independent per-time fits.
/// `init` supplies the starting variances and the fixed prior mean `mu0`.
pub fn estimate_hyper(
    data: &DataMatrix,
    base: &GibbsParams<f64>,
    init: ObsHyper<f64>,
    tau2_prior: InvGammaPrior,
    sigma02_prior: InvGammaPrior,
    cfg: &PrePhaseConfig,
    seed: u64,
) -> Result<ObsHyper<f64>> {
    tau2_prior.validate()?;
    sigma02_prior.validate()?;
    if cfg.iterations <= cfg.burnin {
        return Err(Error::Config(format!(
            "pre-phase iterations ({}) must exceed burn-in ({})",
            cfg.iterations, cfg.burnin
        )));
    }
    let mut rng = substream(seed, STREAM_HYPER);
    let mut hyper = init;
    let mu0 = init.mu0();
    let mut chains: Vec<AllocationChain<'_>> = (0..data.times())
        .map(|t| AllocationChain::new(data.column(t), hyper, *base))
        .collect();
    let (mut tau_acc, mut sig_acc) = (0.0, 0.0);
    let total = (data.n() * data.times()) as f64;
    for it in 0..cfg.iterations {
        let mut sse = 0.0;
        let mut between = 0.0;
        let mut blocks = 0usize;
        for chain in &mut chains {
            chain.with_hyper(hyper);
            chain.sweep(&mut rng);
            for s in chain.canonical_stats() {
                let (v, m) = hyper.posterior_moments(s.count, s.sum);
                let beta = Normal::new(m, v.sqrt()).expect("finite moments").sample(&mut rng);
                let c = s.count as f64;
                // sum (y - beta)^2 from the sufficient statistics
                sse += (s.sumsq - 2.0 * beta * s.sum + c * beta * beta).max(0.0);
                between += (beta - mu0).powi(2);
                blocks += 1;
            }
        }
        let tau2 = tau2_prior.sample(total / 2.0, sse / 2.0, &mut rng);
        let sigma02 = sigma02_prior.sample(blocks as f64 / 2.0, between / 2.0, &mut rng);
        hyper = ObsHyper::new(tau2, mu0, sigma02)?;
        if it >= cfg.burnin {
            tau_acc += tau2;
            sig_acc += sigma02;
        }
    }
    let kept = (cfg.iterations - cfg.burnin) as f64;
    ObsHyper::new(tau_acc / kept, mu0, sig_acc / kept)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn recovers_noise_and_mean_spread() {
        // two groups per time, means spread with variance 4, noise variance 0.04
        let mut rng = substream(11, 0);
        let n = 30;
        let cols: Vec<Vec<f64>> = (0..40)
            .map(|_| {
                let means = [rng.random::<f64>() * 4.0 - 2.0, rng.random::<f64>() * 4.0 + 4.0];
                (0..n)
                    .map(|i| means[i % 2] + 0.2 * (rng.random::<f64>() - 0.5) * 12f64.sqrt())
                    .collect()
            })
            .collect();
        let data = DataMatrix::from_columns(&cols).unwrap();
        let base = GibbsParams::crp(1.0).unwrap();
        let init = ObsHyper::new(1.0, 0.0, 1.0).unwrap();
        let weak = InvGammaPrior { shape: 2.0, scale: 1.0 };
        let cfg = PrePhaseConfig { iterations: 150, burnin: 50 };
        let h = estimate_hyper(&data, &base, init, weak, weak, &cfg, 3).unwrap();
        assert!((h.tau2() - 0.04).abs() < 0.01, "tau2 {}", h.tau2());
        assert!(h.sigma02() > 3.0, "sigma02 {}", h.sigma02());
    }

    #[test]
    fn rejects_bad_settings() {
        let data = DataMatrix::from_columns(&[vec![0.0, 1.0]]).unwrap();
        let base = GibbsParams::crp(1.0).unwrap();
        let init = ObsHyper::new(1.0, 0.0, 1.0).unwrap();
        let p = InvGammaPrior { shape: 2.0, scale: 1.0 };
        let cfg = PrePhaseConfig { iterations: 5, burnin: 5 };
        assert!(estimate_hyper(&data, &base, init, p, p, &cfg, 0).is_err());
        let bad = InvGammaPrior { shape: 0.0, scale: 1.0 };
        assert!(estimate_hyper(&data, &base, init, bad, p, &PrePhaseConfig::default(), 0).is_err());
    }
}
