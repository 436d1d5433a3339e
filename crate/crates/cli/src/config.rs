//! Run configuration: defaults, a TOML or JSON file, then command-line flags,
//! each layer overriding the one before.

use std::path::{Path, PathBuf};

use lldpm_core::model::{inverse_gamma_mean, ObsHyper};
use lldpm_core::partition::{solve_theta, GibbsParams};
use lldpm_core::sampler::{
    estimate_hyper, BetaPrior, InvGammaPrior, ModelSpec, PrePhaseConfig, SamplerConfig,
};
use lldpm_core::DataMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{usage, CliError, CliResult};

/// How the observation variances are set before the chain starts.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum HyperMode {
    /// Use `tau2` / `sigma02`, or the means of their inverse-gamma priors.
    #[default]
    Fixed,
    /// Learn both from independent per-time fits, then hold them fixed.
    Prephase,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    /// Base concentration. Mutually exclusive with `expected_clusters`.
    pub theta: Option<f64>,
    /// Prior expected number of clusters per time, solved for `theta`.
    pub expected_clusters: Option<f64>,
    pub sigma: f64,
    pub eta_a: f64,
    pub eta_b: f64,
    /// Noise variance; defaults to the mean of `tau2_prior`.
    pub tau2: Option<f64>,
    /// Cluster-mean variance; defaults to the mean of `sigma02_prior`.
    pub sigma02: Option<f64>,
    pub mu0: f64,
    pub hyper_mode: HyperMode,
    pub tau2_prior: InvGammaPrior,
    pub sigma02_prior: InvGammaPrior,
    pub prephase: PrePhaseConfig,
}

impl Default for ModelConfig {
    fn default() -> Self {
        let ig = InvGammaPrior {
            shape: 15.0,
            scale: 3.0,
        };
        let eta = BetaPrior::default();
        Self {
            theta: None,
            expected_clusters: None,
            sigma: 0.0,
            eta_a: eta.a,
            eta_b: eta.b,
            tau2: None,
            sigma02: None,
            mu0: 0.0,
            hyper_mode: HyperMode::Fixed,
            tau2_prior: ig,
            sigma02_prior: ig,
            prephase: PrePhaseConfig::default(),
        }
    }
}

/// Where `theta` comes from when neither `theta` nor `expected_clusters` is set.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ThetaDefault {
    Theta(f64),
    ExpectedClusters(f64),
}

impl ModelConfig {
    pub fn validate(&self) -> CliResult<()> {
        if self.theta.is_some() && self.expected_clusters.is_some() {
            return Err(usage("set either theta or expected_clusters, not both"));
        }
        BetaPrior::new(self.eta_a, self.eta_b)?;
        self.tau2_prior.validate()?;
        self.sigma02_prior.validate()?;
        if self.prephase.iterations <= self.prephase.burnin {
            return Err(usage("pre-phase iterations must exceed its burn-in"));
        }
        Ok(())
    }

    pub fn base(&self, n: usize, fallback: ThetaDefault) -> CliResult<GibbsParams<f64>> {
        let theta = match (self.theta, self.expected_clusters, fallback) {
            (Some(t), _, _) => t,
            (None, Some(e), _) | (None, None, ThetaDefault::ExpectedClusters(e)) => {
                solve_theta(n, e, self.sigma)?
            }
            (None, None, ThetaDefault::Theta(t)) => t,
        };
        Ok(GibbsParams::new(theta, self.sigma)?)
    }

    /// Variances before any pre-phase.
    pub fn initial_hyper(&self) -> CliResult<ObsHyper<f64>> {
        let tau2 = match self.tau2 {
            Some(v) => v,
            None => inverse_gamma_mean(self.tau2_prior.shape, self.tau2_prior.scale)?,
        };
        let sigma02 = match self.sigma02 {
            Some(v) => v,
            None => inverse_gamma_mean(self.sigma02_prior.shape, self.sigma02_prior.scale)?,
        };
        Ok(ObsHyper::new(tau2, self.mu0, sigma02)?)
    }

    /// Resolve the model for a data set, running the pre-phase when requested.
    pub fn spec(&self, data: &DataMatrix, fallback: ThetaDefault, seed: u64) -> CliResult<ModelSpec> {
        let base = self.base(data.n(), fallback)?;
        let mut hyper = self.initial_hyper()?;
        if self.hyper_mode == HyperMode::Prephase {
            hyper = estimate_hyper(
                data,
                &base,
                hyper,
                self.tau2_prior,
                self.sigma02_prior,
                &self.prephase,
                seed,
            )?;
        }
        Ok(ModelSpec {
            base,
            hyper,
            eta_prior: BetaPrior::new(self.eta_a, self.eta_b)?,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DecisionConfig {
    pub zeta: f64,
    /// Control the non-marginal FDR, which flags at `zeta / 3`.
    pub nonmarginal: bool,
    pub kappa: f64,
    /// Also write the per-time posterior similarity matrices.
    pub similarity: bool,
    /// Write the per-draw trace of retained sweeps.
    pub trace: bool,
}

impl Default for DecisionConfig {
    fn default() -> Self {
        Self {
            zeta: lldpm_core::decide::DEFAULT_ZETA,
            nonmarginal: true,
            kappa: 1.0,
            similarity: false,
            trace: true,
        }
    }
}

impl DecisionConfig {
    pub fn validate(&self) -> CliResult<()> {
        if !(self.zeta > 0.0 && self.zeta < 1.0) {
            return Err(usage(format!("zeta must lie in (0, 1); got {}", self.zeta)));
        }
        if !(self.kappa > 0.0 && self.kappa.is_finite()) {
            return Err(usage(format!("kappa must be positive; got {}", self.kappa)));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IoConfig {
    pub data: Option<PathBuf>,
    /// Not echoed: where results go does not affect them.
    #[serde(skip_serializing)]
    pub out: Option<PathBuf>,
    /// Read `(unit, time, value)` triples instead of a wide matrix.
    pub long: bool,
    /// Checkpoint file written between blocks and resumed from when present.
    pub checkpoint: Option<PathBuf>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub model: ModelConfig,
    pub sampler: SamplerConfig,
    pub decision: DecisionConfig,
    pub io: IoConfig,
}

impl RunConfig {
    /// Load a TOML config, or a JSON config. A JSON run summary is accepted
    /// too: its `config` member is used, so a run can be repeated from it.
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let bad = |e: &dyn std::fmt::Display| usage(format!("{}: {e}", path.display()));
        if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json")) {
            let mut v: serde_json::Value = serde_json::from_str(&text).map_err(|e| bad(&e))?;
            if let Some(inner) = v.get_mut("config") {
                v = inner.take();
            }
            serde_json::from_value(v).map_err(|e| bad(&e))
        } else {
            toml::from_str(&text).map_err(|e| bad(&e))
        }
    }

    pub fn validate(&self) -> CliResult<()> {
        self.model.validate()?;
        self.sampler.validate()?;
        self.decision.validate()
    }

    /// One-line JSON echo embedded in output headers.
    pub fn echo(&self) -> String {
        serde_json::to_string(self).expect("config serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid() {
        let c = RunConfig::default();
        c.validate().unwrap();
        let h = c.model.initial_hyper().unwrap();
        assert!((h.tau2() - 3.0 / 14.0).abs() < 1e-15);
        assert!((h.sigma02() - 3.0 / 14.0).abs() < 1e-15);
        assert_eq!(c.sampler.iterations, 10_000);
        assert_eq!(c.sampler.burnin, 5_000);
    }

    #[test]
    fn toml_round_trip_and_partial_files() {
        let c: RunConfig = toml::from_str("seed = 3\n[model]\nexpected_clusters = 2.0\n").unwrap();
        assert_eq!(c.seed, 3);
        assert_eq!(c.model.expected_clusters, Some(2.0));
        assert_eq!(c.sampler, SamplerConfig::default());
        let back: RunConfig = toml::from_str(&toml::to_string(&c).unwrap()).unwrap();
        assert_eq!(back, c);
        assert!(toml::from_str::<RunConfig>("[model]\nthetta = 1.0\n").is_err());
    }

    #[test]
    fn theta_sources() {
        let mut m = ModelConfig::default();
        let b = m.base(20, ThetaDefault::Theta(1.0)).unwrap();
        assert_eq!(b.theta(), 1.0);
        let b = m.base(20, ThetaDefault::ExpectedClusters(2.0)).unwrap();
        assert!((b.theta() - 0.32).abs() < 0.005);
        m.theta = Some(0.5);
        m.expected_clusters = Some(2.0);
        assert!(m.validate().is_err());
    }

    #[test]
    fn rejects_bad_decision_settings() {
        let mut c = RunConfig::default();
        c.decision.zeta = 1.0;
        assert!(c.validate().is_err());
        c.decision.zeta = 0.05;
        c.sampler.burnin = c.sampler.iterations;
        assert!(c.validate().is_err());
    }
}
