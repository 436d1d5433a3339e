pub mod eri;
pub mod fit;
pub mod metrics;
pub mod preprocess;
pub mod simulate;
pub mod twoview;

use std::io::Write;

use crate::config::RunConfig;
use crate::error::{CliError, CliResult};
use crate::{ModelArgs, SamplerArgs};

pub(crate) fn emit(out: &mut dyn Write, text: &str) -> CliResult<()> {
    out.write_all(text.as_bytes())
        .map_err(|e| CliError::Runtime(format!("writing to stdout: {e}")))
}

/// Flags override whatever the config file or defaults set.
pub(crate) fn apply_model(cfg: &mut RunConfig, a: &ModelArgs) {
    let m = &mut cfg.model;
    if let Some(t) = a.theta {
        m.theta = Some(t);
        m.expected_clusters = None;
    }
    if let Some(e) = a.expected_clusters {
        m.expected_clusters = Some(e);
        m.theta = None;
    }
    set(&mut m.sigma, a.sigma);
    set(&mut m.eta_a, a.eta_a);
    set(&mut m.eta_b, a.eta_b);
    set(&mut m.mu0, a.mu0);
    set(&mut m.hyper_mode, a.hyper);
    if a.tau2.is_some() {
        m.tau2 = a.tau2;
    }
    if a.sigma02.is_some() {
        m.sigma02 = a.sigma02;
    }
}

pub(crate) fn apply_sampler(cfg: &mut RunConfig, a: &SamplerArgs) {
    let s = &mut cfg.sampler;
    set(&mut s.iterations, a.iterations);
    set(&mut s.burnin, a.burnin);
    set(&mut s.thin, a.thin);
    set(&mut s.catalogue.size, a.catalogue_size);
    set(&mut s.catalogue.burnin, a.catalogue_burnin);
    set(&mut s.marginal_samples, a.marginal_samples);
    set(&mut s.sir_candidates, a.sir_candidates);
    set(&mut s.sir_weights, a.sir_weights);
    set(&mut s.sweep_order, a.sweep_order);
    if a.block_iterations.is_some() {
        s.block_iterations = a.block_iterations;
    }
}

pub(crate) fn load_config(path: Option<&std::path::Path>) -> CliResult<RunConfig> {
    match path {
        Some(p) => RunConfig::load(p),
        None => Ok(RunConfig::default()),
    }
}

fn set<T: Copy>(slot: &mut T, v: Option<T>) {
    if let Some(v) = v {
        *slot = v;
    }
}

/// Mean and sample standard deviation; the deviation is 0 for one value.
pub(crate) fn mean_sd(xs: &[f64]) -> (f64, f64) {
    let m = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / m;
    let sd = if xs.len() > 1 {
        (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (m - 1.0)).sqrt()
    } else {
        0.0
    };
    (mean, sd)
}
