use std::io::Write;
use std::path::Path;

use lldpm_core::rng::REPLICATE_SEED_STRIDE;
use lldpm_core::synth::{gen_ar1, gen_independent, Ar1Config, IndependentConfig, Scenario};
use lldpm_core::DataMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::emit;
use crate::error::{usage, CliError, CliResult};
use crate::io::{create_dir, write_json, write_wide, Header, FORMAT_VERSION};
use crate::{SimCommon, SimulateCommand};

pub const TRUTH_FORMAT: &str = "lldpm-truth";

/// Ground truth as written next to a simulated data set.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TruthFile {
    pub format: String,
    pub version: u32,
    pub scenario: Scenario,
}

impl TruthFile {
    pub fn new(scenario: Scenario) -> Self {
        Self {
            format: TRUTH_FORMAT.into(),
            version: FORMAT_VERSION,
            scenario,
        }
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        if text.trim().is_empty() {
            return Err(usage(format!("{}: empty truth file", path.display())));
        }
        let t: TruthFile =
            serde_json::from_str(&text).map_err(|e| usage(format!("{}: {e}", path.display())))?;
        if t.format != TRUTH_FORMAT || t.version != FORMAT_VERSION {
            return Err(usage(format!(
                "{}: expected {TRUTH_FORMAT} version {FORMAT_VERSION}, found {} version {}",
                path.display(),
                t.format,
                t.version
            )));
        }
        if !t.scenario.is_consistent() {
            return Err(usage(format!(
                "{}: changepoints do not match the partitions",
                path.display()
            )));
        }
        Ok(t)
    }
}

fn write_replicate(dir: &Path, data: &DataMatrix, scenario: Scenario) -> CliResult<()> {
    create_dir(dir)?;
    let echo = serde_json::json!({
        "n": scenario.n,
        "T": scenario.horizon,
        "generator": scenario.generator,
    });
    let header = Header::new(scenario.seed, echo.to_string());
    write_wide(&dir.join("data.csv"), &header, "data", data)?;
    write_json(&dir.join("truth.json"), &TruthFile::new(scenario))
}

fn batch<F>(common: &SimCommon, out: &mut dyn Write, generate: F) -> CliResult<()>
where
    F: Fn(u64) -> lldpm_core::Result<(DataMatrix, Scenario)> + Sync,
{
    if common.replicates == 0 {
        return Err(usage("replicates must be at least 1"));
    }
    let dirs: Vec<_> = (0..common.replicates)
        .map(|r| {
            if common.replicates == 1 {
                common.out.clone()
            } else {
                common.out.join(format!("rep{:03}", r + 1))
            }
        })
        .collect();
    dirs.par_iter().enumerate().try_for_each(|(r, dir)| {
        let seed = common.seed.wrapping_add(r as u64 * REPLICATE_SEED_STRIDE);
        let (data, scenario) = generate(seed)?;
        write_replicate(dir, &data, scenario)
    })?;
    for d in &dirs {
        emit(out, &format!("{}\n", d.display()))?;
    }
    Ok(())
}

pub fn run(cmd: SimulateCommand, out: &mut dyn Write) -> CliResult<()> {
    match cmd {
        SimulateCommand::Independent {
            common,
            n,
            horizon,
            blocks,
            min_block,
            mean_sd,
            noise_var,
        } => {
            let d = IndependentConfig::default();
            let cfg = IndependentConfig {
                blocks: blocks.unwrap_or(d.blocks),
                min_block: min_block.unwrap_or(d.min_block),
                mean_sd: mean_sd.unwrap_or(d.mean_sd),
                noise_var: noise_var.unwrap_or(d.noise_var),
            };
            batch(&common, out, |seed| gen_independent(n, horizon, seed, &cfg))
        }
        SimulateCommand::Ar1 {
            common,
            n,
            horizon,
            lambda,
            noise_sd,
        } => {
            let d = Ar1Config::default();
            let cfg = Ar1Config {
                lambda: lambda.unwrap_or(d.lambda),
                noise_sd: noise_sd.unwrap_or(d.noise_sd),
                ..d
            };
            batch(&common, out, |seed| gen_ar1(n, horizon, seed, &cfg))
        }
    }
}
