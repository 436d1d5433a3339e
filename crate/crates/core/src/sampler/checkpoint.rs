//! Chain checkpoints: a versioned JSON document holding everything needed to
//! continue a run bit-for-bit.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{ChainRunner, ChainState, ModelSpec, Retained, SamplerConfig};
use crate::error::{Error, Result};
use crate::model::DataMatrix;
use crate::rng::StreamRng;

pub const CHECKPOINT_FORMAT: &str = "lldpm-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Checkpoint {
    format: String,
    version: u32,
    pub(super) seed: u64,
    pub(super) completed: usize,
    pub(super) catalogue_fingerprint: u64,
    data_fingerprint: u64,
    spec: ModelSpec,
    config: SamplerConfig,
    pub(super) rng: StreamRng,
    pub(super) state: ChainState,
    pub(super) draws: Retained,
}

impl Checkpoint {
    pub(super) fn capture(r: &ChainRunner<'_>) -> Self {
        Self {
            format: CHECKPOINT_FORMAT.to_owned(),
            version: CHECKPOINT_VERSION,
            seed: r.seed,
            completed: r.completed,
            catalogue_fingerprint: r.kernel.catalogue().fingerprint(),
            data_fingerprint: data_fingerprint(r.kernel.data),
            spec: r.kernel.spec,
            config: r.kernel.cfg.clone(),
            rng: r.rng.clone(),
            state: r.state.clone(),
            draws: r.draws.clone(),
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Sweeps completed when the checkpoint was taken.
    pub fn completed(&self) -> usize {
        self.completed
    }

    pub(super) fn check_compatible(&self, data: &DataMatrix, spec: &ModelSpec, cfg: &SamplerConfig) -> Result<()> {
        if self.format != CHECKPOINT_FORMAT || self.version != CHECKPOINT_VERSION {
            return Err(Error::Checkpoint(format!(
                "unsupported header {} v{}",
                self.format, self.version
            )));
        }
        if self.data_fingerprint != data_fingerprint(data) {
            return Err(Error::Checkpoint("data differ from the checkpointed run".into()));
        }
        if &self.spec != spec || &self.config != cfg {
            return Err(Error::Checkpoint(
                "model or sampler settings differ from the checkpointed run".into(),
            ));
        }
        if self.state.horizon() != data.times() {
            return Err(Error::Checkpoint("state horizon does not match the data".into()));
        }
        Ok(())
    }

    /// Write atomically: a sibling temporary file is renamed over `path`.
    pub fn save(&self, path: &Path) -> Result<()> {
        let tmp = path.with_extension("tmp");
        {
            let mut f = fs::File::create(&tmp)?;
            serde_json::to_writer(&mut f, self)?;
            f.write_all(b"\n")?;
            f.sync_all()?;
        }
        fs::rename(&tmp, path)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path)?;
        let cp: Self = serde_json::from_slice(&bytes)?;
        if cp.format != CHECKPOINT_FORMAT {
            return Err(Error::Checkpoint(format!("not a checkpoint file: {}", path.display())));
        }
        Ok(cp)
    }
}

/// FNV-1a over the shape and the bit patterns of the values.
pub(crate) fn data_fingerprint(data: &DataMatrix) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    let mut eat = |x: u64| {
        for b in x.to_le_bytes() {
            h ^= u64::from(b);
            h = h.wrapping_mul(0x0100_0000_01b3);
        }
    };
    eat(data.n() as u64);
    eat(data.times() as u64);
    for t in 0..data.times() {
        for &v in data.column(t) {
            eat(v.to_bits());
        }
    }
    h
}
