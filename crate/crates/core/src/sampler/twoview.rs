//! Two views of the same units analysed as a chain of length two.
//!
//! The views share a latent parent partition; each view keeps it with
//! probability `1 - eta_tilde`. Marginalising the parent gives the two-time
//! state process with `eta = 1 - (1 - eta_tilde)^2`, so the chain output for
//! `T = 2` carries the view-level change probability directly. Parent draws
//! are added afterwards from their exact conditional.

use rand::Rng;

use super::{run_chain, ChainOutput, ModelSpec, PartId, SamplerConfig};
use crate::error::{Error, Result};
use crate::model::DataMatrix;
use crate::partition::{sample_partition, Partition};
use crate::psm::eta_tilde_from_eta;
use crate::rng::{substream, STREAM_PARENT};

/// Rejection attempts when drawing a parent distinct from both views.
const MAX_REJECTIONS: usize = 100_000;

#[derive(Clone, Debug)]
pub struct TwoViewOutput {
    pub chain: ChainOutput,
    /// Parent partition per retained draw, as ids in `chain.table()`.
    pub parents: Vec<PartId>,
    /// `eta_tilde = 1 - sqrt(1 - eta)` per retained draw.
    pub eta_tilde: Vec<f64>,
}

impl TwoViewOutput {
    /// Posterior probability that the views' partitions differ.
    pub fn change_probability(&self) -> f64 {
        let d = self.chain.num_draws();
        (0..d).filter(|&k| self.chain.gamma(k, 1)).count() as f64 / d as f64
    }

    pub fn eta_mean(&self) -> f64 {
        let d = self.chain.num_draws();
        (0..d).map(|k| self.chain.eta(k, 1)).sum::<f64>() / d as f64
    }

    pub fn eta_tilde_mean(&self) -> f64 {
        self.eta_tilde.iter().sum::<f64>() / self.eta_tilde.len() as f64
    }

    pub fn parent(&self, draw: usize) -> &Partition {
        self.chain.table().get(self.parents[draw])
    }
}

pub fn run_two_view(
    y1: &[f64],
    y2: &[f64],
    spec: &ModelSpec,
    cfg: &SamplerConfig,
    seed: u64,
) -> Result<TwoViewOutput> {
    if y1.len() != y2.len() {
        return Err(Error::SizeMismatch {
            what: "units in view 1 vs view 2",
            left: y1.len(),
            right: y2.len(),
        });
    }
    let data = DataMatrix::from_columns(&[y1.to_vec(), y2.to_vec()])?;
    let mut chain = run_chain(&data, spec, cfg, seed)?;
    let mut rng = substream(seed, STREAM_PARENT);
    let mut parents = Vec::with_capacity(chain.num_draws());
    let mut eta_tilde = Vec::with_capacity(chain.num_draws());
    for d in 0..chain.num_draws() {
        let et = eta_tilde_from_eta(chain.eta(d, 1))?;
        let (a, b) = (chain.partition_id(d, 0), chain.partition_id(d, 1));
        let pa = chain.table().ln_prior(a).exp();
        let pb = chain.table().ln_prior(b).exp();
        // weights of the parent's conditional, divided by a common factor
        let (w_a, w_b, w_other) = if a == b {
            let keep = (1.0 - et) + et * pa;
            (keep * keep, 0.0, et * et * (1.0 - pa).max(0.0))
        } else {
            let w_a = (1.0 - et) + et * pa;
            let w_b = (1.0 - et) + et * pb;
            (w_a, w_b, et * (1.0 - pa - pb).max(0.0))
        };
        let u = rng.random::<f64>() * (w_a + w_b + w_other);
        let parent = if u < w_a {
            a
        } else if u < w_a + w_b {
            b
        } else {
            let p = draw_excluding(&chain, a, b, spec, &mut rng)?;
            chain.intern(p, &spec.base)
        };
        parents.push(parent);
        eta_tilde.push(et);
    }
    Ok(TwoViewOutput {
        chain,
        parents,
        eta_tilde,
    })
}

fn draw_excluding<R: Rng + ?Sized>(
    chain: &ChainOutput,
    a: PartId,
    b: PartId,
    spec: &ModelSpec,
    rng: &mut R,
) -> Result<Partition> {
    let (pa, pb) = (chain.table().get(a), chain.table().get(b));
    for _ in 0..MAX_REJECTIONS {
        let p = sample_partition(chain.n(), &spec.base, rng);
        if &p != pa && &p != pb {
            return Ok(p);
        }
    }
    Err(Error::InvalidParameter(
        "base law concentrates on the view partitions; cannot draw a distinct parent".into(),
    ))
}
