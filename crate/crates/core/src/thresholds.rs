//! Pre-evaluation of sensitivity and density over every dataset pair, and
//! the percentile cut-offs derived from them.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::agent::{FilterConfig, Thresholds};
use crate::dataset::{nearest_rank_percentile, OfflineDataset};
use crate::density::{elbo_density_batch, DensityModel};
use crate::dynamics::{sensitivity_batch, DynamicsModel};
use crate::error::{Error, Result};
use crate::nn::Matrix;
use crate::rng::{derive_seed, stream};

const CHUNK: usize = 1024;

/// Sensitivity and ELBO at every `(s, a)` of the dataset, in dataset order.
#[derive(Debug, Clone, PartialEq)]
pub struct PreEvaluation {
    pub sensitivity: Vec<f64>,
    pub density: Vec<f64>,
}

/// Seed used for dataset pair `index`.
pub fn pair_seed(seed: u64, index: usize) -> u64 {
    derive_seed(seed, &[stream::THRESHOLDS, index as u64])
}

pub fn pre_evaluate(
    dataset: &OfflineDataset,
    dynamics: &DynamicsModel,
    density: &DensityModel,
    filter: &FilterConfig,
    seed: u64,
) -> Result<PreEvaluation> {
    filter.validate()?;
    if dataset.is_empty() {
        return Err(Error::Empty("dataset"));
    }
    let mut sensitivity = Vec::with_capacity(dataset.len());
    let mut dens = Vec::with_capacity(dataset.len());
    let indices: Vec<usize> = (0..dataset.len()).collect();
    for chunk in indices.chunks(CHUNK) {
        let ts: Vec<_> = chunk.iter().map(|&i| &dataset.transitions[i]).collect();
        let states = Matrix::from_rows(&ts.iter().map(|t| t.s.as_slice()).collect::<Vec<_>>());
        let actions = Matrix::from_rows(&ts.iter().map(|t| t.a.as_slice()).collect::<Vec<_>>());
        let seeds: Vec<u64> = chunk.iter().map(|&i| pair_seed(seed, i)).collect();
        sensitivity.extend(sensitivity_batch(dynamics, &states, &actions, &filter.sensitivity, &seeds));
        dens.extend(elbo_density_batch(density, &states, &actions, filter.density_z_samples, &seeds));
    }
    if let Some(i) = sensitivity.iter().chain(&dens).position(|v| !v.is_finite()) {
        return Err(Error::NonFinite {
            context: "threshold pre-evaluation".into(),
            index: i % dataset.len(),
        });
    }
    Ok(PreEvaluation {
        sensitivity,
        density: dens,
    })
}

/// SHA-256 over the little-endian bit patterns of `values`.
pub fn array_hash(values: &[f64]) -> String {
    let mut h = Sha256::new();
    for v in values {
        h.update(v.to_bits().to_le_bytes());
    }
    crate::dataset::hex(&h.finalize())
}

/// Contents of a thresholds file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PercentileThresholds {
    pub sensitivity_threshold: f64,
    pub density_threshold: f64,
    pub beta_u: f64,
    pub beta_p: f64,
    /// Seed the arrays were evaluated with.
    pub seed: u64,
    pub count: usize,
    pub sensitivity_hash: String,
    pub density_hash: String,
}

impl PercentileThresholds {
    pub fn from_arrays(eval: &PreEvaluation, beta_u: f64, beta_p: f64, seed: u64) -> Result<Self> {
        Ok(PercentileThresholds {
            sensitivity_threshold: nearest_rank_percentile(&eval.sensitivity, beta_u)?,
            density_threshold: nearest_rank_percentile(&eval.density, beta_p)?,
            beta_u,
            beta_p,
            seed,
            count: eval.sensitivity.len(),
            sensitivity_hash: array_hash(&eval.sensitivity),
            density_hash: array_hash(&eval.density),
        })
    }

    /// Checks that the stored cut-offs and hashes belong to `eval`.
    pub fn verify(&self, eval: &PreEvaluation) -> Result<()> {
        let fresh = PercentileThresholds::from_arrays(eval, self.beta_u, self.beta_p, self.seed)?;
        if &fresh != self {
            return Err(Error::Config(
                "thresholds do not match the pre-evaluated sensitivity and density arrays".into(),
            ));
        }
        Ok(())
    }

    pub fn thresholds(&self) -> Thresholds {
        Thresholds {
            beta_u: self.beta_u,
            beta_p: self.beta_p,
            sensitivity: self.sensitivity_threshold,
            density: self.density_threshold,
        }
    }
}
