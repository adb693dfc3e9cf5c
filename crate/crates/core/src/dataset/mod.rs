//! Offline transition datasets: the record schema, the `MOREDS1` file
//! format, normalization statistics, batch sampling and nearest-rank
//! percentiles.

mod io;
mod stats;

use std::collections::BTreeMap;

use rand::Rng as _;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub use io::{load_dataset, save_dataset, DATASET_MAGIC};
pub(crate) use stats::mean_std_rows;
pub use stats::{compute_normalization, nearest_rank_percentile, NormalizationStats, STD_FLOOR};

use crate::error::{Error, Result};
use crate::rng::Rng;

/// One logged step `(s, a, r, c, c̃, s', done)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub s: Vec<f64>,
    pub a: Vec<f64>,
    pub r: f64,
    pub cost_vector: Vec<f64>,
    pub combined_cost: f64,
    pub s_next: Vec<f64>,
    /// Time-limit truncation flag, never an absorbing state.
    pub done: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OfflineDataset {
    pub transitions: Vec<Transition>,
    pub state_dim: usize,
    pub action_dim: usize,
    pub cost_dim: usize,
    pub normalization: NormalizationStats,
    pub metadata: BTreeMap<String, String>,
}

impl OfflineDataset {
    pub fn new(
        transitions: Vec<Transition>,
        state_dim: usize,
        action_dim: usize,
        cost_dim: usize,
        metadata: BTreeMap<String, String>,
    ) -> Result<Self> {
        if transitions.is_empty() {
            return Err(Error::Empty("dataset"));
        }
        for t in &transitions {
            check_len("s", state_dim, t.s.len())?;
            check_len("s_next", state_dim, t.s_next.len())?;
            check_len("a", action_dim, t.a.len())?;
            check_len("cost_vector", cost_dim, t.cost_vector.len())?;
        }
        let normalization = compute_normalization(&transitions)?;
        Ok(OfflineDataset {
            transitions,
            state_dim,
            action_dim,
            cost_dim,
            normalization,
            metadata,
        })
    }

    pub fn len(&self) -> usize {
        self.transitions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.transitions.is_empty()
    }

    /// Undiscounted return of every complete episode (segments ending in `done`).
    pub fn episode_returns(&self) -> Vec<f64> {
        let mut out = Vec::new();
        let mut acc = 0.0;
        for t in &self.transitions {
            acc += t.r;
            if t.done {
                out.push(acc);
                acc = 0.0;
            }
        }
        out
    }

    pub fn mean_episode_return(&self) -> f64 {
        let r = self.episode_returns();
        if r.is_empty() {
            return f64::NAN;
        }
        r.iter().sum::<f64>() / r.len() as f64
    }

    /// Discounted combined cost of every complete episode.
    pub fn episode_discounted_costs(&self, gamma: f64) -> Vec<f64> {
        let mut out = Vec::new();
        let (mut acc, mut disc) = (0.0, 1.0);
        for t in &self.transitions {
            acc += disc * t.combined_cost;
            disc *= gamma;
            if t.done {
                out.push(acc);
                acc = 0.0;
                disc = 1.0;
            }
        }
        out
    }

    /// The first `n` transitions as a new dataset, metadata preserved.
    pub fn head(&self, n: usize) -> Result<OfflineDataset> {
        OfflineDataset::new(
            self.transitions[..n.min(self.len())].to_vec(),
            self.state_dim,
            self.action_dim,
            self.cost_dim,
            self.metadata.clone(),
        )
    }

    /// SHA-256 over the serialized records and header, hex encoded.
    pub fn content_hash(&self) -> String {
        let mut hasher = Sha256::new();
        hasher.update(io::header_line(self).as_bytes());
        for t in &self.transitions {
            hasher.update(io::record_line(t).as_bytes());
        }
        hex(&hasher.finalize())
    }
}

fn check_len(field: &'static str, expected: usize, found: usize) -> Result<()> {
    if expected != found {
        return Err(Error::dim(format!("transition field `{field}`"), expected, found));
    }
    Ok(())
}

pub(crate) fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// Uniform indices with replacement.
pub fn sample_indices(len: usize, batch_size: usize, rng: &mut Rng) -> Vec<usize> {
    (0..batch_size).map(|_| rng.random_range(0..len)).collect()
}

/// Uniformly samples `batch_size` transitions with replacement.
pub fn sample_batch<'a>(
    dataset: &'a OfflineDataset,
    batch_size: usize,
    rng: &mut Rng,
) -> Vec<&'a Transition> {
    sample_indices(dataset.len(), batch_size, rng)
        .into_iter()
        .map(|i| &dataset.transitions[i])
        .collect()
}
