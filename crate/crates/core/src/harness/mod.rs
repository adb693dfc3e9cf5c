//! Run configuration, checkpoints, CSV reports and experiment recipes
//! shared by the command-line tool and the acceptance suite.

mod checkpoint;
mod config;
mod experiment;

use std::fs::File;
use std::path::Path;

use serde::Serialize;

pub use checkpoint::{config_hash, AgentSnapshot, Checkpoint, ComponentKind, NetworkRecord, Payload, CHECKPOINT_MAGIC};
pub use config::{DataConfig, RunConfig, SeedConfig, ThresholdConfig, CONFIG_FILE};
pub use experiment::{
    ablation_grid, cost_limit_sweep, fit_models, median, obtain_dataset, pretrain_agent, run_agent, AblationRow,
    FittedModels, LearnedModels, Pretrained, RunOutcome, SweepRow, Variant,
};

use crate::error::{Error, Result};

/// Writes `rows` as CSV with a header row; `None` fields become empty cells.
pub fn write_csv<T: Serialize>(path: impl AsRef<Path>, rows: &[T]) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = csv::Writer::from_writer(file);
    for row in rows {
        w.serialize(row)?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

pub fn to_json<T: Serialize>(value: &T) -> Result<String> {
    Ok(serde_json::to_string_pretty(value)?)
}

/// Writes `value` as pretty JSON followed by a newline.
pub fn write_json<T: Serialize>(path: impl AsRef<Path>, value: &T) -> Result<()> {
    let path = path.as_ref();
    let mut text = to_json(value)?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}
