//! Optimizers and training loops. Everything is seeded: a (config, seed,
//! data) triple reproduces parameters bit for bit, any number of steps in.

mod dyck_loop;
mod lm_loop;
mod optimizer;

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::Result;

pub use dyck_loop::{train_dyck, TrainDyckResult};
pub use lm_loop::{mean_eval_loss, train_lm, TrainLmResult};
pub use optimizer::{nt_asgd_trigger, Adam, AdamConfig, SgdAsgd, SgdAsgdConfig};

/// One row of the per-epoch training log.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub train_loss: f64,
    pub valid_loss: f64,
    pub lr: f64,
    pub asgd_triggered: bool,
    pub wallclock_s: f64,
}

/// Writes the epoch log as CSV
/// (`epoch,train_loss,valid_loss,lr,asgd_triggered,wallclock_s`).
pub fn write_epoch_log(path: &Path, log: &[EpochLog]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for row in log {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

impl From<csv::Error> for crate::Error {
    fn from(e: csv::Error) -> Self {
        crate::Error::CsvParse {
            file: String::new(),
            line: e.position().map(|p| p.line()).unwrap_or(0),
            message: e.to_string(),
        }
    }
}
