//! The three networks (sensitivity estimator, sensitivity classifier,
//! spectral reconstruction), their training loop and test-time helpers.

mod classifier;
mod ensemble;
mod estimator;
pub mod gradcheck;
mod layers;
mod reconstruction;
mod select;
mod train;

pub use classifier::{ClassifierConfig, ClassifierNet};
pub use ensemble::{dihedral, dihedral_inverse, self_ensemble_predict, DIHEDRAL_COUNT};
pub use estimator::{estimator_loss, EstimatorConfig, EstimatorNet, EstimatorSample};
pub use layers::{Conv, Trunk, TrunkConfig, POOL_AFTER, TRUNK_CONVS};
pub use reconstruction::{ReconMode, ReconSample, ReconstructionConfig, ReconstructionNet};
pub use select::specialized_select;
pub use train::{fit, split_by_group, EpochLog, TrainOutcome, TrainingConfig};

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use crate::autodiff::{read_checkpoint, write_checkpoint, LoadedCheckpoint, ParamSet, Real};
use crate::error::{Error, Result};

pub(crate) fn save_checkpoint<T: Real>(
    path: &Path,
    kind: &str,
    config: serde_json::Value,
    params: &ParamSet<T>,
) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    write_checkpoint(&mut out, kind, config, params)?;
    out.flush()?;
    Ok(())
}

pub(crate) fn open_checkpoint(path: &Path, kind: &str) -> Result<LoadedCheckpoint> {
    let ck = read_checkpoint(BufReader::new(File::open(path)?))?;
    if ck.descriptor.kind != kind {
        return Err(Error::Configuration(format!(
            "{} holds a '{}' checkpoint, expected '{kind}'",
            path.display(),
            ck.descriptor.kind
        )));
    }
    Ok(ck)
}

/// Kind tag stored in a checkpoint, without loading its parameters.
pub fn checkpoint_kind(path: &Path) -> Result<String> {
    Ok(read_checkpoint(BufReader::new(File::open(path)?))?
        .descriptor
        .kind)
}
