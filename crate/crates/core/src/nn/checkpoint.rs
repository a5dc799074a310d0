//! Model checkpoints: a versioned JSON container with the preset name,
//! class count, input shape, and flat parameter arrays. Serialization is
//! deterministic, so save -> load -> save reproduces the file byte for
//! byte.

use super::Model;
use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::path::Path;

const CHECKPOINT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct CheckpointFile {
    version: u32,
    preset: String,
    num_classes: usize,
    input_shape: Vec<usize>,
    params: Vec<Vec<f64>>,
}

pub fn save_checkpoint(model: &Model, path: &Path) -> Result<()> {
    let file = CheckpointFile {
        version: CHECKPOINT_VERSION,
        preset: model.preset_name().to_string(),
        num_classes: model.num_classes(),
        input_shape: model.input_shape().to_vec(),
        params: model.parameters().iter().map(|p| p.data().to_vec()).collect(),
    };
    let json = serde_json::to_string(&file)
        .map_err(|e| Error::Format(format!("checkpoint encode: {e}")))?;
    std::fs::write(path, json)?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<Model> {
    let bytes = std::fs::read(path)?;
    let file: CheckpointFile = serde_json::from_slice(&bytes)
        .map_err(|e| Error::Format(format!("checkpoint {}: {e}", path.display())))?;
    if file.version != CHECKPOINT_VERSION {
        return Err(Error::Format(format!(
            "checkpoint version {} unsupported (expected {CHECKPOINT_VERSION})",
            file.version
        )));
    }
    let mut model = Model::preset(&file.preset, &file.input_shape, file.num_classes, 0)?;
    let expected: Vec<usize> = model.parameters().iter().map(|p| p.len()).collect();
    if expected.len() != file.params.len()
        || expected
            .iter()
            .zip(&file.params)
            .any(|(want, got)| *want != got.len())
    {
        return Err(Error::Format(format!(
            "checkpoint {} parameter layout does not match preset '{}'",
            path.display(),
            file.preset
        )));
    }
    model.replace_parameters(file.params)?;
    Ok(model)
}
