use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::Model;
use crate::error::{Error, Result};
use crate::real::Real;

pub const CHECKPOINT_FORMAT: &str = "fanin-xmc-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
#[serde(bound = "T: Real")]
struct Envelope<T> {
    format: String,
    version: u32,
    precision: String,
    model: Model<T>,
}

/// Writes the model as versioned JSON.
pub fn save_checkpoint<T: Real>(model: &Model<T>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::file(path, e))?;
    let mut out = BufWriter::new(file);
    let env = Envelope {
        format: CHECKPOINT_FORMAT.to_string(),
        version: CHECKPOINT_VERSION,
        precision: T::NAME.to_string(),
        model: model.clone(),
    };
    serde_json::to_writer(&mut out, &env)?;
    out.flush().map_err(|e| Error::file(path, e))?;
    Ok(())
}

/// A checkpoint in the precision it was saved with.
#[derive(Debug, Clone, PartialEq)]
pub enum AnyModel {
    F32(Model<f32>),
    F64(Model<f64>),
}

/// Reads a checkpoint, converting from the stored precision if needed.
pub fn load_checkpoint<T: Real>(path: impl AsRef<Path>) -> Result<Model<T>> {
    Ok(match load_checkpoint_any(path)? {
        AnyModel::F32(m) => m.cast(),
        AnyModel::F64(m) => m.cast(),
    })
}

/// Reads a checkpoint without converting its precision.
pub fn load_checkpoint_any(path: impl AsRef<Path>) -> Result<AnyModel> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::file(path, e))?;
    let value: serde_json::Value = serde_json::from_reader(BufReader::new(file))?;
    let bad = |msg: String| Error::Value { line: 0, msg };
    let format = value.get("format").and_then(|v| v.as_str()).unwrap_or_default();
    if format != CHECKPOINT_FORMAT {
        return Err(bad(format!("{}: not a checkpoint (format {format:?})", path.display())));
    }
    let version = value.get("version").and_then(|v| v.as_u64()).unwrap_or(0);
    if version != CHECKPOINT_VERSION as u64 {
        return Err(bad(format!("{}: unsupported checkpoint version {version}", path.display())));
    }
    let model = match value.get("precision").and_then(|v| v.as_str()) {
        Some("f32") => AnyModel::F32(serde_json::from_value::<Envelope<f32>>(value)?.model),
        Some("f64") => AnyModel::F64(serde_json::from_value::<Envelope<f64>>(value)?.model),
        other => return Err(bad(format!("{}: unknown precision {other:?}", path.display()))),
    };
    match &model {
        AnyModel::F32(m) => m.head.validate()?,
        AnyModel::F64(m) => m.head.validate()?,
    }
    Ok(model)
}
