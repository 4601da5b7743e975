//! On-disk formats: JSON model files (weights + normalization + training
//! provenance) and JSON-lines transition datasets. `f64` values survive the
//! round trip bit-for-bit, so saved models reproduce exactly.

use super::{
    DenseNet, FreeParams, MLPSpec, Normalization, PicoNet, RelationMatrix, SurrogateError,
    TransitionSample,
};
use serde::{Deserialize, Serialize};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelMeta {
    /// Free-form stage tag: "teacher", "student", "pico", ...
    pub kind: String,
    pub seed: u64,
    pub dataset_len: usize,
    pub loss_history: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseModelFile {
    pub spec: MLPSpec,
    pub weights: Vec<f64>,
    pub norm: Normalization,
    pub meta: ModelMeta,
}

impl DenseModelFile {
    pub fn net(&self) -> DenseNet {
        DenseNet { spec: self.spec.clone(), weights: self.weights.clone() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PicoModelFile {
    pub spec: MLPSpec,
    pub relation: RelationMatrix,
    pub theta: FreeParams,
    pub norm: Normalization,
    pub meta: ModelMeta,
}

impl PicoModelFile {
    pub fn net(&self) -> PicoNet {
        PicoNet { spec: self.spec.clone(), relation: self.relation.clone(), theta: self.theta.clone() }
    }
}

pub fn save_dense_model(path: &Path, model: &DenseModelFile) -> Result<(), SurrogateError> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer(&mut w, model)?;
    w.flush()?;
    Ok(())
}

pub fn load_dense_model(path: &Path) -> Result<DenseModelFile, SurrogateError> {
    let model: DenseModelFile = serde_json::from_reader(BufReader::new(File::open(path)?))?;
    if model.weights.len() != model.spec.param_count() {
        return Err(SurrogateError::DimensionMismatch {
            expected: model.spec.param_count(),
            got: model.weights.len(),
        });
    }
    Ok(model)
}

pub fn save_pico_model(path: &Path, model: &PicoModelFile) -> Result<(), SurrogateError> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer(&mut w, model)?;
    w.flush()?;
    Ok(())
}

pub fn load_pico_model(path: &Path) -> Result<PicoModelFile, SurrogateError> {
    let model: PicoModelFile = serde_json::from_reader(BufReader::new(File::open(path)?))?;
    if model.relation.assignments.len() != model.spec.param_count() {
        return Err(SurrogateError::DimensionMismatch {
            expected: model.spec.param_count(),
            got: model.relation.assignments.len(),
        });
    }
    model.relation.validate()?;
    if model.theta.theta.len() != model.relation.n_free {
        return Err(SurrogateError::DimensionMismatch {
            expected: model.relation.n_free,
            got: model.theta.theta.len(),
        });
    }
    Ok(model)
}

/// Write transitions as JSON lines: one sample per line, appendable and
/// streamable.
pub fn write_dataset(path: &Path, samples: &[TransitionSample]) -> Result<(), SurrogateError> {
    let mut w = BufWriter::new(File::create(path)?);
    for s in samples {
        serde_json::to_writer(&mut w, s)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_dataset(path: &Path) -> Result<Vec<TransitionSample>, SurrogateError> {
    let mut out = Vec::new();
    for line in BufReader::new(File::open(path)?).lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line)?);
    }
    Ok(out)
}
