use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::matrix::Matrix;
use crate::error::{shape, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(usize);

#[derive(Debug, Clone)]
struct Param {
    name: String,
    value: Matrix,
    grad: Matrix,
}

/// Named trainable matrices and their gradient accumulators.
#[derive(Debug, Clone, Default)]
pub struct ParamStore {
    params: Vec<Param>,
}

pub const CHECKPOINT_FORMAT: &str = "dqrnn-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SavedParam {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    /// Row-major values.
    pub data: Vec<f64>,
}

/// JSON checkpoint: a version tag, free-form metadata and the parameter
/// matrices in insertion order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub meta: BTreeMap<String, serde_json::Value>,
    pub params: Vec<SavedParam>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, value: Matrix) -> ParamId {
        let grad = Matrix::zeros(value.rows(), value.cols());
        self.params.push(Param { name: name.into(), value, grad });
        ParamId(self.params.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.params.len()).map(ParamId)
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.params[id.0].name
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.params.iter().position(|p| p.name == name).map(ParamId)
    }

    pub fn value(&self, id: ParamId) -> &Matrix {
        &self.params[id.0].value
    }

    pub fn value_mut(&mut self, id: ParamId) -> &mut Matrix {
        &mut self.params[id.0].value
    }

    pub fn grad(&self, id: ParamId) -> &Matrix {
        &self.params[id.0].grad
    }

    pub(crate) fn grad_and_value_mut(&mut self, id: ParamId) -> (&Matrix, &mut Matrix) {
        let p = &mut self.params[id.0];
        (&p.grad, &mut p.value)
    }

    pub(crate) fn accumulate(&mut self, id: ParamId, g: &Matrix) {
        self.params[id.0].grad.add_assign(g);
    }

    pub fn zero_grads(&mut self) {
        for p in &mut self.params {
            p.grad.fill(0.0);
        }
    }

    pub fn num_scalars(&self) -> usize {
        self.params.iter().map(|p| p.value.len()).sum()
    }

    pub fn grad_norm(&self) -> f64 {
        self.params.iter().map(|p| p.grad.norm_squared()).sum::<f64>().sqrt()
    }

    /// Copies values from `other`, which must have the same layout.
    pub fn copy_values_from(&mut self, other: &ParamStore) -> Result<()> {
        if other.params.len() != self.params.len() {
            return shape("parameter count differs");
        }
        for (a, b) in self.params.iter_mut().zip(&other.params) {
            if a.name != b.name || a.value.shape() != b.value.shape() {
                return shape(format!("parameter {} does not match {}", a.name, b.name));
            }
            a.value = b.value.clone();
        }
        Ok(())
    }

    pub fn to_checkpoint(&self, meta: BTreeMap<String, serde_json::Value>) -> Checkpoint {
        Checkpoint {
            format: CHECKPOINT_FORMAT.into(),
            version: CHECKPOINT_VERSION,
            meta,
            params: self
                .params
                .iter()
                .map(|p| SavedParam {
                    name: p.name.clone(),
                    rows: p.value.rows(),
                    cols: p.value.cols(),
                    data: p.value.as_slice().to_vec(),
                })
                .collect(),
        }
    }

    /// Loads values by name into an already-built store of the same layout.
    pub fn load_checkpoint(&mut self, ck: &Checkpoint) -> Result<()> {
        ck.check_version()?;
        for p in &mut self.params {
            let saved = ck
                .params
                .iter()
                .find(|s| s.name == p.name)
                .ok_or_else(|| Error::Malformed(format!("checkpoint lacks parameter {}", p.name)))?;
            if (saved.rows, saved.cols) != p.value.shape() {
                return shape(format!(
                    "parameter {} is {}x{} in the checkpoint but {:?} in the model",
                    p.name,
                    saved.rows,
                    saved.cols,
                    p.value.shape()
                ));
            }
            p.value = Matrix::from_vec(saved.rows, saved.cols, saved.data.clone())?;
        }
        Ok(())
    }
}

impl Checkpoint {
    pub fn check_version(&self) -> Result<()> {
        if self.format != CHECKPOINT_FORMAT {
            return Err(Error::Malformed(format!("not a checkpoint: format {:?}", self.format)));
        }
        if self.version != CHECKPOINT_VERSION {
            return Err(Error::SchemaVersion {
                format: CHECKPOINT_FORMAT.into(),
                expected: CHECKPOINT_VERSION,
                found: self.version,
            });
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string(self).map_err(|e| Error::Malformed(e.to_string()))?;
        std::fs::write(path, text)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Checkpoint> {
        let text = std::fs::read_to_string(path)?;
        let ck: Checkpoint = serde_json::from_str(&text).map_err(|e| Error::Malformed(e.to_string()))?;
        ck.check_version()?;
        Ok(ck)
    }
}
