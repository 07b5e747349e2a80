use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Module, NamedTensors, NnError};
use crate::mathcore::Array2;

/// Free-form description stored alongside the tensors.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ModelMeta {
    pub kind: String,
    pub sizes: BTreeMap<String, usize>,
    pub config_hash: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TensorRecord {
    pub shape: [usize; 2],
    pub values: Vec<f64>,
}

/// On-disk model document: metadata plus `{name -> {shape, values}}`.
///
/// Floats are written in shortest round-trip form, so a reload is bit-exact.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub metadata: ModelMeta,
    pub tensors: BTreeMap<String, TensorRecord>,
}

impl ModelFile {
    pub fn new(metadata: ModelMeta, tensors: &NamedTensors) -> Self {
        let tensors = tensors
            .iter()
            .map(|(name, t)| {
                (
                    name.clone(),
                    TensorRecord {
                        shape: [t.rows(), t.cols()],
                        values: t.data().to_vec(),
                    },
                )
            })
            .collect();
        Self { metadata, tensors }
    }

    pub fn named(&self) -> Result<NamedTensors, NnError> {
        self.tensors
            .iter()
            .map(|(name, rec)| {
                let t = Array2::new(rec.shape[0], rec.shape[1], rec.values.clone()).map_err(|_| {
                    NnError::TensorShape {
                        name: name.clone(),
                        expected: (rec.shape[0], rec.shape[1]),
                        found: (rec.values.len(), 1),
                    }
                })?;
                Ok((name.clone(), t))
            })
            .collect()
    }

    pub fn to_string_pretty(&self) -> Result<String, NnError> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn write(&self, path: &Path) -> Result<(), NnError> {
        let mut text = self.to_string_pretty()?;
        text.push('\n');
        fs::write(path, text)?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self, NnError> {
        let text = fs::read_to_string(path)?;
        Ok(serde_json::from_str(&text)?)
    }
}

pub fn save_params(path: &Path, metadata: ModelMeta, module: &impl Module) -> Result<(), NnError> {
    ModelFile::new(metadata, &module.to_named()).write(path)
}

pub fn load_params(path: &Path) -> Result<ModelFile, NnError> {
    ModelFile::read(path)
}
