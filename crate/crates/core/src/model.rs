//! On-disk model format.
//!
//! A model file is JSON with a format tag and version, the forest (trees,
//! bootstrap multiplicities, parameters, seed) and the training table. The
//! training rows are needed to compute any weight row after reloading.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::forest::Forest;

pub const FORMAT: &str = "rfprox-model";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Model {
    pub format: String,
    pub version: u32,
    pub target_name: String,
    pub forest: Forest,
    pub training: Dataset,
}

impl Model {
    pub fn new(forest: Forest, training: Dataset, target_name: impl Into<String>) -> Result<Self> {
        forest.check_training(&training)?;
        Ok(Model {
            format: FORMAT.to_string(),
            version: VERSION,
            target_name: target_name.into(),
            forest,
            training,
        })
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let model: Model = serde_json::from_str(text)?;
        if model.format != FORMAT {
            return Err(Error::Model(format!("unexpected format tag `{}`", model.format)));
        }
        if model.version != VERSION {
            return Err(Error::Model(format!("unsupported version {}", model.version)));
        }
        model.forest.validate()?;
        model.forest.check_training(&model.training)?;
        Ok(model)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}
