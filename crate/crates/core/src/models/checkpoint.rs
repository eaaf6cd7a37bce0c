use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::ModelConfig;
use super::net::DianModel;
use crate::datamodel::Vocab;
use crate::error::{Error, Result};
use crate::numerics::{ParamStore, Tensor};

pub const CHECKPOINT_VERSION: u32 = 1;

/// Versioned model snapshot: configuration plus every parameter table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Checkpoint {
    pub version: u32,
    pub model_config: ModelConfig,
    pub vocab_sizes: Vocab,
    pub tables: BTreeMap<String, Tensor>,
}

impl Checkpoint {
    pub fn from_store(model: &DianModel, store: &ParamStore) -> Self {
        Checkpoint {
            version: CHECKPOINT_VERSION,
            model_config: model.config.clone(),
            vocab_sizes: model.vocab,
            tables: store.iter().map(|(n, e)| (n.to_string(), e.value.clone())).collect(),
        }
    }

    /// Rebuilds the model and its parameters, validating every table shape.
    pub fn into_model(self) -> Result<(DianModel, ParamStore)> {
        if self.version != CHECKPOINT_VERSION {
            return Err(Error::Checkpoint(format!(
                "unsupported version {} (expected {CHECKPOINT_VERSION})",
                self.version
            )));
        }
        let model = DianModel::new(self.model_config, self.vocab_sizes)?;
        let mut store = ParamStore::new();
        for (name, t) in self.tables {
            if !t.all_finite() {
                return Err(Error::Checkpoint(format!("table `{name}` has non-finite values")));
            }
            store.insert(name, t)?;
        }
        model.check_store(&store)?;
        Ok((model, store))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_vec(self)?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path)?;
        serde_json::from_slice(&bytes).map_err(|e| Error::Checkpoint(format!("{}: {e}", path.display())))
    }
}
