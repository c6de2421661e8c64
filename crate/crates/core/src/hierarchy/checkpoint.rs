use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::ModelConfig;
use super::model::HiGFlowModel;
use crate::error::{Error, Result};
use crate::numerics::Tensor;

const FORMAT: &str = "higflow-checkpoint";
const VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct NamedTensor {
    name: String,
    shape: Vec<usize>,
    values: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct CheckpointFile {
    format: String,
    version: u32,
    config: ModelConfig,
    params: Vec<NamedTensor>,
}

/// Parameters and architecture read back from disk.
#[derive(Clone, Debug)]
pub struct Checkpoint {
    pub config: ModelConfig,
    pub params: Vec<(String, Tensor)>,
}

impl Checkpoint {
    pub fn from_model(model: &HiGFlowModel) -> Self {
        Checkpoint {
            config: model.config().clone(),
            params: model
                .params()
                .iter()
                .map(|(_, name, t)| (name.to_string(), t.clone()))
                .collect(),
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = CheckpointFile {
            format: FORMAT.into(),
            version: VERSION,
            config: self.config.clone(),
            params: self
                .params
                .iter()
                .map(|(name, t)| NamedTensor {
                    name: name.clone(),
                    shape: t.shape().to_vec(),
                    values: t.data().to_vec(),
                })
                .collect(),
        };
        let text = serde_json::to_string(&file).map_err(|e| Error::Checkpoint(e.to_string()))?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let file: CheckpointFile =
            serde_json::from_str(&text).map_err(|e| Error::Checkpoint(format!("{}: {e}", path.display())))?;
        if file.format != FORMAT || file.version != VERSION {
            return Err(Error::Checkpoint(format!(
                "unsupported checkpoint {} v{} (expected {FORMAT} v{VERSION})",
                file.format, file.version
            )));
        }
        let params = file
            .params
            .into_iter()
            .map(|p| {
                let t = Tensor::new(p.shape, p.values).map_err(|e| Error::Checkpoint(format!("{}: {e}", p.name)))?;
                Ok((p.name, t))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Checkpoint {
            config: file.config,
            params,
        })
    }

    /// Loads the stored weights into `model`, whose shapes must agree.
    pub fn restore_into(&self, model: &mut HiGFlowModel) -> Result<()> {
        model.load_params(&self.params)
    }
}
