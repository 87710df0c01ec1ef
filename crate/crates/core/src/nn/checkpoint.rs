use super::{LayerSpec, LayeredModel, Shape};
use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::path::Path;

const FORMAT: &str = "crowdguard-model";
const VERSION: u32 = 1;

/// On-disk model container: architecture descriptor plus one flat parameter
/// array per layer. JSON numbers are written in shortest round-trip form, so
/// parameters survive a save/load cycle bit for bit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelCheckpoint {
    pub format: String,
    pub version: u32,
    pub input_shape: Shape,
    pub layers: Vec<CheckpointLayer>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckpointLayer {
    pub spec: LayerSpec,
    pub params: Vec<f64>,
}

impl From<&LayeredModel> for ModelCheckpoint {
    fn from(model: &LayeredModel) -> Self {
        Self {
            format: FORMAT.into(),
            version: VERSION,
            input_shape: model.input_shape(),
            layers: model.layers().iter().map(|l| CheckpointLayer { spec: l.spec, params: l.params.clone() }).collect(),
        }
    }
}

impl TryFrom<ModelCheckpoint> for LayeredModel {
    type Error = Error;

    fn try_from(ckpt: ModelCheckpoint) -> Result<Self> {
        if ckpt.format != FORMAT || ckpt.version != VERSION {
            return Err(Error::InvalidModel(format!("unsupported checkpoint {} v{}", ckpt.format, ckpt.version)));
        }
        let specs: Vec<LayerSpec> = ckpt.layers.iter().map(|l| l.spec).collect();
        let mut model = LayeredModel::zeros(ckpt.input_shape, &specs)?;
        for (i, (layer, saved)) in model.layers_mut().iter_mut().zip(ckpt.layers).enumerate() {
            if layer.params.len() != saved.params.len() {
                return Err(Error::InvalidModel(format!(
                    "layer {i}: expected {} parameters, found {}",
                    layer.params.len(),
                    saved.params.len()
                )));
            }
            layer.params = saved.params;
        }
        Ok(model)
    }
}

pub fn save_model(model: &LayeredModel, path: &Path) -> Result<()> {
    let text = serde_json::to_string(&ModelCheckpoint::from(model))?;
    std::fs::write(path, text)?;
    Ok(())
}

pub fn load_model(path: &Path) -> Result<LayeredModel> {
    let ckpt: ModelCheckpoint = serde_json::from_str(&std::fs::read_to_string(path)?)?;
    LayeredModel::try_from(ckpt)
}
