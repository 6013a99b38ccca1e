//! Parameter checkpoints: a single JSON document mapping parameter names to
//! shape plus flat float array, with a format version field.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::classifier::{self, ClassifierParams, EmbeddingTable};
use crate::dilution::{bias_name, theta_name, DilutionModel};
use crate::error::{Error, Result};
use crate::kernel::Tensor;

/// Current checkpoint format version.
pub const CKPT_VERSION: &str = "awd-ckpt-1";

/// A versioned named-tensor map. Keys are ordered so serialization is
/// byte-stable.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Checkpoint {
    pub version: String,
    pub params: BTreeMap<String, Tensor>,
}

impl Checkpoint {
    pub fn new() -> Self {
        Self {
            version: CKPT_VERSION.to_string(),
            params: BTreeMap::new(),
        }
    }

    /// Collects the full parameter set of a trained model.
    pub fn from_model(
        table: &EmbeddingTable,
        params: &ClassifierParams,
        dilution: &DilutionModel,
    ) -> Self {
        let mut ckpt = Self::new();
        ckpt.params
            .insert(classifier::P_EMB.into(), table.weights.clone());
        ckpt.params
            .insert(classifier::P_HIDDEN_W.into(), params.hidden_w.clone());
        ckpt.params
            .insert(classifier::P_HIDDEN_B.into(), params.hidden_b.clone());
        ckpt.params
            .insert(classifier::P_OUT_W.into(), params.out_w.clone());
        ckpt.params
            .insert(classifier::P_OUT_B.into(), params.out_b.clone());
        for (i, class) in dilution.classes.iter().enumerate() {
            ckpt.params
                .insert(theta_name(class), dilution.theta[i].clone());
            ckpt.params.insert(bias_name(class), dilution.bias[i].clone());
        }
        ckpt
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let json = serde_json::to_string_pretty(self)?;
        std::fs::write(path, json)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let content = std::fs::read_to_string(path)?;
        let ckpt: Checkpoint = serde_json::from_str(&content)?;
        if ckpt.version != CKPT_VERSION {
            return Err(Error::CheckpointVersion {
                found: ckpt.version,
                expected: CKPT_VERSION.to_string(),
            });
        }
        Ok(ckpt)
    }

    fn tensor(&self, name: &str) -> Result<Tensor> {
        self.params
            .get(name)
            .cloned()
            .ok_or_else(|| Error::Contract(format!("checkpoint is missing parameter {name:?}")))
    }

    /// Reassembles the model structs. The class list fixes the output-row and
    /// dilution-network order; `unk_id` locates the unknown embedding row.
    pub fn into_model(
        &self,
        classes: &[String],
        unk_id: usize,
    ) -> Result<(EmbeddingTable, ClassifierParams, DilutionModel)> {
        let table = EmbeddingTable::from_tensor(self.tensor(classifier::P_EMB)?, unk_id)?;
        let params = ClassifierParams {
            hidden_w: self.tensor(classifier::P_HIDDEN_W)?,
            hidden_b: self.tensor(classifier::P_HIDDEN_B)?,
            out_w: self.tensor(classifier::P_OUT_W)?,
            out_b: self.tensor(classifier::P_OUT_B)?,
        };
        if params.num_classes() != classes.len() {
            return Err(Error::Incompatible(format!(
                "checkpoint has {} output rows but {} classes were given",
                params.num_classes(),
                classes.len()
            )));
        }
        let mut theta = Vec::with_capacity(classes.len());
        let mut bias = Vec::with_capacity(classes.len());
        for class in classes {
            theta.push(self.tensor(&theta_name(class))?);
            bias.push(self.tensor(&bias_name(class))?);
        }
        let dilution = DilutionModel {
            classes: classes.to_vec(),
            theta,
            bias,
        };
        Ok((table, params, dilution))
    }
}

impl Default for Checkpoint {
    fn default() -> Self {
        Self::new()
    }
}
