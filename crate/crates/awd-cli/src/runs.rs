//! Run-directory layout: writing artifacts with tracked hashes and loading
//! model bundles back.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::de::DeserializeOwned;
use serde::Serialize;

use awd::classifier::{ClassifierParams, EmbeddingTable};
use awd::corpus::Vocab;
use awd::dilution::{AugmentedExample, DilutionModel};
use awd::Checkpoint;

use crate::manifest::{sha256_hex, RunManifest};

/// Accumulates artifacts in one directory; `finish` writes the manifest last
/// so its hashes cover everything emitted.
pub struct RunWriter {
    dir: PathBuf,
    artifacts: BTreeMap<String, String>,
}

impl RunWriter {
    pub fn create(dir: &Path) -> Result<Self> {
        std::fs::create_dir_all(dir)
            .with_context(|| format!("cannot create run directory {}", dir.display()))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            artifacts: BTreeMap::new(),
        })
    }

    pub fn write_bytes(&mut self, name: &str, bytes: &[u8]) -> Result<()> {
        let path = self.dir.join(name);
        std::fs::write(&path, bytes)
            .with_context(|| format!("cannot write {}", path.display()))?;
        self.artifacts.insert(name.to_string(), sha256_hex(bytes));
        Ok(())
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let mut json = serde_json::to_string_pretty(value)?;
        json.push('\n');
        self.write_bytes(name, json.as_bytes())
    }

    /// One JSON document per line.
    pub fn write_jsonl<T: Serialize>(&mut self, name: &str, items: &[T]) -> Result<()> {
        let mut out = String::new();
        for item in items {
            out.push_str(&serde_json::to_string(item)?);
            out.push('\n');
        }
        self.write_bytes(name, out.as_bytes())
    }

    pub fn finish(
        mut self,
        command: &str,
        config: serde_json::Value,
        seeds: Vec<u64>,
        datasets: BTreeMap<String, String>,
    ) -> Result<()> {
        let manifest = RunManifest {
            command: command.to_string(),
            config,
            seeds,
            datasets,
            output_dir: self.dir.display().to_string(),
            artifacts: std::mem::take(&mut self.artifacts),
        };
        let mut json = serde_json::to_string_pretty(&manifest)?;
        json.push('\n');
        let path = self.dir.join("manifest.json");
        std::fs::write(&path, json)
            .with_context(|| format!("cannot write {}", path.display()))?;
        Ok(())
    }
}

/// A trained model with its vocabulary and class list, loaded from a run
/// directory's `checkpoint.json` and sibling files.
pub struct ModelBundle {
    pub table: EmbeddingTable,
    pub classifier: ClassifierParams,
    pub dilution: DilutionModel,
    pub vocab: Vocab,
    pub classes: Vec<String>,
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let content = std::fs::read_to_string(path)
        .with_context(|| format!("cannot read {}", path.display()))?;
    serde_json::from_str(&content).with_context(|| format!("invalid JSON in {}", path.display()))
}

pub fn load_bundle(checkpoint: &Path) -> Result<ModelBundle> {
    let ckpt = Checkpoint::load(checkpoint)
        .with_context(|| format!("cannot load checkpoint {}", checkpoint.display()))?;
    let dir = checkpoint.parent().unwrap_or_else(|| Path::new("."));
    let vocab: Vocab = read_json(&dir.join("vocab.json"))?;
    let classes: Vec<String> = read_json(&dir.join("classes.json"))?;
    let (table, classifier, dilution) = ckpt.into_model(&classes, vocab.unk_id())?;
    Ok(ModelBundle {
        table,
        classifier,
        dilution,
        vocab,
        classes,
    })
}

/// Serialized augmentation set, ready to feed back into baseline training.
#[derive(Debug, serde::Serialize, serde::Deserialize)]
pub struct AugmentationFile {
    pub embedding_dim: usize,
    pub examples: Vec<AugmentedExample>,
}
