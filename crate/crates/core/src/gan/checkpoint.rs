use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::arch::{Gan, GanSpec};
use crate::autodiff::{ParamStore, Tensor};
use crate::error::{Error, Result};

pub const CHECKPOINT_FORMAT: &str = "tsgan-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NamedTensor {
    pub name: String,
    pub tensor: Tensor,
}

/// Serialised model weights. Floats are written in round-trip form, so a
/// save/load cycle reproduces every parameter bit for bit.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub preset: Option<String>,
    pub epoch: usize,
    pub spec: GanSpec,
    pub generator: Vec<NamedTensor>,
    pub discriminator: Vec<NamedTensor>,
}

fn dump(store: &ParamStore) -> Vec<NamedTensor> {
    store
        .params()
        .iter()
        .map(|p| NamedTensor {
            name: p.name.clone(),
            tensor: p.value.clone(),
        })
        .collect()
}

fn restore(store: &mut ParamStore, saved: &[NamedTensor], side: &str) -> Result<()> {
    if saved.len() != store.len() {
        return Err(Error::Checkpoint(format!(
            "{side}: expected {} tensors, found {}",
            store.len(),
            saved.len()
        )));
    }
    for (p, s) in store.params_mut().iter_mut().zip(saved) {
        if p.name != s.name || p.value.shape() != s.tensor.shape() {
            return Err(Error::Checkpoint(format!(
                "{side}: expected {} {:?}, found {} {:?}",
                p.name,
                p.value.shape(),
                s.name,
                s.tensor.shape()
            )));
        }
        p.value = Tensor::new(s.tensor.shape().to_vec(), s.tensor.data().to_vec())
            .map_err(|e| Error::Checkpoint(format!("{side}: {}: {e}", s.name)))?;
    }
    Ok(())
}

impl Checkpoint {
    pub fn capture(gan: &Gan, preset: Option<String>, epoch: usize) -> Self {
        Checkpoint {
            format: CHECKPOINT_FORMAT.into(),
            version: CHECKPOINT_VERSION,
            preset,
            epoch,
            spec: gan.spec.clone(),
            generator: dump(&gan.generator.store),
            discriminator: dump(&gan.discriminator.store),
        }
    }

    /// Rebuilds the networks described by the spec and loads the weights.
    pub fn restore(&self) -> Result<Gan> {
        if self.format != CHECKPOINT_FORMAT || self.version != CHECKPOINT_VERSION {
            return Err(Error::Checkpoint(format!(
                "unsupported format {} version {}",
                self.format, self.version
            )));
        }
        let mut gan = Gan::new(self.spec.clone(), 0)?;
        restore(&mut gan.generator.store, &self.generator, "generator")?;
        restore(&mut gan.discriminator.store, &self.discriminator, "discriminator")?;
        Ok(gan)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)? + "\n")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        serde_json::from_str(s).map_err(|e| Error::Checkpoint(e.to_string()))
    }

    /// Writes the checkpoint and returns its id, the first 16 hex digits of
    /// the SHA-256 of the file contents.
    pub fn save(&self, path: &Path) -> Result<String> {
        let text = self.to_json()?;
        std::fs::write(path, &text).map_err(|e| Error::io(path, e))?;
        Ok(content_id(text.as_bytes()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}

/// First 16 hex digits of the SHA-256 of `bytes`.
pub fn content_id(bytes: &[u8]) -> String {
    sha256_hex(bytes)[..16].to_owned()
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}
