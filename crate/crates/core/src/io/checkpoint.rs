//! Checkpoint files: a magic line, a one-line JSON manifest, then the
//! concatenated little-endian `f32` tensors. Tensors shared between hands
//! are written once and listed under every name at the same offset.

use std::collections::HashMap;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::decode::Vocabulary;
use crate::encoder::{Model, ModelConfig, Tensor, WeightStore};
use crate::error::{Error, Result};

pub const CHECKPOINT_MAGIC: &str = "EMGTYPE-CHECKPOINT v1";
const DTYPE: &str = "f32le";

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub shape: Vec<usize>,
    pub dtype: String,
    /// Byte offset into the payload.
    pub offset: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub config: ModelConfig,
    pub vocabulary: Vocabulary,
    pub payload_bytes: u64,
    pub tensors: Vec<TensorEntry>,
}

#[derive(Clone, Debug)]
pub struct Checkpoint {
    pub config: ModelConfig,
    pub vocabulary: Vocabulary,
    pub store: WeightStore,
}

impl Checkpoint {
    pub fn from_model(model: &Model, vocabulary: Vocabulary) -> Self {
        Self {
            config: model.config().clone(),
            vocabulary,
            store: model.to_store(),
        }
    }

    pub fn model(&self) -> Result<Model> {
        if self.vocabulary.size() != self.config.vocab_size {
            return Err(Error::InvalidConfig(format!(
                "vocabulary has {} labels but the model emits {}",
                self.vocabulary.size(),
                self.config.vocab_size
            )));
        }
        Model::from_store(self.config.clone(), &self.store)
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut offsets: HashMap<*const Tensor, u64> = HashMap::new();
        let mut payload = Vec::new();
        let mut tensors = Vec::with_capacity(self.store.len());
        for (name, t) in self.store.iter() {
            let offset = *offsets.entry(Arc::as_ptr(t)).or_insert_with(|| {
                let at = payload.len() as u64;
                for v in &t.data {
                    payload.extend_from_slice(&v.to_le_bytes());
                }
                at
            });
            tensors.push(TensorEntry {
                name: name.clone(),
                shape: t.shape.clone(),
                dtype: DTYPE.into(),
                offset,
            });
        }
        let manifest = Manifest {
            config: self.config.clone(),
            vocabulary: self.vocabulary.clone(),
            payload_bytes: payload.len() as u64,
            tensors,
        };
        let json = serde_json::to_string(&manifest).map_err(|e| Error::MalformedHeader(e.to_string()))?;
        let mut out = Vec::with_capacity(CHECKPOINT_MAGIC.len() + json.len() + 2 + payload.len());
        out.extend_from_slice(CHECKPOINT_MAGIC.as_bytes());
        out.push(b'\n');
        out.extend_from_slice(json.as_bytes());
        out.push(b'\n');
        out.extend_from_slice(&payload);
        Ok(out)
    }

    /// Parses and validates tensors against the config, including weight
    /// sharing for shared variants.
    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let nl = bytes
            .iter()
            .position(|&b| b == b'\n')
            .ok_or_else(|| Error::BadMagic("missing magic line".into()))?;
        if &bytes[..nl] != CHECKPOINT_MAGIC.as_bytes() {
            return Err(Error::BadMagic(String::from_utf8_lossy(&bytes[..nl]).into_owned()));
        }
        let rest = &bytes[nl + 1..];
        let nl = rest
            .iter()
            .position(|&b| b == b'\n')
            .ok_or_else(|| Error::MalformedHeader("missing manifest line".into()))?;
        let manifest: Manifest =
            serde_json::from_slice(&rest[..nl]).map_err(|e| Error::MalformedHeader(e.to_string()))?;
        let payload = &rest[nl + 1..];
        if payload.len() as u64 != manifest.payload_bytes {
            return Err(Error::Truncated {
                expected: manifest.payload_bytes as usize,
                actual: payload.len(),
            });
        }

        let mut by_offset: HashMap<(u64, Vec<usize>), Arc<Tensor>> = HashMap::new();
        let mut store = WeightStore::new();
        for e in &manifest.tensors {
            if e.dtype != DTYPE {
                return Err(Error::MalformedHeader(format!("tensor {} has dtype {}", e.name, e.dtype)));
            }
            let n: usize = e.shape.iter().product();
            let start = usize::try_from(e.offset).ok();
            let range = start.and_then(|s| Some(s..s.checked_add(n.checked_mul(4)?)?));
            let Some(range) = range.filter(|r| r.end <= payload.len()) else {
                return Err(Error::MissingTensor(format!("{} (absent from payload)", e.name)));
            };
            let t = by_offset
                .entry((e.offset, e.shape.clone()))
                .or_insert_with(|| {
                    let data = payload[range]
                        .chunks_exact(4)
                        .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
                        .collect();
                    Arc::new(Tensor {
                        shape: e.shape.clone(),
                        data,
                    })
                })
                .clone();
            store.insert(e.name.clone(), t);
        }
        let ckpt = Self {
            config: manifest.config,
            vocabulary: manifest.vocabulary,
            store,
        };
        ckpt.model()?;
        Ok(ckpt)
    }
}

pub fn save_checkpoint(checkpoint: &Checkpoint, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, checkpoint.to_bytes()?)?;
    Ok(())
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Checkpoint> {
    Checkpoint::from_bytes(&std::fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoder::Variant;

    fn small(variant: Variant) -> ModelConfig {
        ModelConfig {
            variant,
            hand_width: 24,
            mlp_layer_sizes: vec![24],
            conv_channels: vec![24, 24],
            ..ModelConfig::splashnet_mini()
        }
    }

    #[test]
    fn shared_round_trip_stores_once() {
        let model = Model::random(small(Variant::SplitAndShare), 7).unwrap();
        let ckpt = Checkpoint::from_model(&model, Vocabulary::keyboard());
        let bytes = ckpt.to_bytes().unwrap();
        let back = Checkpoint::from_bytes(&bytes).unwrap();
        assert_eq!(back.to_bytes().unwrap(), bytes);
        let floats = 4 * back.store.unique_parameters();
        assert!(bytes.len() < floats + 100_000);
        assert_eq!(back.store.unique_parameters(), model.num_parameters());
    }

    #[test]
    fn distinct_tensors_violate_sharing() {
        let model = Model::random(small(Variant::SplitOnly), 1).unwrap();
        let mut ckpt = Checkpoint::from_model(&model, Vocabulary::keyboard());
        ckpt.config.variant = Variant::SplitAndShare;
        let err = Checkpoint::from_bytes(&ckpt.to_bytes().unwrap()).unwrap_err();
        assert!(err.to_string().contains("sharing violated"), "{err}");
    }

    #[test]
    fn nan_rejected() {
        let model = Model::random(small(Variant::SplitOnly), 1).unwrap();
        let mut ckpt = Checkpoint::from_model(&model, Vocabulary::keyboard());
        let mut t = (**ckpt.store.get("head.bias").unwrap()).clone();
        t.data[0] = f32::NAN;
        ckpt.store.insert("head.bias", Arc::new(t));
        assert!(matches!(
            Checkpoint::from_bytes(&ckpt.to_bytes().unwrap()),
            Err(Error::NonFinite(_))
        ));
    }

    #[test]
    fn missing_tensor() {
        let model = Model::random(small(Variant::SplitOnly), 1).unwrap();
        let ckpt = Checkpoint::from_model(&model, Vocabulary::keyboard());
        let mut store = WeightStore::new();
        for (n, t) in ckpt.store.iter().filter(|(n, _)| *n != "head.bias") {
            store.insert(n.clone(), t.clone());
        }
        let ckpt = Checkpoint { store, ..ckpt };
        assert!(matches!(
            Checkpoint::from_bytes(&ckpt.to_bytes().unwrap()),
            Err(Error::MissingTensor(_))
        ));
    }
}
