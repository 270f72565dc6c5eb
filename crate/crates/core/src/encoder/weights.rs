//! Named-tensor view of model parameters.
//!
//! Names follow `<stream>.<module>...`, e.g. `left.mlp.0.weight`,
//! `right.tds.2.fc1.bias`, `joint.tds.0.conv.weight`, `head.weight`. Conv
//! kernels are stored `[K_out × K_in × lag]` where lag `i` multiplies the input
//! `i` frames in the past. In shared variants every `left.*` tensor and its
//! `right.*` twin are the same allocation.

use std::collections::{BTreeMap, HashSet};
use std::sync::Arc;

use ndarray::{Array1, Array2, Array3};

use super::config::ModelConfig;
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    pub shape: Vec<usize>,
    pub data: Vec<f32>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f32>) -> Result<Self> {
        let n: usize = shape.iter().product();
        if n != data.len() {
            return Err(Error::shape(format!("{n} values"), format!("{} values", data.len())));
        }
        Ok(Self { shape, data })
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub(crate) fn from_f64<'a>(shape: &[usize], values: impl IntoIterator<Item = &'a f64>) -> Self {
        Self {
            shape: shape.to_vec(),
            data: values.into_iter().map(|&v| v as f32).collect(),
        }
    }

    fn values(&self) -> Vec<f64> {
        self.data.iter().map(|&v| v as f64).collect()
    }

    pub(crate) fn array1(&self) -> Array1<f64> {
        Array1::from(self.values())
    }

    pub(crate) fn array2(&self) -> Array2<f64> {
        Array2::from_shape_vec((self.shape[0], self.shape[1]), self.values()).expect("shape checked")
    }

    pub(crate) fn array3(&self) -> Array3<f64> {
        Array3::from_shape_vec((self.shape[0], self.shape[1], self.shape[2]), self.values())
            .expect("shape checked")
    }
}

/// Parameters by name. Shared tensors appear under several names but are
/// one `Arc`.
#[derive(Clone, Debug, Default)]
pub struct WeightStore {
    tensors: BTreeMap<String, Arc<Tensor>>,
}

impl WeightStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, tensor: Arc<Tensor>) {
        self.tensors.insert(name.into(), tensor);
    }

    pub fn get(&self, name: &str) -> Result<&Arc<Tensor>> {
        self.tensors
            .get(name)
            .ok_or_else(|| Error::MissingTensor(name.to_string()))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Arc<Tensor>)> {
        self.tensors.iter()
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    /// Scalar parameters, counting each shared allocation once.
    pub fn unique_parameters(&self) -> usize {
        let mut seen = HashSet::new();
        self.tensors
            .values()
            .filter(|t| seen.insert(Arc::as_ptr(t)))
            .map(|t| t.len())
            .sum()
    }

    /// Looks up a tensor and checks its shape and finiteness.
    pub fn expect(&self, name: &str, shape: &[usize]) -> Result<&Arc<Tensor>> {
        let t = self.get(name)?;
        if t.shape != shape {
            return Err(Error::TensorShape {
                name: name.to_string(),
                expected: shape.to_vec(),
                actual: t.shape.clone(),
            });
        }
        if t.data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(name.to_string()));
        }
        Ok(t)
    }
}

fn stream_tensors(config: &ModelConfig, prefix: &str, mlp: bool, stack: Option<&str>) -> Vec<(String, Vec<usize>)> {
    let mut out = Vec::new();
    if mlp {
        let mut width = config.mlp_input_width();
        for (i, &size) in config.mlp_layer_sizes.iter().enumerate() {
            out.push((format!("{prefix}.mlp.{i}.weight"), vec![size, width]));
            out.push((format!("{prefix}.mlp.{i}.bias"), vec![size]));
            width = size;
        }
    }
    if let Some(sp) = stack {
        let w = config.stack_width();
        for (j, &k) in config.conv_channels.iter().enumerate() {
            let p = format!("{sp}.tds.{j}");
            out.push((format!("{p}.conv.weight"), vec![k, k, config.kernel_width]));
            out.push((format!("{p}.conv.bias"), vec![k]));
            out.push((format!("{p}.conv_norm.weight"), vec![w]));
            out.push((format!("{p}.conv_norm.bias"), vec![w]));
            out.push((format!("{p}.fc1.weight"), vec![w, w]));
            out.push((format!("{p}.fc1.bias"), vec![w]));
            out.push((format!("{p}.fc2.weight"), vec![w, w]));
            out.push((format!("{p}.fc2.bias"), vec![w]));
            out.push((format!("{p}.fc_norm.weight"), vec![w]));
            out.push((format!("{p}.fc_norm.bias"), vec![w]));
        }
    }
    out
}

/// Names and shapes of every tensor a config requires. In shared variants
/// `right.*` names alias their `left.*` twins.
pub fn expected_tensors(config: &ModelConfig) -> Vec<(String, Vec<usize>)> {
    let mut out = Vec::new();
    if config.variant.is_split() {
        out.extend(stream_tensors(config, "left", true, Some("left")));
        out.extend(stream_tensors(config, "right", true, Some("right")));
    } else {
        out.extend(stream_tensors(config, "left", true, None));
        out.extend(stream_tensors(config, "right", true, None));
        out.extend(stream_tensors(config, "", false, Some("joint")));
    }
    out.push(("head.weight".into(), vec![config.vocab_size, config.head_width()]));
    out.push(("head.bias".into(), vec![config.vocab_size]));
    out
}

/// Checks that every `left.*` tensor is the same allocation as its `right.*` twin.
pub fn check_sharing(config: &ModelConfig, store: &WeightStore) -> Result<()> {
    if !config.variant.is_shared() {
        return Ok(());
    }
    for (name, _) in stream_tensors(config, "left", true, Some("left")) {
        let twin = format!("right{}", &name["left".len()..]);
        let (l, r) = (store.get(&name)?, store.get(&twin)?);
        if !Arc::ptr_eq(l, r) {
            return Err(Error::SharingViolated(format!("{name} and {twin} are distinct tensors")));
        }
    }
    Ok(())
}
