//! Rotation-invariant MLP + TDS convolution encoders and the linear
//! character head, in joint-hand, split and shared-split variants.

mod accounting;
mod config;
mod layers;
mod weights;

use std::sync::Arc;

use ndarray::{concatenate, s, Array1, Array2, ArrayView3, Axis};
use rand::Rng;

pub use accounting::{count_flops, count_params, FlopCount};
pub use config::{ModelConfig, Variant};
pub use layers::{
    LayerNorm, Linear, RotationInvariantMlp, StackState, TdsBlock, TdsConvBlock, TdsFcBlock,
    TdsStack, LAYER_NORM_EPS,
};
pub use weights::{check_sharing, expected_tensors, Tensor, WeightStore};

use crate::error::{Error, Result};
use crate::rng;
use crate::types::{FeatureTensor, NUM_BANDS};

/// Rotation-invariant MLP followed by a TDS stack for one hand.
#[derive(Clone, Debug, PartialEq)]
pub struct HandEncoder {
    pub mlp: RotationInvariantMlp,
    pub tds: TdsStack,
}

impl HandEncoder {
    pub fn forward(&self, x: ArrayView3<'_, f64>) -> Result<Array2<f64>> {
        let h = self.mlp.forward(x)?;
        self.tds.forward(h.view())
    }
}

#[derive(Clone, Debug)]
pub enum Streams {
    Joint {
        mlps: [RotationInvariantMlp; 2],
        tds: TdsStack,
    },
    Split {
        left: Arc<HandEncoder>,
        right: Arc<HandEncoder>,
    },
}

/// Per-frame logits `[T × vocab]` (unnormalized).
#[derive(Clone, Debug, PartialEq)]
pub struct EncoderOutput {
    pub logits: Array2<f64>,
}

impl EncoderOutput {
    pub fn frames(&self) -> usize {
        self.logits.nrows()
    }
}

#[derive(Clone, Debug)]
pub struct Model {
    config: ModelConfig,
    streams: Streams,
    head: Linear,
}

impl Model {
    /// Builds a model from its named tensors, checking shapes, finiteness and
    /// (for shared variants) that both hands reference the same tensors.
    pub fn from_store(config: ModelConfig, store: &WeightStore) -> Result<Self> {
        config.validate()?;
        for (name, shape) in expected_tensors(&config) {
            store.expect(&name, &shape)?;
        }
        check_sharing(&config, store)?;
        let get = |n: &str| store.get(n).map(|t| t.as_ref());
        let mlp = |prefix: &str| -> Result<RotationInvariantMlp> {
            let layers = (0..config.mlp_layer_sizes.len())
                .map(|i| {
                    Linear::new(
                        get(&format!("{prefix}.mlp.{i}.weight"))?.array2(),
                        get(&format!("{prefix}.mlp.{i}.bias"))?.array1(),
                    )
                })
                .collect::<Result<_>>()?;
            RotationInvariantMlp::new(layers, config.offsets.clone(), config.channels, config.input_bins)
        };
        let norm = |p: String| -> Result<LayerNorm> {
            Ok(LayerNorm {
                gamma: get(&format!("{p}.weight"))?.array1(),
                beta: get(&format!("{p}.bias"))?.array1(),
                eps: config.layer_norm_eps,
            })
        };
        let stack = |prefix: &str| -> Result<TdsStack> {
            let blocks = (0..config.conv_channels.len())
                .map(|j| {
                    let p = format!("{prefix}.tds.{j}");
                    Ok(TdsBlock {
                        conv: TdsConvBlock {
                            kernel: get(&format!("{p}.conv.weight"))?.array3(),
                            bias: get(&format!("{p}.conv.bias"))?.array1(),
                            norm: Some(norm(format!("{p}.conv_norm"))?),
                        },
                        fc: TdsFcBlock {
                            fc1: Linear::new(
                                get(&format!("{p}.fc1.weight"))?.array2(),
                                get(&format!("{p}.fc1.bias"))?.array1(),
                            )?,
                            fc2: Linear::new(
                                get(&format!("{p}.fc2.weight"))?.array2(),
                                get(&format!("{p}.fc2.bias"))?.array1(),
                            )?,
                            norm: Some(norm(format!("{p}.fc_norm"))?),
                        },
                    })
                })
                .collect::<Result<_>>()?;
            Ok(TdsStack { blocks })
        };
        let streams = if config.variant.is_split() {
            let left = Arc::new(HandEncoder {
                mlp: mlp("left")?,
                tds: stack("left")?,
            });
            let right = if config.variant.is_shared() {
                Arc::clone(&left)
            } else {
                Arc::new(HandEncoder {
                    mlp: mlp("right")?,
                    tds: stack("right")?,
                })
            };
            Streams::Split { left, right }
        } else {
            Streams::Joint {
                mlps: [mlp("left")?, mlp("right")?],
                tds: stack("joint")?,
            }
        };
        let head = Linear::new(get("head.weight")?.array2(), get("head.bias")?.array1())?;
        Ok(Self {
            config,
            streams,
            head,
        })
    }

    /// Assembles a model from already-built modules.
    pub fn from_parts(config: ModelConfig, streams: Streams, head: Linear) -> Result<Self> {
        config.validate()?;
        let model = Self {
            config,
            streams,
            head,
        };
        // Round-trip through the named view to validate every shape.
        let store = model.to_store();
        for (name, shape) in expected_tensors(&model.config) {
            store.expect(&name, &shape)?;
        }
        if model.config.variant.is_shared() {
            if let Streams::Split { left, right } = &model.streams {
                if !Arc::ptr_eq(left, right) {
                    return Err(Error::SharingViolated(
                        "left and right hand encoders are distinct".into(),
                    ));
                }
            }
        }
        if model.config.variant.is_split() != matches!(model.streams, Streams::Split { .. }) {
            return Err(Error::InvalidConfig("stream layout does not match variant".into()));
        }
        Ok(model)
    }

    /// Random initialization, uniform in ±1/√fan_in, with values exactly
    /// representable as f32 so checkpoints round-trip losslessly.
    pub fn random(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut store = WeightStore::new();
        let mut shared = std::collections::HashMap::new();
        let expected = expected_tensors(&config);
        let shapes: std::collections::HashMap<String, Vec<usize>> = expected.iter().cloned().collect();
        for (i, (name, shape)) in expected.into_iter().enumerate() {
            if config.variant.is_shared() {
                if let Some(twin) = name.strip_prefix("right") {
                    let t = shared.get(&format!("left{twin}")).cloned().expect("left first");
                    store.insert(name, t);
                    continue;
                }
            }
            let n: usize = shape.iter().product();
            let data: Vec<f32> = if name.ends_with("norm.weight") {
                vec![1.0; n]
            } else if name.ends_with("norm.bias") {
                vec![0.0; n]
            } else {
                let weight_shape = if shape.len() == 1 {
                    shapes
                        .get(&name.replace(".bias", ".weight"))
                        .cloned()
                        .unwrap_or_else(|| shape.clone())
                } else {
                    shape.clone()
                };
                let fan_in: usize = weight_shape[1..].iter().product::<usize>().max(1);
                let bound = 1.0 / (fan_in as f64).sqrt();
                let mut r = rng::stream(seed, &[i as u64]);
                (0..n).map(|_| r.random_range(-bound..bound) as f32).collect()
            };
            let t = Arc::new(Tensor::new(shape, data)?);
            shared.insert(name.clone(), Arc::clone(&t));
            store.insert(name, t);
        }
        Self::from_store(config, &store)
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn streams(&self) -> &Streams {
        &self.streams
    }

    pub fn head(&self) -> &Linear {
        &self.head
    }

    /// Named tensors; shared hand encoders yield aliased `Arc`s.
    pub fn to_store(&self) -> WeightStore {
        let mut store = WeightStore::new();
        match &self.streams {
            Streams::Joint { mlps, tds } => {
                insert_all(&mut store, mlp_tensors("left", &mlps[0]));
                insert_all(&mut store, mlp_tensors("right", &mlps[1]));
                insert_all(&mut store, stack_tensors("joint", tds));
            }
            Streams::Split { left, right } => {
                let mut l = mlp_tensors("left", &left.mlp);
                l.extend(stack_tensors("left", &left.tds));
                if Arc::ptr_eq(left, right) {
                    let aliases: Vec<_> = l
                        .iter()
                        .map(|(n, t)| (format!("right{}", &n["left".len()..]), Arc::clone(t)))
                        .collect();
                    insert_all(&mut store, aliases);
                } else {
                    insert_all(&mut store, mlp_tensors("right", &right.mlp));
                    insert_all(&mut store, stack_tensors("right", &right.tds));
                }
                insert_all(&mut store, l);
            }
        }
        store.insert("head.weight", tensor_of(&self.head.weight));
        store.insert("head.bias", tensor_of(&self.head.bias));
        store
    }

    /// Parameters counted over unique tensors.
    pub fn num_parameters(&self) -> usize {
        self.to_store().unique_parameters()
    }

    fn check_input(&self, x: &FeatureTensor) -> Result<()> {
        let (_, b, c, f) = x.dim();
        if b != NUM_BANDS || c != self.config.channels || f != self.config.input_bins {
            return Err(Error::shape(
                format!("[T × {NUM_BANDS} × {} × {}]", self.config.channels, self.config.input_bins),
                format!("{:?}", x.0.shape()),
            ));
        }
        Ok(())
    }

    /// Per-hand outputs: post-stack embeddings for split variants, post-MLP
    /// embeddings for the joint variant.
    pub fn hand_embeddings(&self, features: &FeatureTensor) -> Result<[Array2<f64>; 2]> {
        self.check_input(features)?;
        let hand = |b: usize| features.0.slice(s![.., b, .., ..]);
        Ok(match &self.streams {
            Streams::Joint { mlps, .. } => [mlps[0].forward(hand(0))?, mlps[1].forward(hand(1))?],
            Streams::Split { left, right } => [left.forward(hand(0))?, right.forward(hand(1))?],
        })
    }

    /// Batch forward pass over `[T × 2 × 16 × F]` normalized features.
    pub fn encode(&self, features: &FeatureTensor) -> Result<EncoderOutput> {
        let [l, r] = self.hand_embeddings(features)?;
        let joined = concatenate(Axis(1), &[l.view(), r.view()]).expect("equal frame counts");
        let top = match &self.streams {
            Streams::Joint { tds, .. } => tds.forward(joined.view())?,
            Streams::Split { .. } => joined,
        };
        let logits = self.head.forward(top.view());
        if logits.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("logits".into()));
        }
        Ok(EncoderOutput { logits })
    }

    pub fn streaming(&self) -> StreamingEncoder<'_> {
        StreamingEncoder::new(self)
    }
}

type Named = Vec<(String, Arc<Tensor>)>;

fn tensor_of<D: ndarray::Dimension>(a: &ndarray::Array<f64, D>) -> Arc<Tensor> {
    Arc::new(Tensor::from_f64(a.shape(), a.iter()))
}

fn insert_all(store: &mut WeightStore, named: Named) {
    for (n, t) in named {
        store.insert(n, t);
    }
}

fn mlp_tensors(prefix: &str, m: &RotationInvariantMlp) -> Named {
    let mut out = Vec::new();
    for (i, l) in m.layers.iter().enumerate() {
        out.push((format!("{prefix}.mlp.{i}.weight"), tensor_of(&l.weight)));
        out.push((format!("{prefix}.mlp.{i}.bias"), tensor_of(&l.bias)));
    }
    out
}

fn stack_tensors(prefix: &str, stack: &TdsStack) -> Named {
    let mut out = Vec::new();
    for (j, b) in stack.blocks.iter().enumerate() {
        let p = format!("{prefix}.tds.{j}");
        let width = b.fc.fc1.inputs();
        let conv_norm = b.conv.norm.clone().unwrap_or_else(|| LayerNorm::identity(width, 0.0));
        let fc_norm = b.fc.norm.clone().unwrap_or_else(|| LayerNorm::identity(width, 0.0));
        out.push((format!("{p}.conv.weight"), tensor_of(&b.conv.kernel)));
        out.push((format!("{p}.conv.bias"), tensor_of(&b.conv.bias)));
        out.push((format!("{p}.conv_norm.weight"), tensor_of(&conv_norm.gamma)));
        out.push((format!("{p}.conv_norm.bias"), tensor_of(&conv_norm.beta)));
        out.push((format!("{p}.fc1.weight"), tensor_of(&b.fc.fc1.weight)));
        out.push((format!("{p}.fc1.bias"), tensor_of(&b.fc.fc1.bias)));
        out.push((format!("{p}.fc2.weight"), tensor_of(&b.fc.fc2.weight)));
        out.push((format!("{p}.fc2.bias"), tensor_of(&b.fc.fc2.bias)));
        out.push((format!("{p}.fc_norm.weight"), tensor_of(&fc_norm.gamma)));
        out.push((format!("{p}.fc_norm.bias"), tensor_of(&fc_norm.beta)));
    }
    out
}

/// Frame-at-a-time encoder with per-stream convolution histories.
pub struct StreamingEncoder<'a> {
    model: &'a Model,
    states: Vec<StackState>,
}

impl<'a> StreamingEncoder<'a> {
    pub fn new(model: &'a Model) -> Self {
        let states = match &model.streams {
            Streams::Joint { tds, .. } => vec![StackState::new(tds)],
            Streams::Split { left, right } => {
                vec![StackState::new(&left.tds), StackState::new(&right.tds)]
            }
        };
        Self { model, states }
    }

    /// Consumes one `[2 × 16 × F]` frame and returns its logits.
    pub fn step(&mut self, frame: ArrayView3<'_, f64>) -> Result<Array1<f64>> {
        let cfg = &self.model.config;
        if frame.dim() != (NUM_BANDS, cfg.channels, cfg.input_bins) {
            return Err(Error::shape(
                format!("[{NUM_BANDS} × {} × {}]", cfg.channels, cfg.input_bins),
                format!("{:?}", frame.shape()),
            ));
        }
        let hand = |b: usize| frame.index_axis(Axis(0), b);
        let top = match &self.model.streams {
            Streams::Joint { mlps, tds } => {
                let l = mlps[0].forward_frame(hand(0))?;
                let r = mlps[1].forward_frame(hand(1))?;
                let joined = concatenate(Axis(0), &[l.view(), r.view()]).expect("1-d");
                self.states[0].step(tds, joined)
            }
            Streams::Split { left, right } => {
                let l = left.mlp.forward_frame(hand(0))?;
                let r = right.mlp.forward_frame(hand(1))?;
                let l = self.states[0].step(&left.tds, l);
                let r = self.states[1].step(&right.tds, r);
                concatenate(Axis(0), &[l.view(), r.view()]).expect("1-d")
            }
        };
        let logits = self.model.head.forward_vec(top.view());
        if logits.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("logits".into()));
        }
        Ok(logits)
    }
}
