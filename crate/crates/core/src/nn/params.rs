//! Named parameter storage shared by every trainable model: checkpointing,
//! content hashing, and per-step binding into a [`Graph`].

use std::collections::BTreeMap;
use std::path::Path;

use ndarray::{ArrayD, IxDyn};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::nn::graph::{Graph, Var};
use crate::tensorio::TensorContainer;

/// An ordered map from parameter name to tensor. Names use dotted prefixes
/// (`enc.lstm0.w_ih`) so subsets can be selected by prefix, e.g. to freeze
/// everything except a head during finetuning.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Params {
    tensors: BTreeMap<String, ArrayD<f32>>,
}

impl Params {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, value: ArrayD<f32>) {
        self.tensors.insert(name.into(), value);
    }

    pub fn get(&self, name: &str) -> Result<&ArrayD<f32>> {
        self.tensors
            .get(name)
            .ok_or_else(|| Error::TensorNotFound(name.to_string()))
    }

    pub fn get_mut(&mut self, name: &str) -> Result<&mut ArrayD<f32>> {
        self.tensors
            .get_mut(name)
            .ok_or_else(|| Error::TensorNotFound(name.to_string()))
    }

    pub fn contains(&self, name: &str) -> bool {
        self.tensors.contains_key(name)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.tensors.keys().map(String::as_str)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &ArrayD<f32>)> {
        self.tensors.iter()
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn num_scalars(&self) -> usize {
        self.tensors.values().map(|t| t.len()).sum()
    }

    /// SHA-256 over names, shapes, and little-endian payload bytes, in name
    /// order. Two parameter sets hash equal iff they are bit-identical.
    pub fn sha256_hex(&self) -> String {
        let mut hasher = Sha256::new();
        for (name, tensor) in &self.tensors {
            hasher.update((name.len() as u64).to_le_bytes());
            hasher.update(name.as_bytes());
            hasher.update((tensor.ndim() as u64).to_le_bytes());
            for &d in tensor.shape() {
                hasher.update((d as u64).to_le_bytes());
            }
            for &v in tensor.iter() {
                hasher.update(v.to_le_bytes());
            }
        }
        let digest = hasher.finalize();
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    /// Hash restricted to names starting with `prefix`; lets tests pin down
    /// that a frozen sub-module did not move during finetuning.
    pub fn sha256_hex_prefix(&self, prefix: &str) -> String {
        let subset = Params {
            tensors: self
                .tensors
                .iter()
                .filter(|(k, _)| k.starts_with(prefix))
                .map(|(k, v)| (k.clone(), v.clone()))
                .collect(),
        };
        subset.sha256_hex()
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut c = TensorContainer::new();
        for (name, tensor) in &self.tensors {
            c.insert(name.clone(), tensor.clone());
        }
        c.save(path)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let c = TensorContainer::load(path)?;
        let mut p = Params::new();
        for (name, tensor) in c.iter() {
            p.insert(name, tensor.clone());
        }
        Ok(p)
    }
}

/// Uniform init over `[-bound, bound]` with `bound = 1 / sqrt(fan_in)` —
/// the convention used for every linear, recurrent, and conv weight here.
pub fn uniform_init(rng: &mut ChaCha8Rng, shape: &[usize], fan_in: usize) -> ArrayD<f32> {
    let bound = 1.0 / (fan_in as f32).sqrt();
    ArrayD::from_shape_fn(IxDyn(shape), |_| rng.random_range(-bound..bound))
}

pub fn zeros(shape: &[usize]) -> ArrayD<f32> {
    ArrayD::zeros(IxDyn(shape))
}

/// Binds parameters into a graph for one forward/backward pass, remembering
/// which [`Var`] each name received so gradients can be collected afterwards.
pub struct Binder<'a> {
    params: &'a Params,
    bound: BTreeMap<String, Var>,
}

impl<'a> Binder<'a> {
    pub fn new(params: &'a Params) -> Self {
        Self {
            params,
            bound: BTreeMap::new(),
        }
    }

    /// Fetches `name` as a trainable node, inserting it on first use.
    pub fn get(&mut self, g: &mut Graph, name: &str) -> Result<Var> {
        if let Some(v) = self.bound.get(name) {
            return Ok(*v);
        }
        let value = self.params.get(name)?.clone();
        let v = g.param(value);
        self.bound.insert(name.to_string(), v);
        Ok(v)
    }

    /// Gradients of every bound parameter after `g.backward(..)`. Parameters
    /// bound but untouched by the loss get zero gradients.
    pub fn grads(&self, g: &Graph) -> BTreeMap<String, ArrayD<f32>> {
        self.bound
            .iter()
            .map(|(name, var)| {
                let grad = g
                    .grad(*var)
                    .cloned()
                    .unwrap_or_else(|| ArrayD::zeros(g.value(*var).raw_dim()));
                (name.clone(), grad)
            })
            .collect()
    }
}
