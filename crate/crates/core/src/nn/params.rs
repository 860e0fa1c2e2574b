//! Ordered registry of named learnable tensors.

use crate::error::{Error, Result};
use crate::nn::conv::ConvSpec;
use crate::nn::layers::{Conv2d, LayerNorm};
use crate::scalar::Scalar;
use crate::tensor::{Shape, Tensor};
use indexmap::IndexMap;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Stable index of a parameter inside a [`ModuleParams`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ParamId(pub(crate) usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Named tensors in insertion order. Names are unique; iteration order is
/// deterministic, so gradient buffers created by [`zeros_like`](Self::zeros_like)
/// share indices with the parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct ModuleParams<T: Scalar> {
    entries: IndexMap<String, Tensor<T>>,
}

impl<T: Scalar> Default for ModuleParams<T> {
    fn default() -> Self {
        ModuleParams {
            entries: IndexMap::new(),
        }
    }
}

impl<T: Scalar> ModuleParams<T> {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, tensor: Tensor<T>) -> Result<ParamId> {
        let name = name.into();
        if self.entries.contains_key(&name) {
            return Err(Error::Params(format!("duplicate parameter name `{name}`")));
        }
        let (idx, _) = self.entries.insert_full(name, tensor);
        Ok(ParamId(idx))
    }

    #[inline]
    pub fn get(&self, id: ParamId) -> &Tensor<T> {
        &self.entries[id.0]
    }

    #[inline]
    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor<T> {
        &mut self.entries[id.0]
    }

    pub fn by_name(&self, name: &str) -> Option<&Tensor<T>> {
        self.entries.get(name)
    }

    pub fn by_name_mut(&mut self, name: &str) -> Option<&mut Tensor<T>> {
        self.entries.get_mut(name)
    }

    pub fn id_of(&self, name: &str) -> Option<ParamId> {
        self.entries.get_index_of(name).map(ParamId)
    }

    pub fn name_of(&self, id: ParamId) -> &str {
        self.entries.get_index(id.0).map(|(k, _)| k.as_str()).unwrap_or("?")
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor<T>)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&str, &mut Tensor<T>)> {
        self.entries.iter_mut().map(|(k, v)| (k.as_str(), v))
    }

    pub fn tensors(&self) -> impl Iterator<Item = &Tensor<T>> {
        self.entries.values()
    }

    /// Exact total number of scalar parameters.
    pub fn count(&self) -> usize {
        self.entries.values().map(|t| t.numel()).sum()
    }

    /// Same names and shapes, all zeros; used as a gradient accumulator.
    pub fn zeros_like(&self) -> Self {
        ModuleParams {
            entries: self
                .entries
                .iter()
                .map(|(k, v)| (k.clone(), v.zeros_like()))
                .collect(),
        }
    }

    pub fn cast<U: Scalar>(&self) -> ModuleParams<U> {
        ModuleParams {
            entries: self.entries.iter().map(|(k, v)| (k.clone(), v.cast())).collect(),
        }
    }

    /// `self += other` for matching registries.
    pub fn add_assign(&mut self, other: &Self) -> Result<()> {
        self.check_layout(other)?;
        for (a, b) in self.entries.values_mut().zip(other.entries.values()) {
            a.add_assign(b)?;
        }
        Ok(())
    }

    /// Errors unless `other` has exactly the same names, order and shapes.
    pub fn check_layout<U: Scalar>(&self, other: &ModuleParams<U>) -> Result<()> {
        if self.len() != other.len() {
            return Err(Error::Params(format!(
                "registry sizes differ: {} vs {}",
                self.len(),
                other.len()
            )));
        }
        for ((ka, va), (kb, vb)) in self.entries.iter().zip(other.entries.iter()) {
            if ka != kb || va.shape() != vb.shape() {
                return Err(Error::Params(format!(
                    "`{ka}` {} vs `{kb}` {}",
                    va.shape(),
                    vb.shape()
                )));
            }
        }
        Ok(())
    }

    /// Flattened copy of all values, in registry order.
    pub fn flatten(&self) -> Vec<T> {
        self.entries.values().flat_map(|t| t.data().iter().copied()).collect()
    }
}

/// Registers layers with hierarchical dot-separated names and seeded
/// initialization: weights uniform in `[-sqrt(1/fan_in), sqrt(1/fan_in)]`,
/// biases zero, norm gains one and offsets zero.
pub struct ParamBuilder {
    params: ModuleParams<f64>,
    prefix: Vec<String>,
    rng: ChaCha8Rng,
}

impl ParamBuilder {
    pub fn new(seed: u64) -> Self {
        ParamBuilder {
            params: ModuleParams::new(),
            prefix: Vec::new(),
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    fn full_name(&self, name: &str) -> String {
        let mut parts = self.prefix.clone();
        parts.push(name.to_string());
        parts.join(".")
    }

    pub fn scope<R>(&mut self, name: &str, f: impl FnOnce(&mut Self) -> Result<R>) -> Result<R> {
        self.prefix.push(name.to_string());
        let out = f(self);
        self.prefix.pop();
        out
    }

    pub fn conv(&mut self, name: &str, spec: ConvSpec, bias: bool) -> Result<Conv2d> {
        spec.validate()?;
        let full = self.full_name(name);
        let bound = (1.0 / spec.fan_in() as f64).sqrt();
        let ws = spec.weight_shape();
        let rng = &mut self.rng;
        let w = Tensor::from_fn(ws, |_| rng.random_range(-bound..=bound));
        let weight = self.params.insert(format!("{full}.weight"), w)?;
        let bias = if bias {
            Some(self.params.insert(format!("{full}.bias"), Tensor::zeros(spec.bias_shape()))?)
        } else {
            None
        };
        Ok(Conv2d {
            name: full,
            spec,
            weight,
            bias,
        })
    }

    pub fn layer_norm(&mut self, name: &str, channels: usize) -> Result<LayerNorm> {
        let full = self.full_name(name);
        let shape = Shape::new(1, channels, 1, 1);
        let gain = self.params.insert(format!("{full}.gain"), Tensor::full(shape, 1.0))?;
        let offset = self.params.insert(format!("{full}.offset"), Tensor::zeros(shape))?;
        Ok(LayerNorm {
            name: full,
            channels,
            gain,
            offset,
        })
    }

    pub fn finish<T: Scalar>(self) -> ModuleParams<T> {
        self.params.cast()
    }
}
