//! Named weight tensors and seeded initialization.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::{discriminator_layout, generator_layout, validate_config, LayerSpec, NetworkConfig, NnError};
use crate::rng::SeededRng;

/// Row-major `f32` tensor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tensor {
    pub shape: Vec<usize>,
    pub data: Vec<f32>,
}

impl Tensor {
    pub fn numel(&self) -> usize {
        self.data.len()
    }
}

/// Name-ordered collection of finite tensors.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct WeightStore {
    tensors: BTreeMap<String, Tensor>,
}

impl WeightStore {
    pub fn new() -> Self {
        Self::default()
    }

    /// Inserts or replaces a tensor; the payload must match the shape and be
    /// finite.
    pub fn insert(&mut self, name: impl Into<String>, shape: Vec<usize>, data: Vec<f32>) -> Result<(), NnError> {
        let name = name.into();
        if shape.iter().product::<usize>() != data.len() {
            return Err(NnError::WeightShapeMismatch {
                name,
                expected: shape,
                found: Some(alloc::vec![data.len()]),
            });
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(NnError::NonFiniteWeight(name));
        }
        self.tensors.insert(name, Tensor { shape, data });
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.tensors.get(name)
    }

    /// Mutable access for tooling and tests; the caller keeps values finite.
    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.tensors.get_mut(name)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Tensor)> {
        self.tensors.iter()
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn param_count(&self) -> usize {
        self.tensors.values().map(Tensor::numel).sum()
    }

    pub(crate) fn expect(&self, name: &str, shape: &[usize]) -> Result<&Tensor, NnError> {
        match self.tensors.get(name) {
            Some(t) if t.shape == shape => Ok(t),
            other => Err(NnError::WeightShapeMismatch {
                name: String::from(name),
                expected: shape.to_vec(),
                found: other.map(|t| t.shape.clone()),
            }),
        }
    }

    /// Checks that every tensor of `layers` is present with the right shape.
    pub fn check_layout(&self, layers: &[LayerSpec]) -> Result<(), NnError> {
        for l in layers {
            self.expect(&alloc::format!("{}.v", l.name), &l.v_shape())?;
            self.expect(&alloc::format!("{}.g", l.name), &[l.out_channels])?;
            self.expect(&alloc::format!("{}.bias", l.name), &[l.out_channels])?;
        }
        Ok(())
    }
}

fn init_layer(store: &mut WeightStore, l: &LayerSpec, rng: &mut SeededRng) -> Result<(), NnError> {
    let bound = 1.0 / libm::sqrt(l.fan_in() as f64);
    let shape = l.v_shape();
    let n: usize = shape.iter().product();
    let v: Vec<f32> = (0..n).map(|_| rng.uniform_range(-bound, bound) as f32).collect();
    let row = shape[1] * shape[2];
    let g: Vec<f32> = v
        .chunks(row)
        .map(|r| libm::sqrt(r.iter().map(|&x| x as f64 * x as f64).sum::<f64>()) as f32)
        .collect();
    let bias: Vec<f32> = (0..l.out_channels)
        .map(|_| rng.uniform_range(-bound, bound) as f32)
        .collect();
    store.insert(alloc::format!("{}.v", l.name), shape.to_vec(), v)?;
    store.insert(alloc::format!("{}.g", l.name), alloc::vec![l.out_channels], g)?;
    store.insert(alloc::format!("{}.bias", l.name), alloc::vec![l.out_channels], bias)?;
    Ok(())
}

/// Uniform `(-1/sqrt(fan_in), 1/sqrt(fan_in))` directions and biases drawn in
/// layout order (generator, then discriminators), with `g = ||v||` so the
/// initial effective weight equals `v`.
pub fn init_weights(cfg: &NetworkConfig, seed: u64) -> Result<WeightStore, NnError> {
    validate_config(cfg)?;
    let mut rng = SeededRng::new(seed);
    let mut store = WeightStore::new();
    for l in generator_layout(cfg).iter().chain(&discriminator_layout(cfg)) {
        init_layer(&mut store, l, &mut rng)?;
    }
    Ok(store)
}
