//! Named, ordered parameter storage.

use indexmap::IndexMap;

use crate::{Float, Result, Tensor, TensorError};

/// Trainable tensors keyed by name, iterated in insertion order.
#[derive(Debug, Clone, Default)]
pub struct ParamStore<F> {
    params: IndexMap<String, Tensor<F>>,
}

impl<F: Float> ParamStore<F> {
    pub fn new() -> Self {
        ParamStore {
            params: IndexMap::new(),
        }
    }

    /// Adds a parameter; names must be unique.
    pub fn insert(&mut self, name: impl Into<String>, value: Tensor<F>) -> Result<()> {
        let name = name.into();
        if self.params.contains_key(&name) {
            return Err(TensorError::invalid("param", format!("duplicate parameter {name}")));
        }
        self.params.insert(name, value);
        Ok(())
    }

    /// Replaces an existing parameter, keeping its position. The shape must
    /// not change.
    pub fn set(&mut self, name: &str, value: Tensor<F>) -> Result<()> {
        let slot = self
            .params
            .get_mut(name)
            .ok_or_else(|| TensorError::UnknownParam(name.to_string()))?;
        if slot.shape() != value.shape() {
            return Err(TensorError::shape("param", slot.shape(), value.shape()));
        }
        *slot = value;
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<&Tensor<F>> {
        self.params.get(name)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor<F>> {
        self.params.get_mut(name)
    }

    pub fn contains(&self, name: &str) -> bool {
        self.params.contains_key(name)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.params.keys().map(String::as_str)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor<F>)> {
        self.params.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    /// Total number of scalars.
    pub fn num_elements(&self) -> usize {
        self.params.values().map(Tensor::len).sum()
    }

    pub fn cast<G: Float>(&self) -> ParamStore<G> {
        ParamStore {
            params: self.params.iter().map(|(k, v)| (k.clone(), v.cast())).collect(),
        }
    }

    pub fn all_finite(&self) -> bool {
        self.params.values().all(Tensor::all_finite)
    }
}
