//! Named parameter collections with deterministic ordering.

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::nn::tensor::Tensor;

/// One named parameter tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct Param {
    pub name: String,
    pub value: Tensor,
}

/// Ordered collection of named parameters.
///
/// Iteration order is insertion order and never changes, so optimizer state,
/// checkpoints, and gradient vectors can all be indexed positionally.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamSet {
    params: Vec<Param>,
    index: HashMap<String, usize>,
}

impl ParamSet {
    pub fn new() -> ParamSet {
        ParamSet::default()
    }

    pub fn insert(&mut self, name: &str, value: Tensor) -> Result<()> {
        if self.index.contains_key(name) {
            return Err(Error::invalid(format!("duplicate parameter name {name:?}")));
        }
        self.index.insert(name.to_string(), self.params.len());
        self.params.push(Param {
            name: name.to_string(),
            value,
        });
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.index.get(name).map(|&i| &self.params[i].value)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.index.get(name).map(|&i| &mut self.params[i].value)
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Param> {
        self.params.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut Param> {
        self.params.iter_mut()
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.params.iter().map(|p| p.name.as_str())
    }

    /// Total number of scalar values across all parameters.
    pub fn value_count(&self) -> usize {
        self.params.iter().map(|p| p.value.len()).sum()
    }

    /// Largest absolute element-wise difference against `other`, comparing
    /// parameters by position. Errors if names or shapes disagree.
    pub fn max_abs_diff(&self, other: &ParamSet) -> Result<f64> {
        if self.len() != other.len() {
            return Err(Error::invalid(format!(
                "parameter count mismatch: {} vs {}",
                self.len(),
                other.len()
            )));
        }
        let mut worst = 0.0f64;
        for (a, b) in self.params.iter().zip(other.params.iter()) {
            if a.name != b.name || a.value.shape() != b.value.shape() {
                return Err(Error::invalid(format!(
                    "parameter mismatch: {:?} {:?} vs {:?} {:?}",
                    a.name,
                    a.value.shape(),
                    b.name,
                    b.value.shape()
                )));
            }
            for (&x, &y) in a.value.data().iter().zip(b.value.data()) {
                worst = worst.max((x - y).abs());
            }
        }
        Ok(worst)
    }
}
