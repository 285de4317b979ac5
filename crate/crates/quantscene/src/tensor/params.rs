//! Ordered, named parameter tensors.
//!
//! A [`ParamSet`] is the mutable state of a model: training updates it in
//! place, checkpoints serialize it, and each forward pass binds it onto a
//! fresh [`Tape`] as differentiable leaves.

use super::checkpoint::{read_checkpoint, write_checkpoint, CheckpointError};
use super::tape::{Tape, Var};
use super::Tensor;
use std::path::Path;

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamSet {
    entries: Vec<(String, Tensor)>,
}

/// Tape handles for one binding of a [`ParamSet`], index-parallel to it.
pub struct BoundParams {
    vars: Vec<Var>,
}

impl BoundParams {
    pub fn var(&self, index: usize) -> Var {
        self.vars[index]
    }

    pub fn len(&self) -> usize {
        self.vars.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vars.is_empty()
    }
}

impl ParamSet {
    pub fn new() -> Self {
        Self::default()
    }

    /// Register a tensor under a name, returning its stable index.
    pub fn push(&mut self, name: impl Into<String>, tensor: Tensor) -> usize {
        let name = name.into();
        debug_assert!(
            self.index_of(&name).is_none(),
            "duplicate parameter name {name}"
        );
        self.entries.push((name, tensor));
        self.entries.len() - 1
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.entries.iter().position(|(n, _)| n == name)
    }

    pub fn name(&self, index: usize) -> &str {
        &self.entries[index].0
    }

    pub fn tensor(&self, index: usize) -> &Tensor {
        &self.entries[index].1
    }

    pub fn tensor_mut(&mut self, index: usize) -> &mut Tensor {
        &mut self.entries[index].1
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.entries.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.entries.iter().map(|(n, t)| (n.as_str(), t))
    }

    /// Total number of scalar values across all tensors.
    pub fn value_count(&self) -> usize {
        self.entries.iter().map(|(_, t)| t.numel()).sum()
    }

    /// Place every tensor on the tape as a differentiable leaf.
    pub fn bind(&self, tape: &mut Tape) -> BoundParams {
        BoundParams {
            vars: self.entries.iter().map(|(_, t)| tape.leaf(t.clone())).collect(),
        }
    }

    /// All values concatenated in registration order.
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.value_count());
        for (_, t) in &self.entries {
            out.extend_from_slice(t.data());
        }
        out
    }

    /// Overwrite all values from a flat buffer laid out as [`flatten`](Self::flatten).
    pub fn assign_flat(&mut self, values: &[f64]) {
        debug_assert_eq!(values.len(), self.value_count());
        let mut offset = 0;
        for (_, t) in &mut self.entries {
            let n = t.numel();
            t.data_mut().copy_from_slice(&values[offset..offset + n]);
            offset += n;
        }
    }

    /// Gradients of every bound parameter after a backward pass, flattened.
    pub fn flat_gradients(&self, tape: &Tape, bound: &BoundParams) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.value_count());
        for var in &bound.vars {
            out.extend_from_slice(tape.grad(*var).data());
        }
        out
    }

    pub fn save(&self, path: &Path) -> Result<(), CheckpointError> {
        write_checkpoint(path, self.entries.iter().map(|(n, t)| (n.as_str(), t)))
    }

    pub fn load(path: &Path) -> Result<Self, CheckpointError> {
        Ok(Self { entries: read_checkpoint(path)? })
    }
}
