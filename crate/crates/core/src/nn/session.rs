use alloc::vec;
use alloc::vec::Vec;

use crate::error::Result;
use crate::graph::{Graph, Var};
use crate::nn::params::{ParamId, ParamKind, ParamStore};
use crate::scalar::Real;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Batch statistics in batch-norm; running statistics are updated.
    Train,
    /// Running statistics in batch-norm; nothing in the store changes.
    Eval,
}

/// One forward (and optionally backward) pass of a model: a fresh [`Graph`]
/// plus mutable access to the parameters it reads.
pub struct Session<'p, T: Real> {
    pub graph: Graph<T>,
    params: &'p mut ParamStore<T>,
    mode: Mode,
    bound: Vec<Option<Var>>,
}

impl<'p, T: Real> Session<'p, T> {
    pub fn new(params: &'p mut ParamStore<T>, mode: Mode) -> Self {
        let bound = vec![None; params.len()];
        Self {
            graph: Graph::new(),
            params,
            mode,
            bound,
        }
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn params(&self) -> &ParamStore<T> {
        self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore<T> {
        self.params
    }

    /// Graph node for a parameter; each parameter maps to a single leaf.
    pub fn param(&mut self, id: ParamId) -> Var {
        if let Some(v) = self.bound[id.index()] {
            return v;
        }
        let entry = self.params.entry(id);
        let trainable = entry.kind == ParamKind::Trainable;
        let v = self.graph.leaf(entry.value.clone(), trainable);
        self.bound[id.index()] = Some(v);
        v
    }

    pub fn input(&mut self, value: Tensor<T>) -> Var {
        self.graph.leaf(value, false)
    }

    pub fn input_with_grad(&mut self, value: Tensor<T>) -> Var {
        self.graph.leaf(value, true)
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        self.graph.value(v)
    }

    /// Back-propagates `loss` and adds the parameter gradients into the
    /// store. Repeated calls accumulate; clear with [`ParamStore::zero_grad`].
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        self.graph.zero_grad();
        self.graph.backward(loss)?;
        for (idx, v) in self.bound.iter().enumerate() {
            if let Some(v) = v {
                if let Some(g) = self.graph.grad(*v) {
                    self.params.accumulate_grad(ParamId::from_index(idx), g.data());
                }
            }
        }
        Ok(())
    }
}
