use std::collections::HashMap;

use super::{NumericsError, Real, Result, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(pub(crate) usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Gradients produced by one backward pass, keyed by parameter.
#[derive(Debug, Clone)]
pub struct Gradients<T> {
    pub(crate) by_param: HashMap<ParamId, Tensor<T>>,
}

impl<T: Real> Gradients<T> {
    pub fn get(&self, id: ParamId) -> Option<&Tensor<T>> {
        self.by_param.get(&id)
    }

    pub fn len(&self) -> usize {
        self.by_param.len()
    }

    pub fn is_empty(&self) -> bool {
        self.by_param.is_empty()
    }
}

/// Named, ordered parameters with one gradient accumulator each.
/// Equality compares names and values; accumulators are scratch space.
#[derive(Debug, Clone)]
pub struct ParamStore<T> {
    names: Vec<String>,
    index: HashMap<String, usize>,
    values: Vec<Tensor<T>>,
    grads: Vec<Tensor<T>>,
}

impl<T: PartialEq> PartialEq for ParamStore<T> {
    fn eq(&self, other: &Self) -> bool {
        self.names == other.names && self.values == other.values
    }
}

impl<T: Real> Default for ParamStore<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Real> ParamStore<T> {
    pub fn new() -> Self {
        Self {
            names: Vec::new(),
            index: HashMap::new(),
            values: Vec::new(),
            grads: Vec::new(),
        }
    }

    pub fn insert(&mut self, name: impl Into<String>, value: Tensor<T>) -> Result<ParamId> {
        let name = name.into();
        if self.index.contains_key(&name) {
            return Err(NumericsError::DuplicateParam(name));
        }
        let id = self.values.len();
        self.index.insert(name.clone(), id);
        self.names.push(name);
        self.grads.push(Tensor::zeros(value.shape()));
        self.values.push(value);
        Ok(ParamId(id))
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.index.get(name).copied().map(ParamId)
    }

    pub fn require(&self, name: &str) -> Result<ParamId> {
        self.id(name)
            .ok_or_else(|| NumericsError::UnknownParam(name.to_string()))
    }

    pub fn get(&self, name: &str) -> Option<&Tensor<T>> {
        self.id(name).map(|id| &self.values[id.0])
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn value(&self, id: ParamId) -> &Tensor<T> {
        &self.values[id.0]
    }

    pub fn value_mut(&mut self, id: ParamId) -> &mut Tensor<T> {
        &mut self.values[id.0]
    }

    /// Replaces a parameter value; the shape must not change.
    pub fn set(&mut self, id: ParamId, value: Tensor<T>) -> Result<()> {
        if value.shape() != self.values[id.0].shape() {
            return Err(NumericsError::Shape(format!(
                "parameter {} has shape {:?}, replacement has {:?}",
                self.names[id.0],
                self.values[id.0].shape(),
                value.shape()
            )));
        }
        self.values[id.0] = value;
        Ok(())
    }

    pub fn grad(&self, id: ParamId) -> &Tensor<T> {
        &self.grads[id.0]
    }

    pub fn grad_mut(&mut self, id: ParamId) -> &mut Tensor<T> {
        &mut self.grads[id.0]
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.values.len()).map(ParamId)
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &str, &Tensor<T>)> {
        self.ids()
            .map(move |id| (id, self.names[id.0].as_str(), &self.values[id.0]))
    }

    pub fn num_scalars(&self) -> usize {
        self.values.iter().map(|v| v.len()).sum()
    }

    pub fn zero_grads(&mut self) {
        for g in &mut self.grads {
            g.data_mut().iter_mut().for_each(|x| *x = T::zero());
        }
    }

    /// Adds `grads` into the accumulators; parameters without a gradient are untouched.
    pub fn accumulate(&mut self, grads: &Gradients<T>) {
        for (id, g) in &grads.by_param {
            for (acc, &x) in self.grads[id.0].data_mut().iter_mut().zip(g.data()) {
                *acc += x;
            }
        }
    }

    pub fn grad_global_norm(&self) -> T {
        self.grads.iter().map(|g| g.sq_norm()).sum::<T>().sqrt()
    }

    /// Simultaneous access to values and accumulators, for optimizers.
    pub fn values_and_grads_mut(&mut self) -> (&mut [Tensor<T>], &mut [Tensor<T>]) {
        (&mut self.values, &mut self.grads)
    }

    pub fn cast<U: Real>(&self) -> ParamStore<U> {
        ParamStore {
            names: self.names.clone(),
            index: self.index.clone(),
            values: self.values.iter().map(|v| v.cast()).collect(),
            grads: self.grads.iter().map(|g| g.cast()).collect(),
        }
    }
}
