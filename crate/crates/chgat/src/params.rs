//! Named parameter groups. Every learnable tensor is registered under a
//! stable name so checkpoints, the optimizer, and gradient checks can all
//! address the same groups.

use std::collections::HashMap;

use crate::tensor::Tensor;

/// Handle to one registered parameter group.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ParamId(pub(crate) usize);

#[derive(Debug, Clone, Default)]
pub struct ParamStore {
    entries: Vec<(String, Tensor)>,
    index: HashMap<String, usize>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn register(&mut self, name: impl Into<String>, tensor: Tensor) -> ParamId {
        let name = name.into();
        assert!(
            !self.index.contains_key(&name),
            "parameter group '{name}' registered twice"
        );
        let id = ParamId(self.entries.len());
        self.index.insert(name.clone(), id.0);
        self.entries.push((name, tensor));
        id
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Total number of scalar parameters across all groups.
    pub fn scalar_count(&self) -> usize {
        self.entries.iter().map(|(_, t)| t.len()).sum()
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.index.get(name).map(|&i| ParamId(i))
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.entries[id.0].0
    }

    pub fn get(&self, id: ParamId) -> &Tensor {
        &self.entries[id.0].1
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.entries[id.0].1
    }

    pub fn by_name(&self, name: &str) -> Option<&Tensor> {
        self.index.get(name).map(|&i| &self.entries[i].1)
    }

    pub fn by_name_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        match self.index.get(name) {
            Some(&i) => Some(&mut self.entries[i].1),
            None => None,
        }
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.entries.len()).map(ParamId)
    }

    /// Group names in registration order.
    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|(n, _)| n.as_str())
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.entries.iter().map(|(n, t)| (n.as_str(), t))
    }
}

/// Gradient buffers aligned with a [`ParamStore`].
#[derive(Debug, Clone)]
pub struct Grads {
    by_param: Vec<Tensor>,
}

impl Grads {
    pub fn zeros_like(params: &ParamStore) -> Self {
        let by_param = params.ids().map(|id| {
            let (r, c) = params.get(id).shape();
            Tensor::zeros(r, c)
        });
        Self { by_param: by_param.collect() }
    }

    pub fn get(&self, id: ParamId) -> &Tensor {
        &self.by_param[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.by_param[id.0]
    }

    /// Accumulate another gradient set (same store layout).
    pub fn add_assign(&mut self, other: &Grads) {
        assert_eq!(self.by_param.len(), other.by_param.len());
        for (a, b) in self.by_param.iter_mut().zip(&other.by_param) {
            a.add_assign(b);
        }
    }

    pub fn scale_assign(&mut self, c: f64) {
        for g in &mut self.by_param {
            *g = g.scale(c);
        }
    }

    pub fn is_finite(&self) -> bool {
        self.by_param.iter().all(Tensor::is_finite)
    }
}
