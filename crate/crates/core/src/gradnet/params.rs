use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use super::Tensor;
use crate::error::{Error, Result};

/// Which sub-model a parameter belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Owner {
    ImageEncoder,
    TextEncoder,
    ImageClassifier,
    TextClassifier,
}

impl Owner {
    pub const ALL: [Owner; 4] = [
        Owner::ImageEncoder,
        Owner::TextEncoder,
        Owner::ImageClassifier,
        Owner::TextClassifier,
    ];

    pub fn code(self) -> u8 {
        match self {
            Owner::ImageEncoder => 0,
            Owner::TextEncoder => 1,
            Owner::ImageClassifier => 2,
            Owner::TextClassifier => 3,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        Self::ALL.get(code as usize).copied()
    }

    pub fn is_text(self) -> bool {
        matches!(self, Owner::TextEncoder | Owner::TextClassifier)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Parameter {
    pub owner: Owner,
    pub value: Tensor,
}

/// Named parameters in insertion order. Shapes never change once added.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParameterStore {
    params: IndexMap<String, Parameter>,
}

impl ParameterStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, owner: Owner, value: Tensor) -> Result<usize> {
        let name = name.into();
        if self.params.contains_key(&name) {
            return Err(Error::Parameter(format!("duplicate parameter {name}")));
        }
        let (idx, _) = self.params.insert_full(name, Parameter { owner, value });
        Ok(idx)
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn index_of(&self, name: &str) -> Result<usize> {
        self.params
            .get_index_of(name)
            .ok_or_else(|| Error::Parameter(format!("unknown parameter {name}")))
    }

    pub fn get(&self, name: &str) -> Result<&Tensor> {
        self.params
            .get(name)
            .map(|p| &p.value)
            .ok_or_else(|| Error::Parameter(format!("unknown parameter {name}")))
    }

    pub fn by_index(&self, idx: usize) -> (&str, &Parameter) {
        let (name, p) = self.params.get_index(idx).expect("parameter index in range");
        (name, p)
    }

    pub fn value_mut(&mut self, idx: usize) -> &mut Tensor {
        &mut self.params[idx].value
    }

    /// Replaces a parameter's values; the shape must match.
    pub fn set(&mut self, name: &str, value: Tensor) -> Result<()> {
        let p = self
            .params
            .get_mut(name)
            .ok_or_else(|| Error::Parameter(format!("unknown parameter {name}")))?;
        if p.value.shape() != value.shape() {
            return Err(Error::shape("set", p.value.shape(), value.shape()));
        }
        p.value = value;
        Ok(())
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Parameter)> {
        self.params.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn num_values(&self) -> usize {
        self.params.values().map(|p| p.value.len()).sum()
    }

    /// Zeroes every parameter owned by `owner`.
    pub fn zero_owner(&mut self, owner: Owner) {
        for p in self.params.values_mut() {
            if p.owner == owner {
                p.value.fill(0.0);
            }
        }
    }

    pub fn zero_all(&mut self) {
        for p in self.params.values_mut() {
            p.value.fill(0.0);
        }
    }

    pub fn zeros_like(&self) -> GradientSet {
        GradientSet {
            grads: self
                .params
                .iter()
                .map(|(k, p)| (k.clone(), Tensor::zeros(p.value.shape())))
                .collect(),
        }
    }
}

/// Gradients keyed like the parameter store they were computed for.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientSet {
    grads: IndexMap<String, Tensor>,
}

impl GradientSet {
    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.grads.get(name)
    }

    pub fn by_index(&self, idx: usize) -> &Tensor {
        &self.grads[idx]
    }

    pub fn add_at(&mut self, idx: usize, grad: &Tensor) {
        self.grads[idx].add_assign(grad);
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.grads.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn scale(&mut self, factor: f64) {
        for g in self.grads.values_mut() {
            g.scale_assign(factor);
        }
    }

    pub fn is_finite(&self) -> bool {
        self.grads.values().all(Tensor::is_finite)
    }

    pub fn len(&self) -> usize {
        self.grads.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grads.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_unique_and_ordered() {
        let mut s = ParameterStore::new();
        s.insert("b", Owner::ImageEncoder, Tensor::zeros(&[2])).unwrap();
        s.insert("a", Owner::TextEncoder, Tensor::zeros(&[3])).unwrap();
        assert!(s.insert("a", Owner::TextEncoder, Tensor::zeros(&[3])).is_err());
        let names: Vec<_> = s.iter().map(|(n, _)| n).collect();
        assert_eq!(names, ["b", "a"]);
        assert!(s.set("a", Tensor::zeros(&[4])).is_err());
    }

    #[test]
    fn owner_codes_round_trip() {
        for o in Owner::ALL {
            assert_eq!(Owner::from_code(o.code()), Some(o));
        }
        assert_eq!(Owner::from_code(9), None);
    }
}
