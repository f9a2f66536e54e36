//! Named parameter storage shared by the model and the optimizer.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Gradient map produced by a backward pass: parameter name -> gradient.
pub type GradMap = BTreeMap<String, Tensor>;

/// Every learnable tensor of a model, addressable by a stable name.
///
/// Iteration order (and therefore checkpoint serialization order) is the
/// lexicographic order of names, courtesy of the underlying `BTreeMap`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamStore {
    entries: BTreeMap<String, Tensor>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, tensor: Tensor) {
        self.entries.insert(name.into(), tensor);
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.entries.get(name)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.entries.get_mut(name)
    }

    pub fn contains(&self, name: &str) -> bool {
        self.entries.contains_key(name)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Total number of scalar entries across all parameters.
    pub fn num_scalars(&self) -> usize {
        self.entries.values().map(Tensor::len).sum()
    }

    /// Lexicographically ordered iteration.
    pub fn iter(&self) -> impl Iterator<Item = (&String, &Tensor)> {
        self.entries.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&String, &mut Tensor)> {
        self.entries.iter_mut()
    }

    pub fn names(&self) -> impl Iterator<Item = &String> {
        self.entries.keys()
    }

    /// Check that a gradient map covers exactly this store's names with
    /// matching shapes.
    pub fn check_grads(&self, grads: &GradMap) -> Result<()> {
        if grads.len() != self.entries.len() {
            return Err(Error::Config(format!(
                "gradient map has {} entries, parameter store has {}",
                grads.len(),
                self.entries.len()
            )));
        }
        for (name, tensor) in &self.entries {
            match grads.get(name) {
                None => {
                    return Err(Error::Config(format!(
                        "gradient map is missing parameter {name}"
                    )))
                }
                Some(g) if g.shape() != tensor.shape() => {
                    return Err(Error::ShapeMismatch {
                        op: "check_grads",
                        lhs: tensor.shape().to_vec(),
                        rhs: g.shape().to_vec(),
                    })
                }
                Some(_) => {}
            }
        }
        Ok(())
    }
}

impl FromIterator<(String, Tensor)> for ParamStore {
    fn from_iter<I: IntoIterator<Item = (String, Tensor)>>(iter: I) -> Self {
        ParamStore {
            entries: iter.into_iter().collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn iteration_is_sorted_by_name() {
        let mut ps = ParamStore::new();
        ps.insert("zeta", Tensor::scalar(1.0));
        ps.insert("alpha", Tensor::scalar(2.0));
        ps.insert("mid", Tensor::scalar(3.0));
        let names: Vec<_> = ps.names().cloned().collect();
        assert_eq!(names, vec!["alpha", "mid", "zeta"]);
    }

    #[test]
    fn check_grads_flags_missing_and_mismatched() {
        let mut ps = ParamStore::new();
        ps.insert("w", Tensor::zeros(vec![2, 2]));
        let mut grads = GradMap::new();
        assert!(ps.check_grads(&grads).is_err());
        grads.insert("w".into(), Tensor::zeros(vec![2]));
        assert!(ps.check_grads(&grads).is_err());
        grads.insert("w".into(), Tensor::zeros(vec![2, 2]));
        assert!(ps.check_grads(&grads).is_ok());
    }
}
