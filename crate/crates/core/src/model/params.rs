use indexmap::IndexMap;

use crate::tensor::{GradPair, Scalar, Tensor4};
use crate::{Error, Result};

/// Shape and initializer of one named parameter, as declared by a block.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ParamSpec {
    pub name: String,
    /// Logical shape: `[out, in, kh, kw]` for weights, `[out]` for biases.
    pub shape: Vec<usize>,
    /// Fan-in for He-initialized weights; `None` means zero-initialized.
    pub fan_in: Option<usize>,
}

impl ParamSpec {
    pub fn numel(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn dims(&self) -> [usize; 4] {
        let mut d = [1; 4];
        d[..self.shape.len()].copy_from_slice(&self.shape);
        d
    }
}

/// A parameter tensor, its gradient accumulator and its Adam moments.
#[derive(Clone, Debug, PartialEq)]
pub struct Param<T = f32> {
    pair: GradPair<T>,
    m: Tensor4<T>,
    v: Tensor4<T>,
    shape: Vec<usize>,
}

impl<T: Scalar> Param<T> {
    pub fn value(&self) -> &Tensor4<T> {
        self.pair.value()
    }

    pub fn grad(&self) -> &Tensor4<T> {
        self.pair.grad()
    }

    pub fn moments(&self) -> (&Tensor4<T>, &Tensor4<T>) {
        (&self.m, &self.v)
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    /// `(value, grad, m, v)` for the optimizer.
    pub(crate) fn parts_mut(
        &mut self,
    ) -> (&mut Tensor4<T>, &mut Tensor4<T>, &mut Tensor4<T>, &mut Tensor4<T>) {
        let (value, grad) = self.pair.split_mut();
        (value, grad, &mut self.m, &mut self.v)
    }

    pub(crate) fn set_moments(&mut self, m: Tensor4<T>, v: Tensor4<T>) -> Result<()> {
        crate::tensor::check_same_dims("Param::set_moments", self.value().dims(), m.dims())?;
        crate::tensor::check_same_dims("Param::set_moments", self.value().dims(), v.dims())?;
        self.m = m;
        self.v = v;
        Ok(())
    }
}

/// Ordered map of named parameters. Iteration order is insertion order.
///
/// `version` increments on every value mutation; forward caches record it so
/// a backward pass against updated parameters is rejected.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamStore<T = f32> {
    params: IndexMap<String, Param<T>>,
    version: u64,
}

impl<T: Scalar> ParamStore<T> {
    pub fn new() -> Self {
        ParamStore {
            params: IndexMap::new(),
            version: 0,
        }
    }

    pub fn insert(&mut self, name: impl Into<String>, shape: Vec<usize>, value: Tensor4<T>) -> Result<()> {
        let name = name.into();
        if shape.iter().product::<usize>() != value.len() {
            return Err(Error::shape(
                "ParamStore::insert",
                "element",
                shape.iter().product(),
                value.len(),
            ));
        }
        if self.params.contains_key(&name) {
            return Err(Error::Config(format!("duplicate parameter `{name}`")));
        }
        let dims = value.dims();
        self.params.insert(
            name,
            Param {
                pair: GradPair::new(value),
                m: Tensor4::zeros(dims),
                v: Tensor4::zeros(dims),
                shape,
            },
        );
        self.version += 1;
        Ok(())
    }

    pub fn get(&self, name: &str) -> Result<&Param<T>> {
        self.params
            .get(name)
            .ok_or_else(|| Error::MissingParam(name.to_string()))
    }

    pub fn value(&self, name: &str) -> Result<&Tensor4<T>> {
        self.get(name).map(Param::value)
    }

    /// Mutable access to a parameter's value; invalidates forward caches.
    pub fn value_mut(&mut self, name: &str) -> Result<&mut Tensor4<T>> {
        self.version += 1;
        self.params
            .get_mut(name)
            .map(|p| p.pair.value_mut())
            .ok_or_else(|| Error::MissingParam(name.to_string()))
    }

    pub(crate) fn param_mut(&mut self, name: &str) -> Result<&mut Param<T>> {
        self.params
            .get_mut(name)
            .ok_or_else(|| Error::MissingParam(name.to_string()))
    }

    pub fn accumulate(&mut self, name: &str, grad: &Tensor4<T>) -> Result<()> {
        self.param_mut(name)?.pair.accumulate(grad)
    }

    pub fn zero_grads(&mut self) {
        self.params.values_mut().for_each(|p| p.pair.zero_grad());
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Param<T>)> {
        self.params.iter().map(|(k, v)| (k.as_str(), v))
    }

    /// Mutable iteration; invalidates forward caches.
    pub(crate) fn iter_mut(&mut self) -> impl Iterator<Item = (&str, &mut Param<T>)> {
        self.version += 1;
        self.params.iter_mut().map(|(k, v)| (k.as_str(), v))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.params.keys().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    /// Total scalar count across all parameters.
    pub fn num_scalars(&self) -> usize {
        self.params.values().map(|p| p.value().len()).sum()
    }

    pub fn version(&self) -> u64 {
        self.version
    }

    /// Elementwise conversion of values, gradients and moments.
    pub fn cast<U: Scalar>(&self) -> ParamStore<U> {
        let mut out = ParamStore::new();
        for (name, p) in &self.params {
            let mut pair = GradPair::new(p.value().cast());
            pair.accumulate(&p.grad().cast()).expect("same dims");
            out.params.insert(
                name.clone(),
                Param {
                    pair,
                    m: p.m.cast(),
                    v: p.v.cast(),
                    shape: p.shape.clone(),
                },
            );
        }
        out.version = self.version;
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn insertion_order_and_lookup() {
        let mut s = ParamStore::<f32>::new();
        s.insert("b", vec![2], Tensor4::zeros([2, 1, 1, 1])).unwrap();
        s.insert("a", vec![1, 1, 1, 1], Tensor4::zeros([1, 1, 1, 1]))
            .unwrap();
        assert_eq!(s.names().collect::<Vec<_>>(), vec!["b", "a"]);
        assert_eq!(s.num_scalars(), 3);
        assert!(s.insert("a", vec![1], Tensor4::zeros([1, 1, 1, 1])).is_err());
        assert!(matches!(s.value("c"), Err(Error::MissingParam(_))));
        assert!(s.insert("c", vec![3], Tensor4::zeros([2, 1, 1, 1])).is_err());
    }

    #[test]
    fn mutation_bumps_version() {
        let mut s = ParamStore::<f32>::new();
        s.insert("w", vec![1], Tensor4::zeros([1, 1, 1, 1])).unwrap();
        let v = s.version();
        s.accumulate("w", &Tensor4::full([1, 1, 1, 1], 1.0)).unwrap();
        assert_eq!(s.version(), v);
        s.value_mut("w").unwrap().data_mut()[0] = 2.0;
        assert!(s.version() > v);
    }
}
