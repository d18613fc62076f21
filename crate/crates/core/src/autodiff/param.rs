use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Real, Tensor};
use crate::error::{Error, Result};

/// Index of a parameter inside its [`ParamSet`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ParamId(pub usize);

/// A trainable tensor plus its adaptive-moment state.
#[derive(Clone, Debug)]
pub struct Parameter<T> {
    pub name: String,
    pub value: Tensor<T>,
    pub(crate) first_moment: Vec<T>,
    pub(crate) second_moment: Vec<T>,
}

/// One gradient buffer per parameter, in declaration order.
#[derive(Clone, Debug, PartialEq)]
pub struct Grads<T>(pub Vec<Vec<T>>);

impl<T: Real> Grads<T> {
    pub fn get(&self, id: ParamId) -> &[T] {
        &self.0[id.0]
    }

    pub fn zero(&mut self) {
        for g in &mut self.0 {
            g.iter_mut().for_each(|v| *v = T::ZERO);
        }
    }

    /// `self += scale * other`.
    pub fn add_scaled(&mut self, other: &Grads<T>, scale: T) {
        for (a, b) in self.0.iter_mut().zip(&other.0) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += scale * *y;
            }
        }
    }

    pub fn scale(&mut self, s: T) {
        for g in &mut self.0 {
            g.iter_mut().for_each(|v| *v *= s);
        }
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().flatten().all(|v| *v == T::ZERO)
    }
}

/// Ordered collection of parameters with their gradient accumulators.
#[derive(Clone, Debug)]
pub struct ParamSet<T> {
    params: Vec<Parameter<T>>,
    pub grads: Grads<T>,
    pub(crate) step: u64,
}

impl<T: Real> Default for ParamSet<T> {
    fn default() -> Self {
        ParamSet {
            params: Vec::new(),
            grads: Grads(Vec::new()),
            step: 0,
        }
    }
}

impl<T: Real> ParamSet<T> {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, value: Tensor<T>) -> ParamId {
        let n = value.len();
        self.params.push(Parameter {
            name: name.into(),
            value,
            first_moment: vec![T::ZERO; n],
            second_moment: vec![T::ZERO; n],
        });
        self.grads.0.push(vec![T::ZERO; n]);
        ParamId(self.params.len() - 1)
    }

    /// Fan-in scaled uniform weights, `U(-sqrt(6/fan_in), sqrt(6/fan_in))`.
    pub fn add_fan_in_uniform<R: Rng>(
        &mut self,
        name: impl Into<String>,
        shape: &[usize],
        fan_in: usize,
        rng: &mut R,
    ) -> ParamId {
        let bound = (6.0 / fan_in.max(1) as f64).sqrt();
        let n: usize = shape.iter().product();
        let data = (0..n)
            .map(|_| T::from_f64(rng.random_range(-bound..bound)))
            .collect();
        self.add(
            name,
            Tensor::new(shape.to_vec(), data).expect("shape matches"),
        )
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn value(&self, id: ParamId) -> &Tensor<T> {
        &self.params[id.0].value
    }

    pub fn value_mut(&mut self, id: ParamId) -> &mut Tensor<T> {
        &mut self.params[id.0].value
    }

    pub fn iter(&self) -> impl Iterator<Item = &Parameter<T>> {
        self.params.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut Parameter<T>> {
        self.params.iter_mut()
    }

    pub fn zero_grads(&self) -> Grads<T> {
        Grads(
            self.params
                .iter()
                .map(|p| vec![T::ZERO; p.value.len()])
                .collect(),
        )
    }

    pub fn zero_grad(&mut self) {
        self.grads.zero();
    }

    pub fn scalar_count(&self) -> usize {
        self.params.iter().map(|p| p.value.len()).sum()
    }

    /// Number of optimizer updates applied so far.
    pub fn steps(&self) -> u64 {
        self.step
    }

    /// Copies values (not optimizer state) from `other`, which must have the
    /// same layout.
    pub fn copy_values_from(&mut self, other: &ParamSet<T>) -> Result<()> {
        if other.params.len() != self.params.len() {
            return Err(Error::shape("parameter sets differ in length"));
        }
        for (a, b) in self.params.iter_mut().zip(&other.params) {
            if a.value.shape() != b.value.shape() {
                return Err(Error::shape(format!(
                    "parameter '{}' has shape {:?}, source has {:?}",
                    a.name,
                    a.value.shape(),
                    b.value.shape()
                )));
            }
            a.value.data_mut().copy_from_slice(b.value.data());
        }
        Ok(())
    }

    /// Snapshot of all values, in declaration order.
    pub fn values(&self) -> Vec<Tensor<T>> {
        self.params.iter().map(|p| p.value.clone()).collect()
    }

    pub fn restore(&mut self, values: &[Tensor<T>]) -> Result<()> {
        if values.len() != self.params.len() {
            return Err(Error::shape(
                "snapshot length does not match parameter count",
            ));
        }
        for (p, v) in self.params.iter_mut().zip(values) {
            if p.value.shape() != v.shape() {
                return Err(Error::shape(format!(
                    "snapshot shape mismatch for '{}'",
                    p.name
                )));
            }
            p.value = v.clone();
        }
        Ok(())
    }
}
