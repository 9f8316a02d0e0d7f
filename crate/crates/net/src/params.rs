//! Named parameter tensors.

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::real::Real;

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<T> {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<T>,
}

impl<T: Real> Tensor<T> {
    pub fn zeros(name: impl Into<String>, shape: Vec<usize>) -> Self {
        let len = shape.iter().product();
        Self {
            name: name.into(),
            shape,
            data: vec![T::ZERO; len],
        }
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Fan-in of a convolution kernel: all dimensions but the output
    /// channel (and gate) axes. Bias tensors report `None`.
    pub fn fan_in(&self) -> Option<usize> {
        match self.shape.len() {
            4 => Some(self.shape[1] * self.shape[2] * self.shape[3]),
            5 => Some(self.shape[2] * self.shape[3] * self.shape[4]),
            _ => None,
        }
    }
}

/// Ordered collection of parameter tensors. Gradients and optimizer state
/// use the same layout.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamSet<T> {
    pub tensors: Vec<Tensor<T>>,
}

impl<T: Real> ParamSet<T> {
    pub fn new(tensors: Vec<Tensor<T>>) -> Self {
        Self { tensors }
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            tensors: self
                .tensors
                .iter()
                .map(|t| Tensor::zeros(t.name.clone(), t.shape.clone()))
                .collect(),
        }
    }

    pub fn count(&self) -> usize {
        self.tensors.iter().map(Tensor::len).sum()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.tensors.iter().position(|t| t.name == name)
    }

    pub fn get(&self, name: &str) -> Option<&Tensor<T>> {
        self.tensors.iter().find(|t| t.name == name)
    }

    pub fn is_finite(&self) -> bool {
        self.tensors.iter().all(|t| t.data.iter().all(|v| v.is_finite()))
    }

    /// He-normal initialization of every kernel (`std = sqrt(2 / fan_in)`),
    /// zero biases.
    pub fn init_he<R: Rng + ?Sized>(&mut self, rng: &mut R) {
        for t in &mut self.tensors {
            match t.fan_in() {
                Some(fan_in) => {
                    let normal = Normal::new(0.0, (2.0 / fan_in as f64).sqrt()).expect("positive std");
                    for v in &mut t.data {
                        *v = T::from_f64(normal.sample(rng));
                    }
                }
                None => t.data.fill(T::ZERO),
            }
        }
    }

    pub fn fill(&mut self, v: T) {
        for t in &mut self.tensors {
            t.data.fill(v);
        }
    }

    pub fn add_assign(&mut self, other: &Self) {
        for (a, b) in self.tensors.iter_mut().zip(&other.tensors) {
            for (x, &y) in a.data.iter_mut().zip(&b.data) {
                *x += y;
            }
        }
    }

    pub fn convert<U: Real>(&self) -> ParamSet<U> {
        ParamSet {
            tensors: self
                .tensors
                .iter()
                .map(|t| Tensor {
                    name: t.name.clone(),
                    shape: t.shape.clone(),
                    data: t.data.iter().map(|v| U::from_f64(v.to_f64())).collect(),
                })
                .collect(),
        }
    }
}
