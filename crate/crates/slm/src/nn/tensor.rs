//! Dense tensors and the named parameter store.

use thiserror::Error;

use super::real::Real;
use crate::rng::Rng;

#[derive(Clone, Debug, Error, PartialEq)]
pub enum NnError {
    #[error("empty input sequence")]
    EmptySequence,
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("epsilon must be positive")]
    InvalidEpsilon,
    #[error("non-finite value encountered in {0}")]
    NonFinite(String),
    #[error("unknown parameter {0}")]
    UnknownParam(String),
}

#[derive(Clone, Debug, PartialEq)]
pub struct Tensor<T> {
    pub shape: Vec<usize>,
    pub data: Vec<T>,
}

impl<T: Real> Tensor<T> {
    pub fn zeros(shape: &[usize]) -> Tensor<T> {
        Tensor {
            shape: shape.to_vec(),
            data: vec![T::ZERO; shape.iter().product()],
        }
    }

    pub fn from_vec(shape: &[usize], data: Vec<T>) -> Result<Tensor<T>, NnError> {
        if shape.iter().product::<usize>() != data.len() {
            return Err(NnError::ShapeMismatch(format!(
                "shape {shape:?} does not hold {} values",
                data.len()
            )));
        }
        Ok(Tensor { shape: shape.to_vec(), data })
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Row `i` of a 2-D tensor.
    pub fn row(&self, i: usize) -> &[T] {
        let cols = self.shape[1];
        &self.data[i * cols..(i + 1) * cols]
    }

    pub fn assert_finite(&self, what: &str) -> Result<(), NnError> {
        if self.data.iter().all(|v| v.is_finite()) {
            Ok(())
        } else {
            Err(NnError::NonFinite(what.to_string()))
        }
    }

    /// Uniform in [-scale, scale].
    pub fn uniform(shape: &[usize], scale: f64, rng: &mut Rng) -> Tensor<T> {
        Tensor {
            shape: shape.to_vec(),
            data: (0..shape.iter().product())
                .map(|_| T::from_f64(rng.uniform(-scale, scale)))
                .collect(),
        }
    }

    /// Xavier/Glorot uniform for a (fan_out, fan_in) weight matrix.
    pub fn xavier(fan_out: usize, fan_in: usize, rng: &mut Rng) -> Tensor<T> {
        let scale = (6.0 / (fan_in + fan_out) as f64).sqrt();
        Tensor::uniform(&[fan_out, fan_in], scale, rng)
    }
}

/// Opaque handle to a parameter tensor.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ParamId(pub(crate) usize);

/// All learned tensors, addressable by a stable name. Names define the
/// checkpoint layout, so insertion order is part of the format.
#[derive(Clone, Debug)]
pub struct ParamStore<T> {
    names: Vec<String>,
    tensors: Vec<Tensor<T>>,
}

impl<T: Real> ParamStore<T> {
    pub fn new() -> Self {
        ParamStore { names: Vec::new(), tensors: Vec::new() }
    }

    pub fn add(&mut self, name: &str, tensor: Tensor<T>) -> ParamId {
        debug_assert!(!self.names.iter().any(|n| n == name), "duplicate param {name}");
        self.names.push(name.to_string());
        self.tensors.push(tensor);
        ParamId(self.names.len() - 1)
    }

    pub fn get(&self, id: ParamId) -> &Tensor<T> {
        &self.tensors[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor<T> {
        &mut self.tensors[id.0]
    }

    pub fn by_name(&self, name: &str) -> Option<ParamId> {
        self.names.iter().position(|n| n == name).map(ParamId)
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.tensors.len()).map(ParamId)
    }

    pub fn total_values(&self) -> usize {
        self.tensors.iter().map(Tensor::len).sum()
    }

    /// Convert the store to another precision (used by check mode and
    /// checkpoint IO).
    pub fn cast<U: Real>(&self) -> ParamStore<U> {
        ParamStore {
            names: self.names.clone(),
            tensors: self
                .tensors
                .iter()
                .map(|t| Tensor {
                    shape: t.shape.clone(),
                    data: t.data.iter().map(|v| U::from_f64(v.to_f64())).collect(),
                })
                .collect(),
        }
    }
}

impl<T: Real> Default for ParamStore<T> {
    fn default() -> Self {
        Self::new()
    }
}

/// Gradient accumulators parallel to a `ParamStore`.
#[derive(Clone, Debug)]
pub struct GradStore<T> {
    pub grads: Vec<Vec<T>>,
}

impl<T: Real> GradStore<T> {
    pub fn zeros_like(params: &ParamStore<T>) -> Self {
        GradStore {
            grads: params.tensors.iter().map(|t| vec![T::ZERO; t.len()]).collect(),
        }
    }

    pub fn zero(&mut self) {
        for g in &mut self.grads {
            g.fill(T::ZERO);
        }
    }

    pub fn get(&self, id: ParamId) -> &[T] {
        &self.grads[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Vec<T> {
        &mut self.grads[id.0]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn from_vec_checks_shape() {
        assert!(Tensor::<f32>::from_vec(&[2, 2], vec![1.0; 3]).is_err());
        assert!(Tensor::<f32>::from_vec(&[2, 2], vec![1.0; 4]).is_ok());
    }

    #[test]
    fn finite_guard() {
        let t = Tensor::<f32>::from_vec(&[2], vec![1.0, f32::NAN]).unwrap();
        assert_eq!(t.assert_finite("x"), Err(NnError::NonFinite("x".into())));
    }

    #[test]
    fn store_roundtrip() {
        let mut store = ParamStore::<f32>::new();
        let id = store.add("w", Tensor::zeros(&[2, 3]));
        assert_eq!(store.by_name("w"), Some(id));
        assert_eq!(store.get(id).shape, vec![2, 3]);
    }
}
